//! Experiment runner for the nonlocal obstacle laboratory.
//!
//! Subcommands: `sample`, `capacity`, `ergodic`, `diagnose`, `homogenize`,
//! `shapes`. Each reads a flat key-value config file, writes CSV /
//! JSON-lines / SVG outputs into the out directory, and exits 0 on success,
//! 2 on config errors, 3 on solver failures, 4 on I/O failures.

mod config;
mod runner;

use std::path::PathBuf;

use clap::Parser;

use config::Config;

#[derive(Parser, Debug)]
#[command(
    name = "fraclab",
    about = "Random obstacle configurations, fractional capacities, and homogenization studies"
)]
struct Cli {
    /// One of: sample, capacity, ergodic, diagnose, homogenize, shapes.
    subcommand: String,
    /// Key-value configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Base seed of the replica sweep.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = automatic).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn main() {
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .ok();
    }
    let started = std::time::Instant::now();
    let cfg = match Config::from_file(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            std::process::exit(2);
        }
    };
    match runner::dispatch(&cli.subcommand, &cfg, cli.seed, &cli.out) {
        Ok(()) => {
            eprintln!(
                "{} finished in {:.3}s, outputs in {}",
                cli.subcommand,
                started.elapsed().as_secs_f64(),
                cli.out.display()
            );
        }
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}
