//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::Path;

use fraclab_core::capacity::{
    condenser_capacity, global_capacity, relative_capacity, CapacityRecord, GridPolicy,
    TargetSet,
};
use fraclab_core::energy::KernelTable;
use fraclab_core::ergodic::{gamma_estimate, rescaled_sum_trace, retention_curve, ErgodicTrace};
use fraclab_core::homogenize::{convergence_study, StudyConfig, StudySummary};
use fraclab_core::obstacle::{
    build_obstacles, cardinality_report, check_safety_layer, classify_indices, lq_norm,
    ShapeTemplate,
};
use fraclab_core::report::{svg_line_plot, write_csv, write_jsonl, PlotSeries};
use fraclab_core::seed::child_seed;
use fraclab_core::{
    GridDomain, KernelSpec, ScalingParams, SolverTolerances, Window,
};

use crate::config::{parse_process, Config, ConfigError, MARK_KEYS, PROCESS_KEYS};

/// Failure with its process exit code.
#[derive(Debug)]
pub enum RunError {
    /// Exit 2: configuration rejected.
    Config(String),
    /// Exit 3: solver failure.
    Solver(String),
    /// Exit 4: filesystem failure.
    Io(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "config error: {m}"),
            RunError::Solver(m) => write!(f, "solver error: {m}"),
            RunError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Solver(_) => 3,
            RunError::Io(_) => 4,
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e.to_string())
    }
}

fn io_err<E: std::fmt::Display>(e: E) -> RunError {
    RunError::Io(e.to_string())
}

fn solver_err<E: std::fmt::Display>(e: E) -> RunError {
    RunError::Solver(e.to_string())
}

fn config_err<E: std::fmt::Display>(e: E) -> RunError {
    RunError::Config(e.to_string())
}

fn ensure_out(out: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(out).map_err(io_err)
}

fn write_report(
    out: &Path,
    subcommand: &str,
    seed: u64,
    cfg: &Config,
    extra: BTreeMap<String, serde_json::Value>,
) -> Result<(), RunError> {
    let mut doc = BTreeMap::new();
    doc.insert(
        "subcommand".to_string(),
        serde_json::Value::String(subcommand.to_string()),
    );
    doc.insert(
        "version".to_string(),
        serde_json::Value::String(env!("CARGO_PKG_VERSION").to_string()),
    );
    doc.insert("seed".to_string(), serde_json::json!(seed));
    doc.insert("config".to_string(), serde_json::json!(cfg.echo()));
    for (k, v) in extra {
        doc.insert(k, v);
    }
    let text = serde_json::to_string_pretty(&doc).map_err(io_err)?;
    std::fs::write(out.join("report.json"), text + "\n").map_err(io_err)
}

fn parse_window(cfg: &Config, lo_key: &str, hi_key: &str) -> Result<Window, RunError> {
    let lo = cfg.f64_list_req(lo_key)?;
    let hi = cfg.f64_list_req(hi_key)?;
    Window::new(lo, hi).map_err(config_err)
}

fn parse_params(cfg: &Config) -> Result<ScalingParams, RunError> {
    ScalingParams::new(
        cfg.usize_or("n", 1)?,
        cfg.f64_req("s")?,
        cfg.f64_req("p")?,
    )
    .map_err(config_err)
}

fn parse_tol(cfg: &Config) -> Result<SolverTolerances, RunError> {
    let mut tol = SolverTolerances::default();
    tol.max_iterations = cfg.usize_or("max_iterations", tol.max_iterations)?;
    tol.pg_tol_factor = cfg.f64_or("pg_tol_factor", tol.pg_tol_factor)?;
    tol.rel_energy_decrease = cfg.f64_or("rel_energy_decrease", tol.rel_energy_decrease)?;
    Ok(tol)
}

// -------------------------------------------------------------------
// sample
// -------------------------------------------------------------------

pub fn run_sample(cfg: &Config, seed: u64, out: &Path) -> Result<(), RunError> {
    let mut keys = vec!["window_lo", "window_hi", "thin_delta"];
    keys.extend_from_slice(PROCESS_KEYS);
    keys.extend_from_slice(MARK_KEYS);
    cfg.restrict_keys(&keys)?;
    let process = parse_process(cfg)?;
    let window = parse_window(cfg, "window_lo", "window_hi")?;
    ensure_out(out)?;

    let config = process.sample(&window, seed).map_err(config_err)?;
    std::fs::write(out.join("configuration.txt"), config.to_table()).map_err(io_err)?;

    let mut extra = BTreeMap::new();
    extra.insert("points".to_string(), serde_json::json!(config.len()));
    if let Some(delta) = cfg.raw("thin_delta") {
        let delta: f64 = delta
            .parse()
            .map_err(|e| RunError::Config(format!("thin_delta: {e}")))?;
        let thinned =
            fraclab_core::sample_thinned(&process, &window, delta, seed).map_err(config_err)?;
        std::fs::write(out.join("thinned.txt"), thinned.to_table()).map_err(io_err)?;
        extra.insert(
            "thinned_points".to_string(),
            serde_json::json!(thinned.len()),
        );
    }
    write_report(out, "sample", seed, cfg, extra)
}

// -------------------------------------------------------------------
// capacity
// -------------------------------------------------------------------

pub fn run_capacity(cfg: &Config, seed: u64, out: &Path) -> Result<(), RunError> {
    cfg.restrict_keys(&[
        "n",
        "s",
        "p",
        "geometry",
        "target_radius",
        "R",
        "r",
        "h",
        "ladder",
        "max_iterations",
        "pg_tol_factor",
        "rel_energy_decrease",
    ])?;
    let params = parse_params(cfg)?;
    let kernel = KernelSpec::standard(params);
    let tol = parse_tol(cfg)?;
    let target_radius = cfg.f64_or("target_radius", 1.0)?;
    let target = TargetSet::ball(target_radius);
    let h = cfg.f64_req("h")?;
    let geometry = cfg.str_or("geometry", "condenser");
    ensure_out(out)?;

    let mut rows = Vec::new();
    let mut extra = BTreeMap::new();
    match geometry {
        "condenser" | "relative" => {
            let r_outer = cfg.f64_req("R")?;
            let grid = GridDomain::symmetric(params.n, r_outer * 1.25, h).map_err(config_err)?;
            let table = KernelTable::build(&grid, &kernel);
            let (rec, potential) = if geometry == "condenser" {
                let res = condenser_capacity(&target, r_outer, &kernel, &grid, &table, &tol)
                    .map_err(solver_err)?;
                (
                    CapacityRecord {
                        problem_id: "c0".into(),
                        geometry: "condenser".into(),
                        r_outer,
                        r_inner: 0.0,
                        h,
                        value: res.value,
                        kkt: res.kkt_residual,
                        iters: res.iterations,
                    },
                    res.potential,
                )
            } else {
                let r_inner = cfg.f64_req("r")?;
                let res =
                    relative_capacity(&target, r_inner, r_outer, &kernel, &grid, &table, &tol)
                        .map_err(solver_err)?;
                (
                    CapacityRecord {
                        problem_id: "r0".into(),
                        geometry: "relative".into(),
                        r_outer,
                        r_inner,
                        h,
                        value: res.value,
                        kkt: res.kkt_residual,
                        iters: res.iterations,
                    },
                    res.potential,
                )
            };
            extra.insert("value".to_string(), serde_json::json!(rec.value));
            rows.push(rec.csv_row());
            std::fs::write(out.join("potential.txt"), potential.to_lines()).map_err(io_err)?;
        }
        "global" => {
            let mut policy = GridPolicy::with_spacing(h);
            policy.tol = tol;
            if cfg.raw("ladder").is_some() {
                policy.ladder = Some(cfg.f64_list_req("ladder")?);
            }
            let cap = global_capacity(&target, &kernel, &policy).map_err(solver_err)?;
            for (i, rung) in cap.ladder.iter().enumerate() {
                rows.push(
                    CapacityRecord {
                        problem_id: format!("g{i}"),
                        geometry: "condenser".into(),
                        r_outer: rung.radius,
                        r_inner: 0.0,
                        h,
                        value: rung.value,
                        kkt: rung.kkt,
                        iters: rung.iterations,
                    }
                    .csv_row(),
                );
            }
            extra.insert("value".to_string(), serde_json::json!(cap.value));
            extra.insert("ladder".to_string(), serde_json::json!(cap.ladder));
        }
        other => {
            return Err(RunError::Config(format!("unknown geometry `{other}`")));
        }
    }
    write_csv(&out.join("capacity.csv"), CapacityRecord::CSV_HEADER, &rows).map_err(io_err)?;
    write_report(out, "capacity", seed, cfg, extra)
}

// -------------------------------------------------------------------
// ergodic
// -------------------------------------------------------------------

pub fn run_ergodic(cfg: &Config, seed: u64, out: &Path) -> Result<(), RunError> {
    let mut keys = vec![
        "quantity",
        "n",
        "s",
        "p",
        "u_lo",
        "u_hi",
        "eps_ladder",
        "replicas",
        "mark_exponent",
        "cap_unit_ball",
        "delta_ladder",
        "window_lo",
        "window_hi",
    ];
    keys.extend_from_slice(PROCESS_KEYS);
    keys.extend_from_slice(MARK_KEYS);
    cfg.restrict_keys(&keys)?;
    let process = parse_process(cfg)?;
    ensure_out(out)?;
    let quantity = cfg.str_or("quantity", "rescaled_sum");
    let replicas = cfg.usize_or("replicas", 50)?;
    let mut extra = BTreeMap::new();

    match quantity {
        "rescaled_sum" => {
            let params = parse_params(cfg)?;
            let domain = parse_window(cfg, "u_lo", "u_hi")?;
            let ladder = cfg.f64_list_or("eps_ladder", &[0.125, 0.0625, 0.03125, 0.015625])?;
            let exponent = cfg.f64_or("mark_exponent", params.cap_exponent())?;
            let trace = rescaled_sum_trace(&process, &domain, exponent, &ladder, replicas, seed)
                .map_err(config_err)?;
            emit_trace(out, &trace)?;
            extra.insert(
                "summary".to_string(),
                serde_json::json!(trace
                    .summary
                    .iter()
                    .map(|p| (p.eps, p.mean, p.stderr))
                    .collect::<Vec<_>>()),
            );
        }
        "gamma" => {
            let params = parse_params(cfg)?;
            let cap = cfg.f64_req("cap_unit_ball")?;
            let g = gamma_estimate(&process, &params, cap, replicas, seed)
                .map_err(config_err)?;
            extra.insert("gamma_hat".to_string(), serde_json::json!(g.value));
            extra.insert("gamma_stderr".to_string(), serde_json::json!(g.stderr));
            extra.insert("wald".to_string(), serde_json::json!(g.wald));
        }
        "retention" => {
            let window = parse_window(cfg, "window_lo", "window_hi")?;
            let deltas = cfg.f64_list_or("delta_ladder", &[0.2, 0.1, 0.05, 0.01])?;
            let curve = retention_curve(&process, &window, &deltas, replicas, seed)
                .map_err(config_err)?;
            let rows: Vec<String> = curve
                .iter()
                .map(|p| format!("retention,{},{:.16e},{:.16e},", p.delta, p.fraction, p.stderr))
                .collect();
            write_csv(
                &out.join("summary.csv"),
                ErgodicTrace::SUMMARY_CSV_HEADER,
                &rows,
            )
            .map_err(io_err)?;
            let svg = svg_line_plot(
                "hard-core retention",
                "delta",
                "retained fraction",
                &[PlotSeries {
                    label: "retention".into(),
                    points: curve.iter().map(|p| (p.delta, p.fraction)).collect(),
                }],
            );
            std::fs::write(out.join("summary.svg"), svg).map_err(io_err)?;
            extra.insert(
                "curve".to_string(),
                serde_json::json!(curve
                    .iter()
                    .map(|p| (p.delta, p.fraction))
                    .collect::<Vec<_>>()),
            );
        }
        other => {
            return Err(RunError::Config(format!("unknown quantity `{other}`")));
        }
    }
    write_report(out, "ergodic", seed, cfg, extra)
}

fn emit_trace(out: &Path, trace: &ErgodicTrace) -> Result<(), RunError> {
    write_csv(
        &out.join("trace.csv"),
        ErgodicTrace::TRACE_CSV_HEADER,
        &trace.trace_rows(),
    )
    .map_err(io_err)?;
    write_csv(
        &out.join("summary.csv"),
        ErgodicTrace::SUMMARY_CSV_HEADER,
        &trace.summary_rows(),
    )
    .map_err(io_err)?;
    let svg = svg_line_plot(
        &trace.quantity,
        "eps",
        "ensemble mean",
        &[PlotSeries {
            label: trace.quantity.clone(),
            points: trace.summary.iter().map(|p| (p.eps, p.mean)).collect(),
        }],
    );
    std::fs::write(out.join("summary.svg"), svg).map_err(io_err)
}

// -------------------------------------------------------------------
// diagnose
// -------------------------------------------------------------------

pub fn run_diagnose(cfg: &Config, seed: u64, out: &Path) -> Result<(), RunError> {
    let mut keys = vec![
        "n",
        "s",
        "p",
        "u_lo",
        "u_hi",
        "eps_ladder",
        "replicas",
        "truncation",
        "thin_delta",
    ];
    keys.extend_from_slice(PROCESS_KEYS);
    keys.extend_from_slice(MARK_KEYS);
    cfg.restrict_keys(&keys)?;
    let process = parse_process(cfg)?;
    let params = parse_params(cfg)?;
    let domain = parse_window(cfg, "u_lo", "u_hi")?;
    let ladder = cfg.f64_list_or("eps_ladder", &[0.125, 0.0625, 0.03125, 0.015625])?;
    let replicas = cfg.usize_or("replicas", 20)?;
    let truncation = cfg.usize_or("truncation", 8)? as u32;
    let delta = match cfg.raw("thin_delta") {
        None => None,
        Some(v) => Some(
            v.parse::<f64>()
                .map_err(|e| RunError::Config(format!("thin_delta: {e}")))?,
        ),
    };
    ensure_out(out)?;

    let names = ["card_not_thinned", "card_not_good", "card_not_very_good_from_good", "card_nvg"];
    let mut rows = Vec::new();
    let mut med_rows = Vec::new();
    let mut series: Vec<PlotSeries> = names
        .iter()
        .map(|n| PlotSeries {
            label: n.to_string(),
            points: Vec::new(),
        })
        .collect();
    let mut safety_all_ok = true;
    for (ei, &eps) in ladder.iter().enumerate() {
        let margin = delta.unwrap_or(2.0 / truncation as f64);
        let window = domain.scaled(1.0 / eps).enlarged(margin);
        let mut per_quantity: Vec<Vec<f64>> = vec![Vec::new(); 4];
        for k in 0..replicas {
            let run_seed = child_seed(seed, (ei * replicas + k) as u64);
            let config = process.sample(&window, run_seed).map_err(config_err)?;
            let obstacles =
                build_obstacles(&config, &params, eps, &domain).map_err(config_err)?;
            let cls = classify_indices(&obstacles, &config, truncation, delta)
                .map_err(config_err)?;
            let report = cardinality_report(&cls, eps);
            safety_all_ok &= check_safety_layer(&cls, &obstacles);
            let lq = lq_norm(&obstacles, params.n as f64).unwrap_or(f64::NAN);
            for (qi, name) in names.iter().enumerate() {
                rows.push(format!("{name},{eps},{run_seed},{:.16e}", report[qi]));
                per_quantity[qi].push(report[qi]);
            }
            rows.push(format!("lq_norm,{eps},{run_seed},{lq:.16e}"));
        }
        for (qi, name) in names.iter().enumerate() {
            per_quantity[qi].sort_by(|a, b| a.partial_cmp(b).unwrap());
            let m = per_quantity[qi].len();
            let median = if m % 2 == 1 {
                per_quantity[qi][m / 2]
            } else {
                0.5 * (per_quantity[qi][m / 2 - 1] + per_quantity[qi][m / 2])
            };
            med_rows.push(format!("{name},{eps},{median:.16e},{m}"));
            series[qi].points.push((eps, median));
        }
    }
    write_csv(&out.join("trace.csv"), "quantity,eps,seed,value", &rows).map_err(io_err)?;
    write_csv(
        &out.join("summary.csv"),
        "quantity,eps,median,runs",
        &med_rows,
    )
    .map_err(io_err)?;
    let svg = svg_line_plot("index classification", "eps", "eps^n count", &series);
    std::fs::write(out.join("summary.svg"), svg).map_err(io_err)?;
    let mut extra = BTreeMap::new();
    extra.insert(
        "safety_layer_all_ok".to_string(),
        serde_json::json!(safety_all_ok),
    );
    write_report(out, "diagnose", seed, cfg, extra)
}

// -------------------------------------------------------------------
// homogenize / shapes
// -------------------------------------------------------------------

const STUDY_KEYS: &[&str] = &[
    "n",
    "s",
    "p",
    "u_lo",
    "u_hi",
    "f_const",
    "eps_ladder",
    "replicas",
    "truncation",
    "collar",
    "max_nodes",
    "cap_h",
    "max_iterations",
    "pg_tol_factor",
    "rel_energy_decrease",
];

fn parse_study(cfg: &Config, seed: u64) -> Result<StudyConfig, RunError> {
    let params = parse_params(cfg)?;
    Ok(StudyConfig {
        process: parse_process(cfg)?,
        params,
        domain: parse_window(cfg, "u_lo", "u_hi")?,
        f_const: cfg.f64_or("f_const", 1.0)?,
        eps_ladder: cfg.f64_list_or("eps_ladder", &[0.125, 0.0625, 0.03125, 0.015625])?,
        replicas: cfg.usize_or("replicas", 20)?,
        base_seed: seed,
        truncation: cfg.usize_or("truncation", 8)? as u32,
        collar: cfg.f64_or("collar", 1.0)?,
        max_nodes: cfg.usize_or("max_nodes", 4096)?,
        cap_h: cfg.f64_or("cap_h", 1.0 / 64.0)?,
        tol: parse_tol(cfg)?,
        template: None,
    })
}

fn emit_study(
    out: &Path,
    study: &fraclab_core::homogenize::ConvergenceStudy,
) -> Result<(), RunError> {
    write_jsonl(&out.join("runs.jsonl"), &study.runs).map_err(io_err)?;
    let rows: Vec<String> = study.summary.iter().map(|s| s.csv_row()).collect();
    write_csv(&out.join("summary.csv"), StudySummary::CSV_HEADER, &rows).map_err(io_err)?;
    let svg = svg_line_plot(
        "pinned vs effective solution distance",
        "eps",
        "median L^p distance",
        &[PlotSeries {
            label: "median distance".into(),
            points: study
                .summary
                .iter()
                .filter(|s| s.median_lp_dist.is_finite())
                .map(|s| (s.eps, s.median_lp_dist))
                .collect(),
        }],
    );
    std::fs::write(out.join("summary.svg"), svg).map_err(io_err)
}

fn study_extra(
    study: &fraclab_core::homogenize::ConvergenceStudy,
) -> BTreeMap<String, serde_json::Value> {
    let mut extra = BTreeMap::new();
    extra.insert(
        "gamma_hat".to_string(),
        serde_json::json!(study.gamma.value),
    );
    extra.insert(
        "cap_unit_ball".to_string(),
        serde_json::json!(study.cap_unit_ball),
    );
    extra.insert(
        "shape_capacity".to_string(),
        serde_json::json!(study.shape_capacity),
    );
    extra
}

pub fn run_homogenize(cfg: &Config, seed: u64, out: &Path) -> Result<(), RunError> {
    let mut keys = STUDY_KEYS.to_vec();
    keys.extend_from_slice(PROCESS_KEYS);
    keys.extend_from_slice(MARK_KEYS);
    cfg.restrict_keys(&keys)?;
    let study_cfg = parse_study(cfg, seed)?;
    ensure_out(out)?;
    let study = convergence_study(&study_cfg).map_err(solver_err)?;
    emit_study(out, &study)?;
    write_report(out, "homogenize", seed, cfg, study_extra(&study))
}

pub fn run_shapes(cfg: &Config, seed: u64, out: &Path) -> Result<(), RunError> {
    let mut keys = STUDY_KEYS.to_vec();
    keys.extend_from_slice(PROCESS_KEYS);
    keys.extend_from_slice(MARK_KEYS);
    keys.extend_from_slice(&["template", "template_radius", "template_half_widths"]);
    cfg.restrict_keys(&keys)?;
    let mut study_cfg = parse_study(cfg, seed)?;
    let template = match cfg.str_or("template", "ball") {
        "ball" => ShapeTemplate::Ball {
            radius: cfg.f64_or("template_radius", 0.5)?,
        },
        "box" => ShapeTemplate::Cuboid {
            half_widths: cfg.f64_list_req("template_half_widths")?,
        },
        other => {
            return Err(RunError::Config(format!("unknown template `{other}`")));
        }
    };
    study_cfg.template = Some(template);
    ensure_out(out)?;
    let study = convergence_study(&study_cfg).map_err(solver_err)?;
    emit_study(out, &study)?;
    let mut extra = study_extra(&study);
    extra.insert(
        "gamma_scaling_vs_unit_ball".to_string(),
        serde_json::json!(study.shape_capacity / study.cap_unit_ball),
    );
    write_report(out, "shapes", seed, cfg, extra)
}

pub fn dispatch(
    subcommand: &str,
    cfg: &Config,
    seed: u64,
    out: &Path,
) -> Result<(), RunError> {
    match subcommand {
        "sample" => run_sample(cfg, seed, out),
        "capacity" => run_capacity(cfg, seed, out),
        "ergodic" => run_ergodic(cfg, seed, out),
        "diagnose" => run_diagnose(cfg, seed, out),
        "homogenize" => run_homogenize(cfg, seed, out),
        "shapes" => run_shapes(cfg, seed, out),
        other => Err(RunError::Config(format!("unknown subcommand `{other}`"))),
    }
}
