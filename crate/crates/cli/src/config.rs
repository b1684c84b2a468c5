//! Flat key-value experiment configuration.
//!
//! One `key = value` pair per line, `#` starts a comment. Keys not known to
//! the selected subcommand abort before any computation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug)]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config key `{}`: {}", self.key, self.reason)
    }
}

impl std::error::Error for ConfigError {}

fn err(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// Parsed configuration with consumption tracking.
#[derive(Debug, Clone)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(err(
                    &format!("line {}", lineno + 1),
                    format!("expected `key = value`, got `{line}`"),
                ));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(err(&format!("line {}", lineno + 1), "empty key"));
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(err(&key, "duplicate key"));
            }
        }
        Ok(Config { entries })
    }

    pub fn from_file(path: &std::path::Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err("config", format!("cannot read {}: {e}", path.display())))?;
        Config::parse(&text)
    }

    /// Every key must belong to `allowed`; unknown keys abort.
    pub fn restrict_keys(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        let allowed: BTreeSet<&str> = allowed.iter().copied().collect();
        for key in self.entries.keys() {
            if !allowed.contains(key.as_str()) {
                return Err(err(key, "unknown key for this subcommand"));
            }
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str, ConfigError> {
        self.raw(key).ok_or_else(|| err(key, "missing required key"))
    }

    pub fn f64_req(&self, key: &str) -> Result<f64, ConfigError> {
        self.require(key)?
            .parse()
            .map_err(|e| err(key, format!("not a number: {e}")))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| err(key, format!("not a number: {e}"))),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| err(key, format!("not an integer: {e}"))),
        }
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.raw(key).unwrap_or(default)
    }

    /// Whitespace-separated list of numbers.
    pub fn f64_list_req(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        let vals: Result<Vec<f64>, _> = self
            .require(key)?
            .split_whitespace()
            .map(str::parse)
            .collect();
        let vals = vals.map_err(|e| err(key, format!("not a number list: {e}")))?;
        if vals.is_empty() {
            return Err(err(key, "empty list"));
        }
        Ok(vals)
    }

    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, ConfigError> {
        match self.raw(key) {
            None => Ok(default.to_vec()),
            Some(_) => self.f64_list_req(key),
        }
    }

    /// Echo of the configuration for the report.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.entries.clone()
    }
}

/// Mark-distribution keys shared by every process-sampling subcommand.
pub const MARK_KEYS: &[&str] = &[
    "marks",
    "mark_rho0",
    "mark_a",
    "mark_b",
    "mark_mu",
    "mark_sigma",
    "mark_alpha",
    "mark_x_min",
];

pub fn parse_marks(cfg: &Config) -> Result<fraclab_core::MarkDistribution, ConfigError> {
    use fraclab_core::MarkDistribution as M;
    let family = cfg.str_or("marks", "constant");
    let marks = match family {
        "constant" => M::Constant {
            rho0: cfg.f64_or("mark_rho0", 1.0)?,
        },
        "uniform" => M::Uniform {
            a: cfg.f64_req("mark_a")?,
            b: cfg.f64_req("mark_b")?,
        },
        "lognormal" => M::LogNormal {
            mu: cfg.f64_or("mark_mu", 0.0)?,
            sigma: cfg.f64_or("mark_sigma", 1.0)?,
        },
        "pareto" => M::Pareto {
            alpha: cfg.f64_req("mark_alpha")?,
            x_min: cfg.f64_req("mark_x_min")?,
        },
        other => return Err(err("marks", format!("unknown family `{other}`"))),
    };
    marks
        .validate()
        .map_err(|e| err("marks", e.to_string()))?;
    Ok(marks)
}

pub const PROCESS_KEYS: &[&str] = &["process", "intensity"];

pub fn parse_process(cfg: &Config) -> Result<fraclab_core::ProcessSpec, ConfigError> {
    use fraclab_core::ProcessSpec as P;
    let marks = parse_marks(cfg)?;
    match cfg.str_or("process", "poisson") {
        "poisson" => Ok(P::Poisson {
            intensity: cfg.f64_or("intensity", 1.0)?,
            marks,
        }),
        "lattice" => Ok(P::ShiftedLattice { marks }),
        other => Err(err("process", format!("unknown process `{other}`"))),
    }
}
