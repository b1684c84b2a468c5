//! Scaled random obstacle sets and the good / very good / not very good
//! index classification.
//!
//! A realization with points `x_i` and marks `rho_i` produces the obstacle
//! balls `B_{lambda_eps rho_i}(eps x_i)` for `x_i` in the blown-up domain.
//! Indices split into
//!
//! * `I`: all obstacles of the realization inside `eps^{-1} U`;
//! * `I_2R`: those whose nearest neighbor in the full configuration is at
//!   distance at least `2/R`;
//! * `G` (good): additionally `rho_i <= R` and `dist(eps x_i, dU) > eps/R`;
//! * `VG` (very good): good indices whose ball `B_{eps/R}` meets none of
//!   the doubled obstacles `B_{2 lambda rho_j}`;
//! * `NVG = I \ VG`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::ScalingParams;
use crate::point_process::{matern_retained_indices, MarkedConfiguration, Window};

#[derive(Debug, Error)]
pub enum ObstacleError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("configuration window does not cover eps^-1 U")]
    WindowTooSmall,
    #[error("classification does not match the realization: {0}")]
    MismatchedRealization(String),
    #[error("template does not fit in the unit ball: {0}")]
    TemplateOutOfBounds(String),
    #[error("template capacity oracle failed: {0}")]
    CapacityOracle(String),
    #[error(transparent)]
    Process(#[from] crate::point_process::ProcessError),
    #[error(transparent)]
    Params(#[from] crate::params::ParamError),
}

/// Critical obstacle scale `lambda_eps = eps^{n/(n-sp)}`.
pub fn lambda_eps(params: &ScalingParams, eps: f64) -> Result<f64, ObstacleError> {
    Ok(params.lambda_eps(eps)?)
}

/// One scaled obstacle ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    /// Index of the generating point in the configuration.
    pub index: usize,
    /// Ball center `eps x_i`.
    pub center: Vec<f64>,
    /// Ball radius `lambda_eps rho_i`.
    pub radius: f64,
    /// Mark `rho_i`.
    pub mark: f64,
}

/// The scaled obstacle set of a realization inside `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleSet {
    pub eps: f64,
    pub lambda: f64,
    pub params: ScalingParams,
    pub domain: Window,
    pub obstacles: Vec<Obstacle>,
    pub seed: u64,
}

impl ObstacleSet {
    pub fn len(&self) -> usize {
        self.obstacles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obstacles.is_empty()
    }

    pub fn min_radius(&self) -> Option<f64> {
        self.obstacles
            .iter()
            .map(|o| o.radius)
            .min_by(|a, b| a.partial_cmp(b).unwrap())
    }

    /// Balls as `(center, radius)` pairs.
    pub fn balls(&self) -> Vec<(Vec<f64>, f64)> {
        self.obstacles
            .iter()
            .map(|o| (o.center.clone(), o.radius))
            .collect()
    }

    /// Plain-text table with columns `x_1 .. x_n rho radius`.
    pub fn to_table(&self) -> String {
        let n = self.domain.dim();
        let mut out = format!("n {} seed {} eps {:.16e}\n", n, self.seed, self.eps);
        for o in &self.obstacles {
            let mut row = String::new();
            for c in &o.center {
                row.push_str(&format!("{c:.16e} "));
            }
            row.push_str(&format!("{:.16e} {:.16e}", o.mark, o.radius));
            out.push_str(&row);
            out.push('\n');
        }
        out
    }
}

/// Build the obstacle set `{B_{lambda rho_i}(eps x_i) : x_i in eps^{-1} U}`.
pub fn build_obstacles(
    config: &MarkedConfiguration,
    params: &ScalingParams,
    eps: f64,
    domain: &Window,
) -> Result<ObstacleSet, ObstacleError> {
    if domain.dim() != params.n || config.dim() != params.n {
        return Err(ObstacleError::InvalidParameter(
            "dimension mismatch between window, params, and configuration".into(),
        ));
    }
    let lambda = params.lambda_eps(eps)?;
    let blowup = domain.scaled(1.0 / eps);
    if !config.window.covers(&blowup) {
        return Err(ObstacleError::WindowTooSmall);
    }
    let mut obstacles = Vec::new();
    for i in 0..config.len() {
        let x = config.position(i);
        if blowup.contains(x) {
            obstacles.push(Obstacle {
                index: i,
                center: x.iter().map(|v| v * eps).collect(),
                radius: lambda * config.mark(i),
                mark: config.mark(i),
            });
        }
    }
    Ok(ObstacleSet {
        eps,
        lambda,
        params: *params,
        domain: domain.clone(),
        obstacles,
        seed: config.seed,
    })
}

/// Index partition of an obstacle set at truncation threshold `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexClassification {
    pub truncation: u32,
    /// Thinning distance used for `I_2R` (defaults to `2/R`).
    pub delta: f64,
    pub eps: f64,
    pub dim: usize,
    /// Configuration indices of all obstacles.
    pub all: Vec<usize>,
    pub thinned: Vec<usize>,
    pub good: Vec<usize>,
    pub very_good: Vec<usize>,
    pub not_very_good: Vec<usize>,
}

/// Classify obstacle indices; `delta` overrides the thinning distance
/// (`None` uses the coupling `2/R`).
pub fn classify_indices(
    obstacles: &ObstacleSet,
    config: &MarkedConfiguration,
    truncation: u32,
    delta: Option<f64>,
) -> Result<IndexClassification, ObstacleError> {
    if truncation == 0 {
        return Err(ObstacleError::InvalidParameter("R must be >= 1".into()));
    }
    verify_realization(obstacles, config)?;
    let r = truncation as f64;
    let eps = obstacles.eps;
    let lambda = obstacles.lambda;
    let delta = delta.unwrap_or(2.0 / r);

    let all: Vec<usize> = obstacles.obstacles.iter().map(|o| o.index).collect();
    let by_index: HashMap<usize, &Obstacle> =
        obstacles.obstacles.iter().map(|o| (o.index, o)).collect();

    // nearest-neighbor separation in the full configuration
    let retained = matern_retained_indices(config, delta)?;
    let retained_set: std::collections::HashSet<usize> = retained.into_iter().collect();
    let thinned: Vec<usize> = all
        .iter()
        .copied()
        .filter(|i| retained_set.contains(i))
        .collect();

    let good: Vec<usize> = thinned
        .iter()
        .copied()
        .filter(|&i| {
            let o = by_index[&i];
            o.mark <= r && obstacles.domain.boundary_distance(&o.center) > eps / r
        })
        .collect();

    // very good: the ball B_{eps/R}(eps x_i) avoids every doubled obstacle
    let query_radius = eps / r;
    let cell = query_radius.max(1e-300);
    let mut good_hash: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for &i in &good {
        let key: Vec<i64> = by_index[&i]
            .center
            .iter()
            .map(|v| (v / cell).floor() as i64)
            .collect();
        good_hash.entry(key).or_default().push(i);
    }
    let mut excluded: std::collections::HashSet<usize> = std::collections::HashSet::new();
    let n = obstacles.params.n;
    for o in &obstacles.obstacles {
        let reach = query_radius + 2.0 * lambda * o.mark;
        let span = (reach / cell).ceil() as i64;
        let base: Vec<i64> = o.center.iter().map(|v| (v / cell).floor() as i64).collect();
        let mut offs = vec![-span; n];
        'cells: loop {
            let key: Vec<i64> = base.iter().zip(&offs).map(|(b, d)| b + d).collect();
            if let Some(bucket) = good_hash.get(&key) {
                for &i in bucket {
                    if i == o.index {
                        continue;
                    }
                    let oi = by_index[&i];
                    let d2: f64 = oi
                        .center
                        .iter()
                        .zip(&o.center)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    let sep = query_radius + 2.0 * lambda * o.mark;
                    if d2 < sep * sep {
                        excluded.insert(i);
                    }
                }
            }
            let mut k = n;
            loop {
                if k == 0 {
                    break 'cells;
                }
                k -= 1;
                offs[k] += 1;
                if offs[k] <= span {
                    break;
                }
                offs[k] = -span;
            }
        }
    }
    let very_good: Vec<usize> = good
        .iter()
        .copied()
        .filter(|i| !excluded.contains(i))
        .collect();
    let vg_set: std::collections::HashSet<usize> = very_good.iter().copied().collect();
    let not_very_good: Vec<usize> = all
        .iter()
        .copied()
        .filter(|i| !vg_set.contains(i))
        .collect();

    Ok(IndexClassification {
        truncation,
        delta,
        eps,
        dim: obstacles.params.n,
        all,
        thinned,
        good,
        very_good,
        not_very_good,
    })
}

fn verify_realization(
    obstacles: &ObstacleSet,
    config: &MarkedConfiguration,
) -> Result<(), ObstacleError> {
    for o in &obstacles.obstacles {
        if o.index >= config.len() {
            return Err(ObstacleError::MismatchedRealization(format!(
                "index {} beyond configuration",
                o.index
            )));
        }
        let x = config.position(o.index);
        let ok_pos = o
            .center
            .iter()
            .zip(x)
            .all(|(c, xi)| (c - xi * obstacles.eps).abs() <= 1e-12 * (1.0 + xi.abs()));
        if !ok_pos || (config.mark(o.index) - o.mark).abs() > 1e-12 * (1.0 + o.mark) {
            return Err(ObstacleError::MismatchedRealization(format!(
                "point {} does not reproduce the obstacle",
                o.index
            )));
        }
    }
    Ok(())
}

/// True iff the very-good enlarged balls and the doubled not-very-good
/// obstacles are disjoint. Classifications produced by [`classify_indices`]
/// satisfy this by construction; a false return flags a defect.
pub fn check_safety_layer(cls: &IndexClassification, obstacles: &ObstacleSet) -> bool {
    let by_index: HashMap<usize, &Obstacle> =
        obstacles.obstacles.iter().map(|o| (o.index, o)).collect();
    let r = cls.truncation as f64;
    let query_radius = cls.eps / r;
    let cell = query_radius.max(1e-300);
    let n = obstacles.params.n;
    let mut vg_hash: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for &i in &cls.very_good {
        let key: Vec<i64> = by_index[&i]
            .center
            .iter()
            .map(|v| (v / cell).floor() as i64)
            .collect();
        vg_hash.entry(key).or_default().push(i);
    }
    for &j in &cls.not_very_good {
        let oj = by_index[&j];
        let sep = query_radius + 2.0 * obstacles.lambda * oj.mark;
        let span = (sep / cell).ceil() as i64;
        let base: Vec<i64> = oj.center.iter().map(|v| (v / cell).floor() as i64).collect();
        let mut offs = vec![-span; n];
        'cells: loop {
            let key: Vec<i64> = base.iter().zip(&offs).map(|(b, d)| b + d).collect();
            if let Some(bucket) = vg_hash.get(&key) {
                for &i in bucket {
                    if i == j {
                        continue;
                    }
                    let d2: f64 = by_index[&i]
                        .center
                        .iter()
                        .zip(&oj.center)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    if d2 < sep * sep {
                        return false;
                    }
                }
            }
            let mut k = n;
            loop {
                if k == 0 {
                    break 'cells;
                }
                k -= 1;
                offs[k] += 1;
                if offs[k] <= span {
                    break;
                }
                offs[k] = -span;
            }
        }
    }
    true
}

/// Rescaled cardinalities
/// `eps^n (#(I\I_2R), #(I_2R\G), #(G\VG), #NVG)`.
pub fn cardinality_report(cls: &IndexClassification, eps: f64) -> [f64; 4] {
    let en = eps.powi(cls.dim as i32);
    [
        en * (cls.all.len() - cls.thinned.len()) as f64,
        en * (cls.thinned.len() - cls.good.len()) as f64,
        en * (cls.good.len() - cls.very_good.len()) as f64,
        en * cls.not_very_good.len() as f64,
    ]
}

/// `ell^q` norm of the scaled radii over the index set `I`
/// (`max` for `q = infinity`, encoded as `f64::INFINITY`).
pub fn lq_norm(obstacles: &ObstacleSet, q: f64) -> Result<f64, ObstacleError> {
    let exponent_bound = obstacles.params.cap_exponent();
    if q.is_nan() || q <= exponent_bound {
        return Err(ObstacleError::InvalidParameter(format!(
            "q must exceed n - sp = {exponent_bound}"
        )));
    }
    if obstacles.is_empty() {
        return Ok(0.0);
    }
    if q.is_infinite() {
        return Ok(obstacles
            .obstacles
            .iter()
            .map(|o| o.radius)
            .fold(0.0, f64::max));
    }
    let sum: f64 = obstacles.obstacles.iter().map(|o| o.radius.powf(q)).sum();
    Ok(sum.powf(1.0 / q))
}

/// Obstacle shape template, defined inside the unit ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ShapeTemplate {
    Ball { radius: f64 },
    Cuboid { half_widths: Vec<f64> },
    BallUnion { balls: Vec<(Vec<f64>, f64)> },
}

impl ShapeTemplate {
    /// Every template must fit inside the closed unit ball.
    pub fn fits_unit_ball(&self) -> bool {
        match self {
            ShapeTemplate::Ball { radius } => *radius <= 1.0 && *radius >= 0.0,
            ShapeTemplate::Cuboid { half_widths } => {
                half_widths.iter().map(|w| w * w).sum::<f64>() <= 1.0
                    && half_widths.iter().all(|w| *w >= 0.0)
            }
            ShapeTemplate::BallUnion { balls } => balls.iter().all(|(c, r)| {
                *r >= 0.0 && c.iter().map(|v| v * v).sum::<f64>().sqrt() + r <= 1.0
            }),
        }
    }
}

/// Obstacles replaced by scaled shape templates with per-obstacle capacity
/// marks `gamma_i = rho_i^{n-sp} cap_K(template)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapedObstacleSet {
    pub base: ObstacleSet,
    pub templates: Vec<ShapeTemplate>,
    /// Per obstacle: index into `templates` and the capacity mark.
    pub assignment: Vec<(usize, f64)>,
}

impl ShapedObstacleSet {
    /// Plain-text table with extra columns `template_id gamma_i`.
    pub fn to_table(&self) -> String {
        let n = self.base.domain.dim();
        let mut out = format!(
            "n {} seed {} eps {:.16e}\n",
            n, self.base.seed, self.base.eps
        );
        for (o, (tid, gamma)) in self.base.obstacles.iter().zip(&self.assignment) {
            let mut row = String::new();
            for c in &o.center {
                row.push_str(&format!("{c:.16e} "));
            }
            row.push_str(&format!(
                "{:.16e} {:.16e} {} {:.16e}",
                o.mark, o.radius, tid, gamma
            ));
            out.push_str(&row);
            out.push('\n');
        }
        out
    }

    /// Scaled shapes as ready-to-pin geometric regions: the template scaled
    /// by `lambda rho_i` about `eps x_i`.
    pub fn scaled_shapes(&self) -> Vec<(Vec<f64>, f64, ShapeTemplate)> {
        self.base
            .obstacles
            .iter()
            .zip(&self.assignment)
            .map(|(o, (tid, _))| (o.center.clone(), o.radius, self.templates[*tid].clone()))
            .collect()
    }
}

/// Assign shape templates and capacity marks. The capacity oracle is
/// invoked once per distinct template; by the `(n-sp)`-homogeneity of the
/// kernel capacity the stored marks satisfy
/// `cap_K(scaled shape) = eps^n gamma_i`.
pub fn build_shaped_obstacles(
    obstacles: &ObstacleSet,
    templates: &[ShapeTemplate],
    assign: impl Fn(usize) -> usize,
    capacity_oracle: impl Fn(&ShapeTemplate) -> Result<f64, String>,
) -> Result<ShapedObstacleSet, ObstacleError> {
    for (k, t) in templates.iter().enumerate() {
        if !t.fits_unit_ball() {
            return Err(ObstacleError::TemplateOutOfBounds(format!("template {k}")));
        }
    }
    // single-writer capacity cache, then read-only
    let mut cap_cache: Vec<Option<f64>> = vec![None; templates.len()];
    let exponent = obstacles.params.cap_exponent();
    let mut assignment = Vec::with_capacity(obstacles.len());
    for (slot, o) in obstacles.obstacles.iter().enumerate() {
        let tid = assign(slot);
        if tid >= templates.len() {
            return Err(ObstacleError::InvalidParameter(format!(
                "template id {tid} out of range"
            )));
        }
        if cap_cache[tid].is_none() {
            let cap = capacity_oracle(&templates[tid])
                .map_err(ObstacleError::CapacityOracle)?;
            cap_cache[tid] = Some(cap);
        }
        let gamma = o.mark.powf(exponent) * cap_cache[tid].unwrap();
        assignment.push((tid, gamma));
    }
    Ok(ShapedObstacleSet {
        base: obstacles.clone(),
        templates: templates.to_vec(),
        assignment,
    })
}
