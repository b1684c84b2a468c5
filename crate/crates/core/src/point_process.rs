//! Stationary marked point processes on finite windows.
//!
//! Samples Poisson and randomly shifted lattice configurations with i.i.d.
//! marks, applies hard-core (Matérn-I) thinning, and evaluates mark moments
//! in closed form. All samplers are pure functions of `(window, params, seed)`.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Pareto, Poisson, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::seeded_rng;

#[derive(Debug, Error, PartialEq)]
pub enum ProcessError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("window does not cover the requested region: {0}")]
    WindowTooSmall(String),
    #[error("parse error: {0}")]
    Parse(String),
}

/// Law of the i.i.d. marks (obstacle radii). Parameters are dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MarkDistribution {
    /// Point mass at `rho0 >= 0`.
    Constant { rho0: f64 },
    /// Uniform on `[a, b)`, `0 <= a < b`.
    Uniform { a: f64, b: f64 },
    /// `exp(N(mu, sigma^2))`, `sigma > 0`.
    LogNormal { mu: f64, sigma: f64 },
    /// Density `alpha x_min^alpha x^{-alpha-1}` on `[x_min, inf)`.
    Pareto { alpha: f64, x_min: f64 },
}

/// Value of a mark moment; heavy-tailed families can diverge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Moment {
    Finite(f64),
    Infinite,
}

impl Moment {
    pub fn finite(&self) -> Option<f64> {
        match self {
            Moment::Finite(v) => Some(*v),
            Moment::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Moment::Infinite)
    }
}

impl MarkDistribution {
    pub fn validate(&self) -> Result<(), ProcessError> {
        let bad = |msg: &str| Err(ProcessError::InvalidParameter(msg.to_string()));
        match *self {
            MarkDistribution::Constant { rho0 } => {
                if rho0.is_nan() || rho0 < 0.0 {
                    return bad("constant mark requires rho0 >= 0");
                }
            }
            MarkDistribution::Uniform { a, b } => {
                if a.is_nan() || b.is_nan() || a < 0.0 || a >= b {
                    return bad("uniform marks require 0 <= a < b");
                }
            }
            MarkDistribution::LogNormal { sigma, mu } => {
                if sigma.is_nan() || sigma <= 0.0 || !mu.is_finite() {
                    return bad("lognormal marks require sigma > 0");
                }
            }
            MarkDistribution::Pareto { alpha, x_min } => {
                if alpha.is_nan() || x_min.is_nan() || alpha <= 0.0 || x_min <= 0.0 {
                    return bad("pareto marks require alpha > 0 and x_min > 0");
                }
            }
        }
        Ok(())
    }

    fn sample_one<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            MarkDistribution::Constant { rho0 } => rho0,
            MarkDistribution::Uniform { a, b } => {
                Uniform::new(a, b).expect("validated bounds").sample(rng)
            }
            MarkDistribution::LogNormal { mu, sigma } => {
                LogNormal::new(mu, sigma).expect("validated params").sample(rng)
            }
            MarkDistribution::Pareto { alpha, x_min } => {
                Pareto::new(x_min, alpha).expect("validated params").sample(rng)
            }
        }
    }
}

/// Closed-form `q`-th mark moment `∫ rho^q dP̃(rho)`.
///
/// Returns [`Moment::Infinite`] when the moment diverges (Pareto with
/// `alpha <= q`).
pub fn analytic_mark_moment(marks: &MarkDistribution, q: f64) -> Result<Moment, ProcessError> {
    marks.validate()?;
    if q.is_nan() || q < 0.0 {
        return Err(ProcessError::InvalidParameter(
            "moment order q must be >= 0".to_string(),
        ));
    }
    let m = match *marks {
        MarkDistribution::Constant { rho0 } => Moment::Finite(rho0.powf(q)),
        MarkDistribution::Uniform { a, b } => {
            // ∫_a^b x^q dx / (b-a); q >= 0 so q+1 > 0.
            Moment::Finite((b.powf(q + 1.0) - a.powf(q + 1.0)) / ((q + 1.0) * (b - a)))
        }
        MarkDistribution::LogNormal { mu, sigma } => {
            Moment::Finite((q * mu + 0.5 * q * q * sigma * sigma).exp())
        }
        MarkDistribution::Pareto { alpha, x_min } => {
            if q < alpha {
                Moment::Finite(alpha * x_min.powf(q) / (alpha - q))
            } else {
                Moment::Infinite
            }
        }
    };
    Ok(m)
}

/// Axis-aligned sampling window `[lo_1, hi_1) x ... x [lo_n, hi_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Window {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, ProcessError> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(ProcessError::InvalidParameter(
                "window needs matching nonempty bounds".to_string(),
            ));
        }
        for (l, u) in lo.iter().zip(&hi) {
            if !l.is_finite() || !u.is_finite() || l >= u {
                return Err(ProcessError::InvalidParameter(
                    "window requires lo_k < hi_k finite".to_string(),
                ));
            }
        }
        Ok(Window { lo, hi })
    }

    /// Cube `[0, side)^n`.
    pub fn cube(n: usize, side: f64) -> Result<Self, ProcessError> {
        Window::new(vec![0.0; n], vec![side; n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, u)| u - l).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(xi, (l, u))| *l <= *xi && *xi < *u)
    }

    /// Does this window contain `other` entirely?
    pub fn covers(&self, other: &Window) -> bool {
        self.dim() == other.dim()
            && self
                .lo
                .iter()
                .zip(&other.lo)
                .all(|(a, b)| *a <= *b + 1e-12)
            && self
                .hi
                .iter()
                .zip(&other.hi)
                .all(|(a, b)| *a >= *b - 1e-12)
    }

    /// Window enlarged by `margin` on every side.
    pub fn enlarged(&self, margin: f64) -> Window {
        Window {
            lo: self.lo.iter().map(|l| l - margin).collect(),
            hi: self.hi.iter().map(|u| u + margin).collect(),
        }
    }

    /// Scale by `1/eps`: the window `eps^{-1} W`.
    pub fn scaled(&self, inv_factor: f64) -> Window {
        Window {
            lo: self.lo.iter().map(|l| l * inv_factor).collect(),
            hi: self.hi.iter().map(|u| u * inv_factor).collect(),
        }
    }

    /// Distance from an interior point to the box boundary (negative
    /// outside).
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(xi, (l, u))| (xi - l).min(u - xi))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Which sampler produced a configuration, with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProcessSpec {
    Poisson { intensity: f64, marks: MarkDistribution },
    ShiftedLattice { marks: MarkDistribution },
}

impl ProcessSpec {
    pub fn marks(&self) -> &MarkDistribution {
        match self {
            ProcessSpec::Poisson { marks, .. } => marks,
            ProcessSpec::ShiftedLattice { marks } => marks,
        }
    }

    /// Ground-process intensity (points per unit volume).
    pub fn intensity(&self) -> f64 {
        match self {
            ProcessSpec::Poisson { intensity, .. } => *intensity,
            ProcessSpec::ShiftedLattice { .. } => 1.0,
        }
    }

    /// Sample a realization on `window` with the given seed.
    pub fn sample(&self, window: &Window, seed: u64) -> Result<MarkedConfiguration, ProcessError> {
        match self {
            ProcessSpec::Poisson { intensity, marks } => {
                sample_poisson(window, *intensity, marks, seed)
            }
            ProcessSpec::ShiftedLattice { marks } => sample_shifted_lattice(window, marks, seed),
        }
    }
}

impl fmt::Display for ProcessSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProcessSpec::Poisson { intensity, marks } => {
                write!(f, "poisson(m={intensity}, marks={marks:?})")
            }
            ProcessSpec::ShiftedLattice { marks } => {
                write!(f, "shifted_lattice(marks={marks:?})")
            }
        }
    }
}

/// A finite realization of a marked point process.
///
/// Positions are stored flattened with stride `dim`. Immutable after
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedConfiguration {
    pub window: Window,
    positions: Vec<f64>,
    marks: Vec<f64>,
    pub seed: u64,
    pub descriptor: ProcessSpec,
}

impl MarkedConfiguration {
    pub fn dim(&self) -> usize {
        self.window.dim()
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        let n = self.dim();
        &self.positions[i * n..(i + 1) * n]
    }

    pub fn mark(&self, i: usize) -> f64 {
        self.marks[i]
    }

    pub fn marks(&self) -> &[f64] {
        &self.marks
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        (0..self.len()).map(move |i| (self.position(i), self.mark(i)))
    }

    /// Keep only points inside `window` (marks carried along).
    pub fn restricted_to(&self, window: &Window) -> MarkedConfiguration {
        let mut positions = Vec::new();
        let mut marks = Vec::new();
        for i in 0..self.len() {
            if window.contains(self.position(i)) {
                positions.extend_from_slice(self.position(i));
                marks.push(self.marks[i]);
            }
        }
        MarkedConfiguration {
            window: window.clone(),
            positions,
            marks,
            seed: self.seed,
            descriptor: self.descriptor.clone(),
        }
    }

    /// Plain-text table: header `n <dim> seed <seed>`, then one line per
    /// point `x_1 ... x_n rho`, 17 significant digits.
    pub fn to_table(&self) -> String {
        let mut out = format!("n {} seed {}\n", self.dim(), self.seed);
        for i in 0..self.len() {
            let mut row = String::new();
            for x in self.position(i) {
                row.push_str(&format!("{:.16e} ", x));
            }
            row.push_str(&format!("{:.16e}", self.mark(i)));
            out.push_str(&row);
            out.push('\n');
        }
        out
    }

    /// Parse the [`Self::to_table`] format. Window and descriptor are not
    /// stored in the table; the caller supplies them.
    pub fn from_table(
        text: &str,
        window: Window,
        descriptor: ProcessSpec,
    ) -> Result<MarkedConfiguration, ProcessError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| ProcessError::Parse("empty table".to_string()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "n" || fields[2] != "seed" {
            return Err(ProcessError::Parse(format!("bad header: {header}")));
        }
        let n: usize = fields[1]
            .parse()
            .map_err(|_| ProcessError::Parse("bad dimension".to_string()))?;
        let seed: u64 = fields[3]
            .parse()
            .map_err(|_| ProcessError::Parse("bad seed".to_string()))?;
        if n != window.dim() {
            return Err(ProcessError::Parse("window dimension mismatch".to_string()));
        }
        let mut positions = Vec::new();
        let mut marks = Vec::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
            let vals = vals.map_err(|_| ProcessError::Parse(format!("bad row: {line}")))?;
            if vals.len() != n + 1 {
                return Err(ProcessError::Parse(format!("bad row arity: {line}")));
            }
            positions.extend_from_slice(&vals[..n]);
            marks.push(vals[n]);
        }
        Ok(MarkedConfiguration {
            window,
            positions,
            marks,
            seed,
            descriptor,
        })
    }

    fn from_parts(
        window: Window,
        positions: Vec<f64>,
        marks: Vec<f64>,
        seed: u64,
        descriptor: ProcessSpec,
    ) -> MarkedConfiguration {
        MarkedConfiguration {
            window,
            positions,
            marks,
            seed,
            descriptor,
        }
    }
}

/// Homogeneous Poisson process with intensity `m_g`, marks i.i.d.
///
/// Point count is `Poisson(m_g * volume)`, positions i.i.d. uniform in the
/// window, marks independent of positions. Deterministic given the seed.
pub fn sample_poisson(
    window: &Window,
    intensity: f64,
    marks: &MarkDistribution,
    seed: u64,
) -> Result<MarkedConfiguration, ProcessError> {
    if !intensity.is_finite() || intensity < 0.0 {
        return Err(ProcessError::InvalidParameter(
            "poisson intensity must be finite and >= 0".to_string(),
        ));
    }
    marks.validate()?;
    Window::new(window.lo.clone(), window.hi.clone())?;

    let mut rng = seeded_rng(seed);
    let n = window.dim();
    let mean = intensity * window.volume();
    let count = if mean == 0.0 {
        0
    } else {
        Poisson::new(mean)
            .map_err(|e| ProcessError::InvalidParameter(format!("poisson: {e}")))?
            .sample(&mut rng) as usize
    };

    let mut positions = Vec::with_capacity(count * n);
    for _ in 0..count {
        for k in 0..n {
            let u: f64 = rng.random();
            positions.push(window.lo[k] + u * (window.hi[k] - window.lo[k]));
        }
    }
    let mark_vals: Vec<f64> = (0..count).map(|_| marks.sample_one(&mut rng)).collect();

    Ok(MarkedConfiguration::from_parts(
        window.clone(),
        positions,
        mark_vals,
        seed,
        ProcessSpec::Poisson {
            intensity,
            marks: *marks,
        },
    ))
}

/// Randomly translated integer lattice `{z + zeta : z in Z^n}` with `zeta`
/// uniform on `[0,1)^n`; marks i.i.d. Deterministic given the seed.
pub fn sample_shifted_lattice(
    window: &Window,
    marks: &MarkDistribution,
    seed: u64,
) -> Result<MarkedConfiguration, ProcessError> {
    marks.validate()?;
    Window::new(window.lo.clone(), window.hi.clone())?;

    let mut rng = seeded_rng(seed);
    let n = window.dim();
    let shift: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();

    // Integer ranges per axis so that z_k + shift_k lands in [lo_k, hi_k).
    let ranges: Vec<(i64, i64)> = (0..n)
        .map(|k| {
            let zmin = (window.lo[k] - shift[k]).ceil() as i64;
            let zmax = (window.hi[k] - shift[k]).ceil() as i64; // exclusive
            (zmin, zmax)
        })
        .collect();

    let mut positions = Vec::new();
    let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    let total: i64 = ranges.iter().map(|r| (r.1 - r.0).max(0)).product();
    if total > 0 {
        'outer: loop {
            for k in 0..n {
                positions.push(idx[k] as f64 + shift[k]);
            }
            // odometer increment
            let mut k = n;
            loop {
                if k == 0 {
                    break 'outer;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < ranges[k].1 {
                    break;
                }
                idx[k] = ranges[k].0;
            }
        }
    }
    let count = positions.len() / n;
    let mark_vals: Vec<f64> = (0..count).map(|_| marks.sample_one(&mut rng)).collect();

    Ok(MarkedConfiguration::from_parts(
        window.clone(),
        positions,
        mark_vals,
        seed,
        ProcessSpec::ShiftedLattice { marks: *marks },
    ))
}

/// Matérn-I hard-core thinning: keep exactly the points whose nearest
/// neighbor in the full configuration lies at distance `>= delta`.
///
/// Idempotent on its own output for the same `delta`; the retained index
/// sets are nested as `delta` decreases.
pub fn matern_thin(
    config: &MarkedConfiguration,
    delta: f64,
) -> Result<MarkedConfiguration, ProcessError> {
    let retained = matern_retained_indices(config, delta)?;
    let n = config.dim();
    let mut positions = Vec::with_capacity(retained.len() * n);
    let mut marks = Vec::with_capacity(retained.len());
    for &i in &retained {
        positions.extend_from_slice(config.position(i));
        marks.push(config.mark(i));
    }
    Ok(MarkedConfiguration::from_parts(
        config.window.clone(),
        positions,
        marks,
        config.seed,
        config.descriptor.clone(),
    ))
}

/// Indices retained by Matérn-I thinning at `delta`, in increasing order.
///
/// Neighbor queries run on a uniform spatial hash with cell size `delta`.
pub fn matern_retained_indices(
    config: &MarkedConfiguration,
    delta: f64,
) -> Result<Vec<usize>, ProcessError> {
    if !delta.is_finite() || delta <= 0.0 {
        return Err(ProcessError::InvalidParameter(
            "thinning distance delta must be > 0".to_string(),
        ));
    }
    let grid = SpatialHash::build(config, delta);
    let mut retained = Vec::new();
    for i in 0..config.len() {
        if grid.min_dist_exceeds(config, i, delta) {
            retained.push(i);
        }
    }
    Ok(retained)
}

/// Uniform spatial hash over a point set; cell size equals the query radius.
pub(crate) struct SpatialHash {
    cell: f64,
    map: std::collections::HashMap<Vec<i64>, Vec<usize>>,
}

impl SpatialHash {
    pub(crate) fn build(config: &MarkedConfiguration, cell: f64) -> SpatialHash {
        let mut map: std::collections::HashMap<Vec<i64>, Vec<usize>> =
            std::collections::HashMap::new();
        for i in 0..config.len() {
            let key = Self::key(config.position(i), cell);
            map.entry(key).or_default().push(i);
        }
        SpatialHash { cell, map }
    }

    fn key(x: &[f64], cell: f64) -> Vec<i64> {
        x.iter().map(|v| (v / cell).floor() as i64).collect()
    }

    /// True iff every other point is at distance >= delta from point `i`.
    fn min_dist_exceeds(&self, config: &MarkedConfiguration, i: usize, delta: f64) -> bool {
        let n = config.dim();
        let xi = config.position(i);
        let base = Self::key(xi, self.cell);
        let mut offset = vec![-1i64; n];
        loop {
            let key: Vec<i64> = base.iter().zip(&offset).map(|(b, o)| b + o).collect();
            if let Some(bucket) = self.map.get(&key) {
                for &j in bucket {
                    if j == i {
                        continue;
                    }
                    let d2: f64 = xi
                        .iter()
                        .zip(config.position(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    if d2 < delta * delta {
                        return false;
                    }
                }
            }
            // odometer over {-1,0,1}^n
            let mut k = n;
            loop {
                if k == 0 {
                    return true;
                }
                k -= 1;
                offset[k] += 1;
                if offset[k] <= 1 {
                    break;
                }
                offset[k] = -1;
            }
        }
    }
}

/// Sample on a `delta`-enlarged window, thin, and report the inner window.
///
/// Matérn retention of a point depends only on neighbors within `delta`, so
/// the margin removes the edge bias of finite windows.
pub fn sample_thinned(
    process: &ProcessSpec,
    window: &Window,
    delta: f64,
    seed: u64,
) -> Result<MarkedConfiguration, ProcessError> {
    let enlarged = window.enlarged(delta);
    let config = process.sample(&enlarged, seed)?;
    let thinned = matern_thin(&config, delta)?;
    Ok(thinned.restricted_to(window))
}
