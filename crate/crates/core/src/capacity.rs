//! Fractional capacities by constrained convex minimization.
//!
//! Condenser, relative, and global variants of the kernel capacity. A node
//! belongs to a target when its cell center lies in the set; competitors are
//! pinned to one on the target, to zero on the prescribed exterior, and
//! boxed into `[0, 1]` in between. The global capacity is obtained from a
//! condenser ladder `R, 2R, 4R` with Aitken extrapolation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{KernelSpec, KernelTable};
use crate::grid::{GridDomain, GridField};
use crate::solver::{Method, SolveError, SolverTolerances, VariationalProblem};

#[derive(Debug, Error)]
pub enum CapacityError {
    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),
    #[error("condenser ladder is not monotone: {0:?}")]
    LadderNotMonotone(Vec<(f64, f64)>),
    #[error(transparent)]
    Solver(#[from] SolveError),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
}

/// A ball described by center and radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// Geometric target of a capacity problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TargetSet {
    /// Ball of given radius centered at the origin.
    Ball { radius: f64 },
    /// Finite union of balls.
    Balls(Vec<Ball>),
    /// Axis-aligned box `[-w_k, w_k]` centered at the origin.
    Cuboid { half_widths: Vec<f64> },
}

impl TargetSet {
    pub fn ball(radius: f64) -> TargetSet {
        TargetSet::Ball { radius }
    }

    /// Is the euclidean point inside the (closed) set?
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            TargetSet::Ball { radius } => {
                x.iter().map(|v| v * v).sum::<f64>() <= radius * radius
            }
            TargetSet::Balls(balls) => balls.iter().any(|b| {
                let d2: f64 = x
                    .iter()
                    .zip(&b.center)
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum();
                d2 <= b.radius * b.radius
            }),
            TargetSet::Cuboid { half_widths } => x
                .iter()
                .zip(half_widths)
                .all(|(v, w)| v.abs() <= *w),
        }
    }

    /// Nodes whose cell center lies in the set.
    pub fn nodes(&self, grid: &GridDomain) -> Vec<usize> {
        (0..grid.n_nodes())
            .filter(|&i| self.contains(&grid.node_center(i)))
            .collect()
    }

    /// The set scaled by `factor` about the origin.
    pub fn scaled(&self, factor: f64) -> TargetSet {
        match self {
            TargetSet::Ball { radius } => TargetSet::Ball {
                radius: radius * factor,
            },
            TargetSet::Balls(balls) => TargetSet::Balls(
                balls
                    .iter()
                    .map(|b| Ball {
                        center: b.center.iter().map(|c| c * factor).collect(),
                        radius: b.radius * factor,
                    })
                    .collect(),
            ),
            TargetSet::Cuboid { half_widths } => TargetSet::Cuboid {
                half_widths: half_widths.iter().map(|w| w * factor).collect(),
            },
        }
    }

    /// Radius of the smallest origin-centered ball containing the set.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            TargetSet::Ball { radius } => *radius,
            TargetSet::Balls(balls) => balls
                .iter()
                .map(|b| {
                    let norm: f64 = b.center.iter().map(|c| c * c).sum::<f64>().sqrt();
                    norm + b.radius
                })
                .fold(0.0, f64::max),
            TargetSet::Cuboid { half_widths } => {
                half_widths.iter().map(|w| w * w).sum::<f64>().sqrt()
            }
        }
    }
}

/// Capacity value with its minimizing potential and solver certificate.
#[derive(Debug, Clone)]
pub struct CapacityResult {
    pub value: f64,
    pub potential: GridField,
    pub iterations: usize,
    pub kkt_residual: f64,
}

fn grid_extent(grid: &GridDomain) -> f64 {
    (0..grid.dim())
        .map(|k| {
            let lo = grid.cell_lo(0)[k];
            let hi = lo + grid.dims()[k] as f64 * grid.spacing();
            lo.abs().min(hi.abs())
        })
        .fold(f64::INFINITY, f64::min)
}

/// Condenser capacity `C_K(T, B_R)`: full-grid energy with `u = 1` on the
/// target and `u = 0` outside the closed ball of radius `r_outer`.
pub fn condenser_capacity(
    target: &TargetSet,
    r_outer: f64,
    kernel: &KernelSpec,
    grid: &GridDomain,
    table: &KernelTable,
    tol: &SolverTolerances,
) -> Result<CapacityResult, CapacityError> {
    condenser_between(
        target,
        &TargetSet::Ball { radius: r_outer },
        kernel,
        grid,
        table,
        tol,
    )
}

/// Generalized condenser: `u = 1` on `target`, `u = 0` outside `support`.
///
/// The competitor vanishes outside the support and hence outside the grid,
/// so the energy beyond the grid box reduces to the exactly integrable tail
/// `2 h^n sum_i |u_i|^p T_i`, which is added to the discrete pair sum. This
/// makes condenser values independent of the grid extent beyond the support.
pub fn condenser_between(
    target: &TargetSet,
    support: &TargetSet,
    kernel: &KernelSpec,
    grid: &GridDomain,
    table: &KernelTable,
    tol: &SolverTolerances,
) -> Result<CapacityResult, CapacityError> {
    let t_nodes = target.nodes(grid);
    if t_nodes.is_empty() {
        return Ok(CapacityResult {
            value: 0.0,
            potential: GridField::zeros(grid),
            iterations: 0,
            kkt_residual: 0.0,
        });
    }
    let n_nodes = grid.n_nodes();
    let mut pins: Vec<Option<f64>> = vec![None; n_nodes];
    for (i, pin) in pins.iter_mut().enumerate() {
        if !support.contains(&grid.node_center(i)) {
            *pin = Some(0.0);
        }
    }
    for &i in &t_nodes {
        if pins[i].is_some() {
            return Err(CapacityError::InfeasibleGeometry(
                "target leaves the support region".into(),
            ));
        }
        pins[i] = Some(1.0);
    }
    let tail: Vec<f64> = crate::energy::exterior_tail_weights(grid, kernel)
        .into_iter()
        .map(|t| 2.0 * t)
        .collect();
    let problem = VariationalProblem {
        grid,
        kernel,
        table,
        scope: None,
        pins,
        box_bounds: Some((0.0, 1.0)),
        zero_order: tail.clone(),
        source: vec![0.0; n_nodes],
    };
    let out = problem.solve(tol, Method::Auto)?;
    Ok(finish(out))
}

/// Relative capacity `cap_K(T, B_R; r)`: energy counted only among nodes of
/// `B_R`, competitor supported in the closed ball of radius `r_inner`.
pub fn relative_capacity(
    target: &TargetSet,
    r_inner: f64,
    r_outer: f64,
    kernel: &KernelSpec,
    grid: &GridDomain,
    table: &KernelTable,
    tol: &SolverTolerances,
) -> Result<CapacityResult, CapacityError> {
    if r_inner >= r_outer || !r_inner.is_finite() {
        return Err(CapacityError::InfeasibleGeometry(format!(
            "need r < R, got r = {r_inner}, R = {r_outer}"
        )));
    }
    if grid_extent(grid) < r_outer {
        return Err(CapacityError::InfeasibleGeometry(
            "grid does not cover the outer ball".into(),
        ));
    }
    let t_nodes = target.nodes(grid);
    if t_nodes.is_empty() {
        return Ok(CapacityResult {
            value: 0.0,
            potential: GridField::zeros(grid),
            iterations: 0,
            kkt_residual: 0.0,
        });
    }
    let n_nodes = grid.n_nodes();
    let scope: Vec<usize> = grid.nodes_in_ball(&vec![0.0; grid.dim()], r_outer);
    let mut pins: Vec<Option<f64>> = vec![None; n_nodes];
    let inner = TargetSet::Ball { radius: r_inner };
    for (i, pin) in pins.iter_mut().enumerate() {
        if !inner.contains(&grid.node_center(i)) {
            *pin = Some(0.0);
        }
    }
    for &i in &t_nodes {
        if pins[i].is_some() {
            return Err(CapacityError::InfeasibleGeometry(
                "target leaves the inner support ball".into(),
            ));
        }
        pins[i] = Some(1.0);
    }
    let problem = VariationalProblem {
        grid,
        kernel,
        table,
        scope: Some(scope.clone()),
        pins,
        box_bounds: Some((0.0, 1.0)),
        zero_order: vec![0.0; n_nodes],
        source: vec![0.0; n_nodes],
    };
    let out = problem.solve(tol, Method::Auto)?;
    Ok(finish(out))
}

/// The objective of a capacity problem (no source term) is exactly the
/// capacity value: scope-pair energy plus, for condensers, the exterior
/// tail carried by the zero-order weights.
fn finish(out: crate::solver::SolveOutcome) -> CapacityResult {
    let mut potential = out.field;
    for v in potential.values.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    CapacityResult {
        value: out.objective.max(0.0),
        potential,
        iterations: out.iterations,
        kkt_residual: out.kkt_residual,
    }
}

/// Grid construction policy for the global-capacity ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridPolicy {
    pub h: f64,
    /// Condenser radii; `None` uses `{R0, 2 R0, 4 R0}` with
    /// `R0 = 8 * diam(T)`.
    pub ladder: Option<Vec<f64>>,
    /// Extra grid extent beyond the largest radius, as a fraction of it.
    pub margin_fraction: f64,
    pub tol: SolverTolerances,
}

impl GridPolicy {
    pub fn with_spacing(h: f64) -> GridPolicy {
        GridPolicy {
            h,
            ladder: None,
            margin_fraction: 0.25,
            tol: SolverTolerances::default(),
        }
    }

    pub fn ladder_for(&self, target: &TargetSet) -> Vec<f64> {
        match &self.ladder {
            Some(l) => l.clone(),
            None => {
                let r0 = 8.0 * 2.0 * target.bounding_radius();
                vec![r0, 2.0 * r0, 4.0 * r0]
            }
        }
    }
}

/// One rung of the global-capacity ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LadderRung {
    pub radius: f64,
    pub value: f64,
    pub kkt: f64,
    pub iterations: usize,
}

/// Global capacity estimate: condenser values along the radius ladder plus
/// the Aitken-extrapolated limit.
#[derive(Debug, Clone)]
pub struct GlobalCapacity {
    pub value: f64,
    pub ladder: Vec<LadderRung>,
}

/// `cap_K(T)` as the extrapolated limit of `C_K(T, B_R)` over an increasing
/// radius ladder solved on one common grid.
pub fn global_capacity(
    target: &TargetSet,
    kernel: &KernelSpec,
    policy: &GridPolicy,
) -> Result<GlobalCapacity, CapacityError> {
    let ladder_radii = policy.ladder_for(target);
    if ladder_radii.len() < 2 {
        return Err(CapacityError::InfeasibleGeometry(
            "ladder needs at least two radii".into(),
        ));
    }
    let max_r = ladder_radii.iter().fold(0.0f64, |a, &b| a.max(b));
    let extent = max_r * (1.0 + policy.margin_fraction);
    let grid = GridDomain::symmetric(kernel.params.n, extent, policy.h)?;
    let table = KernelTable::build(&grid, kernel);

    let mut ladder = Vec::new();
    for &r in &ladder_radii {
        let res = condenser_capacity(target, r, kernel, &grid, &table, &policy.tol)?;
        ladder.push(LadderRung {
            radius: r,
            value: res.value,
            kkt: res.kkt_residual,
            iterations: res.iterations,
        });
    }
    // condenser values must not increase with R
    for w in ladder.windows(2) {
        let slack = 1e-9 * (1.0 + w[0].value.abs());
        if w[1].value > w[0].value + slack {
            return Err(CapacityError::LadderNotMonotone(
                ladder.iter().map(|l| (l.radius, l.value)).collect(),
            ));
        }
    }
    let value = aitken(&ladder);
    Ok(GlobalCapacity { value, ladder })
}

/// Aitken delta-squared extrapolation of the last three ladder values;
/// falls back to the last value when the increments degenerate.
fn aitken(ladder: &[LadderRung]) -> f64 {
    if ladder.len() < 3 {
        return ladder.last().map(|l| l.value).unwrap_or(0.0);
    }
    let k = ladder.len();
    let (a1, a2, a3) = (ladder[k - 3].value, ladder[k - 2].value, ladder[k - 1].value);
    let den = (a3 - a2) - (a2 - a1);
    if den.abs() < 1e-14 * (1.0 + a3.abs()) {
        return a3;
    }
    let extrapolated = a3 - (a3 - a2) * (a3 - a2) / den;
    // extrapolation beyond the bracketing monotone sequence is distrusted
    if !extrapolated.is_finite() || extrapolated < 0.0 || extrapolated > a3 + (a2 - a3).abs() {
        return a3;
    }
    extrapolated
}

/// Diagnostics bundle of [`capacity_diagnostics`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityDiagnostics {
    /// `(rho, |cap(rho T) - rho^{n-sp} cap(T)| / cap(T))` for `rho` in
    /// `{1/2, 2}`.
    pub scaling_residuals: Vec<(f64, f64)>,
    /// `cap_K(T) / cap_std(T)`; equals one for the standard kernel and is
    /// bounded by the comparability constant in general.
    pub comparability_ratio: f64,
    /// `(r, R, gap, bound_rhs)`: the gap `cap_K(T) - cap_K(T, B_R; r)` and
    /// the right side `r^{sp}/(R-r)^{sp} * C_K(B_rho, B_r)`.
    pub truncation_gaps: Vec<(f64, f64, f64, f64)>,
}

/// Scaling, comparability, and truncation-gap diagnostics for a target.
///
/// `gap_pairs` lists the `(r, R)` combinations probed; the gap is expected
/// to shrink as `R - r` grows.
pub fn capacity_diagnostics(
    target: &TargetSet,
    kernel: &KernelSpec,
    policy: &GridPolicy,
    gap_pairs: &[(f64, f64)],
) -> Result<CapacityDiagnostics, CapacityError> {
    let base = global_capacity(target, kernel, policy)?;
    if base.value <= 0.0 {
        return Err(CapacityError::InfeasibleGeometry(
            "diagnostics need a target of positive capacity".into(),
        ));
    }
    let exponent = kernel.params.cap_exponent();

    let mut scaling_residuals = Vec::new();
    for &rho in &[0.5, 2.0] {
        let scaled = global_capacity(&target.scaled(rho), kernel, policy)?;
        let predicted = rho.powf(exponent) * base.value;
        scaling_residuals.push((rho, (scaled.value - predicted).abs() / base.value));
    }

    let comparability_ratio = match kernel.variant {
        crate::energy::KernelVariant::Standard => 1.0,
        _ => {
            let std_kernel = KernelSpec::standard(kernel.params);
            let std_cap = global_capacity(target, &std_kernel, policy)?;
            base.value / std_cap.value
        }
    };

    let sp = kernel.params.sp();
    let rho_t = target.bounding_radius();
    let mut truncation_gaps = Vec::new();
    for &(r, big_r) in gap_pairs {
        let extent = big_r * (1.0 + policy.margin_fraction);
        let grid = GridDomain::symmetric(kernel.params.n, extent, policy.h)?;
        let table = KernelTable::build(&grid, kernel);
        let rel = relative_capacity(target, r, big_r, kernel, &grid, &table, &policy.tol)?;
        let gap = base.value - rel.value;
        let reference =
            condenser_capacity(&TargetSet::Ball { radius: rho_t }, r, kernel, &grid, &table, &policy.tol)?;
        let bound_rhs = r.powf(sp) / (big_r - r).powf(sp) * reference.value;
        truncation_gaps.push((r, big_r, gap, bound_rhs));
    }

    Ok(CapacityDiagnostics {
        scaling_residuals,
        comparability_ratio,
        truncation_gaps,
    })
}

/// CSV row of a solved capacity problem
/// (`problem_id,geometry,R,r,h,value,kkt,iters`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityRecord {
    pub problem_id: String,
    pub geometry: String,
    pub r_outer: f64,
    pub r_inner: f64,
    pub h: f64,
    pub value: f64,
    pub kkt: f64,
    pub iters: usize,
}

impl CapacityRecord {
    pub const CSV_HEADER: &'static str = "problem_id,geometry,R,r,h,value,kkt,iters";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.16e},{:.3e},{}",
            self.problem_id,
            self.geometry,
            self.r_outer,
            self.r_inner,
            self.h,
            self.value,
            self.kkt,
            self.iters
        )
    }
}
