//! Pinned Dirichlet problems, the effective problem with the capacitary
//! zero-order term, and end-to-end convergence studies.
//!
//! The `eps`-level problem minimizes the discrete kernel energy over the
//! domain plus a zero-valued exterior collar, with `u = 0` on every node
//! whose cell meets the obstacle set and on the collar, minus the linear
//! source term. The effective problem replaces the pinning by
//! `gamma h^n sum |u_i|^p`. Both are solved on the same grid so their
//! solutions compare node by node.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capacity::{condenser_between, global_capacity, GridPolicy, TargetSet};
use crate::energy::{KernelSpec, KernelTable};
use crate::ergodic::{gamma_estimate, GammaEstimate};
use crate::grid::{cell_intersects_ball, GridDomain, GridField, NodeClass};
use crate::obstacle::{
    build_obstacles, build_shaped_obstacles, cardinality_report, check_safety_layer,
    classify_indices, lq_norm, IndexClassification, ObstacleSet, ShapeTemplate,
    ShapedObstacleSet,
};
use crate::params::ScalingParams;
use crate::point_process::{ProcessSpec, Window};
use crate::seed::child_seed;
use crate::solver::{Method, SolverTolerances, VariationalProblem};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("obstacles under-resolved: spacing {h:.3e} exceeds smallest radius {min_radius:.3e}")]
    UnderResolvedObstacles { h: f64, min_radius: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Solver(#[from] crate::solver::SolveError),
    #[error(transparent)]
    Capacity(#[from] crate::capacity::CapacityError),
    #[error(transparent)]
    Obstacle(#[from] crate::obstacle::ObstacleError),
    #[error(transparent)]
    Ergodic(#[from] crate::ergodic::ErgodicError),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error(transparent)]
    Process(#[from] crate::point_process::ProcessError),
}

/// Obstacles to pin: plain balls or shaped templates.
pub enum ObstacleInput<'a> {
    Balls(&'a ObstacleSet),
    Shaped(&'a ShapedObstacleSet),
}

impl ObstacleInput<'_> {
    fn min_radius(&self) -> Option<f64> {
        match self {
            ObstacleInput::Balls(set) => set.min_radius(),
            // shapes live inside the enclosing obstacle balls
            ObstacleInput::Shaped(s) => s.base.min_radius(),
        }
    }

    /// Mark obstacle nodes on the grid: cells intersecting the obstacle set.
    fn pin_on(&self, grid: &mut GridDomain) {
        match self {
            ObstacleInput::Balls(set) => grid.pin_obstacle_balls(&set.balls()),
            ObstacleInput::Shaped(s) => {
                let shapes = s.scaled_shapes();
                let h = grid.spacing();
                let mut mask = grid.mask().to_vec();
                for (i, class) in mask.iter_mut().enumerate() {
                    if *class != NodeClass::Interior {
                        continue;
                    }
                    let lo = grid.cell_lo(i);
                    let hit = shapes.iter().any(|(center, scale, template)| {
                        shape_intersects_cell(center, *scale, template, &lo, h)
                    });
                    if hit {
                        *class = NodeClass::Obstacle;
                    }
                }
                grid.set_mask(mask).expect("same length");
            }
        }
    }
}

fn shape_intersects_cell(
    center: &[f64],
    scale: f64,
    template: &ShapeTemplate,
    cell_lo: &[f64],
    h: f64,
) -> bool {
    match template {
        ShapeTemplate::Ball { radius } => {
            cell_intersects_ball(cell_lo, h, center, scale * radius)
        }
        ShapeTemplate::Cuboid { half_widths } => center
            .iter()
            .zip(half_widths)
            .zip(cell_lo)
            .all(|((c, w), lo)| c + scale * w >= *lo && c - scale * w <= lo + h),
        ShapeTemplate::BallUnion { balls } => balls.iter().any(|(bc, br)| {
            let abs_center: Vec<f64> = center
                .iter()
                .zip(bc)
                .map(|(c, o)| c + scale * o)
                .collect();
            cell_intersects_ball(cell_lo, h, &abs_center, scale * br)
        }),
    }
}

/// Grid over `U` plus a zero collar, with at most `max_nodes` nodes.
pub fn harness_grid(
    domain: &Window,
    collar: f64,
    max_nodes: usize,
) -> Result<GridDomain, HarnessError> {
    if collar < 0.0 {
        return Err(HarnessError::InvalidParameter("collar must be >= 0".into()));
    }
    let n = domain.dim();
    let lo: Vec<f64> = domain.lo.iter().map(|l| l - collar).collect();
    let hi: Vec<f64> = domain.hi.iter().map(|u| u + collar).collect();
    let volume: f64 = lo.iter().zip(&hi).map(|(l, u)| u - l).product();
    let h = (volume / max_nodes as f64).powf(1.0 / n as f64);
    let mut grid = GridDomain::covering(&lo, &hi, h)?;
    if grid.n_nodes() > max_nodes {
        // round-up pushed past the budget: enlarge h slightly
        let h2 = h * (grid.n_nodes() as f64 / max_nodes as f64).powf(1.0 / n as f64) * 1.001;
        grid = GridDomain::covering(&lo, &hi, h2)?;
    }
    grid.classify_by_window(domain);
    Ok(grid)
}

/// Solution of a pinned problem with resolution bookkeeping.
#[derive(Debug, Clone)]
pub struct EpsSolution {
    pub field: GridField,
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Spacing exceeded half the smallest obstacle radius.
    pub under_resolved_warning: bool,
    pub pinned_obstacle_nodes: usize,
}

/// Minimize the pinned functional: zero on obstacle cells and on the
/// exterior collar, source restricted to `U` nodes.
pub fn solve_eps_problem(
    obstacles: &ObstacleInput<'_>,
    f: &GridField,
    grid: &GridDomain,
    kernel: &KernelSpec,
    table: &KernelTable,
    tol: &SolverTolerances,
) -> Result<EpsSolution, HarnessError> {
    f.check_grid(grid).map_err(HarnessError::Grid)?;
    let h = grid.spacing();
    let mut warn = false;
    if let Some(min_radius) = obstacles.min_radius() {
        if h > min_radius {
            return Err(HarnessError::UnderResolvedObstacles { h, min_radius });
        }
        warn = h > min_radius / 2.0;
    }
    let mut pinned_grid = grid.clone();
    obstacles.pin_on(&mut pinned_grid);
    let n_nodes = pinned_grid.n_nodes();
    let mut pins: Vec<Option<f64>> = vec![None; n_nodes];
    let mut pinned_obstacle_nodes = 0;
    let mut source = vec![0.0; n_nodes];
    for i in 0..n_nodes {
        match pinned_grid.node_class(i) {
            NodeClass::Exterior => pins[i] = Some(0.0),
            NodeClass::Obstacle => {
                pins[i] = Some(0.0);
                pinned_obstacle_nodes += 1;
            }
            NodeClass::Interior => source[i] = f.values[i],
        }
    }
    let problem = VariationalProblem {
        grid,
        kernel,
        table,
        scope: None,
        pins,
        box_bounds: None,
        zero_order: vec![0.0; n_nodes],
        source,
    };
    let out = problem.solve(tol, Method::Auto)?;
    Ok(EpsSolution {
        field: out.field,
        objective: out.objective,
        iterations: out.iterations,
        kkt_residual: out.kkt_residual,
        under_resolved_warning: warn,
        pinned_obstacle_nodes,
    })
}

/// Minimize the effective functional with zero-order coefficient `gamma`.
pub fn solve_effective_problem(
    gamma: f64,
    f: &GridField,
    grid: &GridDomain,
    kernel: &KernelSpec,
    table: &KernelTable,
    tol: &SolverTolerances,
) -> Result<crate::solver::SolveOutcome, HarnessError> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(HarnessError::InvalidParameter("gamma must be >= 0".into()));
    }
    f.check_grid(grid).map_err(HarnessError::Grid)?;
    let n_nodes = grid.n_nodes();
    let mut pins: Vec<Option<f64>> = vec![None; n_nodes];
    let mut zero_order = vec![0.0; n_nodes];
    let mut source = vec![0.0; n_nodes];
    for i in 0..n_nodes {
        if grid.node_class(i) == NodeClass::Exterior {
            pins[i] = Some(0.0);
        } else {
            zero_order[i] = gamma;
            source[i] = f.values[i];
        }
    }
    let problem = VariationalProblem {
        grid,
        kernel,
        table,
        scope: None,
        pins,
        box_bounds: None,
        zero_order,
        source,
    };
    Ok(problem.solve(tol, Method::Auto)?)
}

/// Subadditive bound and optional direct solve for the capacity of the
/// not-very-good obstacles inside their doubled safety layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NvgCheck {
    /// `C(B_1, B_2) * eps^n sum_{i in NVG} rho_i^{n-sp}`.
    pub bound: f64,
    /// Condenser value of the union inside the doubled union, when the
    /// instance is resolvable within the node budget.
    pub direct: Option<f64>,
}

/// Capacity check of the not-very-good obstacles. `cap_b1_b2` is the
/// reference condenser value `C(B_1, B_2)` for the same `(n, s, p)`.
///
/// The direct condenser is solved only when every NVG ball spans at least
/// two cells of the probe grid and the pinned set fits the node budget;
/// under-resolved pins would not represent the continuum capacity.
pub fn nvg_capacity_check(
    obstacles: &ObstacleSet,
    cls: &IndexClassification,
    kernel: &KernelSpec,
    cap_b1_b2: f64,
    probe_h: f64,
    node_budget: usize,
) -> Result<NvgCheck, HarnessError> {
    let exponent = obstacles.params.cap_exponent();
    let nvg_set: std::collections::HashSet<usize> =
        cls.not_very_good.iter().copied().collect();
    let nvg: Vec<&crate::obstacle::Obstacle> = obstacles
        .obstacles
        .iter()
        .filter(|o| nvg_set.contains(&o.index))
        .collect();
    let eps_n = obstacles.eps.powi(obstacles.params.n as i32);
    let bound =
        cap_b1_b2 * eps_n * nvg.iter().map(|o| o.mark.powf(exponent)).sum::<f64>();
    if nvg.is_empty() {
        return Ok(NvgCheck {
            bound: 0.0,
            direct: Some(0.0),
        });
    }

    let min_radius = nvg
        .iter()
        .map(|o| o.radius)
        .fold(f64::INFINITY, f64::min);
    if min_radius < 2.0 * probe_h {
        return Ok(NvgCheck {
            bound,
            direct: None,
        });
    }
    // grid around the doubled balls, recentered for the capacity machinery
    let n = obstacles.params.n;
    let mut centroid = vec![0.0; n];
    for o in &nvg {
        for (c, oc) in centroid.iter_mut().zip(&o.center) {
            *c += oc / nvg.len() as f64;
        }
    }
    let shifted = |o: &crate::obstacle::Obstacle| -> Vec<f64> {
        o.center
            .iter()
            .zip(&centroid)
            .map(|(c, m)| c - m)
            .collect()
    };
    let targets = TargetSet::Balls(
        nvg.iter()
            .map(|o| crate::capacity::Ball {
                center: shifted(o),
                radius: o.radius,
            })
            .collect(),
    );
    let support = TargetSet::Balls(
        nvg.iter()
            .map(|o| crate::capacity::Ball {
                center: shifted(o),
                radius: 2.0 * o.radius,
            })
            .collect(),
    );
    let extent = support.bounding_radius() * 1.5 + 2.0 * probe_h;
    let grid = GridDomain::symmetric(n, extent, probe_h)?;
    if grid.n_nodes() > node_budget {
        return Ok(NvgCheck {
            bound,
            direct: None,
        });
    }
    let table = KernelTable::build(&grid, kernel);
    let tol = SolverTolerances::default();
    let direct = condenser_between(&targets, &support, kernel, &grid, &table, &tol)?;
    Ok(NvgCheck {
        bound,
        direct: Some(direct.value),
    })
}

/// Parameters of a convergence study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyConfig {
    pub process: ProcessSpec,
    pub params: ScalingParams,
    pub domain: Window,
    /// Constant source value on `U`.
    pub f_const: f64,
    pub eps_ladder: Vec<f64>,
    pub replicas: usize,
    pub base_seed: u64,
    /// Truncation threshold of the index classification.
    pub truncation: u32,
    /// Zero-collar width in domain units.
    pub collar: f64,
    pub max_nodes: usize,
    /// Spacing of the unit-ball capacity reference ladder.
    pub cap_h: f64,
    pub tol: SolverTolerances,
    /// Obstacle shape template (plain balls when absent).
    pub template: Option<ShapeTemplate>,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.eps_ladder.is_empty()
            || self.eps_ladder.windows(2).any(|w| w[1] >= w[0])
            || self.eps_ladder.iter().any(|e| !e.is_finite() || *e <= 0.0)
        {
            return Err(HarnessError::InvalidParameter(
                "eps ladder must be positive and strictly decreasing".into(),
            ));
        }
        if self.replicas == 0 {
            return Err(HarnessError::InvalidParameter("need replicas >= 1".into()));
        }
        if self.truncation == 0 {
            return Err(HarnessError::InvalidParameter("need R >= 1".into()));
        }
        if self.domain.dim() != self.params.n {
            return Err(HarnessError::InvalidParameter(
                "domain dimension differs from params".into(),
            ));
        }
        Ok(())
    }
}

/// One `(eps, seed)` run of a study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub eps: f64,
    pub seed: u64,
    pub n_obstacles: usize,
    pub excluded: bool,
    pub under_resolved_warning: bool,
    pub lp_dist: Option<f64>,
    pub energy_eps: Option<f64>,
    pub energy_gap: Option<f64>,
    pub cardinality: [f64; 4],
    pub lq_norm: f64,
    pub safety_layer_ok: bool,
    pub nvg_bound: f64,
}

/// Aggregate row per `eps` level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudySummary {
    pub eps: f64,
    pub median_lp_dist: f64,
    pub median_energy_gap: f64,
    pub gamma_hat: f64,
    pub runs: usize,
}

impl StudySummary {
    pub const CSV_HEADER: &'static str =
        "eps,median_lp_dist,median_energy_gap,gamma_hat,runs";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{}",
            self.eps, self.median_lp_dist, self.median_energy_gap, self.gamma_hat, self.runs
        )
    }
}

/// Full record of a convergence study.
#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub gamma: GammaEstimate,
    /// Capacity of the shape actually pinned (unit ball without templates).
    pub shape_capacity: f64,
    pub cap_unit_ball: f64,
    pub effective_solution: GridField,
    pub runs: Vec<RunRecord>,
    pub summary: Vec<StudySummary>,
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// Capacity of a shape template: exact homogeneity for ball templates,
/// numeric ladder otherwise.
pub fn template_capacity(
    template: &ShapeTemplate,
    cap_unit_ball: f64,
    params: &ScalingParams,
    policy: &GridPolicy,
    kernel: &KernelSpec,
) -> Result<f64, HarnessError> {
    match template {
        ShapeTemplate::Ball { radius } => {
            Ok(cap_unit_ball * radius.powf(params.cap_exponent()))
        }
        ShapeTemplate::Cuboid { half_widths } => {
            let cap = global_capacity(
                &TargetSet::Cuboid {
                    half_widths: half_widths.clone(),
                },
                kernel,
                policy,
            )?;
            Ok(cap.value)
        }
        ShapeTemplate::BallUnion { balls } => {
            let cap = global_capacity(
                &TargetSet::Balls(
                    balls
                        .iter()
                        .map(|(c, r)| crate::capacity::Ball {
                            center: c.clone(),
                            radius: *r,
                        })
                        .collect(),
                ),
                kernel,
                policy,
            )?;
            Ok(cap.value)
        }
    }
}

/// Run the full study: sample, build, classify, solve the pinned problems,
/// solve the effective problem once, and aggregate per-`eps` medians.
///
/// Runs whose obstacles the grid cannot resolve are flagged and excluded
/// from the aggregates.
pub fn convergence_study(cfg: &StudyConfig) -> Result<ConvergenceStudy, HarnessError> {
    cfg.validate()?;
    let kernel = KernelSpec::standard(cfg.params);
    let grid = harness_grid(&cfg.domain, cfg.collar, cfg.max_nodes)?;
    let table = KernelTable::build(&grid, &kernel);
    let f = GridField::from_fn(&grid, |_| cfg.f_const);

    // capacitary constant: unit-ball capacity once, then the mark moment
    let policy = GridPolicy::with_spacing(cfg.cap_h);
    let cap_unit_ball = global_capacity(&TargetSet::ball(1.0), &kernel, &policy)?.value;
    let shape_capacity = match &cfg.template {
        None => cap_unit_ball,
        Some(t) => template_capacity(t, cap_unit_ball, &cfg.params, &policy, &kernel)?,
    };
    let gamma = gamma_estimate(
        &cfg.process,
        &cfg.params,
        shape_capacity,
        (cfg.replicas * cfg.eps_ladder.len()).max(100),
        child_seed(cfg.base_seed, 0xC0FFEE),
    )?;

    let u0 = solve_effective_problem(gamma.value, &f, &grid, &kernel, &table, &cfg.tol)?;

    // reference condenser constant for the NVG bound
    let ref_grid = GridDomain::symmetric(cfg.params.n, 3.0, 3.0 / 24.0)?;
    let ref_table = KernelTable::build(&ref_grid, &kernel);
    let cap_b1_b2 = condenser_between(
        &TargetSet::ball(1.0),
        &TargetSet::ball(2.0),
        &kernel,
        &ref_grid,
        &ref_table,
        &cfg.tol,
    )?
    .value;

    let u_nodes = grid.u_nodes();
    let mut runs = Vec::new();
    let mut summary = Vec::new();
    for (ei, &eps) in cfg.eps_ladder.iter().enumerate() {
        let margin = 2.0 / cfg.truncation as f64;
        let sample_window = cfg.domain.scaled(1.0 / eps).enlarged(margin);
        let mut dists = Vec::new();
        let mut gaps = Vec::new();
        for k in 0..cfg.replicas {
            let seed = child_seed(cfg.base_seed, (ei * cfg.replicas + k) as u64);
            let config = cfg.process.sample(&sample_window, seed)?;
            let obstacles = build_obstacles(&config, &cfg.params, eps, &cfg.domain)?;
            let cls = classify_indices(&obstacles, &config, cfg.truncation, None)?;
            let cardinality = cardinality_report(&cls, eps);
            let lq = lq_norm(&obstacles, cfg.params.n as f64)
                .unwrap_or(f64::NAN);
            let safety_layer_ok = check_safety_layer(&cls, &obstacles);
            let exponent = cfg.params.cap_exponent();
            let nvg_set: std::collections::HashSet<usize> =
                cls.not_very_good.iter().copied().collect();
            let nvg_bound = cap_b1_b2
                * eps.powi(cfg.params.n as i32)
                * obstacles
                    .obstacles
                    .iter()
                    .filter(|o| nvg_set.contains(&o.index))
                    .map(|o| o.mark.powf(exponent))
                    .sum::<f64>();

            let shaped;
            let input = match &cfg.template {
                None => ObstacleInput::Balls(&obstacles),
                Some(t) => {
                    shaped = build_shaped_obstacles(
                        &obstacles,
                        std::slice::from_ref(t),
                        |_| 0,
                        |tpl| {
                            template_capacity(tpl, cap_unit_ball, &cfg.params, &policy, &kernel)
                                .map_err(|e| e.to_string())
                        },
                    )?;
                    ObstacleInput::Shaped(&shaped)
                }
            };

            match solve_eps_problem(&input, &f, &grid, &kernel, &table, &cfg.tol) {
                Ok(sol) => {
                    let diff = GridField {
                        values: sol
                            .field
                            .values
                            .iter()
                            .zip(&u0.field.values)
                            .map(|(a, b)| a - b)
                            .collect(),
                    };
                    let dist = diff.lp_norm(&grid, &u_nodes, cfg.params.p);
                    let gap = sol.objective - u0.objective;
                    dists.push(dist);
                    gaps.push(gap);
                    runs.push(RunRecord {
                        eps,
                        seed,
                        n_obstacles: obstacles.len(),
                        excluded: false,
                        under_resolved_warning: sol.under_resolved_warning,
                        lp_dist: Some(dist),
                        energy_eps: Some(sol.objective),
                        energy_gap: Some(gap),
                        cardinality,
                        lq_norm: lq,
                        safety_layer_ok,
                        nvg_bound,
                    });
                }
                Err(HarnessError::UnderResolvedObstacles { .. }) => {
                    runs.push(RunRecord {
                        eps,
                        seed,
                        n_obstacles: obstacles.len(),
                        excluded: true,
                        under_resolved_warning: true,
                        lp_dist: None,
                        energy_eps: None,
                        energy_gap: None,
                        cardinality,
                        lq_norm: lq,
                        safety_layer_ok,
                        nvg_bound,
                    });
                }
                Err(other) => return Err(other),
            }
        }
        summary.push(StudySummary {
            eps,
            median_lp_dist: median(&mut dists),
            median_energy_gap: median(&mut gaps),
            gamma_hat: gamma.value,
            runs: cfg.replicas
                - runs
                    .iter()
                    .filter(|r| r.eps == eps && r.excluded)
                    .count(),
        });
    }

    Ok(ConvergenceStudy {
        gamma,
        shape_capacity,
        cap_unit_ball,
        effective_solution: u0.field,
        runs,
        summary,
    })
}


#[cfg(test)]
mod smoke_2d {
    use super::*;
    use crate::point_process::MarkDistribution;

    #[test]
    fn planar_pinned_and_effective_solve() {
        let p = ScalingParams::new(2, 0.4, 2.0).unwrap();
        let kernel = KernelSpec::standard(p);
        let u = Window::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let grid = harness_grid(&u, 0.5, 1024).unwrap();
        let table = KernelTable::build(&grid, &kernel);
        let f = GridField::constant(&grid, 1.0);
        let tol = SolverTolerances::default();

        let eff = solve_effective_problem(3.0, &f, &grid, &kernel, &table, &tol).unwrap();
        assert!(eff.kkt_residual < 1e-8 * (1.0 + eff.objective.abs()));
        let interior = grid.nodes_with_class(NodeClass::Interior);
        assert!(interior.iter().any(|&i| eff.field.values[i] > 0.0));

        // one resolvable obstacle near the center
        let eps = 0.25;
        let lambda = p.lambda_eps(eps).unwrap();
        let mark = 4.0 * grid.spacing() / lambda;
        let config = crate::point_process::MarkedConfiguration::from_table(
            &format!("n 2 seed 0\n{:.16e} {:.16e} {:.16e}\n", 2.0, 2.0, mark),
            u.scaled(4.0).enlarged(1.0),
            ProcessSpec::Poisson {
                intensity: 1.0,
                marks: MarkDistribution::Constant { rho0: mark },
            },
        )
        .unwrap();
        let obstacles = build_obstacles(&config, &p, eps, &u).unwrap();
        let sol = solve_eps_problem(
            &ObstacleInput::Balls(&obstacles),
            &f,
            &grid,
            &kernel,
            &table,
            &tol,
        )
        .unwrap();
        assert!(sol.pinned_obstacle_nodes > 0);
        assert!(!sol.under_resolved_warning);
        // pinning depresses the solution against the unpinned effective one
        let unpinned = solve_effective_problem(0.0, &f, &grid, &kernel, &table, &tol).unwrap();
        let sum_pinned: f64 = interior.iter().map(|&i| sol.field.values[i]).sum();
        let sum_free: f64 = interior.iter().map(|&i| unpinned.field.values[i]).sum();
        assert!(sum_pinned < sum_free);
    }

    #[test]
    fn smaller_templates_pin_fewer_nodes() {
        let p = ScalingParams::new(1, 0.25, 2.0).unwrap();
        let u = Window::new(vec![0.0], vec![1.0]).unwrap();
        let grid = harness_grid(&u, 0.5, 2048).unwrap();
        let eps = 0.25;
        let lambda = p.lambda_eps(eps).unwrap();
        let mark = 16.0 * grid.spacing() / lambda;
        let config = crate::point_process::MarkedConfiguration::from_table(
            &format!("n 1 seed 0\n{:.16e} {:.16e}\n", 2.0, mark),
            u.scaled(4.0).enlarged(1.0),
            ProcessSpec::Poisson {
                intensity: 1.0,
                marks: MarkDistribution::Constant { rho0: mark },
            },
        )
        .unwrap();
        let obstacles = build_obstacles(&config, &p, eps, &u).unwrap();
        let count_pins = |input: &ObstacleInput<'_>| {
            let mut g = grid.clone();
            input.pin_on(&mut g);
            g.nodes_with_class(NodeClass::Obstacle).len()
        };
        let full = count_pins(&ObstacleInput::Balls(&obstacles));
        let half = build_shaped_obstacles(
            &obstacles,
            &[ShapeTemplate::Ball { radius: 0.5 }],
            |_| 0,
            |_| Ok(1.0),
        )
        .unwrap();
        let half_count = count_pins(&ObstacleInput::Shaped(&half));
        assert!(half_count > 0);
        assert!(half_count < full, "half-radius {half_count} vs full {full}");
    }
}
