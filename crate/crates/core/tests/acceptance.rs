//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line with the measured numbers.
//!
//! Seeds are fixed a priori (base 42 with the child-seed recurrence) and
//! never tuned; trend criteria state their inversion allowances explicitly.

use fraclab_core::capacity::{
    condenser_between, condenser_capacity, global_capacity, relative_capacity, GridPolicy,
    TargetSet,
};
use fraclab_core::energy::{
    energy, energy_gradient, locality_defect, tail_mass, KernelSpec, KernelTable,
};
use fraclab_core::ergodic::{gamma_estimate, rescaled_sum_trace, retention_curve};
use fraclab_core::grid::{GridDomain, GridField};
use fraclab_core::homogenize::{convergence_study, StudyConfig};
use fraclab_core::obstacle::{
    build_obstacles, cardinality_report, check_safety_layer, classify_indices, ShapeTemplate,
};
use fraclab_core::params::ScalingParams;
use fraclab_core::point_process::{MarkDistribution, ProcessSpec, Window};
use fraclab_core::seed::{child_seed, seeded_rng};
use fraclab_core::solver::SolverTolerances;
use rand::Rng;

/// Unit-ball capacity `cap_{s,p}(B_1)` for `n=1, s=0.25, p=2`, extrapolated
/// from the condenser ladder `{8,16,32}` at `h = 1/256`; frozen before the
/// harness was built and used as a regression constant.
const CAP_B1_REF: f64 = 1.363072358212153e1;

const BASE_SEED: u64 = 42;

fn params(n: usize, s: f64, p: f64) -> ScalingParams {
    ScalingParams::new(n, s, p).unwrap()
}

fn random_field(grid: &GridDomain, seed: u64) -> GridField {
    let mut rng = seeded_rng(seed);
    GridField {
        values: (0..grid.n_nodes())
            .map(|_| rng.random::<f64>() * 2.0 - 1.0)
            .collect(),
    }
}

fn report(criterion: &str, pass: bool, started: std::time::Instant, detail: &str) {
    println!(
        "ACCEPT {criterion}: {} [{:.1}s] ({detail})",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
}

/// Inversion count of a sequence expected to decrease.
fn inversions(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] > w[0]).count()
}

#[test]
fn criterion_01_decomposition_identity() {
    let started = std::time::Instant::now();
    let grid = GridDomain::new(vec![0.0], 1.0 / 128.0, vec![128]).unwrap();
    let sp_choices = [(0.15, 2.0), (0.25, 2.0), (0.3, 3.0), (0.45, 2.0), (0.35, 2.5)];
    let mut worst: f64 = 0.0;
    for trial in 0..100u64 {
        let (s, p) = sp_choices[(trial % 5) as usize];
        let kernel = KernelSpec::standard(params(1, s, p));
        let table = KernelTable::build(&grid, &kernel);
        let u = random_field(&grid, child_seed(BASE_SEED, trial));
        let split = 16 + (trial as usize * 7) % 96;
        let a: Vec<usize> = (0..split).collect();
        let b: Vec<usize> = (split..128).collect();
        let union: Vec<usize> = (0..128).collect();
        let ea = energy(&u, &a, &kernel, &grid, &table).unwrap();
        let eb = energy(&u, &b, &kernel, &grid, &table).unwrap();
        let d = locality_defect(&u, &a, &b, &kernel, &grid, &table).unwrap();
        let eu = energy(&u, &union, &kernel, &grid, &table).unwrap();
        let rel = (eu - (ea + eb + 2.0 * d)).abs() / eu.abs();
        worst = worst.max(rel);
    }
    let pass = worst <= 1e-12;
    report(
        "c01 locality-defect decomposition",
        pass,
        started,
        &format!("worst relative defect {worst:.3e} over 100 fields, tol 1e-12"),
    );
    assert!(pass);
}

#[test]
fn criterion_02_gradient_consistency() {
    let started = std::time::Instant::now();
    // relative error in the sup-norm sense: componentwise deviations
    // measured against the gradient magnitude (plain componentwise ratios
    // are dominated by finite-difference truncation on near-zero entries)
    let mut worst: f64 = 0.0;
    for &nodes in &[16usize, 64, 256] {
        for &p in &[1.5, 2.0, 3.0] {
            let grid = GridDomain::new(vec![0.0], 1.0 / nodes as f64, vec![nodes]).unwrap();
            let kernel = KernelSpec::standard(params(1, 0.3, p));
            let table = KernelTable::build(&grid, &kernel);
            let u = random_field(&grid, child_seed(BASE_SEED, nodes as u64 + p as u64));
            let a: Vec<usize> = (0..nodes).collect();
            let g = energy_gradient(&u, &a, &kernel, &grid, &table).unwrap();
            let scale = g.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..nodes {
                let step = 1e-6 * (1.0 + u.values[i].abs());
                let mut up = u.clone();
                up.values[i] += step;
                let mut dn = u.clone();
                dn.values[i] -= step;
                let ep = energy(&up, &a, &kernel, &grid, &table).unwrap();
                let em = energy(&dn, &a, &kernel, &grid, &table).unwrap();
                let fd = (ep - em) / (2.0 * step);
                let rel = (g.values[i] - fd).abs() / g.values[i].abs().max(scale * 1e-2);
                worst = worst.max(rel);
            }
        }
    }
    let pass = worst <= 1e-5;
    report(
        "c02 gradient vs central differences",
        pass,
        started,
        &format!("worst relative error {worst:.3e} over grids {{16,64,256}} x p {{1.5,2,3}}, tol 1e-5"),
    );
    assert!(pass);
}

#[test]
fn criterion_03_capacity_scaling() {
    let started = std::time::Instant::now();
    let kernel = KernelSpec::standard(params(1, 0.25, 2.0));
    let expected = 2.0f64.powf(0.5);
    let mut residuals = Vec::new();
    let mut ratio_fine = 0.0;
    for &h in &[1.0 / 128.0, 1.0 / 256.0] {
        let mut policy = GridPolicy::with_spacing(h);
        policy.ladder = Some(vec![8.0, 16.0, 32.0]);
        let c1 = global_capacity(&TargetSet::ball(1.0), &kernel, &policy).unwrap();
        let c2 = global_capacity(&TargetSet::ball(2.0), &kernel, &policy).unwrap();
        let ratio = c2.value / c1.value;
        residuals.push((ratio - expected).abs() / expected);
        ratio_fine = ratio;
    }
    let within = residuals[1] <= 0.05;
    let shrinks = residuals[1] < residuals[0];
    // regression guard on the frozen desk reference
    let mut policy = GridPolicy::with_spacing(1.0 / 256.0);
    policy.ladder = Some(vec![8.0, 16.0, 32.0]);
    let cap = global_capacity(&TargetSet::ball(1.0), &kernel, &policy).unwrap();
    let ref_ok = (cap.value - CAP_B1_REF).abs() <= 1e-9 * CAP_B1_REF;
    let pass = within && shrinks && ref_ok;
    report(
        "c03 capacity scaling cap(B2)/cap(B1)",
        pass,
        started,
        &format!(
            "ratio {ratio_fine:.5} vs {expected:.5} (residual {:.4} at h=1/256, {:.4} at h=1/128), cap(B1) {:.9} vs frozen {CAP_B1_REF:.9}",
            residuals[1], residuals[0], cap.value
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_relative_capacity_inequalities() {
    let started = std::time::Instant::now();
    let kernel = KernelSpec::standard(params(1, 0.25, 2.0));
    let h = 1.0 / 64.0;
    let tol = SolverTolerances::default();
    let grid = GridDomain::symmetric(1, 40.0, h).unwrap();
    let table = KernelTable::build(&grid, &kernel);
    let mut policy = GridPolicy::with_spacing(h);
    policy.ladder = Some(vec![8.0, 16.0, 32.0]);

    let instances: [(f64, f64, f64); 10] = [
        (1.0, 2.0, 8.0),
        (1.0, 4.0, 8.0),
        (1.0, 6.0, 8.0),
        (1.0, 4.0, 16.0),
        (1.0, 8.0, 16.0),
        (1.0, 4.0, 32.0),
        (1.0, 8.0, 32.0),
        (1.0, 16.0, 32.0),
        (0.5, 2.0, 8.0),
        (0.5, 4.0, 16.0),
    ];
    let mut all_ok = true;
    let mut worst_slack = f64::NEG_INFINITY;
    for &(t_radius, r, big_r) in &instances {
        let target = TargetSet::ball(t_radius);
        let cap = global_capacity(&target, &kernel, &policy).unwrap().value;
        let rel = relative_capacity(&target, r, big_r, &kernel, &grid, &table, &tol)
            .unwrap()
            .value;
        let cond = condenser_capacity(&target, big_r, &kernel, &grid, &table, &tol)
            .unwrap()
            .value;
        let slack = (rel.max(cap)) - cond;
        worst_slack = worst_slack.max(slack);
        all_ok &= slack <= 1e-6;
    }
    // truncation gap shrinks as the annulus widens
    let target = TargetSet::ball(1.0);
    let cap = global_capacity(&target, &kernel, &policy).unwrap().value;
    let rel_near = relative_capacity(&target, 4.0, 8.0, &kernel, &grid, &table, &tol)
        .unwrap()
        .value;
    let rel_far = relative_capacity(&target, 4.0, 32.0, &kernel, &grid, &table, &tol)
        .unwrap()
        .value;
    let gap_near = cap - rel_near;
    let gap_far = cap - rel_far;
    let gap_ok = gap_far < gap_near;
    let pass = all_ok && gap_ok;
    report(
        "c04 max-cap inequality and truncation gap",
        pass,
        started,
        &format!(
            "worst slack {worst_slack:.3e} over 10 instances (tol 1e-6); gap (4,32) {gap_far:.4} < gap (4,8) {gap_near:.4}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_tail_bound() {
    let started = std::time::Instant::now();
    // sp = 0.9 keeps the uncovered far tail below the tolerance budget
    let s = 0.45;
    let p = 2.0;
    let sp = s * p;
    let kernel = KernelSpec::standard(params(1, s, p));
    let r_ball = 1.0f64;
    let mut worst: f64 = 0.0;
    for &x_pos in &[0.1, 0.3, 0.5, 0.7, 0.85] {
        let dist = r_ball - x_pos;
        let h = dist / 100.0;
        let far = r_ball + 400.0 * dist;
        let cells = ((far - (x_pos - h)) / h).ceil() as usize;
        let grid = GridDomain::new(vec![x_pos - 1.5 * h], h, vec![cells]).unwrap();
        let x_node = (0..grid.n_nodes())
            .min_by(|&a, &b| {
                let da = (grid.node_center(a)[0] - x_pos).abs();
                let db = (grid.node_center(b)[0] - x_pos).abs();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        let x = grid.node_center(x_node)[0];
        let exact = (r_ball - x).powf(-sp) / sp;
        let numeric = tail_mass(x_node, r_ball, &kernel, &grid).unwrap();
        worst = worst.max((numeric - exact).abs() / exact);
    }
    let pass = worst <= 0.02;
    report(
        "c05 exterior tail vs closed form",
        pass,
        started,
        &format!("worst relative error {worst:.4} over 5 positions, tol 0.02"),
    );
    assert!(pass);
}

#[test]
fn criterion_06_matern_retention() {
    let started = std::time::Instant::now();
    let process = ProcessSpec::Poisson {
        intensity: 5.0,
        marks: MarkDistribution::Constant { rho0: 1.0 },
    };
    let window = Window::new(vec![0.0, 0.0], vec![10.0, 10.0]).unwrap();
    let deltas = [0.2, 0.1, 0.05, 0.01];
    let curve = retention_curve(&process, &window, &deltas, 200, BASE_SEED).unwrap();
    let oracle = (-5.0 * std::f64::consts::PI * 0.04f64).exp();
    let dev = (curve[0].fraction - oracle).abs();
    let band = 3.0 * curve[0].stderr;
    let within = dev <= band;
    let monotone = curve.windows(2).all(|w| w[1].fraction >= w[0].fraction - 1e-12);
    let approaches_one = curve.last().unwrap().fraction > 0.99;
    let pass = within && monotone && approaches_one;
    report(
        "c06 hard-core retention",
        pass,
        started,
        &format!(
            "fraction {:.4} vs oracle {oracle:.4} (3-sigma band {band:.4}); monotone {monotone}; final {:.4}",
            curve[0].fraction,
            curve.last().unwrap().fraction
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_ergodic_limit() {
    let started = std::time::Instant::now();
    let process = ProcessSpec::Poisson {
        intensity: 3.0,
        marks: MarkDistribution::Constant { rho0: 2.0 },
    };
    let domain = Window::new(vec![0.0], vec![1.0]).unwrap();
    let ladder = [0.125, 0.0625, 0.03125, 0.015625];
    // n=1, sp=0.5: the capacitary weight is rho^{1/2}
    let trace = rescaled_sum_trace(&process, &domain, 0.5, &ladder, 50, BASE_SEED).unwrap();
    let limit = 3.0 * 2.0f64.powf(0.5);
    let mut within_all = true;
    for p in &trace.summary {
        within_all &= (p.mean - limit).abs() <= 3.0 * p.stderr;
    }
    let spreads: Vec<f64> = trace.summary.iter().map(|p| p.stderr).collect();
    let shrinking =
        inversions(&spreads) <= 1 && spreads.last().unwrap() < spreads.first().unwrap();
    let pass = within_all && shrinking;
    let means: Vec<f64> = trace.summary.iter().map(|p| p.mean).collect();
    report(
        "c07 ergodic rescaled sums",
        pass,
        started,
        &format!("means {means:.4?} vs limit {limit:.4}; spreads {spreads:.5?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_08_gamma_consistency() {
    let started = std::time::Instant::now();
    let p = params(1, 0.25, 2.0);
    let process = ProcessSpec::Poisson {
        intensity: 2.0,
        marks: MarkDistribution::Constant { rho0: 1.0 },
    };
    let g = gamma_estimate(&process, &p, CAP_B1_REF, 100, BASE_SEED).unwrap();
    let wald = g.wald.unwrap();
    let wald_expected = 2.0 * CAP_B1_REF;
    let exact = (wald - wald_expected).abs() <= 1e-12        * wald_expected;
    let within = (g.value - wald).abs() <= 3.0 * g.stderr;
    // heavy-tailed marks violating the moment condition are refused
    let heavy = ProcessSpec::Poisson {
        intensity: 2.0,
        marks: MarkDistribution::Pareto { alpha: 0.4, x_min: 1.0 },
    };
    let refused = matches!(
        gamma_estimate(&heavy, &p, CAP_B1_REF, 10, BASE_SEED),
        Err(fraclab_core::ergodic::ErgodicError::MomentInfinite { .. })
    );
    let pass = exact && within && refused;
    report(
        "c08 capacitary constant vs closed form",
        pass,
        started,
        &format!(
            "gamma_hat {:.4} vs wald {wald:.4} (3-sigma {:.4}); heavy-tail refused {refused}",
            g.value,
            3.0 * g.stderr
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_classification_lemmas() {
    let started = std::time::Instant::now();
    let p = params(2, 0.5, 2.0);
    let kernel = KernelSpec::standard(p);
    let domain = Window::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    let marks = MarkDistribution::LogNormal { mu: 0.0, sigma: 1.0 };
    let truncation = 8u32;
    let ladder = [0.125, 0.0625, 0.03125, 0.015625];
    let seeds = 20usize;

    let ref_grid = GridDomain::symmetric(2, 3.0, 0.125).unwrap();
    let ref_table = KernelTable::build(&ref_grid, &kernel);
    let cap_b1b2 = condenser_between(
        &TargetSet::ball(1.0),
        &TargetSet::ball(2.0),
        &kernel,
        &ref_grid,
        &ref_table,
        &SolverTolerances::default(),
    )
    .unwrap()
    .value;

    let median = |mut v: Vec<f64>| -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = v.len();
        if m % 2 == 1 {
            v[m / 2]
        } else {
            0.5 * (v[m / 2 - 1] + v[m / 2])
        }
    };

    let mut trace_medians: Vec<Vec<f64>> = vec![Vec::new(); 4];
    let mut bound_medians = Vec::new();
    let mut safety_all = true;
    for (ei, &eps) in ladder.iter().enumerate() {
        let window = domain
            .scaled(1.0 / eps)
            .enlarged(2.0 / truncation as f64);
        let mut per: Vec<Vec<f64>> = vec![Vec::new(); 4];
        let mut bounds = Vec::new();
        for k in 0..seeds {
            let seed = child_seed(BASE_SEED, (ei * seeds + k) as u64);
            let config = fraclab_core::sample_poisson(&window, 2.0, &marks, seed).unwrap();
            let obstacles = build_obstacles(&config, &p, eps, &domain).unwrap();
            let cls = classify_indices(&obstacles, &config, truncation, None).unwrap();
            let card = cardinality_report(&cls, eps);
            for q in 0..4 {
                per[q].push(card[q]);
            }
            safety_all &= check_safety_layer(&cls, &obstacles);
            // sub-cell radii put the check on its subadditive-bound path
            let check = fraclab_core::homogenize::nvg_capacity_check(
                &obstacles, &cls, &kernel, cap_b1b2, 0.05, 4096,
            )
            .unwrap();
            bounds.push(check.bound);
        }
        for q in 0..4 {
            trace_medians[q].push(median(per[q].clone()));
        }
        bound_medians.push(median(bounds));
    }

    let mut trends_ok = true;
    for medians in trace_medians.iter().chain(std::iter::once(&bound_medians)) {
        trends_ok &= inversions(medians) <= 1;
    }
    let pass = trends_ok && safety_all;
    report(
        "c09 classification cardinalities and NVG bound",
        pass,
        started,
        &format!(
            "medians a {:.3?} | b {:.3?} | c {:.3?} | d {:.3?} | bound {:.1?}; safety {safety_all}",
            trace_medians[0], trace_medians[1], trace_medians[2], trace_medians[3], bound_medians
        ),
    );
    assert!(pass);
}

/// The literal configuration of the end-to-end criterion: `s = 0.35` gives
/// `lambda_eps = eps^{10/3}`, so radii shrink from `9.8e-4` at `eps = 1/8`
/// to `9.5e-7` at `eps = 1/64` while a 4096-node grid over `U` plus collar
/// cannot space below `7.3e-4`: every run beyond the first rung is
/// under-resolved and excluded, leaving the ladder without medians.
fn criterion_10_config() -> StudyConfig {
    StudyConfig {
        process: ProcessSpec::Poisson {
            intensity: 2.0,
            marks: MarkDistribution::Constant { rho0: 1.0 },
        },
        params: params(1, 0.35, 2.0),
        domain: Window::new(vec![0.0], vec![1.0]).unwrap(),
        f_const: 1.0,
        eps_ladder: vec![0.125, 0.0625, 0.03125, 0.015625],
        replicas: 20,
        base_seed: BASE_SEED,
        truncation: 8,
        collar: 1.0,
        max_nodes: 4096,
        cap_h: 1.0 / 64.0,
        tol: SolverTolerances::default(),
        template: None,
    }
}

#[test]
fn criterion_10_homogenization_trend() {
    let started = std::time::Instant::now();
    let study = convergence_study(&criterion_10_config()).unwrap();
    let dists: Vec<f64> = study.summary.iter().map(|s| s.median_lp_dist).collect();
    let runs: Vec<usize> = study.summary.iter().map(|s| s.runs).collect();
    let all_finite = dists.iter().all(|d| d.is_finite());
    let monotone = all_finite && inversions(&dists) <= 1;
    let halved = all_finite && *dists.last().unwrap() < 0.5 * dists.first().unwrap();
    let pass = all_finite && monotone && halved;
    report(
        "c10 homogenization trend (literal scaling)",
        pass,
        started,
        &format!(
            "median distances {dists:.5?}, included runs {runs:?}; monotone {monotone}, final<half {halved}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_11_random_shapes() {
    let started = std::time::Instant::now();
    let base_cfg = criterion_10_config();
    let mut shaped_cfg = criterion_10_config();
    shaped_cfg.template = Some(ShapeTemplate::Ball { radius: 0.5 });

    let base = convergence_study(&base_cfg).unwrap();
    let shaped = convergence_study(&shaped_cfg).unwrap();

    // half-radius ball templates rescale the capacitary constant exactly
    let exponent = base_cfg.params.cap_exponent();
    let expected = base.gamma.value * 2.0f64.powf(-exponent);
    let exact = (shaped.gamma.value - expected).abs() <= 1e-12 * expected.abs();

    // the effective problem responds monotonically to the smaller constant
    let kernel = KernelSpec::standard(base_cfg.params);
    let grid =
        fraclab_core::homogenize::harness_grid(&base_cfg.domain, base_cfg.collar, 1024).unwrap();
    let table = KernelTable::build(&grid, &kernel);
    let f = GridField::constant(&grid, 1.0);
    let tol = SolverTolerances::default();
    let out_small = fraclab_core::homogenize::solve_effective_problem(
        shaped.gamma.value,
        &f,
        &grid,
        &kernel,
        &table,
        &tol,
    )
    .unwrap();
    let out_big = fraclab_core::homogenize::solve_effective_problem(
        base.gamma.value,
        &f,
        &grid,
        &kernel,
        &table,
        &tol,
    )
    .unwrap();
    let monotone = out_small.objective <= out_big.objective + 1e-10;

    let pass = exact && monotone;
    report(
        "c11 shaped obstacles",
        pass,
        started,
        &format!(
            "gamma {:.5} -> {:.5} (expected {expected:.5}); effective objective {:.5} <= {:.5}",
            base.gamma.value, shaped.gamma.value, out_small.objective, out_big.objective
        ),
    );
    assert!(pass);
}
