//! Monte-Carlo estimators of the ergodic limits, the capacitary constant,
//! and hard-core retention probabilities.
//!
//! The ergodic statements are single-realization limits in `eps`; finite
//! windows force an ensemble design. Every estimator averages over
//! independent replicas seeded by the deterministic child-seed recurrence,
//! reporting both the per-seed values and the ensemble mean with its
//! standard error.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::ScalingParams;
use crate::point_process::{
    analytic_mark_moment, matern_retained_indices, MarkedConfiguration, ProcessSpec, Window,
};
use crate::seed::child_seed;

#[derive(Debug, Error)]
pub enum ErgodicError {
    #[error("configuration window does not cover eps^-1 U")]
    WindowTooSmall,
    #[error("mark moment of order {order} is infinite; estimator refused")]
    MomentInfinite { order: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Process(#[from] crate::point_process::ProcessError),
}

/// `eps^n sum_{x_i in eps^{-1} U} h(rho_i)` for one realization.
pub fn rescaled_sum(
    config: &MarkedConfiguration,
    eps: f64,
    domain: &Window,
    mark_fn: impl Fn(f64) -> f64,
) -> Result<f64, ErgodicError> {
    if !eps.is_finite() || eps <= 0.0 {
        return Err(ErgodicError::InvalidParameter("eps must be > 0".into()));
    }
    let blowup = domain.scaled(1.0 / eps);
    if !config.window.covers(&blowup) {
        return Err(ErgodicError::WindowTooSmall);
    }
    let n = config.dim() as i32;
    let mut sum = 0.0;
    for (x, rho) in config.iter() {
        if blowup.contains(x) {
            sum += mark_fn(rho);
        }
    }
    Ok(eps.powi(n) * sum)
}

/// One `eps` level of an ergodic trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TracePoint {
    pub eps: f64,
    pub mean: f64,
    pub stderr: f64,
    pub analytic_limit: Option<f64>,
}

/// Ensemble trace of a rescaled sum along an `eps` ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErgodicTrace {
    pub quantity: String,
    /// `(eps, seed, value)` per run.
    pub per_seed: Vec<(f64, u64, f64)>,
    pub summary: Vec<TracePoint>,
}

impl ErgodicTrace {
    pub const TRACE_CSV_HEADER: &'static str = "quantity,eps,seed,value";
    pub const SUMMARY_CSV_HEADER: &'static str = "quantity,eps,mean,stderr,analytic_limit";

    pub fn trace_rows(&self) -> Vec<String> {
        self.per_seed
            .iter()
            .map(|(eps, seed, value)| {
                format!("{},{eps},{seed},{value:.16e}", self.quantity)
            })
            .collect()
    }

    pub fn summary_rows(&self) -> Vec<String> {
        self.summary
            .iter()
            .map(|p| {
                let lim = p
                    .analytic_limit
                    .map(|v| format!("{v:.16e}"))
                    .unwrap_or_default();
                format!(
                    "{},{},{:.16e},{:.16e},{}",
                    self.quantity, p.eps, p.mean, p.stderr, lim
                )
            })
            .collect()
    }
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Ensemble trace of `rescaled_sum` with `h(rho) = rho^q` over an `eps`
/// ladder; the analytic limit `m_g L^n(U) E[rho^q]` is attached when the
/// moment is finite.
pub fn rescaled_sum_trace(
    process: &ProcessSpec,
    domain: &Window,
    mark_exponent: f64,
    eps_ladder: &[f64],
    replicas: usize,
    base_seed: u64,
) -> Result<ErgodicTrace, ErgodicError> {
    if replicas < 2 {
        return Err(ErgodicError::InvalidParameter(
            "need at least 2 replicas for standard errors".into(),
        ));
    }
    let moment = analytic_mark_moment(process.marks(), mark_exponent)?;
    let analytic = moment
        .finite()
        .map(|m| process.intensity() * domain.volume() * m);
    let mut per_seed = Vec::new();
    let mut summary = Vec::new();
    for (ei, &eps) in eps_ladder.iter().enumerate() {
        let blowup = domain.scaled(1.0 / eps);
        let mut values = Vec::with_capacity(replicas);
        for k in 0..replicas {
            let seed = child_seed(base_seed, (ei * replicas + k) as u64);
            let config = process.sample(&blowup, seed)?;
            let v = rescaled_sum(&config, eps, domain, |r| r.powf(mark_exponent))?;
            per_seed.push((eps, seed, v));
            values.push(v);
        }
        let (mean, stderr) = mean_stderr(&values);
        summary.push(TracePoint {
            eps,
            mean,
            stderr,
            analytic_limit: analytic,
        });
    }
    Ok(ErgodicTrace {
        quantity: format!("rescaled_sum_rho^{mark_exponent}"),
        per_seed,
        summary,
    })
}

/// Monte-Carlo estimate of the capacitary constant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaEstimate {
    /// `cap(B_1) * mean_k sum_{x_i in Q} rho_i^{n-sp}`.
    pub value: f64,
    pub stderr: f64,
    pub cap_unit_ball: f64,
    pub replicas: usize,
    /// Closed form `m_g E[rho^{n-sp}] cap(B_1)` when marks are independent
    /// of positions with a common law.
    pub wald: Option<f64>,
}

/// Estimate `gamma = cap(B_1) E[sum_{x_i in Q} rho_i^{n-sp}]` by replica
/// averaging over the unit cube. Refuses heavy-tailed marks whose
/// `(n-sp)`-moment diverges.
pub fn gamma_estimate(
    process: &ProcessSpec,
    params: &ScalingParams,
    cap_unit_ball: f64,
    replicas: usize,
    base_seed: u64,
) -> Result<GammaEstimate, ErgodicError> {
    gamma_estimate_in_cube(
        process,
        params,
        cap_unit_ball,
        replicas,
        base_seed,
        &vec![0.0; params.n],
    )
}

/// Same estimator over the translated unit cube at `origin` (the estimate
/// is translation invariant for stationary processes).
pub fn gamma_estimate_in_cube(
    process: &ProcessSpec,
    params: &ScalingParams,
    cap_unit_ball: f64,
    replicas: usize,
    base_seed: u64,
    origin: &[f64],
) -> Result<GammaEstimate, ErgodicError> {
    let q = params.cap_exponent();
    let moment = analytic_mark_moment(process.marks(), q)?;
    let mark_moment = match moment {
        crate::point_process::Moment::Infinite => {
            return Err(ErgodicError::MomentInfinite { order: q })
        }
        crate::point_process::Moment::Finite(m) => m,
    };
    if replicas == 0 {
        return Err(ErgodicError::InvalidParameter("need replicas >= 1".into()));
    }
    let cube = Window::new(
        origin.to_vec(),
        origin.iter().map(|o| o + 1.0).collect(),
    )?;
    let mut sums = Vec::with_capacity(replicas);
    for k in 0..replicas {
        let config = process.sample(&cube, child_seed(base_seed, k as u64))?;
        let s: f64 = config.iter().map(|(_, rho)| rho.powf(q)).sum();
        sums.push(s);
    }
    let (mean, stderr) = mean_stderr(&sums);
    let wald = Some(process.intensity() * mark_moment * cap_unit_ball);
    Ok(GammaEstimate {
        value: cap_unit_ball * mean,
        stderr: cap_unit_ball * stderr,
        cap_unit_ball,
        replicas,
        wald,
    })
}

/// One rung of a retention curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetentionPoint {
    pub delta: f64,
    pub fraction: f64,
    pub stderr: f64,
}

/// Fraction of points retained by hard-core thinning, per `delta`, averaged
/// over replicas. Configurations are sampled on the window enlarged by the
/// largest `delta` and retention is counted on the inner window only, so
/// every counted point sees its full neighborhood. Nested retained sets
/// make the per-realization curve monotone.
pub fn retention_curve(
    process: &ProcessSpec,
    window: &Window,
    deltas: &[f64],
    replicas: usize,
    base_seed: u64,
) -> Result<Vec<RetentionPoint>, ErgodicError> {
    if deltas.is_empty() || deltas.iter().any(|d| !d.is_finite() || *d <= 0.0) {
        return Err(ErgodicError::InvalidParameter(
            "delta ladder must be positive".into(),
        ));
    }
    let delta_max = deltas.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut fractions: Vec<Vec<f64>> = vec![Vec::new(); deltas.len()];
    for k in 0..replicas {
        let config = process.sample(&window.enlarged(delta_max), child_seed(base_seed, k as u64))?;
        let inner: Vec<usize> = (0..config.len())
            .filter(|&i| window.contains(config.position(i)))
            .collect();
        if inner.is_empty() {
            continue;
        }
        for (di, &delta) in deltas.iter().enumerate() {
            let retained = matern_retained_indices(&config, delta)?;
            let retained_set: std::collections::HashSet<usize> =
                retained.into_iter().collect();
            let kept = inner.iter().filter(|i| retained_set.contains(i)).count();
            fractions[di].push(kept as f64 / inner.len() as f64);
        }
    }
    Ok(deltas
        .iter()
        .zip(fractions)
        .map(|(&delta, vals)| {
            let (fraction, stderr) = mean_stderr(&vals);
            RetentionPoint {
                delta,
                fraction,
                stderr,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point_process::MarkDistribution;

    fn poisson(intensity: f64, marks: MarkDistribution) -> ProcessSpec {
        ProcessSpec::Poisson { intensity, marks }
    }

    const UNIT_MARKS: MarkDistribution = MarkDistribution::Constant { rho0: 1.0 };

    #[test]
    fn lattice_rescaled_count_is_exact() {
        // one lattice point per unit cell: eps^n #(lattice in eps^-1 U) = 1
        let u = Window::new(vec![0.0], vec![1.0]).unwrap();
        let process = ProcessSpec::ShiftedLattice { marks: UNIT_MARKS };
        for seed in 0..20 {
            let eps = 0.125;
            let config = process.sample(&u.scaled(1.0 / eps), seed).unwrap();
            let v = rescaled_sum(&config, eps, &u, |_| 1.0).unwrap();
            assert!((v - 1.0).abs() < 1e-12, "seed {seed}: {v}");
        }
    }

    #[test]
    fn empty_configuration_sums_to_zero() {
        let u = Window::new(vec![0.0], vec![1.0]).unwrap();
        let config = poisson(0.0, UNIT_MARKS)
            .sample(&u.scaled(8.0), 1)
            .unwrap();
        assert_eq!(rescaled_sum(&config, 0.125, &u, |r| r).unwrap(), 0.0);
    }

    #[test]
    fn window_too_small_detected() {
        let u = Window::new(vec![0.0], vec![1.0]).unwrap();
        let config = poisson(1.0, UNIT_MARKS)
            .sample(&u.scaled(2.0), 1)
            .unwrap();
        assert!(matches!(
            rescaled_sum(&config, 0.125, &u, |r| r),
            Err(ErgodicError::WindowTooSmall)
        ));
    }

    #[test]
    fn poisson_unbiased_at_fixed_eps() {
        // E[eps^n sum h(rho)] = m L^n(U) h(rho0) at every eps for Poisson
        let u = Window::new(vec![0.0], vec![1.0]).unwrap();
        let process = poisson(3.0, MarkDistribution::Constant { rho0: 2.0 });
        let trace =
            rescaled_sum_trace(&process, &u, 0.5, &[0.125, 0.0625], 60, 4242).unwrap();
        let expected = 3.0 * 2.0f64.powf(0.5);
        for point in &trace.summary {
            assert!(
                (point.mean - expected).abs() <= 3.0 * point.stderr,
                "eps {}: mean {} vs {expected} (se {})",
                point.eps,
                point.mean,
                point.stderr
            );
            assert_eq!(point.analytic_limit.unwrap(), expected);
        }
    }

    #[test]
    fn spread_shrinks_along_ladder() {
        let u = Window::new(vec![0.0], vec![1.0]).unwrap();
        let process = poisson(3.0, UNIT_MARKS);
        let ladder = [0.125, 0.0625, 0.03125, 0.015625];
        let trace = rescaled_sum_trace(&process, &u, 0.5, &ladder, 40, 7).unwrap();
        let spreads: Vec<f64> = trace.summary.iter().map(|p| p.stderr).collect();
        let inversions = spreads.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(inversions <= 1, "spreads {spreads:?}");
        assert!(spreads.last().unwrap() < spreads.first().unwrap());
    }

    #[test]
    fn gamma_zero_for_zero_intensity() {
        let params = ScalingParams::new(1, 0.25, 2.0).unwrap();
        let g = gamma_estimate(&poisson(0.0, UNIT_MARKS), &params, 13.6, 10, 3).unwrap();
        assert_eq!(g.value, 0.0);
        assert_eq!(g.wald.unwrap(), 0.0);
    }

    #[test]
    fn gamma_matches_wald_for_constant_marks() {
        let params = ScalingParams::new(1, 0.25, 2.0).unwrap();
        let cap = 13.6;
        let g = gamma_estimate(&poisson(2.0, UNIT_MARKS), &params, cap, 200, 99).unwrap();
        let wald = g.wald.unwrap();
        assert!((wald - 2.0 * cap).abs() < 1e-12);
        assert!(
            (g.value - wald).abs() <= 3.0 * g.stderr,
            "gamma {} vs wald {wald} (se {})",
            g.value,
            g.stderr
        );
    }

    #[test]
    fn heavy_tail_marks_refused() {
        // pareto with alpha <= n - sp: the capacitary moment diverges
        let params = ScalingParams::new(1, 0.25, 2.0).unwrap();
        let marks = MarkDistribution::Pareto { alpha: 0.4, x_min: 1.0 };
        let err = gamma_estimate(&poisson(2.0, marks), &params, 13.6, 10, 3);
        assert!(matches!(err, Err(ErgodicError::MomentInfinite { .. })));
    }

    #[test]
    fn gamma_invariant_under_cube_translation() {
        let params = ScalingParams::new(2, 0.5, 2.0).unwrap();
        let process = poisson(2.0, MarkDistribution::LogNormal { mu: 0.0, sigma: 0.5 });
        let a = gamma_estimate(&process, &params, 1.0, 300, 11).unwrap();
        let b = gamma_estimate_in_cube(&process, &params, 1.0, 300, 12, &[3.5, -1.25]).unwrap();
        let se = (a.stderr * a.stderr + b.stderr * b.stderr).sqrt();
        assert!(
            (a.value - b.value).abs() <= 3.0 * se,
            "{} vs {} (se {se})",
            a.value,
            b.value
        );
    }

    #[test]
    fn retention_single_point_is_one() {
        let w = Window::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        // intensity low enough that most replicas hold at most one point
        let curve = retention_curve(&poisson(0.05, UNIT_MARKS), &w, &[0.001], 400, 21).unwrap();
        // with ~0.05 points per window, neighbors within 0.001 are absent
        assert!(curve[0].fraction > 0.999, "{}", curve[0].fraction);
    }

    #[test]
    fn retention_matches_matern_formula() {
        // Poisson m=5 on [0,10]^2 at delta = 0.2: exp(-5 pi 0.04)
        let w = Window::new(vec![0.0, 0.0], vec![10.0, 10.0]).unwrap();
        let curve = retention_curve(&poisson(5.0, UNIT_MARKS), &w, &[0.2], 60, 2024).unwrap();
        let expected = (-5.0 * std::f64::consts::PI * 0.04f64).exp();
        assert!(
            (curve[0].fraction - expected).abs() <= 3.0 * curve[0].stderr,
            "fraction {} vs {expected} (se {})",
            curve[0].fraction,
            curve[0].stderr
        );
    }

    #[test]
    fn retention_monotone_to_one() {
        let w = Window::new(vec![0.0, 0.0], vec![10.0, 10.0]).unwrap();
        let deltas = [0.2, 0.1, 0.05, 0.01];
        let curve = retention_curve(&poisson(5.0, UNIT_MARKS), &w, &deltas, 40, 5).unwrap();
        for pair in curve.windows(2) {
            assert!(pair[1].fraction >= pair[0].fraction - 1e-12);
        }
        assert!(curve.last().unwrap().fraction > 0.99);
    }

    #[test]
    fn thinned_intensity_identity() {
        // empirical thinned intensity = empirical intensity * retained fraction
        let w = Window::new(vec![0.0, 0.0], vec![6.0, 6.0]).unwrap();
        let process = poisson(4.0, UNIT_MARKS);
        let config = process.sample(&w, 77).unwrap();
        let delta = 0.15;
        let retained = matern_retained_indices(&config, delta).unwrap();
        let vol = w.volume();
        let emp_intensity = config.len() as f64 / vol;
        let thinned_intensity = retained.len() as f64 / vol;
        let fraction = retained.len() as f64 / config.len() as f64;
        assert!((thinned_intensity - emp_intensity * fraction).abs() < 1e-12);
    }

    #[test]
    fn lattice_gamma_is_exact_periodic_constant() {
        // one lattice point per unit cube for every shift: the replica sums
        // are constant, so the estimate equals the closed form exactly
        let params = ScalingParams::new(1, 0.25, 2.0).unwrap();
        let process = ProcessSpec::ShiftedLattice {
            marks: MarkDistribution::Constant { rho0: 2.0 },
        };
        let cap = 13.6;
        let g = gamma_estimate(&process, &params, cap, 50, 7).unwrap();
        let expected = cap * 2.0f64.powf(0.5);
        assert!((g.value - expected).abs() < 1e-12 * expected);
        assert!(g.stderr < 1e-12);
        assert!((g.wald.unwrap() - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn trace_csv_rows_shape() {
        let u = Window::new(vec![0.0], vec![1.0]).unwrap();
        let trace =
            rescaled_sum_trace(&poisson(2.0, UNIT_MARKS), &u, 0.5, &[0.25, 0.125], 3, 1).unwrap();
        for row in trace.trace_rows() {
            assert_eq!(row.split(',').count(), 4);
        }
        for row in trace.summary_rows() {
            assert_eq!(row.split(',').count(), 5);
        }
    }
}
