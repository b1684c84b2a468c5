//! Discrete nonlocal energies on uniform grids.
//!
//! The kernel functional is collocated at cell centers with the diagonal
//! pair skipped:
//!
//! ```text
//! E(u, A) = sum_{i != j, i,j in A} h^{2n} K(x_i - x_j) |u_i - u_j|^p
//! ```
//!
//! Pair contributions are accumulated in lexicographic `(i, j)` order with
//! compensated (Kahan) summation over fixed-size row blocks; the block
//! combine is sequential, so parallel and serial evaluations agree bit for
//! bit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridDomain, GridField};
use crate::params::ScalingParams;

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("kernel argument is zero")]
    ZeroArgument,
    #[error("node set is empty")]
    EmptyNodeSet,
    #[error("node sets overlap")]
    OverlappingSets,
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("node {node} lies outside the ball of radius {radius}")]
    NodeOutsideBall { node: usize, radius: f64 },
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
}

/// Angular part of an anisotropic kernel: piecewise constant weights over an
/// even partition of directions, extended by `K(-z) = K(z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelVariant {
    /// `|z|^{-(n+sp)}`.
    Standard,
    /// `w(theta) |z|^{-(n+sp)}`; in dimension one a single weight (evenness
    /// forces equal weights on both rays), in dimension two weights over
    /// equal sectors of `[0, pi)` folded by `theta mod pi`.
    Anisotropic { weights: Vec<f64> },
}

/// A `-(n+sp)`-homogeneous even kernel comparable to the standard one:
/// `c^{-1} <= K(z)|z|^{n+sp} <= c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub params: ScalingParams,
    pub variant: KernelVariant,
    pub comparability: f64,
}

impl KernelSpec {
    pub fn standard(params: ScalingParams) -> KernelSpec {
        KernelSpec {
            params,
            variant: KernelVariant::Standard,
            comparability: 1.0,
        }
    }

    /// Anisotropic kernel; every weight must lie in `[1/c, c]`.
    pub fn anisotropic(
        params: ScalingParams,
        weights: Vec<f64>,
        comparability: f64,
    ) -> Result<KernelSpec, EnergyError> {
        if comparability.is_nan() || comparability < 1.0 {
            return Err(EnergyError::InvalidKernel(
                "comparability constant must be >= 1".into(),
            ));
        }
        if params.n > 2 {
            return Err(EnergyError::InvalidKernel(
                "anisotropic profiles are defined for n <= 2".into(),
            ));
        }
        let expected = if params.n == 1 { 1 } else { 16 };
        if weights.len() != expected {
            return Err(EnergyError::InvalidKernel(format!(
                "expected {expected} sector weights for n = {}",
                params.n
            )));
        }
        for &w in &weights {
            if !(w >= 1.0 / comparability && w <= comparability) {
                return Err(EnergyError::InvalidKernel(format!(
                    "sector weight {w} outside [{}, {comparability}]",
                    1.0 / comparability
                )));
            }
        }
        Ok(KernelSpec {
            params,
            variant: KernelVariant::Anisotropic { weights },
            comparability,
        })
    }

    /// Kernel value at `z != 0`.
    pub fn eval(&self, z: &[f64]) -> Result<f64, EnergyError> {
        let r2: f64 = z.iter().map(|v| v * v).sum();
        if r2 == 0.0 {
            return Err(EnergyError::ZeroArgument);
        }
        let n_sp = self.params.n as f64 + self.params.sp();
        let radial = r2.powf(-0.5 * n_sp);
        Ok(self.angular(z) * radial)
    }

    pub(crate) fn angular(&self, z: &[f64]) -> f64 {
        match &self.variant {
            KernelVariant::Standard => 1.0,
            KernelVariant::Anisotropic { weights } => {
                if self.params.n == 1 {
                    weights[0]
                } else {
                    // fold atan2 into [0, pi): evenness by construction
                    let mut theta = z[1].atan2(z[0]);
                    if theta < 0.0 {
                        theta += std::f64::consts::PI;
                    }
                    if theta >= std::f64::consts::PI {
                        theta -= std::f64::consts::PI;
                    }
                    let k = ((theta / std::f64::consts::PI) * weights.len() as f64) as usize;
                    weights[k.min(weights.len() - 1)]
                }
            }
        }
    }
}

/// Kernel values tabulated over all node-offset differences of a grid.
///
/// Built once per `(grid, kernel)` pair; every pair interaction is then a
/// table lookup keyed on the signed multi-index offset.
pub struct KernelTable {
    dims: Vec<usize>,
    strides: Vec<usize>,
    values: Vec<f64>,
}

impl KernelTable {
    pub fn build(grid: &GridDomain, kernel: &KernelSpec) -> KernelTable {
        let n = grid.dim();
        let table_dims: Vec<usize> = grid.dims().iter().map(|&d| 2 * d - 1).collect();
        let mut strides = vec![1usize; n];
        for k in (0..n.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * table_dims[k + 1];
        }
        let total: usize = table_dims.iter().product();
        let h = grid.spacing();
        let mut values = vec![0.0; total];
        let mut offs = vec![0i64; n];
        for (flat, v) in values.iter_mut().enumerate() {
            let mut rem = flat;
            for k in (0..n).rev() {
                let dk = table_dims[k];
                offs[k] = (rem % dk) as i64 - (grid.dims()[k] as i64 - 1);
                rem /= dk;
            }
            if offs.iter().all(|&o| o == 0) {
                *v = 0.0; // diagonal pair skipped
            } else {
                let z: Vec<f64> = offs.iter().map(|&o| o as f64 * h).collect();
                *v = kernel.eval(&z).expect("nonzero offset");
            }
        }
        KernelTable {
            dims: grid.dims().to_vec(),
            strides,
            values,
        }
    }

    /// Kernel value for the pair `(i, j)` given their multi-indices.
    #[inline]
    pub fn pair(&self, mi: &[usize], mj: &[usize]) -> f64 {
        let mut flat = 0usize;
        for k in 0..self.dims.len() {
            let off = mj[k] as i64 - mi[k] as i64 + (self.dims[k] as i64 - 1);
            flat += off as usize * self.strides[k];
        }
        self.values[flat]
    }

    /// One-dimensional fast path: kernel value at integer offset `d != 0`.
    #[inline]
    pub fn at_offset_1d(&self, d: usize) -> f64 {
        debug_assert_eq!(self.dims.len(), 1);
        self.values[self.dims[0] - 1 + d]
    }
}

/// Kahan-compensated accumulator.
#[derive(Clone, Copy, Default)]
struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    #[inline]
    fn add(&mut self, v: f64) {
        let y = v - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum
    }
}

/// `|t|^p` with the `p = 2` fast path.
#[inline]
fn pow_abs(t: f64, p: f64) -> f64 {
    if p == 2.0 {
        t * t
    } else {
        t.abs().powf(p)
    }
}

/// `p |t|^{p-2} t`, continuous for `p > 1` (zero at `t = 0`).
#[inline]
fn pow_abs_derivative(t: f64, p: f64) -> f64 {
    if p == 2.0 {
        2.0 * t
    } else if t == 0.0 {
        0.0
    } else {
        p * t.abs().powf(p - 1.0) * t.signum()
    }
}

const ROW_BLOCK: usize = 32;

/// Deterministic blocked reduction: rows are split into fixed blocks, each
/// block is Kahan-summed in index order, block totals combine sequentially.
fn blocked_sum(n_rows: usize, row_sum: impl Fn(usize) -> f64 + Sync) -> f64 {
    let n_blocks = n_rows.div_ceil(ROW_BLOCK);
    let block_totals: Vec<f64> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = Kahan::default();
            let hi = ((b + 1) * ROW_BLOCK).min(n_rows);
            for r in b * ROW_BLOCK..hi {
                acc.add(row_sum(r));
            }
            acc.total()
        })
        .collect();
    let mut acc = Kahan::default();
    for t in block_totals {
        acc.add(t);
    }
    acc.total()
}

/// Discrete kernel energy of `u` over the node subset `a`.
///
/// Nonnegative, zero exactly when `u` is constant on `a`.
pub fn energy(
    u: &GridField,
    a: &[usize],
    kernel: &KernelSpec,
    grid: &GridDomain,
    table: &KernelTable,
) -> Result<f64, EnergyError> {
    if a.is_empty() {
        return Err(EnergyError::EmptyNodeSet);
    }
    u.check_grid(grid)?;
    let p = kernel.params.p;
    let w = grid.pair_weight();
    let multis: Vec<Vec<usize>> = a.iter().map(|&i| grid.multi_index(i)).collect();
    // ordered pairs = 2 x (i < j) since K is even
    let total = blocked_sum(a.len(), |r| {
        let mut acc = Kahan::default();
        let ui = u.values[a[r]];
        for c in (r + 1)..a.len() {
            let k = table.pair(&multis[r], &multis[c]);
            acc.add(k * pow_abs(ui - u.values[a[c]], p));
        }
        acc.total()
    });
    Ok(2.0 * w * total)
}

/// Cross-interaction energy `D(u, A x A')` between disjoint node sets
/// (counted once, not doubled).
pub fn locality_defect(
    u: &GridField,
    a: &[usize],
    a_prime: &[usize],
    kernel: &KernelSpec,
    grid: &GridDomain,
    table: &KernelTable,
) -> Result<f64, EnergyError> {
    u.check_grid(grid)?;
    let set: std::collections::HashSet<usize> = a.iter().copied().collect();
    if a_prime.iter().any(|j| set.contains(j)) {
        return Err(EnergyError::OverlappingSets);
    }
    let p = kernel.params.p;
    let w = grid.pair_weight();
    let multis_a: Vec<Vec<usize>> = a.iter().map(|&i| grid.multi_index(i)).collect();
    let multis_b: Vec<Vec<usize>> = a_prime.iter().map(|&j| grid.multi_index(j)).collect();
    let total = blocked_sum(a.len(), |r| {
        let mut acc = Kahan::default();
        let ui = u.values[a[r]];
        for c in 0..a_prime.len() {
            let k = table.pair(&multis_a[r], &multis_b[c]);
            acc.add(k * pow_abs(ui - u.values[a_prime[c]], p));
        }
        acc.total()
    });
    Ok(w * total)
}

/// First variation of [`energy`] with respect to the node values:
/// component `i` is `2p sum_{j in A, j != i} h^{2n} K(x_i-x_j)
/// |u_i-u_j|^{p-2} (u_i-u_j)`; zero outside `A`.
pub fn energy_gradient(
    u: &GridField,
    a: &[usize],
    kernel: &KernelSpec,
    grid: &GridDomain,
    table: &KernelTable,
) -> Result<GridField, EnergyError> {
    u.check_grid(grid)?;
    let p = kernel.params.p;
    let w = grid.pair_weight();
    let multis: Vec<Vec<usize>> = a.iter().map(|&i| grid.multi_index(i)).collect();
    let mut out = GridField::zeros(grid);
    let grads: Vec<f64> = (0..a.len())
        .into_par_iter()
        .map(|r| {
            let mut acc = Kahan::default();
            let ui = u.values[a[r]];
            for c in 0..a.len() {
                if c == r {
                    continue;
                }
                let k = table.pair(&multis[r], &multis[c]);
                acc.add(k * pow_abs_derivative(ui - u.values[a[c]], p));
            }
            2.0 * w * acc.total()
        })
        .collect();
    for (r, &i) in a.iter().enumerate() {
        out.values[i] = grads[r];
    }
    Ok(out)
}

/// Exact kernel mass beyond the grid box as seen from each node:
/// `T_i = int_{G^c} K(x_i - y) dy`.
///
/// The box complement is star-shaped about every interior point, so in
/// polar form `T_i = int A(theta) D(theta)^{-sp} / sp dtheta` with
/// `D(theta)` the exit distance of the ray. One dimension is closed form;
/// two dimensions use a uniform angular quadrature.
pub fn exterior_tail_weights(grid: &GridDomain, kernel: &KernelSpec) -> Vec<f64> {
    let sp = kernel.params.sp();
    let n = grid.dim();
    let lo: Vec<f64> = grid.cell_lo(0);
    let hi: Vec<f64> = (0..n)
        .map(|k| lo[k] + grid.dims()[k] as f64 * grid.spacing())
        .collect();
    (0..grid.n_nodes())
        .map(|i| {
            let x = grid.node_center(i);
            match n {
                1 => {
                    let a = kernel.angular(&[1.0]);
                    a * ((hi[0] - x[0]).powf(-sp) + (x[0] - lo[0]).powf(-sp)) / sp
                }
                2 => {
                    let m = 512;
                    let dtheta = 2.0 * std::f64::consts::PI / m as f64;
                    let mut acc = 0.0;
                    for j in 0..m {
                        let theta = (j as f64 + 0.5) * dtheta;
                        let d = [theta.cos(), theta.sin()];
                        let mut exit = f64::INFINITY;
                        for k in 0..2 {
                            if d[k] > 1e-300 {
                                exit = exit.min((hi[k] - x[k]) / d[k]);
                            } else if d[k] < -1e-300 {
                                exit = exit.min((lo[k] - x[k]) / d[k]);
                            }
                        }
                        acc += kernel.angular(&d) * exit.powf(-sp) / sp * dtheta;
                    }
                    acc
                }
                _ => unimplemented!("tail weights beyond n = 2"),
            }
        })
        .collect()
}

/// Discrete exterior tail `sum_{nodes y outside B_R} h^n K(x - y)` seen from
/// node `x` inside the ball (balls centered at the origin).
pub fn tail_mass(
    x_node: usize,
    r_ball: f64,
    kernel: &KernelSpec,
    grid: &GridDomain,
) -> Result<f64, EnergyError> {
    let x = grid.node_center(x_node);
    let rx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rx >= r_ball {
        return Err(EnergyError::NodeOutsideBall {
            node: x_node,
            radius: r_ball,
        });
    }
    let hn = grid.cell_volume();
    let n_nodes = grid.n_nodes();
    let total = blocked_sum(n_nodes, |i| {
        let y = grid.node_center(i);
        let ry2: f64 = y.iter().map(|v| v * v).sum();
        if ry2 <= r_ball * r_ball {
            return 0.0;
        }
        let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        kernel.eval(&z).unwrap_or(0.0)
    });
    Ok(hn * total)
}
