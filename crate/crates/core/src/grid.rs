//! Uniform collocation grids and node fields.
//!
//! Nodes are cell centers of a uniform grid with spacing `h`; masks classify
//! every node as interior-of-U, obstacle, or exterior, and partition the
//! node set with obstacle nodes a subset of U nodes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::point_process::Window;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("field length {found} does not match grid with {expected} nodes")]
    FieldMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeClass {
    Interior,
    Obstacle,
    Exterior,
}

/// Uniform grid over an axis-aligned box. Node `i` has center
/// `lo[k] + (m_k + 1/2) h` where `m` is the row-major multi-index of `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDomain {
    lo: Vec<f64>,
    h: f64,
    dims: Vec<usize>,
    mask: Vec<NodeClass>,
}

impl GridDomain {
    /// Grid of `dims` cells starting at `lo`, all nodes interior.
    pub fn new(lo: Vec<f64>, h: f64, dims: Vec<usize>) -> Result<Self, GridError> {
        if lo.is_empty() || lo.len() != dims.len() {
            return Err(GridError::Invalid("dimension mismatch".into()));
        }
        if !h.is_finite() || h <= 0.0 {
            return Err(GridError::Invalid("spacing h must be > 0".into()));
        }
        if dims.contains(&0) {
            return Err(GridError::Invalid("empty axis".into()));
        }
        let n_nodes = dims.iter().product();
        Ok(GridDomain {
            lo,
            h,
            dims,
            mask: vec![NodeClass::Interior; n_nodes],
        })
    }

    /// Grid covering `[lo, hi]` with spacing `h` (cell count rounded up).
    pub fn covering(lo: &[f64], hi: &[f64], h: f64) -> Result<Self, GridError> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(GridError::Invalid("dimension mismatch".into()));
        }
        let dims: Vec<usize> = lo
            .iter()
            .zip(hi)
            .map(|(l, u)| ((u - l) / h).ceil().max(1.0) as usize)
            .collect();
        GridDomain::new(lo.to_vec(), h, dims)
    }

    /// Symmetric grid over `[-extent, extent]^n`.
    pub fn symmetric(n: usize, extent: f64, h: f64) -> Result<Self, GridError> {
        let cells_half = (extent / h).ceil() as usize;
        let cells = 2 * cells_half;
        let lo = vec![-(cells_half as f64) * h; n];
        GridDomain::new(lo, h, vec![cells; n])
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_nodes(&self) -> usize {
        self.mask.len()
    }

    /// Cell volume `h^n`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }

    /// Squared cell volume `h^{2n}` (pair weight of the double sum).
    pub fn pair_weight(&self) -> f64 {
        let v = self.cell_volume();
        v * v
    }

    pub fn multi_index(&self, i: usize) -> Vec<usize> {
        let mut rem = i;
        let mut m = vec![0usize; self.dim()];
        for k in (0..self.dim()).rev() {
            m[k] = rem % self.dims[k];
            rem /= self.dims[k];
        }
        m
    }

    pub fn flat_index(&self, m: &[usize]) -> usize {
        let mut i = 0;
        for (dim, mk) in self.dims.iter().zip(m) {
            i = i * dim + mk;
        }
        i
    }

    pub fn node_center(&self, i: usize) -> Vec<f64> {
        let m = self.multi_index(i);
        m.iter()
            .enumerate()
            .map(|(k, &mk)| self.lo[k] + (mk as f64 + 0.5) * self.h)
            .collect()
    }

    /// Low corner of node `i`'s cell.
    pub fn cell_lo(&self, i: usize) -> Vec<f64> {
        let m = self.multi_index(i);
        m.iter()
            .enumerate()
            .map(|(k, &mk)| self.lo[k] + mk as f64 * self.h)
            .collect()
    }

    pub fn mask(&self) -> &[NodeClass] {
        &self.mask
    }

    pub fn node_class(&self, i: usize) -> NodeClass {
        self.mask[i]
    }

    pub fn set_mask(&mut self, mask: Vec<NodeClass>) -> Result<(), GridError> {
        if mask.len() != self.n_nodes() {
            return Err(GridError::FieldMismatch {
                expected: self.n_nodes(),
                found: mask.len(),
            });
        }
        self.mask = mask;
        Ok(())
    }

    /// Classify nodes by center: inside `u_window` is interior, else exterior.
    pub fn classify_by_window(&mut self, u_window: &Window) {
        for i in 0..self.n_nodes() {
            let c = self.node_center(i);
            self.mask[i] = if u_window.contains(&c) {
                NodeClass::Interior
            } else {
                NodeClass::Exterior
            };
        }
    }

    /// Mark as obstacles those U-nodes whose cells intersect any of the
    /// given balls (obstacles outside U are clipped by the mask).
    pub fn pin_obstacle_balls(&mut self, balls: &[(Vec<f64>, f64)]) {
        for i in 0..self.n_nodes() {
            if self.mask[i] != NodeClass::Interior {
                continue;
            }
            let lo = self.cell_lo(i);
            for (center, radius) in balls {
                if cell_intersects_ball(&lo, self.h, center, *radius) {
                    self.mask[i] = NodeClass::Obstacle;
                    break;
                }
            }
        }
    }

    pub fn nodes_with_class(&self, class: NodeClass) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&i| self.mask[i] == class)
            .collect()
    }

    /// U nodes = interior plus obstacle nodes.
    pub fn u_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&i| self.mask[i] != NodeClass::Exterior)
            .collect()
    }

    /// Nodes whose center lies in the closed ball of `radius` at `center`.
    pub fn nodes_in_ball(&self, center: &[f64], radius: f64) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&i| {
                let c = self.node_center(i);
                let d2: f64 = c.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                d2 <= radius * radius
            })
            .collect()
    }

    /// Offset of node `j` relative to node `i` as signed per-axis counts.
    pub fn offset(&self, i: usize, j: usize) -> Vec<i64> {
        let mi = self.multi_index(i);
        let mj = self.multi_index(j);
        mi.iter()
            .zip(&mj)
            .map(|(a, b)| *b as i64 - *a as i64)
            .collect()
    }
}

/// Axis-aligned cell `[lo, lo+h]^n` vs closed ball intersection test.
pub fn cell_intersects_ball(cell_lo: &[f64], h: f64, center: &[f64], radius: f64) -> bool {
    let mut d2 = 0.0;
    for k in 0..cell_lo.len() {
        let c = center[k].clamp(cell_lo[k], cell_lo[k] + h);
        d2 += (center[k] - c) * (center[k] - c);
    }
    d2 <= radius * radius
}

/// One value per grid node, row-major node order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub values: Vec<f64>,
}

impl GridField {
    pub fn zeros(grid: &GridDomain) -> GridField {
        GridField {
            values: vec![0.0; grid.n_nodes()],
        }
    }

    pub fn constant(grid: &GridDomain, v: f64) -> GridField {
        GridField {
            values: vec![v; grid.n_nodes()],
        }
    }

    pub fn from_fn(grid: &GridDomain, f: impl Fn(&[f64]) -> f64) -> GridField {
        GridField {
            values: (0..grid.n_nodes()).map(|i| f(&grid.node_center(i))).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_grid(&self, grid: &GridDomain) -> Result<(), GridError> {
        if self.len() != grid.n_nodes() {
            return Err(GridError::FieldMismatch {
                expected: grid.n_nodes(),
                found: self.len(),
            });
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(GridError::Invalid("field holds non-finite values".into()));
        }
        Ok(())
    }

    /// Discrete `L^p` norm over a node subset: `(h^n sum |u_i|^p)^{1/p}`.
    pub fn lp_norm(&self, grid: &GridDomain, nodes: &[usize], p: f64) -> f64 {
        let hn = grid.cell_volume();
        let sum: f64 = nodes.iter().map(|&i| self.values[i].abs().powf(p)).sum();
        (hn * sum).powf(1.0 / p)
    }

    /// Serialize one value per line in node index order.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for v in &self.values {
            out.push_str(&format!("{v:.16e}\n"));
        }
        out
    }
}
