//! Variational engine for pinned nonlocal problems.
//!
//! Minimizes
//!
//! ```text
//! J(u) = E(u, scope) + h^n sum_i z_i |u_i|^p  -  p h^n sum_i f_i u_i
//! ```
//!
//! over node values with equality pins, an optional box constraint, and an
//! optional interaction scope (pairs counted only inside a node subset).
//! Three routes:
//!
//! * accelerated projected gradient with backtracking and monotone restart
//!   (any `p > 1`, any constraint set), the general path;
//! * preconditioned conjugate gradient on the pinned linear system
//!   (`p = 2`), matrix-free, with a Toeplitz/FFT fast product on
//!   one-dimensional contiguous scopes;
//! * dense Cholesky with equality pinning (`p = 2`, small free sets), kept
//!   as an independent cross-check of the iterative paths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{KernelSpec, KernelTable};
use crate::fft::ToeplitzConv;
use crate::grid::{GridDomain, GridField};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("solver diverged: {0} iterations without meeting tolerance (kkt {1:.3e})")]
    Diverged(usize, f64),
    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),
    #[error("direct solve failed: {0}")]
    DirectSolve(String),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
}

/// Termination thresholds of the projected-gradient path.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverTolerances {
    /// Relative energy decrease over `stall_window` iterations below this
    /// counts as stalled.
    pub rel_energy_decrease: f64,
    pub stall_window: usize,
    /// Projected-gradient norm threshold factor: converged when
    /// `pg_norm < pg_tol_factor * (1 + |J|)`.
    pub pg_tol_factor: f64,
    pub max_iterations: usize,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        SolverTolerances {
            rel_energy_decrease: 1e-10,
            stall_window: 10,
            pg_tol_factor: 1e-8,
            max_iterations: 50_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// CG for `p = 2`, projected gradient otherwise.
    Auto,
    ProjectedGradient,
    ConjugateGradient,
    Direct,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub field: GridField,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub objective: f64,
}

/// A pinned, box-constrained minimization of the discrete functional.
pub struct VariationalProblem<'a> {
    pub grid: &'a GridDomain,
    pub kernel: &'a KernelSpec,
    pub table: &'a KernelTable,
    /// Pairs are counted within this node subset; `None` means all nodes.
    pub scope: Option<Vec<usize>>,
    /// Fixed node values (equality pins).
    pub pins: Vec<Option<f64>>,
    pub box_bounds: Option<(f64, f64)>,
    /// Zero-order coefficient per node (`z_i` above).
    pub zero_order: Vec<f64>,
    /// Source per node (`f_i` above).
    pub source: Vec<f64>,
}

struct Workspace {
    scope: Vec<usize>,
    scope_multis: Vec<Vec<usize>>,
    free: Vec<usize>,
    p: f64,
    hn: f64,
    w2n: f64,
}

impl<'a> VariationalProblem<'a> {
    fn workspace(&self) -> Workspace {
        let scope: Vec<usize> = match &self.scope {
            Some(s) => s.clone(),
            None => (0..self.grid.n_nodes()).collect(),
        };
        let scope_multis = scope.iter().map(|&i| self.grid.multi_index(i)).collect();
        let free: Vec<usize> = scope
            .iter()
            .copied()
            .filter(|&i| self.pins[i].is_none())
            .collect();
        Workspace {
            scope,
            scope_multis,
            free,
            p: self.kernel.params.p,
            hn: self.grid.cell_volume(),
            w2n: self.grid.pair_weight(),
        }
    }

    fn pinned_field(&self) -> GridField {
        let mut w = GridField::zeros(self.grid);
        for (i, pin) in self.pins.iter().enumerate() {
            if let Some(v) = pin {
                w.values[i] = *v;
            }
        }
        w
    }

    /// Full objective at a complete field.
    pub fn objective(&self, w: &GridField) -> f64 {
        let ws = self.workspace();
        self.objective_ws(&ws, w)
    }

    fn objective_ws(&self, ws: &Workspace, w: &GridField) -> f64 {
        let e = crate::energy::energy(w, &ws.scope, self.kernel, self.grid, self.table)
            .unwrap_or(0.0);
        let mut zero = 0.0;
        let mut lin = 0.0;
        for i in 0..w.len() {
            if self.zero_order[i] != 0.0 {
                zero += self.zero_order[i] * pow_abs(w.values[i], ws.p);
            }
            if self.source[i] != 0.0 {
                lin += self.source[i] * w.values[i];
            }
        }
        e + ws.hn * zero - ws.p * ws.hn * lin
    }

    /// Gradient of the objective restricted to nodes in scope.
    fn gradient_ws(&self, ws: &Workspace, w: &GridField, out: &mut Vec<f64>) {
        out.clear();
        out.resize(ws.scope.len(), 0.0);
        let p = ws.p;
        let grads: Vec<f64> = (0..ws.scope.len())
            .into_par_iter()
            .map(|r| {
                let i = ws.scope[r];
                let ui = w.values[i];
                let mut acc = 0.0;
                let mut comp = 0.0;
                for c in 0..ws.scope.len() {
                    if c == r {
                        continue;
                    }
                    let k = self.table.pair(&ws.scope_multis[r], &ws.scope_multis[c]);
                    let v = k * pow_abs_derivative(ui - w.values[ws.scope[c]], p);
                    let y = v - comp;
                    let t = acc + y;
                    comp = (t - acc) - y;
                    acc = t;
                }
                let mut g = 2.0 * ws.w2n * acc;
                if self.zero_order[i] != 0.0 {
                    g += ws.hn * self.zero_order[i] * pow_abs_derivative(ui, p);
                }
                g - p * ws.hn * self.source[i]
            })
            .collect();
        out.copy_from_slice(&grads);
    }

    fn project(&self, v: f64) -> f64 {
        match self.box_bounds {
            Some((lo, hi)) => v.clamp(lo, hi),
            None => v,
        }
    }

    pub fn solve(&self, tol: &SolverTolerances, method: Method) -> Result<SolveOutcome, SolveError> {
        let start = self.pinned_field();
        self.solve_from(start, tol, method)
    }

    /// Solve starting from a caller-supplied field (pins are re-imposed).
    pub fn solve_from(
        &self,
        start: GridField,
        tol: &SolverTolerances,
        method: Method,
    ) -> Result<SolveOutcome, SolveError> {
        start.check_grid(self.grid)?;
        let ws = self.workspace();
        if ws.free.is_empty() {
            let w = self.pinned_field();
            let objective = self.objective_ws(&ws, &w);
            return Ok(SolveOutcome {
                field: w,
                iterations: 0,
                kkt_residual: 0.0,
                objective,
            });
        }
        let mut w0 = start;
        for (i, pin) in self.pins.iter().enumerate() {
            if let Some(v) = pin {
                w0.values[i] = *v;
            }
        }
        for &i in &ws.free {
            w0.values[i] = self.project(w0.values[i]);
        }
        match method {
            Method::Auto => {
                if ws.p == 2.0 {
                    self.solve_cg(&ws, w0, tol)
                } else {
                    self.solve_pg(&ws, w0, tol)
                }
            }
            Method::ProjectedGradient => self.solve_pg(&ws, w0, tol),
            Method::ConjugateGradient => self.solve_cg(&ws, w0, tol),
            Method::Direct => self.solve_direct(&ws, w0),
        }
    }

    // ---------------------------------------------------------------
    // Accelerated projected gradient (backtracking, monotone restart)
    // ---------------------------------------------------------------

    fn solve_pg(
        &self,
        ws: &Workspace,
        w0: GridField,
        tol: &SolverTolerances,
    ) -> Result<SolveOutcome, SolveError> {
        let nf = ws.free.len();
        let scope_pos: std::collections::HashMap<usize, usize> = ws
            .scope
            .iter()
            .enumerate()
            .map(|(r, &i)| (i, r))
            .collect();
        let free_rows: Vec<usize> = ws.free.iter().map(|i| scope_pos[i]).collect();

        let mut w = w0;
        let mut x: Vec<f64> = ws.free.iter().map(|&i| w.values[i]).collect();
        let mut x_prev = x.clone();
        let mut t_mom = 1.0f64;
        let mut lip = 1.0f64;
        let mut grad_scope = Vec::new();
        let mut fx = self.objective_ws(ws, &w);
        let mut history: Vec<f64> = vec![fx];
        let mut kkt = f64::INFINITY;

        let set_free = |w: &mut GridField, vals: &[f64]| {
            for (k, &i) in ws.free.iter().enumerate() {
                w.values[i] = vals[k];
            }
        };

        for iter in 1..=tol.max_iterations {
            // extrapolated point
            let beta = (t_mom - 1.0) / (0.5 * (1.0 + (1.0 + 4.0 * t_mom * t_mom).sqrt()));
            let y: Vec<f64> = x
                .iter()
                .zip(&x_prev)
                .map(|(a, b)| self.project(a + beta * (a - b)))
                .collect();
            set_free(&mut w, &y);
            let fy = self.objective_ws(ws, &w);
            self.gradient_ws(ws, &w, &mut grad_scope);
            let gy: Vec<f64> = free_rows.iter().map(|&r| grad_scope[r]).collect();

            // backtracking on the local Lipschitz estimate
            let mut x_new;
            let mut f_new;
            loop {
                x_new = y
                    .iter()
                    .zip(&gy)
                    .map(|(yi, gi)| self.project(yi - gi / lip))
                    .collect::<Vec<f64>>();
                set_free(&mut w, &x_new);
                f_new = self.objective_ws(ws, &w);
                let mut quad = fy;
                for k in 0..nf {
                    let d = x_new[k] - y[k];
                    quad += gy[k] * d + 0.5 * lip * d * d;
                }
                if f_new <= quad + 1e-14 * (1.0 + quad.abs()) || lip > 1e18 {
                    break;
                }
                lip *= 2.0;
            }

            // monotone safeguard: never accept an increase over the incumbent
            if f_new > fx {
                set_free(&mut w, &x);
                self.gradient_ws(ws, &w, &mut grad_scope);
                let gx: Vec<f64> = free_rows.iter().map(|&r| grad_scope[r]).collect();
                loop {
                    x_new = x
                        .iter()
                        .zip(&gx)
                        .map(|(xi, gi)| self.project(xi - gi / lip))
                        .collect();
                    set_free(&mut w, &x_new);
                    f_new = self.objective_ws(ws, &w);
                    let mut quad = fx;
                    for k in 0..nf {
                        let d = x_new[k] - x[k];
                        quad += gx[k] * d + 0.5 * lip * d * d;
                    }
                    if f_new <= quad + 1e-14 * (1.0 + quad.abs()) || lip > 1e18 {
                        break;
                    }
                    lip *= 2.0;
                }
                t_mom = 1.0;
            } else {
                t_mom = 0.5 * (1.0 + (1.0 + 4.0 * t_mom * t_mom).sqrt());
            }

            x_prev = std::mem::replace(&mut x, x_new);
            fx = f_new.min(fx);
            history.push(fx);
            // mild decay lets the step size track local curvature
            lip = (lip * 0.9).max(1e-12);

            // projected-gradient norm at the incumbent
            set_free(&mut w, &x);
            self.gradient_ws(ws, &w, &mut grad_scope);
            let mut pg2 = 0.0;
            for (k, &r) in free_rows.iter().enumerate() {
                let step = self.project(x[k] - grad_scope[r]) - x[k];
                pg2 += step * step;
            }
            kkt = pg2.sqrt();

            let stalled = history.len() > tol.stall_window && {
                let prev = history[history.len() - 1 - tol.stall_window];
                (prev - fx).abs() <= tol.rel_energy_decrease * (1.0 + fx.abs())
            };
            if stalled && kkt < tol.pg_tol_factor * (1.0 + fx.abs()) {
                set_free(&mut w, &x);
                return Ok(SolveOutcome {
                    field: w,
                    iterations: iter,
                    kkt_residual: kkt,
                    objective: fx,
                });
            }
        }
        Err(SolveError::Diverged(tol.max_iterations, kkt))
    }

    // ---------------------------------------------------------------
    // Conjugate gradient on the pinned linear system (p = 2)
    // ---------------------------------------------------------------

    fn linear_operator(&self, ws: &Workspace) -> LinearOp<'_> {
        // row sums S_r over the scope and an optional Toeplitz fast path
        let contiguous_1d = self.grid.dim() == 1
            && ws
                .scope
                .windows(2)
                .all(|ab| ab[1] == ab[0] + 1);
        let m = ws.scope.len();
        let (row_sums, toeplitz) = if contiguous_1d {
            let row: Vec<f64> = (0..m)
                .map(|d| if d == 0 { 0.0 } else { self.table.at_offset_1d(d) })
                .collect();
            // prefix sums give S_r = sum_{d=1..r} k_d + sum_{d=1..m-1-r} k_d
            let mut prefix = vec![0.0; m + 1];
            for d in 1..m {
                prefix[d + 1] = prefix[d] + row[d];
            }
            let sums: Vec<f64> = (0..m).map(|r| prefix[r + 1] + prefix[m - r]).collect();
            (sums, Some(ToeplitzConv::new(&row)))
        } else {
            let sums: Vec<f64> = (0..m)
                .into_par_iter()
                .map(|r| {
                    let mut acc = 0.0;
                    for c in 0..m {
                        if c != r {
                            acc += self.table.pair(&ws.scope_multis[r], &ws.scope_multis[c]);
                        }
                    }
                    acc
                })
                .collect();
            (sums, None)
        };
        LinearOp {
            problem: self,
            row_sums,
            toeplitz,
        }
    }

    fn solve_cg(
        &self,
        ws: &Workspace,
        w0: GridField,
        tol: &SolverTolerances,
    ) -> Result<SolveOutcome, SolveError> {
        if ws.p != 2.0 {
            return self.solve_pg(ws, w0, tol);
        }
        let op = self.linear_operator(ws);
        let m = ws.scope.len();
        let free_pos: Vec<usize> = {
            let scope_pos: std::collections::HashMap<usize, usize> =
                ws.scope.iter().enumerate().map(|(r, &i)| (i, r)).collect();
            ws.free.iter().map(|i| scope_pos[i]).collect()
        };

        // rhs: restrict(2 h^n f - L(w_pin)) over free rows
        let mut pin_scope = vec![0.0; m];
        for (r, &i) in ws.scope.iter().enumerate() {
            if let Some(v) = self.pins[i] {
                pin_scope[r] = v;
            }
        }
        let mut l_pin = vec![0.0; m];
        op.apply(&pin_scope, &mut l_pin, ws);
        let b: Vec<f64> = free_pos
            .iter()
            .map(|&r| 2.0 * ws.hn * self.source[ws.scope[r]] - l_pin[r])
            .collect();

        // Jacobi preconditioner from the operator diagonal
        let diag: Vec<f64> = free_pos
            .iter()
            .map(|&r| {
                let i = ws.scope[r];
                4.0 * ws.w2n * op.row_sums[r] + 2.0 * ws.hn * self.zero_order[i]
            })
            .collect();

        let nf = ws.free.len();
        let mut x: Vec<f64> = ws.free.iter().map(|&i| w0.values[i]).collect();
        let mut scope_vec = vec![0.0; m];
        let mut out = vec![0.0; m];
        let apply_free = |x: &[f64], scope_vec: &mut Vec<f64>, out: &mut Vec<f64>| -> Vec<f64> {
            scope_vec.iter_mut().for_each(|v| *v = 0.0);
            for (k, &r) in free_pos.iter().enumerate() {
                scope_vec[r] = x[k];
            }
            op.apply(scope_vec, out, ws);
            free_pos.iter().map(|&r| out[r]).collect()
        };

        let ax = apply_free(&x, &mut scope_vec, &mut out);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di.max(1e-300)).collect();
        let mut pdir = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let cg_tol = 1e-12 * b_norm;
        let max_cg = (8 * nf).max(20_000);

        let mut iterations = 0;
        for it in 1..=max_cg {
            iterations = it;
            let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r_norm <= cg_tol {
                iterations = it - 1;
                break;
            }
            let ap = apply_free(&pdir, &mut scope_vec, &mut out);
            let pap: f64 = pdir.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                return Err(SolveError::DirectSolve(
                    "operator lost positive definiteness".into(),
                ));
            }
            let alpha = rz / pap;
            for k in 0..nf {
                x[k] += alpha * pdir[k];
                r[k] -= alpha * ap[k];
            }
            for k in 0..nf {
                z[k] = r[k] / diag[k].max(1e-300);
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..nf {
                pdir[k] = z[k] + beta * pdir[k];
            }
        }

        let mut w = self.pinned_field();
        for (k, &i) in ws.free.iter().enumerate() {
            w.values[i] = x[k];
        }
        // box excursions beyond solver noise hand off to the projected path
        if let Some((lo, hi)) = self.box_bounds {
            let worst = w
                .values
                .iter()
                .enumerate()
                .filter(|(i, _)| self.pins[*i].is_none())
                .map(|(_, v)| (lo - v).max(v - hi).max(0.0))
                .fold(0.0f64, f64::max);
            if worst > 1e-9 {
                return self.solve_pg(ws, w, tol);
            }
            for &i in &ws.free {
                w.values[i] = w.values[i].clamp(lo, hi);
            }
        }
        // quadratic form: J = (1/2) w . L(w) - 2 h^n f . w, gradient L(w) - 2 h^n f
        let m = ws.scope.len();
        let mut w_scope = vec![0.0; m];
        for (r, &i) in ws.scope.iter().enumerate() {
            w_scope[r] = w.values[i];
        }
        let mut lw = vec![0.0; m];
        op.apply(&w_scope, &mut lw, ws);
        let mut objective = 0.0;
        for r in 0..m {
            let i = ws.scope[r];
            objective += 0.5 * w_scope[r] * lw[r] - 2.0 * ws.hn * self.source[i] * w_scope[r];
        }
        let mut pg2 = 0.0;
        for &r in &free_pos {
            let i = ws.scope[r];
            let g = lw[r] - 2.0 * ws.hn * self.source[i];
            let v = w_scope[r];
            let step = self.project(v - g) - v;
            pg2 += step * step;
        }
        Ok(SolveOutcome {
            field: w,
            iterations,
            kkt_residual: pg2.sqrt(),
            objective,
        })
    }

    // ---------------------------------------------------------------
    // Dense Cholesky with equality pinning (p = 2 cross-check)
    // ---------------------------------------------------------------

    fn solve_direct(&self, ws: &Workspace, _w0: GridField) -> Result<SolveOutcome, SolveError> {
        if ws.p != 2.0 {
            return Err(SolveError::DirectSolve("direct path requires p = 2".into()));
        }
        let nf = ws.free.len();
        if nf > 5000 {
            return Err(SolveError::DirectSolve(format!(
                "direct path limited to 5000 free nodes, got {nf}"
            )));
        }
        let op = self.linear_operator(ws);
        let scope_pos: std::collections::HashMap<usize, usize> =
            ws.scope.iter().enumerate().map(|(r, &i)| (i, r)).collect();
        let free_pos: Vec<usize> = ws.free.iter().map(|i| scope_pos[i]).collect();

        // assemble A over free nodes
        let mut a = vec![0.0f64; nf * nf];
        for (kr, &r) in free_pos.iter().enumerate() {
            let i = ws.scope[r];
            for (kc, &c) in free_pos.iter().enumerate() {
                a[kr * nf + kc] = if kr == kc {
                    4.0 * ws.w2n * op.row_sums[r] + 2.0 * ws.hn * self.zero_order[i]
                } else {
                    -4.0 * ws.w2n * self.table.pair(&ws.scope_multis[r], &ws.scope_multis[c])
                };
            }
        }
        let m = ws.scope.len();
        let mut pin_scope = vec![0.0; m];
        for (r, &i) in ws.scope.iter().enumerate() {
            if let Some(v) = self.pins[i] {
                pin_scope[r] = v;
            }
        }
        let mut l_pin = vec![0.0; m];
        op.apply(&pin_scope, &mut l_pin, ws);
        let mut b: Vec<f64> = free_pos
            .iter()
            .map(|&r| 2.0 * ws.hn * self.source[ws.scope[r]] - l_pin[r])
            .collect();

        cholesky_solve_in_place(&mut a, &mut b, nf)?;

        let mut w = self.pinned_field();
        for (k, &i) in ws.free.iter().enumerate() {
            w.values[i] = b[k];
        }
        if let Some((lo, hi)) = self.box_bounds {
            for &i in &ws.free {
                w.values[i] = w.values[i].clamp(lo, hi);
            }
        }
        let objective = self.objective_ws(ws, &w);
        let mut grad_scope = Vec::new();
        self.gradient_ws(ws, &w, &mut grad_scope);
        let mut pg2 = 0.0;
        for (k, &r) in free_pos.iter().enumerate() {
            let v = w.values[ws.free[k]];
            let step = self.project(v - grad_scope[r]) - v;
            pg2 += step * step;
        }
        Ok(SolveOutcome {
            field: w,
            iterations: 1,
            kkt_residual: pg2.sqrt(),
            objective,
        })
    }
}

struct LinearOp<'a> {
    problem: &'a VariationalProblem<'a>,
    row_sums: Vec<f64>,
    toeplitz: Option<ToeplitzConv>,
}

impl LinearOp<'_> {
    /// `out_r = 4 h^{2n} (S_r v_r - (K v)_r) + 2 h^n z_i v_r` over scope rows.
    fn apply(&self, v: &[f64], out: &mut [f64], ws: &Workspace) {
        let m = v.len();
        match &self.toeplitz {
            Some(conv) => {
                conv.apply(v, out);
                for r in 0..m {
                    let i = ws.scope[r];
                    out[r] = 4.0 * ws.w2n * (self.row_sums[r] * v[r] - out[r])
                        + 2.0 * ws.hn * self.problem.zero_order[i] * v[r];
                }
            }
            None => {
                let table = self.problem.table;
                let results: Vec<f64> = (0..m)
                    .into_par_iter()
                    .map(|r| {
                        let mut conv = 0.0;
                        for (c, vc) in v.iter().enumerate() {
                            if c != r {
                                conv += table.pair(&ws.scope_multis[r], &ws.scope_multis[c])
                                    * vc;
                            }
                        }
                        let i = ws.scope[r];
                        4.0 * ws.w2n * (self.row_sums[r] * v[r] - conv)
                            + 2.0 * ws.hn * self.problem.zero_order[i] * v[r]
                    })
                    .collect();
                out.copy_from_slice(&results);
            }
        }
    }
}

/// In-place Cholesky factorization and solve of `A x = b`, `A` SPD row-major.
fn cholesky_solve_in_place(a: &mut [f64], b: &mut [f64], n: usize) -> Result<(), SolveError> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 {
            return Err(SolveError::DirectSolve(format!(
                "matrix not positive definite at pivot {j}"
            )));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / d;
        }
    }
    // forward: L y = b
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= a[i * n + k] * b[k];
        }
        b[i] = v / a[i * n + i];
    }
    // backward: L^T x = y
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v -= a[k * n + i] * b[k];
        }
        b[i] = v / a[i * n + i];
    }
    Ok(())
}

#[inline]
fn pow_abs(t: f64, p: f64) -> f64 {
    if p == 2.0 {
        t * t
    } else {
        t.abs().powf(p)
    }
}

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
