//! Graph-regularized alternating least squares.
//!
//! Minimizes
//!
//! ```text
//! ½‖P_Ω(M − ABᵀ)‖²_F + λ_L/2 {Tr(AᵀL_rA) + Tr(BᵀL_cB)} + λ_a/2‖A‖²_F + λ_b/2‖B‖²_F
//! ```
//!
//! by exact alternating minimization over A and B. Each half-step is a
//! positive-definite linear system over all factor rows at once, coupled by
//! the graph Laplacian, and solved with conjugate gradient against an
//! implicit operator:
//!
//! ```text
//! (H·V)_i = G_i v_i + λ_L (L V)_i + λ v_i,   G_i = Σ_{j∈Ω_i} f_j f_jᵀ
//! ```
//!
//! where `f_j` are the rows of the fixed factor. The r × r blocks `G_i` are
//! formed per row; the full Hessian is never assembled. Their Cholesky
//! factors (shifted by the diagonal of the Laplacian term) serve as a
//! block-Jacobi preconditioner.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::cg::{conjugate_gradient, CgStats};
use super::CompletionResult;
use crate::data::ObservationMatrix;
use crate::error::{Error, Result};
use crate::graph::Laplacian;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GralsParams {
    pub rank: usize,
    pub lambda_l: f64,
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub max_outer: usize,
    /// Relative objective decrease below which the outer loop stops.
    pub outer_tol: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub seed: u64,
}

impl Default for GralsParams {
    fn default() -> Self {
        Self {
            rank: 10,
            lambda_l: 0.001,
            lambda_a: 0.005,
            lambda_b: 0.005,
            max_outer: 100,
            outer_tol: 1e-6,
            cg_tol: 1e-8,
            cg_max_iter: 500,
            seed: 0,
        }
    }
}

impl GralsParams {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::invalid("rank must be at least 1"));
        }
        for (name, v) in [
            ("lambda_L", self.lambda_l),
            ("lambda_a", self.lambda_a),
            ("lambda_b", self.lambda_b),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} must be a non-negative number, got {v}"
                )));
            }
        }
        if !(self.cg_tol > 0.0) {
            return Err(Error::invalid("cg_tol must be positive"));
        }
        Ok(())
    }
}

/// A = m × r and B = n × r with X = A·Bᵀ.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl FactorPair {
    pub fn rank(&self) -> usize {
        self.a.ncols()
    }

    pub fn product(&self) -> DMatrix<f64> {
        &self.a * self.b.transpose()
    }
}

pub fn to_row_major(x: &DMatrix<f64>) -> Vec<f64> {
    x.transpose().as_slice().to_vec()
}

pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

/// Observed entries grouped by row (or by column): compressed index lists.
#[derive(Debug, Clone)]
struct Grouped {
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl Grouped {
    fn group(&self, k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.ptr[k]..self.ptr[k + 1];
        self.idx[r.clone()]
            .iter()
            .copied()
            .zip(self.val[r].iter().copied())
    }

    fn groups(&self) -> usize {
        self.ptr.len() - 1
    }

    fn by_rows(m: &ObservationMatrix) -> Self {
        let (rows, cols) = m.shape();
        let mut ptr = vec![0];
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for i in 0..rows {
            for j in 0..cols {
                if let Some(v) = m.get(i, j) {
                    idx.push(j);
                    val.push(v);
                }
            }
            ptr.push(idx.len());
        }
        Grouped { ptr, idx, val }
    }

    fn by_cols(m: &ObservationMatrix) -> Self {
        let (rows, cols) = m.shape();
        let mut ptr = vec![0];
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for j in 0..cols {
            for i in 0..rows {
                if let Some(v) = m.get(i, j) {
                    idx.push(i);
                    val.push(v);
                }
            }
            ptr.push(idx.len());
        }
        Grouped { ptr, idx, val }
    }
}

/// In-place Cholesky of a small dense SPD block (row-major, lower factor).
/// Returns false if the block is not numerically positive definite.
fn cholesky_in_place(a: &mut [f64], r: usize) -> bool {
    for j in 0..r {
        let mut d = a[j * r + j];
        for k in 0..j {
            d -= a[j * r + k] * a[j * r + k];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        a[j * r + j] = d;
        for i in j + 1..r {
            let mut s = a[i * r + j];
            for k in 0..j {
                s -= a[i * r + k] * a[j * r + k];
            }
            a[i * r + j] = s / d;
        }
        for k in j + 1..r {
            a[j * r + k] = 0.0;
        }
    }
    true
}

fn cholesky_solve(l: &[f64], r: usize, b: &[f64], out: &mut [f64]) {
    for i in 0..r {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * r + k] * out[k];
        }
        out[i] = s / l[i * r + i];
    }
    for i in (0..r).rev() {
        let mut s = out[i];
        for k in i + 1..r {
            s -= l[k * r + i] * out[k];
        }
        out[i] = s / l[i * r + i];
    }
}

/// One half-step of GRALS: minimize the objective over one factor with the
/// other held fixed. Vectors are row-major `n_own × r` blocks.
pub struct FactorSubproblem<'a> {
    rank: usize,
    n_own: usize,
    gram: Vec<f64>,
    precond: Vec<f64>,
    // false where a block was singular; the preconditioner is the identity there
    precond_ok: Vec<bool>,
    rhs: Vec<f64>,
    laplacian: &'a Laplacian,
    lambda_l: f64,
    lambda_reg: f64,
}

impl<'a> FactorSubproblem<'a> {
    /// Subproblem for A (rows of M) with B fixed.
    pub fn for_rows(
        m: &ObservationMatrix,
        b: &DMatrix<f64>,
        laplacian: &'a Laplacian,
        lambda_l: f64,
        lambda_a: f64,
    ) -> Self {
        let fixed = to_row_major(b);
        Self::build(
            &Grouped::by_rows(m),
            &fixed,
            b.ncols(),
            laplacian,
            lambda_l,
            lambda_a,
        )
    }

    /// Subproblem for B (columns of M) with A fixed.
    pub fn for_cols(
        m: &ObservationMatrix,
        a: &DMatrix<f64>,
        laplacian: &'a Laplacian,
        lambda_l: f64,
        lambda_b: f64,
    ) -> Self {
        let fixed = to_row_major(a);
        Self::build(
            &Grouped::by_cols(m),
            &fixed,
            a.ncols(),
            laplacian,
            lambda_l,
            lambda_b,
        )
    }

    fn build(
        obs: &Grouped,
        fixed: &[f64],
        r: usize,
        laplacian: &'a Laplacian,
        lambda_l: f64,
        lambda_reg: f64,
    ) -> Self {
        let n_own = obs.groups();
        assert_eq!(laplacian.dim(), n_own, "Laplacian dimension mismatch");
        let use_graph = lambda_l != 0.0;
        let mut gram = vec![0.0; n_own * r * r];
        let mut rhs = vec![0.0; n_own * r];
        for i in 0..n_own {
            let g = &mut gram[i * r * r..(i + 1) * r * r];
            let b = &mut rhs[i * r..(i + 1) * r];
            for (j, v) in obs.group(i) {
                let f = &fixed[j * r..(j + 1) * r];
                for p in 0..r {
                    b[p] += v * f[p];
                    for q in 0..=p {
                        g[p * r + q] += f[p] * f[q];
                    }
                }
            }
            for p in 0..r {
                for q in 0..p {
                    g[q * r + p] = g[p * r + q];
                }
            }
        }
        let mut precond = gram.clone();
        let mut precond_ok = vec![true; n_own];
        for i in 0..n_own {
            let block = &mut precond[i * r * r..(i + 1) * r * r];
            let shift = lambda_reg
                + if use_graph {
                    lambda_l * laplacian.diagonal()[i]
                } else {
                    0.0
                };
            let trace: f64 = (0..r).map(|p| block[p * r + p]).sum();
            // a tiny jitter only affects the preconditioner, never the solution
            let jitter = 1e-12 * (trace / r as f64).max(1e-300);
            for p in 0..r {
                block[p * r + p] += shift + jitter;
            }
            precond_ok[i] = cholesky_in_place(block, r);
        }
        Self {
            rank: r,
            n_own,
            gram,
            precond,
            precond_ok,
            rhs,
            laplacian,
            lambda_l,
            lambda_reg,
        }
    }

    pub fn dim(&self) -> usize {
        self.n_own * self.rank
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// out = H·v.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let r = self.rank;
        if self.lambda_l != 0.0 {
            self.laplacian.apply_rows(v, r, out);
            for o in out.iter_mut() {
                *o *= self.lambda_l;
            }
        } else {
            out.iter_mut().for_each(|o| *o = 0.0);
        }
        for i in 0..self.n_own {
            let g = &self.gram[i * r * r..(i + 1) * r * r];
            let vi = &v[i * r..(i + 1) * r];
            let oi = &mut out[i * r..(i + 1) * r];
            for p in 0..r {
                let row = &g[p * r..(p + 1) * r];
                let s: f64 = row.iter().zip(vi).map(|(a, b)| a * b).sum();
                oi[p] += s + self.lambda_reg * vi[p];
            }
        }
    }

    fn precondition(&self, res: &[f64], out: &mut [f64]) {
        let r = self.rank;
        for i in 0..self.n_own {
            let src = &res[i * r..(i + 1) * r];
            let dst = &mut out[i * r..(i + 1) * r];
            if self.precond_ok[i] {
                cholesky_solve(&self.precond[i * r * r..(i + 1) * r * r], r, src, dst);
            } else {
                dst.copy_from_slice(src);
            }
        }
    }

    /// Runs CG from `x` (warm start) and overwrites it with the solution.
    pub fn solve(&self, x: &mut [f64], tol: f64, max_iter: usize) -> CgStats {
        conjugate_gradient(
            |v, out| self.apply(v, out),
            |res, out| self.precondition(res, out),
            &self.rhs,
            x,
            tol,
            max_iter,
        )
    }
}

/// Value of the GRALS objective for row-major factors.
fn objective(
    rows: &Grouped,
    a: &[f64],
    b: &[f64],
    r: usize,
    l_row: &Laplacian,
    l_col: &Laplacian,
    p: &GralsParams,
) -> f64 {
    let mut data = 0.0;
    for i in 0..rows.groups() {
        let ai = &a[i * r..(i + 1) * r];
        for (j, v) in rows.group(i) {
            let bj = &b[j * r..(j + 1) * r];
            let pred: f64 = ai.iter().zip(bj).map(|(x, y)| x * y).sum();
            data += (v - pred) * (v - pred);
        }
    }
    let mut value = 0.5 * data;
    if p.lambda_l != 0.0 {
        value += 0.5 * p.lambda_l * (l_row.trace_form(a, r) + l_col.trace_form(b, r));
    }
    let sq = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
    value + 0.5 * p.lambda_a * sq(a) + 0.5 * p.lambda_b * sq(b)
}

/// Evaluates the GRALS objective for given factors.
pub fn grals_objective(
    m: &ObservationMatrix,
    factors: &FactorPair,
    l_row: &Laplacian,
    l_col: &Laplacian,
    p: &GralsParams,
) -> f64 {
    let r = factors.rank();
    objective(
        &Grouped::by_rows(m),
        &to_row_major(&factors.a),
        &to_row_major(&factors.b),
        r,
        l_row,
        l_col,
        p,
    )
}

/// Seeded Gaussian factors scaled by 1/√r.
pub fn initial_factors(m: usize, n: usize, rank: usize, seed: u64) -> FactorPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (rank as f64).sqrt();
    let mut draw = |rows: usize| {
        DMatrix::from_fn(rows, rank, |_, _| {
            scale * rng.sample::<f64, _>(StandardNormal)
        })
    };
    let a = draw(m);
    let b = draw(n);
    FactorPair { a, b }
}

fn check_inputs(
    m: &ObservationMatrix,
    l_row: &Laplacian,
    l_col: &Laplacian,
    p: &GralsParams,
) -> Result<()> {
    p.validate()?;
    let (rows, cols) = m.shape();
    if l_row.dim() != rows || l_col.dim() != cols {
        return Err(Error::invalid(format!(
            "Laplacian sizes ({}, {}) do not match matrix shape {rows}x{cols}",
            l_row.dim(),
            l_col.dim()
        )));
    }
    if m.observed_count() == 0 {
        return Err(Error::invalid("no observed entries"));
    }
    for (i, j, v) in m.iter_observed() {
        if !v.is_finite() {
            return Err(Error::NonFiniteObservation { row: i, col: j });
        }
    }
    if p.lambda_l == 0.0 && p.lambda_a == 0.0 && p.lambda_b == 0.0 {
        for i in 0..rows {
            let count = m.observed_in_row(i);
            if count < p.rank {
                return Err(Error::SingularSubproblem {
                    side: "row",
                    index: i,
                    count,
                    rank: p.rank,
                });
            }
        }
        for j in 0..cols {
            let count = m.observed_in_col(j);
            if count < p.rank {
                return Err(Error::SingularSubproblem {
                    side: "column",
                    index: j,
                    count,
                    rank: p.rank,
                });
            }
        }
    }
    Ok(())
}

/// Completes `m` with GRALS. `l_row` is the m × m temporal Laplacian and
/// `l_col` the n × n spatial one.
pub fn grals_complete(
    m: &ObservationMatrix,
    l_row: &Laplacian,
    l_col: &Laplacian,
    p: &GralsParams,
) -> Result<(FactorPair, CompletionResult)> {
    check_inputs(m, l_row, l_col, p)?;
    let init = initial_factors(m.nrows(), m.ncols(), p.rank, p.seed);
    grals_from(m, l_row, l_col, p, init)
}

/// GRALS starting from the given factors.
pub fn grals_from(
    m: &ObservationMatrix,
    l_row: &Laplacian,
    l_col: &Laplacian,
    p: &GralsParams,
    init: FactorPair,
) -> Result<(FactorPair, CompletionResult)> {
    check_inputs(m, l_row, l_col, p)?;
    let (rows_n, cols_n) = m.shape();
    let r = p.rank;
    if init.a.shape() != (rows_n, r) || init.b.shape() != (cols_n, r) {
        return Err(Error::invalid("initial factors have the wrong shape"));
    }
    let by_rows = Grouped::by_rows(m);
    let by_cols = Grouped::by_cols(m);
    debug_assert_eq!(by_rows.groups(), rows_n);
    let mut a = to_row_major(&init.a);
    let mut b = to_row_major(&init.b);

    let mut trace = vec![objective(&by_rows, &a, &b, r, l_row, l_col, p)];
    let mut inner = Vec::with_capacity(2 * p.max_outer);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < p.max_outer {
        let sub_a = FactorSubproblem::build(&by_rows, &b, r, l_row, p.lambda_l, p.lambda_a);
        inner.push(sub_a.solve(&mut a, p.cg_tol, p.cg_max_iter));
        let sub_b = FactorSubproblem::build(&by_cols, &a, r, l_col, p.lambda_l, p.lambda_b);
        inner.push(sub_b.solve(&mut b, p.cg_tol, p.cg_max_iter));
        iterations += 1;

        let value = objective(&by_rows, &a, &b, r, l_row, l_col, p);
        let previous = *trace.last().unwrap();
        trace.push(value);
        if !value.is_finite() {
            break;
        }
        let decrease = (previous - value) / previous.abs().max(f64::MIN_POSITIVE);
        if decrease < p.outer_tol {
            converged = true;
            break;
        }
    }
    let factors = FactorPair {
        a: from_row_major(rows_n, r, &a),
        b: from_row_major(cols_n, r, &b),
    };
    let x_hat = factors.product();
    if x_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("GRALS diverged to non-finite factors"));
    }
    Ok((
        factors,
        CompletionResult {
            x_hat,
            objective_trace: trace,
            iterations,
            converged,
            uncompletable: Vec::new(),
            inner_solves: inner,
        },
    ))
}
