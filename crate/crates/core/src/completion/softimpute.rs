//! Soft-thresholded SVD and the SoftImpute iteration.

use nalgebra::DMatrix;

use super::CompletionResult;
use crate::data::ObservationMatrix;
use crate::error::{Error, Result};

/// U·diag(max(σ − λ, 0))·Vᵀ together with the nuclear norm of the result.
pub(crate) fn shrink(x: &DMatrix<f64>, lambda: f64) -> (DMatrix<f64>, f64) {
    let (m, n) = x.shape();
    if m == 0 || n == 0 {
        return (x.clone(), 0.0);
    }
    let svd = x.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut out = DMatrix::zeros(m, n);
    let mut nuclear = 0.0;
    for (k, &sigma) in svd.singular_values.iter().enumerate() {
        let s = sigma - lambda;
        if s <= 0.0 {
            continue;
        }
        nuclear += s;
        // rank-one update s·u_k·v_kᵀ
        out.ger(s, &u.column(k), &v_t.row(k).transpose(), 1.0);
    }
    (out, nuclear)
}

/// Singular value soft-thresholding S_λ(X).
pub fn soft_threshold_svd(x: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    assert!(lambda >= 0.0, "threshold must be non-negative");
    shrink(x, lambda).0
}

pub fn nuclear_norm(x: &DMatrix<f64>) -> f64 {
    x.singular_values().sum()
}

/// ½‖P_Ω(M − X)‖²_F + λ‖X‖_*.
pub fn softimpute_objective(m: &ObservationMatrix, x: &DMatrix<f64>, lambda: f64) -> f64 {
    let data: f64 = m
        .iter_observed()
        .map(|(i, j, v)| (v - x[(i, j)]).powi(2))
        .sum();
    0.5 * data + lambda * nuclear_norm(x)
}

/// Iterates X ← S_λ(P_Ω(M) + P_Ω̄(X)) from X = 0 until the relative
/// Frobenius change drops below `tol`.
pub fn softimpute_complete(
    m: &ObservationMatrix,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<CompletionResult> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!(
            "lambda must be non-negative, got {lambda}"
        )));
    }
    for (i, j, v) in m.iter_observed() {
        if !v.is_finite() {
            return Err(Error::NonFiniteObservation { row: i, col: j });
        }
    }
    let (rows, cols) = m.shape();
    let mut x = DMatrix::zeros(rows, cols);
    let mut filled = DMatrix::zeros(rows, cols);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        for j in 0..cols {
            for i in 0..rows {
                filled[(i, j)] = m.get(i, j).unwrap_or(x[(i, j)]);
            }
        }
        let (next, nuclear) = shrink(&filled, lambda);
        let data: f64 = m
            .iter_observed()
            .map(|(i, j, v)| (v - next[(i, j)]).powi(2))
            .sum();
        trace.push(0.5 * data + lambda * nuclear);
        let change = (&next - &x).norm();
        let scale = x.norm();
        x = next;
        iterations += 1;
        if change <= tol * scale || change == 0.0 {
            converged = true;
            break;
        }
    }
    Ok(CompletionResult {
        x_hat: x,
        objective_trace: trace,
        iterations,
        converged,
        uncompletable: Vec::new(),
        inner_solves: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_example_is_exact() {
        let x = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let s = soft_threshold_svd(&x, 2.0);
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn zero_threshold_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(6, 4, |_, _| rng.random_range(-3.0..3.0));
        let s = soft_threshold_svd(&x, 0.0);
        assert!((s - &x).norm() < 1e-12 * x.norm());
    }

    #[test]
    fn large_threshold_kills_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(5, 7, |_, _| rng.random_range(-3.0..3.0));
        let smax = x.singular_values().max();
        assert_eq!(soft_threshold_svd(&x, smax), DMatrix::zeros(5, 7));
        assert_eq!(soft_threshold_svd(&x, smax * 2.0), DMatrix::zeros(5, 7));
    }

    #[test]
    fn fully_observed_is_one_step_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let values = DMatrix::from_fn(8, 5, |_, _| rng.random_range(-3.0..3.0));
        let start = chrono::TimeZone::with_ymd_and_hms(&chrono::Utc, 2020, 1, 1, 0, 0, 0).unwrap();
        let m = ObservationMatrix::fully_observed(
            values.clone(),
            start,
            (0..5).map(|j| j.to_string()).collect(),
        )
        .unwrap();
        let res = softimpute_complete(&m, 0.7, 1e-12, 50).unwrap();
        assert!(res.converged);
        assert_eq!(res.iterations, 2);
        assert_eq!(res.x_hat, soft_threshold_svd(&values, 0.7));
    }

    #[test]
    fn rejects_negative_lambda() {
        let start = chrono::TimeZone::with_ymd_and_hms(&chrono::Utc, 2020, 1, 1, 0, 0, 0).unwrap();
        let m = ObservationMatrix::fully_observed(
            DMatrix::zeros(2, 2),
            start,
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        assert!(softimpute_complete(&m, -1.0, 1e-6, 10).is_err());
    }

    #[test]
    fn max_iter_exhaustion_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let values = DMatrix::from_fn(10, 6, |_, _| rng.random_range(-3.0..3.0));
        let observed = (0..60).map(|_| rng.random_bool(0.5)).collect();
        let start = chrono::TimeZone::with_ymd_and_hms(&chrono::Utc, 2020, 1, 1, 0, 0, 0).unwrap();
        let m = ObservationMatrix::new(
            values,
            observed,
            crate::data::regular_grid(start, 10),
            (0..6).map(|j| j.to_string()).collect(),
        )
        .unwrap();
        let res = softimpute_complete(&m, 0.1, 1e-15, 2).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 2);
    }
}
