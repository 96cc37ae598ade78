//! Iterative PCA imputation.

use nalgebra::{DMatrix, DVector};

use super::CompletionResult;
use crate::data::ObservationMatrix;
use crate::error::{Error, Result};

fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.mean()))
}

/// Rank-`r` reconstruction of `x` through its leading singular triplets.
fn truncated(x: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let svd = x.clone().svd(true, true);
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    // nalgebra does not guarantee sorted singular values
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for &k in order.iter().take(r) {
        out.ger(
            svd.singular_values[k],
            &u.column(k),
            &v_t.row(k).transpose(),
            1.0,
        );
    }
    out
}

/// Starts from station means, then repeatedly centers the columns, projects
/// onto the top `r` principal components and overwrites only the missing
/// entries with the reconstruction.
pub fn pca_complete(
    m: &ObservationMatrix,
    r: usize,
    tol: f64,
    max_iter: usize,
) -> Result<CompletionResult> {
    let (rows, cols) = m.shape();
    if r == 0 || r >= rows.min(cols) {
        return Err(Error::invalid(format!(
            "PCA rank {r} must be in 1..{} for a {rows}x{cols} matrix",
            rows.min(cols)
        )));
    }
    let mut x = DMatrix::zeros(rows, cols);
    let mut missing = Vec::new();
    for j in 0..cols {
        let count = m.observed_in_col(j);
        if count == 0 {
            return Err(Error::invalid(format!(
                "station {} has no observations",
                m.col_index()[j]
            )));
        }
        let mean = (0..rows).filter_map(|i| m.get(i, j)).sum::<f64>() / count as f64;
        for i in 0..rows {
            match m.get(i, j) {
                Some(v) => x[(i, j)] = v,
                None => {
                    x[(i, j)] = mean;
                    missing.push((i, j));
                }
            }
        }
    }

    let mut iterations = 0;
    let mut converged = missing.is_empty();
    while !converged && iterations < max_iter {
        let means = column_means(&x);
        let mut centered = x.clone();
        for (j, mut col) in centered.column_iter_mut().enumerate() {
            col.add_scalar_mut(-means[j]);
        }
        let recon = truncated(&centered, r);
        let mut change = 0.0;
        for &(i, j) in &missing {
            let v = recon[(i, j)] + means[j];
            change += (v - x[(i, j)]).powi(2);
            x[(i, j)] = v;
        }
        iterations += 1;
        converged = change.sqrt() <= tol * x.norm();
    }
    Ok(CompletionResult {
        x_hat: x,
        objective_trace: Vec::new(),
        iterations,
        converged,
        uncompletable: Vec::new(),
        inner_solves: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn build(values: DMatrix<f64>, hole: &[(usize, usize)]) -> ObservationMatrix {
        let (m, n) = values.shape();
        let start = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let full = ObservationMatrix::fully_observed(
            values,
            start,
            (0..n).map(|j| j.to_string()).collect(),
        )
        .unwrap();
        let _ = m;
        full.without_entries(hole).unwrap()
    }

    #[test]
    fn fully_observed_unchanged() {
        let values = DMatrix::from_fn(6, 4, |i, j| (i * 3 + j * j) as f64);
        let m = build(values.clone(), &[]);
        let res = pca_complete(&m, 2, 1e-10, 100).unwrap();
        assert_eq!(res.x_hat, values);
        assert_eq!(res.iterations, 0);
    }

    #[test]
    fn identical_columns() {
        let series: Vec<f64> = (0..20)
            .map(|i| (i as f64 * 0.7).sin() * 5.0 + 10.0)
            .collect();
        let values = DMatrix::from_fn(20, 4, |i, _| series[i]);
        let m = build(values, &[(7, 2)]);
        let res = pca_complete(&m, 1, 1e-14, 20_000).unwrap();
        assert!(
            (res.x_hat[(7, 2)] - series[7]).abs() < 1e-6,
            "{} vs {}",
            res.x_hat[(7, 2)],
            series[7]
        );
    }

    #[test]
    fn rank_and_empty_column_rejected() {
        let values = DMatrix::from_fn(5, 3, |i, j| (i + j) as f64);
        let m = build(values.clone(), &[]);
        assert!(pca_complete(&m, 3, 1e-6, 10).is_err());
        assert!(pca_complete(&m, 0, 1e-6, 10).is_err());
        let holes: Vec<_> = (0..5).map(|i| (i, 1)).collect();
        assert!(pca_complete(&build(values, &holes), 1, 1e-6, 10).is_err());
    }
}
