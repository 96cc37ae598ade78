//! Completion solvers and scoring.

mod cg;
mod grals;
mod idw;
mod pca;
mod softimpute;

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use cg::{conjugate_gradient, CgStats};
pub use grals::{
    from_row_major, grals_complete, grals_from, grals_objective, initial_factors, to_row_major,
    FactorPair, FactorSubproblem, GralsParams,
};
pub use idw::{idw_complete, DEFAULT_IDW_POWER};
pub use pca::pca_complete;
pub use softimpute::{nuclear_norm, soft_threshold_svd, softimpute_complete, softimpute_objective};

use crate::data::{format_timestamp, ObservationMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub x_hat: DMatrix<f64>,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Entries the method could not estimate (left NaN in `x_hat`).
    pub uncompletable: Vec<(usize, usize)>,
    /// Conjugate-gradient statistics of every inner solve, in order (GRALS).
    pub inner_solves: Vec<CgStats>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Grals,
    SoftImpute,
    Idw,
    Pca,
    Mean,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Mean,
        Method::Idw,
        Method::Pca,
        Method::SoftImpute,
        Method::Grals,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Grals => "grals",
            Method::SoftImpute => "softimpute",
            Method::Idw => "idw",
            Method::Pca => "pca",
            Method::Mean => "mean",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown method {s:?}; valid methods: grals, softimpute, idw, pca, mean"
                ))
            })
    }
}

/// Fills every missing entry with its station's observed mean.
pub fn mean_complete(m: &ObservationMatrix) -> Result<CompletionResult> {
    let (rows, cols) = m.shape();
    let mut x_hat = m.values().clone();
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
            if !m.is_observed(i, j) {
                x_hat[(i, j)] = mean;
            }
        }
    }
    Ok(CompletionResult {
        x_hat,
        objective_trace: Vec::new(),
        iterations: 1,
        converged: true,
        uncompletable: Vec::new(),
        inner_solves: Vec::new(),
    })
}

/// Root mean squared error of `x_hat` against `truth` over the holdout.
pub fn evaluate_rmse(
    x_hat: &DMatrix<f64>,
    truth: &ObservationMatrix,
    holdout: &[(usize, usize)],
) -> Result<f64> {
    if holdout.is_empty() {
        return Err(Error::EmptyHoldout);
    }
    if x_hat.shape() != truth.shape() {
        return Err(Error::invalid("prediction and truth shapes differ"));
    }
    let mut sum = 0.0;
    for &(i, j) in holdout {
        let t = truth
            .get(i, j)
            .ok_or(Error::MaskOnUnobserved { row: i, col: j })?;
        let p = x_hat[(i, j)];
        if !p.is_finite() {
            return Err(Error::Uncompletable { row: i, col: j });
        }
        sum += (p - t) * (p - t);
    }
    Ok((sum / holdout.len() as f64).sqrt())
}

/// Observations CSV plus a `source` column: observed entries come from the
/// training matrix, the rest from the completion.
pub fn write_completion_csv<W: Write>(
    writer: W,
    x_hat: &DMatrix<f64>,
    train: &ObservationMatrix,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["timestamp", "station_id", "temperature_c", "source"])?;
    let (rows, cols) = train.shape();
    for i in 0..rows {
        let ts = format_timestamp(&train.row_index()[i]);
        for j in 0..cols {
            let (value, source) = match train.get(i, j) {
                Some(v) => (v, "observed"),
                None => (x_hat[(i, j)], "imputed"),
            };
            if value.is_finite() {
                wtr.write_record([
                    ts.as_str(),
                    &train.col_index()[j],
                    &value.to_string(),
                    source,
                ])?;
            }
        }
    }
    wtr.flush().map_err(|e| Error::io("<completion>", e))?;
    Ok(())
}

pub fn write_trace_csv<W: Write>(writer: W, trace: &[f64]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["iter", "objective"])?;
    for (k, v) in trace.iter().enumerate() {
        wtr.write_record([k.to_string(), v.to_string()])?;
    }
    wtr.flush().map_err(|e| Error::io("<trace>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn truth() -> ObservationMatrix {
        let start = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let values = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        ObservationMatrix::fully_observed(values, start, vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn rmse_examples() {
        let t = truth();
        let holdout = [(0, 0), (1, 1)];
        assert_eq!(evaluate_rmse(t.values(), &t, &holdout).unwrap(), 0.0);
        let shifted = t.values().add_scalar(1.0);
        assert_eq!(evaluate_rmse(&shifted, &t, &holdout).unwrap(), 1.0);
        let mut pm = t.values().clone();
        pm[(0, 0)] += 1.0;
        pm[(1, 1)] -= 1.0;
        assert_eq!(evaluate_rmse(&pm, &t, &holdout).unwrap(), 1.0);
        assert!(matches!(
            evaluate_rmse(t.values(), &t, &[]),
            Err(Error::EmptyHoldout)
        ));
    }

    #[test]
    fn rmse_rejects_unobserved_truth() {
        let t = truth().without_entries(&[(0, 1)]).unwrap();
        assert!(evaluate_rmse(&DMatrix::zeros(2, 2), &t, &[(0, 1)]).is_err());
    }

    #[test]
    fn mean_fill() {
        let t = truth().without_entries(&[(0, 1)]).unwrap();
        let res = mean_complete(&t).unwrap();
        assert_eq!(res.x_hat[(0, 1)], 4.0);
        assert_eq!(res.x_hat[(1, 0)], 3.0);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        let err = "rtrmc".parse::<Method>().unwrap_err().to_string();
        assert!(err.contains("grals") && err.contains("mean"));
    }

    #[test]
    fn completion_csv_marks_sources() {
        let t = truth().without_entries(&[(1, 0)]).unwrap();
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 9.5, 0.0]);
        let mut buf = Vec::new();
        write_completion_csv(&mut buf, &x, &t).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.contains("2020-01-01T00:10:00Z,a,9.5,imputed"));
        assert!(s.contains("2020-01-01T00:00:00Z,b,2,observed"));
    }
}
