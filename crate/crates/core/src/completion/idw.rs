//! Inverse distance weighting across stations observed at the same timestamp.

use super::CompletionResult;
use crate::data::{ObservationMatrix, StationMetadata};
use crate::error::{Error, Result};
use crate::graph::haversine_distance;

pub const DEFAULT_IDW_POWER: f64 = 2.0;

/// Fills each missing (i, j) with Σ w_k M_ik / Σ w_k over the stations k ≠ j
/// observed at row i, w_k = 1 / d(j, k)^power. Stations at zero distance take
/// precedence: their plain mean is used. Entries with no observed station in
/// their row are left NaN and listed in `uncompletable`.
pub fn idw_complete(
    m: &ObservationMatrix,
    meta: &[StationMetadata],
    power: f64,
) -> Result<CompletionResult> {
    let (rows, cols) = m.shape();
    if meta.len() != cols {
        return Err(Error::invalid(format!(
            "{} stations in metadata for a matrix with {cols} columns",
            meta.len()
        )));
    }
    if !(power >= 0.0 && power.is_finite()) {
        return Err(Error::invalid(format!(
            "IDW power must be non-negative, got {power}"
        )));
    }
    let dist: Vec<Vec<f64>> = (0..cols)
        .map(|a| {
            (0..cols)
                .map(|b| haversine_distance(&meta[a], &meta[b]))
                .collect()
        })
        .collect();

    let mut x_hat = m.values().clone();
    let mut uncompletable = Vec::new();
    for i in 0..rows {
        let present: Vec<usize> = (0..cols).filter(|&k| m.is_observed(i, k)).collect();
        for j in 0..cols {
            if m.is_observed(i, j) {
                continue;
            }
            if present.is_empty() {
                uncompletable.push((i, j));
                continue;
            }
            let colocated: Vec<f64> = present
                .iter()
                .filter(|&&k| dist[j][k] == 0.0)
                .map(|&k| m.values()[(i, k)])
                .collect();
            x_hat[(i, j)] = if !colocated.is_empty() {
                colocated.iter().sum::<f64>() / colocated.len() as f64
            } else {
                let (mut num, mut den) = (0.0, 0.0);
                for &k in &present {
                    let w = dist[j][k].powf(-power);
                    num += w * m.values()[(i, k)];
                    den += w;
                }
                num / den
            };
        }
    }
    Ok(CompletionResult {
        x_hat,
        objective_trace: Vec::new(),
        iterations: 1,
        converged: uncompletable.is_empty(),
        uncompletable,
        inner_solves: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EARTH_RADIUS_KM;
    use chrono::{TimeZone, Utc};
    use nalgebra::DMatrix;

    fn on_equator(offsets_km: &[f64]) -> Vec<StationMetadata> {
        offsets_km
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                StationMetadata::new(
                    format!("s{k}"),
                    0.0,
                    (x / EARTH_RADIUS_KM).to_degrees(),
                    0.0,
                )
            })
            .collect()
    }

    fn one_row(values: &[f64], observed: &[bool]) -> ObservationMatrix {
        let n = values.len();
        let start = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        ObservationMatrix::new(
            DMatrix::from_row_slice(1, n, values),
            observed.to_vec(),
            vec![start],
            (0..n).map(|j| format!("s{j}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn two_point_weighting() {
        // target at 0, neighbors at 1 km (10 °C) and 2 km (16 °C) on the other side
        let meta = on_equator(&[0.0, 1.0, -2.0]);
        let m = one_row(&[0.0, 10.0, 16.0], &[false, true, true]);
        let res = idw_complete(&m, &meta, 1.0).unwrap();
        assert!(
            (res.x_hat[(0, 0)] - 12.0).abs() < 1e-9,
            "{}",
            res.x_hat[(0, 0)]
        );
        assert_eq!(res.x_hat[(0, 1)], 10.0);
    }

    #[test]
    fn constant_neighbors() {
        let meta = on_equator(&[0.0, 3.0, 7.5, 20.0]);
        let m = one_row(&[0.0, 4.25, 4.25, 4.25], &[false, true, true, true]);
        let res = idw_complete(&m, &meta, 2.0).unwrap();
        assert!((res.x_hat[(0, 0)] - 4.25).abs() < 1e-12);
    }

    #[test]
    fn empty_row_is_flagged() {
        let meta = on_equator(&[0.0, 1.0]);
        let m = one_row(&[0.0, 0.0], &[false, false]);
        let res = idw_complete(&m, &meta, 2.0).unwrap();
        assert_eq!(res.uncompletable, vec![(0, 0), (0, 1)]);
        assert!(res.x_hat[(0, 0)].is_nan());
        assert!(!res.converged);
    }
}
