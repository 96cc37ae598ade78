use chrono::{TimeZone, Utc};
use grmc::data::{
    read_metadata, read_observations, synthesize_network, write_metadata, write_observations,
    ObservationMatrix, StationMetadata, STEPS_PER_DAY, WEEK_ROWS,
};
use grmc::graph::haversine_distance;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn column(m: &ObservationMatrix, j: usize) -> Vec<f64> {
    m.values().column(j).iter().copied().collect()
}

#[test]
fn one_week_has_the_reference_shape() {
    let (m, meta) = synthesize_network(50, 1, 3).unwrap();
    assert_eq!(m.shape(), (1009, 50));
    assert_eq!(meta.len(), 50);
    assert!(m.is_fully_observed());
}

#[test]
fn generation_is_deterministic() {
    let (a, ma) = synthesize_network(6, 1, 42).unwrap();
    let (b, mb) = synthesize_network(6, 1, 42).unwrap();
    let (c, _) = synthesize_network(6, 1, 43).unwrap();
    assert_eq!(a, b);
    assert_eq!(ma, mb);
    assert_ne!(a.values(), c.values());
}

#[test]
fn temperatures_are_plausible() {
    let (m, _) = synthesize_network(20, 4, 8).unwrap();
    for v in m.values().iter() {
        assert!((-30.0..=45.0).contains(v), "{v}");
    }
}

#[test]
fn daily_cycle_shows_in_autocorrelation() {
    let (m, _) = synthesize_network(5, 3, 17).unwrap();
    let half = STEPS_PER_DAY / 2;
    for j in 0..m.ncols() {
        let x = column(&m, j);
        // a centered one-day moving average removes the trend but not the cycle
        let resid: Vec<f64> = (half..x.len() - half)
            .map(|i| x[i] - x[i - half..i + half].iter().sum::<f64>() / STEPS_PER_DAY as f64)
            .collect();
        let acf = |lag: usize| pearson(&resid[..resid.len() - lag], &resid[lag..]);
        let peak = (100..=200)
            .max_by(|&a, &b| acf(a).total_cmp(&acf(b)))
            .unwrap();
        assert!(
            (peak as i64 - STEPS_PER_DAY as i64).abs() <= 4,
            "station {j}: peak at lag {peak}"
        );
        assert!(acf(STEPS_PER_DAY) > 0.5 && acf(half) < 0.0);
    }
}

#[test]
fn close_stations_correlate_more_than_far_ones() {
    let mut close_pairs = 0;
    for seed in 0..4 {
        let (m, meta) = synthesize_network(50, 1, seed).unwrap();
        let n = meta.len();
        let mut far = (0, 1, 0.0);
        let mut close = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let d = haversine_distance(&meta[a], &meta[b]);
                if d > far.2 {
                    far = (a, b, d);
                }
                if d < 10.0 {
                    close.push((a, b));
                }
            }
        }
        let far_corr = pearson(&column(&m, far.0), &column(&m, far.1));
        for (a, b) in close {
            close_pairs += 1;
            assert!(pearson(&column(&m, a), &column(&m, b)) > far_corr);
        }
    }
    assert!(
        close_pairs > 0,
        "no station pairs closer than 10 km were generated"
    );
}

#[test]
fn metadata_round_trip() {
    let (_, meta) = synthesize_network(7, 1, 1).unwrap();
    let mut buf = Vec::new();
    write_metadata(&mut buf, &meta).unwrap();
    assert_eq!(read_metadata(buf.as_slice()).unwrap(), meta);
}

fn matrix_strategy() -> impl Strategy<Value = (usize, usize, Vec<Option<f64>>)> {
    (2usize..12, 1usize..5).prop_flat_map(|(m, n)| {
        let cell = prop_oneof![1 => Just(None), 3 => (-40.0f64..40.0).prop_map(Some)];
        (Just(m), Just(n), proptest::collection::vec(cell, m * n))
    })
}

proptest! {
    #[test]
    fn observations_round_trip((m, n, mut cells) in matrix_strategy()) {
        // the grid is inferred from the first and last timestamps present
        cells[0] = Some(1.25);
        cells[m * n - 1] = Some(-3.5);
        let values = DMatrix::from_fn(m, n, |i, j| cells[i * n + j].unwrap_or(f64::NAN));
        let observed: Vec<bool> = (0..n).flat_map(|j| (0..m).map(move |i| (i, j))).map(|(i, j)| cells[i * n + j].is_some()).collect();
        let start = Utc.with_ymd_and_hms(2021, 3, 1, 0, 0, 0).unwrap();
        let ids: Vec<String> = (0..n).map(|j| format!("S{j}")).collect();
        let original = ObservationMatrix::new(values, observed, grmc::data::regular_grid(start, m), ids.clone()).unwrap();
        let meta: Vec<StationMetadata> = ids.iter().enumerate().map(|(j, id)| StationMetadata::new(id.clone(), 50.0, 4.0 + j as f64 * 0.1, 10.0)).collect();

        let mut buf = Vec::new();
        write_observations(&mut buf, &original).unwrap();
        let back = read_observations(buf.as_slice(), &meta).unwrap();
        prop_assert_eq!(back.shape(), original.shape());
        prop_assert_eq!(back.row_index(), original.row_index());
        for i in 0..m {
            for j in 0..n {
                prop_assert_eq!(back.get(i, j), original.get(i, j));
            }
        }
    }
}

#[test]
fn week_constant_matches_ten_minute_week() {
    assert_eq!(WEEK_ROWS, 7 * STEPS_PER_DAY + 1);
}
