use chrono::{TimeZone, Utc};
use grmc::data::{parse_timestamp, synthesize_network, ObservationMatrix};
use grmc::experiments::{
    evaluate_folds, run_ablation, split_train_test, tune, AblationCase, ExperimentPlan, Fold,
    HyperGrid, Hyperparams, ResultTable,
};
use grmc::mask::ScenarioKind;
use nalgebra::DMatrix;

fn plan() -> ExperimentPlan {
    ExperimentPlan {
        train_weeks: 2,
        masks_per_week_train: 2,
        test_weeks: 2,
        masks_per_week_test: 1,
        n_samples: 3,
        ..ExperimentPlan::new(ScenarioKind::Block, 21)
    }
}

fn small() -> Hyperparams {
    Hyperparams {
        rank: 2,
        k: 2,
        ..Hyperparams::reference_spread()
    }
}

#[test]
fn reference_split_dates() {
    // 2020-01-01 .. 2022-03-01 at a 10-minute step, two stations
    let start = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
    let end = Utc.with_ymd_and_hms(2022, 3, 1, 0, 0, 0).unwrap();
    let rows = ((end - start).num_minutes() / 10 + 1) as usize;
    let m = ObservationMatrix::fully_observed(
        DMatrix::zeros(rows, 2),
        start,
        vec!["a".into(), "b".into()],
    )
    .unwrap();
    let boundary = parse_timestamp("2021-09-01").unwrap();
    let (train, test) = split_train_test(&m, &boundary).unwrap();
    assert_eq!(train.nrows() + test.nrows(), rows);
    assert_eq!(test.row_index()[0], boundary);
    assert!(*train.row_index().last().unwrap() < boundary);
    // 20 of 26 months
    let share = train.nrows() as f64 / rows as f64;
    assert!((share - 20.0 / 26.0).abs() < 0.01, "{share}");
}

#[test]
fn folds_are_paired_across_cases_and_combinations() {
    let (m, meta) = synthesize_network(6, 3, 9).unwrap();
    let p = plan();
    let a = p.test_folds(&m).unwrap();
    let b = p.test_folds(&m).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((x.week, x.mask_id, x.seed), (y.week, y.mask_id, y.seed));
        assert_eq!(x.holdout, y.holdout);
        assert_eq!(x.train, y.train);
    }
    // a deterministic probe records which folds each case sees
    let seen = |f: &Fold| Ok(f.truth.values().add_scalar(f.seed as f64 % 7.0 / 100.0));
    assert_eq!(evaluate_folds(&seen, &a), evaluate_folds(&seen, &b));

    let r1 = run_ablation(AblationCase::SpatialLaplacianZero, &small(), &p, &m, &meta).unwrap();
    let r2 = run_ablation(AblationCase::TemporalLaplacianZero, &small(), &p, &m, &meta).unwrap();
    let key = |r: &grmc::experiments::EvalReport| {
        r.folds
            .iter()
            .map(|f| (f.week, f.mask_id))
            .collect::<Vec<_>>()
    };
    assert_eq!(key(&r1), key(&r2));
}

#[test]
fn reported_mean_is_recomputable_from_the_table() {
    let (m, meta) = synthesize_network(6, 3, 9).unwrap();
    let p = plan();
    let report = run_ablation(AblationCase::None, &small(), &p, &m, &meta).unwrap();
    let mut table = ResultTable::default();
    table.push("grals", "block", &report);
    let mut rows = Vec::new();
    table.write_rows(&mut rows).unwrap();
    let mut rdr = csv::Reader::from_reader(rows.as_slice());
    let cells: Vec<f64> = rdr
        .records()
        .map(|r| r.unwrap()[4].parse().unwrap())
        .collect();
    let mean = cells.iter().sum::<f64>() / cells.len() as f64;
    assert_eq!(mean, table.mean("grals", "block").unwrap());
}

#[test]
fn dominated_combination_loses() {
    let (m, meta) = synthesize_network(6, 3, 9).unwrap();
    let p = plan();
    let grid = HyperGrid {
        lambda_a: vec![0.005, 0.1],
        ..HyperGrid::single(&small())
    };
    let rep = tune(&p, &grid, &m, &meta).unwrap();
    let means: Vec<f64> = rep
        .entries
        .iter()
        .map(|e| e.report.mean_rmse.unwrap())
        .collect();
    let argmin = (0..means.len())
        .min_by(|&a, &b| means[a].total_cmp(&means[b]))
        .unwrap();
    assert_eq!(rep.best_index, argmin);
    assert_eq!(tune(&p, &grid, &m, &meta).unwrap().best(), rep.best());
}
