use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use grmc::completion::{
    evaluate_rmse, grals_complete, idw_complete, mean_complete, pca_complete, softimpute_complete,
    write_completion_csv, write_trace_csv, CompletionResult, GralsParams, Method,
};
use grmc::data::{
    format_timestamp, ingest_observations, parse_timestamp, read_metadata_file, slice_weeks,
    write_dataset,
};
use grmc::data::{synthesize_network, ObservationMatrix, StationMetadata};
use grmc::experiments::{
    run_ablation, run_baselines, split_train_test, tune as run_tune, AblationCase, ExperimentPlan,
    Hyperparams, ResultTable,
};
use grmc::graph::{
    build_spatial_graph, build_temporal_graph, LagSet, LagWeight, Laplacian, SpatialGraphConfig,
    DEFAULT_ALTITUDE_THRESHOLD_M,
};
use grmc::mask::{
    apply_mask, generate_mask, read_mask_csv, write_mask_csv, MaskScenario, ScenarioKind,
};
use serde::Serialize;

use crate::config::{
    write_manifest, CompleteConfig, DatasetConfig, ExperimentConfig, Format, GlobalConfig,
    MaskConfig, SpatialConfig, SynthConfig, TemporalConfig,
};
use crate::error::CliError;

/// Key/value summary printed to stdout as text lines or one JSON object.
#[derive(Default)]
struct Summary(BTreeMap<String, toml::Value>);

impl Summary {
    fn set(&mut self, key: &str, value: impl Into<toml::Value>) -> &mut Self {
        self.0.insert(key.to_string(), value.into());
        self
    }

    fn print(&self, format: Format) {
        match format {
            Format::Text => {
                for (k, v) in &self.0 {
                    match v {
                        toml::Value::String(s) => println!("{k}: {s}"),
                        other => println!("{k}: {other}"),
                    }
                }
            }
            Format::Json => match serde_json::to_string(&self.0) {
                Ok(line) => println!("{line}"),
                Err(e) => log::error!("cannot encode summary: {e}"),
            },
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

fn require(path: &Path, flag: &str) -> Result<(), CliError> {
    if path.as_os_str().is_empty() {
        return Err(CliError::usage(format!("{flag} is required")));
    }
    Ok(())
}

fn load(
    observations: &Path,
    stations: &Path,
) -> Result<(ObservationMatrix, Vec<StationMetadata>), CliError> {
    require(observations, "--observations")?;
    require(stations, "--stations")?;
    Ok(ingest_observations(observations, stations)?)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

pub fn synth(g: &GlobalConfig, c: SynthConfig) -> Result<(), CliError> {
    let (matrix, meta) = synthesize_network(c.stations, c.weeks, g.seed)?;
    write_dataset(&g.output_dir, &matrix, &meta)?;
    write_manifest(g, "synth", "synth", &c)?;
    Summary::default()
        .set("rows", matrix.nrows() as i64)
        .set("stations", matrix.ncols() as i64)
        .set(
            "observations",
            display(&g.output_dir.join("observations.csv")),
        )
        .set("metadata", display(&g.output_dir.join("stations.csv")))
        .print(g.format);
    Ok(())
}

pub fn ingest_check(g: &GlobalConfig, c: DatasetConfig) -> Result<(), CliError> {
    let (matrix, _) = load(&c.observations, &c.stations)?;
    write_manifest(g, "ingest-check", "ingest_check", &c)?;
    let (m, n) = matrix.shape();
    let mut s = Summary::default();
    s.set("rows", m as i64)
        .set("stations", n as i64)
        .set("observed", matrix.observed_count() as i64)
        .set(
            "missing_fraction",
            1.0 - matrix.observed_count() as f64 / (m * n).max(1) as f64,
        )
        .set("weeks", slice_weeks(&matrix, false).len() as i64)
        .set("gap_free_weeks", slice_weeks(&matrix, true).len() as i64);
    if let (Some(first), Some(last)) = (matrix.row_index().first(), matrix.row_index().last()) {
        s.set("first", format_timestamp(first))
            .set("last", format_timestamp(last));
    }
    s.print(g.format);
    Ok(())
}

fn spatial_config(k: usize, weighted: bool, altitude_limit: Option<f64>) -> SpatialGraphConfig {
    SpatialGraphConfig {
        k,
        weighted,
        altitude_limit: altitude_limit.is_some(),
        altitude_threshold: altitude_limit.unwrap_or(DEFAULT_ALTITUDE_THRESHOLD_M),
    }
}

pub fn graph_spatial(g: &GlobalConfig, c: SpatialConfig) -> Result<(), CliError> {
    require(&c.stations, "--stations")?;
    let meta = read_metadata_file(&c.stations)?;
    let graph = build_spatial_graph(&meta, &spatial_config(c.k, c.weighted, c.altitude_limit))?;
    let path = g.output_dir.join("spatial_edges.csv");
    graph.write_csv(create(&path)?)?;
    write_manifest(g, "graph-spatial", "graph_spatial", &c)?;
    Summary::default()
        .set("nodes", graph.n_nodes() as i64)
        .set("edges", graph.n_edges() as i64)
        .set("output", display(&path))
        .print(g.format);
    Ok(())
}

pub fn graph_temporal(g: &GlobalConfig, c: TemporalConfig) -> Result<(), CliError> {
    if c.rows == 0 {
        return Err(CliError::usage("--rows must be at least 1"));
    }
    let lagset = LagSet::parse(&c.lags, c.weights.parse::<LagWeight>()?)?;
    let graph = build_temporal_graph(c.rows, &lagset)?;
    let path = g.output_dir.join("temporal_edges.csv");
    graph.write_csv(create(&path)?)?;
    write_manifest(g, "graph-temporal", "graph_temporal", &c)?;
    Summary::default()
        .set("nodes", graph.n_nodes() as i64)
        .set("edges", graph.n_edges() as i64)
        .set("output", display(&path))
        .print(g.format);
    Ok(())
}

pub fn mask(g: &GlobalConfig, c: MaskConfig) -> Result<(), CliError> {
    let (matrix, _) = load(&c.observations, &c.stations)?;
    let target = match c.week {
        Some(w) => slice_weeks(&matrix, false)
            .into_iter()
            .find(|s| s.ordinal == w)
            .map(|s| s.matrix)
            .ok_or_else(|| CliError::usage(format!("week {w} is outside the dataset")))?,
        None => matrix,
    };
    let kind: ScenarioKind = c.scenario.parse()?;
    let mut scenario = MaskScenario::new(kind, g.seed).with_fraction(c.fraction);
    let (lo, hi) = scenario.run_lengths;
    scenario.run_lengths = (c.min_len.unwrap_or(lo), c.max_len.unwrap_or(hi));
    let mask = generate_mask(&target, &scenario)?;
    let path = g.output_dir.join("mask.csv");
    write_mask_csv(create(&path)?, &mask, &target)?;
    write_manifest(g, "mask", "mask", &c)?;
    Summary::default()
        .set("scenario", kind.name())
        .set("entries", mask.len() as i64)
        .set("runs", mask.runs.len() as i64)
        .set("output", display(&path))
        .print(g.format);
    Ok(())
}

fn complete_with(
    c: &CompleteConfig,
    seed: u64,
    train: &ObservationMatrix,
    meta: &[StationMetadata],
) -> Result<CompletionResult, CliError> {
    let method: Method = c.method.parse()?;
    let res = match method {
        Method::Grals => {
            let (m, n) = train.shape();
            let spatial = if c.no_spatial {
                Laplacian::zero(n)
            } else {
                build_spatial_graph(meta, &spatial_config(c.k, c.weighted, c.altitude_limit))?
                    .laplacian()
            };
            let temporal = if c.no_temporal {
                Laplacian::zero(m)
            } else {
                let lagset = LagSet::parse(&c.lags, c.lag_weights.parse::<LagWeight>()?)?;
                build_temporal_graph(m, &lagset)?.laplacian()
            };
            let params = GralsParams {
                rank: c.rank,
                lambda_l: c.lambda_l,
                lambda_a: c.lambda_a,
                lambda_b: c.lambda_b,
                max_outer: c.max_iter,
                outer_tol: c.tol,
                cg_tol: c.cg_tol,
                seed,
                ..GralsParams::default()
            };
            grals_complete(train, &temporal, &spatial, &params)?.1
        }
        Method::SoftImpute => softimpute_complete(train, c.lambda, c.tol, c.max_iter)?,
        Method::Idw => idw_complete(train, meta, c.power)?,
        Method::Pca => pca_complete(train, c.pca_rank, c.tol, c.max_iter)?,
        Method::Mean => mean_complete(train)?,
    };
    Ok(res)
}

pub fn complete(g: &GlobalConfig, c: CompleteConfig) -> Result<(), CliError> {
    let (matrix, meta) = load(&c.observations, &c.stations)?;
    let (train, holdout) = match &c.mask {
        Some(path) => {
            let mask = read_mask_csv(open(path)?, &matrix)?;
            let (train, holdout) = apply_mask(&matrix, &mask)?;
            (train, Some(holdout))
        }
        None => (matrix.clone(), None),
    };
    let res = complete_with(&c, g.seed, &train, &meta)?;

    let completed = g.output_dir.join("completed.csv");
    write_completion_csv(create(&completed)?, &res.x_hat, &train)?;
    let trace = g.output_dir.join("trace.csv");
    write_trace_csv(create(&trace)?, &res.objective_trace)?;
    write_manifest(g, "complete", "complete", &c)?;

    let mut s = Summary::default();
    s.set("method", c.method.as_str())
        .set("iterations", res.iterations as i64)
        .set("converged", res.converged)
        .set("uncompletable", res.uncompletable.len() as i64)
        .set("completed", display(&completed))
        .set("trace", display(&trace));
    if let Some(h) = holdout {
        let rmse = evaluate_rmse(&res.x_hat, &matrix, &h.indices())?;
        s.set("holdout", h.len() as i64).set("rmse", rmse);
    }
    s.print(g.format);
    Ok(())
}

fn scenarios(name: &str) -> Result<Vec<ScenarioKind>, CliError> {
    match name {
        "both" => Ok(vec![ScenarioKind::Block, ScenarioKind::Spread]),
        other => Ok(vec![other.parse::<ScenarioKind>().map_err(|_| {
            CliError::usage(format!(
                "unknown scenario {other:?} (expected block|spread|both)"
            ))
        })?]),
    }
}

fn plan(c: &ExperimentConfig, kind: ScenarioKind, seed: u64) -> ExperimentPlan {
    ExperimentPlan {
        train_weeks: c.train_weeks,
        masks_per_week_train: c.masks_per_week_train,
        test_weeks: c.test_weeks,
        masks_per_week_test: c.masks_per_week_test,
        scenario: kind,
        target_fraction: c.fraction,
        n_samples: c.samples,
        seed,
        solver: c.solver.clone(),
    }
}

enum Part {
    Train,
    Test,
}

fn experiment_data(
    c: &ExperimentConfig,
    part: Part,
) -> Result<(ObservationMatrix, Vec<StationMetadata>), CliError> {
    let (matrix, meta) = load(&c.observations, &c.stations)?;
    let Some(boundary) = &c.split else {
        return Ok((matrix, meta));
    };
    let (train, test) = split_train_test(&matrix, &parse_timestamp(boundary)?)?;
    Ok((
        match part {
            Part::Train => train,
            Part::Test => test,
        },
        meta,
    ))
}

/// Per-scenario hyperparameters from a `best_params.toml`, falling back to
/// the reference optimum of the scenario.
fn best_params(path: Option<&PathBuf>, kind: ScenarioKind) -> Result<Hyperparams, CliError> {
    let reference = match kind {
        ScenarioKind::Block => Hyperparams::reference_block(),
        ScenarioKind::Spread => Hyperparams::reference_spread(),
    };
    let Some(path) = path else {
        return Ok(reference);
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| CliError::usage(format!("invalid parameters file {}: {e}", path.display())))?;
    match table.get(kind.name()) {
        Some(v) => v
            .clone()
            .try_into()
            .map_err(|e| CliError::usage(format!("invalid [{}] parameters: {e}", kind.name()))),
        None => Ok(reference),
    }
}

#[derive(Serialize)]
struct CvRow {
    scenario: String,
    combo: usize,
    rank: usize,
    lambda_l: f64,
    lambda_a: f64,
    lambda_b: f64,
    k: usize,
    weighted: bool,
    altitude_limit: bool,
    lags: String,
    lag_weight: String,
    mean_rmse: Option<f64>,
    failed_folds: usize,
}

#[derive(Serialize)]
struct CvFoldRow {
    scenario: String,
    combo: usize,
    week: usize,
    mask_id: usize,
    rmse: Option<f64>,
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r).map_err(|e| CliError::usage(e.to_string()))?;
    }
    w.flush()
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

pub fn tune(g: &GlobalConfig, c: ExperimentConfig) -> Result<(), CliError> {
    let kinds = scenarios(&c.scenario)?;
    let (train, meta) = experiment_data(&c, Part::Train)?;
    let mut table = Vec::new();
    let mut folds = Vec::new();
    let mut best = toml::Table::new();
    let mut s = Summary::default();
    for kind in kinds {
        let report = run_tune(&plan(&c, kind, g.seed), &c.grid, &train, &meta)?;
        for (combo, e) in report.entries.iter().enumerate() {
            let p = &e.params;
            table.push(CvRow {
                scenario: kind.name().into(),
                combo,
                rank: p.rank,
                lambda_l: p.lambda_l,
                lambda_a: p.lambda_a,
                lambda_b: p.lambda_b,
                k: p.k,
                weighted: p.weighted,
                altitude_limit: p.altitude_limit,
                lags: p
                    .lags
                    .iter()
                    .map(|l| l.to_string())
                    .collect::<Vec<_>>()
                    .join(" "),
                lag_weight: match p.lag_weight {
                    LagWeight::Unit => "unit".into(),
                    LagWeight::InverseLag => "inverse_lag".into(),
                },
                mean_rmse: e.report.mean_rmse,
                failed_folds: e.report.failures(),
            });
            folds.extend(e.report.folds.iter().map(|f| CvFoldRow {
                scenario: kind.name().into(),
                combo,
                week: f.week,
                mask_id: f.mask_id,
                rmse: f.rmse,
            }));
        }
        let chosen =
            toml::Value::try_from(report.best()).map_err(|e| CliError::usage(e.to_string()))?;
        best.insert(kind.name().into(), chosen);
        s.set(&format!("{kind}_best"), report.best().describe())
            .set(&format!("{kind}_best_mean_rmse"), report.best_mean())
            .set(&format!("{kind}_combinations"), report.entries.len() as i64);
    }
    write_rows(&g.output_dir.join("cv_table.csv"), &table)?;
    write_rows(&g.output_dir.join("cv_folds.csv"), &folds)?;
    let best_path = g.output_dir.join("best_params.toml");
    std::fs::write(
        &best_path,
        toml::to_string(&best).map_err(|e| CliError::usage(e.to_string()))?,
    )
    .map_err(|e| CliError::usage(format!("cannot write {}: {e}", best_path.display())))?;
    write_manifest(g, "tune", "tune", &c)?;
    s.set("best_params", display(&best_path)).print(g.format);
    Ok(())
}

fn write_tables(
    g: &GlobalConfig,
    results: &ResultTable,
    rows_name: &str,
    summary_name: &str,
) -> Result<(), CliError> {
    results.write_rows(create(&g.output_dir.join(rows_name))?)?;
    results.write_summary(create(&g.output_dir.join(summary_name))?)?;
    Ok(())
}

fn summarize(g: &GlobalConfig, results: &ResultTable) {
    let mut s = Summary::default();
    for r in &results.summary {
        s.set(
            &format!("{}_{}", r.scenario, r.method),
            r.mean_rmse.unwrap_or(f64::NAN),
        );
    }
    s.print(g.format);
}

pub fn benchmark(g: &GlobalConfig, c: ExperimentConfig) -> Result<(), CliError> {
    let kinds = scenarios(&c.scenario)?;
    let (test, meta) = experiment_data(&c, Part::Test)?;
    let mut results = ResultTable::default();
    for kind in kinds {
        let best = best_params(c.params.as_ref(), kind)?;
        for (method, report) in run_baselines(&plan(&c, kind, g.seed), &best, &test, &meta)? {
            results.push(method.name(), kind.name(), &report);
        }
    }
    write_tables(g, &results, "results.csv", "summary.csv")?;
    write_manifest(g, "benchmark", "benchmark", &c)?;
    summarize(g, &results);
    Ok(())
}

pub fn ablate(g: &GlobalConfig, c: ExperimentConfig) -> Result<(), CliError> {
    let kinds = scenarios(&c.scenario)?;
    let cases = match c.case {
        Some(id) => vec![AblationCase::from_id(id)?],
        None => AblationCase::ALL.to_vec(),
    };
    let (test, meta) = experiment_data(&c, Part::Test)?;
    let mut results = ResultTable::default();
    for kind in kinds {
        let best = best_params(c.params.as_ref(), kind)?;
        let p = plan(&c, kind, g.seed);
        for &case in &cases {
            let report = run_ablation(case, &best, &p, &test, &meta)?;
            results.push(&format!("case{}", case.id()), kind.name(), &report);
        }
    }
    write_tables(g, &results, "ablation.csv", "ablation_summary.csv")?;
    write_manifest(g, "ablate", "ablate", &c)?;
    summarize(g, &results);
    Ok(())
}
