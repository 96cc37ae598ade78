use log::{info, warn};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::{build_folds, derive_seed, Fold, FoldStream};
use super::grid::{HyperGrid, Hyperparams};
use crate::completion::{
    evaluate_rmse, grals_complete, idw_complete, mean_complete, pca_complete, softimpute_complete,
    CompletionResult, GralsParams, Method, DEFAULT_IDW_POWER,
};
use crate::data::{ObservationMatrix, StationMetadata, Timestamp};
use crate::error::{Error, Result};
use crate::graph::{
    build_spatial_graph, build_temporal_graph, LagSet, Laplacian, DEFAULT_ALTITUDE_THRESHOLD_M,
};
use crate::mask::ScenarioKind;

/// Solver settings that are not searched over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_outer: usize,
    pub outer_tol: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub altitude_threshold: f64,
    pub softimpute_lambda: f64,
    pub softimpute_tol: f64,
    pub softimpute_max_iter: usize,
    pub pca_rank: usize,
    pub pca_tol: f64,
    pub pca_max_iter: usize,
    pub idw_power: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_outer: 100,
            outer_tol: 1e-6,
            cg_tol: 1e-8,
            cg_max_iter: 500,
            altitude_threshold: DEFAULT_ALTITUDE_THRESHOLD_M,
            softimpute_lambda: 5.0,
            softimpute_tol: 1e-5,
            softimpute_max_iter: 500,
            pca_rank: 5,
            pca_tol: 1e-6,
            pca_max_iter: 500,
            idw_power: DEFAULT_IDW_POWER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub train_weeks: usize,
    pub masks_per_week_train: usize,
    pub test_weeks: usize,
    pub masks_per_week_test: usize,
    pub scenario: ScenarioKind,
    pub target_fraction: f64,
    pub n_samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl ExperimentPlan {
    pub fn new(scenario: ScenarioKind, seed: u64) -> Self {
        Self {
            train_weeks: 10,
            masks_per_week_train: 5,
            test_weeks: 5,
            masks_per_week_test: 3,
            scenario,
            target_fraction: 0.1,
            n_samples: 60,
            seed,
            solver: SolverSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("train_weeks", self.train_weeks),
            ("masks_per_week_train", self.masks_per_week_train),
            ("test_weeks", self.test_weeks),
            ("masks_per_week_test", self.masks_per_week_test),
            ("n_samples", self.n_samples),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be at least 1")));
            }
        }
        if !(self.target_fraction > 0.0 && self.target_fraction < 1.0) {
            return Err(Error::invalid("target_fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn train_folds(&self, train: &ObservationMatrix) -> Result<Vec<Fold>> {
        self.validate()?;
        build_folds(
            train,
            self.train_weeks,
            self.masks_per_week_train,
            self.scenario,
            self.target_fraction,
            self.seed,
            FoldStream::Train,
        )
    }

    pub fn test_folds(&self, test: &ObservationMatrix) -> Result<Vec<Fold>> {
        self.validate()?;
        build_folds(
            test,
            self.test_weeks,
            self.masks_per_week_test,
            self.scenario,
            self.target_fraction,
            self.seed,
            FoldStream::Test,
        )
    }
}

/// The six constraint settings of the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationCase {
    /// Case 1: the tuned model unchanged.
    None,
    /// Case 2: λ_L = λ_a = λ_b = 0.
    AllLambdasZero,
    /// Case 3: λ_a = λ_b = 0.
    FrobLambdasZero,
    /// Case 4: λ_L = 0.
    LambdaLZero,
    /// Case 5: spatial (column) Laplacian replaced by zero.
    SpatialLaplacianZero,
    /// Case 6: temporal (row) Laplacian replaced by zero.
    TemporalLaplacianZero,
}

impl AblationCase {
    pub const ALL: [AblationCase; 6] = [
        AblationCase::None,
        AblationCase::AllLambdasZero,
        AblationCase::FrobLambdasZero,
        AblationCase::LambdaLZero,
        AblationCase::SpatialLaplacianZero,
        AblationCase::TemporalLaplacianZero,
    ];

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1..=6 => Ok(Self::ALL[id as usize - 1]),
            _ => Err(Error::invalid(format!(
                "ablation case must be 1..6, got {id}"
            ))),
        }
    }

    pub fn id(self) -> u8 {
        Self::ALL.iter().position(|&c| c == self).unwrap() as u8 + 1
    }

    pub fn constraint(self) -> &'static str {
        match self {
            AblationCase::None => "none",
            AblationCase::AllLambdasZero => "all_lambdas_zero",
            AblationCase::FrobLambdasZero => "frob_lambdas_zero",
            AblationCase::LambdaLZero => "lambda_L_zero",
            AblationCase::SpatialLaplacianZero => "spatial_laplacian_zero",
            AblationCase::TemporalLaplacianZero => "temporal_laplacian_zero",
        }
    }
}

/// Anything that can complete a fold's training matrix.
pub trait FoldSolver: Sync {
    fn solve(&self, fold: &Fold) -> Result<DMatrix<f64>>;
}

impl<F> FoldSolver for F
where
    F: Fn(&Fold) -> Result<DMatrix<f64>> + Sync,
{
    fn solve(&self, fold: &Fold) -> Result<DMatrix<f64>> {
        self(fold)
    }
}

/// GRALS with graphs built from a hyperparameter combination, optionally
/// under an ablation constraint.
#[derive(Debug, Clone)]
pub struct GralsSolver {
    params: GralsParams,
    spatial: Laplacian,
    lagset: Option<LagSet>,
}

impl GralsSolver {
    pub fn new(
        hp: &Hyperparams,
        settings: &SolverSettings,
        meta: &[StationMetadata],
    ) -> Result<Self> {
        Self::with_case(hp, settings, meta, AblationCase::None)
    }

    pub fn with_case(
        hp: &Hyperparams,
        settings: &SolverSettings,
        meta: &[StationMetadata],
        case: AblationCase,
    ) -> Result<Self> {
        let mut params = GralsParams {
            rank: hp.rank,
            lambda_l: hp.lambda_l,
            lambda_a: hp.lambda_a,
            lambda_b: hp.lambda_b,
            max_outer: settings.max_outer,
            outer_tol: settings.outer_tol,
            cg_tol: settings.cg_tol,
            cg_max_iter: settings.cg_max_iter,
            seed: 0,
        };
        let mut spatial =
            build_spatial_graph(meta, &hp.spatial_config(settings.altitude_threshold))?.laplacian();
        let mut lagset = Some(hp.lagset()?);
        match case {
            AblationCase::None => {}
            AblationCase::AllLambdasZero => {
                params.lambda_l = 0.0;
                params.lambda_a = 0.0;
                params.lambda_b = 0.0;
            }
            AblationCase::FrobLambdasZero => {
                params.lambda_a = 0.0;
                params.lambda_b = 0.0;
            }
            AblationCase::LambdaLZero => params.lambda_l = 0.0,
            AblationCase::SpatialLaplacianZero => spatial = Laplacian::zero(meta.len()),
            AblationCase::TemporalLaplacianZero => lagset = None,
        }
        params.validate()?;
        Ok(Self {
            params,
            spatial,
            lagset,
        })
    }

    pub fn params(&self) -> &GralsParams {
        &self.params
    }

    pub fn complete(&self, m: &ObservationMatrix, seed: u64) -> Result<CompletionResult> {
        let temporal = match &self.lagset {
            Some(l) => build_temporal_graph(m.nrows(), l)?.laplacian(),
            None => Laplacian::zero(m.nrows()),
        };
        let params = GralsParams {
            seed,
            ..self.params.clone()
        };
        let (_, res) = grals_complete(m, &temporal, &self.spatial, &params)?;
        Ok(res)
    }
}

impl FoldSolver for GralsSolver {
    fn solve(&self, fold: &Fold) -> Result<DMatrix<f64>> {
        let res = self.complete(&fold.train, fold.seed)?;
        if !res.converged {
            info!(
                "grals stopped at the outer iteration cap ({}) on week {} mask {}",
                res.iterations, fold.week, fold.mask_id
            );
        }
        Ok(res.x_hat)
    }
}

/// One of the reference methods with fixed settings.
#[derive(Debug, Clone)]
pub struct BaselineSolver {
    method: Method,
    settings: SolverSettings,
    meta: Vec<StationMetadata>,
    grals: Option<GralsSolver>,
}

impl BaselineSolver {
    pub fn new(
        method: Method,
        best: &Hyperparams,
        settings: &SolverSettings,
        meta: &[StationMetadata],
    ) -> Result<Self> {
        let grals = match method {
            Method::Grals => Some(GralsSolver::new(best, settings, meta)?),
            _ => None,
        };
        Ok(Self {
            method,
            settings: settings.clone(),
            meta: meta.to_vec(),
            grals,
        })
    }
}

impl FoldSolver for BaselineSolver {
    fn solve(&self, fold: &Fold) -> Result<DMatrix<f64>> {
        let s = &self.settings;
        let m = &fold.train;
        let res = match self.method {
            Method::Grals => return self.grals.as_ref().unwrap().solve(fold),
            Method::Mean => mean_complete(m)?,
            Method::Idw => idw_complete(m, &self.meta, s.idw_power)?,
            Method::Pca => pca_complete(m, s.pca_rank, s.pca_tol, s.pca_max_iter)?,
            Method::SoftImpute => softimpute_complete(
                m,
                s.softimpute_lambda,
                s.softimpute_tol,
                s.softimpute_max_iter,
            )?,
        };
        if let Some(&(row, col)) = res.uncompletable.first() {
            return Err(Error::Uncompletable { row, col });
        }
        if !res.converged {
            info!(
                "{} stopped at its iteration cap ({}) on week {} mask {}",
                self.method, res.iterations, fold.week, fold.mask_id
            );
        }
        Ok(res.x_hat)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub week: usize,
    pub mask_id: usize,
    /// `None` when the solver failed on this fold.
    pub rmse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub folds: Vec<FoldScore>,
    /// Mean over the folds that succeeded; `None` if none did.
    pub mean_rmse: Option<f64>,
}

impl EvalReport {
    pub fn failures(&self) -> usize {
        self.folds.iter().filter(|f| f.rmse.is_none()).count()
    }
}

fn mean_of(scores: &[FoldScore]) -> Option<f64> {
    let ok: Vec<f64> = scores.iter().filter_map(|f| f.rmse).collect();
    (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64)
}

/// Runs `solver` on every fold (in parallel) and scores it on the holdout.
/// Results come back in fold order regardless of scheduling. A solver error
/// becomes a missing cell; hitting an iteration cap does not.
pub fn evaluate_folds(solver: &dyn FoldSolver, folds: &[Fold]) -> EvalReport {
    let scores: Vec<FoldScore> = folds
        .par_iter()
        .map(|fold| {
            let outcome = solver
                .solve(fold)
                .and_then(|x| evaluate_rmse(&x, &fold.truth, &fold.holdout.indices()));
            match outcome {
                Ok(rmse) => FoldScore {
                    week: fold.week,
                    mask_id: fold.mask_id,
                    rmse: Some(rmse),
                    error: None,
                },
                Err(e) => {
                    warn!(
                        "fold (week {}, mask {}) failed: {e}",
                        fold.week, fold.mask_id
                    );
                    FoldScore {
                        week: fold.week,
                        mask_id: fold.mask_id,
                        rmse: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let failed = scores.iter().filter(|s| s.rmse.is_none()).count();
    if failed > 0 {
        warn!(
            "{failed} of {} folds failed and are excluded from the mean",
            scores.len()
        );
    }
    EvalReport {
        mean_rmse: mean_of(&scores),
        folds: scores,
    }
}

/// Rows strictly before `boundary` go to train, the rest to test.
pub fn split_train_test(
    matrix: &ObservationMatrix,
    boundary: &Timestamp,
) -> Result<(ObservationMatrix, ObservationMatrix)> {
    let rows = matrix.row_index();
    match (rows.first(), rows.last()) {
        (Some(first), Some(last)) if first <= boundary && boundary <= last => {
            let cut = rows.partition_point(|t| t < boundary);
            Ok((
                matrix.slice_rows(0..cut),
                matrix.slice_rows(cut..rows.len()),
            ))
        }
        _ => Err(Error::invalid(format!(
            "split boundary {} is outside the matrix time range",
            crate::data::format_timestamp(boundary)
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneEntry {
    pub params: Hyperparams,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub entries: Vec<TuneEntry>,
    pub best_index: usize,
}

impl TuneReport {
    pub fn best(&self) -> &Hyperparams {
        &self.entries[self.best_index].params
    }

    pub fn best_mean(&self) -> f64 {
        self.entries[self.best_index].report.mean_rmse.unwrap()
    }
}

/// Samples combinations, scores each with GRALS on the paired training
/// folds and picks the lowest fold-mean RMSE (first one on ties).
pub fn tune(
    plan: &ExperimentPlan,
    grid: &HyperGrid,
    train: &ObservationMatrix,
    meta: &[StationMetadata],
) -> Result<TuneReport> {
    grid.validate()?;
    let folds = plan.train_folds(train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(plan.seed, &[0x6772_6964]));
    let combos = grid.sample(plan.n_samples, &mut rng);
    let entries = combos
        .into_par_iter()
        .map(|params| {
            let report = match GralsSolver::new(&params, &plan.solver, meta) {
                Ok(solver) => evaluate_folds(&solver, &folds),
                Err(e) => {
                    warn!("combination {} rejected: {e}", params.describe());
                    EvalReport {
                        folds: folds
                            .iter()
                            .map(|f| FoldScore {
                                week: f.week,
                                mask_id: f.mask_id,
                                rmse: None,
                                error: Some(e.to_string()),
                            })
                            .collect(),
                        mean_rmse: None,
                    }
                }
            };
            TuneEntry { params, report }
        })
        .collect::<Vec<_>>();
    let best_index = entries
        .iter()
        .enumerate()
        .filter_map(|(k, e)| e.report.mean_rmse.map(|v| (k, v)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(k, _)| k)
        .ok_or_else(|| Error::invalid("every sampled combination failed on every fold"))?;
    Ok(TuneReport {
        entries,
        best_index,
    })
}

/// Mean test RMSE of the tuned model.
pub fn evaluate_test(
    best: &Hyperparams,
    plan: &ExperimentPlan,
    test: &ObservationMatrix,
    meta: &[StationMetadata],
) -> Result<EvalReport> {
    run_ablation(AblationCase::None, best, plan, test, meta)
}

/// Test evaluation with `case`'s constraint layered on the tuned model.
pub fn run_ablation(
    case: AblationCase,
    best: &Hyperparams,
    plan: &ExperimentPlan,
    test: &ObservationMatrix,
    meta: &[StationMetadata],
) -> Result<EvalReport> {
    let folds = plan.test_folds(test)?;
    let solver = GralsSolver::with_case(best, &plan.solver, meta, case)?;
    Ok(evaluate_folds(&solver, &folds))
}

/// Every method on the same test folds.
pub fn run_baselines(
    plan: &ExperimentPlan,
    best: &Hyperparams,
    test: &ObservationMatrix,
    meta: &[StationMetadata],
) -> Result<Vec<(Method, EvalReport)>> {
    let folds = plan.test_folds(test)?;
    Method::ALL
        .into_iter()
        .map(|method| {
            let solver = BaselineSolver::new(method, best, &plan.solver, meta)?;
            Ok((method, evaluate_folds(&solver, &folds)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthesize_network;

    fn small_plan() -> ExperimentPlan {
        ExperimentPlan {
            train_weeks: 2,
            masks_per_week_train: 1,
            test_weeks: 1,
            masks_per_week_test: 2,
            n_samples: 2,
            ..ExperimentPlan::new(ScenarioKind::Spread, 3)
        }
    }

    fn quick_params() -> Hyperparams {
        Hyperparams {
            rank: 3,
            k: 2,
            ..Hyperparams::reference_block()
        }
    }

    #[test]
    fn case_ids_round_trip() {
        for (k, c) in AblationCase::ALL.into_iter().enumerate() {
            assert_eq!(c.id() as usize, k + 1);
            assert_eq!(AblationCase::from_id(c.id()).unwrap(), c);
        }
        assert!(AblationCase::from_id(0).is_err());
        assert!(AblationCase::from_id(7).is_err());
    }

    #[test]
    fn split_examples() {
        let (m, _) = synthesize_network(3, 2, 5).unwrap();
        let first = m.row_index()[0];
        let (train, test) = split_train_test(&m, &first).unwrap();
        assert_eq!(train.nrows(), 0);
        assert_eq!(test.nrows(), m.nrows());
        let mid = m.row_index()[700];
        let (train, test) = split_train_test(&m, &mid).unwrap();
        assert_eq!((train.nrows(), test.nrows()), (700, m.nrows() - 700));
        assert_eq!(test.row_index()[0], mid);
        let after = *m.row_index().last().unwrap() + chrono::Duration::days(1);
        assert!(split_train_test(&m, &after).is_err());
    }

    #[test]
    fn oracle_and_biased_solvers() {
        let (m, meta) = synthesize_network(5, 2, 11).unwrap();
        let plan = small_plan();
        let folds = plan.test_folds(&m).unwrap();
        let oracle = |f: &Fold| Ok(f.truth.values().clone());
        assert_eq!(evaluate_folds(&oracle, &folds).mean_rmse, Some(0.0));
        let biased = |f: &Fold| Ok(f.truth.values().add_scalar(0.5));
        let r = evaluate_folds(&biased, &folds).mean_rmse.unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        let failing = |_: &Fold| -> Result<DMatrix<f64>> { Err(Error::invalid("boom")) };
        let rep = evaluate_folds(&failing, &folds);
        assert_eq!(rep.mean_rmse, None);
        assert_eq!(rep.failures(), folds.len());
        let _ = meta;
    }

    #[test]
    fn case_one_matches_evaluate_test() {
        let (m, meta) = synthesize_network(6, 2, 4).unwrap();
        let plan = small_plan();
        let hp = quick_params();
        let a = evaluate_test(&hp, &plan, &m, &meta).unwrap();
        let b = run_ablation(AblationCase::None, &hp, &plan, &m, &meta).unwrap();
        assert_eq!(a, b);
        assert!(a.mean_rmse.is_some(), "{a:?}");
    }

    #[test]
    fn tune_single_combination_and_reproducible() {
        let (m, meta) = synthesize_network(6, 2, 4).unwrap();
        let plan = small_plan();
        let hp = quick_params();
        let rep = tune(&plan, &HyperGrid::single(&hp), &m, &meta).unwrap();
        assert_eq!(rep.entries.len(), 1);
        assert_eq!(rep.best(), &hp);

        let grid = HyperGrid {
            lambda_a: vec![0.005, 0.1],
            ..HyperGrid::single(&hp)
        };
        let r1 = tune(&plan, &grid, &m, &meta).unwrap();
        let r2 = tune(&plan, &grid, &m, &meta).unwrap();
        assert_eq!(r1, r2);
        let means: Vec<f64> = r1
            .entries
            .iter()
            .map(|e| e.report.mean_rmse.unwrap())
            .collect();
        let min = means.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(r1.best_mean(), min);
    }

    #[test]
    fn insufficient_weeks_reported() {
        let (m, meta) = synthesize_network(4, 1, 2).unwrap();
        let plan = small_plan();
        match evaluate_test(
            &quick_params(),
            &ExperimentPlan {
                test_weeks: 2,
                ..plan
            },
            &m,
            &meta,
        ) {
            Err(Error::InsufficientWeeks {
                needed: 2,
                found: 1,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
