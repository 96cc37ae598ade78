//! Monte Carlo cross-validation, randomized hyperparameter search, test
//! evaluation and the ablation driver.

mod folds;
mod grid;
mod harness;
mod report;

pub use folds::{build_folds, derive_seed, select_weeks, Fold, FoldStream};
pub use grid::{HyperGrid, Hyperparams};
pub use harness::{
    evaluate_folds, evaluate_test, run_ablation, run_baselines, split_train_test, tune,
    AblationCase, BaselineSolver, EvalReport, ExperimentPlan, FoldScore, FoldSolver, GralsSolver,
    SolverSettings, TuneEntry, TuneReport,
};
pub use report::{ResultRow, ResultTable, SummaryRow};
