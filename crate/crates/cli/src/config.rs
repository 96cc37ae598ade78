//! Layered configuration: built-in defaults, then the `--config` file, then
//! command-line flags. The resolved result is written back as the run
//! manifest, which can be passed to `--config` to replay the run.

use std::path::{Path, PathBuf};

use grmc::experiments::{HyperGrid, SolverSettings};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Contents of a `--config` file (or manifest).
#[derive(Debug, Default)]
pub struct ConfigFile {
    table: toml::Table,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let table = text
            .parse::<toml::Table>()
            .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))?;
        Ok(Self { table })
    }

    fn section(&self, name: &str) -> toml::Table {
        match self.table.get(name) {
            Some(toml::Value::Table(t)) => t.clone(),
            _ => toml::Table::new(),
        }
    }

    fn top_level(&self) -> toml::Table {
        self.table
            .iter()
            .filter(|(_, v)| !v.is_table())
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}

/// Overlays the flags (absent ones serialize to nothing) on the file's
/// section and deserializes the result over the defaults.
fn layer<F: Serialize, C: DeserializeOwned>(
    base: toml::Table,
    flags: &F,
    what: &str,
) -> Result<C, CliError> {
    let mut table = base;
    let flags =
        toml::Table::try_from(flags).map_err(|e| CliError::usage(format!("{what}: {e}")))?;
    table.extend(flags);
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| CliError::usage(format!("{what}: {e}")))
}

pub fn resolve<F: Serialize, C: DeserializeOwned>(
    file: Option<&ConfigFile>,
    section: &str,
    flags: &F,
) -> Result<C, CliError> {
    let base = file.map(|f| f.section(section)).unwrap_or_default();
    layer(base, flags, &format!("[{section}]"))
}

pub fn resolve_global<F: Serialize>(
    file: Option<&ConfigFile>,
    flags: &F,
) -> Result<GlobalConfig, CliError> {
    let base = file.map(|f| f.top_level()).unwrap_or_default();
    layer(base, flags, "global options")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub format: Format,
    /// Name of the command that wrote a manifest; ignored on input.
    #[serde(skip_serializing)]
    pub command: Option<String>,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("."),
            format: Format::Text,
            command: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub stations: usize,
    pub weeks: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            stations: 50,
            weeks: 10,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub observations: PathBuf,
    pub stations: PathBuf,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpatialConfig {
    pub stations: PathBuf,
    pub k: usize,
    pub weighted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub altitude_limit: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemporalConfig {
    pub rows: usize,
    pub lags: String,
    pub weights: String,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        Self {
            rows: 0,
            lags: "1".into(),
            weights: "unit".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskConfig {
    pub observations: PathBuf,
    pub stations: PathBuf,
    pub scenario: String,
    pub fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_len: Option<usize>,
    /// Generate the mask inside this week slice instead of the whole matrix.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub week: Option<usize>,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            observations: PathBuf::new(),
            stations: PathBuf::new(),
            scenario: "block".into(),
            fraction: 0.1,
            min_len: None,
            max_len: None,
            week: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompleteConfig {
    pub observations: PathBuf,
    pub stations: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    pub method: String,
    pub rank: usize,
    pub lambda_l: f64,
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub k: usize,
    pub weighted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub altitude_limit: Option<f64>,
    pub lags: String,
    pub lag_weights: String,
    pub no_spatial: bool,
    pub no_temporal: bool,
    pub lambda: f64,
    pub pca_rank: usize,
    pub power: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub cg_tol: f64,
}

impl Default for CompleteConfig {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            observations: PathBuf::new(),
            stations: PathBuf::new(),
            mask: None,
            method: "grals".into(),
            rank: 10,
            lambda_l: 0.001,
            lambda_a: 0.005,
            lambda_b: 0.005,
            k: 4,
            weighted: true,
            altitude_limit: None,
            lags: "1".into(),
            lag_weights: "unit".into(),
            no_spatial: false,
            no_temporal: false,
            lambda: s.softimpute_lambda,
            pca_rank: s.pca_rank,
            power: s.idw_power,
            max_iter: 100,
            tol: 1e-6,
            cg_tol: s.cg_tol,
        }
    }
}

/// Shared by `tune`, `benchmark` and `ablate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub observations: PathBuf,
    pub stations: PathBuf,
    pub scenario: String,
    /// Rows before this timestamp are training data, the rest test data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    pub train_weeks: usize,
    pub masks_per_week_train: usize,
    pub test_weeks: usize,
    pub masks_per_week_test: usize,
    pub fraction: f64,
    pub samples: usize,
    /// Tuned hyperparameters (as written by `tune`); defaults to the
    /// reference optimum of each scenario.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<PathBuf>,
    /// Ablation case (1-6); all cases when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case: Option<u8>,
    pub solver: SolverSettings,
    pub grid: HyperGrid,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            observations: PathBuf::new(),
            stations: PathBuf::new(),
            scenario: "both".into(),
            split: None,
            train_weeks: 10,
            masks_per_week_train: 5,
            test_weeks: 5,
            masks_per_week_test: 3,
            fraction: 0.1,
            samples: 60,
            params: None,
            case: None,
            solver: SolverSettings::default(),
            grid: HyperGrid::default(),
        }
    }
}

/// Writes `manifest-<command>.toml`: the global options plus the resolved
/// command section.
pub fn write_manifest<C: Serialize>(
    global: &GlobalConfig,
    command: &str,
    section: &str,
    config: &C,
) -> Result<PathBuf, CliError> {
    let mut table = toml::Table::try_from(global).map_err(|e| CliError::usage(e.to_string()))?;
    table.insert("command".into(), toml::Value::String(command.into()));
    let body = toml::Table::try_from(config).map_err(|e| CliError::usage(e.to_string()))?;
    table.insert(section.into(), toml::Value::Table(body));
    let text = toml::to_string(&table).map_err(|e| CliError::usage(e.to_string()))?;
    let path = global.output_dir.join(format!("manifest-{command}.toml"));
    std::fs::write(&path, text)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}
