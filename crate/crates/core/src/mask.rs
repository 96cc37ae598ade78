//! Synthetic holdout patterns: long Block outages and short Spread gaps.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{format_timestamp, parse_timestamp, ObservationMatrix, STEPS_PER_DAY};
use crate::error::{Error, Result};

/// Consecutive failed placement attempts before giving up.
pub const MAX_PLACEMENT_RETRIES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Block,
    Spread,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Block => "block",
            ScenarioKind::Spread => "spread",
        }
    }

    /// Inclusive run-length range in rows: 1 to 3 days for Block, 10 minutes
    /// to 2 hours for Spread.
    pub fn default_lengths(self) -> (usize, usize) {
        match self {
            ScenarioKind::Block => (STEPS_PER_DAY, 3 * STEPS_PER_DAY),
            ScenarioKind::Spread => (1, 12),
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "block" => Ok(ScenarioKind::Block),
            "spread" => Ok(ScenarioKind::Spread),
            _ => Err(Error::invalid(format!(
                "unknown scenario {s:?} (expected block|spread)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskScenario {
    pub kind: ScenarioKind,
    pub target_fraction: f64,
    /// Inclusive (min, max) run length in rows.
    pub run_lengths: (usize, usize),
    pub seed: u64,
}

impl MaskScenario {
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        Self {
            kind,
            target_fraction: 0.1,
            run_lengths: kind.default_lengths(),
            seed,
        }
    }

    pub fn block(seed: u64) -> Self {
        Self::new(ScenarioKind::Block, seed)
    }

    pub fn spread(seed: u64) -> Self {
        Self::new(ScenarioKind::Spread, seed)
    }

    pub fn with_fraction(mut self, fraction: f64) -> Self {
        self.target_fraction = fraction;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_fraction > 0.0 && self.target_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "target fraction must lie in (0, 1), got {}",
                self.target_fraction
            )));
        }
        let (lo, hi) = self.run_lengths;
        if lo == 0 || hi < lo {
            return Err(Error::invalid(format!(
                "invalid run length range ({lo}, {hi})"
            )));
        }
        Ok(())
    }

    /// round(fraction · m · n).
    pub fn target_count(&self, m: usize, n: usize) -> usize {
        (self.target_fraction * (m * n) as f64).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MaskRun {
    pub station: usize,
    pub start_row: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoldoutMask {
    /// Removed (row, column) entries, sorted.
    pub entries: Vec<(usize, usize)>,
    /// Runs in sampling order.
    pub runs: Vec<MaskRun>,
}

impl HoldoutMask {
    pub fn from_runs(runs: Vec<MaskRun>) -> Self {
        let mut entries: Vec<(usize, usize)> = runs
            .iter()
            .flat_map(|r| (r.start_row..r.start_row + r.length).map(move |i| (i, r.station)))
            .collect();
        entries.sort_unstable();
        entries.dedup();
        Self { entries, runs }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Free row intervals of one station, as half-open ranges.
fn free_gaps(occupied: &[(usize, usize)], m: usize) -> Vec<(usize, usize)> {
    let mut runs = occupied.to_vec();
    runs.sort_unstable();
    let mut gaps = Vec::new();
    let mut cursor = 0;
    for (s, e) in runs {
        if s > cursor {
            gaps.push((cursor, s));
        }
        cursor = cursor.max(e);
    }
    if cursor < m {
        gaps.push((cursor, m));
    }
    gaps
}

/// Samples holdout runs until exactly round(fraction · m · n) entries are
/// covered.
///
/// Each step draws a run length uniformly from the scenario's range (the last
/// run is truncated to hit the target), a station uniformly among those that
/// still have room for it, and a start uniformly among the positions that
/// keep the run inside the matrix and off the station's earlier runs.
pub fn generate_mask(matrix: &ObservationMatrix, scenario: &MaskScenario) -> Result<HoldoutMask> {
    scenario.validate()?;
    if !matrix.is_fully_observed() {
        return Err(Error::invalid(
            "holdout masks are generated on fully observed slices",
        ));
    }
    let (m, n) = matrix.shape();
    let target = scenario.target_count(m, n);
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut occupied: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut runs = Vec::new();
    let mut total = 0;
    let mut failures = 0;
    let (lo, hi) = scenario.run_lengths;

    while total < target {
        let length = rng.random_range(lo..=hi).min(target - total);
        let gaps: Vec<Vec<(usize, usize)>> = occupied.iter().map(|o| free_gaps(o, m)).collect();
        let fits: Vec<usize> = (0..n)
            .filter(|&s| gaps[s].iter().any(|&(a, b)| b - a >= length))
            .collect();
        let Some(&station) = fits.choose(&mut rng) else {
            failures += 1;
            if failures >= MAX_PLACEMENT_RETRIES {
                return Err(Error::MaskPlacement(format!(
                    "{total} of {target} entries placed; no station has room for a run of {length} after {failures} attempts"
                )));
            }
            continue;
        };
        failures = 0;
        let slots: usize = gaps[station]
            .iter()
            .filter(|&&(a, b)| b - a >= length)
            .map(|&(a, b)| b - a - length + 1)
            .sum();
        let mut pick = rng.random_range(0..slots);
        let mut start = 0;
        for &(a, b) in &gaps[station] {
            if b - a < length {
                continue;
            }
            let count = b - a - length + 1;
            if pick < count {
                start = a + pick;
                break;
            }
            pick -= count;
        }
        occupied[station].push((start, start + length));
        runs.push(MaskRun {
            station,
            start_row: start,
            length,
        });
        total += length;
    }
    Ok(HoldoutMask::from_runs(runs))
}

/// Held-out entries with their true values.
#[derive(Debug, Clone, PartialEq)]
pub struct Holdout {
    pub entries: Vec<(usize, usize, f64)>,
}

impl Holdout {
    pub fn indices(&self) -> Vec<(usize, usize)> {
        self.entries.iter().map(|&(i, j, _)| (i, j)).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Splits Ω into a training matrix and the held-out entries.
pub fn apply_mask(
    matrix: &ObservationMatrix,
    mask: &HoldoutMask,
) -> Result<(ObservationMatrix, Holdout)> {
    let mut entries = Vec::with_capacity(mask.entries.len());
    for &(i, j) in &mask.entries {
        if i >= matrix.nrows() || j >= matrix.ncols() {
            return Err(Error::MaskOnUnobserved { row: i, col: j });
        }
        let v = matrix
            .get(i, j)
            .ok_or(Error::MaskOnUnobserved { row: i, col: j })?;
        entries.push((i, j, v));
    }
    let train = matrix.without_entries(&mask.entries)?;
    Ok((train, Holdout { entries }))
}

#[derive(Debug, Serialize, Deserialize)]
struct RunRecord {
    station_id: String,
    start_timestamp: String,
    length_steps: usize,
}

/// Writes `station_id,start_timestamp,length_steps`.
pub fn write_mask_csv<W: Write>(
    writer: W,
    mask: &HoldoutMask,
    matrix: &ObservationMatrix,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for run in &mask.runs {
        wtr.serialize(RunRecord {
            station_id: matrix.col_index()[run.station].clone(),
            start_timestamp: format_timestamp(&matrix.row_index()[run.start_row]),
            length_steps: run.length,
        })?;
    }
    wtr.flush().map_err(|e| Error::io("<mask>", e))?;
    Ok(())
}

/// Reads a mask file and resolves it against `matrix`.
pub fn read_mask_csv<R: Read>(reader: R, matrix: &ObservationMatrix) -> Result<HoldoutMask> {
    let cols: HashMap<&str, usize> = matrix
        .col_index()
        .iter()
        .enumerate()
        .map(|(j, s)| (s.as_str(), j))
        .collect();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut runs = Vec::new();
    for rec in rdr.deserialize() {
        let rec: RunRecord = rec?;
        let station = *cols
            .get(rec.station_id.as_str())
            .ok_or_else(|| Error::UnknownStation(rec.station_id.clone()))?;
        let t = parse_timestamp(&rec.start_timestamp)?;
        let start_row = matrix.row_of(&t).ok_or_else(|| {
            Error::invalid(format!(
                "mask run starts outside the matrix at {}",
                rec.start_timestamp
            ))
        })?;
        if rec.length_steps == 0 || start_row + rec.length_steps > matrix.nrows() {
            return Err(Error::invalid(format!(
                "mask run for {} at {} does not fit in the matrix",
                rec.station_id, rec.start_timestamp
            )));
        }
        runs.push(MaskRun {
            station,
            start_row,
            length: rec.length_steps,
        });
    }
    Ok(HoldoutMask::from_runs(runs))
}
