//! Observation matrices, station metadata, CSV ingestion/export, week
//! slicing and the synthetic station-network generator.
//!
//! An [`ObservationMatrix`] is laid out timestamps × stations. Unobserved
//! entries are stored as NaN and are never read by the solvers; use the
//! mask accessors to decide what is defined.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime, TimeZone, Utc};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Timestamp = DateTime<Utc>;

/// Sampling step of every observation matrix.
pub const STEP_MINUTES: i64 = 10;

/// Rows in one week slice: 7 × 144 ten-minute steps plus the inclusive
/// right endpoint.
pub const WEEK_ROWS: usize = 1009;

pub const STEPS_PER_DAY: usize = 144;

pub fn step() -> Duration {
    Duration::minutes(STEP_MINUTES)
}

pub fn format_timestamp(t: &Timestamp) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Parses an ISO-8601 UTC timestamp. Offsets are accepted and converted;
/// a timestamp without zone designator is read as UTC.
pub fn parse_timestamp(s: &str) -> Result<Timestamp> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(Utc.from_utc_datetime(&t));
        }
    }
    if let Ok(d) = chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).unwrap()));
    }
    Err(Error::Parse(format!("invalid timestamp {s:?}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMetadata {
    pub station_id: String,
    /// Degrees north.
    pub latitude: f64,
    /// Degrees east.
    pub longitude: f64,
    /// Meters above sea level.
    #[serde(rename = "altitude_m")]
    pub altitude: f64,
}

impl StationMetadata {
    pub fn new(id: impl Into<String>, latitude: f64, longitude: f64, altitude: f64) -> Self {
        Self {
            station_id: id.into(),
            latitude,
            longitude,
            altitude,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.latitude) || !(-180.0..=180.0).contains(&self.longitude) {
            return Err(Error::invalid(format!(
                "station {}: coordinates ({}, {}) out of range",
                self.station_id, self.latitude, self.longitude
            )));
        }
        if !self.altitude.is_finite() {
            return Err(Error::invalid(format!(
                "station {}: altitude is not finite",
                self.station_id
            )));
        }
        Ok(())
    }
}

fn validate_metadata(meta: &[StationMetadata]) -> Result<()> {
    let mut seen = HashMap::with_capacity(meta.len());
    for s in meta {
        s.validate()?;
        if seen.insert(s.station_id.as_str(), ()).is_some() {
            return Err(Error::DuplicateStation(s.station_id.clone()));
        }
    }
    Ok(())
}

/// Dense m × n temperature matrix with its observation mask Ω.
#[derive(Debug, Clone)]
pub struct ObservationMatrix {
    values: DMatrix<f64>,
    // column-major like `values`: entry (i, j) lives at j * m + i
    observed: Vec<bool>,
    row_index: Vec<Timestamp>,
    col_index: Vec<String>,
}

/// Equal when indices, masks and observed values agree; the NaN placeholders
/// of unobserved cells are ignored.
impl PartialEq for ObservationMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.row_index == other.row_index
            && self.col_index == other.col_index
            && self.observed == other.observed
            && self
                .values
                .iter()
                .zip(other.values.iter())
                .zip(&self.observed)
                .all(|((a, b), &o)| !o || a == b)
    }
}

impl ObservationMatrix {
    /// Builds a matrix from its parts. `observed` is column-major. Values
    /// outside the mask are discarded.
    pub fn new(
        values: DMatrix<f64>,
        observed: Vec<bool>,
        row_index: Vec<Timestamp>,
        col_index: Vec<String>,
    ) -> Result<Self> {
        let (m, n) = values.shape();
        if observed.len() != m * n {
            return Err(Error::invalid(format!(
                "mask has {} entries for a {m}x{n} matrix",
                observed.len()
            )));
        }
        if row_index.len() != m || col_index.len() != n {
            return Err(Error::invalid(format!(
                "index lengths ({}, {}) do not match shape {m}x{n}",
                row_index.len(),
                col_index.len()
            )));
        }
        for w in row_index.windows(2) {
            if w[1] - w[0] != step() {
                return Err(Error::invalid(format!(
                    "row index is not a regular 10-minute grid at {}",
                    format_timestamp(&w[1])
                )));
            }
        }
        let mut values = values;
        for (v, &o) in values.iter_mut().zip(&observed) {
            if !o {
                *v = f64::NAN;
            }
        }
        Ok(Self {
            values,
            observed,
            row_index,
            col_index,
        })
    }

    /// Fully observed matrix on a regular grid starting at `start`.
    pub fn fully_observed(
        values: DMatrix<f64>,
        start: Timestamp,
        col_index: Vec<String>,
    ) -> Result<Self> {
        let (m, n) = values.shape();
        let rows = regular_grid(start, m);
        Self::new(values, vec![true; m * n], rows, col_index)
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.observed[j * self.nrows() + i]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.is_observed(i, j).then(|| self.values[(i, j)])
    }

    /// Raw values; unobserved entries are NaN.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Column-major observation mask.
    pub fn mask(&self) -> &[bool] {
        &self.observed
    }

    pub fn row_index(&self) -> &[Timestamp] {
        &self.row_index
    }

    pub fn col_index(&self) -> &[String] {
        &self.col_index
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }

    /// Observed entries in column-major order.
    pub fn iter_observed(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let m = self.nrows();
        self.observed
            .iter()
            .enumerate()
            .filter(|(_, &o)| o)
            .map(move |(k, _)| (k % m, k / m, self.values[(k % m, k / m)]))
    }

    pub fn observed_in_row(&self, i: usize) -> usize {
        (0..self.ncols())
            .filter(|&j| self.is_observed(i, j))
            .count()
    }

    pub fn observed_in_col(&self, j: usize) -> usize {
        let m = self.nrows();
        self.observed[j * m..(j + 1) * m]
            .iter()
            .filter(|&&o| o)
            .count()
    }

    /// Copy of a contiguous row range.
    pub fn slice_rows(&self, rows: Range<usize>) -> ObservationMatrix {
        let (m, n) = self.shape();
        assert!(rows.end <= m, "row range out of bounds");
        let len = rows.len();
        let values = self.values.rows(rows.start, len).into_owned();
        let mut observed = Vec::with_capacity(len * n);
        for j in 0..n {
            observed.extend_from_slice(&self.observed[j * m + rows.start..j * m + rows.end]);
        }
        ObservationMatrix {
            values,
            observed,
            row_index: self.row_index[rows].to_vec(),
            col_index: self.col_index.clone(),
        }
    }

    /// Copy with the given entries removed from Ω.
    pub fn without_entries(&self, entries: &[(usize, usize)]) -> Result<ObservationMatrix> {
        let m = self.nrows();
        let mut out = self.clone();
        for &(i, j) in entries {
            if i >= m || j >= self.ncols() || !self.is_observed(i, j) {
                return Err(Error::MaskOnUnobserved { row: i, col: j });
            }
            out.observed[j * m + i] = false;
            out.values[(i, j)] = f64::NAN;
        }
        Ok(out)
    }

    pub fn row_of(&self, t: &Timestamp) -> Option<usize> {
        let first = *self.row_index.first()?;
        let delta = *t - first;
        if delta < Duration::zero() || delta.num_seconds() % (STEP_MINUTES * 60) != 0 {
            return None;
        }
        let i = (delta.num_seconds() / (STEP_MINUTES * 60)) as usize;
        (i < self.nrows()).then_some(i)
    }

    pub fn col_of(&self, station: &str) -> Option<usize> {
        self.col_index.iter().position(|s| s == station)
    }
}

pub fn regular_grid(start: Timestamp, len: usize) -> Vec<Timestamp> {
    (0..len).map(|i| start + step() * i as i32).collect()
}

#[derive(Debug, Deserialize)]
struct ObservationRecord {
    timestamp: String,
    station_id: String,
    temperature_c: f64,
}

pub fn read_metadata<R: Read>(reader: R) -> Result<Vec<StationMetadata>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let meta = rdr
        .deserialize()
        .collect::<std::result::Result<Vec<StationMetadata>, _>>()?;
    validate_metadata(&meta)?;
    Ok(meta)
}

pub fn read_metadata_file(path: &Path) -> Result<Vec<StationMetadata>> {
    read_metadata(File::open(path).map_err(|e| Error::io(path, e))?)
}

/// Reads a long-format observations table against a metadata table. Columns
/// follow the metadata order; rows are gap-filled to a regular grid from the
/// first to the last timestamp.
pub fn read_observations<R: Read>(
    reader: R,
    meta: &[StationMetadata],
) -> Result<ObservationMatrix> {
    validate_metadata(meta)?;
    let station_col: HashMap<&str, usize> = meta
        .iter()
        .enumerate()
        .map(|(j, s)| (s.station_id.as_str(), j))
        .collect();

    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records: Vec<(Timestamp, usize, f64)> = Vec::new();
    let mut previous: Option<Timestamp> = None;
    for rec in rdr.deserialize() {
        let rec: ObservationRecord = rec?;
        let t = parse_timestamp(&rec.timestamp)?;
        if let Some(p) = previous {
            if t < p {
                return Err(Error::NonMonotoneTimestamps {
                    previous: format_timestamp(&p),
                    current: format_timestamp(&t),
                });
            }
        }
        previous = Some(t);
        let j = *station_col
            .get(rec.station_id.as_str())
            .ok_or_else(|| Error::UnknownStation(rec.station_id.clone()))?;
        records.push((t, j, rec.temperature_c));
    }

    let n = meta.len();
    let col_index: Vec<String> = meta.iter().map(|s| s.station_id.clone()).collect();
    let Some(&(start, _, _)) = records.first() else {
        return ObservationMatrix::new(DMatrix::zeros(0, n), Vec::new(), Vec::new(), col_index);
    };
    let end = records.last().unwrap().0;
    let step_secs = STEP_MINUTES * 60;
    let span = (end - start).num_seconds();
    let m = (span / step_secs) as usize + 1;

    let mut values = DMatrix::from_element(m, n, f64::NAN);
    let mut observed = vec![false; m * n];
    for &(t, j, v) in &records {
        let offset = (t - start).num_seconds();
        if offset % step_secs != 0 {
            return Err(Error::OffGrid(format_timestamp(&t)));
        }
        let i = (offset / step_secs) as usize;
        if observed[j * m + i] {
            return Err(Error::DuplicateObservation {
                timestamp: format_timestamp(&t),
                station: meta[j].station_id.clone(),
            });
        }
        observed[j * m + i] = true;
        values[(i, j)] = v;
    }
    ObservationMatrix::new(values, observed, regular_grid(start, m), col_index)
}

/// Loads an observations CSV and its metadata CSV.
pub fn ingest_observations(
    obs_csv: &Path,
    meta_csv: &Path,
) -> Result<(ObservationMatrix, Vec<StationMetadata>)> {
    let meta = read_metadata_file(meta_csv)?;
    let file = File::open(obs_csv).map_err(|e| Error::io(obs_csv, e))?;
    let matrix = read_observations(file, &meta)?;
    Ok((matrix, meta))
}

pub fn write_metadata<W: Write>(writer: W, meta: &[StationMetadata]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for s in meta {
        wtr.serialize(s)?;
    }
    wtr.flush().map_err(|e| Error::io("<metadata>", e))?;
    Ok(())
}

/// Writes observed entries in long format, ordered by timestamp then column.
pub fn write_observations<W: Write>(writer: W, matrix: &ObservationMatrix) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["timestamp", "station_id", "temperature_c"])?;
    let (m, n) = matrix.shape();
    for i in 0..m {
        let ts = format_timestamp(&matrix.row_index[i]);
        for j in 0..n {
            if let Some(v) = matrix.get(i, j) {
                wtr.write_record([ts.as_str(), matrix.col_index[j].as_str(), &v.to_string()])?;
            }
        }
    }
    wtr.flush().map_err(|e| Error::io("<observations>", e))?;
    Ok(())
}

pub fn write_dataset(
    dir: &Path,
    matrix: &ObservationMatrix,
    meta: &[StationMetadata],
) -> Result<()> {
    let obs = dir.join("observations.csv");
    let st = dir.join("stations.csv");
    write_observations(File::create(&obs).map_err(|e| Error::io(&obs, e))?, matrix)?;
    write_metadata(File::create(&st).map_err(|e| Error::io(&st, e))?, meta)?;
    Ok(())
}

/// One week of data: [`WEEK_ROWS`] consecutive rows.
#[derive(Debug, Clone)]
pub struct WeekSlice {
    /// Position of the week in the tiling of the source matrix.
    pub ordinal: usize,
    pub start_row: usize,
    pub start: Timestamp,
    pub matrix: ObservationMatrix,
}

/// Tiles the matrix into disjoint consecutive weeks starting at row 0. A
/// trailing partial week is dropped.
pub fn slice_weeks(matrix: &ObservationMatrix, gap_free_only: bool) -> Vec<WeekSlice> {
    let n_weeks = matrix.nrows() / WEEK_ROWS;
    (0..n_weeks)
        .filter_map(|w| {
            let start_row = w * WEEK_ROWS;
            let week = matrix.slice_rows(start_row..start_row + WEEK_ROWS);
            if gap_free_only && !week.is_fully_observed() {
                return None;
            }
            Some(WeekSlice {
                ordinal: w,
                start_row,
                start: matrix.row_index[start_row],
                matrix: week,
            })
        })
        .collect()
}

// Constants of the synthetic generator.
const LAT_RANGE: (f64, f64) = (49.5, 51.5);
const LON_RANGE: (f64, f64) = (2.5, 6.4);
const LAPSE_RATE: f64 = -0.0065;
const ANOMALY_SIGMA: f64 = 2.0;
/// Length scale (km) of the squared-exponential spatial covariance of the
/// synthetic anomaly field.
pub const SYNTH_CORRELATION_LENGTH_KM: f64 = 300.0;
const ANOMALY_PERSISTENCE: f64 = 0.995;
const LOCAL_SIGMA: f64 = 0.25;
const LOCAL_PERSISTENCE: f64 = 0.9;
const SENSOR_SIGMA: f64 = 0.05;

/// Smooth terrain: flat lowlands in the north-west rising to uplands in the
/// south-east, with some small-scale relief in the hills.
pub fn terrain_altitude(lat: f64, lon: f64) -> f64 {
    let south = 1.0 / (1.0 + ((lat - 50.35) * 6.0).exp());
    let east = ((lon - 3.5) / 2.5).clamp(0.0, 1.0);
    let relief = (9.0 * lat).sin() * (7.0 * lon).cos() + 1.0;
    (10.0 + 550.0 * south * east + 70.0 * south * relief).max(0.0)
}

/// Generates a fully observed synthetic network of `n_stations` stations over
/// `n_weeks` week slices, starting 2020-01-01T00:00Z.
///
/// Temperature = seasonal trend + diurnal cycle (amplitude growing inland) +
/// altitude lapse + a synoptic anomaly field that is AR(1) in time and has
/// squared-exponential spatial covariance in great-circle distance + a weak local
/// AR(1) term per station + white sensor noise.
pub fn synthesize_network(
    n_stations: usize,
    n_weeks: usize,
    seed: u64,
) -> Result<(ObservationMatrix, Vec<StationMetadata>)> {
    if n_stations < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 stations, got {n_stations}"
        )));
    }
    if n_weeks < 1 {
        return Err(Error::invalid("need at least 1 week"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n_stations.to_string().len().max(3);
    let meta: Vec<StationMetadata> = (0..n_stations)
        .map(|j| {
            let lat = rng.random_range(LAT_RANGE.0..LAT_RANGE.1);
            let lon = rng.random_range(LON_RANGE.0..LON_RANGE.1);
            StationMetadata::new(
                format!("ST{:0width$}", j + 1),
                lat,
                lon,
                terrain_altitude(lat, lon),
            )
        })
        .collect();
    let diurnal_amp: Vec<f64> = meta
        .iter()
        .map(|s| {
            3.5 + (s.longitude - LON_RANGE.0) / (LON_RANGE.1 - LON_RANGE.0)
                + rng.random_range(-0.3..0.3)
        })
        .collect();

    let n = n_stations;
    let mut cov = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let d = crate::graph::haversine_distance(&meta[a], &meta[b]);
            cov[(a, b)] =
                ANOMALY_SIGMA * ANOMALY_SIGMA * (-(d / SYNTH_CORRELATION_LENGTH_KM).powi(2)).exp();
        }
        cov[(a, a)] += 1e-6 * ANOMALY_SIGMA * ANOMALY_SIGMA;
    }
    let chol = nalgebra::Cholesky::new(cov)
        .ok_or_else(|| Error::invalid("anomaly covariance is not positive definite"))?
        .unpack();

    let m = n_weeks * WEEK_ROWS;
    let start = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let eps: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        (0..n)
            .map(|a| (0..=a).map(|b| chol[(a, b)] * eps[b]).sum())
            .collect()
    };
    let mut anomaly = draw(&mut rng);
    let mut local: Vec<f64> = (0..n)
        .map(|_| LOCAL_SIGMA * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let innovation = (1.0 - ANOMALY_PERSISTENCE * ANOMALY_PERSISTENCE).sqrt();
    let local_innovation = (1.0 - LOCAL_PERSISTENCE * LOCAL_PERSISTENCE).sqrt();

    let mut values = DMatrix::zeros(m, n);
    for i in 0..m {
        if i > 0 {
            let shock = draw(&mut rng);
            for (z, s) in anomaly.iter_mut().zip(shock) {
                *z = ANOMALY_PERSISTENCE * *z + innovation * s;
            }
            for l in local.iter_mut() {
                let e: f64 = rng.sample(StandardNormal);
                *l = LOCAL_PERSISTENCE * *l + local_innovation * LOCAL_SIGMA * e;
            }
        }
        let days = i as f64 / STEPS_PER_DAY as f64;
        let hour = (i % STEPS_PER_DAY) as f64 / 6.0;
        let seasonal = 10.5 - 7.5 * (2.0 * std::f64::consts::PI * (days - 20.0) / 365.25).cos();
        let diurnal = (2.0 * std::f64::consts::PI * (hour - 14.5) / 24.0).cos();
        for j in 0..n {
            let sensor: f64 = rng.sample(StandardNormal);
            values[(i, j)] = seasonal
                + diurnal_amp[j] * diurnal
                + LAPSE_RATE * meta[j].altitude
                + anomaly[j]
                + local[j]
                + SENSOR_SIGMA * sensor;
        }
    }
    let cols = meta.iter().map(|s| s.station_id.clone()).collect();
    let matrix = ObservationMatrix::fully_observed(values, start, cols)?;
    Ok((matrix, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    const META: &str =
        "station_id,latitude,longitude,altitude_m\nA,50.0,4.0,10\nB,50.1,4.1,20\nC,50.2,4.2,30\n";

    fn obs_csv(skip: Option<usize>) -> String {
        let mut s = String::from("timestamp,station_id,temperature_c\n");
        let mut k = 0;
        for t in 0..6 {
            for st in ["A", "B", "C"] {
                if Some(k) != skip {
                    s.push_str(&format!("2020-01-01T00:{:02}:00Z,{st},{}.5\n", t * 10, t));
                }
                k += 1;
            }
        }
        s
    }

    #[test]
    fn ingest_full_grid() {
        let meta = read_metadata(META.as_bytes()).unwrap();
        let m = read_observations(obs_csv(None).as_bytes(), &meta).unwrap();
        assert_eq!(m.shape(), (6, 3));
        assert_eq!(m.observed_count(), 18);
        assert_eq!(m.get(2, 1), Some(2.5));
    }

    #[test]
    fn ingest_one_hole() {
        let meta = read_metadata(META.as_bytes()).unwrap();
        // record 7 is timestamp 2, station B
        let m = read_observations(obs_csv(Some(7)).as_bytes(), &meta).unwrap();
        assert_eq!(m.observed_count(), 17);
        assert!(!m.is_observed(2, 1));
        assert!(m.get(2, 1).is_none());
    }

    #[test]
    fn ingest_gap_fills_rows() {
        let meta = read_metadata(META.as_bytes()).unwrap();
        let csv = "timestamp,station_id,temperature_c\n2020-01-01T00:00:00Z,A,1\n2020-01-01T00:30:00Z,B,2\n";
        let m = read_observations(csv.as_bytes(), &meta).unwrap();
        assert_eq!(m.shape(), (4, 3));
        assert_eq!(m.observed_in_row(1), 0);
        assert_eq!(m.observed_in_row(2), 0);
    }

    #[test]
    fn ingest_rejections() {
        let meta = read_metadata(META.as_bytes()).unwrap();
        let dup = "timestamp,station_id,temperature_c\n2020-01-01T00:00:00Z,A,1\n2020-01-01T00:00:00Z,A,2\n";
        match read_observations(dup.as_bytes(), &meta) {
            Err(Error::DuplicateObservation { timestamp, station }) => {
                assert_eq!(station, "A");
                assert_eq!(timestamp, "2020-01-01T00:00:00Z");
            }
            other => panic!("unexpected {other:?}"),
        }
        let unknown = "timestamp,station_id,temperature_c\n2020-01-01T00:00:00Z,Z,1\n";
        assert!(matches!(
            read_observations(unknown.as_bytes(), &meta),
            Err(Error::UnknownStation(s)) if s == "Z"
        ));
        let backwards = "timestamp,station_id,temperature_c\n2020-01-01T00:10:00Z,A,1\n2020-01-01T00:00:00Z,B,2\n";
        assert!(matches!(
            read_observations(backwards.as_bytes(), &meta),
            Err(Error::NonMonotoneTimestamps { .. })
        ));
        let off = "timestamp,station_id,temperature_c\n2020-01-01T00:00:00Z,A,1\n2020-01-01T00:15:00Z,B,2\n";
        assert!(matches!(
            read_observations(off.as_bytes(), &meta),
            Err(Error::OffGrid(_))
        ));
    }

    #[test]
    fn metadata_rejections() {
        assert!(matches!(
            read_metadata(
                "station_id,latitude,longitude,altitude_m\nA,1,1,0\nA,2,2,0\n".as_bytes()
            ),
            Err(Error::DuplicateStation(_))
        ));
        assert!(
            read_metadata("station_id,latitude,longitude,altitude_m\nA,91,1,0\n".as_bytes())
                .is_err()
        );
        assert!(
            read_metadata("station_id,latitude,longitude,altitude_m\nA,1,-181,0\n".as_bytes())
                .is_err()
        );
    }

    fn weeks_matrix(n_weeks: usize, hole: Option<(usize, usize)>) -> ObservationMatrix {
        let m = n_weeks * WEEK_ROWS;
        let values = DMatrix::from_fn(m, 2, |i, j| (i + j) as f64);
        let start = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let full =
            ObservationMatrix::fully_observed(values, start, vec!["a".into(), "b".into()]).unwrap();
        match hole {
            Some(h) => full.without_entries(&[h]).unwrap(),
            None => full,
        }
    }

    #[test]
    fn week_slicing() {
        let full = weeks_matrix(3, None);
        let weeks = slice_weeks(&full, true);
        assert_eq!(weeks.len(), 3);
        for (w, s) in weeks.iter().enumerate() {
            assert_eq!(s.matrix.nrows(), WEEK_ROWS);
            assert_eq!(s.start_row, w * WEEK_ROWS);
        }

        let holed = weeks_matrix(3, Some((WEEK_ROWS + 17, 1)));
        let gap_free = slice_weeks(&holed, true);
        assert_eq!(gap_free.len(), 2);
        assert_eq!(
            gap_free.iter().map(|s| s.ordinal).collect::<Vec<_>>(),
            vec![0, 2]
        );
        assert_eq!(slice_weeks(&holed, false).len(), 3);
    }

    #[test]
    fn short_matrix_has_no_weeks() {
        let values = DMatrix::zeros(WEEK_ROWS - 1, 2);
        let start = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let m =
            ObservationMatrix::fully_observed(values, start, vec!["a".into(), "b".into()]).unwrap();
        assert!(slice_weeks(&m, false).is_empty());
    }

    #[test]
    fn synthesize_rejects_single_station() {
        assert!(synthesize_network(1, 1, 0).is_err());
        assert!(synthesize_network(2, 0, 0).is_err());
    }

    #[test]
    fn synthesize_shape() {
        let (m, meta) = synthesize_network(5, 1, 3).unwrap();
        assert_eq!(m.shape(), (WEEK_ROWS, 5));
        assert!(m.is_fully_observed());
        assert_eq!(meta.len(), 5);
        assert_eq!(m.col_index()[0], meta[0].station_id);
    }

    #[test]
    fn timestamp_parsing() {
        let a = parse_timestamp("2021-09-01T00:00:00Z").unwrap();
        let b = parse_timestamp("2021-09-01").unwrap();
        let c = parse_timestamp("2021-09-01T02:00:00+02:00").unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert!(parse_timestamp("yesterday").is_err());
    }
}
