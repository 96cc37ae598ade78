//! Spatial (station) and temporal (timestamp) graphs and their Laplacians.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::StationMetadata;
use crate::error::{Error, Result};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Great-circle distance in kilometers on a spherical Earth.
pub fn haversine_distance(a: &StationMetadata, b: &StationMetadata) -> f64 {
    let (phi1, phi2) = (a.latitude.to_radians(), b.latitude.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.longitude - a.longitude).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Undirected graph with positive edge weights. Edges are stored once with
/// `i < j`, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n_nodes: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl WeightedGraph {
    pub fn empty(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            edges: Vec::new(),
        }
    }

    /// Builds a graph from an edge list in any orientation. Self-loops,
    /// duplicate pairs and non-positive weights are rejected.
    pub fn from_edges(
        n_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (a, b, w) in edges {
            if a == b {
                return Err(Error::invalid(format!("self-loop on node {a}")));
            }
            if a >= n_nodes || b >= n_nodes {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) out of range for {n_nodes} nodes"
                )));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) has invalid weight {w}"
                )));
            }
            if map.insert((a.min(b), a.max(b)), w).is_some() {
                return Err(Error::invalid(format!("duplicate edge ({a}, {b})")));
            }
        }
        Ok(Self {
            n_nodes,
            edges: map.into_iter().map(|((i, j), w)| (i, j, w)).collect(),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.edges
            .binary_search_by(|&(i, j, _)| (i, j).cmp(&key))
            .is_ok()
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<f64> {
        let key = (a.min(b), a.max(b));
        self.edges
            .binary_search_by(|&(i, j, _)| (i, j).cmp(&key))
            .ok()
            .map(|k| self.edges[k].2)
    }

    pub fn laplacian(&self) -> Laplacian {
        laplacian(self)
    }

    /// Writes the `i,j,weight` edge list.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["i", "j", "weight"])?;
        for &(i, j, w) in &self.edges {
            wtr.write_record([i.to_string(), j.to_string(), w.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("<edges>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagWeight {
    /// w = 1 for every lag.
    #[default]
    Unit,
    /// w = 1 / lag.
    InverseLag,
}

impl std::str::FromStr for LagWeight {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unit" => Ok(LagWeight::Unit),
            "inverse" | "inverse_lag" => Ok(LagWeight::InverseLag),
            _ => Err(Error::invalid(format!(
                "unknown lag weight rule {s:?} (expected unit|inverse)"
            ))),
        }
    }
}

/// Repeating temporal dependency pattern.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagSet {
    lags: Vec<usize>,
    rule: LagWeight,
}

impl LagSet {
    pub fn new(lags: Vec<usize>, rule: LagWeight) -> Result<Self> {
        if lags.is_empty() {
            return Err(Error::invalid("lag set is empty"));
        }
        if lags[0] == 0 || lags.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "lags must be strictly increasing positive integers, got {lags:?}"
            )));
        }
        Ok(Self { lags, rule })
    }

    /// Parses a comma-separated list such as `1,2,3`.
    pub fn parse(list: &str, rule: LagWeight) -> Result<Self> {
        let lags = list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::invalid(format!("bad lag {s:?} in {list:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(lags, rule)
    }

    pub fn lags(&self) -> &[usize] {
        &self.lags
    }

    pub fn rule(&self) -> LagWeight {
        self.rule
    }

    pub fn weight(&self, lag: usize) -> f64 {
        match self.rule {
            LagWeight::Unit => 1.0,
            LagWeight::InverseLag => 1.0 / lag as f64,
        }
    }

    pub fn max_lag(&self) -> usize {
        *self.lags.last().unwrap()
    }
}

pub const DEFAULT_ALTITUDE_THRESHOLD_M: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGraphConfig {
    pub k: usize,
    pub weighted: bool,
    pub altitude_limit: bool,
    pub altitude_threshold: f64,
}

impl SpatialGraphConfig {
    pub fn knn(k: usize) -> Self {
        Self {
            k,
            weighted: false,
            altitude_limit: false,
            altitude_threshold: DEFAULT_ALTITUDE_THRESHOLD_M,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if !(self.altitude_threshold > 0.0) {
            return Err(Error::invalid("altitude threshold must be positive"));
        }
        Ok(())
    }
}

/// K-nearest-neighbor station graph, symmetrized by union.
///
/// With the altitude limit on, pairs whose altitude difference exceeds the
/// threshold are dropped from the candidate set before neighbors are chosen,
/// so a station keeps looking for `k` admissible neighbors. Distance ties go
/// to the lower station index.
pub fn build_spatial_graph(
    meta: &[StationMetadata],
    cfg: &SpatialGraphConfig,
) -> Result<WeightedGraph> {
    cfg.validate()?;
    let n = meta.len();
    if cfg.k >= n {
        return Err(Error::invalid(format!(
            "k = {} requires more than {n} stations",
            cfg.k
        )));
    }
    let mut chosen: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for i in 0..n {
        let mut candidates: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .filter(|&j| {
                !cfg.altitude_limit
                    || (meta[i].altitude - meta[j].altitude).abs() <= cfg.altitude_threshold
            })
            .map(|j| (haversine_distance(&meta[i.min(j)], &meta[i.max(j)]), j))
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(d, j) in candidates.iter().take(cfg.k) {
            let weight = if cfg.weighted {
                if d == 0.0 {
                    return Err(Error::CoincidentStations(
                        meta[i].station_id.clone(),
                        meta[j].station_id.clone(),
                    ));
                }
                1.0 / d
            } else {
                1.0
            };
            chosen.insert((i.min(j), i.max(j)), weight);
        }
    }
    Ok(WeightedGraph {
        n_nodes: n,
        edges: chosen.into_iter().map(|((i, j), w)| (i, j, w)).collect(),
    })
}

/// Connects timestamp t to t + lag for every lag in the set.
pub fn build_temporal_graph(m: usize, lagset: &LagSet) -> Result<WeightedGraph> {
    if lagset.max_lag() >= m {
        return Err(Error::invalid(format!(
            "largest lag {} must be smaller than the row count {m}",
            lagset.max_lag()
        )));
    }
    let mut edges = Vec::with_capacity(lagset.lags().iter().map(|l| m - l).sum());
    for t in 0..m {
        for &lag in lagset.lags() {
            if t + lag < m {
                edges.push((t, t + lag, lagset.weight(lag)));
            }
        }
    }
    Ok(WeightedGraph { n_nodes: m, edges })
}

/// Sparse symmetric graph Laplacian L = D − W in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    n: usize,
    degree: Vec<f64>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    // adjacency weights W_ij (stored positive; the operator subtracts them)
    weights: Vec<f64>,
}

pub fn laplacian(g: &WeightedGraph) -> Laplacian {
    let n = g.n_nodes;
    let mut degree = vec![0.0; n];
    let mut counts = vec![0usize; n + 1];
    for &(i, j, w) in &g.edges {
        degree[i] += w;
        degree[j] += w;
        counts[i + 1] += 1;
        counts[j + 1] += 1;
    }
    for k in 0..n {
        counts[k + 1] += counts[k];
    }
    let row_ptr = counts.clone();
    let mut fill = counts;
    let nnz = row_ptr[n];
    let mut col_idx = vec![0; nnz];
    let mut weights = vec![0.0; nnz];
    for &(i, j, w) in &g.edges {
        for (a, b) in [(i, j), (j, i)] {
            let p = fill[a];
            col_idx[p] = b;
            weights[p] = w;
            fill[a] += 1;
        }
    }
    // sort each row by column for a deterministic product order
    for a in 0..n {
        let range = row_ptr[a]..row_ptr[a + 1];
        let mut row: Vec<(usize, f64)> = col_idx[range.clone()]
            .iter()
            .copied()
            .zip(weights[range.clone()].iter().copied())
            .collect();
        row.sort_by_key(|e| e.0);
        for (p, (c, w)) in range.zip(row) {
            col_idx[p] = c;
            weights[p] = w;
        }
    }
    Laplacian {
        n,
        degree,
        row_ptr,
        col_idx,
        weights,
    }
}

impl Laplacian {
    /// Laplacian of the edgeless graph (the zero matrix).
    pub fn zero(n: usize) -> Self {
        laplacian(&WeightedGraph::empty(n))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.col_idx.is_empty()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.degree
    }

    /// Off-diagonal neighbors of row `i` with their adjacency weights.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.weights[r].iter().copied())
    }

    /// out = L·X for a row-major n × width block X.
    pub fn apply_rows(&self, x: &[f64], width: usize, out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n * width);
        debug_assert_eq!(out.len(), self.n * width);
        for i in 0..self.n {
            let row_out = &mut out[i * width..(i + 1) * width];
            let d = self.degree[i];
            for (o, &xi) in row_out.iter_mut().zip(&x[i * width..(i + 1) * width]) {
                *o = d * xi;
            }
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[p];
                let w = self.weights[p];
                for (o, &xj) in row_out.iter_mut().zip(&x[j * width..(j + 1) * width]) {
                    *o -= w * xj;
                }
            }
        }
    }

    /// Tr(Xᵀ L X) for a row-major n × width block X.
    pub fn trace_form(&self, x: &[f64], width: usize) -> f64 {
        let mut lx = vec![0.0; x.len()];
        self.apply_rows(x, width, &mut lx);
        x.iter().zip(&lx).map(|(a, b)| a * b).sum()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut out = nalgebra::DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            out[(i, i)] = self.degree[i];
            for (j, w) in self.neighbors(i) {
                out[(i, j)] -= w;
            }
        }
        out
    }
}
