use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{LagSet, LagWeight, SpatialGraphConfig};

/// One point of the search space: GRALS settings plus the graph design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub rank: usize,
    pub lambda_l: f64,
    pub lambda_a: f64,
    pub lambda_b: f64,
    pub k: usize,
    pub weighted: bool,
    pub altitude_limit: bool,
    pub lags: Vec<usize>,
    #[serde(default)]
    pub lag_weight: LagWeight,
}

impl Hyperparams {
    /// Reference optimum reported for the Block scenario.
    pub fn reference_block() -> Self {
        Self {
            rank: 10,
            lambda_l: 0.001,
            lambda_a: 0.005,
            lambda_b: 0.005,
            k: 4,
            weighted: true,
            altitude_limit: true,
            lags: vec![1],
            lag_weight: LagWeight::Unit,
        }
    }

    /// Reference optimum reported for the Spread scenario.
    pub fn reference_spread() -> Self {
        Self {
            rank: 11,
            lambda_l: 0.001,
            lambda_a: 0.001,
            lambda_b: 0.005,
            k: 3,
            weighted: true,
            altitude_limit: true,
            lags: vec![1, 2, 3],
            lag_weight: LagWeight::Unit,
        }
    }

    pub fn lagset(&self) -> Result<LagSet> {
        LagSet::new(self.lags.clone(), self.lag_weight)
    }

    pub fn spatial_config(&self, altitude_threshold: f64) -> SpatialGraphConfig {
        SpatialGraphConfig {
            k: self.k,
            weighted: self.weighted,
            altitude_limit: self.altitude_limit,
            altitude_threshold,
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "r={} lambda_L={} lambda_a={} lambda_b={} K={} weighted={} altitude_limit={} lags={:?}",
            self.rank,
            self.lambda_l,
            self.lambda_a,
            self.lambda_b,
            self.k,
            self.weighted,
            self.altitude_limit,
            self.lags
        )
    }
}

/// Candidate values per hyperparameter; the search space is their product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub rank: Vec<usize>,
    pub lambda_l: Vec<f64>,
    pub lambda_a: Vec<f64>,
    pub lambda_b: Vec<f64>,
    pub k: Vec<usize>,
    pub weighted: Vec<bool>,
    pub altitude_limit: Vec<bool>,
    pub lags: Vec<Vec<usize>>,
    #[serde(default = "default_lag_weights")]
    pub lag_weight: Vec<LagWeight>,
}

fn default_lag_weights() -> Vec<LagWeight> {
    vec![LagWeight::Unit]
}

impl Default for HyperGrid {
    fn default() -> Self {
        let lambdas = vec![0.1, 0.01, 0.001, 0.005];
        Self {
            rank: (2..=20).collect(),
            lambda_l: lambdas.clone(),
            lambda_a: lambdas.clone(),
            lambda_b: lambdas,
            k: (1..=5).collect(),
            weighted: vec![true, false],
            altitude_limit: vec![true, false],
            lags: vec![vec![1], vec![1, 2], vec![1, 2, 3], vec![1, 2, 3, 4, 5]],
            lag_weight: default_lag_weights(),
        }
    }
}

impl HyperGrid {
    /// Grid containing exactly one combination.
    pub fn single(p: &Hyperparams) -> Self {
        Self {
            rank: vec![p.rank],
            lambda_l: vec![p.lambda_l],
            lambda_a: vec![p.lambda_a],
            lambda_b: vec![p.lambda_b],
            k: vec![p.k],
            weighted: vec![p.weighted],
            altitude_limit: vec![p.altitude_limit],
            lags: vec![p.lags.clone()],
            lag_weight: vec![p.lag_weight],
        }
    }

    fn radices(&self) -> [usize; 9] {
        [
            self.rank.len(),
            self.lambda_l.len(),
            self.lambda_a.len(),
            self.lambda_b.len(),
            self.k.len(),
            self.weighted.len(),
            self.altitude_limit.len(),
            self.lags.len(),
            self.lag_weight.len(),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.radices().contains(&0) {
            return Err(Error::invalid(
                "every hyperparameter needs at least one candidate value",
            ));
        }
        for lags in &self.lags {
            LagSet::new(lags.clone(), LagWeight::Unit)?;
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.radices().iter().product()
    }

    /// Combination number `index` in mixed-radix order (rank varies slowest).
    pub fn get(&self, index: usize) -> Hyperparams {
        assert!(index < self.size(), "grid index out of range");
        let radices = self.radices();
        let mut digits = [0usize; 9];
        let mut rest = index;
        for (d, &r) in digits.iter_mut().zip(radices.iter()).rev() {
            *d = rest % r;
            rest /= r;
        }
        Hyperparams {
            rank: self.rank[digits[0]],
            lambda_l: self.lambda_l[digits[1]],
            lambda_a: self.lambda_a[digits[2]],
            lambda_b: self.lambda_b[digits[3]],
            k: self.k[digits[4]],
            weighted: self.weighted[digits[5]],
            altitude_limit: self.altitude_limit[digits[6]],
            lags: self.lags[digits[7]].clone(),
            lag_weight: self.lag_weight[digits[8]],
        }
    }

    /// `n` distinct combinations sampled without replacement (all of them,
    /// in grid order, if `n` covers the grid).
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Hyperparams> {
        let size = self.size();
        if n >= size {
            return (0..size).map(|k| self.get(k)).collect();
        }
        rand::seq::index::sample(rng, size, n)
            .into_iter()
            .map(|k| self.get(k))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    #[test]
    fn default_grid_size() {
        let g = HyperGrid::default();
        assert_eq!(g.size(), 19 * 4 * 4 * 4 * 5 * 2 * 2 * 4);
        g.validate().unwrap();
    }

    #[test]
    fn indexing_covers_corners() {
        let g = HyperGrid::default();
        let first = g.get(0);
        assert_eq!(first.rank, 2);
        assert_eq!(first.lags, vec![1]);
        let last = g.get(g.size() - 1);
        assert_eq!(last.rank, 20);
        assert_eq!(last.lambda_b, 0.005);
        assert_eq!(last.lags, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn sampling_without_replacement() {
        let g = HyperGrid::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = g.sample(200, &mut rng);
        let unique: HashSet<String> = s.iter().map(|p| p.describe()).collect();
        assert_eq!(unique.len(), 200);

        let single = HyperGrid::single(&Hyperparams::reference_block());
        assert_eq!(single.size(), 1);
        assert_eq!(
            single.sample(5, &mut rng),
            vec![Hyperparams::reference_block()]
        );
    }

    #[test]
    fn rejects_empty_candidates() {
        let g = HyperGrid {
            k: vec![],
            ..HyperGrid::default()
        };
        assert!(g.validate().is_err());
    }
}
