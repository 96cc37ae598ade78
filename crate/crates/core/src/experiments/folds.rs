use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{slice_weeks, ObservationMatrix};
use crate::error::{Error, Result};
use crate::mask::{apply_mask, generate_mask, Holdout, MaskScenario, ScenarioKind};

/// Which part of the protocol a fold set belongs to. Train and test folds
/// draw from independent seed streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldStream {
    Train,
    Test,
}

impl FoldStream {
    fn tag(self) -> u64 {
        match self {
            FoldStream::Train => 0x7472_6169_6e00,
            FoldStream::Test => 0x7465_7374_0000,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seed derived from a base seed and a path of integers.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix(base), |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// One cross-validation fold: a gap-free week with a synthetic mask applied.
#[derive(Debug, Clone)]
pub struct Fold {
    /// Ordinal of the week within the source matrix.
    pub week: usize,
    pub mask_id: usize,
    /// Seed of the mask; also used to initialize iterative solvers.
    pub seed: u64,
    pub truth: ObservationMatrix,
    pub train: ObservationMatrix,
    pub holdout: Holdout,
}

/// Picks `n_weeks` gap-free weeks by seeded sampling without replacement,
/// returned in chronological order.
pub fn select_weeks(
    matrix: &ObservationMatrix,
    n_weeks: usize,
    seed: u64,
) -> Result<Vec<crate::data::WeekSlice>> {
    let candidates = slice_weeks(matrix, true);
    if candidates.len() < n_weeks {
        return Err(Error::InsufficientWeeks {
            needed: n_weeks,
            found: candidates.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> =
        rand::seq::index::sample(&mut rng, candidates.len(), n_weeks).into_vec();
    picked.sort_unstable();
    let mut slots: Vec<Option<crate::data::WeekSlice>> = candidates.into_iter().map(Some).collect();
    Ok(picked
        .into_iter()
        .map(|k| slots[k].take().unwrap())
        .collect())
}

/// Builds `n_weeks × masks_per_week` folds. Week choice depends only on
/// (seed, stream) and mask seeds on (seed, stream, week, mask index), so two
/// scenarios or two hyperparameter settings see the same weeks.
pub fn build_folds(
    matrix: &ObservationMatrix,
    n_weeks: usize,
    masks_per_week: usize,
    kind: ScenarioKind,
    fraction: f64,
    seed: u64,
    stream: FoldStream,
) -> Result<Vec<Fold>> {
    let weeks = select_weeks(matrix, n_weeks, derive_seed(seed, &[stream.tag()]))?;
    let mut folds = Vec::with_capacity(n_weeks * masks_per_week);
    for week in &weeks {
        for mask_id in 0..masks_per_week {
            let mask_seed = derive_seed(seed, &[stream.tag(), week.ordinal as u64, mask_id as u64]);
            let scenario = MaskScenario::new(kind, mask_seed).with_fraction(fraction);
            let mask = generate_mask(&week.matrix, &scenario)?;
            let (train, holdout) = apply_mask(&week.matrix, &mask)?;
            folds.push(Fold {
                week: week.ordinal,
                mask_id,
                seed: mask_seed,
                truth: week.matrix.clone(),
                train,
                holdout,
            });
        }
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthesize_network;

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, &[2, 3]);
        assert_eq!(a, derive_seed(1, &[2, 3]));
        assert_ne!(a, derive_seed(1, &[3, 2]));
        assert_ne!(a, derive_seed(2, &[2, 3]));
    }

    #[test]
    fn scenarios_share_weeks() {
        let (m, _) = synthesize_network(4, 4, 1).unwrap();
        let b = build_folds(&m, 2, 2, ScenarioKind::Block, 0.1, 9, FoldStream::Train).unwrap();
        let s = build_folds(&m, 2, 2, ScenarioKind::Spread, 0.1, 9, FoldStream::Train).unwrap();
        let weeks = |f: &[Fold]| f.iter().map(|x| x.week).collect::<Vec<_>>();
        assert_eq!(weeks(&b), weeks(&s));
        assert_eq!(b.len(), 4);
        for (x, y) in b.iter().zip(&s) {
            assert_eq!(x.holdout.len(), y.holdout.len());
        }
    }

    #[test]
    fn insufficient_weeks() {
        let (m, _) = synthesize_network(3, 2, 1).unwrap();
        match build_folds(&m, 3, 1, ScenarioKind::Block, 0.1, 0, FoldStream::Test) {
            Err(Error::InsufficientWeeks {
                needed: 3,
                found: 2,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
