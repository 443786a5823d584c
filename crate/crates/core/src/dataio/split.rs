use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::clip::PoseClip;
use super::window::Window;
use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.70, val: 0.15, test: 0.15 }
    }
}

/// Indices into the clip list for each split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Number of units in (train, val, test); val and test get at least one.
fn split_sizes(n: usize, f: &SplitFractions) -> (usize, usize, usize) {
    let mut val = ((f.val * n as f64).round() as usize).max(1);
    let mut test = ((f.test * n as f64).round() as usize).max(1);
    // keep at least one training unit
    while val + test >= n && val + test > 2 {
        if val >= test {
            val -= 1;
        } else {
            test -= 1;
        }
    }
    (n - val - test, val, test)
}

/// Seeded shuffle then contiguous partition. Clips sharing a `subject` move
/// together; otherwise every clip is its own unit.
pub fn split_clips(clips: &[PoseClip], fractions: SplitFractions, seed: u64) -> Result<SplitIndices, DataError> {
    let sum = fractions.train + fractions.val + fractions.test;
    if (sum - 1.0).abs() > 1e-9 || fractions.train < 0.0 || fractions.val < 0.0 || fractions.test < 0.0 {
        return Err(DataError::Split(format!("fractions must be non-negative and sum to 1, got {sum}")));
    }
    let by_subject = !clips.is_empty() && clips.iter().all(|c| c.subject.is_some());
    let mut units: Vec<Vec<usize>> = if by_subject {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, c) in clips.iter().enumerate() {
            groups.entry(c.subject.as_deref().unwrap_or_default()).or_default().push(i);
        }
        groups.into_values().collect()
    } else {
        (0..clips.len()).map(|i| vec![i]).collect()
    };
    if units.len() < 3 {
        return Err(DataError::Split(format!("need at least 3 split units, got {}", units.len())));
    }
    units.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (n_train, n_val, _) = split_sizes(units.len(), &fractions);
    let flatten = |us: &[Vec<usize>]| us.iter().flatten().copied().collect::<Vec<_>>();
    Ok(SplitIndices {
        train: flatten(&units[..n_train]),
        val: flatten(&units[n_train..n_train + n_val]),
        test: flatten(&units[n_train + n_val..]),
    })
}

/// Per class, keeps `ceil(pct/100 · n_class)` indices chosen by a seeded
/// shuffle. Returned indices are in ascending order.
pub fn subsample_indices(labels: &[usize], pct: f64, seed: u64) -> Result<Vec<usize>, DataError> {
    if !(pct > 0.0 && pct <= 100.0) {
        return Err(DataError::Split(format!("fraction {pct}% outside (0, 100]")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for (_, mut idx) in by_class {
        let k = ((pct * idx.len() as f64 / 100.0) - 1e-9).ceil().max(1.0) as usize;
        idx.shuffle(&mut rng);
        keep.extend_from_slice(&idx[..k.min(idx.len())]);
    }
    keep.sort_unstable();
    Ok(keep)
}

pub fn subsample_fraction(windows: &[Window], pct: f64, seed: u64) -> Result<Vec<Window>, DataError> {
    let labels: Vec<usize> = windows.iter().map(|w| w.label).collect();
    Ok(subsample_indices(&labels, pct, seed)?.into_iter().map(|i| windows[i].clone()).collect())
}
