//! Class-incremental splits: one batch per class group, each capped per class.

use rand::seq::SliceRandom;
use rand::Rng;

use super::data::Dataset;
use crate::error::{Error, Result};

pub const DEFAULT_SPLIT: [[u8; 2]; 5] = [[0, 1], [2, 3], [4, 5], [6, 7], [8, 9]];

pub fn default_split() -> Vec<Vec<u8>> {
    DEFAULT_SPLIT.iter().map(|p| p.to_vec()).collect()
}

/// Batch `b` (1-based) of a scenario, with its samples in presentation order.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioBatch {
    pub batch: u64,
    pub classes: Vec<u8>,
    pub data: Dataset,
    /// Positions in the source dataset, in presentation order.
    pub source: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub batches: Vec<ScenarioBatch>,
    pub cap: usize,
}

impl Scenario {
    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn classes(&self) -> Vec<u8> {
        self.batches.iter().flat_map(|b| b.classes.iter().copied()).collect()
    }

    /// Global 1-based index range `(first, last)` of each batch.
    pub fn index_ranges(&self) -> Vec<(u64, u64)> {
        let mut first = 1;
        self.batches
            .iter()
            .map(|b| {
                let range = (first, first + b.data.len() as u64 - 1);
                first = range.1 + 1;
                range
            })
            .collect()
    }
}

/// Draws `cap` samples of every class of every group without replacement,
/// then shuffles each batch. Batches follow the order of `groups`.
pub fn build_scenario<R: Rng + ?Sized>(
    dataset: &Dataset,
    groups: &[Vec<u8>],
    cap: usize,
    rng: &mut R,
) -> Result<Scenario> {
    if groups.is_empty() || cap == 0 {
        return Err(Error::InvalidScenario("need at least one group and a positive cap".into()));
    }
    let mut seen = [false; 256];
    for group in groups {
        if group.is_empty() {
            return Err(Error::InvalidScenario("empty class group".into()));
        }
        for &c in group {
            if std::mem::replace(&mut seen[c as usize], true) {
                return Err(Error::InvalidScenario(format!("class {c} appears in more than one batch")));
            }
        }
    }
    let mut batches = Vec::with_capacity(groups.len());
    for (b, group) in groups.iter().enumerate() {
        let mut chosen = Vec::with_capacity(cap * group.len());
        for &class in group {
            let mut pool = dataset.positions_of(&[class]);
            if pool.len() < cap {
                return Err(Error::InvalidScenario(format!(
                    "class {class} has {} samples, cap is {cap}",
                    pool.len()
                )));
            }
            let (picked, _) = pool.partial_shuffle(rng, cap);
            chosen.extend_from_slice(picked);
        }
        chosen.shuffle(rng);
        batches.push(ScenarioBatch {
            batch: b as u64 + 1,
            classes: group.clone(),
            data: dataset.subset(&chosen),
            source: chosen,
        });
    }
    Ok(Scenario { batches, cap })
}
