use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::rng::Rng;

use super::SequenceRecord;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<SequenceRecord>,
    pub validation: Vec<SequenceRecord>,
    pub test: Vec<SequenceRecord>,
}

/// Shuffled train/validation/test partition.
///
/// Validation and test sizes are `floor(n * fraction)`; the remainder goes
/// to training.
pub fn split_dataset(
    records: Vec<SequenceRecord>,
    fractions: [f64; 3],
    seed: u64,
) -> Result<DatasetSplit> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::Config(format!(
            "split fractions {fractions:?} must each lie in [0, 1]"
        )));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions {fractions:?} sum to {total}, not 1"
        )));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = records.iter().find(|r| !seen.insert(r.id.as_str())) {
        return Err(Error::Data(format!("duplicate record id {}", dup.id)));
    }
    let n = records.len();
    let n_val = (n as f64 * fractions[1]).floor() as usize;
    let n_test = (n as f64 * fractions[2]).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);
    let mut slots: Vec<Option<SequenceRecord>> = records.into_iter().map(Some).collect();
    let mut take = |range: std::ops::Range<usize>| -> Vec<SequenceRecord> {
        order[range]
            .iter()
            .map(|&i| slots[i].take().expect("each index taken once"))
            .collect()
    };
    let validation = take(0..n_val);
    let test = take(n_val..n_val + n_test);
    let train = take(n_val + n_test..n);
    Ok(DatasetSplit {
        train,
        validation,
        test,
    })
}
