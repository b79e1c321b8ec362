//! Protein records, task label schemes, the dataset text format, splitting
//! and a synthetic corpus generator.

mod alphabet;
mod format;
mod split;
mod synth;
mod tasks;

pub use alphabet::{normalize_residue, residue_index, AMINO_ALPHABET, PSSM_WIDTH, VOCAB_SIZE};
pub use format::{parse_dataset, read_dataset, write_dataset, write_dataset_file};
pub use split::{split_dataset, DatasetSplit};
pub use synth::{synth_generate, window_label, SynthConfig, SYNTH_WINDOW_RADIUS};
pub use tasks::{collapse_ssp, solvent_labels, SolventMode, TaskScheme, MISSING_LABEL};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One protein chain with its profile and per-task labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub id: String,
    pub residues: String,
    /// `[T, 20]` position-specific scoring matrix.
    pub pssm: Tensor,
    /// Task name to label string of length `T`; `.` marks a missing label.
    pub labels: BTreeMap<String, String>,
}

impl SequenceRecord {
    /// Checks the record invariants, normalising residue codes.
    pub fn new(
        id: impl Into<String>,
        residues: &str,
        pssm: Tensor,
        labels: BTreeMap<String, String>,
    ) -> Result<Self> {
        let id = id.into();
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(Error::Data(format!(
                "record id '{id}' must be non-empty without whitespace"
            )));
        }
        let mut norm = String::with_capacity(residues.len());
        for (pos, c) in residues.chars().enumerate() {
            norm.push(normalize_residue(c).ok_or_else(|| {
                Error::Data(format!(
                    "record {id}: invalid residue '{c}' at position {}",
                    pos + 1
                ))
            })?);
        }
        let len = norm.len();
        if len == 0 {
            return Err(Error::Data(format!("record {id}: empty residue string")));
        }
        if pssm.shape() != [len, PSSM_WIDTH] {
            return Err(Error::Data(format!(
                "record {id}: {len} residues but PSSM has shape {:?}",
                pssm.shape()
            )));
        }
        pssm.ensure_finite(&format!("record {id} PSSM"))
            .map_err(|e| Error::Data(e.to_string()))?;
        for (task, label) in &labels {
            let scheme = TaskScheme::by_name(task)
                .ok_or_else(|| Error::Data(format!("record {id}: unknown task '{task}'")))?;
            if label.chars().count() != len {
                return Err(Error::Data(format!(
                    "record {id}: {task} labels have length {} but the sequence has {len}",
                    label.chars().count()
                )));
            }
            scheme
                .encode(label)
                .map_err(|e| Error::Data(format!("record {id}: {e}")))?;
        }
        Ok(SequenceRecord {
            id,
            residues: norm,
            pssm,
            labels,
        })
    }

    pub fn seq_len(&self) -> usize {
        self.residues.len()
    }

    /// Lookup-table indices of the residues plus the untouched PSSM.
    pub fn encode_features(&self) -> (Vec<usize>, &Tensor) {
        let idx = self
            .residues
            .chars()
            .map(|c| residue_index(c).expect("residues are normalised on construction"))
            .collect();
        (idx, &self.pssm)
    }

    pub fn label(&self, task: &str) -> Option<&str> {
        self.labels.get(task).map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_uses_alphabet_order() {
        let pssm = Tensor::zeros(&[4, 20]).unwrap();
        let r = SequenceRecord::new("r", "ACBy", pssm, BTreeMap::new()).unwrap();
        assert_eq!(r.residues, "ACXY");
        let (idx, p) = r.encode_features();
        assert_eq!(idx, vec![0, 1, 20, 19]);
        assert_eq!(p.shape(), &[4, 20]);
    }

    #[test]
    fn rejects_bad_records() {
        let pssm = Tensor::zeros(&[2, 20]).unwrap();
        let err = SequenceRecord::new("p9", "ACD", pssm, BTreeMap::new()).unwrap_err();
        assert!(err.to_string().contains("p9"));
        let mut labels = BTreeMap::new();
        labels.insert("dssp".to_string(), "HH".to_string());
        let pssm = Tensor::zeros(&[3, 20]).unwrap();
        assert!(SequenceRecord::new("p", "ACD", pssm.clone(), labels).is_err());
        let mut labels = BTreeMap::new();
        labels.insert("foo".to_string(), "HHH".to_string());
        assert!(SequenceRecord::new("p", "ACD", pssm, labels).is_err());
    }
}
