use std::collections::BTreeMap;

use crate::data::{SequenceRecord, TaskScheme};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::TaskLogits;

/// Per-task class indices, `None` where the label is missing.
pub type TaskLabels = BTreeMap<String, Vec<Option<usize>>>;

/// Which task losses enter the objective.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskSelector {
    All,
    Only(String),
}

impl TaskSelector {
    pub fn includes(&self, task: &str) -> bool {
        match self {
            TaskSelector::All => true,
            TaskSelector::Only(t) => t == task,
        }
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    logits.expect_rank(2, "softmax")?;
    logits.ensure_finite("softmax input")?;
    let c = logits.shape()[1];
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(c) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

/// Summed negative log-likelihood over the selected tasks and labeled
/// positions, with its gradient with respect to every task's logits.
pub fn nll_loss(
    logits: &TaskLogits,
    labels: &TaskLabels,
    selector: &TaskSelector,
) -> Result<(f64, TaskLogits)> {
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(logits.tasks.len());
    for (task, scores) in &logits.tasks {
        let mut grad = scores.zeros_like();
        let gold = labels.get(task).filter(|_| selector.includes(task));
        if let Some(gold) = gold {
            let (len, c) = (scores.shape()[0], scores.shape()[1]);
            if gold.len() != len {
                return Err(Error::Data(format!(
                    "{task}: {} labels for {len} positions",
                    gold.len()
                )));
            }
            let probs = softmax_rows(scores)?;
            for (t, label) in gold.iter().enumerate() {
                let Some(k) = *label else { continue };
                if k >= c {
                    return Err(Error::Data(format!(
                        "{task}: class {k} at position {} but only {c} classes",
                        t + 1
                    )));
                }
                let row = &scores.data()[t * c..(t + 1) * c];
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                loss += lse - row[k];
                let g = &mut grad.data_mut()[t * c..(t + 1) * c];
                g.copy_from_slice(&probs.data()[t * c..(t + 1) * c]);
                g[k] -= 1.0;
            }
        }
        grads.push((task.clone(), grad));
    }
    Ok((loss, TaskLogits { tasks: grads }))
}

/// Argmax class per position; ties go to the lowest class index.
pub fn argmax_rows(scores: &Tensor) -> Vec<usize> {
    let c = scores.shape()[1];
    scores
        .data()
        .chunks_exact(c)
        .map(|row| {
            let mut best = 0;
            for k in 1..c {
                if row[k] > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Decoded label strings per task.
pub fn predict_labels(logits: &TaskLogits, schemes: &[TaskScheme]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (task, scores) in &logits.tasks {
        let scheme = schemes
            .iter()
            .find(|s| &s.name == task)
            .ok_or_else(|| Error::Config(format!("no alphabet for task {task}")))?;
        if scores.shape()[1] != scheme.class_count() {
            return Err(Error::Data(format!(
                "{task}: {} scores per position but alphabet has {} classes",
                scores.shape()[1],
                scheme.class_count()
            )));
        }
        out.insert(task.clone(), scheme.decode(&argmax_rows(scores)));
    }
    Ok(out)
}

/// Encodes a record's labels for the given schemes; absent tasks are skipped.
pub fn record_labels(record: &SequenceRecord, schemes: &[TaskScheme]) -> Result<TaskLabels> {
    let mut out = TaskLabels::new();
    for s in schemes {
        if let Some(l) = record.label(&s.name) {
            out.insert(s.name.clone(), s.encode(l)?);
        }
    }
    Ok(out)
}
