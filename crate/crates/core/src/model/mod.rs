//! The full network: embedding and PSSM join, the shift-and-stitch
//! convolution stack, and one linear classifier per task.

mod checkpoint;
mod config;
mod loss;
mod stack;

pub use checkpoint::{checkpoint_load, checkpoint_read, checkpoint_save, checkpoint_write, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::ModelConfig;
pub use loss::{argmax_rows, nll_loss, predict_labels, record_labels, softmax_rows, TaskLabels, TaskSelector};
pub use stack::{ConvBlock, ConvStack, Route};

use crate::data::{SequenceRecord, PSSM_WIDTH, VOCAB_SIZE};
use crate::error::{Error, Result};
use crate::layers::{DropoutLayer, LinearLayer, LookupTable, Mode, Param, Precision};
use crate::rng::Rng;
use crate::stitch::StitchPlan;
use crate::tensor::Tensor;

/// Pre-softmax scores per task, each `[T, classes]`, in model task order.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskLogits {
    pub tasks: Vec<(String, Tensor)>,
}

impl TaskLogits {
    pub fn get(&self, task: &str) -> Option<&Tensor> {
        self.tasks.iter().find(|(n, _)| n == task).map(|(_, t)| t)
    }
}

#[derive(Debug, Clone)]
struct ForwardCache {
    len: usize,
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    pub lookup: LookupTable,
    pub input_dropout: DropoutLayer,
    pub stack: ConvStack,
    pub heads: Vec<LinearLayer>,
    /// Name of the task a fine-tuned model was specialised to.
    pub tag: Option<String>,
    cache: Option<ForwardCache>,
}

impl Model {
    /// Initialises every parameter from `rng`.
    pub fn build(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let lookup = LookupTable::new(VOCAB_SIZE, config.embed_dim, rng)?;
        let mut blocks = Vec::with_capacity(config.conv_layers);
        let mut width = config.embed_dim + PSSM_WIDTH;
        for _ in 0..config.conv_layers {
            blocks.push(ConvBlock::new(
                width,
                config.hidden_units,
                config.kernel_size,
                config.pool_size,
                config.nonlinearity,
                config.dropout,
                rng,
            )?);
            width = config.hidden_units;
        }
        let heads = config
            .tasks
            .iter()
            .map(|t| LinearLayer::new(config.hidden_units, t.class_count(), rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Model {
            input_dropout: DropoutLayer::new(config.input_dropout)?,
            lookup,
            stack: ConvStack::new(blocks, Route::PerLayer),
            heads,
            tag: None,
            cache: None,
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn plan_for(&self, len: usize) -> Result<StitchPlan> {
        StitchPlan::new(len, &self.config.pool_sizes(), &self.config.kernel_sizes())
    }

    /// Dense logits for every position and task.
    pub fn forward(
        &mut self,
        indices: &[usize],
        pssm: &Tensor,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<TaskLogits> {
        let len = indices.len();
        if pssm.shape() != [len, PSSM_WIDTH] {
            return Err(Error::Data(format!(
                "{len} residues but PSSM shape {:?}",
                pssm.shape()
            )));
        }
        let plan = self.plan_for(len)?;
        let emb = self.lookup.forward(indices)?;
        let emb = self.input_dropout.forward(&emb, mode, rng)?;
        let features = join_features(&emb, pssm)?;
        let dense = self.stack.forward_dense(&features, &plan, mode, rng)?;
        let mut tasks = Vec::with_capacity(self.heads.len());
        for (head, scheme) in self.heads.iter_mut().zip(&self.config.tasks) {
            let logits = head.forward(&dense)?;
            logits.ensure_finite(&format!("{} logits", scheme.name))?;
            tasks.push((scheme.name.clone(), logits));
        }
        self.cache = Some(ForwardCache { len });
        Ok(TaskLogits { tasks })
    }

    /// Eval-mode conv stack input `[T, embed_dim + 20]`.
    pub fn stack_input(&self, indices: &[usize], pssm: &Tensor) -> Result<Tensor> {
        let emb = self.lookup.clone().forward(indices)?;
        join_features(&emb, pssm)
    }

    pub fn forward_record(&mut self, record: &SequenceRecord, mode: Mode, rng: &mut Rng) -> Result<TaskLogits> {
        let (idx, pssm) = record.encode_features();
        self.forward(&idx, pssm, mode, rng)
    }

    /// Evaluation-mode logits.
    pub fn predict(&mut self, record: &SequenceRecord) -> Result<TaskLogits> {
        self.forward_record(record, Mode::Eval, &mut Rng::new(0))
    }

    /// Backpropagates logit gradients, accumulating into every parameter.
    pub fn backward(&mut self, grad: &TaskLogits) -> Result<()> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::Geometry("model backward before forward".into()))?;
        if grad.tasks.len() != self.heads.len() {
            return Err(Error::Geometry(format!(
                "{} task gradients for {} heads",
                grad.tasks.len(),
                self.heads.len()
            )));
        }
        let len = cache.len;
        let mut dense_grad = Tensor::zeros(&[len, self.config.hidden_units])?;
        for (head, (_, g)) in self.heads.iter_mut().zip(&grad.tasks) {
            dense_grad.add_assign(&head.backward(g)?)?;
        }
        let feat_grad = self.stack.backward_dense(&dense_grad)?;
        let e = self.config.embed_dim;
        let width = e + PSSM_WIDTH;
        let mut emb_grad = Vec::with_capacity(len * e);
        for row in feat_grad.data().chunks_exact(width) {
            emb_grad.extend_from_slice(&row[..e]);
        }
        let emb_grad = Tensor::from_vec(&[len, e], emb_grad)?;
        let emb_grad = self.input_dropout.backward(&emb_grad)?;
        self.lookup.backward(&emb_grad)
    }

    /// Parameter groups in checkpoint order.
    pub fn params(&self) -> Vec<(String, &Param)> {
        let mut out = vec![("lookup.table".to_string(), &self.lookup.table)];
        for (l, block) in self.stack.blocks.iter().enumerate() {
            for (name, p) in block.params() {
                out.push((format!("block{}.{name}", l + 1), p));
            }
        }
        for (head, t) in self.heads.iter().zip(&self.config.tasks) {
            let [w, b] = head.params();
            out.push((format!("head.{}.weight", t.name), w));
            out.push((format!("head.{}.bias", t.name), b));
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = vec![("lookup.table".to_string(), &mut self.lookup.table)];
        for (l, block) in self.stack.blocks.iter_mut().enumerate() {
            for (name, p) in block.params_mut() {
                out.push((format!("block{}.{name}", l + 1), p));
            }
        }
        for (head, t) in self.heads.iter_mut().zip(&self.config.tasks) {
            let [w, b] = head.params_mut();
            out.push((format!("head.{}.weight", t.name), w));
            out.push((format!("head.{}.bias", t.name), b));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|(_, p)| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Drops every forward cache, e.g. before cloning a frozen model.
    pub fn clear_caches(&mut self) {
        self.cache = None;
        self.lookup.clear_cache();
        self.input_dropout.clear_cache();
        self.stack.clear_cache();
        self.heads.iter_mut().for_each(LinearLayer::clear_cache);
    }

    /// Arithmetic of every convolution forward pass.
    pub fn set_precision(&mut self, precision: Precision) {
        for block in &mut self.stack.blocks {
            block.conv.set_precision(precision);
        }
    }

    pub fn precision(&self) -> Precision {
        self.stack
            .blocks
            .first()
            .map_or(Precision::F64, |b| b.conv.precision())
    }

    pub fn set_route(&mut self, route: Route) {
        self.stack.route = route;
        self.cache = None;
    }

    pub fn task_index(&self, name: &str) -> Option<usize> {
        self.config.tasks.iter().position(|t| t.name == name)
    }
}

/// `[T, E] ++ [T, 20]` along the feature axis.
fn join_features(emb: &Tensor, pssm: &Tensor) -> Result<Tensor> {
    let (len, e) = (emb.shape()[0], emb.shape()[1]);
    let mut data = Vec::with_capacity(len * (e + PSSM_WIDTH));
    for (er, pr) in emb.data().chunks_exact(e).zip(pssm.data().chunks_exact(PSSM_WIDTH)) {
        data.extend_from_slice(er);
        data.extend_from_slice(pr);
    }
    Tensor::from_vec(&[len, e + PSSM_WIDTH], data)
}
