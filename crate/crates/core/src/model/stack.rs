//! The convolution/pooling stack evaluated at strided resolution.

use crate::error::{Error, Result};
use crate::layers::{Conv1dLayer, DropoutLayer, MaxPoolLayer, Mode, Nonlinearity, NonlinearityKind, Param};
use crate::rng::Rng;
use crate::stitch::{
    shift_expand, shift_expand_backward, stitch_merge, stitch_merge_backward, StitchPlan,
    StridedNetwork,
};
use crate::tensor::Tensor;

/// Where the shifted copies are created.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// All `S` copies are built from the raw input; pooling never expands.
    InputOnce,
    /// Each pooling layer of size `m` expands every copy into `m` shifted
    /// copies, so layer `l` processes only as many copies as its cumulative
    /// stride.
    PerLayer,
}

/// conv -> nonlinearity -> max pool -> dropout.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub conv: Conv1dLayer,
    pub nonlin: Nonlinearity,
    pub pool: MaxPoolLayer,
    pub dropout: DropoutLayer,
    cache: Option<BlockCache>,
}

#[derive(Debug, Clone)]
struct BlockCache {
    pre_pool_mask: Vec<f64>,
    post_pool_mask: Vec<f64>,
}

impl ConvBlock {
    pub fn new(
        n_in: usize,
        n_out: usize,
        kernel_size: usize,
        pool_size: usize,
        kind: NonlinearityKind,
        dropout: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(ConvBlock {
            conv: Conv1dLayer::new(n_in, n_out, kernel_size, rng)?,
            nonlin: Nonlinearity::new(kind),
            pool: MaxPoolLayer::new(pool_size)?,
            dropout: DropoutLayer::new(dropout)?,
            cache: None,
        })
    }

    /// Runs the block on rows whose copy shifts are `copies`, at cumulative
    /// stride `stride`. Returns the output and the copy shifts of its rows.
    pub fn forward(
        &mut self,
        x: &Tensor,
        copies: &[usize],
        stride: usize,
        plan: &StitchPlan,
        route: Route,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(Tensor, Vec<usize>)> {
        let y = self.conv.forward_same(x)?;
        let mut a = self.nonlin.forward(&y)?;
        let width = a.shape()[1];
        let pre_pool_mask = plan.validity_mask(stride, copies, width);
        apply_mask(&mut a, &pre_pool_mask);

        let m = self.pool.pool_size();
        let (z, out_copies) = match route {
            Route::InputOnce => (self.pool.forward(&a)?, copies.to_vec()),
            Route::PerLayer => {
                let shifts: Vec<usize> = (0..m).collect();
                let z = self.pool.forward_shifted(&a, &shifts)?;
                let out_copies = shifts
                    .iter()
                    .flat_map(|&u| copies.iter().map(move |&c| c + stride * u))
                    .collect();
                (z, out_copies)
            }
        };
        let mut z = self.dropout.forward(&z, mode, rng)?;
        let post_pool_mask = plan.validity_mask(stride * m, &out_copies, z.shape()[1]);
        apply_mask(&mut z, &post_pool_mask);
        self.cache = Some(BlockCache {
            pre_pool_mask,
            post_pool_mask,
        });
        Ok((z, out_copies))
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Geometry("block backward before forward".into()))?;
        let mut g = grad_out.clone();
        apply_mask(&mut g, &cache.post_pool_mask);
        let g = self.dropout.backward(&g)?;
        let mut g = self.pool.backward(&g)?;
        apply_mask(&mut g, &cache.pre_pool_mask);
        let g = self.nonlin.backward(&g)?;
        self.conv.backward(&g)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
        self.conv.clear_cache();
        self.nonlin.clear_cache();
        self.pool.clear_cache();
        self.dropout.clear_cache();
    }

    pub fn params(&self) -> Vec<(&'static str, &Param)> {
        let [w, b] = self.conv.params();
        let mut out = vec![("conv.weight", w), ("conv.bias", b)];
        if let Some(a) = self.nonlin.params() {
            out.push(("prelu.alpha", a));
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<(&'static str, &mut Param)> {
        let [w, b] = self.conv.params_mut();
        let mut out = vec![("conv.weight", w), ("conv.bias", b)];
        if let Some(a) = self.nonlin.params_mut() {
            out.push(("prelu.alpha", a));
        }
        out
    }
}

/// Multiplies `[rows, width, n]` by a `[rows, width]` 0/1 mask.
fn apply_mask(t: &mut Tensor, mask: &[f64]) {
    let n = *t.shape().last().expect("rank >= 1");
    for (row, &m) in t.data_mut().chunks_exact_mut(n).zip(mask) {
        if m == 0.0 {
            row.fill(0.0);
        }
    }
}

/// The stacked blocks plus the bookkeeping needed to run them batched.
#[derive(Debug, Clone)]
pub struct ConvStack {
    pub blocks: Vec<ConvBlock>,
    pub route: Route,
    pub mode: Mode,
    rng: Rng,
    dense_cache: Option<(StitchPlan, usize)>,
}

impl ConvStack {
    pub fn new(blocks: Vec<ConvBlock>, route: Route) -> Self {
        ConvStack {
            blocks,
            route,
            mode: Mode::Eval,
            rng: Rng::new(0),
            dense_cache: None,
        }
    }

    pub fn pool_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.pool.pool_size()).collect()
    }

    pub fn kernel_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.conv.kernel_size()).collect()
    }

    pub fn out_channels(&self) -> usize {
        self.blocks.last().map(|b| b.conv.n_out()).unwrap_or(0)
    }

    /// Full strided pass. For [`Route::PerLayer`] `x` is `[1, P, n]` with
    /// `copies == [0]`; for [`Route::InputOnce`] any subset of shifted copies.
    /// Returns rows in order of their copy shift when all copies are present.
    pub fn run(
        &mut self,
        x: &Tensor,
        copies: &[usize],
        plan: &StitchPlan,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<Tensor> {
        if plan.pool_sizes() != self.pool_sizes().as_slice() {
            return Err(Error::Geometry(format!(
                "plan pools {:?} do not match network pools {:?}",
                plan.pool_sizes(),
                self.pool_sizes()
            )));
        }
        if self.route == Route::PerLayer && copies != [0] {
            return Err(Error::Geometry(
                "per-layer expansion starts from the single unshifted input".into(),
            ));
        }
        if x.shape()[0] != copies.len() {
            return Err(Error::Geometry(format!(
                "{} rows but {} copy shifts",
                x.shape()[0],
                copies.len()
            )));
        }
        let mut h = x.clone();
        let mut cur = copies.to_vec();
        let mut stride = 1;
        for block in &mut self.blocks {
            let (next, next_copies) =
                block.forward(&h, &cur, stride, plan, self.route, mode, rng)?;
            stride *= block.pool.pool_size();
            h = next;
            cur = next_copies;
        }
        Ok(h)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut g = grad.clone();
        for block in self.blocks.iter_mut().rev() {
            g = block.backward(&g)?;
        }
        Ok(g)
    }

    /// `[T, n]` features to `[T, hidden]` dense outputs: expand, run, stitch.
    pub fn forward_dense(
        &mut self,
        features: &Tensor,
        plan: &StitchPlan,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<Tensor> {
        features.expect_rank(2, "dense stack input")?;
        let strided = match self.route {
            Route::PerLayer => {
                if features.shape()[0] != plan.seq_len() {
                    return Err(Error::Geometry(format!(
                        "features have {} positions but the plan expects {}",
                        features.shape()[0],
                        plan.seq_len()
                    )));
                }
                let n = features.shape()[1];
                let mut data = features.data().to_vec();
                data.resize(plan.padded_len() * n, 0.0);
                let x = Tensor::from_vec(&[1, plan.padded_len(), n], data)?;
                self.run(&x, &[0], plan, mode, rng)?
            }
            Route::InputOnce => {
                let batch = shift_expand(features, plan)?;
                self.run(&batch.data, &plan.shift_of_copy(), plan, mode, rng)?
            }
        };
        self.dense_cache = Some((plan.clone(), strided.shape()[1]));
        stitch_merge(&strided, plan)
    }

    /// Adjoint of [`ConvStack::forward_dense`]; returns the `[T, n]` input gradient.
    pub fn backward_dense(&mut self, grad: &Tensor) -> Result<Tensor> {
        let (plan, width) = self
            .dense_cache
            .take()
            .ok_or_else(|| Error::Geometry("dense backward before forward".into()))?;
        let strided_grad = stitch_merge_backward(grad, &plan, width)?;
        let g = self.backward(&strided_grad)?;
        match self.route {
            Route::PerLayer => {
                let n = g.shape()[2];
                let len = plan.seq_len();
                Tensor::from_vec(&[len, n], g.data()[..len * n].to_vec())
            }
            Route::InputOnce => shift_expand_backward(&g, &plan),
        }
    }

    pub fn clear_cache(&mut self) {
        self.dense_cache = None;
        self.blocks.iter_mut().for_each(ConvBlock::clear_cache);
    }

    /// Evaluation-mode network view for [`crate::stitch`] helpers.
    pub fn with_route(&self, route: Route) -> ConvStack {
        let mut s = self.clone();
        s.route = route;
        s.mode = Mode::Eval;
        s
    }
}

impl StridedNetwork for ConvStack {
    fn forward_strided(&mut self, batch: &Tensor, copies: &[usize], plan: &StitchPlan) -> Result<Tensor> {
        let mut rng = self.rng.clone();
        let out = self.run(batch, copies, plan, self.mode, &mut rng)?;
        self.rng = rng;
        Ok(out)
    }
}
