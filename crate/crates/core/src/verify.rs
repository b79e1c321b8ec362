//! Independent reference evaluations used to check the stitched engine.
//!
//! [`atrous_dense`] evaluates a conv stack directly at full resolution with
//! dilated taps and look-back pooling windows, reading only layer weights.

use crate::error::{Error, Result};
use crate::layers::NonlinearityKind;
use crate::model::{ConvBlock, ConvStack, Route};
use crate::rng::Rng;
use crate::stitch::{dense_batched, dense_oracle_loop, StitchPlan};
use crate::tensor::Tensor;

fn scalar_nonlin(kind: NonlinearityKind, alpha: f64, x: f64) -> f64 {
    match kind {
        NonlinearityKind::Tanh => x.tanh(),
        NonlinearityKind::Relu => x.max(0.0),
        NonlinearityKind::Prelu => {
            if x >= 0.0 {
                x
            } else {
                alpha * x
            }
        }
    }
}

/// Full-resolution evaluation of `stack` on `[T, n]` features.
///
/// Layer `l` at cumulative stride `d` reads tap `z` at offset `d * (z - k/2)`
/// and pools over `q, q - d, ..., q - d(m-1)`. Every layer sees zeros outside
/// `[0, T)`. Dropout is ignored.
pub fn atrous_dense(stack: &ConvStack, features: &Tensor) -> Result<Tensor> {
    atrous_with_margin(stack, features).map(|(y, _)| y)
}

/// Distance of `stack` on `features` from the nearest point where it is not
/// differentiable: a relu or prelu input at zero, or a tie for a pooling max.
/// Ties between exact zeros from dead relu units or padding are ignored.
pub fn kink_margin(stack: &ConvStack, features: &Tensor) -> Result<f64> {
    atrous_with_margin(stack, features).map(|(_, m)| m)
}

fn atrous_with_margin(stack: &ConvStack, features: &Tensor) -> Result<(Tensor, f64)> {
    features.expect_rank(2, "a-trous input")?;
    let t_len = features.shape()[0];
    let mut width = features.shape()[1];
    let mut act = features.data().to_vec();
    let mut d = 1usize;
    let mut margin = f64::INFINITY;
    for block in &stack.blocks {
        let (next, n_out, m) = atrous_block(block, &act, t_len, width, d)?;
        act = next;
        width = n_out;
        margin = margin.min(m);
        d *= block.pool.pool_size();
    }
    Ok((Tensor::from_vec(&[t_len, width], act)?, margin))
}

fn atrous_block(
    block: &ConvBlock,
    act: &[f64],
    t_len: usize,
    n_in: usize,
    d: usize,
) -> Result<(Vec<f64>, usize, f64)> {
    let w = block.conv.weight.value.data();
    let b = block.conv.bias.value.data();
    let (n_out, k) = (block.conv.n_out(), block.conv.kernel_size());
    if block.conv.n_in() != n_in {
        return Err(Error::Shape(format!(
            "block expects {} channels, got {n_in}",
            block.conv.n_in()
        )));
    }
    let h = (k / 2) as isize;
    let kind = block.nonlin.kind();
    let alpha = block.nonlin.alpha_value();
    let kinked = kind != NonlinearityKind::Tanh;
    let mut margin = f64::INFINITY;
    let mut y = vec![0.0; t_len * n_out];
    for q in 0..t_len {
        for o in 0..n_out {
            let mut acc = b[o];
            for z in 0..k {
                let src = q as isize + d as isize * (z as isize - h);
                if src < 0 || src >= t_len as isize {
                    continue;
                }
                let src = src as usize;
                for i in 0..n_in {
                    acc += w[(o * n_in + i) * k + z] * act[src * n_in + i];
                }
            }
            if kinked {
                margin = margin.min(acc.abs());
            }
            y[q * n_out + o] = scalar_nonlin(kind, alpha, acc);
        }
    }
    let m = block.pool.pool_size();
    let mut out = vec![0.0; t_len * n_out];
    for q in 0..t_len {
        for o in 0..n_out {
            let (mut best, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for s in 0..m {
                let src = q as isize - (d * s) as isize;
                let v = if src < 0 { 0.0 } else { y[src as usize * n_out + o] };
                if v > best {
                    second = best;
                    best = v;
                } else if v > second {
                    second = v;
                }
            }
            if second.is_finite() && !(best == 0.0 && second == 0.0) {
                margin = margin.min(best - second);
            }
            out[q * n_out + o] = best;
        }
    }
    Ok((out, n_out, margin))
}

/// Largest absolute difference between two results of one stitch case.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StitchDiffs {
    /// Batched input-level expansion against the copy-at-a-time loop.
    pub input_once_vs_loop: f64,
    /// Per-layer expansion against the copy-at-a-time loop.
    pub per_layer_vs_loop: f64,
    /// Loop against the full-resolution reference.
    pub loop_vs_atrous: f64,
}

impl StitchDiffs {
    fn merge(&mut self, other: StitchDiffs) {
        self.input_once_vs_loop = self.input_once_vs_loop.max(other.input_once_vs_loop);
        self.per_layer_vs_loop = self.per_layer_vs_loop.max(other.per_layer_vs_loop);
        self.loop_vs_atrous = self.loop_vs_atrous.max(other.loop_vs_atrous);
    }
}

/// Outcome of [`stitch_suite`].
#[derive(Debug, Clone, Default)]
pub struct StitchReport {
    pub cases: usize,
    pub worst: StitchDiffs,
    /// Cases whose dense output did not have exactly `T` rows.
    pub length_failures: usize,
}

impl StitchReport {
    pub fn passes(&self, exact_tol: f64, atrous_tol: f64) -> bool {
        self.length_failures == 0
            && self.worst.input_once_vs_loop <= exact_tol
            && self.worst.per_layer_vs_loop <= exact_tol
            && self.worst.loop_vs_atrous <= atrous_tol
    }
}

/// A random stack with its own geometry, for equivalence testing.
#[derive(Debug, Clone)]
pub struct StitchCase {
    pub stack: ConvStack,
    pub features: Tensor,
    pub plan: StitchPlan,
}

impl StitchCase {
    /// `L` in 1..=3, pools in {2, 3}, kernels in {3, 5, 9}, `T` in 10..=64.
    pub fn random(rng: &mut Rng) -> Result<Self> {
        let layers = 1 + rng.below(3);
        let n_in = 1 + rng.below(4);
        let t_len = 10 + rng.below(55);
        let kinds = [
            NonlinearityKind::Tanh,
            NonlinearityKind::Relu,
            NonlinearityKind::Prelu,
        ];
        let kind = kinds[rng.below(3)];
        let mut blocks = Vec::with_capacity(layers);
        let mut width = n_in;
        for _ in 0..layers {
            let n_out = 1 + rng.below(5);
            let k = [3, 5, 9][rng.below(3)];
            let m = 2 + rng.below(2);
            let mut block = ConvBlock::new(width, n_out, k, m, kind, 0.0, rng)?;
            block.conv.bias.value = rng.uniform(-0.5, 0.5, &[n_out])?;
            if kind == NonlinearityKind::Prelu {
                block.nonlin.alpha.value = rng.uniform(-0.5, 0.9, &[1])?;
            }
            blocks.push(block);
            width = n_out;
        }
        let stack = ConvStack::new(blocks, Route::InputOnce);
        let plan = StitchPlan::new(t_len, &stack.pool_sizes(), &stack.kernel_sizes())?;
        let features = rng.uniform(-1.0, 1.0, &[t_len, n_in])?;
        Ok(StitchCase { stack, features, plan })
    }

    /// Returns the three differences and whether every result kept `T` rows.
    pub fn compare(&self) -> Result<(StitchDiffs, bool)> {
        let mut once = self.stack.with_route(Route::InputOnce);
        let mut per_layer = self.stack.with_route(Route::PerLayer);
        let mut looped = self.stack.with_route(Route::InputOnce);
        let batched = dense_batched(&self.features, &self.plan, &mut once)?;
        let mut rng = Rng::new(0);
        let layered = per_layer.forward_dense(
            &self.features,
            &self.plan,
            crate::layers::Mode::Eval,
            &mut rng,
        )?;
        let oracle = dense_oracle_loop(&self.features, &self.plan, &mut looped)?;
        let reference = atrous_dense(&self.stack, &self.features)?;
        let t = self.plan.seq_len();
        let lengths_ok = [&batched, &layered, &oracle, &reference]
            .iter()
            .all(|x| x.shape()[0] == t);
        let diffs = StitchDiffs {
            input_once_vs_loop: batched.max_abs_diff(&oracle)?,
            per_layer_vs_loop: layered.max_abs_diff(&oracle)?,
            loop_vs_atrous: oracle.max_abs_diff(&reference)?,
        };
        Ok((diffs, lengths_ok))
    }
}

/// Runs `cases` random configurations drawn from `seed`.
pub fn stitch_suite(cases: usize, seed: u64) -> Result<StitchReport> {
    let mut rng = Rng::new(seed);
    let mut report = StitchReport::default();
    for _ in 0..cases {
        let case = StitchCase::random(&mut rng)?;
        let (diffs, lengths_ok) = case.compare()?;
        report.worst.merge(diffs);
        if !lengths_ok {
            report.length_failures += 1;
        }
        report.cases += 1;
    }
    Ok(report)
}

/// Shifting the input right by `S` positions shifts the output by `S`,
/// away from the boundaries. Returns the worst interior difference.
pub fn shift_covariance(stack: &ConvStack, features: &Tensor) -> Result<f64> {
    let plan = StitchPlan::new(
        features.shape()[0],
        &stack.pool_sizes(),
        &stack.kernel_sizes(),
    )?;
    let s = plan.total_stride();
    let (t, n) = (features.shape()[0], features.shape()[1]);
    let mut shifted = vec![0.0; (t + s) * n];
    shifted[s * n..].copy_from_slice(features.data());
    let shifted = Tensor::from_vec(&[t + s, n], shifted)?;
    let plan_shifted = StitchPlan::new(t + s, &stack.pool_sizes(), &stack.kernel_sizes())?;
    let mut a = stack.with_route(Route::PerLayer);
    let mut rng = Rng::new(0);
    let base = a.forward_dense(features, &plan, crate::layers::Mode::Eval, &mut rng)?;
    let moved = a.forward_dense(&shifted, &plan_shifted, crate::layers::Mode::Eval, &mut rng)?;
    let r = plan.receptive_radius();
    let h = base.shape()[1];
    let mut worst: f64 = 0.0;
    for q in r..t.saturating_sub(r) {
        for c in 0..h {
            let diff = (base.data()[q * h + c] - moved.data()[(q + s) * h + c]).abs();
            worst = worst.max(diff);
        }
    }
    Ok(worst)
}
