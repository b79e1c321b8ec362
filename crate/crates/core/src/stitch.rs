//! Multilayer shift-and-stitch geometry.
//!
//! A network with pooling strides `m_1..m_L` emits one value per
//! `S = m_1 * ... * m_L` input positions. Running it on `S` copies of the
//! input, copy `j` front-padded with `j` zeros, and interleaving the strided
//! outputs recovers one output per input position.
//!
//! Coordinates: at a layer whose cumulative stride is `d`, element `i` of
//! copy `j` sits at sequence position `d*i + d - 1 - j`. A pooled value is
//! thus aligned with the last input position of its window. Networks use
//! [`StitchPlan::position`] to zero every value that falls outside the
//! sequence, which makes the stitched output independent of which copy
//! served a position.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StitchPlan {
    pool_sizes: Vec<usize>,
    kernel_sizes: Vec<usize>,
    total_stride: usize,
    len: usize,
    padded_len: usize,
}

impl StitchPlan {
    /// Geometry for a sequence of length `len` through the given layers.
    pub fn new(len: usize, pool_sizes: &[usize], kernel_sizes: &[usize]) -> Result<Self> {
        if len == 0 {
            return Err(Error::Geometry("sequence length must be >= 1".into()));
        }
        if pool_sizes.is_empty() || pool_sizes.len() != kernel_sizes.len() {
            return Err(Error::Config(format!(
                "need one kernel size per pooling layer, got {} pools and {} kernels",
                pool_sizes.len(),
                kernel_sizes.len()
            )));
        }
        if let Some(l) = pool_sizes.iter().position(|&m| m == 0) {
            return Err(Error::Config(format!("pool size of layer {} is zero", l + 1)));
        }
        if let Some(l) = kernel_sizes.iter().position(|&k| k % 2 == 0) {
            return Err(Error::Config(format!(
                "kernel size {} of layer {} is even; kernels must be odd",
                kernel_sizes[l],
                l + 1
            )));
        }
        let total_stride: usize = pool_sizes.iter().product();
        let need = len + total_stride - 1;
        let padded_len = need.div_ceil(total_stride) * total_stride;
        Ok(StitchPlan {
            pool_sizes: pool_sizes.to_vec(),
            kernel_sizes: kernel_sizes.to_vec(),
            total_stride,
            len,
            padded_len,
        })
    }

    /// Sequence length `T`.
    pub fn seq_len(&self) -> usize {
        self.len
    }

    pub fn total_stride(&self) -> usize {
        self.total_stride
    }

    pub fn copies(&self) -> usize {
        self.total_stride
    }

    pub fn padded_len(&self) -> usize {
        self.padded_len
    }

    pub fn pool_sizes(&self) -> &[usize] {
        &self.pool_sizes
    }

    pub fn kernel_sizes(&self) -> &[usize] {
        &self.kernel_sizes
    }

    pub fn layers(&self) -> usize {
        self.pool_sizes.len()
    }

    /// Front shift of each copy, `0..S`.
    pub fn shift_of_copy(&self) -> Vec<usize> {
        (0..self.total_stride).collect()
    }

    /// Cumulative stride in front of layer `layer` (0-based); `layer == L`
    /// gives the total stride.
    pub fn stride_before(&self, layer: usize) -> usize {
        self.pool_sizes[..layer].iter().product()
    }

    /// Sequence position of element `i` of copy `copy` at cumulative stride `d`.
    pub fn position(d: usize, copy: usize, i: usize) -> isize {
        (d * i + d - 1) as isize - copy as isize
    }

    pub fn inside(&self, pos: isize) -> bool {
        pos >= 0 && (pos as usize) < self.len
    }

    /// 0/1 mask over `[copies.len(), width]` marking elements inside the sequence.
    pub fn validity_mask(&self, d: usize, copies: &[usize], width: usize) -> Vec<f64> {
        let mut mask = Vec::with_capacity(copies.len() * width);
        for &c in copies {
            mask.extend((0..width).map(|i| {
                if self.inside(Self::position(d, c, i)) {
                    1.0
                } else {
                    0.0
                }
            }));
        }
        mask
    }

    /// Which copy and strided index produce 0-based position `t`.
    pub fn source_of(&self, t: usize) -> (usize, usize) {
        let s = self.total_stride;
        let copy = (s - 1 - t % s) % s;
        let index = (t + 1 + copy) / s - 1;
        (copy, index)
    }

    /// Positions at distance greater than this from both ends see no padding.
    pub fn receptive_radius(&self) -> usize {
        let mut d = 1;
        let mut r = 0;
        for (&m, &k) in self.pool_sizes.iter().zip(&self.kernel_sizes) {
            r += d * (k / 2) + d * (m - 1);
            d *= m;
        }
        r
    }
}

/// `S` shifted, zero-padded copies of one sequence stacked along the batch axis.
#[derive(Debug, Clone)]
pub struct ShiftBatch {
    pub data: Tensor,
    pub plan: StitchPlan,
}

/// Builds `[S, padded_len, n]` where copy `j` holds the features at
/// positions `j..j+T` and zeros elsewhere.
pub fn shift_expand(features: &Tensor, plan: &StitchPlan) -> Result<ShiftBatch> {
    features.expect_rank(2, "shift_expand")?;
    let (len, n) = (features.shape()[0], features.shape()[1]);
    if len != plan.seq_len() {
        return Err(Error::Geometry(format!(
            "features have {len} positions but the plan expects {}",
            plan.seq_len()
        )));
    }
    let (s, p) = (plan.copies(), plan.padded_len());
    let mut data = Tensor::zeros(&[s, p, n])?;
    let src = features.data();
    let dst = data.data_mut();
    for j in 0..s {
        let off = (j * p + j) * n;
        dst[off..off + len * n].copy_from_slice(src);
    }
    Ok(ShiftBatch {
        data,
        plan: plan.clone(),
    })
}

/// Adjoint of [`shift_expand`]: sums the copies' gradients back onto `[T, n]`.
pub fn shift_expand_backward(grad: &Tensor, plan: &StitchPlan) -> Result<Tensor> {
    grad.expect_rank(3, "shift_expand backward")?;
    let (s, p, n) = (grad.shape()[0], grad.shape()[1], grad.shape()[2]);
    if s != plan.copies() || p != plan.padded_len() {
        return Err(Error::Geometry(format!(
            "expected gradient [{}, {}, _], got {:?}",
            plan.copies(),
            plan.padded_len(),
            grad.shape()
        )));
    }
    let len = plan.seq_len();
    let mut out = Tensor::zeros(&[len, n])?;
    let g = grad.data();
    for j in 0..s {
        let off = (j * p + j) * n;
        for (o, v) in out.data_mut().iter_mut().zip(&g[off..off + len * n]) {
            *o += v;
        }
    }
    Ok(out)
}

fn check_strided(strided: &Tensor, plan: &StitchPlan) -> Result<(usize, usize)> {
    strided.expect_rank(3, "stitch_merge")?;
    let (s, w, n) = (strided.shape()[0], strided.shape()[1], strided.shape()[2]);
    if s != plan.copies() {
        return Err(Error::Geometry(format!(
            "strided output has {s} copies, plan has {}",
            plan.copies()
        )));
    }
    let need = plan.seq_len().div_ceil(plan.total_stride());
    if w < need {
        return Err(Error::Geometry(format!(
            "strided output width {w} cannot cover {} positions at stride {}",
            plan.seq_len(),
            plan.total_stride()
        )));
    }
    Ok((w, n))
}

/// Interleaves `[S, W, n]` strided outputs into the dense `[T, n]` sequence.
pub fn stitch_merge(strided: &Tensor, plan: &StitchPlan) -> Result<Tensor> {
    let (w, n) = check_strided(strided, plan)?;
    let len = plan.seq_len();
    let mut out = Tensor::zeros(&[len, n])?;
    let src = strided.data();
    let dst = out.data_mut();
    for t in 0..len {
        let (j, i) = plan.source_of(t);
        let off = (j * w + i) * n;
        dst[t * n..(t + 1) * n].copy_from_slice(&src[off..off + n]);
    }
    Ok(out)
}

/// Adjoint of [`stitch_merge`].
pub fn stitch_merge_backward(grad: &Tensor, plan: &StitchPlan, width: usize) -> Result<Tensor> {
    grad.expect_rank(2, "stitch_merge backward")?;
    let (len, n) = (grad.shape()[0], grad.shape()[1]);
    if len != plan.seq_len() {
        return Err(Error::Geometry(format!(
            "dense gradient has {len} positions, plan has {}",
            plan.seq_len()
        )));
    }
    let mut out = Tensor::zeros(&[plan.copies(), width, n])?;
    let dst = out.data_mut();
    for t in 0..len {
        let (j, i) = plan.source_of(t);
        let off = (j * width + i) * n;
        dst[off..off + n].copy_from_slice(&grad.data()[t * n..(t + 1) * n]);
    }
    Ok(out)
}

/// A network evaluated at the strided resolution.
///
/// `copies[b]` is the front shift of batch row `b`, which the network needs
/// to tell sequence positions from padding.
pub trait StridedNetwork {
    fn forward_strided(&mut self, batch: &Tensor, copies: &[usize], plan: &StitchPlan)
        -> Result<Tensor>;
}

impl<F> StridedNetwork for F
where
    F: FnMut(&Tensor, &[usize], &StitchPlan) -> Result<Tensor>,
{
    fn forward_strided(
        &mut self,
        batch: &Tensor,
        copies: &[usize],
        plan: &StitchPlan,
    ) -> Result<Tensor> {
        self(batch, copies, plan)
    }
}

/// One batched pass over all copies, then stitching.
pub fn dense_batched<N: StridedNetwork + ?Sized>(
    features: &Tensor,
    plan: &StitchPlan,
    network: &mut N,
) -> Result<Tensor> {
    let batch = shift_expand(features, plan)?;
    let strided = network.forward_strided(&batch.data, &plan.shift_of_copy(), plan)?;
    stitch_merge(&strided, plan)
}

/// Reference evaluation: each shifted copy is run through the network on
/// its own, and the results are interleaved with the same index mapping.
pub fn dense_oracle_loop<N: StridedNetwork + ?Sized>(
    features: &Tensor,
    plan: &StitchPlan,
    network: &mut N,
) -> Result<Tensor> {
    let batch = shift_expand(features, plan)?;
    let (s, p) = (plan.copies(), plan.padded_len());
    let n = features.shape()[1];
    let mut rows: Vec<Tensor> = Vec::with_capacity(s);
    for j in 0..s {
        let off = j * p * n;
        let copy = Tensor::from_vec(&[1, p, n], batch.data.data()[off..off + p * n].to_vec())?;
        let out = network.forward_strided(&copy, &[j], plan)?;
        out.expect_rank(3, "strided network output")?;
        if out.shape()[0] != 1 {
            return Err(Error::Geometry("network changed the batch size".into()));
        }
        rows.push(out);
    }
    let (w, m) = (rows[0].shape()[1], rows[0].shape()[2]);
    let mut data = Vec::with_capacity(s * w * m);
    for r in &rows {
        if r.shape() != [1, w, m] {
            return Err(Error::Geometry("copies produced different output shapes".into()));
        }
        data.extend_from_slice(r.data());
    }
    let strided = Tensor::from_vec(&[s, w, m], data)?;
    stitch_merge(&strided, plan)
}
