use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Argmax slot recorded for a window whose maximum came from front padding.
pub const PAD_SLOT: usize = usize::MAX;

/// Non-overlapping max pooling along the length axis of `[batch, T, n]`.
///
/// Besides the plain operator, [`MaxPoolLayer::forward_shifted`] pools each
/// input row several times with different amounts of virtual front zero
/// padding. That is the per-layer expansion step of shift-and-stitch.
#[derive(Debug, Clone)]
pub struct MaxPoolLayer {
    pool_size: usize,
    cache: Option<PoolCache>,
}

#[derive(Debug, Clone)]
struct PoolCache {
    input_shape: [usize; 3],
    out_shape: [usize; 3],
    // flat input index per output element, or PAD_SLOT
    argmax: Vec<usize>,
}

impl MaxPoolLayer {
    pub fn new(pool_size: usize) -> Result<Self> {
        if pool_size == 0 {
            return Err(Error::Config("pool size must be >= 1".into()));
        }
        Ok(MaxPoolLayer {
            pool_size,
            cache: None,
        })
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    /// `out[b, t, i] = max_j y[b, m*t + j, i]`; trailing `T mod m` rows are dropped.
    pub fn forward(&mut self, y: &Tensor) -> Result<Tensor> {
        self.forward_shifted(y, &[0])
    }

    /// Pools every input row once per entry of `shifts`.
    ///
    /// For shift `u` the row is treated as if `u` zeros were prepended, so
    /// output `t` covers input positions `m*t - u .. m*t - u + m`. Output row
    /// `s * batch + b` holds input row `b` pooled with `shifts[s]`. Ties go to
    /// the lowest position, and padding counts as lower than any real position.
    pub fn forward_shifted(&mut self, y: &Tensor, shifts: &[usize]) -> Result<Tensor> {
        y.expect_rank(3, "maxpool")?;
        let m = self.pool_size;
        let (batch, len, n) = (y.shape()[0], y.shape()[1], y.shape()[2]);
        if len < m {
            return Err(Error::Geometry(format!(
                "sequence of length {len} is shorter than pool size {m}"
            )));
        }
        if let Some(&u) = shifts.iter().find(|&&u| u >= m) {
            return Err(Error::Geometry(format!(
                "pool shift {u} must be smaller than pool size {m}"
            )));
        }
        let out_len = len / m;
        let out_shape = [batch * shifts.len(), out_len, n];
        let mut out = Tensor::zeros(&out_shape)?;
        let mut argmax = vec![PAD_SLOT; out.len()];
        let yd = y.data();
        let od = out.data_mut();
        for (si, &u) in shifts.iter().enumerate() {
            for b in 0..batch {
                let ob = si * batch + b;
                for t in 0..out_len {
                    let obase = (ob * out_len + t) * n;
                    let lo = (m * t) as isize - u as isize;
                    for r in 0..m {
                        let p = lo + r as isize;
                        if p < 0 {
                            // padding: zero, always the lowest position
                            if r == 0 {
                                od[obase..obase + n].fill(0.0);
                            }
                            continue;
                        }
                        let base = (b * len + p as usize) * n;
                        for i in 0..n {
                            let v = yd[base + i];
                            if r == 0 || v > od[obase + i] {
                                od[obase + i] = v;
                                argmax[obase + i] = base + i;
                            }
                        }
                    }
                }
            }
        }
        self.cache = Some(PoolCache {
            input_shape: [batch, len, n],
            out_shape,
            argmax,
        });
        Ok(out)
    }

    /// Routes each output gradient to its recorded argmax position.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Geometry("maxpool backward before forward".into()))?;
        if grad_out.shape() != cache.out_shape {
            return Err(Error::Geometry(format!(
                "maxpool backward expects gradient {:?}, got {:?}",
                cache.out_shape,
                grad_out.shape()
            )));
        }
        let mut grad_in = Tensor::zeros(&cache.input_shape)?;
        let gi = grad_in.data_mut();
        for (&slot, &g) in cache.argmax.iter().zip(grad_out.data()) {
            if slot != PAD_SLOT {
                gi[slot] += g;
            }
        }
        Ok(grad_in)
    }

    /// Recorded argmax as flat input indices (or [`PAD_SLOT`]).
    pub fn argmax(&self) -> Option<&[usize]> {
        self.cache.as_ref().map(|c| c.argmax.as_slice())
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
