use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{gemm_acc, MatMut, MatRef, Tensor};

use super::{Param, Precision};

/// 1D convolution over `[batch, length, channels]` tensors.
///
/// Weights are stored as `[n_out, n_in, k]`.
#[derive(Debug, Clone)]
pub struct Conv1dLayer {
    kernel_size: usize,
    n_in: usize,
    n_out: usize,
    pub weight: Param,
    pub bias: Param,
    cache: Option<ConvCache>,
    flip_backward: bool,
    precision: Precision,
}

#[derive(Debug, Clone)]
struct ConvCache {
    cols: Vec<f64>,
    batch: usize,
    len: usize,
    pad: usize,
}

impl Conv1dLayer {
    pub fn new(n_in: usize, n_out: usize, kernel_size: usize, rng: &mut Rng) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::Config("convolution widths must be positive".into()));
        }
        if kernel_size == 0 || kernel_size % 2 == 0 {
            return Err(Error::Config(format!(
                "kernel size must be odd and positive, got {kernel_size}"
            )));
        }
        let fan_in = n_in * kernel_size;
        let weight = Param::fan_in_uniform(&[n_out, n_in, kernel_size], fan_in, rng)?;
        let bias = Param::fan_in_uniform(&[n_out], fan_in, rng)?;
        Ok(Conv1dLayer {
            kernel_size,
            n_in,
            n_out,
            weight,
            bias,
            cache: None,
            flip_backward: false,
            precision: Precision::F64,
        })
    }

    /// Layer with explicit parameters.
    pub fn from_params(weight: Tensor, bias: Tensor) -> Result<Self> {
        weight.expect_rank(3, "conv weight")?;
        let (n_out, n_in, k) = (weight.shape()[0], weight.shape()[1], weight.shape()[2]);
        if k % 2 == 0 {
            return Err(Error::Config(format!("kernel size must be odd, got {k}")));
        }
        if bias.shape() != [n_out] {
            return Err(Error::Geometry(format!(
                "conv bias shape {:?} does not match {n_out} outputs",
                bias.shape()
            )));
        }
        Ok(Conv1dLayer {
            kernel_size: k,
            n_in,
            n_out,
            weight: Param::new(weight),
            bias: Param::new(bias),
            cache: None,
            flip_backward: false,
            precision: Precision::F64,
        })
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    /// Length-preserving zero padding on each end.
    pub fn same_pad(&self) -> usize {
        self.kernel_size / 2
    }

    /// Verification hook: negates every gradient this layer produces.
    #[doc(hidden)]
    pub fn inject_sign_flip(&mut self, on: bool) {
        self.flip_backward = on;
    }

    /// Unpadded ("valid") convolution: output length `T - k + 1`.
    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn set_precision(&mut self, precision: Precision) {
        self.precision = precision;
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        self.forward_padded(x, 0)
    }

    /// Convolution with `floor(k/2)` zeros on each end: output length `T`.
    pub fn forward_same(&mut self, x: &Tensor) -> Result<Tensor> {
        self.forward_padded(x, self.same_pad())
    }

    pub fn forward_padded(&mut self, x: &Tensor, pad: usize) -> Result<Tensor> {
        let (batch, len) = self.check_input(x)?;
        if len + 2 * pad < self.kernel_size {
            return Err(Error::Geometry(format!(
                "sequence of length {len} (padding {pad}) is shorter than kernel {}",
                self.kernel_size
            )));
        }
        let out_len = len + 2 * pad - self.kernel_size + 1;
        let n_out = self.n_out;
        let rows = batch * out_len;
        let width = self.n_in * self.kernel_size;
        let bias = self.bias.value.data();
        let mut out = Tensor::zeros(&[batch, out_len, n_out])?;
        match self.precision {
            Precision::F64 => {
                let cols = self.im2col(x, pad, out_len);
                for row in out.data_mut().chunks_exact_mut(n_out) {
                    row.copy_from_slice(bias);
                }
                gemm_acc(
                    rows,
                    width,
                    n_out,
                    MatRef::new(&cols, 0, width, 1),
                    MatRef::new(self.weight.value.data(), 0, 1, width),
                    MatMut::new(out.data_mut(), 0, n_out, 1),
                );
                self.cache = Some(ConvCache {
                    cols,
                    batch,
                    len,
                    pad,
                });
            }
            Precision::F32 => {
                // sequences laid end to end with their padding; row s of the
                // implicit patch matrix is the contiguous slice at s * n_in
                let n_in = self.n_in;
                let seg = len + 2 * pad;
                let mut xp = vec![0.0f32; batch * seg * n_in];
                for (b, src) in x.data().chunks_exact(len * n_in).enumerate() {
                    let dst = &mut xp[(b * seg + pad) * n_in..][..len * n_in];
                    for (d, &v) in dst.iter_mut().zip(src) {
                        *d = v as f32;
                    }
                }
                // weights reordered to [z][i][o] so reduction index z * n_in + i
                // matches the patch columns
                let k = self.kernel_size;
                let w = self.weight.value.data();
                let mut w32 = vec![0.0f32; width * n_out];
                for o in 0..n_out {
                    for i in 0..n_in {
                        for z in 0..k {
                            w32[(z * n_in + i) * n_out + o] = w[(o * n_in + i) * k + z] as f32;
                        }
                    }
                }
                // seams between sequences produce rows that are discarded
                let span = batch * seg - k + 1;
                let mut out32 = Vec::with_capacity(span * n_out);
                for _ in 0..span {
                    out32.extend(bias.iter().map(|&v| v as f32));
                }
                gemm_acc(
                    span,
                    width,
                    n_out,
                    MatRef::new(&xp, 0, n_in, 1),
                    MatRef::new(&w32, 0, n_out, 1),
                    MatMut::new(&mut out32, 0, n_out, 1),
                );
                for (b, dst) in out.data_mut().chunks_exact_mut(out_len * n_out).enumerate() {
                    let src = &out32[b * seg * n_out..][..out_len * n_out];
                    for (o, &v) in dst.iter_mut().zip(src) {
                        *o = f64::from(v);
                    }
                }
                self.cache = None;
            }
        }
        Ok(out)
    }

    /// `[batch * out_len, n_in * k]` patches; column `i * k + z` holds
    /// channel `i` at tap `z`, matching the weight layout.
    fn im2col(&self, x: &Tensor, pad: usize, out_len: usize) -> Vec<f64> {
        let (n_in, k) = (self.n_in, self.kernel_size);
        let (batch, len) = (x.shape()[0], x.shape()[1]);
        let width = n_in * k;
        let mut cols = vec![0.0; batch * out_len * width];
        let xd = x.data();
        for b in 0..batch {
            for z in 0..k {
                let Some((t0, rows)) = tap_rows(len, out_len, pad, z) else {
                    continue;
                };
                for t in t0..t0 + rows {
                    let src = &xd[(b * len + t + z - pad) * n_in..][..n_in];
                    let dst = &mut cols[(b * out_len + t) * width..][..width];
                    for (i, &v) in src.iter().enumerate() {
                        dst[i * k + z] = v;
                    }
                }
            }
        }
        cols
    }

    /// Returns the input gradient and accumulates weight and bias gradients.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| {
                Error::Geometry("conv backward needs a 64-bit forward pass first".into())
            })?;
        let (batch, len, pad) = (cache.batch, cache.len, cache.pad);
        let (n_in, n_out, k) = (self.n_in, self.n_out, self.kernel_size);
        let out_len = len + 2 * pad - k + 1;
        if grad_out.shape() != [batch, out_len, n_out] {
            return Err(Error::Geometry(format!(
                "conv backward expects gradient {:?}, got {:?}",
                [batch, out_len, n_out],
                grad_out.shape()
            )));
        }
        let sign = if self.flip_backward { -1.0 } else { 1.0 };
        let g = grad_out.data();
        let rows = batch * out_len;
        let width = n_in * k;

        let gb = self.bias.grad.data_mut();
        for row in g.chunks_exact(n_out) {
            for (acc, v) in gb.iter_mut().zip(row) {
                *acc += sign * v;
            }
        }

        let mut grad_w = vec![0.0; n_out * width];
        gemm_acc(
            n_out,
            rows,
            width,
            MatRef::new(g, 0, 1, n_out),
            MatRef::new(&cache.cols, 0, width, 1),
            MatMut::new(&mut grad_w, 0, width, 1),
        );
        for (acc, v) in self.weight.grad.data_mut().iter_mut().zip(&grad_w) {
            *acc += sign * v;
        }

        let mut grad_cols = vec![0.0; rows * width];
        gemm_acc(
            rows,
            n_out,
            width,
            MatRef::new(g, 0, n_out, 1),
            MatRef::new(self.weight.value.data(), 0, width, 1),
            MatMut::new(&mut grad_cols, 0, width, 1),
        );
        let mut grad_in = Tensor::zeros(&[batch, len, n_in])?;
        let gi = grad_in.data_mut();
        for b in 0..batch {
            for z in 0..k {
                let Some((t0, r)) = tap_rows(len, out_len, pad, z) else {
                    continue;
                };
                for t in t0..t0 + r {
                    let src = &grad_cols[(b * out_len + t) * width..][..width];
                    let dst = &mut gi[(b * len + t + z - pad) * n_in..][..n_in];
                    for (i, d) in dst.iter_mut().enumerate() {
                        *d += sign * src[i * k + z];
                    }
                }
            }
        }
        Ok(grad_in)
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize)> {
        x.expect_rank(3, "conv1d")?;
        if x.shape()[2] != self.n_in {
            return Err(Error::Geometry(format!(
                "conv1d expects {} input channels, got {}",
                self.n_in,
                x.shape()[2]
            )));
        }
        Ok((x.shape()[0], x.shape()[1]))
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

/// Output rows `[t0, t0 + rows)` whose tap `z` reads inside the input.
fn tap_rows(len: usize, out_len: usize, pad: usize, z: usize) -> Option<(usize, usize)> {
    let t0 = pad.saturating_sub(z);
    let t1 = (len + pad).saturating_sub(z).min(out_len);
    (t1 > t0).then(|| (t0, t1 - t0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(w: Vec<f64>, shape: [usize; 3], b: Vec<f64>) -> Conv1dLayer {
        let n_out = shape[0];
        Conv1dLayer::from_params(
            Tensor::from_vec(&shape, w).unwrap(),
            Tensor::from_vec(&[n_out], b).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn difference_kernel() {
        let mut c = layer(vec![1.0, 0.0, -1.0], [1, 1, 3], vec![0.0]);
        let x = Tensor::from_vec(&[1, 4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(c.forward(&x).unwrap().data(), &[-2.0, -2.0]);
    }

    #[test]
    fn bias_only_and_output_length() {
        let mut c = layer(vec![0.0; 5], [1, 1, 5], vec![5.0]);
        let x = Tensor::new(&[1, 10, 1], 3.0).unwrap();
        let y = c.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 6, 1]);
        assert!(y.data().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn too_short_and_even_kernel() {
        let mut c = layer(vec![1.0; 5], [1, 1, 5], vec![0.0]);
        let x = Tensor::new(&[1, 4, 1], 1.0).unwrap();
        assert!(matches!(c.forward(&x), Err(Error::Geometry(_))));
        assert!(Conv1dLayer::new(2, 2, 4, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn same_padding_preserves_length() {
        let mut c = Conv1dLayer::new(3, 2, 5, &mut Rng::new(1)).unwrap();
        let x = Rng::new(2).uniform(-1.0, 1.0, &[2, 3, 3]).unwrap();
        assert_eq!(c.forward_same(&x).unwrap().shape(), &[2, 3, 2]);
    }

    #[test]
    fn zero_gradient_leaves_accumulators() {
        let mut c = Conv1dLayer::new(2, 3, 3, &mut Rng::new(1)).unwrap();
        let x = Rng::new(2).uniform(-1.0, 1.0, &[1, 6, 2]).unwrap();
        let y = c.forward(&x).unwrap();
        let gi = c.backward(&y.zeros_like()).unwrap();
        assert!(gi.data().iter().all(|&v| v == 0.0));
        assert!(c.weight.grad.data().iter().all(|&v| v == 0.0));
        assert!(c.bias.grad.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bias_gradient_is_sum() {
        let mut c = layer(vec![0.3, 0.1, -0.2], [1, 1, 3], vec![0.0]);
        let x = Tensor::from_vec(&[1, 4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        c.forward(&x).unwrap();
        let g = Tensor::from_vec(&[1, 2, 1], vec![1.0, 1.0]).unwrap();
        c.backward(&g).unwrap();
        assert_eq!(c.bias.grad.data(), &[2.0]);
        c.forward(&x).unwrap();
        c.backward(&g).unwrap();
        assert_eq!(c.bias.grad.data(), &[4.0], "gradients accumulate");
    }

    #[test]
    fn reduced_precision_matches_across_batches() {
        let mut c = Conv1dLayer::new(4, 3, 5, &mut Rng::new(3)).unwrap();
        let x = Rng::new(4).uniform(-1.0, 1.0, &[3, 7, 4]).unwrap();
        for pad in [0, 2, 4] {
            c.set_precision(Precision::F64);
            let exact = c.forward_padded(&x, pad).unwrap();
            c.set_precision(Precision::F32);
            let approx = c.forward_padded(&x, pad).unwrap();
            assert_eq!(exact.shape(), approx.shape());
            for (a, b) in exact.data().iter().zip(approx.data()) {
                assert!((a - b).abs() <= 1e-5, "pad {pad}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn backward_shape_mismatch() {
        let mut c = Conv1dLayer::new(1, 1, 3, &mut Rng::new(1)).unwrap();
        let x = Tensor::new(&[1, 5, 1], 1.0).unwrap();
        c.forward(&x).unwrap();
        let bad = Tensor::new(&[1, 4, 1], 1.0).unwrap();
        assert!(matches!(c.backward(&bad), Err(Error::Geometry(_))));
    }
}
