use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{gemm_acc, MatMut, MatRef, Tensor};

use super::Param;

/// Position-wise fully connected map `[T, n_in] -> [T, n_out]`.
#[derive(Debug, Clone)]
pub struct LinearLayer {
    n_in: usize,
    n_out: usize,
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl LinearLayer {
    pub fn new(n_in: usize, n_out: usize, rng: &mut Rng) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::Config("linear layer widths must be positive".into()));
        }
        let weight = Param::fan_in_uniform(&[n_out, n_in], n_in, rng)?;
        let bias = Param::fan_in_uniform(&[n_out], n_in, rng)?;
        Ok(LinearLayer {
            n_in,
            n_out,
            weight,
            bias,
            input: None,
        })
    }

    pub fn from_params(weight: Tensor, bias: Tensor) -> Result<Self> {
        weight.expect_rank(2, "linear weight")?;
        let (n_out, n_in) = (weight.shape()[0], weight.shape()[1]);
        if bias.shape() != [n_out] {
            return Err(Error::Geometry(format!(
                "linear bias shape {:?} does not match {n_out} outputs",
                bias.shape()
            )));
        }
        Ok(LinearLayer {
            n_in,
            n_out,
            weight: Param::new(weight),
            bias: Param::new(bias),
            input: None,
        })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        x.expect_rank(2, "linear")?;
        if x.shape()[1] != self.n_in {
            return Err(Error::Geometry(format!(
                "linear layer expects {} inputs, got {}",
                self.n_in,
                x.shape()[1]
            )));
        }
        let rows = x.shape()[0];
        let (n_in, n_out) = (self.n_in, self.n_out);
        let mut out = Tensor::zeros(&[rows, n_out])?;
        for row in out.data_mut().chunks_exact_mut(n_out) {
            row.copy_from_slice(self.bias.value.data());
        }
        gemm_acc(
            rows,
            n_in,
            n_out,
            MatRef::new(x.data(), 0, n_in, 1),
            MatRef::new(self.weight.value.data(), 0, 1, n_in),
            MatMut::new(out.data_mut(), 0, n_out, 1),
        );
        self.input = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::Geometry("linear backward before forward".into()))?;
        let rows = x.shape()[0];
        let (n_in, n_out) = (self.n_in, self.n_out);
        if grad_out.shape() != [rows, n_out] {
            return Err(Error::Geometry(format!(
                "linear backward expects {:?}, got {:?}",
                [rows, n_out],
                grad_out.shape()
            )));
        }
        let g = grad_out.data();
        for row in g.chunks_exact(n_out) {
            for (acc, v) in self.bias.grad.data_mut().iter_mut().zip(row) {
                *acc += v;
            }
        }
        gemm_acc(
            n_out,
            rows,
            n_in,
            MatRef::new(g, 0, 1, n_out),
            MatRef::new(x.data(), 0, n_in, 1),
            MatMut::new(self.weight.grad.data_mut(), 0, n_in, 1),
        );
        let mut grad_in = x.zeros_like();
        gemm_acc(
            rows,
            n_out,
            n_in,
            MatRef::new(g, 0, n_out, 1),
            MatRef::new(self.weight.value.data(), 0, n_in, 1),
            MatMut::new(grad_in.data_mut(), 0, n_in, 1),
        );
        Ok(grad_in)
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }

    pub fn clear_cache(&mut self) {
        self.input = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_arithmetic() {
        let eye = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let mut ll = LinearLayer::from_params(eye, Tensor::zeros(&[2]).unwrap()).unwrap();
        let x = Tensor::from_vec(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(ll.forward(&x).unwrap(), x);

        let w = Tensor::from_vec(&[1, 2], vec![2.0, 3.0]).unwrap();
        let b = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        let mut ll = LinearLayer::from_params(w, b).unwrap();
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 1.0]).unwrap();
        assert_eq!(ll.forward(&x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn width_mismatch() {
        let mut ll = LinearLayer::new(3, 2, &mut Rng::new(0)).unwrap();
        let x = Tensor::zeros(&[2, 4]).unwrap();
        assert!(matches!(ll.forward(&x), Err(Error::Geometry(_))));
    }
}
