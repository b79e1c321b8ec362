use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::Mode;

/// Inverted dropout: survivors are scaled by `1/(1-d)` at train time, so
/// evaluation is the identity.
#[derive(Debug, Clone)]
pub struct DropoutLayer {
    rate: f64,
    mask: Option<Tensor>,
}

impl DropoutLayer {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        Ok(DropoutLayer { rate, mask: None })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        if mode == Mode::Eval || self.rate == 0.0 {
            self.mask = None;
            return Ok(x.clone());
        }
        let keep = 1.0 / (1.0 - self.rate);
        let mut mask = x.zeros_like();
        for m in mask.data_mut() {
            *m = if rng.next_f64() < self.rate { 0.0 } else { keep };
        }
        let mut out = x.clone();
        for (o, m) in out.data_mut().iter_mut().zip(mask.data()) {
            *o *= m;
        }
        self.mask = Some(mask);
        Ok(out)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let Some(mask) = &self.mask else {
            return Ok(grad_out.clone());
        };
        if mask.shape() != grad_out.shape() {
            return Err(Error::Geometry(format!(
                "dropout backward expects {:?}, got {:?}",
                mask.shape(),
                grad_out.shape()
            )));
        }
        let mut g = grad_out.clone();
        for (v, m) in g.data_mut().iter_mut().zip(mask.data()) {
            *v *= m;
        }
        Ok(g)
    }

    pub fn clear_cache(&mut self) {
        self.mask = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_cases() {
        let x = Rng::new(1).uniform(-1.0, 1.0, &[50]).unwrap();
        let mut rng = Rng::new(2);
        let mut none = DropoutLayer::new(0.0).unwrap();
        assert_eq!(none.forward(&x, Mode::Train, &mut rng).unwrap(), x);
        let mut half = DropoutLayer::new(0.5).unwrap();
        assert_eq!(half.forward(&x, Mode::Eval, &mut rng).unwrap(), x);
    }

    #[test]
    fn rate_validation() {
        assert!(matches!(DropoutLayer::new(1.0), Err(Error::Config(_))));
        assert!(matches!(DropoutLayer::new(-0.1), Err(Error::Config(_))));
    }

    #[test]
    fn expectation_preserved() {
        let n = 100_000;
        let x = Tensor::new(&[n], 1.0).unwrap();
        let mut d = DropoutLayer::new(0.5).unwrap();
        let y = d.forward(&x, Mode::Train, &mut Rng::new(9)).unwrap();
        let mean = y.data().iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
        // 3 sigma: per-element std is 1 for d = 0.5
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt());
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn backward_uses_mask() {
        let x = Tensor::new(&[200], 1.0).unwrap();
        let mut d = DropoutLayer::new(0.3).unwrap();
        let y = d.forward(&x, Mode::Train, &mut Rng::new(4)).unwrap();
        let g = d.backward(&x).unwrap();
        assert_eq!(g, y);
    }
}
