use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::Param;

/// Embedding table: row `idx` of a `[V, E]` matrix per input symbol.
#[derive(Debug, Clone)]
pub struct LookupTable {
    vocab_size: usize,
    embed_dim: usize,
    pub table: Param,
    indices: Option<Vec<usize>>,
}

impl LookupTable {
    pub fn new(vocab_size: usize, embed_dim: usize, rng: &mut Rng) -> Result<Self> {
        if vocab_size == 0 || embed_dim == 0 {
            return Err(Error::Config("lookup table extents must be positive".into()));
        }
        // one-hot input: fan-in of 1
        let table = Param::fan_in_uniform(&[vocab_size, embed_dim], 1, rng)?;
        Ok(LookupTable {
            vocab_size,
            embed_dim,
            table,
            indices: None,
        })
    }

    pub fn from_table(table: Tensor) -> Result<Self> {
        table.expect_rank(2, "lookup table")?;
        Ok(LookupTable {
            vocab_size: table.shape()[0],
            embed_dim: table.shape()[1],
            table: Param::new(table),
            indices: None,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn forward(&mut self, idx: &[usize]) -> Result<Tensor> {
        if idx.is_empty() {
            return Err(Error::Data("empty index sequence".into()));
        }
        if let Some((pos, &bad)) = idx.iter().enumerate().find(|(_, &i)| i >= self.vocab_size) {
            return Err(Error::Data(format!(
                "index {bad} at position {pos} is outside vocabulary of size {}",
                self.vocab_size
            )));
        }
        let e = self.embed_dim;
        let table = self.table.value.data();
        let mut data = Vec::with_capacity(idx.len() * e);
        for &i in idx {
            data.extend_from_slice(&table[i * e..(i + 1) * e]);
        }
        self.indices = Some(idx.to_vec());
        Tensor::from_vec(&[idx.len(), e], data)
    }

    /// Adds each gradient row into the table row it was read from.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<()> {
        let idx = self
            .indices
            .as_ref()
            .ok_or_else(|| Error::Geometry("lookup backward before forward".into()))?;
        let e = self.embed_dim;
        if grad_out.shape() != [idx.len(), e] {
            return Err(Error::Geometry(format!(
                "lookup backward expects {:?}, got {:?}",
                [idx.len(), e],
                grad_out.shape()
            )));
        }
        let gt = self.table.grad.data_mut();
        for (row, &i) in grad_out.data().chunks_exact(e).zip(idx) {
            for (acc, v) in gt[i * e..(i + 1) * e].iter_mut().zip(row) {
                *acc += v;
            }
        }
        Ok(())
    }

    pub fn clear_cache(&mut self) {
        self.indices = None;
    }
}
