//! Named parameter sets and their checkpoint form.

use kg_tensor::{Checkpoint, Tensor};

use crate::error::{Error, Result};

/// A model whose trainable tensors can be enumerated in a fixed order.
pub trait Parameters {
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;
    /// One name per tensor, in [`Parameters::tensors`] order.
    fn param_names(&self) -> Vec<String>;

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn write_tensors(&self, ckpt: &mut Checkpoint) {
        for (name, t) in self.param_names().into_iter().zip(self.tensors()) {
            ckpt.push(name, t.clone());
        }
    }

    /// Overwrites every tensor with the same-named, same-shaped checkpoint entry.
    fn read_tensors(&mut self, ckpt: &Checkpoint) -> Result<()> {
        let names = self.param_names();
        for (name, t) in names.iter().zip(self.tensors_mut()) {
            let stored = ckpt.get(name)?;
            if stored.shape() != t.shape() {
                return Err(Error::Invalid(format!(
                    "checkpoint tensor {name} has shape {:?}, model expects {:?}",
                    stored.shape(),
                    t.shape()
                )));
            }
            *t = stored.clone();
        }
        Ok(())
    }
}

pub(crate) fn meta_usize(ckpt: &Checkpoint, key: &str) -> Result<usize> {
    ckpt.meta(key)
        .ok_or_else(|| Error::Invalid(format!("checkpoint lacks {key}")))?
        .parse()
        .map_err(|_| Error::Invalid(format!("checkpoint {key} is not an integer")))
}

pub(crate) fn meta_f64(ckpt: &Checkpoint, key: &str) -> Result<f64> {
    ckpt.meta(key)
        .ok_or_else(|| Error::Invalid(format!("checkpoint lacks {key}")))?
        .parse()
        .map_err(|_| Error::Invalid(format!("checkpoint {key} is not a number")))
}
