use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::tape::{numel, Tape, Tensor};

/// Owned dense array outside any tape: parameter values, gradients,
/// batches of data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Array<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Array<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) || numel(&shape) != data.len() {
            return Err(Error::shape(
                "array",
                format!("shape {shape:?} does not hold {} values", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); numel(shape)],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Places the array on `tape` as a leaf.
    pub fn to_tensor(&self, tape: &Tape<T>, requires_grad: bool) -> Tensor<T> {
        tape.leaf(&self.shape, self.data.clone(), requires_grad)
            .expect("array shape validated on construction")
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn to_array(&self) -> Array<T> {
        Array {
            shape: self.shape(),
            data: self.to_vec(),
        }
    }
}
