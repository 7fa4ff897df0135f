//! Named parameter storage and per-pass binding onto a tape.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Array, Tape, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform on `(-bound, bound)`.
    Uniform(f64),
    /// Glorot uniform, bound `sqrt(6 / (fan_in + fan_out))`.
    Xavier { fan_in: usize, fan_out: usize },
}

#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub value: Array<T>,
    pub grad: Array<T>,
}

/// Ordered collection of named parameters. Insertion order is the
/// canonical order used by checkpoints and optimizers.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init, rng: &mut ChaCha8Rng) -> ParamId {
        let name = name.into();
        debug_assert!(self.params.iter().all(|p| p.name != name), "duplicate parameter {name}");
        let n: usize = shape.iter().product();
        let data: Vec<T> = match init {
            Init::Zeros => vec![T::zero(); n],
            Init::Ones => vec![T::one(); n],
            Init::Uniform(bound) => (0..n).map(|_| T::lit(rng.gen_range(-bound..bound))).collect(),
            Init::Xavier { fan_in, fan_out } => {
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..n).map(|_| T::lit(rng.gen_range(-bound..bound))).collect()
            }
        };
        self.params.push(Param {
            name,
            value: Array {
                shape: shape.to_vec(),
                data,
            },
            grad: Array::zeros(shape),
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn values(&self) -> Vec<Array<T>> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    /// Replaces all values; shapes must match the current ones.
    pub fn set_values(&mut self, values: Vec<Array<T>>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::contract(format!(
                "expected {} parameter arrays, got {}",
                self.params.len(),
                values.len()
            )));
        }
        for (p, v) in self.params.iter().zip(&values) {
            if p.value.shape != v.shape {
                return Err(Error::Dimension {
                    op: "set_values",
                    lhs: p.value.shape.clone(),
                    rhs: v.shape.clone(),
                });
            }
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            p.value = v;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    /// Adds the gradients recorded in `session` onto the stored ones.
    pub fn accumulate(&mut self, session: &Session<T>) {
        for (p, t) in self.params.iter_mut().zip(&session.params) {
            if let Some(g) = t.grad() {
                for (a, b) in p.grad.data.iter_mut().zip(g) {
                    *a = *a + b;
                }
            }
        }
    }

    pub fn grad_norm(&self) -> T {
        self.params
            .iter()
            .flat_map(|p| p.grad.data.iter())
            .map(|&g| g * g)
            .sum::<T>()
            .sqrt()
    }
}

/// One forward/backward pass: a fresh tape with every parameter bound as
/// a leaf.
pub struct Session<T> {
    tape: Tape<T>,
    params: Vec<Tensor<T>>,
}

impl<T: Scalar> Session<T> {
    /// Binds the store; `trainable` controls whether leaves record gradients.
    pub fn new(store: &ParamStore<T>, trainable: bool) -> Self {
        let tape = Tape::new();
        let params = store.params.iter().map(|p| p.value.to_tensor(&tape, trainable)).collect();
        Self { tape, params }
    }

    /// Uses caller-provided leaves in store order (gradient checks).
    pub fn from_leaves(tape: &Tape<T>, leaves: &[Tensor<T>]) -> Self {
        Self {
            tape: tape.clone(),
            params: leaves.to_vec(),
        }
    }

    pub fn tape(&self) -> &Tape<T> {
        &self.tape
    }

    pub fn param(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0]
    }
}
