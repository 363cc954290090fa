use rand::Rng;

use crate::error::{invalid, Result};
use crate::ndcore::{Gradients, Tape, Tensor, Var};

/// Index of a parameter tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of parameter tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn push_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        self.push(name, Tensor::new(shape.to_vec(), data).expect("count matches shape"))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// Replaces a value, keeping the shape contract.
    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let cur = &self.values[id.0];
        if cur.shape() != value.shape() {
            return invalid(format!(
                "parameter {}: shape {:?} vs stored {:?}",
                self.names[id.0],
                value.shape(),
                cur.shape()
            ));
        }
        self.values[id.0] = value;
        Ok(())
    }

    pub fn total_values(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Puts every parameter on the tape as a requires-grad leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound { vars: self.values.iter().map(|v| tape.param(v.clone())).collect() }
    }

    /// Puts every parameter on the tape as a constant (inference).
    pub fn bind_frozen(&self, tape: &mut Tape) -> Bound {
        Bound { vars: self.values.iter().map(|v| tape.constant(v.clone())).collect() }
    }
}

/// Tape handles of a [`ParamStore`] for one forward pass.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    /// Wraps handles already on a tape, one per parameter in store order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Bound { vars }
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Gradient per parameter; `None` where the loss does not reach it.
    pub fn gradients<'g>(&self, grads: &'g Gradients) -> Vec<Option<&'g Tensor>> {
        self.vars.iter().map(|&v| grads.get(v)).collect()
    }
}
