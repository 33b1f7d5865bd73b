use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::graph::{Graph, Var};
use crate::nn::tensor::{Scalar, Tensor};

/// Named trainable tensor, e.g. `block2.conv1.weight`.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<F> {
    pub name: String,
    pub tensor: Tensor<F>,
}

/// Ordered collection of uniquely named parameters and non-trainable buffers
/// (batch-norm running statistics).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<F> {
    params: Vec<Parameter<F>>,
    buffers: Vec<Parameter<F>>,
    index: HashMap<String, Slot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Param(usize),
    Buffer(usize),
}

impl<F: Scalar> ParamStore<F> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            buffers: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn claim(&mut self, name: &str, slot: Slot) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name `{name}`")));
        }
        self.index.insert(name.to_string(), slot);
        Ok(())
    }

    pub fn add_param(&mut self, name: &str, tensor: Tensor<F>) -> Result<usize> {
        self.claim(name, Slot::Param(self.params.len()))?;
        self.params.push(Parameter {
            name: name.to_string(),
            tensor,
        });
        Ok(self.params.len() - 1)
    }

    pub fn add_buffer(&mut self, name: &str, tensor: Tensor<F>) -> Result<usize> {
        self.claim(name, Slot::Buffer(self.buffers.len()))?;
        self.buffers.push(Parameter {
            name: name.to_string(),
            tensor,
        });
        Ok(self.buffers.len() - 1)
    }

    pub fn params(&self) -> &[Parameter<F>] {
        &self.params
    }

    pub fn buffers(&self) -> &[Parameter<F>] {
        &self.buffers
    }

    pub fn param(&self, i: usize) -> &Tensor<F> {
        &self.params[i].tensor
    }

    pub fn param_mut(&mut self, i: usize) -> &mut Tensor<F> {
        &mut self.params[i].tensor
    }

    pub fn buffer(&self, i: usize) -> &Tensor<F> {
        &self.buffers[i].tensor
    }

    pub fn buffer_mut(&mut self, i: usize) -> &mut Tensor<F> {
        &mut self.buffers[i].tensor
    }

    /// Looks up a parameter or buffer by name.
    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.index.get(name).map(|slot| match *slot {
            Slot::Param(i) => &self.params[i].tensor,
            Slot::Buffer(i) => &self.buffers[i].tensor,
        })
    }

    /// Replaces the tensor stored under `name`, which must keep its shape.
    pub fn set(&mut self, name: &str, tensor: Tensor<F>) -> Result<()> {
        let slot = *self
            .index
            .get(name)
            .ok_or_else(|| Error::Config(format!("no parameter named `{name}`")))?;
        let dst = match slot {
            Slot::Param(i) => &mut self.params[i].tensor,
            Slot::Buffer(i) => &mut self.buffers[i].tensor,
        };
        if dst.shape() != tensor.shape() {
            return Err(Error::Shape(format!(
                "`{name}` has shape {:?}, got {:?}",
                dst.shape(),
                tensor.shape()
            )));
        }
        *dst = tensor;
        Ok(())
    }

    /// Total number of trainable scalars.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    /// Copies every parameter into `g` as a trainable leaf, in store order.
    pub fn bind(&self, g: &mut Graph<F>) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| g.param(p.tensor.clone()))
            .collect()
    }

    /// Parameters followed by buffers, in declaration order.
    pub fn named_tensors(&self) -> impl Iterator<Item = &Parameter<F>> {
        self.params.iter().chain(&self.buffers)
    }
}

/// Glorot/Xavier uniform sample in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<F: Scalar, R: Rng>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor<F> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| F::of(rng.gen_range(-limit..limit)))
        .collect();
    Tensor::from_vec(shape, data).expect("shape matches generated length")
}
