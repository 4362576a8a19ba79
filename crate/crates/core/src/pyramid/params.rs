use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::dump;
use crate::error::{Error, Result};
use crate::tape::Tape;
use crate::tensor::{Element, Fill, Shape, Tensor};

/// Declared parameter of a network: name, shape and init fan-in.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Shape,
    /// `Some(fan_in)` for weights (fan-in scaled uniform); `None` for zero-init biases.
    pub fan_in: Option<usize>,
}

/// Owned parameter tensors of one network instance, in declaration order.
#[derive(Clone, Debug)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

/// SplitMix64 step; decorrelates per-parameter seeds.
pub(crate) fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl<T: Element> ParamStore<T> {
    pub fn init(specs: &[ParamSpec], seed: u64) -> Result<Self> {
        let mut tensors = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let fill = match spec.fan_in {
                Some(fan_in) => Fill::KaimingUniform { fan_in },
                None => Fill::Constant(0.0),
            };
            let mut t = Tensor::create(spec.shape, fill, mix_seed(seed, i as u64))?;
            t.set_requires_grad(true);
            tensors.push(t);
        }
        let names: Vec<String> = specs.iter().map(|s| s.name.clone()).collect();
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Ok(ParamStore { names, tensors, index })
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: usize) -> &Tensor<T> {
        &self.tensors[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Tensor<T> {
        &mut self.tensors[id]
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|i| &self.tensors[i])
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> u64 {
        self.tensors.iter().map(|t| t.len() as u64).sum()
    }

    /// Replaces a parameter's values; the shape must match.
    pub fn set(&mut self, name: &str, values: Tensor<T>) -> Result<()> {
        let id = self
            .id(name)
            .ok_or_else(|| Error::Contract(format!("no parameter named `{name}`")))?;
        let current = &mut self.tensors[id];
        if current.shape() != values.shape() {
            return Err(Error::Contract(format!(
                "parameter `{name}` has shape {}, got {}",
                current.shape(),
                values.shape()
            )));
        }
        current.data_mut().copy_from_slice(values.data());
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Adds the parameter gradients recorded on `tape` into the gradient slots.
    pub fn absorb_grads(&mut self, tape: &Tape<T>) {
        for (id, g) in tape.param_grads() {
            self.tensors[id].accumulate_grad(g);
        }
    }

    /// Writes one tensor dump per parameter into `dir` (`<name>.pft`).
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for (name, t) in self.iter() {
            dump::save(t, dir.join(format!("{name}.pft")))?;
        }
        Ok(())
    }

    /// Loads values written by [`ParamStore::save_dir`] into an initialized store.
    pub fn load_dir(&mut self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for i in 0..self.len() {
            let name = self.names[i].clone();
            let t: Tensor<T> = dump::load(dir.join(format!("{name}.pft")))?;
            self.set(&name, t)?;
        }
        Ok(())
    }
}
