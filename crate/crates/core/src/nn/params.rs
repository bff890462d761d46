use crate::autodiff::{Tape, Var};
use crate::error::TensorError;
use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct ParamEntry<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub trainable: bool,
}

/// Ordered, named parameter tensors of one sub-model. The order is the
/// iteration order of the optimizer and of checkpoint blocks.
#[derive(Clone, Debug, Default)]
pub struct ParamSet<T> {
    entries: Vec<ParamEntry<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>, trainable: bool) {
        let name = name.into();
        if let Some(e) = self.entries.iter_mut().find(|e| e.name == name) {
            e.value = value;
            e.trainable = trainable;
        } else {
            self.entries.push(ParamEntry {
                name,
                value,
                trainable,
            });
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| &e.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.entries
            .iter_mut()
            .find(|e| e.name == name)
            .map(|e| &mut e.value)
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry<T>] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count over all tensors, frozen ones included.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    value: e.value.cast(),
                    trainable: e.trainable,
                })
                .collect(),
        }
    }

    /// Record every tensor on `tape`; trainable ones become gradient leaves.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bound {
        let vars = self
            .entries
            .iter()
            .map(|e| tape.leaf(e.value.clone(), e.trainable))
            .collect();
        Bound {
            names: self.entries.iter().map(|e| e.name.clone()).collect(),
            vars,
        }
    }

    pub fn bit_eq(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.name == b.name && a.value.bit_eq(&b.value))
    }
}

/// A [`ParamSet`] recorded on a tape.
#[derive(Clone, Debug)]
pub struct Bound {
    names: Vec<String>,
    vars: Vec<Var>,
}

impl Bound {
    /// Pair names with tensors already on a tape.
    pub fn from_vars(names: Vec<String>, vars: Vec<Var>) -> Self {
        assert_eq!(names.len(), vars.len(), "one var per name");
        Self { names, vars }
    }

    pub fn get(&self, name: &str) -> Result<Var, TensorError> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.vars[i])
            .ok_or_else(|| TensorError::MissingParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.vars.iter().copied())
    }

    /// Gradients of the trainable tensors, in parameter order; `None` for frozen ones.
    pub fn grads<T: Scalar>(&self, tape: &Tape<T>) -> Vec<Option<Tensor<T>>> {
        self.vars.iter().map(|&v| tape.grad(v)).collect()
    }
}

/// Glorot-uniform draw: uniform in (-r, r) with `r = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot<T: Scalar>(rows: usize, cols: usize, rng: &mut SplitMix64) -> Tensor<T> {
    let r = (6.0 / (rows + cols) as f64).sqrt();
    uniform(&[rows, cols], r, rng)
}

/// Uniform draws in the open interval (-r, r), rejecting any value that
/// rounds onto the boundary in `T`.
pub fn uniform<T: Scalar>(shape: &[usize], r: f64, rng: &mut SplitMix64) -> Tensor<T> {
    let bound = T::lit(r);
    let n = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    while data.len() < n {
        let v = T::lit(rng.symmetric(r));
        if v.abs() < bound {
            data.push(v);
        }
    }
    Tensor::new(shape, data).expect("shape matches draw count")
}
