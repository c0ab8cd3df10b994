use indexmap::IndexMap;

use crate::autodiff::{Tape, Var};
use crate::error::{LedaError, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

/// A trainable matrix and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub value: DenseMatrix<T>,
    pub grad: DenseMatrix<T>,
}

/// Named trainable parameters, iterated in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<T> {
    params: IndexMap<String, Param<T>>,
}

/// Tape handles for every parameter of a [`ParamSet`], keyed by name.
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    vars: IndexMap<String, Var>,
}

impl Bindings {
    pub fn get(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

impl std::ops::Index<&str> for Bindings {
    type Output = Var;

    fn index(&self, name: &str) -> &Var {
        self.vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter '{name}' is not bound"))
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            params: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: DenseMatrix<T>) -> Result<()> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(LedaError::InvalidArgument(format!(
                "duplicate parameter name '{name}'"
            )));
        }
        let grad = DenseMatrix::zeros(value.rows(), value.cols());
        self.params.insert(name, Param { value, grad });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&DenseMatrix<T>> {
        self.params.get(name).map(|p| &p.value)
    }

    pub fn value(&self, name: &str) -> Result<&DenseMatrix<T>> {
        self.get(name)
            .ok_or_else(|| LedaError::InvalidArgument(format!("unknown parameter '{name}'")))
    }

    pub fn grad(&self, name: &str) -> Option<&DenseMatrix<T>> {
        self.params.get(name).map(|p| &p.grad)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<T>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    /// Places every parameter on `tape` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bindings {
        let vars = self
            .params
            .iter()
            .map(|(name, p)| (name.clone(), tape.parameter(name.clone(), p.value.clone())))
            .collect();
        Bindings { vars }
    }

    /// Binds only the named parameters; the rest enter the tape as constants.
    pub fn bind_subset(&self, tape: &mut Tape<T>, trainable: &[&str]) -> Bindings {
        let vars = self
            .params
            .iter()
            .map(|(name, p)| {
                let var = if trainable.contains(&name.as_str()) {
                    tape.parameter(name.clone(), p.value.clone())
                } else {
                    tape.constant_named(name.clone(), p.value.clone())
                };
                (name.clone(), var)
            })
            .collect();
        Bindings { vars }
    }

    /// Adds the gradients recorded on `tape` into the accumulated gradients.
    pub fn accumulate(&mut self, tape: &Tape<T>, bindings: &Bindings) {
        for (name, var) in bindings.iter() {
            if !tape.is_trainable(var) {
                continue;
            }
            if let Some(p) = self.params.get_mut(name) {
                p.grad.add_assign_unchecked(&tape.grad(var));
            }
        }
    }

    /// Adds another set of per-parameter gradients (same names) into this one.
    pub fn accumulate_grads(&mut self, grads: &IndexMap<String, DenseMatrix<T>>) {
        for (name, g) in grads {
            if let Some(p) = self.params.get_mut(name) {
                p.grad.add_assign_unchecked(g);
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad = DenseMatrix::zeros(p.value.rows(), p.value.cols());
        }
    }
}

/// Collects the trainable gradients of one tape, keyed by parameter name.
pub fn collect_grads<T: Scalar>(tape: &Tape<T>, bindings: &Bindings) -> IndexMap<String, DenseMatrix<T>> {
    bindings
        .iter()
        .filter(|(_, var)| tape.is_trainable(*var))
        .map(|(name, var)| (name.to_string(), tape.grad(var)))
        .collect()
}
