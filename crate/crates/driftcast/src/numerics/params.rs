//! Named trainable parameters and their gradients.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Stable handle into a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(&self) -> usize {
        self.0
    }
}

/// One learnable tensor plus its gradient accumulator.
///
/// The gradient always has the same shape as the value and is exactly zero
/// right after [`ParamStore::zero_grad`]. Non-trainable parameters never
/// receive gradient from a backward pass.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub gradient: Tensor,
    pub trainable: bool,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let gradient = Tensor::zeros(value.shape().to_vec());
        Self {
            name: name.into(),
            value,
            gradient,
            trainable: true,
        }
    }
}

/// Flat registry of parameters, indexed by [`ParamId`] in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let id = ParamId(self.params.len());
        self.params.push(Parameter::new(name, value));
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Zero every gradient accumulator.
    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.gradient.data_mut().fill(0.0);
        }
    }

    /// Set the trainable flag on a subset of parameters, clearing it elsewhere.
    pub fn set_trainable_exactly(&mut self, ids: &[ParamId]) {
        for p in &mut self.params {
            p.trainable = false;
        }
        for id in ids {
            self.params[id.0].trainable = true;
        }
    }

    pub fn set_all_trainable(&mut self) {
        for p in &mut self.params {
            p.trainable = true;
        }
    }

    /// Clone all parameter values, e.g. for a best-epoch snapshot.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    /// Restore values captured by [`snapshot`](Self::snapshot).
    pub fn restore(&mut self, snapshot: &[Tensor]) -> Result<()> {
        if snapshot.len() != self.params.len() {
            return Err(Error::Config(format!(
                "snapshot has {} tensors, store has {}",
                snapshot.len(),
                self.params.len()
            )));
        }
        for (p, s) in self.params.iter_mut().zip(snapshot) {
            if p.value.shape() != s.shape() {
                return Err(Error::ShapeMismatch {
                    op: "restore",
                    lhs: p.value.shape().to_vec(),
                    rhs: s.shape().to_vec(),
                });
            }
            p.value = s.clone();
        }
        Ok(())
    }

    /// Total number of scalar entries across the given parameters.
    pub fn entry_count(&self, ids: &[ParamId]) -> usize {
        ids.iter().map(|id| self.params[id.0].value.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_matches_value_shape() {
        let mut store = ParamStore::new();
        let id = store.register("w", Tensor::zeros(vec![3, 4]));
        assert_eq!(store.get(id).gradient.shape(), &[3, 4]);
    }

    #[test]
    fn zero_grad_clears_everything() {
        let mut store = ParamStore::new();
        let id = store.register("w", Tensor::zeros(vec![2]));
        store.get_mut(id).gradient.data_mut()[0] = 3.0;
        store.zero_grad();
        assert!(store.get(id).gradient.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn snapshot_restore_roundtrip() {
        let mut store = ParamStore::new();
        let id = store.register("w", Tensor::full(vec![2], 1.0));
        let snap = store.snapshot();
        store.get_mut(id).value.data_mut()[0] = 9.0;
        store.restore(&snap).unwrap();
        assert_eq!(store.get(id).value.data(), &[1.0, 1.0]);
    }

    #[test]
    fn set_trainable_exactly_partitions() {
        let mut store = ParamStore::new();
        let a = store.register("a", Tensor::zeros(vec![1]));
        let b = store.register("b", Tensor::zeros(vec![1]));
        store.set_trainable_exactly(&[b]);
        assert!(!store.get(a).trainable);
        assert!(store.get(b).trainable);
    }
}
