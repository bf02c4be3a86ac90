use serde::{Deserialize, Serialize};

use super::Tensor2;
use crate::error::{config_err, Result};

/// Handle to one tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug)]
struct Slot {
    name: String,
    value: Tensor2,
    grad: Tensor2,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

/// Named parameters with their gradient accumulators and optimizer moments.
///
/// Gradients always share the shape of their parameter. Nothing in here
/// touches parameter values except [`ParamStore::value_mut`] and the
/// optimizer.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    slots: Vec<Slot>,
    steps: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor2) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        let (r, c) = value.shape();
        let n = value.len();
        self.slots.push(Slot {
            name,
            value,
            grad: Tensor2::zeros(r, c),
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
        });
        ParamId(self.slots.len() - 1)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.slots.iter().position(|s| s.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.slots.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.slots[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor2 {
        &self.slots[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.slots[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor2 {
        &self.slots[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor2 {
        &mut self.slots[id.0].grad
    }

    /// Simultaneous read access to a value and write access to its gradient.
    pub fn value_and_grad(&mut self, id: ParamId) -> (&Tensor2, &mut Tensor2) {
        let slot = &mut self.slots[id.0];
        (&slot.value, &mut slot.grad)
    }

    pub fn zero_grad(&mut self) {
        for slot in &mut self.slots {
            slot.grad.fill(0.0);
        }
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.slots.iter().map(|s| s.value.len()).sum()
    }

    pub fn grad_norm(&self) -> f64 {
        self.slots
            .iter()
            .map(|s| s.grad.sum_squares())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm.is_finite() {
            let scale = max_norm / norm;
            for slot in &mut self.slots {
                slot.grad.data_mut().iter_mut().for_each(|g| *g *= scale);
            }
        }
        norm
    }

    pub fn all_finite(&self) -> bool {
        self.slots.iter().all(|s| s.value.is_finite())
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies `f(value, grad, first_moment, second_moment)` to every slot
    /// and advances the step counter. Used by the optimizer.
    pub(crate) fn update_each(&mut self, mut f: impl FnMut(u64, &mut [f64], &[f64], &mut [f64], &mut [f64])) {
        self.steps += 1;
        let t = self.steps;
        for slot in &mut self.slots {
            f(
                t,
                slot.value.data_mut(),
                slot.grad.data(),
                &mut slot.first_moment,
                &mut slot.second_moment,
            );
        }
    }

    /// `(name, value)` pairs in insertion order.
    pub fn named_values(&self) -> impl Iterator<Item = (&str, &Tensor2)> {
        self.slots.iter().map(|s| (s.name.as_str(), &s.value))
    }

    /// Overwrites parameter values from `(name, tensor)` pairs; every
    /// parameter must be present with a matching shape.
    pub fn load_values<'a>(&mut self, named: impl IntoIterator<Item = (&'a str, &'a Tensor2)>) -> Result<()> {
        let mut seen = vec![false; self.slots.len()];
        for (name, tensor) in named {
            let id = self
                .find(name)
                .ok_or_else(|| config_err!("unknown parameter {name}"))?;
            let slot = &mut self.slots[id.0];
            if slot.value.shape() != tensor.shape() {
                return Err(config_err!(
                    "parameter {name} has shape {:?}, checkpoint has {:?}",
                    slot.value.shape(),
                    tensor.shape()
                ));
            }
            slot.value = tensor.clone();
            seen[id.0] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(config_err!("parameter {} missing", self.slots[missing].name));
        }
        Ok(())
    }

    /// Copies parameter values from another store with identical layout.
    pub fn copy_values_from(&mut self, other: &ParamStore) {
        assert_eq!(self.slots.len(), other.slots.len());
        for (dst, src) in self.slots.iter_mut().zip(&other.slots) {
            dst.value = src.value.clone();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_leaves_values() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor2::from_vec(1, 2, vec![1.0, -2.0]).unwrap());
        store.grad_mut(id).data_mut()[0] = 3.0;
        assert_eq!(store.grad(id).shape(), store.value(id).shape());
        store.zero_grad();
        assert_eq!(store.value(id).data(), &[1.0, -2.0]);
        assert_eq!(store.grad(id).data(), &[0.0, 0.0]);
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor2::zeros(1, 1));
        let b = store.add("b", Tensor2::zeros(1, 1));
        store.grad_mut(a).data_mut()[0] = 30.0;
        store.grad_mut(b).data_mut()[0] = 40.0;
        let before = store.clip_grad_norm(5.0);
        assert_eq!(before, 50.0);
        assert!((store.grad_norm() - 5.0).abs() < 1e-12);
        assert!((store.grad(a).data()[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn load_values_rejects_shape_mismatch() {
        let mut store = ParamStore::new();
        store.add("w", Tensor2::zeros(2, 2));
        let bad = Tensor2::zeros(1, 2);
        assert!(store.load_values([("w", &bad)]).is_err());
        let good = Tensor2::from_vec(2, 2, vec![1.0; 4]).unwrap();
        store.load_values([("w", &good)]).unwrap();
    }
}
