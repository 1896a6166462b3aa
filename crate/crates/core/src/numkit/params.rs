use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named trainable tensor with an optional gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Option<Tensor>,
    pub requires_grad: bool,
}

/// Ordered collection of named parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::Argument(format!("duplicate parameter `{name}`")));
        }
        let id = self.params.len();
        self.params.push(Param {
            name: name.to_string(),
            value,
            grad: None,
            requires_grad: true,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.by_name.get(name).map(|&i| &self.params[i])
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Adds `grads` into the stored gradient buffers. Every trainable
    /// parameter ends up with a buffer, zero when it was not reached.
    pub fn accumulate(&mut self, grads: Gradients) {
        for (param, grad) in self.params.iter_mut().zip(grads.0) {
            if !param.requires_grad {
                continue;
            }
            let buf = param
                .grad
                .get_or_insert_with(|| Tensor::zeros(param.value.shape()));
            if let Some(g) = grad {
                for (b, v) in buf.data_mut().iter_mut().zip(g) {
                    *b += v;
                }
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Global ℓ2 norm of all populated gradients.
    pub fn grad_norm(&self) -> f64 {
        let sq: f64 = self
            .params
            .iter()
            .filter_map(|p| p.grad.as_ref())
            .flat_map(|g| g.data().iter())
            .map(|v| v * v)
            .sum();
        libm::sqrt(sq)
    }

    /// Scales gradients so their global norm does not exceed `max_norm`.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for g in self.params.iter_mut().filter_map(|p| p.grad.as_mut()) {
                g.data_mut().iter_mut().for_each(|v| *v *= s);
            }
        }
        norm
    }

    /// One plain SGD step with L2 weight decay: `p ← p − lr·(grad + l2·p)`.
    /// Gradients are cleared afterwards.
    pub fn sgd_step(&mut self, lr: f64, l2: f64) -> Result<()> {
        if let Some(p) = self
            .params
            .iter()
            .find(|p| p.requires_grad && p.grad.is_none())
        {
            return Err(Error::State(format!("parameter `{}` has no gradient", p.name)));
        }
        for p in self.params.iter_mut().filter(|p| p.requires_grad) {
            let grad = p.grad.take().expect("checked above");
            for (w, g) in p.value.data_mut().iter_mut().zip(grad.data()) {
                *w -= lr * (g + l2 * *w);
            }
        }
        Ok(())
    }
}

/// Per-parameter gradients produced by a backward pass, indexed by [`ParamId`].
#[derive(Clone, Debug, Default)]
pub struct Gradients(pub(crate) Vec<Option<Vec<f64>>>);

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        self.0.get(id.0).and_then(|g| g.as_deref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn store_with(value: f64) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::full(&[1], value)).unwrap();
        (s, id)
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let (mut s, id) = store_with(0.7);
        s.accumulate(Gradients(vec![None]));
        s.sgd_step(0.1, 0.0).unwrap();
        assert_eq!(s.value(id).data(), &[0.7]);
    }

    #[test]
    fn unit_gradient_step() {
        let (mut s, id) = store_with(1.0);
        s.accumulate(Gradients(vec![Some(vec![1.0])]));
        s.sgd_step(0.1, 0.0).unwrap();
        assert!((s.value(id).data()[0] - 0.9).abs() < 1e-15);
        assert!(s.get(id).grad.is_none());
    }

    #[test]
    fn weight_decay_term() {
        let (mut s, id) = store_with(2.0);
        s.accumulate(Gradients(vec![Some(vec![0.0])]));
        s.sgd_step(0.5, 0.1).unwrap();
        assert!((s.value(id).data()[0] - (2.0 - 0.5 * 0.2)).abs() < 1e-15);
    }

    #[test]
    fn missing_gradient_is_a_state_error() {
        let (mut s, _) = store_with(1.0);
        assert!(matches!(s.sgd_step(0.1, 0.0), Err(Error::State(_))));
    }

    #[test]
    fn duplicate_names_rejected() {
        let (mut s, _) = store_with(1.0);
        assert!(s.add("w", Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut s = ParamStore::new();
        s.add("a", Tensor::zeros(&[1])).unwrap();
        s.add("b", Tensor::zeros(&[1])).unwrap();
        s.accumulate(Gradients(vec![Some(vec![3.0]), Some(vec![4.0])]));
        assert_eq!(s.clip_grad_norm(1.0), 5.0);
        assert!((s.grad_norm() - 1.0).abs() < 1e-12);
    }
}
