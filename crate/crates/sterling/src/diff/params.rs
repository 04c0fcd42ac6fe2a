//! Named parameter collections with stable iteration order.

use std::collections::HashMap;

use crate::diff::tensor::Tensor;
use crate::scalar::Scalar;

/// Ordered map from parameter name to tensor. Iteration follows insertion
/// order, which fixes the layout of checkpoints and the order of optimizer
/// updates regardless of hashing.
#[derive(Debug, Clone, Default)]
pub struct ParamSet<S> {
    entries: Vec<(String, Tensor<S>)>,
    index: HashMap<String, usize>,
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        ParamSet {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<S>) {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter `{name}`"
        );
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        let i = *self.index.get(name)?;
        Some(&mut self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<S>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    /// Total number of scalar entries across all tensors.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Exponential moving average toward `online`:
    /// `self ← tau·self + (1−tau)·online`, matched by name. Every parameter
    /// in `self` must exist in `online` with the same shape; `online` may
    /// hold extra parameters that are not tracked.
    pub fn ema_update(&mut self, online: &ParamSet<S>, tau: S) {
        let one_minus = S::one() - tau;
        for (name, t) in self.entries.iter_mut() {
            let src = online
                .get(name)
                .unwrap_or_else(|| panic!("ema_update: `{name}` missing from online set"));
            assert_eq!(src.shape(), t.shape(), "ema_update: shape mismatch for `{name}`");
            for (a, &b) in t.data_mut().iter_mut().zip(src.data()) {
                *a = tau * *a + one_minus * b;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iteration_follows_insertion_order() {
        let mut p = ParamSet::<f64>::new();
        p.insert("zz", Tensor::scalar(1.0));
        p.insert("aa", Tensor::scalar(2.0));
        p.insert("mm", Tensor::scalar(3.0));
        let names: Vec<_> = p.names().collect();
        assert_eq!(names, ["zz", "aa", "mm"]);
    }

    #[test]
    fn ema_moves_toward_online() {
        let mut target = ParamSet::<f64>::new();
        target.insert("w", Tensor::filled(1, 2, 0.0));
        let mut online = ParamSet::<f64>::new();
        online.insert("w", Tensor::filled(1, 2, 10.0));
        online.insert("extra", Tensor::scalar(99.0)); // ignored
        target.ema_update(&online, 0.9);
        for &x in target.get("w").unwrap().data() {
            assert!((x - 1.0).abs() < 1e-12);
        }
        assert!(!target.contains("extra"));
    }

    #[test]
    fn ema_at_tau_one_is_identity() {
        let mut target = ParamSet::<f64>::new();
        target.insert("w", Tensor::from_vec(1, 2, vec![0.3, -0.7]));
        let mut online = ParamSet::<f64>::new();
        online.insert("w", Tensor::filled(1, 2, 5.0));
        target.ema_update(&online, 1.0);
        assert_eq!(target.get("w").unwrap().data(), &[0.3, -0.7]);
    }

    #[test]
    #[should_panic(expected = "duplicate parameter")]
    fn duplicate_names_rejected() {
        let mut p = ParamSet::<f64>::new();
        p.insert("w", Tensor::scalar(1.0));
        p.insert("w", Tensor::scalar(2.0));
    }
}
