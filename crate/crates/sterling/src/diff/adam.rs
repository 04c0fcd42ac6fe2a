//! Adam with bias correction.

use std::collections::HashMap;

use crate::diff::params::ParamSet;
use crate::diff::tensor::Tensor;
use crate::diff::DiffError;
use crate::scalar::Scalar;

/// Adam optimizer state, aligned with the parameter set it was created from.
/// First and second moments are kept per parameter so they can be serialized
/// for exact training resumption.
#[derive(Debug, Clone)]
pub struct Adam<S> {
    pub lr: S,
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
    step: u64,
    moments: Vec<(String, Tensor<S>, Tensor<S>)>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(params: &ParamSet<S>, lr: S) -> Self {
        let moments = params
            .iter()
            .map(|(n, t)| {
                (
                    n.to_string(),
                    Tensor::zeros(t.rows(), t.cols()),
                    Tensor::zeros(t.rows(), t.cols()),
                )
            })
            .collect();
        Adam {
            lr,
            beta1: S::from_f64(0.9),
            beta2: S::from_f64(0.999),
            eps: S::from_f64(1e-8),
            step: 0,
            moments,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    /// `(name, first moment, second moment)` in parameter order.
    pub fn moments(&self) -> impl Iterator<Item = (&str, &Tensor<S>, &Tensor<S>)> {
        self.moments.iter().map(|(n, m, v)| (n.as_str(), m, v))
    }

    /// Overwrite the stored moments for `name`; returns false if unknown.
    pub fn set_moments(&mut self, name: &str, m: Tensor<S>, v: Tensor<S>) -> bool {
        for (n, em, ev) in self.moments.iter_mut() {
            if n == name {
                assert_eq!(em.shape(), m.shape(), "moment shape mismatch for `{name}`");
                *em = m;
                *ev = v;
                return true;
            }
        }
        false
    }

    /// One optimizer step. Parameters without an entry in `grads` are treated
    /// as having a zero gradient (their moments still decay). Fails without
    /// touching any state if a gradient contains a non-finite value.
    pub fn apply(
        &mut self,
        params: &mut ParamSet<S>,
        grads: &HashMap<String, Tensor<S>>,
    ) -> Result<(), DiffError> {
        for (name, g) in grads {
            if !g.all_finite() {
                return Err(DiffError::NonFiniteGrad { name: name.clone() });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = S::one() - self.beta1.powi(t);
        let bc2 = S::one() - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        let one = S::one();

        for (name, m, v) in self.moments.iter_mut() {
            let p = params
                .get_mut(name)
                .unwrap_or_else(|| panic!("optimizer tracks unknown parameter `{name}`"));
            let zero_grad;
            let g = match grads.get(name) {
                Some(g) => {
                    assert_eq!(g.shape(), p.shape(), "gradient shape mismatch for `{name}`");
                    g
                }
                None => {
                    zero_grad = Tensor::zeros(p.rows(), p.cols());
                    &zero_grad
                }
            };
            let pd = p.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                let gi = g.data()[i];
                md[i] = b1 * md[i] + (one - b1) * gi;
                vd[i] = b2 * vd[i] + (one - b2) * gi * gi;
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pd[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_grad(p: &ParamSet<f64>) -> HashMap<String, Tensor<f64>> {
        // d/dx ½x² = x
        let mut g = HashMap::new();
        g.insert("x".to_string(), p.get("x").unwrap().clone());
        g
    }

    #[test]
    fn descends_a_quadratic() {
        let mut p = ParamSet::new();
        p.insert("x", Tensor::from_vec(1, 2, vec![5.0, -3.0]));
        let mut opt = Adam::new(&p, 0.1);
        for _ in 0..500 {
            let g = quadratic_grad(&p);
            opt.apply(&mut p, &g).unwrap();
        }
        for &x in p.get("x").unwrap().data() {
            assert!(x.abs() < 1e-2, "did not converge: {x}");
        }
        assert_eq!(opt.step_count(), 500);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // With bias correction the first update is lr·g/(|g|+eps) ≈ ±lr.
        let mut p = ParamSet::<f64>::new();
        p.insert("x", Tensor::from_vec(1, 2, vec![1.0, -2.0]));
        let mut opt = Adam::new(&p, 0.01);
        let mut g = HashMap::new();
        g.insert("x".to_string(), Tensor::from_vec(1, 2, vec![3.0, -4.0]));
        opt.apply(&mut p, &g).unwrap();
        let x = p.get("x").unwrap();
        assert!((x.get(0, 0) - (1.0 - 0.01)).abs() < 1e-6);
        assert!((x.get(0, 1) - (-2.0 + 0.01)).abs() < 1e-6);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_mutation() {
        let mut p = ParamSet::new();
        p.insert("x", Tensor::scalar(1.0));
        let mut opt = Adam::new(&p, 0.1);
        let mut g = HashMap::new();
        g.insert("x".to_string(), Tensor::scalar(f64::NAN));
        let err = opt.apply(&mut p, &g).unwrap_err();
        assert!(err.to_string().contains("x"));
        assert_eq!(p.get("x").unwrap().item(), 1.0);
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn missing_gradient_decays_moments() {
        let mut p = ParamSet::new();
        p.insert("x", Tensor::scalar(1.0));
        let mut opt = Adam::new(&p, 0.1);
        let mut g = HashMap::new();
        g.insert("x".to_string(), Tensor::scalar(1.0));
        opt.apply(&mut p, &g).unwrap();
        let before = p.get("x").unwrap().item();
        // No gradient now: momentum alone keeps moving the parameter.
        opt.apply(&mut p, &HashMap::new()).unwrap();
        let after = p.get("x").unwrap().item();
        assert!(after < before);
    }
}
