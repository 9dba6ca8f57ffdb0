//! SGD with momentum and decoupled-by-kind weight decay.

use crate::error::{Error, Result};
use crate::netgraph::layers::ParamStore;
use crate::tensor::{Scalar, Tensor};

/// Per-parameter velocity buffers, aligned with the parameter store.
pub struct SgdState<E: Scalar> {
    velocity: Vec<Tensor<E>>,
}

impl<E: Scalar> SgdState<E> {
    pub fn new(params: &ParamStore<E>) -> Self {
        SgdState { velocity: params.slots.iter().map(|s| Tensor::zeros(s.value.shape)).collect() }
    }

    /// v <- momentum * v + grad + weight_decay * param; param <- param - lr * v.
    /// Weight decay is skipped for biases and batch-norm affine parameters.
    pub fn step(
        &mut self,
        params: &mut ParamStore<E>,
        grads: &[Option<Tensor<E>>],
        lr: f64,
        momentum: f64,
        weight_decay: f64,
    ) -> Result<()> {
        if grads.len() != params.slots.len() {
            return Err(Error::internal(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.slots.len()
            )));
        }
        let lr = E::from_f64(lr);
        let mom = E::from_f64(momentum);
        for ((slot, vel), grad) in params.slots.iter_mut().zip(&mut self.velocity).zip(grads) {
            let Some(g) = grad else { continue };
            if g.shape != slot.value.shape {
                return Err(Error::internal(format!(
                    "gradient shape {:?} for parameter '{}' of shape {:?}",
                    g.shape, slot.name, slot.value.shape
                )));
            }
            let wd = if slot.kind.decays() { E::from_f64(weight_decay) } else { E::ZERO };
            for ((p, v), &gv) in slot.value.data.iter_mut().zip(&mut vel.data).zip(&g.data) {
                *v = mom * *v + gv + wd * *p;
                *p = *p - lr * *v;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::layers::ParamKind;

    fn one_param(v: f64) -> ParamStore<f64> {
        let mut p = ParamStore::new();
        p.add("x".into(), Tensor::scalar(v), ParamKind::Weight);
        p
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = one_param(1.5);
        let mut s = SgdState::new(&p);
        s.step(&mut p, &[Some(Tensor::scalar(0.0))], 0.1, 0.0, 0.0).unwrap();
        assert_eq!(p.slots[0].value.data[0], 1.5);
    }

    #[test]
    fn quadratic_without_momentum_contracts_geometrically() {
        // loss = x^2 / 2, gradient = x: x <- 0.9 x at lr 0.1.
        let mut p = one_param(1.0);
        let mut s = SgdState::new(&p);
        for k in 1..=20 {
            let g = p.slots[0].value.data[0];
            s.step(&mut p, &[Some(Tensor::scalar(g))], 0.1, 0.0, 0.0).unwrap();
            let expect = 0.9f64.powi(k);
            assert!((p.slots[0].value.data[0] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn momentum_matches_two_term_recurrence() {
        // Same quadratic with momentum 0.9; compare against the recurrence
        // v_k = 0.9 v_{k-1} + x_{k-1}; x_k = x_{k-1} - lr v_k.
        let mut p = one_param(1.0);
        let mut s = SgdState::new(&p);
        let (mut x_ref, mut v_ref) = (1.0f64, 0.0f64);
        for _ in 0..50 {
            let g = p.slots[0].value.data[0];
            s.step(&mut p, &[Some(Tensor::scalar(g))], 0.05, 0.9, 0.0).unwrap();
            v_ref = 0.9 * v_ref + x_ref;
            x_ref -= 0.05 * v_ref;
            assert!((p.slots[0].value.data[0] - x_ref).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_decay_skips_bias_and_bn() {
        let mut p = ParamStore::new();
        p.add("w".into(), Tensor::scalar(1.0), ParamKind::Weight);
        p.add("b".into(), Tensor::scalar(1.0), ParamKind::Bias);
        p.add("g".into(), Tensor::scalar(1.0), ParamKind::BnGamma);
        let mut s = SgdState::new(&p);
        let zero = || Some(Tensor::scalar(0.0));
        s.step(&mut p, &[zero(), zero(), zero()], 1.0, 0.0, 0.1).unwrap();
        assert!((p.slots[0].value.data[0] - 0.9).abs() < 1e-12);
        assert_eq!(p.slots[1].value.data[0], 1.0);
        assert_eq!(p.slots[2].value.data[0], 1.0);
    }
}
