//! AdamW with decoupled weight decay.

use crate::error::{Error, Result};
use crate::numerics::{ParamId, ParamStore, Tensor};

/// First/second moment state plus the shared step counter.
///
/// Moments are kept for every parameter in the store; a step only advances
/// the parameters it is given, so a frozen subset never moves.
pub struct AdamW {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamW {
    pub fn new(
        store: &ParamStore,
        learning_rate: f64,
        betas: (f64, f64),
        epsilon: f64,
        weight_decay: f64,
    ) -> Self {
        let m = store
            .iter()
            .map(|(_, p)| Tensor::zeros(p.value.shape().to_vec()))
            .collect::<Vec<_>>();
        let v = m.clone();
        Self {
            learning_rate,
            beta1: betas.0,
            beta2: betas.1,
            epsilon,
            weight_decay,
            m,
            v,
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update over `ids`:
    /// `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`, bias-corrected,
    /// then `theta <- theta - lr (m_hat / (sqrt(v_hat) + eps) + wd theta)`.
    /// Gradients of the stepped parameters are zeroed afterwards.
    ///
    /// A non-finite gradient rejects the whole step with every parameter and
    /// moment unchanged.
    pub fn step(&mut self, store: &mut ParamStore, ids: &[ParamId]) -> Result<()> {
        for &id in ids {
            let p = store.get(id);
            if !p.gradient.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient in parameter '{}'; step rejected",
                    p.name
                )));
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for &id in ids {
            let p = store.get_mut(id);
            let m = self.m[id.index()].data_mut();
            let v = self.v[id.index()].data_mut();
            for (((theta, g), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(p.gradient.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *theta -= self.learning_rate
                    * (m_hat / (v_hat.sqrt() + self.epsilon) + self.weight_decay * *theta);
            }
            p.gradient.data_mut().fill(0.0);
        }
        Ok(())
    }
}
