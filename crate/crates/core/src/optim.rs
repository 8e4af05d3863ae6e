//! Adam over one parameter group of a [`ParamStore`].

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Result};
use crate::params::{ParamGroup, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr.is_finite()
            && self.lr >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if !ok {
            return Err(invalid!("invalid Adam hyperparameters {self:?}"));
        }
        Ok(())
    }
}

/// Moments for every parameter of one group, created on the first step.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    group: ParamGroup,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, group: ParamGroup) -> Self {
        Self {
            config,
            group,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn group(&self) -> ParamGroup {
        self.group
    }

    /// Applies one update from the `grad` buffers of the group's parameters.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        let params: Vec<_> = store.iter_mut().filter(|p| p.group == self.group).collect();
        if self.t == 0 {
            self.m = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.v = self.m.clone();
        }
        if params.len() != self.m.len() {
            return Err(shape_err!(
                "optimizer tracks {} parameters, store has {}",
                self.m.len(),
                params.len()
            ));
        }
        if let Some(p) = params.iter().zip(&self.m).find(|(p, m)| p.value.len() != m.len() || p.grad.len() != m.len()) {
            return Err(shape_err!("parameter {} changed shape", p.0.name));
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for ((p, m), v) in params.into_iter().zip(&mut self.m).zip(&mut self.v) {
            for (((x, &g), mi), vi) in p.value.data_mut().iter_mut().zip(&p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
