use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    AdamW {
        config: AdamWConfig,
        step: u64,
        m: Vec<f64>,
        v: Vec<f64>,
    },
}

/// Update rule plus its per-parameter state for one flat parameter buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub kind: OptimizerKind,
}

impl OptimizerState {
    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            kind: OptimizerKind::Sgd,
        }
    }

    pub fn adamw(learning_rate: f64, config: AdamWConfig, n_params: usize) -> Self {
        Self {
            learning_rate,
            kind: OptimizerKind::AdamW {
                config,
                step: 0,
                m: vec![0.0; n_params],
                v: vec![0.0; n_params],
            },
        }
    }

    pub fn step_count(&self) -> u64 {
        match &self.kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::AdamW { step, .. } => *step,
        }
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::DimensionMismatch {
                expected: params.len(),
                got: grads.len(),
            });
        }
        let lr = self.learning_rate;
        match &mut self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::AdamW { config, step, m, v } => {
                if m.len() != params.len() {
                    return Err(Error::DimensionMismatch {
                        expected: m.len(),
                        got: params.len(),
                    });
                }
                *step += 1;
                let t = *step as i32;
                let c1 = 1.0 - libm::pow(config.beta1, f64::from(t));
                let c2 = 1.0 - libm::pow(config.beta2, f64::from(t));
                for i in 0..params.len() {
                    let g = grads[i];
                    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
                    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    params[i] -= lr * config.weight_decay * params[i];
                    params[i] -= lr * m_hat / (libm::sqrt(v_hat) + config.epsilon);
                }
            }
        }
        Ok(())
    }
}
