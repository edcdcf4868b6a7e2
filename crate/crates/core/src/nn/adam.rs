use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::MlpStack;

/// Adam with bias-corrected moment estimates.
///
/// Moment buffers are allocated lazily, one per parameter slice, in the order
/// the slices are passed to [`Adam::step`]. The same optimiser must therefore
/// always be stepped with the same parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, slots: &mut [(&mut [f64], &[f64])]) -> Result<()> {
        if self.first.is_empty() {
            self.first = slots.iter().map(|(p, _)| vec![0.0; p.len()]).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != slots.len()
            || slots
                .iter()
                .zip(&self.first)
                .any(|((p, g), m)| p.len() != m.len() || g.len() != m.len())
        {
            return Err(Error::Dimension(
                "parameter slots do not match the optimiser state".into(),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((params, grads), m), v) in slots
            .iter_mut()
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            for i in 0..params.len() {
                let g = grads[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }

    /// Steps the concatenated parameters of several stacks, using the
    /// gradients currently held in their buffers.
    pub fn step_stacks(&mut self, stacks: &mut [&mut MlpStack]) -> Result<()> {
        let mut slots: Vec<(&mut [f64], &[f64])> = Vec::new();
        for s in stacks.iter_mut() {
            slots.extend(s.params_and_grads());
        }
        self.step(&mut slots)
    }
}
