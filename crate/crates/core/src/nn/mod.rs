//! Dense feed-forward networks with hand-written reverse-mode gradients,
//! binary cross-entropy, and the Adam optimiser.

mod adam;
mod layer;
mod loss;

pub use adam::Adam;
pub use layer::{sigmoid, Activation, DenseLayer, MlpStack};
pub use loss::{bce, bce_loss, BCE_EPS};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serialised form of one layer. `weights` is row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Serialised form of a stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackRecord {
    pub l2: f64,
    pub layers: Vec<LayerRecord>,
}

impl From<&MlpStack> for StackRecord {
    fn from(stack: &MlpStack) -> Self {
        StackRecord {
            l2: stack.l2_coefficient(),
            layers: stack
                .layers()
                .iter()
                .map(|l| LayerRecord {
                    inputs: l.inputs(),
                    outputs: l.outputs(),
                    activation: l.activation(),
                    weights: l.weights().iter().copied().collect(),
                    bias: l.bias().to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<StackRecord> for MlpStack {
    type Error = Error;

    fn try_from(rec: StackRecord) -> Result<Self> {
        let layers = rec
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let weights = Array2::from_shape_vec((l.outputs, l.inputs), l.weights)
                    .map_err(|e| Error::format(format!("layers[{i}].weights"), e.to_string()))?;
                if l.bias.len() != l.outputs {
                    return Err(Error::format(
                        format!("layers[{i}].bias"),
                        format!("expected {} entries, found {}", l.outputs, l.bias.len()),
                    ));
                }
                DenseLayer::new(weights, Array1::from(l.bias), l.activation)
            })
            .collect::<Result<Vec<_>>>()?;
        MlpStack::from_layers(layers, rec.l2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn stack_record_roundtrip_is_exact() {
        let mut r = rng::seeded(9, 0);
        let stack = MlpStack::glorot(
            4,
            &[
                (5, Activation::LeakyRelu { alpha: 0.3 }),
                (2, Activation::Sigmoid),
            ],
            0.01,
            &mut r,
        )
        .unwrap();
        let json = serde_json::to_string(&StackRecord::from(&stack)).unwrap();
        let back: StackRecord = serde_json::from_str(&json).unwrap();
        let restored = MlpStack::try_from(back).unwrap();
        assert_eq!(restored, stack);
    }

    #[test]
    fn malformed_record_names_field() {
        let rec = StackRecord {
            l2: 0.0,
            layers: vec![LayerRecord {
                inputs: 2,
                outputs: 2,
                activation: Activation::Relu,
                weights: vec![0.0; 3],
                bias: vec![0.0; 2],
            }],
        };
        let err = MlpStack::try_from(rec).unwrap_err().to_string();
        assert!(err.contains("layers[0].weights"), "{err}");
    }
}
