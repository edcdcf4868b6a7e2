use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Element-wise activation applied after the affine map of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    LeakyRelu { alpha: f64 },
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu { alpha } => {
                if x > 0.0 {
                    x
                } else {
                    alpha * x
                }
            }
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative given the pre-activation `x` and the activation output `y`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { alpha } => {
                if x > 0.0 {
                    1.0
                } else {
                    alpha
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer `y = act(x Wᵀ + b)` with `W` stored as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub(crate) weights: Array2<f64>,
    pub(crate) bias: Array1<f64>,
    pub(crate) activation: Activation,
    pub(crate) grad_weights: Array2<f64>,
    pub(crate) grad_bias: Array1<f64>,
}

impl DenseLayer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>, activation: Activation) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(Error::Dimension(format!(
                "weights have {} rows but bias has {} entries",
                weights.nrows(),
                bias.len()
            )));
        }
        if weights.iter().chain(bias.iter()).any(|w| !w.is_finite()) {
            return Err(Error::Domain("layer parameters must be finite".into()));
        }
        let grad_weights = Array2::zeros(weights.raw_dim());
        let grad_bias = Array1::zeros(bias.len());
        Ok(DenseLayer {
            weights,
            bias,
            activation,
            grad_weights,
            grad_bias,
        })
    }

    /// Glorot-uniform weights (limit `sqrt(6 / (in + out))`) and zero bias.
    pub fn glorot(inputs: usize, outputs: usize, activation: Activation, rng: &mut Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = Array2::from_shape_fn((outputs, inputs), |_| {
            (2.0 * rng::uniform(rng) - 1.0) * limit
        });
        DenseLayer::new(weights, Array1::zeros(outputs), activation)
            .expect("shapes are consistent by construction")
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn grad_weights(&self) -> &Array2<f64> {
        &self.grad_weights
    }

    pub fn grad_bias(&self) -> &Array1<f64> {
        &self.grad_bias
    }

    fn affine(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut pre = x.dot(&self.weights.t());
        pre += &self.bias;
        pre
    }
}

#[derive(Debug, Clone)]
struct ForwardCache {
    /// Input of each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Array2<f64>>,
    /// Output of each layer.
    post: Vec<Array2<f64>>,
}

/// A chain of dense layers with an optional L2 penalty `λ Σ ‖W‖²` on the
/// weight matrices (biases are not penalised).
#[derive(Debug, Clone)]
pub struct MlpStack {
    layers: Vec<DenseLayer>,
    l2: f64,
    cache: Option<ForwardCache>,
}

impl PartialEq for MlpStack {
    /// Compares parameters and the L2 coefficient; caches and gradient
    /// buffers are ignored.
    fn eq(&self, other: &Self) -> bool {
        self.l2 == other.l2
            && self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weights == b.weights && a.bias == b.bias && a.activation == b.activation
            })
    }
}

impl MlpStack {
    pub fn from_layers(layers: Vec<DenseLayer>, l2: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a stack needs at least one layer".into()));
        }
        if !(l2 >= 0.0 && l2.is_finite()) {
            return Err(Error::Config(format!(
                "L2 coefficient must be >= 0, got {l2}"
            )));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Dimension(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        Ok(MlpStack {
            layers,
            l2,
            cache: None,
        })
    }

    /// Builds a Glorot-initialised stack: `shape` lists `(units, activation)`
    /// for each layer in order.
    pub fn glorot(
        input_dim: usize,
        shape: &[(usize, Activation)],
        l2: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if input_dim == 0 || shape.iter().any(|(units, _)| *units == 0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        let mut fan_in = input_dim;
        let mut layers = Vec::with_capacity(shape.len());
        for &(units, act) in shape {
            layers.push(DenseLayer::glorot(fan_in, units, act, rng));
            fan_in = units;
        }
        MlpStack::from_layers(layers, l2)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn l2_coefficient(&self) -> f64 {
        self.l2
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {} columns, stack expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Inference pass; does not touch the cache.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        for layer in &self.layers {
            let mut pre = layer.affine(h.view());
            let act = layer.activation;
            pre.mapv_inplace(|v| act.apply(v));
            h = pre;
        }
        Ok(h)
    }

    /// Training pass; stores what [`MlpStack::backward`] needs.
    pub fn forward(&mut self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let n = self.layers.len();
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(n),
            pre: Vec::with_capacity(n),
            post: Vec::with_capacity(n),
        };
        let mut h = x.to_owned();
        for layer in &self.layers {
            let pre = layer.affine(h.view());
            let act = layer.activation;
            let post = pre.mapv(|v| act.apply(v));
            cache.inputs.push(h);
            cache.pre.push(pre);
            h = post.clone();
            cache.post.push(post);
        }
        self.cache = Some(cache);
        Ok(h)
    }

    /// Back-propagates `upstream = ∂L/∂output` through the cached pass.
    ///
    /// Overwrites the gradient buffers with the data gradient plus the L2
    /// term `2λW`, and returns `∂L/∂input`. Consumes the cache.
    pub fn backward(&mut self, upstream: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("backward called without a cached forward pass".into()))?;
        let out_shape = cache.post.last().map(|p| p.dim()).unwrap_or_default();
        if upstream.dim() != out_shape {
            return Err(Error::Dimension(format!(
                "upstream has shape {:?}, output has shape {:?}",
                upstream.dim(),
                out_shape
            )));
        }
        let mut grad = upstream.to_owned();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            let act = layer.activation;
            Zip::from(&mut grad)
                .and(&cache.pre[i])
                .and(&cache.post[i])
                .for_each(|g, &x, &y| *g *= act.derivative(x, y));
            layer.grad_weights = grad.t().dot(&cache.inputs[i]);
            if self.l2 > 0.0 {
                layer.grad_weights.scaled_add(2.0 * self.l2, &layer.weights);
            }
            layer.grad_bias = grad.sum_axis(Axis(0));
            grad = grad.dot(&layer.weights);
        }
        Ok(grad)
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    pub fn zero_grads(&mut self) {
        for layer in &mut self.layers {
            layer.grad_weights.fill(0.0);
            layer.grad_bias.fill(0.0);
        }
    }

    /// `λ Σ ‖W‖²` over all weight matrices.
    pub fn l2_penalty(&self) -> f64 {
        if self.l2 == 0.0 {
            return 0.0;
        }
        self.l2
            * self
                .layers
                .iter()
                .map(|l| l.weights.iter().map(|w| w * w).sum::<f64>())
                .sum::<f64>()
    }

    /// Parameter/gradient slice pairs in a fixed order: for each layer, the
    /// weights then the bias.
    pub fn params_and_grads(&mut self) -> Vec<(&mut [f64], &[f64])> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for layer in &mut self.layers {
            out.push((
                layer.weights.as_slice_mut().expect("standard layout"),
                layer.grad_weights.as_slice().expect("standard layout"),
            ));
            out.push((
                layer.bias.as_slice_mut().expect("standard layout"),
                layer.grad_bias.as_slice().expect("standard layout"),
            ));
        }
        out
    }

    /// All parameters flattened in [`MlpStack::params_and_grads`] order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    /// All gradients flattened in [`MlpStack::params_and_grads`] order.
    pub fn flat_grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend(l.grad_weights.iter());
            out.extend(l.grad_bias.iter());
        }
        out
    }

    /// Overwrites parameters from a flat vector in [`MlpStack::flat_params`]
    /// order.
    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                values.len()
            )));
        }
        let mut it = values.iter();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|w| {
                *w = *it.next().expect("length checked");
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn single(weights: Array2<f64>, act: Activation) -> MlpStack {
        let b = Array1::zeros(weights.nrows());
        MlpStack::from_layers(vec![DenseLayer::new(weights, b, act).unwrap()], 0.0).unwrap()
    }

    #[test]
    fn identity_network() {
        let mut s = single(Array2::eye(3), Activation::Linear);
        let x = array![[1.0, -2.0, 3.5], [0.0, 4.0, -1.0]];
        assert_eq!(s.forward(x.view()).unwrap(), x);
        assert_eq!(s.predict(x.view()).unwrap(), x);
    }

    #[test]
    fn activation_values() {
        let s = single(Array2::eye(1), Activation::LeakyRelu { alpha: 0.3 });
        assert_eq!(s.predict(array![[-1.0]].view()).unwrap()[[0, 0]], -0.3);
        let s = single(Array2::eye(1), Activation::Sigmoid);
        assert_eq!(s.predict(array![[0.0]].view()).unwrap()[[0, 0]], 0.5);
        let s = single(Array2::eye(1), Activation::Relu);
        assert_eq!(s.predict(array![[-2.0]].view()).unwrap()[[0, 0]], 0.0);
    }

    #[test]
    fn shape_errors() {
        let mut s = single(Array2::eye(3), Activation::Linear);
        assert!(matches!(
            s.forward(array![[1.0, 2.0]].view()),
            Err(Error::Dimension(_))
        ));
        let a = DenseLayer::new(Array2::zeros((4, 3)), Array1::zeros(4), Activation::Relu).unwrap();
        let b = DenseLayer::new(Array2::zeros((2, 5)), Array1::zeros(2), Activation::Relu).unwrap();
        assert!(MlpStack::from_layers(vec![a, b], 0.0).is_err());
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let mut s = single(Array2::eye(2), Activation::Linear);
        assert!(matches!(
            s.backward(array![[1.0, 1.0]].view()),
            Err(Error::State(_))
        ));
        s.forward(array![[1.0, 1.0]].view()).unwrap();
        s.backward(array![[1.0, 1.0]].view()).unwrap();
        assert!(matches!(
            s.backward(array![[1.0, 1.0]].view()),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn zero_upstream_leaves_pure_l2_gradient() {
        let mut rng = rng::seeded(4, 0);
        let mut s = MlpStack::glorot(
            3,
            &[(4, Activation::Relu), (2, Activation::Sigmoid)],
            0.01,
            &mut rng,
        )
        .unwrap();
        let x = array![[0.1, 0.2, 0.3]];
        s.forward(x.view()).unwrap();
        s.backward(Array2::zeros((1, 2)).view()).unwrap();
        for l in s.layers() {
            assert_eq!(l.grad_weights(), &(&l.weights * 0.02));
            assert!(l.grad_bias().iter().all(|g| *g == 0.0));
        }
    }

    #[test]
    fn relu_blocks_negative_preactivations() {
        let mut s = single(array![[1.0, 0.0], [0.0, 1.0]], Activation::Relu);
        s.forward(array![[-0.5, 2.0]].view()).unwrap();
        let g = s.backward(array![[1.0, 1.0]].view()).unwrap();
        assert_eq!(g, array![[0.0, 1.0]]);
        assert_eq!(s.layers()[0].grad_bias(), &array![0.0, 1.0]);
    }

    #[test]
    fn flat_params_roundtrip() {
        let mut rng = rng::seeded(1, 0);
        let mut s = MlpStack::glorot(
            2,
            &[(3, Activation::Relu), (1, Activation::Linear)],
            0.0,
            &mut rng,
        )
        .unwrap();
        let p = s.flat_params();
        assert_eq!(p.len(), s.parameter_count());
        let doubled: Vec<f64> = p.iter().map(|v| v * 2.0).collect();
        s.set_flat_params(&doubled).unwrap();
        assert_eq!(s.flat_params(), doubled);
        assert!(s.set_flat_params(&p[1..]).is_err());
    }
}
