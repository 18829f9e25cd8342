use std::fmt;
use std::str::FromStr;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    fn apply_inplace(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 }),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Linear => {}
        }
    }

    /// Multiplies `grad` in place by the activation derivative, expressed in
    /// terms of the post-activation `post`. ReLU uses 0 at 0.
    fn chain(self, grad: &mut Array2<f64>, post: &Array2<f64>) {
        match self {
            Activation::Relu => Zip::from(grad).and(post).for_each(|g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Tanh => Zip::from(grad)
                .and(post)
                .for_each(|g, &a| *g *= 1.0 - a * a),
            Activation::Linear => {}
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::Layout(format!("unknown activation `{other}`"))),
        }
    }
}

/// One dense layer: `y = act(x W^T + b)` with `W` stored `[out x in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    /// `act(x W^T + b)` for a batch of rows.
    fn affine(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = Array2::zeros((x.nrows(), self.out_dim()));
        for mut row in z.rows_mut() {
            row.assign(&self.bias);
        }
        general_mat_mul(1.0, &x, &self.weight.t(), 1.0, &mut z);
        self.activation.apply_inplace(&mut z);
        z
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Parameters of a feedforward network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    layers: Vec<Layer>,
}

/// Per-layer activations recorded by [`NetworkParams::forward`].
///
/// `inputs[k]` is the input to layer `k` (so `inputs[0]` is the network
/// input) and `output` is the final post-activation. Activation derivatives
/// are recovered from post-activations alone.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.output.nrows()
    }

    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Gradients shaped like a [`NetworkParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<LayerGrad>,
}

impl ParamGrads {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        ParamGrads {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect(),
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|g| {
                g.weight.iter().map(|v| v * v).sum::<f64>()
                    + g.bias.iter().map(|v| v * v).sum::<f64>()
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.weight.iter().all(|v| v.is_finite()) && g.bias.iter().all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.layers {
            g.weight.mapv_inplace(|v| v * factor);
            g.bias.mapv_inplace(|v| v * factor);
        }
    }

    /// Rescales so the global L2 norm is at most `max_norm`. Returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }

    /// Flattened view in layer order (weights row-major, then bias).
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|g| g.weight.iter().chain(g.bias.iter()).copied())
            .collect()
    }
}

/// Result of a backward pass.
#[derive(Debug, Clone)]
pub struct GradBundle {
    pub params: ParamGrads,
    pub input: Array2<f64>,
}

/// Builds a network with `layer_sizes.len() - 1` dense layers.
///
/// Weights are drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, layer
/// by layer in row-major order, from a stream seeded with `seed`. Biases start
/// at zero.
pub fn mlp_init(
    layer_sizes: &[usize],
    activations: &[Activation],
    seed: u64,
) -> Result<NetworkParams> {
    if layer_sizes.len() < 2 {
        return Err(Error::Layout(format!(
            "need at least input and output sizes, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::Layout(format!("zero-size layer in {layer_sizes:?}")));
    }
    if activations.len() != layer_sizes.len() - 1 {
        return Err(Error::Layout(format!(
            "{} activations for {} layers",
            activations.len(),
            layer_sizes.len() - 1
        )));
    }
    let mut rng = RngStream::from_seed(seed);
    let layers = layer_sizes
        .windows(2)
        .zip(activations)
        .map(|(dims, &activation)| {
            let (fan_in, fan_out) = (dims[0], dims[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                rng.uniform_range(-bound, bound)
            });
            Layer {
                weight,
                bias: Array1::zeros(fan_out),
                activation,
            }
        })
        .collect();
    Ok(NetworkParams { layers })
}

impl NetworkParams {
    /// Assembles a network from explicit layers, checking the layout invariants.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Layout("empty layer list".into()));
        }
        for (k, layer) in layers.iter().enumerate() {
            if layer.in_dim() == 0 || layer.out_dim() == 0 {
                return Err(Error::Layout(format!("layer {k} has a zero dimension")));
            }
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::Layout(format!(
                    "layer {k}: bias length {} for {} outputs",
                    layer.bias.len(),
                    layer.out_dim()
                )));
            }
            if !layer
                .weight
                .iter()
                .chain(layer.bias.iter())
                .all(|v| v.is_finite())
            {
                return Err(Error::NonFinite("network parameters"));
            }
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::Layout(format!(
                    "layer {k} outputs {} but layer {} expects {}",
                    pair[0].out_dim(),
                    k + 1,
                    pair[1].in_dim()
                )));
            }
        }
        Ok(NetworkParams { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn same_shape(&self, other: &NetworkParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.activation == b.activation)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite()))
    }

    /// Flattened parameters in the same order as [`ParamGrads::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    /// Mutable access to parameter `index` in flattened order.
    pub fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let nw = layer.weight.len();
            if index < nw {
                let cols = layer.weight.ncols();
                return &mut layer.weight[[index / cols, index % cols]];
            }
            index -= nw;
            if index < layer.bias.len() {
                return &mut layer.bias[index];
            }
            index -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }

    fn check_input(&self, input: &ArrayView2<'_, f64>) -> Result<()> {
        if input.ncols() != self.in_dim() {
            return Err(Error::Dimension {
                context: "network input",
                expected: self.in_dim(),
                got: input.ncols(),
            });
        }
        if !input.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        Ok(())
    }

    /// Output only, without recording a cache.
    pub fn predict(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(&input)?;
        let mut x = self.layers[0].affine(input);
        for layer in &self.layers[1..] {
            x = layer.affine(x.view());
        }
        Ok(x)
    }

    pub fn forward(&self, input: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(&input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        inputs.push(input.to_owned());
        for layer in &self.layers[..self.layers.len() - 1] {
            let next = layer.affine(inputs[inputs.len() - 1].view());
            inputs.push(next);
        }
        let last = &self.layers[self.layers.len() - 1];
        let output = last.affine(inputs[inputs.len() - 1].view());
        let cache = ForwardCache {
            inputs,
            output: output.clone(),
        };
        Ok((output, cache))
    }

    fn check_backward(&self, cache: &ForwardCache, output_grads: &Array2<f64>) -> Result<()> {
        if cache.inputs.len() != self.layers.len()
            || cache
                .inputs
                .iter()
                .zip(&self.layers)
                .any(|(x, l)| x.ncols() != l.in_dim())
        {
            return Err(Error::Layout("forward cache does not match network".into()));
        }
        if output_grads.dim() != cache.output.dim() {
            return Err(Error::Dimension {
                context: "output gradient",
                expected: cache.output.len(),
                got: output_grads.len(),
            });
        }
        Ok(())
    }

    /// Reverse-mode pass giving parameter and input gradients of
    /// `sum(output_grads * output)`.
    pub fn backward(&self, cache: &ForwardCache, output_grads: &Array2<f64>) -> Result<GradBundle> {
        self.backward_impl(cache, output_grads, true, true)
            .map(|(params, input)| GradBundle {
                params: params.expect("parameter gradients requested"),
                input,
            })
    }

    /// Input gradients only; skips the weight-gradient products.
    pub fn input_grads(
        &self,
        cache: &ForwardCache,
        output_grads: &Array2<f64>,
    ) -> Result<Array2<f64>> {
        self.backward_impl(cache, output_grads, false, true)
            .map(|(_, input)| input)
    }

    /// Parameter gradients only; skips the product for the input gradient.
    pub fn param_grads(
        &self,
        cache: &ForwardCache,
        output_grads: &Array2<f64>,
    ) -> Result<ParamGrads> {
        self.backward_impl(cache, output_grads, true, false)
            .map(|(params, _)| params.expect("parameter gradients requested"))
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache,
        output_grads: &Array2<f64>,
        want_params: bool,
        want_input: bool,
    ) -> Result<(Option<ParamGrads>, Array2<f64>)> {
        self.check_backward(cache, output_grads)?;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = output_grads.clone();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let post = if k + 1 < self.layers.len() {
                &cache.inputs[k + 1]
            } else {
                &cache.output
            };
            layer.activation.chain(&mut delta, post);
            if want_params {
                grads.push(LayerGrad {
                    weight: delta.t().dot(&cache.inputs[k]),
                    bias: delta.sum_axis(Axis(0)),
                });
            }
            if k > 0 || want_input {
                delta = delta.dot(&layer.weight);
            }
        }
        let params = want_params.then(|| {
            grads.reverse();
            ParamGrads { layers: grads }
        });
        Ok((params, delta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn linear(weight: Array2<f64>, bias: Array1<f64>) -> NetworkParams {
        NetworkParams::from_layers(vec![Layer {
            weight,
            bias,
            activation: Activation::Linear,
        }])
        .unwrap()
    }

    #[test]
    fn init_shapes_and_zero_bias() {
        let net = mlp_init(&[3, 2], &[Activation::Linear], 11).unwrap();
        assert_eq!(net.layers()[0].weight.dim(), (2, 3));
        assert_eq!(net.layers()[0].bias, Array1::<f64>::zeros(2));
        assert_eq!(net, mlp_init(&[3, 2], &[Activation::Linear], 11).unwrap());
        let bound = 1.0 / 3f64.sqrt();
        assert!(net.layers()[0].weight.iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn init_chains_default_sizes() {
        let acts = [Activation::Relu, Activation::Relu, Activation::Linear];
        let net = mlp_init(&[2, 400, 300, 1], &acts, 0).unwrap();
        let dims: Vec<_> = net.layers().iter().map(|l| l.weight.dim()).collect();
        assert_eq!(dims, vec![(400, 2), (300, 400), (1, 300)]);
    }

    #[test]
    fn init_rejects_bad_layouts() {
        assert!(mlp_init(&[], &[], 0).is_err());
        assert!(mlp_init(&[3], &[], 0).is_err());
        assert!(mlp_init(&[3, 0, 1], &[Activation::Relu, Activation::Linear], 0).is_err());
        assert!(mlp_init(&[3, 1], &[], 0).is_err());
    }

    #[test]
    fn zero_weights_emit_bias() {
        let net = linear(Array2::zeros((2, 3)), array![1.5, -2.0]);
        let out = net.predict(Array2::from_elem((4, 3), 7.0).view()).unwrap();
        for row in out.rows() {
            assert_eq!(row.to_vec(), vec![1.5, -2.0]);
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let net = linear(Array2::eye(3), Array1::zeros(3));
        let x = array![[1.0, -2.0, 3.5], [0.0, 4.0, -1.0]];
        assert_eq!(net.predict(x.view()).unwrap(), x);
    }

    #[test]
    fn linear_input_grad_is_column_sums() {
        let w = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let net = linear(w, Array1::zeros(2));
        let (_, cache) = net.forward(array![[0.3, 0.1, -0.2]].view()).unwrap();
        let g = net.backward(&cache, &Array2::ones((1, 2))).unwrap();
        assert_eq!(g.input, array![[5.0, 7.0, 9.0]]);
    }

    #[test]
    fn relu_derivative_at_zero_is_zero() {
        let net = NetworkParams::from_layers(vec![Layer {
            weight: array![[1.0]],
            bias: array![0.0],
            activation: Activation::Relu,
        }])
        .unwrap();
        let (_, cache) = net.forward(array![[0.0]].view()).unwrap();
        let g = net.backward(&cache, &array![[1.0]]).unwrap();
        assert_eq!(g.input[[0, 0]], 0.0);
        assert_eq!(g.params.layers[0].weight[[0, 0]], 0.0);
    }

    #[test]
    fn dimension_errors() {
        let net = mlp_init(&[3, 2], &[Activation::Linear], 0).unwrap();
        assert!(matches!(
            net.forward(Array2::zeros((1, 4)).view()),
            Err(Error::Dimension { .. })
        ));
        let (_, cache) = net.forward(Array2::zeros((1, 3)).view()).unwrap();
        assert!(net.backward(&cache, &Array2::zeros((1, 3))).is_err());
        let other = mlp_init(&[5, 2], &[Activation::Linear], 0).unwrap();
        assert!(other.backward(&cache, &Array2::zeros((1, 2))).is_err());
    }

    #[test]
    fn from_layers_rejects_broken_chain() {
        let a = Layer {
            weight: Array2::zeros((2, 3)),
            bias: Array1::zeros(2),
            activation: Activation::Relu,
        };
        let b = Layer {
            weight: Array2::zeros((1, 4)),
            bias: Array1::zeros(1),
            activation: Activation::Linear,
        };
        assert!(NetworkParams::from_layers(vec![a, b]).is_err());
        assert!(NetworkParams::from_layers(vec![]).is_err());
    }

    #[test]
    fn clip_global_norm_caps_norm() {
        let net = mlp_init(&[2, 2], &[Activation::Linear], 0).unwrap();
        let mut g = ParamGrads::zeros_like(&net);
        g.layers[0].weight.fill(10.0);
        let before = g.clip_global_norm(1.0);
        assert!((before - 20.0).abs() < 1e-12);
        assert!((g.global_norm() - 1.0).abs() < 1e-12);
    }
}
