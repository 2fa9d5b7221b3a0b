//! Fully connected networks with analytic forward and backward passes.
//!
//! A network is a list of layer sizes plus an activation for the hidden
//! layers and one for the output layer. Parameters are a flat tensor list,
//! two tensors per layer: weights `[out, in]` (row-major), then bias `[out]`.
//!
//! The forward pass returns a cache holding every pre- and post-activation
//! value; the backward pass consumes it to produce exact reverse-mode
//! gradients. A fingerprint of the parameter bytes travels with the cache so
//! a stale or foreign cache is rejected instead of silently producing wrong
//! gradients.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::{fingerprint, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HiddenActivation {
    Tanh,
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    Sigmoid,
}

/// Element-wise activation. The ReLU derivative at exactly zero is defined
/// as 0 (the left subgradient).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub(crate) fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative with respect to the pre-activation `z`.
    #[inline]
    pub(crate) fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One affine layer followed by an element-wise activation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LayerDef {
    pub input: usize,
    pub output: usize,
    pub act: Activation,
}

/// Shape of a fully connected network: sizes from input through hidden
/// layers to output, plus the two activation choices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    pub fn new(
        layer_sizes: Vec<usize>,
        hidden_activation: HiddenActivation,
        output_activation: OutputActivation,
    ) -> Result<Self> {
        let spec = MlpSpec {
            layer_sizes,
            hidden_activation,
            output_activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::config(
                "layer_sizes",
                format!("need at least 2 sizes, got {}", self.layer_sizes.len()),
            ));
        }
        if let Some(pos) = self.layer_sizes.iter().position(|&s| s == 0) {
            return Err(Error::config(
                "layer_sizes",
                format!("layer {pos} has size 0"),
            ));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub(crate) fn layers(&self) -> Vec<LayerDef> {
        let hidden = match self.hidden_activation {
            HiddenActivation::Tanh => Activation::Tanh,
            HiddenActivation::Relu => Activation::Relu,
            HiddenActivation::Sigmoid => Activation::Sigmoid,
        };
        let output = match self.output_activation {
            OutputActivation::Identity => Activation::Identity,
            OutputActivation::Sigmoid => Activation::Sigmoid,
        };
        let n = self.layer_sizes.len() - 1;
        (0..n)
            .map(|l| LayerDef {
                input: self.layer_sizes[l],
                output: self.layer_sizes[l + 1],
                act: if l + 1 == n { output } else { hidden },
            })
            .collect()
    }

    /// Expected parameter shapes: weights `[out, in]` then bias `[out]`,
    /// layer by layer.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        layer_param_shapes(&self.layers())
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }

    /// Seeded Glorot-uniform weights (`±sqrt(6 / (fan_in + fan_out))`),
    /// zero biases. Weights are drawn row-major, layer by layer.
    pub fn init_params(&self, seed: u64) -> Vec<Tensor> {
        init_layer_params(&self.layers(), seed)
    }
}

pub(crate) fn layer_param_shapes(layers: &[LayerDef]) -> Vec<Vec<usize>> {
    let mut shapes = Vec::with_capacity(layers.len() * 2);
    for layer in layers {
        shapes.push(vec![layer.output, layer.input]);
        shapes.push(vec![layer.output]);
    }
    shapes
}

pub(crate) fn init_layer_params(layers: &[LayerDef], seed: u64) -> Vec<Tensor> {
    let mut rng = SplitMix64::new(seed);
    let mut params = Vec::with_capacity(layers.len() * 2);
    for layer in layers {
        let scale = (6.0 / (layer.input + layer.output) as f64).sqrt();
        let mut weights = Tensor::zeros(&[layer.output, layer.input]);
        for w in weights.data_mut() {
            *w = rng.next_range(-scale, scale);
        }
        params.push(weights);
        params.push(Tensor::zeros(&[layer.output]));
    }
    params
}

pub(crate) fn check_layer_params(layers: &[LayerDef], params: &[Tensor]) -> Result<()> {
    let shapes = layer_param_shapes(layers);
    if shapes.len() != params.len() {
        return Err(Error::config(
            "params",
            format!("expected {} tensors, got {}", shapes.len(), params.len()),
        ));
    }
    for (i, (shape, param)) in shapes.iter().zip(params).enumerate() {
        if shape.as_slice() != param.shape() {
            let layer = i / 2;
            let kind = if i % 2 == 0 { "weights" } else { "bias" };
            return Err(Error::config(
                format!("layer {layer}"),
                format!("{kind} shape {:?} does not match expected {:?}", param.shape(), shape),
            ));
        }
    }
    Ok(())
}

/// Everything the backward pass needs: the input plus each layer's pre- and
/// post-activation values, stamped with a fingerprint of the parameters
/// that produced them.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub(crate) input: Vec<f64>,
    pub(crate) pre: Vec<Vec<f64>>,
    pub(crate) post: Vec<Vec<f64>>,
    params_fp: u64,
}

/// Cache without the handshake stamp, for internal hot paths that own both
/// sides of the forward/backward pair.
#[derive(Debug, Clone, Default)]
pub(crate) struct LayerCache {
    pub pre: Vec<Vec<f64>>,
    pub post: Vec<Vec<f64>>,
}

impl LayerCache {
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("forward ran")
    }
}

/// Runs the layer stack. `params` layout must already be validated.
pub(crate) fn forward_layers(layers: &[LayerDef], params: &[Tensor], input: &[f64]) -> LayerCache {
    debug_assert_eq!(params.len(), layers.len() * 2);
    let mut cache = LayerCache {
        pre: Vec::with_capacity(layers.len()),
        post: Vec::with_capacity(layers.len()),
    };
    let mut current = input;
    for (l, layer) in layers.iter().enumerate() {
        let weights = params[2 * l].data();
        let bias = params[2 * l + 1].data();
        let mut pre = vec![0.0; layer.output];
        for (j, p) in pre.iter_mut().enumerate() {
            let row = &weights[j * layer.input..(j + 1) * layer.input];
            let mut sum = bias[j];
            for (w, x) in row.iter().zip(current) {
                sum += w * x;
            }
            *p = sum;
        }
        let post: Vec<f64> = pre.iter().map(|&z| layer.act.apply(z)).collect();
        cache.pre.push(pre);
        cache.post.push(post);
        current = cache.post.last().unwrap();
    }
    cache
}

/// Reverse-mode pass. Gradients are accumulated (`+=`) into `param_grads`
/// (same layout as `params`) and `input_grad`; callers zero them first.
/// `out_grad` is the loss gradient with respect to the network output.
pub(crate) fn backward_layers(
    layers: &[LayerDef],
    params: &[Tensor],
    input: &[f64],
    cache: &LayerCache,
    out_grad: &[f64],
    param_grads: &mut [Tensor],
    input_grad: &mut [f64],
) {
    debug_assert_eq!(cache.pre.len(), layers.len());
    let mut grad_post = out_grad.to_vec();
    for (l, layer) in layers.iter().enumerate().rev() {
        let pre = &cache.pre[l];
        // delta = dLoss/d(pre-activation)
        let delta: Vec<f64> = grad_post
            .iter()
            .zip(pre)
            .map(|(&g, &z)| g * layer.act.derivative(z))
            .collect();

        let below: &[f64] = if l == 0 { input } else { &cache.post[l - 1] };
        let weights = params[2 * l].data();
        let dw = param_grads[2 * l].data_mut();
        for (j, &d) in delta.iter().enumerate() {
            let row = &mut dw[j * layer.input..(j + 1) * layer.input];
            for (g, x) in row.iter_mut().zip(below) {
                *g += d * x;
            }
        }
        let db = param_grads[2 * l + 1].data_mut();
        for (g, &d) in db.iter_mut().zip(&delta) {
            *g += d;
        }

        let mut grad_below = vec![0.0; layer.input];
        for (j, &d) in delta.iter().enumerate() {
            let row = &weights[j * layer.input..(j + 1) * layer.input];
            for (g, &w) in grad_below.iter_mut().zip(row) {
                *g += w * d;
            }
        }
        if l == 0 {
            for (g, v) in input_grad.iter_mut().zip(&grad_below) {
                *g += v;
            }
        } else {
            grad_post = grad_below;
        }
    }
}

/// Forward pass over `spec` with shape validation and a cache suitable for
/// [`mlp_backward`].
pub fn mlp_forward(spec: &MlpSpec, params: &[Tensor], input: &Tensor) -> Result<(Tensor, ForwardCache)> {
    spec.validate()?;
    let layers = spec.layers();
    check_layer_params(&layers, params)?;
    if input.len() != spec.input_size() {
        return Err(Error::config(
            "input",
            format!("length {} does not match first layer size {}", input.len(), spec.input_size()),
        ));
    }
    let cache = forward_layers(&layers, params, input.data());
    let output = Tensor::vector(cache.output().to_vec());
    output.check_finite("mlp_forward output")?;
    Ok((
        output,
        ForwardCache {
            input: input.data().to_vec(),
            pre: cache.pre,
            post: cache.post,
            params_fp: fingerprint(params),
        },
    ))
}

/// Exact reverse-mode gradients of the forward map. Returns gradients with
/// the same shapes as `params`, plus the gradient with respect to the input.
pub fn mlp_backward(
    spec: &MlpSpec,
    params: &[Tensor],
    cache: &ForwardCache,
    output_gradient: &Tensor,
) -> Result<(Vec<Tensor>, Tensor)> {
    spec.validate()?;
    let layers = spec.layers();
    check_layer_params(&layers, params)?;
    if cache.pre.len() != layers.len() || cache.input.len() != spec.input_size() {
        return Err(Error::CacheMismatch(format!(
            "cache covers {} layers with input length {}, spec has {} layers with input size {}",
            cache.pre.len(),
            cache.input.len(),
            layers.len(),
            spec.input_size()
        )));
    }
    if cache.params_fp != fingerprint(params) {
        return Err(Error::CacheMismatch(
            "parameter fingerprint does not match the forward pass".to_string(),
        ));
    }
    if output_gradient.len() != spec.output_size() {
        return Err(Error::config(
            "output_gradient",
            format!(
                "length {} does not match last layer size {}",
                output_gradient.len(),
                spec.output_size()
            ),
        ));
    }

    let mut param_grads: Vec<Tensor> =
        spec.param_shapes().iter().map(|s| Tensor::zeros(s)).collect();
    let mut input_grad = vec![0.0; spec.input_size()];
    let layer_cache = LayerCache {
        pre: cache.pre.clone(),
        post: cache.post.clone(),
    };
    backward_layers(
        &layers,
        params,
        &cache.input,
        &layer_cache,
        output_gradient.data(),
        &mut param_grads,
        &mut input_grad,
    );
    Ok((param_grads, Tensor::vector(input_grad)))
}
