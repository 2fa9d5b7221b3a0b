//! Variational autoencoder: Gaussian encoder, sigmoid decoder, analytic KL,
//! reparameterized loss, and the minibatch training loop.
//!
//! The encoder is a tanh trunk over the flattened pixels followed by two
//! identity-activation heads emitting the posterior mean and log-variance.
//! The decoder is a tanh stack from the latent vector back to pixel space
//! with a sigmoid output layer, so decoded pixels always lie in (0, 1).
//!
//! Sampling uses `z = mu + exp(log_var / 2) * eps` with `eps ~ N(0, I)`, so
//! the per-sample objective
//!
//! ```text
//! loss(x) = KL(q(z|x) || N(0, I)) - mean_l log p(x | z_l)
//! ```
//!
//! is an exact, differentiable function of all parameters, and its analytic
//! gradient is checked against central differences in the test suites.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::mlp::{
    backward_layers, check_layer_params, forward_layers, layer_param_shapes, Activation, LayerCache,
    LayerDef,
};
use crate::optim::{rmsprop_step, RmspropSettings, RmspropState};
use crate::planner::Decoder;
use crate::rng::SplitMix64;
use crate::tensor::{fingerprint, Tensor};

pub const LN_TWO_PI: f64 = 1.8378770664093453;

/// Pixel likelihood of the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    /// `log p(x|z) = -||x - x_hat||^2 / 2 - (D/2) ln(2 pi)`.
    GaussianUnitVariance,
    /// Pixelwise cross-entropy with `x_hat` clamped to `[1e-7, 1 - 1e-7]`.
    Bernoulli,
}

impl Likelihood {
    pub fn code(self) -> u32 {
        match self {
            Likelihood::GaussianUnitVariance => 0,
            Likelihood::Bernoulli => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Likelihood::GaussianUnitVariance),
            1 => Some(Likelihood::Bernoulli),
            _ => None,
        }
    }
}

const BERNOULLI_CLAMP: f64 = 1e-7;

/// Model shape: latent width, image dimensions, hidden layer sizes, and the
/// decoder likelihood.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub channels: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub likelihood: Likelihood,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            latent_dim: 4,
            image_height: 16,
            image_width: 16,
            channels: 3,
            encoder_hidden: vec![64],
            decoder_hidden: vec![64],
            likelihood: Likelihood::GaussianUnitVariance,
        }
    }
}

impl ModelConfig {
    pub fn pixel_count(&self) -> usize {
        self.image_height * self.image_width * self.channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::config("latent_dim", "must be at least 1"));
        }
        if self.image_height == 0 {
            return Err(Error::config("image_height", "must be at least 1"));
        }
        if self.image_width == 0 {
            return Err(Error::config("image_width", "must be at least 1"));
        }
        if self.channels == 0 {
            return Err(Error::config("channels", "must be at least 1"));
        }
        if let Some(pos) = self.encoder_hidden.iter().position(|&s| s == 0) {
            return Err(Error::config(
                "encoder_hidden",
                format!("layer {pos} has size 0"),
            ));
        }
        if let Some(pos) = self.decoder_hidden.iter().position(|&s| s == 0) {
            return Err(Error::config(
                "decoder_hidden",
                format!("layer {pos} has size 0"),
            ));
        }
        Ok(())
    }

    fn trunk_output(&self) -> usize {
        *self.encoder_hidden.last().unwrap_or(&self.pixel_count())
    }

    /// Encoder trunk: tanh layers over `[pixels, hidden...]`. Empty when
    /// there are no hidden layers (heads then read pixels directly).
    pub(crate) fn trunk_layers(&self) -> Vec<LayerDef> {
        let mut sizes = vec![self.pixel_count()];
        sizes.extend(&self.encoder_hidden);
        (0..sizes.len() - 1)
            .map(|l| LayerDef {
                input: sizes[l],
                output: sizes[l + 1],
                act: Activation::Tanh,
            })
            .collect()
    }

    pub(crate) fn head_layer(&self) -> LayerDef {
        LayerDef {
            input: self.trunk_output(),
            output: self.latent_dim,
            act: Activation::Identity,
        }
    }

    /// Decoder: tanh layers over `[latent, hidden...]`, then a sigmoid
    /// output layer back to pixel space.
    pub(crate) fn decoder_layers(&self) -> Vec<LayerDef> {
        let mut sizes = vec![self.latent_dim];
        sizes.extend(&self.decoder_hidden);
        sizes.push(self.pixel_count());
        let n = sizes.len() - 1;
        (0..n)
            .map(|l| LayerDef {
                input: sizes[l],
                output: sizes[l + 1],
                act: if l + 1 == n {
                    Activation::Sigmoid
                } else {
                    Activation::Tanh
                },
            })
            .collect()
    }

    /// All layers in parameter-tensor order: trunk, mu head, log-var head,
    /// decoder.
    pub(crate) fn all_layers(&self) -> Vec<LayerDef> {
        let mut layers = self.trunk_layers();
        layers.push(self.head_layer());
        layers.push(self.head_layer());
        layers.extend(self.decoder_layers());
        layers
    }

    pub fn param_count(&self) -> usize {
        self.all_layers()
            .iter()
            .map(|l| l.output * (l.input + 1))
            .sum()
    }
}

/// All encoder and decoder weights, stored as a flat tensor list in a fixed
/// order: trunk layers, mu head, log-var head, decoder layers; each layer as
/// row-major weights then bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    /// Seeded Glorot-uniform initialization, biases zero. One SplitMix64
    /// stream drives all layers in tensor order.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SplitMix64::new(seed);
        let mut tensors = Vec::new();
        for layer in config.all_layers() {
            let scale = (6.0 / (layer.input + layer.output) as f64).sqrt();
            let mut weights = Tensor::zeros(&[layer.output, layer.input]);
            for w in weights.data_mut() {
                *w = rng.next_range(-scale, scale);
            }
            tensors.push(weights);
            tensors.push(Tensor::zeros(&[layer.output]));
        }
        Ok(ModelParams { config, tensors })
    }

    /// Wraps an existing tensor list (for checkpoint loading); shapes must
    /// match the config exactly.
    pub fn from_tensors(config: ModelConfig, tensors: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        check_layer_params(&config.all_layers(), &tensors)?;
        Ok(ModelParams { config, tensors })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn checksum(&self) -> u64 {
        fingerprint(&self.tensors)
    }

    fn trunk_tensor_count(&self) -> usize {
        self.config.trunk_layers().len() * 2
    }

    pub(crate) fn trunk_params(&self) -> &[Tensor] {
        &self.tensors[..self.trunk_tensor_count()]
    }

    pub(crate) fn mu_head_params(&self) -> &[Tensor] {
        let t = self.trunk_tensor_count();
        &self.tensors[t..t + 2]
    }

    pub(crate) fn logvar_head_params(&self) -> &[Tensor] {
        let t = self.trunk_tensor_count();
        &self.tensors[t + 2..t + 4]
    }

    pub(crate) fn decoder_params(&self) -> &[Tensor] {
        let t = self.trunk_tensor_count();
        &self.tensors[t + 4..]
    }

    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect()
    }
}

/// Diagonal Gaussian posterior `q(z|x)`: a mean and a log-variance per
/// latent dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl GaussianPosterior {
    pub fn new(mu: Vec<f64>, log_var: Vec<f64>) -> Self {
        assert_eq!(mu.len(), log_var.len(), "mu and log_var lengths differ");
        GaussianPosterior { mu, log_var }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.log_var.iter().map(|&lv| (0.5 * lv).exp()).collect()
    }
}

fn check_image_shape(config: &ModelConfig, x: &Image) -> Result<()> {
    if x.height() != config.image_height
        || x.width() != config.image_width
        || x.channels() != config.channels
    {
        return Err(Error::config(
            "image",
            format!(
                "shape {}x{}x{} does not match model {}x{}x{}",
                x.height(),
                x.width(),
                x.channels(),
                config.image_height,
                config.image_width,
                config.channels
            ),
        ));
    }
    Ok(())
}

struct EncodeCaches {
    trunk: LayerCache,
    mu_pre: Vec<f64>,
    logvar_pre: Vec<f64>,
}

fn encode_internal(params: &ModelParams, pixels: &[f64]) -> (GaussianPosterior, EncodeCaches) {
    let trunk_layers = params.config.trunk_layers();
    let trunk = forward_layers(&trunk_layers, params.trunk_params(), pixels);
    let features: &[f64] = if trunk_layers.is_empty() {
        pixels
    } else {
        trunk.output()
    };
    let head = params.config.head_layer();
    let mu_cache = forward_layers(
        std::slice::from_ref(&head),
        params.mu_head_params(),
        features,
    );
    let lv_cache = forward_layers(
        std::slice::from_ref(&head),
        params.logvar_head_params(),
        features,
    );
    let mu = mu_cache.output().to_vec();
    let log_var = lv_cache.output().to_vec();
    (
        GaussianPosterior::new(mu.clone(), log_var.clone()),
        EncodeCaches {
            trunk,
            mu_pre: mu,
            logvar_pre: log_var,
        },
    )
}

/// Runs the recognition model: `x -> (mu, log sigma^2)`.
pub fn encode(params: &ModelParams, x: &Image) -> Result<GaussianPosterior> {
    check_image_shape(&params.config, x)?;
    Ok(encode_internal(params, x.data()).0)
}

/// Reparameterized draw: `z_j = mu_j + exp(log_var_j / 2) * eps_j`.
pub fn sample_latent(post: &GaussianPosterior, eps: &[f64]) -> Vec<f64> {
    assert_eq!(eps.len(), post.dim(), "eps length does not match latent dim");
    post.mu
        .iter()
        .zip(&post.log_var)
        .zip(eps)
        .map(|((&mu, &lv), &e)| mu + (0.5 * lv).exp() * e)
        .collect()
}

fn decode_internal(params: &ModelParams, z: &[f64]) -> LayerCache {
    forward_layers(&params.config.decoder_layers(), params.decoder_params(), z)
}

/// Runs the generative model: `z -> image`, every pixel in (0, 1).
pub fn decode(params: &ModelParams, z: &[f64]) -> Image {
    assert_eq!(
        z.len(),
        params.config.latent_dim,
        "latent vector length does not match model"
    );
    let cache = decode_internal(params, z);
    Image::from_vec(
        params.config.image_height,
        params.config.image_width,
        params.config.channels,
        cache.output().to_vec(),
    )
    .expect("decoder output has the configured pixel count")
}

/// Analytic `KL(q(z|x) || N(0, I)) = -1/2 sum(1 + log s^2 - mu^2 - s^2)`.
pub fn kl_divergence(post: &GaussianPosterior) -> f64 {
    -0.5 * post
        .mu
        .iter()
        .zip(&post.log_var)
        .map(|(&mu, &lv)| 1.0 + lv - mu * mu - lv.exp())
        .sum::<f64>()
}

/// Log-likelihood of `x` under the decoder output `x_hat`.
pub fn recon_log_likelihood(x: &Image, x_hat: &Image, likelihood: Likelihood) -> f64 {
    assert!(x.same_shape(x_hat), "image shapes differ");
    match likelihood {
        Likelihood::GaussianUnitVariance => {
            let sq: f64 = x
                .data()
                .iter()
                .zip(x_hat.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            -0.5 * sq - 0.5 * x.pixel_count() as f64 * LN_TWO_PI
        }
        Likelihood::Bernoulli => x
            .data()
            .iter()
            .zip(x_hat.data())
            .map(|(&t, &p)| {
                let p = p.clamp(BERNOULLI_CLAMP, 1.0 - BERNOULLI_CLAMP);
                t * p.ln() + (1.0 - t) * (1.0 - p).ln()
            })
            .sum(),
    }
}

/// Derivative of [`recon_log_likelihood`] with respect to `x_hat`.
fn recon_grad_wrt_xhat(x: &[f64], x_hat: &[f64], likelihood: Likelihood, out: &mut [f64]) {
    match likelihood {
        Likelihood::GaussianUnitVariance => {
            for ((g, &t), &p) in out.iter_mut().zip(x).zip(x_hat) {
                *g = t - p;
            }
        }
        Likelihood::Bernoulli => {
            // Outside the clamp the likelihood is flat in x_hat.
            for ((g, &t), &p) in out.iter_mut().zip(x).zip(x_hat) {
                *g = if (BERNOULLI_CLAMP..=1.0 - BERNOULLI_CLAMP).contains(&p) {
                    t / p - (1.0 - t) / (1.0 - p)
                } else {
                    0.0
                };
            }
        }
    }
}

/// Single-datapoint SGVB estimate of the variational lower bound:
/// `-KL + mean_l log p(x | z_l)` with `z_l = mu + sigma * eps_l`.
pub fn elbo_estimate(params: &ModelParams, x: &Image, eps_samples: &[Vec<f64>]) -> Result<f64> {
    check_image_shape(&params.config, x)?;
    if eps_samples.is_empty() {
        return Err(Error::config("eps_samples", "need at least one noise draw"));
    }
    let post = encode_internal(params, x.data()).0;
    let mut recon_sum = 0.0;
    for eps in eps_samples {
        let z = sample_latent(&post, eps);
        let x_hat = decode(params, &z);
        recon_sum += recon_log_likelihood(x, &x_hat, params.config.likelihood);
    }
    Ok(-kl_divergence(&post) + recon_sum / eps_samples.len() as f64)
}

/// Accumulates the gradient of one sample's negative ELBO into `grads`
/// (laid out like `params.tensors()`). Returns the sample loss.
fn sample_loss_and_grads(
    params: &ModelParams,
    x: &Image,
    eps_samples: &[&[f64]],
    grads: &mut [Tensor],
) -> f64 {
    let config = &params.config;
    let latent = config.latent_dim;
    let num_samples = eps_samples.len();
    let trunk_layers = config.trunk_layers();
    let head = config.head_layer();
    let decoder_layers = config.decoder_layers();
    let trunk_t = trunk_layers.len() * 2;

    let (post, caches) = encode_internal(params, x.data());
    let sigma = post.sigma();

    let kl = kl_divergence(&post);
    // d KL / d mu = mu; d KL / d log_var = (exp(log_var) - 1) / 2
    let mut d_mu: Vec<f64> = post.mu.clone();
    let mut d_logvar: Vec<f64> = post.log_var.iter().map(|&lv| 0.5 * (lv.exp() - 1.0)).collect();

    let mut recon_sum = 0.0;
    let mut d_xhat = vec![0.0; config.pixel_count()];
    let (dec_grads, rest) = grads[trunk_t + 4..].split_at_mut(decoder_layers.len() * 2);
    debug_assert!(rest.is_empty());
    for eps in eps_samples {
        let z = sample_latent(&post, eps);
        let dec_cache = decode_internal(params, &z);
        recon_sum +=
            recon_log_likelihood_flat(x.data(), dec_cache.output(), config.likelihood);

        // loss = KL - mean_l recon_l, so d loss / d x_hat = -(1/L) d recon / d x_hat
        recon_grad_wrt_xhat(x.data(), dec_cache.output(), config.likelihood, &mut d_xhat);
        let scale = -1.0 / num_samples as f64;
        for g in d_xhat.iter_mut() {
            *g *= scale;
        }

        let mut d_z = vec![0.0; latent];
        backward_layers(
            &decoder_layers,
            params.decoder_params(),
            &z,
            &dec_cache,
            &d_xhat,
            dec_grads,
            &mut d_z,
        );

        // z = mu + sigma * eps: pass d_z into the posterior parameters.
        for j in 0..latent {
            d_mu[j] += d_z[j];
            d_logvar[j] += d_z[j] * 0.5 * sigma[j] * eps[j];
        }
    }

    // Heads are identity-activation affine layers reading the trunk output.
    let features: Vec<f64> = if trunk_layers.is_empty() {
        x.data().to_vec()
    } else {
        caches.trunk.output().to_vec()
    };
    let mut d_features = vec![0.0; features.len()];
    let head_slice = std::slice::from_ref(&head);
    let mu_cache = LayerCache {
        pre: vec![caches.mu_pre.clone()],
        post: vec![caches.mu_pre.clone()],
    };
    backward_layers(
        head_slice,
        params.mu_head_params(),
        &features,
        &mu_cache,
        &d_mu,
        &mut grads[trunk_t..trunk_t + 2],
        &mut d_features,
    );
    let lv_cache = LayerCache {
        pre: vec![caches.logvar_pre.clone()],
        post: vec![caches.logvar_pre.clone()],
    };
    backward_layers(
        head_slice,
        params.logvar_head_params(),
        &features,
        &lv_cache,
        &d_logvar,
        &mut grads[trunk_t + 2..trunk_t + 4],
        &mut d_features,
    );

    if !trunk_layers.is_empty() {
        let mut d_input = vec![0.0; config.pixel_count()];
        backward_layers(
            &trunk_layers,
            params.trunk_params(),
            x.data(),
            &caches.trunk,
            &d_features,
            &mut grads[..trunk_t],
            &mut d_input,
        );
    }

    kl - recon_sum / num_samples as f64
}

fn recon_log_likelihood_flat(x: &[f64], x_hat: &[f64], likelihood: Likelihood) -> f64 {
    match likelihood {
        Likelihood::GaussianUnitVariance => {
            let sq: f64 = x
                .iter()
                .zip(x_hat)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            -0.5 * sq - 0.5 * x.len() as f64 * LN_TWO_PI
        }
        Likelihood::Bernoulli => x
            .iter()
            .zip(x_hat)
            .map(|(&t, &p)| {
                let p = p.clamp(BERNOULLI_CLAMP, 1.0 - BERNOULLI_CLAMP);
                t * p.ln() + (1.0 - t) * (1.0 - p).ln()
            })
            .sum(),
    }
}

/// Mean negative ELBO over a batch plus its exact gradient with respect to
/// every parameter tensor.
///
/// `eps` holds `batch.len() * L` noise vectors, sample-major: the draws for
/// batch element `i` are `eps[i*L .. (i+1)*L]`. Per-sample gradients are
/// summed in ascending sample order, so results are deterministic.
pub fn loss_and_grads(
    params: &ModelParams,
    batch: &[&Image],
    eps: &[Vec<f64>],
) -> Result<(f64, Vec<Tensor>)> {
    if batch.is_empty() {
        return Err(Error::config("batch", "must be nonempty"));
    }
    if !eps.len().is_multiple_of(batch.len()) || eps.is_empty() {
        return Err(Error::config(
            "eps",
            format!(
                "{} noise vectors do not divide evenly over {} samples",
                eps.len(),
                batch.len()
            ),
        ));
    }
    let per_sample = eps.len() / batch.len();
    for x in batch {
        check_image_shape(&params.config, x)?;
    }
    for (i, e) in eps.iter().enumerate() {
        if e.len() != params.config.latent_dim {
            return Err(Error::config(
                "eps",
                format!("noise vector {i} has length {}", e.len()),
            ));
        }
    }

    let mut grads = params.zero_grads();
    let mut loss_sum = 0.0;
    for (i, x) in batch.iter().enumerate() {
        let draws: Vec<&[f64]> = eps[i * per_sample..(i + 1) * per_sample]
            .iter()
            .map(|v| v.as_slice())
            .collect();
        let loss = sample_loss_and_grads(params, x, &draws, &mut grads);
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                context: "sample loss".to_string(),
                index: Some(i),
            });
        }
        loss_sum += loss;
    }
    let inv = 1.0 / batch.len() as f64;
    for g in grads.iter_mut() {
        for v in g.data_mut() {
            *v *= inv;
        }
    }
    Ok((loss_sum * inv, grads))
}

/// Minibatch training configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    /// Monte Carlo samples per datapoint (the `L` of the loss estimator).
    pub mc_samples: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub rmsprop: RmspropSettings,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 20,
            epochs: 200,
            mc_samples: 1,
            seed: 1,
            shuffle: true,
            rmsprop: RmspropSettings::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.mc_samples == 0 {
            return Err(Error::config("mc_samples", "must be at least 1"));
        }
        self.rmsprop.validate()
    }
}

/// Per-epoch loss history and timing for one training run.
#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    /// Mean negative ELBO per epoch, one entry per epoch run.
    pub epoch_mean_loss: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    /// FNV-1a fingerprint of the final parameter bytes.
    pub final_checksum: u64,
}

/// Runs the training loop in place: per epoch, shuffle (seeded), partition
/// into batches, then gradient step per batch.
pub fn train(params: &mut ModelParams, images: &[Image], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::config("dataset", "must be nonempty"));
    }
    for x in images {
        check_image_shape(&params.config, x)?;
    }

    let latent = params.config.latent_dim;
    let mut rng = SplitMix64::new(cfg.seed);
    let mut state = RmspropState::new(
        cfg.rmsprop.rho,
        cfg.rmsprop.epsilon,
        cfg.rmsprop.learning_rate,
        params.tensors(),
    )?;
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut report = TrainReport {
        epoch_mean_loss: Vec::with_capacity(cfg.epochs),
        epoch_seconds: Vec::with_capacity(cfg.epochs),
        final_checksum: 0,
    };

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        if cfg.shuffle {
            rng.shuffle(&mut order);
        }
        let mut loss_sum = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Image> = chunk.iter().map(|&i| &images[i]).collect();
            let mut eps = Vec::with_capacity(chunk.len() * cfg.mc_samples);
            for _ in 0..chunk.len() * cfg.mc_samples {
                let mut draw = vec![0.0; latent];
                rng.fill_normal(&mut draw);
                eps.push(draw);
            }
            let (loss, grads) = loss_and_grads(params, &batch, &eps).map_err(|e| match e {
                Error::NonFinite { index, .. } => Error::Training {
                    epoch,
                    batch: batch_idx,
                    message: format!(
                        "non-finite loss{}",
                        index.map(|i| format!(" at sample {i}")).unwrap_or_default()
                    ),
                },
                other => other,
            })?;
            rmsprop_step(params.tensors_mut(), &grads, &mut state)?;
            loss_sum += loss * chunk.len() as f64;
        }
        report.epoch_mean_loss.push(loss_sum / images.len() as f64);
        report.epoch_seconds.push(start.elapsed().as_secs_f64());
    }
    report.final_checksum = params.checksum();
    Ok(report)
}

/// The `grid` coordinates used by [`slice_montage`]: linearly spaced from
/// `lo` to `hi` with both endpoints landing exactly.
pub fn slice_grid_values(grid: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..grid)
        .map(|g| {
            if g == grid - 1 {
                hi
            } else {
                lo + (hi - lo) * g as f64 / (grid - 1) as f64
            }
        })
        .collect()
}

/// Decodes a 2-D grid of latent points into one tiled montage.
///
/// Grid values run linearly from `lo` to `hi` inclusive (`grid` points per
/// axis); the latent vector at tile `(row, col)` has `values[row]` in
/// dimension `dims.0`, `values[col]` in dimension `dims.1`, and `fixed`
/// everywhere else. Tiles are placed row-major, and each tile's pixels are
/// copied bitwise from the corresponding `decode` call.
pub fn slice_montage(
    params: &ModelParams,
    dims: (usize, usize),
    grid: usize,
    lo: f64,
    hi: f64,
    fixed: f64,
) -> Result<Image> {
    let config = params.config();
    let latent = config.latent_dim;
    if dims.0 >= dims.1 || dims.1 >= latent {
        return Err(Error::config(
            "dims",
            format!("need dims.0 < dims.1 < latent_dim ({latent}), got {dims:?}"),
        ));
    }
    if grid < 2 {
        return Err(Error::config("grid", format!("need at least 2, got {grid}")));
    }
    let values = slice_grid_values(grid, lo, hi);

    let (th, tw, ch) = (config.image_height, config.image_width, config.channels);
    let mut montage = Image::zeros(grid * th, grid * tw, ch);
    let mut z = vec![fixed; latent];
    for (row, &a) in values.iter().enumerate() {
        for (col, &b) in values.iter().enumerate() {
            z[dims.0] = a;
            z[dims.1] = b;
            let tile = decode(params, &z);
            for r in 0..th {
                for c in 0..tw {
                    for k in 0..ch {
                        montage.set(row * th + r, col * tw + c, k, tile.get(r, c, k));
                    }
                }
            }
        }
    }
    Ok(montage)
}

/// Borrowed view of the generative half of a model, exposing the decode map
/// and its exact vector-Jacobian product for path planning and routing.
#[derive(Debug, Clone, Copy)]
pub struct VaeDecoder<'a> {
    params: &'a ModelParams,
}

impl<'a> VaeDecoder<'a> {
    pub fn new(params: &'a ModelParams) -> Self {
        VaeDecoder { params }
    }
}

impl Decoder for VaeDecoder<'_> {
    fn latent_dim(&self) -> usize {
        self.params.config.latent_dim
    }

    fn image_dim(&self) -> usize {
        self.params.config.pixel_count()
    }

    fn decode(&self, z: &[f64]) -> Vec<f64> {
        decode_internal(self.params, z).output().to_vec()
    }

    fn decode_vjp(&self, z: &[f64], cotangent: &[f64]) -> Vec<f64> {
        let layers = self.params.config.decoder_layers();
        let cache = decode_internal(self.params, z);
        let mut param_sink: Vec<Tensor> = layer_param_shapes(&layers)
            .iter()
            .map(|s| Tensor::zeros(s))
            .collect();
        let mut input_grad = vec![0.0; z.len()];
        backward_layers(
            &layers,
            self.params.decoder_params(),
            z,
            &cache,
            cotangent,
            &mut param_sink,
            &mut input_grad,
        );
        input_grad
    }
}
