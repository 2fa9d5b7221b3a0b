//! Gradient self-check suites: every analytic backward pass in the crate
//! versus the central-difference oracle, over randomized models.

use crate::error::Result;
use crate::gradcheck::{finite_diff_gradient, max_relative_error};
use crate::image::Image;
use crate::mlp::{mlp_backward, mlp_forward, HiddenActivation, MlpSpec, OutputActivation};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;
use crate::vae::{loss_and_grads, Likelihood, ModelConfig, ModelParams};

/// Outcome of one suite.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    pub worst_relative_error: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Knobs for the self-check run.
#[derive(Debug, Clone)]
pub struct GradcheckConfig {
    /// Random models per suite (per activation combination for the MLP
    /// suite).
    pub trials: usize,
    /// Central-difference step.
    pub step: f64,
    /// Maximum tolerated relative error, denominator `max(|a|,|fd|,1e-8)`.
    pub threshold: f64,
    pub seed: u64,
    /// Negative-control hook: corrupt each analytic gradient before
    /// comparing, which must make every suite fail.
    pub corrupt: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            trials: 20,
            step: 1e-5,
            threshold: 1e-5,
            seed: 1,
            corrupt: false,
        }
    }
}

fn corrupt_grads(grads: &mut [Tensor]) {
    if let Some(first) = grads.first_mut() {
        if let Some(v) = first.data_mut().first_mut() {
            *v += 1e-2;
        }
    }
}

/// A central difference at step `h` cannot resolve coordinates in which the
/// function is nearly flat: its rounding noise swamps any relative
/// comparison there. Models whose gradient contains such a coordinate are
/// resampled. Flatness is judged on `max(|analytic|, |fd|)`, so an analytic
/// gradient that wrongly zeroes a live coordinate still reaches the
/// comparison (the fd side stays large) and fails it.
const FLAT_COORDINATE_FLOOR: f64 = 1e-4;

fn has_flat_coordinate(analytic: &[Tensor], fd: &[Tensor]) -> bool {
    analytic.iter().zip(fd).any(|(a, b)| {
        a.data()
            .iter()
            .zip(b.data())
            .any(|(&x, &y)| x.abs().max(y.abs()) < FLAT_COORDINATE_FLOOR)
    })
}

/// Random MLPs over every activation combination, checked against finite
/// differences of a fixed linear functional of the outputs.
pub fn mlp_gradient_suite(cfg: &GradcheckConfig) -> Result<SuiteReport> {
    let combos = [
        (HiddenActivation::Tanh, OutputActivation::Identity),
        (HiddenActivation::Tanh, OutputActivation::Sigmoid),
        (HiddenActivation::Relu, OutputActivation::Identity),
        (HiddenActivation::Relu, OutputActivation::Sigmoid),
        (HiddenActivation::Sigmoid, OutputActivation::Identity),
        (HiddenActivation::Sigmoid, OutputActivation::Sigmoid),
    ];
    let mut rng = SplitMix64::new(cfg.seed);
    let mut worst = 0.0f64;
    let mut cases = 0usize;

    for (hidden, output) in combos {
        let mut done = 0;
        let mut attempts = 0;
        while done < cfg.trials {
            attempts += 1;
            assert!(attempts < 200 * cfg.trials, "resampling failed to find comparable models");
            let depth = 2 + rng.next_index(3); // 2..=4 size entries
            let sizes: Vec<usize> = (0..=depth).map(|_| 1 + rng.next_index(10)).collect();
            let spec = MlpSpec::new(sizes, hidden, output)?;
            let params = spec.init_params(rng.next_u64());
            // Inputs bounded away from zero keep weight-gradient magnitudes
            // out of the finite-difference noise floor.
            let input = Tensor::vector(
                (0..spec.input_size())
                    .map(|_| signed_range(&mut rng, 0.1, 1.0))
                    .collect(),
            );

            let (_, cache) = mlp_forward(&spec, &params, &input)?;
            // ReLU kinks within the probe step would corrupt the oracle;
            // resample rather than compare garbage.
            if hidden == HiddenActivation::Relu
                && cache.pre.iter().flatten().any(|&z| z.abs() < 1e-3)
            {
                continue;
            }
            let head: Vec<f64> = (0..spec.output_size())
                .map(|_| signed_range(&mut rng, 0.2, 1.0))
                .collect();
            let (mut analytic, _) =
                mlp_backward(&spec, &params, &cache, &Tensor::vector(head.clone()))?;
            if cfg.corrupt {
                corrupt_grads(&mut analytic);
            }
            let fd = finite_diff_gradient(
                |p| {
                    let (out, _) = mlp_forward(&spec, p, &input)?;
                    Ok(out.data().iter().zip(&head).map(|(o, w)| o * w).sum())
                },
                &params,
                cfg.step,
            )?;
            if has_flat_coordinate(&analytic, &fd) {
                continue;
            }
            worst = worst.max(max_relative_error(&analytic, &fd));
            done += 1;
            cases += 1;
        }
    }
    Ok(SuiteReport {
        name: "mlp-backward".to_string(),
        cases,
        worst_relative_error: worst,
        threshold: cfg.threshold,
        passed: worst < cfg.threshold,
    })
}

fn signed_range(rng: &mut SplitMix64, lo: f64, hi: f64) -> f64 {
    let magnitude = rng.next_range(lo, hi);
    if rng.next_f64() < 0.5 {
        -magnitude
    } else {
        magnitude
    }
}

/// Random small VAEs with frozen noise: `loss_and_grads` versus finite
/// differences of the negative ELBO.
pub fn vae_gradient_suite(cfg: &GradcheckConfig) -> Result<SuiteReport> {
    let mut rng = SplitMix64::new(cfg.seed.wrapping_add(0x9E37_79B9));
    let mut worst = 0.0f64;
    let mut cases = 0usize;

    let mut done = 0usize;
    let mut attempts = 0usize;
    while done < cfg.trials {
        attempts += 1;
        assert!(attempts < 200 * cfg.trials, "resampling failed to find comparable models");
        let likelihood = if done.is_multiple_of(2) {
            Likelihood::GaussianUnitVariance
        } else {
            Likelihood::Bernoulli
        };
        let config = ModelConfig {
            latent_dim: 1 + rng.next_index(4),
            image_height: 2 + rng.next_index(4),
            image_width: 2 + rng.next_index(4),
            channels: 1 + rng.next_index(2),
            encoder_hidden: vec![3 + rng.next_index(8)],
            decoder_hidden: vec![3 + rng.next_index(8)],
            likelihood,
        };
        debug_assert!(config.param_count() <= 2000, "suite models stay small");
        let params = ModelParams::init(config.clone(), rng.next_u64())?;
        let x = Image::from_vec(
            config.image_height,
            config.image_width,
            config.channels,
            (0..config.pixel_count())
                .map(|_| rng.next_range(0.05, 0.95))
                .collect(),
        )?;
        let draws = 1 + rng.next_index(2);
        let eps: Vec<Vec<f64>> = (0..draws)
            .map(|_| {
                let mut e = vec![0.0; config.latent_dim];
                rng.fill_normal(&mut e);
                e
            })
            .collect();

        let (_, mut analytic) = loss_and_grads(&params, &[&x], &eps)?;
        if cfg.corrupt {
            corrupt_grads(&mut analytic);
        }
        let fd = finite_diff_gradient(
            |tensors| {
                let candidate = ModelParams::from_tensors(config.clone(), tensors.to_vec())?;
                let (loss, _) = loss_and_grads(&candidate, &[&x], &eps)?;
                Ok(loss)
            },
            params.tensors(),
            cfg.step,
        )?;
        if has_flat_coordinate(&analytic, &fd) {
            continue;
        }
        worst = worst.max(max_relative_error(&analytic, &fd));
        done += 1;
        cases += 1;
    }
    Ok(SuiteReport {
        name: "vae-loss".to_string(),
        cases,
        worst_relative_error: worst,
        threshold: cfg.threshold,
        passed: worst < cfg.threshold,
    })
}

/// Runs every gradient suite.
pub fn run_gradient_suites(cfg: &GradcheckConfig) -> Result<Vec<SuiteReport>> {
    Ok(vec![mlp_gradient_suite(cfg)?, vae_gradient_suite(cfg)?])
}
