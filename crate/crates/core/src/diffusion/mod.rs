//! Two-stage conditional DDPM machinery: noise schedule, forward process,
//! ancestral sampler, the contact-map and hand-parameter denoisers, and the
//! training losses.

pub mod losses;
pub mod nets;
pub mod tape;
pub mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CoreError, Result};

pub use losses::{grasp_loss_theta_grad, grasp_losses, loss_weights, penetration_loss, GraspLosses};
pub use nets::{
    contact_denoiser, encode_points, grasp_denoiser, init_weights, load_weights, save_weights,
    ArchConfig, ContactCondition, DenoiserKind, DenoiserWeights, ParamSet,
};
pub use train::{
    train_contact, train_grasp, write_loss_history, ContactRecord, ContactSampler,
    GraspSampler, GraspTrainRecord, TrainConfig, TrainResult,
};

/// Default diffusion step count.
pub const DEFAULT_T: usize = 100;
/// Default linear-beta bounds.
pub const DEFAULT_BETA: (f64, f64) = (1e-4, 0.02);

/// Linear-beta DDPM noise schedule. Steps are indexed t ∈ 1..=T; index 0 of
/// the internal arrays corresponds to t = 1.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseSchedule {
    pub t_steps: usize,
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }
}

pub fn make_schedule(t_steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if t_steps < 1 {
        return Err(CoreError::InvalidArgument("schedule needs T >= 1".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(CoreError::InvalidArgument(format!(
            "invalid beta bounds [{beta_start}, {beta_end}]"
        )));
    }
    let betas: Vec<f64> = (0..t_steps)
        .map(|i| {
            if t_steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (t_steps - 1) as f64
            }
        })
        .collect();
    let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bars = Vec::with_capacity(t_steps);
    let mut prod = 1.0;
    for &a in &alphas {
        prod *= a;
        alpha_bars.push(prod);
    }
    Ok(NoiseSchedule { t_steps, betas, alphas, alpha_bars })
}

pub fn default_schedule() -> NoiseSchedule {
    make_schedule(DEFAULT_T, DEFAULT_BETA.0, DEFAULT_BETA.1).expect("default schedule is valid")
}

/// Forward process: x_t = √ᾱ_t·x0 + √(1−ᾱ_t)·ε.
pub fn q_sample(x0: &[f64], t: usize, eps: &[f64], schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    if t < 1 || t > schedule.t_steps {
        return Err(CoreError::InvalidArgument(format!(
            "t = {t} outside 1..={}",
            schedule.t_steps
        )));
    }
    if x0.len() != eps.len() {
        return Err(CoreError::ShapeMismatch(format!(
            "x0 has {} elements but eps has {}",
            x0.len(),
            eps.len()
        )));
    }
    let ab = schedule.alpha_bar(t);
    let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(eps).map(|(&x, &e)| sa * x + sb * e).collect())
}

/// Noise predictor interface shared by the two diffusers and test oracles.
pub trait Denoiser {
    fn dim(&self) -> usize;
    fn denoise(&self, x_t: &[f64], t: usize) -> Result<Vec<f64>>;
}

/// DDPM ancestral sampling from Gaussian x_T, deterministic given the seed.
/// The reverse-step variance is σ_t² = β_t. When `clamp01` is set the final
/// estimate is clamped to [0,1] (contact maps).
pub fn sample(
    denoiser: &dyn Denoiser,
    schedule: &NoiseSchedule,
    seed: u64,
    clamp01: bool,
) -> Result<Vec<f64>> {
    let dim = denoiser.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    for t in (1..=schedule.t_steps).rev() {
        let eps_hat = denoiser.denoise(&x, t)?;
        if eps_hat.len() != dim {
            return Err(CoreError::ShapeMismatch(format!(
                "denoiser returned {} values for dim {dim}",
                eps_hat.len()
            )));
        }
        let (b, a, ab) = (schedule.beta(t), schedule.alpha(t), schedule.alpha_bar(t));
        let coef = b / (1.0 - ab).sqrt();
        let inv_sqrt_a = 1.0 / a.sqrt();
        for (xi, &e) in x.iter_mut().zip(&eps_hat) {
            *xi = inv_sqrt_a * (*xi - coef * e);
        }
        if t > 1 {
            let sigma = b.sqrt();
            for xi in x.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *xi += sigma * z;
            }
        }
    }
    if clamp01 {
        for xi in x.iter_mut() {
            *xi = xi.clamp(0.0, 1.0);
        }
    }
    Ok(x)
}

/// Additive sinusoidal timestep embedding of width `dim`.
pub fn timestep_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (10000.0_f64).powf(-(i as f64) / half.max(1) as f64);
        out[2 * i] = (t as f64 * freq).sin();
        out[2 * i + 1] = (t as f64 * freq).cos();
    }
    out
}

/// Simplified DDPM objective: mean squared error between predicted and
/// injected noise.
pub fn simplified_loss(eps_hat: &[f64], eps: &[f64]) -> Result<f64> {
    if eps_hat.len() != eps.len() {
        return Err(CoreError::ShapeMismatch(format!(
            "eps_hat has {} elements but eps has {}",
            eps_hat.len(),
            eps.len()
        )));
    }
    let n = eps.len().max(1) as f64;
    Ok(eps_hat
        .iter()
        .zip(eps)
        .map(|(&a, &b)| (a - b).powi(2))
        .sum::<f64>()
        / n)
}
