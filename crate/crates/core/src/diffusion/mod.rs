//! Conditional denoising diffusion over circuit-parameter grids.

mod sample;
mod train;
mod unet;

pub use sample::{
    candidate_seed, generate_best_of, generate_best_of_with, generate_candidates, model_hash, sample, sample_batch,
    Candidate, SampleOptions, SamplingManifest,
};
pub use train::{train_dm, DMTrainingConfig, TrainedModel};
pub use unet::{condition_for, NoisePredictor, UNetConfig};

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};

pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

/// Linear beta schedule. Index `t - 1` holds the values for step `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ScheduleRepr", try_from = "ScheduleRepr")]
pub struct NoiseSchedule {
    beta_start: f64,
    beta_end: f64,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ScheduleRepr {
    steps: usize,
    beta_start: f64,
    beta_end: f64,
}

impl From<NoiseSchedule> for ScheduleRepr {
    fn from(s: NoiseSchedule) -> Self {
        ScheduleRepr {
            steps: s.steps(),
            beta_start: s.beta_start,
            beta_end: s.beta_end,
        }
    }
}

impl TryFrom<ScheduleRepr> for NoiseSchedule {
    type Error = crate::CoreError;

    fn try_from(r: ScheduleRepr) -> Result<Self> {
        make_linear_schedule(r.steps, r.beta_start, r.beta_end)
    }
}

pub fn make_linear_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(invalid_arg("schedule needs at least one step"));
    }
    if !(0.0 < beta_start && beta_start < beta_end && beta_end < 1.0) {
        return Err(invalid_arg(format!(
            "need 0 < beta_start < beta_end < 1, got {beta_start}, {beta_end}"
        )));
    }
    let betas: Vec<f64> = if steps == 1 {
        vec![beta_start]
    } else {
        let span = (steps - 1) as f64;
        (0..steps)
            .map(|i| beta_start + (beta_end - beta_start) * i as f64 / span)
            .collect()
    };
    let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
    let alpha_bars = alphas
        .iter()
        .scan(1.0, |acc, a| {
            *acc *= a;
            Some(*acc)
        })
        .collect();
    Ok(NoiseSchedule {
        beta_start,
        beta_end,
        betas,
        alphas,
        alpha_bars,
    })
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta_range(&self) -> (f64, f64) {
        (self.beta_start, self.beta_end)
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(invalid_arg(format!("step {t} outside 1..={}", self.steps())));
        }
        Ok(())
    }
}

/// `x_t = sqrt(ᾱ_t) x0 + sqrt(1 - ᾱ_t) eps`.
pub fn forward_noise(x0: &[f64], t: usize, eps: &[f64], schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    schedule.check_step(t)?;
    if x0.len() != eps.len() {
        return Err(invalid_arg(format!("x0 has {} entries, eps {}", x0.len(), eps.len())));
    }
    let ab = schedule.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
}

/// One reverse step from a noise prediction. `z` is the posterior noise
/// draw; it is ignored at `t = 1`, and `None` gives the mean.
pub fn reverse_step(
    x_t: &[f64],
    t: usize,
    eps_hat: &[f64],
    schedule: &NoiseSchedule,
    z: Option<&[f64]>,
) -> Result<Vec<f64>> {
    schedule.check_step(t)?;
    if x_t.len() != eps_hat.len() || z.is_some_and(|z| z.len() != x_t.len()) {
        return Err(invalid_arg("reverse_step inputs differ in length"));
    }
    let alpha = schedule.alpha(t);
    let coef = (1.0 - alpha) / (1.0 - schedule.alpha_bar(t)).sqrt();
    let inv = 1.0 / alpha.sqrt();
    let sigma = schedule.beta(t).sqrt();
    Ok(x_t
        .iter()
        .zip(eps_hat)
        .enumerate()
        .map(|(i, (x, e))| {
            let mean = inv * (x - coef * e);
            match z {
                Some(z) if t > 1 => mean + sigma * z[i],
                _ => mean,
            }
        })
        .collect())
}
