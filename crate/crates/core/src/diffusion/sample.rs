//! Ancestral sampling and best-of-k selection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{condition_for, reverse_step, NoisePredictor};
use crate::conditioning::PromptEmbedding;
use crate::error::{invalid_arg, Result};
use crate::pauli::PauliSum;
use crate::seed::{derive_seed, stream};
use crate::simulator::{energy, CircuitLayout, ParamGrid};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleOptions {
    /// Drop the posterior noise term and follow the reverse means only.
    pub deterministic: bool,
}

/// Seed of the `index`-th candidate drawn for `seed`. Candidate 0 is what
/// [`sample`] returns, so best-of-k streams are nested in k.
pub fn candidate_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, &[stream::DM_SAMPLE, index as u64])
}

/// Runs the reverse chain for a batch; sample `i` draws all of its noise
/// from its own stream keyed by `seeds[i]`, so results do not depend on
/// how samples are batched.
pub fn sample_batch(
    model: &NoisePredictor,
    conds: &[&PromptEmbedding],
    seeds: &[u64],
    options: SampleOptions,
) -> Result<Vec<ParamGrid>> {
    if conds.len() != seeds.len() {
        return Err(invalid_arg("one seed per condition is required"));
    }
    let (l, n) = model.grid_shape();
    let cell = l * n;
    let mut rngs: Vec<ChaCha8Rng> = seeds.iter().map(|s| ChaCha8Rng::seed_from_u64(*s)).collect();
    let mut xs: Vec<Vec<f64>> = rngs
        .iter_mut()
        .map(|r| (0..cell).map(|_| r.sample(StandardNormal)).collect())
        .collect();
    let schedule = model.schedule();
    for t in (1..=schedule.steps()).rev() {
        let flat: Vec<f32> = xs.iter().flatten().map(|v| *v as f32).collect();
        let eps = model.predict(&flat, &vec![t; xs.len()], conds)?;
        for (i, x) in xs.iter_mut().enumerate() {
            let eps_hat: Vec<f64> = eps[i * cell..(i + 1) * cell].iter().map(|v| f64::from(*v)).collect();
            let z: Option<Vec<f64>> = (t > 1 && !options.deterministic)
                .then(|| (0..cell).map(|_| rngs[i].sample(StandardNormal)).collect());
            *x = reverse_step(x, t, &eps_hat, schedule, z.as_deref())?;
        }
    }
    xs.into_iter()
        .map(|x| ParamGrid::new(l, n, x.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect()))
        .collect()
}

/// One generated grid, clamped to `[-1, 1]`.
pub fn sample(model: &NoisePredictor, cond: &PromptEmbedding, seed: u64, options: SampleOptions) -> Result<ParamGrid> {
    Ok(sample_batch(model, &[cond], &[candidate_seed(seed, 0)], options)?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub grid: ParamGrid,
    pub energy: f64,
}

fn check_layout(model: &NoisePredictor, layout: &CircuitLayout) -> Result<()> {
    let (l, n) = model.grid_shape();
    if (layout.n_layers, layout.n_qubits) != (l, n) {
        return Err(invalid_arg(format!(
            "model generates {l}x{n} grids, layout is {}x{}",
            layout.n_layers, layout.n_qubits
        )));
    }
    Ok(())
}

/// `k` independent samples conditioned on `h`, with their energies.
pub fn generate_candidates(
    model: &NoisePredictor,
    h: &PauliSum,
    layout: &CircuitLayout,
    k: usize,
    seed: u64,
    options: SampleOptions,
) -> Result<Vec<Candidate>> {
    if k == 0 {
        return Err(invalid_arg("best-of-k needs k >= 1"));
    }
    check_layout(model, layout)?;
    let cond = condition_for(h, model.hash_seed())?;
    let seeds: Vec<u64> = (0..k).map(|i| candidate_seed(seed, i)).collect();
    let grids = sample_batch(model, &vec![&cond; k], &seeds, options)?;
    grids
        .into_iter()
        .map(|grid| Ok(Candidate { energy: energy(layout, &grid, h)?, grid }))
        .collect()
}

pub fn generate_best_of(
    model: &NoisePredictor,
    h: &PauliSum,
    layout: &CircuitLayout,
    k: usize,
    seed: u64,
) -> Result<(ParamGrid, f64)> {
    generate_best_of_with(model, h, layout, k, seed, SampleOptions::default())
}

/// Lowest-energy grid among `k` samples; ties go to the earliest index.
pub fn generate_best_of_with(
    model: &NoisePredictor,
    h: &PauliSum,
    layout: &CircuitLayout,
    k: usize,
    seed: u64,
    options: SampleOptions,
) -> Result<(ParamGrid, f64)> {
    let candidates = generate_candidates(model, h, layout, k, seed, options)?;
    let best = candidates
        .into_iter()
        .reduce(|best, c| if c.energy < best.energy { c } else { best })
        .expect("k >= 1");
    Ok((best.grid, best.energy))
}

/// SHA-256 of the serialized checkpoint, hex encoded.
pub fn model_hash(model: &NoisePredictor) -> Result<String> {
    let mut buf = Vec::new();
    model.save(&mut buf)?;
    Ok(hex::encode(Sha256::digest(&buf)))
}

/// Provenance of a generated grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingManifest {
    pub seed: u64,
    pub k: usize,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub deterministic: bool,
    pub model_hash: String,
}

impl SamplingManifest {
    pub fn new(model: &NoisePredictor, k: usize, seed: u64, options: SampleOptions) -> Result<Self> {
        let (beta_start, beta_end) = model.schedule().beta_range();
        Ok(Self {
            seed,
            k,
            steps: model.schedule().steps(),
            beta_start,
            beta_end,
            deterministic: options.deterministic,
            model_hash: model_hash(model)?,
        })
    }
}
