//! Noise-prediction training on a label dataset.

use dmvqe_tensor::{AdamConfig, AdamState, Graph, Tensor};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{make_linear_schedule, NoisePredictor, UNetConfig, DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_STEPS};
use crate::conditioning::DEFAULT_HASH_SEED;
use crate::dataset::LabelRecord;
use crate::error::{invalid_arg, Result};
use crate::seed::{rng_for, stream};

/// Missing fields take the [`Default`] values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DMTrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub unet: UNetConfig,
    pub hash_seed: u64,
}

impl Default for DMTrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 16,
            learning_rate: 1e-3,
            seed: 0,
            steps: DEFAULT_STEPS,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
            unet: UNetConfig::default(),
            hash_seed: DEFAULT_HASH_SEED,
        }
    }
}

impl DMTrainingConfig {
    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid_arg("epochs and batch size must be positive"));
        }
        if self.batch_size > dataset_len {
            return Err(invalid_arg(format!(
                "batch size {} exceeds dataset size {dataset_len}",
                self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(invalid_arg("learning rate must be positive"));
        }
        self.unet.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: NoisePredictor,
    /// Mean batch loss per epoch.
    pub loss_trace: Vec<f64>,
}

/// Minimizes the masked mean squared error between the injected noise and
/// the network's prediction, with steps drawn uniformly from `1..=T`.
pub fn train_dm(dataset: &[LabelRecord], config: &DMTrainingConfig) -> Result<TrainedModel> {
    let first = dataset.first().ok_or_else(|| invalid_arg("empty training set"))?;
    config.validate(dataset.len())?;
    let shape = (first.label_params.n_layers(), first.label_params.n_qubits());
    if let Some(bad) = dataset
        .iter()
        .position(|r| (r.label_params.n_layers(), r.label_params.n_qubits()) != shape)
    {
        return Err(invalid_arg(format!("record {bad} has a different grid shape")));
    }
    let schedule = make_linear_schedule(config.steps, config.beta_start, config.beta_end)?;
    let mut model = NoisePredictor::new(shape, config.unet, schedule, config.hash_seed, config.seed)?;
    let sizes: Vec<usize> = model.params().iter().map(Tensor::numel).collect();
    let mut adam = AdamState::<f32>::new(AdamConfig::with_learning_rate(config.learning_rate), &sizes);
    let mut rng = rng_for(config.seed, &[stream::DM_BATCHES]);
    let cell = shape.0 * shape.1;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let b = chunk.len();
            let ts: Vec<usize> = (0..b).map(|_| rng.gen_range(1..=config.steps)).collect();
            let eps: Vec<f32> = (0..b * cell).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
            let mut xt = Vec::with_capacity(b * cell);
            for (i, &idx) in chunk.iter().enumerate() {
                let ab = model.schedule().alpha_bar(ts[i]);
                let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
                let x0 = dataset[idx].label_params.values();
                xt.extend(
                    x0.iter()
                        .zip(&eps[i * cell..(i + 1) * cell])
                        .map(|(x, e)| (sa * x + sb * f64::from(*e)) as f32),
                );
            }
            let conds: Vec<_> = chunk.iter().map(|&i| &dataset[i].prompt_embedding).collect();

            let mut g = Graph::new();
            let vars = model.bind(&mut g, true);
            let x = g.constant(model.pad(&xt, b));
            let c = g.constant(NoisePredictor::cond_tensor(&conds));
            let pred = model.forward(&mut g, &vars, x, &ts, c)?;
            let target = g.constant(model.pad(&eps, b));
            let mask = g.constant(model.pad(&vec![1.0; b * cell], b));
            let diff = g.sub(pred, target)?;
            let diff = g.mul(diff, mask)?;
            let sq = g.mul(diff, diff)?;
            let s = g.sum(sq);
            let loss = g.scale(s, 1.0 / (b * cell) as f32);
            g.backward(loss)?;
            total += f64::from(g.value(loss).data()[0]);
            batches += 1;

            let grads: Vec<Vec<f32>> = vars
                .iter()
                .map(|v| g.grad(*v).map_or_else(|| vec![0.0; g.value(*v).numel()], <[f32]>::to_vec))
                .collect();
            let grad_refs: Vec<&[f32]> = grads.iter().map(Vec::as_slice).collect();
            let mut params: Vec<&mut [f32]> = model.params_mut().iter_mut().map(Tensor::data_mut).collect();
            adam.update(&mut params, &grad_refs)?;
        }
        loss_trace.push(total / batches as f64);
    }
    Ok(TrainedModel { model, loss_trace })
}
