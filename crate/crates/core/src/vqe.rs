//! VQE drivers: random initialization (RPVQE), network-parameterized
//! (NNVQE), diffusion-initialized (DMVQE) and its deep-circuit hybrid
//! (DMVQE′), plus convergence accounting.

use dmvqe_tensor::{init, AdamConfig, AdamState, Graph, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{generate_best_of, NoisePredictor};
use crate::error::{invalid_arg, Result};
use crate::pauli::{exact_ground_energy, PauliSum};
use crate::seed::{rng_for, stream};
use crate::simulator::{energy_raw, gradient_raw, CircuitLayout, ParamGrid};

pub const DEFAULT_EPOCH_CAP: usize = 2000;
pub const DEFAULT_VQE_LEARNING_RATE: f64 = 0.05;
pub const DEFAULT_NETWORK_LEARNING_RATE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// When set, runs stop at the first epoch within this relative error of
    /// the exact ground energy, or at `epoch_cap`.
    #[serde(default)]
    pub target_mre: Option<f64>,
    #[serde(default = "default_cap")]
    pub epoch_cap: usize,
    /// Error scale used instead of `|E_exact|` when the exact energy is 0.
    #[serde(default = "default_zero_scale")]
    pub zero_energy_scale: f64,
}

fn default_cap() -> usize {
    DEFAULT_EPOCH_CAP
}

fn default_zero_scale() -> f64 {
    1.0
}

impl OptimizerConfig {
    pub fn new(max_epochs: usize, seed: u64) -> Self {
        Self {
            max_epochs,
            learning_rate: DEFAULT_VQE_LEARNING_RATE,
            seed,
            target_mre: None,
            epoch_cap: DEFAULT_EPOCH_CAP,
            zero_energy_scale: 1.0,
        }
    }

    pub fn with_target(mut self, target_mre: f64, epoch_cap: usize) -> Self {
        self.target_mre = Some(target_mre);
        self.epoch_cap = epoch_cap;
        self
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs < 1 {
            return Err(invalid_arg("max_epochs must be at least 1"));
        }
        if self.target_mre.is_some() && self.epoch_cap < self.max_epochs {
            return Err(invalid_arg("epoch_cap must be >= max_epochs when a target is set"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(invalid_arg("learning rate must be positive"));
        }
        if let Some(t) = self.target_mre {
            if !(t >= 0.0) {
                return Err(invalid_arg("target_mre must be non-negative"));
            }
        }
        Ok(())
    }

    fn epoch_limit(&self) -> usize {
        if self.target_mre.is_some() {
            self.epoch_cap
        } else {
            self.max_epochs
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// Energy before any update, then after each epoch.
    pub energy_trace: Vec<f64>,
    pub final_params: ParamGrid,
    pub final_energy: f64,
    pub epochs_to_target: Option<usize>,
    /// Target set but not reached within the cap.
    pub trapped: bool,
}

/// Outcome of scanning a trace against a convergence target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetOutcome {
    Reached(usize),
    Trapped,
}

pub fn relative_error(estimate: f64, exact: f64, zero_scale: f64) -> f64 {
    if exact == 0.0 {
        (estimate - exact).abs() / zero_scale
    } else {
        (estimate - exact).abs() / exact.abs()
    }
}

/// First epoch `≤ cap` whose energy is within `target_mre` of `e_exact`.
pub fn epochs_to_target(trace: &[f64], e_exact: f64, target_mre: f64, cap: usize) -> TargetOutcome {
    epochs_to_target_scaled(trace, e_exact, target_mre, cap, 1.0)
}

pub fn epochs_to_target_scaled(
    trace: &[f64],
    e_exact: f64,
    target_mre: f64,
    cap: usize,
    zero_scale: f64,
) -> TargetOutcome {
    trace
        .iter()
        .take(cap.saturating_add(1))
        .position(|e| relative_error(*e, e_exact, zero_scale) <= target_mre)
        .map_or(TargetOutcome::Trapped, TargetOutcome::Reached)
}

fn reference_energy(h: &PauliSum, config: &OptimizerConfig) -> Result<Option<f64>> {
    match config.target_mre {
        Some(_) => exact_ground_energy(h).map(Some),
        None => Ok(None),
    }
}

fn finish(trace: Vec<f64>, values: Vec<f64>, layout: &CircuitLayout, config: &OptimizerConfig, exact: Option<f64>) -> Result<RunResult> {
    let (epochs_to_target, trapped) = match (config.target_mre, exact) {
        (Some(target), Some(e)) => {
            match epochs_to_target_scaled(&trace, e, target, config.epoch_cap, config.zero_energy_scale) {
                TargetOutcome::Reached(k) => (Some(k), false),
                TargetOutcome::Trapped => (None, true),
            }
        }
        _ => (None, false),
    };
    Ok(RunResult {
        final_energy: *trace.last().expect("trace has the initial energy"),
        energy_trace: trace,
        final_params: ParamGrid::for_layout(layout, values)?,
        epochs_to_target,
        trapped,
    })
}

/// Adam on the normalized parameters from a given start, clamping to
/// `[-1, 1]` after every step.
pub fn optimize_from(
    h: &PauliSum,
    layout: &CircuitLayout,
    init: &ParamGrid,
    config: &OptimizerConfig,
) -> Result<RunResult> {
    config.validate()?;
    if !init.matches(layout) {
        return Err(invalid_arg(format!(
            "initial grid {}x{} does not match layout {}x{}",
            init.n_layers(),
            init.n_qubits(),
            layout.n_layers,
            layout.n_qubits
        )));
    }
    let exact = reference_energy(h, config)?;
    let reached = |e: f64| match (config.target_mre, exact) {
        (Some(t), Some(x)) => relative_error(e, x, config.zero_energy_scale) <= t,
        _ => false,
    };
    let mut values = init.values().to_vec();
    let mut adam = AdamState::<f64>::new(
        AdamConfig::with_learning_rate(config.learning_rate),
        &[values.len()],
    );
    let mut trace = vec![energy_raw(layout, &values, h)?];
    for _ in 0..config.epoch_limit() {
        if reached(*trace.last().unwrap()) {
            break;
        }
        let grad = gradient_raw(layout, &values, h)?;
        adam.update(&mut [&mut values], &[&grad])?;
        values.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
        trace.push(energy_raw(layout, &values, h)?);
    }
    finish(trace, values, layout, config, exact)
}

pub fn uniform_grid<R: Rng>(rng: &mut R, n_layers: usize, n_qubits: usize) -> ParamGrid {
    let values = (0..n_layers * n_qubits).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    ParamGrid::new(n_layers, n_qubits, values).expect("shape by construction")
}

/// Randomly parameterized VQE.
pub fn run_rpvqe(h: &PauliSum, layout: &CircuitLayout, config: &OptimizerConfig) -> Result<RunResult> {
    layout.validate()?;
    let mut rng = rng_for(config.seed, &[stream::RPVQE_INIT]);
    let init = uniform_grid(&mut rng, layout.n_layers, layout.n_qubits);
    optimize_from(h, layout, &init, config)
}

/// Fixed-input MLP whose `tanh` outputs are the circuit parameters.
#[derive(Debug, Clone)]
pub struct NnvqeModel {
    weights: Vec<Tensor>,
    n_layers: usize,
    n_qubits: usize,
}

pub const NNVQE_INPUT_DIM: usize = 8;
pub const NNVQE_HIDDEN: usize = 64;

/// Largest magnitude a network output is allowed to reach, keeping labels
/// strictly inside `(-1, 1)` even when `tanh` saturates in `f32`.
const OUTPUT_BOUND: f64 = 1.0 - 1e-6;

impl NnvqeModel {
    pub fn new(layout: &CircuitLayout, seed: u64) -> Self {
        let mut rng = rng_for(seed, &[stream::NNVQE_WEIGHTS]);
        let out = layout.n_params();
        let dims = [(NNVQE_INPUT_DIM, NNVQE_HIDDEN), (NNVQE_HIDDEN, NNVQE_HIDDEN), (NNVQE_HIDDEN, out)];
        let mut weights = Vec::new();
        for (fan_in, fan_out) in dims {
            weights.push(init::fan_in_uniform(&mut rng, &[fan_in, fan_out], fan_in));
            weights.push(init::fan_in_uniform(&mut rng, &[fan_out], fan_in));
        }
        Self {
            weights,
            n_layers: layout.n_layers,
            n_qubits: layout.n_qubits,
        }
    }

    fn forward(&self, g: &mut Graph, track: bool) -> Result<(Vec<dmvqe_tensor::Var>, dmvqe_tensor::Var)> {
        let vars: Vec<_> = self
            .weights
            .iter()
            .map(|w| if track { g.param(w.clone()) } else { g.constant(w.clone()) })
            .collect();
        let mut x = g.constant(Tensor::full(&[1, NNVQE_INPUT_DIM], 1.0));
        for layer in vars.chunks(2) {
            let z = g.matmul(x, layer[0])?;
            let z = g.add_bias(z, layer[1])?;
            x = g.tanh(z);
        }
        Ok((vars, x))
    }

    /// Current circuit parameters.
    pub fn output(&self) -> Result<ParamGrid> {
        let mut g = Graph::new();
        let (_, out) = self.forward(&mut g, false)?;
        self.to_grid(g.value(out).data())
    }

    fn to_grid(&self, raw: &[f32]) -> Result<ParamGrid> {
        let values = raw.iter().map(|v| (*v as f64).clamp(-OUTPUT_BOUND, OUTPUT_BOUND)).collect();
        ParamGrid::new(self.n_layers, self.n_qubits, values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NnvqeResult {
    pub run: RunResult,
    /// Network output at the lowest-energy epoch.
    pub label: ParamGrid,
    pub label_energy: f64,
}

/// Network-parameterized VQE: the energy gradient with respect to the
/// circuit parameters is pulled back through the network and Adam updates
/// the network weights.
pub fn run_nnvqe(h: &PauliSum, layout: &CircuitLayout, config: &OptimizerConfig) -> Result<NnvqeResult> {
    config.validate()?;
    layout.validate()?;
    let exact = reference_energy(h, config)?;
    let mut model = NnvqeModel::new(layout, config.seed);
    let sizes: Vec<usize> = model.weights.iter().map(Tensor::numel).collect();
    let mut adam = AdamState::<f32>::new(AdamConfig::with_learning_rate(config.learning_rate), &sizes);

    let mut trace = Vec::new();
    let mut best: Option<(f64, ParamGrid)> = None;
    let mut last_values = Vec::new();
    for epoch in 0..=config.epoch_limit() {
        let mut g = Graph::new();
        let (vars, out) = model.forward(&mut g, true)?;
        let grid = model.to_grid(g.value(out).data())?;
        let values = grid.values().to_vec();
        let e = energy_raw(layout, &values, h)?;
        trace.push(e);
        if best.as_ref().map_or(true, |(b, _)| e < *b) {
            best = Some((e, grid));
        }
        last_values = values;
        let done = match (config.target_mre, exact) {
            (Some(t), Some(x)) => relative_error(e, x, config.zero_energy_scale) <= t,
            _ => false,
        };
        if done || epoch == config.epoch_limit() {
            break;
        }
        let grad: Vec<f32> = gradient_raw(layout, &last_values, h)?.iter().map(|v| *v as f32).collect();
        let upstream = g.constant(Tensor::new(g.value(out).shape(), grad)?);
        let weighted = g.mul(out, upstream)?;
        let surrogate = g.sum(weighted);
        g.backward(surrogate)?;
        let grads: Vec<Vec<f32>> = vars
            .iter()
            .map(|v| g.grad(*v).map(<[f32]>::to_vec).unwrap_or_else(|| vec![0.0; g.value(*v).numel()]))
            .collect();
        let mut params: Vec<&mut [f32]> = model.weights.iter_mut().map(Tensor::data_mut).collect();
        let grad_refs: Vec<&[f32]> = grads.iter().map(Vec::as_slice).collect();
        adam.update(&mut params, &grad_refs)?;
    }
    let (label_energy, label) = best.expect("at least one epoch");
    Ok(NnvqeResult {
        run: finish(trace, last_values, layout, config, exact)?,
        label,
        label_energy,
    })
}

/// Sampling controls for diffusion-initialized runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    /// Candidates drawn per Hamiltonian; the lowest-energy one is kept.
    pub best_of: usize,
    pub seed: u64,
}

/// Diffusion-initialized VQE.
pub fn run_dmvqe(
    h: &PauliSum,
    layout: &CircuitLayout,
    model: &NoisePredictor,
    generation: &GenerationConfig,
    config: &OptimizerConfig,
) -> Result<RunResult> {
    let (grid, _) = generate_best_of(model, h, layout, generation.best_of, generation.seed)?;
    optimize_from(h, layout, &grid, config)
}

/// Fills the first `L_dm` layers of a deeper circuit with a generated grid
/// and the remaining layers uniformly at random.
pub fn hybrid_initializer(
    generated: &ParamGrid,
    deep_layout: &CircuitLayout,
    seed: u64,
) -> Result<ParamGrid> {
    if generated.n_qubits() != deep_layout.n_qubits {
        return Err(invalid_arg(format!(
            "generated grid has {} qubits, deep layout {}",
            generated.n_qubits(),
            deep_layout.n_qubits
        )));
    }
    if deep_layout.n_layers < generated.n_layers() {
        return Err(invalid_arg(format!(
            "deep layout has {} layers, fewer than the generated {}",
            deep_layout.n_layers,
            generated.n_layers()
        )));
    }
    let extra = deep_layout.n_layers - generated.n_layers();
    let mut rng = rng_for(seed, &[stream::DEEP_LAYERS]);
    let tail = uniform_grid(&mut rng, extra.max(1), deep_layout.n_qubits);
    let mut values = generated.values().to_vec();
    if extra > 0 {
        values.extend_from_slice(tail.values());
    }
    ParamGrid::for_layout(deep_layout, values)
}

/// DMVQE′: generated parameters on the first `L_dm` layers, random deeper
/// layers, then optimization over the full grid.
pub fn run_dmvqe_prime(
    h: &PauliSum,
    deep_layout: &CircuitLayout,
    model: &NoisePredictor,
    generation: &GenerationConfig,
    config: &OptimizerConfig,
) -> Result<RunResult> {
    let shallow = deep_layout.with_layers(model.grid_shape().0);
    if model.grid_shape().1 != deep_layout.n_qubits {
        return Err(invalid_arg(format!(
            "model generates {} qubits, layout has {}",
            model.grid_shape().1,
            deep_layout.n_qubits
        )));
    }
    let (grid, _) = generate_best_of(model, h, &shallow, generation.best_of, generation.seed)?;
    let init = hybrid_initializer(&grid, deep_layout, config.seed)?;
    optimize_from(h, deep_layout, &init, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::{build_heisenberg, Boundary};

    #[test]
    fn target_scan() {
        assert_eq!(epochs_to_target(&[-1.0, -1.0], -1.0, 0.005, 10), TargetOutcome::Reached(0));
        let trace = [0.0, -0.5, -0.9, -0.996, -0.999];
        assert_eq!(epochs_to_target(&trace, -1.0, 0.005, 10), TargetOutcome::Reached(3));
        assert_eq!(epochs_to_target(&trace, -1.0, 0.005, 2), TargetOutcome::Trapped);
        assert_eq!(epochs_to_target(&trace, -1.0, 0.15, 10), TargetOutcome::Reached(2));
    }

    #[test]
    fn zero_hamiltonian_run() {
        let layout = CircuitLayout::new(3, 2);
        let cfg = OptimizerConfig::new(20, 1).with_target(0.005, 100);
        let r = run_rpvqe(&PauliSum::zero(3), &layout, &cfg).unwrap();
        assert!(r.energy_trace.iter().all(|e| *e == 0.0));
        assert_eq!(r.epochs_to_target, Some(0));
        assert!(!r.trapped);
    }

    #[test]
    fn two_qubit_singlet_converges() {
        let h = build_heisenberg(2, 1.0, 0.0, Boundary::Open).unwrap();
        let layout = CircuitLayout::new(2, 2);
        let mut within = 0;
        for seed in 0..10 {
            let r = run_rpvqe(&h, &layout, &OptimizerConfig::new(500, seed)).unwrap();
            assert!(r.energy_trace.iter().all(|e| *e >= -0.75 - 1e-9));
            assert_eq!(r.final_energy, *r.energy_trace.last().unwrap());
            if (r.final_energy + 0.75).abs() <= 0.0075 {
                within += 1;
            }
        }
        assert!(within >= 6, "only {within}/10 seeds within 1%");
    }

    #[test]
    fn runs_are_seed_deterministic() {
        let h = build_heisenberg(3, 1.0, 0.5, Boundary::Periodic).unwrap();
        let layout = CircuitLayout::new(3, 2);
        let cfg = OptimizerConfig::new(30, 4);
        assert_eq!(run_rpvqe(&h, &layout, &cfg).unwrap(), run_rpvqe(&h, &layout, &cfg).unwrap());
        let cfg = OptimizerConfig::new(30, 4).with_learning_rate(1e-2);
        assert_eq!(run_nnvqe(&h, &layout, &cfg).unwrap(), run_nnvqe(&h, &layout, &cfg).unwrap());
    }

    #[test]
    fn nnvqe_labels_stay_inside_unit_interval() {
        let h = build_heisenberg(3, 2.0, 1.0, Boundary::Periodic).unwrap();
        let layout = CircuitLayout::new(3, 2);
        let r = run_nnvqe(&h, &layout, &OptimizerConfig::new(40, 2).with_learning_rate(1e-2)).unwrap();
        assert!(r.label.values().iter().all(|v| v.abs() < 1.0));
        assert_eq!(r.run.energy_trace.len(), 41);
        assert!(r.label_energy <= r.run.energy_trace[0]);
    }

    #[test]
    fn hybrid_initializer_keeps_generated_rows() {
        let gen = ParamGrid::new(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let same = hybrid_initializer(&gen, &CircuitLayout::new(3, 2), 0).unwrap();
        assert_eq!(same, gen);
        let deep = hybrid_initializer(&gen, &CircuitLayout::new(3, 4), 0).unwrap();
        assert_eq!(&deep.values()[..6], gen.values());
        assert_eq!(deep.n_layers(), 4);
        assert!(hybrid_initializer(&gen, &CircuitLayout::new(4, 4), 0).is_err());
        assert!(hybrid_initializer(&gen, &CircuitLayout::new(3, 1), 0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::new(0, 0).validate().is_err());
        assert!(OptimizerConfig::new(100, 0).with_target(0.01, 50).validate().is_err());
    }
}
