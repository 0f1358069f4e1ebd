//! JSON experiment configurations.

use std::fs;
use std::path::{Path, PathBuf};

use dmvqe_core::bp::TargetParam;
use dmvqe_core::dataset::{GridSpec, LabelConfig, Range};
use dmvqe_core::diffusion::DMTrainingConfig;
use dmvqe_core::pauli::{Boundary, Family, HamiltonianSpec, PauliSum};
use dmvqe_core::simulator::{CircuitLayout, Entangler};
use dmvqe_core::vqe::{OptimizerConfig, DEFAULT_VQE_LEARNING_RATE};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::metrics::GenerationMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutConfig {
    pub n_qubits: usize,
    pub n_layers: usize,
    #[serde(default = "ring")]
    pub entangler: Entangler,
}

fn ring() -> Entangler {
    Entangler::Ring
}

impl LayoutConfig {
    pub fn new(n_qubits: usize, n_layers: usize) -> Self {
        Self {
            n_qubits,
            n_layers,
            entangler: Entangler::Ring,
        }
    }

    pub fn to_layout(&self) -> CircuitLayout {
        CircuitLayout::new(self.n_qubits, self.n_layers).with_entangler(self.entangler)
    }
}

/// A model-family spec or an explicit Pauli sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HamiltonianInput {
    Model(HamiltonianSpec),
    Terms(PauliSum),
}

impl HamiltonianInput {
    pub fn build(&self) -> dmvqe_core::Result<PauliSum> {
        match self {
            HamiltonianInput::Model(spec) => spec.build(),
            HamiltonianInput::Terms(h) => Ok(h.clone()),
        }
    }
}

impl From<HamiltonianSpec> for HamiltonianInput {
    fn from(spec: HamiltonianSpec) -> Self {
        HamiltonianInput::Model(spec)
    }
}

impl From<PauliSum> for HamiltonianInput {
    fn from(h: PauliSum) -> Self {
        HamiltonianInput::Terms(h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetGenConfig {
    pub grid: GridSpec,
    pub layout: LayoutConfig,
    pub labels: LabelConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmTrainConfig {
    pub dataset: PathBuf,
    pub training: DMTrainingConfig,
    /// When set, the trained model is scored against its own dataset.
    #[serde(default)]
    pub evaluate: Option<GenerationMode>,
}

/// A named block of (J, h) points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub j: Range,
    pub h: Range,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmvqeEvalConfig {
    pub model: PathBuf,
    pub family: Family,
    #[serde(default = "periodic")]
    pub boundary: Boundary,
    pub regions: Vec<Region>,
    pub epochs: usize,
    pub best_of: usize,
    pub seed: u64,
    #[serde(default = "vqe_lr")]
    pub learning_rate: f64,
}

fn periodic() -> Boundary {
    Boundary::Periodic
}

fn vqe_lr() -> f64 {
    DEFAULT_VQE_LEARNING_RATE
}

impl DmvqeEvalConfig {
    /// In-range block `[1, 4]` plus the bands `[0, 1)` and `(4, 5]` on both
    /// axes, all at step 0.1.
    pub fn heisenberg_regions() -> Vec<Region> {
        vec![
            Region {
                name: "in-range".into(),
                j: Range::new(1.0, 4.0, 0.1),
                h: Range::new(1.0, 4.0, 0.1),
            },
            Region {
                name: "low".into(),
                j: Range::new(0.0, 0.9, 0.1),
                h: Range::new(0.0, 0.9, 0.1),
            },
            Region {
                name: "high".into(),
                j: Range::new(4.1, 5.0, 0.1),
                h: Range::new(4.1, 5.0, 0.1),
            },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingEpochsConfig {
    pub model: PathBuf,
    pub grid: GridSpec,
    pub target_mre: f64,
    pub epoch_cap: usize,
    pub best_of: usize,
    /// Paired runs per Hamiltonian, each with its own seed.
    #[serde(default = "one")]
    pub repeats: usize,
    pub seed: u64,
    #[serde(default = "vqe_lr")]
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubbardDepthConfig {
    pub model: PathBuf,
    pub sites: usize,
    pub t: f64,
    pub u: f64,
    /// Layers added on top of the model's depth, e.g. `[0, 2, 4]`.
    pub extra_layers: Vec<usize>,
    pub repeats: usize,
    pub epochs: usize,
    pub best_of: usize,
    pub seed: u64,
    #[serde(default = "vqe_lr")]
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpScanConfig {
    pub hamiltonian: HamiltonianInput,
    pub layout: LayoutConfig,
    pub depths: Vec<usize>,
    pub n_samples: usize,
    #[serde(default)]
    pub target: TargetParam,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    DatasetGen(DatasetGenConfig),
    DmTrain(DmTrainConfig),
    DmvqeEval(DmvqeEvalConfig),
    IsingEpochs(IsingEpochsConfig),
    HubbardDepth(HubbardDepthConfig),
    BpScan(BpScanConfig),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::DatasetGen(_) => "dataset-gen",
            Experiment::DmTrain(_) => "dm-train",
            Experiment::DmvqeEval(_) => "dmvqe-eval",
            Experiment::IsingEpochs(_) => "ising-epochs",
            Experiment::HubbardDepth(_) => "hubbard-depth",
            Experiment::BpScan(_) => "bp-scan",
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Experiment::DatasetGen(c) => c.labels.seed = seed,
            Experiment::DmTrain(c) => c.training.seed = seed,
            Experiment::DmvqeEval(c) => c.seed = seed,
            Experiment::IsingEpochs(c) => c.seed = seed,
            Experiment::HubbardDepth(c) => c.seed = seed,
            Experiment::BpScan(c) => c.seed = seed,
        }
    }

    /// Files from earlier stages this experiment reads.
    pub fn inputs(&self) -> Vec<&Path> {
        match self {
            Experiment::DmTrain(c) => vec![&c.dataset],
            Experiment::DmvqeEval(c) => vec![&c.model],
            Experiment::IsingEpochs(c) => vec![&c.model],
            Experiment::HubbardDepth(c) => vec![&c.model],
            Experiment::DatasetGen(_) | Experiment::BpScan(_) => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub experiment: Experiment,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

/// Draws grids from a trained model for one Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub model: PathBuf,
    pub hamiltonian: HamiltonianInput,
    pub best_of: usize,
    pub seed: u64,
    #[serde(default)]
    pub deterministic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VqeMethod {
    Rpvqe,
    Nnvqe,
    Dmvqe,
    DmvqePrime,
}

/// A single VQE run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqeConfig {
    pub hamiltonian: HamiltonianInput,
    pub layout: LayoutConfig,
    pub method: VqeMethod,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default = "one")]
    pub best_of: usize,
}

fn one() -> usize {
    1
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::validation(format!("config {} not found", path.display())),
        _ => CliError::Io(e),
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}
