//! Experiment orchestration: each kind reads its staged inputs, runs, and
//! writes its outputs plus a manifest into the output directory.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use dmvqe_core::bp::{scan_depths, spearman};
use dmvqe_core::dataset::{generate_labels, load_dataset, save_dataset, spec_at, Dataset, DatasetHeader};
use dmvqe_core::diffusion::{generate_best_of, model_hash, train_dm, NoisePredictor};
use dmvqe_core::pauli::{exact_ground_energy, HamiltonianSpec};
use dmvqe_core::seed::derive_seed;
use dmvqe_core::simulator::{CircuitLayout, ParamGrid};
use dmvqe_core::vqe::{epochs_to_target, hybrid_initializer, optimize_from, run_rpvqe, OptimizerConfig, TargetOutcome};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::*;
use crate::error::{CliError, Result};
use crate::metrics::{confusion_scatter, mre, similarity_distribution};

/// Per-Hamiltonian results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemMetrics {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<HamiltonianSpec>,
    /// Keys among `real`, `label`, `dm`, `dmvqe`, `rpvqe`.
    pub energies: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub epochs: BTreeMap<String, Option<usize>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub traces: BTreeMap<String, Vec<f64>>,
}

impl ItemMetrics {
    fn new(name: impl Into<String>, spec: Option<HamiltonianSpec>) -> Self {
        Self {
            name: name.into(),
            group: None,
            spec,
            energies: BTreeMap::new(),
            epochs: BTreeMap::new(),
            traces: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub kind: String,
    pub items: Vec<ItemMetrics>,
    pub aggregates: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub similarities: Vec<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub trapped: BTreeMap<String, usize>,
}

impl MetricsReport {
    fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_string(),
            ..Self::default()
        }
    }

    fn energies(&self, key: &str, group: Option<&str>) -> Vec<f64> {
        self.items
            .iter()
            .filter(|i| group.is_none() || i.group.as_deref() == group)
            .filter_map(|i| i.energies.get(key).copied())
            .collect()
    }

    /// MRE of energy `key` against `real`, over all items or one group.
    pub fn mre_vs_real(&self, key: &str, group: Option<&str>) -> Result<f64> {
        mre(&self.energies(key, group), &self.energies("real", group))
    }
}

/// Output files of one run, with their SHA-256 digests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub config: serde_json::Value,
    pub outputs: BTreeMap<String, String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORT_FILE: &str = "report.json";

struct Outputs {
    dir: PathBuf,
    files: BTreeMap<String, String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn record(&mut self, name: &str) -> Result<()> {
        let bytes = fs::read(self.path(name))?;
        self.files.insert(name.to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.path(name))?);
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        drop(w);
        self.record(name)
    }

    fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_path(self.path(name)).map_err(csv_err)?;
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush()?;
        drop(w);
        self.record(name)
    }

    fn finish(self, kind: &str, config: &Experiment) -> Result<()> {
        let manifest = Manifest {
            kind: kind.to_string(),
            config: serde_json::to_value(config)?,
            outputs: self.files,
        };
        let mut w = BufWriter::new(File::create(self.dir.join(MANIFEST_FILE))?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

fn check_inputs(experiment: &Experiment) -> Result<()> {
    for p in experiment.inputs() {
        if !p.exists() {
            return Err(CliError::MissingArtifact(p.to_path_buf()));
        }
    }
    Ok(())
}

pub fn load_model(path: &Path) -> Result<NoisePredictor> {
    if !path.exists() {
        return Err(CliError::MissingArtifact(path.to_path_buf()));
    }
    Ok(NoisePredictor::load(BufReader::new(File::open(path)?))?)
}

pub fn load_staged_dataset(path: &Path) -> Result<Dataset> {
    if !path.exists() {
        return Err(CliError::MissingArtifact(path.to_path_buf()));
    }
    Ok(load_dataset(path)?)
}

/// Runs one experiment into `out_dir`, returning its report.
pub fn run_experiment(experiment: &Experiment, out_dir: &Path) -> Result<MetricsReport> {
    check_inputs(experiment)?;
    let mut out = Outputs::new(out_dir)?;
    let report = match experiment {
        Experiment::DatasetGen(c) => dataset_gen(c, &mut out)?,
        Experiment::DmTrain(c) => dm_train(c, &mut out)?,
        Experiment::DmvqeEval(c) => dmvqe_eval(c)?,
        Experiment::IsingEpochs(c) => ising_epochs(c)?,
        Experiment::HubbardDepth(c) => hubbard_depth(c)?,
        Experiment::BpScan(c) => bp_scan(c, &mut out)?,
    };
    out.write_json(REPORT_FILE, &report)?;
    out.finish(experiment.kind(), experiment)?;
    Ok(report)
}

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const MODEL_FILE: &str = "model.ckpt";

fn dataset_gen(c: &DatasetGenConfig, out: &mut Outputs) -> Result<MetricsReport> {
    let layout = c.layout.to_layout();
    let records = generate_labels(&c.grid, &layout, &c.labels)?;
    save_dataset(&out.path(DATASET_FILE), &DatasetHeader::new(layout, c.grid.clone()), &records)?;
    out.record(DATASET_FILE)?;
    let mut report = MetricsReport::new("dataset-gen");
    for (i, r) in records.iter().enumerate() {
        let mut item = ItemMetrics::new(format!("record-{i}"), Some(r.spec));
        item.energies.insert("real".into(), r.exact_energy);
        item.energies.insert("label".into(), r.label_energy);
        report.items.push(item);
    }
    if !records.is_empty() {
        let m = report.mre_vs_real("label", None)?;
        report.aggregates.insert("mre_label".into(), m);
    }
    report.aggregates.insert("records".into(), records.len() as f64);
    Ok(report)
}

fn dm_train(c: &DmTrainConfig, out: &mut Outputs) -> Result<MetricsReport> {
    let dataset = load_staged_dataset(&c.dataset)?;
    let header = dataset
        .header
        .ok_or_else(|| CliError::validation(format!("{} holds no records", c.dataset.display())))?;
    let trained = train_dm(&dataset.records, &c.training)?;
    {
        let mut w = BufWriter::new(File::create(out.path(MODEL_FILE))?);
        trained.model.save(&mut w)?;
        w.flush()?;
    }
    out.record(MODEL_FILE)?;
    let rows: Vec<Vec<String>> = trained
        .loss_trace
        .iter()
        .enumerate()
        .map(|(i, l)| vec![(i + 1).to_string(), l.to_string()])
        .collect();
    out.write_csv("loss.csv", &["epoch", "loss"], &rows)?;

    let mut report = MetricsReport::new("dm-train");
    report.aggregates.insert("final_loss".into(), *trained.loss_trace.last().expect("epochs >= 1"));
    if let Some(mode) = c.evaluate {
        let sim = similarity_distribution(&trained.model, &dataset.records, &header.layout, mode)?;
        let scatter = confusion_scatter(&trained.model, &dataset.records, &header.layout, mode)?;
        report.aggregates.insert("median_similarity".into(), sim.median);
        report.aggregates.insert("exact_ones".into(), sim.exact_ones as f64);
        report.aggregates.insert("mre_dm_vs_label".into(), scatter.mre);
        for (i, (r, p)) in dataset.records.iter().zip(&scatter.points).enumerate() {
            let mut item = ItemMetrics::new(format!("record-{i}"), Some(r.spec));
            item.energies.insert("real".into(), r.exact_energy);
            item.energies.insert("label".into(), p.e_label);
            item.energies.insert("dm".into(), p.e_dm);
            report.items.push(item);
        }
        out.write_json("similarity.json", &sim)?;
        out.write_json("confusion.json", &scatter)?;
        report.similarities = sim.values;
    }
    report.aggregates.insert("weights".into(), trained.model.n_weights() as f64);
    let _ = model_hash;
    Ok(report)
}

fn model_layout(model: &NoisePredictor) -> CircuitLayout {
    let (l, n) = model.grid_shape();
    CircuitLayout::new(n, l)
}

/// Seed shared by the paired runs on item `index`.
pub fn item_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, &[index as u64])
}

fn dmvqe_eval(c: &DmvqeEvalConfig) -> Result<MetricsReport> {
    let model = load_model(&c.model)?;
    let layout = model_layout(&model);
    let mut report = MetricsReport::new("dmvqe-eval");
    let mut index = 0;
    for region in &c.regions {
        for j in region.j.points() {
            for hv in region.h.points() {
                let spec = spec_at(c.family, layout.n_qubits, j, hv, c.boundary);
                let h = spec.build()?;
                let seed = item_seed(c.seed, index);
                index += 1;
                let opt = OptimizerConfig::new(c.epochs, seed).with_learning_rate(c.learning_rate);
                let (grid, e_dm) = generate_best_of(&model, &h, &layout, c.best_of, seed)?;
                let dm = optimize_from(&h, &layout, &grid, &opt)?;
                let rp = run_rpvqe(&h, &layout, &opt)?;
                let mut item = ItemMetrics::new(format!("J={j},h={hv}"), Some(spec));
                item.group = Some(region.name.clone());
                item.energies.insert("real".into(), exact_ground_energy(&h)?);
                item.energies.insert("dm".into(), e_dm);
                item.energies.insert("dmvqe".into(), dm.final_energy);
                item.energies.insert("rpvqe".into(), rp.final_energy);
                item.traces.insert("dmvqe".into(), dm.energy_trace);
                item.traces.insert("rpvqe".into(), rp.energy_trace);
                report.items.push(item);
            }
        }
    }
    if report.items.is_empty() {
        return Err(CliError::validation("evaluation grid is empty"));
    }
    for key in ["dm", "dmvqe", "rpvqe"] {
        report.aggregates.insert(format!("mre_{key}"), report.mre_vs_real(key, None)?);
        for region in &c.regions {
            report
                .aggregates
                .insert(format!("mre_{key}_{}", region.name), report.mre_vs_real(key, Some(&region.name))?);
        }
    }
    let better = report
        .items
        .iter()
        .filter(|i| {
            let real = i.energies["real"];
            let err = |k: &str| (i.energies[k] - real).abs();
            err("dmvqe") < err("rpvqe")
        })
        .count();
    report
        .aggregates
        .insert("fraction_dmvqe_better".into(), better as f64 / report.items.len() as f64);
    Ok(report)
}

fn ising_epochs(c: &IsingEpochsConfig) -> Result<MetricsReport> {
    let model = load_model(&c.model)?;
    let layout = model_layout(&model);
    if c.grid.n_qubits != layout.n_qubits {
        return Err(CliError::validation(format!(
            "grid has {} qubits, model {}",
            c.grid.n_qubits, layout.n_qubits
        )));
    }
    let mut report = MetricsReport::new("ising-epochs");
    if c.repeats == 0 {
        return Err(CliError::validation("repeats must be positive"));
    }
    let mut trapped = BTreeMap::from([("dmvqe".to_string(), 0), ("rpvqe".to_string(), 0)]);
    for (index, spec) in c.grid.specs()?.into_iter().enumerate() {
        let h = spec.build()?;
        let real = exact_ground_energy(&h)?;
        for r in 0..c.repeats {
            let seed = derive_seed(c.seed, &[index as u64, r as u64]);
            let opt = OptimizerConfig::new(1, seed)
                .with_learning_rate(c.learning_rate)
                .with_target(c.target_mre, c.epoch_cap);
            let (grid, e_dm) = generate_best_of(&model, &h, &layout, c.best_of, seed)?;
            let runs = [("dmvqe", optimize_from(&h, &layout, &grid, &opt)?), ("rpvqe", run_rpvqe(&h, &layout, &opt)?)];
            let mut item = ItemMetrics::new(format!("item-{index}/repeat={r}"), Some(spec));
            item.group = Some(format!("item-{index}"));
            item.energies.insert("real".into(), real);
            item.energies.insert("dm".into(), e_dm);
            for (name, run) in runs {
                let outcome = epochs_to_target(&run.energy_trace, real, c.target_mre, c.epoch_cap);
                let epochs = match outcome {
                    TargetOutcome::Reached(k) => Some(k),
                    TargetOutcome::Trapped => {
                        *trapped.get_mut(name).expect("known method") += 1;
                        None
                    }
                };
                item.energies.insert(name.into(), run.final_energy);
                item.epochs.insert(name.into(), epochs);
                item.traces.insert(name.into(), run.energy_trace);
            }
            report.items.push(item);
        }
    }
    report.aggregates.insert("runs".into(), report.items.len() as f64);
    for name in ["dmvqe", "rpvqe"] {
        let reached: Vec<f64> = report.items.iter().filter_map(|i| i.epochs[name]).map(|e| e as f64).collect();
        if !reached.is_empty() {
            report
                .aggregates
                .insert(format!("mean_epochs_{name}"), reached.iter().sum::<f64>() / reached.len() as f64);
        }
        report
            .aggregates
            .insert(format!("trapped_{name}"), trapped[name] as f64);
    }
    report.trapped = trapped;
    Ok(report)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance by Welford's update, exactly zero for identical values.
fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let (mut m, mut m2) = (0.0, 0.0);
    for (k, x) in xs.iter().enumerate() {
        let d = x - m;
        m += d / (k + 1) as f64;
        m2 += d * (x - m);
    }
    m2 / (xs.len() - 1) as f64
}

fn hubbard_depth(c: &HubbardDepthConfig) -> Result<MetricsReport> {
    let model = load_model(&c.model)?;
    let shallow = model_layout(&model);
    let spec = HamiltonianSpec::Hubbard {
        n_qubits: 2 * c.sites,
        t: c.t,
        u: c.u,
    };
    let h = spec.build()?;
    if h.n_qubits() != shallow.n_qubits {
        return Err(CliError::validation(format!(
            "Hubbard model has {} qubits, diffusion model {}",
            h.n_qubits(),
            shallow.n_qubits
        )));
    }
    if c.repeats == 0 {
        return Err(CliError::validation("repeats must be positive"));
    }
    let real = exact_ground_energy(&h)?;
    let (generated, e_dm) = generate_best_of(&model, &h, &shallow, c.best_of, c.seed)?;
    let mut report = MetricsReport::new("hubbard-depth");
    report.aggregates.insert("real".into(), real);
    report.aggregates.insert("dm".into(), e_dm);
    for &extra in &c.extra_layers {
        let deep = shallow.with_layers(shallow.n_layers + extra);
        let mut finals: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for r in 0..c.repeats {
            let seed = item_seed(c.seed, r);
            let opt = OptimizerConfig::new(c.epochs, seed).with_learning_rate(c.learning_rate);
            let init = hybrid_initializer(&generated, &deep, seed)?;
            let dm = optimize_from(&h, &deep, &init, &opt)?;
            let rp = run_rpvqe(&h, &deep, &opt)?;
            let mut item = ItemMetrics::new(format!("L={}/repeat={r}", deep.n_layers), Some(spec));
            item.group = Some(format!("L={}", deep.n_layers));
            item.energies.insert("real".into(), real);
            item.energies.insert("dmvqe".into(), dm.final_energy);
            item.energies.insert("rpvqe".into(), rp.final_energy);
            finals.entry("dmvqe").or_default().push(dm.final_energy);
            finals.entry("rpvqe").or_default().push(rp.final_energy);
            item.traces.insert("dmvqe".into(), dm.energy_trace);
            item.traces.insert("rpvqe".into(), rp.energy_trace);
            report.items.push(item);
        }
        for (name, xs) in finals {
            report.aggregates.insert(format!("mean_{name}_L{}", deep.n_layers), mean(&xs));
            report.aggregates.insert(format!("var_{name}_L{}", deep.n_layers), variance(&xs));
        }
    }
    Ok(report)
}

fn bp_scan(c: &BpScanConfig, out: &mut Outputs) -> Result<MetricsReport> {
    let h = c.hamiltonian.build()?;
    let layout = c.layout.to_layout();
    if layout.n_qubits != h.n_qubits() {
        return Err(CliError::validation("layout and Hamiltonian qubit counts differ"));
    }
    let scan = scan_depths(&layout, &h, &c.depths, c.n_samples, c.target, c.seed)?;
    {
        let mut w = BufWriter::new(File::create(out.path("scan.csv"))?);
        scan.write_csv(&mut w)?;
        w.flush()?;
    }
    out.record("scan.csv")?;
    let mut report = MetricsReport::new("bp-scan");
    for (d, v) in scan.depths.iter().zip(&scan.variances) {
        report.aggregates.insert(format!("variance_L{d}"), *v);
    }
    if scan.depths.len() >= 3 {
        let depths: Vec<f64> = scan.depths.iter().map(|d| *d as f64).collect();
        if let Ok(s) = spearman(&depths, &scan.variances) {
            report.aggregates.insert("spearman_rho".into(), s.rho);
            report.aggregates.insert("spearman_p".into(), s.p_value);
        }
    }
    Ok(report)
}

/// Best-of-k generation for one Hamiltonian, with its manifest.
pub fn run_sample(c: &SampleConfig, out_dir: &Path) -> Result<serde_json::Value> {
    let model = load_model(&c.model)?;
    let layout = model_layout(&model);
    let h = c.hamiltonian.build()?;
    let options = dmvqe_core::diffusion::SampleOptions {
        deterministic: c.deterministic,
    };
    let candidates = dmvqe_core::diffusion::generate_candidates(&model, &h, &layout, c.best_of, c.seed, options)?;
    let best = candidates
        .iter()
        .enumerate()
        .reduce(|a, b| if b.1.energy < a.1.energy { b } else { a })
        .map(|(i, _)| i)
        .expect("k >= 1");
    let manifest = dmvqe_core::diffusion::SamplingManifest::new(&model, c.best_of, c.seed, options)?;
    let value = serde_json::json!({
        "manifest": manifest,
        "best_index": best,
        "best": candidates[best],
        "candidates": candidates,
    });
    let mut out = Outputs::new(out_dir)?;
    out.write_json("samples.json", &value)?;
    let mut w = BufWriter::new(File::create(out_dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(&mut w, &serde_json::json!({"kind": "sample", "config": c, "outputs": out.files}))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(value)
}

/// One VQE run of the configured method.
pub fn run_vqe(c: &VqeConfig, out_dir: &Path) -> Result<dmvqe_core::vqe::RunResult> {
    use dmvqe_core::vqe::{run_dmvqe, run_dmvqe_prime, run_nnvqe, GenerationConfig};
    let h = c.hamiltonian.build()?;
    let layout = c.layout.to_layout();
    let model = || -> Result<NoisePredictor> {
        let path = c
            .model
            .as_ref()
            .ok_or_else(|| CliError::validation("this method needs a model path"))?;
        load_model(path)
    };
    let generation = GenerationConfig {
        best_of: c.best_of,
        seed: c.optimizer.seed,
    };
    let result = match c.method {
        VqeMethod::Rpvqe => run_rpvqe(&h, &layout, &c.optimizer)?,
        VqeMethod::Nnvqe => run_nnvqe(&h, &layout, &c.optimizer)?.run,
        VqeMethod::Dmvqe => run_dmvqe(&h, &layout, &model()?, &generation, &c.optimizer)?,
        VqeMethod::DmvqePrime => run_dmvqe_prime(&h, &layout, &model()?, &generation, &c.optimizer)?,
    };
    let mut out = Outputs::new(out_dir)?;
    out.write_json("run.json", &result)?;
    let mut w = BufWriter::new(File::create(out_dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(&mut w, &serde_json::json!({"kind": "vqe", "config": c, "outputs": out.files}))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(result)
}

/// Labels of a grid, for reuse by callers holding a dataset.
pub fn label_grids(dataset: &Dataset) -> Vec<ParamGrid> {
    dataset.records.iter().map(|r| r.label_params.clone()).collect()
}
