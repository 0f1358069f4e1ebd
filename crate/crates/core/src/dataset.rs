//! Label-parameter datasets: generation over a (J, h) grid and JSON-lines
//! persistence.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conditioning::{encode_hamiltonian, PromptEmbedding, DEFAULT_HASH_SEED};
use crate::error::{invalid_arg, invalid_spec, CoreError, Result};
use crate::pauli::{exact_ground_energy, to_prompts, Boundary, Family, HamiltonianSpec};
use crate::seed::{derive_seed, stream};
use crate::simulator::{CircuitLayout, ParamGrid};
use crate::vqe::{run_nnvqe, run_rpvqe, OptimizerConfig, DEFAULT_NETWORK_LEARNING_RATE, DEFAULT_VQE_LEARNING_RATE};

pub const DATASET_VERSION: u32 = 1;
pub const DEFAULT_RESTARTS: usize = 5;

/// Inclusive arithmetic range `start, start + step, …, end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl Range {
    pub fn new(start: f64, end: f64, step: f64) -> Self {
        Self { start, end, step }
    }

    pub fn single(value: f64) -> Self {
        Self::new(value, value, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.start.is_finite() || !self.end.is_finite() {
            return Err(invalid_spec(format!("bad range {self:?}")));
        }
        if self.end < self.start {
            return Err(invalid_spec(format!("range end {} below start {}", self.end, self.start)));
        }
        Ok(())
    }

    /// Points rounded to 12 decimals so `1 + 3 * 0.1` lands on `1.3`.
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.end - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| ((self.start + i as f64 * self.step) * 1e12).round() / 1e12)
            .collect()
    }
}

/// A family, a size and the two coupling ranges to sweep. For Hubbard the
/// ranges are over (t, U) and the boundary is ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub family: Family,
    pub n_qubits: usize,
    pub j: Range,
    pub h: Range,
    #[serde(default = "periodic")]
    pub boundary: Boundary,
}

fn periodic() -> Boundary {
    Boundary::Periodic
}

impl GridSpec {
    pub fn new(family: Family, n_qubits: usize, j: Range, h: Range) -> Self {
        Self {
            family,
            n_qubits,
            j,
            h,
            boundary: Boundary::Periodic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.j.validate()?;
        self.h.validate()
    }

    /// Specs in row-major (J outer, h inner) order.
    pub fn specs(&self) -> Result<Vec<HamiltonianSpec>> {
        self.validate()?;
        let mut out = Vec::new();
        for j in self.j.points() {
            for h in self.h.points() {
                out.push(spec_at(self.family, self.n_qubits, j, h, self.boundary));
            }
        }
        Ok(out)
    }
}

pub fn spec_at(family: Family, n_qubits: usize, j: f64, h: f64, boundary: Boundary) -> HamiltonianSpec {
    match family {
        Family::Heisenberg => HamiltonianSpec::Heisenberg { n_qubits, j, h, boundary },
        Family::Ising => HamiltonianSpec::Ising { n_qubits, j, h, boundary },
        Family::Hubbard => HamiltonianSpec::Hubbard { n_qubits, t: j, u: h },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub spec: HamiltonianSpec,
    #[serde(rename = "embedding")]
    pub prompt_embedding: PromptEmbedding,
    #[serde(rename = "params")]
    pub label_params: ParamGrid,
    pub label_energy: f64,
    pub exact_energy: f64,
}

impl LabelRecord {
    pub fn validate(&self) -> Result<()> {
        if self.label_energy < self.exact_energy - 1e-9 {
            return Err(invalid_arg(format!(
                "label energy {} below exact ground energy {}",
                self.label_energy, self.exact_energy
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMethod {
    Nnvqe,
    Rpvqe,
}

/// How restart seeds are assigned across grid points.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RestartSeeds {
    /// Restart `r` starts from the same seed at every grid point.
    #[default]
    Shared,
    /// Every (point, restart) pair gets its own seed.
    PerPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    pub method: LabelMethod,
    pub restarts: usize,
    #[serde(default)]
    pub restart_seeds: RestartSeeds,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    #[serde(default = "default_hash_seed")]
    pub hash_seed: u64,
}

fn default_hash_seed() -> u64 {
    DEFAULT_HASH_SEED
}

impl LabelConfig {
    /// One network initialization per restart, shared across the grid.
    pub fn nnvqe(epochs: usize, seed: u64) -> Self {
        Self {
            method: LabelMethod::Nnvqe,
            restarts: DEFAULT_RESTARTS,
            restart_seeds: RestartSeeds::Shared,
            epochs,
            learning_rate: DEFAULT_NETWORK_LEARNING_RATE,
            seed,
            hash_seed: DEFAULT_HASH_SEED,
        }
    }

    /// Random initialization drawn afresh for every Hamiltonian.
    pub fn rpvqe(epochs: usize, seed: u64) -> Self {
        Self {
            method: LabelMethod::Rpvqe,
            restart_seeds: RestartSeeds::PerPoint,
            learning_rate: DEFAULT_VQE_LEARNING_RATE,
            ..Self::nnvqe(epochs, seed)
        }
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn with_restart_seeds(mut self, policy: RestartSeeds) -> Self {
        self.restart_seeds = policy;
        self
    }

    fn restart_seed(&self, point: usize, restart: usize) -> u64 {
        match self.restart_seeds {
            RestartSeeds::Shared => derive_seed(self.seed, &[stream::LABEL_RESTART, restart as u64]),
            RestartSeeds::PerPoint => derive_seed(self.seed, &[stream::LABEL_RESTART, restart as u64, point as u64]),
        }
    }
}

/// Best of `restarts` runs on the Hamiltonian at grid index `point`.
pub fn label_one(spec: &HamiltonianSpec, point: usize, layout: &CircuitLayout, config: &LabelConfig) -> Result<LabelRecord> {
    if config.restarts == 0 {
        return Err(invalid_arg("at least one restart is required"));
    }
    let h = spec.build()?;
    let exact_energy = exact_ground_energy(&h)?;
    let prompt_embedding = encode_hamiltonian(&to_prompts(spec, &h), config.hash_seed)?;
    let mut best: Option<(f64, ParamGrid)> = None;
    for r in 0..config.restarts {
        let seed = config.restart_seed(point, r);
        let opt = OptimizerConfig::new(config.epochs, seed).with_learning_rate(config.learning_rate);
        let (e, grid) = match config.method {
            LabelMethod::Nnvqe => {
                let res = run_nnvqe(&h, layout, &opt)?;
                (res.label_energy, res.label)
            }
            LabelMethod::Rpvqe => {
                let res = run_rpvqe(&h, layout, &opt)?;
                (res.final_energy, res.final_params)
            }
        };
        if best.as_ref().map_or(true, |(b, _)| e < *b) {
            best = Some((e, grid));
        }
    }
    let (label_energy, label_params) = best.expect("restarts >= 1");
    Ok(LabelRecord {
        spec: *spec,
        prompt_embedding,
        label_params,
        label_energy,
        exact_energy,
    })
}

/// One record per grid point. Points whose solve fails are logged and
/// skipped.
pub fn generate_labels(grid: &GridSpec, layout: &CircuitLayout, config: &LabelConfig) -> Result<Vec<LabelRecord>> {
    let specs = grid.specs()?;
    if specs.is_empty() {
        return Err(invalid_spec("grid has no points"));
    }
    layout.validate()?;
    if layout.n_qubits != grid.n_qubits {
        return Err(invalid_arg(format!(
            "layout has {} qubits, grid {}",
            layout.n_qubits, grid.n_qubits
        )));
    }
    let mut records = Vec::with_capacity(specs.len());
    for (point, spec) in specs.iter().enumerate() {
        match label_one(spec, point, layout, config) {
            Ok(r) => records.push(r),
            Err(e) => log::warn!("skipping {spec:?}: {e}"),
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: u32,
    pub layout: CircuitLayout,
    pub grid: GridSpec,
}

impl DatasetHeader {
    pub fn new(layout: CircuitLayout, grid: GridSpec) -> Self {
        Self {
            version: DATASET_VERSION,
            layout,
            grid,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Absent only for an empty file.
    pub header: Option<DatasetHeader>,
    pub records: Vec<LabelRecord>,
}

/// Header line then one record per line. An empty record list produces an
/// empty file.
pub fn write_dataset<W: Write>(mut w: W, header: &DatasetHeader, records: &[LabelRecord]) -> Result<()> {
    if records.is_empty() {
        return Ok(());
    }
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(path: &Path, header: &DatasetHeader, records: &[LabelRecord]) -> Result<()> {
    write_dataset(BufWriter::new(File::create(path)?), header, records)
}

/// Parses a dataset stream; `source` only labels errors.
pub fn read_dataset<R: BufRead>(r: R, source: &str) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| CoreError::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut header = None;
    let mut records = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if i == 0 {
            let h: DatasetHeader = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
            if h.version != DATASET_VERSION {
                return Err(parse_err(lineno, format!("unsupported version {}", h.version)));
            }
            header = Some(h);
            continue;
        }
        let rec: LabelRecord = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        rec.validate().map_err(|e| parse_err(lineno, e.to_string()))?;
        records.push(rec);
    }
    Ok(Dataset { header, records })
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    read_dataset(BufReader::new(File::open(path)?), &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_grid() -> GridSpec {
        GridSpec::new(Family::Heisenberg, 2, Range::single(1.0), Range::new(0.0, 0.5, 0.5))
    }

    #[test]
    fn range_points() {
        let r = Range::new(1.0, 4.0, 0.1);
        let p = r.points();
        assert_eq!(p.len(), 31);
        assert_eq!(p[3], 1.3);
        assert_eq!(p[30], 4.0);
        assert_eq!(Range::new(1.0, 4.0, 0.5).points().len(), 7);
        assert_eq!(Range::single(2.5).points(), vec![2.5]);
        assert!(Range::new(1.0, 0.0, 0.1).validate().is_err());
        assert!(Range::new(0.0, 1.0, 0.0).validate().is_err());
    }

    #[test]
    fn full_grid_cardinality() {
        let g = GridSpec::new(Family::Heisenberg, 8, Range::new(1.0, 4.0, 0.1), Range::new(1.0, 4.0, 0.1));
        assert_eq!(g.specs().unwrap().len(), 961);
    }

    #[test]
    fn single_point_grid_gives_one_record() {
        let g = GridSpec::new(Family::Heisenberg, 2, Range::single(1.0), Range::single(0.0));
        let recs = generate_labels(&g, &CircuitLayout::new(2, 1), &LabelConfig::nnvqe(10, 0).with_restarts(2)).unwrap();
        assert_eq!(recs.len(), 1);
        recs[0].validate().unwrap();
    }

    #[test]
    fn round_trip_and_empty_file() {
        let layout = CircuitLayout::new(2, 1);
        let recs = generate_labels(&tiny_grid(), &layout, &LabelConfig::rpvqe(5, 1).with_restarts(1)).unwrap();
        let header = DatasetHeader::new(layout.clone(), tiny_grid());
        let mut buf = Vec::new();
        write_dataset(&mut buf, &header, &recs).unwrap();
        let back = read_dataset(buf.as_slice(), "mem").unwrap();
        assert_eq!(back.records, recs);
        assert_eq!(back.header, Some(header.clone()));

        let mut empty = Vec::new();
        write_dataset(&mut empty, &header, &[]).unwrap();
        assert!(empty.is_empty());
        let back = read_dataset(empty.as_slice(), "mem").unwrap();
        assert!(back.records.is_empty() && back.header.is_none());
    }

    #[test]
    fn truncated_line_names_the_line() {
        let layout = CircuitLayout::new(2, 1);
        let recs = generate_labels(&tiny_grid(), &layout, &LabelConfig::rpvqe(5, 1).with_restarts(1)).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &DatasetHeader::new(layout, tiny_grid()), &recs).unwrap();
        buf.truncate(buf.len() - 20);
        match read_dataset(buf.as_slice(), "data.jsonl") {
            Err(CoreError::Parse { line, path, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(path, "data.jsonl");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        assert!(generate_labels(&tiny_grid(), &CircuitLayout::new(3, 1), &LabelConfig::nnvqe(5, 0)).is_err());
    }
}
