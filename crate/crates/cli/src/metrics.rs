//! Evaluation metrics: mean relative error, cosine similarity, similarity
//! histograms and energy confusion scatters.

use dmvqe_core::dataset::LabelRecord;
use dmvqe_core::diffusion::{candidate_seed, condition_for, generate_best_of_with, sample_batch, NoisePredictor, SampleOptions};
use dmvqe_core::simulator::{energy, CircuitLayout, ParamGrid};
use dmvqe_core::vqe::relative_error;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Mean of `|a_i - b_i| / |b_i|`. A zero reference falls back to the
/// absolute error divided by `zero_scale`.
pub fn mre_scaled(estimates: &[f64], references: &[f64], zero_scale: f64) -> Result<f64> {
    if estimates.len() != references.len() {
        return Err(CliError::validation(format!(
            "{} estimates for {} references",
            estimates.len(),
            references.len()
        )));
    }
    if estimates.is_empty() {
        return Err(CliError::validation("MRE of an empty list"));
    }
    let total: f64 = estimates
        .iter()
        .zip(references)
        .map(|(a, b)| relative_error(*a, *b, zero_scale))
        .sum();
    Ok(total / estimates.len() as f64)
}

pub fn mre(estimates: &[f64], references: &[f64]) -> Result<f64> {
    mre_scaled(estimates, references, 1.0)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CliError::validation(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>();
    let nb = b.iter().map(|x| x * x).sum::<f64>();
    if na == 0.0 || nb == 0.0 {
        return Err(CliError::validation("cosine similarity of a zero vector"));
    }
    // sqrt(fl(x * x)) == x, so identical vectors score exactly 1.
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Equal-width histogram over `[lo, hi]`; the last bin is closed.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<HistogramBin> {
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            lower: lo + i as f64 * width,
            upper: lo + (i + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for v in values {
        if *v < lo || *v > hi {
            continue;
        }
        let i = (((v - lo) / width) as usize).min(bins - 1);
        out[i].count += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub values: Vec<f64>,
    pub histogram: Vec<HistogramBin>,
    pub median: f64,
    /// Number of generated grids identical in direction to their label.
    pub exact_ones: usize,
    /// Set when any similarity equals 1: generated grids should resemble the
    /// labels without copying them.
    pub anomalous: bool,
}

pub const SIMILARITY_BINS: usize = 40;

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Similarities between paired generated and label grids.
pub fn similarity_from_grids(generated: &[ParamGrid], labels: &[ParamGrid]) -> Result<SimilarityReport> {
    if generated.len() != labels.len() || generated.is_empty() {
        return Err(CliError::validation("need equal, non-empty lists of grids"));
    }
    let values = generated
        .iter()
        .zip(labels)
        .map(|(g, l)| cosine_similarity(g.values(), l.values()))
        .collect::<Result<Vec<f64>>>()?;
    let exact_ones = values.iter().filter(|v| **v == 1.0).count();
    Ok(SimilarityReport {
        histogram: histogram(&values, -1.0, 1.0, SIMILARITY_BINS),
        median: median(&values),
        exact_ones,
        anomalous: exact_ones > 0,
        values,
    })
}

/// How grids are drawn for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationMode {
    /// 1 draws a single sample per record.
    pub best_of: usize,
    pub seed: u64,
    #[serde(default)]
    pub deterministic: bool,
}

impl GenerationMode {
    pub fn single(seed: u64) -> Self {
        Self {
            best_of: 1,
            seed,
            deterministic: false,
        }
    }

    fn options(&self) -> SampleOptions {
        SampleOptions {
            deterministic: self.deterministic,
        }
    }
}

fn record_layout(model: &NoisePredictor, template: &CircuitLayout) -> CircuitLayout {
    let (l, n) = model.grid_shape();
    let mut layout = template.with_layers(l);
    layout.n_qubits = n;
    layout
}

/// Generated grid per record. Record `i` uses seed `mode.seed + i`.
pub fn generate_for_records(
    model: &NoisePredictor,
    records: &[LabelRecord],
    template: &CircuitLayout,
    mode: GenerationMode,
) -> Result<Vec<ParamGrid>> {
    let seed_of = |i: usize| mode.seed.wrapping_add(i as u64);
    if mode.best_of == 1 {
        let conds = records
            .iter()
            .map(|r| Ok(condition_for(&r.spec.build()?, model.hash_seed())?))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<_> = conds.iter().collect();
        let seeds: Vec<u64> = (0..records.len()).map(|i| candidate_seed(seed_of(i), 0)).collect();
        return Ok(sample_batch(model, &refs, &seeds, mode.options())?);
    }
    let layout = record_layout(model, template);
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let h = r.spec.build()?;
            Ok(generate_best_of_with(model, &h, &layout, mode.best_of, seed_of(i), mode.options())?.0)
        })
        .collect()
}

pub fn similarity_distribution(
    model: &NoisePredictor,
    records: &[LabelRecord],
    template: &CircuitLayout,
    mode: GenerationMode,
) -> Result<SimilarityReport> {
    let generated = generate_for_records(model, records, template, mode)?;
    let labels: Vec<ParamGrid> = records.iter().map(|r| r.label_params.clone()).collect();
    similarity_from_grids(&generated, &labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub e_label: f64,
    pub e_dm: f64,
    /// `e_dm` minus the regression line's prediction.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionScatter {
    pub points: Vec<ScatterPoint>,
    pub slope: f64,
    pub intercept: f64,
    pub mre: f64,
}

/// Least-squares line of `e_dm` on `e_label`, residuals and the MRE of
/// `e_dm` against `e_label`.
pub fn confusion_from_energies(e_label: &[f64], e_dm: &[f64]) -> Result<ConfusionScatter> {
    let mre = mre(e_dm, e_label)?;
    let n = e_label.len() as f64;
    let mx = e_label.iter().sum::<f64>() / n;
    let my = e_dm.iter().sum::<f64>() / n;
    let sxx: f64 = e_label.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = e_label.iter().zip(e_dm).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let points = e_label
        .iter()
        .zip(e_dm)
        .map(|(x, y)| ScatterPoint {
            e_label: *x,
            e_dm: *y,
            residual: y - (slope * x + intercept),
        })
        .collect();
    Ok(ConfusionScatter {
        points,
        slope,
        intercept,
        mre,
    })
}

/// Single-run energies of generated grids against label energies.
pub fn confusion_scatter(
    model: &NoisePredictor,
    records: &[LabelRecord],
    template: &CircuitLayout,
    mode: GenerationMode,
) -> Result<ConfusionScatter> {
    let generated = generate_for_records(model, records, template, mode)?;
    scatter_for_grids(records, &generated, &record_layout(model, template))
}

pub fn scatter_for_grids(records: &[LabelRecord], generated: &[ParamGrid], layout: &CircuitLayout) -> Result<ConfusionScatter> {
    let mut e_label = Vec::with_capacity(records.len());
    let mut e_dm = Vec::with_capacity(records.len());
    for (r, g) in records.iter().zip(generated) {
        e_label.push(r.label_energy);
        e_dm.push(energy(layout, g, &r.spec.build()?)?);
    }
    confusion_from_energies(&e_label, &e_dm)
}
