//! Barren-plateau diagnostics: Monte Carlo variance of one cost partial
//! derivative over uniformly drawn parameters, scanned over depth.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid_arg, Result};
use crate::pauli::PauliSum;
use crate::seed::{rng_for, stream};
use crate::simulator::{partial_derivative, CircuitLayout};

pub const DEFAULT_SAMPLES: usize = 500;

/// Which rotation the derivative is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetParam {
    pub layer: usize,
    pub qubit: usize,
}

impl Default for TargetParam {
    fn default() -> Self {
        Self { layer: 0, qubit: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub variance: f64,
    /// Standard error of the variance, from the spread of the centred squares.
    pub stderr: f64,
    pub n_samples: usize,
}

/// Unbiased variance of `∂E/∂θ_target` over `n_samples` grids drawn
/// uniformly from `[-1, 1]^{L×N}`.
pub fn variance_of_partial(
    layout: &CircuitLayout,
    h: &PauliSum,
    n_samples: usize,
    target: TargetParam,
    seed: u64,
) -> Result<VarianceEstimate> {
    if n_samples < 2 {
        return Err(invalid_arg("variance needs at least two samples"));
    }
    layout.validate()?;
    if target.layer >= layout.n_layers || target.qubit >= layout.n_qubits {
        return Err(invalid_arg(format!(
            "target ({}, {}) outside a {}x{} grid",
            target.layer, target.qubit, layout.n_layers, layout.n_qubits
        )));
    }
    let index = target.layer * layout.n_qubits + target.qubit;
    let mut rng = rng_for(seed, &[stream::BP_SAMPLES]);
    let mut values = vec![0.0; layout.n_params()];
    let mut derivs = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        values.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..=1.0));
        derivs.push(partial_derivative(layout, &values, index, h)?);
    }
    Ok(estimate(&derivs))
}

fn estimate(xs: &[f64]) -> VarianceEstimate {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let variance = sq.iter().sum::<f64>() / (n - 1.0);
    let m2 = sq.iter().sum::<f64>() / n;
    let spread = sq.iter().map(|s| (s - m2) * (s - m2)).sum::<f64>() / (n - 1.0);
    VarianceEstimate {
        variance,
        stderr: (spread / n).sqrt(),
        n_samples: xs.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceScan {
    pub depths: Vec<usize>,
    pub variances: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
    pub target_param: TargetParam,
}

/// One estimate per depth; every depth uses the same seed.
pub fn scan_depths(
    template: &CircuitLayout,
    h: &PauliSum,
    depths: &[usize],
    n_samples: usize,
    target: TargetParam,
    seed: u64,
) -> Result<VarianceScan> {
    if depths.is_empty() {
        return Err(invalid_arg("no depths to scan"));
    }
    let mut variances = Vec::with_capacity(depths.len());
    let mut stderrs = Vec::with_capacity(depths.len());
    for &l in depths {
        let est = variance_of_partial(&template.with_layers(l), h, n_samples, target, seed)?;
        variances.push(est.variance);
        stderrs.push(est.stderr);
    }
    Ok(VarianceScan {
        depths: depths.to_vec(),
        variances,
        stderrs,
        n_samples,
        seed,
        target_param: target,
    })
}

impl VarianceScan {
    /// CSV with columns `depth,variance,stderr,n_samples,seed`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["depth", "variance", "stderr", "n_samples", "seed"])
            .map_err(csv_err)?;
        for ((d, v), s) in self.depths.iter().zip(&self.variances).zip(&self.stderrs) {
            out.write_record([d.to_string(), v.to_string(), s.to_string(), self.n_samples.to_string(), self.seed.to_string()])
                .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> crate::CoreError {
    crate::CoreError::Io(std::io::Error::other(e))
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|a, b| xs[*a].total_cmp(&xs[*b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    pub rho: f64,
    /// Two-sided p-value from the t approximation with `n - 2` degrees of
    /// freedom.
    pub p_value: f64,
}

pub fn spearman(a: &[f64], b: &[f64]) -> Result<Spearman> {
    if a.len() != b.len() || a.len() < 3 {
        return Err(invalid_arg("Spearman needs two equal-length series of at least 3 points"));
    }
    let rho = pearson(&ranks(a), &ranks(b));
    if !rho.is_finite() {
        return Err(invalid_arg("Spearman undefined for a constant series"));
    }
    let df = (a.len() - 2) as f64;
    let p_value = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Ok(Spearman { rho, p_value })
}
