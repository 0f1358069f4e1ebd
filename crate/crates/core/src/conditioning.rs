//! Hamiltonian prompt embeddings.
//!
//! Each prompt token is embedded by signed feature hashing of its character
//! trigrams into 512 buckets and normalized; a Hamiltonian's embedding is the
//! renormalized mean of its term embeddings. Tokens that share digits share
//! trigrams, so nearby coefficients land on nearby vectors.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};

pub const EMBED_DIM: usize = 512;
pub const DEFAULT_HASH_SEED: u64 = 0x9E37_79B9_7F4A_7C15;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Unit-norm 512-dimensional conditioning vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PromptEmbedding {
    vector: Vec<f64>,
}

impl PromptEmbedding {
    /// Normalizes `raw` to unit length.
    pub fn from_raw(raw: Vec<f64>) -> Result<Self> {
        if raw.len() != EMBED_DIM {
            return Err(invalid_arg(format!(
                "embedding has {} entries, expected {EMBED_DIM}",
                raw.len()
            )));
        }
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(invalid_arg("embedding has zero or non-finite norm"));
        }
        Ok(Self {
            vector: raw.into_iter().map(|v| v / norm).collect(),
        })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.vector
    }

    pub fn cosine(&self, other: &PromptEmbedding) -> f64 {
        self.vector.iter().zip(&other.vector).map(|(a, b)| a * b).sum()
    }
}

impl TryFrom<Vec<f64>> for PromptEmbedding {
    type Error = crate::CoreError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        let e = PromptEmbedding::from_raw(v.clone())?;
        // Stored vectors are already unit norm; keep their exact bits.
        Ok(if (e.vector.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-9 {
            PromptEmbedding { vector: v }
        } else {
            e
        })
    }
}

impl From<PromptEmbedding> for Vec<f64> {
    fn from(e: PromptEmbedding) -> Self {
        e.vector
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET ^ seed, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME)
    })
}

/// Embeds one prompt token.
pub fn encode_term(token: &str, seed: u64) -> Result<PromptEmbedding> {
    if token.is_empty() {
        return Err(invalid_arg("empty prompt token"));
    }
    let padded: Vec<u8> = std::iter::once(b' ')
        .chain(token.bytes())
        .chain(std::iter::once(b' '))
        .collect();
    let mut v = vec![0.0; EMBED_DIM];
    for gram in padded.windows(3) {
        let h = fnv1a(seed, gram);
        let bucket = (h % EMBED_DIM as u64) as usize;
        v[bucket] += if h >> 63 == 1 { -1.0 } else { 1.0 };
    }
    PromptEmbedding::from_raw(v)
}

/// Mean of the per-token embeddings, renormalized. Tokens are summed in
/// sorted order so the result is bit-identical under any permutation.
pub fn encode_hamiltonian(prompts: &[String], seed: u64) -> Result<PromptEmbedding> {
    if prompts.is_empty() {
        return Err(invalid_arg("no prompt tokens to encode"));
    }
    let mut sorted: Vec<&String> = prompts.iter().collect();
    sorted.sort();
    let mut sum = vec![0.0; EMBED_DIM];
    for token in sorted {
        let e = encode_term(token, seed)?;
        sum.iter_mut().zip(e.as_slice()).for_each(|(s, v)| *s += v);
    }
    let n = prompts.len() as f64;
    PromptEmbedding::from_raw(sum.into_iter().map(|s| s / n).collect())
}
