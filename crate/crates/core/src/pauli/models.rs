//! The three model families and their text prompts.
//!
//! Spin operators are `S = σ/2`, so an exchange bond `S·S` carries `1/4` of
//! the coupling and a field term `S^z` carries `1/2` of the field.

use serde::{Deserialize, Serialize};

use super::{fermion, jordan_wigner, FermionTerm, Pauli, PauliString, PauliSum};
use crate::error::{invalid_spec, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Heisenberg,
    Ising,
    Hubbard,
}

/// A concrete member of one model family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum HamiltonianSpec {
    Heisenberg {
        n_qubits: usize,
        j: f64,
        h: f64,
        boundary: Boundary,
    },
    Ising {
        n_qubits: usize,
        j: f64,
        h: f64,
        boundary: Boundary,
    },
    /// 1-D open chain; two spin orbitals per site, so `n_qubits` is even.
    Hubbard { n_qubits: usize, t: f64, u: f64 },
}

impl HamiltonianSpec {
    pub fn family(&self) -> Family {
        match self {
            HamiltonianSpec::Heisenberg { .. } => Family::Heisenberg,
            HamiltonianSpec::Ising { .. } => Family::Ising,
            HamiltonianSpec::Hubbard { .. } => Family::Hubbard,
        }
    }

    pub fn n_qubits(&self) -> usize {
        match *self {
            HamiltonianSpec::Heisenberg { n_qubits, .. }
            | HamiltonianSpec::Ising { n_qubits, .. }
            | HamiltonianSpec::Hubbard { n_qubits, .. } => n_qubits,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let params = match *self {
            HamiltonianSpec::Heisenberg { j, h, .. } | HamiltonianSpec::Ising { j, h, .. } => [j, h],
            HamiltonianSpec::Hubbard { t, u, .. } => [t, u],
        };
        if params.iter().any(|p| !p.is_finite()) {
            return Err(invalid_spec(format!("non-finite parameter in {self:?}")));
        }
        if let HamiltonianSpec::Hubbard { n_qubits, .. } = *self {
            if n_qubits == 0 || n_qubits % 2 != 0 {
                return Err(invalid_spec(format!(
                    "Hubbard needs an even, positive qubit count, got {n_qubits}"
                )));
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<PauliSum> {
        self.validate()?;
        match *self {
            HamiltonianSpec::Heisenberg {
                n_qubits,
                j,
                h,
                boundary,
            } => build_heisenberg(n_qubits, j, h, boundary),
            HamiltonianSpec::Ising {
                n_qubits,
                j,
                h,
                boundary,
            } => build_ising(n_qubits, j, h, boundary),
            HamiltonianSpec::Hubbard { n_qubits, t, u } => build_hubbard(n_qubits / 2, t, u),
        }
    }
}

fn bonds(n: usize, boundary: Boundary) -> Vec<(usize, usize)> {
    let mut b: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    if boundary == Boundary::Periodic {
        b.push((n - 1, 0));
    }
    b
}

fn field_terms(n: usize, h: f64) -> impl Iterator<Item = (f64, PauliString)> {
    (0..n).map(move |q| (0.5 * h, PauliString::from_sites(n, &[(q, Pauli::Z)])))
}

/// `J Σ (SˣSˣ + SʸSʸ + SᶻSᶻ) + h Σ Sᶻ` on a 1-D chain.
pub fn build_heisenberg(n: usize, j: f64, h: f64, boundary: Boundary) -> Result<PauliSum> {
    if n < 2 {
        return Err(invalid_spec(format!("Heisenberg chain needs n >= 2, got {n}")));
    }
    let mut terms = Vec::new();
    for (a, b) in bonds(n, boundary) {
        for p in [Pauli::X, Pauli::Y, Pauli::Z] {
            terms.push((0.25 * j, PauliString::from_sites(n, &[(a, p), (b, p)])));
        }
    }
    terms.extend(field_terms(n, h));
    PauliSum::new(n, terms)
}

/// `J Σ SᶻSᶻ + h Σ Sᶻ` on a 1-D chain.
pub fn build_ising(n: usize, j: f64, h: f64, boundary: Boundary) -> Result<PauliSum> {
    if n < 2 {
        return Err(invalid_spec(format!("Ising chain needs n >= 2, got {n}")));
    }
    let mut terms: Vec<_> = bonds(n, boundary)
        .into_iter()
        .map(|(a, b)| (0.25 * j, PauliString::from_sites(n, &[(a, Pauli::Z), (b, Pauli::Z)])))
        .collect();
    terms.extend(field_terms(n, h));
    PauliSum::new(n, terms)
}

/// Jordan-Wigner image of the open-chain Hubbard model on `sites` sites,
/// modes ordered `(0↑, 0↓, 1↑, 1↓, …)`.
pub fn build_hubbard(sites: usize, t: f64, u: f64) -> Result<PauliSum> {
    if sites < 1 {
        return Err(invalid_spec("Hubbard model needs at least one site"));
    }
    let n_modes = 2 * sites;
    let mode = |site: usize, spin: usize| 2 * site + spin;
    let mut terms = Vec::new();
    for i in 0..sites.saturating_sub(1) {
        for spin in 0..2 {
            let (a, b) = (mode(i, spin), mode(i + 1, spin));
            terms.push(FermionTerm::new(-t, vec![fermion::create(a), fermion::annihilate(b)]));
            terms.push(FermionTerm::new(-t, vec![fermion::create(b), fermion::annihilate(a)]));
        }
    }
    for i in 0..sites {
        let (up, down) = (mode(i, 0), mode(i, 1));
        terms.push(FermionTerm::new(
            u,
            vec![
                fermion::create(up),
                fermion::annihilate(up),
                fermion::create(down),
                fermion::annihilate(down),
            ],
        ));
    }
    jordan_wigner(&terms, n_modes)
}

fn format_coefficient(c: f64) -> String {
    let s = format!("{c:.4}");
    if s == "-0.0000" {
        "0.0000".to_string()
    } else {
        s
    }
}

/// One `"<coefficient> <string>"` token per term, in canonical term order.
/// Prompts depend only on the Pauli sum, so equal sums from different specs
/// render identically.
pub fn to_prompts(_spec: &HamiltonianSpec, h: &PauliSum) -> Vec<String> {
    prompts_for(h)
}

pub fn prompts_for(h: &PauliSum) -> Vec<String> {
    h.terms()
        .iter()
        .map(|(c, s)| format!("{} {}", format_coefficient(*c), s))
        .collect()
}
