//! Pauli-sum Hamiltonians `H = Σ c_i P_i`.
//!
//! Qubit `j` of an `n`-qubit string is the `j`-th tensor factor, which maps to
//! bit `n - 1 - j` of a computational-basis index. The simulator uses the same
//! convention, so dense matrices and state vectors line up.

mod fermion;
mod models;

pub use fermion::{jordan_wigner, FermionOp, FermionTerm};
pub use models::{
    build_heisenberg, build_hubbard, build_ising, prompts_for, to_prompts, Boundary, Family,
    HamiltonianSpec,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, invalid_spec, CoreError, Result};

/// Largest register `exact_ground_energy` will materialize by default.
pub const DEFAULT_DENSE_CAP: usize = 12;

/// Largest register the bit-mask representation supports.
pub const MAX_QUBITS: usize = 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    /// `self · other = phase · result`, phase a power of `i`.
    pub fn mul(self, other: Pauli) -> (Complex64, Pauli) {
        use Pauli::*;
        let i = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        match (self, other) {
            (I, p) | (p, I) => (one, p),
            (X, X) | (Y, Y) | (Z, Z) => (one, I),
            (X, Y) => (i, Z),
            (Y, X) => (-i, Z),
            (Y, Z) => (i, X),
            (Z, Y) => (-i, X),
            (Z, X) => (i, Y),
            (X, Z) => (-i, Y),
        }
    }
}

/// Tensor product of single-qubit Paulis, one per qubit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PauliString {
    ops: Vec<Pauli>,
}

impl PauliString {
    pub fn new(ops: Vec<Pauli>) -> Self {
        Self { ops }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            ops: vec![Pauli::I; n],
        }
    }

    /// Identity everywhere except the listed `(qubit, op)` sites.
    pub fn from_sites(n: usize, sites: &[(usize, Pauli)]) -> Self {
        let mut ops = vec![Pauli::I; n];
        for &(q, p) in sites {
            ops[q] = p;
        }
        Self { ops }
    }

    pub fn ops(&self) -> &[Pauli] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.ops.iter().all(|p| *p == Pauli::I)
    }

    /// Bit masks over basis indices: X-part (X or Y) and Z-part (Z or Y).
    pub fn masks(&self) -> (u64, u64) {
        let n = self.ops.len();
        let mut x = 0u64;
        let mut z = 0u64;
        for (j, p) in self.ops.iter().enumerate() {
            let bit = 1u64 << (n - 1 - j);
            match p {
                Pauli::I => {}
                Pauli::X => x |= bit,
                Pauli::Y => {
                    x |= bit;
                    z |= bit;
                }
                Pauli::Z => z |= bit,
            }
        }
        (x, z)
    }

    pub fn y_count(&self) -> usize {
        self.ops.iter().filter(|p| **p == Pauli::Y).count()
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.ops {
            write!(f, "{}", p.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| Pauli::from_char(c).ok_or_else(|| invalid_arg(format!("bad Pauli '{c}' in {s:?}"))))
            .collect::<Result<Vec<_>>>()
            .map(PauliString::new)
    }
}

/// Weighted sum of Pauli strings in canonical form: duplicate strings merged,
/// zero coefficients dropped, terms sorted lexicographically by string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PauliSumRepr", into = "PauliSumRepr")]
pub struct PauliSum {
    n_qubits: usize,
    terms: Vec<(f64, PauliString)>,
}

impl PauliSum {
    pub fn zero(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            terms: Vec::new(),
        }
    }

    pub fn new(n_qubits: usize, terms: Vec<(f64, PauliString)>) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(invalid_spec(format!("qubit count {n_qubits} out of range")));
        }
        let mut merged: BTreeMap<PauliString, f64> = BTreeMap::new();
        for (c, s) in terms {
            if s.len() != n_qubits {
                return Err(invalid_spec(format!(
                    "string {s} has length {}, expected {n_qubits}",
                    s.len()
                )));
            }
            if !c.is_finite() {
                return Err(invalid_spec(format!("non-finite coefficient on {s}")));
            }
            *merged.entry(s).or_insert(0.0) += c;
        }
        let terms = merged
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(s, c)| (c, s))
            .collect();
        Ok(Self { n_qubits, terms })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &[(f64, PauliString)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Dense `2^n × 2^n` matrix.
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let dim = 1usize << self.n_qubits;
        let mut m = DMatrix::<Complex64>::zeros(dim, dim);
        let i_pow = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, -1.0),
        ];
        for (c, s) in &self.terms {
            let (x, z) = s.masks();
            let base = i_pow[s.y_count() % 4] * *c;
            for col in 0..dim {
                let sign = if (col as u64 & z).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                let row = col ^ x as usize;
                m[(row, col)] += base * sign;
            }
        }
        m
    }
}

#[derive(Serialize, Deserialize)]
struct PauliSumRepr {
    n: usize,
    terms: Vec<(f64, String)>,
}

impl From<PauliSum> for PauliSumRepr {
    fn from(h: PauliSum) -> Self {
        Self {
            n: h.n_qubits,
            terms: h.terms.iter().map(|(c, s)| (*c, s.to_string())).collect(),
        }
    }
}

impl TryFrom<PauliSumRepr> for PauliSum {
    type Error = CoreError;

    fn try_from(r: PauliSumRepr) -> Result<Self> {
        let terms = r
            .terms
            .into_iter()
            .map(|(c, s)| s.parse().map(|p| (c, p)))
            .collect::<Result<Vec<_>>>()?;
        PauliSum::new(r.n, terms)
    }
}

/// Minimum eigenvalue of `h` by dense diagonalization, refusing registers
/// larger than [`DEFAULT_DENSE_CAP`].
pub fn exact_ground_energy(h: &PauliSum) -> Result<f64> {
    exact_ground_energy_capped(h, DEFAULT_DENSE_CAP)
}

pub fn exact_ground_energy_capped(h: &PauliSum, cap: usize) -> Result<f64> {
    if h.n_qubits() > cap {
        return Err(CoreError::ResourceLimit(format!(
            "{} qubits exceeds the dense diagonalization cap of {cap}",
            h.n_qubits()
        )));
    }
    if h.is_zero() {
        return Ok(0.0);
    }
    let dense = h.to_dense();
    let min = if h.terms().iter().all(|(_, s)| s.y_count() % 2 == 0) {
        // Even Y count means a real symmetric matrix.
        let real = dense.map(|c| c.re);
        SymmetricEigen::new(real).eigenvalues.min()
    } else {
        SymmetricEigen::new(dense).eigenvalues.min()
    };
    Ok(min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ps(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn duplicates_merge_and_zeros_drop() {
        let h = PauliSum::new(2, vec![(0.5, ps("ZI")), (0.25, ps("XX")), (0.5, ps("ZI")), (1.0, ps("YY")), (-1.0, ps("YY"))]).unwrap();
        assert_eq!(h.terms(), &[(0.25, ps("XX")), (1.0, ps("ZI"))]);
    }

    #[test]
    fn merge_preserves_matrix() {
        let raw = vec![(0.3, ps("XZ")), (-0.7, ps("IY")), (0.2, ps("XZ")), (1.1, ps("II"))];
        let merged = PauliSum::new(2, raw.clone()).unwrap();
        let dim = 4;
        let mut direct = DMatrix::<Complex64>::zeros(dim, dim);
        for (c, s) in raw {
            direct += PauliSum::new(2, vec![(c, s)]).unwrap().to_dense();
        }
        assert!((merged.to_dense() - direct).norm() < 1e-12);
    }

    #[test]
    fn wrong_length_is_rejected() {
        assert!(PauliSum::new(3, vec![(1.0, ps("XX"))]).is_err());
        assert!(PauliSum::new(2, vec![(f64::NAN, ps("XX"))]).is_err());
    }

    #[test]
    fn single_z_ground_energy() {
        let h = PauliSum::new(1, vec![(1.0, ps("Z"))]).unwrap();
        assert!((exact_ground_energy(&h).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_sum_ground_energy() {
        assert_eq!(exact_ground_energy(&PauliSum::zero(5)).unwrap(), 0.0);
    }

    #[test]
    fn complex_hermitian_path() {
        // Y alone has eigenvalues ±1.
        let h = PauliSum::new(2, vec![(2.0, ps("YI")), (0.5, ps("IZ"))]).unwrap();
        assert!((exact_ground_energy(&h).unwrap() + 2.5).abs() < 1e-10);
    }

    #[test]
    fn over_cap_is_resource_limit() {
        let h = PauliSum::new(4, vec![(1.0, ps("ZZZZ"))]).unwrap();
        assert!(matches!(
            exact_ground_energy_capped(&h, 3),
            Err(CoreError::ResourceLimit(_))
        ));
    }

    #[test]
    fn pauli_products() {
        for a in [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z] {
            for b in [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z] {
                let (ph, c) = a.mul(b);
                let lhs = PauliSum::new(1, vec![(1.0, PauliString::new(vec![a]))]).unwrap().to_dense()
                    * PauliSum::new(1, vec![(1.0, PauliString::new(vec![b]))]).unwrap().to_dense();
                let rhs = PauliSum::new(1, vec![(1.0, PauliString::new(vec![c]))]).unwrap().to_dense() * ph;
                assert!((lhs - rhs).norm() < 1e-15, "{a:?}{b:?}");
            }
        }
    }

    #[test]
    fn json_shape() {
        let h = PauliSum::new(2, vec![(0.25, ps("XX")), (-1.0, ps("IZ"))]).unwrap();
        let s = serde_json::to_string(&h).unwrap();
        assert_eq!(s, r#"{"n":2,"terms":[[-1.0,"IZ"],[0.25,"XX"]]}"#);
        let back: PauliSum = serde_json::from_str(&s).unwrap();
        assert_eq!(back, h);
    }
}
