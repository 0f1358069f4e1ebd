//! Jordan-Wigner mapping of fermionic operators onto Pauli sums.
//!
//! `c_k = Z_0 ⊗ … ⊗ Z_{k-1} ⊗ (X_k + iY_k)/2`, so an occupied mode is `|1⟩`
//! and `n_k = (I - Z_k)/2`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Pauli, PauliString, PauliSum};
use crate::error::{invalid_spec, Result};

/// Imaginary residue tolerated when reducing a Hermitian operator to real
/// Pauli coefficients.
const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FermionOp {
    pub mode: usize,
    pub dagger: bool,
}

pub fn create(mode: usize) -> FermionOp {
    FermionOp { mode, dagger: true }
}

pub fn annihilate(mode: usize) -> FermionOp {
    FermionOp {
        mode,
        dagger: false,
    }
}

/// `coefficient · op_0 op_1 …` with the leftmost operator applied last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FermionTerm {
    pub coefficient: f64,
    pub ops: Vec<FermionOp>,
}

impl FermionTerm {
    pub fn new(coefficient: f64, ops: Vec<FermionOp>) -> Self {
        Self { coefficient, ops }
    }
}

type Sparse = BTreeMap<PauliString, Complex64>;

fn multiply(a: &Sparse, b: &Sparse) -> Sparse {
    let mut out = Sparse::new();
    for (sa, ca) in a {
        for (sb, cb) in b {
            let mut phase = ca * cb;
            let ops = sa
                .ops()
                .iter()
                .zip(sb.ops())
                .map(|(x, y)| {
                    let (ph, p) = x.mul(*y);
                    phase *= ph;
                    p
                })
                .collect();
            *out.entry(PauliString::new(ops)).or_insert(Complex64::new(0.0, 0.0)) += phase;
        }
    }
    out
}

fn ladder(op: FermionOp, n_modes: usize) -> Sparse {
    let mut x_ops = vec![Pauli::I; n_modes];
    for z in x_ops.iter_mut().take(op.mode) {
        *z = Pauli::Z;
    }
    let mut y_ops = x_ops.clone();
    x_ops[op.mode] = Pauli::X;
    y_ops[op.mode] = Pauli::Y;
    let y_coeff = if op.dagger { -0.5 } else { 0.5 };
    let mut s = Sparse::new();
    s.insert(PauliString::new(x_ops), Complex64::new(0.5, 0.0));
    s.insert(PauliString::new(y_ops), Complex64::new(0.0, y_coeff));
    s
}

/// Maps a Hermitian sum of fermionic products to its Pauli image.
pub fn jordan_wigner(terms: &[FermionTerm], n_modes: usize) -> Result<PauliSum> {
    let mut total = Sparse::new();
    for term in terms {
        let mut acc = Sparse::new();
        acc.insert(
            PauliString::identity(n_modes),
            Complex64::new(term.coefficient, 0.0),
        );
        for op in &term.ops {
            if op.mode >= n_modes {
                return Err(invalid_spec(format!(
                    "mode {} out of range for {n_modes} modes",
                    op.mode
                )));
            }
            acc = multiply(&acc, &ladder(*op, n_modes));
        }
        for (s, c) in acc {
            *total.entry(s).or_insert(Complex64::new(0.0, 0.0)) += c;
        }
    }
    let mut out = Vec::with_capacity(total.len());
    for (s, c) in total {
        if c.im.abs() > HERMITIAN_TOL {
            return Err(invalid_spec(format!(
                "operator is not Hermitian: coefficient {c} on {s}"
            )));
        }
        if c.re.abs() > HERMITIAN_TOL {
            out.push((c.re, s));
        }
    }
    PauliSum::new(n_modes, out)
}
