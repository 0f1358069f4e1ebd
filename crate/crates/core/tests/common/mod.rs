//! Dense-matrix reference constructions, built without the library's own
//! Pauli algebra or statevector kernels.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity2() -> CMat {
    CMat::identity(2, 2)
}

pub fn sigma(p: char) -> CMat {
    let o = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    match p {
        'I' => identity2(),
        'X' => CMat::from_row_slice(2, 2, &[o, one, one, o]),
        'Y' => CMat::from_row_slice(2, 2, &[o, -i, i, o]),
        'Z' => CMat::from_row_slice(2, 2, &[one, o, o, -one]),
        _ => panic!("bad Pauli {p}"),
    }
}

/// Kronecker product with qubit 0 as the leftmost factor.
pub fn kron_all(factors: &[CMat]) -> CMat {
    factors
        .iter()
        .skip(1)
        .fold(factors[0].clone(), |acc, f| acc.kronecker(f))
}

/// `op` acting on `site` of an `n`-qubit register.
pub fn on_site(n: usize, site: usize, op: &CMat) -> CMat {
    let factors: Vec<CMat> = (0..n).map(|q| if q == site { op.clone() } else { identity2() }).collect();
    kron_all(&factors)
}

pub fn pauli_string(label: &str) -> CMat {
    let factors: Vec<CMat> = label.chars().map(sigma).collect();
    kron_all(&factors)
}

/// Spin-1/2 operator `S^a = σ^a / 2` on one site.
pub fn spin(n: usize, site: usize, a: char) -> CMat {
    on_site(n, site, &sigma(a)).scale(0.5)
}

/// Nearest-neighbour bonds; the periodic wrap is added even for `n = 2`,
/// where it doubles the single bond.
pub fn bonds(n: usize, periodic: bool) -> Vec<(usize, usize)> {
    let mut b: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
    if periodic {
        b.push((n - 1, 0));
    }
    b
}

pub fn heisenberg(n: usize, j: f64, h: f64, periodic: bool) -> CMat {
    let dim = 1 << n;
    let mut m = CMat::zeros(dim, dim);
    for (p, q) in bonds(n, periodic) {
        for a in ['X', 'Y', 'Z'] {
            m += (spin(n, p, a) * spin(n, q, a)).scale(j);
        }
    }
    for s in 0..n {
        m += spin(n, s, 'Z').scale(h);
    }
    m
}

pub fn ising(n: usize, j: f64, h: f64, periodic: bool) -> CMat {
    let dim = 1 << n;
    let mut m = CMat::zeros(dim, dim);
    for (p, q) in bonds(n, periodic) {
        m += (spin(n, p, 'Z') * spin(n, q, 'Z')).scale(j);
    }
    for s in 0..n {
        m += spin(n, s, 'Z').scale(h);
    }
    m
}

/// Fermionic annihilation operator on `mode` in the occupation basis, with
/// the sign `(-1)^{occupied modes before mode}`. Mode `k` occupies bit
/// `n - 1 - k` of the basis index and `1` means occupied.
pub fn annihilator(n_modes: usize, mode: usize) -> CMat {
    let dim = 1 << n_modes;
    let mut m = CMat::zeros(dim, dim);
    let bit = |k: usize| 1usize << (n_modes - 1 - k);
    for state in 0..dim {
        if state & bit(mode) == 0 {
            continue;
        }
        let before = (0..mode).filter(|k| state & bit(*k) != 0).count();
        let sign = if before % 2 == 0 { 1.0 } else { -1.0 };
        m[(state ^ bit(mode), state)] = c(sign, 0.0);
    }
    m
}

/// Open-chain Hubbard model with modes `(0↑, 0↓, 1↑, 1↓, …)`.
pub fn hubbard(sites: usize, t: f64, u: f64) -> CMat {
    let n = 2 * sites;
    let dim = 1 << n;
    let a: Vec<CMat> = (0..n).map(|k| annihilator(n, k)).collect();
    let ad: Vec<CMat> = a.iter().map(|m| m.adjoint()).collect();
    let mut h = CMat::zeros(dim, dim);
    for i in 0..sites.saturating_sub(1) {
        for s in 0..2 {
            let (p, q) = (2 * i + s, 2 * (i + 1) + s);
            h -= (&ad[p] * &a[q] + &ad[q] * &a[p]).scale(t);
        }
    }
    for i in 0..sites {
        let nu = &ad[2 * i] * &a[2 * i];
        let nd = &ad[2 * i + 1] * &a[2 * i + 1];
        h += (nu * nd).scale(u);
    }
    h
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn ground_energy(m: &CMat) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

fn rotation(axis: char, theta: f64) -> CMat {
    let (s, co) = (0.5 * theta).sin_cos();
    identity2().scale(co) - sigma(axis).map(|z| z * c(0.0, s))
}

fn cz(n: usize, a: usize, b: usize) -> CMat {
    let dim = 1 << n;
    let mut m = CMat::identity(dim, dim);
    for i in 0..dim {
        let ba = (i >> (n - 1 - a)) & 1;
        let bb = (i >> (n - 1 - b)) & 1;
        if ba == 1 && bb == 1 {
            m[(i, i)] = c(-1.0, 0.0);
        }
    }
    m
}

/// Hardware-efficient ansatz unitary: per layer a wall of rotations by
/// `scale * value`, then CZ on each pair.
pub fn ansatz_state(n: usize, axes: &[char], values: &[f64], pairs: &[(usize, usize)], scale: f64) -> DVector<Complex64> {
    let dim = 1 << n;
    let mut psi = DVector::from_element(dim, c(0.0, 0.0));
    psi[0] = c(1.0, 0.0);
    for (l, row) in values.chunks(n).enumerate() {
        let wall: Vec<CMat> = row.iter().map(|v| rotation(axes[l], scale * v)).collect();
        psi = kron_all(&wall) * psi;
        for &(a, b) in pairs {
            psi = cz(n, a, b) * psi;
        }
    }
    psi
}

pub fn expectation(psi: &DVector<Complex64>, h: &CMat) -> Complex64 {
    (psi.adjoint() * h * psi)[(0, 0)]
}
