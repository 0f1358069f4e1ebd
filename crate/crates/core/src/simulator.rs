//! Dense statevector simulation of the hardware-efficient ansatz
//! `U(θ) = Π_l U_l(θ_l) W_l`: a wall of single-qubit rotations followed by a
//! fixed CZ entangler, repeated per layer.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, CoreError, Result};
use crate::pauli::PauliSum;

/// Imaginary residue of an expectation value above which the result is
/// treated as a bug rather than rounding.
const IMAG_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Entangler {
    /// CZ on `(j, j+1 mod N)`.
    Ring,
    /// CZ on `(j, j+1)` for `j < N-1`.
    Chain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitLayout {
    pub n_qubits: usize,
    pub n_layers: usize,
    /// One rotation axis per layer.
    pub rotation_axes: Vec<Axis>,
    pub entangler: Entangler,
    /// Physical angle per unit of normalized parameter.
    pub angle_scale: f64,
}

impl CircuitLayout {
    /// `R_y` walls, CZ ring, angles scaled by π.
    pub fn new(n_qubits: usize, n_layers: usize) -> Self {
        Self {
            n_qubits,
            n_layers,
            rotation_axes: vec![Axis::Y; n_layers],
            entangler: Entangler::Ring,
            angle_scale: PI,
        }
    }

    pub fn with_entangler(mut self, entangler: Entangler) -> Self {
        self.entangler = entangler;
        self
    }

    /// Same circuit family with a different depth; new layers use the axis
    /// of the last existing layer.
    pub fn with_layers(&self, n_layers: usize) -> Self {
        let last = *self.rotation_axes.last().unwrap_or(&Axis::Y);
        let mut axes = self.rotation_axes.clone();
        axes.resize(n_layers, last);
        Self {
            n_layers,
            rotation_axes: axes,
            ..self.clone()
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_layers * self.n_qubits
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.n_qubits > 24 {
            return Err(invalid_arg(format!("unsupported qubit count {}", self.n_qubits)));
        }
        if self.n_layers == 0 {
            return Err(invalid_arg("layout needs at least one layer"));
        }
        if self.rotation_axes.len() != self.n_layers {
            return Err(invalid_arg(format!(
                "{} rotation axes for {} layers",
                self.rotation_axes.len(),
                self.n_layers
            )));
        }
        if !self.angle_scale.is_finite() || self.angle_scale == 0.0 {
            return Err(invalid_arg("angle_scale must be finite and non-zero"));
        }
        Ok(())
    }

    pub fn cz_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n_qubits;
        match (self.entangler, n) {
            (_, 0 | 1) => Vec::new(),
            // The wrap-around bond of a 2-ring is the same gate again.
            (Entangler::Ring, 2) | (Entangler::Chain, _) => (0..n - 1).map(|j| (j, j + 1)).collect(),
            (Entangler::Ring, _) => (0..n).map(|j| (j, (j + 1) % n)).collect(),
        }
    }
}

/// `L × N` normalized rotation parameters, each in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    n_layers: usize,
    n_qubits: usize,
    values: Vec<f64>,
}

impl ParamGrid {
    /// Row-major values (layer-major); out-of-range entries are clamped.
    pub fn new(n_layers: usize, n_qubits: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_layers * n_qubits {
            return Err(invalid_arg(format!(
                "{} values for a {n_layers}x{n_qubits} grid",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(invalid_arg(format!("non-finite parameter {bad}")));
        }
        Ok(Self {
            n_layers,
            n_qubits,
            values: values.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect(),
        })
    }

    pub fn zeros(n_layers: usize, n_qubits: usize) -> Self {
        Self {
            n_layers,
            n_qubits,
            values: vec![0.0; n_layers * n_qubits],
        }
    }

    pub fn for_layout(layout: &CircuitLayout, values: Vec<f64>) -> Result<Self> {
        Self::new(layout.n_layers, layout.n_qubits, values)
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, layer: usize, qubit: usize) -> f64 {
        self.values[layer * self.n_qubits + qubit]
    }

    pub fn set(&mut self, layer: usize, qubit: usize, value: f64) {
        self.values[layer * self.n_qubits + qubit] = value.clamp(-1.0, 1.0);
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.n_qubits).map(<[f64]>::to_vec).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_layers = rows.len();
        let n_qubits = rows.first().map_or(0, Vec::len);
        if n_layers == 0 || n_qubits == 0 || rows.iter().any(|r| r.len() != n_qubits) {
            return Err(invalid_arg("parameter rows must be non-empty and rectangular"));
        }
        Self::new(n_layers, n_qubits, rows.concat())
    }

    pub fn matches(&self, layout: &CircuitLayout) -> bool {
        self.n_layers == layout.n_layers && self.n_qubits == layout.n_qubits
    }

    /// Binary form: a JSON header line `{"L":…,"N":…}` then little-endian
    /// `f32` values, row-major.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{{\"L\":{},\"N\":{}}}", self.n_layers, self.n_qubits)?;
        for v in &self.values {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: BufRead>(mut r: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            #[serde(rename = "L")]
            l: usize,
            #[serde(rename = "N")]
            n: usize,
        }
        let mut line = String::new();
        r.read_line(&mut line)?;
        let h: Header = serde_json::from_str(line.trim_end())?;
        let mut buf = vec![0u8; h.l * h.n * 4];
        r.read_exact(&mut buf)?;
        let values = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Self::new(h.l, h.n, values)
    }
}

impl Serialize for ParamGrid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ParamGrid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        ParamGrid::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn zero_state(n_qubits: usize) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Self {
            n_qubits,
            amplitudes,
        }
    }

    /// Normalizes the given amplitudes.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(invalid_arg(format!("{len} amplitudes is not a register")));
        }
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(invalid_arg("state has zero or non-finite norm"));
        }
        Ok(Self {
            n_qubits: len.trailing_zeros() as usize,
            amplitudes: amplitudes.into_iter().map(|a| a / norm).collect(),
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    fn bit(&self, qubit: usize) -> usize {
        1 << (self.n_qubits - 1 - qubit)
    }

    /// `exp(-i θ σ / 2)` on one qubit.
    pub fn apply_rotation(&mut self, axis: Axis, qubit: usize, theta: f64) {
        let (s, c) = (0.5 * theta).sin_cos();
        let bit = self.bit(qubit);
        let amps = &mut self.amplitudes;
        match axis {
            Axis::Y => {
                for i in 0..amps.len() {
                    if i & bit == 0 {
                        let (a0, a1) = (amps[i], amps[i | bit]);
                        amps[i] = a0 * c - a1 * s;
                        amps[i | bit] = a0 * s + a1 * c;
                    }
                }
            }
            Axis::X => {
                let mis = Complex64::new(0.0, -s);
                for i in 0..amps.len() {
                    if i & bit == 0 {
                        let (a0, a1) = (amps[i], amps[i | bit]);
                        amps[i] = a0 * c + a1 * mis;
                        amps[i | bit] = a0 * mis + a1 * c;
                    }
                }
            }
            Axis::Z => {
                let lo = Complex64::new(c, -s);
                let hi = Complex64::new(c, s);
                for (i, a) in amps.iter_mut().enumerate() {
                    *a *= if i & bit == 0 { lo } else { hi };
                }
            }
        }
    }

    pub fn apply_cz(&mut self, a: usize, b: usize) {
        let mask = self.bit(a) | self.bit(b);
        for (i, amp) in self.amplitudes.iter_mut().enumerate() {
            if i & mask == mask {
                *amp = -*amp;
            }
        }
    }
}

fn check_shape(layout: &CircuitLayout, values: &[f64]) -> Result<()> {
    layout.validate()?;
    if values.len() != layout.n_params() {
        return Err(invalid_arg(format!(
            "{} parameters for a {}x{} layout",
            values.len(),
            layout.n_layers,
            layout.n_qubits
        )));
    }
    Ok(())
}

/// Runs the ansatz on raw normalized values (no clamping), which the
/// parameter-shift rule needs for its shifted evaluations.
pub fn prepare_state_raw(layout: &CircuitLayout, values: &[f64]) -> Result<StateVector> {
    check_shape(layout, values)?;
    let mut psi = StateVector::zero_state(layout.n_qubits);
    let pairs = layout.cz_pairs();
    for (l, row) in values.chunks(layout.n_qubits).enumerate() {
        let axis = layout.rotation_axes[l];
        for (q, v) in row.iter().enumerate() {
            psi.apply_rotation(axis, q, layout.angle_scale * v);
        }
        for &(a, b) in &pairs {
            psi.apply_cz(a, b);
        }
    }
    debug_assert!((psi.norm() - 1.0).abs() < 1e-10);
    Ok(psi)
}

pub fn prepare_hea_state(layout: &CircuitLayout, params: &ParamGrid) -> Result<StateVector> {
    if !params.matches(layout) {
        return Err(invalid_arg(format!(
            "{}x{} parameters for a {}x{} layout",
            params.n_layers, params.n_qubits, layout.n_layers, layout.n_qubits
        )));
    }
    prepare_state_raw(layout, params.values())
}

/// `Σ c_i ⟨ψ|P_i|ψ⟩`.
pub fn expectation(state: &StateVector, h: &PauliSum) -> Result<f64> {
    if state.n_qubits() != h.n_qubits() {
        return Err(invalid_arg(format!(
            "{}-qubit state vs {}-qubit Hamiltonian",
            state.n_qubits(),
            h.n_qubits()
        )));
    }
    let amps = state.amplitudes();
    let mut total = Complex64::new(0.0, 0.0);
    for (c, s) in h.terms() {
        let (x, z) = s.masks();
        let (x, z) = (x as usize, z as usize);
        let mut acc = Complex64::new(0.0, 0.0);
        for (b, a) in amps.iter().enumerate() {
            let v = amps[b ^ x].conj() * a;
            if (b & z).count_ones() % 2 == 0 {
                acc += v;
            } else {
                acc -= v;
            }
        }
        let phase = match s.y_count() % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        };
        total += acc * phase * *c;
    }
    let scale = h.terms().iter().map(|(c, _)| c.abs()).sum::<f64>().max(1.0);
    if total.im.abs() > IMAG_TOL * scale {
        return Err(CoreError::InvalidArgument(format!(
            "expectation has imaginary part {}",
            total.im
        )));
    }
    Ok(total.re)
}

pub fn energy_raw(layout: &CircuitLayout, values: &[f64], h: &PauliSum) -> Result<f64> {
    expectation(&prepare_state_raw(layout, values)?, h)
}

pub fn energy(layout: &CircuitLayout, params: &ParamGrid, h: &PauliSum) -> Result<f64> {
    expectation(&prepare_hea_state(layout, params)?, h)
}

/// `∂E/∂value` for every parameter by the two-point shift rule on the
/// physical angle, chain-ruled by `angle_scale`. Row-major like the grid.
pub fn gradient_raw(layout: &CircuitLayout, values: &[f64], h: &PauliSum) -> Result<Vec<f64>> {
    check_shape(layout, values)?;
    if h.is_zero() {
        return Ok(vec![0.0; values.len()]);
    }
    let mut work = values.to_vec();
    (0..values.len()).map(|i| shifted_difference(layout, &mut work, i, h)).collect()
}

/// Single entry of [`gradient_raw`].
pub fn partial_derivative(layout: &CircuitLayout, values: &[f64], index: usize, h: &PauliSum) -> Result<f64> {
    check_shape(layout, values)?;
    if index >= values.len() {
        return Err(invalid_arg(format!("parameter index {index} out of {}", values.len())));
    }
    if h.is_zero() {
        return Ok(0.0);
    }
    shifted_difference(layout, &mut values.to_vec(), index, h)
}

fn shifted_difference(layout: &CircuitLayout, work: &mut [f64], i: usize, h: &PauliSum) -> Result<f64> {
    let shift = 0.5 * PI / layout.angle_scale;
    let v = work[i];
    work[i] = v + shift;
    let plus = energy_raw(layout, work, h)?;
    work[i] = v - shift;
    let minus = energy_raw(layout, work, h)?;
    work[i] = v;
    Ok(0.5 * (plus - minus) * layout.angle_scale)
}

pub fn gradient_parameter_shift(
    layout: &CircuitLayout,
    params: &ParamGrid,
    h: &PauliSum,
) -> Result<Vec<f64>> {
    if !params.matches(layout) {
        return Err(invalid_arg("parameter grid does not match layout"));
    }
    gradient_raw(layout, params.values(), h)
}
