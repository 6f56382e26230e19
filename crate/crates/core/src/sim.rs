//! Frequency-domain simulation of ladder two-ports by cascading ABCD matrices.
//!
//! The port state `(V, I)` is propagated from the source towards the output:
//! a series impedance `Z` maps it to `(V - Z I, I)`, a shunt admittance `Y`
//! maps it to `(V, I - Y V)`. The chain matrix is `T_n ... T_1` with `T_1`
//! nearest the source. The source is an ideal 1 V generator; the output port
//! is either loaded by a resistance or left open.
//!
//! Complex arithmetic runs on [`Complex2x2`], the real 2x2 embedding
//! `a + ib -> [[a, b], [-b, a]]`, so that every primitive is a real
//! operation and the same code runs over plain floats and taped variables.

use std::f64::consts::PI;

use num_complex::Complex;
use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{Alignment, Component, ComponentType, Configuration};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Complex number `a + ib` held as the real matrix `[[a, b], [-b, a]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complex2x2<F> {
    pub a: F,
    pub b: F,
}

impl<F: Real> Complex2x2<F> {
    pub fn new(a: F, b: F) -> Self {
        Self { a, b }
    }

    pub fn real(a: F) -> Self {
        Self { a, b: a.zero_like() }
    }

    pub fn imag(b: F) -> Self {
        Self { a: b.zero_like(), b }
    }

    pub fn matrix(&self) -> [[F; 2]; 2] {
        [[self.a, self.b], [-self.b, self.a]]
    }

    /// Reads `a + ib` back from a matrix of the embedded form.
    pub fn from_matrix(m: [[F; 2]; 2]) -> Self {
        Self {
            a: m[0][0],
            b: m[0][1],
        }
    }

    pub fn norm_sqr(&self) -> F {
        self.a * self.a + self.b * self.b
    }

    /// Matrix inverse of the embedding, i.e. `1 / (a + ib)`.
    pub fn inv(&self) -> Self {
        let d = self.norm_sqr();
        Self {
            a: self.a / d,
            b: -self.b / d,
        }
    }

    pub fn to_complex(&self) -> Complex<f64> {
        Complex::new(self.a.value(), self.b.value())
    }
}

impl Complex2x2<f64> {
    pub fn from_complex(z: Complex<f64>) -> Self {
        Self { a: z.re, b: z.im }
    }
}

impl<F: Real> std::ops::Add for Complex2x2<F> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            a: self.a + o.a,
            b: self.b + o.b,
        }
    }
}

impl<F: Real> std::ops::Sub for Complex2x2<F> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            a: self.a - o.a,
            b: self.b - o.b,
        }
    }
}

impl<F: Real> std::ops::Neg for Complex2x2<F> {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            a: -self.a,
            b: -self.b,
        }
    }
}

impl<F: Real> std::ops::Mul for Complex2x2<F> {
    type Output = Self;
    /// Matrix product of the embeddings; the product is again of embedded
    /// form, so only its first row is formed.
    fn mul(self, o: Self) -> Self {
        let l = self.matrix();
        let r = o.matrix();
        Self::from_matrix([
            [
                l[0][0] * r[0][0] + l[0][1] * r[1][0],
                l[0][0] * r[0][1] + l[0][1] * r[1][1],
            ],
            [l[1][0], l[1][1]],
        ])
    }
}

impl<F: Real> std::ops::Div for Complex2x2<F> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        self * o.inv()
    }
}

/// ABCD matrix acting on the column `(V, I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix<F> {
    pub m: [[Complex2x2<F>; 2]; 2],
}

impl<F: Real> TransferMatrix<F> {
    pub fn identity(like: F) -> Self {
        let one = Complex2x2::real(like.one_like());
        let zero = Complex2x2::real(like.zero_like());
        Self {
            m: [[one, zero], [zero, one]],
        }
    }

    /// `self * rhs` (apply `rhs` first).
    pub fn mul(&self, rhs: &Self) -> Self {
        let a = &self.m;
        let b = &rhs.m;
        let e = |i: usize, j: usize| a[i][0] * b[0][j] + a[i][1] * b[1][j];
        Self {
            m: [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]],
        }
    }

    pub fn det(&self) -> Complex2x2<F> {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn to_complex(&self) -> [[Complex<f64>; 2]; 2] {
        let c = |i: usize, j: usize| self.m[i][j].to_complex();
        [[c(0, 0), c(0, 1)], [c(1, 0), c(1, 1)]]
    }
}

/// How the output port is closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    /// Resistive load in ohms.
    Load(f64),
    OpenCircuit,
}

impl Default for Termination {
    fn default() -> Self {
        Termination::Load(1.0)
    }
}

impl Termination {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Termination::Load(z) if !(z > 0.0) || !z.is_finite() => Err(Error::invalid(format!(
                "load impedance must be positive, got {z}"
            ))),
            _ => Ok(()),
        }
    }
}

/// Where the reported current is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CurrentProbe {
    /// Current drawn from the source.
    #[default]
    Input,
    /// Current delivered to the load; falls back to the input current for an
    /// open port, where the output current is identically zero.
    Output,
}

/// Output termination plus current probe: everything besides the chain and
/// the grid that determines a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Setup {
    pub termination: Termination,
    pub probe: CurrentProbe,
}

impl Setup {
    pub fn new(termination: Termination, probe: CurrentProbe) -> Self {
        Self { termination, probe }
    }

    pub fn load(ohms: f64) -> Self {
        Self::new(Termination::Load(ohms), CurrentProbe::default())
    }

    pub fn open() -> Self {
        Self::new(Termination::OpenCircuit, CurrentProbe::default())
    }

    pub fn reports_input_current(&self) -> bool {
        matches!(
            (self.termination, self.probe),
            (_, CurrentProbe::Input) | (Termination::OpenCircuit, _)
        )
    }
}

/// Strictly increasing sample frequencies in Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    frequencies: Vec<f64>,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self::log_spaced(1.0, 1e6, Self::DEFAULT_LEN).expect("default grid")
    }
}

impl FrequencyGrid {
    pub const DEFAULT_LEN: usize = 512;

    pub fn new(frequencies: Vec<f64>) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::invalid("frequency grid is empty"));
        }
        if frequencies.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
            return Err(Error::invalid("frequencies must be positive and finite"));
        }
        if frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("frequencies must be strictly increasing"));
        }
        Ok(Self { frequencies })
    }

    /// `d` points spaced evenly in log frequency, endpoints exact.
    pub fn log_spaced(f_min: f64, f_max: f64, d: usize) -> Result<Self> {
        if d < 2 || !(f_min > 0.0) || !(f_max > f_min) {
            return Err(Error::invalid("log grid needs d >= 2 and 0 < f_min < f_max"));
        }
        let (l0, l1) = (f_min.log10(), f_max.log10());
        let step = (l1 - l0) / (d - 1) as f64;
        let mut f: Vec<f64> = (0..d).map(|i| 10f64.powf(l0 + step * i as f64)).collect();
        f[0] = f_min;
        f[d - 1] = f_max;
        Self::new(f)
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }
}

pub fn default_grid() -> FrequencyGrid {
    FrequencyGrid::default()
}

/// Port voltage and current sampled over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T> {
    pub v: Vec<Complex<T>>,
    pub i: Vec<Complex<T>>,
    pub grid: FrequencyGrid,
}

impl<T: Float> Spectrum<T> {
    pub fn new(v: Vec<Complex<T>>, i: Vec<Complex<T>>, grid: FrequencyGrid) -> Result<Self> {
        if v.len() != grid.len() || i.len() != grid.len() {
            return Err(Error::invalid(format!(
                "spectrum lengths V={} I={} do not match grid length {}",
                v.len(),
                i.len(),
                grid.len()
            )));
        }
        Ok(Self { v, i, grid })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.v
            .iter()
            .chain(&self.i)
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Elementwise tanh of `Re V`, `Im V`, `Re I`, `Im I`.
    pub fn normalize(&self) -> Result<NormalizedSpectrum<T>> {
        if !self.is_finite() {
            return Err(Error::invalid("cannot normalize a non-finite spectrum"));
        }
        let d = self.len();
        let mut data = Vec::with_capacity(4 * d);
        data.extend(self.v.iter().map(|z| z.re.tanh()));
        data.extend(self.v.iter().map(|z| z.im.tanh()));
        data.extend(self.i.iter().map(|z| z.re.tanh()));
        data.extend(self.i.iter().map(|z| z.im.tanh()));
        Ok(NormalizedSpectrum { len: d, data })
    }
}

/// Four stacked channels, each of the grid's length, channel-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSpectrum<T> {
    len: usize,
    data: Vec<T>,
}

impl<T: Float> NormalizedSpectrum<T> {
    pub const CHANNELS: usize = 4;

    pub fn from_channels(len: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != Self::CHANNELS * len {
            return Err(Error::invalid(format!(
                "expected {} values for 4 x {len} channels, got {}",
                Self::CHANNELS * len,
                data.len()
            )));
        }
        Ok(Self { len, data })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn channel(&self, c: usize) -> &[T] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn cast<U: Float>(&self) -> NormalizedSpectrum<U> {
        NormalizedSpectrum {
            len: self.len,
            data: self.data.iter().map(|x| U::from(*x).expect("cast")).collect(),
        }
    }
}

/// Series impedance or shunt admittance of one element at angular frequency `omega`.
fn immittance<F: Real>(alignment: Alignment, ctype: ComponentType, value: F, omega: f64) -> Complex2x2<F> {
    let w = value.lift(omega);
    match (alignment, ctype) {
        // Z = R
        (Alignment::Series, ComponentType::Resistor) => Complex2x2::real(value),
        // Z = i w L
        (Alignment::Series, ComponentType::Inductor) => Complex2x2::imag(w * value),
        // Z = 1 / (i w C) = -i / (w C)
        (Alignment::Series, ComponentType::Capacitor) => {
            Complex2x2::imag(-(value.one_like() / (w * value)))
        }
        // Y = 1 / R
        (Alignment::Parallel, ComponentType::Resistor) => Complex2x2::real(value.one_like() / value),
        // Y = 1 / (i w L) = -i / (w L)
        (Alignment::Parallel, ComponentType::Inductor) => {
            Complex2x2::imag(-(value.one_like() / (w * value)))
        }
        // Y = i w C
        (Alignment::Parallel, ComponentType::Capacitor) => Complex2x2::imag(w * value),
    }
}

/// ABCD matrix of a single element with an arbitrary scalar value.
pub fn element_matrix<F: Real>(
    alignment: Alignment,
    ctype: ComponentType,
    value: F,
    omega: f64,
) -> TransferMatrix<F> {
    let x = immittance(alignment, ctype, value, omega);
    let one = Complex2x2::real(value.one_like());
    let zero = Complex2x2::real(value.zero_like());
    let m = match alignment {
        Alignment::Series => [[one, -x], [zero, one]],
        Alignment::Parallel => [[one, zero], [-x, one]],
    };
    TransferMatrix { m }
}

pub fn angular(frequency_hz: f64) -> f64 {
    2.0 * PI * frequency_hz
}

pub fn component_matrix(c: &Component, frequency_hz: f64) -> Result<TransferMatrix<f64>> {
    if !(frequency_hz > 0.0) || !frequency_hz.is_finite() {
        return Err(Error::invalid(format!("frequency must be positive, got {frequency_hz}")));
    }
    if !(c.value > 0.0) || !c.value.is_finite() {
        return Err(Error::invalid(format!("component value must be positive, got {}", c.value)));
    }
    Ok(element_matrix(c.alignment, c.ctype, c.value, angular(frequency_hz)))
}

/// `T_n ... T_1` for a chain whose values are supplied separately.
pub fn chain_matrix_with<F: Real>(
    structure: &[(Alignment, ComponentType)],
    values: &[F],
    omega: f64,
) -> TransferMatrix<F> {
    debug_assert_eq!(structure.len(), values.len());
    let mut t = TransferMatrix::identity(values[0]);
    for (&(a, c), &v) in structure.iter().zip(values) {
        t = element_matrix(a, c, v, omega).mul(&t);
    }
    t
}

pub fn chain_matrix(config: &Configuration, frequency_hz: f64) -> Result<TransferMatrix<f64>> {
    let mut t = TransferMatrix::identity(1.0);
    for c in config.components() {
        t = component_matrix(c, frequency_hz)?.mul(&t);
    }
    Ok(t)
}

/// Marker for a singular port solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingularSolve;

/// Port voltage and current for a chain matrix driven by a 1 V ideal source.
///
/// With `(V_out, I_out) = T (1, I_in)`, a load imposes `V_out = Z_L I_out`
/// and an open port imposes `I_out = 0`; either closes the system for `I_in`.
/// `V_out` is then taken from `det T = 1` rather than from `A + B I_in`,
/// which cancels catastrophically when a leading shunt draws a large current.
pub fn port_response<F: Real>(
    t: &TransferMatrix<F>,
    setup: &Setup,
) -> std::result::Result<(Complex2x2<F>, Complex2x2<F>), SingularSolve> {
    let [[a, b], [c, d]] = t.m;
    let (v_out, i_in, i_out) = match setup.termination {
        Termination::Load(zl) => {
            let zl = Complex2x2::real(a.a.lift(zl));
            let den = b - zl * d;
            if den.norm_sqr().value() == 0.0 {
                return Err(SingularSolve);
            }
            let i_out = -(den.inv());
            (zl * i_out, (zl * c - a) / den, i_out)
        }
        Termination::OpenCircuit => {
            if d.norm_sqr().value() == 0.0 {
                return Err(SingularSolve);
            }
            let i_in = -(c / d);
            (d.inv(), i_in, i_in)
        }
    };
    let current = if setup.reports_input_current() { i_in } else { i_out };
    Ok((v_out, current))
}

fn structure_of(config: &Configuration) -> (Vec<(Alignment, ComponentType)>, Vec<f64>) {
    config
        .components()
        .iter()
        .map(|c| ((c.alignment, c.ctype), c.value))
        .unzip()
}

/// Simulates a structure with explicit values at one grid point.
pub fn respond_at<F: Real>(
    structure: &[(Alignment, ComponentType)],
    values: &[F],
    frequency_hz: f64,
    setup: &Setup,
) -> std::result::Result<(Complex2x2<F>, Complex2x2<F>), SingularSolve> {
    let t = chain_matrix_with(structure, values, angular(frequency_hz));
    port_response(&t, setup)
}

/// Simulates a chain with plain `f64` values over a grid.
pub fn simulate_values(
    structure: &[(Alignment, ComponentType)],
    values: &[f64],
    grid: &FrequencyGrid,
    setup: &Setup,
) -> Result<Spectrum<f64>> {
    setup.termination.validate()?;
    if structure.is_empty() || structure.len() != values.len() {
        return Err(Error::invalid("structure and values must be non-empty and equal length"));
    }
    let points: Vec<_> = grid
        .frequencies()
        .par_iter()
        .enumerate()
        .map(|(k, &f)| {
            respond_at(structure, values, f, setup)
                .map(|(v, i)| (v.to_complex(), i.to_complex()))
                .map_err(|_| Error::Singular {
                    index: k,
                    frequency_hz: f,
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let (v, i) = points.into_iter().unzip();
    Spectrum::new(v, i, grid.clone())
}

pub fn simulate(config: &Configuration, grid: &FrequencyGrid, setup: &Setup) -> Result<Spectrum<f64>> {
    let (structure, values) = structure_of(config);
    simulate_values(&structure, &values, grid, setup)
}
