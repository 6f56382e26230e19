//! Gradient checks against higher-precision central differences.

use std::ops::{Add, Div, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twoport_core::diffsim::{loss_and_grad, loss_spectrum, CandidateConfig};
use twoport_core::enumerate::random_canonical;
use twoport_core::scalar::Real;
use twoport_core::sim::{respond_at, Complex2x2};
use twoport_core::{Alignment, ComponentType, Configuration, Setup, Spectrum64};
use twoport_oracle::TwoFloat;

/// Double-double scalar so that central differences of a loss near 1e10 can
/// still resolve coordinates whose gradient is of order one.
#[derive(Debug, Clone, Copy)]
struct Dd(TwoFloat);

macro_rules! binop {
    ($tr:ident, $f:ident) => {
        impl $tr for Dd {
            type Output = Dd;
            fn $f(self, o: Dd) -> Dd {
                Dd($tr::$f(self.0, o.0))
            }
        }
    };
}
binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);
binop!(Div, div);

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd(-self.0)
    }
}

impl Real for Dd {
    fn lift(self, c: f64) -> Self {
        Dd(TwoFloat::from(c))
    }
    fn value(&self) -> f64 {
        f64::from(self.0)
    }
    // not on the simulation path
    fn exp(self) -> Self {
        self.lift(self.value().exp())
    }
    fn tanh(self) -> Self {
        self.lift(self.value().tanh())
    }
}

pub fn structure(c: &Configuration) -> Vec<(Alignment, ComponentType)> {
    c.components().iter().map(|x| (x.alignment, x.ctype)).collect()
}

/// The spectrum loss evaluated in double-double for the given values.
pub fn loss_dd(kinds: &[(Alignment, ComponentType)], values: &[f64], target: &Spectrum64, setup: &Setup) -> TwoFloat {
    let vals: Vec<Dd> = values.iter().map(|&v| Dd(TwoFloat::from(v))).collect();
    let zero = Dd(TwoFloat::from(0.0));
    let mut sum = zero;
    for (k, &f) in target.grid.frequencies().iter().enumerate() {
        let (v, i) = respond_at(kinds, &vals, f, setup).unwrap();
        let d = |x: Complex2x2<Dd>, t: num_complex::Complex64| {
            let re = x.a - zero.lift(t.re);
            let im = x.b - zero.lift(t.im);
            re * re + im * im
        };
        sum = sum + d(v, target.v[k]) + d(i, target.i[k]);
    }
    (sum / zero.lift(target.len() as f64)).0
}

/// Worst per-coordinate disagreement between the tape gradient and
/// fourth-order central differences with step `1e-6 * max(|x|, 1)` in
/// log-value space, in units of the allowed error. Sharp resonances push the
/// two-point truncation error alone to 1e-5.
///
/// The difference quotient is taken on the `f64` loss itself when its
/// rounding noise, about `eps * L / h`, stays well below the tolerance for
/// that coordinate; otherwise, for coordinates orders of magnitude weaker than
/// the loss, on the same loss evaluated in double-double.
pub fn fd_mismatch(cand: &CandidateConfig, target: &Spectrum64, setup: &Setup) -> f64 {
    let (l, g) = loss_and_grad(cand, target, setup).unwrap();
    let kinds = structure(cand.structure());
    let mut worst = 0.0f64;
    for k in 0..cand.len() {
        let x = cand.log_values()[k];
        let h = 1e-6 * x.abs().max(1.0);
        let values = |dx: f64| {
            let mut v = cand.values();
            v[k] = (x + dx).exp();
            v
        };
        let f64_fd = {
            let at = |dx: f64| {
                let mut lv = cand.log_values().to_vec();
                lv[k] += dx;
                loss_spectrum(&CandidateConfig::with_log_values(cand.structure(), lv).unwrap(), target, setup).unwrap()
            };
            (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h)
        };
        let noise = 16.0 * f64::EPSILON * l / h;
        let fd = if noise < 1e-7 * f64_fd.abs() {
            f64_fd
        } else {
            let diff = |dx: f64| f64::from(loss_dd(&kinds, &values(dx), target, setup) - loss_dd(&kinds, &values(-dx), target, setup));
            (8.0 * diff(h) - diff(2.0 * h)) / (12.0 * h)
        };
        // 1e-5 relative, plus the absolute resolution of an f64 loss of size L
        let allowed = 1e-5 * g[k].abs().max(fd.abs()) + 64.0 * f64::EPSILON * l;
        worst = worst.max((g[k] - fd).abs() / allowed.max(f64::MIN_POSITIVE));
    }
    worst
}

pub fn random_instance(seed: u64) -> (CandidateConfig, Configuration) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 1 + (seed as usize % 6);
    let gold = random_canonical(n, 3, 5, seed).unwrap();
    let logs: Vec<f64> = gold
        .values()
        .iter()
        .map(|v| v.ln() + rng.random_range(-0.7..0.7))
        .collect();
    (CandidateConfig::with_log_values(&gold, logs).unwrap(), gold)
}
