//! Refinement of component values against a target spectrum.
//!
//! The loss is the mean over grid points of `|dV|^2 + |dI|^2`. Values are
//! optimized in log space with Adam; gradients come from a reverse-mode tape
//! driven through the same generic simulator used for plain evaluation.

use serde::{Deserialize, Serialize};

use crate::adam::{Adam, AdamConfig};
use crate::circuit::{Alignment, ComponentType, Configuration, ValueGrid};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sim::{respond_at, Complex2x2, Setup, Spectrum};
use crate::tape::{Tape, Var};

/// Stopping threshold on the spectrum loss.
pub const LOSS_THRESHOLD: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 5000;

/// Fixed structure with optimizable values stored as natural logs.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateConfig {
    structure: Configuration,
    log_values: Vec<f64>,
}

impl CandidateConfig {
    pub fn from_config(config: &Configuration) -> Self {
        Self {
            log_values: config.components().iter().map(|c| c.value.ln()).collect(),
            structure: config.clone(),
        }
    }

    pub fn with_log_values(structure: &Configuration, log_values: Vec<f64>) -> Result<Self> {
        if log_values.len() != structure.len() {
            return Err(Error::invalid(format!(
                "{} log-values for a chain of {}",
                log_values.len(),
                structure.len()
            )));
        }
        if log_values.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("log-values must be finite"));
        }
        Ok(Self {
            structure: structure.clone(),
            log_values,
        })
    }

    pub fn structure(&self) -> &Configuration {
        &self.structure
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    pub fn values(&self) -> Vec<f64> {
        self.log_values.iter().map(|x| x.exp()).collect()
    }

    pub fn len(&self) -> usize {
        self.log_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_values.is_empty()
    }

    fn kinds(&self) -> Vec<(Alignment, ComponentType)> {
        self.structure
            .components()
            .iter()
            .map(|c| (c.alignment, c.ctype))
            .collect()
    }

    /// The structure with the current values; bins are re-quantized where present.
    pub fn to_config(&self, grid: &ValueGrid) -> Result<Configuration> {
        let comps = self
            .structure
            .components()
            .iter()
            .zip(self.values())
            .map(|(c, v)| c.with_value(v, grid))
            .collect::<Result<Vec<_>>>()?;
        Configuration::new(comps)
    }
}

fn check_target(cand: &CandidateConfig, target: &Spectrum<f64>) -> Result<()> {
    if target.is_empty() || !target.is_finite() {
        return Err(Error::invalid("target spectrum must be non-empty and finite"));
    }
    if cand.is_empty() {
        return Err(Error::invalid("candidate has no components"));
    }
    Ok(())
}

fn residual<F: Real>(v: Complex2x2<F>, i: Complex2x2<F>, tv: num_complex::Complex64, ti: num_complex::Complex64) -> F {
    let dv = v - Complex2x2::new(v.a.lift(tv.re), v.a.lift(tv.im));
    let di = i - Complex2x2::new(i.a.lift(ti.re), i.a.lift(ti.im));
    dv.norm_sqr() + di.norm_sqr()
}

fn singular(target: &Spectrum<f64>, k: usize) -> Error {
    Error::Singular {
        index: k,
        frequency_hz: target.grid.frequencies()[k],
    }
}

/// Mean squared complex discrepancy between the candidate's spectrum and the target.
pub fn loss_spectrum(cand: &CandidateConfig, target: &Spectrum<f64>, setup: &Setup) -> Result<f64> {
    check_target(cand, target)?;
    let kinds = cand.kinds();
    let values = cand.values();
    let mut sum = 0.0;
    for (k, &f) in target.grid.frequencies().iter().enumerate() {
        let (v, i) = respond_at(&kinds, &values, f, setup).map_err(|_| singular(target, k))?;
        sum += residual(v, i, target.v[k], target.i[k]);
    }
    Ok(sum / target.len() as f64)
}

/// Loss and its exact gradient with respect to the log-values.
///
/// One tape is recorded per grid point and cleared afterwards; the
/// per-point gradients are summed.
pub fn loss_and_grad(
    cand: &CandidateConfig,
    target: &Spectrum<f64>,
    setup: &Setup,
) -> Result<(f64, Vec<f64>)> {
    check_target(cand, target)?;
    let kinds = cand.kinds();
    let n = cand.len();
    let d = target.len() as f64;
    let mut tape = Tape::<f64>::with_capacity(64 * n + 64);
    let mut grad = vec![0.0; n];
    let mut sum = 0.0;
    for (k, &f) in target.grid.frequencies().iter().enumerate() {
        tape.clear();
        let logs: Vec<Var<f64>> = cand.log_values.iter().map(|&x| tape.var(x)).collect();
        let values: Vec<Var<f64>> = logs.iter().map(|x| x.exp()).collect();
        let (v, i) = respond_at(&kinds, &values, f, setup).map_err(|_| singular(target, k))?;
        let r = residual(v, i, target.v[k], target.i[k]);
        sum += r.val();
        let g = tape.gradient(r);
        for (acc, x) in grad.iter_mut().zip(&logs) {
            *acc += g.wrt(x);
        }
    }
    grad.iter_mut().for_each(|g| *g /= d);
    Ok((sum / d, grad))
}

pub fn grad_values(cand: &CandidateConfig, target: &Spectrum<f64>, setup: &Setup) -> Result<Vec<f64>> {
    Ok(loss_and_grad(cand, target, setup)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineOptions {
    pub max_iters: usize,
    pub threshold: f64,
    pub adam: AdamConfig,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_iters: DEFAULT_MAX_ITERS,
            threshold: LOSS_THRESHOLD,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Refinement {
    /// Best iterate seen.
    pub candidate: CandidateConfig,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Adam steps taken.
    pub iters: usize,
    /// Best-seen loss after each evaluation, starting with the initial one.
    pub best_history: Vec<f64>,
}

impl Refinement {
    pub fn report(&self, before: &CandidateConfig) -> RefinementReport {
        RefinementReport {
            initial_loss: self.initial_loss,
            final_loss: self.final_loss,
            iters: self.iters,
            values_before: before.values(),
            values_after: self.candidate.values(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub iters: usize,
    pub values_before: Vec<f64>,
    pub values_after: Vec<f64>,
}

/// Adam on the log-values until the loss drops below the threshold or the
/// iteration cap is hit. Returns the best iterate seen.
pub fn refine(
    cand: &CandidateConfig,
    target: &Spectrum<f64>,
    setup: &Setup,
    opts: &RefineOptions,
) -> Result<Refinement> {
    if opts.max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    let mut x = cand.log_values.clone();
    let mut adam = Adam::new(x.len(), opts.adam);
    let mut best_x = x.clone();
    let mut best = f64::INFINITY;
    let mut initial = f64::NAN;
    let mut history = Vec::new();
    let mut iters = 0;
    loop {
        let cur = CandidateConfig {
            structure: cand.structure.clone(),
            log_values: x.clone(),
        };
        let (loss, grad) = loss_and_grad(&cur, target, setup)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                history_len: history.len(),
            });
        }
        if history.is_empty() {
            initial = loss;
        }
        if loss < best {
            best = loss;
            best_x.clone_from(&x);
        }
        history.push(best);
        if loss < opts.threshold || iters == opts.max_iters {
            break;
        }
        adam.step(&mut x, &grad);
        iters += 1;
    }
    Ok(Refinement {
        candidate: CandidateConfig {
            structure: cand.structure.clone(),
            log_values: best_x,
        },
        initial_loss: initial,
        final_loss: best,
        iters,
        best_history: history,
    })
}
