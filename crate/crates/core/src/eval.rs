//! Structure-recovery metrics.
//!
//! A complete match agrees on alignment, type and value bin at every
//! position; a value-agnostic match ignores bins. Both compare canonical
//! forms by default. The value-agnostic canonical form sorts each run by type
//! alone (stable), so differing bins cannot reorder a run.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{Configuration, ValueGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MatchMode {
    /// Compare canonical forms.
    #[default]
    Canonical,
    /// Compare chains position by position as given.
    Positional,
}

fn bin_key(c: &Configuration, grid: &ValueGrid, mode: MatchMode) -> Option<Vec<(u8, u8, u8)>> {
    let c = match mode {
        MatchMode::Canonical => c.canonicalize(),
        MatchMode::Positional => c.clone(),
    };
    c.components()
        .iter()
        .map(|x| {
            let bin = match x.bin {
                Some(b) => b,
                None => grid.quantize(x.value, x.ctype).ok()?,
            };
            Some((x.alignment as u8, x.ctype as u8, bin))
        })
        .collect()
}

fn kind_key(c: &Configuration, mode: MatchMode) -> Vec<(u8, u8)> {
    let mut kinds: Vec<(u8, u8)> = c
        .components()
        .iter()
        .map(|x| (x.alignment as u8, x.ctype as u8))
        .collect();
    if mode == MatchMode::Canonical {
        for run in c.runs() {
            kinds[run].sort_by_key(|k| k.1);
        }
    }
    kinds
}

/// Same length, and every position agrees on alignment, type and value bin.
/// Components without a bin are quantized on `grid`.
pub fn complete_match(pred: &Configuration, gold: &Configuration, grid: &ValueGrid, mode: MatchMode) -> bool {
    pred.len() == gold.len()
        && matches!(
            (bin_key(pred, grid, mode), bin_key(gold, grid, mode)),
            (Some(a), Some(b)) if a == b
        )
}

/// Same length, and every position agrees on alignment and type.
pub fn value_agnostic_match(pred: &Configuration, gold: &Configuration, mode: MatchMode) -> bool {
    pred.len() == gold.len() && kind_key(pred, mode) == kind_key(gold, mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub length: usize,
    pub complete_acc: f64,
    pub value_agnostic_acc: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalTable {
    pub rows: Vec<EvalRow>,
    /// Samples for which the predictor produced nothing.
    pub failures: usize,
}

impl EvalTable {
    pub const CSV_HEADER: &'static str = "length,complete_acc,value_agnostic_acc,n";

    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.length, r.complete_acc, r.value_agnostic_acc, r.n
            ));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(Self::CSV_HEADER) {
            return Err(Error::invalid("missing evaluation table header"));
        }
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let c: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::invalid(format!("bad evaluation row `{line}`"));
            if c.len() != 4 {
                return Err(bad());
            }
            rows.push(EvalRow {
                length: c[0].parse().map_err(|_| bad())?,
                complete_acc: c[1].parse().map_err(|_| bad())?,
                value_agnostic_acc: c[2].parse().map_err(|_| bad())?,
                n: c[3].parse().map_err(|_| bad())?,
            });
        }
        Ok(Self { rows, failures: 0 })
    }

    /// Pooled accuracies over all lengths.
    pub fn overall(&self) -> (f64, f64, usize) {
        let n: usize = self.rows.iter().map(|r| r.n).sum();
        if n == 0 {
            return (0.0, 0.0, 0);
        }
        let w = |f: fn(&EvalRow) -> f64| self.rows.iter().map(|r| f(r) * r.n as f64).sum::<f64>() / n as f64;
        (w(|r| r.complete_acc), w(|r| r.value_agnostic_acc), n)
    }
}

#[derive(Default)]
struct Tally {
    complete: usize,
    agnostic: usize,
    n: usize,
    failures: usize,
}

/// Scores `predict` against the gold configurations of `samples`, per gold length.
/// A `None` prediction counts as wrong on both metrics.
pub fn evaluate<T, G, P>(samples: &[T], gold: G, predict: P, grid: &ValueGrid, mode: MatchMode) -> Result<EvalTable>
where
    T: Sync,
    G: Fn(&T) -> &Configuration + Sync,
    P: Fn(&T) -> Option<Configuration> + Sync,
{
    if samples.is_empty() {
        return Err(Error::invalid("evaluation needs a non-empty test set"));
    }
    let outcomes: Vec<(usize, bool, bool, bool)> = samples
        .par_iter()
        .map(|s| {
            let g = gold(s);
            match predict(s) {
                Some(p) => (
                    g.len(),
                    complete_match(&p, g, grid, mode),
                    value_agnostic_match(&p, g, mode),
                    false,
                ),
                None => (g.len(), false, false, true),
            }
        })
        .collect();
    let mut by_len: BTreeMap<usize, Tally> = BTreeMap::new();
    for (len, c, a, failed) in outcomes {
        let t = by_len.entry(len).or_default();
        t.n += 1;
        t.complete += c as usize;
        t.agnostic += a as usize;
        t.failures += failed as usize;
    }
    Ok(EvalTable {
        failures: by_len.values().map(|t| t.failures).sum(),
        rows: by_len
            .into_iter()
            .map(|(length, t)| EvalRow {
                length,
                complete_acc: t.complete as f64 / t.n as f64,
                value_agnostic_acc: t.agnostic as f64 / t.n as f64,
                n: t.n,
            })
            .collect(),
    })
}
