//! Exhaustive and random generation of canonical configurations.
//!
//! A canonical chain of length `n` is determined by the alignment of its
//! first run, a composition of `n` into run lengths (runs alternate
//! alignment), and for each run a multiset of `(type, bin)` kinds written in
//! ascending kind order.

use num_bigint::BigUint;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::circuit::{Alignment, Component, ComponentType, Configuration, ValueGrid};
use crate::count::count_canonical;
use crate::error::{Error, Result};

/// Kind universe: `n_c` types times `n_v` bins, ordered by `(type, bin)`.
#[derive(Debug, Clone)]
struct Kinds {
    types: &'static [ComponentType],
    grid: ValueGrid,
}

impl Kinds {
    fn new(n_c: usize, n_v: usize) -> Result<Self> {
        Ok(Self {
            types: ComponentType::universe(n_c)?,
            grid: ValueGrid::new(n_v)?,
        })
    }

    fn len(&self) -> usize {
        self.types.len() * self.grid.n_v()
    }

    fn component(&self, alignment: Alignment, kind: usize) -> Component {
        let n_v = self.grid.n_v();
        Component::on_grid(alignment, self.types[kind / n_v], (kind % n_v) as u8, &self.grid)
    }
}

/// Lazy stream over every canonical configuration of one length.
pub struct CanonicalIter {
    kinds: Kinds,
    n: usize,
    first: usize,
    mask: u64,
    runs: Vec<(usize, usize)>,
    picks: Vec<usize>,
    done: bool,
}

/// Every canonical configuration of exact length `n`, each exactly once.
///
/// Fails with a capacity error when the total exceeds `cap`.
pub fn enumerate_canonical(n: usize, n_c: usize, n_v: usize, cap: u64) -> Result<CanonicalIter> {
    if n == 0 {
        return Err(Error::invalid("enumeration length must be at least 1"));
    }
    if n > 63 {
        return Err(Error::Capacity(format!("length {n} is too long to enumerate")));
    }
    let kinds = Kinds::new(n_c, n_v)?;
    let total = count_canonical(n as i64, n_c, n_v)?.count;
    if total > BigUint::from(cap) {
        return Err(Error::Capacity(format!(
            "{total} canonical configurations of length {n} exceed the cap of {cap}"
        )));
    }
    let mut it = CanonicalIter {
        kinds,
        n,
        first: 0,
        mask: 0,
        runs: Vec::new(),
        picks: vec![0; n],
        done: false,
    };
    it.reset_runs();
    Ok(it)
}

impl CanonicalIter {
    fn reset_runs(&mut self) {
        // bit i of the mask set means a run boundary after position i
        self.runs.clear();
        let mut start = 0;
        for i in 0..self.n {
            if i + 1 == self.n || self.mask >> i & 1 == 1 {
                self.runs.push((start, i + 1));
                start = i + 1;
            }
        }
        self.picks.iter_mut().for_each(|p| *p = 0);
    }

    fn current(&self) -> Configuration {
        let mut alignment = Alignment::ALL[self.first];
        let mut comps = Vec::with_capacity(self.n);
        for &(s, e) in &self.runs {
            for &k in &self.picks[s..e] {
                comps.push(self.kinds.component(alignment, k));
            }
            alignment = alignment.flip();
        }
        Configuration::new(comps).expect("non-empty")
    }

    /// Next non-decreasing assignment within runs, rightmost run first.
    fn advance_picks(&mut self) -> bool {
        let m = self.kinds.len();
        for &(s, e) in self.runs.iter().rev() {
            if let Some(i) = (s..e).rev().find(|&i| self.picks[i] + 1 < m) {
                let v = self.picks[i] + 1;
                self.picks[i..e].iter_mut().for_each(|p| *p = v);
                return true;
            }
            self.picks[s..e].iter_mut().for_each(|p| *p = 0);
        }
        false
    }

    fn advance(&mut self) {
        if self.advance_picks() {
            return;
        }
        if self.mask + 1 < 1u64 << (self.n - 1) {
            self.mask += 1;
            self.reset_runs();
            return;
        }
        if self.first + 1 < Alignment::ALL.len() {
            self.first += 1;
            self.mask = 0;
            self.reset_runs();
            return;
        }
        self.done = true;
    }
}

impl Iterator for CanonicalIter {
    type Item = Configuration;

    fn next(&mut self) -> Option<Configuration> {
        if self.done {
            return None;
        }
        let out = self.current();
        self.advance();
        Some(out)
    }
}

/// A seeded random canonical configuration of exact length `n`.
pub fn random_canonical(n: usize, n_c: usize, n_v: usize, seed: u64) -> Result<Configuration> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_canonical_with(&mut rng, n, n_c, n_v)
}

/// Draws a uniform run structure (first alignment and composition of `n`),
/// then fills each run with kinds drawn uniformly with replacement and
/// sorted. Not uniform over the canonical set.
pub fn random_canonical_with<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    n_c: usize,
    n_v: usize,
) -> Result<Configuration> {
    if n == 0 {
        return Err(Error::invalid("random configuration length must be at least 1"));
    }
    let kinds = Kinds::new(n_c, n_v)?;
    let mut alignment = Alignment::ALL[rng.random_range(0..2)];
    let mut comps = Vec::with_capacity(n);
    let mut run: Vec<usize> = Vec::new();
    for i in 0..n {
        run.push(rng.random_range(0..kinds.len()));
        let boundary = i + 1 == n || rng.random_bool(0.5);
        if boundary {
            run.sort_unstable();
            comps.extend(run.drain(..).map(|k| kinds.component(alignment, k)));
            alignment = alignment.flip();
        }
    }
    Configuration::new(comps)
}

/// A uniformly random single component on the grid.
pub fn random_component<R: Rng + ?Sized>(rng: &mut R, n_c: usize, grid: &ValueGrid) -> Component {
    let alignment = Alignment::ALL[rng.random_range(0..2)];
    let ctype = ComponentType::ALL[rng.random_range(0..n_c.min(3))];
    let bin = rng.random_range(0..grid.n_v()) as u8;
    Component::on_grid(alignment, ctype, bin, grid)
}
