//! Genetic search over chain structure and grid values.
//!
//! Each generation keeps the elites unchanged and fills the rest of the
//! population by fitness-proportional selection, single-point crossover and
//! mutation. Fitness is `exp(-loss)`; selection normalizes it over the
//! population, computed as `exp(-(loss - min_loss))` so that populations whose
//! losses all exceed ~745 do not underflow to zero weight.

use std::cmp::Ordering;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{Component, Configuration, ValueGrid};
use crate::diffsim::{loss_spectrum, CandidateConfig};
use crate::enumerate::{random_canonical_with, random_component};
use crate::error::{Error, Result};
use crate::sim::{Setup, Spectrum};

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub config: Configuration,
    /// Loss against the current target, `+inf` for a singular simulation.
    pub cached_loss: Option<f64>,
}

impl Individual {
    pub fn new(config: Configuration) -> Self {
        Self {
            config,
            cached_loss: None,
        }
    }

    pub fn loss(&self) -> f64 {
        self.cached_loss.unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaParams {
    pub population: usize,
    pub elites: usize,
    pub mutation_prob: f64,
    pub generations: usize,
    pub n_c: usize,
    pub n_v: usize,
    /// Inclusive range of initial chain lengths.
    pub init_len: (usize, usize),
    /// Longest chain crossover and mutation may produce.
    pub max_len: usize,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population: 100,
            elites: 10,
            mutation_prob: 0.01,
            generations: 1000,
            n_c: 3,
            n_v: 5,
            init_len: (1, 10),
            max_len: 10,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<()> {
        if self.population == 0 || self.elites >= self.population {
            return Err(Error::invalid(format!(
                "need 0 <= elites < population, got {} and {}",
                self.elites, self.population
            )));
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return Err(Error::invalid(format!(
                "mutation probability {} outside [0, 1]",
                self.mutation_prob
            )));
        }
        let (lo, hi) = self.init_len;
        if lo == 0 || hi < lo || hi > self.max_len {
            return Err(Error::invalid(
                "initial length range must satisfy 1 <= lo <= hi <= max_len",
            ));
        }
        ValueGrid::new(self.n_v)?;
        crate::circuit::ComponentType::universe(self.n_c)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    Add,
    Replace,
    Remove,
}

/// With probability `p`, adds, removes or replaces one component, chosen
/// uniformly among the applicable ones: removal needs two or more
/// components, addition needs room below `max_len`.
pub fn mutate<R: Rng + ?Sized>(
    ind: &Individual,
    p: f64,
    n_c: usize,
    max_len: usize,
    grid: &ValueGrid,
    rng: &mut R,
) -> Individual {
    mutate_traced(ind, p, n_c, max_len, grid, rng).0
}

/// [`mutate`], also reporting which mutation fired.
pub fn mutate_traced<R: Rng + ?Sized>(
    ind: &Individual,
    p: f64,
    n_c: usize,
    max_len: usize,
    grid: &ValueGrid,
    rng: &mut R,
) -> (Individual, Option<Mutation>) {
    if !rng.random_bool(p) {
        return (ind.clone(), None);
    }
    let mut comps: Vec<Component> = ind.config.components().to_vec();
    let mut ops = vec![Mutation::Replace];
    if comps.len() < max_len {
        ops.insert(0, Mutation::Add);
    }
    if comps.len() > 1 {
        ops.push(Mutation::Remove);
    }
    let kind = ops[rng.random_range(0..ops.len())];
    match kind {
        Mutation::Add => {
            let at = rng.random_range(0..=comps.len());
            comps.insert(at, random_component(rng, n_c, grid));
        }
        Mutation::Replace => {
            let at = rng.random_range(0..comps.len());
            comps[at] = random_component(rng, n_c, grid);
        }
        Mutation::Remove => {
            let at = rng.random_range(0..comps.len());
            comps.remove(at);
        }
    }
    let config = Configuration::new(comps).expect("non-empty after mutation");
    (Individual::new(config.canonicalize()), Some(kind))
}

/// Prefix of `a` up to one random cut joined to the suffix of `b` from
/// another; cuts are redrawn until the child has 1 to `max_len` components.
pub fn crossover<R: Rng + ?Sized>(a: &Individual, b: &Individual, max_len: usize, rng: &mut R) -> Individual {
    let (na, nb) = (a.config.len(), b.config.len());
    assert!(max_len >= 1);
    loop {
        let i = rng.random_range(0..=na);
        let j = rng.random_range(0..=nb);
        if i + (nb - j) > max_len {
            continue;
        }
        if let Some(child) = splice(&a.config, i, &b.config, j) {
            return Individual::new(child);
        }
    }
}

/// `a[..i] ++ b[j..]`, canonicalized; `None` when empty.
pub fn splice(a: &Configuration, i: usize, b: &Configuration, j: usize) -> Option<Configuration> {
    let mut comps = a.components()[..i].to_vec();
    comps.extend_from_slice(&b.components()[j..]);
    Configuration::new(comps).ok().map(|c| c.canonicalize())
}

/// Spectrum loss of a configuration, `+inf` when the simulation is singular.
pub fn config_loss(config: &Configuration, target: &Spectrum<f64>, setup: &Setup) -> f64 {
    match loss_spectrum(&CandidateConfig::from_config(config), target, setup) {
        Ok(l) if l.is_finite() => l,
        _ => f64::INFINITY,
    }
}

/// `exp(-loss)`; zero for singular individuals.
pub fn fitness(ind: &Individual, target: &Spectrum<f64>, setup: &Setup) -> f64 {
    let loss = ind
        .cached_loss
        .unwrap_or_else(|| config_loss(&ind.config, target, setup));
    (-loss).exp()
}

/// Selection probabilities proportional to `exp(-loss)`.
pub fn selection_probabilities(losses: &[f64]) -> Vec<f64> {
    let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return vec![1.0 / losses.len() as f64; losses.len()];
    }
    let w: Vec<f64> = losses.iter().map(|l| (-(l - min)).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Losses below this are rounding residue and rank as ties.
pub const TIE_LOSS: f64 = 1e-18;

/// Ranking for elites and the reported best: by loss, with every loss below
/// [`TIE_LOSS`] treated as a tie broken by length. Ten 100 nH series inductors
/// and one 1 µH inductor agree only to rounding error, so raw loss alone
/// rewards redundant components.
pub fn rank_cmp(a: &Individual, b: &Individual) -> Ordering {
    let fit = |x: &Individual| x.loss() < TIE_LOSS;
    match (fit(a), fit(b)) {
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        (true, true) => a
            .config
            .len()
            .cmp(&b.config.len())
            .then_with(|| a.loss().total_cmp(&b.loss())),
        (false, false) => a.loss().total_cmp(&b.loss()),
    }
    .then_with(|| a.config.deterministic_cmp(&b.config))
}

fn evaluate(pop: &mut [Individual], target: &Spectrum<f64>, setup: &Setup) {
    pop.par_iter_mut()
        .filter(|ind| ind.cached_loss.is_none())
        .for_each(|ind| ind.cached_loss = Some(config_loss(&ind.config, target, setup)));
}

/// Second parent, drawn by selection weight among configurations that differ
/// from the first; falls back to the first when the population is uniform.
fn pick_mate<R: Rng + ?Sized>(pop: &[Individual], probs: &[f64], first: usize, rng: &mut R) -> usize {
    let a = &pop[first].config;
    let w: Vec<f64> = pop
        .iter()
        .zip(probs)
        .map(|(x, &p)| if x.config == *a { 0.0 } else { p })
        .collect();
    match WeightedIndex::new(&w) {
        Ok(d) => d.sample(rng),
        Err(_) => {
            // all weight on copies of `a`, or every other weight underflowed
            let others: Vec<usize> = (0..pop.len()).filter(|&i| pop[i].config != *a).collect();
            if others.is_empty() {
                first
            } else {
                others[rng.random_range(0..others.len())]
            }
        }
    }
}

fn min_loss_index(pop: &[Individual]) -> usize {
    (0..pop.len())
        .min_by(|&i, &j| pop[i].loss().total_cmp(&pop[j].loss()))
        .expect("non-empty population")
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub best: Individual,
    /// Lowest loss in the population after each generation.
    pub history: Vec<f64>,
}

/// Runs the genetic search. Deterministic per seed regardless of thread count.
pub fn evolve(target: &Spectrum<f64>, params: &GaParams, setup: &Setup, seed: u64) -> Result<Evolution> {
    params.validate()?;
    setup.termination.validate()?;
    if target.is_empty() || !target.is_finite() {
        return Err(Error::invalid("target spectrum must be non-empty and finite"));
    }
    let grid = ValueGrid::new(params.n_v)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = params.init_len;
    let mut pop: Vec<Individual> = (0..params.population)
        .map(|_| {
            let n = rng.random_range(lo..=hi);
            random_canonical_with(&mut rng, n, params.n_c, params.n_v).map(Individual::new)
        })
        .collect::<Result<_>>()?;
    evaluate(&mut pop, target, setup);

    let mut history = Vec::with_capacity(params.generations);
    for _ in 0..params.generations {
        pop.sort_by(rank_cmp);
        let losses: Vec<f64> = pop.iter().map(Individual::loss).collect();
        let probs = selection_probabilities(&losses);
        let pick = WeightedIndex::new(&probs).expect("positive selection weights");
        let mut next: Vec<Individual> = pop[..params.elites].to_vec();
        // a tie-band reordering must not drop the lowest raw loss
        let raw_best = min_loss_index(&pop);
        if raw_best >= params.elites {
            next[params.elites - 1] = pop[raw_best].clone();
        }
        while next.len() < params.population {
            let ia = pick.sample(&mut rng);
            let a = &pop[ia];
            let b = &pop[pick_mate(&pop, &probs, ia, &mut rng)];
            let child = crossover(a, b, params.max_len, &mut rng);
            next.push(mutate(&child, params.mutation_prob, params.n_c, params.max_len, &grid, &mut rng));
        }
        evaluate(&mut next, target, setup);
        pop = next;
        history.push(pop[min_loss_index(&pop)].loss());
    }
    pop.sort_by(rank_cmp);
    Ok(Evolution {
        best: pop.swap_remove(0),
        history,
    })
}
