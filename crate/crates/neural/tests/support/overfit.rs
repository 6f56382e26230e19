use twoport_core::enumerate::random_canonical;
use twoport_core::sim::{default_grid, simulate};
use twoport_core::{Configuration, Setup, ValueGrid};
use twoport_neural::model::{tokens_of, Dims, Mode, Model, Sample};
use twoport_neural::train::{train, TrainConfig};

/// Smallest max-abs distance allowed between two chosen normalized spectra.
/// Chains such as `P:C:1m` and `P:C:1u;P:C:1m` differ by far less and no
/// model can tell them apart.
pub const MIN_SEPARATION: f32 = 1e-2;

/// `n` seeded chains of lengths 1 to 4 with pairwise distinguishable spectra.
pub fn samples(n: usize) -> Vec<(Configuration, Sample<f32>)> {
    let grid = ValueGrid::default();
    let freq = default_grid();
    let mut out: Vec<(Configuration, Sample<f32>)> = Vec::new();
    let mut seed = 100u64;
    while out.len() < n {
        let c = random_canonical(1 + out.len() % 4, 3, 5, seed).unwrap();
        seed += 1;
        let s = simulate(&c, &freq, &Setup::default()).unwrap();
        let x: Vec<f32> = s.normalize().unwrap().as_slice().iter().map(|&v| v as f32).collect();
        let apart = out.iter().all(|(_, o)| {
            o.spectrum.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max) >= MIN_SEPARATION
        });
        if apart {
            let tokens = tokens_of(&c, &grid).unwrap();
            out.push((c, Sample { spectrum: x, tokens }));
        }
    }
    out
}

pub struct Outcome {
    pub model: Model<f32>,
    pub chains: Vec<Configuration>,
    pub token_accuracy: f64,
    pub exact_decodes: usize,
    pub n: usize,
}

/// Trains a desk-scale model on `n` samples, validating on the same ones,
/// and reports teacher-forced token accuracy of the kept parameters.
pub fn run(n: usize, mode: Mode, config: &TrainConfig) -> Outcome {
    let (chains, data): (Vec<Configuration>, Vec<Sample<f32>>) = samples(n).into_iter().unzip();
    let mut m = Model::<f32>::new(Dims::desk(), mode, 7).unwrap();
    train(&mut m, &data, &data, config, |_| {}).unwrap();
    let (_, counts) = m.score(&data).unwrap();
    let exact_decodes = data
        .iter()
        .filter(|s| m.decode(&s.spectrum).unwrap().tokens == s.tokens)
        .count();
    Outcome {
        model: m,
        chains,
        token_accuracy: counts.accuracy(),
        exact_decodes,
        n,
    }
}
