use std::path::Path;

use twoport_core::dataset::{generate, load_split, GenerateOptions, Split, SplitSpec};
use twoport_core::eval::{evaluate, EvalTable, MatchMode};
use twoport_core::ValueGrid;
use twoport_neural::model::{Dims, Mode, Model};
use twoport_neural::predict::decode_normalized;
use twoport_neural::train::{samples_of, train, TrainConfig, TrainLog};

pub struct ModeResult {
    pub mode: Mode,
    pub log: TrainLog,
    pub table: EvalTable,
    pub seconds: f64,
}

impl ModeResult {
    pub fn value_agnostic(&self) -> f64 {
        self.table.overall().1
    }
}

/// Generates the reduced dataset in `dir` and trains one desk-scale model per
/// mode with identical data, seed and schedule.
pub fn run(dir: &Path, modes: &[Mode], epochs: usize, mut progress: impl FnMut(Mode, usize, f64)) -> Vec<ModeResult> {
    let spec = SplitSpec::reduced();
    generate(dir, &spec, 2024, &GenerateOptions::default()).unwrap();
    let grid = ValueGrid::default();
    let train_set = samples_of(&load_split(dir, Split::Train).unwrap(), &grid).unwrap();
    let val_set = samples_of(&load_split(dir, Split::Val).unwrap(), &grid).unwrap();
    let test = load_split(dir, Split::Test).unwrap();
    let config = TrainConfig {
        epochs,
        seed: 17,
        ..TrainConfig::default()
    };
    modes
        .iter()
        .map(|&mode| {
            let t = std::time::Instant::now();
            let mut m = Model::<f32>::new(Dims::desk(), mode, 17).unwrap();
            let log = train(&mut m, &train_set, &val_set, &config, |e| progress(mode, e.epoch, e.val_partial)).unwrap();
            let table = evaluate(
                &test,
                |r| &r.config,
                |r| {
                    let x: Vec<f32> = r.normalized.as_slice().iter().map(|&v| v as f32).collect();
                    decode_normalized(&m, &x, &grid).ok().map(|(c, _)| c)
                },
                &grid,
                MatchMode::Canonical,
            )
            .unwrap();
            ModeResult {
                mode,
                log,
                table,
                seconds: t.elapsed().as_secs_f64(),
            }
        })
        .collect()
}
