//! Spectrum to configuration: normalize, decode, optionally refine values.

use twoport_core::diffsim::{refine, CandidateConfig, RefineOptions, RefinementReport};
use twoport_core::{Configuration, Setup, Spectrum64, ValueGrid};

use crate::decoder::Token;
use crate::error::{NeuralError, Result};
use crate::model::{config_of, Model};

#[derive(Debug, Clone)]
pub struct Prediction {
    /// Decoded structure with grid values, or refined values when asked.
    pub config: Configuration,
    pub tokens: Vec<Token>,
    pub refinement: Option<RefinementReport>,
}

/// Decodes a normalized input. Empty decodes are prediction failures.
pub fn decode_normalized(model: &Model<f32>, x: &[f32], grid: &ValueGrid) -> Result<(Configuration, Vec<Token>)> {
    let d = model.decode(x)?;
    match config_of(&d.tokens, grid)? {
        Some(c) => Ok((c, d.tokens)),
        None => Err(NeuralError::Prediction("decoder emitted EOS before any component".into())),
    }
}

pub fn predict(
    model: &Model<f32>,
    spectrum: &Spectrum64,
    setup: &Setup,
    refine_with: Option<&RefineOptions>,
    grid: &ValueGrid,
) -> Result<Prediction> {
    let x: Vec<f32> = spectrum.normalize()?.as_slice().iter().map(|&v| v as f32).collect();
    let (config, tokens) = decode_normalized(model, &x, grid)?;
    let Some(opts) = refine_with else {
        return Ok(Prediction {
            config,
            tokens,
            refinement: None,
        });
    };
    let start = CandidateConfig::from_config(&config);
    let r = refine(&start, spectrum, setup, opts)?;
    Ok(Prediction {
        config: r.candidate.to_config(grid)?,
        tokens,
        refinement: Some(r.report(&start)),
    })
}
