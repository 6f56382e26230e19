//! Hypernetwork-conditioned GRU decoder for two-port chain structures.
//!
//! A multi-scale convolutional trunk reads the normalized spectrum; in the
//! hyper modes a linear generator turns its features into the decoder's
//! weights, in the vanilla mode they set the decoder's initial hidden state.
//! The decoder emits (alignment, type, value bin) tokens until EOS.

pub mod checkpoint;
pub mod decoder;
pub mod elem;
pub mod error;
pub mod hypernet;
pub mod layers;
pub mod model;
pub mod predict;
pub mod train;

pub use decoder::{DecoderDims, DecoderLayout, Token};
pub use error::{NeuralError, Result};
pub use model::{Architecture, Dims, Mode, Model, Sample};

pub type Model32 = Model<f32>;
pub type Model64 = Model<f64>;
pub type Sample32 = Sample<f32>;
pub type Sample64 = Sample<f64>;
