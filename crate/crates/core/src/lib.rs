//! Two-port ladder circuit design toolkit.
//!
//! * [`circuit`], [`count`], [`enumerate`], [`literal`]: chains of series and
//!   shunt R/L/C elements, their canonical form, exact counts and enumeration.
//! * [`sim`]: ABCD-cascade simulation of port voltage and current.
//! * [`tape`], [`diffsim`], [`adam`]: reverse-mode gradients of the spectrum
//!   loss and Adam refinement of component values.
//! * [`ga`]: genetic search over structures and quantized values.
//! * [`dataset`], [`eval`]: dataset generation and accuracy metrics.

pub mod adam;
pub mod circuit;
pub mod count;
pub mod dataset;
pub mod diffsim;
pub mod enumerate;
pub mod error;
pub mod eval;
pub mod ga;
pub mod literal;
pub mod scalar;
pub mod sim;
pub mod spectrum_io;
pub mod tape;

pub use circuit::{Alignment, Component, ComponentType, Configuration, ValueGrid};
pub use error::{Error, Result};
pub use sim::{CurrentProbe, FrequencyGrid, Setup, Termination};

pub type Spectrum64 = sim::Spectrum<f64>;
pub type Spectrum32 = sim::Spectrum<f32>;
pub type NormalizedSpectrum64 = sim::NormalizedSpectrum<f64>;
pub type NormalizedSpectrum32 = sim::NormalizedSpectrum<f32>;
pub type Tape64 = tape::Tape<f64>;
pub type Complex2x2F64 = sim::Complex2x2<f64>;
