//! Mandarin tone classification from Mel spectrograms of aligned syllables.
//!
//! The crate covers the whole pipeline: audio front end ([`audio`]),
//! alignment files ([`alignment`]), tri-tone segmentation ([`segment`]),
//! context samples and their archive format ([`features`]), the residual
//! network ([`nn`]), training ([`train`]), scoring ([`eval`]) and a
//! synthetic corpus generator ([`synth`]).

pub mod alignment;
pub mod audio;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod nn;
pub mod pipeline;
pub mod segment;
pub mod synth;
pub mod tone;
pub mod train;

pub use error::{Error, Result};
pub use tone::Tone;
