//! Inferring which device a talker faces from the direct-path energy each
//! device receives.
//!
//! The pipeline runs per utterance: every device estimates the talker's
//! direction of arrival, the rays are triangulated into a location, each
//! device's direct-path channel is extracted blindly and its power is
//! compared against a speech radiation pattern.
//!
//! Signal-processing kernels are generic over the scalar type; the aliases
//! below fix it to `f64`, which every higher-level module uses.

pub mod aoa;
pub mod dsp;
pub mod error;
pub mod evalkit;
pub mod facing;
pub mod locate;
pub mod num;
pub mod scene;
pub mod simulate;

pub use error::{Error, Result};

pub type Signal = dsp::Signal<f64>;
pub type ImpulseResponse = dsp::ImpulseResponse<f64>;
pub type Correlation = dsp::Correlation<f64>;
