//! Single-channel heart/lung sound separation with KL-divergence NMF, plus a
//! feature-to-text interpretation layer that maps each separated source to a
//! diagnostic term.
//!
//! The numerical core ([`timefreq`], [`nmf`], [`separation`], [`synth`]) is
//! generic over the sample type through [`Scalar`]; the aliases below pin the
//! common `f32` / `f64` instantiations.

pub mod audio_io;
pub mod error;
pub mod features;
pub mod interpret;
pub mod nmf;
mod scalar;
pub mod separation;
pub mod synth;
pub mod timefreq;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Signal32 = audio_io::Signal<f32>;
pub type Signal64 = audio_io::Signal<f64>;

pub type Spectrogram32 = timefreq::Spectrogram<f32>;
pub type Spectrogram64 = timefreq::Spectrogram<f64>;

pub type ComplexSpectrogram32 = timefreq::ComplexSpectrogram<f32>;
pub type ComplexSpectrogram64 = timefreq::ComplexSpectrogram<f64>;

pub type NmfModel32 = nmf::NmfModel<f32>;
pub type NmfModel64 = nmf::NmfModel<f64>;

pub type SeparatedSources32 = separation::SeparatedSources<f32>;
pub type SeparatedSources64 = separation::SeparatedSources<f64>;
