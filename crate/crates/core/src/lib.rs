//! Visible-light spectral fingerprinting for indoor localization.
//!
//! A dense-network position regressor is trained on 11-channel spectra,
//! a tabular GAN synthesizes extra spectra, the regressor pseudo-labels
//! them, labels outside the room are discarded, and the regressor is
//! retrained on the mixed corpus. [`simlab`] provides a deterministic
//! stand-in for a measurement campaign.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision used by the pipeline and the CLI.

pub mod config;
pub mod error;
pub mod geometry;
pub mod localizer;
pub mod nn;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod simlab;
pub mod spectra;
pub mod tabgan;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Spectrum = spectra::Spectrum<f64>;
pub type Spectrum32 = spectra::Spectrum<f32>;
pub type Position = geometry::Position<f64>;
pub type LabeledSample = spectra::LabeledSample<f64>;
pub type Dataset = spectra::Dataset<f64>;
pub type RoomPolygon = geometry::RoomPolygon<f64>;
pub type ReferenceLayout = geometry::ReferenceLayout<f64>;
pub type Lamp = simlab::Lamp<f64>;
pub type SensorModel = simlab::SensorModel<f64>;
pub type DenseNet = nn::DenseNet<f64>;
pub type DenseNet32 = nn::DenseNet<f32>;
pub type GanModel = tabgan::GanModel<f64>;
pub type TrainedLocalizer = localizer::TrainedLocalizer<f64>;
pub type RunConfig = config::RunConfig;
pub type PipelineResult = pipeline::PipelineResult;
