//! Permutation-based information transfer measures for multivariate
//! spatiotemporal time series.
//!
//! The crate symbolizes each channel into ordinal patterns, counts aligned
//! symbol tuples in one joint table per evaluation, and derives entropy,
//! mutual information, transfer entropy and momentary sorting information
//! transfer (MSIT, bivariate and spatiotemporally conditioned) from it. The
//! local (pointwise) form of MSIT gives per-cell, per-timestep transfer
//! profiles. Around the estimators sit a shuffle-surrogate pipeline, an
//! arm-geometry preprocessor and a synthetic data generator.

pub mod arm_geometry;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod field;
pub mod io;
pub mod localizer;
pub mod pipeline;
pub mod symbolization;
pub mod synthetic;

pub use error::{Error, Result};
pub use estimators::{MeasureConfig, Sender};
pub use field::SpatioTemporalField;
pub use symbolization::{TieRule, TimeSeries};
