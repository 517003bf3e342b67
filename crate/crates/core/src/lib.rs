//! Composable streaming anomaly detection.
//!
//! A detector chains four parts: a [`representation`] turning raw values into
//! features, a [`learning`] strategy maintaining the reference group, a
//! [`nonconformity`] measure scoring features against that group, and the
//! [`scoring`] stage turning nonconformity into conformal p-values, a sliding
//! uniformity test and a final score in `[0, 1]`. [`pipeline`] wires them and
//! [`evaluation`] scores detector output against ground truth.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision.

pub mod error;
pub mod evaluation;
pub mod learning;
pub mod nonconformity;
pub mod pipeline;
pub mod representation;
pub mod scalar;
pub mod scoring;

pub use error::{Error, Result};
pub use learning::{ReferenceGroup, Strategy, StrategyKind};
pub use nonconformity::{MeasureConfig, MeasureKind, NonconformityMeasure};
pub use pipeline::{
    build_detector, run_stream, DetectorConfig, DetectorSpec, Maintenance, ScoreRecord,
};
pub use representation::{FeatureVector, RepresentationConfig, SaxWord};
pub use scalar::Scalar;

/// Double-precision detector.
pub type Detector = pipeline::Detector<f64>;
/// Single-precision detector.
pub type Detector32 = pipeline::Detector<f32>;
pub type StreamPoint = pipeline::StreamPoint<f64>;
pub type StreamPoint32 = pipeline::StreamPoint<f32>;
