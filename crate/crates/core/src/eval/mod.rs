//! Scoring generated views: per-image error and accuracy on the 0-255
//! scale, per-class reports, accuracy against relative rotation, yaw-sweep
//! continuity and cross-class generation.

mod evaluate;
mod generator;
mod metrics;

pub use evaluate::{
    continuity_score, evaluate_model, rotation_curve, signed_delta, BandAccuracy, ClassReport,
    ContinuityScore, EvalInstance, EvalReport, EvalSet, Evaluation, PairScore, RotationBin,
    RotationCurve,
};
pub use generator::{
    cross_class_generate, write_sequence, ConstantGenerator, GeneratedView, OracleGenerator,
    ViewGenerator, ViewRequest,
};
pub use metrics::{image_accuracy, image_error, PIXEL_MAX};
