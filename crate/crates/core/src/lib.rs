//! Single-view novel view synthesis.
//!
//! Given one RGB image of an object and its mask, an angle-conditioned
//! encoder/decoder ([`viewnet::ViewNet`]) generates RGB and depth images of
//! the same object from requested relative viewpoints. The crate bundles
//! everything needed to train and score such generators without external
//! frameworks:
//!
//! * [`tensor`]: dense tensors with a reverse-mode tape and a finite-difference checker,
//! * [`viewnet`]: the generator, its angle encoding and the checkpoint format,
//! * [`render`]: procedural shapes, an SDF ray caster and the multi-view dataset writer,
//! * [`extract`]: background segmentation, crop normalization and per-class model routing,
//! * [`train`]: within-instance pair sampling, Adam, gradient clipping and the training loop,
//! * [`eval`]: image error/accuracy, per-class reports, rotation curves and continuity sweeps,
//! * [`cli`]: the `viewsynth` command-line front end.

pub mod cli;
pub mod error;
pub mod eval;
pub mod extract;
pub mod image;
pub mod kv;
pub mod render;
pub mod tensor;
pub mod train;
pub mod viewnet;

pub use error::{CheckpointError, Error, Result};
