//! Crowd behaviour anomaly detection from tracklets.
//!
//! The vision front-end turns grayscale video into short point trajectories
//! (background subtraction, corner detection, pyramidal Lucas-Kanade). Each
//! frame is then summarized by four scene-level descriptors (collectiveness,
//! conflict, density and mean speed) that feed either a Gaussian-mixture
//! outlier detector or an RBF support vector machine.
//!
//! Hot loops run through [`par`], which uses rayon when the `parallel`
//! feature is enabled and falls back to plain iteration otherwise.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod foreground;
pub mod frame_io;
pub mod models;
pub mod par;
pub mod pipeline;
pub mod seed;
pub mod synth;
pub mod tracker;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use features::{FeatureKind, FeatureVector};
pub use frame_io::Frame;
pub use models::{Detector, Label};
pub use par::Execution;
