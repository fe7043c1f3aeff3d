//! handkit-core — parametric hand-model geometry, landmark fitting,
//! detection post-processing, feature sampling, and evaluation metrics.
//!
//! The crate is organized around pure functions over immutable values:
//!
//! - [`rotation`] — axis-angle / 6D / matrix conversions.
//! - [`hand_model`] — kinematic tree, linear blend skinning, synthetic
//!   asset generation, and the model asset file format.
//! - [`camera`] — weak-perspective and pinhole projection, Procrustes
//!   similarity alignment.
//! - [`losses`] — reprojection, biomechanical, PCA-prior, and
//!   reconstruction loss terms.
//! - [`fitting`] — the landmark fitting optimizer with numeric gradients.
//! - [`detection`] — box algebra, DFL, anchor-free decoding, NMS, and
//!   multi-detector fusion.
//! - [`sampler`] — feature pyramids, bilinear vertex-feature sampling,
//!   and residual refinement.
//! - [`metrics`] — Procrustes-aligned errors, F-scores, AUC, AP/mAP, and
//!   temporal coherence measures.
//! - [`container`] / [`formats`] — the sectioned text container and the
//!   record-style file formats used by the CLI.
//!
//! Conventions used throughout: meters for 3D coordinates, pixels for 2D,
//! image origin top-left with +y down, row-major flattening of V x 3
//! vertex arrays, and the 21-keypoint order of 16 kinematic joints
//! followed by 5 fingertips (thumb to little finger).
//!
//! Everything is deterministic: random generation is seeded explicitly and
//! no global state is consulted.

pub mod camera;
pub mod container;
pub mod detection;
pub mod error;
pub mod fitting;
pub mod formats;
pub mod hand_model;
pub mod losses;
pub mod metrics;
pub mod rotation;
pub mod sampler;

pub use error::{Error, Result};
