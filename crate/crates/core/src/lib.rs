//! Simulation and inversion toolkit for electromagnetic induction
//! measurements of small conductive targets.
//!
//! The pipeline: a dipole source array illuminates a target, the
//! multistatic response (MSR) matrix of field perturbations is assembled
//! from the target's conductive polarization tensor (CPT), targets are
//! localized with a MUSIC-type subspace functional, the CPT is recovered
//! by constrained least squares, and the target shape is classified by
//! matching multi-frequency singular-value descriptors against a
//! dictionary. A voxel volume-integral solver computes CPTs for arbitrary
//! shapes.

pub mod dictionary;
pub mod error;
pub mod forward;
pub mod localization;
pub mod recovery;
pub mod solver;
pub mod tensor;
pub mod util;

pub use error::{Error, Result};
