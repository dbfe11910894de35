//! Ensemble control of bilinear quantum systems by spectral truncation,
//! two-level bracket synthesis and periodic averaging.

pub mod linalg;
pub mod rotor;
pub mod spectral;
pub mod su2;
pub mod target;
pub mod averaging;
pub mod galerkin;
pub mod pipeline;
