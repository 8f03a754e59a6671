//! Site-specific CSI subspace acquisition from RSRP fingerprints: channel
//! simulation, probing codebooks, projector algebra, a parametric beam
//! scorer, calibration memory with confidence-weighted fusion, and Type-II
//! baselines.
//!
//! Every numerical routine is generic over [`scalar::Real`] (`f32` or `f64`);
//! the aliases below fix the common double-precision instantiation.

pub mod baselines;
pub mod calibration;
pub mod channel;
pub mod error;
pub mod numerics;
pub mod parametric;
pub mod probing;
pub mod rng;
pub mod scalar;
pub mod subspace;

pub use error::{Error, Result};
pub use scalar::{Cx, Real};

pub type Complex64 = scalar::Cx<f64>;
pub type Matrix = numerics::ComplexMatrix<f64>;
pub type Matrix32 = numerics::ComplexMatrix<f32>;
pub type Channel = channel::UeChannel<f64>;
pub type Codebook64 = probing::Codebook<f64>;
pub type Fingerprint = probing::RsrpFingerprint<f64>;
pub type Key = probing::CalibrationKey<f64>;
pub type Decision = subspace::SubspaceDecision<f64>;
pub type Memory = calibration::CalibrationMemory<f64>;
pub type Model = parametric::BeamScorerModel<f64>;
pub type Sample = parametric::TrainSample<f64>;
