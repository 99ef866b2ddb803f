//! Transmittivity measurement with squeezed vacuum: Gaussian squeezed-thermal
//! states, an OPO source model, seeded homodyne sampling, pattern-function
//! tomography and accuracy / photon-dose budgets.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod homodyne;
pub mod opo;
pub mod runner;
pub mod stats;
pub mod stv;
pub mod tomography;

pub use error::{Error, Result};
pub use estimator::{Measured, Method, TransmittivityEstimate};
pub use homodyne::{DetectionConfig, PhaseStrategy, QuadratureSample};
pub use opo::OpoParams;
pub use stv::{PhotonNumbers, StvState};
pub use tomography::{KernelEstimate, StateEstimate};
