//! Privacy-preserving, vertically federated partial least squares regression.
//!
//! The crate is organized around the pieces a federation needs:
//!
//! * [`pls`]: centralized SVD-based PLS2 and its quality and monitoring
//!   metrics. The computation service provider runs the very same routine
//!   on masked data.
//! * [`masking`]: seeded orthogonal and invertible masks.
//! * [`federation`]: the party state machines (trusted authority,
//!   computation service provider, feature and label contributors), the
//!   in-process transport and the transcript audit.
//! * [`simulator`]: a multistage quadratic process simulator that produces
//!   vertically partitioned benchmark datasets.
//! * [`experiment`]: dataset splits and the centralized / local / federated
//!   comparison harness.

// `!(a > b)` is used deliberately so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod experiment;
pub mod federation;
pub mod linalg;
pub mod masking;
pub mod pls;
pub mod rng;
pub mod simulator;

/// Dense, column-major `f64` matrix used for every numeric payload.
pub type RealMatrix = nalgebra::DMatrix<f64>;

pub use federation::{
    audit_views, Federation, FederationConfig, FederationError, PartyId, PayloadTag, Phase, ProtocolTranscript,
};
pub use masking::{InvertibleMask, MaskKeySet, MaskingError, OrthogonalMatrix, OrthogonalMethod};
pub use pls::{PlsComponents, PlsError, PlsModel, StandardizationParams};
