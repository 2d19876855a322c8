//! Measurement-driven lower bounds on the Fisher information of black-box
//! stochastic systems.
//!
//! The bound only needs the first two moments of a bank of output
//! transformations `phi(z)` at a few calibrated parameter values:
//!
//! ```text
//! F(theta) >= dmu' R^-1 dmu,   mu = E[phi(z)],  R = Cov[phi(z)],  dmu = d mu / d theta
//! ```
//!
//! Module map:
//!
//! - [`transforms`]: the statistic bank `phi`.
//! - [`models`]: samplers for the studied systems and exponential-family references.
//! - [`moments`]: mergeable moment accumulation with common random numbers.
//! - [`bound`]: generic and matched bounds with covariance regularization.
//! - [`oracle`]: exact Fisher information by closed form or quadrature, and the CRLB.
//! - [`experiments`]: grid sweeps, CSV/SVG output and validation suites.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bound;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod models;
pub mod moments;
pub mod oracle;
pub mod transforms;

pub use bound::{
    derivative_mu, generic_bound, matched_bound, optimal_alpha, optimal_weights_normalized,
    solve_covariance, BoundPoint, RegularizationPolicy,
};
pub use error::{Error, Result};
pub use models::{ModelSpec, ReferenceFamily, StochasticSystem};
pub use moments::{estimate_triple, MomentAccumulator, MomentSummary, MomentTriple};
pub use transforms::{parse_transform_spec, standard_transform_set, TransformKind, TransformSet};
