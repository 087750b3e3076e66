//! Clusterwise linear regression fitted by EM under data-driven bounds on
//! the component variances.
//!
//! The bounds `target·√c ≤ σ²_g ≤ target/√c` keep the likelihood bounded and
//! rule out spurious components. The scale balance `c` is tuned either by
//! cross-validated likelihood or by the k-deleted likelihood, and the number
//! of components is chosen by BIC.

pub mod em;
pub mod error;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod selection;
pub mod simulation;
pub mod tuning;

pub use error::{Error, Result};
