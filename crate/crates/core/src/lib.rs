//! Joint modelling of the fuel-economy gaps of the two vehicles in a garage.
//!
//! The crate covers the whole estimation pipeline:
//!
//! * [`data`]: raw garage records, gap ratios, outlier trimming, design matrices
//!   and grouped summaries.
//! * [`halton`] and [`normal`]: Halton draws and the standard-normal transforms
//!   used to build a fixed [`halton::DrawStore`].
//! * [`sure`]: per-equation OLS and two-step feasible-GLS seemingly unrelated
//!   regression with a bivariate normal error.
//! * [`rp`]: random-parameter SURE estimated by maximum simulated likelihood.
//! * [`selection`]: AIC / CAIC / SBIC / ICOMP scoring and random-parameter
//!   distribution summaries.
//! * [`synthetic`]: seeded data generation plus exact and quadrature marginal
//!   likelihoods used to check the simulated likelihood.
//! * [`report`]: JSON fit documents shared with the command-line tool.

// `!(x > 0.0)` is the NaN-rejecting form used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod halton;
pub mod linalg;
pub mod normal;
pub mod optim;
pub mod report;
pub mod rp;
pub mod selection;
pub mod spec;
pub mod sure;
pub mod synthetic;

pub use error::{Error, Result};
