//! Hypothesis testing over locally differentially private signals.
//!
//! Two local mechanisms are supported:
//!
//! - [`symmetric`]: classic randomized response over the type alphabet, whose
//!   channel is the affine map `p -> rho * 1 + gamma * p`.
//! - [`nonsymmetric`]: the two-signal mechanism where every user gets a public
//!   random sign pattern `b in {+1,-1}^T` and reports `b(x)` with probability
//!   `1/2 + eta`.
//!
//! On top of these sit maximum-likelihood estimation ([`mle`]), identity and
//! independence testers ([`testers`]) and a seeded Monte-Carlo harness
//! ([`experiments`]). Shared probability utilities live in [`prob`] and the
//! chi-squared distribution in [`chi2`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chi2;
pub mod error;
pub mod experiments;
pub mod mle;
pub mod nonsymmetric;
pub mod prob;
pub mod seed;
pub mod symmetric;
pub mod testers;

pub use chi2::{chi2_cdf, chi2_quantile, Chi2Table};
pub use error::{Error, Result};
pub use nonsymmetric::{NonSymUser, NonSymmetricMechanism, SignPattern, ThetaEstimator};
pub use prob::{DomainSpec, ProbVector};
pub use seed::SeedTree;
pub use testers::{Decision, TestOutcome};
pub use symmetric::{SignalHistogram, SymmetricMechanism};

