//! Probability vectors over finite (possibly multi-feature) domains.

mod distance;
mod domain;
mod sampling;
mod simplex;
mod vector;

pub use distance::{chi2_divergence, tv_distance, two_thirds_norm};
pub use domain::{marginal, product_distribution, product_vector, DomainSpec};
pub use sampling::{paninski_perturb, sample_multinomial, sample_types};
pub(crate) use sampling::binomial;
pub(crate) use simplex::project_raw;
pub use simplex::simplex_project;
pub use vector::ProbVector;
