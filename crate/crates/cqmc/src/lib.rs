//! Conditional quasi-Monte Carlo for discontinuous option-pricing integrands.
//!
//! The library prices arithmetic Asian options and their Greeks written in
//! the canonical form `f(x) = g(x) * 1{phi(x) >= 0}` over standard normal
//! inputs, and estimates the integrals with randomized quasi-Monte Carlo on
//! scrambled Sobol' nets. The key accuracy lever is *conditioning*
//! (preintegration): one coordinate is integrated out in closed form, which
//! removes the discontinuity and restores the near-`O(1/n)` convergence that
//! QMC achieves on smooth integrands.
//!
//! Module map:
//!
//! * [`lds`] - Sobol' digital nets and Matousek linear scrambling.
//! * [`normal`] - standard-normal pdf / cdf / inverse cdf.
//! * [`path`] - Brownian-path covariance and generating matrices
//!   (standard, Brownian bridge, PCA).
//! * [`payoff`] - the seven benchmark integrands and their
//!   affine-exponential term decompositions.
//! * [`smooth`] - preintegration: region classification, root solving, and
//!   the closed-form conditional expectation, with a quadrature fallback.
//! * [`anova`] - quadrature ANOVA oracle for small dimensions.
//! * [`reduce`] - gradient-PCA orthogonal transforms applied after
//!   conditioning.
//! * [`harness`] - replicated convergence studies, reference values, and
//!   CSV/SVG reports.

pub mod anova;
pub mod harness;
pub mod lds;
mod linalg;
pub mod normal;
pub mod path;
pub mod payoff;
pub mod quad;
pub mod reduce;
pub mod report;
mod rng;
pub mod smooth;

pub use harness::{convergence_study, estimate, reference_value, ExperimentConfig};
pub use lds::{DigitalNet, ScrambleSeed, ScrambledNet};
pub use path::{Construction, GeneratingMatrix, MarketParams};
pub use payoff::{Example, IntegrandSpec};
pub use smooth::PreintegratedIntegrand;
