//! Two-locus sampling distributions for finite-alleles models with recombination.
//!
//! The crate computes the probability of an ordered two-locus sample three ways:
//!
//! - an asymptotic expansion in the inverse recombination rate, to arbitrary
//!   order ([`expansion`]),
//! - rational (Pade) resummation of that expansion, with certified root
//!   scanning and a defect heuristic ([`pade`]),
//! - exact solution of the closed linear system over all configurations of
//!   bounded length, either at fixed recombination rate or as a rational
//!   function of it ([`exact`]).
//!
//! A diploid-selection extension for one locus is provided in [`selection`],
//! backed by quadrature over the weighted Dirichlet stationary density
//! ([`onelocus`]).

pub mod error;
pub mod exact;
pub mod expansion;
pub mod linalg;
pub mod model;
pub mod onelocus;
pub mod pade;
pub mod poly;
pub mod scalar;
pub mod selection;

pub use error::Error;
pub use model::{ModelParams, MutationModel, RMatrix, SampleConfig};
pub use scalar::Scalar;

/// Convenience alias used throughout.
pub type Rational = num_rational::BigRational;

/// Build an exact rational from an integer numerator/denominator pair.
pub fn rat(num: i64, den: i64) -> Rational {
    use num_bigint::BigInt;
    Rational::new(BigInt::from(num), BigInt::from(den))
}
