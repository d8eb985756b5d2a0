//! Scalar abstraction so the expansion engine and linear solvers can run
//! either in exact rational arithmetic or in `f64`.

use crate::Rational;
use num_traits::{One, ToPrimitive, Zero};
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Field operations needed by the solvers and the expansion engine.
///
/// `BigRational` gives exact results (used for the neutral theory and all
/// exactness theorems); `f64` is used for quadrature-backed selection values
/// and for large fixed-rho linear systems.
pub trait Scalar:
    Clone
    + PartialEq
    + Debug
    + Send
    + Sync
    + Zero
    + One
    + Neg<Output = Self>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + 'static
{
    fn from_rational(r: &Rational) -> Self;

    fn from_i64(n: i64) -> Self;

    /// Approximate value, used for pivot selection and diagnostics only.
    fn to_f64_lossy(&self) -> f64;

    /// Pivot quality: any positive value marks a usable pivot. Exact types
    /// return 1 for every nonzero entry (no growth concerns); floats return
    /// the magnitude so elimination picks the largest pivot.
    fn pivot_score(&self) -> f64;

    /// Solve a sparse class system `diag x - sum w x = rhs`. Rationals go
    /// through the certified modular solver (dense exact elimination blows
    /// up on entry growth); floats eliminate densely.
    fn solve_sparse(rows: &[crate::linalg::SparseRow<Self>]) -> crate::error::Result<Vec<Self>>
    where
        Self: Sized,
    {
        crate::linalg::solve_sparse_dense(rows)
    }
}

impl Scalar for Rational {
    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }

    fn from_i64(n: i64) -> Self {
        Rational::from_integer(n.into())
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or_else(|| {
            // Fall back on a quotient of lossy conversions for extreme
            // numerators/denominators.
            let n = self.numer().to_f64().unwrap_or(f64::MAX);
            let d = self.denom().to_f64().unwrap_or(f64::MAX);
            n / d
        })
    }

    fn pivot_score(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            1.0
        }
    }

    fn solve_sparse(rows: &[crate::linalg::SparseRow<Self>]) -> crate::error::Result<Vec<Self>> {
        crate::exact::solve_class_modular(rows)
    }
}

impl Scalar for f64 {
    fn from_rational(r: &Rational) -> Self {
        r.to_f64_lossy()
    }

    fn from_i64(n: i64) -> Self {
        n as f64
    }

    fn to_f64_lossy(&self) -> f64 {
        *self
    }

    fn pivot_score(&self) -> f64 {
        self.abs()
    }
}
