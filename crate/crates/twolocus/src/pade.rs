//! Pade resummation of the inverse-recombination-rate series.
//!
//! Approximants are built in the variable `x = 1/rho` from exact rational
//! series coefficients, evaluated with pole detection, and analysed for real
//! nonnegative roots in the `rho` domain (the defect heuristic).

use crate::error::{Error, Result};
use crate::poly::{isolate_nonnegative_roots, Poly, RationalFunction, RootEnclosure};
use crate::Rational;
use num_traits::{Signed, Zero};

/// A recombination rate: finite (and nonnegative) or infinite.
#[derive(Debug, Clone, PartialEq)]
pub enum Rho {
    Finite(Rational),
    Infinity,
}

impl Rho {
    pub fn to_f64(&self) -> f64 {
        match self {
            Rho::Finite(r) => crate::scalar::Scalar::to_f64_lossy(r),
            Rho::Infinity => f64::INFINITY,
        }
    }
}

/// A `[u/v]` Pade approximant in `x = 1/rho`, with the denominator
/// normalized to constant term one.
#[derive(Debug, Clone, PartialEq)]
pub struct PadeApprox {
    num: Poly,
    den: Poly,
    u: usize,
    v: usize,
}

/// Numerator and denominator degrees of the staircase approximant of order
/// `m`: `[floor(m/2) / ceil(m/2)]`.
pub fn staircase_degrees(m: usize) -> (usize, usize) {
    (m / 2, m - m / 2)
}

impl PadeApprox {
    /// Build the `[u/v]` approximant from series coefficients
    /// `c_0 .. c_{u+v}` (more are ignored). The denominator coefficients
    /// solve the exact v-by-v Toeplitz system; a singular system is reported
    /// as degenerate together with the largest workable denominator degree.
    pub fn from_series(coeffs: &[Rational], u: usize, v: usize) -> Result<Self> {
        if coeffs.len() < u + v + 1 {
            return Err(Error::Invalid(format!(
                "[{u}/{v}] approximant needs {} coefficients, got {}",
                u + v + 1,
                coeffs.len()
            )));
        }
        let c = |i: i64| -> Rational {
            if i < 0 {
                Rational::zero()
            } else {
                coeffs[i as usize].clone()
            }
        };
        let b = match solve_denominator(&c, u, v) {
            Some(b) => b,
            None => {
                // Find the largest smaller denominator degree that works so
                // callers can step down deliberately.
                let mut largest = 0usize;
                for v2 in (0..v).rev() {
                    if solve_denominator(&c, u, v2).is_some() {
                        largest = v2;
                        break;
                    }
                }
                return Err(Error::DegeneratePade { largest_v: largest });
            }
        };
        // Numerator from the order conditions: A_k = sum_l B_l c_{k-l}.
        let mut a = Vec::with_capacity(u + 1);
        for k in 0..=u {
            let mut acc = Rational::zero();
            for (l, bl) in b.iter().enumerate().take(k + 1) {
                acc += bl * c(k as i64 - l as i64);
            }
            a.push(acc);
        }
        Ok(PadeApprox {
            num: Poly::new(a),
            den: Poly::new(b),
            u,
            v,
        })
    }

    /// Staircase approximant of order `m` from `c_0 .. c_m`.
    pub fn staircase(coeffs: &[Rational], m: usize) -> Result<Self> {
        let (u, v) = staircase_degrees(m);
        PadeApprox::from_series(&coeffs[..=m.min(coeffs.len().saturating_sub(1))], u, v)
    }

    pub fn degrees(&self) -> (usize, usize) {
        (self.u, self.v)
    }

    pub fn num(&self) -> &Poly {
        &self.num
    }

    pub fn den(&self) -> &Poly {
        &self.den
    }

    /// Exact evaluation; poles (including a vanishing denominator at
    /// infinity) are reported as errors.
    pub fn evaluate(&self, rho: &Rho) -> Result<Rational> {
        match rho {
            Rho::Infinity => Ok(self.num.coeff(0)),
            Rho::Finite(r) => {
                if r.is_negative() {
                    return Err(Error::Domain("rho must be nonnegative".into()));
                }
                if r.is_zero() {
                    // x -> infinity: ratio of the rho-domain constant terms,
                    // i.e. of the leading x-coefficients after padding.
                    let d = self.u.max(self.v);
                    let nd = self.num.coeff(d);
                    let dd = self.den.coeff(d);
                    if dd.is_zero() {
                        return Err(Error::Pole { rho: "0".into() });
                    }
                    return Ok(nd / dd);
                }
                let x = Rational::new(r.denom().clone(), r.numer().clone());
                let den = self.den.eval(&x);
                if den.is_zero() {
                    return Err(Error::Pole { rho: r.to_string() });
                }
                Ok(self.num.eval(&x) / den)
            }
        }
    }

    /// Floating-point evaluation for plotting-style uses.
    pub fn evaluate_f64(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0) {
            return Err(Error::Domain("evaluate_f64 needs rho > 0".into()));
        }
        if rho.is_infinite() {
            return Ok(crate::scalar::Scalar::to_f64_lossy(&self.num.coeff(0)));
        }
        let x = 1.0 / rho;
        let den = self.den.eval_f64(x);
        if den == 0.0 {
            return Err(Error::Pole { rho: rho.to_string() });
        }
        Ok(self.num.eval_f64(x) / den)
    }

    /// View as a rational function of `x = 1/rho` (for identity tests).
    pub fn as_rational_function(&self) -> Result<RationalFunction> {
        RationalFunction::new(self.num.clone(), self.den.clone())
    }

    /// Numerator and denominator rewritten as polynomials in `rho`: both are
    /// multiplied by `rho^max(u, v)`, so a degree deficit shows up as roots
    /// at zero.
    pub fn rho_domain_polys(&self) -> (Poly, Poly) {
        let d = self.u.max(self.v);
        let lift = |p: &Poly| {
            let mut out = vec![Rational::zero(); d + 1];
            for (k, c) in p.coeffs().iter().enumerate() {
                out[d - k] = c.clone();
            }
            Poly::new(out)
        };
        (lift(&self.num), lift(&self.den))
    }

    /// Certified enclosures of the real nonnegative rho-domain roots of the
    /// numerator and denominator.
    pub fn root_report(&self, width: &Rational) -> RootReport {
        let (nr, dr) = self.rho_domain_polys();
        RootReport {
            num_roots: isolate_nonnegative_roots(&nr, width),
            den_roots: isolate_nonnegative_roots(&dr, width),
        }
    }
}

fn solve_denominator(
    c: &dyn Fn(i64) -> Rational,
    u: usize,
    v: usize,
) -> Option<Vec<Rational>> {
    if v == 0 {
        return Some(vec![Rational::from_integer(1.into())]);
    }
    // Unknowns B_1 .. B_v with B_0 = 1: for j = 1..v,
    //   sum_{k=0}^{v} B_k c_{u+j-k} = 0.
    let mut mat = Vec::with_capacity(v);
    let mut rhs = Vec::with_capacity(v);
    for j in 1..=v {
        let mut row = Vec::with_capacity(v);
        for k in 1..=v {
            row.push(c(u as i64 + j as i64 - k as i64));
        }
        mat.push(row);
        rhs.push(-c(u as i64 + j as i64));
    }
    match crate::linalg::solve_dense(mat, rhs) {
        Ok(tail) => {
            let mut b = Vec::with_capacity(v + 1);
            b.push(Rational::from_integer(1.into()));
            b.extend(tail);
            Some(b)
        }
        Err(_) => None,
    }
}

/// Real nonnegative rho-domain roots of one approximant.
#[derive(Debug, Clone, PartialEq)]
pub struct RootReport {
    pub num_roots: Vec<RootEnclosure>,
    pub den_roots: Vec<RootEnclosure>,
}

impl RootReport {
    /// True when some enclosed root intersects the open interval
    /// `(rho0 - eps, rho0 + eps)` intersected with the nonnegative axis.
    pub fn defect_near(&self, rho0: &Rational, eps: &Rational) -> bool {
        let lo = rho0 - eps;
        let hi = rho0 + eps;
        let touches = |r: &RootEnclosure| r.hi > lo && r.lo < hi && !r.hi.is_negative();
        self.num_roots.iter().any(touches) || self.den_roots.iter().any(touches)
    }
}

/// Defect heuristic: from `c_0 .. c_m`, pick the largest staircase order
/// whose approximant has no real nonnegative root (numerator or denominator)
/// within `eps` of the evaluation point, stepping down past degenerate
/// orders. Order zero (a constant) always qualifies.
pub fn select_nondefective(
    coeffs: &[Rational],
    rho0: &Rational,
    eps: &Rational,
) -> Result<(usize, PadeApprox)> {
    if coeffs.is_empty() {
        return Err(Error::Invalid("select_nondefective needs coefficients".into()));
    }
    let width = Rational::new(1.into(), 1_000_000.into());
    for m in (0..coeffs.len()).rev() {
        let approx = match PadeApprox::staircase(coeffs, m) {
            Ok(a) => a,
            Err(Error::DegeneratePade { .. }) => continue,
            Err(e) => return Err(e),
        };
        if !approx.root_report(&width).defect_near(rho0, eps) {
            return Ok((m, approx));
        }
    }
    Err(Error::NonConvergence(
        "every staircase order is defective near the evaluation point".into(),
    ))
}
