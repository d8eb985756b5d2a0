//! Exact univariate polynomials over the rationals, Sturm-sequence root
//! isolation, and rational functions with Maclaurin expansion.

use crate::error::{Error, Result};
use crate::Rational;
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

/// Polynomial with exact rational coefficients, ascending order
/// (`coeffs[i]` multiplies `x^i`). The zero polynomial has no coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poly {
    coeffs: Vec<Rational>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<Rational>) -> Self {
        while coeffs.last().map(|c| c.is_zero()).unwrap_or(false) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn constant(c: Rational) -> Self {
        Poly::new(vec![c])
    }

    pub fn one() -> Self {
        Poly::constant(Rational::one())
    }

    pub fn coeffs(&self) -> &[Rational] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize) -> Rational {
        self.coeffs.get(i).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; the zero polynomial reports `None`.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> Option<&Rational> {
        self.coeffs.last()
    }

    pub fn eval(&self, x: &Rational) -> Rational {
        let mut acc = Rational::zero();
        for c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        let mut acc = 0.0f64;
        for c in self.coeffs.iter().rev() {
            acc = acc * x + crate::scalar::Scalar::to_f64_lossy(c);
        }
        acc
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() <= 1 {
            return Poly::zero();
        }
        Poly::new(
            self.coeffs[1..]
                .iter()
                .enumerate()
                .map(|(i, c)| c * Rational::from_integer(BigInt::from(i + 1)))
                .collect(),
        )
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        Poly::new((0..n).map(|i| self.coeff(i) + other.coeff(i)).collect())
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        Poly::new((0..n).map(|i| self.coeff(i) - other.coeff(i)).collect())
    }

    pub fn neg(&self) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| -c).collect())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.is_zero() || other.is_zero() {
            return Poly::zero();
        }
        let mut out = vec![Rational::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }

    pub fn scale(&self, s: &Rational) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// Quotient and remainder of polynomial division.
    pub fn divrem(&self, divisor: &Poly) -> Result<(Poly, Poly)> {
        let dlead = divisor
            .leading()
            .ok_or_else(|| Error::Domain("division by zero polynomial".into()))?;
        let ddeg = divisor.degree().unwrap();
        let mut rem = self.coeffs.clone();
        if rem.len() < divisor.coeffs.len() {
            return Ok((Poly::zero(), self.clone()));
        }
        let qlen = rem.len() - ddeg;
        let mut quot = vec![Rational::zero(); qlen];
        for qi in (0..qlen).rev() {
            let lead = rem[qi + ddeg].clone();
            if lead.is_zero() {
                continue;
            }
            let f = lead / dlead;
            for (k, dc) in divisor.coeffs.iter().enumerate() {
                let delta = dc * &f;
                rem[qi + k] -= delta;
            }
            quot[qi] = f;
        }
        Ok((Poly::new(quot), Poly::new(rem)))
    }

    /// Monic greatest common divisor via the Euclidean algorithm.
    pub fn gcd(&self, other: &Poly) -> Poly {
        let mut a = self.clone();
        let mut b = other.clone();
        while !b.is_zero() {
            let (_, r) = a.divrem(&b).expect("b nonzero");
            a = b;
            b = r;
        }
        match a.leading() {
            Some(lead) if !lead.is_one() => {
                let inv = Rational::one() / lead;
                a.scale(&inv)
            }
            _ => a,
        }
    }

    /// Square-free part `p / gcd(p, p')`.
    pub fn squarefree(&self) -> Poly {
        if self.is_zero() {
            return Poly::zero();
        }
        let g = self.gcd(&self.derivative());
        if g.degree() == Some(0) {
            return self.clone();
        }
        let (q, r) = self.divrem(&g).expect("gcd nonzero");
        debug_assert!(r.is_zero());
        q
    }

    /// Cauchy root bound: all real roots lie in `[-B, B]` with
    /// `B = 1 + max |a_i / a_n|`.
    pub fn cauchy_bound(&self) -> Rational {
        let lead = match self.leading() {
            Some(l) => l,
            None => return Rational::one(),
        };
        let mut m = Rational::zero();
        for c in &self.coeffs[..self.coeffs.len() - 1] {
            let v = (c / lead).abs();
            if v > m {
                m = v;
            }
        }
        m + Rational::one()
    }
}

/// Sturm chain of a (square-free) polynomial.
pub struct SturmChain {
    seq: Vec<Poly>,
}

impl SturmChain {
    pub fn new(p: &Poly) -> SturmChain {
        let mut seq = Vec::new();
        if p.is_zero() {
            return SturmChain { seq };
        }
        seq.push(p.clone());
        let d = p.derivative();
        if d.is_zero() {
            return SturmChain { seq };
        }
        seq.push(d);
        loop {
            let len = seq.len();
            let (_, r) = seq[len - 2].divrem(&seq[len - 1]).expect("nonzero divisor");
            if r.is_zero() {
                break;
            }
            seq.push(r.neg());
        }
        SturmChain { seq }
    }

    fn variations_at(&self, x: &Rational) -> usize {
        let mut signs = Vec::new();
        for p in &self.seq {
            let v = p.eval(x);
            if !v.is_zero() {
                signs.push(v.is_positive());
            }
        }
        signs.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// Number of distinct real roots in the half-open interval `(lo, hi]`.
    pub fn roots_in(&self, lo: &Rational, hi: &Rational) -> usize {
        self.variations_at(lo).saturating_sub(self.variations_at(hi))
    }
}

/// Certified enclosure of a single real root.
#[derive(Debug, Clone, PartialEq)]
pub struct RootEnclosure {
    pub lo: Rational,
    pub hi: Rational,
}

impl RootEnclosure {
    pub fn midpoint_f64(&self) -> f64 {
        crate::scalar::Scalar::to_f64_lossy(&((&self.lo + &self.hi) / Rational::from_integer(2.into())))
    }

    pub fn contains(&self, x: &Rational) -> bool {
        &self.lo <= x && x <= &self.hi
    }
}

/// Isolate every distinct real root of `p` in `[lo, hi]`, refined by
/// bisection until each enclosure has width at most `width`. Exact roots at
/// rational bisection points degenerate to zero-width enclosures.
pub fn isolate_roots(p: &Poly, lo: &Rational, hi: &Rational, width: &Rational) -> Vec<RootEnclosure> {
    let sf = p.squarefree();
    if sf.degree().unwrap_or(0) == 0 {
        return Vec::new();
    }
    let chain = SturmChain::new(&sf);
    let mut out = Vec::new();

    // Handle a root exactly at `lo` (Sturm counts (lo, hi]).
    if sf.eval(lo).is_zero() {
        out.push(RootEnclosure {
            lo: lo.clone(),
            hi: lo.clone(),
        });
    }

    let mut stack = vec![(lo.clone(), hi.clone())];
    while let Some((a, b)) = stack.pop() {
        let count = chain.roots_in(&a, &b);
        if count == 0 {
            continue;
        }
        if count == 1 && (&b - &a) <= *width {
            out.push(RootEnclosure { lo: a, hi: b });
            continue;
        }
        let mid = (&a + &b) / Rational::from_integer(2.into());
        if sf.eval(&mid).is_zero() && count == 1 {
            out.push(RootEnclosure {
                lo: mid.clone(),
                hi: mid,
            });
            continue;
        }
        stack.push((a, mid.clone()));
        stack.push((mid, b));
    }
    out.sort_by(|x, y| x.lo.cmp(&y.lo));
    out
}

/// Isolate all nonnegative real roots of `p`.
pub fn isolate_nonnegative_roots(p: &Poly, width: &Rational) -> Vec<RootEnclosure> {
    if p.degree().unwrap_or(0) == 0 {
        return Vec::new();
    }
    let bound = p.cauchy_bound();
    isolate_roots(p, &Rational::zero(), &bound, width)
}

/// Quotient of two exact polynomials, kept normalized: common factors
/// removed, and the denominator scaled so its constant term is one (or its
/// leading coefficient, if the constant term vanishes).
#[derive(Debug, Clone, PartialEq)]
pub struct RationalFunction {
    num: Poly,
    den: Poly,
}

impl RationalFunction {
    pub fn new(num: Poly, den: Poly) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::Domain("zero denominator".into()));
        }
        let g = num.gcd(&den);
        let (num, den) = if g.degree().unwrap_or(0) > 0 {
            let (n, rn) = num.divrem(&g)?;
            let (d, rd) = den.divrem(&g)?;
            debug_assert!(rn.is_zero() && rd.is_zero());
            (n, d)
        } else {
            (num, den)
        };
        let scale = {
            let c0 = den.coeff(0);
            if c0.is_zero() {
                den.leading().cloned().unwrap()
            } else {
                c0
            }
        };
        let inv = Rational::one() / scale;
        Ok(RationalFunction {
            num: num.scale(&inv),
            den: den.scale(&inv),
        })
    }

    pub fn constant(c: Rational) -> Self {
        RationalFunction {
            num: Poly::constant(c),
            den: Poly::one(),
        }
    }

    pub fn num(&self) -> &Poly {
        &self.num
    }

    pub fn den(&self) -> &Poly {
        &self.den
    }

    pub fn eval(&self, x: &Rational) -> Result<Rational> {
        let d = self.den.eval(x);
        if d.is_zero() {
            return Err(Error::Domain(format!("pole at {x}")));
        }
        Ok(self.num.eval(x) / d)
    }

    /// First `order + 1` Maclaurin coefficients; requires a nonzero constant
    /// term in the denominator.
    pub fn series(&self, order: usize) -> Result<Vec<Rational>> {
        let d0 = self.den.coeff(0);
        if d0.is_zero() {
            return Err(Error::Domain("Maclaurin series with denominator root at 0".into()));
        }
        let mut out = Vec::with_capacity(order + 1);
        for k in 0..=order {
            let mut acc = self.num.coeff(k);
            for i in 1..=k {
                acc -= self.den.coeff(i) * &out[k - i];
            }
            out.push(acc / &d0);
        }
        Ok(out)
    }

    /// Structural equality as functions: cross-multiplied polynomial identity.
    pub fn equivalent(&self, other: &RationalFunction) -> bool {
        self.num.mul(&other.den) == other.num.mul(&self.den)
    }

    /// The function `x -> f(1/x)` as a rational function: both polynomials
    /// are reversed after padding to a common degree.
    pub fn reciprocal_argument(&self) -> Result<RationalFunction> {
        let d = self
            .num
            .degree()
            .unwrap_or(0)
            .max(self.den.degree().unwrap_or(0));
        let lift = |p: &Poly| {
            let mut out = vec![Rational::zero(); d + 1];
            for (k, c) in p.coeffs().iter().enumerate() {
                out[d - k] = c.clone();
            }
            Poly::new(out)
        };
        RationalFunction::new(lift(&self.num), lift(&self.den))
    }
}
