//! Exact two-locus sampling distributions at a fixed recombination rate.
//!
//! The recursion closes over classes indexed by the per-locus totals
//! `(n_A, n_B) = (a + c, b + c)`: within a class the unknowns couple through
//! mutation, merging of singly-typed pairs and recombination splits, while
//! coalescence moves strictly to smaller classes.
//!
//! Rational class systems are solved modulo a growing set of 62-bit primes,
//! combined by the Chinese remainder theorem and lifted back to rationals;
//! every lifted class is then certified by exact residual substitution, so
//! the results are unconditionally exact. A floating-point Jacobi solver
//! covers sample sizes beyond rational reach, and repeated exact solves on
//! an integer grid feed a certified reconstruction of the sampling
//! probability as a rational function of the recombination rate.

use crate::error::{Error, Result};
use crate::linalg::solve_dense;
use crate::model::{enumerate_c_matrices, ModelParams, SampleConfig};
use crate::onelocus::{compositions, stationary_vector};
use crate::poly::{Poly, RationalFunction};
use crate::Rational;
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use std::collections::HashMap;

// ---------------------------------------------------------------------------
// Modular arithmetic.

fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, p: u64) -> u64 {
    let mut acc = 1u64;
    base %= p;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, p);
        }
        base = mul_mod(base, base, p);
        exp >>= 1;
    }
    acc
}

fn inv_mod(a: u64, p: u64) -> u64 {
    // p prime, a not divisible by p.
    pow_mod(a, p - 2, p)
}

fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let d = n - 1;
    let s = d.trailing_zeros();
    let d = d >> s;
    'outer: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

/// First `count` primes below `2^62`, descending; deterministic.
fn solver_primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut cand = (1u64 << 62) - 1;
    while out.len() < count {
        if is_prime_u64(cand) {
            out.push(cand);
        }
        cand -= 2;
    }
    out
}

fn bigint_mod(x: &BigInt, p: u64) -> u64 {
    let r = x % BigInt::from(p);
    let r = if r.is_negative() { r + BigInt::from(p) } else { r };
    r.to_u64().expect("reduced residue fits")
}

/// Residue of a rational mod `p`; `None` when `p` divides the denominator.
fn rational_mod(r: &Rational, p: u64) -> Option<u64> {
    let den = bigint_mod(r.denom(), p);
    if den == 0 {
        return None;
    }
    Some(mul_mod(bigint_mod(r.numer(), p), inv_mod(den, p), p))
}

/// Lift a residue `x` mod `m` to a rational with numerator and denominator
/// bounded by `sqrt(m / 2)` (classic half-extended Euclid reconstruction).
fn rational_reconstruct(x: &BigInt, m: &BigInt) -> Option<Rational> {
    let bound: BigInt = num_integer::Roots::sqrt(&(m >> 1));
    let bound = if bound.is_zero() { BigInt::one() } else { bound };
    let (mut r0, mut r1) = (m.clone(), x.clone());
    let (mut t0, mut t1) = (BigInt::zero(), BigInt::one());
    while r1 >= bound {
        let q = &r0 / &r1;
        let r2 = &r0 - &q * &r1;
        let t2 = &t0 - &q * &t1;
        r0 = r1;
        r1 = r2;
        t0 = t1;
        t1 = t2;
    }
    if t1.is_zero() || t1.magnitude() > bound.magnitude() {
        return None;
    }
    let (num, den) = if t1.is_negative() { (-r1, -t1) } else { (r1, t1) };
    if den.is_zero() {
        return None;
    }
    Some(Rational::new(num, den))
}

// ---------------------------------------------------------------------------
// Class structure.

/// One configuration inside a class, stored flat.
type FlatConfig = (Vec<u32>, Vec<u32>, Vec<u32>);

fn flatten(sample: &SampleConfig) -> FlatConfig {
    (
        sample.a().to_vec(),
        sample.b().to_vec(),
        sample.c().iter().flatten().copied().collect(),
    )
}

/// Number of configurations in the class with per-locus totals `(na, nb)`,
/// computed combinatorially so capacity checks never enumerate.
fn class_dim(k: usize, l: usize, na: u32, nb: u32) -> u128 {
    let comps = |total: u32, cells: usize| -> u128 {
        // Weak compositions of `total` into `cells` parts.
        num_integer::binomial((total as u128) + (cells as u128) - 1, (cells as u128) - 1)
    };
    (0..=na.min(nb))
        .map(|ct| comps(na - ct, k) * comps(nb - ct, l) * comps(ct, k * l))
        .sum()
}

/// All configurations of the class with per-locus totals `(na, nb)`, in a
/// deterministic order.
fn class_configs(k: usize, l: usize, na: u32, nb: u32) -> Vec<FlatConfig> {
    let mut out = Vec::new();
    for ct in 0..=na.min(nb) {
        for c in enumerate_c_matrices(ct, k, l) {
            let cflat: Vec<u32> = c.iter().flatten().copied().collect();
            for a in compositions(na - ct, k) {
                for b in compositions(nb - ct, l) {
                    out.push((a.clone(), b, cflat.clone()));
                }
            }
        }
    }
    out
}

/// One row of a class system: `diag * x_row - sum w_i x_{col_i} = rhs`.
pub(crate) type ExactRow = crate::linalg::SparseRow<Rational>;

/// Solve a certified-exact class system by CRT over 62-bit primes.
pub(crate) fn solve_class_modular(rows: &[ExactRow]) -> Result<Vec<Rational>> {
    let dim = rows.len();
    let mut residues: Vec<(u64, Vec<u64>)> = Vec::new();
    let mut tried = 0usize;
    let mut target = 6usize;
    const CAP: usize = 1024;

    loop {
        // Extend the prime set; skip primes that divide any denominator or
        // make the system singular.
        while residues.len() < target {
            let want = target - residues.len();
            let pool = solver_primes(tried + want);
            let fresh: Vec<u64> = pool[tried..].to_vec();
            tried += want;
            let solved: Vec<(u64, Option<Vec<u64>>)> = fresh
                .par_iter()
                .map(|&p| (p, solve_rows_mod(rows, p)))
                .collect();
            for (p, sol) in solved {
                if let Some(v) = sol {
                    residues.push((p, v));
                }
            }
            if tried > CAP {
                return Err(Error::Capacity(
                    "modular class solve exhausted its prime budget".into(),
                ));
            }
        }

        // CRT combine and lift every entry.
        let mut modulus = BigInt::one();
        for (p, _) in &residues {
            modulus *= BigInt::from(*p);
        }
        let mut values = Vec::with_capacity(dim);
        let mut ok = true;
        for i in 0..dim {
            // Incremental CRT.
            let mut x = BigInt::zero();
            let mut m = BigInt::one();
            for (p, v) in &residues {
                let pb = BigInt::from(*p);
                let cur = bigint_mod(&x, *p);
                let diff = (v[i] + p - cur) % p;
                let minv = inv_mod(bigint_mod(&m, *p), *p);
                let t = mul_mod(diff, minv, *p);
                x += &m * BigInt::from(t);
                m *= pb;
            }
            match rational_reconstruct(&x, &modulus) {
                Some(r) => values.push(r),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok && verify_rows(rows, &values) {
            return Ok(values);
        }
        target = (residues.len() * 2).max(target + 6);
    }
}

fn solve_rows_mod(rows: &[ExactRow], p: u64) -> Option<Vec<u64>> {
    let dim = rows.len();
    let mut mat = vec![0u64; dim * dim];
    let mut rhs = vec![0u64; dim];
    for (r, row) in rows.iter().enumerate() {
        mat[r * dim + r] = rational_mod(&row.diag, p)?;
        for (col, w) in &row.nbrs {
            let wm = rational_mod(w, p)?;
            let cell = &mut mat[r * dim + *col as usize];
            *cell = (*cell + p - wm) % p;
        }
        rhs[r] = rational_mod(&row.rhs, p)?;
    }
    // Gaussian elimination mod p.
    for col in 0..dim {
        let pivot = (col..dim).find(|&r| mat[r * dim + col] != 0)?;
        if pivot != col {
            for j in col..dim {
                mat.swap(col * dim + j, pivot * dim + j);
            }
            rhs.swap(col, pivot);
        }
        let inv = inv_mod(mat[col * dim + col], p);
        for r in (col + 1)..dim {
            let f = mat[r * dim + col];
            if f == 0 {
                continue;
            }
            let factor = mul_mod(f, inv, p);
            mat[r * dim + col] = 0;
            for j in (col + 1)..dim {
                let delta = mul_mod(factor, mat[col * dim + j], p);
                let cell = &mut mat[r * dim + j];
                *cell = (*cell + p - delta) % p;
            }
            let delta = mul_mod(factor, rhs[col], p);
            rhs[r] = (rhs[r] + p - delta) % p;
        }
    }
    let mut x = vec![0u64; dim];
    for r in (0..dim).rev() {
        let mut acc = rhs[r];
        for j in (r + 1)..dim {
            let delta = mul_mod(mat[r * dim + j], x[j], p);
            acc = (acc + p - delta) % p;
        }
        x[r] = mul_mod(acc, inv_mod(mat[r * dim + r], p), p);
    }
    Some(x)
}

/// Exact residual check: certifies the CRT lift unconditionally.
fn verify_rows(rows: &[ExactRow], x: &[Rational]) -> bool {
    rows.par_iter().enumerate().all(|(r, row)| {
        let mut acc = &row.diag * &x[r];
        for (col, w) in &row.nbrs {
            acc -= w * &x[*col as usize];
        }
        acc == row.rhs
    })
}

// ---------------------------------------------------------------------------
// Exact rational solver.

/// Exact rational solver for a fixed nonnegative rational recombination
/// rate. Classes are solved on demand and cached.
pub struct ExactRational {
    k: usize,
    l: usize,
    rho: Rational,
    theta_a: Rational,
    theta_b: Rational,
    /// `theta * P[k][i]` per locus.
    tpa: Vec<Vec<Rational>>,
    tpb: Vec<Vec<Rational>>,
    pia: Vec<Rational>,
    pib: Vec<Rational>,
    classes: HashMap<(u32, u32), HashMap<FlatConfig, Rational>>,
    /// Largest class dimension the solver will attempt.
    max_class_dim: usize,
}

impl ExactRational {
    pub fn new(params: &ModelParams, rho: Rational) -> Result<Self> {
        if rho.is_negative() {
            return Err(Error::Domain("recombination rate must be nonnegative".into()));
        }
        if params.selection.is_some() {
            return Err(Error::Unsupported("exact solver is neutral only".into()));
        }
        if !params.locus_a.is_irreducible() || !params.locus_b.is_irreducible() {
            return Err(Error::Reducible("exact solver needs irreducible mutation".into()));
        }
        let tp = |m: &crate::model::MutationModel| {
            m.p()
                .iter()
                .map(|row| row.iter().map(|p| m.theta() * p).collect())
                .collect()
        };
        Ok(ExactRational {
            k: params.locus_a.k(),
            l: params.locus_b.k(),
            rho,
            theta_a: params.locus_a.theta().clone(),
            theta_b: params.locus_b.theta().clone(),
            tpa: tp(&params.locus_a),
            tpb: tp(&params.locus_b),
            pia: stationary_vector(&params.locus_a)?,
            pib: stationary_vector(&params.locus_b)?,
            classes: HashMap::new(),
            max_class_dim: 4000,
        })
    }

    pub fn rho(&self) -> &Rational {
        &self.rho
    }

    /// Cap on the class dimension (capacity guard).
    pub fn set_max_class_dim(&mut self, dim: usize) {
        self.max_class_dim = dim;
    }

    /// Exact ordered sampling probability of `sample`.
    pub fn q(&mut self, sample: &SampleConfig) -> Result<Rational> {
        if sample.k() != self.k || sample.l() != self.l {
            return Err(Error::Invalid("sample dimensions do not match model".into()));
        }
        let na = sample.a_total() + sample.c_total();
        let nb = sample.b_total() + sample.c_total();
        // Reject oversized requests before solving any of the smaller
        // classes; the largest class is always the widest.
        let top = class_dim(self.k, self.l, na, nb);
        if top > self.max_class_dim as u128 {
            return Err(Error::Capacity(format!(
                "class ({na}, {nb}) has {top} configurations, cap is {}",
                self.max_class_dim
            )));
        }
        for i in 0..=na {
            for j in 0..=nb {
                self.ensure_class(i, j)?;
            }
        }
        let key = flatten(sample);
        Ok(self.classes[&(na, nb)][&key].clone())
    }

    fn ensure_class(&mut self, na: u32, nb: u32) -> Result<()> {
        if self.classes.contains_key(&(na, nb)) {
            return Ok(());
        }
        let configs = class_configs(self.k, self.l, na, nb);
        let mut values: HashMap<FlatConfig, Rational> = HashMap::with_capacity(configs.len());

        // Boundary classes carry the stationary sampling probabilities of
        // one or two gametes; everything else is a certified modular solve.
        if na <= 1 && nb <= 1 {
            for cfg in configs {
                let v = self.boundary_value(&cfg);
                values.insert(cfg, v);
            }
        } else {
            if configs.len() > self.max_class_dim {
                return Err(Error::Capacity(format!(
                    "class ({na}, {nb}) has {} configurations, cap is {}",
                    configs.len(),
                    self.max_class_dim
                )));
            }
            let index: HashMap<&FlatConfig, usize> =
                configs.iter().enumerate().map(|(i, c)| (c, i)).collect();
            let rows: Vec<ExactRow> = configs
                .iter()
                .map(|cfg| self.build_exact_row(cfg, &index, na, nb))
                .collect::<Result<_>>()?;
            let x = solve_class_modular(&rows)?;
            for (cfg, v) in configs.into_iter().zip(x) {
                values.insert(cfg, v);
            }
        }
        self.classes.insert((na, nb), values);
        Ok(())
    }

    fn boundary_value(&self, cfg: &FlatConfig) -> Rational {
        let (a, b, c) = cfg;
        // One gamete typed at both loci.
        if let Some(pos) = c.iter().position(|&v| v > 0) {
            let (i, j) = (pos / self.l, pos % self.l);
            return &self.pia[i] * &self.pib[j];
        }
        let ia = a.iter().position(|&v| v > 0);
        let ib = b.iter().position(|&v| v > 0);
        match (ia, ib) {
            (Some(i), Some(j)) => &self.pia[i] * &self.pib[j],
            (Some(i), None) => self.pia[i].clone(),
            (None, Some(j)) => self.pib[j].clone(),
            (None, None) => Rational::one(),
        }
    }

    fn build_exact_row(
        &self,
        cfg: &FlatConfig,
        index: &HashMap<&FlatConfig, usize>,
        na: u32,
        nb: u32,
    ) -> Result<ExactRow> {
        let (a, b, c) = cfg;
        let (k, l) = (self.k, self.l);
        let at: i64 = a.iter().map(|&v| v as i64).sum();
        let bt: i64 = b.iter().map(|&v| v as i64).sum();
        let ct: i64 = c.iter().map(|&v| v as i64).sum();
        let n = at + bt + ct;
        let c_rows: Vec<i64> = (0..k).map(|i| (0..l).map(|j| c[i * l + j] as i64).sum()).collect();
        let c_cols: Vec<i64> = (0..l).map(|j| (0..k).map(|i| c[i * l + j] as i64).sum()).collect();

        let diag = Rational::from_integer((n * (n - 1)).into())
            + &self.theta_a * Rational::from_integer((at + ct).into())
            + &self.theta_b * Rational::from_integer((bt + ct).into())
            + &self.rho * Rational::from_integer(ct.into());

        let mut nbrs: Vec<(u32, Rational)> = Vec::new();
        let mut couple = |target: FlatConfig, coef: Rational| {
            nbrs.push((index[&target] as u32, coef));
        };

        // Mutation at locus A (within class).
        for i in 0..k {
            for kx in 0..k {
                let w = &self.tpa[kx][i];
                if w.is_zero() {
                    continue;
                }
                if a[i] > 0 {
                    let mut a2 = a.clone();
                    a2[i] -= 1;
                    a2[kx] += 1;
                    couple((a2, b.clone(), c.clone()), w * Rational::from_integer((a[i] as i64).into()));
                }
                for j in 0..l {
                    let ij = i * l + j;
                    if c[ij] > 0 {
                        let mut c2 = c.clone();
                        c2[ij] -= 1;
                        c2[kx * l + j] += 1;
                        couple((a.clone(), b.clone(), c2), w * Rational::from_integer((c[ij] as i64).into()));
                    }
                }
            }
        }
        // Mutation at locus B (within class).
        for j in 0..l {
            for lx in 0..l {
                let w = &self.tpb[lx][j];
                if w.is_zero() {
                    continue;
                }
                if b[j] > 0 {
                    let mut b2 = b.clone();
                    b2[j] -= 1;
                    b2[lx] += 1;
                    couple((a.clone(), b2, c.clone()), w * Rational::from_integer((b[j] as i64).into()));
                }
                for i in 0..k {
                    let ij = i * l + j;
                    if c[ij] > 0 {
                        let mut c2 = c.clone();
                        c2[ij] -= 1;
                        c2[i * l + lx] += 1;
                        couple((a.clone(), b.clone(), c2), w * Rational::from_integer((c[ij] as i64).into()));
                    }
                }
            }
        }
        // A singly-typed pair merging into a doubly-typed gamete.
        for i in 0..k {
            if a[i] == 0 {
                continue;
            }
            for j in 0..l {
                if b[j] == 0 {
                    continue;
                }
                let mut a2 = a.clone();
                a2[i] -= 1;
                let mut b2 = b.clone();
                b2[j] -= 1;
                let mut c2 = c.clone();
                c2[i * l + j] += 1;
                couple(
                    (a2, b2, c2),
                    Rational::from_integer((2 * a[i] as i64 * b[j] as i64).into()),
                );
            }
        }
        // Recombination split of a doubly-typed gamete.
        if !self.rho.is_zero() {
            for i in 0..k {
                for j in 0..l {
                    let ij = i * l + j;
                    if c[ij] == 0 {
                        continue;
                    }
                    let mut a2 = a.clone();
                    a2[i] += 1;
                    let mut b2 = b.clone();
                    b2[j] += 1;
                    let mut c2 = c.clone();
                    c2[ij] -= 1;
                    couple(
                        (a2, b2, c2),
                        &self.rho * Rational::from_integer((c[ij] as i64).into()),
                    );
                }
            }
        }
        // Coalescence: strictly smaller classes, already solved.
        let mut rhs = Rational::zero();
        for i in 0..k {
            let coef = a[i] as i64 * (a[i] as i64 - 1 + 2 * c_rows[i]);
            if coef != 0 {
                let mut a2 = a.clone();
                a2[i] -= 1;
                let v = &self.classes[&(na - 1, nb)][&(a2, b.clone(), c.clone())];
                rhs += Rational::from_integer(coef.into()) * v;
            }
        }
        for j in 0..l {
            let coef = b[j] as i64 * (b[j] as i64 - 1 + 2 * c_cols[j]);
            if coef != 0 {
                let mut b2 = b.clone();
                b2[j] -= 1;
                let v = &self.classes[&(na, nb - 1)][&(a.clone(), b2, c.clone())];
                rhs += Rational::from_integer(coef.into()) * v;
            }
        }
        for ij in 0..k * l {
            let coef = c[ij] as i64 * (c[ij] as i64 - 1);
            if coef != 0 {
                let mut c2 = c.clone();
                c2[ij] -= 1;
                let v = &self.classes[&(na - 1, nb - 1)][&(a.clone(), b.clone(), c2)];
                rhs += Rational::from_integer(coef.into()) * v;
            }
        }
        Ok(ExactRow { diag, nbrs, rhs })
    }
}

/// Sum of the unordered sampling probabilities of all fully doubly-typed
/// samples of size `n`; equals one for a proper distribution.
pub fn total_probability(params: &ModelParams, rho: Rational, n: u32) -> Result<Rational> {
    let k = params.locus_a.k();
    let l = params.locus_b.k();
    let mut solver = ExactRational::new(params, rho)?;
    let mut acc = Rational::zero();
    for c in enumerate_c_matrices(n, k, l) {
        let sample = SampleConfig::from_c(c)?;
        let parts: Vec<u32> = sample.c().iter().flatten().copied().collect();
        let weight = crate::model::multinomial(&parts);
        acc += Rational::from_integer(weight) * solver.q(&sample)?;
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Rational-function reconstruction over an integer grid.

/// Shared grid of exact solvers at integer recombination rates; class solves
/// are reused across samples and degrees.
pub struct ExactGrid {
    params: ModelParams,
    solvers: HashMap<u32, ExactRational>,
}

impl ExactGrid {
    pub fn new(params: &ModelParams) -> Self {
        ExactGrid {
            params: params.clone(),
            solvers: HashMap::new(),
        }
    }

    /// Exact value at the integer rate `t`.
    pub fn q_at(&mut self, t: u32, sample: &SampleConfig) -> Result<Rational> {
        if !self.solvers.contains_key(&t) {
            let solver =
                ExactRational::new(&self.params, Rational::from_integer((t as i64).into()))?;
            self.solvers.insert(t, solver);
        }
        self.solvers.get_mut(&t).unwrap().q(sample)
    }

    /// Reconstruct the sampling probability of `sample` as a rational
    /// function of the recombination rate.
    ///
    /// Exact solves at integer rates feed a linear fit with equal numerator
    /// and denominator degrees; the smallest degree whose fit also agrees at
    /// `2 * degree + 8` additional rates is returned. A candidate of degree
    /// `d` that matches the true function at that many points beyond the fit
    /// grid is identical to it unless the true degree exceeds `max_degree`,
    /// which is reported as a capacity error.
    pub fn reconstruct(
        &mut self,
        sample: &SampleConfig,
        max_degree: usize,
    ) -> Result<RationalFunction> {
        for d in 0..=max_degree {
            // Unknowns: numerator c_0..c_d and denominator tail b_1..b_d
            // with b_0 = 1. Fit through 2d + 1 integer points.
            let unknowns = 2 * d + 1;
            let mut mat = Vec::with_capacity(unknowns);
            let mut rhs = Vec::with_capacity(unknowns);
            for t in 0..unknowns {
                let q = self.q_at(t as u32, sample)?;
                let rho = Rational::from_integer((t as i64).into());
                let mut row = Vec::with_capacity(unknowns);
                let mut pw = Rational::one();
                for _ in 0..=d {
                    row.push(pw.clone());
                    pw *= &rho;
                }
                let mut pw = rho.clone();
                for _ in 1..=d {
                    row.push(-(&q * &pw));
                    pw *= &rho;
                }
                mat.push(row);
                rhs.push(q);
            }
            let sol = match solve_dense(mat, rhs) {
                Ok(s) => s,
                Err(_) => continue,
            };
            let num = Poly::new(sol[..=d].to_vec());
            let mut den_c = vec![Rational::one()];
            den_c.extend_from_slice(&sol[d + 1..]);
            let den = Poly::new(den_c);
            if den.is_zero() {
                continue;
            }
            let candidate = RationalFunction::new(num, den)?;

            // Certify on fresh points.
            let mut ok = true;
            for t in unknowns..unknowns + 2 * d + 8 {
                let q = self.q_at(t as u32, sample)?;
                let rho = Rational::from_integer((t as i64).into());
                match candidate.eval(&rho) {
                    Ok(v) if v == q => {}
                    _ => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                return Ok(candidate);
            }
        }
        Err(Error::Capacity(format!(
            "no rational function of degree <= {max_degree} matches the exact solves"
        )))
    }
}

/// One-off convenience wrapper around [`ExactGrid::reconstruct`].
pub fn exact_q_rational(
    params: &ModelParams,
    sample: &SampleConfig,
    max_degree: usize,
) -> Result<RationalFunction> {
    ExactGrid::new(params).reconstruct(sample, max_degree)
}

// ---------------------------------------------------------------------------
// Floating-point solver for large samples.

/// Floating-point exact solver for sample sizes beyond rational reach.
///
/// Same class structure as [`ExactRational`]; each class is solved by Jacobi
/// iteration (strict diagonal dominance guarantees convergence), with rows
/// built in parallel. Configurations are packed into `u128` keys, capping
/// per-cell counts at 255.
pub struct ExactNumeric {
    k: usize,
    l: usize,
    rho: f64,
    theta_a: f64,
    theta_b: f64,
    tpa: Vec<Vec<f64>>,
    tpb: Vec<Vec<f64>>,
    pia: Vec<f64>,
    pib: Vec<f64>,
    tol: f64,
    max_sweeps: usize,
    classes: HashMap<(u32, u32), ClassValues>,
}

struct ClassValues {
    /// Sorted packed keys; `vals` is aligned.
    keys: Vec<u128>,
    vals: Vec<f64>,
}

impl ClassValues {
    fn get(&self, key: u128) -> f64 {
        let pos = self.keys.binary_search(&key).expect("config in solved class");
        self.vals[pos]
    }
}

fn pack(a: &[u32], b: &[u32], c: &[u32]) -> Result<u128> {
    let total = a.len() + b.len() + c.len();
    if total > 16 {
        return Err(Error::Capacity(
            "numeric solver packs configurations into 16 bytes".into(),
        ));
    }
    let mut out: u128 = 0;
    for &v in a.iter().chain(b).chain(c) {
        if v > 255 {
            return Err(Error::Capacity("numeric solver caps counts at 255".into()));
        }
        out = (out << 8) | v as u128;
    }
    Ok(out)
}

impl ExactNumeric {
    pub fn new(params: &ModelParams, rho: f64, tol: f64, max_sweeps: usize) -> Result<Self> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::Domain("recombination rate must be finite and nonnegative".into()));
        }
        if params.selection.is_some() {
            return Err(Error::Unsupported("exact solver is neutral only".into()));
        }
        if !params.locus_a.is_irreducible() || !params.locus_b.is_irreducible() {
            return Err(Error::Reducible("exact solver needs irreducible mutation".into()));
        }
        let lossy = |r: &Rational| crate::scalar::Scalar::to_f64_lossy(r);
        let tp = |m: &crate::model::MutationModel| -> Vec<Vec<f64>> {
            m.p()
                .iter()
                .map(|row| row.iter().map(|p| lossy(&(m.theta() * p))).collect())
                .collect()
        };
        Ok(ExactNumeric {
            k: params.locus_a.k(),
            l: params.locus_b.k(),
            rho,
            theta_a: lossy(params.locus_a.theta()),
            theta_b: lossy(params.locus_b.theta()),
            tpa: tp(&params.locus_a),
            tpb: tp(&params.locus_b),
            pia: stationary_vector(&params.locus_a)?.iter().map(|r| lossy(r)).collect(),
            pib: stationary_vector(&params.locus_b)?.iter().map(|r| lossy(r)).collect(),
            tol,
            max_sweeps,
            classes: HashMap::new(),
        })
    }

    pub fn q(&mut self, sample: &SampleConfig) -> Result<f64> {
        if sample.k() != self.k || sample.l() != self.l {
            return Err(Error::Invalid("sample dimensions do not match model".into()));
        }
        let na = sample.a_total() + sample.c_total();
        let nb = sample.b_total() + sample.c_total();
        self.solve_rectangle(na, nb)?;
        let (a, b, c) = flatten(sample);
        let key = pack(&a, &b, &c)?;
        Ok(self.classes[&(na, nb)].get(key))
    }

    /// Solve every class `(i, j)` with `i <= na`, `j <= nb`.
    pub fn solve_rectangle(&mut self, na: u32, nb: u32) -> Result<()> {
        for i in 0..=na {
            for j in 0..=nb {
                if !self.classes.contains_key(&(i, j)) {
                    let solved = self.solve_class(i, j)?;
                    self.classes.insert((i, j), solved);
                }
            }
        }
        Ok(())
    }

    fn solve_class(&self, na: u32, nb: u32) -> Result<ClassValues> {
        let configs = class_configs(self.k, self.l, na, nb);
        let mut keyed: Vec<(u128, FlatConfig)> = configs
            .into_iter()
            .map(|cfg| Ok((pack(&cfg.0, &cfg.1, &cfg.2)?, cfg)))
            .collect::<Result<_>>()?;
        keyed.sort_by_key(|(k, _)| *k);
        let keys: Vec<u128> = keyed.iter().map(|(k, _)| *k).collect();

        if na <= 1 && nb <= 1 {
            let vals = keyed
                .iter()
                .map(|(_, (a, b, c))| {
                    if let Some(pos) = c.iter().position(|&v| v > 0) {
                        self.pia[pos / self.l] * self.pib[pos % self.l]
                    } else {
                        match (
                            a.iter().position(|&v| v > 0),
                            b.iter().position(|&v| v > 0),
                        ) {
                            (Some(i), Some(j)) => self.pia[i] * self.pib[j],
                            (Some(i), None) => self.pia[i],
                            (None, Some(j)) => self.pib[j],
                            (None, None) => 1.0,
                        }
                    }
                })
                .collect();
            return Ok(ClassValues { keys, vals });
        }

        // Build the rows in parallel: diagonal, right-hand side from solved
        // classes, and the in-class couplings in CSR-like form.
        let rows: Vec<(f64, f64, Vec<(u32, f64)>)> = keyed
            .par_iter()
            .map(|(_, cfg)| self.build_row(cfg, &keys, na, nb))
            .collect::<Result<_>>()?;

        // Jacobi sweeps; the dominance margin n(n-1) - 2ab > 0 for every
        // nonboundary class makes this a contraction.
        let dim = keys.len();
        let mut cur = vec![0.0f64; dim];
        let mut nxt = vec![0.0f64; dim];
        let mut sweep = 0usize;
        loop {
            nxt.par_iter_mut().enumerate().for_each(|(i, out)| {
                let (diag, rhs, ref nbrs) = rows[i];
                let mut acc = rhs;
                for &(col, w) in nbrs {
                    acc += w * cur[col as usize];
                }
                *out = acc / diag;
            });
            // Probabilities deep in the rectangle are tiny, so convergence
            // is judged relative to each component, not in absolute terms.
            let delta = cur
                .par_iter()
                .zip(nxt.par_iter())
                .map(|(a, b)| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE))
                .reduce(|| 0.0, f64::max);
            std::mem::swap(&mut cur, &mut nxt);
            sweep += 1;
            if delta <= self.tol {
                break;
            }
            if sweep >= self.max_sweeps {
                return Err(Error::NonConvergence(format!(
                    "Jacobi stalled on class ({na}, {nb}): delta {delta:.3e} after {sweep} sweeps"
                )));
            }
        }
        Ok(ClassValues { keys, vals: cur })
    }

    #[allow(clippy::type_complexity)]
    fn build_row(
        &self,
        cfg: &FlatConfig,
        keys: &[u128],
        na: u32,
        nb: u32,
    ) -> Result<(f64, f64, Vec<(u32, f64)>)> {
        let (a, b, c) = cfg;
        let (k, l) = (self.k, self.l);
        let at: i64 = a.iter().map(|&v| v as i64).sum();
        let bt: i64 = b.iter().map(|&v| v as i64).sum();
        let ct: i64 = c.iter().map(|&v| v as i64).sum();
        let n = at + bt + ct;
        let c_rows: Vec<i64> = (0..k).map(|i| (0..l).map(|j| c[i * l + j] as i64).sum()).collect();
        let c_cols: Vec<i64> = (0..l).map(|j| (0..k).map(|i| c[i * l + j] as i64).sum()).collect();

        let diag = (n * (n - 1)) as f64
            + self.theta_a * (at + ct) as f64
            + self.theta_b * (bt + ct) as f64
            + self.rho * ct as f64;
        let mut rhs = 0.0f64;
        let mut nbrs: Vec<(u32, f64)> = Vec::new();
        let mut couple = |a2: &[u32], b2: &[u32], c2: &[u32], w: f64| -> Result<()> {
            let key = pack(a2, b2, c2)?;
            let col = keys.binary_search(&key).expect("in-class neighbour");
            nbrs.push((col as u32, w));
            Ok(())
        };

        // Mutation at both loci.
        for i in 0..k {
            for kx in 0..k {
                let w = self.tpa[kx][i];
                if w == 0.0 {
                    continue;
                }
                if a[i] > 0 {
                    let mut a2 = a.clone();
                    a2[i] -= 1;
                    a2[kx] += 1;
                    couple(&a2, b, c, w * a[i] as f64)?;
                }
                for j in 0..l {
                    let ij = i * l + j;
                    if c[ij] > 0 {
                        let mut c2 = c.clone();
                        c2[ij] -= 1;
                        c2[kx * l + j] += 1;
                        couple(a, b, &c2, w * c[ij] as f64)?;
                    }
                }
            }
        }
        for j in 0..l {
            for lx in 0..l {
                let w = self.tpb[lx][j];
                if w == 0.0 {
                    continue;
                }
                if b[j] > 0 {
                    let mut b2 = b.clone();
                    b2[j] -= 1;
                    b2[lx] += 1;
                    couple(a, &b2, c, w * b[j] as f64)?;
                }
                for i in 0..k {
                    let ij = i * l + j;
                    if c[ij] > 0 {
                        let mut c2 = c.clone();
                        c2[ij] -= 1;
                        c2[i * l + lx] += 1;
                        couple(a, b, &c2, w * c[ij] as f64)?;
                    }
                }
            }
        }
        // Pair merge.
        for i in 0..k {
            if a[i] == 0 {
                continue;
            }
            for j in 0..l {
                if b[j] == 0 {
                    continue;
                }
                let mut a2 = a.clone();
                a2[i] -= 1;
                let mut b2 = b.clone();
                b2[j] -= 1;
                let mut c2 = c.clone();
                c2[i * l + j] += 1;
                couple(&a2, &b2, &c2, 2.0 * a[i] as f64 * b[j] as f64)?;
            }
        }
        // Recombination split.
        if self.rho != 0.0 {
            for i in 0..k {
                for j in 0..l {
                    let ij = i * l + j;
                    if c[ij] == 0 {
                        continue;
                    }
                    let mut a2 = a.clone();
                    a2[i] += 1;
                    let mut b2 = b.clone();
                    b2[j] += 1;
                    let mut c2 = c.clone();
                    c2[ij] -= 1;
                    couple(&a2, &b2, &c2, self.rho * c[ij] as f64)?;
                }
            }
        }
        // Coalescence into solved classes.
        for i in 0..k {
            let coef = a[i] as i64 * (a[i] as i64 - 1 + 2 * c_rows[i]);
            if coef != 0 {
                let mut a2 = a.clone();
                a2[i] -= 1;
                rhs += coef as f64 * self.classes[&(na - 1, nb)].get(pack(&a2, b, c)?);
            }
        }
        for j in 0..l {
            let coef = b[j] as i64 * (b[j] as i64 - 1 + 2 * c_cols[j]);
            if coef != 0 {
                let mut b2 = b.clone();
                b2[j] -= 1;
                rhs += coef as f64 * self.classes[&(na, nb - 1)].get(pack(a, &b2, c)?);
            }
        }
        for ij in 0..k * l {
            let coef = c[ij] as i64 * (c[ij] as i64 - 1);
            if coef != 0 {
                let mut c2 = c.clone();
                c2[ij] -= 1;
                rhs += coef as f64 * self.classes[&(na - 1, nb - 1)].get(pack(a, b, &c2)?);
            }
        }
        Ok((diag, rhs, nbrs))
    }
}
