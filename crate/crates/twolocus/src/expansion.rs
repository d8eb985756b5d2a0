//! Level-wise computation of the inverse-recombination-rate expansion of the
//! two-locus sampling distribution.
//!
//! The engine evaluates the array entries `g_u^(m)(a, b, r)` (or their
//! nonneutral counterparts when a selection matrix is supplied), assembles
//! level contributions and expansion coefficients, and provides partial sums
//! and the optimal truncation rule.

use crate::error::{Error, Result};
use crate::linalg::SparseRow;
use crate::model::{binomial, ModelParams, SampleConfig};
use crate::onelocus::{compositions, AscFactorialCache, OneLocusSolver, SelectedOneLocus};
use crate::scalar::Scalar;
use crate::Rational;
use num_traits::ToPrimitive;
use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};

/// Move a dense scratch row into sparse form with the diagonal split out;
/// the scratch buffer is zeroed for reuse.
fn compress_row<T: Scalar>(scratch: &mut [T], diag_col: usize, rhs: T) -> SparseRow<T> {
    let mut diag = T::zero();
    let mut nbrs = Vec::new();
    for (col, cell) in scratch.iter_mut().enumerate() {
        if num_traits::Zero::is_zero(cell) {
            continue;
        }
        let v = std::mem::replace(cell, T::zero());
        if col == diag_col {
            diag = v;
        } else {
            nbrs.push((col as u32, -v));
        }
    }
    SparseRow { diag, nbrs, rhs }
}

/// Key of one expansion-array entry `g_u^(m)(a, b, r)`; `r` is stored
/// row-major with `K * L` entries.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GKey {
    pub m: u32,
    pub u: u32,
    pub a: Vec<u32>,
    pub b: Vec<u32>,
    pub r: Vec<u32>,
}

/// Marginal one-locus sampling distribution used by the engine.
pub trait OneLocusDist<T: Scalar>: Send + Sync {
    /// Ordered sampling probability of the one-locus configuration `n`.
    fn q(&self, n: &[u32]) -> Result<T>;
}

/// Closed-form parent-independent distribution, cached per configuration.
pub struct PimDist<T: Scalar> {
    model: crate::model::MutationModel,
    cache: AscFactorialCache,
    memo: Mutex<HashMap<Vec<u32>, T>>,
}

impl<T: Scalar> PimDist<T> {
    pub fn new(model: crate::model::MutationModel) -> Result<Self> {
        if !model.is_pim() {
            return Err(Error::NotPim("PimDist needs identical transition rows".into()));
        }
        Ok(PimDist {
            model,
            cache: AscFactorialCache::new(),
            memo: Mutex::new(HashMap::new()),
        })
    }
}

impl<T: Scalar> OneLocusDist<T> for PimDist<T> {
    fn q(&self, n: &[u32]) -> Result<T> {
        if let Some(v) = self.memo.lock().unwrap().get(n) {
            return Ok(v.clone());
        }
        let exact = crate::onelocus::q_pim_cached(n, &self.model, &self.cache)?;
        let v = T::from_rational(&exact);
        self.memo.lock().unwrap().insert(n.to_vec(), v.clone());
        Ok(v)
    }
}

/// General finite-alleles distribution backed by the level-by-level solver.
pub struct GeneralDist {
    solver: OneLocusSolver,
}

impl GeneralDist {
    pub fn new(model: crate::model::MutationModel) -> Result<Self> {
        Ok(GeneralDist {
            solver: OneLocusSolver::new(model)?,
        })
    }
}

impl<T: Scalar> OneLocusDist<T> for GeneralDist {
    fn q(&self, n: &[u32]) -> Result<T> {
        Ok(T::from_rational(&self.solver.q(n)?))
    }
}

/// Quadrature-backed selected-locus distribution (f64 only).
pub struct SelectedDist {
    inner: SelectedOneLocus,
}

impl SelectedDist {
    pub fn new(inner: SelectedOneLocus) -> Self {
        SelectedDist { inner }
    }
}

impl OneLocusDist<f64> for SelectedDist {
    fn q(&self, n: &[u32]) -> Result<f64> {
        self.inner.q(n)
    }
}

/// Expansion coefficients of one sample, exact, with the approximation flag
/// recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesExpansion {
    pub sample: SampleConfig,
    pub coeffs: Vec<Rational>,
    pub approx: bool,
}

impl SeriesExpansion {
    pub fn coeffs_f64(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.to_f64().unwrap_or(f64::NAN)).collect()
    }

    pub fn partial_sum(&self, rho: f64) -> Result<f64> {
        partial_sum(&self.coeffs_f64(), rho)
    }

    pub fn partial_sum_exact(&self, rho: &Rational) -> Result<Rational> {
        use num_traits::Signed;
        if !rho.is_positive() {
            return Err(Error::Domain("partial sum needs rho > 0".into()));
        }
        let inv = Rational::new(rho.denom().clone(), rho.numer().clone());
        let mut acc = Rational::new(0.into(), 1.into());
        for c in self.coeffs.iter().rev() {
            acc = acc * &inv + c;
        }
        Ok(acc)
    }

    pub fn otr(&self, rho: f64) -> Result<(usize, f64)> {
        otr_truncate(&self.coeffs_f64(), rho)
    }
}

/// Partial sum `sum_k coeffs[k] / rho^k`; the expansion lives at large rho,
/// so nonpositive rho is a domain error.
pub fn partial_sum(coeffs: &[f64], rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::Domain("partial sum needs rho > 0".into()));
    }
    let x = 1.0 / rho;
    let mut acc = 0.0;
    for c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    Ok(acc)
}

/// Optimal truncation rule: truncate at the index whose term has the smallest
/// magnitude (ties to the smallest index). Returns the index and the
/// truncated partial sum.
pub fn otr_truncate(coeffs: &[f64], rho: f64) -> Result<(usize, f64)> {
    if !(rho > 0.0) {
        return Err(Error::Domain("OTR needs rho > 0".into()));
    }
    if coeffs.is_empty() {
        return Err(Error::Invalid("OTR needs at least one coefficient".into()));
    }
    let mut best = 0usize;
    let mut best_mag = f64::INFINITY;
    let mut scale = 1.0f64;
    for (k, c) in coeffs.iter().enumerate() {
        let mag = (c * scale).abs();
        if mag < best_mag {
            best_mag = mag;
            best = k;
        }
        scale /= rho;
    }
    Ok((best, partial_sum(&coeffs[..=best], rho)?))
}

/// Policy for dropping the recursive terms `g_{2M}^(0)` for `M >= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApproxG0 {
    On,
    Off,
    /// Off for samples of size at most 12, on above.
    Auto,
}

impl ApproxG0 {
    pub fn resolve(self, n: u32) -> bool {
        match self {
            ApproxG0::On => true,
            ApproxG0::Off => false,
            ApproxG0::Auto => n > 12,
        }
    }
}

/// The expansion engine. Generic over the scalar so the neutral theory runs
/// exactly while quadrature-backed selection runs in floating point.
pub struct Engine<T: Scalar> {
    k: usize,
    l: usize,
    theta_a: T,
    theta_b: T,
    /// `theta_A * P^A[k][i]`, indexed `[k][i]`.
    tpa: Vec<Vec<T>>,
    tpb: Vec<Vec<T>>,
    qa: Arc<dyn OneLocusDist<T>>,
    qb: Arc<dyn OneLocusDist<T>>,
    /// Selection matrix at locus A; `None` selects the purely neutral paths.
    sigma: Option<Vec<Vec<T>>>,
    approx_g0: bool,
    shortcut_odd: bool,
    /// Largest `|a|` the selected case-(iii) solver will serve, plus the
    /// truncation buffer actually used.
    sel_amax: u32,
    sel_buffer: u32,
    memo: Mutex<HashMap<GKey, T>>,
    g0_classes: Mutex<HashSet<(u32, u32, u32)>>,
    h0_blocks: Mutex<HashSet<(u32, u32)>>,
}

impl Engine<Rational> {
    /// Neutral engine in exact rational arithmetic; picks the closed form for
    /// parent-independent loci and the general solver otherwise.
    pub fn neutral(params: &ModelParams) -> Result<Self> {
        let qa: Arc<dyn OneLocusDist<Rational>> = if params.locus_a.is_pim() {
            Arc::new(PimDist::new(params.locus_a.clone())?)
        } else {
            Arc::new(GeneralDist::new(params.locus_a.clone())?)
        };
        let qb: Arc<dyn OneLocusDist<Rational>> = if params.locus_b.is_pim() {
            Arc::new(PimDist::new(params.locus_b.clone())?)
        } else {
            Arc::new(GeneralDist::new(params.locus_b.clone())?)
        };
        Engine::new(params, qa, qb, None, 0)
    }
}

impl Engine<f64> {
    /// Neutral engine in floating point: every recursion step is the same,
    /// only the arithmetic is lossy. Orders of magnitude faster than the
    /// exact engine on deep samples; use where machine precision suffices
    /// (e.g. partial-sum evaluation).
    pub fn neutral_f64(params: &ModelParams) -> Result<Self> {
        let qa: Arc<dyn OneLocusDist<f64>> = if params.locus_a.is_pim() {
            Arc::new(PimDist::new(params.locus_a.clone())?)
        } else {
            Arc::new(GeneralDist::new(params.locus_a.clone())?)
        };
        let qb: Arc<dyn OneLocusDist<f64>> = if params.locus_b.is_pim() {
            Arc::new(PimDist::new(params.locus_b.clone())?)
        } else {
            Arc::new(GeneralDist::new(params.locus_b.clone())?)
        };
        Engine::new(params, qa, qb, None, 0)
    }
}

impl<T: Scalar> Engine<T> {
    /// General constructor. `sigma` switches on the selection term
    /// injections; `sel_amax` bounds `|a|` for the selected recursive solver
    /// (ignored when neutral).
    pub fn new(
        params: &ModelParams,
        qa: Arc<dyn OneLocusDist<T>>,
        qb: Arc<dyn OneLocusDist<T>>,
        sigma: Option<Vec<Vec<T>>>,
        sel_amax: u32,
    ) -> Result<Self> {
        let k = params.locus_a.k();
        let l = params.locus_b.k();
        if !params.locus_a.is_irreducible() || !params.locus_b.is_irreducible() {
            return Err(Error::Reducible("expansion needs irreducible mutation".into()));
        }
        let theta_a = T::from_rational(params.locus_a.theta());
        let theta_b = T::from_rational(params.locus_b.theta());
        let tpa = params
            .locus_a
            .p()
            .iter()
            .map(|row| {
                row.iter()
                    .map(|p| T::from_rational(&(params.locus_a.theta() * p)))
                    .collect()
            })
            .collect();
        let tpb = params
            .locus_b
            .p()
            .iter()
            .map(|row| {
                row.iter()
                    .map(|p| T::from_rational(&(params.locus_b.theta() * p)))
                    .collect()
            })
            .collect();
        let sigma_zero = sigma
            .as_ref()
            .map(|s| s.iter().all(|row| row.iter().all(|v| num_traits::Zero::is_zero(v))));
        Ok(Engine {
            k,
            l,
            theta_a,
            theta_b,
            tpa,
            tpb,
            qa,
            qb,
            sigma,
            approx_g0: false,
            shortcut_odd: true,
            sel_amax,
            // Zero fitness entries mean no upward coupling, so the
            // truncation horizon can sit exactly at the served range.
            sel_buffer: match &sigma_zero {
                Some(true) => 0,
                _ => 10,
            },
            memo: Mutex::new(HashMap::new()),
            g0_classes: Mutex::new(HashSet::new()),
            h0_blocks: Mutex::new(HashSet::new()),
        })
    }

    /// Drop `g_{2M}^(0)` terms for `M >= 2`. Invalidates nothing already
    /// cached, so set it before computing.
    pub fn set_approx_g0(&mut self, on: bool) {
        self.approx_g0 = on;
    }

    pub fn approx_g0(&self) -> bool {
        self.approx_g0
    }

    /// Disable the odd-level shortcut so odd entries are computed honestly
    /// through the recursions (used to verify the vanishing result).
    pub fn set_shortcut_odd(&mut self, on: bool) {
        self.shortcut_odd = on;
    }

    pub fn is_selected(&self) -> bool {
        self.sigma.is_some()
    }

    fn ridx(&self, i: usize, j: usize) -> usize {
        i * self.l + j
    }

    /// Entry lookup with the convention that out-of-range indices are zero.
    fn g_shift(&self, m: i64, u: i64, a: &[i64], b: &[i64], r: &[i64]) -> Result<T> {
        if m < 0 || u < 0 {
            return Ok(T::zero());
        }
        if a.iter().chain(b).chain(r).any(|&v| v < 0) {
            return Ok(T::zero());
        }
        let a: Vec<u32> = a.iter().map(|&v| v as u32).collect();
        let b: Vec<u32> = b.iter().map(|&v| v as u32).collect();
        let r: Vec<u32> = r.iter().map(|&v| v as u32).collect();
        self.g(m as u32, u as u32, &a, &b, &r)
    }

    /// The array entry `g_u^(m)(a, b, r)` (or `h_u^(m)` under selection).
    pub fn g(&self, m: u32, u: u32, a: &[u32], b: &[u32], r: &[u32]) -> Result<T> {
        if a.len() != self.k || b.len() != self.l || r.len() != self.k * self.l {
            return Err(Error::Invalid("g: config dimensions do not match model".into()));
        }
        let rsum: u32 = r.iter().sum();
        if rsum != m {
            return Err(Error::Invalid(format!(
                "g: r entries sum to {rsum}, expected m = {m}"
            )));
        }
        if self.shortcut_odd && (m + u) % 2 == 1 {
            return Ok(T::zero());
        }
        let key = GKey {
            m,
            u,
            a: a.to_vec(),
            b: b.to_vec(),
            r: r.to_vec(),
        };
        if let Some(v) = self.memo.lock().unwrap().get(&key) {
            return Ok(v.clone());
        }
        let value = if m == 0 && u == 0 {
            self.case_base(a, b)?
        } else if m > 0 {
            self.case_recursive(m, u, a, b, r)?
        } else {
            self.case_g0(u, a, b)?
        };
        self.memo.lock().unwrap().insert(key, value.clone());
        Ok(value)
    }

    /// Case (i): `g_0^(0)(a, b, 0)` is the product of the marginal one-locus
    /// sampling distributions.
    fn case_base(&self, a: &[u32], b: &[u32]) -> Result<T> {
        Ok(self.qa.q(a)? * self.qb.q(b)?)
    }

    /// Case (ii): `m > 0`. Every referenced entry sits two levels down; the
    /// whole linear combination is divided by `m` at the end.
    fn case_recursive(&self, m: u32, u: u32, a: &[u32], b: &[u32], r: &[u32]) -> Result<T> {
        let (kn, ln) = (self.k, self.l);
        let ai: Vec<i64> = a.iter().map(|&v| v as i64).collect();
        let bi: Vec<i64> = b.iter().map(|&v| v as i64).collect();
        let ri: Vec<i64> = r.iter().map(|&v| v as i64).collect();
        let at: i64 = ai.iter().sum();
        let bt: i64 = bi.iter().sum();
        let mi = m as i64;
        let ui = u as i64;
        let r_rows: Vec<i64> = (0..kn).map(|i| (0..ln).map(|j| ri[self.ridx(i, j)]).sum()).collect();
        let r_cols: Vec<i64> = (0..ln).map(|j| (0..kn).map(|i| ri[self.ridx(i, j)]).sum()).collect();

        let mut acc = T::zero();

        // Shift helper: clone base vectors and apply deltas.
        let shift = |base: &[i64], deltas: &[(usize, i64)]| -> Vec<i64> {
            let mut out = base.to_vec();
            for &(pos, d) in deltas {
                out[pos] += d;
            }
            out
        };

        let add = |engine: &Self, acc: &mut T, coef: T, m2: i64, u2: i64, a2: &[i64], b2: &[i64], r2: &[i64]| -> Result<()> {
            let v = engine.g_shift(m2, u2, a2, b2, r2)?;
            if !num_traits::Zero::is_zero(&v) {
                *acc = acc.clone() + coef * v;
            }
            Ok(())
        };

        for i in 0..kn {
            for j in 0..ln {
                let ij = self.ridx(i, j);
                let rij = ri[ij];

                if rij > 0 {
                    // t1
                    if rij > 1 {
                        add(self, &mut acc, T::from_i64(rij * (rij - 1)),
                            mi - 2, ui,
                            &shift(&ai, &[(i, 1)]), &shift(&bi, &[(j, 1)]), &shift(&ri, &[(ij, -2)]))?;
                    }
                    // t2
                    for lx in 0..ln {
                        let il = self.ridx(i, lx);
                        let coef = rij * (ri[il] - if j == lx { 1 } else { 0 });
                        if coef != 0 {
                            add(self, &mut acc, T::from_i64(-coef),
                                mi - 2, ui,
                                &shift(&ai, &[(i, 1)]), &shift(&bi, &[(j, 1), (lx, 1)]),
                                &shift(&ri, &[(ij, -1), (il, -1)]))?;
                        }
                    }
                    // t3
                    for kx in 0..kn {
                        let kj = self.ridx(kx, j);
                        let coef = rij * (ri[kj] - if i == kx { 1 } else { 0 });
                        if coef != 0 {
                            add(self, &mut acc, T::from_i64(-coef),
                                mi - 2, ui,
                                &shift(&ai, &[(i, 1), (kx, 1)]), &shift(&bi, &[(j, 1)]),
                                &shift(&ri, &[(ij, -1), (kj, -1)]))?;
                        }
                    }
                    // t4
                    for kx in 0..kn {
                        for lx in 0..ln {
                            let kl = self.ridx(kx, lx);
                            let coef = rij * (ri[kl] - if i == kx && j == lx { 1 } else { 0 });
                            if coef != 0 {
                                add(self, &mut acc, T::from_i64(coef),
                                    mi - 2, ui,
                                    &shift(&ai, &[(i, 1), (kx, 1)]), &shift(&bi, &[(j, 1), (lx, 1)]),
                                    &shift(&ri, &[(ij, -1), (kl, -1)]))?;
                            }
                        }
                    }
                    // t5
                    if rij > 1 {
                        add(self, &mut acc, T::from_i64(rij * (rij - 1)),
                            mi - 1, ui - 1, &ai, &bi, &shift(&ri, &[(ij, -1)]))?;
                    }
                    // t6
                    if r_rows[i] != 1 {
                        add(self, &mut acc, T::from_i64(-2 * rij * (r_rows[i] - 1)),
                            mi - 1, ui - 1, &ai, &shift(&bi, &[(j, 1)]), &shift(&ri, &[(ij, -1)]))?;
                    }
                    // t7
                    if r_cols[j] != 1 {
                        add(self, &mut acc, T::from_i64(-2 * rij * (r_cols[j] - 1)),
                            mi - 1, ui - 1, &shift(&ai, &[(i, 1)]), &bi, &shift(&ri, &[(ij, -1)]))?;
                    }
                    // t9
                    if mi > 1 {
                        add(self, &mut acc, T::from_i64(2 * (mi - 1) * rij),
                            mi - 1, ui - 1,
                            &shift(&ai, &[(i, 1)]), &shift(&bi, &[(j, 1)]), &shift(&ri, &[(ij, -1)]))?;
                    }
                }

                // t8 runs for every target cell (i, j), not only occupied ones.
                for kx in 0..kn {
                    let kj = self.ridx(kx, j);
                    if ri[kj] == 0 {
                        continue;
                    }
                    for lx in 0..ln {
                        let il = self.ridx(i, lx);
                        let coef = 2 * ri[kj] * (ri[il] - if i == kx && j == lx { 1 } else { 0 });
                        if coef != 0 {
                            add(self, &mut acc, T::from_i64(coef),
                                mi - 1, ui - 1,
                                &shift(&ai, &[(kx, 1)]), &shift(&bi, &[(lx, 1)]),
                                &shift(&ri, &[(kj, -1), (il, -1), (ij, 1)]))?;
                        }
                    }
                }
            }
        }

        // t10
        for i in 0..kn {
            let coef = ai[i] * (ai[i] + 2 * r_rows[i] - 1);
            if coef != 0 {
                add(self, &mut acc, T::from_i64(coef), mi, ui - 2,
                    &shift(&ai, &[(i, -1)]), &bi, &ri)?;
            }
        }
        // t11
        for j in 0..ln {
            let coef = bi[j] * (bi[j] + 2 * r_cols[j] - 1);
            if coef != 0 {
                add(self, &mut acc, T::from_i64(coef), mi, ui - 2,
                    &ai, &shift(&bi, &[(j, -1)]), &ri)?;
            }
        }
        // t12
        for i in 0..kn {
            if ai[i] == 0 {
                continue;
            }
            for j in 0..ln {
                for kx in 0..kn {
                    let kj = self.ridx(kx, j);
                    if ri[kj] == 0 {
                        continue;
                    }
                    add(self, &mut acc, T::from_i64(-2 * ai[i] * ri[kj]), mi, ui - 2,
                        &shift(&ai, &[(i, -1), (kx, 1)]), &bi,
                        &shift(&ri, &[(kj, -1), (self.ridx(i, j), 1)]))?;
                }
            }
        }
        // t13
        for j in 0..ln {
            if bi[j] == 0 {
                continue;
            }
            for i in 0..kn {
                for lx in 0..ln {
                    let il = self.ridx(i, lx);
                    if ri[il] == 0 {
                        continue;
                    }
                    add(self, &mut acc, T::from_i64(-2 * bi[j] * ri[il]), mi, ui - 2,
                        &ai, &shift(&bi, &[(j, -1), (lx, 1)]),
                        &shift(&ri, &[(il, -1), (self.ridx(i, j), 1)]))?;
                }
            }
        }
        // t14: mutation at locus A.
        for i in 0..kn {
            for kx in 0..kn {
                let w = &self.tpa[kx][i];
                if num_traits::Zero::is_zero(w) {
                    continue;
                }
                if ai[i] > 0 {
                    add(self, &mut acc, w.clone() * T::from_i64(ai[i]), mi, ui - 2,
                        &shift(&ai, &[(i, -1), (kx, 1)]), &bi, &ri)?;
                }
                for j in 0..ln {
                    let ij = self.ridx(i, j);
                    if ri[ij] > 0 {
                        add(self, &mut acc, w.clone() * T::from_i64(ri[ij]), mi, ui - 2,
                            &ai, &bi, &shift(&ri, &[(ij, -1), (self.ridx(kx, j), 1)]))?;
                    }
                }
            }
        }
        // t15: mutation at locus B.
        for j in 0..ln {
            for lx in 0..ln {
                let w = &self.tpb[lx][j];
                if num_traits::Zero::is_zero(w) {
                    continue;
                }
                if bi[j] > 0 {
                    add(self, &mut acc, w.clone() * T::from_i64(bi[j]), mi, ui - 2,
                        &ai, &shift(&bi, &[(j, -1), (lx, 1)]), &ri)?;
                }
                for i in 0..kn {
                    let ij = self.ridx(i, j);
                    if ri[ij] > 0 {
                        add(self, &mut acc, w.clone() * T::from_i64(ri[ij]), mi, ui - 2,
                            &ai, &bi, &shift(&ri, &[(ij, -1), (self.ridx(i, lx), 1)]))?;
                    }
                }
            }
        }
        // t16: diagonal-style term two levels down.
        {
            let int_part = (at + mi) * (at + mi - 1) + (bt + mi) * (bt + mi - 1) - mi * (mi - 3);
            let coef = T::zero()
                - (T::from_i64(int_part)
                    + self.theta_a.clone() * T::from_i64(at + mi)
                    + self.theta_b.clone() * T::from_i64(bt + mi));
            add(self, &mut acc, coef, mi, ui - 2, &ai, &bi, &ri)?;
        }
        // t17
        for i in 0..kn {
            if ai[i] == 0 {
                continue;
            }
            for j in 0..ln {
                if bi[j] == 0 {
                    continue;
                }
                add(self, &mut acc, T::from_i64(2 * ai[i] * bi[j]), mi + 1, ui - 3,
                    &shift(&ai, &[(i, -1)]), &shift(&bi, &[(j, -1)]),
                    &shift(&ri, &[(self.ridx(i, j), 1)]))?;
            }
        }

        // Selection injections (all two levels down, same `m`).
        if let Some(sigma) = self.sigma.clone() {
            // s1: (a_i + r_i.) sigma_ik at (a + e_k).
            for kx in 0..kn {
                for i in 0..kn {
                    let mult = ai[i] + r_rows[i];
                    if mult == 0 || num_traits::Zero::is_zero(&sigma[i][kx]) {
                        continue;
                    }
                    add(self, &mut acc, sigma[i][kx].clone() * T::from_i64(mult),
                        mi, ui - 2, &shift(&ai, &[(kx, 1)]), &bi, &ri)?;
                }
            }
            // s2: -(a + m) sigma_kk' at (a + e_k + e_k').
            for kx in 0..kn {
                for kp in 0..kn {
                    if num_traits::Zero::is_zero(&sigma[kx][kp]) {
                        continue;
                    }
                    let coef = T::zero() - sigma[kx][kp].clone() * T::from_i64(at + mi);
                    add(self, &mut acc, coef, mi, ui - 2,
                        &shift(&ai, &[(kx, 1), (kp, 1)]), &bi, &ri)?;
                }
            }
            // s3: -r_ij sigma_kk' at (a + e_i + e_k, r - e_ij + e_k'j).
            for i in 0..kn {
                for j in 0..ln {
                    let ij = self.ridx(i, j);
                    if ri[ij] == 0 {
                        continue;
                    }
                    for kx in 0..kn {
                        for kp in 0..kn {
                            if num_traits::Zero::is_zero(&sigma[kx][kp]) {
                                continue;
                            }
                            let coef = T::zero() - sigma[kx][kp].clone() * T::from_i64(ri[ij]);
                            add(self, &mut acc, coef, mi, ui - 2,
                                &shift(&ai, &[(i, 1), (kx, 1)]), &bi,
                                &shift(&ri, &[(ij, -1), (self.ridx(kp, j), 1)]))?;
                        }
                    }
                }
            }
        }

        Ok(acc / T::from_i64(mi))
    }

    /// Case (iii): `m = 0`, `u >= 1`. Solved class-by-class in the totals of
    /// `a` and `b`; entries are then read from the memo.
    fn case_g0(&self, u: u32, a: &[u32], b: &[u32]) -> Result<T> {
        if self.approx_g0 && u >= 4 {
            return Ok(T::zero());
        }
        let sa: u32 = a.iter().sum();
        let sb: u32 = b.iter().sum();
        if self.sigma.is_some() {
            self.ensure_h0_block(u, sb, sa)?;
        } else {
            self.ensure_g0_class(u, sa, sb)?;
        }
        let key = GKey {
            m: 0,
            u,
            a: a.to_vec(),
            b: b.to_vec(),
            r: vec![0; self.k * self.l],
        };
        self.memo
            .lock()
            .unwrap()
            .get(&key)
            .cloned()
            .ok_or_else(|| Error::Invalid("case (iii) class solve missed a config".into()))
    }

    fn store_g0(&self, u: u32, a: &[u32], b: &[u32], v: T) {
        let key = GKey {
            m: 0,
            u,
            a: a.to_vec(),
            b: b.to_vec(),
            r: vec![0; self.k * self.l],
        };
        self.memo.lock().unwrap().insert(key, v);
    }

    fn load_g0(&self, u: u32, a: &[u32], b: &[u32]) -> T {
        let key = GKey {
            m: 0,
            u,
            a: a.to_vec(),
            b: b.to_vec(),
            r: vec![0; self.k * self.l],
        };
        self.memo
            .lock()
            .unwrap()
            .get(&key)
            .cloned()
            .expect("dependency class already solved")
    }

    /// Neutral case (iii): one dense solve per `(|a|, |b|)` class, classes
    /// with both totals at most one are zero by the boundary conditions.
    fn ensure_g0_class(&self, u: u32, sa: u32, sb: u32) -> Result<()> {
        if self.g0_classes.lock().unwrap().contains(&(u, sa, sb)) {
            return Ok(());
        }
        if sa <= 1 && sb <= 1 {
            for ac in compositions(sa, self.k) {
                for bc in compositions(sb, self.l) {
                    self.store_g0(u, &ac, &bc, T::zero());
                }
            }
            self.g0_classes.lock().unwrap().insert((u, sa, sb));
            return Ok(());
        }
        if sa > 0 {
            self.ensure_g0_class(u, sa - 1, sb)?;
        }
        if sb > 0 {
            self.ensure_g0_class(u, sa, sb - 1)?;
        }

        let a_cfgs = compositions(sa, self.k);
        let b_cfgs = compositions(sb, self.l);
        let dim = a_cfgs.len() * b_cfgs.len();
        let index = |ia: usize, ib: usize| ia * b_cfgs.len() + ib;
        let a_index: HashMap<&Vec<u32>, usize> = a_cfgs.iter().enumerate().map(|(i, c)| (c, i)).collect();
        let b_index: HashMap<&Vec<u32>, usize> = b_cfgs.iter().enumerate().map(|(i, c)| (c, i)).collect();

        let mut rows = Vec::with_capacity(dim);
        let mut scratch = vec![T::zero(); dim];
        for (ia, ac) in a_cfgs.iter().enumerate() {
            for (ib, bc) in b_cfgs.iter().enumerate() {
                let row = index(ia, ib);
                let mut rhs = T::zero();
                self.fill_g0_row(u, ac, bc, &mut scratch, &mut rhs, |ac2, bc2| {
                    Some(index(*a_index.get(&ac2.to_vec())?, *b_index.get(&bc2.to_vec())?))
                })?;
                rows.push(compress_row(&mut scratch, row, rhs));
            }
        }
        let x = T::solve_sparse(&rows)?;
        for (ia, ac) in a_cfgs.iter().enumerate() {
            for (ib, bc) in b_cfgs.iter().enumerate() {
                self.store_g0(u, ac, bc, x[index(ia, ib)].clone());
            }
        }
        self.g0_classes.lock().unwrap().insert((u, sa, sb));
        Ok(())
    }

    /// Shared row construction for the case-(iii) linear systems. The
    /// `col_of` callback maps same-system configurations to their column (or
    /// `None` when the unknown is outside the system: lower classes go to the
    /// right-hand side, truncated selection targets are dropped).
    fn fill_g0_row(
        &self,
        u: u32,
        ac: &[u32],
        bc: &[u32],
        row: &mut [T],
        rhs: &mut T,
        col_of: impl Fn(&[u32], &[u32]) -> Option<usize>,
    ) -> Result<()> {
        let at: i64 = ac.iter().map(|&v| v as i64).sum();
        let bt: i64 = bc.iter().map(|&v| v as i64).sum();
        let self_col = col_of(ac, bc).expect("row config is in the system");

        // Diagonal: a(a + theta_A - 1) + b(b + theta_B - 1).
        row[self_col] = row[self_col].clone()
            + T::from_i64(at * (at - 1) + bt * (bt - 1))
            + self.theta_a.clone() * T::from_i64(at)
            + self.theta_b.clone() * T::from_i64(bt);

        // Mutation, same class (moved to the left-hand side).
        for i in 0..self.k {
            if ac[i] == 0 {
                continue;
            }
            for kx in 0..self.k {
                let w = &self.tpa[kx][i];
                if num_traits::Zero::is_zero(w) {
                    continue;
                }
                let mut tgt = ac.to_vec();
                tgt[i] -= 1;
                tgt[kx] += 1;
                let col = col_of(&tgt, bc).expect("mutation stays in class");
                row[col] = row[col].clone() - w.clone() * T::from_i64(ac[i] as i64);
            }
        }
        for j in 0..self.l {
            if bc[j] == 0 {
                continue;
            }
            for lx in 0..self.l {
                let w = &self.tpb[lx][j];
                if num_traits::Zero::is_zero(w) {
                    continue;
                }
                let mut tgt = bc.to_vec();
                tgt[j] -= 1;
                tgt[lx] += 1;
                let col = col_of(ac, &tgt).expect("mutation stays in class");
                row[col] = row[col].clone() - w.clone() * T::from_i64(bc[j] as i64);
            }
        }

        // Coalescence, one class down in |a| or |b|.
        for i in 0..self.k {
            if ac[i] >= 2 {
                let mut tgt = ac.to_vec();
                tgt[i] -= 1;
                let coef = T::from_i64((ac[i] as i64) * (ac[i] as i64 - 1));
                match col_of(&tgt, bc) {
                    Some(col) => row[col] = row[col].clone() - coef,
                    None => *rhs = rhs.clone() + coef * self.load_g0(u, &tgt, bc),
                }
            }
        }
        for j in 0..self.l {
            if bc[j] >= 2 {
                let mut tgt = bc.to_vec();
                tgt[j] -= 1;
                let coef = T::from_i64((bc[j] as i64) * (bc[j] as i64 - 1));
                match col_of(ac, &tgt) {
                    Some(col) => row[col] = row[col].clone() - coef,
                    None => *rhs = rhs.clone() + coef * self.load_g0(u, ac, &tgt),
                }
            }
        }

        // Source: 2 sum_ij a_i b_j g^(1)_{u-1}(a - e_i, b - e_j, e_ij),
        // entries on the same level computed through case (ii).
        for i in 0..self.k {
            if ac[i] == 0 {
                continue;
            }
            for j in 0..self.l {
                if bc[j] == 0 {
                    continue;
                }
                let mut a2 = ac.to_vec();
                a2[i] -= 1;
                let mut b2 = bc.to_vec();
                b2[j] -= 1;
                let mut r2 = vec![0u32; self.k * self.l];
                r2[self.ridx(i, j)] = 1;
                let src = self.g(1, u - 1, &a2, &b2, &r2)?;
                if !num_traits::Zero::is_zero(&src) {
                    *rhs = rhs.clone() + T::from_i64(2 * ac[i] as i64 * bc[j] as i64) * src;
                }
            }
        }

        // Selection extras: upward coupling in |a| plus an extra source.
        if let Some(sigma) = self.sigma.clone() {
            for i in 0..self.k {
                for kx in 0..self.k {
                    if num_traits::Zero::is_zero(&sigma[i][kx]) {
                        continue;
                    }
                    // + a_i sigma_ik at (a + e_k): unknown one class up.
                    if ac[i] > 0 {
                        let mut tgt = ac.to_vec();
                        tgt[kx] += 1;
                        if let Some(col) = col_of(&tgt, bc) {
                            row[col] = row[col].clone()
                                - sigma[i][kx].clone() * T::from_i64(ac[i] as i64);
                        }
                    }
                    // - a sigma_ik at (a + e_i + e_k): two classes up.
                    if at > 0 {
                        let mut tgt = ac.to_vec();
                        tgt[i] += 1;
                        tgt[kx] += 1;
                        if let Some(col) = col_of(&tgt, bc) {
                            row[col] =
                                row[col].clone() + sigma[i][kx].clone() * T::from_i64(at);
                        }
                    }
                }
            }
            // + sum_{i,j,k} b_j sigma_ik h^(1)_{u-1}(a + e_k, b - e_j, e_ij).
            for j in 0..self.l {
                if bc[j] == 0 {
                    continue;
                }
                for i in 0..self.k {
                    for kx in 0..self.k {
                        if num_traits::Zero::is_zero(&sigma[i][kx]) {
                            continue;
                        }
                        let mut a2 = ac.to_vec();
                        a2[kx] += 1;
                        let mut b2 = bc.to_vec();
                        b2[j] -= 1;
                        let mut r2 = vec![0u32; self.k * self.l];
                        r2[self.ridx(i, j)] = 1;
                        let src = self.g(1, u - 1, &a2, &b2, &r2)?;
                        if !num_traits::Zero::is_zero(&src) {
                            *rhs = rhs.clone()
                                + sigma[i][kx].clone() * T::from_i64(bc[j] as i64) * src;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Selected case (iii): the selection terms couple upward in `|a|`, so
    /// for each `|b|` class all `|a|` classes up to a truncation bound are
    /// solved jointly (entries above the bound are treated as zero; they
    /// carry at least one factor of sigma and vanish as the bound grows).
    fn ensure_h0_block(&self, u: u32, sb: u32, need_sa: u32) -> Result<()> {
        let smax = self.sel_amax + self.sel_buffer;
        if need_sa > self.sel_amax {
            return Err(Error::Capacity(format!(
                "selected recursive solver configured for |a| <= {}, got {}",
                self.sel_amax, need_sa
            )));
        }
        if self.h0_blocks.lock().unwrap().contains(&(u, sb)) {
            return Ok(());
        }
        if sb > 0 {
            self.ensure_h0_block(u, sb - 1, need_sa.min(self.sel_amax))?;
        }

        // Unknowns: all (a, b) with |a| in 0..=smax, |b| = sb, ordered by
        // |a| then lexicographic.
        let b_cfgs = compositions(sb, self.l);
        let mut a_cfgs: Vec<Vec<u32>> = Vec::new();
        let mut offsets = Vec::new();
        for sa in 0..=smax {
            offsets.push(a_cfgs.len());
            a_cfgs.extend(compositions(sa, self.k));
        }
        let a_index: HashMap<&Vec<u32>, usize> = a_cfgs.iter().enumerate().map(|(i, c)| (c, i)).collect();
        let b_index: HashMap<&Vec<u32>, usize> = b_cfgs.iter().enumerate().map(|(i, c)| (c, i)).collect();
        let dim = a_cfgs.len() * b_cfgs.len();
        let index = |ia: usize, ib: usize| ia * b_cfgs.len() + ib;

        let mut rows = Vec::with_capacity(dim);
        let mut scratch = vec![T::zero(); dim];
        for (ia, ac) in a_cfgs.iter().enumerate() {
            for (ib, bc) in b_cfgs.iter().enumerate() {
                let row = index(ia, ib);
                let sa: u32 = ac.iter().sum();
                if sa <= 1 && sb <= 1 {
                    // Boundary conditions: entries vanish for u >= 1.
                    rows.push(crate::linalg::SparseRow {
                        diag: T::one(),
                        nbrs: Vec::new(),
                        rhs: T::zero(),
                    });
                    continue;
                }
                let mut rhs = T::zero();
                self.fill_g0_row(u, ac, bc, &mut scratch, &mut rhs, |ac2, bc2| {
                    let ia2 = a_index.get(&ac2.to_vec())?;
                    let ib2 = b_index.get(&bc2.to_vec())?;
                    Some(index(*ia2, *ib2))
                })?;
                rows.push(compress_row(&mut scratch, row, rhs));
            }
        }
        let _ = offsets;
        let x = T::solve_sparse(&rows)?;
        // The whole horizon is stored: entries near the truncation bound
        // absorb its error but later blocks still need them as sources.
        for (ia, ac) in a_cfgs.iter().enumerate() {
            for (ib, bc) in b_cfgs.iter().enumerate() {
                self.store_g0(u, ac, bc, x[index(ia, ib)].clone());
            }
        }
        self.h0_blocks.lock().unwrap().insert((u, sb));
        Ok(())
    }

    /// Binomial-weighted sum over subsamples of `c` with total `m`:
    /// the contribution of array position `(m, u)` to the coefficient on
    /// level `m + u`.
    pub fn level_contribution(&self, m: u32, u: u32, sample: &SampleConfig) -> Result<T> {
        if sample.k() != self.k || sample.l() != self.l {
            return Err(Error::Invalid("sample dimensions do not match model".into()));
        }
        if self.shortcut_odd && (m + u) % 2 == 1 {
            return Ok(T::zero());
        }
        let c = sample.c();
        let ca = sample.c_row_sums();
        let cb = sample.c_col_sums();
        let mut acc = T::zero();
        for rm in crate::model::enumerate_subsamples(c, m) {
            let mut weight = num_bigint::BigInt::from(1);
            for (crow, rrow) in c.iter().zip(rm.r()) {
                for (&cv, &rv) in crow.iter().zip(rrow) {
                    if rv > 0 {
                        weight *= binomial(cv, rv);
                    }
                }
            }
            let ra = rm.row_sums();
            let rb = rm.col_sums();
            let a2: Vec<u32> = sample
                .a()
                .iter()
                .zip(&ca)
                .zip(&ra)
                .map(|((&a, &c), &r)| a + c - r)
                .collect();
            let b2: Vec<u32> = sample
                .b()
                .iter()
                .zip(&cb)
                .zip(&rb)
                .map(|((&b, &c), &r)| b + c - r)
                .collect();
            let rflat: Vec<u32> = rm.r().iter().flatten().copied().collect();
            let gval = self.g(m, u, &a2, &b2, &rflat)?;
            if !num_traits::Zero::is_zero(&gval) {
                let w = T::from_rational(&Rational::from_integer(weight));
                acc = acc + w * gval;
            }
        }
        Ok(acc)
    }

    /// Expansion coefficient `q_M`: the total contribution of level `2M`.
    pub fn coefficient(&self, big_m: u32, sample: &SampleConfig) -> Result<T> {
        let level = 2 * big_m;
        let c = sample.c_total();
        let mut acc = T::zero();
        for m in 0..=level.min(c) {
            let u = level - m;
            acc = acc + self.level_contribution(m, u, sample)?;
        }
        Ok(acc)
    }
}

impl Engine<Rational> {
    /// Coefficients `q_0 .. q_M` as an exact series object.
    pub fn expansion(&self, sample: &SampleConfig, big_m: u32) -> Result<SeriesExpansion> {
        let mut coeffs = Vec::with_capacity(big_m as usize + 1);
        for m in 0..=big_m {
            coeffs.push(self.coefficient(m, sample)?);
        }
        Ok(SeriesExpansion {
            sample: sample.clone(),
            coeffs,
            approx: self.approx_g0,
        })
    }
}

/// Zeroth-order closed form: product of the marginal one-locus distributions
/// of the combined configurations.
pub fn q0_closed_form<T: Scalar>(
    sample: &SampleConfig,
    qa: &dyn OneLocusDist<T>,
    qb: &dyn OneLocusDist<T>,
) -> Result<T> {
    let na: Vec<u32> = sample
        .a()
        .iter()
        .zip(sample.c_row_sums())
        .map(|(&a, c)| a + c)
        .collect();
    let nb: Vec<u32> = sample
        .b()
        .iter()
        .zip(sample.c_col_sums())
        .map(|(&b, c)| b + c)
        .collect();
    Ok(qa.q(&na)? * qb.q(&nb)?)
}

/// First-order closed form: the four-term binomial formula in the marginal
/// one-locus distributions. Used as an independent oracle for the engine.
pub fn q1_closed_form<T: Scalar>(
    sample: &SampleConfig,
    qa: &dyn OneLocusDist<T>,
    qb: &dyn OneLocusDist<T>,
) -> Result<T> {
    let na: Vec<u32> = sample
        .a()
        .iter()
        .zip(sample.c_row_sums())
        .map(|(&a, c)| a + c)
        .collect();
    let nb: Vec<u32> = sample
        .b()
        .iter()
        .zip(sample.c_col_sums())
        .map(|(&b, c)| b + c)
        .collect();
    let c_total = sample.c_total();
    let ca = sample.c_row_sums();
    let cb = sample.c_col_sums();
    let choose2 = |n: u32| -> i64 {
        let n = n as i64;
        n * (n - 1) / 2
    };
    let qa_full = qa.q(&na)?;
    let qb_full = qb.q(&nb)?;

    let mut acc = T::from_i64(choose2(c_total)) * qa_full.clone() * qb_full.clone();
    let mut qa_minus = Vec::with_capacity(sample.k());
    for i in 0..sample.k() {
        // Only needed for alleles with at least two doubly-typed gametes.
        if na[i] == 0 {
            qa_minus.push(T::zero());
            continue;
        }
        let mut n2 = na.clone();
        n2[i] -= 1;
        let v = qa.q(&n2)?;
        if ca[i] >= 2 {
            acc = acc - T::from_i64(choose2(ca[i])) * qb_full.clone() * v.clone();
        }
        qa_minus.push(v);
    }
    let mut qb_minus = Vec::with_capacity(sample.l());
    for j in 0..sample.l() {
        if nb[j] == 0 {
            qb_minus.push(T::zero());
            continue;
        }
        let mut n2 = nb.clone();
        n2[j] -= 1;
        let v = qb.q(&n2)?;
        if cb[j] >= 2 {
            acc = acc - T::from_i64(choose2(cb[j])) * qa_full.clone() * v.clone();
        }
        qb_minus.push(v);
    }
    for i in 0..sample.k() {
        for j in 0..sample.l() {
            let cij = sample.c()[i][j];
            if cij >= 2 {
                acc = acc
                    + T::from_i64(choose2(cij)) * qa_minus[i].clone() * qb_minus[j].clone();
            }
        }
    }
    Ok(acc)
}
