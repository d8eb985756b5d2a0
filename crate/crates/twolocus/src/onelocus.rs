//! One-locus sampling distributions: closed form under parent-independent
//! mutation, a general finite-alleles solver, stationary vectors, and the
//! selected-locus distribution via Gauss-Jacobi quadrature.

use crate::error::{Error, Result};
use crate::linalg::solve_dense;
use crate::model::MutationModel;
use crate::Rational;
use nalgebra::{DMatrix, SymmetricEigen};
use num_traits::{One, Zero};
use std::collections::HashMap;
use std::sync::Mutex;

/// Ascending factorial `(z)_n = z (z+1) ... (z+n-1)`, exact.
pub fn ascending_factorial(z: &Rational, n: u32) -> Rational {
    let mut out = Rational::one();
    let mut term = z.clone();
    for _ in 0..n {
        out *= &term;
        term += Rational::one();
    }
    out
}

/// Memo for ascending factorials keyed by `(z, n)`; the PIM closed form
/// re-uses the same bases over and over.
#[derive(Default)]
pub struct AscFactorialCache {
    memo: Mutex<HashMap<(Rational, u32), Rational>>,
}

impl AscFactorialCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, z: &Rational, n: u32) -> Rational {
        if n == 0 {
            return Rational::one();
        }
        let key = (z.clone(), n);
        if let Some(v) = self.memo.lock().unwrap().get(&key) {
            return v.clone();
        }
        // Extend from the largest cached prefix.
        let v = {
            let memo = self.memo.lock().unwrap();
            let mut best: Option<(u32, Rational)> = None;
            for m in (1..n).rev() {
                if let Some(p) = memo.get(&(z.clone(), m)) {
                    best = Some((m, p.clone()));
                    break;
                }
            }
            match best {
                Some((m, mut acc)) => {
                    let mut term = z + Rational::from_integer(m.into());
                    for _ in m..n {
                        acc *= &term;
                        term += Rational::one();
                    }
                    acc
                }
                None => ascending_factorial(z, n),
            }
        };
        self.memo.lock().unwrap().insert(key, v.clone());
        v
    }
}

/// Ordered one-locus sampling probability under parent-independent mutation:
/// `q(n) = (1/(theta)_n) prod_i (theta P_i)_{n_i}`.
pub fn q_pim(n: &[u32], model: &MutationModel) -> Result<Rational> {
    q_pim_cached(n, model, &AscFactorialCache::new())
}

/// As [`q_pim`] but sharing an ascending-factorial cache across calls.
pub fn q_pim_cached(n: &[u32], model: &MutationModel, cache: &AscFactorialCache) -> Result<Rational> {
    let row = model.pim_row()?;
    if n.len() != model.k() {
        return Err(Error::Invalid("config length must equal K".into()));
    }
    let total: u32 = n.iter().sum();
    let mut out = Rational::one() / cache.get(model.theta(), total);
    for (ni, pi) in n.iter().zip(row) {
        if *ni > 0 {
            out *= cache.get(&(model.theta() * pi), *ni);
        }
    }
    Ok(out)
}

/// Stationary distribution `pi` of the transition matrix `P`: `pi P = pi`,
/// `sum pi = 1`, solved exactly.
pub fn stationary_vector(model: &MutationModel) -> Result<Vec<Rational>> {
    if !model.is_irreducible() {
        return Err(Error::Reducible(
            "stationary vector requires an irreducible P".into(),
        ));
    }
    let k = model.k();
    let p = model.p();
    // Rows 0..k-1: (P^T - I) pi = 0 with the last of these replaced by the
    // normalization sum(pi) = 1.
    let mut a = vec![vec![Rational::zero(); k]; k];
    let mut rhs = vec![Rational::zero(); k];
    for i in 0..k.saturating_sub(1) {
        for j in 0..k {
            a[i][j] = p[j][i].clone();
            if i == j {
                a[i][j] -= Rational::one();
            }
        }
    }
    for j in 0..k {
        a[k - 1][j] = Rational::one();
    }
    rhs[k - 1] = Rational::one();
    solve_dense(a, rhs)
}

/// General one-locus solver: builds `q` level-by-level in the sample size.
///
/// Size-`s` configurations couple to each other through mutation and to
/// size-`s-1` configurations through coalescence, so each size class is one
/// small dense solve. Boundary: `q(e_i) = pi_i`.
pub struct OneLocusSolver {
    model: MutationModel,
    memo: Mutex<HashMap<Vec<u32>, Rational>>,
    solved_to: Mutex<u32>,
}

impl OneLocusSolver {
    pub fn new(model: MutationModel) -> Result<Self> {
        if !model.is_irreducible() {
            return Err(Error::Reducible("one-locus solver requires irreducible P".into()));
        }
        let k = model.k();
        let mut memo = HashMap::new();
        memo.insert(vec![0u32; k], Rational::one());
        let pi = stationary_vector(&model)?;
        for i in 0..k {
            let mut e = vec![0u32; k];
            e[i] = 1;
            memo.insert(e, pi[i].clone());
        }
        Ok(OneLocusSolver {
            model,
            memo: Mutex::new(memo),
            solved_to: Mutex::new(1),
        })
    }

    pub fn model(&self) -> &MutationModel {
        &self.model
    }

    pub fn q(&self, n: &[u32]) -> Result<Rational> {
        if n.len() != self.model.k() {
            return Err(Error::Invalid("config length must equal K".into()));
        }
        let total: u32 = n.iter().sum();
        self.ensure_solved(total)?;
        Ok(self
            .memo
            .lock()
            .unwrap()
            .get(n)
            .expect("class solved above")
            .clone())
    }

    fn ensure_solved(&self, size: u32) -> Result<()> {
        let mut solved_to = self.solved_to.lock().unwrap();
        while *solved_to < size {
            let s = *solved_to + 1;
            self.solve_class(s)?;
            *solved_to = s;
        }
        Ok(())
    }

    /// Dense solve for all configurations of total size `s >= 2`:
    /// `n(n-1+theta) q(n) = sum_i n_i(n_i-1) q(n-e_i)
    ///                      + theta sum_{i,t} n_i P_ti q(n-e_i+e_t)`.
    fn solve_class(&self, s: u32) -> Result<()> {
        let k = self.model.k();
        let theta = self.model.theta();
        let p = self.model.p();
        let configs = compositions(s, k);
        let index: HashMap<Vec<u32>, usize> = configs
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, c)| (c, i))
            .collect();
        let dim = configs.len();
        let mut a = vec![vec![Rational::zero(); dim]; dim];
        let mut rhs = vec![Rational::zero(); dim];
        let memo = self.memo.lock().unwrap();
        let sf = Rational::from_integer(s.into());
        for (row, n) in configs.iter().enumerate() {
            a[row][row] = &sf * (&sf - Rational::one() + theta);
            for i in 0..k {
                if n[i] == 0 {
                    continue;
                }
                let ni = Rational::from_integer(n[i].into());
                if n[i] > 1 {
                    let mut down = n.clone();
                    down[i] -= 1;
                    rhs[row] += &ni * (&ni - Rational::one()) * memo.get(&down).expect("smaller class solved");
                }
                for t in 0..k {
                    if p[t][i].is_zero() {
                        continue;
                    }
                    let coeff = theta * &ni * &p[t][i];
                    let mut tgt = n.clone();
                    tgt[i] -= 1;
                    tgt[t] += 1;
                    let col = index[&tgt];
                    a[row][col] -= coeff;
                }
            }
        }
        drop(memo);
        let x = solve_dense(a, rhs)?;
        let mut memo = self.memo.lock().unwrap();
        for (cfg, v) in configs.into_iter().zip(x) {
            memo.insert(cfg, v);
        }
        Ok(())
    }
}

/// All ways to write `total` as an ordered sum of `parts` nonnegative
/// integers, lexicographic in the entries.
pub fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; parts];
    fn rec(total: u32, idx: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if idx + 1 == cur.len() {
            cur[idx] = total;
            out.push(cur.clone());
            return;
        }
        for v in 0..=total {
            cur[idx] = v;
            rec(total - v, idx + 1, cur, out);
        }
    }
    if parts == 0 {
        return out;
    }
    rec(total, 0, &mut cur, &mut out);
    out
}

// ---------------------------------------------------------------------------
// Selected locus: weighted Dirichlet moments via Gauss-Jacobi quadrature.
// ---------------------------------------------------------------------------

/// Gauss-Jacobi nodes and weights on [-1, 1] for the weight
/// `(1-x)^alpha (1+x)^beta`, via the Golub-Welsch eigenvalue method.
/// Weights are returned up to the common factor `mu_0` (the weight integral),
/// which cancels in every moment ratio we form.
fn gauss_jacobi(n: usize, alpha: f64, beta: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let ab = alpha + beta;
    let mut diag = vec![0.0f64; n];
    let mut off = vec![0.0f64; n.saturating_sub(1)];
    for k in 0..n {
        let kf = k as f64;
        diag[k] = if k == 0 {
            (beta - alpha) / (ab + 2.0)
        } else {
            (beta * beta - alpha * alpha) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
        };
    }
    for k in 1..n {
        let kf = k as f64;
        let b2 = if k == 1 {
            4.0 * (1.0 + alpha) * (1.0 + beta) / ((ab + 2.0) * (ab + 2.0) * (ab + 3.0))
        } else {
            4.0 * kf * (kf + alpha) * (kf + beta) * (kf + ab)
                / ((2.0 * kf + ab).powi(2) * (2.0 * kf + ab + 1.0) * (2.0 * kf + ab - 1.0))
        };
        off[k - 1] = b2.sqrt();
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = diag[i];
    }
    for i in 0..n - 1 {
        m[(i, i + 1)] = off[i];
        m[(i + 1, i)] = off[i];
    }
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let node = eig.eigenvalues[i];
            let v0 = eig.eigenvectors[(0, i)];
            (node, v0 * v0)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    pairs.into_iter().unzip()
}

/// One-locus sampling distribution under diploid selection with
/// parent-independent mutation (two alleles).
///
/// The stationary density on the simplex is
/// `D * prod_i x_i^{theta P_i - 1} * exp(0.5 * sum sigma_ik x_i x_k)`; the
/// sampling probability is the corresponding multinomial moment. For K = 2
/// the simplex is one-dimensional and the singular Dirichlet factor is
/// absorbed into a Gauss-Jacobi weight, so the quadrature only has to resolve
/// the smooth polynomial-times-exponential factor.
pub struct SelectedOneLocus {
    model: MutationModel,
    sigma: Vec<Vec<f64>>,
    tol: f64,
    memo: Mutex<HashMap<Vec<u32>, f64>>,
    /// Nodes (mapped to [0,1]) and weights frozen at the resolution that met
    /// the tolerance for the normalizing integral.
    rule: Mutex<Option<(Vec<f64>, Vec<f64>, f64)>>,
}

impl SelectedOneLocus {
    pub fn new(model: MutationModel, sigma: Vec<Vec<f64>>, tol: f64) -> Result<Self> {
        if !model.is_pim() {
            return Err(Error::NotPim(
                "selected one-locus distribution needs parent-independent mutation".into(),
            ));
        }
        if model.k() != 2 {
            return Err(Error::Unsupported(format!(
                "selected-locus quadrature supports K = 2, got K = {}",
                model.k()
            )));
        }
        if sigma.len() != 2 || sigma.iter().any(|r| r.len() != 2) {
            return Err(Error::Invalid("sigma must be 2 x 2".into()));
        }
        if sigma[0][1] != sigma[1][0] {
            return Err(Error::Invalid("sigma must be symmetric".into()));
        }
        Ok(SelectedOneLocus {
            model,
            sigma,
            tol,
            memo: Mutex::new(HashMap::new()),
            rule: Mutex::new(None),
        })
    }

    pub fn model(&self) -> &MutationModel {
        &self.model
    }

    /// Smooth part of the integrand at frequency `x` of allele 0:
    /// `x^{n0} (1-x)^{n1} exp(0.5 sigma quadratic)`.
    fn smooth(&self, x: f64, n: &[u32]) -> f64 {
        let y = 1.0 - x;
        let s = &self.sigma;
        let quad = s[0][0] * x * x + 2.0 * s[0][1] * x * y + s[1][1] * y * y;
        x.powi(n[0] as i32) * y.powi(n[1] as i32) * (0.5 * quad).exp()
    }

    fn weighted_sum(&self, nodes: &[f64], weights: &[f64], n: &[u32]) -> f64 {
        nodes
            .iter()
            .zip(weights)
            .map(|(&x, &w)| w * self.smooth(x, n))
            .sum()
    }

    /// Build (or reuse) a quadrature rule fine enough that the normalizer is
    /// stable to the configured tolerance under node doubling, and return
    /// `(nodes, weights, normalizer)`.
    fn rule(&self) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        if let Some(r) = self.rule.lock().unwrap().clone() {
            return Ok(r);
        }
        let row = self.model.pim_row()?;
        let theta = crate::scalar::Scalar::to_f64_lossy(self.model.theta());
        let p0 = crate::scalar::Scalar::to_f64_lossy(&row[0]);
        let p1 = crate::scalar::Scalar::to_f64_lossy(&row[1]);
        // Jacobi weight (1-t)^alpha (1+t)^beta on [-1,1]; with t = 2x - 1 the
        // factor (1+t) carries the x-exponent and (1-t) the (1-x)-exponent.
        let alpha = theta * p1 - 1.0;
        let beta = theta * p0 - 1.0;
        let zero = vec![0u32, 0u32];
        let mut n_nodes = 20usize;
        let mut prev: Option<(Vec<f64>, Vec<f64>, f64)> = None;
        while n_nodes <= 5120 {
            let (t, w) = gauss_jacobi(n_nodes, alpha, beta);
            let nodes: Vec<f64> = t.iter().map(|&v| 0.5 * (v + 1.0)).collect();
            let norm = self.weighted_sum(&nodes, &w, &zero);
            if let Some((_, _, pn)) = &prev {
                if (norm - pn).abs() <= self.tol * norm.abs() {
                    let out = (nodes, w, norm);
                    *self.rule.lock().unwrap() = Some(out.clone());
                    return Ok(out);
                }
            }
            prev = Some((nodes, w, norm));
            n_nodes *= 2;
        }
        Err(Error::NonConvergence(format!(
            "selected-locus quadrature did not stabilize to {} within 5120 nodes",
            self.tol
        )))
    }

    /// Moment `E_s[prod X_i^{n_i}]` of the weighted Dirichlet distribution.
    pub fn q(&self, n: &[u32]) -> Result<f64> {
        if n.len() != 2 {
            return Err(Error::Invalid("config length must equal K = 2".into()));
        }
        if let Some(v) = self.memo.lock().unwrap().get(n) {
            return Ok(*v);
        }
        let (nodes, weights, norm) = self.rule()?;
        let v = self.weighted_sum(&nodes, &weights, n) / norm;
        self.memo.lock().unwrap().insert(n.to_vec(), v);
        Ok(v)
    }

    /// Size-one sampling distribution `phi` under selection.
    pub fn phi(&self) -> Result<Vec<f64>> {
        Ok(vec![self.q(&[1, 0])?, self.q(&[0, 1])?])
    }
}

/// Convenience wrappers matching the operation-level API.
pub fn q_selection_onelocus(
    n: &[u32],
    model: &MutationModel,
    sigma: &[Vec<f64>],
    tol: f64,
) -> Result<f64> {
    SelectedOneLocus::new(model.clone(), sigma.to_vec(), tol)?.q(n)
}

pub fn phi_selection(model: &MutationModel, sigma: &[Vec<f64>], tol: f64) -> Result<Vec<f64>> {
    SelectedOneLocus::new(model.clone(), sigma.to_vec(), tol)?.phi()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat;
    use num_traits::ToPrimitive;

    fn paper_model() -> MutationModel {
        MutationModel::symmetric_pim(rat(1, 100))
    }

    #[test]
    fn pim_closed_form_values() {
        let m = paper_model();
        assert_eq!(q_pim(&[1, 0], &m).unwrap(), rat(1, 2));
        // (theta P)_2 / (theta)_2 = (0.005 * 1.005)/(0.01 * 1.01) = 201/404
        assert_eq!(q_pim(&[2, 0], &m).unwrap(), rat(201, 404));
        assert_eq!(q_pim(&[0, 0], &m).unwrap(), rat(1, 1));
    }

    #[test]
    fn pim_rejects_general_model() {
        let skew = MutationModel::new(
            rat(1, 10),
            vec![vec![rat(1, 3), rat(2, 3)], vec![rat(3, 4), rat(1, 4)]],
        )
        .unwrap();
        assert!(q_pim(&[1, 0], &skew).is_err());
    }

    #[test]
    fn stationary_vectors() {
        let m = paper_model();
        assert_eq!(stationary_vector(&m).unwrap(), vec![rat(1, 2), rat(1, 2)]);

        let pim = MutationModel::pim(rat(1, 10), vec![rat(1, 4), rat(3, 4)]).unwrap();
        assert_eq!(stationary_vector(&pim).unwrap(), vec![rat(1, 4), rat(3, 4)]);

        // Random irreducible 3x3: verify pi P = pi by substitution.
        let p = vec![
            vec![rat(1, 2), rat(1, 4), rat(1, 4)],
            vec![rat(1, 3), rat(1, 3), rat(1, 3)],
            vec![rat(1, 6), rat(1, 6), rat(2, 3)],
        ];
        let m3 = MutationModel::new(rat(1, 10), p.clone()).unwrap();
        let pi = stationary_vector(&m3).unwrap();
        let total: Rational = pi.iter().sum();
        assert!(total.is_one());
        for j in 0..3 {
            let lhs: Rational = (0..3).map(|i| &pi[i] * &p[i][j]).sum();
            assert_eq!(lhs, pi[j]);
        }
    }

    #[test]
    fn general_solver_matches_pim_closed_form() {
        let m = paper_model();
        let solver = OneLocusSolver::new(m.clone()).unwrap();
        for total in 0..=6u32 {
            for cfg in compositions(total, 2) {
                assert_eq!(
                    solver.q(&cfg).unwrap(),
                    q_pim(&cfg, &m).unwrap(),
                    "config {cfg:?}"
                );
            }
        }
    }

    #[test]
    fn general_solver_boundary_is_stationary() {
        let p = vec![
            vec![rat(1, 2), rat(1, 2), rat(0, 1)],
            vec![rat(1, 4), rat(1, 2), rat(1, 4)],
            vec![rat(0, 1), rat(1, 2), rat(1, 2)],
        ];
        let m = MutationModel::new(rat(3, 100), p).unwrap();
        let solver = OneLocusSolver::new(m.clone()).unwrap();
        let pi = stationary_vector(&m).unwrap();
        assert_eq!(solver.q(&[1, 0, 0]).unwrap(), pi[0]);
        assert_eq!(solver.q(&[0, 1, 0]).unwrap(), pi[1]);
        assert_eq!(solver.q(&[0, 0, 1]).unwrap(), pi[2]);
    }

    #[test]
    fn ordered_draws_normalize() {
        // Sum over ordered draws of size s equals 1: with multiplicity, the
        // multinomially weighted sum over configurations.
        let p = vec![vec![rat(1, 3), rat(2, 3)], vec![rat(3, 5), rat(2, 5)]];
        let m = MutationModel::new(rat(7, 100), p).unwrap();
        let solver = OneLocusSolver::new(m).unwrap();
        for s in 1..=6u32 {
            let mut total = Rational::zero();
            for cfg in compositions(s, 2) {
                let w = Rational::from_integer(crate::model::multinomial(&cfg));
                total += w * solver.q(&cfg).unwrap();
            }
            assert!(total.is_one(), "size {s}: sum = {total}");
        }
    }

    #[test]
    fn monotone_consistency() {
        // q(n) = sum_i q(n + e_i): one more observation partitions probability.
        let m = paper_model();
        let solver = OneLocusSolver::new(m).unwrap();
        for s in 0..=5u32 {
            for cfg in compositions(s, 2) {
                let mut sum = Rational::zero();
                for i in 0..2 {
                    let mut up = cfg.clone();
                    up[i] += 1;
                    sum += solver.q(&up).unwrap();
                }
                assert_eq!(sum, solver.q(&cfg).unwrap());
            }
        }
    }

    #[test]
    fn ascending_factorial_cache_consistent() {
        let cache = AscFactorialCache::new();
        let z = rat(3, 7);
        assert_eq!(cache.get(&z, 5), ascending_factorial(&z, 5));
        assert_eq!(cache.get(&z, 3), ascending_factorial(&z, 3));
        assert_eq!(cache.get(&z, 8), ascending_factorial(&z, 8));
        assert_eq!(cache.get(&z, 0), Rational::one());
    }

    #[test]
    fn selection_neutral_reduction() {
        let m = paper_model();
        let sigma = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let sel = SelectedOneLocus::new(m.clone(), sigma, 1e-10).unwrap();
        for cfg in [[1u32, 0], [0, 1], [2, 0], [3, 2], [5, 5]] {
            let exact = q_pim(&cfg, &m).unwrap().to_f64().unwrap();
            let approx = sel.q(&cfg).unwrap();
            assert!(
                (exact - approx).abs() < 1e-10,
                "config {cfg:?}: {exact} vs {approx}"
            );
        }
    }

    #[test]
    fn selection_phi_sums_to_one_and_tilts() {
        let m = paper_model();
        let sigma = vec![vec![4.0, 0.0], vec![0.0, 0.0]];
        let sel = SelectedOneLocus::new(m.clone(), sigma, 1e-10).unwrap();
        let phi = sel.phi().unwrap();
        assert!((phi[0] + phi[1] - 1.0).abs() < 1e-9);
        // Homozygote advantage for allele 0 pushes its frequency up.
        assert!(phi[0] > 0.5, "phi = {phi:?}");
    }

    #[test]
    fn selection_matches_product_integration_oracle() {
        // Independent oracle: composite product-integration on a uniform grid.
        // On each cell the singular Dirichlet weight x^(tp-1)(1-x)^(tp-1) is
        // integrated exactly against a midpoint value of the smooth factor.
        let m = paper_model();
        let s = 0.3f64;
        let sigma = vec![vec![s, 0.0], vec![0.0, 0.0]];
        let sel = SelectedOneLocus::new(m.clone(), sigma.clone(), 1e-12).unwrap();

        let tp = 0.005f64; // theta * P_i
        let cells = 100_000usize;
        let integrate = |n0: i32, n1: i32| -> f64 {
            // Per cell, integrate the singular power of the nearest endpoint
            // together with its monomial exactly, and evaluate the remaining
            // smooth factor at the weighted centroid of that cell mass.
            // Splitting at x = 1/2 keeps each singularity on its own side.
            let h = 1.0 / cells as f64;
            let mut acc = 0.0;
            for c in 0..cells {
                let lo = c as f64 * h;
                let hi = lo + h;
                let contrib = if hi <= 0.5 {
                    let e = tp + n0 as f64;
                    let mass = (hi.powf(e) - lo.powf(e)) / e;
                    let cen = (hi.powf(e + 1.0) - lo.powf(e + 1.0)) / (e + 1.0) / mass;
                    mass * (1.0 - cen).powf(tp - 1.0 + n1 as f64)
                        * (0.5 * s * cen * cen).exp()
                } else {
                    let e = tp + n1 as f64;
                    let mass = ((1.0 - lo).powf(e) - (1.0 - hi).powf(e)) / e;
                    let cen = 1.0
                        - ((1.0 - lo).powf(e + 1.0) - (1.0 - hi).powf(e + 1.0)) / (e + 1.0)
                            / mass;
                    mass * cen.powf(tp - 1.0 + n0 as f64) * (0.5 * s * cen * cen).exp()
                };
                acc += contrib;
            }
            acc
        };
        let norm = integrate(0, 0);
        for (n0, n1) in [(2i32, 0i32), (1, 1), (3, 1)] {
            let oracle = integrate(n0, n1) / norm;
            let got = sel.q(&[n0 as u32, n1 as u32]).unwrap();
            assert!(
                (oracle - got).abs() < 1e-6,
                "({n0},{n1}): oracle {oracle} vs quadrature {got}"
            );
        }
    }

    #[test]
    fn selection_moment_series_oracle() {
        // Second independent oracle: expand exp(0.5 sigma_00 x^2) as a power
        // series; each term is an exact Dirichlet moment, computable from
        // ascending factorials. Converges fast for moderate sigma.
        let m = paper_model();
        let s = 0.5f64;
        let sigma = vec![vec![s, 0.0], vec![0.0, 0.0]];
        let sel = SelectedOneLocus::new(m.clone(), sigma, 1e-12).unwrap();

        // Dirichlet moment E[x^j] with params (0.005, 0.005):
        let tp = rat(1, 200);
        let theta = rat(1, 100);
        let dirichlet_moment = |j: u32| -> f64 {
            (ascending_factorial(&tp, j) / ascending_factorial(&theta, j))
                .to_f64()
                .unwrap()
        };
        let series = |extra: u32| -> f64 {
            // E[x^extra exp(0.5 s x^2)] = sum_t (0.5 s)^t / t! E[x^(2t+extra)]
            let mut acc = 0.0;
            let mut coef = 1.0f64;
            for t in 0..40u32 {
                if t > 0 {
                    coef *= 0.5 * s / t as f64;
                }
                acc += coef * dirichlet_moment(2 * t + extra);
            }
            acc
        };
        let norm = series(0);
        for extra in [1u32, 2, 4] {
            let oracle = series(extra) / norm;
            let got = sel.q(&[extra, 0]).unwrap();
            assert!(
                (oracle - got).abs() < 1e-9,
                "x^{extra}: oracle {oracle} vs quadrature {got}"
            );
        }
    }

    #[test]
    fn selection_rejects_unsupported_dimension() {
        let m3 = MutationModel::pim(rat(1, 10), vec![rat(1, 3), rat(1, 3), rat(1, 3)]).unwrap();
        let sigma = vec![vec![0.0; 3]; 3];
        assert!(matches!(
            SelectedOneLocus::new(m3, sigma, 1e-10),
            Err(Error::Unsupported(_))
        ));
    }
}
