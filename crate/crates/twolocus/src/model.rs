//! Domain types shared by every other module: sample configurations,
//! mutation models, subsample matrices and canonical encodings.

use crate::error::{Error, Result};
use crate::Rational;
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

/// A two-locus sample configuration `(a, b, c)`.
///
/// `a[i]` counts gametes typed only at locus A carrying allele `i`,
/// `b[j]` counts gametes typed only at locus B carrying allele `j`, and
/// `c[i][j]` counts gametes typed at both loci. Totals and marginals are
/// always recomputed from the stored counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SampleConfig {
    a: Vec<u32>,
    b: Vec<u32>,
    c: Vec<Vec<u32>>,
}

impl SampleConfig {
    pub fn new(a: Vec<u32>, b: Vec<u32>, c: Vec<Vec<u32>>) -> Result<Self> {
        let k = a.len();
        let l = b.len();
        if k == 0 || l == 0 {
            return Err(Error::Invalid("K and L must be at least 1".into()));
        }
        if c.len() != k {
            return Err(Error::Invalid(format!(
                "c has {} rows but a has {} entries",
                c.len(),
                k
            )));
        }
        for row in &c {
            if row.len() != l {
                return Err(Error::Invalid(format!(
                    "c row has {} entries but b has {}",
                    row.len(),
                    l
                )));
            }
        }
        Ok(SampleConfig { a, b, c })
    }

    /// Sample with only doubly-typed gametes: `(0, 0, c)`.
    pub fn from_c(c: Vec<Vec<u32>>) -> Result<Self> {
        let k = c.len();
        let l = c.first().map(|r| r.len()).unwrap_or(0);
        Self::new(vec![0; k], vec![0; l], c)
    }

    pub fn a(&self) -> &[u32] {
        &self.a
    }

    pub fn b(&self) -> &[u32] {
        &self.b
    }

    pub fn c(&self) -> &[Vec<u32>] {
        &self.c
    }

    pub fn k(&self) -> usize {
        self.a.len()
    }

    pub fn l(&self) -> usize {
        self.b.len()
    }

    pub fn a_total(&self) -> u32 {
        self.a.iter().sum()
    }

    pub fn b_total(&self) -> u32 {
        self.b.iter().sum()
    }

    pub fn c_total(&self) -> u32 {
        self.c.iter().flatten().sum()
    }

    pub fn n(&self) -> u32 {
        self.a_total() + self.b_total() + self.c_total()
    }

    /// Length `delta = a + b + 2c`; the exact linear system is block
    /// triangular in this quantity.
    pub fn length(&self) -> u32 {
        self.a_total() + self.b_total() + 2 * self.c_total()
    }

    /// Row sums of `c`.
    pub fn c_row_sums(&self) -> Vec<u32> {
        self.c.iter().map(|row| row.iter().sum()).collect()
    }

    /// Column sums of `c`.
    pub fn c_col_sums(&self) -> Vec<u32> {
        let l = self.l();
        let mut out = vec![0u32; l];
        for row in &self.c {
            for (j, v) in row.iter().enumerate() {
                out[j] += v;
            }
        }
        out
    }

    /// Swap the roles of the two loci (transpose `c`, exchange `a` and `b`).
    pub fn transposed(&self) -> SampleConfig {
        let k = self.k();
        let l = self.l();
        let mut ct = vec![vec![0u32; k]; l];
        for i in 0..k {
            for j in 0..l {
                ct[j][i] = self.c[i][j];
            }
        }
        SampleConfig {
            a: self.b.clone(),
            b: self.a.clone(),
            c: ct,
        }
    }
}

/// Injective, deterministic byte encoding of a configuration.
///
/// Layout: version byte `0x01`, then `K`, `L`, the entries of `a`, `b` and
/// row-major `c`, each as an unsigned LEB128 varint.
pub fn canonical_key(cfg: &SampleConfig) -> Vec<u8> {
    let mut out = vec![0x01u8];
    write_varint(&mut out, cfg.k() as u64);
    write_varint(&mut out, cfg.l() as u64);
    for &v in cfg.a() {
        write_varint(&mut out, v as u64);
    }
    for &v in cfg.b() {
        write_varint(&mut out, v as u64);
    }
    for row in cfg.c() {
        for &v in row {
            write_varint(&mut out, v as u64);
        }
    }
    out
}

/// Inverse of [`canonical_key`]; mainly a test oracle and used by table
/// readers.
pub fn decode_key(bytes: &[u8]) -> Result<SampleConfig> {
    let mut pos = 0usize;
    if bytes.first() != Some(&0x01) {
        return Err(Error::Invalid("unknown key version".into()));
    }
    pos += 1;
    let k = read_varint(bytes, &mut pos)? as usize;
    let l = read_varint(bytes, &mut pos)? as usize;
    if k == 0 || l == 0 || k > 1024 || l > 1024 {
        return Err(Error::Invalid("implausible K or L in key".into()));
    }
    let mut a = Vec::with_capacity(k);
    for _ in 0..k {
        a.push(read_varint(bytes, &mut pos)? as u32);
    }
    let mut b = Vec::with_capacity(l);
    for _ in 0..l {
        b.push(read_varint(bytes, &mut pos)? as u32);
    }
    let mut c = vec![vec![0u32; l]; k];
    for row in c.iter_mut() {
        for v in row.iter_mut() {
            *v = read_varint(bytes, &mut pos)? as u32;
        }
    }
    if pos != bytes.len() {
        return Err(Error::Invalid("trailing bytes in key".into()));
    }
    SampleConfig::new(a, b, c)
}

fn write_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

fn read_varint(bytes: &[u8], pos: &mut usize) -> Result<u64> {
    let mut v = 0u64;
    let mut shift = 0u32;
    loop {
        let byte = *bytes
            .get(*pos)
            .ok_or_else(|| Error::Invalid("truncated varint".into()))?;
        *pos += 1;
        v |= ((byte & 0x7f) as u64) << shift;
        if byte & 0x80 == 0 {
            return Ok(v);
        }
        shift += 7;
        if shift >= 64 {
            return Err(Error::Invalid("varint overflow".into()));
        }
    }
}

/// Finite-alleles mutation model at one locus: rate `theta` and row-stochastic
/// transition matrix `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct MutationModel {
    theta: Rational,
    p: Vec<Vec<Rational>>,
    pim: bool,
    irreducible: bool,
}

impl MutationModel {
    pub fn new(theta: Rational, p: Vec<Vec<Rational>>) -> Result<Self> {
        if !theta.is_positive() {
            return Err(Error::Invalid("theta must be positive".into()));
        }
        let k = p.len();
        if k == 0 {
            return Err(Error::Invalid("P must have at least one row".into()));
        }
        for row in &p {
            if row.len() != k {
                return Err(Error::Invalid("P must be square".into()));
            }
            let mut sum = Rational::zero();
            for v in row {
                if v.is_negative() || v > &Rational::one() {
                    return Err(Error::Invalid("P entries must lie in [0,1]".into()));
                }
                sum += v;
            }
            if !sum.is_one() {
                return Err(Error::Invalid("each row of P must sum exactly to 1".into()));
            }
        }
        let pim = p.windows(2).all(|w| w[0] == w[1]);
        let irreducible = check_irreducible(&p);
        Ok(MutationModel {
            theta,
            p,
            pim,
            irreducible,
        })
    }

    /// Parent-independent model: every row equals `dist`.
    pub fn pim(theta: Rational, dist: Vec<Rational>) -> Result<Self> {
        let k = dist.len();
        Self::new(theta, vec![dist; k])
    }

    /// The symmetric two-allele parent-independent model used throughout the
    /// empirical results: uniform `P`, configurable `theta`.
    pub fn symmetric_pim(theta: Rational) -> Self {
        let half = Rational::new(BigInt::one(), BigInt::from(2));
        Self::pim(theta, vec![half.clone(), half]).expect("valid by construction")
    }

    pub fn k(&self) -> usize {
        self.p.len()
    }

    pub fn theta(&self) -> &Rational {
        &self.theta
    }

    pub fn p(&self) -> &[Vec<Rational>] {
        &self.p
    }

    /// True when all rows of `P` are identical (parent-independent mutation).
    pub fn is_pim(&self) -> bool {
        self.pim
    }

    pub fn is_irreducible(&self) -> bool {
        self.irreducible
    }

    /// The common row of a PIM model.
    pub fn pim_row(&self) -> Result<&[Rational]> {
        if self.pim {
            Ok(&self.p[0])
        } else {
            Err(Error::NotPim("transition rows differ".into()))
        }
    }
}

/// Irreducibility of the directed graph of positive transition entries,
/// by breadth-first search from state 0 in both directions.
fn check_irreducible(p: &[Vec<Rational>]) -> bool {
    let k = p.len();
    let reach = |forward: bool| -> usize {
        let mut seen = vec![false; k];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(s) = stack.pop() {
            for t in 0..k {
                let edge = if forward { &p[s][t] } else { &p[t][s] };
                if !edge.is_zero() && !seen[t] {
                    seen[t] = true;
                    stack.push(t);
                }
            }
        }
        seen.iter().filter(|&&x| x).count()
    };
    reach(true) == k && reach(false) == k
}

/// Full parameter set: mutation models at both loci plus an optional
/// symmetric diploid selection matrix at locus A. The recombination rate is
/// deliberately not a field; it is an evaluation-time argument everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub locus_a: MutationModel,
    pub locus_b: MutationModel,
    pub selection: Option<Vec<Vec<f64>>>,
}

impl ModelParams {
    pub fn neutral(locus_a: MutationModel, locus_b: MutationModel) -> Self {
        ModelParams {
            locus_a,
            locus_b,
            selection: None,
        }
    }

    pub fn with_selection(
        locus_a: MutationModel,
        locus_b: MutationModel,
        sigma: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let k = locus_a.k();
        if sigma.len() != k || sigma.iter().any(|r| r.len() != k) {
            return Err(Error::Invalid("sigma must be K x K".into()));
        }
        for i in 0..k {
            for j in 0..k {
                if !sigma[i][j].is_finite() {
                    return Err(Error::Invalid("sigma entries must be finite".into()));
                }
                if sigma[i][j] != sigma[j][i] {
                    return Err(Error::Invalid("sigma must be symmetric".into()));
                }
            }
        }
        Ok(ModelParams {
            locus_a,
            locus_b,
            selection: Some(sigma),
        })
    }

    /// Symmetric two-allele PIM model at both loci with theta = 1/100,
    /// the default parameterization of the empirical study.
    pub fn paper_pim() -> Self {
        let theta = Rational::new(BigInt::one(), BigInt::from(100));
        ModelParams::neutral(
            MutationModel::symmetric_pim(theta.clone()),
            MutationModel::symmetric_pim(theta),
        )
    }
}

/// A K x L matrix of nonnegative integers with recorded total `m`; used for
/// the subsample matrices `r` appearing in the expansion.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RMatrix {
    r: Vec<Vec<u32>>,
    m: u32,
}

impl RMatrix {
    pub fn new(r: Vec<Vec<u32>>) -> Result<Self> {
        if r.is_empty() || r.iter().any(|row| row.len() != r[0].len()) {
            return Err(Error::Invalid("r must be a nonempty rectangle".into()));
        }
        let m = r.iter().flatten().sum();
        Ok(RMatrix { r, m })
    }

    pub fn zero(k: usize, l: usize) -> Self {
        RMatrix {
            r: vec![vec![0; l]; k],
            m: 0,
        }
    }

    pub fn r(&self) -> &[Vec<u32>] {
        &self.r
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn row_sums(&self) -> Vec<u32> {
        self.r.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u32> {
        let l = self.r[0].len();
        let mut out = vec![0u32; l];
        for row in &self.r {
            for (j, v) in row.iter().enumerate() {
                out[j] += v;
            }
        }
        out
    }

    /// True when `self` is an elementwise subsample of `c`.
    pub fn is_subsample_of(&self, c: &[Vec<u32>]) -> bool {
        self.r
            .iter()
            .zip(c)
            .all(|(rr, cr)| rr.iter().zip(cr).all(|(&r, &c)| r <= c))
    }
}

/// All elementwise subsamples `r` of `c` with total `m`, in row-major
/// lexicographic order of the flattened entries (first cell varies slowest,
/// counts ascending).
pub fn enumerate_subsamples(c: &[Vec<u32>], m: u32) -> Vec<RMatrix> {
    let cells: Vec<u32> = c.iter().flatten().copied().collect();
    let l = c[0].len();
    let mut out = Vec::new();
    let mut cur = vec![0u32; cells.len()];
    fill_subsamples(&cells, m, 0, &mut cur, &mut out);
    out.into_iter()
        .map(|flat| {
            let r: Vec<Vec<u32>> = flat.chunks(l).map(|ch| ch.to_vec()).collect();
            RMatrix::new(r).expect("rectangular by construction")
        })
        .collect()
}

fn fill_subsamples(
    cells: &[u32],
    remaining: u32,
    idx: usize,
    cur: &mut Vec<u32>,
    out: &mut Vec<Vec<u32>>,
) {
    if idx == cells.len() {
        if remaining == 0 {
            out.push(cur.clone());
        }
        return;
    }
    // Prune: the rest of the cells cannot absorb more than their capacity.
    let tail_cap: u32 = cells[idx..].iter().sum();
    if remaining > tail_cap {
        return;
    }
    let hi = remaining.min(cells[idx]);
    for v in 0..=hi {
        cur[idx] = v;
        fill_subsamples(cells, remaining - v, idx + 1, cur, out);
    }
    cur[idx] = 0;
}

/// All K x L count matrices with total `n`, in the same row-major
/// lexicographic order as [`enumerate_subsamples`].
pub fn enumerate_c_matrices(n: u32, k: usize, l: usize) -> Vec<Vec<Vec<u32>>> {
    // A matrix with total n is a subsample of the saturated matrix.
    let full = vec![vec![n; l]; k];
    enumerate_subsamples(&full, n)
        .into_iter()
        .map(|r| r.r().to_vec())
        .collect()
}

/// Samples of the form `(0, 0, c)` with total `n`, optionally restricted to
/// those dimorphic at both loci.
pub fn enumerate_samples(n: u32, k: usize, l: usize, dimorphic_only: bool) -> Vec<SampleConfig> {
    enumerate_c_matrices(n, k, l)
        .into_iter()
        .filter(|c| !dimorphic_only || is_dimorphic(c))
        .map(|c| SampleConfig::from_c(c).expect("valid by construction"))
        .collect()
}

/// All sample configurations `(a, b, c)` with `a + b + c = n` gametes.
pub fn enumerate_all_samples(n: u32, k: usize, l: usize) -> Vec<SampleConfig> {
    let mut out = Vec::new();
    for ct in 0..=n {
        for at in 0..=(n - ct) {
            let bt = n - ct - at;
            for c in enumerate_c_matrices(ct, k, l) {
                for a in crate::onelocus::compositions(at, k) {
                    for b in crate::onelocus::compositions(bt, l) {
                        out.push(
                            SampleConfig::new(a.clone(), b, c.clone())
                                .expect("valid by construction"),
                        );
                    }
                }
            }
        }
    }
    out
}

/// All sample configurations with length `a + b + 2c` equal to `delta`.
pub fn enumerate_samples_of_length(delta: u32, k: usize, l: usize) -> Vec<SampleConfig> {
    let mut out = Vec::new();
    for ct in 0..=(delta / 2) {
        let rest = delta - 2 * ct;
        for at in 0..=rest {
            let bt = rest - at;
            for c in enumerate_c_matrices(ct, k, l) {
                for a in crate::onelocus::compositions(at, k) {
                    for b in crate::onelocus::compositions(bt, l) {
                        out.push(
                            SampleConfig::new(a.clone(), b, c.clone())
                                .expect("valid by construction"),
                        );
                    }
                }
            }
        }
    }
    out
}

/// A `c` matrix is dimorphic at both loci when every row sum and every column
/// sum is positive (all alleles observed at both loci).
pub fn is_dimorphic(c: &[Vec<u32>]) -> bool {
    let l = c[0].len();
    let rows_ok = c.iter().all(|row| row.iter().sum::<u32>() > 0);
    let cols_ok = (0..l).all(|j| c.iter().map(|row| row[j]).sum::<u32>() > 0);
    rows_ok && cols_ok
}

/// Binomial coefficient `n choose k` (zero when `k > n`).
pub fn binomial(n: u32, k: u32) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut out = BigInt::one();
    for s in 1..=k {
        out = out * BigInt::from(n - k + s) / BigInt::from(s);
    }
    out
}

/// Multinomial coefficient `n! / prod(parts_i!)` for the entries of a count
/// matrix; converts an ordered sampling probability to an unordered one.
pub fn multinomial(parts: &[u32]) -> BigInt {
    let mut out = BigInt::one();
    let mut total = 0u32;
    for &p in parts {
        // Multiply binomial(total + p, p) incrementally.
        for s in 1..=p {
            total += 1;
            out = out * BigInt::from(total) / BigInt::from(s);
        }
    }
    out
}
