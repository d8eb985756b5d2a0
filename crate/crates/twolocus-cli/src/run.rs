//! Command implementations: each builds a result table (or a line-delimited
//! JSON artifact for the coefficient store) from parsed arguments.

use crate::emit::{Field, Table};
use crate::spec::{render_rational, render_sample};
use num_traits::ToPrimitive;
use rayon::prelude::*;
use std::collections::BTreeMap;
use twolocus::error::{Error, Result};
use twolocus::exact::{ExactNumeric, ExactRational};
use twolocus::expansion::{otr_truncate, partial_sum, ApproxG0, Engine};
use twolocus::model::{canonical_key, enumerate_all_samples, multinomial, ModelParams, SampleConfig};
use twolocus::pade::{select_nondefective, PadeApprox, Rho};
use twolocus::selection::{selected_engine, selection_coefficients};
use twolocus::Rational;

/// Quadrature tolerance for the selected one-locus distribution.
const SELECTION_TOL: f64 = 1e-10;
/// Jacobi sweep tolerance and budget for the floating-point exact solver.
const NUMERIC_TOL: f64 = 1e-13;
const NUMERIC_SWEEPS: usize = 1_000_000;
/// Version tag for the coefficient store format.
pub const TABLE_FORMAT_VERSION: u32 = 1;

/// Parse the `--approx-g0` flag value.
pub fn parse_approx(s: &str) -> Result<ApproxG0> {
    match s {
        "on" => Ok(ApproxG0::On),
        "off" => Ok(ApproxG0::Off),
        "auto" => Ok(ApproxG0::Auto),
        other => Err(Error::Invalid(format!(
            "bad --approx-g0 value `{other}` (on, off, or auto)"
        ))),
    }
}

/// A curve method: partial sum, optimal truncation, Pade resummation with
/// the defect heuristic, or the exact solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ps(u32),
    Otr(u32),
    Pade(u32),
    Exact,
}

impl Method {
    pub fn parse(s: &str) -> Result<Method> {
        let bad = || Error::Invalid(format!("bad method `{s}` (ps:M, otr:M, pade:M, exact)"));
        if s == "exact" {
            return Ok(Method::Exact);
        }
        let (name, order) = s.split_once(':').ok_or_else(bad)?;
        let m: u32 = order.parse().map_err(|_| bad())?;
        match name {
            "ps" => Ok(Method::Ps(m)),
            "otr" => Ok(Method::Otr(m)),
            "pade" => Ok(Method::Pade(m)),
            _ => Err(bad()),
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        let items: Vec<&str> = s.split(',').filter(|t| !t.trim().is_empty()).collect();
        if items.is_empty() {
            return Err(Error::Invalid("empty methods list".into()));
        }
        items.iter().map(|t| Method::parse(t.trim())).collect()
    }

    pub fn tag(&self) -> String {
        match self {
            Method::Ps(m) => format!("ps:{m}"),
            Method::Otr(m) => format!("otr:{m}"),
            Method::Pade(m) => format!("pade:{m}"),
            Method::Exact => "exact".into(),
        }
    }

    fn order(&self) -> u32 {
        match self {
            Method::Ps(m) | Method::Otr(m) | Method::Pade(m) => *m,
            Method::Exact => 0,
        }
    }
}

fn rho_string(rho: &Rho) -> String {
    match rho {
        Rho::Finite(r) => render_rational(r),
        Rho::Infinity => "inf".into(),
    }
}

fn key_hex(sample: &SampleConfig) -> String {
    canonical_key(sample)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Expansion coefficients of one sample, exact when neutral and floating
/// point under selection.
enum Coeffs {
    Exact(Vec<Rational>),
    Float(Vec<f64>),
}

impl Coeffs {
    fn f64s(&self) -> Vec<f64> {
        match self {
            Coeffs::Exact(v) => v.iter().map(|c| c.to_f64().unwrap_or(f64::NAN)).collect(),
            Coeffs::Float(v) => v.clone(),
        }
    }

    fn rationals(&self) -> Vec<Rational> {
        match self {
            Coeffs::Exact(v) => v.clone(),
            // Floating-point coefficients lift exactly: every finite f64 is
            // rational.
            Coeffs::Float(v) => v
                .iter()
                .map(|c| Rational::from_float(*c).unwrap_or_else(|| Rational::from_integer(0.into())))
                .collect(),
        }
    }
}

fn compute_coeffs(
    params: &ModelParams,
    sample: &SampleConfig,
    big_m: u32,
    approx: ApproxG0,
) -> Result<Coeffs> {
    if params.selection.is_some() {
        let horizon = sample.a_total() + sample.c_total() + 2 * big_m + 2;
        let mut engine = selected_engine(params, SELECTION_TOL, horizon)?;
        engine.set_approx_g0(approx.resolve(sample.n()));
        Ok(Coeffs::Float(selection_coefficients(&engine, sample, big_m)?))
    } else {
        let mut engine = Engine::neutral(params)?;
        engine.set_approx_g0(approx.resolve(sample.n()));
        Ok(Coeffs::Exact(
            (0..=big_m)
                .map(|m| engine.coefficient(m, sample))
                .collect::<Result<_>>()?,
        ))
    }
}

/// `coeffs` command: q_0..q_M for one sample or for every sample of size n.
pub fn cmd_coeffs(
    params: &ModelParams,
    samples: &[SampleConfig],
    big_m: u32,
    approx: ApproxG0,
) -> Result<Table> {
    let mut sorted: Vec<&SampleConfig> = samples.iter().collect();
    sorted.sort_by_key(|s| canonical_key(s));
    let mut table = Table::new(vec!["sample", "key", "order", "coeff", "value"]);
    let computed: Vec<Result<Coeffs>> = if params.selection.is_some() {
        // The quadrature engine is rebuilt per sample; keep it sequential.
        sorted
            .iter()
            .map(|s| compute_coeffs(params, s, big_m, approx))
            .collect()
    } else {
        sorted
            .par_iter()
            .map(|s| compute_coeffs(params, s, big_m, approx))
            .collect()
    };
    for (sample, coeffs) in sorted.iter().zip(computed) {
        let coeffs = coeffs?;
        let exact: Vec<Option<String>> = match &coeffs {
            Coeffs::Exact(v) => v.iter().map(|c| Some(render_rational(c))).collect(),
            Coeffs::Float(v) => v.iter().map(|_| None).collect(),
        };
        for (order, (f, e)) in coeffs.f64s().iter().zip(exact).enumerate() {
            table.push(vec![
                Field::Str(render_sample(sample)),
                Field::Str(key_hex(sample)),
                Field::Int(order as u64),
                e.map(Field::Str).unwrap_or(Field::Null),
                Field::Num(*f),
            ]);
        }
    }
    Ok(table)
}

/// Evaluate one method at one rate, returning `(value, diagnostics)`;
/// a pole yields no value and a diagnostic instead.
fn eval_method(
    method: &Method,
    coeffs: &Coeffs,
    rho: &Rho,
    eps: &Rational,
    exact: &mut Option<ExactNumeric>,
    sample: &SampleConfig,
    q0: f64,
) -> Result<(Option<f64>, String)> {
    match method {
        Method::Exact => match rho {
            Rho::Infinity => Ok((Some(q0), String::new())),
            Rho::Finite(_) => {
                let solver = exact
                    .as_mut()
                    .expect("exact solver prepared for finite rates");
                Ok((Some(solver.q(sample)?), String::new()))
            }
        },
        Method::Ps(m) => {
            let cs = coeffs.f64s();
            let m = (*m as usize).min(cs.len() - 1);
            match rho {
                Rho::Infinity => Ok((Some(cs[0]), String::new())),
                Rho::Finite(r) => Ok((
                    Some(partial_sum(&cs[..=m], r.to_f64().unwrap_or(f64::NAN))?),
                    String::new(),
                )),
            }
        }
        Method::Otr(m) => {
            let cs = coeffs.f64s();
            let m = (*m as usize).min(cs.len() - 1);
            match rho {
                Rho::Infinity => Ok((Some(cs[0]), "truncated_at=0".into())),
                Rho::Finite(r) => {
                    let (at, v) = otr_truncate(&cs[..=m], r.to_f64().unwrap_or(f64::NAN))?;
                    Ok((Some(v), format!("truncated_at={at}")))
                }
            }
        }
        Method::Pade(m) => {
            let cs = coeffs.rationals();
            let m = (*m as usize).min(cs.len() - 1);
            match rho {
                Rho::Infinity => {
                    let approx = PadeApprox::staircase(&cs[..=m], m)?;
                    let (u, v) = approx.degrees();
                    Ok((
                        Some(approx.evaluate(&Rho::Infinity)?.to_f64().unwrap_or(f64::NAN)),
                        format!("degrees=[{u}/{v}]"),
                    ))
                }
                Rho::Finite(r) => {
                    let (picked, approx) = select_nondefective(&cs[..=m], r, eps)?;
                    let (u, v) = approx.degrees();
                    let mut diag = format!("degrees=[{u}/{v}]");
                    if picked < m {
                        diag.push_str(&format!(";stepped_down_from={m}"));
                    }
                    match approx.evaluate(rho) {
                        Ok(val) => Ok((Some(val.to_f64().unwrap_or(f64::NAN)), diag)),
                        Err(Error::Pole { .. }) => {
                            diag.push_str(";pole");
                            Ok((None, diag))
                        }
                        Err(e) => Err(e),
                    }
                }
            }
        }
    }
}

/// `curve` command: one row per (rate, method).
pub fn cmd_curve(
    params: &ModelParams,
    sample: &SampleConfig,
    rhos: &[Rho],
    methods: &[Method],
    eps: &Rational,
    approx: ApproxG0,
) -> Result<Table> {
    let big_m = methods.iter().map(Method::order).max().unwrap_or(0);
    let needs_series = methods.iter().any(|m| !matches!(m, Method::Exact));
    let coeffs = if needs_series {
        compute_coeffs(params, sample, big_m, approx)?
    } else {
        Coeffs::Exact(Vec::new())
    };
    let needs_exact = methods.iter().any(|m| matches!(m, Method::Exact));
    let q0 = if needs_exact {
        let engine = Engine::neutral(params)?;
        engine
            .coefficient(0, sample)?
            .to_f64()
            .unwrap_or(f64::NAN)
    } else {
        0.0
    };
    let mut table = Table::new(vec!["rho", "method", "value", "diagnostics"]);
    for rho in rhos {
        // The exact solver builds one state space per rate; share it across
        // methods at that rate.
        let mut exact = match (needs_exact, rho) {
            (true, Rho::Finite(r)) => Some(ExactNumeric::new(
                params,
                r.to_f64().ok_or_else(|| {
                    Error::Invalid("rho too large for the numeric solver".into())
                })?,
                NUMERIC_TOL,
                NUMERIC_SWEEPS,
            )?),
            _ => None,
        };
        for method in methods {
            let (value, diag) =
                eval_method(method, &coeffs, rho, eps, &mut exact, sample, q0)?;
            table.push(vec![
                Field::Str(rho_string(rho)),
                Field::Str(method.tag()),
                value.map(Field::Num).unwrap_or(Field::Null),
                if diag.is_empty() { Field::Null } else { Field::Str(diag) },
            ]);
        }
    }
    Ok(table)
}

/// Thresholds (in percent) tabulated by the error study.
pub const PHI_THRESHOLDS: [u32; 6] = [1, 5, 10, 25, 50, 100];

/// `error-study` command: cumulative error distribution Phi(x) over all
/// samples of size n dimorphic at both loci, weighted by exact sampling
/// probability, for each requested truncation order.
pub fn cmd_error_study(
    params: &ModelParams,
    n: u32,
    rho: &Rational,
    orders: &[u32],
    eps: &Rational,
    approx: ApproxG0,
) -> Result<Table> {
    if params.selection.is_some() {
        return Err(Error::Unsupported(
            "the error study uses the neutral exact solver".into(),
        ));
    }
    let samples = twolocus::model::enumerate_samples(n, params.locus_a.k(), params.locus_b.k(), true);
    if samples.is_empty() {
        return Err(Error::Invalid(format!(
            "no dimorphic samples of size {n}"
        )));
    }
    let rho_f = rho
        .to_f64()
        .ok_or_else(|| Error::Invalid("rho too large for the numeric solver".into()))?;
    let mut solver = ExactNumeric::new(params, rho_f, NUMERIC_TOL, NUMERIC_SWEEPS)?;
    solver.solve_rectangle(n, n)?;
    let exact: Vec<f64> = samples
        .iter()
        .map(|s| solver.q(s))
        .collect::<Result<_>>()?;

    // Sampling-probability weights over the enumerated (ordered-config)
    // family: multinomial multiplicity times the exact probability.
    let weights: Vec<f64> = samples
        .iter()
        .zip(&exact)
        .map(|(s, q)| {
            let counts: Vec<u32> = s.c().iter().flatten().copied().collect();
            multinomial(&counts).to_f64().unwrap_or(f64::NAN) * q
        })
        .collect();
    let total_w: f64 = weights.iter().sum();

    let max_order = orders.iter().copied().max().unwrap_or(0);
    let engine = {
        let mut e = Engine::neutral(params)?;
        e.set_approx_g0(approx.resolve(n));
        e
    };
    let all_coeffs: Vec<Vec<Rational>> = samples
        .par_iter()
        .map(|s| {
            (0..=max_order)
                .map(|m| engine.coefficient(m, s))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(vec![
        "method", "phi_1", "phi_5", "phi_10", "phi_25", "phi_50", "phi_100",
    ]);
    for &order in orders {
        let mut mass = [0.0f64; PHI_THRESHOLDS.len()];
        for ((coeffs, q), w) in all_coeffs.iter().zip(&exact).zip(&weights) {
            // Unsigned relative error in percent; an unusable approximant
            // counts as an arbitrarily large error.
            let err_pct = match select_nondefective(&coeffs[..=order as usize], rho, eps) {
                Ok((_, approx)) => match approx.evaluate(&Rho::Finite(rho.clone())) {
                    Ok(v) => {
                        let v = v.to_f64().unwrap_or(f64::NAN);
                        100.0 * ((v - q) / q).abs()
                    }
                    Err(_) => f64::INFINITY,
                },
                Err(_) => f64::INFINITY,
            };
            for (slot, x) in mass.iter_mut().zip(PHI_THRESHOLDS) {
                if err_pct < x as f64 {
                    *slot += w;
                }
            }
        }
        let mut row = vec![Field::Str(format!("pade:{order}"))];
        row.extend(mass.iter().map(|m| Field::Num(m / total_w)));
        table.push(row);
    }
    Ok(table)
}

/// Header record of the coefficient store.
fn table_header(params: &ModelParams, big_m: u32, approx_on: bool) -> serde_json::Value {
    let rows = |m: &twolocus::model::MutationModel| -> Vec<Vec<String>> {
        m.p()
            .iter()
            .map(|row| row.iter().map(render_rational).collect())
            .collect()
    };
    serde_json::json!({
        "record": "header",
        "format_version": TABLE_FORMAT_VERSION,
        "k": params.locus_a.k(),
        "l": params.locus_b.k(),
        "theta_a": render_rational(params.locus_a.theta()),
        "theta_b": render_rational(params.locus_b.theta()),
        "p_a": rows(&params.locus_a),
        "p_b": rows(&params.locus_b),
        "approx_g0": approx_on,
        "m_max": big_m,
    })
}

/// `table` command: line-delimited JSON coefficient store for every sample
/// of size 1..=n_max, sorted by canonical key.
pub fn cmd_table(
    params: &ModelParams,
    n_max: u32,
    big_m: u32,
    approx: ApproxG0,
) -> Result<String> {
    if params.selection.is_some() {
        return Err(Error::Unsupported(
            "the coefficient store holds exact neutral values".into(),
        ));
    }
    let mut samples: Vec<SampleConfig> = (1..=n_max)
        .flat_map(|n| enumerate_all_samples(n, params.locus_a.k(), params.locus_b.k()))
        .collect();
    samples.sort_by_key(canonical_key);
    // Approximation policy is resolved per sample size; the header records
    // whether any record used it.
    let results: Vec<(SampleConfig, Vec<Rational>, bool)> = samples
        .into_par_iter()
        .map(|s| {
            let mut engine = Engine::neutral(params)?;
            let on = approx.resolve(s.n());
            engine.set_approx_g0(on);
            let coeffs: Vec<Rational> = (0..=big_m)
                .map(|m| engine.coefficient(m, &s))
                .collect::<Result<_>>()?;
            Ok((s, coeffs, on))
        })
        .collect::<Result<_>>()?;
    let any_approx = results.iter().any(|(_, _, on)| *on);
    let mut out = String::new();
    out.push_str(&serde_json::to_string(&table_header(params, big_m, any_approx)).unwrap());
    out.push('\n');
    for (sample, coeffs, on) in &results {
        let record = serde_json::json!({
            "record": "sample",
            "key": key_hex(sample),
            "sample": render_sample(sample),
            "approx_g0": on,
            "coeffs": coeffs.iter().map(render_rational).collect::<Vec<_>>(),
        });
        out.push_str(&serde_json::to_string(&record).unwrap());
        out.push('\n');
    }
    Ok(out)
}

/// Parsed coefficient store.
pub struct CoeffStore {
    pub m_max: u32,
    records: BTreeMap<String, Vec<Rational>>,
}

impl CoeffStore {
    /// Parse a store, validating the header before reading any record.
    pub fn parse(content: &str) -> Result<CoeffStore> {
        let mut lines = content.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::Invalid("empty coefficient store".into()))?;
        let header: serde_json::Value = serde_json::from_str(header_line)
            .map_err(|e| Error::Invalid(format!("corrupt store header: {e}")))?;
        if header["record"] != "header" {
            return Err(Error::Invalid("store does not start with a header record".into()));
        }
        let version = header["format_version"].as_u64().unwrap_or(0);
        if version != TABLE_FORMAT_VERSION as u64 {
            return Err(Error::Invalid(format!(
                "store format version {version} (expected {TABLE_FORMAT_VERSION})"
            )));
        }
        let m_max = header["m_max"]
            .as_u64()
            .ok_or_else(|| Error::Invalid("store header lacks m_max".into()))? as u32;
        let mut records = BTreeMap::new();
        for (idx, line) in lines.enumerate() {
            let v: serde_json::Value = serde_json::from_str(line)
                .map_err(|e| Error::Invalid(format!("corrupt record {}: {e}", idx + 2)))?;
            if v["record"] != "sample" {
                return Err(Error::Invalid(format!("unexpected record type at line {}", idx + 2)));
            }
            let key = v["key"]
                .as_str()
                .ok_or_else(|| Error::Invalid(format!("record {} lacks a key", idx + 2)))?
                .to_string();
            let coeffs = v["coeffs"]
                .as_array()
                .ok_or_else(|| Error::Invalid(format!("record {} lacks coefficients", idx + 2)))?
                .iter()
                .map(|c| {
                    c.as_str()
                        .ok_or_else(|| Error::Invalid("coefficient is not a string".into()))
                        .and_then(crate::spec::parse_rational)
                })
                .collect::<Result<Vec<_>>>()?;
            records.insert(key, coeffs);
        }
        Ok(CoeffStore { m_max, records })
    }

    pub fn coeffs(&self, sample: &SampleConfig) -> Result<&[Rational]> {
        self.records
            .get(&key_hex(sample))
            .map(|v| v.as_slice())
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "sample {} not present in the store",
                    render_sample(sample)
                ))
            })
    }
}

/// `lookup` command: evaluate a stored coefficient list at one rate without
/// recomputation.
pub fn cmd_lookup(
    store: &CoeffStore,
    sample: &SampleConfig,
    rho: &Rho,
    method: &Method,
    eps: &Rational,
) -> Result<Table> {
    let coeffs = store.coeffs(sample)?;
    let order = (method.order() as usize).min(coeffs.len() - 1);
    let (value, exact, diag): (f64, Option<String>, String) = match (method, rho) {
        (Method::Exact, _) => {
            return Err(Error::Invalid(
                "lookup serves stored expansions; use the exact command instead".into(),
            ))
        }
        (_, Rho::Infinity) => {
            let q0 = &coeffs[0];
            (q0.to_f64().unwrap_or(f64::NAN), Some(render_rational(q0)), String::new())
        }
        (Method::Ps(_), Rho::Finite(r)) => {
            use num_traits::Zero;
            let inv = Rational::new(r.denom().clone(), r.numer().clone());
            let mut acc = Rational::zero();
            for c in coeffs[..=order].iter().rev() {
                acc = acc * &inv + c;
            }
            (acc.to_f64().unwrap_or(f64::NAN), Some(render_rational(&acc)), String::new())
        }
        (Method::Otr(_), Rho::Finite(r)) => {
            let cs: Vec<f64> = coeffs[..=order]
                .iter()
                .map(|c| c.to_f64().unwrap_or(f64::NAN))
                .collect();
            let (at, v) = otr_truncate(&cs, r.to_f64().unwrap_or(f64::NAN))?;
            (v, None, format!("truncated_at={at}"))
        }
        (Method::Pade(_), Rho::Finite(r)) => {
            let (picked, approx) = select_nondefective(&coeffs[..=order], r, eps)?;
            let v = approx.evaluate(rho)?;
            let (u, vdeg) = approx.degrees();
            let mut diag = format!("degrees=[{u}/{vdeg}]");
            if picked < order {
                diag.push_str(&format!(";stepped_down_from={order}"));
            }
            (v.to_f64().unwrap_or(f64::NAN), Some(render_rational(&v)), diag)
        }
    };
    let mut table = Table::new(vec!["sample", "rho", "method", "value", "exact", "diagnostics"]);
    table.push(vec![
        Field::Str(render_sample(sample)),
        Field::Str(rho_string(rho)),
        Field::Str(method.tag()),
        Field::Num(value),
        exact.map(Field::Str).unwrap_or(Field::Null),
        if diag.is_empty() { Field::Null } else { Field::Str(diag) },
    ]);
    Ok(table)
}

/// `exact` command: the sampling probability from the full linear system,
/// exactly for rational rates or in floating point with `numeric`.
pub fn cmd_exact(
    params: &ModelParams,
    sample: &SampleConfig,
    rho: &Rho,
    numeric: bool,
) -> Result<Table> {
    if params.selection.is_some() {
        return Err(Error::Unsupported(
            "the exact solver covers the neutral model".into(),
        ));
    }
    let mut table = Table::new(vec!["sample", "rho", "method", "value", "exact"]);
    let (method, value, exact): (&str, f64, Option<String>) = match rho {
        Rho::Infinity => {
            // Unlinked loci: the probability is the product of the marginal
            // one-locus values, which is the leading expansion coefficient.
            let engine = Engine::neutral(params)?;
            let q0 = engine.coefficient(0, sample)?;
            (
                "exact",
                q0.to_f64().unwrap_or(f64::NAN),
                Some(render_rational(&q0)),
            )
        }
        Rho::Finite(r) => {
            if numeric {
                let mut solver = ExactNumeric::new(
                    params,
                    r.to_f64()
                        .ok_or_else(|| Error::Invalid("rho too large for the numeric solver".into()))?,
                    NUMERIC_TOL,
                    NUMERIC_SWEEPS,
                )?;
                ("exact-numeric", solver.q(sample)?, None)
            } else {
                let mut solver = ExactRational::new(params, r.clone())?;
                let q = solver.q(sample)?;
                (
                    "exact",
                    q.to_f64().unwrap_or(f64::NAN),
                    Some(render_rational(&q)),
                )
            }
        }
    };
    table.push(vec![
        Field::Str(render_sample(sample)),
        Field::Str(rho_string(rho)),
        Field::Str(method.into()),
        Field::Num(value),
        exact.map(Field::Str).unwrap_or(Field::Null),
    ]);
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::parse_sample;
    use twolocus::rat;

    #[test]
    fn method_parsing() {
        assert_eq!(Method::parse("ps:11").unwrap(), Method::Ps(11));
        assert_eq!(Method::parse("pade:5").unwrap(), Method::Pade(5));
        assert_eq!(Method::parse("exact").unwrap(), Method::Exact);
        assert!(Method::parse("pade").is_err());
        assert!(Method::parse_list("").is_err());
    }

    #[test]
    fn coeffs_match_engine() {
        let p = ModelParams::paper_pim();
        let s = parse_sample("c=[[1,0],[0,1]]").unwrap();
        let t = cmd_coeffs(&p, &[s.clone()], 1, ApproxG0::Off).unwrap();
        assert_eq!(t.rows.len(), 2);
        let engine = Engine::neutral(&p).unwrap();
        let q0 = engine.coefficient(0, &s).unwrap();
        match &t.rows[0][3] {
            Field::Str(txt) => assert_eq!(txt, &render_rational(&q0)),
            other => panic!("expected exact string, got {other:?}"),
        }
    }

    #[test]
    fn store_round_trip() {
        let p = ModelParams::paper_pim();
        let text = cmd_table(&p, 2, 1, ApproxG0::Auto).unwrap();
        let store = CoeffStore::parse(&text).unwrap();
        let s = parse_sample("c=[[1,0],[0,1]]").unwrap();
        let coeffs = store.coeffs(&s).unwrap();
        let engine = Engine::neutral(&p).unwrap();
        assert_eq!(coeffs[0], engine.coefficient(0, &s).unwrap());
        assert_eq!(coeffs[1], engine.coefficient(1, &s).unwrap());
        // Lookup at an unlinked rate returns the leading coefficient.
        let t = cmd_lookup(&store, &s, &Rho::Infinity, &Method::Pade(1), &rat(25, 1)).unwrap();
        match &t.rows[0][4] {
            Field::Str(txt) => assert_eq!(txt, &render_rational(coeffs.first().unwrap())),
            other => panic!("expected exact string, got {other:?}"),
        }
    }

    #[test]
    fn store_rejects_corruption() {
        let p = ModelParams::paper_pim();
        let text = cmd_table(&p, 1, 0, ApproxG0::Auto).unwrap();
        // Version bump.
        let tampered = text.replacen("\"format_version\":1", "\"format_version\":2", 1);
        assert!(CoeffStore::parse(&tampered).is_err());
        // Truncated record.
        let mut lines: Vec<&str> = text.lines().collect();
        let last = lines.pop().unwrap();
        let broken = format!("{}\n{}", lines.join("\n"), &last[..last.len() / 2]);
        assert!(CoeffStore::parse(&broken).is_err());
        // Missing sample.
        let store = CoeffStore::parse(&text).unwrap();
        let s = parse_sample("c=[[2,0],[0,1]]").unwrap();
        assert!(store.coeffs(&s).is_err());
    }

    #[test]
    fn exact_command_at_unlinked_rate() {
        let p = ModelParams::paper_pim();
        let s = parse_sample("c=[[1,0],[0,1]]").unwrap();
        let t = cmd_exact(&p, &s, &Rho::Infinity, false).unwrap();
        match (&t.rows[0][3], &t.rows[0][4]) {
            (Field::Num(v), Field::Str(e)) => {
                assert!(*v > 0.0 && *v < 1.0);
                assert!(e.contains('/'));
            }
            other => panic!("unexpected row {other:?}"),
        }
    }

    #[test]
    fn curve_rows_per_rate_and_method() {
        let p = ModelParams::paper_pim();
        let s = parse_sample("c=[[1,0],[0,1]]").unwrap();
        let rhos = [Rho::Finite(rat(50, 1)), Rho::Infinity];
        let methods = [Method::Ps(1), Method::Pade(1)];
        let t = cmd_curve(&p, &s, &rhos, &methods, &rat(25, 1), ApproxG0::Off).unwrap();
        assert_eq!(t.rows.len(), 4);
    }
}
