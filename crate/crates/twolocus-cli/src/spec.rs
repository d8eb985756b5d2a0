//! Parsers for the textual specifications the command line accepts: exact
//! rationals, sample configurations, fitness matrices, and recombination
//! rates (finite or infinite).

use num_traits::Signed;
use twolocus::error::{Error, Result};
use twolocus::model::{ModelParams, MutationModel, SampleConfig};
use twolocus::pade::Rho;
use twolocus::Rational;

/// Parse an exact rational from `p`, `p/q`, or a plain decimal like `0.01`.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Invalid(format!("cannot parse `{s}` as a rational number"));
    if let Some((num, den)) = s.split_once('/') {
        let n: num_bigint::BigInt = num.trim().parse().map_err(|_| bad())?;
        let d: num_bigint::BigInt = den.trim().parse().map_err(|_| bad())?;
        if d == 0.into() {
            return Err(Error::Invalid(format!("zero denominator in `{s}`")));
        }
        return Ok(Rational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let digits = format!("{}{}", if int.is_empty() { "0" } else { int }, frac);
        let n: num_bigint::BigInt = digits.parse().map_err(|_| bad())?;
        let d = num_bigint::BigInt::from(10u32).pow(frac.len() as u32);
        return Ok(Rational::new(n, d));
    }
    let n: num_bigint::BigInt = s.parse().map_err(|_| bad())?;
    Ok(Rational::from_integer(n))
}

/// Parse a recombination rate: a nonnegative rational or the token `inf`.
pub fn parse_rho(s: &str) -> Result<Rho> {
    if s.trim() == "inf" {
        return Ok(Rho::Infinity);
    }
    let r = parse_rational(s)?;
    if r.is_negative() {
        return Err(Error::Invalid(format!("rho must be nonnegative, got `{s}`")));
    }
    Ok(Rho::Finite(r))
}

/// Parse a comma-separated list of recombination rates.
pub fn parse_rho_list(s: &str) -> Result<Vec<Rho>> {
    let items: Vec<&str> = s.split(',').filter(|t| !t.trim().is_empty()).collect();
    if items.is_empty() {
        return Err(Error::Invalid("empty rho list".into()));
    }
    items.iter().map(|t| parse_rho(t)).collect()
}

fn parse_u32_list(s: &str) -> Result<Vec<u32>> {
    let s = s.trim();
    let inner = s
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| Error::Invalid(format!("expected a bracketed list, got `{s}`")))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| Error::Invalid(format!("bad count `{t}` in `{s}`")))
        })
        .collect()
}

/// Split a bracketed matrix `[[..],[..]]` into its row substrings.
fn split_rows(s: &str) -> Result<Vec<String>> {
    let s = s.trim();
    let inner = s
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| Error::Invalid(format!("expected a bracketed matrix, got `{s}`")))?;
    let mut rows = Vec::new();
    let mut depth = 0usize;
    let mut cur = String::new();
    for ch in inner.chars() {
        match ch {
            '[' => {
                depth += 1;
                cur.push(ch);
            }
            ']' => {
                depth = depth
                    .checked_sub(1)
                    .ok_or_else(|| Error::Invalid(format!("unbalanced brackets in `{s}`")))?;
                cur.push(ch);
                if depth == 0 {
                    rows.push(std::mem::take(&mut cur));
                }
            }
            ',' if depth == 0 => {}
            _ if depth > 0 => cur.push(ch),
            _ if ch.is_whitespace() => {}
            _ => return Err(Error::Invalid(format!("unexpected `{ch}` in `{s}`"))),
        }
    }
    if depth != 0 || rows.is_empty() {
        return Err(Error::Invalid(format!("malformed matrix `{s}`")));
    }
    Ok(rows)
}

fn parse_u32_matrix(s: &str) -> Result<Vec<Vec<u32>>> {
    split_rows(s)?.iter().map(|r| parse_u32_list(r)).collect()
}

/// Parse a sample specification.
///
/// Either `c=[[10,7],[2,1]]` for a gamete-only sample, or the full form
/// `a=[1,0];b=[0,1];c=[[0,0],[0,0]]` with semicolon-separated parts.
pub fn parse_sample(s: &str) -> Result<SampleConfig> {
    let mut a: Option<Vec<u32>> = None;
    let mut b: Option<Vec<u32>> = None;
    let mut c: Option<Vec<Vec<u32>>> = None;
    for part in s.split(';') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("expected key=value, got `{part}`")))?;
        match key.trim() {
            "a" => a = Some(parse_u32_list(value)?),
            "b" => b = Some(parse_u32_list(value)?),
            "c" => c = Some(parse_u32_matrix(value)?),
            other => return Err(Error::Invalid(format!("unknown sample field `{other}`"))),
        }
    }
    let c = c.ok_or_else(|| Error::Invalid("sample needs a c matrix".into()))?;
    match (a, b) {
        (None, None) => SampleConfig::from_c(c),
        (Some(a), Some(b)) => SampleConfig::new(a, b, c),
        _ => Err(Error::Invalid(
            "give both a and b vectors or neither".into(),
        )),
    }
}

/// Render a sample in the same syntax [`parse_sample`] accepts.
pub fn render_sample(cfg: &SampleConfig) -> String {
    let list = |v: &[u32]| {
        let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        format!("[{}]", items.join(","))
    };
    let rows: Vec<String> = cfg.c().iter().map(|r| list(r)).collect();
    format!(
        "a={};b={};c=[{}]",
        list(cfg.a()),
        list(cfg.b()),
        rows.join(",")
    )
}

/// Parse a selection specification `sigma=[[0.1,0],[0,-0.1]]`.
pub fn parse_selection(s: &str) -> Result<Vec<Vec<f64>>> {
    let value = s
        .trim()
        .strip_prefix("sigma=")
        .ok_or_else(|| Error::Invalid(format!("expected sigma=<matrix>, got `{s}`")))?;
    let rows = split_rows(value)?;
    let matrix: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let inner = r
                .strip_prefix('[')
                .and_then(|t| t.strip_suffix(']'))
                .ok_or_else(|| Error::Invalid(format!("malformed row `{r}`")))?;
            inner
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Invalid(format!("bad fitness entry `{t}`")))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let k = matrix.len();
    if matrix.iter().any(|row| row.len() != k) {
        return Err(Error::Invalid("selection matrix must be square".into()));
    }
    for i in 0..k {
        for j in 0..k {
            if (matrix[i][j] - matrix[j][i]).abs() > 0.0 {
                return Err(Error::Invalid("selection matrix must be symmetric".into()));
            }
            if !matrix[i][j].is_finite() {
                return Err(Error::Invalid("selection entries must be finite".into()));
            }
        }
    }
    Ok(matrix)
}

/// Build model parameters from the preset name, optional per-locus mutation
/// rate overrides, and an optional selection matrix.
pub fn build_model(
    preset: &str,
    theta_a: Option<&str>,
    theta_b: Option<&str>,
    selection: Option<&str>,
) -> Result<ModelParams> {
    if preset != "paper-pim" {
        return Err(Error::Invalid(format!(
            "unknown model preset `{preset}` (available: paper-pim)"
        )));
    }
    let base = ModelParams::paper_pim();
    let locus_a = match theta_a {
        Some(t) => MutationModel::symmetric_pim(parse_rational(t)?),
        None => base.locus_a.clone(),
    };
    let locus_b = match theta_b {
        Some(t) => MutationModel::symmetric_pim(parse_rational(t)?),
        None => base.locus_b.clone(),
    };
    match selection {
        Some(s) => ModelParams::with_selection(locus_a, locus_b, parse_selection(s)?),
        None => Ok(ModelParams::neutral(locus_a, locus_b)),
    }
}

/// Render a rational as the exact string `p/q` (or just `p` for integers).
pub fn render_rational(r: &Rational) -> String {
    if r.denom() == &num_bigint::BigInt::from(1) {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}
