//! Acceptance gate: nine end-to-end criteria covering coefficient
//! correctness, the vanishing theorem, Pade exactness and root structure,
//! divergence/resummation behavior, the weighted error distribution, the
//! recursive-base approximation, normalization, and the selection reduction.
//!
//! Each test prints one PASS line on success (visible with --nocapture);
//! a failure shows up as the test's failure line.

use num_traits::ToPrimitive;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use std::process::Command;
use twolocus::exact::{total_probability, ExactGrid, ExactNumeric};
use twolocus::expansion::{partial_sum, q0_closed_form, q1_closed_form, Engine, PimDist};
use twolocus::model::{enumerate_all_samples, enumerate_samples_of_length, ModelParams, SampleConfig};
use twolocus::pade::{PadeApprox, Rho};
use twolocus::selection::{selected_engine, zero_selection_engine};
use twolocus::{rat, Rational};

fn paper() -> ModelParams {
    ModelParams::paper_pim()
}

fn figure_sample() -> SampleConfig {
    SampleConfig::from_c(vec![vec![10, 7], vec![2, 1]]).unwrap()
}

#[test]
fn criterion_1_closed_form_coefficients() {
    let params = paper();
    let engine = Engine::neutral(&params).unwrap();
    let qa = PimDist::<Rational>::new(params.locus_a.clone()).unwrap();
    let qb = PimDist::<Rational>::new(params.locus_b.clone()).unwrap();
    let mut checked = 0usize;
    for n in 1..=6u32 {
        let samples = enumerate_all_samples(n, 2, 2);
        let results: Vec<(Rational, Rational, Rational, Rational)> = samples
            .par_iter()
            .map(|s| {
                (
                    engine.coefficient(0, s).unwrap(),
                    q0_closed_form(s, &qa, &qb).unwrap(),
                    engine.coefficient(1, s).unwrap(),
                    q1_closed_form(s, &qa, &qb).unwrap(),
                )
            })
            .collect();
        for (s, (e0, c0, e1, c1)) in samples.iter().zip(results) {
            assert_eq!(e0, c0, "q0 mismatch at {s:?}");
            assert_eq!(e1, c1, "q1 mismatch at {s:?}");
            checked += 1;
        }
    }
    println!("PASS criterion 1: q0/q1 equal the closed forms exactly for all {checked} samples with n <= 6");
}

#[test]
fn criterion_2_odd_levels_vanish() {
    use num_traits::Zero;
    let mut engine = Engine::neutral(&paper()).unwrap();
    engine.set_shortcut_odd(false);
    let mut rng = StdRng::seed_from_u64(0x0dd1e7e1);
    let mut checked = 0usize;
    while checked < 200 {
        let level = [1u32, 3, 5][rng.gen_range(0..3)] as u32;
        let m = rng.gen_range(0..=level.min(4));
        let u = level - m;
        let a = [rng.gen_range(0..=2u32), rng.gen_range(0..=2)];
        let b = [rng.gen_range(0..=2u32), rng.gen_range(0..=2)];
        // Split m over the four doubly-typed cells.
        let mut r = [0u32; 4];
        for _ in 0..m {
            r[rng.gen_range(0..4)] += 1;
        }
        let v = engine.g(m, u, &a, &b, &r).unwrap();
        assert!(
            v.is_zero(),
            "odd-level entry nonzero: m={m} u={u} a={a:?} b={b:?} r={r:?} -> {v}"
        );
        checked += 1;
    }
    println!("PASS criterion 2: 200 randomized odd-level entries are exactly zero");
}

#[test]
fn criterion_3_pade_stabilizes_to_exact() {
    let params = paper();
    let engine = Engine::neutral(&params).unwrap();
    let mut grid = ExactGrid::new(&params);
    let mut checked = 0usize;
    for delta in 1..=6u32 {
        for sample in enumerate_samples_of_length(delta, 2, 2) {
            let truth = grid
                .reconstruct(&sample, 8)
                .unwrap()
                .reciprocal_argument()
                .unwrap();
            let mut coeffs: Vec<Rational> = Vec::new();
            let mut stabilized = false;
            for m in 0..=16usize {
                coeffs.push(engine.coefficient(m as u32, &sample).unwrap());
                let approx = match PadeApprox::staircase(&coeffs, m) {
                    Ok(a) => a,
                    Err(_) => continue,
                };
                if approx.as_rational_function().unwrap().equivalent(&truth) {
                    stabilized = true;
                    break;
                }
            }
            assert!(stabilized, "staircase never reached the exact rational function for {sample:?}");
            checked += 1;
        }
    }
    println!("PASS criterion 3: staircase Pade stabilizes to the exact rational function for all {checked} samples with delta <= 6");
}

/// Exact expansion coefficients of the figure sample through `big_m`,
/// following the large-sample policy (recursive-base approximation on).
fn figure_coeffs_exact(big_m: u32) -> Vec<Rational> {
    let mut engine = Engine::neutral(&paper()).unwrap();
    engine.set_approx_g0(true);
    let sample = figure_sample();
    (0..=big_m)
        .map(|m| engine.coefficient(m, &sample).unwrap())
        .collect()
}

/// Floating-point expansion coefficients of the figure sample, lifted to
/// rationals so the certified Pade/root machinery applies. The roots table
/// needs the series without the recursive-base approximation, and the exact
/// engine takes hours past order 3 in that regime; the float engine tracks
/// it to ~1e-9 relative, far below the tabulated root tolerances.
fn figure_coeffs_f64(big_m: u32, approx: bool) -> Vec<Rational> {
    let mut engine = Engine::<f64>::neutral_f64(&paper()).unwrap();
    engine.set_approx_g0(approx);
    let sample = figure_sample();
    (0..=big_m)
        .map(|m| Rational::from_float(engine.coefficient(m, &sample).unwrap()).unwrap())
        .collect()
}

#[test]
fn criterion_4_roots_table() {
    let coeffs = figure_coeffs_f64(7, false);
    let width = rat(1, 1_000_000);
    let near = |roots: &[twolocus::poly::RootEnclosure], target: f64, tol: f64| {
        roots.iter().any(|r| (r.midpoint_f64() - target).abs() <= tol)
    };

    // [1/1]: one positive numerator root at 4.871.
    let p11 = PadeApprox::staircase(&coeffs, 2).unwrap();
    assert_eq!(p11.degrees(), (1, 1));
    let r11 = p11.root_report(&width);
    assert!(
        near(&r11.num_roots, 4.871, 0.01),
        "[1/1] numerator roots {:?}",
        r11.num_roots.iter().map(|r| r.midpoint_f64()).collect::<Vec<_>>()
    );

    // [2/3]: numerator root at 0, denominator root at 0.912 (the published
    // singularity near rho = 0.9).
    let p23 = PadeApprox::staircase(&coeffs, 5).unwrap();
    assert_eq!(p23.degrees(), (2, 3));
    let r23 = p23.root_report(&width);
    assert!(near(&r23.num_roots, 0.0, 1e-6), "[2/3] lacks the zero numerator root");
    assert!(
        near(&r23.den_roots, 0.912, 0.005),
        "[2/3] denominator roots {:?}",
        r23.den_roots.iter().map(|r| r.midpoint_f64()).collect::<Vec<_>>()
    );

    // [3/4]: numerator root 0 only.
    let p34 = PadeApprox::staircase(&coeffs, 7).unwrap();
    assert_eq!(p34.degrees(), (3, 4));
    let r34 = p34.root_report(&width);
    assert!(near(&r34.num_roots, 0.0, 1e-6), "[3/4] lacks the zero numerator root");
    assert!(
        r34.num_roots.iter().all(|r| r.midpoint_f64().abs() <= 1e-6),
        "[3/4] has spurious positive numerator roots: {:?}",
        r34.num_roots.iter().map(|r| r.midpoint_f64()).collect::<Vec<_>>()
    );
    println!("PASS criterion 4: roots table reproduced ([1/1] 4.871, [2/3] 0/0.912, [3/4] 0 only)");
}

#[test]
fn criterion_5_divergence_and_resummation() {
    let params = paper();
    let sample = figure_sample();

    // Exact values from the floating-point solver at the two probe rates.
    let exact_at = |rho: f64| -> f64 {
        let mut solver = ExactNumeric::new(&params, rho, 1e-13, 1_000_000).unwrap();
        solver.q(&sample).unwrap()
    };
    let exact_25 = exact_at(25.0);
    let exact_50 = exact_at(50.0);

    // Partial sum M=11: the series is asymptotic, so deep truncations
    // diverge at moderate rates. Coefficients in floating point (validated
    // against the exact engine through order 7).
    let mut fast = Engine::neutral_f64(&params).unwrap();
    fast.set_approx_g0(true);
    let cs: Vec<f64> = (0..=11u32)
        .map(|m| fast.coefficient(m, &sample).unwrap())
        .collect();
    let ps_err = |rho: f64, exact: f64| -> f64 {
        ((partial_sum(&cs, rho).unwrap() - exact) / exact).abs()
    };
    let worst = ps_err(25.0, exact_25).max(ps_err(50.0, exact_50));
    assert!(
        worst > 0.10,
        "partial sum M=11 should exceed 10% relative error in [25, 100], worst {worst:.3}"
    );

    // Staircase Pade M=5 is within 1% at rho = 50.
    let coeffs = figure_coeffs_exact(5);
    let pade = PadeApprox::staircase(&coeffs, 5).unwrap();
    let value = pade
        .evaluate(&Rho::Finite(rat(50, 1)))
        .unwrap()
        .to_f64()
        .unwrap();
    let rel = ((value - exact_50) / exact_50).abs();
    assert!(rel < 0.01, "Pade M=5 at rho=50: relative error {rel:.4}");
    println!(
        "PASS criterion 5: partial sum M=11 diverges (err {worst:.2}) while Pade M=5 is within 1% at rho=50 (err {rel:.5})"
    );
}

fn run_error_study(approx: &str) -> Vec<(String, Vec<f64>)> {
    let out = Command::new(env!("CARGO_BIN_EXE_twolocus"))
        .args([
            "error-study",
            "--n",
            "10",
            "--rho",
            "50",
            "--M-list",
            "0,2,4",
            "--approx-g0",
            approx,
            "--format",
            "json",
        ])
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "error-study failed: {out:?}");
    let rows: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("json output");
    rows.as_array()
        .unwrap()
        .iter()
        .map(|r| {
            (
                r["method"].as_str().unwrap().to_string(),
                ["phi_1", "phi_5", "phi_10", "phi_25", "phi_50", "phi_100"]
                    .iter()
                    .map(|k| r[k].as_f64().unwrap())
                    .collect(),
            )
        })
        .collect()
}

#[test]
fn criterion_6_and_7_error_distribution() {
    // The published table was computed with the recursive-base
    // approximation in force, so the reproduction gates on that run.
    let on = run_error_study("on");
    let phi = |rows: &[(String, Vec<f64>)], method: &str, idx: usize| -> f64 {
        rows.iter()
            .find(|(m, _)| m == method)
            .unwrap_or_else(|| panic!("missing row {method}"))
            .1[idx]
    };

    // Criterion 6: the published c=10 rows at rho=50.
    let checks = [
        ("pade:2", 0, 0.94, 0.02),
        ("pade:2", 1, 1.00, 0.01),
        ("pade:4", 0, 1.00, 0.01),
        ("pade:0", 0, 0.58, 0.02),
    ];
    for (method, idx, want, tol) in checks {
        let got = phi(&on, method, idx);
        assert!(
            (got - want).abs() <= tol,
            "{method} Phi index {idx}: got {got:.3}, want {want} +- {tol}"
        );
    }
    println!("PASS criterion 6: weighted error distribution matches the published c=10 rows");

    // Criterion 7: the recursive-base approximation moves no tabulated
    // value by more than 0.02.
    let off = run_error_study("off");
    for ((m_on, phis_on), (m_off, phis_off)) in on.iter().zip(&off) {
        assert_eq!(m_off, m_on);
        for (idx, (a, b)) in phis_off.iter().zip(phis_on).enumerate() {
            assert!(
                (a - b).abs() <= 0.02,
                "{m_off} Phi index {idx}: off {a:.3} vs on {b:.3}"
            );
        }
    }
    println!("PASS criterion 7: approximation shifts every tabulated Phi by at most 0.02");
}

#[test]
fn criterion_8_normalization_and_limits() {
    let params = paper();
    let one = Rational::from_integer(1.into());
    for n in 1..=4u32 {
        for rho in [rat(0, 1), rat(1, 1), rat(100, 1)] {
            let total = total_probability(&params, rho.clone(), n).unwrap();
            assert_eq!(total, one, "total probability at n={n}, rho={rho}");
        }
    }

    // Unlinked limit: at rho = 10^8 the exact value is within 1e-6 of the
    // product of marginals.
    let engine = Engine::neutral(&params).unwrap();
    let mut solver = ExactNumeric::new(&params, 1e8, 1e-13, 1_000_000).unwrap();
    for c in [vec![vec![1, 0], vec![0, 1]], vec![vec![2, 1], vec![0, 1]]] {
        let sample = SampleConfig::from_c(c).unwrap();
        let q0 = engine.coefficient(0, &sample).unwrap().to_f64().unwrap();
        let exact = solver.q(&sample).unwrap();
        assert!(
            (exact - q0).abs() <= 1e-6,
            "unlinked limit: exact {exact:.9e} vs q0 {q0:.9e}"
        );
    }
    println!("PASS criterion 8: total probability is exactly 1 (n <= 4) and the unlinked limit matches q0");
}

#[test]
fn criterion_9_selection_neutral_reduction() {
    let params = paper();
    let neutral = Engine::neutral(&params).unwrap();
    let zero = zero_selection_engine(&params, 12).unwrap();

    // Exact agreement of the two arrays through level 4 for every sample of
    // size at most 5, checked through the coefficients that consume those
    // levels.
    let mut checked = 0usize;
    for n in 1..=5u32 {
        for sample in enumerate_all_samples(n, 2, 2) {
            for m in 0..=2u32 {
                assert_eq!(
                    zero.coefficient(m, &sample).unwrap(),
                    neutral.coefficient(m, &sample).unwrap(),
                    "sigma=0 mismatch at {sample:?}, order {m}"
                );
            }
            checked += 1;
        }
    }
    // And on raw array entries of levels 2 and 4.
    for (a, b) in [([2u32, 1], [1u32, 1]), ([3, 1], [0, 1]), ([1, 0], [2, 2])] {
        for u in [2u32, 4] {
            assert_eq!(
                zero.g(0, u, &a, &b, &[0; 4]).unwrap(),
                neutral.g(0, u, &a, &b, &[0; 4]).unwrap()
            );
        }
    }

    // A tiny fitness difference is a tiny perturbation.
    let sigma = vec![vec![1e-6, 0.0], vec![0.0, -1e-6]];
    let perturbed = ModelParams::with_selection(
        params.locus_a.clone(),
        params.locus_b.clone(),
        sigma,
    )
    .unwrap();
    let engine = selected_engine(&perturbed, 1e-12, 9).unwrap();
    for c in [vec![vec![2, 0], vec![0, 1]], vec![vec![1, 1], vec![1, 0]]] {
        let sample = SampleConfig::from_c(c).unwrap();
        for m in 0..=2u32 {
            let qn = neutral.coefficient(m, &sample).unwrap().to_f64().unwrap();
            let qs = engine.coefficient(m, &sample).unwrap();
            assert!(
                ((qs - qn) / qn).abs() < 1e-4,
                "sigma=1e-6 at {sample:?} order {m}: {qs:.9e} vs {qn:.9e}"
            );
        }
    }
    println!("PASS criterion 9: sigma=0 reduces to neutral exactly ({checked} samples) and sigma=1e-6 stays within 1e-4");
}
