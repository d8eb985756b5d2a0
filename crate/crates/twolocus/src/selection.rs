//! Selection at the first locus: engine constructors and the neutral
//! reduction.
//!
//! With a symmetric diploid fitness matrix `sigma` at locus A, the expansion
//! array gains extra recursive terms and the marginal distribution at that
//! locus comes from quadrature against the weighted stationary density. A
//! zero matrix must reduce to the neutral theory exactly; that path runs in
//! rational arithmetic so the identity can be checked bitwise.

use crate::error::{Error, Result};
use crate::expansion::{Engine, GeneralDist, OneLocusDist, PimDist, SelectedDist};
use crate::model::ModelParams;
use crate::onelocus::SelectedOneLocus;
use crate::Rational;
use std::sync::Arc;

/// True when every fitness entry is exactly zero.
pub fn sigma_is_zero(sigma: &[Vec<f64>]) -> bool {
    sigma.iter().all(|row| row.iter().all(|&v| v == 0.0))
}

fn marginal_f64(model: &crate::model::MutationModel) -> Result<Arc<dyn OneLocusDist<f64>>> {
    Ok(if model.is_pim() {
        Arc::new(PimDist::<f64>::new(model.clone())?)
    } else {
        Arc::new(GeneralDist::new(model.clone())?)
    })
}

/// Floating-point engine with the selection terms wired in.
///
/// `tol` controls the adaptive quadrature behind the selected one-locus
/// distribution; `sel_amax` bounds the locus-A totals served by the
/// recursive solver (the truncated joint solve needs a fixed horizon).
pub fn selected_engine(params: &ModelParams, tol: f64, sel_amax: u32) -> Result<Engine<f64>> {
    let sigma = params
        .selection
        .clone()
        .ok_or_else(|| Error::Invalid("selected_engine needs a selection matrix".into()))?;
    let qb = marginal_f64(&params.locus_b)?;
    let qa: Arc<dyn OneLocusDist<f64>> = if sigma_is_zero(&sigma) {
        // Quadrature bypassed: the marginal is exactly neutral.
        marginal_f64(&params.locus_a)?
    } else {
        Arc::new(SelectedDist::new(SelectedOneLocus::new(
            params.locus_a.clone(),
            sigma.clone(),
            tol,
        )?))
    };
    Engine::new(params, qa, qb, Some(sigma), sel_amax)
}

/// Exact engine carrying an explicit zero selection matrix.
///
/// All selection-specific code paths (term injections, the joint recursive
/// solve) stay active but must produce the neutral values; comparing this
/// engine against [`Engine::neutral`] verifies the reduction bitwise.
pub fn zero_selection_engine(params: &ModelParams, sel_amax: u32) -> Result<Engine<Rational>> {
    let k = params.locus_a.k();
    let sigma = vec![vec![Rational::from_integer(0.into()); k]; k];
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
    Engine::new(params, qa, qb, Some(sigma), sel_amax)
}

/// Expansion coefficients `q_0 .. q_M` of one sample under selection.
pub fn selection_coefficients(
    engine: &Engine<f64>,
    sample: &crate::model::SampleConfig,
    big_m: u32,
) -> Result<Vec<f64>> {
    (0..=big_m).map(|m| engine.coefficient(m, sample)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{enumerate_all_samples, MutationModel, SampleConfig};
    use crate::rat;

    fn params_with_sigma(s: f64) -> ModelParams {
        let theta = rat(1, 100);
        ModelParams::with_selection(
            MutationModel::symmetric_pim(theta.clone()),
            MutationModel::symmetric_pim(theta),
            vec![vec![s, 0.0], vec![0.0, -s]],
        )
        .unwrap()
    }

    #[test]
    fn zero_sigma_reduces_to_neutral_bitwise() {
        let p = params_with_sigma(0.0);
        let neutral = Engine::neutral(&p).unwrap();
        let zero = zero_selection_engine(&p, 4).unwrap();
        // Array entries through level 4 for a spread of configurations...
        let zero_r = vec![0u32; 4];
        for (a, b) in [([2u32, 1], [1u32, 1]), ([3, 0], [2, 2]), ([1, 1], [1, 0])] {
            for u in [2u32, 4] {
                assert_eq!(
                    zero.g(0, u, &a, &b, &zero_r).unwrap(),
                    neutral.g(0, u, &a, &b, &zero_r).unwrap(),
                    "u = {u}"
                );
            }
        }
        let mut r = zero_r.clone();
        r[2] = 2;
        assert_eq!(
            zero.g(2, 2, &[1, 0], &[0, 2], &r).unwrap(),
            neutral.g(2, 2, &[1, 0], &[0, 2], &r).unwrap()
        );
        // ...and whole coefficients for every sample of three gametes.
        for sample in enumerate_all_samples(3, 2, 2) {
            for m in 0..=2u32 {
                assert_eq!(
                    zero.coefficient(m, &sample).unwrap(),
                    neutral.coefficient(m, &sample).unwrap(),
                    "sample {sample:?} order {m}"
                );
            }
        }
    }

    #[test]
    fn base_case_is_selected_marginal_product() {
        let p = params_with_sigma(0.5);
        let engine = selected_engine(&p, 1e-10, 6).unwrap();
        let qa = SelectedOneLocus::new(
            p.locus_a.clone(),
            p.selection.clone().unwrap(),
            1e-10,
        )
        .unwrap();
        let qb = crate::onelocus::q_pim(&[1, 1], &p.locus_b).unwrap();
        let got = engine.g(0, 0, &[2, 0], &[1, 1], &[0; 4]).unwrap();
        let expect = qa.q(&[2, 0]).unwrap() * crate::scalar::Scalar::to_f64_lossy(&qb);
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn odd_levels_vanish_under_selection() {
        let p = params_with_sigma(0.8);
        let mut engine = selected_engine(&p, 1e-8, 6).unwrap();
        engine.set_shortcut_odd(false);
        let mut r = vec![0u32; 4];
        r[0] = 1;
        assert_eq!(engine.g(1, 2, &[1, 1], &[1, 0], &r).unwrap(), 0.0);
        assert_eq!(engine.g(0, 3, &[2, 0], &[1, 1], &[0; 4]).unwrap(), 0.0);
    }

    #[test]
    fn small_sigma_is_a_small_perturbation() {
        let neutral = Engine::neutral(&ModelParams::paper_pim()).unwrap();
        let p = params_with_sigma(1e-6);
        let engine = selected_engine(&p, 1e-12, 6).unwrap();
        let samples = [
            SampleConfig::from_c(vec![vec![2, 0], vec![0, 1]]).unwrap(),
            SampleConfig::new(vec![1, 0], vec![0, 1], vec![vec![1, 0], vec![0, 1]]).unwrap(),
        ];
        for sample in &samples {
            for m in 0..=2u32 {
                let qn = crate::scalar::Scalar::to_f64_lossy(
                    &neutral.coefficient(m, sample).unwrap(),
                );
                let qs = engine.coefficient(m, sample).unwrap();
                if qn.abs() > 0.0 {
                    assert!(
                        ((qs - qn) / qn).abs() < 1e-4,
                        "sample {sample:?} order {m}: {qs} vs {qn}"
                    );
                }
            }
        }
    }

    #[test]
    fn selection_shifts_coefficients_continuously() {
        // A visible fitness difference moves the leading coefficient in the
        // direction of the favoured allele's marginal.
        let sample = SampleConfig::from_c(vec![vec![2, 0], vec![0, 0]]).unwrap();
        let q0 = |s: f64| {
            let p = params_with_sigma(s);
            let engine = selected_engine(&p, 1e-10, 6).unwrap();
            engine.coefficient(0, &sample).unwrap()
        };
        let lo = q0(0.0);
        let hi = q0(2.0);
        assert!(hi > lo, "favoured homozygote should gain mass: {hi} vs {lo}");
        // And the dependence is continuous: a tiny sigma moves it barely.
        assert!((q0(1e-8) - lo).abs() < 1e-6);
    }

    #[test]
    fn requires_selection_matrix() {
        let p = ModelParams::paper_pim();
        assert!(selected_engine(&p, 1e-8, 4).is_err());
    }

    #[test]
    fn capacity_guard_on_locus_a_totals() {
        let p = params_with_sigma(0.3);
        let engine = selected_engine(&p, 1e-8, 2).unwrap();
        // |a| beyond the configured horizon must be a capacity error, not a
        // silently truncated value.
        let err = engine.g(0, 2, &[4, 0], &[2, 0], &[0; 4]);
        assert!(matches!(err, Err(Error::Capacity(_))));
    }

    #[test]
    fn sigma_zero_detection() {
        assert!(sigma_is_zero(&[vec![0.0, 0.0], vec![0.0, 0.0]]));
        assert!(!sigma_is_zero(&[vec![0.0, 1e-12], vec![1e-12, 0.0]]));
    }
}
