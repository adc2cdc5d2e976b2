//! Staged parameter estimation from coincidence statistics: gain from the
//! spontaneous run first, then each mode overlap from its single-photon
//! auxiliary run, never jointly. A fully populated model then predicts the
//! interference run with no further parameters.

use crate::detector::{coincidence_probs, CoincidenceStats};
use crate::dist::{tilde_input_dist, OverlapParams, PhotonNumberDist, TildeInput};
use crate::error::{Error, Result};
use crate::model::ExperimentModel;

/// Iteration cap of the scalar minimizer.
const MAX_ITER: u32 = 200;
/// Absolute parameter tolerance of the scalar minimizer.
const X_TOL: f64 = 1e-8;
/// Fock cutoff for model coincidence predictions during fitting.
const FIT_CUTOFF: usize = 220;

/// Outcome of a one-parameter fit.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitResult {
    pub value: f64,
    /// 68% interval from a profile scan of the objective at Δχ² = 1;
    /// collapses to `value` when the stats carry no uncertainties.
    pub ci_low: f64,
    pub ci_high: f64,
    /// Weighted sum of squared residuals at the optimum.
    pub residual: f64,
    pub iterations: u32,
    /// Whether Poisson weights were available and used.
    pub weighted: bool,
    /// Set when the optimum pinned to a parameter bound.
    pub at_boundary: bool,
}

/// Weighted least-squares distance between model and measured coincidences.
fn objective(model_probs: &CoincidenceStats, meas: &CoincidenceStats) -> f64 {
    let m = meas.orders().min(model_probs.orders());
    let mut acc = 0.0;
    for i in 1..=m {
        let r = model_probs.get(i) - meas.get(i);
        let w = match meas.sigma() {
            Some(s) => 1.0 / (s[i - 1] * s[i - 1]),
            None => 1.0,
        };
        acc += w * r * r;
    }
    acc
}

/// Golden-section search with a final parabolic refinement step.
/// Deterministic for identical inputs.
fn minimize_scalar<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Result<(f64, u32)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut a = lo;
    let mut b = hi;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iters = 0u32;
    while (b - a) > X_TOL {
        iters += 1;
        if iters > MAX_ITER {
            return Err(Error::NonConvergence(MAX_ITER));
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mut x = 0.5 * (a + b);
    // one parabolic step through (a, mid, b) tightens the last digit
    let xm = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(xm), f(b));
    let denom = (fa - 2.0 * fm + fb).abs();
    if denom > 0.0 {
        let step = 0.5 * (b - a) * (fa - fb) / (fa - 2.0 * fm + fb) / 2.0;
        let cand = xm + step;
        if cand > lo && cand < hi && f(cand) <= fm {
            x = cand;
        }
    }
    Ok((x.clamp(lo, hi), iters))
}

/// Profile-scan confidence bounds at Δχ² = 1 around the optimum; the
/// interval saturates at the parameter bounds.
fn profile_ci<F: Fn(f64) -> f64>(f: &F, x_opt: f64, f_opt: f64, lo: f64, hi: f64) -> (f64, f64) {
    let target = f_opt + 1.0;
    let bisect = |mut inner: f64, mut outer: f64| -> f64 {
        if f(outer) < target {
            return outer; // interval runs into the bound
        }
        for _ in 0..100 {
            let mid = 0.5 * (inner + outer);
            if f(mid) < target {
                inner = mid;
            } else {
                outer = mid;
            }
        }
        0.5 * (inner + outer)
    };
    (bisect(x_opt, lo), bisect(x_opt, hi))
}

fn fit_scalar<F: Fn(f64) -> Result<CoincidenceStats>>(
    forward: F,
    meas: &CoincidenceStats,
    lo: f64,
    hi: f64,
) -> Result<FitResult> {
    let weighted = meas.sigma().is_some();
    let obj = |x: f64| -> f64 {
        match forward(x) {
            Ok(m) => objective(&m, meas),
            Err(_) => f64::INFINITY,
        }
    };
    let (value, iterations) = minimize_scalar(&obj, lo, hi)?;
    let residual = obj(value);
    let at_boundary = (value - lo) < 2.0 * X_TOL || (hi - value) < 2.0 * X_TOL;
    let (ci_low, ci_high) = if weighted {
        profile_ci(&obj, value, residual, lo, hi)
    } else {
        (value, value)
    };
    Ok(FitResult {
        value,
        ci_low,
        ci_high,
        residual,
        iterations,
        weighted,
        at_boundary,
    })
}

/// Fit the parametric gain from a spontaneous-PDC (both inputs blocked)
/// coincidence record. Bounded search on g ∈ [1, 10].
pub fn fit_gain(stats: &CoincidenceStats, eta: f64) -> Result<FitResult> {
    let m = stats.orders();
    let per = eta / m as f64;
    fit_scalar(
        |g| {
            let d = crate::dist::spdc_dist(g, FIT_CUTOFF)?;
            coincidence_probs(&d, per, m)
        },
        stats,
        1.0,
        10.0,
    )
}

/// Which single-photon auxiliary run is being fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapFitMode {
    /// H photon injected, V blocked; recovers the H-mode overlap.
    HInput,
    /// V photon injected, H blocked; recovers the V-mode overlap.
    VInput,
}

/// Fit one mode overlap from its auxiliary run, at a gain already fitted
/// from the spontaneous run.
pub fn fit_overlap(
    stats: &CoincidenceStats,
    eta: f64,
    g: f64,
    mode: OverlapFitMode,
) -> Result<FitResult> {
    let m = stats.orders();
    let per = eta / m as f64;
    fit_scalar(
        |o| {
            let (input, ov) = match mode {
                OverlapFitMode::HInput => (TildeInput::SingleH, OverlapParams { o1: o, o2: 0.0 }),
                OverlapFitMode::VInput => (TildeInput::SingleV, OverlapParams { o1: 0.0, o2: o }),
            };
            let d = tilde_input_dist(input, g, &ov, FIT_CUTOFF)?;
            coincidence_probs(&d, per, m)
        },
        stats,
        0.0,
        1.0,
    )
}

/// Push a fully populated model through the detector array: the deduced
/// photon-number distribution and the coincidences it predicts.
pub fn predict_interference(
    model: &ExperimentModel,
    m_dets: usize,
) -> Result<(PhotonNumberDist, CoincidenceStats)> {
    let dist = model.output_dist(FIT_CUTOFF)?;
    let stats = coincidence_probs(&dist, model.eta / m_dets as f64, m_dets)?;
    Ok((dist, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::spdc_dist;
    use approx::assert_abs_diff_eq;

    fn synth_spdc(g: f64, eta: f64, m: usize) -> CoincidenceStats {
        let d = spdc_dist(g, FIT_CUTOFF).unwrap();
        coincidence_probs(&d, eta / m as f64, m).unwrap()
    }

    #[test]
    fn gain_recovered_from_noiseless_stats() {
        let stats = synth_spdc(2.03, 0.78, 6);
        let fit = fit_gain(&stats, 0.78).unwrap();
        assert_abs_diff_eq!(fit.value, 2.03, epsilon = 1e-6);
        assert!(!fit.at_boundary);
        assert!(!fit.weighted);
    }

    #[test]
    fn vacuum_stats_pin_gain_to_lower_bound() {
        let stats = synth_spdc(1.0, 0.78, 6);
        let fit = fit_gain(&stats, 0.78).unwrap();
        assert_abs_diff_eq!(fit.value, 1.0, epsilon = 1e-6);
        assert!(fit.at_boundary);
    }

    #[test]
    fn overlap_recovered_from_noiseless_stats() {
        let g = 2.03;
        let ov = OverlapParams { o1: 0.65, o2: 0.0 };
        let d = tilde_input_dist(TildeInput::SingleH, g, &ov, FIT_CUTOFF).unwrap();
        let stats = coincidence_probs(&d, 0.78 / 6.0, 6).unwrap();
        let fit = fit_overlap(&stats, 0.78, g, OverlapFitMode::HInput).unwrap();
        assert_abs_diff_eq!(fit.value, 0.65, epsilon = 1e-6);
    }

    #[test]
    fn overlap_boundaries_are_flagged() {
        let g = 1.5;
        for (o_true, _expect_boundary) in [(1.0, true), (0.0, true)] {
            let ov = OverlapParams {
                o1: 0.0,
                o2: o_true,
            };
            let d = tilde_input_dist(TildeInput::SingleV, g, &ov, FIT_CUTOFF).unwrap();
            let stats = coincidence_probs(&d, 0.78 / 6.0, 6).unwrap();
            let fit = fit_overlap(&stats, 0.78, g, OverlapFitMode::VInput).unwrap();
            assert_abs_diff_eq!(fit.value, o_true, epsilon = 1e-5);
            assert!(fit.at_boundary);
        }
    }

    #[test]
    fn round_trip_grid_recovers_parameters() {
        for &g in &[1.2, 1.5, 2.0, 2.03, 3.0] {
            let stats = synth_spdc(g, 0.78, 6);
            let fit = fit_gain(&stats, 0.78).unwrap();
            assert!(
                (fit.value - g).abs() < 1e-5,
                "gain {g}: recovered {}",
                fit.value
            );
            for &o in &[0.5, 0.65, 0.74, 0.9] {
                let ov = OverlapParams { o1: o, o2: 0.0 };
                let d = tilde_input_dist(TildeInput::SingleH, g, &ov, FIT_CUTOFF).unwrap();
                let aux = coincidence_probs(&d, 0.78 / 6.0, 6).unwrap();
                let fo = fit_overlap(&aux, 0.78, g, OverlapFitMode::HInput).unwrap();
                assert!(
                    (fo.value - o).abs() < 1e-5,
                    "overlap {o} at gain {g}: recovered {}",
                    fo.value
                );
            }
        }
    }

    #[test]
    fn objective_is_locally_convex_at_optimum() {
        let stats = synth_spdc(1.7, 0.78, 6);
        let obj = |g: f64| {
            let d = spdc_dist(g, FIT_CUTOFF).unwrap();
            let m = coincidence_probs(&d, 0.13, 6).unwrap();
            objective(&m, &stats)
        };
        let fit = fit_gain(&stats, 0.78).unwrap();
        let h = 1e-3;
        let second = obj(fit.value - h) - 2.0 * obj(fit.value) + obj(fit.value + h);
        assert!(second > 0.0);
    }

    #[test]
    fn fits_are_bit_identical_across_runs() {
        let stats = synth_spdc(1.9, 0.78, 6);
        let a = fit_gain(&stats, 0.78).unwrap();
        let b = fit_gain(&stats, 0.78).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.residual.to_bits(), b.residual.to_bits());
    }

    #[test]
    fn prediction_matches_direct_model_evaluation() {
        let model = ExperimentModel {
            gain: 2.03,
            o1: 0.65,
            o2: 0.74,
            ..Default::default()
        };
        let (dist, stats) = predict_interference(&model, 6).unwrap();
        let direct = model.output_dist(FIT_CUTOFF).unwrap();
        for n in 0..=10 {
            assert_abs_diff_eq!(dist.get(n), direct.get(n), epsilon = 1e-14);
        }
        assert_eq!(stats.orders(), 6);
    }

    #[test]
    fn deduced_p1_tracks_the_truncated_estimator_at_low_gain() {
        // in the low-gain regime the model pathway and the direct
        // coincidence inversion must tell the same story
        let model = ExperimentModel {
            gain: 1.21,
            o1: 0.65,
            o2: 0.74,
            eta: 0.78,
            ..Default::default()
        };
        let (dist, stats) = predict_interference(&model, 6).unwrap();
        let per = 0.78 / 6.0;
        let est = crate::inversion::p1_truncated(&stats, per, 5).unwrap().value;
        assert!(
            (est - dist.get(1)).abs() < 0.01,
            "inverted {est} vs model {}",
            dist.get(1)
        );
    }
}
