//! Forward model from photon-number distributions to threshold-detector
//! coincidence probabilities, plus efficiency calibration, dead-time
//! correction, and click-level second-order correlation.

use crate::dist::{binomial, PhotonNumberDist};
use crate::error::{Error, Result};

/// A bank of threshold detectors. Each efficiency bundles routing
/// probability and quantum efficiency, so the total over the array is at
/// most one.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DetectorArray {
    efficiencies: Vec<f64>,
    dead_pulses: u32,
}

impl DetectorArray {
    pub fn new(efficiencies: Vec<f64>, dead_pulses: u32) -> Result<Self> {
        if efficiencies.is_empty() {
            return Err(Error::domain("detector array must be nonempty"));
        }
        let mut total = 0.0;
        for (i, &e) in efficiencies.iter().enumerate() {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::domain(format!("eta_{i} = {e} outside [0,1]")));
            }
            total += e;
        }
        if total > 1.0 + 1e-12 {
            return Err(Error::domain(format!(
                "total routed efficiency {total} exceeds 1"
            )));
        }
        Ok(DetectorArray {
            efficiencies,
            dead_pulses,
        })
    }

    /// `k` detectors sharing a total efficiency equally.
    pub fn equal(total_eta: f64, k: usize, dead_pulses: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::domain("detector count must be positive"));
        }
        Self::new(vec![total_eta / k as f64; k], dead_pulses)
    }

    /// Dead pulses from a dead time and pulse period: `⌊t_d / t_0⌋`.
    pub fn dead_pulses_from_times(t_dead: f64, t_pulse: f64) -> u32 {
        (t_dead / t_pulse).floor().max(0.0) as u32
    }

    pub fn efficiencies(&self) -> &[f64] {
        &self.efficiencies
    }

    pub fn len(&self) -> usize {
        self.efficiencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.efficiencies.is_empty()
    }

    pub fn dead_pulses(&self) -> u32 {
        self.dead_pulses
    }
}

/// Measured or simulated m-fold coincidence probabilities `C_1..C_M`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CoincidenceStats {
    probs: Vec<f64>,
    counts: Option<Vec<u64>>,
    sigma: Option<Vec<f64>>,
    pulses: Option<u64>,
}

impl CoincidenceStats {
    /// Exact (noise-free) coincidence probabilities.
    pub fn exact(probs: Vec<f64>) -> Result<Self> {
        Self::validate_probs(&probs)?;
        Ok(CoincidenceStats {
            probs,
            counts: None,
            sigma: None,
            pulses: None,
        })
    }

    /// Counted coincidences over a pulse train; attaches binomial standard
    /// errors `σ_m = sqrt(C_m (1−C_m) / pulses)`, floored at the one-count
    /// level so zero-count orders keep a finite weight.
    pub fn from_counts(counts: Vec<u64>, subsets: Vec<u64>, pulses: u64) -> Result<Self> {
        if pulses == 0 {
            return Err(Error::domain("pulse count must be positive"));
        }
        if counts.len() != subsets.len() {
            return Err(Error::domain("counts and subset sizes differ in length"));
        }
        let probs: Vec<f64> = counts
            .iter()
            .zip(subsets.iter())
            .map(|(&c, &s)| c as f64 / (s as f64 * pulses as f64))
            .collect();
        Self::validate_probs(&probs)?;
        let sigma = probs
            .iter()
            .map(|&c| {
                let var =
                    (c * (1.0 - c) / pulses as f64).max(1.0 / (pulses as f64 * pulses as f64));
                var.sqrt()
            })
            .collect();
        Ok(CoincidenceStats {
            probs,
            counts: Some(counts),
            sigma: Some(sigma),
            pulses: Some(pulses),
        })
    }

    fn validate_probs(probs: &[f64]) -> Result<()> {
        let mut prev = 1.0 + 1e-12;
        for (i, &c) in probs.iter().enumerate() {
            if !(-1e-12..=1.0 + 1e-12).contains(&c) {
                return Err(Error::domain(format!("C_{} = {c} outside [0,1]", i + 1)));
            }
            if c > prev + 1e-12 {
                return Err(Error::domain(format!(
                    "coincidence order violated at C_{}",
                    i + 1
                )));
            }
            prev = c;
        }
        Ok(())
    }

    /// `C_1..C_M` in order.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `C_m` (1-based order).
    pub fn get(&self, m: usize) -> f64 {
        self.probs[m - 1]
    }

    pub fn orders(&self) -> usize {
        self.probs.len()
    }

    pub fn sigma(&self) -> Option<&[f64]> {
        self.sigma.as_deref()
    }

    pub fn counts(&self) -> Option<&[u64]> {
        self.counts.as_deref()
    }

    pub fn pulses(&self) -> Option<u64> {
        self.pulses
    }
}

/// Probability that every detector in a subset clicks when exactly `n`
/// photons arrive, by inclusion-exclusion over the subset.
pub fn click_prob_subset(n: u32, subset_effs: &[f64]) -> Result<f64> {
    let total: f64 = subset_effs.iter().sum();
    if total > 1.0 + 1e-12 {
        return Err(Error::domain(format!(
            "subset efficiency sum {total} exceeds 1"
        )));
    }
    if subset_effs.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(Error::domain("subset efficiencies must lie in [0,1]"));
    }
    let m = subset_effs.len();
    let mut acc = 0.0;
    // sum over all sub-subsets, sign by parity
    for mask in 0u32..(1 << m) {
        let mut esum = 0.0;
        let mut bits = 0;
        for (i, &e) in subset_effs.iter().enumerate() {
            if mask & (1 << i) != 0 {
                esum += e;
                bits += 1;
            }
        }
        let sign = if bits % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * (1.0 - esum).powi(n as i32);
    }
    Ok(acc)
}

/// Kahan-compensated accumulator for the alternating detector sums.
#[derive(Default)]
struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

/// m-fold coincidence probabilities of an equal-efficiency array:
/// `C_m = Σ_n P_n Σ_r (−1)^r C(m,r) (1 − rη)^n`, with `eta` the
/// per-detector efficiency.
///
/// `C_m` counts any m detectors firing together (the fixed-subset
/// convention averaged over subsets), not exactly-m responses. A physical
/// equal-split array needs `M·η ≤ 1`; the expansion itself is valid for
/// any `η ∈ [0,1]` and is accepted as such, since the inversion identities
/// hold order by order regardless.
pub fn coincidence_probs(
    dist: &PhotonNumberDist,
    eta: f64,
    m_max: usize,
) -> Result<CoincidenceStats> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::domain(format!("eta = {eta} outside [0,1]")));
    }
    let mut probs = Vec::with_capacity(m_max);
    for m in 1..=m_max {
        let mut acc = Compensated::default();
        for n in m..=dist.cutoff() {
            let pn = dist.get(n);
            if pn == 0.0 {
                continue;
            }
            let mut resp = Compensated::default();
            for r in 0..=m {
                let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
                resp.add(sign * binomial(m, r) * (1.0 - r as f64 * eta).powi(n as i32));
            }
            acc.add(pn * resp.sum);
        }
        probs.push(acc.sum);
    }
    // model values at unphysical eta may step outside [0,1]; skip the
    // measured-stats validation on this constructor path
    Ok(CoincidenceStats {
        probs,
        counts: None,
        sigma: None,
        pulses: None,
    })
}

/// Dead-time correction of a measured per-pulse response probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadtimeCorrection {
    /// Genuine per-pulse response probability.
    pub p: f64,
    /// Count-rate attenuation `λ = 1 − n_d p*`, so that `λ·p = p*`.
    pub lambda: f64,
}

/// Invert the dead-time attenuation: `p = p* / (1 − n_d p*)`.
pub fn deadtime_correct(p_star: f64, n_d: u32) -> Result<DeadtimeCorrection> {
    let limit = 1.0 / (1.0 + n_d as f64);
    if !(0.0..limit).contains(&p_star) {
        return Err(Error::domain(format!(
            "measured rate {p_star} outside [0, 1/(1+n_d)) = [0, {limit})"
        )));
    }
    let lambda = 1.0 - n_d as f64 * p_star;
    Ok(DeadtimeCorrection {
        p: p_star / lambda,
        lambda,
    })
}

/// Heralding (Klyshko) efficiencies from singles and coincidence rates:
/// `η_V = N_HV / N_H`, `η_H = N_HV / N_V`.
pub fn klyshko_efficiency(n_h: f64, n_v: f64, n_hv: f64) -> Result<(f64, f64)> {
    if n_h <= 0.0 || n_v <= 0.0 {
        return Err(Error::domain("singles rates must be positive"));
    }
    if n_hv < 0.0 || n_hv > n_h.min(n_v) {
        return Err(Error::domain(format!(
            "coincidence rate {n_hv} exceeds a singles rate"
        )));
    }
    Ok((n_hv / n_v, n_hv / n_h))
}

/// Per-mode truncated thermal expectation `E[x^n]` with the tail of the
/// geometric series kept below 1e-12.
fn thermal_moment(mean: f64, x: f64) -> f64 {
    if mean <= 0.0 {
        return 1.0;
    }
    let w = mean / (1.0 + mean);
    let base = 1.0 / (1.0 + mean);
    let mut acc = 0.0;
    let mut pw = base; // P(n) = w^n / (1+mean)
    let mut xv = 1.0;
    let mut n = 0usize;
    loop {
        acc += pw * xv;
        // remaining probability mass
        let tail = pw * w / (1.0 - w);
        if tail < 1e-12 && n > 2 {
            break;
        }
        pw *= w;
        xv *= x;
        n += 1;
        if n > 100_000 {
            break;
        }
    }
    acc
}

/// Click-level `g²(0)` of a balanced HBT split of a multimode thermal
/// state: per-mode thermal occupations proportional to the Schmidt weights
/// (total mean `mu`), each output arm a threshold detector routed with
/// efficiency `eta/2`.
pub fn g2_threshold(schmidt_weights: &[f64], mu: f64, eta: f64) -> Result<f64> {
    let total: f64 = schmidt_weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!(
            "Schmidt weights sum to {total}, expected 1"
        )));
    }
    if mu <= 0.0 {
        return Err(Error::domain("mean photon number must be positive"));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::domain(format!("eta = {eta} outside (0,1]")));
    }
    let arm = eta / 2.0;
    let mut none_a = 1.0;
    let mut none_ab = 1.0;
    for &w in schmidt_weights {
        let m = mu * w;
        none_a *= thermal_moment(m, 1.0 - arm);
        none_ab *= thermal_moment(m, 1.0 - 2.0 * arm);
    }
    let c_a = 1.0 - none_a;
    let c_ab = 1.0 - 2.0 * none_a + none_ab;
    Ok(c_ab / (c_a * c_a))
}

/// Geometric Schmidt-weight family `c_j² = (1−w) w^j` with purity
/// `(1−w)/(1+w)`; spans every purity in (0, 1]. The truncated sequence is
/// renormalized so the weights sum to one exactly.
pub fn geometric_schmidt_weights(purity: f64) -> Result<Vec<f64>> {
    if !(purity > 0.0 && purity <= 1.0) {
        return Err(Error::domain(format!("purity {purity} outside (0,1]")));
    }
    let w = (1.0 - purity) / (1.0 + purity);
    if w == 0.0 {
        return Ok(vec![1.0]);
    }
    let n = ((1e-14f64.ln() / w.ln()).ceil() as usize + 1).min(200_000);
    let mut weights: Vec<f64> = (0..n).map(|j| (1.0 - w) * w.powi(j as i32)).collect();
    let total: f64 = weights.iter().sum();
    for x in &mut weights {
        *x /= total;
    }
    Ok(weights)
}
