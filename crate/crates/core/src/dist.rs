//! Closed-form photon-number distributions for every input the experiment
//! model considers: ideal, mode-mismatched, lossy, and heralded, plus the
//! headline one-pair interference probabilities.

use crate::error::{Error, Result};
use crate::fock::{ln_factorial, pdc_matrix_element};

/// Single-mode photon-number distribution with a certified tail bound.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonNumberDist {
    probs: Vec<f64>,
    tail_bound: f64,
}

impl PhotonNumberDist {
    /// Validating constructor: each entry in `[0,1]`, total mass 1 ± 1e-9.
    pub fn new(probs: Vec<f64>, tail_bound: f64) -> Result<Self> {
        if tail_bound < 0.0 {
            return Err(Error::domain("tail_bound must be >= 0"));
        }
        for (n, &p) in probs.iter().enumerate() {
            if !(0.0..=1.0 + 1e-12).contains(&p) {
                return Err(Error::domain(format!("P_{n} = {p} outside [0,1]")));
            }
        }
        let total: f64 = probs.iter().sum::<f64>() + tail_bound;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("distribution mass {total} != 1")));
        }
        Ok(PhotonNumberDist { probs, tail_bound })
    }

    /// Constructor for analysis outputs that may carry noise-induced
    /// negative entries; skips the range checks on purpose so that such
    /// entries are visible rather than silently clipped.
    pub fn new_unchecked(probs: Vec<f64>, tail_bound: f64) -> Self {
        PhotonNumberDist { probs, tail_bound }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// P_n, zero beyond the stored range.
    pub fn get(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn cutoff(&self) -> usize {
        self.probs.len().saturating_sub(1)
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }
}

/// Mode-overlap probabilities of the two injected photons.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OverlapParams {
    pub o1: f64,
    pub o2: f64,
}

impl OverlapParams {
    pub fn new(o1: f64, o2: f64) -> Result<Self> {
        for (name, v) in [("o1", o1), ("o2", o2)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(format!("{name} = {v} outside [0,1]")));
            }
        }
        Ok(OverlapParams { o1, o2 })
    }
}

/// Parameters of one heralded single-photon source: SPDC gain of the source
/// crystal, overlap of the heralded photon with the target mode, and the
/// trigger-detector efficiency.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HeraldedSourceParams {
    pub gain_src: f64,
    pub overlap: f64,
    pub trig_eff: f64,
}

impl HeraldedSourceParams {
    pub fn new(gain_src: f64, overlap: f64, trig_eff: f64) -> Result<Self> {
        if !(gain_src >= 1.0) {
            return Err(Error::domain(format!("source gain {gain_src} < 1")));
        }
        if !(0.0..=1.0).contains(&overlap) {
            return Err(Error::domain(format!("overlap {overlap} outside [0,1]")));
        }
        if !(0.0..=1.0).contains(&trig_eff) {
            return Err(Error::domain(format!(
                "trigger efficiency {trig_eff} outside [0,1]"
            )));
        }
        Ok(HeraldedSourceParams {
            gain_src,
            overlap,
            trig_eff,
        })
    }
}

/// Which heralded inputs are unblocked in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TildeInput {
    /// Both photons blocked: spontaneous PDC only.
    Vacuum,
    /// Only the H-polarized photon injected.
    SingleH,
    /// Only the V-polarized photon injected.
    SingleV,
    /// Both photons injected.
    Pair,
}

fn check_gain(g: f64) -> Result<()> {
    if !(g >= 1.0) || !g.is_finite() {
        return Err(Error::domain(format!("gain must be >= 1, got {g}")));
    }
    Ok(())
}

/// One-pair output probability of two-photon interference at a beam
/// splitter: `(2T − 1)²`.
pub fn hom_p11(t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("transmittance {t} outside [0,1]")));
    }
    Ok((2.0 * t - 1.0).powi(2))
}

/// One-pair output probability of two-photon interference in a PDC medium:
/// `(2 − g)² / g³`. Vanishes at gain 2.
pub fn cj_p11(g: f64) -> Result<f64> {
    check_gain(g)?;
    Ok((2.0 - g).powi(2) / g.powi(3))
}

/// Geometric pair distribution of spontaneous PDC on vacuum:
/// `P_n = (g−1)ⁿ / gⁿ⁺¹`.
pub fn spdc_dist(g: f64, cutoff: usize) -> Result<PhotonNumberDist> {
    check_gain(g)?;
    let q = (g - 1.0) / g;
    let mut probs = Vec::with_capacity(cutoff + 1);
    let mut p = 1.0 / g;
    for _ in 0..=cutoff {
        probs.push(p);
        p *= q;
    }
    let tail = q.powi(cutoff as i32 + 1); // geometric remainder
    PhotonNumberDist::new(probs, tail)
}

/// Pair distribution of the PDC output for a one-pair input `|1,1⟩`:
/// `P_n = [(sinh r)^(n−1) / (cosh r)^(n+2) · (n − sinh²r)]²`.
pub fn cj_output_dist(g: f64, cutoff: usize) -> Result<PhotonNumberDist> {
    check_gain(g)?;
    dist_given_input(1, 1, g, cutoff)
}

/// H-mode distribution for input `|j,k⟩`: `P_n = |⟨n, n−j+k| U_g |j,k⟩|²`.
///
/// For `(j,0)` and `(0,k)` this reduces to the binomial-weighted geometric
/// forms `P_{n|j0} = C(n,j)(g−1)^(n−j)/g^(n+1)` and
/// `P_{n|0k} = C(n+k,k)(g−1)ⁿ/g^(n+k+1)`.
pub fn dist_given_input(j: usize, k: usize, g: f64, cutoff: usize) -> Result<PhotonNumberDist> {
    check_gain(g)?;
    let mut probs = Vec::with_capacity(cutoff + 1);
    for n in 0..=cutoff {
        let m = n as i64 - j as i64 + k as i64;
        let p = if m < 0 {
            0.0
        } else {
            pdc_matrix_element(n, m as usize, j, k, g)?.norm_sqr()
        };
        probs.push(p);
    }
    let mass: f64 = probs.iter().sum();
    PhotonNumberDist::new(probs, (1.0 - mass).max(0.0))
}

/// `C(n, k)` in floating point via the log-factorial table.
pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)).exp()
}

/// H-mode output distribution when the configured inputs are imperfectly
/// mode-matched: each injected photon couples with its overlap probability,
/// giving a classical mixture over the four ideal inputs.
pub fn tilde_input_dist(
    input: TildeInput,
    g: f64,
    ov: &OverlapParams,
    cutoff: usize,
) -> Result<PhotonNumberDist> {
    check_gain(g)?;
    let (w, inputs): (Vec<f64>, Vec<(usize, usize)>) = match input {
        TildeInput::Vacuum => (vec![1.0], vec![(0, 0)]),
        TildeInput::SingleH => (vec![1.0 - ov.o1, ov.o1], vec![(0, 0), (1, 0)]),
        TildeInput::SingleV => (vec![1.0 - ov.o2, ov.o2], vec![(0, 0), (0, 1)]),
        TildeInput::Pair => (
            vec![
                (1.0 - ov.o1) * (1.0 - ov.o2),
                (1.0 - ov.o1) * ov.o2,
                ov.o1 * (1.0 - ov.o2),
                ov.o1 * ov.o2,
            ],
            vec![(0, 0), (0, 1), (1, 0), (1, 1)],
        ),
    };
    let mut probs = vec![0.0; cutoff + 1];
    let mut tail = 0.0;
    for (wc, (j, k)) in w.iter().zip(inputs.iter()) {
        if *wc == 0.0 {
            continue;
        }
        let d = dist_given_input(*j, *k, g, cutoff)?;
        for n in 0..=cutoff {
            probs[n] += wc * d.get(n);
        }
        tail += wc * d.tail_bound();
    }
    PhotonNumberDist::new(probs, tail)
}

/// Heralded-source photon-number distribution: binomially thinned SPDC
/// conditioned on a threshold trigger of efficiency `trig_eff`.
///
/// Returns the distribution together with the summation cutoff `m_max`
/// actually used for the source sums (geometric tail below 1e-14).
pub fn heralded_source_dist(
    src: &HeraldedSourceParams,
    cutoff: usize,
) -> Result<(PhotonNumberDist, usize)> {
    if src.gain_src == 1.0 {
        return Err(Error::DegenerateSource);
    }
    check_gain(src.gain_src)?;
    let g = src.gain_src;
    let o = src.overlap;
    let et = src.trig_eff;
    let q = (g - 1.0) / g;
    // m_max from the geometric tail of the source distribution
    let m_max = ((1e-14f64.ln() / q.ln()).ceil() as usize).max(cutoff + 1);
    let p_spdc: Vec<f64> = (0..=m_max).map(|m| q.powi(m as i32) / g).collect();
    let trig = |m: usize| 1.0 - (1.0 - et).powi(m as i32);
    let denom: f64 = (1..=m_max).map(|m| p_spdc[m] * trig(m)).sum();
    if denom <= 0.0 {
        return Err(Error::DegenerateSource);
    }
    let mut probs = Vec::with_capacity(cutoff + 1);
    for n in 0..=cutoff {
        let mut s = 0.0;
        for m in n.max(1)..=m_max {
            let thin = binomial(m, n) * o.powi(n as i32) * (1.0 - o).powi((m - n) as i32);
            s += p_spdc[m] * thin * trig(m);
        }
        probs.push(s / denom);
    }
    let mass: f64 = probs.iter().sum();
    Ok((PhotonNumberDist::new(probs, (1.0 - mass).max(0.0))?, m_max))
}

/// Binomial loss channel with transmission `t`:
/// `P'_n = Σ_{m≥n} P_m C(m,n) tⁿ (1−t)^(m−n)`.
pub fn apply_loss(dist: &PhotonNumberDist, transmission: f64) -> Result<PhotonNumberDist> {
    if !(0.0..=1.0).contains(&transmission) {
        return Err(Error::domain(format!(
            "transmission {transmission} outside [0,1]"
        )));
    }
    let n_max = dist.cutoff();
    let mut probs = vec![0.0; n_max + 1];
    for m in 0..=n_max {
        let pm = dist.get(m);
        if pm == 0.0 {
            continue;
        }
        for n in 0..=m {
            probs[n] += pm
                * binomial(m, n)
                * transmission.powi(n as i32)
                * (1.0 - transmission).powi((m - n) as i32);
        }
    }
    // lost tail mass stays tail mass (loss can only move it downward)
    PhotonNumberDist::new(probs, dist.tail_bound())
}

/// H-mode output distribution of the full experiment: heralded sources
/// (optionally attenuated before the crystal), then the PDC unitary,
/// composed as `P_n = Σ_{j,k} P_{n|jk} P_j^(src1) P_k^(src2)`.
///
/// Source-weight products below 1e-12 are truncated into the tail bound.
pub fn full_output_dist_from_sources(
    src1: &PhotonNumberDist,
    src2: &PhotonNumberDist,
    g: f64,
    cutoff: usize,
) -> Result<PhotonNumberDist> {
    check_gain(g)?;
    let mut probs = vec![0.0; cutoff + 1];
    let mut discarded = src1.tail_bound() + src2.tail_bound();
    let mut tail = 0.0;
    for j in 0..=src1.cutoff() {
        let pj = src1.get(j);
        for k in 0..=src2.cutoff() {
            let w = pj * src2.get(k);
            if w < 1e-12 {
                discarded += w;
                continue;
            }
            let d = dist_given_input(j, k, g, cutoff)?;
            for n in 0..=cutoff {
                probs[n] += w * d.get(n);
            }
            tail += w * d.tail_bound();
        }
    }
    PhotonNumberDist::new(probs, tail + discarded)
}
