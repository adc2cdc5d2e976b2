//! Parameter record describing one full experiment configuration, and the
//! composition of the source, crystal, and loss stages into the final
//! H-mode photon-number distribution.

use crate::dist::{
    apply_loss, full_output_dist_from_sources, heralded_source_dist, HeraldedSourceParams,
    PhotonNumberDist,
};
use crate::error::{Error, Result};

/// All parameters of one experiment run.
///
/// `g1`/`g2` are the source-crystal gains; the exact value 1.0 denotes the
/// weak-pump limit in which a heralded source delivers a Bernoulli(overlap)
/// single photon (the conditional distribution degenerates smoothly to
/// that limit, while an isolated heralded source at gain 1 never triggers).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ExperimentModel {
    /// Parametric gain of the interference crystal.
    pub gain: f64,
    /// Overlap of the heralded H photon with the H-polarized mode.
    pub o1: f64,
    /// Overlap of the heralded V photon with the V-polarized mode.
    pub o2: f64,
    /// Gain of the source crystal feeding the H input.
    pub g1: f64,
    /// Gain of the source crystal feeding the V input.
    pub g2: f64,
    /// Trigger efficiency of the H-source herald.
    pub eta_t1: f64,
    /// Trigger efficiency of the V-source herald.
    pub eta_t2: f64,
    /// Total detection efficiency of the analysis array.
    pub eta: f64,
    /// Detector dead time in pump-pulse units.
    pub n_d: u32,
    /// Transmission of the neutral filter in front of the crystal.
    pub transmission: f64,
}

impl Default for ExperimentModel {
    fn default() -> Self {
        ExperimentModel {
            gain: 1.2,
            o1: 0.65,
            o2: 0.74,
            g1: 1.0,
            g2: 1.0,
            eta_t1: 1.0,
            eta_t2: 1.0,
            eta: 0.8,
            n_d: 0,
            transmission: 1.0,
        }
    }
}

impl ExperimentModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v, lo, hi) in [
            ("gain", self.gain, 1.0, f64::INFINITY),
            ("o1", self.o1, 0.0, 1.0),
            ("o2", self.o2, 0.0, 1.0),
            ("g1", self.g1, 1.0, f64::INFINITY),
            ("g2", self.g2, 1.0, f64::INFINITY),
            ("eta_t1", self.eta_t1, 0.0, 1.0),
            ("eta_t2", self.eta_t2, 0.0, 1.0),
            ("transmission", self.transmission, 0.0, 1.0),
        ] {
            if !(v >= lo && v <= hi) || !v.is_finite() && hi.is_finite() {
                return Err(Error::domain(format!("{name} = {v} outside [{lo}, {hi}]")));
            }
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::domain(format!("eta = {} outside (0,1]", self.eta)));
        }
        Ok(())
    }

    /// Conditional photon-number distribution of one heralded source,
    /// attenuated by the model's front-filter transmission.
    pub fn source_dist(&self, which: SourceArm, cutoff: usize) -> Result<PhotonNumberDist> {
        let (g_src, overlap, trig) = match which {
            SourceArm::H => (self.g1, self.o1, self.eta_t1),
            SourceArm::V => (self.g2, self.o2, self.eta_t2),
        };
        let base = if g_src == 1.0 {
            // weak-pump limit: exactly one source pair, thinned by the overlap
            PhotonNumberDist::new(vec![1.0 - overlap, overlap], 0.0)?
        } else {
            let src = HeraldedSourceParams::new(g_src, overlap, trig)?;
            heralded_source_dist(&src, cutoff)?.0
        };
        if self.transmission == 1.0 {
            Ok(base)
        } else {
            apply_loss(&base, self.transmission)
        }
    }

    /// Full H-mode output distribution of the interference crystal.
    pub fn output_dist(&self, cutoff: usize) -> Result<PhotonNumberDist> {
        self.validate()?;
        let src_cutoff = 24.min(cutoff);
        let src1 = self.source_dist(SourceArm::H, src_cutoff)?;
        let src2 = self.source_dist(SourceArm::V, src_cutoff)?;
        full_output_dist_from_sources(&src1, &src2, self.gain, cutoff)
    }
}

/// Which heralded source arm of the experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceArm {
    H,
    V,
}

/// Full H-mode output distribution for an experiment model.
///
/// Convenience alias for [`ExperimentModel::output_dist`].
pub fn full_output_dist(model: &ExperimentModel, cutoff: usize) -> Result<PhotonNumberDist> {
    model.output_dist(cutoff)
}
