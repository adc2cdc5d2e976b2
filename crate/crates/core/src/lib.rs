//! Numerical laboratory for two-photon nonlinear interference in a
//! parametric down-conversion medium.
//!
//! The crate covers the full chain of a photon-number-resolved
//! interference experiment at desk scale:
//!
//! - [`fock`]: truncated two-mode Fock space, the PDC and beam-splitter
//!   unitaries as block propagators, and their closed-form matrix elements;
//! - [`dist`]: closed-form output photon-number distributions for ideal,
//!   mode-mismatched, lossy, and heralded inputs;
//! - [`detector`]: threshold-detector coincidence forward model, dead-time
//!   correction, heralding efficiency, click-level g²(0);
//! - [`inversion`]: linear recovery of photon-number probabilities from
//!   m-fold coincidences, with exact rational estimator coefficients;
//! - [`fitting`]: the staged gain/overlap estimation procedure and the
//!   fitted-model prediction of the interference run;
//! - [`montecarlo`]: pulse-by-pulse simulation with heralded sources,
//!   photon routing, dead time, and deterministic chunked RNG streams;
//! - [`spectral`]: joint-spectral-amplitude models, filtering, Schmidt
//!   decomposition, spectral purity;
//! - [`wigner`]: two-mode Wigner-function slices of the model output.

pub mod detector;
pub mod dist;
pub mod error;
pub mod fitting;
pub mod fock;
pub mod gridfile;
pub mod inversion;
pub mod model;
pub mod montecarlo;
pub mod spectral;
pub mod wigner;

pub use detector::{
    click_prob_subset, coincidence_probs, deadtime_correct, g2_threshold, klyshko_efficiency,
    CoincidenceStats, DetectorArray,
};
pub use dist::{
    apply_loss, cj_output_dist, cj_p11, dist_given_input, full_output_dist_from_sources,
    heralded_source_dist, hom_p11, spdc_dist, tilde_input_dist, HeraldedSourceParams,
    OverlapParams, PhotonNumberDist, TildeInput,
};
pub use error::{Error, Result};
pub use fitting::{fit_gain, fit_overlap, predict_interference, FitResult, OverlapFitMode};
pub use fock::{
    apply_bs_numeric, apply_pdc_numeric, apply_pdc_raw, bs_matrix_element, pdc_matrix_element,
    SqueezeParams, TwoModeFockState,
};
pub use inversion::{p1_truncated, pn_solve, truncation_scan, InversionCoefficients, P1Estimate};
pub use model::{full_output_dist, ExperimentModel, SourceArm};
pub use montecarlo::{estimate_cm, sample_pulses, sample_pulses_chunked, ClickRecord};
pub use spectral::{
    apply_filter, build_gaussian_jsa, build_jsa, purity_from_g2, purity_from_g2_threshold,
    schmidt_purity, FilterMode, JointSpectralAmplitude, SchmidtSpectrum,
};
pub use wigner::{
    output_mixed_state, wigner_point, wigner_slice, GridSpec, TwoModeMixedState, WignerGrid,
};
