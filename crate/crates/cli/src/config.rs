//! Run configuration: a single JSON document, with command-line flags
//! overriding file fields and file fields overriding built-in defaults.

use cjlab_core::{DetectorArray, ExperimentModel};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ExperimentModel,
    pub detectors: DetectorConfig,
    pub scan: Option<ScanConfig>,
    pub quantities: Option<Vec<Quantity>>,
    pub pulses: Option<u64>,
    pub seed: Option<u64>,
    pub chunk_size: Option<u32>,
    pub cutoff: Option<usize>,
    pub wigner: Option<WignerConfig>,
    pub spectral: Option<SpectralConfig>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub count: usize,
    pub total_eta: f64,
    pub dead_pulses: u32,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            count: 6,
            total_eta: 0.78,
            dead_pulses: 0,
        }
    }
}

impl DetectorConfig {
    pub fn array(&self) -> Result<DetectorArray, CliError> {
        DetectorArray::equal(self.total_eta, self.count, self.dead_pulses)
            .map_err(|e| CliError::config(format!("detectors: {e}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub param: ScanParam,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum ScanParam {
    /// Parametric gain of the interference crystal.
    G,
    /// H-photon mode overlap.
    O1,
    /// V-photon mode overlap.
    O2,
    /// Neutral-filter transmission in front of the crystal.
    Transmission,
    /// Total detection efficiency of the array.
    Eta,
    /// Beam-splitter transmittance (linear-interference quantities only).
    T,
}

impl ScanParam {
    pub fn name(&self) -> &'static str {
        match self {
            ScanParam::G => "g",
            ScanParam::O1 => "o1",
            ScanParam::O2 => "o2",
            ScanParam::Transmission => "transmission",
            ScanParam::Eta => "eta",
            ScanParam::T => "t",
        }
    }

    /// Model with the scanned parameter substituted.
    pub fn apply(&self, base: &ExperimentModel, value: f64) -> ExperimentModel {
        let mut m = *base;
        match self {
            ScanParam::G => m.gain = value,
            ScanParam::O1 => m.o1 = value,
            ScanParam::O2 => m.o2 = value,
            ScanParam::Transmission => m.transmission = value,
            ScanParam::Eta => m.eta = value,
            ScanParam::T => {}
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[clap(rename_all = "snake_case")]
pub enum Quantity {
    /// One-pair coincidence probability of linear two-photon interference,
    /// `(2T−1)²`; requires scanning `t`.
    HomP11,
    /// One-pair output probability of nonlinear two-photon interference,
    /// `(2−g)²/g³`.
    CjP11,
    /// Exact P₁ of the full experiment model.
    P1True,
    /// Five-order truncated P₁ estimate from exact coincidences.
    P1Det5,
    /// Six-order truncated P₁ estimate from exact coincidences.
    P1Det6,
    /// Coincidence probabilities C_1..C_M (one column per order).
    Cm,
}

impl Quantity {
    pub fn name(&self) -> &'static str {
        match self {
            Quantity::HomP11 => "hom_p11",
            Quantity::CjP11 => "cj_p11",
            Quantity::P1True => "p1_true",
            Quantity::P1Det5 => "p1_det5",
            Quantity::P1Det6 => "p1_det6",
            Quantity::Cm => "cm",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WignerConfig {
    pub p_min: f64,
    pub p_max: f64,
    pub n_p: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub n_y: usize,
    pub cutoff: usize,
}

impl Default for WignerConfig {
    fn default() -> Self {
        WignerConfig {
            p_min: -4.0,
            p_max: 4.0,
            n_p: 201,
            y_min: -4.0,
            y_max: 4.0,
            n_y: 201,
            cutoff: 24,
        }
    }
}

impl WignerConfig {
    pub fn grid_spec(&self) -> cjlab_core::GridSpec {
        cjlab_core::GridSpec {
            p_min: self.p_min,
            p_max: self.p_max,
            n_p: self.n_p,
            y_min: self.y_min,
            y_max: self.y_max,
            n_y: self.n_y,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralConfig {
    pub pump_sigma: f64,
    pub pm_length: f64,
    pub gvm_slope: f64,
    pub grid_size: usize,
    pub span_sigmas: f64,
    pub filter: Option<FilterConfig>,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        SpectralConfig {
            pump_sigma: 2.0,
            pm_length: 3.0,
            gvm_slope: 0.0,
            grid_size: 256,
            span_sigmas: 4.0,
            filter: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub center: f64,
    pub width: f64,
    pub mode: cjlab_core::FilterMode,
}

impl RunConfig {
    pub fn load(path: Option<&std::path::Path>) -> Result<RunConfig, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| {
                    CliError::config(format!(
                        "{}: line {}, column {}: {e}",
                        p.display(),
                        e.line(),
                        e.column()
                    ))
                })
            }
        }
    }
}

/// Coincidence statistics on disk: the JSON sidecar written by `simulate`
/// and consumed by `fit` and `invert`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsFile {
    /// C_1..C_M.
    pub c_m: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pulses: Option<u64>,
    pub detectors: DetectorConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ExperimentModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chunk_size: Option<u32>,
}

impl StatsFile {
    pub fn from_stats(
        stats: &cjlab_core::CoincidenceStats,
        detectors: DetectorConfig,
        model: Option<ExperimentModel>,
        seed: Option<u64>,
        chunk_size: Option<u32>,
    ) -> StatsFile {
        StatsFile {
            c_m: stats.probs().to_vec(),
            sigma: stats.sigma().map(|s| s.to_vec()),
            counts: stats.counts().map(|c| c.to_vec()),
            pulses: stats.pulses(),
            detectors,
            model,
            seed,
            chunk_size,
        }
    }

    pub fn to_stats(&self) -> Result<cjlab_core::CoincidenceStats, CliError> {
        match (&self.counts, self.pulses) {
            (Some(counts), Some(pulses)) => {
                let k = self.detectors.count;
                let subsets: Vec<u64> = (1..=counts.len()).map(|m| binomial_u64(k, m)).collect();
                cjlab_core::CoincidenceStats::from_counts(counts.clone(), subsets, pulses)
                    .map_err(|e| CliError::config(format!("stats file: {e}")))
            }
            _ => cjlab_core::CoincidenceStats::exact(self.c_m.clone())
                .map_err(|e| CliError::config(format!("stats file: {e}"))),
        }
    }

    pub fn load(path: &std::path::Path) -> Result<StatsFile, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::config(format!(
                "{}: line {}, column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })
    }
}

fn binomial_u64(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n - i) as u64 / (i + 1) as u64;
    }
    acc
}
