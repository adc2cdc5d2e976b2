//! `cjlab`: command-line driver for the two-photon nonlinear interference
//! laboratory. Subcommands cover parameter scans, pulse-train simulation,
//! staged model fitting, coincidence inversion, and spectral / phase-space
//! exports. Every command is deterministic given its config and seed.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cjlab_core::detector::coincidence_probs;
use cjlab_core::fitting::{fit_gain, fit_overlap, predict_interference, OverlapFitMode};
use cjlab_core::inversion::{p1_truncated, pn_solve};
use cjlab_core::montecarlo::{estimate_cm, sample_pulses_chunked, DEFAULT_CHUNK};
use cjlab_core::spectral::{apply_filter, build_jsa, schmidt_purity};
use cjlab_core::wigner::{output_mixed_state, wigner_slice};
use cjlab_core::{cj_p11, hom_p11, ExperimentModel, FitResult};

use config::{
    DetectorConfig, Quantity, RunConfig, ScanConfig, ScanParam, SpectralConfig, StatsFile,
};

/// Error carrying the process exit code:
/// 2 = configuration, 3 = numeric non-convergence, 4 = I/O.
#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(2, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(4, message)
    }
}

impl From<cjlab_core::Error> for CliError {
    fn from(e: cjlab_core::Error) -> Self {
        let code = match &e {
            cjlab_core::Error::NonConvergence(_) => 3,
            cjlab_core::Error::Io { .. } => 4,
            _ => 2,
        };
        CliError::new(code, e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "cjlab",
    about = "Numerical laboratory for two-photon nonlinear interference in parametric down-conversion",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep a model parameter and emit the requested quantities as CSV.
    Scan(ScanArgs),
    /// Simulate a pulse train; write the click record and a stats summary.
    Simulate(SimulateArgs),
    /// Staged fit (gain, then each overlap) from auxiliary-run statistics.
    Fit(FitArgs),
    /// Recover photon-number probabilities from measured coincidences.
    Invert(InvertArgs),
    /// Reconstruct the Wigner-function slice of the model output state.
    Wigner(WignerArgs),
    /// Build a joint spectral amplitude, filter it, report the Schmidt spectrum.
    Spectral(SpectralArgs),
}

#[derive(Args)]
struct ScanArgs {
    /// JSON run configuration (flags override file fields).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    param: Option<ScanParam>,
    #[arg(long)]
    start: Option<f64>,
    #[arg(long)]
    stop: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Quantities to emit (repeatable or comma-separated).
    #[arg(long, value_enum, value_delimiter = ',')]
    quantity: Vec<Quantity>,
    /// Output CSV path.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    pulses: Option<u64>,
    /// RNG seed; mandatory (here or in the config) for stochastic runs.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    chunk_size: Option<u32>,
    /// Binary click-record output path.
    #[arg(long)]
    output_record: Option<PathBuf>,
    /// JSON statistics output path.
    #[arg(long)]
    output_stats: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Stats from the spontaneous run (both inputs blocked).
    #[arg(long)]
    spdc: PathBuf,
    /// Stats from the H-photon-only auxiliary run.
    #[arg(long)]
    h_input: PathBuf,
    /// Stats from the V-photon-only auxiliary run.
    #[arg(long)]
    v_input: PathBuf,
    /// Stats from the two-photon interference run (optional comparison).
    #[arg(long)]
    interference: Option<PathBuf>,
    /// Total detection efficiency; defaults to the value in the stats files.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct InvertArgs {
    /// Stats JSON produced by `simulate` (or hand-written).
    #[arg(long)]
    stats: PathBuf,
    #[arg(long)]
    eta: Option<f64>,
    /// Truncation order of the P1 estimator.
    #[arg(long, default_value_t = 5)]
    orders: usize,
    /// Support cutoff of the full linear solve (0 disables it).
    #[arg(long, default_value_t = 6)]
    cutoff: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct WignerArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    /// csv or bin.
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Args)]
struct SpectralArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// JSA grid output path (csv or bin per --format).
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: String,
    /// JSON report (purity, Schmidt coefficients, filter transmission).
    #[arg(long)]
    report: Option<PathBuf>,
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("CJLAB_THREADS") {
        if let Ok(n) = threads.trim().parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Scan(args) => cmd_scan(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Invert(args) => cmd_invert(args),
        Command::Wigner(args) => cmd_wigner(args),
        Command::Spectral(args) => cmd_spectral(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn cmd_scan(args: ScanArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let scan = match (args.param, &cfg.scan) {
        (Some(param), file) => ScanConfig {
            param,
            start: args
                .start
                .or(file.as_ref().map(|s| s.start))
                .ok_or_else(|| CliError::config("scan: missing --start (field scan.start)"))?,
            stop: args
                .stop
                .or(file.as_ref().map(|s| s.stop))
                .ok_or_else(|| CliError::config("scan: missing --stop (field scan.stop)"))?,
            steps: args.steps.or(file.as_ref().map(|s| s.steps)).unwrap_or(101),
        },
        (None, Some(file)) => ScanConfig {
            param: file.param,
            start: args.start.unwrap_or(file.start),
            stop: args.stop.unwrap_or(file.stop),
            steps: args.steps.unwrap_or(file.steps),
        },
        (None, None) => {
            return Err(CliError::config(
                "scan: no scan axis given (flag --param or field scan.param)",
            ))
        }
    };
    if scan.steps < 2 {
        return Err(CliError::config("scan: steps must be at least 2"));
    }
    let quantities = if !args.quantity.is_empty() {
        args.quantity.clone()
    } else {
        cfg.quantities
            .clone()
            .ok_or_else(|| CliError::config("scan: no quantities requested"))?
    };
    if quantities.contains(&Quantity::HomP11) && scan.param != ScanParam::T {
        return Err(CliError::config(
            "scan: quantity hom_p11 requires scanning the beam-splitter transmittance t",
        ));
    }
    let needs_model = quantities
        .iter()
        .any(|q| !matches!(q, Quantity::HomP11 | Quantity::CjP11));
    if needs_model && scan.param == ScanParam::T {
        return Err(CliError::config(
            "scan: model quantities cannot be scanned over the beam-splitter axis t",
        ));
    }
    let m_dets = cfg.detectors.count;
    let cutoff = cfg.cutoff.unwrap_or(260);

    let mut header = vec![scan.param.name().to_string()];
    for q in &quantities {
        match q {
            Quantity::Cm => {
                for m in 1..=m_dets {
                    header.push(format!("c{m}"));
                }
            }
            other => header.push(other.name().to_string()),
        }
    }
    let mut csv = String::new();
    csv.push_str(&header.join(","));
    csv.push_str("\r\n");

    for i in 0..scan.steps {
        let value = scan.start + (scan.stop - scan.start) * i as f64 / (scan.steps - 1) as f64;
        let mut row = vec![fmt17(value)];
        let model = scan.param.apply(&cfg.model, value);
        // evaluated lazily: scans of closed-form quantities skip the model
        let mut dist_cache: Option<cjlab_core::PhotonNumberDist> = None;
        for q in &quantities {
            match q {
                Quantity::HomP11 => row.push(fmt17(hom_p11(value)?)),
                Quantity::CjP11 => {
                    let g = if scan.param == ScanParam::G {
                        value
                    } else {
                        model.gain
                    };
                    row.push(fmt17(cj_p11(g)?));
                }
                _ => {
                    if dist_cache.is_none() {
                        dist_cache = Some(model.output_dist(cutoff)?);
                    }
                    let dist = dist_cache.as_ref().unwrap();
                    let eta_per = model.eta / m_dets as f64;
                    match q {
                        Quantity::P1True => row.push(fmt17(dist.get(1))),
                        Quantity::P1Det5 | Quantity::P1Det6 => {
                            let m = if *q == Quantity::P1Det5 { 5 } else { 6 };
                            let stats = coincidence_probs(dist, eta_per, m)?;
                            row.push(fmt17(p1_truncated(&stats, eta_per, m)?.value));
                        }
                        Quantity::Cm => {
                            let stats = coincidence_probs(dist, eta_per, m_dets)?;
                            for m in 1..=m_dets {
                                row.push(fmt17(stats.get(m)));
                            }
                        }
                        _ => unreachable!(),
                    }
                }
            }
        }
        csv.push_str(&row.join(","));
        csv.push_str("\r\n");
    }
    write_file(&args.output, csv.as_bytes())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let pulses = args
        .pulses
        .or(cfg.pulses)
        .ok_or_else(|| CliError::config("simulate: missing --pulses (field pulses)"))?;
    let seed = args.seed.or(cfg.seed).ok_or_else(|| {
        CliError::config("simulate: missing --seed (field seed); stochastic commands require one")
    })?;
    let chunk = args.chunk_size.or(cfg.chunk_size).unwrap_or(DEFAULT_CHUNK);
    let dets = cfg.detectors.array()?;
    let record = sample_pulses_chunked(&cfg.model, &dets, pulses, seed, chunk)?;
    if let Some(path) = &args.output_record {
        write_file(path, &record.to_bytes())?;
    }
    let stats = estimate_cm(&record, cfg.detectors.count)?;
    let file = StatsFile::from_stats(
        &stats,
        cfg.detectors,
        Some(cfg.model),
        Some(seed),
        Some(chunk),
    );
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| CliError::config(format!("stats serialization: {e}")))?;
    write_file(&args.output_stats, json.as_bytes())
}

#[derive(Serialize)]
struct FitStage {
    value: f64,
    ci_low: f64,
    ci_high: f64,
    residual: f64,
    iterations: u32,
    weighted: bool,
    at_boundary: bool,
}

impl From<FitResult> for FitStage {
    fn from(f: FitResult) -> Self {
        FitStage {
            value: f.value,
            ci_low: f.ci_low,
            ci_high: f.ci_high,
            residual: f.residual,
            iterations: f.iterations,
            weighted: f.weighted,
            at_boundary: f.at_boundary,
        }
    }
}

#[derive(Serialize)]
struct FitReport {
    gain: FitStage,
    o1: FitStage,
    o2: FitStage,
    /// Whether the overlap stages carried no usable signal (vacuum bundle).
    degenerate_overlaps: bool,
    predicted_c_m: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    measured_c_m: Option<Vec<f64>>,
    deduced_p_n: Vec<f64>,
    resolved_model: ExperimentModel,
    detectors: DetectorConfig,
}

fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    let spdc = StatsFile::load(&args.spdc)?;
    let h_aux = StatsFile::load(&args.h_input)?;
    let v_aux = StatsFile::load(&args.v_input)?;
    let eta = args.eta.unwrap_or(spdc.detectors.total_eta);
    let detectors = spdc.detectors;

    let fg = fit_gain(&spdc.to_stats()?, eta)?;
    let fo1 = fit_overlap(&h_aux.to_stats()?, eta, fg.value, OverlapFitMode::HInput)?;
    let fo2 = fit_overlap(&v_aux.to_stats()?, eta, fg.value, OverlapFitMode::VInput)?;
    // a gain pinned at 1 leaves the overlaps unidentifiable: the auxiliary
    // distributions no longer depend on them through the crystal
    let degenerate = fg.value - 1.0 < 1e-6
        && h_aux.to_stats()?.probs().iter().all(|&c| c < 1e-12)
        && v_aux.to_stats()?.probs().iter().all(|&c| c < 1e-12);

    let mut model = spdc.model.unwrap_or_default();
    model.gain = fg.value;
    model.o1 = fo1.value;
    model.o2 = fo2.value;
    model.eta = eta;
    let (dist, predicted) = predict_interference(&model, detectors.count)?;
    let measured = match &args.interference {
        Some(path) => Some(StatsFile::load(path)?.c_m),
        None => None,
    };
    let report = FitReport {
        gain: fg.into(),
        o1: fo1.into(),
        o2: fo2.into(),
        degenerate_overlaps: degenerate,
        predicted_c_m: predicted.probs().to_vec(),
        measured_c_m: measured,
        deduced_p_n: dist.probs().iter().copied().take(25).collect(),
        resolved_model: model,
        detectors,
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::config(format!("report serialization: {e}")))?;
    write_file(&args.output, json.as_bytes())
}

#[derive(Serialize)]
struct InvertReport {
    p1_estimate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    p1_sigma: Option<f64>,
    orders: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_n: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_n_sigma: Option<Vec<f64>>,
    ill_conditioned: bool,
    negative_components: Vec<usize>,
    eta_per_detector: f64,
}

fn cmd_invert(args: InvertArgs) -> Result<(), CliError> {
    let file = StatsFile::load(&args.stats)?;
    let eta_total = args.eta.unwrap_or(file.detectors.total_eta);
    let eta_per = eta_total / file.detectors.count as f64;
    let stats = file.to_stats()?;
    let p1 = p1_truncated(&stats, eta_per, args.orders)?;
    let (p_n, p_n_sigma, ill, neg) = if args.cutoff > 0 {
        let solved = pn_solve(&stats, eta_per, args.cutoff)?;
        (
            Some(solved.dist.probs().to_vec()),
            solved.sigma.clone(),
            solved.ill_conditioned,
            solved.negative_components,
        )
    } else {
        (None, None, false, vec![])
    };
    let report = InvertReport {
        p1_estimate: p1.value,
        p1_sigma: p1.sigma,
        orders: args.orders,
        p_n,
        p_n_sigma,
        ill_conditioned: ill,
        negative_components: neg,
        eta_per_detector: eta_per,
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::config(format!("report serialization: {e}")))?;
    write_file(&args.output, json.as_bytes())
}

fn cmd_wigner(args: WignerArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let wcfg = cfg.wigner.unwrap_or_default();
    let state = output_mixed_state(&cfg.model, wcfg.cutoff)?;
    let grid = wigner_slice(&state, &wcfg.grid_spec())?;
    match args.format.as_str() {
        "csv" => write_file(&args.output, grid.to_csv().as_bytes()),
        "bin" => write_file(&args.output, &grid.to_bytes()),
        other => Err(CliError::config(format!(
            "wigner: unknown format '{other}' (csv or bin)"
        ))),
    }
}

#[derive(Serialize)]
struct SpectralReport {
    purity: f64,
    schmidt_coefficients: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    transmitted_fraction: Option<f64>,
    config: SpectralConfig,
}

fn cmd_spectral(args: SpectralArgs) -> Result<(), CliError> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    let scfg = cfg.spectral.unwrap_or_default();
    let jsa = build_jsa(
        scfg.pump_sigma,
        scfg.pm_length,
        scfg.gvm_slope,
        scfg.grid_size,
        scfg.span_sigmas,
    )?;
    let (jsa, transmitted) = match &scfg.filter {
        Some(f) => {
            let filtered = apply_filter(&jsa, f.center, f.width, f.mode)?;
            (filtered.jsa, Some(filtered.transmitted_fraction))
        }
        None => (jsa, None),
    };
    if let Some(path) = &args.output {
        match args.format.as_str() {
            "csv" => write_file(path, jsa.to_csv().as_bytes())?,
            "bin" => write_file(path, &jsa.to_bytes())?,
            other => {
                return Err(CliError::config(format!(
                    "spectral: unknown format '{other}' (csv or bin)"
                )))
            }
        }
    }
    if let Some(path) = &args.report {
        let spectrum = schmidt_purity(&jsa);
        let report = SpectralReport {
            purity: spectrum.purity,
            schmidt_coefficients: spectrum.coefficients.into_iter().take(16).collect(),
            transmitted_fraction: transmitted,
            config: scfg,
        };
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::config(format!("report serialization: {e}")))?;
        write_file(path, json.as_bytes())?;
    }
    Ok(())
}
