//! Subcommands of the `cqed` binary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cqed_core::calibration::{
    calibrate_direct_cnot_with, calibrated_gate_full, CalibrationReport, SearchSpace,
};
use cqed_core::channels::{coherence_limit, Coherence};
use cqed_core::clifford::gate_counts_statistics;
use cqed_core::rb::{
    epg_upper_bound, fit_decay, fit_leakage, interleaved_epg, GateSet, NoiseModel, RbConfig,
    RbEngine, RbOutcome, RbVariant,
};
use cqed_core::spectrum::{
    j0_candidates_for_zz, static_rates, zz_perturbative, zz_truncation_delta, ReferenceCoupler,
    ZZ_TRUNCATION_TOLERANCE_HZ,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ConfigError, DeviceConfig};
use crate::exec;
use crate::manifest::RunManifest;
use crate::report::{self, FitEntry, RbFitReport};

#[derive(Debug, Parser)]
#[command(
    name = "cqed",
    version,
    about = "Static and driven analysis of coupled transmon pairs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Device description (TOML).
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving the outputs and manifest.json; stdout otherwise.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Worker threads; does not change results.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// ZZ, μ, J_eff and dispersive shifts of one device.
    Statics(Common),
    /// ZZ and J_eff over a grid of mean frequency and detuning.
    Sweep(SweepArgs),
    /// Cross-resonance rates versus drive amplitude.
    Zx(CurveArgs),
    /// Control Stark term versus drive amplitude.
    Stark(CurveArgs),
    /// Calibrate a direct CNOT at one or more gate times.
    Calibrate(CalibrateArgs),
    /// Simulated randomized benchmarking.
    Rb(RbArgs),
    /// Direct coupling that reproduces a measured static ZZ.
    FitJ0(FitJ0Args),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 4.3)]
    pub mean_freq_start: f64,
    #[arg(long, default_value_t = 5.5)]
    pub mean_freq_stop: f64,
    #[arg(long, default_value_t = 200)]
    pub mean_freq_points: usize,
    /// Comma-separated qubit detunings in MHz (qubit 0 minus qubit 1).
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true, allow_negative_numbers = true)]
    pub detunings: Vec<f64>,
    /// Add the single-coupler comparison columns.
    #[arg(long)]
    pub reference_single_coupler: bool,
    /// Reference coupling; defaults to the config's [reference] table.
    #[arg(long)]
    pub reference_j_mhz: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub reference_detuning_mhz: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CurveArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated CR drive amplitudes in MHz.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub omegas: Vec<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RbNoiseArgs {
    #[arg(long)]
    pub depolarizing_per_clifford: Option<f64>,
    #[arg(long)]
    pub depolarizing_per_cnot: Option<f64>,
    /// Injected |1>-|2> exchange of the control per Clifford.
    #[arg(long)]
    pub leakage_per_clifford: Option<f64>,
    /// Apply the config's T1/T2 to every primitive.
    #[arg(long)]
    pub coherence: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated gate times in ns.
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "180")]
    pub gate_times: Vec<f64>,
    /// Keep the DRAG coefficients at zero.
    #[arg(long)]
    pub no_drag: bool,
    /// Also run RB per gate time and write the error table.
    #[arg(long)]
    pub error_table: bool,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "1,10,20,50,100,150,200,300")]
    pub lengths: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    #[command(flatten)]
    pub noise: RbNoiseArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GateSource {
    /// Exact CNOT and single-qubit gates.
    Ideal,
    /// CNOT from a pulse calibration of the configured device.
    Calibrated,
}

fn parse_variant(s: &str) -> Result<RbVariant, String> {
    s.parse().map_err(|e: cqed_core::Error| e.to_string())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RbArgs {
    #[command(flatten)]
    pub common: Common,
    /// standard, interleaved, purity or leakage.
    #[arg(long, value_parser = parse_variant, default_value = "standard")]
    pub variant: RbVariant,
    #[arg(long, value_delimiter = ',', num_args = 1.., default_value = "1,10,20,50,100,150,200,300")]
    pub lengths: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = GateSource::Ideal)]
    pub gates: GateSource,
    /// CNOT duration in ns; also the calibration target for calibrated gates.
    #[arg(long, default_value_t = 180.0)]
    pub cnot_ns: f64,
    /// Levels per transmon for ideal gates; 3 is forced for leakage.
    #[arg(long, default_value_t = 2)]
    pub levels: usize,
    #[command(flatten)]
    pub noise: RbNoiseArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitJ0Args {
    #[command(flatten)]
    pub common: Common,
    /// Measured static ZZ in kHz.
    #[arg(long, allow_negative_numbers = true)]
    pub zz_khz: f64,
    /// Scanned J0 range in MHz.
    #[arg(
        long,
        value_delimiter = ',',
        num_args = 2,
        default_value = "0,20",
        allow_negative_numbers = true
    )]
    pub bracket_mhz: Vec<f64>,
    #[arg(long, default_value_t = 201)]
    pub scan_points: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0:#}")]
    Compute(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Compute(_) => 1,
        }
    }
}

impl From<cqed_core::Error> for CliError {
    fn from(e: cqed_core::Error) -> Self {
        CliError::Compute(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Compute(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Compute(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Compute(e.into())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn load_device(common: &Common) -> CliResult<DeviceConfig> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| usage("--config is required"))?;
    Ok(DeviceConfig::load(path)?)
}

/// Collects outputs either in `--out` (plus a manifest) or on stdout.
struct Sink {
    dir: Option<PathBuf>,
    manifest: RunManifest,
}

impl Sink {
    fn new(command: &str, common: &Common) -> CliResult<Self> {
        if let Some(dir) = &common.out {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self {
            dir: common.out.clone(),
            manifest: RunManifest::new(command, common.config.as_deref(), common.seed),
        })
    }

    /// Writes one output. Without `--out`, only `primary` outputs are printed.
    fn emit(
        &mut self,
        name: &str,
        primary: bool,
        write: impl FnOnce(&mut dyn Write) -> CliResult,
    ) -> CliResult {
        match &self.dir {
            Some(dir) => {
                let mut f = BufWriter::new(File::create(dir.join(name))?);
                write(&mut f)?;
                f.flush()?;
                self.manifest.outputs.push(name.to_string());
            }
            None if primary => {
                let stdout = std::io::stdout();
                let mut lock = stdout.lock();
                write(&mut lock)?;
                lock.flush()?;
            }
            None => {}
        }
        Ok(())
    }

    fn finish(self) -> CliResult {
        if let Some(dir) = &self.dir {
            let path = self.manifest.write(dir)?;
            log::info!("wrote {}", path.display());
        }
        Ok(())
    }
}

fn json_out<T: Serialize>(value: &T) -> impl FnOnce(&mut dyn Write) -> CliResult + '_ {
    move |w| Ok(w.write_all(report::to_json(value)?.as_bytes())?)
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> CliResult {
    let threads = match &cli.command {
        Command::Statics(c) => c.threads,
        Command::Sweep(a) => a.common.threads,
        Command::Zx(a) | Command::Stark(a) => a.common.threads,
        Command::Calibrate(a) => a.common.threads,
        Command::Rb(a) => a.common.threads,
        Command::FitJ0(a) => a.common.threads,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Compute(e.into()))?;
    pool.install(|| match cli.command {
        Command::Statics(c) => statics(&c),
        Command::Sweep(a) => sweep(&a),
        Command::Zx(a) => curve(&a, false),
        Command::Stark(a) => curve(&a, true),
        Command::Calibrate(a) => calibrate(&a),
        Command::Rb(a) => rb(&a),
        Command::FitJ0(a) => fit_j0(&a),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StaticsReport {
    pub name: String,
    pub control: usize,
    pub zz_hz: f64,
    /// Second-order formula; only for devices without bus modes.
    pub zz_perturbative_hz: Option<f64>,
    /// ZZ change from one extra level per mode.
    pub zz_truncation_delta_hz: f64,
    pub mu: f64,
    pub j_eff_mhz: f64,
    /// `|J_eff / ZZ|`.
    pub jeff_over_zz: f64,
    /// `chi_hz[bus][qubit]`.
    pub chi_hz: Vec<[f64; 2]>,
}

pub fn statics_report(dev: &DeviceConfig) -> cqed_core::Result<StaticsReport> {
    let r = static_rates(&dev.model, dev.control)?;
    let t = &dev.model.transmons;
    let zz_perturbative_hz = if dev.model.buses.is_empty() {
        let delta = (t[0].frequency_ghz - t[1].frequency_ghz) * 1e3;
        zz_perturbative(
            dev.model.j0_ghz * 1e3,
            delta,
            t[0].anharmonicity_ghz * 1e3,
            t[1].anharmonicity_ghz * 1e3,
        )
        .ok()
        .map(|k| k * 1e3)
    } else {
        None
    };
    let jeff_over_zz = if r.zz_hz == 0.0 {
        0.0
    } else {
        (r.j_eff_mhz * 1e6 / r.zz_hz).abs()
    };
    let zz_truncation_delta_hz = zz_truncation_delta(&dev.model)?;
    if zz_truncation_delta_hz.abs() > ZZ_TRUNCATION_TOLERANCE_HZ {
        log::warn!("ZZ moves by {zz_truncation_delta_hz:.0} Hz with one more level per mode; raise the truncation");
    }
    Ok(StaticsReport {
        name: dev.name.clone(),
        control: dev.control,
        zz_hz: r.zz_hz,
        zz_perturbative_hz,
        zz_truncation_delta_hz,
        mu: r.mu,
        j_eff_mhz: r.j_eff_mhz,
        jeff_over_zz,
        chi_hz: r.chi_hz,
    })
}

fn statics(common: &Common) -> CliResult {
    let dev = load_device(common)?;
    let mut sink = Sink::new("statics", common)?;
    sink.manifest.param("device", &dev);
    let rep = statics_report(&dev)?;
    sink.emit("statics.json", true, json_out(&rep))?;
    sink.finish()
}

/// `points` evenly spaced values from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![start],
        n => (0..n)
            .map(|k| start + (stop - start) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

fn sweep(a: &SweepArgs) -> CliResult {
    let dev = load_device(&a.common)?;
    if a.detunings.is_empty() {
        return Err(usage("--detunings needs at least one value"));
    }
    if a.mean_freq_points == 0 || !(a.mean_freq_start > 0.0 && a.mean_freq_stop > 0.0) {
        return Err(usage(
            "the mean-frequency grid needs positive bounds and at least one point",
        ));
    }
    let reference = if a.reference_single_coupler {
        let base = dev.reference;
        let j = a.reference_j_mhz.or(base.map(|r| r.j_mhz));
        let d = a.reference_detuning_mhz.or(base.map(|r| r.detuning_mhz));
        match (j, d) {
            (Some(j_mhz), Some(detuning_mhz)) => Some(ReferenceCoupler { j_mhz, detuning_mhz }),
            _ => {
                return Err(usage(
                    "--reference-single-coupler needs --reference-j-mhz and --reference-detuning-mhz or a [reference] table",
                ))
            }
        }
    } else {
        None
    };
    let means = linspace(a.mean_freq_start, a.mean_freq_stop, a.mean_freq_points);
    let mut sink = Sink::new("sweep", &a.common)?;
    sink.manifest
        .param("device", &dev)
        .param("args", a)
        .param("reference", &reference);
    let rows = exec::sweep(&dev.model, &means, &a.detunings, reference)?;
    let flagged = rows.iter().filter(|r| r.flagged).count();
    if flagged > 0 {
        log::warn!("{flagged} sweep points flagged (ambiguous labels or vanishing ZZ)");
    }
    sink.emit("sweep.csv", true, |w| {
        Ok(report::write_sweep(w, &rows, reference.is_some())?)
    })?;
    sink.finish()
}

fn curve(a: &CurveArgs, stark_only: bool) -> CliResult {
    let dev = load_device(&a.common)?;
    if a.omegas.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(usage("--omegas must be finite and non-negative"));
    }
    let name = if stark_only { "stark" } else { "zx" };
    let mut sink = Sink::new(name, &a.common)?;
    sink.manifest.param("device", &dev).param("args", a);
    if stark_only {
        let rows = exec::stark_curve(&dev.model, dev.control, &a.omegas)?;
        sink.emit("stark.csv", true, |w| Ok(report::write_stark(w, &rows)?))?;
    } else {
        let rows = exec::zx_curve(&dev.model, dev.control, &a.omegas)?;
        sink.emit("zx.csv", true, |w| Ok(report::write_curve(w, &rows)?))?;
    }
    sink.finish()
}

fn noise_model(n: &RbNoiseArgs, coherence: Option<Coherence>) -> CliResult<NoiseModel> {
    let coherence = if n.coherence {
        Some(
            coherence
                .ok_or_else(|| usage("--coherence needs a [coherence] table in the config"))?,
        )
    } else {
        None
    };
    let model = NoiseModel {
        depolarizing_per_clifford: n.depolarizing_per_clifford,
        depolarizing_per_cnot: n.depolarizing_per_cnot,
        coherence,
        leakage_per_clifford: n.leakage_per_clifford,
    };
    model.validate().map_err(|e| usage(e.to_string()))?;
    Ok(model)
}

fn rb_config(lengths: &[usize], samples: usize, seed: u64) -> CliResult<RbConfig> {
    let cfg = RbConfig {
        lengths: lengths.to_vec(),
        samples,
        seed,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

/// Mean CNOTs per Clifford of the compiler, from a fixed sample.
pub fn sampled_cnot_per_clifford(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gate_counts_statistics(exec::clifford_table(), 100_000, 180.0, &mut rng).cnot_per_clifford
}

fn calibrate(a: &CalibrateArgs) -> CliResult {
    let dev = load_device(&a.common)?;
    if a.gate_times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(usage("--gate-times must be positive"));
    }
    let noise = noise_model(&a.noise, dev.coherence)?;
    let rb_cfg = rb_config(&a.lengths, a.samples, a.common.seed)?;
    let mut sink = Sink::new("calibrate", &a.common)?;
    sink.manifest.param("device", &dev).param("args", a);
    let space = SearchSpace { drag: !a.no_drag };
    if a.error_table {
        let cpc = sampled_cnot_per_clifford(a.common.seed);
        let rows = exec::gate_times(&dev.model, dev.control, &a.gate_times, &noise, &rb_cfg, cpc);
        for r in &rows {
            if let Some(e) = &r.error {
                log::warn!("gate time {} ns: {e}", r.gate_time_ns);
            }
        }
        sink.emit("gate_times.csv", true, |w| {
            Ok(report::write_gate_times(w, &rows)?)
        })?;
        return sink.finish();
    }
    use rayon::prelude::*;
    let reports: Vec<CalibrationReport> = a
        .gate_times
        .par_iter()
        .map(|&t| calibrate_direct_cnot_with(&dev.model, dev.control, t, space))
        .collect::<cqed_core::Result<_>>()?;
    if let Some(c) = &dev.coherence {
        for r in &reports {
            log::info!(
                "{} ns: F = {:.6}, coherence limit {:.3e}",
                r.pulse.gate_time_ns,
                r.fidelity,
                coherence_limit(c, r.pulse.gate_time_ns)?
            );
        }
    }
    sink.emit("calibration.json", true, json_out(&reports))?;
    sink.finish()
}

fn rb(a: &RbArgs) -> CliResult {
    let dev = match (&a.common.config, a.gates) {
        (None, GateSource::Ideal) => None,
        _ => Some(load_device(&a.common)?),
    };
    let coherence = dev.as_ref().and_then(|d| d.coherence);
    let noise = noise_model(&a.noise, coherence)?;
    let cfg = rb_config(&a.lengths, a.samples, a.common.seed)?;
    if !(a.cnot_ns.is_finite() && a.cnot_ns > 0.0) {
        return Err(usage("--cnot-ns must be positive"));
    }
    let mut sink = Sink::new("rb", &a.common)?;
    sink.manifest
        .param("device", &dev)
        .param("args", a)
        .param("noise", &noise);

    let gates = match a.gates {
        GateSource::Ideal => {
            let leaky = a.variant == RbVariant::Leakage || noise.leakage_per_clifford.is_some();
            let levels = if leaky { a.levels.max(3) } else { a.levels };
            GateSet::ideal(levels, a.cnot_ns).map_err(|e| usage(e.to_string()))?
        }
        GateSource::Calibrated => {
            let dev = dev
                .as_ref()
                .ok_or_else(|| usage("--gates calibrated needs --config"))?;
            let rep = calibrate_direct_cnot_with(
                &dev.model,
                dev.control,
                a.cnot_ns,
                SearchSpace::default(),
            )?;
            log::info!(
                "calibrated CNOT: F = {:.6}, leakage {:.2e}",
                rep.fidelity,
                rep.leakage
            );
            GateSet::calibrated(
                calibrated_gate_full(&dev.model, &rep.pulse)?,
                dev.control,
                a.cnot_ns,
            )?
        }
    };
    let table = exec::clifford_table();
    let engine = RbEngine::new(table, &gates, &noise).map_err(|e| usage(e.to_string()))?;
    let outcomes = exec::rb(&engine, a.variant, &cfg)?;
    let reference = if a.variant == RbVariant::Interleaved {
        Some(exec::rb(&engine, RbVariant::Standard, &cfg)?)
    } else {
        None
    };

    let cpc = sampled_cnot_per_clifford(a.common.seed);
    let fit_report = rb_fit_report(&outcomes, reference.as_deref(), cpc);
    let mut all: Vec<RbOutcome> = reference.unwrap_or_default();
    all.extend(outcomes);
    sink.emit("rb.csv", true, |w| Ok(report::write_rb(w, &all)?))?;
    sink.emit("rb_fit.json", false, json_out(&fit_report))?;
    sink.finish()
}

/// Fits every outcome; with a standard reference the CNOT-interleaved EPG is
/// added, otherwise the EPC-derived upper bound of a standard run.
pub fn rb_fit_report(
    outcomes: &[RbOutcome],
    reference: Option<&[RbOutcome]>,
    cnot_per_clifford: f64,
) -> RbFitReport {
    let mut fits = Vec::new();
    let decay = |o: &RbOutcome| match o.variant {
        RbVariant::Leakage => match fit_leakage(o) {
            Ok(fit) => FitEntry::Leakage {
                label: o.label(),
                fit,
            },
            Err(e) => FitEntry::Failed {
                label: o.label(),
                error: e.to_string(),
            },
        },
        _ => match fit_decay(o) {
            Ok(fit) => FitEntry::Decay {
                label: o.label(),
                fit,
            },
            Err(e) => FitEntry::Failed {
                label: o.label(),
                error: e.to_string(),
            },
        },
    };
    for o in reference.unwrap_or_default().iter().chain(outcomes) {
        fits.push(decay(o));
    }
    let standard = fits.iter().find_map(|f| match f {
        FitEntry::Decay { label, fit } if label == "standard" => Some(*fit),
        _ => None,
    });
    let interleaved = fits.iter().find_map(|f| match f {
        FitEntry::Decay { label, fit } if label == "interleaved" => Some(*fit),
        _ => None,
    });
    let interleaved_epg = match (standard, interleaved) {
        (Some(r), Some(i)) => {
            let (e, s) = interleaved_epg(&r, &i);
            Some([e, s])
        }
        _ => None,
    };
    RbFitReport {
        fits,
        interleaved_epg,
        epg_upper: standard.and_then(|f| epg_upper_bound(f.epc, cnot_per_clifford).ok()),
        cnot_per_clifford,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitJ0Report {
    pub zz_target_khz: f64,
    /// Candidate closest to the configured J0.
    pub j0_mhz: f64,
    /// Every J0 in the scanned range reproducing the target.
    pub candidates_mhz: Vec<f64>,
}

/// Solves for J0 and picks the root nearest the device's nominal value.
pub fn fit_j0_report(
    dev: &DeviceConfig,
    zz_khz: f64,
    bracket_mhz: (f64, f64),
    points: usize,
) -> CliResult<FitJ0Report> {
    let candidates = j0_candidates_for_zz(&dev.model, zz_khz * 1e3, bracket_mhz, points)?;
    let nominal = dev.model.j0_ghz * 1e3;
    let j0 = candidates
        .iter()
        .copied()
        .min_by(|a, b| (a - nominal).abs().total_cmp(&(b - nominal).abs()))
        .ok_or_else(|| {
            CliError::Compute(anyhow::anyhow!(
                "no J0 in [{}, {}] MHz reproduces ZZ = {zz_khz} kHz",
                bracket_mhz.0,
                bracket_mhz.1
            ))
        })?;
    Ok(FitJ0Report {
        zz_target_khz: zz_khz,
        j0_mhz: j0,
        candidates_mhz: candidates,
    })
}

fn fit_j0(a: &FitJ0Args) -> CliResult {
    let dev = load_device(&a.common)?;
    let (lo, hi) = (a.bracket_mhz[0], a.bracket_mhz[1]);
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(usage("--bracket-mhz needs two increasing values"));
    }
    let mut sink = Sink::new("fit-j0", &a.common)?;
    sink.manifest.param("device", &dev).param("args", a);
    if a.scan_points < 2 {
        return Err(usage("--scan-points must be at least 2"));
    }
    let rep = fit_j0_report(&dev, a.zz_khz, (lo, hi), a.scan_points)?;
    sink.emit("fit_j0.json", true, json_out(&rep))?;
    sink.finish()
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
