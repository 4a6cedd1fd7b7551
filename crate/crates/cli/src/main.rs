//! `sideband`: simulate, fit and tabulate sideband-cooling noise spectra.
//!
//! Exit codes: 0 on success, 2 for configuration or input errors, 3 when a
//! fit does not converge.

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use sideband::constants::{hz_to_rad, TWO_PI};
use sideband::device::{parse_device_file, DeviceParams, REFERENCE_DEVICE_FILE};
use sideband::dynamics::{DriveConfig, DriveStrength, ThermalState};
use sideband::estimation::{
    analyze_cooling_sweep, calibrate_coupling, fit_full_model, fit_lorentzian, fitted_occupancy,
    FitResult, FullModelOptions, LorentzianOptions, SweepEntry, SweepOptions, Weighting,
    DEFAULT_FREE,
};
use sideband::limits::MEASURED_N_ADD_EFF;
use sideband::spectra::{
    output_drive_power, output_noise_spectrum, quanta_reference_omega, read_trace_file,
    write_trace, GridSpec, ModelParams, ParamName, SpectrumTrace, Unit,
};
use sideband::synth::{generate_spectrum, NoiseConfig};

const EXIT_INPUT: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "sideband",
    version,
    about = "Sideband-cooling spectra: simulate, fit, calibrate, sweep, report"
)]
struct Cli {
    /// Device parameter file (key=value); the reference device when absent.
    #[arg(long, global = true, value_name = "FILE")]
    device: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".", value_name = "DIR")]
    out: PathBuf,

    /// Rendering of the result printed to standard output.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Noise seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Print the reference device file and exit.
    #[arg(long)]
    print_paper_defaults: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Write a model output spectrum, with or without measurement noise.
    Simulate(SimulateArgs),
    /// Fit a spectrum trace.
    Fit(FitArgs),
    /// Calibrate the coupling G from a temperature sweep manifest.
    Calibrate(CalibrateArgs),
    /// Fit every trace of a drive-power sweep manifest.
    Sweep(SweepArgs),
    /// Forward-model tables against temperature and drive.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct ThermalArgs {
    /// Mechanical bath temperature (K); overrides --n-m-t.
    #[arg(long, value_name = "K")]
    temperature: Option<f64>,

    /// Mechanical bath occupancy n_m^T.
    #[arg(long, default_value_t = 40.0)]
    n_m_t: f64,

    /// Cavity occupancy n_c.
    #[arg(long, default_value_t = 0.0)]
    n_c: f64,
}

impl ThermalArgs {
    fn state(&self, device: &DeviceParams) -> Result<ThermalState> {
        Ok(match self.temperature {
            Some(t) => ThermalState::from_temperature(t, &device.mech, self.n_c)?,
            None => ThermalState::from_occupancies(self.n_m_t, self.n_c)?,
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GridKind {
    /// ±20·max(Γ_m', κ) around Ω_m, capped at ±2 MHz.
    Sideband,
    /// The sideband span with half the points packed around the mechanical line.
    Resolving,
    /// ±20·Γ_m' around Ω_m.
    Mechanical,
}

#[derive(Args)]
struct SimulateArgs {
    /// Intracavity drive photons.
    #[arg(long, default_value_t = 4000.0)]
    n_d: f64,

    #[command(flatten)]
    thermal: ThermalArgs,

    /// Effective added noise n_add' of the amplifier chain.
    #[arg(long, default_value_t = MEASURED_N_ADD_EFF)]
    n_add: f64,

    /// Drive offset from the red sideband, Δ̃/2π (Hz).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    delta_tilde_hz: f64,

    /// Number of averaged periodograms.
    #[arg(long, default_value_t = 500)]
    n_avg: u64,

    /// Skip the measurement noise.
    #[arg(long)]
    noiseless: bool,

    #[arg(long, value_enum, default_value_t = GridKind::Sideband)]
    grid: GridKind,

    /// Number of grid points.
    #[arg(long)]
    points: Option<usize>,

    /// Half span of the grid (Hz).
    #[arg(long)]
    half_span_hz: Option<f64>,

    /// Pack half of the points into ±this many Hz around the peak.
    #[arg(long)]
    densify_hz: Option<f64>,

    /// File name inside the output directory.
    #[arg(long, default_value = "spectrum.csv")]
    name: String,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Lorentzian,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingArg {
    Model,
    Uniform,
}

impl From<WeightingArg> for Weighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Model => Weighting::Model,
            WeightingArg::Uniform => Weighting::Uniform,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Trace CSV.
    trace: PathBuf,

    #[arg(long, value_enum, default_value_t = ModelKind::Full)]
    model: ModelKind,

    /// Parameters to free on top of n_m_T, n_c, g and n_add_eff.
    #[arg(long, value_delimiter = ',')]
    free: Vec<String>,

    /// Parameters of the default free set to hold at their starting values.
    #[arg(long, value_delimiter = ',')]
    fix: Vec<String>,

    /// Drive photons; read from the trace's `n_d` metadata when absent.
    #[arg(long)]
    n_d: Option<f64>,

    /// Starting occupancies.
    #[command(flatten)]
    thermal: ThermalArgs,

    /// Starting n_add'.
    #[arg(long, default_value_t = MEASURED_N_ADD_EFF)]
    n_add: f64,

    #[arg(long, value_enum, default_value_t = WeightingArg::Model)]
    weighting: WeightingArg,

    /// File name inside the output directory.
    #[arg(long, default_value = "fit.json")]
    name: String,
}

#[derive(Args)]
struct CalibrateArgs {
    /// JSON array of {label, T, trace_path}.
    manifest: PathBuf,

    /// Intracavity photons of the calibration drive.
    #[arg(long, default_value_t = 3.0)]
    n_d: f64,

    /// Drive power leaving the cavity (W); derived from the drive when absent.
    #[arg(long)]
    p_out: Option<f64>,

    /// File name inside the output directory.
    #[arg(long, default_value = "calibration.json")]
    name: String,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON array of {label, n_d, trace_path}.
    manifest: PathBuf,

    /// Starting occupancies.
    #[command(flatten)]
    thermal: ThermalArgs,

    /// Starting n_add'.
    #[arg(long, default_value_t = MEASURED_N_ADD_EFF)]
    n_add: f64,

    /// Parameters to free on top of n_m_T, n_c, g and n_add_eff.
    #[arg(long, value_delimiter = ',')]
    free: Vec<String>,

    /// Base name of the CSV and JSON outputs.
    #[arg(long, default_value = "cooling_curve")]
    name: String,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    thermal: ThermalArgs,

    /// Effective added noise n_add'.
    #[arg(long, default_value_t = MEASURED_N_ADD_EFF)]
    n_add: f64,

    /// Drive photons to tabulate; a 1-2-5 series up to --n-d-max when absent.
    #[arg(long, value_delimiter = ',')]
    n_d: Vec<f64>,

    #[arg(long, default_value_t = 2e5)]
    n_d_max: f64,

    /// Drive photons of the temperature table.
    #[arg(long, default_value_t = 3.0)]
    calibration_n_d: f64,

    /// Temperature table range and step (K).
    #[arg(long, default_value_t = 0.015)]
    t_min: f64,
    #[arg(long, default_value_t = 0.25)]
    t_max: f64,
    #[arg(long, default_value_t = 0.01)]
    t_step: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let degenerate = matches!(
                e.downcast_ref::<sideband::Error>(),
                Some(sideband::Error::DegenerateJacobian { .. })
            );
            ExitCode::from(if degenerate {
                EXIT_NOT_CONVERGED
            } else {
                EXIT_INPUT
            })
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    if cli.print_paper_defaults {
        print!("{REFERENCE_DEVICE_FILE}");
        return Ok(ExitCode::SUCCESS);
    }
    let Some(command) = &cli.command else {
        bail!("no command given; see --help");
    };
    let device = load_device(cli.device.as_deref())?;
    fs::create_dir_all(&cli.out)
        .with_context(|| format!("cannot create output directory {}", cli.out.display()))?;
    match command {
        Command::Simulate(a) => simulate(cli, &device, a),
        Command::Fit(a) => fit(cli, &device, a),
        Command::Calibrate(a) => calibrate(cli, &device, a),
        Command::Sweep(a) => sweep(cli, &device, a),
        Command::Report(a) => report::run(cli, &device, a),
    }
}

fn load_device(path: Option<&Path>) -> Result<DeviceParams> {
    let Some(path) = path else {
        return Ok(DeviceParams::reference());
    };
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read device file {}", path.display()))?;
    parse_device_file(&text).with_context(|| format!("invalid device file {}", path.display()))
}

fn device_label(cli: &Cli) -> String {
    cli.device
        .as_ref()
        .map_or("reference".into(), |p| p.display().to_string())
}

fn write_output(cli: &Cli, name: &str, text: &str) -> Result<PathBuf> {
    let path = cli.out.join(name);
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn parse_names(names: &[String]) -> Result<Vec<ParamName>> {
    names
        .iter()
        .map(|n| n.trim().parse::<ParamName>().map_err(Into::into))
        .collect()
}

fn free_set(extra: &[String], fixed: &[String]) -> Result<Vec<ParamName>> {
    let fixed = parse_names(fixed)?;
    let mut free: Vec<ParamName> = DEFAULT_FREE
        .iter()
        .copied()
        .filter(|n| !fixed.contains(n))
        .collect();
    for n in parse_names(extra)? {
        if !free.contains(&n) {
            free.push(n);
        }
    }
    Ok(free)
}

fn simulate(cli: &Cli, device: &DeviceParams, a: &SimulateArgs) -> Result<ExitCode> {
    let thermal = a.thermal.state(device)?;
    let mut params = ModelParams::from_device(device, a.n_d, &thermal, a.n_add)?;
    params.delta_tilde = hz_to_rad(a.delta_tilde_hz);
    let mut grid = match a.grid {
        GridKind::Sideband => GridSpec::around_sideband(&params),
        GridKind::Resolving => GridSpec::resolving_peak(&params),
        GridKind::Mechanical => GridSpec::mechanical_peak(&params),
    };
    if let Some(p) = a.points {
        grid.points = p;
    }
    if let Some(h) = a.half_span_hz {
        grid.half_span_hz = h;
    }
    if let Some(d) = a.densify_hz {
        grid = grid.with_densify(d);
    }
    let mut trace = if a.noiseless {
        output_noise_spectrum(&grid.build()?, &params)?
    } else {
        generate_spectrum(&params, &NoiseConfig::new(a.n_avg, cli.seed, grid)?)?
    };
    trace.meta.device = Some(device_label(cli));
    let drive = DriveConfig::new(
        &device.cavity,
        params.delta_tilde - device.mech.omega_m(),
        DriveStrength::Photons(a.n_d),
    )?;
    trace.meta.drive = Some(format!(
        "detuning_hz={:e} n_d={:e}",
        drive.detuning() / TWO_PI,
        a.n_d
    ));
    let extra = &mut trace.meta.extra;
    extra.insert("n_d".into(), format!("{:e}", a.n_d));
    extra.insert("n_m_T".into(), format!("{:e}", thermal.n_m_t));
    extra.insert("n_c".into(), format!("{:e}", thermal.n_c));
    extra.insert("n_add_eff".into(), format!("{:e}", a.n_add));
    extra.insert("delta_tilde_hz".into(), format!("{:e}", a.delta_tilde_hz));
    if a.noiseless {
        extra.insert("noiseless".into(), "true".into());
    }
    for w in &trace.meta.warnings {
        eprintln!("warning: {w}");
    }
    let path = write_output(cli, &a.name, &write_trace(&trace))?;
    println!("{}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn read_trace(path: &Path) -> Result<SpectrumTrace> {
    read_trace_file(path).with_context(|| format!("cannot load trace {}", path.display()))
}

fn fit_rows(fit: &FitResult) -> String {
    let mut out = String::from("param,value,sigma\n");
    for (k, v) in &fit.params {
        let s = fit.sigma(k).unwrap_or(f64::NAN);
        out.push_str(&format!("{k},{v:.16e},{s:.16e}\n"));
    }
    out
}

fn fit(cli: &Cli, device: &DeviceParams, a: &FitArgs) -> Result<ExitCode> {
    let trace = read_trace(&a.trace)?;
    let weighting = a.weighting.into();
    let (fit, doc, extra_rows) = match a.model {
        ModelKind::Lorentzian => {
            let opts = LorentzianOptions {
                weighting,
                fixed_floor: None,
            };
            let fit = fit_lorentzian(&trace, &opts)?;
            let doc = json!({ "model": "lorentzian", "fit": fit });
            (fit, doc, String::new())
        }
        ModelKind::Full => {
            let trace = as_quanta(trace, device)?;
            let n_d = match a.n_d {
                Some(n) => n,
                None => trace
                    .meta
                    .extra
                    .get("n_d")
                    .context("no --n-d given and the trace carries no n_d metadata")?
                    .parse()
                    .context("bad n_d metadata in trace")?,
            };
            let thermal = a.thermal.state(device)?;
            let init = ModelParams::from_device(device, n_d, &thermal, a.n_add)?;
            let opts = FullModelOptions {
                free: free_set(&a.free, &a.fix)?,
                weighting,
            };
            let fit = fit_full_model(&trace, &init, &opts)?;
            let (n_m, n_m_sigma) = fitted_occupancy(&init, &fit)?;
            let doc = json!({
                "model": "full",
                "n_d": n_d,
                "n_m": n_m,
                "n_m_sigma": if n_m_sigma.is_finite() { Some(n_m_sigma) } else { None },
                "fit": fit,
            });
            let rows = format!("n_m,{n_m:.16e},{n_m_sigma:.16e}\n");
            (fit, doc, rows)
        }
    };
    let text = to_json(&doc)?;
    write_output(cli, &a.name, &text)?;
    match cli.format.unwrap_or(Format::Json) {
        Format::Json => print!("{text}"),
        Format::Csv => print!("{}{extra_rows}", fit_rows(&fit)),
    }
    for w in &fit.warnings {
        eprintln!("warning: {w}");
    }
    Ok(if fit.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_NOT_CONVERGED)
    })
}

fn as_quanta(trace: SpectrumTrace, device: &DeviceParams) -> Result<SpectrumTrace> {
    Ok(match trace.unit() {
        Unit::Quanta => trace,
        Unit::WattsPerHz => trace.to_quanta(quanta_reference_omega(device))?,
        Unit::M2PerHz => bail!("expected a trace in quanta or W/Hz, found m^2/Hz"),
    })
}

/// Entries whose traces load; the others are skipped with a warning.
fn load_manifest(path: &Path) -> Result<Vec<(SweepEntry, SpectrumTrace)>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read manifest {}", path.display()))?;
    let entries: Vec<SweepEntry> = serde_json::from_str(&text)
        .with_context(|| format!("invalid manifest {}", path.display()))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut out = Vec::new();
    for e in entries {
        let p = dir.join(&e.trace_path);
        match read_trace_file(&p) {
            Ok(t) => out.push((e, t)),
            Err(err) => eprintln!(
                "warning: skipping `{}`: cannot load {}: {err}",
                e.label,
                p.display()
            ),
        }
    }
    if out.is_empty() {
        bail!("no usable traces in manifest {}", path.display());
    }
    Ok(out)
}

fn calibrate(cli: &Cli, device: &DeviceParams, a: &CalibrateArgs) -> Result<ExitCode> {
    let drive = DriveConfig::red_sideband(device, DriveStrength::Photons(a.n_d))?;
    let p_out = match a.p_out {
        Some(p) => p,
        None => output_drive_power(device, &drive)?,
    };
    let w_ref = quanta_reference_omega(device);
    let mut sweep = Vec::new();
    for (e, t) in load_manifest(&a.manifest)? {
        let Some(temp) = e.temperature else {
            eprintln!("warning: skipping `{}`: no temperature `T`", e.label);
            continue;
        };
        let t = match t.unit() {
            Unit::Quanta => t.to_watts_per_hz(w_ref)?,
            _ => t,
        };
        sweep.push((temp, t));
    }
    let r = calibrate_coupling(&sweep, device, &drive, p_out)?;
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    let text = to_json(&r)?;
    write_output(cli, &a.name, &text)?;
    match cli.format.unwrap_or(Format::Json) {
        Format::Json => print!("{text}"),
        Format::Csv => {
            println!("temperature_k,n_bath,area,area_sigma,outlier");
            for p in &r.points {
                println!(
                    "{:.16e},{:.16e},{:.16e},{:.16e},{}",
                    p.temperature, p.n_bath, p.area, p.area_sigma, p.outlier
                );
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep(cli: &Cli, device: &DeviceParams, a: &SweepArgs) -> Result<ExitCode> {
    let mut traces = Vec::new();
    for (e, t) in load_manifest(&a.manifest)? {
        let Some(n_d) = e.n_d else {
            eprintln!("warning: skipping `{}`: no drive photons `n_d`", e.label);
            continue;
        };
        traces.push((n_d, as_quanta(t, device)?));
    }
    let opts = SweepOptions {
        fit: FullModelOptions {
            free: free_set(&a.free, &[])?,
            ..Default::default()
        },
        n_add_guess: a.n_add,
        ..Default::default()
    };
    let curve = analyze_cooling_sweep(&traces, device, &a.thermal.state(device)?, &opts)?;
    for x in &curve.excluded {
        eprintln!("warning: excluded point: {}", serde_json::to_string(x)?);
    }
    let csv = curve.to_csv();
    let text = to_json(&curve)?;
    write_output(cli, &format!("{}.csv", a.name), &csv)?;
    write_output(cli, &format!("{}.json", a.name), &text)?;
    match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => print!("{csv}"),
        Format::Json => print!("{text}"),
    }
    Ok(if curve.points.is_empty() {
        ExitCode::from(EXIT_NOT_CONVERGED)
    } else {
        ExitCode::SUCCESS
    })
}
