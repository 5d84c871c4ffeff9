use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use qfc_core::conversion::{fit_efficiency_curve, optimal_pump_power, read_efficiency_csv, WaveguideSpec};
use qfc_core::link::{link_budget, max_entanglement_distance, surrogate_converter, sweep, write_sweep_csv, LinkModel};
use qfc_core::noise::{celsius_to_kelvin, fit_boltzmann, read_temperature_csv, scale_npr_bandwidth, wavelength_width_to_hz};
use qfc_core::quantum::{unitary_from_angles, BASIS_TAG};
use qfc_core::tomography::{
    max_identity_over_unitaries, mle_reconstruct_detailed, read_records_csv, simulate_counts, subtract_background,
    write_records_csv, TomographyConfig,
};
use qfc_core::ProcessMatrix;

use crate::config::{load_config, ToolkitConfig};
use crate::repro::{calibrated_link_model, reproduce, Target};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "qfc", version, about = "Frequency-conversion link toolkit")]
pub struct Cli {
    /// Configuration file (overrides QFC_CONFIG and the bundled default).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit A·sin²(√(η·P)·L) to a `pump_mW,value,sigma` CSV.
    FitEfficiency {
        csv: PathBuf,
        /// Waveguide entry supplying the length.
        #[arg(long, default_value = "device")]
        waveguide: String,
    },
    /// Raman noise fitting and bandwidth scaling.
    #[command(subcommand)]
    Noise(NoiseCommand),
    /// Process tomography simulation and reconstruction.
    #[command(subcommand)]
    Tomo(TomoCommand),
    /// Fiber link budget and entanglement distance.
    #[command(subcommand)]
    Link(LinkCommand),
    /// Recompute the reference checks and write plot data.
    Reproduce {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(Target::NAMES))]
        target: String,
        /// Directory for plot-ready CSV curves.
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum NoiseCommand {
    /// Fit the Boltzmann amplitude to a `temp_C,counts_Hz,sigma` CSV.
    Fit { csv: PathBuf },
    /// Rescale a noise rate to a new filter bandwidth.
    Scale {
        #[arg(long)]
        npr_hz: f64,
        /// Reference bandwidth, e.g. `12nm`, `15pm`, `2GHz` or plain Hz.
        #[arg(long)]
        ref_bandwidth: String,
        #[arg(long)]
        new_bandwidth: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum TomoCommand {
    /// Simulate the 36 count records of a channel.
    Simulate {
        /// identity, x, y, z, depolarizing:W, surrogate:F or unitary:THETA,PHI,LAMBDA
        #[arg(long, default_value = "identity")]
        channel: String,
        #[arg(long)]
        signal_hz: Option<f64>,
        #[arg(long)]
        background_hz: Option<f64>,
        #[arg(long)]
        duration_s: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV; standard output if absent.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Maximum-likelihood process matrix from a records CSV.
    Reconstruct {
        csv: PathBuf,
        #[arg(long, value_name = "HZ")]
        subtract_background_hz: Option<f64>,
    },
}

#[derive(Debug, Args)]
pub struct LinkArgs {
    /// Fiber attenuation, dB/km.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Detector dark rate, Hz.
    #[arg(long)]
    pub dark_hz: Option<f64>,
    /// Detection gate duty cycle applied to the dark rate.
    #[arg(long)]
    pub duty: Option<f64>,
    /// Surrogate converter fidelity; calibrated to the anchor length if absent.
    #[arg(long)]
    pub chi_fidelity: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum LinkCommand {
    Budget {
        #[arg(long)]
        length_km: f64,
        #[command(flatten)]
        link: LinkArgs,
    },
    MaxDistance {
        #[command(flatten)]
        link: LinkArgs,
    },
    Sweep {
        #[arg(long, default_value_t = 0.0)]
        from_km: f64,
        #[arg(long, default_value_t = 150.0)]
        to_km: f64,
        #[arg(long, default_value_t = 1.0)]
        step_km: f64,
        #[command(flatten)]
        link: LinkArgs,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    ChecksFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::ChecksFailed(_) => EXIT_CHECK_FAILED,
        }
    }
}

impl From<qfc_core::Error> for CliError {
    fn from(e: qfc_core::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<crate::config::ConfigError> for CliError {
    fn from(e: crate::config::ConfigError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn io_err(what: &std::path::Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", what.display()))
}

fn open(path: &std::path::Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

fn emit_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| CliError::Data(e.to_string()))
}

/// Parses a bandwidth such as `12nm`, `15pm`, `2GHz`, `500kHz` or `1e9`
/// (Hz). Wavelength widths are converted at `center_nm`.
pub fn parse_bandwidth(text: &str, center_nm: f64) -> Result<f64, CliError> {
    let t = text.trim();
    let split = t.find(|ch: char| ch.is_ascii_alphabetic() && ch != 'e' && ch != 'E').unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("cannot parse bandwidth \"{text}\"")))?;
    let hz = match unit.trim() {
        "" | "Hz" => value,
        "kHz" => value * 1e3,
        "MHz" => value * 1e6,
        "GHz" => value * 1e9,
        "nm" => wavelength_width_to_hz(value, center_nm),
        "pm" => wavelength_width_to_hz(value * 1e-3, center_nm),
        other => return Err(CliError::Usage(format!("unknown bandwidth unit \"{other}\" in \"{text}\""))),
    };
    if !(hz > 0.0 && hz.is_finite()) {
        return Err(CliError::Usage(format!("bandwidth must be positive, got \"{text}\"")));
    }
    Ok(hz)
}

/// Parses a channel description for `tomo simulate`.
pub fn parse_channel(text: &str) -> Result<ProcessMatrix, CliError> {
    let (kind, arg) = match text.split_once(':') {
        Some((k, a)) => (k, Some(a)),
        None => (text, None),
    };
    let number = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| CliError::Usage(format!("cannot parse number \"{s}\" in channel \"{text}\"")))
    };
    let need = || CliError::Usage(format!("channel \"{text}\" needs a parameter"));
    let channel = match (kind, arg) {
        ("identity", None) => ProcessMatrix::identity(),
        ("z", None) => ProcessMatrix::basis_conjugation(1)?,
        ("x", None) => ProcessMatrix::basis_conjugation(2)?,
        ("y", None) => ProcessMatrix::basis_conjugation(3)?,
        ("depolarizing", a) => ProcessMatrix::depolarizing(number(a.ok_or_else(need)?)?)?,
        ("surrogate", a) => surrogate_converter(number(a.ok_or_else(need)?)?)?,
        ("unitary", a) => {
            let v = a.ok_or_else(need)?.split(',').map(number).collect::<Result<Vec<_>, _>>()?;
            if v.len() != 3 {
                return Err(CliError::Usage(format!("unitary channel needs three angles, got \"{text}\"")));
            }
            ProcessMatrix::from_unitary(&unitary_from_angles(v[0], v[1], v[2]))?
        }
        _ => return Err(CliError::Usage(format!("unknown channel \"{text}\""))),
    };
    Ok(channel)
}

fn link_model(cfg: &ToolkitConfig, args: &LinkArgs) -> Result<LinkModel, CliError> {
    let alpha = args.alpha.unwrap_or(cfg.fiber.attenuation_db_per_km);
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(CliError::Usage(format!("--alpha must be positive, got {alpha}")));
    }
    let mut model = match args.chi_fidelity {
        Some(f) => {
            let mut m = cfg.link_model().with_converter(surrogate_converter(f)?);
            m.fiber.attenuation_db_per_km = alpha;
            m
        }
        None => calibrated_link_model(cfg, alpha)?,
    };
    let dark = args.dark_hz.unwrap_or(cfg.detector.dark_rate_hz);
    if let Some(d) = args.duty {
        if !(d > 0.0 && d <= 1.0) {
            return Err(CliError::Usage(format!("--duty must be in (0, 1], got {d}")));
        }
    }
    model.detector.dark_rate_hz = dark * args.duty.unwrap_or(1.0);
    model.validate()?;
    Ok(model)
}

fn matrix_parts(chi: &ProcessMatrix) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let part = |f: fn(num_complex::Complex64) -> f64| {
        (0..4).map(|i| (0..4).map(|j| f(chi.element(i, j))).collect()).collect()
    };
    (part(|z| z.re), part(|z| z.im))
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::FitEfficiency { csv, waveguide } => {
            let spec = cfg
                .waveguide(&waveguide)
                .ok_or_else(|| CliError::Usage(format!("config has no waveguide \"{waveguide}\"")))?;
            let points = read_efficiency_csv(open(&csv)?)?;
            let fit = fit_efficiency_curve(&points, spec.length_cm)?;
            let fitted = WaveguideSpec { eta_nor_per_w_cm2: fit.eta_nor, amplitude: fit.amplitude, ..spec.clone() };
            emit_json(
                out,
                &json!({
                    "A": fit.amplitude,
                    "eta_nor_per_W_cm2": fit.eta_nor,
                    "residual": fit.residual,
                    "P_max_W": optimal_pump_power(&fitted),
                }),
            )
        }
        Command::Noise(NoiseCommand::Fit { csv }) => {
            let points = read_temperature_csv(open(&csv)?)?;
            let w = &cfg.wavelengths;
            let model = fit_boltzmann(&points, w.pump_nm, w.target_nm, cfg.constants())?;
            let hot = model.npr_at_temperature(celsius_to_kelvin(cfg.noise.reference_temp_c))?;
            let cold = model.npr_at_temperature(celsius_to_kelvin(cfg.noise.cooled_temp_c))?;
            emit_json(
                out,
                &json!({
                    "amplitude_hz": model.amplitude_hz,
                    "frequency_offset_hz": model.frequency_offset_hz(),
                    "temperature_scale_k": model.temperature_scale_k(),
                    "npr_reference_temp_hz": hot,
                    "npr_cooled_temp_hz": cold,
                    "cooling_factor": hot / cold,
                }),
            )
        }
        Command::Noise(NoiseCommand::Scale { npr_hz, ref_bandwidth, new_bandwidth }) => {
            let center = cfg.wavelengths.target_nm;
            let bw_ref = parse_bandwidth(&ref_bandwidth, center)?;
            let bw_new = parse_bandwidth(&new_bandwidth, center)?;
            emit_json(
                out,
                &json!({
                    "ref_bandwidth_hz": bw_ref,
                    "new_bandwidth_hz": bw_new,
                    "npr_hz": scale_npr_bandwidth(npr_hz, bw_ref, bw_new)?,
                }),
            )
        }
        Command::Tomo(TomoCommand::Simulate { channel, signal_hz, background_hz, duration_s, seed, out: path }) => {
            let chi = parse_channel(&channel)?;
            let t = &cfg.tomography;
            let tc = TomographyConfig {
                signal_rate_hz: signal_hz.unwrap_or(t.signal_rate_hz),
                background_rate_hz: background_hz.unwrap_or(0.0),
                duration_per_setting_s: duration_s.unwrap_or(t.duration_per_setting_s),
                rng_seed: seed.unwrap_or(t.rng_seed),
            };
            let records = simulate_counts(&chi, &tc)?;
            match path {
                Some(p) => write_records_csv(&records, File::create(&p).map_err(io_err(&p))?)?,
                None => write_records_csv(&records, out)?,
            }
            Ok(())
        }
        Command::Tomo(TomoCommand::Reconstruct { csv, subtract_background_hz }) => {
            let mut records = read_records_csv(open(&csv)?)?;
            if let Some(b) = subtract_background_hz {
                records = subtract_background(&records, b)?;
            }
            let rec = mle_reconstruct_detailed(&records)?;
            let aligned = max_identity_over_unitaries(&rec.process);
            let (re, im) = matrix_parts(&rec.process);
            emit_json(
                out,
                &json!({
                    "basis": BASIS_TAG,
                    "chi_re": re,
                    "chi_im": im,
                    "chi11": rec.process.identity_weight(),
                    "chi11_unitary_optimized": aligned.value,
                    "angles": aligned.angles,
                    "log_likelihood": rec.log_likelihood,
                    "iterations": rec.iterations,
                }),
            )
        }
        Command::Link(LinkCommand::Budget { length_km, link }) => {
            if !(length_km >= 0.0 && length_km.is_finite()) {
                return Err(CliError::Usage(format!("--length-km must be non-negative, got {length_km}")));
            }
            let model = link_model(&cfg, &link)?;
            emit_json(out, &link_budget(&model, length_km)?)
        }
        Command::Link(LinkCommand::MaxDistance { link }) => {
            let model = link_model(&cfg, &link)?;
            let search = max_entanglement_distance(&model)?;
            emit_json(
                out,
                &json!({
                    "distance_km": search.distance_km,
                    "threshold_found": search.threshold_found,
                    "min_partial_transpose_eigenvalue": search.min_partial_transpose_eigenvalue,
                    "attenuation_db_per_km": model.fiber.attenuation_db_per_km,
                    "dark_rate_hz": model.detector.dark_rate_hz,
                }),
            )
        }
        Command::Link(LinkCommand::Sweep { from_km, to_km, step_km, link, out: path }) => {
            if !(from_km >= 0.0 && to_km >= from_km && step_km > 0.0 && to_km.is_finite()) {
                return Err(CliError::Usage(format!(
                    "need 0 <= --from-km <= --to-km and --step-km > 0, got {from_km}, {to_km}, {step_km}"
                )));
            }
            let model = link_model(&cfg, &link)?;
            let n = ((to_km - from_km) / step_km + 1e-9).floor() as usize;
            let lengths: Vec<f64> = (0..=n).map(|i| from_km + step_km * i as f64).collect();
            let rows = sweep(&model, &lengths)?;
            match path {
                Some(p) => write_sweep_csv(&rows, File::create(&p).map_err(io_err(&p))?)?,
                None => write_sweep_csv(&rows, out)?,
            }
            Ok(())
        }
        Command::Reproduce { target, out_dir } => {
            let target = Target::parse(&target).ok_or_else(|| CliError::Usage(format!("unknown target \"{target}\"")))?;
            let report = reproduce(target, &cfg)?;
            write!(out, "{}", report.render()).map_err(|e| CliError::Data(e.to_string()))?;
            if let Some(dir) = out_dir {
                report.write_curves(&dir).map_err(io_err(&dir))?;
            }
            if report.all_pass() {
                Ok(())
            } else {
                let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
                Err(CliError::ChecksFailed(format!("failed checks: {}", names.join("; "))))
            }
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
