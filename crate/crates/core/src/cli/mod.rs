//! Command-line front end.

pub mod pipeline;
pub mod presets;
pub mod report;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bounds::{entry_time_estimate, envelope_z, EffortSettings, MarginRule};
use crate::energy::DEFAULT_BETA;
use crate::error::{Error, Result};
use crate::simulator::{write_audit_json, write_csv, Scenario, DEFAULT_DT};
use crate::state::SystemState;
use presets::{preset_jobs, Job, Overrides, Preset, BOUND_TRAJECTORIES, DEFAULT_ETA};

#[derive(Debug, Parser)]
#[command(name = "swingguard", version, about = "Transient frequency control for lossless power networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario file or a named preset.
    #[command(visible_alias = "simulate")]
    Run(RunArgs),
    /// Synchronization condition, region level and membership.
    Certify(CertifyArgs),
    /// Control effort bound with its relaxation sandwich.
    Bound(BoundArgs),
    /// Robustness margin search and noisy runs.
    Robust(RobustArgs),
    /// Comparison envelope for a controlled bus outside its band.
    Envelope(EnvelopeArgs),
}

#[derive(Debug, Args)]
pub struct NetworkArg {
    /// Network JSON file, or builtin:ieee39 / builtin:two_bus.
    #[arg(long)]
    pub network: String,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub net: NetworkArg,
    #[arg(long, conflicts_with = "preset")]
    pub scenario: Option<PathBuf>,
    /// outage_g9, sinusoid_30pct, delayed_12s, gamma_sweep, noisy_measurement or bound_sweep_100.
    #[arg(long, required_unless_present = "scenario")]
    pub preset: Option<String>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Gains for the sweeps (comma separated; `inf` selects the discontinuous law).
    #[arg(long, value_delimiter = ',')]
    pub gamma: Option<Vec<f64>>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Keep every n-th integration step in the trajectory.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Additional decimation of CSV rows.
    #[arg(long, default_value_t = 1)]
    pub csv_stride: usize,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub net: NetworkArg,
    /// Time at which the injections are evaluated (s).
    #[arg(long, default_value_t = 0.0)]
    pub time: f64,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    pub beta: f64,
    /// JSON state {lambda, omega, t} to test for membership.
    #[arg(long)]
    pub state: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub net: NetworkArg,
    #[arg(long)]
    pub bus: Option<u32>,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    pub eta: f64,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    pub beta: f64,
    #[arg(long, default_value_t = 16)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Closed-loop runs from random states in the level set.
    #[arg(long, default_value_t = 0)]
    pub trajectories: usize,
    #[arg(long, default_value_t = 10.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = DEFAULT_DT)]
    pub dt: f64,
}

#[derive(Debug, Args)]
pub struct RobustArgs {
    #[command(flatten)]
    pub net: NetworkArg,
    #[arg(long, default_value_t = 20)]
    pub runs: usize,
    /// Form of the robustness inequalities used for the simulated margin.
    #[arg(long, value_enum, default_value_t = MarginArg::Literal)]
    pub margin: MarginArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 60.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = DEFAULT_DT)]
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MarginArg {
    Literal,
    WorstCase,
}

impl From<MarginArg> for MarginRule {
    fn from(m: MarginArg) -> Self {
        match m {
            MarginArg::Literal => MarginRule::Literal,
            MarginArg::WorstCase => MarginRule::WorstCase,
        }
    }
}

#[derive(Debug, Args)]
pub struct EnvelopeArgs {
    #[command(flatten)]
    pub net: NetworkArg,
    #[arg(long)]
    pub bus: u32,
    /// Initial frequency (rad/s), outside the band.
    #[arg(long, allow_hyphen_values = true)]
    pub omega0: f64,
    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = DEFAULT_DT)]
    pub dt: f64,
    /// Tighten the bound by this much and report the entry time (rad/s).
    #[arg(long)]
    pub epsilon: Option<f64>,
}

/// What to run and where to write artifacts.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub network: String,
    pub scenario: Option<PathBuf>,
    pub preset: Option<Preset>,
    pub out_dir: PathBuf,
    pub overrides: Overrides,
    pub csv_stride: usize,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

/// Runs a scenario or preset, writing per-run CSV and audit JSON plus a
/// combined `report.txt`. Returns the report.
pub fn run(config: &RunConfig) -> Result<String> {
    let net = pipeline::resolve_network(&config.network)?;
    let ov = &config.overrides;
    let jobs = match (&config.scenario, config.preset) {
        (Some(path), _) => {
            let mut sc = Scenario::load(path)?;
            if let Some(dt) = ov.dt {
                sc.dt = dt;
            }
            if let Some(t) = ov.t_end {
                sc.t_end = t;
            }
            if let Some(seed) = ov.seed {
                sc.seed = seed;
            }
            if let Some(s) = ov.record_stride {
                sc.record_stride = s;
            }
            let label = sc
                .name
                .clone()
                .or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()))
                .unwrap_or_else(|| "scenario".into());
            vec![Job {
                label,
                network: net.clone(),
                scenario: sc,
            }]
        }
        (None, Some(Preset::BoundSweep100)) => {
            ensure_dir(&config.out_dir)?;
            let bus = presets::focus_bus(&net)?;
            let real = pipeline::bound_realization(
                &net,
                bus,
                ov.eta.unwrap_or(DEFAULT_ETA),
                BOUND_TRAJECTORIES,
                ov.seed.unwrap_or(0),
                ov.t_end.unwrap_or(10.0),
                ov.dt.unwrap_or(DEFAULT_DT),
            )?;
            write_json(&config.out_dir.join("bound_sweep_100.json"), &real)?;
            let text = report::realization_report(&real);
            write_text(&config.out_dir.join("report.txt"), &text)?;
            return Ok(text);
        }
        (None, Some(p)) => preset_jobs(p, &net, ov)?,
        (None, None) => return Err(Error::Validation("need a scenario file or a preset".into())),
    };
    ensure_dir(&config.out_dir)?;
    let results = pipeline::run_jobs(&jobs);
    let mut text = String::new();
    let mut first_err = None;
    for (job, res) in jobs.iter().zip(results) {
        match res {
            Ok(traj) => {
                let csv = config.out_dir.join(format!("{}.csv", job.label));
                let f = fs::File::create(&csv).map_err(io_err(&csv))?;
                write_csv(&traj, BufWriter::new(f), config.csv_stride).map_err(io_err(&csv))?;
                let audit = config.out_dir.join(format!("{}.audit.json", job.label));
                let f = fs::File::create(&audit).map_err(io_err(&audit))?;
                write_audit_json(&traj.audit, BufWriter::new(f)).map_err(io_err(&audit))?;
                text.push_str(&report::trajectory_report(&job.label, &traj));
            }
            Err(e) => {
                text.push_str(&format!("== {} ==\nerror: {e}\n", job.label));
                first_err.get_or_insert(e);
            }
        }
    }
    write_text(&config.out_dir.join("report.txt"), &text)?;
    match first_err {
        Some(e) => {
            eprint!("{text}");
            Err(e)
        }
        None => Ok(text),
    }
}

fn read_state(path: &Path) -> Result<SystemState> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
}

fn execute(cmd: Command) -> Result<String> {
    match cmd {
        Command::Run(a) => {
            let preset = a.preset.as_deref().map(str::parse).transpose()?;
            let config = RunConfig {
                network: a.net.network,
                scenario: a.scenario,
                preset,
                out_dir: a.net.out,
                overrides: Overrides {
                    dt: a.dt,
                    t_end: a.t_end,
                    seed: a.seed,
                    gammas: a.gamma,
                    eta: a.eta,
                    beta: a.beta,
                    record_stride: a.stride,
                },
                csv_stride: a.csv_stride,
            };
            run(&config)
        }
        Command::Certify(a) => {
            let net = pipeline::resolve_network(&a.net.network)?;
            let state = a.state.as_deref().map(read_state).transpose()?;
            let cert = pipeline::certify(&net, a.time, a.beta, state.as_ref())?;
            ensure_dir(&a.net.out)?;
            write_json(&a.net.out.join("certificate.json"), &cert)?;
            Ok(report::certificate_report(&cert))
        }
        Command::Bound(a) => {
            let net = pipeline::resolve_network(&a.net.network)?;
            let bus = match a.bus {
                Some(b) => b,
                None => presets::focus_bus(&net)?,
            };
            ensure_dir(&a.net.out)?;
            if a.trajectories > 0 {
                let real = pipeline::bound_realization(&net, bus, a.eta, a.trajectories, a.seed, a.t_end, a.dt)?;
                write_json(&a.net.out.join("bound.json"), &real)?;
                return Ok(report::realization_report(&real));
            }
            let settings = EffortSettings {
                starts: a.starts,
                seed: a.seed,
                ..EffortSettings::default()
            };
            let r = pipeline::bound(&net, bus, a.eta, a.beta, settings)?;
            write_json(&a.net.out.join("bound.json"), &r)?;
            Ok(report::bound_report(&r))
        }
        Command::Robust(a) => {
            let net = pipeline::resolve_network(&a.net.network)?;
            let r = pipeline::robust(&net, a.margin.into(), a.runs, a.seed, a.t_end, a.dt)?;
            ensure_dir(&a.net.out)?;
            write_json(&a.net.out.join("robust.json"), &r)?;
            Ok(report::robust_report(&r))
        }
        Command::Envelope(a) => {
            let net = pipeline::resolve_network(&a.net.network)?;
            let mut spec = net
                .controlled_spec(a.bus)
                .cloned()
                .ok_or_else(|| Error::Validation(format!("bus {} is not controlled", a.bus)))?;
            let inertia = net.buses()[spec.index].inertia;
            let env = envelope_z(&spec, inertia, a.omega0, a.horizon, a.dt)?;
            ensure_dir(&a.net.out)?;
            let mut csv = String::from("# units: t [s], z and bound [rad/s]\nt,z,exponential_bound\n");
            for (&t, &z) in env.times.iter().zip(&env.z) {
                let b = env.exponential.map_or(f64::NAN, |e| e.at(t));
                csv.push_str(&format!("{t:.16e},{z:.16e},{b:.16e}\n"));
            }
            write_text(&a.net.out.join("envelope.csv"), &csv)?;
            let mut text = report::envelope_report(a.bus, &env);
            if let Some(eps) = a.epsilon {
                spec.epsilon_shrink = eps;
                match entry_time_estimate(&spec, inertia, a.omega0, a.horizon, a.dt) {
                    Ok(t) => text.push_str(&format!("entry time with tightening {}: {} s\n", report::sig(eps), report::sig(t))),
                    Err(Error::NotReached { horizon }) => {
                        text.push_str(&format!("entry time: not reached within {} s\n", report::sig(horizon)))
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(text)
        }
    }
}

/// Parses arguments, runs the command and returns the process exit code.
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
    match execute(cli.command) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
