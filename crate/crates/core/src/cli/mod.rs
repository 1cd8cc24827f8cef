//! Command-line front end: one subcommand per experiment.
//!
//! Exit codes: 0 ok, 1 configuration or I/O error, 2 numerical failure,
//! 3 self-test failure.

pub mod config;
pub mod experiments;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{parse_config, Experiment, Overrides, Preset, RunConfig};
use experiments::{run_crn, run_mcmc_check, run_scan, run_selfcheck, run_steady};
use output::RunOutput;

use crate::analytics::{lattice_self_consistency, near_field_corr};
use crate::error::{OpoError, Result};
use crate::observables::{radial_average, Spectrum2D};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_SELFTEST: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "opo-critical", version, about = "Critical fluctuations of a planar parametric oscillator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Intensity while the pump is ramped through threshold.
    ScanPump(Args),
    /// Intensity and radial spectra while the detuning is ramped.
    ScanDetuning(Args),
    /// Steady state of the full reduced equation.
    Lifshitz(Args),
    /// Gaussian run plus the shared-noise non-Gaussian correction.
    Nongaussian(Args),
    /// Steady Gaussian and full momentum spectra with closed forms.
    Spectrum(Args),
    /// Metropolis sampling of the stationary functional against the dynamics.
    McmcCheck(Args),
    /// Closed-form checks, no simulation.
    Selfcheck(Args),
}

impl Command {
    fn split(&self) -> (Experiment, &Args) {
        match self {
            Command::ScanPump(a) => (Experiment::ScanPump, a),
            Command::ScanDetuning(a) => (Experiment::ScanDetuning, a),
            Command::Lifshitz(a) => (Experiment::Lifshitz, a),
            Command::Nongaussian(a) => (Experiment::Nongaussian, a),
            Command::Spectrum(a) => (Experiment::Spectrum, a),
            Command::McmcCheck(a) => (Experiment::McmcCheck, a),
            Command::Selfcheck(a) => (Experiment::Selfcheck, a),
        }
    }
}

#[derive(Debug, Clone, clap::Args)]
pub struct Args {
    /// TOML file layered over the preset defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, env = "OPO_NUM_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub g: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<f64>,
    /// Points per side (square grid).
    #[arg(long)]
    pub grid: Option<usize>,
    /// Box side length (square box).
    #[arg(long = "box", allow_hyphen_values = true)]
    pub size: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub dt: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub equilibration: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    #[arg(long)]
    pub record_every: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub scan_start: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub scan_rate: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub scan_end: Option<f64>,
    /// Repeat the run at twice the step on the same noise.
    #[arg(long)]
    pub step_check: bool,
    /// Write the final field of trajectory 0.
    #[arg(long)]
    pub snapshots: bool,
    #[arg(long)]
    pub mcmc_sweeps: Option<usize>,
}

impl Args {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            preset: self.preset,
            seed: self.seed,
            g: self.g,
            mu: self.mu,
            delta: self.delta,
            grid: self.grid,
            size: self.size,
            dt: self.dt,
            equilibration: self.equilibration,
            duration: self.duration,
            trajectories: self.trajectories,
            record_every: self.record_every,
            scan_start: self.scan_start,
            scan_rate: self.scan_rate,
            scan_end: self.scan_end,
            step_check: self.step_check.then_some(true),
            snapshots: self.snapshots.then_some(true),
            mcmc_sweeps: self.mcmc_sweeps,
            out: self.out.clone(),
        }
    }
}

/// What a finished run reports.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub lines: Vec<String>,
    pub passed: bool,
    pub files: Vec<PathBuf>,
}

fn pm(e: &crate::observables::EnsembleEstimate) -> String {
    format!("{:.6} +/- {:.6}", e.mean, e.stderr)
}

const SERIES: [&str; 7] = ["tau", "param_value", "mean_intensity", "stderr", "eta1", "eta2", "eta3"];
const RADIAL: [&str; 3] = ["k", "S", "stderr"];

fn spectrum_rows(s: &Spectrum2D) -> Vec<Vec<f64>> {
    s.entries().into_iter().map(|(kx, ky, v)| vec![kx, ky, v]).collect()
}

/// Runs a resolved configuration in the current thread pool and writes its outputs.
pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let mut out = RunOutput::create(&cfg.out_dir(), cfg.manifest()?)?;
    let mut lines = Vec::new();
    let mut passed = true;
    let series_row = |p: &crate::dynamics::RecordPoint| {
        vec![
            p.tau,
            p.param_value,
            p.intensity.mean,
            p.intensity.stderr,
            p.etas.eta1,
            p.etas.eta2,
            p.etas.eta3,
        ]
    };
    let mut snapshot = None;
    match cfg.experiment {
        Experiment::ScanPump | Experiment::ScanDetuning => {
            let r = run_scan(cfg)?;
            out.table("timeseries.csv", &SERIES, r.points.iter().map(series_row))?;
            out.table(
                "spectrum_vs_param.csv",
                &["param_value", "k", "S"],
                r.spectra
                    .iter()
                    .flat_map(|(p, rad)| rad.k.iter().zip(&rad.values).map(move |(k, s)| vec![*p, *k, *s])),
            )?;
            if let Some(last) = r.points.last() {
                lines.push(format!("final param {:.6}: <|X|^2> = {}", last.param_value, pm(&last.intensity)));
            }
            snapshot = r.snapshot;
        }
        Experiment::Lifshitz => {
            let r = run_steady(cfg)?;
            out.table("timeseries.csv", &SERIES, r.timeseries.iter().map(series_row))?;
            out.table("spectrum.csv", &["kx", "ky", "S"], spectrum_rows(&r.spectrum))?;
            out.table("radial.csv", &RADIAL, radial_rows(&r.radial))?;
            out.table(
                "correlation.csv",
                &["r", "C", "stderr"],
                r.correlation.iter().map(|(x, e)| vec![*x, e.mean, e.stderr]),
            )?;
            lines.push(format!("<|X|^2> = {}", pm(&r.intensity)));
            snapshot = r.snapshot;
        }
        Experiment::Nongaussian | Experiment::Spectrum => {
            let r = run_crn(cfg)?;
            if cfg.experiment == Experiment::Nongaussian {
                out.table(
                    "nongaussian.csv",
                    &["tau", "gaussian", "gaussian_stderr", "difference", "difference_stderr", "full", "full_stderr"],
                    r.timeseries.iter().map(|p| {
                        vec![
                            p.tau,
                            p.gaussian.mean,
                            p.gaussian.stderr,
                            p.difference.mean,
                            p.difference.stderr,
                            p.full.mean,
                            p.full.stderr,
                        ]
                    }),
                )?;
                if let Some(sc) = &r.step_check {
                    let mut w = out.csv("convergence.csv", &["name", "coarse", "fine", "error"])?;
                    for e in &sc.entries {
                        let v = [e.coarse, e.fine, e.error].map(output::fmt_f64);
                        w.cells(&[e.name.clone(), v[0].clone(), v[1].clone(), v[2].clone()])?;
                        lines.push(format!("step check {}: coarse {:.6}, fine {:.6}", e.name, e.coarse, e.fine));
                    }
                    out.written.push(w.finish()?);
                }
            } else if let Some(sp) = &r.spectra {
                write_spectra(&mut out, cfg, sp)?;
            }
            lines.push(format!("Gaussian <|X~|^2> = {}", pm(&r.gaussian)));
            lines.push(format!("difference <|X|^2 - |X~|^2> = {}", pm(&r.difference)));
            lines.push(format!(
                "variance ratio difference/direct = {:.4} (single-time samples {:.4})",
                r.variance_ratio, r.instantaneous_variance_ratio
            ));
            let combined = r.gaussian.mean + r.difference.mean;
            let err = r.gaussian.stderr.hypot(r.difference.stderr);
            lines.push(format!("<|X|^2> = {combined:.6} +/- {err:.6}"));
            snapshot = r.snapshot;
        }
        Experiment::McmcCheck => {
            let r = run_mcmc_check(cfg)?;
            out.table(
                "mcmc.csv",
                &["chain", "acceptance", "proposal_scale", "autocorrelation_time", "intensity", "stderr"],
                r.chains.iter().enumerate().map(|(i, c)| {
                    vec![
                        i as f64,
                        c.acceptance,
                        c.proposal_scale,
                        c.autocorrelation_time,
                        c.intensity.mean,
                        c.intensity.stderr,
                    ]
                }),
            )?;
            lines.push(format!("Metropolis <X.X> = {}", pm(&r.mcmc)));
            lines.push(format!("dynamics   <X.X> = {}", pm(&r.sde)));
            passed = r.agrees();
            lines.push(format!(
                "{}: difference {:.2} combined stderr",
                if passed { "PASS" } else { "FAIL" },
                r.z()
            ));
        }
        Experiment::Selfcheck => {
            let checks = run_selfcheck()?;
            let mut w = out.csv("selfcheck.csv", &["name", "value", "expected", "tolerance", "pass"])?;
            for c in &checks {
                let v = [c.value, c.expected, c.tolerance].map(output::fmt_f64);
                let ok = c.passed();
                passed &= ok;
                w.cells(&[c.name.clone(), v[0].clone(), v[1].clone(), v[2].clone(), ok.to_string()])?;
                lines.push(format!(
                    "{} {} = {:.15} (expected {:.15})",
                    if ok { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.expected
                ));
            }
            out.written.push(w.finish()?);
        }
    }
    if let Some(x) = snapshot {
        out.bytes("snapshot_0.opof", &x.to_snapshot().to_bytes()?)?;
    }
    Ok(Outcome {
        lines,
        passed,
        files: out.written,
    })
}

fn radial_rows(r: &crate::observables::RadialSpectrum) -> Vec<Vec<f64>> {
    (0..r.k.len())
        .filter(|&i| r.counts[i] > 0)
        .map(|i| vec![r.k[i], r.values[i], r.stderr[i]])
        .collect()
}

fn write_spectra(out: &mut RunOutput, cfg: &RunConfig, sp: &experiments::CrnSpectra) -> Result<()> {
    let grid = cfg.grid()?;
    let etas = cfg.model().etas()?;
    let sc = lattice_self_consistency(&grid, &etas)?;
    let closed = Spectrum2D {
        grid,
        values: grid
            .k_squared()
            .iter()
            .map(|&k2| 1.0 / (sc.eta1_prime + etas.eta2 * k2 + etas.eta3 * k2 * k2))
            .collect(),
    };
    let closed_radial = radial_average(&closed);
    out.table("gaussian_spectrum.csv", &["kx", "ky", "S"], spectrum_rows(&sp.gaussian))?;
    out.table("spectrum.csv", &["kx", "ky", "S"], spectrum_rows(&sp.full))?;
    out.table("radial.csv", &RADIAL, radial_rows(&sp.full_radial))?;
    out.table(
        "gaussian_radial.csv",
        &["k", "S", "stderr", "closed_form"],
        radial_rows(&sp.gaussian_radial)
            .into_iter()
            .zip(closed_radial.values.iter().zip(&closed_radial.counts).filter(|(_, &c)| c > 0))
            .map(|(mut row, (v, _))| {
                row.push(*v);
                row
            }),
    )?;
    out.table("difference_radial.csv", &RADIAL, radial_rows(&sp.difference_radial))?;
    let g = &sp.gaussian_radial;
    out.table(
        "log_difference.csv",
        &["k", "dlnS"],
        (0..g.k.len())
            .filter(|&i| g.counts[i] > 0)
            .map(|i| vec![g.k[i], (sp.full_radial.values[i] / g.values[i]).ln()]),
    )?;
    let mut near = Vec::new();
    for (r, e) in &sp.near_field {
        let cf = if etas.eta2 == 0.0 {
            near_field_corr(*r, sc.eta1_prime, etas.eta3)?
        } else {
            f64::NAN
        };
        near.push(vec![*r, e.mean, e.stderr, cf]);
    }
    out.table("near_field.csv", &["r", "C", "stderr", "closed_form"], near)
}

fn exit_code(e: &OpoError) -> i32 {
    match e {
        OpoError::Config(_) | OpoError::Io(_) | OpoError::Format(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

/// Parses, runs and reports; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let (experiment, args) = cli.command.split();
    let text = match &args.config {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(t) => Some(t),
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", p.display());
                return EXIT_CONFIG;
            }
        },
        None => None,
    };
    let cfg = match parse_config(experiment, text.as_deref(), &args.overrides()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = args.workers {
        pool = pool.num_threads(w);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_CONFIG;
        }
    };
    match pool.install(|| execute(&cfg)) {
        Ok(outcome) => {
            for f in &outcome.files {
                log::info!("wrote {}", f.display());
            }
            for l in &outcome.lines {
                println!("{l}");
            }
            if outcome.passed {
                EXIT_OK
            } else {
                EXIT_SELFTEST
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
