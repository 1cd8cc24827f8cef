//! Run configuration: presets, TOML files and flag overrides.
//!
//! Resolution order is `preset defaults < config file < flags`. Every layer is
//! merged as a TOML table and the result is deserialized once, so unknown keys
//! and type mismatches are reported the same way wherever they come from.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dynamics::{ReducedModel, ScanParameter, ScanSchedule, Schedule};
use crate::error::{OpoError, Result};
use crate::grid::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    ScanPump,
    ScanDetuning,
    Lifshitz,
    Nongaussian,
    Spectrum,
    McmcCheck,
    Selfcheck,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::ScanPump => "scan-pump",
            Experiment::ScanDetuning => "scan-detuning",
            Experiment::Lifshitz => "lifshitz",
            Experiment::Nongaussian => "nongaussian",
            Experiment::Spectrum => "spectrum",
            Experiment::McmcCheck => "mcmc-check",
            Experiment::Selfcheck => "selfcheck",
        }
    }

    fn scanned(self) -> Option<ScanParameter> {
        match self {
            Experiment::ScanPump => Some(ScanParameter::Mu),
            Experiment::ScanDetuning => Some(ScanParameter::Delta),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Reduced grids and ensembles that run on a laptop.
    #[default]
    Desk,
    /// Grids, step counts and sample counts of the published figures.
    Paper,
}

/// A fully resolved run.
///
/// For scans the scanned parameter starts at `scan.start` (the fixed value of
/// that parameter is ignored) after `equilibration` at that value; `duration`
/// is unused. Steady-state runs average over `duration` after `equilibration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub preset: Preset,
    pub seed: u64,
    pub g: f64,
    pub mu: f64,
    pub delta: f64,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub dt: f64,
    pub equilibration: f64,
    pub duration: f64,
    pub trajectories: usize,
    /// Steps between records.
    pub record_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSchedule>,
    /// Repeat a CRN run at twice the step (same noise) and compare.
    pub step_check: bool,
    /// Write the final field of trajectory 0.
    pub snapshots: bool,
    pub mcmc_sweeps: usize,
    pub mcmc_chains: usize,
    /// Not part of the manifest, so reruns elsewhere produce identical files.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
}

const DEFAULT_SEED: u64 = 20_240_601;

impl RunConfig {
    /// Documented defaults for an experiment at a given scale.
    pub fn defaults(experiment: Experiment, preset: Preset) -> RunConfig {
        let paper = preset == Preset::Paper;
        let mut c = RunConfig {
            experiment,
            preset,
            seed: DEFAULT_SEED,
            g: 0.01,
            mu: 1.0,
            delta: 0.0,
            nx: 48,
            ny: 48,
            lx: 20.0,
            ly: 20.0,
            dt: 1e-3,
            equilibration: 10.0,
            duration: 10.0,
            trajectories: 200,
            record_every: 100,
            scan: None,
            step_check: false,
            snapshots: false,
            mcmc_sweeps: 100_000,
            mcmc_chains: 8,
            out: None,
        };
        match experiment {
            Experiment::ScanPump => {
                c.mu = 0.9;
                c.scan = Some(ScanSchedule {
                    parameter: ScanParameter::Mu,
                    start: 0.9,
                    rate: 0.004,
                    end: 1.1,
                });
                c.duration = 0.0;
                if paper {
                    (c.nx, c.ny) = (96, 96);
                    c.dt = 1.0 / 600.0;
                    c.equilibration = 50.0;
                    c.trajectories = 300;
                    c.record_every = 60;
                } else {
                    c.dt = 2e-3;
                    c.equilibration = 5.0;
                    c.trajectories = 100;
                    c.record_every = 25;
                }
            }
            Experiment::ScanDetuning => {
                c.delta = -0.5;
                c.scan = Some(ScanSchedule {
                    parameter: ScanParameter::Delta,
                    start: -0.5,
                    rate: 0.005,
                    end: 0.5,
                });
                c.duration = 0.0;
                if paper {
                    (c.nx, c.ny) = (96, 96);
                    (c.lx, c.ly) = (50.0, 50.0);
                    c.dt = 200.0 / 15_000.0;
                    c.trajectories = 60;
                    c.record_every = 75;
                } else {
                    c.dt = 4e-3;
                    c.equilibration = 5.0;
                    c.trajectories = 64;
                    c.record_every = 250;
                }
            }
            Experiment::Lifshitz | Experiment::Nongaussian | Experiment::Spectrum => {
                if paper {
                    c.equilibration = 5.0;
                    c.duration = 5.0;
                    c.trajectories = 3200;
                    c.step_check = experiment == Experiment::Nongaussian;
                } else if experiment == Experiment::Nongaussian {
                    c.trajectories = 400;
                    c.record_every = 50;
                }
            }
            Experiment::McmcCheck => {
                (c.nx, c.ny) = (16, 16);
                (c.lx, c.ly) = (10.0, 10.0);
                c.record_every = 10;
                if paper {
                    c.trajectories = 1000;
                    c.mcmc_sweeps = 400_000;
                    c.mcmc_chains = 32;
                }
            }
            Experiment::Selfcheck => {}
        }
        c
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.nx, self.ny, self.lx, self.ly)
    }

    /// Model at the start of the run.
    pub fn model(&self) -> ReducedModel {
        let m = ReducedModel {
            g: self.g,
            mu: self.mu,
            delta: self.delta,
        };
        match self.scan {
            Some(s) => m.with(s.parameter, s.start),
            None => m,
        }
    }

    /// Schedule after equilibration.
    pub fn schedule(&self) -> Schedule {
        match self.scan {
            Some(s) => Schedule::Scan(s),
            None => Schedule::Fixed {
                duration: self.duration,
            },
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(self.experiment.name()))
    }

    /// Every constraint violation, one per line.
    pub fn validate(&self) -> Result<()> {
        let mut errs: Vec<String> = Vec::new();
        if let Err(e) = self.grid() {
            errs.push(e.to_string());
        }
        if self.nx < 8 || self.ny < 8 {
            errs.push(format!("grid must be at least 8x8, got {}x{}", self.nx, self.ny));
        }
        if let Err(e) = self.model().etas() {
            errs.push(e.to_string());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            errs.push(format!("dt must be positive, got {}", self.dt));
        }
        if self.trajectories < 2 {
            errs.push(format!("trajectories must be at least 2, got {}", self.trajectories));
        }
        if self.record_every == 0 {
            errs.push("record_every must be positive".into());
        }
        if self.mcmc_chains < 2 {
            errs.push(format!("mcmc_chains must be at least 2, got {}", self.mcmc_chains));
        }
        if self.mcmc_sweeps < 1000 {
            errs.push(format!("mcmc_sweeps must be at least 1000, got {}", self.mcmc_sweeps));
        }
        match (self.experiment.scanned(), self.scan) {
            (Some(p), Some(s)) => {
                if s.parameter != p {
                    errs.push(format!("{} scans {:?}, not {:?}", self.experiment.name(), p, s.parameter));
                }
                if let Err(e) = s.validate() {
                    errs.push(e.to_string());
                }
                for v in [s.start, s.end] {
                    if let Err(e) = self.model().with(s.parameter, v).etas() {
                        errs.push(format!("scan endpoint: {e}"));
                    }
                }
            }
            (Some(_), None) => errs.push(format!("{} needs a [scan] table", self.experiment.name())),
            (None, Some(_)) => errs.push(format!("{} does not take a [scan] table", self.experiment.name())),
            (None, None) => {}
        }
        if self.dt > 0.0 {
            let whole = |what: &str, d: f64, errs: &mut Vec<String>| {
                if let Err(e) = (Schedule::Fixed { duration: d }).n_steps(self.dt) {
                    errs.push(format!("{what}: {e}"));
                }
            };
            whole("equilibration", self.equilibration, &mut errs);
            if self.scan.is_none() {
                whole("duration", self.duration, &mut errs);
                if let Ok(n) = self.schedule().n_steps(self.dt) {
                    if n < self.record_every.max(1) {
                        errs.push(format!("duration covers {n} steps, fewer than record_every"));
                    }
                }
            } else if let Err(e) = self.schedule().n_steps(self.dt) {
                errs.push(format!("scan: {e}"));
            }
        }
        if self.step_check && !self.record_every.is_multiple_of(2) {
            errs.push("step_check needs an even record_every".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(OpoError::Config(errs.join("; ")))
        }
    }

    /// The manifest: a TOML document that reproduces the run.
    pub fn manifest(&self) -> Result<String> {
        let body = toml::to_string(self).map_err(|e| OpoError::Config(e.to_string()))?;
        Ok(format!("# opo-critical {}\n{body}", env!("CARGO_PKG_VERSION")))
    }
}

/// Command-line overrides; `None` leaves the lower layers alone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
    pub g: Option<f64>,
    pub mu: Option<f64>,
    pub delta: Option<f64>,
    pub grid: Option<usize>,
    pub size: Option<f64>,
    pub dt: Option<f64>,
    pub equilibration: Option<f64>,
    pub duration: Option<f64>,
    pub trajectories: Option<usize>,
    pub record_every: Option<usize>,
    pub scan_start: Option<f64>,
    pub scan_rate: Option<f64>,
    pub scan_end: Option<f64>,
    pub step_check: Option<bool>,
    pub snapshots: Option<bool>,
    pub mcmc_sweeps: Option<usize>,
    pub out: Option<PathBuf>,
}

fn cfg_err(e: impl std::fmt::Display) -> OpoError {
    OpoError::Config(e.to_string())
}

fn set(table: &mut toml::Table, key: &str, v: Option<impl Into<toml::Value>>) {
    if let Some(v) = v {
        table.insert(key.to_string(), v.into());
    }
}

/// Resolves `defaults < file < flags` and validates the result.
pub fn parse_config(experiment: Experiment, file: Option<&str>, flags: &Overrides) -> Result<RunConfig> {
    let file_table: toml::Table = match file {
        Some(text) => text.parse().map_err(cfg_err)?,
        None => toml::Table::new(),
    };
    if let Some(v) = file_table.get("experiment") {
        if v.as_str() != Some(experiment.name()) {
            return Err(OpoError::Config(format!(
                "config file is for experiment {v}, not {}",
                experiment.name()
            )));
        }
    }
    let preset = match (flags.preset, file_table.get("preset")) {
        (Some(p), _) => p,
        (None, Some(v)) => v.clone().try_into().map_err(cfg_err)?,
        (None, None) => Preset::Desk,
    };
    let defaults = RunConfig::defaults(experiment, preset);
    let mut table = toml::Table::try_from(&defaults).map_err(cfg_err)?;
    for (k, v) in file_table {
        table.insert(k, v);
    }
    table.insert("preset".into(), toml::Value::try_from(preset).map_err(cfg_err)?);

    set(&mut table, "seed", flags.seed.map(|s| s as i64));
    set(&mut table, "g", flags.g);
    set(&mut table, "mu", flags.mu);
    set(&mut table, "delta", flags.delta);
    set(&mut table, "nx", flags.grid.map(|n| n as i64));
    set(&mut table, "ny", flags.grid.map(|n| n as i64));
    set(&mut table, "lx", flags.size);
    set(&mut table, "ly", flags.size);
    set(&mut table, "dt", flags.dt);
    set(&mut table, "equilibration", flags.equilibration);
    set(&mut table, "duration", flags.duration);
    set(&mut table, "trajectories", flags.trajectories.map(|n| n as i64));
    set(&mut table, "record_every", flags.record_every.map(|n| n as i64));
    set(&mut table, "step_check", flags.step_check);
    set(&mut table, "snapshots", flags.snapshots);
    set(&mut table, "mcmc_sweeps", flags.mcmc_sweeps.map(|n| n as i64));
    set(&mut table, "out", flags.out.as_ref().map(|p| p.display().to_string()));
    if flags.scan_start.is_some() || flags.scan_rate.is_some() || flags.scan_end.is_some() {
        match table.get_mut("scan").and_then(|s| s.as_table_mut()) {
            Some(scan) => {
                set(scan, "start", flags.scan_start);
                set(scan, "rate", flags.scan_rate);
                set(scan, "end", flags.scan_end);
            }
            None => {
                return Err(OpoError::Config(format!(
                    "{} has no scan to override",
                    experiment.name()
                )))
            }
        }
    }

    let config: RunConfig = toml::Value::Table(table).try_into().map_err(cfg_err)?;
    config.validate()?;
    Ok(config)
}
