//! Experiment runners. Each returns an in-memory report; writing is separate.

use std::f64::consts::FRAC_PI_4;

use rayon::prelude::*;

use super::config::RunConfig;
use crate::analytics::{
    far_field_corr, gaussian_self_consistency, kelvin_kei, near_field_corr, McmcSampler,
};
use crate::dynamics::{evolve, CrnEnsemble, Ensemble, RecordContext, RecordPoint, Schedule, ShEnsemble};
use crate::error::{OpoError, Result};
use crate::grid::{GridSpec, VectorField};
use crate::noise::{NoiseStream, NoiseTag};
use crate::observables::{
    radial_average, step_convergence, ConvergenceEntry, EnsembleEstimate, RadialSpectrum, RunSummary,
    SampleAccumulator, Spectrum2D, SpectrumAccumulator,
};
use crate::params::{stability_eigensystem, Etas};

/// Ensemble-averaged instantaneous spectrum, summed in trajectory order.
fn mean_spectrum<E: Ensemble + Sync>(ens: &E) -> Spectrum2D {
    let grid = ens.grid();
    let per: Vec<Vec<f64>> = (0..ens.len()).into_par_iter().map(|i| ens.power_spectrum(i)).collect();
    let mut values = vec![0.0; grid.len()];
    for p in &per {
        values.iter_mut().zip(p).for_each(|(v, x)| *v += x);
    }
    let n = ens.len() as f64;
    values.iter_mut().for_each(|v| *v /= n);
    Spectrum2D { grid, values }
}

fn record_point(ctx: &RecordContext, samples: &[f64]) -> Result<RecordPoint> {
    Ok(RecordPoint {
        tau: ctx.tau,
        param_value: ctx.param_value,
        intensity: EnsembleEstimate::from_samples(samples)?,
        etas: ctx.etas,
    })
}

fn separations(grid: &GridSpec) -> (Vec<(i64, i64)>, Vec<f64>) {
    let s: Vec<(i64, i64)> = (0..=grid.nx as i64 / 2).map(|s| (s, 0)).collect();
    let r = s.iter().map(|&(sx, _)| sx as f64 * grid.dx()).collect();
    (s, r)
}

fn equilibrate<E: Ensemble>(ens: &mut E, cfg: &RunConfig) -> Result<()> {
    let eq = Schedule::Fixed {
        duration: cfg.equilibration,
    };
    evolve(ens, &cfg.model(), &eq, cfg.dt, 0, &mut |_: &RecordContext, _: &E| Ok(()))?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ScanReport {
    pub points: Vec<RecordPoint>,
    /// Radial spectrum at every record, keyed by the scanned parameter.
    pub spectra: Vec<(f64, RadialSpectrum)>,
    pub snapshot: Option<VectorField>,
}

/// Pump or detuning scan after equilibrating at the start value.
pub fn run_scan(cfg: &RunConfig) -> Result<ScanReport> {
    let mut ens = ShEnsemble::new(cfg.grid()?, cfg.trajectories, cfg.seed)?;
    equilibrate(&mut ens, cfg)?;
    let mut points = Vec::new();
    let mut spectra = Vec::new();
    let mut rec = |ctx: &RecordContext, e: &ShEnsemble| -> Result<()> {
        points.push(record_point(ctx, &e.intensity_samples())?);
        spectra.push((ctx.param_value, radial_average(&mean_spectrum(e))));
        log::info!("tau {:.3}: param {:.4}", ctx.tau, ctx.param_value);
        Ok(())
    };
    evolve(&mut ens, &cfg.model(), &cfg.schedule(), cfg.dt, cfg.record_every, &mut rec)?;
    Ok(ScanReport {
        points,
        spectra,
        snapshot: cfg.snapshots.then(|| ens.state(0).x),
    })
}

#[derive(Debug, Clone)]
pub struct SteadyReport {
    /// Ensemble intensity over the whole run, equilibration included.
    pub timeseries: Vec<RecordPoint>,
    /// Per-trajectory time averages over the averaging window.
    pub intensity: EnsembleEstimate,
    pub spectrum: Spectrum2D,
    pub radial: RadialSpectrum,
    /// `(r, ⟨X(0)·X(r)⟩)` along x.
    pub correlation: Vec<(f64, EnsembleEstimate)>,
    pub snapshot: Option<VectorField>,
}

/// Full reduced equation at fixed parameters.
pub fn run_steady(cfg: &RunConfig) -> Result<SteadyReport> {
    let grid = cfg.grid()?;
    let n = cfg.trajectories;
    let mut ens = ShEnsemble::new(grid, n, cfg.seed)?;
    let mut samples = SampleAccumulator::new(n);
    let mut spectra = SpectrumAccumulator::new(grid, n);
    let mut timeseries = Vec::new();
    let averaging_from = cfg.equilibration + 0.5 * cfg.dt;
    let mut rec = |ctx: &RecordContext, e: &ShEnsemble| -> Result<()> {
        let s = e.intensity_samples();
        timeseries.push(record_point(ctx, &s)?);
        if ctx.tau > averaging_from {
            samples.add(&s);
            spectra.add_with(|i| e.power_spectrum(i));
        }
        Ok(())
    };
    let total = Schedule::Fixed {
        duration: cfg.equilibration + cfg.duration,
    };
    evolve(&mut ens, &cfg.model(), &total, cfg.dt, cfg.record_every, &mut rec)?;
    let (seps, r) = separations(&grid);
    let corr = spectra.correlation(&seps)?;
    Ok(SteadyReport {
        timeseries,
        intensity: samples.estimate()?,
        spectrum: spectra.spectrum(),
        radial: spectra.radial()?,
        correlation: r.into_iter().zip(corr).collect(),
        snapshot: cfg.snapshots.then(|| ens.state(0).x),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrnPoint {
    pub tau: f64,
    pub gaussian: EnsembleEstimate,
    pub difference: EnsembleEstimate,
    pub full: EnsembleEstimate,
}

#[derive(Debug, Clone)]
pub struct CrnSpectra {
    pub gaussian: Spectrum2D,
    pub full: Spectrum2D,
    pub gaussian_radial: RadialSpectrum,
    pub difference_radial: RadialSpectrum,
    pub full_radial: RadialSpectrum,
    /// Gaussian `(r, ⟨X̃(0)·X̃(r)⟩)` along x.
    pub near_field: Vec<(f64, EnsembleEstimate)>,
}

#[derive(Debug, Clone)]
pub struct StepCheck {
    pub coarse: RunSummary,
    pub fine: RunSummary,
    pub entries: Vec<ConvergenceEntry>,
}

#[derive(Debug, Clone)]
pub struct CrnReport {
    pub timeseries: Vec<CrnPoint>,
    pub gaussian: EnsembleEstimate,
    /// `⟨|X|² − |X̃|²⟩` from the shared-noise difference.
    pub difference: EnsembleEstimate,
    /// Direct estimate of `⟨|X|²⟩`.
    pub full: EnsembleEstimate,
    /// Between-trajectory variance of the time-averaged difference over that
    /// of the time-averaged direct estimator.
    pub variance_ratio: f64,
    /// The same ratio for single-time samples, averaged over records.
    pub instantaneous_variance_ratio: f64,
    pub spectra: Option<CrnSpectra>,
    pub step_check: Option<StepCheck>,
    pub snapshot: Option<VectorField>,
}

impl CrnReport {
    fn summary(&self, cfg: &RunConfig, dt: f64, subdivision: u32) -> RunSummary {
        RunSummary {
            seed: cfg.seed,
            duration: cfg.equilibration + cfg.duration,
            dt,
            subdivision,
            observables: vec![
                ("gaussian".into(), self.gaussian.mean),
                ("difference".into(), self.difference.mean),
                ("full".into(), self.full.mean),
            ],
        }
    }
}

fn crn_pass(cfg: &RunConfig, dt: f64, subdivision: u32, record_every: usize, spectra: bool) -> Result<CrnReport> {
    let grid = cfg.grid()?;
    let n = cfg.trajectories;
    let mut ens = CrnEnsemble::new(grid, n, cfg.seed)?.with_subdivision(subdivision);
    let mut acc = [SampleAccumulator::new(n), SampleAccumulator::new(n), SampleAccumulator::new(n)];
    let mut spec = spectra.then(|| {
        [
            SpectrumAccumulator::new(grid, n),
            SpectrumAccumulator::new(grid, n),
            SpectrumAccumulator::new(grid, n),
        ]
    });
    let mut timeseries = Vec::new();
    let mut ratios = Vec::new();
    let averaging_from = cfg.equilibration + 0.5 * dt;
    let mut rec = |ctx: &RecordContext, e: &CrnEnsemble| -> Result<()> {
        let s = [
            e.gaussian_intensity_samples(),
            e.difference_intensity_samples(),
            e.intensity_samples(),
        ];
        let point = CrnPoint {
            tau: ctx.tau,
            gaussian: EnsembleEstimate::from_samples(&s[0])?,
            difference: EnsembleEstimate::from_samples(&s[1])?,
            full: EnsembleEstimate::from_samples(&s[2])?,
        };
        if ctx.tau > averaging_from {
            ratios.push(point.difference.sample_variance() / point.full.sample_variance());
            acc.iter_mut().zip(&s).for_each(|(a, v)| a.add(v));
            if let Some([g, d, f]) = spec.as_mut() {
                g.add_with(|i| e.gaussian_power_spectrum(i));
                d.add_with(|i| e.difference_power_spectrum(i));
                f.add_with(|i| e.power_spectrum(i));
            }
        }
        timeseries.push(point);
        Ok(())
    };
    let total = Schedule::Fixed {
        duration: cfg.equilibration + cfg.duration,
    };
    evolve(&mut ens, &cfg.model(), &total, dt, record_every, &mut rec)?;
    let [g, d, f] = acc.map(|a| a.estimate());
    let (gaussian, difference, full) = (g?, d?, f?);
    let spectra = match spec {
        Some([g, d, f]) => {
            let (seps, r) = separations(&grid);
            let corr = g.correlation(&seps)?;
            Some(CrnSpectra {
                gaussian: g.spectrum(),
                full: f.spectrum(),
                gaussian_radial: g.radial()?,
                difference_radial: d.radial()?,
                full_radial: f.radial()?,
                near_field: r.into_iter().zip(corr).collect(),
            })
        }
        None => None,
    };
    Ok(CrnReport {
        timeseries,
        variance_ratio: difference.sample_variance() / full.sample_variance(),
        instantaneous_variance_ratio: ratios.iter().sum::<f64>() / ratios.len() as f64,
        gaussian,
        difference,
        full,
        spectra,
        step_check: None,
        snapshot: cfg
            .snapshots
            .then(|| VectorField::from_complex(&ens.full_field(0))),
    })
}

/// Gaussian mean-field ensemble plus the shared-noise difference to the full
/// equation. With `step_check`, repeats the run at twice the step on the same
/// noise and compares.
pub fn run_crn(cfg: &RunConfig) -> Result<CrnReport> {
    let mut report = crn_pass(cfg, cfg.dt, 1, cfg.record_every, true)?;
    if cfg.step_check {
        let coarse = crn_pass(cfg, 2.0 * cfg.dt, 2, cfg.record_every / 2, false)?;
        let fine = report.summary(cfg, cfg.dt, 1);
        let coarse = coarse.summary(cfg, 2.0 * cfg.dt, 2);
        let entries = step_convergence(&coarse, &fine)?;
        report.step_check = Some(StepCheck { coarse, fine, entries });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSummary {
    pub acceptance: f64,
    pub proposal_scale: f64,
    pub autocorrelation_time: f64,
    pub intensity: EnsembleEstimate,
}

#[derive(Debug, Clone)]
pub struct McmcCheckReport {
    /// Time-averaged `⟨X·X⟩` of the stochastic equation.
    pub sde: EnsembleEstimate,
    /// Mean over independent chains, error from the chain-to-chain spread.
    pub mcmc: EnsembleEstimate,
    pub chains: Vec<ChainSummary>,
}

impl McmcCheckReport {
    /// Difference in units of the combined standard error.
    pub fn z(&self) -> f64 {
        (self.sde.mean - self.mcmc.mean).abs() / self.sde.combined_stderr(&self.mcmc)
    }

    pub fn agrees(&self) -> bool {
        self.z() < 2.0
    }
}

/// Compares Metropolis samples of `exp(-H)` with the stochastic steady state.
pub fn run_mcmc_check(cfg: &RunConfig) -> Result<McmcCheckReport> {
    let grid = cfg.grid()?;
    let etas = cfg.model().etas()?;
    let sampler = McmcSampler::new(&etas, grid)?;
    let chains: Vec<ChainSummary> = (0..cfg.mcmc_chains)
        .into_par_iter()
        .map(|c| {
            let stream = NoiseStream::new(cfg.seed, c as u64, NoiseTag::Metropolis);
            let run = sampler.run(cfg.mcmc_sweeps, &stream)?;
            Ok(ChainSummary {
                acceptance: run.acceptance,
                proposal_scale: run.proposal_scale,
                autocorrelation_time: run.autocorrelation_time,
                intensity: run.intensity,
            })
        })
        .collect::<Result<_>>()?;
    let means: Vec<f64> = chains.iter().map(|c| c.intensity.mean).collect();
    let mcmc = EnsembleEstimate::from_samples(&means)?;
    let sde = run_steady(cfg)?.intensity;
    Ok(McmcCheckReport { sde, mcmc, chains })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub expected: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, expected: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            expected,
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        (self.value - self.expected).abs() <= self.tolerance
    }
}

/// Closed-form checks that need no simulation.
pub fn run_selfcheck() -> Result<Vec<Check>> {
    let mut checks = vec![
        Check::new("c(eta1=0)", gaussian_self_consistency(0.0)?.c, 0.25, 1e-12),
        Check::new(
            "c(eta1=1)",
            gaussian_self_consistency(1.0)?.c,
            (5f64.sqrt() - 1.0) / 8.0,
            1e-12,
        ),
        Check::new("kei(0)", kelvin_kei(0.0)?, -FRAC_PI_4, 0.0),
        Check::new("kei(1)", kelvin_kei(1.0)?, -0.494_994_636_518_719_9, 1e-11),
        Check::new("kei(10)", kelvin_kei(10.0)?, -3.075_245_690_881_442e-4, 1e-14),
    ];
    for eta1 in [0.0, 0.5, 1.0, 10.0] {
        let sc = gaussian_self_consistency(eta1)?;
        checks.push(Check::new(
            format!("C(r=0) = c at eta1={eta1}"),
            near_field_corr(0.0, sc.eta1_prime, 0.5)?,
            sc.c,
            1e-8,
        ));
    }
    checks.push(Check::new("S(k=0) at Lifshitz point", far_field_corr(0.0, 0.5, 0.0, 0.5)?, 2.0, 1e-12));
    for (mu, delta, growth) in [
        (1.0, 0.0, 0.0),
        (0.9, 0.0, -0.1),
        (1.1, 0.0, 0.1),
        (1.0, 0.5, 0.75f64.sqrt() - 1.0),
        (0.5, 1.0, -1.0),
    ] {
        checks.push(Check::new(
            format!("growth rate at mu={mu}, delta={delta}"),
            stability_eigensystem(mu, delta).growth_rate(),
            growth,
            1e-12,
        ));
    }
    let lifshitz = Etas::from_reduced(0.01, 1.0, 0.0)?;
    checks.push(Check::new("eta1 at mu=1", lifshitz.eta1, 0.0, 0.0));
    checks.push(Check::new("eta2 at delta=0", lifshitz.eta2, 0.0, 0.0));
    checks.push(Check::new("eta3 at mu=1", lifshitz.eta3, 0.5, 1e-15));
    if checks.iter().any(|c| !c.value.is_finite()) {
        return Err(OpoError::Numerical("non-finite self-check value".into()));
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::{Experiment, Preset};

    fn tiny(experiment: Experiment) -> RunConfig {
        let mut c = RunConfig::defaults(experiment, Preset::Desk);
        (c.nx, c.ny, c.lx, c.ly) = (8, 8, 8.0, 8.0);
        c.trajectories = 4;
        c.dt = 5e-3;
        c.equilibration = 0.1;
        c.duration = 0.2;
        c.record_every = 4;
        c.mcmc_sweeps = 2000;
        c.mcmc_chains = 2;
        c
    }

    #[test]
    fn selfcheck_passes() {
        for c in run_selfcheck().unwrap() {
            assert!(c.passed(), "{c:?}");
        }
    }

    #[test]
    fn steady_run_records_and_averages() {
        let cfg = tiny(Experiment::Lifshitz);
        let r = run_steady(&cfg).unwrap();
        assert_eq!(r.timeseries.len(), 15);
        assert_eq!(r.intensity.n, 4);
        assert!((r.spectrum.total_intensity() - r.intensity.mean).abs() < 1e-10);
        assert!((r.correlation[0].1.mean - r.intensity.mean).abs() < 1e-10);
    }

    #[test]
    fn crn_full_equals_gaussian_plus_difference_on_average() {
        let cfg = tiny(Experiment::Nongaussian);
        let r = run_crn(&cfg).unwrap();
        let sp = r.spectra.as_ref().unwrap();
        assert!((sp.full.total_intensity() - r.full.mean).abs() < 1e-10);
        assert!((sp.gaussian.total_intensity() - r.gaussian.mean).abs() < 1e-10);
        // |X|² − |X̃|² = 2 X̃·D + |D|², so the difference is not the intensity of D
        assert!(r.variance_ratio.is_finite());
    }

    #[test]
    fn step_check_compares_matching_runs() {
        let mut cfg = tiny(Experiment::Nongaussian);
        cfg.step_check = true;
        let r = run_crn(&cfg).unwrap();
        let sc = r.step_check.unwrap();
        assert_eq!(sc.entries.len(), 3);
        for e in &sc.entries {
            assert!(e.error < 0.05, "{e:?}");
        }
    }

    #[test]
    fn scan_ends_at_endpoint() {
        let mut cfg = tiny(Experiment::ScanPump);
        cfg.scan.as_mut().unwrap().rate = 0.5;
        cfg.dt = 4e-3;
        cfg.record_every = 10;
        let r = run_scan(&cfg).unwrap();
        let last = r.points.last().unwrap();
        assert!((last.param_value - 1.1).abs() < 1e-12);
        assert_eq!(r.points.len(), r.spectra.len());
    }
}
