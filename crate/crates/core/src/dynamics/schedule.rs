//! Parameter schedules and the ensemble driver.

use serde::{Deserialize, Serialize};

use super::Ensemble;
use crate::error::{domain, Result};
use crate::observables::EnsembleEstimate;
use crate::params::Etas;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanParameter {
    Mu,
    Delta,
}

/// Linear ramp `p(τ) = start + rate·τ`, stopping at `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSchedule {
    pub parameter: ScanParameter,
    pub start: f64,
    pub rate: f64,
    pub end: f64,
}

impl ScanSchedule {
    pub fn new(parameter: ScanParameter, start: f64, rate: f64, end: f64) -> Result<Self> {
        let s = ScanSchedule {
            parameter,
            start,
            rate,
            end,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.start, self.rate, self.end].iter().all(|v| v.is_finite()) {
            return domain("scan values must be finite");
        }
        if self.rate == 0.0 {
            return domain("scan rate must be non-zero");
        }
        if (self.end - self.start) * self.rate < 0.0 {
            return domain(format!(
                "scan from {} to {} cannot be reached at rate {}",
                self.start, self.end, self.rate
            ));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        (self.end - self.start) / self.rate
    }

    pub fn value_at(&self, tau: f64) -> f64 {
        if tau >= self.duration() {
            self.end
        } else {
            self.start + self.rate * tau
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Fixed { duration: f64 },
    Scan(ScanSchedule),
}

impl Schedule {
    pub fn duration(&self) -> f64 {
        match self {
            Schedule::Fixed { duration } => *duration,
            Schedule::Scan(s) => s.duration(),
        }
    }

    /// Whole number of steps covering the schedule.
    pub fn n_steps(&self, dt: f64) -> Result<usize> {
        let d = self.duration();
        if !(d >= 0.0 && d.is_finite()) {
            return domain(format!("schedule duration must be non-negative, got {d}"));
        }
        if !(dt > 0.0) {
            return domain(format!("time step must be positive, got {dt}"));
        }
        let n = (d / dt).round();
        if (n * dt - d).abs() > 1e-9 * d.max(1.0) {
            return domain(format!("duration {d} is not a whole number of steps of {dt}"));
        }
        Ok(n as usize)
    }
}

/// Reduced-model parameters `(g, μ, Δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedModel {
    pub g: f64,
    pub mu: f64,
    pub delta: f64,
}

impl ReducedModel {
    pub fn etas(&self) -> Result<Etas> {
        Etas::from_reduced(self.g, self.mu, self.delta)
    }

    pub fn get(&self, parameter: ScanParameter) -> f64 {
        match parameter {
            ScanParameter::Mu => self.mu,
            ScanParameter::Delta => self.delta,
        }
    }

    pub fn with(mut self, parameter: ScanParameter, value: f64) -> Self {
        match parameter {
            ScanParameter::Mu => self.mu = value,
            ScanParameter::Delta => self.delta = value,
        }
        self
    }
}

/// What a recorder is told at each record point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordContext {
    pub tau: f64,
    /// Scanned parameter (or `μ` for fixed runs) at the record time.
    pub param_value: f64,
    pub etas: Etas,
}

pub trait Recorder<E: ?Sized> {
    fn record(&mut self, ctx: &RecordContext, ensemble: &E) -> Result<()>;
}

impl<E: ?Sized, F> Recorder<E> for F
where
    F: FnMut(&RecordContext, &E) -> Result<()>,
{
    fn record(&mut self, ctx: &RecordContext, ensemble: &E) -> Result<()> {
        self(ctx, ensemble)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordPoint {
    pub tau: f64,
    pub param_value: f64,
    pub intensity: EnsembleEstimate,
    pub etas: Etas,
}

/// Records the ensemble intensity estimate at every record point.
#[derive(Debug, Clone, Default)]
pub struct IntensityRecorder {
    pub points: Vec<RecordPoint>,
}

impl<E: Ensemble + ?Sized> Recorder<E> for IntensityRecorder {
    fn record(&mut self, ctx: &RecordContext, ensemble: &E) -> Result<()> {
        self.points.push(RecordPoint {
            tau: ctx.tau,
            param_value: ctx.param_value,
            intensity: EnsembleEstimate::from_samples(&ensemble.intensity_samples())?,
            etas: ctx.etas,
        });
        Ok(())
    }
}

/// Advances `ensemble` over `schedule`, re-deriving the `η` coefficients at
/// every step midpoint, and calls `recorder` every `record_every` steps
/// (never when `record_every = 0`). Returns the model at the final time.
pub fn evolve<E, R>(
    ensemble: &mut E,
    model: &ReducedModel,
    schedule: &Schedule,
    dt: f64,
    record_every: usize,
    recorder: &mut R,
) -> Result<ReducedModel>
where
    E: Ensemble + ?Sized,
    R: Recorder<E> + ?Sized,
{
    let steps = schedule.n_steps(dt)?;
    let (parameter, value_at): (ScanParameter, Box<dyn Fn(f64) -> f64>) = match schedule {
        Schedule::Fixed { .. } => {
            let mu = model.mu;
            (ScanParameter::Mu, Box::new(move |_| mu))
        }
        Schedule::Scan(s) => {
            s.validate()?;
            let s = *s;
            (s.parameter, Box::new(move |t| s.value_at(t)))
        }
    };
    let mut current = *model;
    for n in 0..steps {
        let mid = model.with(parameter, value_at((n as f64 + 0.5) * dt));
        ensemble.step(&mid.etas()?, dt)?;
        current = model.with(parameter, value_at((n + 1) as f64 * dt));
        if record_every > 0 && (n + 1) % record_every == 0 {
            let ctx = RecordContext {
                tau: ensemble.tau(),
                param_value: current.get(parameter),
                etas: current.etas()?,
            };
            recorder.record(&ctx, ensemble)?;
        }
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::ShEnsemble;
    use crate::grid::GridSpec;

    #[test]
    fn schedule_validation() {
        assert!(ScanSchedule::new(ScanParameter::Mu, 0.9, 0.004, 1.1).is_ok());
        assert!(ScanSchedule::new(ScanParameter::Mu, 0.9, -0.004, 1.1).is_err());
        assert!(ScanSchedule::new(ScanParameter::Delta, 0.5, 0.0, 0.5).is_err());
        let s = ScanSchedule::new(ScanParameter::Delta, -0.5, 0.005, 0.5).unwrap();
        assert!((s.duration() - 200.0).abs() < 1e-12);
        assert_eq!(s.value_at(1e9), 0.5);
        assert!(Schedule::Scan(s).n_steps(0.003).is_err());
        assert_eq!(Schedule::Scan(s).n_steps(0.002).unwrap(), 100_000);
    }

    #[test]
    fn zero_steps_leave_state_untouched() {
        let g = GridSpec::square(8, 4.0).unwrap();
        let mut ens = ShEnsemble::new(g, 2, 1).unwrap();
        let model = ReducedModel { g: 0.01, mu: 1.0, delta: 0.0 };
        let mut rec = IntensityRecorder::default();
        evolve(&mut ens, &model, &Schedule::Fixed { duration: 0.0 }, 0.01, 1, &mut rec).unwrap();
        assert_eq!(ens.counter(), 0);
        assert!(rec.points.is_empty());
        assert!(ens.state(0).x.mean_dot() == 0.0);
    }

    #[test]
    fn scan_records_etas_pointwise() {
        let g = GridSpec::square(8, 4.0).unwrap();
        let mut ens = ShEnsemble::new(g, 2, 1).unwrap();
        let model = ReducedModel { g: 0.01, mu: 0.9, delta: 0.0 };
        let scan = ScanSchedule::new(ScanParameter::Mu, 0.9, 0.004, 0.91).unwrap();
        let mut rec = IntensityRecorder::default();
        let end = evolve(&mut ens, &model, &Schedule::Scan(scan), 0.01, 50, &mut rec).unwrap();
        assert_eq!(rec.points.len(), 5);
        assert!((end.mu - 0.91).abs() < 1e-12);
        for p in &rec.points {
            let mu = 0.9 + 0.004 * p.tau;
            assert!((p.param_value - mu).abs() < 1e-12);
            let e = Etas::from_reduced(0.01, mu, 0.0).unwrap();
            assert!((p.etas.eta1 - e.eta1).abs() < 1e-9);
            assert!((p.etas.eta3 - e.eta3).abs() < 1e-12);
        }
    }
}
