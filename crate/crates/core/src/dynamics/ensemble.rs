//! Lockstep trajectory ensembles for the reduced, Gaussian and CRN systems.
//!
//! Trajectories are stored as unitary spectral amplitudes. Each trajectory
//! `i` draws its noise from `NoiseStream(seed, i, Reduced)` at the ensemble
//! step counter, so results do not depend on how trajectories are spread
//! over worker threads. Reductions over trajectories run in index order.

use num_complex::Complex64;
use rayon::prelude::*;

use super::kernel::{self, Closure, Worker, C};
use super::{check_step, SHState};
use crate::error::{domain, OpoError, Result};
use crate::grid::{ComplexField, GridSpec, SpectralWorkspace, VectorField};
use crate::noise::{NoiseStream, NoiseTag};
use crate::params::Etas;

/// Common interface used by [`super::evolve`] and the recorders.
pub trait Ensemble {
    fn grid(&self) -> GridSpec;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn tau(&self) -> f64;
    /// Number of steps taken; also the noise counter of the next step.
    fn counter(&self) -> u64;
    fn step(&mut self, etas: &Etas, dt: f64) -> Result<()>;
    /// Per-trajectory spatial mean of `X·X` for the observed field.
    fn intensity_samples(&self) -> Vec<f64>;
    /// Per-trajectory `|X̂(k)|²·ΔA` of the observed field, transform order.
    fn power_spectrum(&self, trajectory: usize) -> Vec<f64>;
}

/// Bookkeeping shared by all lockstep ensembles.
#[derive(Debug, Clone)]
struct Lockstep {
    grid: GridSpec,
    seed: u64,
    subdivision: u32,
    counter: u64,
    tau: f64,
    noise: bool,
    workers: Vec<Worker>,
    neg: Vec<usize>,
}

impl Lockstep {
    fn new(grid: GridSpec, n: usize, seed: u64) -> Result<Self> {
        grid.validate()?;
        if n == 0 {
            return domain("ensemble needs at least one trajectory");
        }
        let ws = SpectralWorkspace::new(grid);
        let count = rayon::current_num_threads().clamp(1, n);
        Ok(Lockstep {
            grid,
            seed,
            subdivision: 1,
            counter: 0,
            tau: 0.0,
            noise: true,
            workers: (0..count).map(|_| Worker::new(ws.clone())).collect(),
            neg: kernel::negated_modes(&grid),
        })
    }

    fn stream(&self, trajectory: usize) -> Option<NoiseStream> {
        self.noise.then(|| {
            NoiseStream::new(self.seed, trajectory as u64, NoiseTag::Reduced)
                .with_subdivision(self.subdivision)
                .at(self.counter)
        })
    }

    fn half_factors(&self, etas: &Etas, dt: f64) -> Vec<f64> {
        kernel::half_factors(&self.workers[0].ws, etas, dt)
    }

    fn advance(&mut self, dt: f64) {
        self.counter += 1;
        self.tau += dt;
    }

    fn to_real(&self, spectral: &[C]) -> ComplexField {
        let mut ws = self.workers[0].ws.clone();
        let mut values = spectral.to_vec();
        ws.inverse_in_place(&mut values);
        ComplexField {
            grid: self.grid,
            values,
        }
    }

    fn to_spectral(&self, field: &ComplexField) -> Result<Vec<C>> {
        if field.grid != self.grid {
            return domain("field grid does not match the ensemble grid");
        }
        let mut ws = self.workers[0].ws.clone();
        let mut values = field.values.clone();
        ws.forward_in_place(&mut values);
        Ok(values)
    }
}

/// Maps `f` over `items` with one worker per contiguous chunk; results keep
/// item order.
fn par_map<T, R, F>(items: &mut [T], workers: &mut [Worker], f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, &mut T, &mut Worker) -> R + Sync,
{
    let chunk = items.len().div_ceil(workers.len()).max(1);
    let nested: Vec<Vec<R>> = items
        .par_chunks_mut(chunk)
        .zip(workers.par_iter_mut())
        .enumerate()
        .map(|(ci, (block, w))| {
            block
                .iter_mut()
                .enumerate()
                .map(|(j, item)| f(ci * chunk + j, item, w))
                .collect()
        })
        .collect();
    nested.into_iter().flatten().collect()
}

fn check_finite(values: &[f64], tau: f64) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(OpoError::Numerical(format!("trajectory {i} diverged at tau = {tau}"))),
        None => Ok(()),
    }
}

fn power(spectral: &[C], cell_area: f64) -> Vec<f64> {
    spectral.iter().map(|z| z.norm_sqr() * cell_area).collect()
}

macro_rules! lockstep_builders {
    () => {
        /// Draws step `m` as the sum of fine draws `m·s … m·s+s-1`.
        pub fn with_subdivision(mut self, subdivision: u32) -> Self {
            assert!(subdivision >= 1);
            self.base.subdivision = subdivision;
            self
        }

        pub fn without_noise(mut self) -> Self {
            self.base.noise = false;
            self
        }

        pub fn seed(&self) -> u64 {
            self.base.seed
        }

        pub fn subdivision(&self) -> u32 {
            self.base.subdivision
        }
    };
}

/// Independent trajectories of the full reduced equation.
#[derive(Debug, Clone)]
pub struct ShEnsemble {
    base: Lockstep,
    modes: Vec<Vec<C>>,
    intensity: Vec<f64>,
}

impl ShEnsemble {
    /// `n` trajectories starting from `X = 0`.
    pub fn new(grid: GridSpec, n: usize, seed: u64) -> Result<Self> {
        let base = Lockstep::new(grid, n, seed)?;
        Ok(ShEnsemble {
            modes: vec![vec![C::new(0.0, 0.0); grid.len()]; n],
            intensity: vec![0.0; n],
            base,
        })
    }

    lockstep_builders!();

    pub fn set_state(&mut self, trajectory: usize, x: &VectorField) -> Result<()> {
        let spectral = self.base.to_spectral(&x.to_complex())?;
        self.intensity[trajectory] = x.mean_dot();
        self.modes[trajectory] = spectral;
        Ok(())
    }

    pub fn state(&self, trajectory: usize) -> SHState {
        SHState {
            x: VectorField::from_complex(&self.base.to_real(&self.modes[trajectory])),
            tau: self.base.tau,
        }
    }
}

impl Ensemble for ShEnsemble {
    fn grid(&self) -> GridSpec {
        self.base.grid
    }

    fn len(&self) -> usize {
        self.modes.len()
    }

    fn tau(&self) -> f64 {
        self.base.tau
    }

    fn counter(&self) -> u64 {
        self.base.counter
    }

    fn step(&mut self, etas: &Etas, dt: f64) -> Result<()> {
        check_step(etas, dt)?;
        let f = self.base.half_factors(etas, dt);
        let base = &self.base;
        let streams: Vec<Option<NoiseStream>> = (0..self.modes.len()).map(|i| base.stream(i)).collect();
        let mut workers = std::mem::take(&mut self.base.workers);
        self.intensity = par_map(&mut self.modes, &mut workers, |i, m, w| {
            kernel::euler_ip(m, &f, dt, None, streams[i].as_ref(), w);
            m.iter().map(|z| z.norm_sqr()).sum::<f64>() / m.len() as f64
        });
        self.base.workers = workers;
        self.base.advance(dt);
        check_finite(&self.intensity, self.base.tau)
    }

    fn intensity_samples(&self) -> Vec<f64> {
        self.intensity.clone()
    }

    fn power_spectrum(&self, trajectory: usize) -> Vec<f64> {
        power(&self.modes[trajectory], self.base.grid.cell_area())
    }
}

/// Ensemble-and-space averages `⟨|X̃|²⟩` and `⟨X̃²⟩` shared by all Gaussian trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SharedStats {
    pub norm: f64,
    pub square: Complex64,
}

impl SharedStats {
    fn closure(&self) -> Closure {
        Closure {
            norm: self.norm,
            square: self.square,
        }
    }

    fn from_moments(moments: &[(f64, C)]) -> Self {
        let n = moments.len() as f64;
        let (mut norm, mut square) = (0.0, C::new(0.0, 0.0));
        for (a, b) in moments {
            norm += a;
            square += b;
        }
        SharedStats {
            norm: norm / n,
            square: square / n,
        }
    }
}

/// Gaussian mean-field trajectories coupled through [`SharedStats`].
#[derive(Debug, Clone)]
pub struct MeanFieldEnsemble {
    base: Lockstep,
    modes: Vec<Vec<C>>,
    moments: Vec<(f64, C)>,
    stats: SharedStats,
}

impl MeanFieldEnsemble {
    pub fn new(grid: GridSpec, n: usize, seed: u64) -> Result<Self> {
        let base = Lockstep::new(grid, n, seed)?;
        Ok(MeanFieldEnsemble {
            modes: vec![vec![C::new(0.0, 0.0); grid.len()]; n],
            moments: vec![(0.0, C::new(0.0, 0.0)); n],
            stats: SharedStats::default(),
            base,
        })
    }

    lockstep_builders!();

    /// Replaces trajectory `i` (real-space field `X̃`) and refreshes the shared averages.
    pub fn set_trajectory(&mut self, trajectory: usize, field: &ComplexField) -> Result<()> {
        let spectral = self.base.to_spectral(field)?;
        self.moments[trajectory] = kernel::field_moments(&spectral, &self.base.neg);
        self.modes[trajectory] = spectral;
        self.stats = SharedStats::from_moments(&self.moments);
        Ok(())
    }

    /// Real-space `X̃` of trajectory `i`.
    pub fn trajectory(&self, trajectory: usize) -> ComplexField {
        self.base.to_real(&self.modes[trajectory])
    }

    /// Unitary spectral amplitudes of trajectory `i`.
    pub fn spectral(&self, trajectory: usize) -> ComplexField {
        ComplexField {
            grid: self.base.grid,
            values: self.modes[trajectory].clone(),
        }
    }

    pub fn stats(&self) -> SharedStats {
        self.stats
    }

    /// Advances every trajectory with the averages of the start of the step,
    /// then recomputes them.
    pub fn step_gaussian(&mut self, etas: &Etas, dt: f64) -> Result<()> {
        check_step(etas, dt)?;
        let f = self.base.half_factors(etas, dt);
        let closure = self.stats.closure();
        let base = &self.base;
        let streams: Vec<Option<NoiseStream>> = (0..self.modes.len()).map(|i| base.stream(i)).collect();
        let neg = std::mem::take(&mut self.base.neg);
        let mut workers = std::mem::take(&mut self.base.workers);
        self.moments = par_map(&mut self.modes, &mut workers, |i, m, w| {
            kernel::euler_ip(m, &f, dt, Some(&closure), streams[i].as_ref(), w);
            kernel::field_moments(m, &neg)
        });
        self.base.workers = workers;
        self.base.neg = neg;
        self.base.advance(dt);
        self.stats = SharedStats::from_moments(&self.moments);
        let norms: Vec<f64> = self.moments.iter().map(|m| m.0).collect();
        check_finite(&norms, self.base.tau)
    }
}

impl Ensemble for MeanFieldEnsemble {
    fn grid(&self) -> GridSpec {
        self.base.grid
    }

    fn len(&self) -> usize {
        self.modes.len()
    }

    fn tau(&self) -> f64 {
        self.base.tau
    }

    fn counter(&self) -> u64 {
        self.base.counter
    }

    fn step(&mut self, etas: &Etas, dt: f64) -> Result<()> {
        self.step_gaussian(etas, dt)
    }

    fn intensity_samples(&self) -> Vec<f64> {
        self.moments.iter().map(|m| m.0).collect()
    }

    fn power_spectrum(&self, trajectory: usize) -> Vec<f64> {
        power(&self.modes[trajectory], self.base.grid.cell_area())
    }
}

/// Difference `Δ = X - X̃` between a full trajectory and its Gaussian partner
/// driven by the same noise, stored as unitary spectral amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceState {
    pub trajectory: u64,
    /// Counter of the next shared noise draw.
    pub counter: u64,
    pub delta: ComplexField,
}

impl DifferenceState {
    pub fn zero(grid: GridSpec, trajectory: u64) -> Self {
        DifferenceState {
            trajectory,
            counter: 0,
            delta: ComplexField::zeros(grid),
        }
    }

    fn check(&self, stream: &NoiseStream) -> Result<()> {
        if stream.counter != self.counter {
            return Err(OpoError::StreamMisaligned {
                expected: self.counter,
                actual: stream.counter,
            });
        }
        if stream.trajectory != self.trajectory {
            return Err(OpoError::Mismatch(format!(
                "difference bound to trajectory {}, stream belongs to {}",
                self.trajectory, stream.trajectory
            )));
        }
        Ok(())
    }
}

/// Advances `diff` by one step given its Gaussian partner `bound` (unitary
/// spectral amplitudes at the start of the step) and the shared averages.
///
/// The noise cancels from the difference equation, so `stream` is only used
/// to verify that both equations are at the same draw.
pub fn step_difference(
    diff: &mut DifferenceState,
    bound: &ComplexField,
    stats: &SharedStats,
    etas: &Etas,
    dt: f64,
    stream: &NoiseStream,
    ws: &SpectralWorkspace,
) -> Result<()> {
    check_step(etas, dt)?;
    diff.check(stream)?;
    if bound.grid != ws.grid() || diff.delta.grid != ws.grid() {
        return domain("difference, partner and workspace grids differ");
    }
    let mut w = Worker::new(ws.clone());
    let f = kernel::half_factors(ws, etas, dt);
    kernel::difference_only(&bound.values, &mut diff.delta.values, &f, dt, &stats.closure(), &mut w);
    diff.counter += 1;
    Ok(())
}

#[derive(Debug, Clone)]
struct CrnTrajectory {
    gaussian: Vec<C>,
    diff: DifferenceState,
}

#[derive(Debug, Clone, Copy, Default)]
struct CrnSample {
    moments: (f64, C),
    difference: f64,
}

/// Gaussian ensemble plus one difference field per trajectory.
///
/// The observed field is `X = X̃ + Δ`, so direct and difference estimators of
/// every observable come from the same run.
#[derive(Debug, Clone)]
pub struct CrnEnsemble {
    base: Lockstep,
    trajs: Vec<CrnTrajectory>,
    samples: Vec<CrnSample>,
    stats: SharedStats,
}

impl CrnEnsemble {
    pub fn new(grid: GridSpec, n: usize, seed: u64) -> Result<Self> {
        let base = Lockstep::new(grid, n, seed)?;
        let trajs = (0..n)
            .map(|i| CrnTrajectory {
                gaussian: vec![C::new(0.0, 0.0); grid.len()],
                diff: DifferenceState::zero(grid, i as u64),
            })
            .collect();
        Ok(CrnEnsemble {
            base,
            trajs,
            samples: vec![CrnSample::default(); n],
            stats: SharedStats::default(),
        })
    }

    lockstep_builders!();

    pub fn stats(&self) -> SharedStats {
        self.stats
    }

    pub fn difference(&self, trajectory: usize) -> &DifferenceState {
        &self.trajs[trajectory].diff
    }

    /// Unitary spectral amplitudes of the Gaussian partner of trajectory `i`.
    pub fn gaussian_spectral(&self, trajectory: usize) -> ComplexField {
        ComplexField {
            grid: self.base.grid,
            values: self.trajs[trajectory].gaussian.clone(),
        }
    }

    /// Real-space `X = X̃ + Δ` of trajectory `i`.
    pub fn full_field(&self, trajectory: usize) -> ComplexField {
        let t = &self.trajs[trajectory];
        let sum: Vec<C> = t.gaussian.iter().zip(&t.diff.delta.values).map(|(g, d)| g + d).collect();
        self.base.to_real(&sum)
    }

    pub fn gaussian_intensity_samples(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.moments.0).collect()
    }

    /// Per-trajectory spatial mean of `|X|² - |X̃|²`.
    pub fn difference_intensity_samples(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.difference).collect()
    }

    pub fn gaussian_power_spectrum(&self, trajectory: usize) -> Vec<f64> {
        power(&self.trajs[trajectory].gaussian, self.base.grid.cell_area())
    }

    /// `(|X̂|² - |X̂̃|²)·ΔA` per mode.
    pub fn difference_power_spectrum(&self, trajectory: usize) -> Vec<f64> {
        let t = &self.trajs[trajectory];
        let da = self.base.grid.cell_area();
        t.gaussian
            .iter()
            .zip(&t.diff.delta.values)
            .map(|(g, d)| (2.0 * (g.conj() * d).re + d.norm_sqr()) * da)
            .collect()
    }
}

impl Ensemble for CrnEnsemble {
    fn grid(&self) -> GridSpec {
        self.base.grid
    }

    fn len(&self) -> usize {
        self.trajs.len()
    }

    fn tau(&self) -> f64 {
        self.base.tau
    }

    fn counter(&self) -> u64 {
        self.base.counter
    }

    fn step(&mut self, etas: &Etas, dt: f64) -> Result<()> {
        check_step(etas, dt)?;
        let f = self.base.half_factors(etas, dt);
        let closure = self.stats.closure();
        let base = &self.base;
        let streams: Vec<Option<NoiseStream>> = (0..self.trajs.len()).map(|i| base.stream(i)).collect();
        let (seed, counter) = (self.base.seed, self.base.counter);
        let neg = std::mem::take(&mut self.base.neg);
        let mut workers = std::mem::take(&mut self.base.workers);
        let results: Vec<Result<CrnSample>> = par_map(&mut self.trajs, &mut workers, |i, t, w| {
            let aligned = NoiseStream::new(seed, i as u64, NoiseTag::Reduced).at(counter);
            t.diff.check(&aligned)?;
            kernel::crn_step(
                &mut t.gaussian,
                &mut t.diff.delta.values,
                &f,
                dt,
                &closure,
                streams[i].as_ref(),
                w,
            );
            t.diff.counter += 1;
            Ok(CrnSample {
                moments: kernel::field_moments(&t.gaussian, &neg),
                difference: kernel::difference_norm(&t.gaussian, &t.diff.delta.values),
            })
        });
        self.base.workers = workers;
        self.base.neg = neg;
        self.samples = results.into_iter().collect::<Result<Vec<_>>>()?;
        self.base.advance(dt);
        let moments: Vec<(f64, C)> = self.samples.iter().map(|s| s.moments).collect();
        self.stats = SharedStats::from_moments(&moments);
        let direct = self.intensity_samples();
        check_finite(&direct, self.base.tau)
    }

    fn intensity_samples(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.moments.0 + s.difference).collect()
    }

    fn power_spectrum(&self, trajectory: usize) -> Vec<f64> {
        let t = &self.trajs[trajectory];
        let da = self.base.grid.cell_area();
        t.gaussian
            .iter()
            .zip(&t.diff.delta.values)
            .map(|(g, d)| (g + d).norm_sqr() * da)
            .collect()
    }
}
