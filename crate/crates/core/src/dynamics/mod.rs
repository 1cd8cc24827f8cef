//! Time integrators for the reduced vector equation, its Gaussian closure,
//! the common-random-number difference equation and the full positive-P
//! signal/idler/pump model.

mod ensemble;
mod full;
pub(crate) mod kernel;
mod schedule;

pub use ensemble::{
    step_difference, CrnEnsemble, DifferenceState, Ensemble, MeanFieldEnsemble, SharedStats, ShEnsemble,
};
pub use full::{
    quadratures_from_modes, FullEnsemble, FullState, FullStepper, PumpMode, Quadratures, DIVERGENCE_LIMIT,
    MAX_DISCARD_FRACTION,
};
pub use schedule::{evolve, IntensityRecorder, RecordContext, RecordPoint, Recorder, ReducedModel, ScanParameter, ScanSchedule, Schedule};

use crate::error::{domain, OpoError, Result};
use crate::grid::{GridSpec, SpectralWorkspace, VectorField};
use crate::noise::NoiseStream;
use crate::params::Etas;
use kernel::{cubic_drift, from_frame, half_factors, reduced_increments, to_frame, Worker, C};

/// Reduced-model state: the two real quadrature components.
#[derive(Debug, Clone, PartialEq)]
pub struct SHState {
    pub x: VectorField,
    pub tau: f64,
}

impl SHState {
    pub fn vacuum(grid: GridSpec) -> Self {
        SHState {
            x: VectorField::zeros(grid),
            tau: 0.0,
        }
    }
}

/// Interaction-picture integrators for the reduced equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Explicit Euler-Maruyama between symmetric half-step propagators.
    #[default]
    EulerIp,
    /// Midpoint rule solved by three fixed-point iterations.
    SemiImplicitIp,
    /// Fourth-order Runge-Kutta in the interaction picture; the noise is held
    /// constant across the stages.
    Rk4Ip,
}

const SEMI_IMPLICIT_ITERATIONS: usize = 3;

pub(crate) fn check_step(etas: &Etas, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return domain(format!("time step must be positive, got {dt}"));
    }
    if ![etas.eta1, etas.eta2, etas.eta3].iter().all(|v| v.is_finite()) {
        return domain("eta coefficients must be finite");
    }
    Ok(())
}

/// Reusable single-trajectory integrator for the reduced equation.
#[derive(Debug, Clone)]
pub struct ShStepper {
    worker: Worker,
    scheme: Scheme,
}

impl ShStepper {
    pub fn new(grid: GridSpec, scheme: Scheme) -> Self {
        ShStepper {
            worker: Worker::new(SpectralWorkspace::new(grid)),
            scheme,
        }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Advances `state` by `dt`; `stream = None` switches the noise off.
    pub fn step(&mut self, state: &SHState, etas: &Etas, dt: f64, stream: Option<&NoiseStream>) -> Result<SHState> {
        check_step(etas, dt)?;
        let grid = self.worker.ws.grid();
        if state.x.grid != grid {
            return domain("state grid does not match the stepper grid");
        }
        let mut xhat = state.x.to_complex().values;
        self.worker.ws.forward_in_place(&mut xhat);
        match self.scheme {
            Scheme::EulerIp => {
                let f = half_factors(&self.worker.ws, etas, dt);
                kernel::euler_ip(&mut xhat, &f, dt, None, stream, &mut self.worker);
            }
            Scheme::SemiImplicitIp => {
                let f = half_factors(&self.worker.ws, etas, dt);
                semi_implicit_ip(&mut xhat, &f, dt, stream, &mut self.worker);
            }
            Scheme::Rk4Ip => rk4_ip(&mut xhat, etas, dt, stream, &mut self.worker),
        }
        self.worker.ws.inverse_in_place(&mut xhat);
        let x = VectorField::from_complex(&crate::grid::ComplexField { grid, values: xhat });
        if !x.is_finite() {
            return Err(OpoError::Numerical(format!("non-finite field at tau = {}", state.tau + dt)));
        }
        Ok(SHState { x, tau: state.tau + dt })
    }
}

/// One Euler interaction-picture step of `∂X/∂τ = D̃X - |X|²X + ζ̃`.
///
/// Builds a fresh workspace; use [`ShStepper`] in loops.
pub fn step_sh(state: &SHState, etas: &Etas, dt: f64, stream: Option<&NoiseStream>) -> Result<SHState> {
    ShStepper::new(state.x.grid, Scheme::EulerIp).step(state, etas, dt, stream)
}

fn semi_implicit_ip(xhat: &mut [C], f: &[f64], dt: f64, stream: Option<&NoiseStream>, w: &mut Worker) {
    let grid = w.ws.grid();
    to_frame(xhat, f, &mut w.a, &mut w.ws);
    reduced_increments(stream, &grid, dt, &mut w.b, &mut w.normals);
    for (y0, dw) in w.a.iter_mut().zip(w.b.iter()) {
        let mut ym = *y0;
        for _ in 0..SEMI_IMPLICIT_ITERATIONS {
            ym = *y0 + 0.5 * (dt * cubic_drift(ym) + dw);
        }
        *y0 = 2.0 * ym - *y0;
    }
    from_frame(&mut w.a, f, xhat, &mut w.ws);
}

fn rk4_ip(xhat: &mut [C], etas: &Etas, dt: f64, stream: Option<&NoiseStream>, w: &mut Worker) {
    let grid = w.ws.grid();
    let n = grid.len();
    let half: Vec<f64> = w
        .ws
        .k_squared()
        .iter()
        .map(|&k2| (-etas.decay_rate(k2) * 0.5 * dt).exp())
        .collect();
    let mut force = vec![C::new(0.0, 0.0); n];
    reduced_increments(stream, &grid, dt, &mut force, &mut w.normals);
    // dt·F(y) = dt·N(y) + dW
    let stage = |y: &[C]| -> Vec<C> { y.iter().zip(&force).map(|(&v, &dw)| dt * cubic_drift(v) + dw).collect() };
    let propagate = |ws: &mut SpectralWorkspace, v: &mut Vec<C>| {
        ws.forward_in_place(v);
        v.iter_mut().zip(&half).for_each(|(z, p)| *z *= p);
        ws.inverse_in_place(v);
    };
    let mut a = xhat.to_vec();
    w.ws.inverse_in_place(&mut a);
    let mut a_i: Vec<C> = xhat.iter().zip(&half).map(|(z, p)| z * p).collect();
    w.ws.inverse_in_place(&mut a_i);
    let mut k1 = stage(&a);
    propagate(&mut w.ws, &mut k1);
    let mid: Vec<C> = a_i.iter().zip(&k1).map(|(u, k)| u + 0.5 * k).collect();
    let k2 = stage(&mid);
    let mid: Vec<C> = a_i.iter().zip(&k2).map(|(u, k)| u + 0.5 * k).collect();
    let k3 = stage(&mid);
    let mut end: Vec<C> = a_i.iter().zip(&k3).map(|(u, k)| u + k).collect();
    propagate(&mut w.ws, &mut end);
    let k4 = stage(&end);
    let mut out: Vec<C> = (0..n).map(|i| a_i[i] + k1[i] / 6.0 + k2[i] / 3.0 + k3[i] / 3.0).collect();
    propagate(&mut w.ws, &mut out);
    for (o, k) in out.iter_mut().zip(&k4) {
        *o += k / 6.0;
    }
    w.ws.forward_in_place(&mut out);
    xhat.copy_from_slice(&out);
}

/// Uniform initial field `(c₁, c₂)` at `τ = 0`.
pub fn uniform_state(grid: GridSpec, c1: f64, c2: f64) -> SHState {
    SHState {
        x: VectorField::uniform(grid, c1, c2),
        tau: 0.0,
    }
}
