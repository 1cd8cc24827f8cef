//! Full positive-P model of the pump, signal and idler fields.
//!
//! Works in physical time and field units. Grid coordinates are measured in
//! units of the transverse scale `x₀`, so the physical Laplacian is
//! `∇²/x₀²` and the physical cell area is `ΔA·x₀²`. The pump carrier is taken
//! at twice the signal frequency with the same group velocity, which gives it
//! half the signal diffraction coefficient.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{domain, OpoError, Result};
use crate::grid::{ComplexField, GridSpec, SpectralWorkspace};
use crate::noise::{sample_pair_noise, NoiseStream, NoiseTag};
use crate::params::{derive_scales, PhysicalParams};

/// A trajectory whose largest field modulus exceeds this is discarded.
pub const DIVERGENCE_LIMIT: f64 = 1e6;
/// Largest tolerated fraction of discarded trajectories.
pub const MAX_DISCARD_FRACTION: f64 = 1e-3;

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PumpMode {
    /// Pump slaved to its stationary value `Ā₀ = (E - χA₁A₂)/γ̃₀`.
    Adiabatic,
    /// Pump integrated as a dynamical field; needs `dt ≪ 1/γ₀`.
    Resolved,
}

/// Six independent c-number fields of the positive-P representation.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub a0: ComplexField,
    pub a1: ComplexField,
    pub a2: ComplexField,
    pub a0p: ComplexField,
    pub a1p: ComplexField,
    pub a2p: ComplexField,
    pub t: f64,
}

impl FullState {
    /// Empty signal and idler with the pump at its below-threshold value.
    pub fn vacuum(grid: GridSpec, phys: &PhysicalParams) -> Self {
        let g0 = phys.gamma0_tilde();
        let e = C::new(phys.pump, 0.0);
        let zero = ComplexField::zeros(grid);
        FullState {
            a0: ComplexField::constant(grid, e / g0),
            a0p: ComplexField::constant(grid, e / g0.conj()),
            a1: zero.clone(),
            a2: zero.clone(),
            a1p: zero.clone(),
            a2p: zero,
            t: 0.0,
        }
    }

    fn fields(&self) -> [&ComplexField; 6] {
        [&self.a0, &self.a1, &self.a2, &self.a0p, &self.a1p, &self.a2p]
    }

    pub fn max_abs(&self) -> f64 {
        self.fields().iter().fold(0.0, |m, f| m.max(f.max_abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.fields().iter().all(|f| f.is_finite())
    }

    /// Quadratures of the scaled amplitudes `α = x₀A`.
    pub fn quadratures(&self, x0: f64, g: f64) -> Result<Quadratures> {
        let scale = |f: &ComplexField| ComplexField {
            grid: f.grid,
            values: f.values.iter().map(|z| z * x0).collect(),
        };
        quadratures_from_modes(&scale(&self.a1), &scale(&self.a2p), &scale(&self.a2), &scale(&self.a1p), g)
    }
}

/// Scaled quadrature fields `X, X⁺, Y, Y⁺`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratures {
    pub x: ComplexField,
    pub xp: ComplexField,
    pub y: ComplexField,
    pub yp: ComplexField,
}

/// `X = √g(α₁+α₂⁺)`, `X⁺ = √g(α₂+α₁⁺)`, `Y = (α₁-α₂⁺)/i`, `Y⁺ = (α₂-α₁⁺)/i`.
pub fn quadratures_from_modes(
    a1: &ComplexField,
    a2p: &ComplexField,
    a2: &ComplexField,
    a1p: &ComplexField,
    g: f64,
) -> Result<Quadratures> {
    if !(g > 0.0) {
        return domain(format!("g must be positive, got {g}"));
    }
    let grid = a1.grid;
    if [a2p, a2, a1p].iter().any(|f| f.grid != grid) {
        return domain("mode fields live on different grids");
    }
    let sg = g.sqrt();
    let minus_i = C::new(0.0, -1.0);
    let combine = |p: &ComplexField, q: &ComplexField, f: &dyn Fn(C, C) -> C| ComplexField {
        grid,
        values: p.values.iter().zip(&q.values).map(|(&u, &v)| f(u, v)).collect(),
    };
    Ok(Quadratures {
        x: combine(a1, a2p, &|u, v| sg * (u + v)),
        xp: combine(a2, a1p, &|u, v| sg * (u + v)),
        y: combine(a1, a2p, &|u, v| minus_i * (u - v)),
        yp: combine(a2, a1p, &|u, v| minus_i * (u - v)),
    })
}

/// Single-trajectory integrator for the full model.
#[derive(Debug, Clone)]
pub struct FullStepper {
    ws: SpectralWorkspace,
    phys: PhysicalParams,
    mode: PumpMode,
    x0: f64,
}

impl FullStepper {
    pub fn new(grid: GridSpec, phys: PhysicalParams, mode: PumpMode) -> Result<Self> {
        grid.validate()?;
        let x0 = derive_scales(&phys)?.x0;
        Ok(FullStepper {
            ws: SpectralWorkspace::new(grid),
            phys,
            mode,
            x0,
        })
    }

    /// Transverse length unit of the grid.
    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn phys(&self) -> &PhysicalParams {
        &self.phys
    }

    /// `exp(L(k)·dt/2)` for a field with decay `γ̃` and diffraction `d`
    /// (`L = -γ̃ - i d k²/x₀²`).
    fn half_propagator(&self, gamma: C, diffraction: f64, dt: f64) -> Vec<C> {
        let inv_x02 = 1.0 / (self.x0 * self.x0);
        self.ws
            .k_squared()
            .iter()
            .map(|&k2| ((-gamma - C::new(0.0, diffraction * k2 * inv_x02)) * (0.5 * dt)).exp())
            .collect()
    }

    fn propagate(&mut self, values: &mut [C], half: &[C]) {
        self.ws.forward_in_place(values);
        values.iter_mut().zip(half).for_each(|(z, p)| *z *= p);
        self.ws.inverse_in_place(values);
    }

    /// One Euler-Maruyama interaction-picture step (Itô noise).
    pub fn step(&mut self, state: &FullState, dt: f64, stream: Option<&NoiseStream>) -> Result<FullState> {
        if !(dt > 0.0 && dt.is_finite()) {
            return domain(format!("time step must be positive, got {dt}"));
        }
        let grid = self.ws.grid();
        if state.a1.grid != grid {
            return domain("state grid does not match the stepper grid");
        }
        let p = self.phys;
        let chi = p.chi;
        let e = C::new(p.pump, 0.0);
        let g0 = p.gamma0_tilde();
        let gs = p.gamma_tilde();
        let d = p.diffraction();
        let d0 = 0.5 * d;
        let hs = self.half_propagator(gs, d, dt);
        let hsp = self.half_propagator(gs.conj(), -d, dt);
        let hp = self.half_propagator(g0, d0, dt);
        let hpp = self.half_propagator(g0.conj(), -d0, dt);

        let mut y1 = state.a1.values.clone();
        let mut y2 = state.a2.values.clone();
        let mut y1p = state.a1p.values.clone();
        let mut y2p = state.a2p.values.clone();
        self.propagate(&mut y1, &hs);
        self.propagate(&mut y2, &hs);
        self.propagate(&mut y1p, &hsp);
        self.propagate(&mut y2p, &hsp);
        let (mut y0, mut y0p) = match self.mode {
            PumpMode::Resolved => {
                let mut y0 = state.a0.values.clone();
                let mut y0p = state.a0p.values.clone();
                self.propagate(&mut y0, &hp);
                self.propagate(&mut y0p, &hpp);
                (y0, y0p)
            }
            PumpMode::Adiabatic => (
                y1.iter().zip(&y2).map(|(u, v)| (e - chi * u * v) / g0).collect(),
                y1p.iter().zip(&y2p).map(|(u, v)| (e - chi * u * v) / g0.conj()).collect(),
            ),
        };

        let noise = stream.map(|s| {
            let mut n = sample_pair_noise(&grid, dt, s);
            // physical cell area is ΔA·x₀²
            let scale = dt / self.x0;
            for f in [&mut n.xi1, &mut n.xi2, &mut n.xi1p, &mut n.xi2p] {
                f.values.iter_mut().for_each(|z| *z *= scale);
            }
            n
        });

        let n = grid.len();
        let mut k1 = vec![C::new(0.0, 0.0); n];
        let mut k2 = k1.clone();
        let mut k1p = k1.clone();
        let mut k2p = k1.clone();
        for i in 0..n {
            let (a0, a0p) = (y0[i], y0p[i]);
            k1[i] = y1[i] + dt * chi * a0 * y2p[i];
            k2[i] = y2[i] + dt * chi * a0 * y1p[i];
            k1p[i] = y1p[i] + dt * chi * a0p * y2[i];
            k2p[i] = y2p[i] + dt * chi * a0p * y1[i];
            if let Some(nz) = &noise {
                let s = (chi * a0).sqrt();
                let sp = (chi * a0p).sqrt();
                k1[i] += s * nz.xi1.values[i];
                k2[i] += s * nz.xi2.values[i];
                k1p[i] += sp * nz.xi1p.values[i];
                k2p[i] += sp * nz.xi2p.values[i];
            }
        }
        if self.mode == PumpMode::Resolved {
            for i in 0..n {
                let drive = e - chi * y1[i] * y2[i];
                let drive_p = e - chi * y1p[i] * y2p[i];
                y0[i] += dt * drive;
                y0p[i] += dt * drive_p;
            }
        }
        self.propagate(&mut k1, &hs);
        self.propagate(&mut k2, &hs);
        self.propagate(&mut k1p, &hsp);
        self.propagate(&mut k2p, &hsp);
        match self.mode {
            PumpMode::Resolved => {
                self.propagate(&mut y0, &hp);
                self.propagate(&mut y0p, &hpp);
            }
            PumpMode::Adiabatic => {
                y0 = k1.iter().zip(&k2).map(|(u, v)| (e - chi * u * v) / g0).collect();
                y0p = k1p.iter().zip(&k2p).map(|(u, v)| (e - chi * u * v) / g0.conj()).collect();
            }
        }
        let field = |values| ComplexField { grid, values };
        let next = FullState {
            a0: field(y0),
            a1: field(k1),
            a2: field(k2),
            a0p: field(y0p),
            a1p: field(k1p),
            a2p: field(k2p),
            t: state.t + dt,
        };
        let m = next.max_abs();
        if !next.is_finite() || m > DIVERGENCE_LIMIT {
            return Err(OpoError::Numerical(format!("positive-P trajectory diverged at t = {} (max |A| = {m:e})", next.t)));
        }
        Ok(next)
    }
}

/// Independent full-model trajectories with the divergence discard policy.
#[derive(Debug, Clone)]
pub struct FullEnsemble {
    stepper: FullStepper,
    states: Vec<Option<FullState>>,
    seed: u64,
    counter: u64,
    noise: bool,
}

impl FullEnsemble {
    pub fn new(grid: GridSpec, phys: PhysicalParams, mode: PumpMode, n: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return domain("ensemble needs at least one trajectory");
        }
        let stepper = FullStepper::new(grid, phys, mode)?;
        Ok(FullEnsemble {
            states: vec![Some(FullState::vacuum(grid, &phys)); n],
            stepper,
            seed,
            counter: 0,
            noise: true,
        })
    }

    pub fn without_noise(mut self) -> Self {
        self.noise = false;
        self
    }

    pub fn x0(&self) -> f64 {
        self.stepper.x0()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Surviving trajectories with their indices.
    pub fn alive(&self) -> impl Iterator<Item = (usize, &FullState)> {
        self.states.iter().enumerate().filter_map(|(i, s)| s.as_ref().map(|s| (i, s)))
    }

    pub fn discarded(&self) -> usize {
        self.states.iter().filter(|s| s.is_none()).count()
    }

    pub fn discard_fraction(&self) -> f64 {
        self.discarded() as f64 / self.states.len() as f64
    }

    /// Fails when more than [`MAX_DISCARD_FRACTION`] of the trajectories diverged.
    pub fn check_discards(&self) -> Result<()> {
        let f = self.discard_fraction();
        if f > MAX_DISCARD_FRACTION {
            return Err(OpoError::Numerical(format!(
                "{} of {} positive-P trajectories diverged",
                self.discarded(),
                self.len()
            )));
        }
        Ok(())
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        let (seed, counter, noise) = (self.seed, self.counter, self.noise);
        let stepper = &self.stepper;
        let outcomes: Vec<Result<()>> = self
            .states
            .par_iter_mut()
            .enumerate()
            .map_init(
                || stepper.clone(),
                |st, (i, slot)| {
                    let Some(state) = slot.as_ref() else {
                        return Ok(());
                    };
                    let stream = NoiseStream::new(seed, i as u64, NoiseTag::Pair).at(counter);
                    match st.step(state, dt, noise.then_some(&stream)) {
                        Ok(next) => *slot = Some(next),
                        Err(OpoError::Numerical(msg)) => {
                            log::warn!("discarding trajectory {i}: {msg}");
                            *slot = None;
                        }
                        Err(e) => return Err(e),
                    }
                    Ok(())
                },
            )
            .collect();
        outcomes.into_iter().collect::<Result<Vec<()>>>()?;
        self.counter += 1;
        Ok(())
    }
}
