//! Two-dimensional FFTs and diagonal-in-k operators.
//!
//! The public transforms are unitary: forward and inverse both divide by
//! `√(nx·ny)`, so `Σ|f|² = Σ|f̂|²`. A field `X̂` produced by [`SpectralWorkspace::forward`]
//! relates to the continuum transform through the cell area: the discrete
//! power `⟨|X̂(k)|²⟩·ΔA` approximates the continuum spectral density.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{ComplexField, GridSpec, VectorField};
use crate::params::Etas;

/// FFT plans, scratch buffers and the `|k|²` table for one grid.
///
/// A workspace is single-threaded; clone it to obtain one per worker.
#[derive(Clone)]
pub struct SpectralWorkspace {
    grid: GridSpec,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
    columns: Vec<Complex64>,
    scratch: Vec<Complex64>,
    k2: Arc<Vec<f64>>,
}

impl std::fmt::Debug for SpectralWorkspace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralWorkspace").field("grid", &self.grid).finish()
    }
}

impl SpectralWorkspace {
    pub fn new(grid: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let fwd_x = planner.plan_fft_forward(grid.nx);
        let inv_x = planner.plan_fft_inverse(grid.nx);
        let fwd_y = planner.plan_fft_forward(grid.ny);
        let inv_y = planner.plan_fft_inverse(grid.ny);
        let scratch_len = [&fwd_x, &inv_x, &fwd_y, &inv_y]
            .iter()
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        SpectralWorkspace {
            grid,
            fwd_x,
            inv_x,
            fwd_y,
            inv_y,
            columns: vec![Complex64::new(0.0, 0.0); grid.len()],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            k2: Arc::new(grid.k_squared()),
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// `|k|²` per mode, transform order.
    pub fn k_squared(&self) -> &[f64] {
        &self.k2
    }

    fn transform(&mut self, data: &mut [Complex64], forward: bool) {
        assert_eq!(data.len(), self.grid.len(), "field does not match workspace grid");
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let (px, py) = if forward {
            (&self.fwd_x, &self.fwd_y)
        } else {
            (&self.inv_x, &self.inv_y)
        };
        px.process_with_scratch(data, &mut self.scratch);
        for iy in 0..ny {
            for ix in 0..nx {
                self.columns[ix * ny + iy] = data[iy * nx + ix];
            }
        }
        py.process_with_scratch(&mut self.columns, &mut self.scratch);
        for ix in 0..nx {
            for iy in 0..ny {
                data[iy * nx + ix] = self.columns[ix * ny + iy];
            }
        }
    }

    /// Unnormalised forward transform, in place.
    pub(crate) fn raw_forward(&mut self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    /// Unnormalised inverse transform, in place.
    pub(crate) fn raw_inverse(&mut self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    pub fn forward_in_place(&mut self, data: &mut [Complex64]) {
        self.transform(data, true);
        let s = 1.0 / (self.grid.len() as f64).sqrt();
        data.iter_mut().for_each(|z| *z *= s);
    }

    pub fn inverse_in_place(&mut self, data: &mut [Complex64]) {
        self.transform(data, false);
        let s = 1.0 / (self.grid.len() as f64).sqrt();
        data.iter_mut().for_each(|z| *z *= s);
    }

    pub fn forward(&mut self, field: &ComplexField) -> ComplexField {
        let mut out = field.clone();
        self.forward_in_place(&mut out.values);
        out
    }

    pub fn inverse(&mut self, spectral: &ComplexField) -> ComplexField {
        let mut out = spectral.clone();
        self.inverse_in_place(&mut out.values);
        out
    }

    /// Applies a diagonal operator `m(k)` to a real-space field in place.
    pub fn apply_multiplier(&mut self, data: &mut [Complex64], multiplier: impl Fn(usize, f64) -> Complex64) {
        self.raw_forward(data);
        let inv_n = 1.0 / self.grid.len() as f64;
        let k2 = Arc::clone(&self.k2);
        for (i, z) in data.iter_mut().enumerate() {
            *z *= multiplier(i, k2[i]) * inv_n;
        }
        self.raw_inverse(data);
    }

    fn apply_real_multiplier(&mut self, data: &mut [Complex64], multiplier: impl Fn(f64) -> f64) {
        self.raw_forward(data);
        let inv_n = 1.0 / self.grid.len() as f64;
        let k2 = Arc::clone(&self.k2);
        for (z, &q) in data.iter_mut().zip(k2.iter()) {
            *z *= multiplier(q) * inv_n;
        }
        self.raw_inverse(data);
    }

    /// Spectral `∇²`: multiplication by `-|k|²`.
    pub fn laplacian(&mut self, field: &ComplexField) -> ComplexField {
        let mut out = field.clone();
        self.apply_real_multiplier(&mut out.values, |k2| -k2);
        out
    }

    /// Spectral `∇⁴`: multiplication by `|k|⁴`.
    pub fn biharmonic(&mut self, field: &ComplexField) -> ComplexField {
        let mut out = field.clone();
        self.apply_real_multiplier(&mut out.values, |k2| k2 * k2);
        out
    }

    /// Spectral `∇²` of each component of a real vector field.
    pub fn laplacian_vector(&mut self, field: &VectorField) -> VectorField {
        VectorField::from_complex(&self.laplacian(&field.to_complex()))
    }

    /// Multiplies every mode of a spectral field by `exp(-(η₁ + η₂k² + η₃k⁴)·dt)`.
    pub fn linear_propagator(&self, spectral: &mut ComplexField, etas: &Etas, dt: f64) {
        assert!(dt >= 0.0, "propagation time must be non-negative");
        for (z, &k2) in spectral.values.iter_mut().zip(self.k2.iter()) {
            *z *= (-etas.decay_rate(k2) * dt).exp();
        }
    }

    /// Propagator factors `exp(-rate(k)·dt)` for every mode.
    pub fn propagator_factors(&self, etas: &Etas, dt: f64) -> Vec<f64> {
        self.k2.iter().map(|&k2| (-etas.decay_rate(k2) * dt).exp()).collect()
    }
}
