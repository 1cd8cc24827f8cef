//! Periodic transverse lattice, field containers and spectral operators.

mod snapshot;
mod spectral;

pub use snapshot::Snapshot;
pub use spectral::SpectralWorkspace;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Two-dimensional periodic lattice in units of the transverse length scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        let g = GridSpec { nx, ny, lx, ly };
        g.validate()?;
        Ok(g)
    }

    pub fn square(n: usize, l: f64) -> Result<Self> {
        Self::new(n, n, l, l)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 8 || self.ny < 8 {
            return domain(format!("grid needs at least 8x8 sites, got {}x{}", self.nx, self.ny));
        }
        if !(self.lx > 0.0 && self.ly > 0.0 && self.lx.is_finite() && self.ly.is_finite()) {
            return domain(format!("grid lengths must be positive, got {} x {}", self.lx, self.ly));
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    /// Area of one lattice cell, `ΔA`.
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn wavenumbers(&self) -> Wavenumbers {
        Wavenumbers {
            kx: fft_wavenumbers(self.nx, self.lx),
            ky: fft_wavenumbers(self.ny, self.ly),
        }
    }

    /// `|k|²` for every mode, in transform order.
    pub fn k_squared(&self) -> Vec<f64> {
        let w = self.wavenumbers();
        let mut out = Vec::with_capacity(self.len());
        for ky in &w.ky {
            for kx in &w.kx {
                out.push(kx * kx + ky * ky);
            }
        }
        out
    }

    /// Radial bin width `2π / max(lx, ly)`.
    pub fn radial_bin_width(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.lx.max(self.ly)
    }
}

/// Discrete wavenumbers `2πm/L`, `m ∈ {0, 1, …, n/2-1, -n/2, …, -1}` (transform order).
#[derive(Debug, Clone, PartialEq)]
pub struct Wavenumbers {
    pub kx: Vec<f64>,
    pub ky: Vec<f64>,
}

fn fft_wavenumbers(n: usize, l: f64) -> Vec<f64> {
    let dk = 2.0 * std::f64::consts::PI / l;
    (0..n)
        .map(|i| {
            let m = if i < n / 2 { i as i64 } else { i as i64 - n as i64 };
            m as f64 * dk
        })
        .collect()
}

/// Complex amplitudes per site, row-major (`iy * nx + ix`).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub grid: GridSpec,
    pub values: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(grid: GridSpec) -> Self {
        ComplexField {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn constant(grid: GridSpec, c: Complex64) -> Self {
        ComplexField {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                values.push(f(ix as f64 * grid.dx(), iy as f64 * grid.dy()));
            }
        }
        ComplexField { grid, values }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Spatial mean of `|z|²`.
    pub fn mean_norm_sqr(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.values.len() as f64
    }

    pub fn conj(&self) -> Self {
        ComplexField {
            grid: self.grid,
            values: self.values.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Cyclic shift by whole lattice sites: `out(ix, iy) = self(ix - sx, iy - sy)`.
    pub fn shifted(&self, sx: usize, sy: usize) -> Self {
        let g = self.grid;
        let mut values = vec![Complex64::new(0.0, 0.0); g.len()];
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                values[g.index((ix + sx) % g.nx, (iy + sy) % g.ny)] = self.values[g.index(ix, iy)];
            }
        }
        ComplexField { grid: g, values }
    }

    pub fn to_snapshot(&self) -> Snapshot {
        Snapshot {
            nx: self.grid.nx,
            ny: self.grid.ny,
            components: vec![
                self.values.iter().map(|z| z.re).collect(),
                self.values.iter().map(|z| z.im).collect(),
            ],
        }
    }
}

/// Two real components `(X₁, X₂)` per site.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: GridSpec,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: GridSpec) -> Self {
        VectorField {
            grid,
            x1: vec![0.0; grid.len()],
            x2: vec![0.0; grid.len()],
        }
    }

    pub fn uniform(grid: GridSpec, c1: f64, c2: f64) -> Self {
        VectorField {
            grid,
            x1: vec![c1; grid.len()],
            x2: vec![c2; grid.len()],
        }
    }

    /// Packs the components into `X = X₁ + iX₂`.
    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            grid: self.grid,
            values: self
                .x1
                .iter()
                .zip(&self.x2)
                .map(|(&a, &b)| Complex64::new(a, b))
                .collect(),
        }
    }

    pub fn from_complex(field: &ComplexField) -> Self {
        VectorField {
            grid: field.grid,
            x1: field.values.iter().map(|z| z.re).collect(),
            x2: field.values.iter().map(|z| z.im).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x1.iter().chain(&self.x2).all(|v| v.is_finite())
    }

    /// Spatial mean of `X·X`.
    pub fn mean_dot(&self) -> f64 {
        self.x1
            .iter()
            .zip(&self.x2)
            .map(|(a, b)| a * a + b * b)
            .sum::<f64>()
            / self.grid.len() as f64
    }

    pub fn to_snapshot(&self) -> Snapshot {
        Snapshot {
            nx: self.grid.nx,
            ny: self.grid.ny,
            components: vec![self.x1.clone(), self.x2.clone()],
        }
    }

    pub fn from_snapshot(snap: &Snapshot, lx: f64, ly: f64) -> Result<Self> {
        if snap.components.len() != 2 {
            return domain(format!("vector field needs 2 components, got {}", snap.components.len()));
        }
        Ok(VectorField {
            grid: GridSpec::new(snap.nx, snap.ny, lx, ly)?,
            x1: snap.components[0].clone(),
            x2: snap.components[1].clone(),
        })
    }
}
