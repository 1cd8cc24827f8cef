//! Per-trajectory step kernels on unitary spectral amplitudes.
//!
//! All reduced-model integrators use the interaction picture with the linear
//! propagator split symmetrically around the explicit update:
//!
//! `X̂ₙ₊₁ = P·F[ Y + dt·N(Y) + dW ]`, `Y = F⁻¹[P·X̂ₙ]`, `P = exp(-rate(k)·dt/2)`.
//!
//! Only one inverse and one forward transform are needed per field and step.

use num_complex::Complex64;

use crate::grid::{GridSpec, SpectralWorkspace};
use crate::noise::NoiseStream;
use crate::params::Etas;

pub(crate) type C = Complex64;

/// Scratch owned by one worker thread.
#[derive(Debug, Clone)]
pub(crate) struct Worker {
    pub ws: SpectralWorkspace,
    pub normals: Vec<f64>,
    pub a: Vec<C>,
    pub b: Vec<C>,
    pub c: Vec<C>,
}

impl Worker {
    pub fn new(ws: SpectralWorkspace) -> Self {
        let n = ws.grid().len();
        let zero = vec![C::new(0.0, 0.0); n];
        Worker {
            ws,
            normals: Vec::with_capacity(2 * n),
            a: zero.clone(),
            b: zero.clone(),
            c: zero,
        }
    }
}

/// `exp(-rate·dt/2)/√N`: half-step propagator with the transform
/// normalisation folded in.
pub(crate) fn half_factors(ws: &SpectralWorkspace, etas: &Etas, dt: f64) -> Vec<f64> {
    let norm = 1.0 / (ws.grid().len() as f64).sqrt();
    ws.k_squared()
        .iter()
        .map(|&k2| (-etas.decay_rate(k2) * 0.5 * dt).exp() * norm)
        .collect()
}

/// Index of `-k` for every mode in transform order.
pub(crate) fn negated_modes(grid: &GridSpec) -> Vec<usize> {
    let mut out = Vec::with_capacity(grid.len());
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            out.push(grid.index((grid.nx - ix) % grid.nx, (grid.ny - iy) % grid.ny));
        }
    }
    out
}

/// Spatial means `(⟨|X|²⟩, ⟨X²⟩)` of one field from its unitary spectrum.
pub(crate) fn field_moments(xhat: &[C], neg: &[usize]) -> (f64, C) {
    let n = xhat.len() as f64;
    let mut norm = 0.0;
    let mut square = C::new(0.0, 0.0);
    for (i, z) in xhat.iter().enumerate() {
        norm += z.norm_sqr();
        square += z * xhat[neg[i]];
    }
    (norm / n, square / n)
}

/// Spatial mean of `|X̃ + Δ|² - |X̃|²`, without forming the two large terms.
pub(crate) fn difference_norm(xg: &[C], xd: &[C]) -> f64 {
    let n = xg.len() as f64;
    xg.iter()
        .zip(xd)
        .map(|(g, d)| 2.0 * (g.conj() * d).re + d.norm_sqr())
        .sum::<f64>()
        / n
}

/// Shared Gaussian-closure coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Closure {
    pub norm: f64,
    pub square: C,
}

impl Closure {
    #[inline]
    pub fn drift(&self, y: C) -> C {
        -2.0 * self.norm * y - 2.0 * self.square * y.conj()
    }
}

#[inline]
pub(crate) fn cubic_drift(y: C) -> C {
    -y.norm_sqr() * y
}

#[inline]
pub(crate) fn to_frame(xhat: &[C], f: &[f64], out: &mut [C], ws: &mut SpectralWorkspace) {
    for ((o, z), &p) in out.iter_mut().zip(xhat).zip(f) {
        *o = z * p;
    }
    ws.raw_inverse(out);
}

#[inline]
pub(crate) fn from_frame(k: &mut [C], f: &[f64], xhat: &mut [C], ws: &mut SpectralWorkspace) {
    ws.raw_forward(k);
    for ((x, z), &p) in xhat.iter_mut().zip(k.iter()).zip(f) {
        *x = z * p;
    }
}

/// Wiener increments `dW = ζ₊·dt` of the reduced equation into `out`.
pub(crate) fn reduced_increments(
    stream: Option<&NoiseStream>,
    grid: &GridSpec,
    dt: f64,
    out: &mut [C],
    normals: &mut Vec<f64>,
) {
    match stream {
        Some(s) => s.complex_normals((dt / grid.cell_area()).sqrt(), out, normals),
        None => out.iter_mut().for_each(|z| *z = C::new(0.0, 0.0)),
    }
}

/// One Euler step of the full cubic (`closure = None`) or Gaussian equation.
pub(crate) fn euler_ip(
    xhat: &mut [C],
    f: &[f64],
    dt: f64,
    closure: Option<&Closure>,
    stream: Option<&NoiseStream>,
    w: &mut Worker,
) {
    let grid = w.ws.grid();
    to_frame(xhat, f, &mut w.a, &mut w.ws);
    reduced_increments(stream, &grid, dt, &mut w.b, &mut w.normals);
    match closure {
        None => {
            for (k, &y) in w.b.iter_mut().zip(&w.a) {
                *k += y + dt * cubic_drift(y);
            }
        }
        Some(cl) => {
            for (k, &y) in w.b.iter_mut().zip(&w.a) {
                *k += y + dt * cl.drift(y);
            }
        }
    }
    from_frame(&mut w.b, f, xhat, &mut w.ws);
}

/// Joint step of a Gaussian trajectory `X̃` and its difference `Δ = X - X̃`.
///
/// The difference sees `N(X̃+Δ) - N_G(X̃)` only; the shared noise enters
/// `X̃` alone and cancels from `Δ` identically.
pub(crate) fn crn_step(
    xg: &mut [C],
    xd: &mut [C],
    f: &[f64],
    dt: f64,
    closure: &Closure,
    stream: Option<&NoiseStream>,
    w: &mut Worker,
) {
    let grid = w.ws.grid();
    to_frame(xg, f, &mut w.a, &mut w.ws);
    to_frame(xd, f, &mut w.b, &mut w.ws);
    reduced_increments(stream, &grid, dt, &mut w.c, &mut w.normals);
    for ((g, d), noise) in w.a.iter_mut().zip(w.b.iter_mut()).zip(&w.c) {
        let yg = *g;
        let yd = *d;
        let ng = closure.drift(yg);
        *d = yd + dt * (cubic_drift(yg + yd) - ng);
        *g = yg + dt * ng + noise;
    }
    from_frame(&mut w.a, f, xg, &mut w.ws);
    from_frame(&mut w.b, f, xd, &mut w.ws);
}

/// Difference-only step given the Gaussian trajectory at the start of the step.
pub(crate) fn difference_only(
    xg: &[C],
    xd: &mut [C],
    f: &[f64],
    dt: f64,
    closure: &Closure,
    w: &mut Worker,
) {
    to_frame(xg, f, &mut w.a, &mut w.ws);
    to_frame(xd, f, &mut w.b, &mut w.ws);
    for (d, &yg) in w.b.iter_mut().zip(&w.a) {
        let yd = *d;
        *d = yd + dt * (cubic_drift(yg + yd) - closure.drift(yg));
    }
    from_frame(&mut w.b, f, xd, &mut w.ws);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negated_modes_is_involution() {
        let g = GridSpec::new(8, 10, 1.0, 1.0).unwrap();
        let neg = negated_modes(&g);
        for i in 0..g.len() {
            assert_eq!(neg[neg[i]], i);
        }
        assert_eq!(neg[0], 0);
        assert_eq!(neg[1], 7);
    }

    #[test]
    fn moments_match_real_space() {
        let g = GridSpec::square(8, 3.0).unwrap();
        let mut ws = SpectralWorkspace::new(g);
        let field: Vec<C> = (0..g.len())
            .map(|i| C::new((i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let n = g.len() as f64;
        let norm = field.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        let square = field.iter().map(|z| z * z).sum::<C>() / n;
        let mut xhat = field.clone();
        ws.forward_in_place(&mut xhat);
        let (a, b) = field_moments(&xhat, &negated_modes(&g));
        assert!((a - norm).abs() < 1e-12);
        assert!((b - square).norm() < 1e-12);
    }

    #[test]
    fn difference_norm_matches_direct() {
        let xg = vec![C::new(1.0, 2.0), C::new(-0.5, 0.1)];
        let xd = vec![C::new(0.1, -0.2), C::new(0.3, 0.0)];
        let direct = (xg.iter().zip(&xd).map(|(g, d)| (g + d).norm_sqr()).sum::<f64>()
            - xg.iter().map(|g| g.norm_sqr()).sum::<f64>())
            / 2.0;
        assert!((difference_norm(&xg, &xd) - direct).abs() < 1e-14);
    }
}
