//! Gaussian-approximation closed forms, the stationary functional and an
//! independent Metropolis sampler of it.
//!
//! All correlations are vector traces: the far-field density is
//! `S(k) = 1/(η′₁ + η₂k² + η₃k⁴)` (two components of `½` each) and the
//! near-field correlation at `r = 0` equals `⟨X̃·X̃⟩`. A per-component
//! convention would halve both.

mod kelvin;
mod mcmc;

pub use kelvin::{kelvin_k0, kelvin_kei, kelvin_ker, kelvin_power_envelope, ASYMPTOTIC_LIMIT, SERIES_LIMIT};
pub use mcmc::{mcmc_sample, McmcRun, McmcSampler};

use std::f64::consts::PI;

use crate::error::{domain, Result};
use crate::grid::{ComplexField, GridSpec, SpectralWorkspace, VectorField};
use crate::params::Etas;

/// Self-consistent Gaussian intensity `c = ⟨X̃·X̃⟩` and `η′₁ = η₁ + 2c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfConsistentSolution {
    pub c: f64,
    pub eta1_prime: f64,
}

/// Root of `c = 1/(4√(2(η₁ + 2c)))` on the `η₂ = 0`, `η₃ = ½` line,
/// equivalently `64c³ + 32η₁c² - 1 = 0`.
pub fn gaussian_self_consistency(eta1: f64) -> Result<SelfConsistentSolution> {
    if !(eta1 >= 0.0 && eta1.is_finite()) {
        return domain(format!("self-consistency needs a finite eta1 >= 0, got {eta1}"));
    }
    let f = |c: f64| (64.0 * c + 32.0 * eta1) * c * c - 1.0;
    let df = |c: f64| (192.0 * c + 64.0 * eta1) * c;
    // f is increasing on c > 0 with f(0) = -1 and f(1/4) >= 0
    let (mut lo, mut hi) = (0.0, 0.25f64.min(1.0 / (4.0 * (2.0 * eta1).sqrt())));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    let mut c = 0.5 * (lo + hi);
    for _ in 0..3 {
        let step = f(c) / df(c);
        if step.is_finite() {
            c -= step;
        }
    }
    Ok(SelfConsistentSolution {
        c,
        eta1_prime: eta1 + 2.0 * c,
    })
}

/// Self-consistency on a periodic lattice: `c = (1/Area)·Σ_k S(k)` with the
/// spectral `k²` of `grid`, for arbitrary `η₂`, `η₃`.
pub fn lattice_self_consistency(grid: &GridSpec, etas: &Etas) -> Result<SelfConsistentSolution> {
    grid.validate()?;
    let k2 = grid.k_squared();
    let disp: Vec<f64> = k2.iter().map(|k| etas.eta2 * k + etas.eta3 * k * k).collect();
    let floor = etas.eta1 + disp.iter().cloned().fold(f64::INFINITY, f64::min);
    let area = grid.area();
    let rhs = |c: f64| disp.iter().map(|d| 1.0 / (etas.eta1 + 2.0 * c + d)).sum::<f64>() / area;
    // c - rhs(c) increases from -inf at the pole (or from c = 0) to +inf
    let mut lo = (-floor / 2.0).max(0.0);
    let mut hi = lo + 1.0;
    while hi - rhs(hi) < 0.0 {
        hi = lo + 2.0 * (hi - lo);
        if hi > 1e12 {
            return domain("lattice self-consistency did not bracket a root");
        }
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid - rhs(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi {
            break;
        }
    }
    let c = 0.5 * (lo + hi);
    Ok(SelfConsistentSolution {
        c,
        eta1_prime: etas.eta1 + 2.0 * c,
    })
}

/// Trace-normalised far-field density `1/(η′₁ + η₂k² + η₃k⁴)`.
pub fn far_field_corr(k: f64, eta1_prime: f64, eta2: f64, eta3: f64) -> Result<f64> {
    let k2 = k * k;
    let denom = eta1_prime + eta2 * k2 + eta3 * k2 * k2;
    if !(denom > 0.0) {
        return domain(format!("far-field denominator {denom} <= 0 at k = {k}: past the modulational instability"));
    }
    Ok(1.0 / denom)
}

fn check_near_field(eta1_prime: f64, eta3: f64) -> Result<f64> {
    if !(eta1_prime > 0.0 && eta3 > 0.0) {
        return domain(format!("near field needs eta1' > 0 and eta3 > 0, got {eta1_prime}, {eta3}"));
    }
    Ok(1.0 / (2.0 * PI * (eta1_prime * eta3).sqrt()))
}

/// `⟨X̃(r)·X̃(0)⟩ = (1/2π)∫₀^∞ k·J₀(kr)/(η′₁ + η₃k⁴) dk
///              = -kei((η′₁/η₃)^{1/4}·r) / (2π√(η′₁η₃))`.
pub fn near_field_corr(r: f64, eta1_prime: f64, eta3: f64) -> Result<f64> {
    let pre = check_near_field(eta1_prime, eta3)?;
    if !(r >= 0.0) {
        return domain(format!("separation must be >= 0, got {r}"));
    }
    let a = (eta1_prime / eta3).powf(0.25);
    Ok(-pre * kelvin_kei(a * r)?)
}

/// Power-law envelope of [`near_field_corr`] for `r > 0`: the modulus of
/// the oscillating part with the `exp(-a·r/√2)` screening removed. It falls
/// as `r^{-1/2}` once `a·r ≳ 1`.
pub fn near_field_envelope(r: f64, eta1_prime: f64, eta3: f64) -> Result<f64> {
    let pre = check_near_field(eta1_prime, eta3)?;
    let a = (eta1_prime / eta3).powf(0.25);
    Ok(pre * kelvin_power_envelope(a * r)?)
}

/// Adiabatically slaved quadrature `Y = ∇²X/(1 + μ)`.
pub fn slaved_y(x: &ComplexField, mu: f64) -> Result<ComplexField> {
    if !(mu > -1.0) {
        return domain(format!("slaved quadrature needs mu > -1, got {mu}"));
    }
    let mut ws = SpectralWorkspace::new(x.grid);
    let mut y = ws.laplacian(x);
    let s = 1.0 / (1.0 + mu);
    y.values.iter_mut().for_each(|v| *v *= s);
    Ok(y)
}

/// `H[X] = ∫d²x (η₁X·X + ½(X·X)² + η₂∇X·∇X + η₃∇²X·∇²X)` on the lattice.
///
/// The noise-free reduced equation is `∂X/∂τ = -½·δH/δX`; with unit white
/// noise per component its stationary density is `exp(-H)`.
pub fn gl_hamiltonian(x: &VectorField, etas: &Etas) -> f64 {
    let da = x.grid.cell_area();
    let local: f64 = x
        .x1
        .iter()
        .zip(&x.x2)
        .map(|(a, b)| {
            let s = a * a + b * b;
            etas.eta1 * s + 0.5 * s * s
        })
        .sum();
    let mut ws = SpectralWorkspace::new(x.grid);
    let spectral = ws.forward(&x.to_complex());
    let gradient: f64 = spectral
        .values
        .iter()
        .zip(ws.k_squared())
        .map(|(z, k2)| (etas.eta2 * k2 + etas.eta3 * k2 * k2) * z.norm_sqr())
        .sum();
    da * (local + gradient)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{uniform_state, SHState, Scheme, ShStepper};
    use num_complex::Complex64;
    use proptest::prelude::*;

    /// Adaptive Simpson on `[a, b]`.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                return left + right + delta / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    /// `∫₀^∞ k·J₀(kx)/(1 + k⁴) dk` by panels of half-periods of `J₀` and
    /// repeated averaging of the oscillating partial sums.
    fn hankel_oracle(x: f64) -> f64 {
        let f = move |k: f64| k * libm::j0(k * x) / (1.0 + k.powi(4));
        if x == 0.0 {
            // k = √(tan θ) turns the integral into ½∫₀^{π/2} dθ
            return PI / 4.0;
        }
        let first = 6.0f64.max(3.0 / x);
        let mut sums = vec![simpson(&f, 0.0, first, 1e-14)];
        let half = PI / x;
        let mut a = first;
        for _ in 0..40 {
            let b = a + half;
            let next = sums.last().unwrap() + simpson(&f, a, b, 1e-15);
            sums.push(next);
            a = b;
        }
        let mut level = sums;
        for _ in 0..12 {
            level = level.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        }
        *level.last().unwrap()
    }

    #[test]
    fn self_consistency_values() {
        let s = gaussian_self_consistency(0.0).unwrap();
        assert!((s.c - 0.25).abs() < 1e-12);
        assert!((s.eta1_prime - 0.5).abs() < 1e-12);
        let s = gaussian_self_consistency(1.0).unwrap();
        // 64c³ + 32c² - 1 = (4c + 1)(16c² + 4c - 1)
        assert!((s.c - (5f64.sqrt() - 1.0) / 8.0).abs() < 1e-12);
        let big = gaussian_self_consistency(1e4).unwrap();
        assert!((big.c * 4.0 * (2.0e4f64).sqrt() - 1.0).abs() < 1e-2);
        assert!(gaussian_self_consistency(-0.1).is_err());
    }

    #[test]
    fn lattice_self_consistency_approaches_continuum() {
        let g = GridSpec::square(128, 60.0).unwrap();
        let s = lattice_self_consistency(&g, &Etas::LIFSHITZ).unwrap();
        assert!((s.c - 0.25).abs() < 2e-3, "{}", s.c);
        let g = GridSpec::square(16, 10.0).unwrap();
        let s = lattice_self_consistency(&g, &Etas::new(-2.0, 0.0, 0.5)).unwrap();
        let rhs: f64 = g.k_squared().iter().map(|k2| 1.0 / (s.eta1_prime + 0.5 * k2 * k2)).sum::<f64>() / g.area();
        assert!((s.c - rhs).abs() < 1e-12);
        assert!(s.eta1_prime > 0.0);
    }

    #[test]
    fn far_field_values() {
        assert!((far_field_corr(0.0, 0.5, 0.0, 0.5).unwrap() - 2.0).abs() < 1e-15);
        assert!((far_field_corr(1.0, 0.5, 0.0, 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!(far_field_corr(1.0, 0.1, -1.0, 0.5).is_err());
        let peak = (0..400)
            .map(|i| i as f64 * 0.005)
            .max_by(|a, b| {
                let s = |k: f64| far_field_corr(k, 1.0, -1.0, 0.5).unwrap();
                s(*a).partial_cmp(&s(*b)).unwrap()
            })
            .unwrap();
        assert!((peak - 1.0).abs() < 0.005);
    }

    #[test]
    fn kei_matches_hankel_quadrature() {
        for x in [0.0, 0.1, 0.5, 1.0, 2.0, 3.5, 5.0, 7.5, 10.0, 15.0, 20.0] {
            let k = kelvin_kei(x).unwrap();
            let oracle = -hankel_oracle(x);
            assert!((k - oracle).abs() < 1e-8, "x = {x}: {k} vs {oracle}");
        }
    }

    #[test]
    fn near_field_limits() {
        for eta1 in [0.0, 0.5, 1.0, 10.0] {
            let s = gaussian_self_consistency(eta1).unwrap();
            let c0 = near_field_corr(0.0, s.eta1_prime, 0.5).unwrap();
            assert!((c0 - s.c).abs() < 1e-8);
        }
        assert!(near_field_corr(1.0, 0.0, 0.5).is_err());
        // direct Hankel form with general η₃
        let (e1, e3, r): (f64, f64, f64) = (0.7, 0.3, 1.3);
        let a = (e1 / e3).powf(0.25);
        let direct = hankel_oracle(a * r) / (2.0 * PI * (e1 * e3).sqrt());
        assert!((near_field_corr(r, e1, e3).unwrap() - direct).abs() < 1e-8);
    }

    #[test]
    fn envelope_power_law() {
        let (e1, e3): (f64, f64) = (1e-3, 0.5);
        let a = (e1 / e3).powf(0.25);
        let (r1, r2) = (2.0 / a, 5.0 / a);
        let slope = (near_field_envelope(r2, e1, e3).unwrap() / near_field_envelope(r1, e1, e3).unwrap()).ln() / (r2 / r1).ln();
        assert!((slope + 0.5).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn slaved_quadrature() {
        let g = GridSpec::square(16, 8.0).unwrap();
        let y = slaved_y(&ComplexField::constant(g, Complex64::new(1.0, 2.0)), 1.0).unwrap();
        assert!(y.max_abs() < 1e-14);
        let k = 2.0 * PI * 2.0 / 8.0;
        let x = ComplexField::from_fn(g, |px, _| Complex64::new(0.0, k * px).exp());
        let y = slaved_y(&x, 1.0).unwrap();
        for (a, b) in y.values.iter().zip(&x.values) {
            assert!((a + 0.5 * k * k * b).norm() < 1e-12);
        }
        assert!(slaved_y(&x, -1.0).is_err());
    }

    #[test]
    fn hamiltonian_closed_forms() {
        let g = GridSpec::new(16, 8, 8.0, 5.0).unwrap();
        let etas = Etas::new(0.3, -0.4, 0.7);
        assert_eq!(gl_hamiltonian(&VectorField::zeros(g), &etas), 0.0);
        let c = 0.6f64;
        let h = gl_hamiltonian(&VectorField::uniform(g, c, 0.0), &etas);
        assert!((h - g.area() * (0.3 * c * c + 0.5 * c.powi(4))).abs() < 1e-10);
        // single mode a·sin(k₀x): ⟨sin²⟩ = 1/2, ⟨sin⁴⟩ = 3/8
        let (amp, k0) = (0.8f64, 2.0 * PI * 3.0 / 8.0);
        let mut f = VectorField::zeros(g);
        for iy in 0..g.ny {
            for ix in 0..g.nx {
                f.x1[g.index(ix, iy)] = amp * (k0 * ix as f64 * g.dx()).sin();
            }
        }
        let expected = g.area()
            * (0.3 * amp * amp / 2.0 + 0.5 * amp.powi(4) * 3.0 / 8.0 + (-0.4 * k0 * k0 + 0.7 * k0.powi(4)) * amp * amp / 2.0);
        assert!((gl_hamiltonian(&f, &etas) - expected).abs() < 1e-9 * expected.abs());
    }

    #[test]
    fn hamiltonian_decreases_along_noise_free_flow() {
        let g = GridSpec::square(16, 8.0).unwrap();
        let etas = Etas::new(-0.5, -0.3, 0.5);
        let mut s = uniform_state(g, 0.0, 0.0);
        for (i, (a, b)) in s.x.x1.iter_mut().zip(s.x.x2.iter_mut()).enumerate() {
            *a = 0.4 * ((i * 7919) % 13) as f64 / 13.0 - 0.2;
            *b = 0.4 * ((i * 104_729) % 17) as f64 / 17.0 - 0.2;
        }
        let mut st = ShStepper::new(g, Scheme::Rk4Ip);
        let dt = 1e-3;
        let mut h = gl_hamiltonian(&s.x, &etas);
        for _ in 0..500 {
            s = st.step(&s, &etas, dt, None).unwrap();
            let next = gl_hamiltonian(&s.x, &etas);
            assert!(next <= h + 1e-9, "{next} > {h}");
            h = next;
        }
    }

    #[test]
    fn drift_is_half_the_functional_gradient() {
        let g = GridSpec::square(8, 6.0).unwrap();
        let etas = Etas::new(0.2, -0.3, 0.5);
        let mut x = VectorField::zeros(g);
        for i in 0..g.len() {
            x.x1[i] = (0.37 * i as f64).sin();
            x.x2[i] = (0.91 * i as f64).cos() * 0.5;
        }
        let dt = 1e-7;
        let mut st = ShStepper::new(g, Scheme::Rk4Ip);
        let next = st.step(&SHState { x: x.clone(), tau: 0.0 }, &etas, dt, None).unwrap();
        let i = 11;
        let drift = (next.x.x1[i] - x.x1[i]) / dt;
        let eps = 1e-6;
        let mut plus = x.clone();
        plus.x1[i] += eps;
        let mut minus = x.clone();
        minus.x1[i] -= eps;
        let grad = (gl_hamiltonian(&plus, &etas) - gl_hamiltonian(&minus, &etas)) / (2.0 * eps);
        // per-site functional derivative is the lattice gradient divided by ΔA
        let expected = -0.5 * grad / g.cell_area();
        assert!((drift - expected).abs() < 1e-4 * expected.abs().max(1.0), "{drift} vs {expected}");
    }

    proptest! {
        #[test]
        fn self_consistency_root(eta1 in 0.0f64..10.0) {
            let s = gaussian_self_consistency(eta1).unwrap();
            prop_assert!(s.c > 0.0 && s.eta1_prime > 0.0);
            prop_assert!((64.0 * s.c.powi(3) + 32.0 * eta1 * s.c * s.c - 1.0).abs() < 1e-12);
            let near = near_field_corr(0.0, s.eta1_prime, 0.5).unwrap();
            prop_assert!((near - s.c).abs() < 1e-8);
        }

        #[test]
        fn hamiltonian_is_rotation_invariant(theta in 0.0f64..6.3, c1 in -1.0f64..1.0, c2 in -1.0f64..1.0) {
            let g = GridSpec::square(8, 4.0).unwrap();
            let etas = Etas::new(0.1, 0.2, 0.5);
            let mut x = VectorField::zeros(g);
            for i in 0..g.len() {
                x.x1[i] = c1 * (0.5 * i as f64).sin();
                x.x2[i] = c2 * (0.3 * i as f64).cos();
            }
            let (s, c) = theta.sin_cos();
            let mut r = x.clone();
            for i in 0..g.len() {
                r.x1[i] = c * x.x1[i] - s * x.x2[i];
                r.x2[i] = s * x.x1[i] + c * x.x2[i];
            }
            let (a, b) = (gl_hamiltonian(&x, &etas), gl_hamiltonian(&r, &etas));
            prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
        }
    }
}
