//! Kelvin functions `ker` and `kei`.
//!
//! Both come from `K₀(x·e^{iπ/4}) = ker(x) + i·kei(x)`, evaluated in three
//! regimes:
//!
//! * `x ≤ 5`: the ascending series. The largest term is about 10 at `x = 5`
//!   while `|kei(5)| ≈ 1e-2`, so cancellation costs at most three digits.
//! * `5 < x ≤ 25`: the trapezoid rule on `K₀(z) = ∫₀^∞ exp(-z·cosh t) dt`.
//!   The integrand is analytic in the strip `|Im t| < π/4`, so the error falls
//!   like `exp(-π²/(2h))` and is below rounding for `h = 1/16`.
//! * `x > 25`: the Hankel asymptotic expansion, truncated at its smallest
//!   term (`≈ e^{-2x}`, below `1e-21`).

use num_complex::Complex64;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

use crate::error::{domain, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
pub const SERIES_LIMIT: f64 = 5.0;
pub const ASYMPTOTIC_LIMIT: f64 = 25.0;

fn series(x: f64) -> Complex64 {
    let iq = Complex64::new(0.0, 0.25 * x * x);
    let mut term = Complex64::new(1.0, 0.0); // (iq)^m / (m!)²
    let mut ber_bei = term;
    let mut psi = -EULER_GAMMA; // ψ(m + 1)
    let mut tail = term * psi;
    for m in 1..200 {
        let mf = m as f64;
        term = term * iq / (mf * mf);
        psi += 1.0 / mf;
        ber_bei += term;
        tail += term * psi;
        if term.norm() < 1e-18 * ber_bei.norm().max(tail.norm()) {
            break;
        }
    }
    -Complex64::new((0.5 * x).ln(), FRAC_PI_4) * ber_bei + tail
}

fn trapezoid(x: f64) -> Complex64 {
    let z = Complex64::from_polar(x, FRAC_PI_4);
    let h = 1.0 / 16.0;
    // stop once exp(-Re z·cosh t) < 1e-20
    let t_max = (46.0 / z.re).max(1.0).acosh();
    let mut sum = 0.5 * (-z).exp();
    let mut t = h;
    while t <= t_max + h {
        sum += (-z * t.cosh()).exp();
        t += h;
    }
    sum * h
}

fn asymptotic(x: f64) -> Complex64 {
    let z = Complex64::from_polar(x, FRAC_PI_4);
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    for k in 1..100 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (odd * odd) / (k as f64 * 8.0 * z);
        if next.norm() >= term.norm() {
            break;
        }
        term = next;
        sum += term;
        if term.norm() < 1e-18 {
            break;
        }
    }
    (Complex64::new(FRAC_PI_2, 0.0) / z).sqrt() * (-z).exp() * sum
}

/// `ker(x) + i·kei(x)` for `x > 0`.
pub fn kelvin_k0(x: f64) -> Result<Complex64> {
    if !(x > 0.0 && x.is_finite()) {
        return domain(format!("Kelvin functions need a finite x > 0, got {x}"));
    }
    Ok(if x <= SERIES_LIMIT {
        series(x)
    } else if x <= ASYMPTOTIC_LIMIT {
        trapezoid(x)
    } else {
        asymptotic(x)
    })
}

/// Thomson's function, `kei(x) = -∫₀^∞ k·J₀(kx)/(1 + k⁴) dk`, with `kei(0) = -π/4`.
pub fn kelvin_kei(x: f64) -> Result<f64> {
    if x == 0.0 {
        return Ok(-FRAC_PI_4);
    }
    if x < 0.0 {
        return domain(format!("kei needs x >= 0, got {x}"));
    }
    Ok(kelvin_k0(x)?.im)
}

pub fn kelvin_ker(x: f64) -> Result<f64> {
    Ok(kelvin_k0(x)?.re)
}

/// `|K₀(x·e^{iπ/4})|·e^{x/√2}`: the oscillation envelope of `ker`/`kei` with
/// the exponential screening removed. Tends to `√(π/(2x))`.
pub fn kelvin_power_envelope(x: f64) -> Result<f64> {
    Ok(kelvin_k0(x)?.norm() * (x * FRAC_1_SQRT_2).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        // 30-digit reference values
        let cases: [(f64, f64, f64); 5] = [
            (1.0, 0.286_706_208_728_316_05, -0.494_994_636_518_719_9),
            (2.0, -0.041_664_513_991_509_53, -0.202_400_067_764_704_29),
            (5.0, -0.011_511_727_199_490_662, 0.011_187_586_509_869_64),
            (10.0, 1.294_663_302_148_061_2e-4, -3.075_245_690_881_442e-4),
            (20.0, -7.715_233_109_860_961e-8, -1.858_941_511_119_437_2e-7),
        ];
        for (x, ker, kei) in cases {
            let v = kelvin_k0(x).unwrap();
            let scale = ker.abs().max(kei.abs());
            assert!((v.re - ker).abs() < 1e-11 * scale, "ker({x}) = {}", v.re);
            assert!((v.im - kei).abs() < 1e-11 * scale, "kei({x}) = {}", v.im);
        }
        assert_eq!(kelvin_kei(0.0).unwrap(), -FRAC_PI_4);
        assert!(kelvin_kei(-1.0).is_err());
        assert!(kelvin_kei(10.0).unwrap().abs() < 1e-3);
    }

    #[test]
    fn regimes_agree_at_crossovers() {
        for x in [4.0, 5.0, 6.0] {
            let (a, b) = (series(x), trapezoid(x));
            assert!((a - b).norm() < 1e-12 * a.norm(), "x = {x}: {a} vs {b}");
        }
        for x in [15.0, 25.0, 30.0] {
            let (a, b) = (trapezoid(x), asymptotic(x));
            assert!((a - b).norm() < 1e-11 * a.norm(), "x = {x}: {a} vs {b}");
        }
    }

    #[test]
    fn small_x_limit() {
        let x = 1e-6;
        assert!((kelvin_kei(x).unwrap() + FRAC_PI_4).abs() < 1e-10);
        let ker = kelvin_ker(x).unwrap();
        assert!((ker + (0.5 * x).ln() + EULER_GAMMA).abs() < 1e-10);
    }

    #[test]
    fn envelope_tends_to_power_law() {
        let x = 40.0;
        let e = kelvin_power_envelope(x).unwrap();
        assert!((e / (FRAC_PI_2 / x).sqrt() - 1.0).abs() < 1e-2);
    }
}
