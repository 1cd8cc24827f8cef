//! Cavity parameters, dimensionless scaling and the classical threshold analysis.
//!
//! The reduced model is parameterised by the degenerate-frequency case: equal
//! signal/idler decay rates, group velocities and carrier frequencies, with
//! the pump on resonance and the pump phase fixed to zero.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Branch selection tolerance for threshold comparisons.
pub const THRESHOLD_TOL: f64 = 1e-12;

/// Physical cavity parameters (degenerate signal/idler case).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Pump decay rate.
    pub gamma0: f64,
    /// Signal/idler decay rate.
    pub gamma: f64,
    /// Signal/idler detuning, in units of `gamma`.
    pub delta: f64,
    /// Pump detuning, in units of `gamma0`.
    pub delta0: f64,
    /// Nonlinear coupling magnitude.
    pub chi: f64,
    /// Driving amplitude magnitude (phase fixed to zero).
    pub pump: f64,
    /// Group velocity.
    pub v: f64,
    /// Signal/idler carrier frequency.
    pub omega: f64,
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma0", self.gamma0),
            ("gamma", self.gamma),
            ("chi", self.chi),
            ("v", self.v),
            ("omega", self.omega),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return domain(format!("{name} must be positive and finite, got {value}"));
            }
        }
        if !(self.pump >= 0.0 && self.pump.is_finite()) {
            return domain(format!("pump must be non-negative, got {}", self.pump));
        }
        if !self.delta.is_finite() || !self.delta0.is_finite() {
            return domain("detunings must be finite");
        }
        Ok(())
    }

    /// Complex pump decay `γ₀(1 + iΔ₀)`.
    pub fn gamma0_tilde(&self) -> Complex64 {
        Complex64::new(self.gamma0, self.gamma0 * self.delta0)
    }

    /// Complex signal/idler decay `γ(1 + iΔ)`.
    pub fn gamma_tilde(&self) -> Complex64 {
        Complex64::new(self.gamma, self.gamma * self.delta)
    }

    /// Diffraction coefficient `v²/(2ω)` of the signal and idler fields.
    pub fn diffraction(&self) -> f64 {
        self.v * self.v / (2.0 * self.omega)
    }

    pub fn with_pump(mut self, pump: f64) -> Self {
        self.pump = pump;
        self
    }
}

/// Reduced-equation coefficients of `D = -η₁ + η₂∇² - η₃∇⁴`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Etas {
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
}

impl Etas {
    pub const LIFSHITZ: Etas = Etas {
        eta1: 0.0,
        eta2: 0.0,
        eta3: 0.5,
    };

    pub fn new(eta1: f64, eta2: f64, eta3: f64) -> Self {
        Etas { eta1, eta2, eta3 }
    }

    /// Coefficients at coupling `g`, pump `μ` and detuning `Δ`.
    pub fn from_reduced(g: f64, mu: f64, delta: f64) -> Result<Self> {
        if !(g > 0.0) {
            return domain(format!("g must be positive, got {g}"));
        }
        if !(mu > -1.0) {
            return domain(format!("mu must exceed -1, got {mu}"));
        }
        Ok(Etas {
            eta1: (1.0 - mu) / g,
            eta2: delta / ((1.0 + mu) * g.sqrt()),
            eta3: 1.0 / (1.0 + mu),
        })
    }

    /// Linear decay rate `η₁ + η₂k² + η₃k⁴` of a mode with squared wavenumber `k2`.
    #[inline]
    pub fn decay_rate(&self, k2: f64) -> f64 {
        self.eta1 + self.eta2 * k2 + self.eta3 * k2 * k2
    }

    pub fn with_eta1(mut self, eta1: f64) -> Self {
        self.eta1 = eta1;
        self
    }
}

/// Scaled parameters of the critical equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessParams {
    pub g: f64,
    pub mu: f64,
    pub delta: f64,
    /// Transverse length scale.
    pub x0: f64,
    /// Critical slowing-down time scale.
    pub t0: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
}

impl DimensionlessParams {
    pub fn etas(&self) -> Etas {
        Etas::new(self.eta1, self.eta2, self.eta3)
    }
}

/// Derives `g`, `μ`, the length and time scales and the reduced coefficients.
pub fn derive_scales(phys: &PhysicalParams) -> Result<DimensionlessParams> {
    phys.validate()?;
    let g = (phys.chi * phys.chi * phys.omega / (2.0 * phys.gamma0 * phys.v * phys.v)).powf(2.0 / 3.0);
    let mu = phys.chi * phys.pump / (phys.gamma0 * phys.gamma);
    let x0 = (phys.v * phys.v / (2.0 * phys.gamma * g.sqrt() * phys.omega)).sqrt();
    let t0 = 1.0 / (g * phys.gamma);
    let etas = Etas::from_reduced(g, mu, phys.delta)?;
    Ok(DimensionlessParams {
        g,
        mu,
        delta: phys.delta,
        x0,
        t0,
        eta1: etas.eta1,
        eta2: etas.eta2,
        eta3: etas.eta3,
    })
}

/// Pump amplitude where the below- and above-threshold solutions coincide,
/// `|E_c| = γ̄ |γ̃₀/χ|` with `γ̄² = γ̃₁γ̃₂*`.
pub fn critical_pump(phys: &PhysicalParams) -> Result<f64> {
    phys.validate()?;
    let gt = phys.gamma_tilde();
    let gamma_bar = (gt * gt.conj()).re.sqrt();
    Ok(gamma_bar * phys.gamma0_tilde().norm() / phys.chi)
}

/// Steady classical signal intensity `I₁ = |A₁|²`; zero below threshold.
pub fn classical_intensity(phys: &PhysicalParams) -> Result<f64> {
    phys.validate()?;
    let z = phys.gamma0_tilde() * phys.gamma_tilde();
    let drive = phys.chi * phys.pump;
    if drive <= z.norm() + THRESHOLD_TOL {
        return Ok(0.0);
    }
    let disc = drive * drive + z.re * z.re - z.norm_sqr();
    let root = (-z.re + disc.sqrt()) / (phys.chi * phys.chi);
    Ok(root.max(0.0))
}

/// Eigenvalues and eigenvectors of the linearised signal/idler-conjugate pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityResult {
    pub lambda_plus: Complex64,
    pub lambda_minus: Complex64,
    pub u_plus: [Complex64; 2],
    pub u_minus: [Complex64; 2],
}

impl StabilityResult {
    /// Largest real growth rate.
    pub fn growth_rate(&self) -> f64 {
        self.lambda_plus.re
    }

    pub fn above_threshold(&self) -> bool {
        self.lambda_plus.re > THRESHOLD_TOL
    }
}

/// Linear stability of `(α₁, α₂⁺)` about the vacuum at pump `μ` and detuning `Δ`.
pub fn stability_eigensystem(mu: f64, delta: f64) -> StabilityResult {
    let root = Complex64::new(mu * mu - delta * delta, 0.0).sqrt();
    let i_delta = Complex64::new(0.0, delta);
    let mu_c = Complex64::new(mu, 0.0);
    StabilityResult {
        lambda_plus: -1.0 + root,
        lambda_minus: -1.0 - root,
        u_plus: [mu_c, i_delta + root],
        u_minus: [mu_c, i_delta - root],
    }
}

/// Linearisation matrix whose eigensystem [`stability_eigensystem`] returns.
pub fn stability_matrix(mu: f64, delta: f64) -> [[Complex64; 2]; 2] {
    [
        [Complex64::new(-1.0, -delta), Complex64::new(mu, 0.0)],
        [Complex64::new(mu, 0.0), Complex64::new(-1.0, delta)],
    ]
}
