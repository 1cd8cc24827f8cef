//! Metropolis sampling of `exp(-H[X])` on a small lattice.
//!
//! Moves are single-site, single-component Gaussian steps. The gradient part
//! of `H` is a translation-invariant quadratic form `Σ xᵢ K(i-j) xⱼ` whose
//! kernel is the inverse transform of `η₂k² + η₃k⁴`; `G = K * x` is updated
//! in `O(N)` per accepted move and recomputed spectrally after every sweep.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{domain, Result};
use crate::grid::{GridSpec, SpectralWorkspace, VectorField};
use crate::noise::NoiseStream;
use crate::observables::EnsembleEstimate;
use crate::params::Etas;

const TARGET_ACCEPTANCE: f64 = 0.4;
const ADAPT_EVERY: usize = 20;

#[derive(Debug, Clone)]
pub struct McmcRun {
    /// Thinned samples, roughly one per two autocorrelation times.
    pub samples: Vec<VectorField>,
    pub acceptance: f64,
    pub proposal_scale: f64,
    /// Integrated autocorrelation time of the spatial mean of `X·X`, in sweeps.
    pub autocorrelation_time: f64,
    pub thinning: usize,
    /// `⟨X·X⟩` from every post-burn-in sweep, error inflated by `2τ_int`.
    pub intensity: EnsembleEstimate,
    /// `⟨(X·X)²⟩`, same treatment.
    pub quartic: EnsembleEstimate,
}

#[derive(Debug, Clone)]
pub struct McmcSampler {
    grid: GridSpec,
    etas: Etas,
    quartic: bool,
    scale: Option<f64>,
    burn_in: Option<usize>,
}

struct Chain {
    x: [Vec<f64>; 2],
    g: [Vec<f64>; 2],
    kernel: Vec<f64>,
    dispersion: Vec<f64>,
    ws: SpectralWorkspace,
    buf: Vec<Complex64>,
}

impl Chain {
    fn refresh(&mut self) {
        for c in 0..2 {
            self.buf.iter_mut().zip(&self.x[c]).for_each(|(b, &v)| *b = Complex64::new(v, 0.0));
            self.ws.forward_in_place(&mut self.buf);
            self.buf.iter_mut().zip(&self.dispersion).for_each(|(b, d)| *b *= d);
            self.ws.inverse_in_place(&mut self.buf);
            self.g[c].iter_mut().zip(&self.buf).for_each(|(g, b)| *g = b.re);
        }
    }

    fn intensity(&self) -> (f64, f64) {
        let n = self.x[0].len() as f64;
        let (mut s1, mut s2) = (0.0, 0.0);
        for (a, b) in self.x[0].iter().zip(&self.x[1]) {
            let s = a * a + b * b;
            s1 += s;
            s2 += s * s;
        }
        (s1 / n, s2 / n)
    }
}

impl McmcSampler {
    pub fn new(etas: &Etas, grid: GridSpec) -> Result<Self> {
        grid.validate()?;
        if !(etas.eta3 > 0.0) {
            return domain(format!("sampling needs eta3 > 0, got {}", etas.eta3));
        }
        Ok(McmcSampler {
            grid,
            etas: *etas,
            quartic: true,
            scale: None,
            burn_in: None,
        })
    }

    /// Drops the `½(X·X)²` term, leaving a Gaussian target (needs `η₁ > 0`).
    pub fn quadratic_only(mut self) -> Self {
        self.quartic = false;
        self
    }

    /// Fixes the proposal scale and disables adaptation.
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = Some(scale);
        self
    }

    /// Default burn-in is a fifth of the sweeps.
    pub fn with_burn_in(mut self, sweeps: usize) -> Self {
        self.burn_in = Some(sweeps);
        self
    }

    fn chain(&self) -> Chain {
        let n = self.grid.len();
        let ws = SpectralWorkspace::new(self.grid);
        let dispersion: Vec<f64> = ws
            .k_squared()
            .iter()
            .map(|k2| self.etas.eta2 * k2 + self.etas.eta3 * k2 * k2)
            .collect();
        let mut buf: Vec<Complex64> = dispersion.iter().map(|&d| Complex64::new(d, 0.0)).collect();
        let mut inv = ws.clone();
        inv.inverse_in_place(&mut buf);
        // unitary inverse of the multiplier carries 1/√N; K(r) = (1/N)Σ w e^{ikr}
        let root_n = (n as f64).sqrt();
        let kernel = buf.iter().map(|z| z.re / root_n).collect();
        let mut c = Chain {
            x: [vec![0.0; n], vec![0.0; n]],
            g: [vec![0.0; n], vec![0.0; n]],
            kernel,
            dispersion,
            ws,
            buf: vec![Complex64::new(0.0, 0.0); n],
        };
        c.refresh();
        c
    }

    /// Runs `sweeps` sweeps; sweep `m` draws from `stream.at(m)`.
    pub fn run(&self, sweeps: usize, stream: &NoiseStream) -> Result<McmcRun> {
        let burn_in = self.burn_in.unwrap_or(sweeps / 5);
        if sweeps < burn_in + 100 {
            return domain(format!("need at least 100 sweeps after a burn-in of {burn_in}"));
        }
        let g = self.grid;
        let (nx, ny, n) = (g.nx, g.ny, g.len());
        let da = g.cell_area();
        let mut chain = self.chain();
        let k0 = chain.kernel[0];
        let mut scale = self
            .scale
            .unwrap_or_else(|| 1.0 / (da * (k0 + self.etas.eta1.abs()) + 1.0).sqrt());
        let quartic = if self.quartic { 0.5 } else { 0.0 };
        let eta1 = self.etas.eta1;

        let mut trace = Vec::with_capacity(sweeps - burn_in);
        let mut trace2 = Vec::with_capacity(sweeps - burn_in);
        let mut fields = Vec::new();
        let (mut accepted, mut proposed) = (0usize, 0usize);
        let (mut window_acc, mut window_prop) = (0usize, 0usize);
        let mut normals = vec![0.0; 2 * n];

        for sweep in 0..sweeps {
            let mut rng = stream.at(sweep as u64).rng();
            for v in normals.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            for c in 0..2 {
                for i in 0..n {
                    let delta = scale * normals[c * n + i];
                    let old = chain.x[c][i];
                    let other = chain.x[1 - c][i];
                    let new = old + delta;
                    let (s_old, s_new) = (old * old + other * other, new * new + other * other);
                    let local = eta1 * (s_new - s_old) + quartic * (s_new * s_new - s_old * s_old);
                    let quad = 2.0 * delta * chain.g[c][i] + delta * delta * k0;
                    let dh = da * (local + quad);
                    let u: f64 = rng.gen();
                    proposed += 1;
                    window_prop += 1;
                    if dh <= 0.0 || u < (-dh).exp() {
                        accepted += 1;
                        window_acc += 1;
                        chain.x[c][i] = new;
                        let (ix, iy) = (i % nx, i / nx);
                        let gc = &mut chain.g[c];
                        for jy in 0..ny {
                            let oy = (jy + ny - iy) % ny * nx;
                            let row = jy * nx;
                            for jx in 0..nx {
                                gc[row + jx] += delta * chain.kernel[oy + (jx + nx - ix) % nx];
                            }
                        }
                    }
                }
            }
            chain.refresh();
            if sweep < burn_in {
                if self.scale.is_none() && (sweep + 1) % ADAPT_EVERY == 0 {
                    let rate = window_acc as f64 / window_prop as f64;
                    scale *= (2.0 * (rate - TARGET_ACCEPTANCE)).exp();
                    window_acc = 0;
                    window_prop = 0;
                }
                if sweep + 1 == burn_in {
                    accepted = 0;
                    proposed = 0;
                }
                continue;
            }
            let (s1, s2) = chain.intensity();
            trace.push(s1);
            trace2.push(s2);
            fields.push((trace.len() - 1, chain.x.clone()));
            // keep memory bounded: thin stored fields to at most ~4096
            if fields.len() > 4096 {
                fields = fields.into_iter().step_by(2).collect();
            }
        }

        let acceptance = accepted as f64 / proposed.max(1) as f64;
        if !(0.1..=0.9).contains(&acceptance) {
            log::warn!("Metropolis acceptance {acceptance:.3} outside [0.1, 0.9]");
        }
        let tau = integrated_autocorrelation(&trace);
        let thinning = (2.0 * tau).ceil().max(1.0) as usize;
        let samples = fields
            .into_iter()
            .filter(|(m, _)| m % thinning == 0)
            .map(|(_, [x1, x2])| VectorField { grid: g, x1, x2 })
            .collect();
        Ok(McmcRun {
            samples,
            acceptance,
            proposal_scale: scale,
            autocorrelation_time: tau,
            thinning,
            intensity: correlated_estimate(&trace, tau)?,
            quartic: correlated_estimate(&trace2, integrated_autocorrelation(&trace2))?,
        })
    }
}

/// `mcmc_sample` with adaptive proposals and default burn-in.
pub fn mcmc_sample(etas: &Etas, grid: GridSpec, sweeps: usize, stream: &NoiseStream) -> Result<McmcRun> {
    McmcSampler::new(etas, grid)?.run(sweeps, stream)
}

/// Integrated autocorrelation time with Sokal's self-consistent window
/// (`W ≥ 5τ`); `τ = ½` for uncorrelated data.
fn integrated_autocorrelation(trace: &[f64]) -> f64 {
    let n = trace.len();
    let mean = trace.iter().sum::<f64>() / n as f64;
    let var = trace.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return 0.5;
    }
    let mut tau = 0.5;
    for lag in 1..n / 2 {
        let c = trace[..n - lag]
            .iter()
            .zip(&trace[lag..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / ((n - lag) as f64 * var);
        tau += c;
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(0.5)
}

fn correlated_estimate(trace: &[f64], tau: f64) -> Result<EnsembleEstimate> {
    let raw = EnsembleEstimate::from_samples(trace)?;
    Ok(EnsembleEstimate {
        stderr: raw.stderr * (2.0 * tau).sqrt(),
        n: ((trace.len() as f64) / (2.0 * tau)).floor().max(1.0) as usize,
        ..raw
    })
}
