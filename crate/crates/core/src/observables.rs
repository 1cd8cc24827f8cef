//! Ensemble estimators: intensities, momentum spectra, correlations and
//! step-size convergence.
//!
//! Spectra use the unitary transform and are scaled by the cell area,
//! `S(k) = ⟨|X̂(k)|²⟩·ΔA`, summed over both components. In the linear limit
//! this reproduces `1/(η₁ + η₂k² + η₃k⁴)` on the lattice exactly, and
//! `(1/Area)·Σ_k S(k)` equals the mean intensity `⟨X·X⟩`.
//!
//! Error bars come from the spread between trajectories; sites within one
//! trajectory are correlated and are never counted as independent samples.

use num_complex::Complex64;

use crate::error::{domain, OpoError, Result};
use crate::grid::{GridSpec, SpectralWorkspace, VectorField};

/// Mean with its standard error over `n` independent samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Neumaier-compensated sum, so permuting the samples changes the result
/// only at rounding level.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

impl EnsembleEstimate {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return domain(format!("an estimate needs at least 2 samples, got {n}"));
        }
        let mean = compensated_sum(samples.iter().copied()) / n as f64;
        let var = compensated_sum(samples.iter().map(|x| (x - mean).powi(2))) / (n - 1) as f64;
        Ok(EnsembleEstimate {
            mean,
            stderr: (var / n as f64).sqrt(),
            n,
        })
    }

    /// Standard error of the difference of two independent estimates.
    pub fn combined_stderr(&self, other: &EnsembleEstimate) -> f64 {
        self.stderr.hypot(other.stderr)
    }

    /// Sample variance of a single sample (`stderr²·n`).
    pub fn sample_variance(&self) -> f64 {
        self.stderr * self.stderr * self.n as f64
    }
}

/// Complex-valued mean with a scalar standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexEstimate {
    pub mean: Complex64,
    pub stderr: f64,
    pub n: usize,
}

impl ComplexEstimate {
    pub fn from_samples(samples: &[Complex64]) -> Result<Self> {
        let re: Vec<f64> = samples.iter().map(|z| z.re).collect();
        let im: Vec<f64> = samples.iter().map(|z| z.im).collect();
        let (r, i) = (EnsembleEstimate::from_samples(&re)?, EnsembleEstimate::from_samples(&im)?);
        Ok(ComplexEstimate {
            mean: Complex64::new(r.mean, i.mean),
            stderr: r.stderr.hypot(i.stderr),
            n: r.n,
        })
    }
}

/// Spatial-and-ensemble average of `X₁² + X₂²`.
pub fn mean_intensity(fields: &[VectorField]) -> Result<EnsembleEstimate> {
    EnsembleEstimate::from_samples(&fields.iter().map(|f| f.mean_dot()).collect::<Vec<_>>())
}

/// Ensemble-averaged momentum spectrum on the full lattice, transform order.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum2D {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl Spectrum2D {
    /// `(kx, ky, S)` for every mode, transform order.
    pub fn entries(&self) -> Vec<(f64, f64, f64)> {
        let w = self.grid.wavenumbers();
        let mut out = Vec::with_capacity(self.values.len());
        for (iy, ky) in w.ky.iter().enumerate() {
            for (ix, kx) in w.kx.iter().enumerate() {
                out.push((*kx, *ky, self.values[self.grid.index(ix, iy)]));
            }
        }
        out
    }

    /// `(1/Area)·Σ_k S(k)`, equal to the mean intensity.
    pub fn total_intensity(&self) -> f64 {
        compensated_sum(self.values.iter().copied()) / self.grid.area()
    }
}

/// Power `|X̂(k)|²·ΔA` of one real vector field.
pub fn field_power(field: &VectorField, ws: &mut SpectralWorkspace) -> Vec<f64> {
    let spectral = ws.forward(&field.to_complex());
    let da = field.grid.cell_area();
    spectral.values.iter().map(|z| z.norm_sqr() * da).collect()
}

pub fn momentum_spectrum(fields: &[VectorField]) -> Result<Spectrum2D> {
    let Some(first) = fields.first() else {
        return domain("spectrum needs at least one field");
    };
    let grid = first.grid;
    let mut ws = SpectralWorkspace::new(grid);
    let mut acc = SpectrumAccumulator::new(grid, fields.len());
    for (i, f) in fields.iter().enumerate() {
        if f.grid != grid {
            return domain("fields live on different grids");
        }
        acc.add_trajectory(i, &field_power(f, &mut ws));
    }
    acc.finish_record();
    Ok(acc.spectrum())
}

/// Annular averages with bins centred on `i·Δk`, `Δk = 2π/max(lx, ly)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialSpectrum {
    /// Bin centres.
    pub k: Vec<f64>,
    /// `k.len() + 1` bin edges; the first bin is `[0, Δk/2)`.
    pub edges: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub counts: Vec<usize>,
}

impl RadialSpectrum {
    /// Index of the largest non-empty bin value.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 0..self.values.len() {
            if self.counts[i] > 0 && self.values[i] > self.values[best] {
                best = i;
            }
        }
        best
    }
}

/// Radial bin index of every mode.
pub fn radial_bins(grid: &GridSpec) -> (Vec<usize>, usize) {
    let dk = grid.radial_bin_width();
    let bins: Vec<usize> = grid.k_squared().iter().map(|k2| (k2.sqrt() / dk).round() as usize).collect();
    let n = bins.iter().max().map_or(1, |m| m + 1);
    (bins, n)
}

fn radial_layout(grid: &GridSpec) -> (Vec<usize>, Vec<usize>, Vec<f64>, Vec<f64>) {
    let (bins, n) = radial_bins(grid);
    let mut counts = vec![0usize; n];
    for &b in &bins {
        counts[b] += 1;
    }
    let dk = grid.radial_bin_width();
    let centres = (0..n).map(|i| i as f64 * dk).collect();
    let mut edges = vec![0.0];
    edges.extend((0..n).map(|i| (i as f64 + 0.5) * dk));
    (bins, counts, centres, edges)
}

fn bin_means(values: &[f64], bins: &[usize], counts: &[usize]) -> Vec<f64> {
    let mut sums = vec![0.0; counts.len()];
    for (v, &b) in values.iter().zip(bins) {
        sums[b] += v;
    }
    sums.iter()
        .zip(counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect()
}

/// Radial profile of an averaged spectrum (no error bars).
pub fn radial_average(spectrum: &Spectrum2D) -> RadialSpectrum {
    let (bins, counts, k, edges) = radial_layout(&spectrum.grid);
    let values = bin_means(&spectrum.values, &bins, &counts);
    RadialSpectrum {
        stderr: vec![0.0; values.len()],
        k,
        edges,
        values,
        counts,
    }
}

/// Accumulates per-trajectory time sums of scalar samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleAccumulator {
    sums: Vec<f64>,
    records: usize,
}

impl SampleAccumulator {
    pub fn new(n: usize) -> Self {
        SampleAccumulator {
            sums: vec![0.0; n],
            records: 0,
        }
    }

    pub fn add(&mut self, samples: &[f64]) {
        assert_eq!(samples.len(), self.sums.len(), "trajectory count changed");
        self.sums.iter_mut().zip(samples).for_each(|(s, v)| *s += v);
        self.records += 1;
    }

    pub fn records(&self) -> usize {
        self.records
    }

    /// Per-trajectory time averages.
    pub fn averages(&self) -> Vec<f64> {
        let r = self.records.max(1) as f64;
        self.sums.iter().map(|s| s / r).collect()
    }

    pub fn estimate(&self) -> Result<EnsembleEstimate> {
        if self.records == 0 {
            return domain("no samples recorded");
        }
        EnsembleEstimate::from_samples(&self.averages())
    }
}

/// Accumulates per-trajectory time sums of momentum power spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumAccumulator {
    grid: GridSpec,
    sums: Vec<Vec<f64>>,
    records: usize,
}

impl SpectrumAccumulator {
    pub fn new(grid: GridSpec, trajectories: usize) -> Self {
        SpectrumAccumulator {
            grid,
            sums: vec![vec![0.0; grid.len()]; trajectories],
            records: 0,
        }
    }

    pub fn add_trajectory(&mut self, trajectory: usize, power: &[f64]) {
        self.sums[trajectory].iter_mut().zip(power).for_each(|(s, p)| *s += p);
    }

    /// Marks the end of one record (all trajectories added).
    pub fn finish_record(&mut self) {
        self.records += 1;
    }

    /// Adds one record using `power(i)` for every trajectory.
    pub fn add_with(&mut self, power: impl Fn(usize) -> Vec<f64>) {
        for i in 0..self.sums.len() {
            let p = power(i);
            self.add_trajectory(i, &p);
        }
        self.finish_record();
    }

    pub fn records(&self) -> usize {
        self.records
    }

    fn per_trajectory(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let r = self.records.max(1) as f64;
        self.sums.iter().map(move |s| s.iter().map(|v| v / r).collect())
    }

    pub fn spectrum(&self) -> Spectrum2D {
        let n = self.sums.len() as f64;
        let mut values = vec![0.0; self.grid.len()];
        for t in self.per_trajectory() {
            values.iter_mut().zip(&t).for_each(|(v, p)| *v += p / n);
        }
        Spectrum2D {
            grid: self.grid,
            values,
        }
    }

    /// Radial profile with between-trajectory standard errors.
    pub fn radial(&self) -> Result<RadialSpectrum> {
        let (bins, counts, k, edges) = radial_layout(&self.grid);
        let profiles: Vec<Vec<f64>> = self.per_trajectory().map(|t| bin_means(&t, &bins, &counts)).collect();
        let mut values = Vec::with_capacity(counts.len());
        let mut stderr = Vec::with_capacity(counts.len());
        for b in 0..counts.len() {
            let column: Vec<f64> = profiles.iter().map(|p| p[b]).collect();
            let e = EnsembleEstimate::from_samples(&column)?;
            values.push(e.mean);
            stderr.push(e.stderr);
        }
        Ok(RadialSpectrum {
            k,
            edges,
            values,
            stderr,
            counts,
        })
    }

    /// `⟨X(r)·X(r+d)⟩` at lattice offsets `d = (sx·dx, sy·dy)`, with
    /// between-trajectory errors.
    pub fn correlation(&self, separations: &[(i64, i64)]) -> Result<Vec<EnsembleEstimate>> {
        let per: Vec<Vec<f64>> = self
            .per_trajectory()
            .map(|t| {
                let s = Spectrum2D {
                    grid: self.grid,
                    values: t,
                };
                separations.iter().map(|&d| correlation_at(&s, d)).collect()
            })
            .collect();
        (0..separations.len())
            .map(|j| EnsembleEstimate::from_samples(&per.iter().map(|p| p[j]).collect::<Vec<_>>()))
            .collect()
    }
}

fn correlation_at(spectrum: &Spectrum2D, (sx, sy): (i64, i64)) -> f64 {
    let g = &spectrum.grid;
    let (dx, dy) = (sx as f64 * g.dx(), sy as f64 * g.dy());
    let total = compensated_sum(
        spectrum
            .entries()
            .into_iter()
            .map(|(kx, ky, s)| s * (kx * dx + ky * dy).cos()),
    );
    total / g.area()
}

/// `⟨X(r)·X(r+d)⟩` from an averaged spectrum via Wiener-Khinchin on the torus.
///
/// Separations are whole lattice offsets `(sx, sy)`, i.e. `d = (sx·dx, sy·dy)`.
pub fn spatial_correlation(spectrum: &Spectrum2D, separations: &[(i64, i64)]) -> Vec<f64> {
    separations.iter().map(|&d| correlation_at(spectrum, d)).collect()
}

/// Identification of one run for [`step_convergence`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub seed: u64,
    pub duration: f64,
    pub dt: f64,
    /// Fine noise draws per step; `dt/subdivision` must agree between runs.
    pub subdivision: u32,
    pub observables: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceEntry {
    pub name: String,
    pub coarse: f64,
    pub fine: f64,
    /// `|coarse - fine|`, the discretisation error bar.
    pub error: f64,
}

/// Compares a coarse and a fine run that share their underlying noise.
pub fn step_convergence(coarse: &RunSummary, fine: &RunSummary) -> Result<Vec<ConvergenceEntry>> {
    if coarse.seed != fine.seed {
        return Err(OpoError::Mismatch(format!("seeds differ: {} vs {}", coarse.seed, fine.seed)));
    }
    if (coarse.duration - fine.duration).abs() > 1e-9 * coarse.duration.abs().max(1.0) {
        return Err(OpoError::Mismatch(format!(
            "durations differ: {} vs {}",
            coarse.duration, fine.duration
        )));
    }
    let (nc, nf) = (coarse.dt / coarse.subdivision as f64, fine.dt / fine.subdivision as f64);
    if (nc - nf).abs() > 1e-12 * nc.max(nf) {
        return Err(OpoError::Mismatch(format!("noise resolutions differ: {nc} vs {nf}")));
    }
    if coarse.observables.len() != fine.observables.len() {
        return Err(OpoError::Mismatch("observable lists differ".into()));
    }
    coarse
        .observables
        .iter()
        .zip(&fine.observables)
        .map(|((a, c), (b, f))| {
            if a != b {
                return Err(OpoError::Mismatch(format!("observable {a} vs {b}")));
            }
            Ok(ConvergenceEntry {
                name: a.clone(),
                coarse: *c,
                fine: *f,
                error: (c - f).abs(),
            })
        })
        .collect()
}
