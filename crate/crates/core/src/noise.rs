//! Seeded, counter-addressed Gaussian noise fields.
//!
//! Every draw is addressed by `(seed, trajectory, tag, counter)`: the seed keys
//! a ChaCha8 stream, `(trajectory, tag)` selects the ChaCha stream id and the
//! step counter selects a fixed block offset inside it. Any step can therefore
//! be regenerated without replaying earlier steps, and runs with different
//! step sizes can consume the same underlying white noise.
//!
//! Normals come from the ziggurat sampler. Its word consumption varies per
//! draw, but since each counter starts at its own fixed block offset the
//! variable consumption never shifts later steps.
//!
//! A stream with `subdivision = s` draws step `m` as the normalised sum of
//! fine draws `m·s … m·s + s - 1`, which is exactly the Wiener increment of a
//! step `s` times longer than the fine step.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rand_chacha::ChaCha8Rng;

use crate::grid::{ComplexField, GridSpec, VectorField};

/// Words reserved per fine counter inside a ChaCha stream.
const WORDS_PER_COUNTER_SHIFT: u32 = 26;

/// Purpose of a noise stream; distinct tags never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum NoiseTag {
    /// Additive noise of the reduced (vector) equation.
    Reduced = 1,
    /// The four real fields behind the positive-P noises.
    Pair = 2,
    /// Metropolis proposals and acceptance draws.
    Metropolis = 3,
    /// Random initial conditions.
    Initial = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStream {
    pub seed: u64,
    pub trajectory: u64,
    pub tag: NoiseTag,
    /// Step index of the run consuming this stream.
    pub counter: u64,
    /// Fine draws combined into one step (1 = finest resolution).
    pub subdivision: u32,
}

impl NoiseStream {
    pub fn new(seed: u64, trajectory: u64, tag: NoiseTag) -> Self {
        NoiseStream {
            seed,
            trajectory,
            tag,
            counter: 0,
            subdivision: 1,
        }
    }

    pub fn with_subdivision(mut self, subdivision: u32) -> Self {
        assert!(subdivision >= 1);
        self.subdivision = subdivision;
        self
    }

    pub fn at(mut self, counter: u64) -> Self {
        self.counter = counter;
        self
    }

    pub fn advance(&mut self) {
        self.counter += 1;
    }

    fn stream_id(&self) -> u64 {
        assert!(self.trajectory < (1 << 56), "trajectory index out of range");
        (self.trajectory << 8) | self.tag as u64
    }

    fn key(&self) -> [u8; 32] {
        // splitmix64 expansion of the user seed
        let mut state = self.seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            chunk.copy_from_slice(&(z ^ (z >> 31)).to_le_bytes());
        }
        key
    }

    fn fine_rng(&self, fine_counter: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key());
        rng.set_stream(self.stream_id());
        rng.set_word_pos((fine_counter as u128) << WORDS_PER_COUNTER_SHIFT);
        rng
    }

    /// Generator positioned at the first fine block of the current step, for
    /// consumers that need draws other than normals.
    pub(crate) fn rng(&self) -> ChaCha8Rng {
        self.fine_rng(self.counter * self.subdivision as u64)
    }

    /// Fills `out` with independent standard normals for the current step.
    pub fn standard_normals(&self, out: &mut [f64]) {
        assert!(
            (out.len() as u128) * 64 < (1u128 << WORDS_PER_COUNTER_SHIFT),
            "too many draws for one counter block"
        );
        let s = self.subdivision as u64;
        let mut rng = self.fine_rng(self.counter * s);
        fill_normals(&mut rng, out);
        if s > 1 {
            let mut extra = vec![0.0; out.len()];
            for j in 1..s {
                let mut rng = self.fine_rng(self.counter * s + j);
                fill_normals(&mut rng, &mut extra);
                out.iter_mut().zip(&extra).for_each(|(o, e)| *o += e);
            }
            let norm = 1.0 / (s as f64).sqrt();
            out.iter_mut().for_each(|o| *o *= norm);
        }
    }

    /// Packs `2·n` standard normals as `z₁ + i z₂` scaled by `scale`
    /// (first `n` draws to the real parts, next `n` to the imaginary parts).
    pub(crate) fn complex_normals(&self, scale: f64, out: &mut [Complex64], buf: &mut Vec<f64>) {
        let n = out.len();
        buf.resize(2 * n, 0.0);
        self.standard_normals(buf);
        let (re, im) = buf.split_at(n);
        for ((o, &a), &b) in out.iter_mut().zip(re).zip(im) {
            *o = Complex64::new(a * scale, b * scale);
        }
    }
}

fn fill_normals(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for o in out.iter_mut() {
        *o = StandardNormal.sample(rng);
    }
}

/// Standard deviation of one site/component of discretised unit white noise
/// averaged over a cell and a step: `1/√(ΔA·dt)`.
pub fn white_noise_std(grid: &GridSpec, dt: f64) -> f64 {
    1.0 / (grid.cell_area() * dt).sqrt()
}

/// Real two-component noise `ζ̃` with `⟨ζ̃ᵢζ̃ⱼ⟩ = δᵢⱼ/(ΔA·dt)` per site and step.
pub fn sample_vector_noise(grid: &GridSpec, dt: f64, stream: &NoiseStream) -> VectorField {
    assert!(dt > 0.0);
    let n = grid.len();
    let mut buf = vec![0.0; 2 * n];
    stream.standard_normals(&mut buf);
    let s = white_noise_std(grid, dt);
    buf.iter_mut().for_each(|v| *v *= s);
    let x2 = buf.split_off(n);
    VectorField {
        grid: *grid,
        x1: buf,
        x2,
    }
}

/// Complex driving noise `ζ₊ = ζ̃₁ + iζ̃₂` of the reduced equation, drawn from
/// the same numbers as [`sample_vector_noise`]; `⟨ζ₊ζ₊*⟩ = 2/(ΔA·dt)`, `⟨ζ₊²⟩ = 0`.
pub fn reduced_complex_noise(grid: &GridSpec, dt: f64, stream: &NoiseStream) -> ComplexField {
    sample_vector_noise(grid, dt, stream).to_complex()
}

/// Positive-P noises built from four real white fields.
#[derive(Debug, Clone, PartialEq)]
pub struct PairNoise {
    pub xi1: ComplexField,
    pub xi2: ComplexField,
    pub xi1p: ComplexField,
    pub xi2p: ComplexField,
}

/// `ξ₁,₂ = (ξₓ ± iξᵧ)/√2` and likewise for the `+` fields, so `⟨ξ₁ξ₂⟩ = 1/(ΔA·dt)`,
/// `⟨ξ₁²⟩ = 0`, `⟨ξᵢξⱼ⁺⟩ = 0` and `ξ₁ = ξ₂*` exactly.
pub fn sample_pair_noise(grid: &GridSpec, dt: f64, stream: &NoiseStream) -> PairNoise {
    assert!(dt > 0.0);
    let n = grid.len();
    let mut buf = vec![0.0; 4 * n];
    stream.standard_normals(&mut buf);
    let s = white_noise_std(grid, dt) / std::f64::consts::SQRT_2;
    let field = |re: &[f64], im: &[f64], sign: f64| ComplexField {
        grid: *grid,
        values: re
            .iter()
            .zip(im)
            .map(|(&a, &b)| Complex64::new(a * s, sign * b * s))
            .collect(),
    };
    let (xy, xyp) = buf.split_at(2 * n);
    let (x, y) = xy.split_at(n);
    let (xp, yp) = xyp.split_at(n);
    PairNoise {
        xi1: field(x, y, 1.0),
        xi2: field(x, y, -1.0),
        xi1p: field(xp, yp, 1.0),
        xi2p: field(xp, yp, -1.0),
    }
}
