//! Acceptance criteria at desk scale. Each test prints one PASS/FAIL line,
//! written straight to stderr so it survives output capture. The line is the
//! verdict; a test only fails when its experiment cannot run.
//!
//! The common-random-number run behind criteria 2, 3, 6, 7 and 10 is shared.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;

use opo_critical::analytics::{gaussian_self_consistency, kelvin_kei, lattice_self_consistency, near_field_corr};
use opo_critical::cli::experiments::{run_crn, run_mcmc_check, run_scan, run_steady, CrnReport};
use opo_critical::cli::{main_with_args, Experiment, Preset, RunConfig, EXIT_OK};
use opo_critical::dynamics::RecordPoint;
use opo_critical::grid::GridSpec;
use opo_critical::params::Etas;

fn report(criterion: u32, pass: bool, detail: String) {
    let line = format!(
        "acceptance criterion {criterion:>2}: {} | {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}

fn info(text: String) {
    let _ = std::io::stderr().lock().write_all(format!("    {text}\n").as_bytes());
}

/// 48×48 on a 20×20 box at the Lifshitz point, dt = 1e-3, 400 trajectories,
/// equilibration 10, averaging 10, with the step-halving repeat.
fn crn() -> &'static CrnReport {
    static RUN: OnceLock<CrnReport> = OnceLock::new();
    RUN.get_or_init(|| {
        let mut cfg = RunConfig::defaults(Experiment::Nongaussian, Preset::Desk);
        assert_eq!((cfg.nx, cfg.lx, cfg.dt, cfg.trajectories), (48, 20.0, 1e-3, 400));
        assert_eq!((cfg.equilibration, cfg.duration), (10.0, 10.0));
        assert_eq!(Etas::from_reduced(cfg.g, cfg.mu, cfg.delta).unwrap(), Etas::new(0.0, 0.0, 0.5));
        cfg.step_check = true;
        run_crn(&cfg).unwrap()
    })
}

#[test]
fn criterion_01_self_consistency_at_lifshitz_point() {
    let c = gaussian_self_consistency(0.0).unwrap().c;
    let pass = (c - 0.25).abs() <= 1e-12;
    report(1, pass, format!("c(0) = {c:.15}, expected 0.25 +/- 1e-12"));
}

#[test]
fn criterion_02_gaussian_intensity() {
    let r = crn();
    let g = r.gaussian;
    let pass = (g.mean - 0.250).abs() <= 0.010;
    let grid = GridSpec::square(48, 20.0).unwrap();
    let lattice = lattice_self_consistency(&grid, &Etas::new(0.0, 0.0, 0.5)).unwrap().c;
    report(
        2,
        pass,
        format!(
            "<|X~|^2> = {:.5} +/- {:.5}, expected 0.250 +/- 0.010 (lattice closed form {lattice:.5})",
            g.mean, g.stderr
        ),
    );
}

#[test]
fn criterion_03_nongaussian_correction() {
    let r = crn();
    let d = r.difference;
    let in_band = (d.mean - 0.0074).abs() <= 0.004;
    let reduced = r.variance_ratio < 0.1;
    report(
        3,
        in_band && reduced,
        format!(
            "<|X|^2 - |X~|^2> = {:.5} +/- {:.5}, expected 0.0074 +/- 0.004; variance ratio {:.4} (single-time {:.4}), required < 0.1",
            d.mean, d.stderr, r.variance_ratio, r.instantaneous_variance_ratio
        ),
    );
    info(format!(
        "direct <|X|^2> = {:.5} +/- {:.5}; Gaussian + difference = {:.5}",
        r.full.mean,
        r.full.stderr,
        r.gaussian.mean + d.mean
    ));
}

/// Radial bin index `round(|k|/Δk)` of each lattice mode, `Δk = 2π/L`.
fn lattice_modes(n: usize, l: f64) -> Vec<(f64, usize)> {
    let dk = 2.0 * PI / l;
    let m = |i: usize| if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
    let mut out = Vec::with_capacity(n * n);
    for iy in 0..n {
        for ix in 0..n {
            let k = dk * m(ix).hypot(m(iy));
            out.push((k, (k / dk).round() as usize));
        }
    }
    out
}

#[test]
fn criterion_06_far_field_spectrum() {
    let r = crn();
    let sp = r.spectra.as_ref().unwrap();
    let rad = &sp.gaussian_radial;
    // η′₁ = η₁ + 2c with η₁ = 0
    let eta1p = 2.0 * gaussian_self_consistency(0.0).unwrap().c;
    let modes = lattice_modes(48, 20.0);
    let mut worst: f64 = 0.0;
    let mut bins = 0;
    for b in 0..rad.k.len() {
        if rad.counts[b] == 0 || rad.k[b] > 2.0 + 1e-9 {
            continue;
        }
        let (sum, count) = modes
            .iter()
            .filter(|m| m.1 == b)
            .fold((0.0, 0), |(s, c), (k, _)| (s + 1.0 / (eta1p + 0.5 * k.powi(4)), c + 1));
        assert_eq!(count, rad.counts[b]);
        let oracle = sum / count as f64;
        let rel = rad.values[b] / oracle - 1.0;
        info(format!(
            "k = {:.3}: S = {:.4} +/- {:.4}, 1/(eta1'+eta3 k^4) = {:.4}, rel {:+.4}",
            rad.k[b], rad.values[b], rad.stderr[b], oracle, rel
        ));
        worst = worst.max(rel.abs());
        bins += 1;
    }
    let pass = worst < 0.05;
    report(6, pass, format!("{bins} bins with k <= 2, worst relative deviation {worst:.4}, required < 0.05"));
}

#[test]
fn criterion_07_nongaussian_spectral_locality() {
    let r = crn();
    let d = &r.spectra.as_ref().unwrap().difference_radial;
    let z0 = d.values[0] / d.stderr[0];
    let mut high = 0;
    let mut worst: (f64, f64) = (0.0, 0.0);
    for b in 0..d.k.len() {
        if d.counts[b] == 0 || d.k[b] < 2.0 {
            continue;
        }
        high += 1;
        let z = d.values[b] / d.stderr[b];
        if z.abs() > worst.1.abs() {
            worst = (d.k[b], z);
        }
    }
    let pass = z0 >= 3.0 && worst.1.abs() <= 3.0;
    report(
        7,
        pass,
        format!(
            "k = 0 difference {:.4} ({z0:.1} stderr, required >= 3); largest of {high} bins with k >= 2: {:.1} stderr at k = {:.3} (required <= 3)",
            d.values[0], worst.1, worst.0
        ),
    );
    for b in 0..d.k.len().min(10) {
        info(format!("k = {:.3}: dS = {:+.5} +/- {:.5}", d.k[b], d.values[b], d.stderr[b]));
    }
}

/// Largest `|I_{n+1} − I_n|` in combined standard errors, and where.
fn largest_jump(points: &[RecordPoint], signed: impl Fn(f64) -> f64) -> (f64, f64) {
    points
        .windows(2)
        .map(|w| {
            let z = signed(w[1].intensity.mean - w[0].intensity.mean) / w[0].intensity.combined_stderr(&w[1].intensity);
            (z, w[1].param_value)
        })
        .fold((f64::NEG_INFINITY, 0.0), |a, b| if b.0 > a.0 { b } else { a })
}

#[test]
fn criterion_04_pump_scan() {
    let cfg = RunConfig::defaults(Experiment::ScanPump, Preset::Desk);
    assert!(cfg.trajectories >= 100);
    let r = run_scan(&cfg).unwrap();
    let (jump, at) = largest_jump(&r.points, f64::abs);
    let last = r.points.last().unwrap();
    // noise-free fixed point of the uniform equation: |X|² = -η₁ = (μ-1)/g
    let fixed = (last.param_value - 1.0) / cfg.g;
    let rel = (last.intensity.mean - fixed).abs() / fixed;
    let pass = jump <= 3.0 && rel < 0.15;
    report(
        4,
        pass,
        format!(
            "{} points; largest adjacent jump {jump:.2} stderr at mu = {at:.4} (required <= 3); I(mu = {:.3}) = {:.4} +/- {:.4} vs fixed point {fixed:.4}, rel {rel:.4} (required < 0.15)",
            r.points.len(),
            last.param_value,
            last.intensity.mean,
            last.intensity.stderr
        ),
    );
    for p in r.points.iter().step_by(100) {
        info(format!("mu = {:.4}: I = {:.5} +/- {:.5}", p.param_value, p.intensity.mean, p.intensity.stderr));
    }
    // stride-independent view: departure from the straight line through the neighbours
    let (curv, at_c) = r
        .points
        .windows(3)
        .map(|w| {
            let dev = w[1].intensity.mean - 0.5 * (w[0].intensity.mean + w[2].intensity.mean);
            let se = (w[1].intensity.stderr.powi(2)
                + 0.25 * (w[0].intensity.stderr.powi(2) + w[2].intensity.stderr.powi(2)))
            .sqrt();
            (dev.abs() / se, w[1].param_value)
        })
        .fold((0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a });
    info(format!("largest departure from neighbour interpolation {curv:.2} stderr at mu = {at_c:.4}"));
}

#[test]
fn criterion_05_detuning_scan_and_ring() {
    let cfg = RunConfig::defaults(Experiment::ScanDetuning, Preset::Desk);
    let r = run_scan(&cfg).unwrap();
    let (rise, at) = largest_jump(&r.points, |d| d);
    let monotone = rise <= 3.0;
    for p in r.points.iter().step_by(20) {
        info(format!("delta = {:+.3}: I = {:.5} +/- {:.5}", p.param_value, p.intensity.mean, p.intensity.stderr));
    }

    // ring at |Δ| = 0.45 on the side with η₂ < 0
    let mut ring = RunConfig::defaults(Experiment::Lifshitz, Preset::Desk);
    ring.delta = -0.45;
    ring.dt = 4e-3;
    ring.trajectories = 32;
    ring.equilibration = 20.0;
    ring.duration = 10.0;
    ring.record_every = 25;
    ring.validate().unwrap();
    let eta2 = ring.delta / ((1.0 + ring.mu) * ring.g.sqrt());
    let eta3 = 1.0 / (1.0 + ring.mu);
    assert!(eta2 < 0.0);
    let k_star = (-eta2 / (2.0 * eta3)).sqrt();
    let s = run_steady(&ring).unwrap();
    let peak = s.radial.argmax();
    let dk = 2.0 * PI / ring.lx;
    let ring_ok = (s.radial.k[peak] - k_star).abs() <= dk + 1e-12;
    report(
        5,
        monotone && ring_ok,
        format!(
            "largest rise between adjacent points {rise:.2} stderr at delta = {at:+.3} (required <= 3); ring peak at k = {:.3}, k* = {k_star:.3}, bin width {dk:.3}",
            s.radial.k[peak]
        ),
    );
    for b in 0..s.radial.k.len().min(12) {
        info(format!("k = {:.3}: S = {:.4} +/- {:.4}", s.radial.k[b], s.radial.values[b], s.radial.stderr[b]));
    }
}

#[test]
fn criterion_08_mcmc_matches_dynamics() {
    let cfg = RunConfig::defaults(Experiment::McmcCheck, Preset::Desk);
    assert_eq!((cfg.nx, cfg.lx), (16, 10.0));
    let r = run_mcmc_check(&cfg).unwrap();
    let pass = r.agrees();
    report(
        8,
        pass,
        format!(
            "Metropolis <X.X> = {:.5} +/- {:.5} ({} chains), dynamics {:.5} +/- {:.5}; difference {:.2} combined stderr (required < 2)",
            r.mcmc.mean,
            r.mcmc.stderr,
            r.chains.len(),
            r.sde.mean,
            r.sde.stderr,
            r.z()
        ),
    );
    for c in &r.chains {
        info(format!(
            "chain: acceptance {:.3}, tau_int {:.1} sweeps, <X.X> = {:.5} +/- {:.5}",
            c.acceptance, c.autocorrelation_time, c.intensity.mean, c.intensity.stderr
        ));
    }
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (l, r) = (0.5 * (a + m), 0.5 * (m + b));
        let (fl, fr) = (f(l), f(r));
        let left = (m - a) / 6.0 * (fa + 4.0 * fl + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * fr + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, fl, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, fr, fb, right, tol / 2.0, depth - 1)
    }
    rec(f, a, b, fa, fm, fb, whole, tol, depth)
}

/// `-∫₀^∞ k·J₀(kx)/(1 + k⁴) dk`: adaptive Simpson over half-periods of `J₀`
/// with repeated averaging of the alternating partial sums.
fn kei_by_quadrature(x: f64) -> f64 {
    if x == 0.0 {
        // k² = tan θ
        return -PI / 4.0;
    }
    let f = move |k: f64| k * libm::j0(k * x) / (1.0 + k.powi(4));
    let start = 6.0f64.max(3.0 / x);
    let mut partial = vec![simpson(&f, 0.0, start, 1e-14, 50)];
    let mut a = start;
    for _ in 0..40 {
        let b = a + PI / x;
        partial.push(partial.last().unwrap() + simpson(&f, a, b, 1e-15, 50));
        a = b;
    }
    for _ in 0..12 {
        partial = partial.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    -partial.last().unwrap()
}

#[test]
fn criterion_09_special_functions() {
    let mut worst: (f64, f64) = (0.0, 0.0);
    for i in 0..=80 {
        let x = 0.25 * i as f64;
        let err = (kelvin_kei(x).unwrap() - kei_by_quadrature(x)).abs();
        if err > worst.1 {
            worst = (x, err);
        }
    }
    let mut near: f64 = 0.0;
    for eta1 in [0.0, 0.5, 1.0, 10.0] {
        let sc = gaussian_self_consistency(eta1).unwrap();
        near = near.max((near_field_corr(0.0, sc.eta1_prime, 0.5).unwrap() - sc.c).abs());
    }
    let pass = worst.1 <= 1e-8 && near <= 1e-8;
    report(
        9,
        pass,
        format!(
            "kei vs Hankel quadrature on [0, 20]: max error {:.2e} at x = {} (required 1e-8); max |C(0) - c| = {near:.2e} (required 1e-8)",
            worst.1, worst.0
        ),
    );
}

#[test]
fn criterion_10_determinism_and_step_halving() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str, workers: &str| {
        let out = tmp.path().join(name);
        let args = [
            "opo-critical", "nongaussian", "--out", out.to_str().unwrap(), "--workers", workers, "--grid", "24",
            "--box", "10", "--trajectories", "8", "--dt", "0.002", "--equilibration", "0.5", "--duration", "0.5",
            "--record-every", "10", "--step-check",
        ];
        assert_eq!(main_with_args(args), EXIT_OK);
        out
    };
    let (a, b) = (run("a", "1"), run("b", "2"));
    let mut identical = true;
    let mut files = 0;
    for entry in std::fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        identical &= std::fs::read(a.join(&name)).unwrap() == std::fs::read(b.join(&name)).unwrap();
        files += 1;
    }

    let r = crn();
    let sc = r.step_check.as_ref().unwrap();
    let full = sc.entries.iter().find(|e| e.name == "full").unwrap();
    let change = (full.coarse - full.fine).abs();
    let converged = change < r.full.stderr;
    report(
        10,
        identical && converged,
        format!(
            "{files} output files byte-identical: {identical}; step halving changes <|X|^2> by {change:.5} (coarse {:.5}, fine {:.5}), sampling stderr {:.5}",
            full.coarse, full.fine, r.full.stderr
        ),
    );
    for e in &sc.entries {
        info(format!("{}: coarse {:.5}, fine {:.5}", e.name, e.coarse, e.fine));
    }
}
