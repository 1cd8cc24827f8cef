//! Identical configuration and seed give byte-identical outputs, whatever the
//! worker count.

use std::fs;
use std::path::Path;

use opo_critical::cli::{main_with_args, EXIT_OK};

fn run(experiment: &str, out: &Path, workers: &str, extra: &[&str]) {
    let mut args = vec![
        "opo-critical",
        experiment,
        "--out",
        out.to_str().unwrap(),
        "--workers",
        workers,
        "--seed",
        "42",
    ];
    args.extend_from_slice(extra);
    assert_eq!(main_with_args(args), EXIT_OK);
}

fn assert_same_tree(a: &Path, b: &Path) {
    let mut names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 1);
    for name in names {
        let (x, y) = (fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
        assert!(x == y, "{name:?} differs");
    }
}

const SMALL: [&str; 12] = [
    "--grid",
    "16",
    "--box",
    "10",
    "--trajectories",
    "6",
    "--dt",
    "0.005",
    "--equilibration",
    "0.2",
    "--duration",
    "0.2",
];

#[test]
fn steady_and_crn_runs_repeat_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    for exp in ["lifshitz", "nongaussian", "spectrum"] {
        let (a, b, c) = (tmp.path().join(format!("{exp}-a")), tmp.path().join(format!("{exp}-b")), tmp.path().join(format!("{exp}-c")));
        let mut extra = SMALL.to_vec();
        extra.extend(["--record-every", "4", "--snapshots"]);
        if exp == "nongaussian" {
            extra.push("--step-check");
        }
        run(exp, &a, "1", &extra);
        run(exp, &b, "1", &extra);
        run(exp, &c, "3", &extra);
        assert_same_tree(&a, &b);
        assert_same_tree(&a, &c);
    }
}

#[test]
fn scans_repeat_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let extra = [
        "--grid", "16", "--box", "10", "--trajectories", "4", "--dt", "0.004", "--equilibration", "0.2",
        "--scan-rate", "0.5", "--record-every", "10",
    ];
    run("scan-pump", &a, "1", &extra);
    run("scan-pump", &b, "2", &extra);
    assert_same_tree(&a, &b);
}

#[test]
fn manifest_reruns_the_experiment() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let mut extra = SMALL.to_vec();
    extra.extend(["--record-every", "4"]);
    run("lifshitz", &a, "2", &extra);
    let manifest = a.join("manifest.toml");
    let args = [
        "opo-critical",
        "lifshitz",
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ];
    assert_eq!(main_with_args(args), EXIT_OK);
    assert_same_tree(&a, &b);
}
