use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn flockrbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flockrbm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_run(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "simulate", "--method", "rbm1", "--n", "16", "--p", "4", "--tau", "0.1", "--t-end", "1",
        "--seed", "7", "--reps", "6", "--out",
    ];
    args.push(out.to_str().unwrap());
    args.extend_from_slice(extra);
    flockrbm(&args)
}

#[test]
fn simulate_writes_metrics_with_seed_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = flockrbm(&[
        "simulate",
        "--method",
        "rbmr",
        "--n",
        "64",
        "--p",
        "2",
        "--tau",
        "0.1",
        "--t-end",
        "10",
        "--seed",
        "7",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("simulate_rbmr_rep0000.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(
        header.starts_with('#') && header.contains("seed=7"),
        "{header}"
    );
    assert_eq!(
        lines.next().unwrap(),
        "t,ssd_v,ssd_x,d_x,d_v,momentum_0,energy,l2_error"
    );
    assert_eq!(lines.count(), 101);
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = flockrbm(&["simulate", "--frobnicate", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_violation_names_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let out = flockrbm(&[
        "simulate",
        "--method",
        "rbm1",
        "--n",
        "10",
        "--p",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p | N"));

    let out = flockrbm(&["simulate", "--tau", "0.1", "--dt", "0.2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("0 < dt <= tau"));
}

#[test]
fn verify_theory_passes() {
    let out = flockrbm(&["verify-theory"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("PASS") && !text.contains("FAIL"));
}

#[test]
fn output_bytes_independent_of_runs_and_threads() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    assert!(small_run(a.path(), &["--threads", "1"]).status.success());
    assert!(small_run(b.path(), &["--threads", "4"]).status.success());
    assert!(small_run(c.path(), &["--threads", "4"]).status.success());
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 7);
    for name in names {
        let x = fs::read(a.path().join(&name)).unwrap();
        assert_eq!(x, fs::read(b.path().join(&name)).unwrap(), "{name:?}");
        assert_eq!(x, fs::read(c.path().join(&name)).unwrap(), "{name:?}");
    }
}

#[test]
fn single_replication_aggregate_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = flockrbm(&[
        "simulate",
        "--method",
        "rbmr_equiv",
        "--n",
        "8",
        "--t-end",
        "0.5",
        "--reps",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let run = fs::read_to_string(dir.path().join("simulate_rbmr_equiv_rep0000.csv")).unwrap();
    let agg = fs::read_to_string(dir.path().join("simulate_rbmr_equiv_aggregate.csv")).unwrap();
    for (r, a) in run.lines().skip(2).zip(agg.lines().skip(2)) {
        let r: Vec<&str> = r.split(',').collect();
        let a: Vec<&str> = a.split(',').collect();
        assert_eq!(r[0], a[0]);
        // each metric appears as mean, q10, q50, q90
        for (k, v) in r[1..].iter().enumerate() {
            for q in 0..4 {
                assert_eq!(*v, a[1 + 4 * k + q]);
            }
        }
        assert_eq!(*a.last().unwrap(), "1");
    }
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "[model]\nn = 12\np = 3\nkernel = { variant = \"constant\", value = 1.0 }\n\
         [time]\ntau = 0.1\nt_end = 0.3\n[run]\nmethod = \"rbm1\"\nseed = 4\n",
    )
    .unwrap();
    let out = flockrbm(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--p",
        "4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("simulate_rbm1_rep0000.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(
        header.contains("n=12") && header.contains("p=4") && header.contains("kernel=constant:1")
    );
}

#[test]
fn sweep_tau_emits_aggregates_and_scaled_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = flockrbm(&[
        "sweep-tau",
        "--values",
        "0.1,0.05,0.025,0.0125",
        "--dt",
        "0.0125",
        "--reps",
        "4",
        "--n",
        "16",
        "--t-end",
        "0.5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let aggregates = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .ends_with("_aggregate.csv")
        })
        .count();
    assert_eq!(aggregates, 4);
    let scaled = fs::read_to_string(dir.path().join("sweep_tau_scaled.csv")).unwrap();
    assert_eq!(
        scaled.lines().nth(1).unwrap(),
        "tau,method,t,l2_median,scale,scaled_l2_median"
    );
}

#[test]
fn remaining_subcommands_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for args in [
        vec![
            "flocking", "--n", "16", "--t-end", "1", "--reps", "4", "--out", d,
        ],
        vec![
            "sweep-p", "--values", "2,4", "--n", "8", "--t-end", "0.5", "--reps", "3", "--out", d,
        ],
        vec![
            "compare", "--n", "8", "--t-end", "0.5", "--reps", "3", "--out", d,
        ],
        vec![
            "conserve", "--n", "8", "--t-end", "0.5", "--reps", "3", "--out", d,
        ],
        vec!["bench", "--values", "8,16", "--out", d],
    ] {
        let out = flockrbm(&args);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for f in [
        "flocking_rbmr_equiv_decay.csv",
        "sweep_p_scaled.csv",
        "compare_l2.csv",
        "compare_summary.csv",
        "conserve.csv",
        "bench.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}
