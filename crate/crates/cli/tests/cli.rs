use std::path::Path;
use std::process::{Command, Output};

fn llqfp(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_llqfp"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn exp1_is_byte_identical_across_reruns_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(&config, "executions = 40\nbase_seed = 9\n").unwrap();
    let cfg = config.to_str().unwrap();
    for (out, threads) in [("a", "4"), ("b", "4"), ("c", "1")] {
        let o = llqfp(
            &["exp1", "--config", cfg, "--out", out, "--parallel", threads],
            dir.path(),
        );
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let read = |d: &str, f: &str| std::fs::read(dir.path().join(d).join(f)).unwrap();
    for f in ["exp1.csv", "exp1_summary.json"] {
        assert_eq!(read("a", f), read("b", f));
        assert_eq!(read("a", f), read("c", f));
    }
    let csv = String::from_utf8(read("a", "exp1.csv")).unwrap();
    assert!(csv.contains("# base_seed: 9\n# executions: 40\n"));
    assert!(csv.contains("# config_sha256: "));
    assert!(csv.contains("# generator: chacha8"));
    assert_eq!(
        csv.lines().filter(|l| !l.starts_with('#')).count(),
        1 + 3 * 40
    );
}

#[test]
fn seed_flag_overrides_base_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(&config, "executions = 2\n").unwrap();
    let o = llqfp(
        &[
            "exp1",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "77",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("o/exp1.csv")).unwrap();
    assert!(csv.contains("\nS1,77,"));
    assert!(csv.contains("\nS1,78,"));
}

#[test]
fn plan_reports_parameters_and_the_exact_audit() {
    let dir = tempfile::tempdir().unwrap();
    let o = llqfp(
        &[
            "plan",
            "--epsilon",
            "ln2",
            "--delta",
            "0.05",
            "--mu",
            "0.01",
        ],
        dir.path(),
    );
    let text = stdout(&o);
    assert!(text.contains("a = 0.0334383"), "{text}");
    assert!(text.contains("lambda = 0.0134329"), "{text}");
    // the planner's bounds leave the exact δ-profile above δ
    assert_eq!(o.status.code(), Some(4));
    assert!(text.contains("FAIL"));
}

#[test]
fn plan_rejects_invalid_budgets() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        ["plan", "--epsilon", "ln2", "--delta", "0.6", "--mu", "0.01"],
        ["plan", "--epsilon", "ln2", "--delta", "0.05", "--mu", "0"],
    ] {
        assert_eq!(llqfp(&args, dir.path()).status.code(), Some(2));
    }
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.toml"),
        "executions = 5\nunknown_key = 1\n",
    )
    .unwrap();
    let o = llqfp(&["exp1", "--config", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown_key"));
    assert_eq!(
        llqfp(&["exp1", "--config", "missing.toml"], dir.path())
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        llqfp(&["sample", "--a", "-1", "--lambda", "1"], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn failed_assumptions_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("hot.toml"),
        "weight = 0.3\nexecutions = 1\n",
    )
    .unwrap();
    assert_eq!(
        llqfp(&["exp1", "--config", "hot.toml"], dir.path())
            .status
            .code(),
        Some(3)
    );
    std::fs::write(
        dir.path().join("tight.toml"),
        "box_hi = 12.0\nexecutions = 1\n",
    )
    .unwrap();
    assert_eq!(
        llqfp(&["exp2", "--config", "tight.toml"], dir.path())
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn sample_writes_reproducible_draws_in_support() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "sample", "--a", "0.034", "--lambda", "0.013", "--count", "500", "--seed", "4",
    ];
    let a = stdout(&llqfp(&args, dir.path()));
    assert_eq!(a, stdout(&llqfp(&args, dir.path())));
    let values: Vec<f64> = a
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("index"))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 500);
    assert!(values.iter().all(|v| v.abs() <= 0.034));
}

#[test]
fn perturb_record_replays_through_solve() {
    let dir = tempfile::tempdir().unwrap();
    let o = llqfp(
        &["perturb", "--seed", "5", "--noise", "S2", "--out", "d"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let replay = llqfp(&["solve", "--draw", "d/draw.json"], dir.path());
    let direct = llqfp(&["solve", "--seed", "5", "--noise", "S2"], dir.path());
    assert_eq!(replay.status.code(), Some(0));
    assert_eq!(stdout(&replay), stdout(&direct));
    let text = stdout(&direct);
    assert!(text.contains("\n5,closed_form,"), "{text}");
    assert!(text.contains(",14.70588235294117"));
}

#[test]
fn iterative_solvers_agree_with_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let parse = |o: &Output| -> Vec<f64> {
        let text = stdout(o);
        let row = text.lines().last().unwrap().to_string();
        row.split(',').skip(4).map(|v| v.parse().unwrap()).collect()
    };
    let exact = parse(&llqfp(&["solve", "--seed", "2"], dir.path()));
    for m in ["projected-gradient", "best-response"] {
        let o = llqfp(
            &["solve", "--seed", "2", "--method", m, "--tol", "1e-13"],
            dir.path(),
        );
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        for (a, b) in parse(&o).iter().zip(&exact) {
            assert!((a - b).abs() < 1e-6, "{m}: {a} vs {b}");
        }
    }
}

#[test]
fn audit_writes_json_and_flags_failures() {
    let dir = tempfile::tempdir().unwrap();
    let o = llqfp(
        &[
            "audit",
            "--epsilon",
            "ln2",
            "--delta",
            "0.05",
            "--mu",
            "0.01",
            "--a",
            "0.05",
            "--lambda",
            "0.01344",
            "--player",
            "3",
        ],
        dir.path(),
    );
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["i0"], 3);
    assert_eq!(report["coordinates"].as_array().unwrap().len(), 5);
    assert_eq!(report["pass"], true);

    let o = llqfp(
        &[
            "audit",
            "--epsilon",
            "ln2",
            "--delta",
            "0.05",
            "--mu",
            "0.01",
            "--noise",
            "S1",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn experiments_2_3_and_sweep_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("small.toml"),
        "executions = 20\n[sweep]\nepsilons = [0.2, 1.0, 5.0]\nexecutions = 10\n",
    )
    .unwrap();
    for cmd in ["exp2", "exp3", "sweep"] {
        let o = llqfp(&[cmd, "--config", "small.toml", "--out", "o"], dir.path());
        assert_eq!(
            o.status.code(),
            Some(0),
            "{cmd}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    for f in [
        "exp2_histogram.csv",
        "exp2_bias.csv",
        "exp2_summary.json",
        "exp3.csv",
        "exp3_summary.json",
        "sweep.csv",
        "sweep_summary.json",
    ] {
        assert!(dir.path().join("o").join(f).exists(), "{f}");
    }
    let exp3 = std::fs::read_to_string(dir.path().join("o/exp3.csv")).unwrap();
    assert!(exp3.contains(
        "player,payoff_at_x_star,mean_payoff_S1,mean_payoff_S2,mean_payoff_S1-compliant\n"
    ));
    let sweep = std::fs::read_to_string(dir.path().join("o/sweep.csv")).unwrap();
    assert!(sweep.contains("# note: delta = 0"));
    let means: Vec<f64> = sweep
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("epsilon"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(means.windows(2).all(|w| w[0] > w[1]), "{means:?}");
}
