use std::path::Path;
use std::process::{Command, Output};

fn uadqn(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uadqn"))
        .args(args)
        .env("UADQN_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &[&str] = &[
    "--seeds",
    "2",
    "--steps",
    "200",
    "--aggregate-every",
    "50",
    "--set",
    "agent.hidden=[8]",
    "--set",
    "agent.n_quantiles=6",
    "--set",
    "agent.warmup=40",
    "--set",
    "agent.minibatch=8",
];

#[test]
fn train_gridworld_writes_layout_under_output_root() {
    let root = tempfile::tempdir().unwrap();
    let mut args = vec!["train-gridworld", "--out", "g", "--policy", "ua_variant2", "--emit-svg", "--lambda", "0.5"];
    args.extend_from_slice(TINY);
    let o = uadqn(&args, root.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = root.path().join("g");
    for f in [
        "config.toml",
        "falls.svg",
        "ua_variant2/seed_000.csv",
        "ua_variant2/seed_001.csv",
        "ua_variant2/aggregate.csv",
        "ua_variant2/summary.json",
        "ua_variant2/config.toml",
    ] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let echoed = std::fs::read_to_string(dir.join("config.toml")).unwrap();
    assert!(echoed.contains("lambda = 0.5"), "{echoed}");
    assert!(echoed.contains("seeds = 2"));

    let p = uadqn(
        &["plot", dir.join("ua_variant2").to_str().unwrap(), "--out", dir.join("again.svg").to_str().unwrap()],
        root.path(),
    );
    assert!(p.status.success(), "{}", stderr(&p));
    assert!(dir.join("again.svg").is_file());
}

#[test]
fn unknown_config_key_is_usage_error() {
    let root = tempfile::tempdir().unwrap();
    let o = uadqn(&["train-gridworld", "--set", "agent.lamda=0.5"], root.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lamda"), "{}", stderr(&o));

    let cfg = root.path().join("c.toml");
    std::fs::write(&cfg, "[agent]\nbogus = 1\n").unwrap();
    let o = uadqn(&["validate", "--config", cfg.to_str().unwrap()], root.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus"));
}

#[test]
fn bad_flags_and_policies_are_usage_errors() {
    let root = tempfile::tempdir().unwrap();
    assert_eq!(uadqn(&["train-gridworld", "--no-such-flag"], root.path()).status.code(), Some(2));
    assert_eq!(uadqn(&["train-gridworld", "--policy", "greedy"], root.path()).status.code(), Some(2));
    assert_eq!(uadqn(&["plot", "--out", "x.svg", "/nonexistent"], root.path()).status.code(), Some(2));
}

#[test]
fn check_flag_needs_all_compared_policies() {
    let root = tempfile::tempdir().unwrap();
    let mut args = vec!["train-gridworld", "--out", "c", "--policy", "ua_variant2", "--check"];
    args.extend_from_slice(TINY);
    assert_eq!(uadqn(&args, root.path()).status.code(), Some(2));
}

#[test]
fn validate_selected_check_writes_report() {
    let root = tempfile::tempdir().unwrap();
    let o = uadqn(
        &["validate", "--decomposition", "--out", "v", "--set", "validate.decomposition_matrices=30"],
        root.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("decomposition  PASS"), "{stdout}");
    let report = std::fs::read_to_string(root.path().join("v/report.json")).unwrap();
    assert!(report.contains("\"passed\": true"));
}

#[test]
fn failing_check_exits_one() {
    let root = tempfile::tempdir().unwrap();
    // an untrained pair of networks shows no gap structure
    let o = uadqn(
        &[
            "regression-demo",
            "--out",
            "r",
            "--check",
            "--set",
            "regression.train_steps=0",
            "--set",
            "regression.hidden=[4]",
            "--set",
            "regression.grid_points=11",
        ],
        root.path(),
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(root.path().join("r/profile.csv").is_file());
}
