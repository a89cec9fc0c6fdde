//! End-to-end checks of the `ashte` binary: subcommand behavior, file
//! schemas, determinism, and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn ashte(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ashte"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn ashte")
}

#[test]
fn gen_is_deterministic_and_valid_json() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str| {
        let output = ashte(
            &[
                "gen", "--hyps", "6", "--acts", "10", "--mode", "grid:8", "--seed", "1", "--out",
                out,
            ],
            dir.path(),
        );
        assert!(output.status.success(), "{output:?}");
    };
    run("a.json");
    run("b.json");
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    let b = std::fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b);
    let parsed: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(parsed["family"], "bernoulli");
    assert_eq!(parsed["hypotheses"].as_array().unwrap().len(), 6);
    assert_eq!(parsed["means"].as_array().unwrap().len(), 6);
    assert_eq!(parsed["means"][0].as_array().unwrap().len(), 10);
}

#[test]
fn gen_from_mutation_table_floors_and_dedupes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("mut.csv"),
        "test,lung,breast\nt1,0.5,0\nt2,0.5,0\nt3,0.1,0.9\n",
    )
    .unwrap();
    let output = ashte(
        &["gen", "--from-mutations", "mut.csv", "--out", "inst.json"],
        dir.path(),
    );
    assert!(output.status.success(), "{output:?}");
    let parsed: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("inst.json")).unwrap()).unwrap();
    // One duplicate row removed; zero entries floored.
    assert_eq!(parsed["actions"].as_array().unwrap().len(), 2);
    assert_eq!(parsed["means"][1][0], 1e-10);
}

#[test]
fn invalid_args_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    // grid:2 cannot satisfy validity.
    let output = ashte(
        &[
            "gen", "--hyps", "2", "--acts", "1", "--mode", "grid:2", "--seed", "1", "--out",
            "x.json",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(2), "{output:?}");

    // Run with a delta outside (0, 0.5).
    let output = ashte(
        &[
            "run", "--gen", "4x6:grid:8:1", "--policy", "random", "--delta", "0.6", "--reps",
            "5", "--seed", "1", "--out-csv", "t.csv",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(2), "{output:?}");
}

#[test]
fn run_emits_trial_csv_and_metrics_json() {
    let dir = tempfile::tempdir().unwrap();
    let output = ashte(
        &[
            "run",
            "--gen",
            "4x6:grid:8:3",
            "--policy",
            "random",
            "--policy",
            "fa-exp",
            "--delta",
            "0.1",
            "--reps",
            "25",
            "--seed",
            "9",
            "--threads",
            "2",
            "--out-csv",
            "trials.csv",
            "--out-metrics",
            "metrics.json",
        ],
        dir.path(),
    );
    assert!(output.status.success(), "{output:?}");
    let csv = std::fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "instance_id,policy,delta,rep,true_h,output_h,cost,steps,correct,seed"
    );
    assert_eq!(csv.lines().count(), 1 + 2 * 25);
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap())
            .unwrap();
    assert_eq!(metrics["groups"].as_array().unwrap().len(), 2);
    assert!(metrics["groups"][0]["confusion"].is_array());
}

#[test]
fn config_file_drives_run_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "instances": [ {"generate": {"hyps": 4, "acts": 6, "mode": "grid:8", "seed": 3}} ],
        "policies": [ {"kind": "random"} ],
        "deltas": [0.1],
        "replications": 10,
        "master_seed": 9,
        "threads": 1,
        "out_csv": "from_config.csv"
    });
    std::fs::write(
        dir.path().join("config.json"),
        serde_json::to_string_pretty(&config).unwrap(),
    )
    .unwrap();
    let output = ashte(&["run", "--config", "config.json"], dir.path());
    assert!(output.status.success(), "{output:?}");
    assert!(dir.path().join("from_config.csv").exists());

    // Flag overrides the config's CSV path.
    let output = ashte(
        &[
            "run",
            "--config",
            "config.json",
            "--out-csv",
            "flag_wins.csv",
        ],
        dir.path(),
    );
    assert!(output.status.success(), "{output:?}");
    assert!(dir.path().join("flag_wins.csv").exists());
}

#[test]
fn report_normalizes_against_the_reference() {
    let dir = tempfile::tempdir().unwrap();
    let output = ashte(
        &[
            "run", "--gen", "4x6:grid:8:3", "--policy", "random", "--policy", "fa-exp",
            "--delta", "0.2", "--delta", "0.1", "--reps", "20", "--seed", "4", "--out-csv",
            "trials.csv",
        ],
        dir.path(),
    );
    assert!(output.status.success(), "{output:?}");
    let output = ashte(
        &[
            "report",
            "--trials",
            "trials.csv",
            "--reference",
            "random",
            "--out",
            "plot.csv",
        ],
        dir.path(),
    );
    assert!(output.status.success(), "{output:?}");
    let plot = std::fs::read_to_string(dir.path().join("plot.csv")).unwrap();
    let mut lines = plot.lines();
    assert_eq!(lines.next().unwrap(), "policy,delta,accuracy,mean_cost,norm_cost");
    // The reference policy's largest mean cost maps to exactly 1.
    let max_ref_norm = plot
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("random,"))
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(max_ref_norm, 1.0);

    // Missing reference is a validation error.
    let output = ashte(
        &[
            "report",
            "--trials",
            "trials.csv",
            "--reference",
            "nj-pa",
            "--out",
            "plot2.csv",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(2), "{output:?}");
}

#[test]
fn capped_trials_surface_through_the_exit_code() {
    // Two hypotheses that are essentially indistinguishable: the trial hits
    // the non-termination guard and the run exits with code 4.
    let dir = tempfile::tempdir().unwrap();
    let inst = serde_json::json!({
        "family": "bernoulli",
        "hypotheses": ["h0", "h1"],
        "prior": [0.5, 0.5],
        "actions": ["a0"],
        "costs": [1.0],
        "means": [[0.5], [0.5000001]]
    });
    std::fs::write(
        dir.path().join("slow.json"),
        serde_json::to_string(&inst).unwrap(),
    )
    .unwrap();
    let output = ashte(
        &[
            "run", "--instance", "slow.json", "--policy", "random", "--delta", "0.05",
            "--reps", "1", "--seed", "1", "--out-csv", "t.csv",
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(4), "{output:?}");
}

#[test]
fn run_is_deterministic_for_fixed_flags() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["one.csv", "two.csv"] {
        let output = ashte(
            &[
                "run", "--gen", "4x6:grid:8:3", "--policy", "nj-adaptive", "--delta", "0.1",
                "--reps", "15", "--seed", "2", "--out-csv", out,
            ],
            dir.path(),
        );
        assert!(output.status.success(), "{output:?}");
    }
    let one = std::fs::read(dir.path().join("one.csv")).unwrap();
    let two = std::fs::read(dir.path().join("two.csv")).unwrap();
    assert_eq!(one, two);
}
