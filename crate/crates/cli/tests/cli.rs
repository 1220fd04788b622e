use std::path::Path;
use std::process::Command;

fn labelbias(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_labelbias"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn reruns_are_bit_identical_and_carry_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("beta.json");
    write(
        &cfg,
        r#"{"replicates": 1, "betas": [0.0, 0.3], "n": 2000, "sampler": {"warmup": 1000, "draws": 1000}}"#,
    );
    let outs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let o = labelbias(&[
                "beta-sweep",
                "--config",
                cfg.to_str().unwrap(),
                "--seed",
                "9",
                "--out",
                out.to_str().unwrap(),
            ]);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            out
        })
        .collect();
    let a = read(&outs[0].join("beta_sweep.csv"));
    assert_eq!(a, read(&outs[1].join("beta_sweep.csv")));
    assert_eq!(read(&outs[0].join("config.json")), read(&outs[1].join("config.json")));

    let first = a.lines().next().unwrap();
    assert!(first.starts_with("# labelbias 0.1.0 seed=9 config_sha256="), "{first}");
    assert_eq!(first.rsplit('=').next().unwrap().len(), 64);
    assert_eq!(a.lines().nth(1).unwrap(), "replicate,seed,beta,model,metric,value");
    // 2 points x (3 regressions x 2 metrics + 2 leakage models x 3 metrics)
    assert_eq!(a.lines().count(), 2 + 2 * 12);
    let echoed = read(&outs[0].join("config.json"));
    assert!(echoed.contains("\"seed\": 9"));
    assert!(echoed.contains("\"eta\": 0.2"));
}

#[test]
fn different_seeds_change_the_output_and_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.json");
    write(&cfg, r#"{"n": 2000, "betas": [0.2], "gammas": [0.5], "raw_points": []}"#);
    let run = |seed: &str| {
        let out = dir.path().join(seed);
        let o = labelbias(&[
            "verify-props",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
        read(&out.join("props.csv"))
    };
    let (a, b) = (run("1"), run("2"));
    assert_ne!(a.lines().next(), b.lines().next());
    assert_ne!(a.lines().nth(2), b.lines().nth(2));
}

#[test]
fn verify_props_reports_skipped_points_and_fails_on_violations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("p.json");
    // γ = 0.95 with α = 0.3 and β = 0.5 has no valid standardization.
    write(
        &cfg,
        r#"{"n": 2000, "betas": [0.5], "gammas": [0.2, 0.95], "alpha": 0.3, "raw_points": []}"#,
    );
    let out = dir.path().join("ok");
    let o = labelbias(&["verify-props", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let csv = read(&out.join("props.csv"));
    let skipped: Vec<_> = csv.lines().filter(|l| l.contains(",skipped,")).collect();
    assert_eq!(skipped.len(), 1);
    assert!(skipped[0].contains("negative"));

    // A zero tolerance must fail and exit nonzero.
    write(&cfg, r#"{"n": 2000, "betas": [0.3], "gammas": [0.5], "se_multiplier": 1e-9}"#);
    let out = dir.path().join("bad");
    let o = labelbias(&["verify-props", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(read(&out.join("props.csv")).contains(",fail,"));
}

#[test]
fn calibrated_spec_round_trips_into_diabetes() {
    let dir = tempfile::tempdir().unwrap();
    let cal = dir.path().join("cal");
    let cfg = dir.path().join("cal.json");
    write(&cfg, r#"{"simulate_n": 0}"#);
    let o = labelbias(&["calibrate", "--config", cfg.to_str().unwrap(), "--out", cal.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("base alpha -1.81529"), "{stdout}");

    let dcfg = dir.path().join("d.json");
    write(
        &dcfg,
        r#"{"synthetic": {"n": 4000}, "calibration_bins": 5, "sampler": {"warmup": 500, "draws": 500}}"#,
    );
    let out = dir.path().join("dia");
    let spec = cal.join("spec.json");
    let o = labelbias(&[
        "diabetes",
        "--config",
        dcfg.to_str().unwrap(),
        "--synthetic",
        "--spec",
        spec.to_str().unwrap(),
        "--threshold",
        "0.3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&out.join("spec.json")), read(&spec));

    let table = read(&out.join("table.csv"));
    let lines: Vec<_> = table.lines().collect();
    assert!(lines[0].starts_with("# labelbias"));
    assert_eq!(lines[1], "metric,simple,complex,threshold,oracle");
    let names: Vec<_> = lines[2..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["log_score", "brier_score", "mse_prob_vs_label", "accuracy", "ppv", "npv"]);

    let calib = read(&out.join("calibration.csv"));
    assert_eq!(calib.lines().nth(1).unwrap(), "model,group,bin,mean_predicted,observed_rate,count");
    for group in ["insured", "uninsured"] {
        assert!(calib.lines().any(|l| l.starts_with(&format!("threshold,{group},"))));
    }
    let preds = read(&out.join("predictions.csv"));
    assert_eq!(preds.lines().count(), 2 + 4000);
    let posterior = read(&out.join("posterior.csv"));
    assert_eq!(
        posterior.lines().nth(1).unwrap(),
        "chain,iteration,intercept,z1,z2,uninsured"
    );
    let summary: serde_json::Value = serde_json::from_str(&read(&out.join("summary.json"))).unwrap();
    assert_eq!(summary["labels"], "truth");
    assert_eq!(summary["models"]["threshold"]["decision_threshold"], 0.3);
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    write(&cfg, r#"{"betas": [0.0, 1.5]}"#);
    let o = labelbias(&["beta-sweep", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("beta = 1.5"));

    write(&cfg, r#"{"unknown_field": 1}"#);
    let o = labelbias(&["calibrate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let o = labelbias(&["misspec-sweep", "--mode", "sideways"]);
    assert!(!o.status.success());
}
