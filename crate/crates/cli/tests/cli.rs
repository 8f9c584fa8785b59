use std::fs;
use std::path::Path;
use std::process::Command as Process;

use banditlab_cli::commands::COVERAGE_HEADER;
use banditlab_cli::{execute, load_config, Command, Format, Overrides, RunConfig, EXIT_CONFIG};

fn bin() -> Process {
    let mut p = Process::new(env!("CARGO_BIN_EXE_banditlab"));
    p.env_remove("BANDITLAB_SEED");
    p
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

fn quick(dir: &Path) -> Overrides {
    Overrides {
        out: Some(dir.to_path_buf()),
        reps: Some(30),
        ..Overrides::default()
    }
}

#[test]
fn minimal_config_gets_documented_defaults() {
    let cfg = RunConfig::from_json(r#"{"family": "t5"}"#, "inline").unwrap();
    let cfg = cfg
        .resolve(Command::Coverage, &Overrides::default(), None)
        .unwrap();
    assert_eq!(
        cfg.theta_star.as_deref(),
        Some(&[0.1, 0.1, 0.1, 0.0, 0.0, 0.0][..])
    );
    assert_eq!(cfg.clip, 0.01);
    assert_eq!(cfg.alpha, 0.1);
    assert_eq!(cfg.n_reps, Some(1000));
    assert_eq!(cfg.t_grid, vec![100, 316, 1000]);
    assert_eq!(cfg.master_seed, Some(0));
}

#[test]
fn unknown_keys_are_named() {
    let err = RunConfig::from_json("{\n  \"family\": \"t5\",\n  \"clipp\": 0.02\n}", "inline")
        .unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("clipp"), "{msg}");
    assert!(msg.starts_with("inline:3:"), "{msg}");
    assert_eq!(err.exit_code(), EXIT_CONFIG);
}

#[test]
fn every_violation_is_listed() {
    let cfg = RunConfig::from_json(
        r#"{"alpha": 1.5, "t_grid": [316, 100], "clip": 0.7}"#,
        "inline",
    )
    .unwrap();
    let err = cfg
        .resolve(Command::Coverage, &Overrides::default(), None)
        .unwrap_err();
    let msg = err.to_string();
    assert!(
        msg.contains("alpha") && msg.contains("t_grid") && msg.contains("clip"),
        "{msg}"
    );
}

#[test]
fn resolved_config_round_trips_through_json() {
    for command in [
        Command::Coverage,
        Command::Zstat,
        Command::Uniformity,
        Command::Evalpolicy,
    ] {
        let cfg = RunConfig::default()
            .resolve(command, &Overrides::default(), Some("17"))
            .unwrap();
        let back = RunConfig::from_json(&cfg.to_json(), "echo").unwrap();
        assert_eq!(back, cfg);
        assert_eq!(
            back.clone()
                .resolve(command, &Overrides::default(), None)
                .unwrap(),
            cfg
        );
    }
}

#[test]
fn seed_precedence() {
    let file = RunConfig::from_json(r#"{"master_seed": 5}"#, "inline").unwrap();
    let flag = Overrides {
        seed: Some(9),
        ..Overrides::default()
    };
    let resolve = |cfg: &RunConfig, o: &Overrides, env: Option<&str>| {
        cfg.clone()
            .resolve(Command::Coverage, o, env)
            .unwrap()
            .master_seed
    };
    assert_eq!(resolve(&file, &flag, Some("7")), Some(9));
    assert_eq!(resolve(&file, &Overrides::default(), Some("7")), Some(5));
    assert_eq!(
        resolve(&RunConfig::default(), &Overrides::default(), Some("7")),
        Some(7)
    );
    assert_eq!(
        resolve(&RunConfig::default(), &Overrides::default(), None),
        Some(0)
    );
    assert!(RunConfig::default()
        .resolve(Command::Coverage, &Overrides::default(), Some("x"))
        .is_err());
}

#[test]
fn full_scale_and_reps() {
    let full = Overrides {
        full_scale: true,
        ..Overrides::default()
    };
    let cfg = RunConfig::default()
        .resolve(Command::Coverage, &full, None)
        .unwrap();
    assert_eq!(cfg.n_reps, Some(5000));
    let both = Overrides {
        reps: Some(12),
        ..full
    };
    let cfg = RunConfig::default()
        .resolve(Command::Coverage, &both, None)
        .unwrap();
    assert_eq!(cfg.n_reps, Some(12));
}

#[test]
fn coverage_csv_schema_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let cfg = load_config(Command::Coverage, None, &quick(dir), None).unwrap();
        let report = execute(Command::Coverage, &cfg).unwrap();
        assert_eq!(report.exit_code, 0, "{:?}", report.failures);
    }
    let text = fs::read_to_string(a.path().join("coverage.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "experiment,family,policy,estimator,region,target,T,alpha,n_reps,coverage,coverage_se,\
         mean_volume,volume_se,mse,mse_se,calibrated,failures"
    );
    assert_eq!(header.split(',').count(), COVERAGE_HEADER.len());
    // 4 estimators × 2 targets × 3 horizons
    assert_eq!(text.lines().count(), 1 + 24);
    assert!(!text.contains('\r'));
    assert_eq!(
        text,
        fs::read_to_string(b.path().join("coverage.csv")).unwrap()
    );
}

#[test]
fn thread_count_does_not_change_output() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, threads) in [(a.path(), 1), (b.path(), 4)] {
        let o = Overrides {
            threads: Some(threads),
            ..quick(dir)
        };
        execute(
            Command::Coverage,
            &load_config(Command::Coverage, None, &o, None).unwrap(),
        )
        .unwrap();
    }
    assert_eq!(
        fs::read(a.path().join("coverage.csv")).unwrap(),
        fs::read(b.path().join("coverage.csv")).unwrap()
    );
}

#[test]
fn zstat_writes_two_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = Overrides {
        reps: Some(40),
        ..quick(dir.path())
    };
    execute(
        Command::Zstat,
        &load_config(Command::Zstat, None, &o, None).unwrap(),
    )
    .unwrap();
    let z = fs::read_to_string(dir.path().join("zstat.csv")).unwrap();
    let ks = fs::read_to_string(dir.path().join("ks.csv")).unwrap();
    assert!(z.starts_with("method,rep,value\n"));
    assert_eq!(z.lines().count(), 1 + 80);
    assert!(ks.starts_with("method,ks_distance\nols,"));
}

#[test]
fn two_arm_commands_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(
        dir.path(),
        r#"{"horizon": 120, "deltas": [0.0, 1.0], "n_pilot": 100}"#,
    );
    for command in [
        Command::Allocation,
        Command::Uniformity,
        Command::Evalpolicy,
    ] {
        let cfg = load_config(command, Some(&cfg_path), &quick(dir.path()), None).unwrap();
        let report = execute(command, &cfg).unwrap();
        assert_eq!(report.exit_code, 0, "{command:?}: {:?}", report.failures);
    }
    let hist = fs::read_to_string(dir.path().join("allocation_hist.csv")).unwrap();
    assert_eq!(hist.lines().count(), 1 + 50);
    let unif = fs::read_to_string(dir.path().join("uniformity.csv")).unwrap();
    assert!(unif.contains("\nts_hodges,") && unif.contains("\nuniform,"));
    let table = fs::read_to_string(dir.path().join("expected_pi.csv")).unwrap();
    let parsed = banditlab::evalpolicy::EvalPolicy::read_csv(table.as_bytes()).unwrap();
    assert!(parsed.eval_prob(120, 1).is_ok());
}

#[test]
fn json_format() {
    let dir = tempfile::tempdir().unwrap();
    let o = Overrides {
        format: Some(Format::Json),
        ..quick(dir.path())
    };
    execute(
        Command::Mse,
        &load_config(Command::Mse, None, &o, None).unwrap(),
    )
    .unwrap();
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("mse.json")).unwrap()).unwrap();
    assert_eq!(v["table"], "mse");
    assert_eq!(v["rows"].as_array().unwrap().len(), 24);
    assert!(v["failed"].is_null());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");

    let ok = bin()
        .args(["calibrate", "--reps", "20", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(out.join("calibration.csv").exists());

    let bad = write_config(dir.path(), r#"{"clipp": 0.1}"#);
    let res = bin()
        .args(["coverage", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("clipp"));

    let bad = write_config(dir.path(), r#"{"alpha": 1.5}"#);
    let res = bin()
        .args(["coverage", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));

    // one observation cannot fit six parameters
    let singular = write_config(dir.path(), r#"{"t_grid": [1], "estimators": ["ols"]}"#);
    let res = bin()
        .args(["coverage", "--reps", "5", "--config"])
        .arg(&singular)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));
    let text = fs::read_to_string(out.join("coverage.csv")).unwrap();
    assert!(text
        .lines()
        .last()
        .unwrap()
        .starts_with("FAILED,insufficient data"));

    let res = bin().args(["nonsense"]).output().unwrap();
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn env_seed_is_used_by_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: Option<&str>, name: &str| {
        let out = dir.path().join(name);
        let mut p = bin();
        if let Some(s) = seed {
            p.env("BANDITLAB_SEED", s);
        }
        let res = p
            .args(["allocation", "--reps", "10", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(res.status.success());
        fs::read_to_string(out.join("run.json")).unwrap()
    };
    assert!(run(Some("42"), "a").contains("\"master_seed\": 42"));
    assert!(run(None, "b").contains("\"master_seed\": 0"));
}
