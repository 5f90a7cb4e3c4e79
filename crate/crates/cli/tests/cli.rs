use std::path::{Path, PathBuf};
use std::process::Command;

use oscint_cli::config::ExperimentConfig;
use oscint_cli::{EXIT_CONFIG, EXIT_OK};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn oscint(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_oscint"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("OSCINT_THREADS")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn every_example_config_parses() {
    let mut n = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let cfg =
                ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(!cfg.id().is_empty());
            n += 1;
        }
    }
    assert!(n >= 10, "only {n} configs");
}

#[test]
fn schema_rejects_unknown_and_missing_fields() {
    let bad = [
        r#"{"experiment": "selfcheck", "colour": 1}"#,
        r#"{"experiment": "launch"}"#,
        r#"{"experiment": "sweep", "lambda_grid": [1, 2, 3]}"#,
        r#"{"experiment": "selfcheck", "seed": -1}"#,
        r#"{"experiment": "selfcheck", "selfcheck": {"adjoint_pairs": 0}}"#,
        r#"not json"#,
    ];
    for text in bad {
        let err = ExperimentConfig::from_json(text).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_CONFIG, "{text}");
    }
    let ok = ExperimentConfig::from_json(r#"{"experiment": "selfcheck"}"#).unwrap();
    assert_eq!(ok.seed, 0);
}

#[test]
fn lambda_grid_forms_agree() {
    let a = ExperimentConfig::from_json(r#"{"experiment": "selfcheck", "lambda_grid": [2, 4, 8]}"#)
        .unwrap();
    let b = ExperimentConfig::from_json(
        r#"{"experiment": "selfcheck", "lambda_grid": {"start": 2, "ratio": 2, "count": 3}}"#,
    )
    .unwrap();
    assert_eq!(a.lambdas().unwrap(), vec![2.0, 4.0, 8.0]);
    assert_eq!(b.lambdas().unwrap(), a.lambdas().unwrap());
    let c = ExperimentConfig::from_json(r#"{"experiment": "selfcheck", "lambda_grid": [4, 2]}"#)
        .unwrap();
    assert_eq!(c.lambdas().unwrap_err().exit_code(), EXIT_CONFIG);
}

#[test]
fn selfcheck_writes_outputs_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("selfcheck.json");
    let out = oscint(
        &["selfcheck", "--config", cfg.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(EXIT_OK),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in ["results.csv", "timings.csv", "summary.json"] {
        assert!(tmp.path().join(f).exists(), "{f} missing");
    }
    let csv = std::fs::read_to_string(tmp.path().join("results.csv")).unwrap();
    assert!(csv.starts_with("experiment,quantity,lambda,value,method,iterations,residual\n"));
    assert!(!csv.contains("wall"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["passed"], true);
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let few = configs_dir().join("sweep_too_few_lambdas.json");
    let out = oscint(&["sweep", "--config", few.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 3"));
    assert!(!tmp.path().join("results.csv").exists());

    let self_cfg = configs_dir().join("selfcheck.json");
    let out = oscint(
        &["sweep", "--config", self_cfg.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));

    let out = Command::new(env!("CARGO_BIN_EXE_oscint"))
        .args(["selfcheck", "--config", self_cfg.to_str().unwrap(), "--out"])
        .arg(tmp.path())
        .env("OSCINT_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));

    let unresolved = write_config(
        tmp.path(),
        r#"{"experiment": "norm", "lambda_grid": [500],
            "operator": {"kernel": {"ambient_dim": 2, "exponent": 0.5}, "phase": {"kind": "linear"},
                         "geometry": {"kind": "flat", "restricted": true},
                         "source": {"lo": [-1], "hi": [1]}, "target": {"lo": [-1], "hi": [1]},
                         "grid": {"points_per_axis": 16}}}"#,
    );
    let out = oscint(
        &["norm", "--config", unresolved.to_str().unwrap()],
        &tmp.path().join("o"),
    );
    assert_eq!(
        out.status.code(),
        Some(EXIT_CONFIG),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let missing = tmp.path().join("nope.json");
    let out = oscint(&["norm", "--config", missing.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn zero_amplitude_norm_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("norm_zero_amplitude.json");
    let out = oscint(&["norm", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(
        out.status.code(),
        Some(EXIT_OK),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut rd = csv::Reader::from_path(tmp.path().join("results.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][3].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"experiment": "norm", "seed": 1, "lambda_grid": [4],
            "operator": {"kernel": {"ambient_dim": 2, "exponent": 0.5}, "phase": {"kind": "linear"},
                         "geometry": {"kind": "flat", "restricted": true},
                         "source": {"lo": [-1], "hi": [1]}, "target": {"lo": [-1], "hi": [1]},
                         "grid": {"points_per_axis": 24}},
            "tolerances": {"power_tol": 1e-3}}"#,
    );
    let run = |seed: &str, dir: &str| {
        let d = tmp.path().join(dir);
        let out = oscint(
            &["norm", "--config", cfg.to_str().unwrap(), "--seed", seed],
            &d,
        );
        assert_eq!(out.status.code(), Some(EXIT_OK));
        std::fs::read(d.join("results.csv")).unwrap()
    };
    assert_eq!(run("1", "a"), run("1", "b"));
    assert_ne!(run("1", "a"), run("2", "c"));
}
