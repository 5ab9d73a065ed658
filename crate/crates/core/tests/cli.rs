//! The `smj` binary on the shipped configs.

use std::path::PathBuf;
use std::process::Command;

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn smj(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_smj"))
        .args(args)
        .env("SMJ_THREADS", "1")
        .output()
        .expect("binary runs")
}

#[test]
fn shipped_configs_parse_and_validate() {
    for entry in std::fs::read_dir(config("")).unwrap() {
        let path = entry.unwrap().path();
        let cfg = smj::config::RunConfig::load(&path).unwrap();
        cfg.family().unwrap();
        cfg.payments().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = smj(&["validate", "--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        assert!(dir.path().join("config_echo.toml").exists());
    }
}

#[test]
fn transition_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = smj(&[
        "transition",
        "--config",
        config("two_state.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--gamma",
        "10,20",
        "--mode",
        "unconditional",
        "--time",
        "0.25",
        "--dump-pi",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for g in ["10", "20"] {
        assert!(dir.path().join(format!("transition_g{g}_unconditional.csv")).exists());
        assert!(dir.path().join(format!("pi_g{g}_unconditional.csv")).exists());
    }
    assert!(!dir.path().join("transition_g30_unconditional.csv").exists());
}

#[test]
fn reserve_with_mc_on_two_state() {
    let dir = tempfile::tempdir().unwrap();
    let out = smj(&[
        "reserve",
        "--config",
        config("two_state.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--with-mc",
        "--seeds",
        "9",
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("premium.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    for rec in rdr.records() {
        let c: f64 = rec.unwrap()[2].parse().unwrap();
        assert!((c - 1.0).abs() < 1e-9, "{c}");
    }
    assert!(dir.path().join("mc_reserve.csv").exists());
}

#[test]
fn unknown_key_fails_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(config("two_state.toml")).unwrap().replace("horizon = 1.0", "horizon = 1.0\nhorizn = 2.0");
    std::fs::write(&bad, text).unwrap();
    let out = smj(&["cashflow", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line") && err.contains("horizn"), "{err}");
}

#[test]
fn rate_below_bound_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = smj(&[
        "cashflow",
        "--config",
        config("zero_payments.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--gamma",
        "4",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("uniformization rate too small"));
}

#[test]
fn zero_payments_cashflow_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = smj(&[
        "cashflow",
        "--config",
        config("zero_payments.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--gamma",
        "10",
        "--mode",
        "unconditional",
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("cashflow_g10_unconditional.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    for rec in rdr.records() {
        assert_eq!(rec.unwrap()[2].parse::<f64>().unwrap(), 0.0);
    }
}
