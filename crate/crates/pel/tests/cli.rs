use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pel::config::SCHEMA;
use pel::report::Status;
use pel::MetricReport;
use pel_core::Rng;
use tempfile::TempDir;

fn pel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pel"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn report(dir: &Path) -> MetricReport {
    MetricReport::from_json(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn run_config(cmd: &str, config: &str, out: &Path) -> Output {
    pel(&[cmd, "--config", config, "--out", out.to_str().unwrap(), "--quiet"])
}

#[test]
fn schema_and_worlds_list() {
    let o = pel(&["print-config-schema"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    for k in SCHEMA {
        assert!(text.contains(&format!("{} = {}", k.name, k.default)), "{}", k.name);
    }
    let o = pel(&["list-worlds"]);
    assert_eq!(code(&o), 0);
    for w in ["rotation", "bernoulli_uv", "six_nine"] {
        assert!(stdout(&o).contains(w));
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&pel(&["run"])), 2);
    assert_eq!(code(&pel(&["run", "--config", "no_such_config"])), 2);
    assert_eq!(code(&pel(&["frobnicate"])), 2);
}

#[test]
fn bad_config_reports_line_and_exits_2() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.conf");
    fs::write(&path, "seed = 1\nencoder.dimm = 3\n").unwrap();
    let o = run_config("run", path.to_str().unwrap(), &dir.path().join("out"));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    assert!(stderr(&o).contains("encoder.dimm"));
}

#[test]
fn theory_scenarios_match_expectations() {
    for (name, expect_pass) in [
        ("orthogonality_rotation", true),
        ("over_invariance_bernoulli", false),
        ("merged_orbits", false),
    ] {
        let dir = TempDir::new().unwrap();
        let o = run_config("verify-theory", name, dir.path());
        assert_eq!(code(&o), 0, "{name}: {}{}", stdout(&o), stderr(&o));
        assert!(!stdout(&o).contains("UNEXPECTED"));
        let r = report(dir.path());
        assert!(r.verdicts_as_expected());
        let ortho = r.theory.iter().find(|v| v.name.starts_with("orthogonality")).unwrap();
        assert_eq!(ortho.pass, expect_pass, "{name}");
        if !expect_pass {
            assert!(ortho.diagnostic("risk_increase").unwrap() >= 0.1, "{name}");
        }
    }
}

#[test]
fn bernoulli_counterexample_run_is_deterministic() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for d in [&a, &b] {
        let o = run_config("run", "bernoulli_counterexample", d.path());
        assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    }
    let r = report(a.path());
    let risk = r.metric("bayes_risk").unwrap();
    for (k, want) in [("zero_one_full", 0.0), ("zero_one_good", 0.0), ("zero_one_bad", 0.5)] {
        assert!((risk.get(k).unwrap() - want).abs() <= 1e-12, "{k}");
    }
    for (k, want) in [("log_bits_full", 0.0), ("log_bits_good", 0.0), ("log_bits_bad", 1.0)] {
        assert!((risk.get(k).unwrap() - want).abs() <= 1e-12, "{k}");
    }
    for f in ["report.json", "trainlog.csv", "params.txt", "embeddings.csv"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let c = TempDir::new().unwrap();
    let o = pel(&[
        "run",
        "--config",
        "bernoulli_counterexample",
        "--out",
        c.path().to_str().unwrap(),
        "--seed",
        "9",
        "--quiet",
    ]);
    assert_eq!(code(&o), 0);
    let r9 = report(c.path());
    assert_eq!(r9.seed, 9);
    assert_ne!(r9.config_hash, r.config_hash);
    assert_ne!(
        fs::read(c.path().join("params.txt")).unwrap(),
        fs::read(a.path().join("params.txt")).unwrap()
    );
}

#[test]
fn rotation_training_halves_the_curve() {
    let dir = TempDir::new().unwrap();
    let o = run_config("run", "rotation_pel", dir.path());
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let r = report(dir.path());
    let before = r.curves["invariance_before"].auc.as_f64().unwrap();
    let after = r.curves["invariance_after"].auc.as_f64().unwrap();
    assert!(after <= 0.5 * before, "{after} vs {before}");
    for f in [
        "curve_before.csv",
        "curve_after.csv",
        "invariance_curve.svg",
        "loss.svg",
        "trainlog.csv",
    ] {
        let text = fs::read_to_string(dir.path().join(f)).unwrap();
        assert!(text.contains(&r.config_hash), "{f} lacks provenance");
    }
}

/// Writes `z_0, z_1, v` rows. `z_0` copies `v` when `leak` is set and is
/// noise otherwise.
fn codes_csv(path: &Path, n: usize, leak: bool, with_t: bool) {
    let mut rng = Rng::new(42);
    let mut s = String::from(if with_t { "z_0,z_1,t,v\n" } else { "z_0,z_1,v\n" });
    for _ in 0..n {
        let v = rng.below(2);
        let z0 = if leak { v as f64 } else { rng.normal() };
        let z1 = rng.normal();
        if with_t {
            s.push_str(&format!("{z0},{z1},{},{v}\n", rng.normal()));
        } else {
            s.push_str(&format!("{z0},{z1},{v}\n"));
        }
    }
    fs::write(path, s).unwrap();
}

fn certify(csv: &Path, out: &Path) -> Output {
    pel(&[
        "certify",
        "--embeddings",
        csv.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ])
}

#[test]
fn certify_detects_a_copied_nuisance() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("codes.csv");
    codes_csv(&csv, 4000, true, false);
    let o = certify(&csv, &dir.path().join("out"));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report(&dir.path().join("out"));
    assert!((r.metric("nmi").unwrap().get("normalized_mi").unwrap() - 1.0).abs() < 1e-9);
    assert!(r.metric("leakage").unwrap().get("auc").unwrap() >= 0.99);
}

#[test]
fn certify_sees_no_leak_in_independent_codes() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("codes.csv");
    codes_csv(&csv, 4000, false, true);
    let o = certify(&csv, &dir.path().join("out"));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = report(&dir.path().join("out"));
    assert!(r.metric("nmi").unwrap().get("normalized_mi").unwrap() <= 0.05);
    let auc = r.metric("leakage").unwrap().get("auc").unwrap();
    assert!((auc - 0.5).abs() <= 0.05, "{auc}");
}

#[test]
fn certify_marks_missing_columns_not_applicable() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("codes.csv");
    codes_csv(&csv, 500, false, false);
    let o = certify(&csv, &dir.path().join("out"));
    assert_eq!(code(&o), 0);
    let r = report(&dir.path().join("out"));
    for m in ["sufficiency", "curve", "probe", "fisher"] {
        assert_eq!(r.metric(m).unwrap().status, Status::NotApplicable, "{m}");
    }
    assert_eq!(r.metric("geometry").unwrap().status, Status::Ok);
}

#[test]
fn certify_rejects_malformed_rows() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("codes.csv");
    fs::write(&csv, "z_0,z_1,v\n1,2,0\n3,x,1\n").unwrap();
    let o = certify(&csv, &dir.path().join("out"));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("row 3, column 2"), "{}", stderr(&o));
    let o = pel(&["certify", "--embeddings", csv.to_str().unwrap(), "--nuisance", "w"]);
    assert_eq!(code(&o), 2);
}
