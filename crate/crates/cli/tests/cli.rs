use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn freegas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freegas")).args(args).output().expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(freegas(&[]).status.code(), Some(2));
    assert_eq!(freegas(&["fermibox", "--bogus"]).status.code(), Some(2));
    assert_eq!(freegas(&["teleport"]).status.code(), Some(2));
    assert_eq!(freegas(&["fermibox", "--N", "ten"]).status.code(), Some(2));
    let tmp = tempfile::tempdir().unwrap();
    let o = freegas(&["fermibox", "--L", "5", "--out", &out_arg(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--L"));
    let o = freegas(&["bosonquench", "--gamma", "-1", "--out", &out_arg(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    let o = freegas(&["fermibox", "--scan-N", "9:3", "--out", &out_arg(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!tmp.path().join("manifest.json").exists());
}

#[test]
fn config_errors_name_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# box run\nN = 5\nmass = 2\n").unwrap();
    let o = freegas(&["fermibox", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.cfg:3:"), "{}", stderr(&o));
    fs::write(&cfg, "N = 5\nsamples = 64\nN = 6\n").unwrap();
    let o = freegas(&["fermibox", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.cfg:3:") && stderr(&o).contains("duplicate"));
}

#[test]
fn flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    let out = tmp.path().join("out");
    fs::write(&cfg, format!("N = 20\nsamples = 64\nout = {}\n", out.display())).unwrap();
    let o = freegas(&["fermibox", "--config", cfg.to_str().unwrap(), "--N", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = manifest(&out);
    assert_eq!(m["params"]["N"], 4);
    assert_eq!(m["params"]["samples"], 64);
    let csv = fs::read_to_string(out.join("fermibox.csv")).unwrap();
    assert_eq!(csv.lines().count(), 65);
}

#[test]
fn reruns_and_replays_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    let args = ["lattice", "--L", "11", "--samples", "64", "--seed", "9"];
    for dir in [&a, &b] {
        let mut v: Vec<&str> = args.to_vec();
        let d = out_arg(dir);
        v.extend(["--out", &d]);
        assert_eq!(freegas(&v).status.code(), Some(0));
    }
    let replay = freegas(&["lattice", "--config", a.join("manifest.json").to_str().unwrap(), "--out", &out_arg(&c)]);
    assert_eq!(replay.status.code(), Some(0), "{}", stderr(&replay));
    for name in ["lattice_density.csv", "lattice_correlator.csv", "summary.txt"] {
        let x = fs::read(a.join(name)).unwrap();
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name}");
        assert_eq!(x, fs::read(c.join(name)).unwrap(), "{name}");
    }
    assert_eq!(manifest(&a)["outputs"], manifest(&c)["outputs"]);
}

#[test]
fn manifest_hashes_match_files() {
    let tmp = tempfile::tempdir().unwrap();
    let o = freegas(&["bosonquench", "--gamma", "2", "--gamma", "6", "--samples", "128", "--out", &out_arg(tmp.path())]);
    assert_eq!(o.status.code(), Some(0));
    let m = manifest(tmp.path());
    assert_eq!(m["subcommand"], "bosonquench");
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert!(m["wall_time_secs"].as_f64().unwrap() >= 0.0);
    let outputs = m["outputs"].as_array().unwrap();
    let names: Vec<&str> = outputs.iter().map(|f| f["path"].as_str().unwrap()).collect();
    assert_eq!(names, ["bosonquench_gamma_2.csv", "bosonquench_gamma_6.csv", "summary.txt"]);
    for f in outputs {
        let bytes = fs::read(tmp.path().join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
    }
}

#[test]
fn csv_headers_and_number_format() {
    let tmp = tempfile::tempdir().unwrap();
    let series = tmp.path().join("series");
    let scan = tmp.path().join("scan");
    assert_eq!(freegas(&["fermibox", "--N", "3", "--samples", "16", "--out", &out_arg(&series)]).status.code(), Some(0));
    assert_eq!(freegas(&["fermibox", "--scan-N", "2:6:2", "--out", &out_arg(&scan)]).status.code(), Some(0));
    let csv = fs::read_to_string(series.join("fermibox.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,value"));
    for line in lines {
        for field in line.split(',') {
            let mantissa = field.trim_start_matches('-').split('e').next().unwrap();
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{field}");
            field.parse::<f64>().unwrap();
        }
    }
    let csv = fs::read_to_string(scan.join("fermibox_scan.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "N,meanD");
    let ns: Vec<&str> = rows[1..].iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(ns, ["2", "4", "6"]);
    let summary = fs::read_to_string(scan.join("summary.txt")).unwrap();
    assert!(summary.contains("fitted exponent"));
}

#[test]
fn bounds_run_writes_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let o = freegas(&["bounds", "--N", "3", "--L", "15", "--out", &out_arg(tmp.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in ["bounds_box.csv", "bounds_box_bound.csv", "bounds_ring.csv", "bounds_ring_bound.csv"] {
        let csv = fs::read_to_string(tmp.path().join(name)).unwrap();
        assert_eq!(csv.lines().count(), 4, "{name}");
    }
}

#[test]
fn verify_passes_on_a_small_suite() {
    let tmp = tempfile::tempdir().unwrap();
    let o = freegas(&["verify", "--samples", "12", "--seed", "5", "--out", &out_arg(tmp.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = fs::read_to_string(tmp.path().join("summary.txt")).unwrap();
    assert!(summary.contains("verify: PASS"));
    assert!(!tmp.path().join("verify_failure.json").exists());
}

#[test]
fn verify_failure_is_serialized() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["freegas", "verify", "--samples", "3", "--out", tmp.path().to_str().unwrap()];
    let tol = freegas_cli::verify::Tolerances { reduction: -1.0, ..Default::default() };
    assert_eq!(freegas_cli::run_with(args, tol), 1);
    let failure: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("verify_failure.json")).unwrap()).unwrap();
    assert_eq!(failure["check"], "reduction");
    assert_eq!(failure["index"], 0);
    assert_eq!(failure["seed"], 42);
    let m = manifest(tmp.path());
    assert!(m["outputs"].as_array().unwrap().iter().any(|f| f["path"] == "verify_failure.json"));
}
