use std::path::Path;
use std::process::{Command, Output};

use sedd_pcc::cloud::{save_ply, PlyFormat};
use sedd_pcc::codec::ModelParams;
use sedd_pcc::PointCloud;
use tempfile::TempDir;

fn sedd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sedd"))
        .args(args)
        .env_remove("SEDD_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn sedd")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&o.stdout)))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen(dir: &Path, n: usize) {
    let o = sedd(&["gen", "--n", &n.to_string(), "--out", p(dir), "--seed", "11", "--extent-min", "8", "--extent-max", "10"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

fn shifted_pair(dir: &Path) -> (String, String) {
    let coords: Vec<_> = (0..30).map(|i| [i * 20, (i * 7) % 512, 300]).collect();
    let colors = coords.iter().map(|_| [0.2, 0.4, 0.6]).collect();
    let a = PointCloud::new(coords, colors, 10).unwrap();
    let mut b = a.clone();
    b.coords.iter_mut().for_each(|c| c[0] += 1);
    let (pa, pb) = (dir.join("a.ply"), dir.join("b.ply"));
    save_ply(&a, &pa, PlyFormat::Ascii).unwrap();
    save_ply(&b, &pb, PlyFormat::BinaryLittleEndian).unwrap();
    (p(&pa).to_owned(), p(&pb).to_owned())
}

#[test]
fn unknown_flags_exit_two() {
    let o = sedd(&["eval", "--bogus", "1"]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&sedd(&["frobnicate"])), 2);
    assert_eq!(code(&sedd(&["train", "--stage", "4", "--data", "x", "--out", "y"])), 2);
}

#[test]
fn eval_reports_cap_and_unit_shift() {
    let dir = TempDir::new().unwrap();
    let (a, b) = shifted_pair(dir.path());
    let same = stdout_json(&sedd(&["eval", "--ref", &a, "--rec", &a, "--depth", "10"]));
    assert_eq!(same["d1_psnr"].as_f64(), Some(999.99));
    assert_eq!(same["y_psnr"].as_f64(), Some(999.99));
    let o = sedd(&["eval", "--ref", &a, "--rec", &b, "--depth", "10"]);
    assert_eq!(code(&o), 0);
    let d1 = stdout_json(&o)["d1_psnr"].as_f64().unwrap();
    assert!((d1 - 64.97).abs() < 0.01, "{d1}");
}

#[test]
fn every_run_prints_a_repro_line() {
    let dir = TempDir::new().unwrap();
    let (a, _) = shifted_pair(dir.path());
    let o = sedd(&["eval", "--ref", &a, "--rec", &a, "--depth", "10"]);
    let err = String::from_utf8_lossy(&o.stderr);
    let line = err.lines().find(|l| l.starts_with("sedd ")).expect("repro line");
    assert!(line.contains("cmd=eval") && line.contains("seed=") && line.contains("config="), "{line}");
}

#[test]
fn missing_files_are_usage_errors() {
    let o = sedd(&["eval", "--ref", "/nonexistent/a.ply", "--rec", "/nonexistent/b.ply", "--depth", "6"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn stage_dependencies_are_enforced() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    gen(&data, 2);
    let s1 = dir.path().join("s1.ckpt");
    ModelParams::new_student(sedd_pcc::codec::ArchConfig::tiny(), 1).unwrap().save(&s1).unwrap();
    let out = dir.path().join("s2.ckpt");
    let o = sedd(&["train", "--stage", "2", "--data", p(&data), "--init", p(&s1), "--out", p(&out)]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("teacher"));
    let o = sedd(&["train", "--stage", "2", "--data", p(&data), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    let o = sedd(&["train", "--stage", "3", "--data", p(&data), "--init", p(&s1), "--out", p(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn stage_one_smoke_run_logs_two_epochs() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    gen(&data, 20);
    let cfg = dir.path().join("s1.json");
    std::fs::write(&cfg, r#"{"stage": 1, "epochs": 2, "seed": 3, "lr": {"initial": 0.001, "halve_every": 20, "floor": 0.0002}}"#).unwrap();
    let out = dir.path().join("s1.ckpt");
    let o = sedd(&["train", "--stage", "1", "--config", p(&cfg), "--data", p(&data), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = stdout_json(&o);
    assert_eq!(summary["steps"].as_u64(), Some(40));
    let log = std::fs::read_to_string(dir.path().join("s1.ckpt.csv")).unwrap();
    let mut rows = csv::Reader::from_reader(log.as_bytes());
    let epochs: Vec<String> = rows.records().map(|r| r.unwrap()[0].to_owned()).collect();
    assert_eq!(epochs, ["0", "1"]);
    assert!(ModelParams::load(&out).is_ok());
}

#[test]
fn encode_decode_and_flag_mismatch() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    gen(&data, 1);
    let ply = std::fs::read_dir(&data)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|x| x.extension().is_some_and(|e| e == "ply"))
        .unwrap();
    let arch = sedd_pcc::codec::ArchConfig::tiny();
    let with = dir.path().join("with.ckpt");
    ModelParams::new_student(arch.clone(), 2).unwrap().save(&with).unwrap();
    let without = dir.path().join("without.ckpt");
    ModelParams::new_student(sedd_pcc::codec::ArchConfig { transform: false, ..arch }, 2).unwrap().save(&without).unwrap();

    let bits = dir.path().join("c.sedd");
    let o = sedd(&["encode", "--model", p(&with), "--in", p(&ply), "--out", p(&bits)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = stdout_json(&o);
    let bytes = std::fs::metadata(&bits).unwrap().len() as f64;
    let points = report["points"].as_f64().unwrap();
    assert_eq!(report["total_bytes"].as_f64(), Some(bytes));
    assert!((report["bpp"].as_f64().unwrap() - bytes * 8.0 / points).abs() < 1e-12);
    assert!(report["octree_bits"].is_number() && report["feature_bits"].is_number());

    let rec = dir.path().join("rec.ply");
    let o = sedd(&["decode", "--model", p(&with), "--in", p(&bits), "--out", p(&rec)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let decoded = sedd_pcc::cloud::load_ply(&rec).unwrap();
    assert_eq!(decoded.len() as f64, points);

    let o = sedd(&["decode", "--model", p(&without), "--in", p(&bits), "--out", p(&rec)]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bdrate_of_a_curve_against_itself_is_zero() {
    let dir = TempDir::new().unwrap();
    let rows: Vec<_> = (0..4)
        .map(|i| sedd_pcc::metrics::RdPoint { label: format!("m{i}"), bpp: 0.1 * 2f64.powi(i), d1_psnr: 30.0 + 3.0 * i as f64, y_psnr: 20.0 + 2.0 * i as f64 })
        .collect();
    let a = dir.path().join("a.csv");
    sedd_pcc::metrics::write_rd_csv(&rows, &a).unwrap();
    let doubled: Vec<_> = rows.iter().map(|r| sedd_pcc::metrics::RdPoint { bpp: r.bpp * 2.0, ..r.clone() }).collect();
    let b = dir.path().join("b.csv");
    sedd_pcc::metrics::write_rd_csv(&doubled, &b).unwrap();

    let same = stdout_json(&sedd(&["bdrate", "--anchor", p(&a), "--test", p(&a)]));
    assert_eq!(same["bdbr_d1"].as_f64(), Some(0.0));
    assert_eq!(same["bdbr_y"].as_f64(), Some(0.0));
    let dbl = stdout_json(&sedd(&["bdrate", "--anchor", p(&a), "--test", p(&b)]));
    assert!((dbl["bdbr_d1"].as_f64().unwrap() - 100.0).abs() < 0.1, "{dbl}");
}
