use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use sideband_cli::config::{DeviceFile, REFERENCE_DEVICE_TOML};
use sideband_cli::{run_path, validate_path, ExperimentKind, RunReport};
use sideband_core::io::Cell;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sideband"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn num(c: &Cell) -> f64 {
    match c {
        Cell::Num(x) => *x,
        Cell::Int(i) => *i as f64,
        Cell::Text(s) => panic!("expected a number, got {s:?}"),
    }
}

fn column(r: &RunReport, table: &str, col: &str) -> Vec<Cell> {
    let t = r.tables.iter().find(|t| t.name == table).unwrap_or_else(|| panic!("no table {table}"));
    t.column(col).unwrap_or_else(|| panic!("no column {col}")).into_iter().cloned().collect()
}

/// Every output file, with the wall-clock section of report.json removed.
fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        let name = p.file_name().unwrap().to_string_lossy().to_string();
        let mut bytes = std::fs::read(&p).unwrap();
        if name == "report.json" {
            let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
            v["metadata"].as_object_mut().unwrap().remove("timings");
            bytes = serde_json::to_vec(&v).unwrap();
        }
        out.insert(name, bytes);
    }
    out
}

#[test]
fn identical_config_and_seed_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "experiment = \"tomography\"\nseed = 11\noutput_dir = \"run\"\n[params]\ncutoff = 5\nstate = \"fock\"\nphotons = 2\n");
    let mut runs = vec![];
    for (k, workers) in ["1", "2"].iter().enumerate() {
        let st = bin().arg("run").arg(&cfg).env("SIDEBAND_WORKERS", workers).status().unwrap();
        assert!(st.success());
        let kept = dir.path().join(format!("run{k}"));
        std::fs::rename(dir.path().join("run"), &kept).unwrap();
        runs.push(outputs(&kept));
    }
    assert!(runs[0].contains_key("wigner.csv") && runs[0].contains_key("reconstruction.csv"));
    assert_eq!(runs[0], runs[1]);

    // A different seed changes the noisy data.
    let cfg = write_config(dir.path(), "c2.toml", "experiment = \"tomography\"\nseed = 12\noutput_dir = \"run2\"\n[params]\ncutoff = 5\nstate = \"fock\"\nphotons = 2\n");
    run_path(&cfg).unwrap();
    assert_ne!(outputs(&dir.path().join("run2"))["wigner.csv"], runs[0]["wigner.csv"]);
}

#[test]
fn config_errors_name_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("experiment = \"noon\"\noutput_dir = \"o\"\n[params]\nn_max = 2\nmodez = [2, 4]\n", &["line 5", "modez"][..]),
        ("experiment = \"fock_prep\"\noutput_dir = \"o\"\n[params]\nn_max = \"three\"\n", &["line 4", "n_max"][..]),
        ("experiment = \"fock_soup\"\noutput_dir = \"o\"\n", &["line 1", "fock_soup"][..]),
        ("experiment = \"reset\"\n", &["output_dir"][..]),
        ("experiment = \"reset\"\noutput_dir = \"o\"\nsystem = \"missing.toml\"\n", &["system", "missing.toml"][..]),
        ("schema_version = 9\nexperiment = \"reset\"\noutput_dir = \"o\"\n", &["schema_version"][..]),
    ];
    for (i, (text, needles)) in cases.iter().enumerate() {
        let p = write_config(dir.path(), &format!("bad{i}.toml"), text);
        let msg = format!("{:#}", validate_path(&p).unwrap_err());
        for n in *needles {
            assert!(msg.contains(n), "case {i}: {n:?} not in {msg}");
        }
        let out = bin().arg("validate").arg(&p).output().unwrap();
        assert!(!out.status.success());
    }
    write_config(dir.path(), "dev.toml", &REFERENCE_DEVICE_TOML.replace("t1_s = 55.83e-6", "t1_s = \"long\""));
    let p = write_config(dir.path(), "bad_dev.toml", "experiment = \"reset\"\noutput_dir = \"o\"\nsystem = \"dev.toml\"\n");
    let msg = format!("{:#}", validate_path(&p).unwrap_err());
    assert!(msg.contains("t1_s") && msg.contains("line"), "{msg}");
}

#[test]
fn worker_variable_must_be_a_positive_integer() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "c.toml", "experiment = \"law_eberly_compare\"\noutput_dir = \"o\"\n");
    let out = bin().arg("run").arg(&p).env("SIDEBAND_WORKERS", "many").output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("SIDEBAND_WORKERS"));
}

#[test]
fn exported_defaults_validate_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin().arg("export-defaults").arg(dir.path()).status().unwrap();
    assert!(st.success());
    let device = std::fs::read_to_string(dir.path().join("reference_device.toml")).unwrap();
    assert_eq!(device, REFERENCE_DEVICE_TOML);
    let reparsed = DeviceFile::parse(&toml::to_string(&DeviceFile::parse(&device).unwrap()).unwrap()).unwrap();
    assert_eq!(reparsed.to_params().unwrap(), DeviceFile::parse(&device).unwrap().to_params().unwrap());
    for kind in ExperimentKind::ALL {
        let p = dir.path().join(format!("{}.toml", kind.name()));
        let (cfg, warnings) = validate_path(&p).unwrap();
        assert_eq!(cfg.file.experiment, kind);
        assert!(warnings.is_empty(), "{kind}: {warnings:?}");
        // Explicit defaults and an empty [params] resolve identically.
        let bare = LoadedConfigExt::bare(kind, dir.path());
        assert_eq!(sideband_cli::experiments::check_params(&cfg).unwrap(), sideband_cli::experiments::check_params(&bare).unwrap());
    }
}

struct LoadedConfigExt;

impl LoadedConfigExt {
    fn bare(kind: ExperimentKind, base: &Path) -> sideband_cli::LoadedConfig {
        sideband_cli::LoadedConfig::from_str(&format!("experiment = \"{kind}\"\noutput_dir = \"o\"\n"), base).unwrap()
    }
}

#[test]
fn every_experiment_runs_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ExperimentKind::ALL {
        if matches!(kind, ExperimentKind::ErrorBudget | ExperimentKind::BinomialEncode) {
            continue; // covered below
        }
        let p = write_config(dir.path(), &format!("{kind}.toml"), &format!("experiment = \"{kind}\"\nseed = 3\noutput_dir = \"{kind}\"\n"));
        let r = run_path(&p).unwrap_or_else(|e| panic!("{kind}: {e:#}"));
        assert_eq!(r.schema_version, 1);
        assert_eq!(r.metadata.config_hash.len(), 64);
        for f in r.files.iter().chain(std::iter::once(&"report.json".to_string())) {
            assert!(dir.path().join(kind.name()).join(f).exists(), "{kind}: {f} missing");
        }
    }
}

#[test]
fn floquet_scan_without_drive_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "f.toml", "experiment = \"floquet_scan\"\noutput_dir = \"o\"\n[params]\nepsilon_hz = 0.0\npoints = 21\n");
    let r = run_path(&p).unwrap();
    for col in ["shift_f0_hz", "shift_g1_hz"] {
        let v: Vec<f64> = column(&r, "quasienergies", col).iter().map(num).collect();
        assert_eq!(v.len(), 21);
        assert!(v.iter().all(|x| x.abs() < 1e-3), "{col}: {v:?}");
    }
    assert!(!r.tables.iter().any(|t| t.name == "resonance_fit"));
}

#[test]
fn binomial_encode_reports_six_cardinals() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "b.toml", "experiment = \"binomial_encode\"\noutput_dir = \"o\"\n");
    let r = run_path(&p).unwrap();
    let labels: Vec<String> = column(&r, "cardinals", "state").iter().map(|c| c.to_string()).collect();
    assert_eq!(labels, ["+z", "-z", "+x", "-x", "+y", "-y"]);
    assert!(column(&r, "cardinals", "coherent_fidelity").iter().all(|c| num(c) > 0.999));
    assert!(column(&r, "cardinals", "excluded_fraction").iter().all(|c| (0.0..1.0).contains(&num(c))));
    assert!(dir.path().join("o/program.txt").exists());
}

fn budget(dir: &Path, extra: &str) -> Vec<(String, f64, f64)> {
    let p = write_config(dir, "e.toml", &format!("experiment = \"error_budget\"\noutput_dir = \"o\"\n[params]\n{extra}"));
    let r = run_path(&p).unwrap();
    let names = column(&r, "error_budget", "channels");
    let post = column(&r, "error_budget", "postselected_infidelity");
    let traced = column(&r, "error_budget", "traced_infidelity");
    names.iter().zip(&post).zip(&traced).map(|((n, p), t)| (n.to_string(), num(p), num(t))).collect()
}

#[test]
fn error_budget_has_the_five_channel_rows() {
    let dir = tempfile::tempdir().unwrap();
    let rows = budget(dir.path(), "");
    let names: Vec<&str> = rows.iter().map(|r| r.0.as_str()).collect();
    assert_eq!(names, ["none", "transmon decay", "transmon dephasing", "cavity decay", "all"]);
    assert!(rows[0].1 < 1e-3);
    assert!(rows[1..4].iter().all(|r| r.1 <= rows[4].1 && r.2 <= rows[4].2));
}

#[test]
fn error_budget_levels() {
    let dir = tempfile::tempdir().unwrap();
    let all = budget(dir.path(), "")[4].clone();
    let improved = budget(dir.path(), "transmon_t1_s = 500e-6\ntransmon_tphi_s = 200e-6\n")[4].clone();
    println!("all channels post-selected {:.4}; improved transmon traced fidelity {:.4}", all.1, 1.0 - improved.2);
    assert!((0.035..=0.045).contains(&all.1), "all-channels post-selected infidelity {:.4}", all.1);
    assert!(1.0 - improved.2 >= 0.99, "improved-transmon traced fidelity {:.4}", 1.0 - improved.2);
}
