use filica_cli::config::ExperimentConfig;
use filica_cli::runner::run_experiment;
use filica_core::matrixio::{read_json_file, read_summary_csv, save_dataset};
use filica_core::simgen::gen_replicate;
use filica_core::{Method, Setting};
use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_filica"))
}

fn small_config(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        settings: vec![Setting::Mcar],
        missing_pcts: vec![0.05],
        n_replicates: 1,
        methods: vec![Method::Oracle],
        base_seed: 11,
        out_dir: out.to_path_buf(),
        ..Default::default()
    }
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> std::path::PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

#[test]
fn smallest_run_through_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), &small_config(&out));
    let status = bin().arg("run").arg("--config").arg(&cfg).status().unwrap();
    assert_eq!(status.code(), Some(0));

    let jsons: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| {
            let n = e.file_name().into_string().unwrap();
            n.starts_with("replicate_") && n.ends_with(".json")
        })
        .collect();
    assert_eq!(jsons.len(), 1);

    let rows = read_summary_csv(&out.join("summary.csv")).unwrap();
    let corr: Vec<f64> = rows
        .iter()
        .filter(|r| r.metric.ends_with("abs_corr"))
        .map(|r| r.value)
        .collect();
    assert_eq!(corr.len(), 4);
    assert!(corr.iter().all(|&c| c > 0.9), "{corr:?}");
    assert!(out.join("aggregates.csv").exists());
    assert!(out.join("boxplot_mcar_h_abs_corr.svg").exists());
}

#[test]
fn resume_skips_finished_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(tmp.path());
    cfg.methods = vec![Method::Oracle, Method::Completer];
    let first = run_experiment(&cfg, false).unwrap();
    assert_eq!((first.computed, first.reused), (2, 0));
    let summary_a = fs::read(tmp.path().join("summary.csv")).unwrap();

    let again = run_experiment(&cfg, true).unwrap();
    assert_eq!((again.computed, again.reused), (0, 2));
    assert_eq!(fs::read(tmp.path().join("summary.csv")).unwrap(), summary_a);

    // A corrupt cell is recomputed, the intact one reused.
    let cells = tmp.path().join("cells");
    let victim = fs::read_dir(&cells).unwrap().next().unwrap().unwrap().path();
    fs::write(&victim, "{ not json").unwrap();
    let third = run_experiment(&cfg, true).unwrap();
    assert_eq!((third.computed, third.reused), (1, 1));
    assert_eq!(fs::read(tmp.path().join("summary.csv")).unwrap(), summary_a);
}

#[test]
fn bad_config_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("bad.json");
    fs::write(&p, r#"{"settings": ["mcar"], "n_replicates": 1, "colour": "blue"}"#).unwrap();
    let status = bin().arg("run").arg("--config").arg(&p).status().unwrap();
    assert_eq!(status.code(), Some(2));

    fs::write(&p, r#"{"settings": [], "methods": ["oracle"]}"#).unwrap();
    let status = bin().arg("run").arg("--config").arg(&p).status().unwrap();
    assert_eq!(status.code(), Some(2));

    let status = bin().args(["run", "--replicates", "0", "--out"]).arg(tmp.path()).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

fn toy_dataset(dir: &Path) -> std::path::PathBuf {
    let rep = gen_replicate(Setting::Mcar, 0.1, 5).unwrap();
    let ids: Vec<String> = (0..100).map(|j| format!("s{j}")).collect();
    save_dataset(dir, &ids, &rep.masked).unwrap()
}

fn read_h(path: &Path) -> (Vec<String>, usize) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    let rows: Vec<&str> = lines.collect();
    for r in &rows {
        assert_eq!(r.split(',').count(), header.len());
    }
    (header, rows.len())
}

#[test]
fn fuse_filica_covers_every_subject() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = toy_dataset(&tmp.path().join("data"));
    let out = tmp.path().join("fit");
    let status = bin()
        .arg("fuse")
        .arg(&manifest)
        .args(["--method", "filica", "--fi-updates", "3", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let (ids, rows) = read_h(&out.join("h.csv"));
    assert_eq!(ids.len(), 100);
    assert_eq!(ids[0], "s0");
    assert_eq!(rows, 5);
    assert!(out.join("xw_modality_1.csv").exists() && out.join("xw_modality_2.csv").exists());
    let deltas = fs::read_to_string(out.join("deltas.csv")).unwrap();
    assert!(deltas.starts_with("dXw,dH\n"));
    assert!(deltas.lines().count() >= 2);
    let meta: serde_json::Value = read_json_file(&out.join("metadata.json")).unwrap();
    assert_eq!(meta["method"], "filica");
}

#[test]
fn fuse_completer_keeps_only_completers() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = toy_dataset(&tmp.path().join("data"));
    let out = tmp.path().join("fit");
    let status = bin()
        .arg("fuse")
        .arg(&manifest)
        .args(["--method", "completer", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let (ids, _) = read_h(&out.join("h.csv"));
    assert_eq!(ids.len(), 80);
    let rep = gen_replicate(Setting::Mcar, 0.1, 5).unwrap();
    let missing: Vec<usize> = rep.truth.missing_assign.concat();
    for id in &ids {
        let j: usize = id[1..].parse().unwrap();
        assert!(!missing.contains(&j));
    }
    assert_eq!(fs::read_to_string(out.join("deltas.csv")).unwrap(), "dXw,dH\n");
}

#[test]
fn fuse_oracle_on_missing_data_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = toy_dataset(&tmp.path().join("data"));
    let out = tmp.path().join("fit");
    let output = bin()
        .arg("fuse")
        .arg(&manifest)
        .args(["--method", "oracle", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("missing"));
    assert!(!out.join("h.csv").exists());
}

#[test]
fn gen_writes_loadable_datasets() {
    let tmp = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["gen", "--replicates", "1", "--methods", "oracle,filica", "--out"])
        .arg(tmp.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let dir = tmp.path().join("mar_mixed").join("pct_0.2").join("rep_0");
    let (manifest, mods) = filica_core::matrixio::load_dataset(&dir.join("manifest.json")).unwrap();
    assert_eq!(manifest.n_subjects, 100);
    assert_eq!(mods[0].missing_subjects().len(), 20);
    let truth: filica_core::SimTruth = read_json_file(&dir.join("truth.json")).unwrap();
    assert_eq!(truth.missing_assign[0], mods[0].missing_subjects());
}

#[test]
fn report_rebuilds_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(tmp.path());
    cfg.methods = vec![Method::Oracle, Method::Replace0];
    run_experiment(&cfg, false).unwrap();
    let summary = fs::read(tmp.path().join("summary.csv")).unwrap();
    let aggregates = fs::read(tmp.path().join("aggregates.csv")).unwrap();
    fs::remove_file(tmp.path().join("summary.csv")).unwrap();
    fs::remove_file(tmp.path().join("aggregates.csv")).unwrap();
    fs::remove_file(tmp.path().join("boxplot_mcar_xw_abs_corr.svg")).unwrap();

    let status = bin().args(["report", "--out"]).arg(tmp.path()).status().unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(fs::read(tmp.path().join("summary.csv")).unwrap(), summary);
    assert_eq!(fs::read(tmp.path().join("aggregates.csv")).unwrap(), aggregates);
    let svg = fs::read_to_string(tmp.path().join("boxplot_mcar_xw_abs_corr.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("replace0") && !svg.contains("href"));
}
