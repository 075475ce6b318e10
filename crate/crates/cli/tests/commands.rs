use std::fs;
use std::path::Path;
use std::process::Command;

use chainflow::surrogate::{InputScaling, SampleSet};
use chainflow_cli::{cmd_macro, cmd_micro, cmd_sample_table, RunConfig};

fn small_macro(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.io.out_dir = out.to_path_buf();
    cfg.macro_.n_cells = 40;
    cfg.macro_.t_end = 0.05;
    cfg.macro_.output_stride = 2;
    cfg
}

/// Report without the wall-clock columns.
fn report_without_timing(dir: &Path) -> Vec<String> {
    fs::read_to_string(dir.join("report.csv"))
        .unwrap()
        .lines()
        .map(|l| l.split(',').take(4).collect::<Vec<_>>().join(","))
        .collect()
}

#[test]
fn macro_output_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = cmd_macro(&small_macro(a.path()), &mut Vec::new()).unwrap();
    cmd_macro(&small_macro(b.path()), &mut Vec::new()).unwrap();
    let mut names: Vec<String> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "report.csv")
        .collect();
    names.sort();
    assert!(names.contains(&"track.csv".to_string()));
    assert!(names.contains(&"samples.csv".to_string()));
    assert_eq!(names.iter().filter(|n| n.starts_with("macro_")).count(), ra.snapshots.len());
    for n in &names {
        assert_eq!(fs::read(a.path().join(n)).unwrap(), fs::read(b.path().join(n)).unwrap(), "{n}");
    }
    assert_eq!(report_without_timing(a.path()), report_without_timing(b.path()));
    let header = fs::read_to_string(a.path().join("macro_0000.csv")).unwrap();
    assert!(header.starts_with("x_center,width,rho,v,phase\n"));
}

#[test]
fn zero_end_time_writes_initial_snapshot_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_macro(dir.path());
    cfg.macro_.t_end = 0.0;
    let run = cmd_macro(&cfg, &mut Vec::new()).unwrap();
    assert_eq!(run.snapshots.len(), 1);
    assert_eq!(run.micro_calls(), 0);
    assert!(dir.path().join("macro_0000.csv").exists());
    assert!(!dir.path().join("macro_0001.csv").exists());
}

#[test]
fn macro_reuses_a_persisted_store() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_macro(dir.path());
    cfg.io.store = Some(dir.path().join("store.csv"));
    let first = cmd_macro(&cfg, &mut Vec::new()).unwrap();
    assert!(first.micro_calls() > 0);
    let second = cmd_macro(&cfg, &mut Vec::new()).unwrap();
    assert!(second.micro_calls() < first.micro_calls());
}

#[test]
fn sample_table_appends_replaces_and_skips_failures() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("table.csv");
    let mut cfg = RunConfig::default();
    cfg.io.store = Some(store.clone());

    let s = cmd_sample_table(&cfg, &mut Vec::new()).unwrap();
    assert_eq!((s.appended, s.replaced, s.failed), (0, 0, 0));
    let empty = fs::read(&store).unwrap();
    cmd_sample_table(&cfg, &mut Vec::new()).unwrap();
    assert_eq!(fs::read(&store).unwrap(), empty);

    cfg.io.sample_inputs = vec![[1.9, 0.0, 0.3, 0.0]];
    let s = cmd_sample_table(&cfg, &mut Vec::new()).unwrap();
    assert_eq!(s.appended, 1);
    let s = cmd_sample_table(&cfg, &mut Vec::new()).unwrap();
    assert_eq!((s.appended, s.replaced), (0, 1));

    cfg.io.sample_inputs = vec![[1.9, 0.0, 1.8, 0.0], [1.85, 0.0, 0.32, 0.0]];
    let mut log = Vec::new();
    let s = cmd_sample_table(&cfg, &mut log).unwrap();
    assert_eq!((s.appended, s.failed), (1, 1));
    assert!(String::from_utf8(log).unwrap().contains("failed"));
    let set = SampleSet::load(&store, &InputScaling::unit()).unwrap();
    assert_eq!(set.len(), 2);
    assert_eq!(set.samples()[0].x, [1.9, 0.0, 0.3, 0.0]);
}

#[test]
fn micro_dump_writes_track_and_fields() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.io.out_dir = dir.path().to_path_buf();
    cfg.io.dump_fields = true;
    let mut out = Vec::new();
    cmd_micro(&cfg, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.contains("rh_mass"));
    let field = fs::read_to_string(dir.path().join("micro_field.csv")).unwrap();
    assert!(field.starts_with("x,rho,v,p\n"));
    assert!(dir.path().join("micro_track.csv").exists());
    assert!(dir.path().join("micro_field_0000.csv").exists());
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chainflow"))
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = binary().arg("maxwell").output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("rho_liq"));

    let hot = dir.path().join("hot.json");
    fs::write(&hot, r#"{"eos": {"t_ref": 1.5}}"#).unwrap();
    let out = binary().args(["maxwell", "--config"]).arg(&hot).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let single = dir.path().join("single.json");
    fs::write(&single, r#"{"io": {"micro_input": [1.9, 0.0, 1.8, 0.0]}}"#).unwrap();
    let out = binary().args(["micro", "--config"]).arg(&single).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let unstable = dir.path().join("unstable.json");
    fs::write(&unstable, r#"{"micro": {"dt": 2.0}}"#).unwrap();
    let out = binary().args(["micro", "--config"]).arg(&unstable).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn printed_config_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    fs::write(&path, r#"{"gate": {"epsilon_model": 0.25}, "macro": {"t_end": 1.0}}"#).unwrap();
    let out = binary().args(["config", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let printed = String::from_utf8(out.stdout).unwrap();
    let cfg = RunConfig::from_json(&printed).unwrap();
    assert_eq!(cfg, RunConfig::load(&path).unwrap());
    assert_eq!(cfg.to_json().trim(), printed.trim());
}
