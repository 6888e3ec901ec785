use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn insider(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_insider"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn find(dir: &Path, stem: &str) -> PathBuf {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_string_lossy().starts_with(&format!("{stem}-")))
        .unwrap_or_else(|| panic!("no {stem} output in {}", dir.display()))
}

fn synth_small(dir: &Path) -> PathBuf {
    let out = insider(&["synth", "--scenario", "small", "--out", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    find(dir, "transactions")
}

#[test]
fn synth_writes_ledger_truth_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let tx = synth_small(dir.path());
    let text = fs::read_to_string(tx).unwrap();
    assert!(text.starts_with("investor_id,date,buy_shares,sell_shares"));
    let truth = fs::read_to_string(find(dir.path(), "truth")).unwrap();
    assert!(truth.contains("hard"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(find(dir.path(), "manifest")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn run_is_byte_identical_across_invocations() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = insider(&["run", "--synth", "small", "--k", "6", "--out", d.path().to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for stem in ["report", "s_star_hist", "t_star_hist", "model", "summary", "manifest"] {
        let x = fs::read(find(a.path(), stem)).unwrap();
        let y = fs::read(find(b.path(), stem)).unwrap();
        assert_eq!(x, y, "{stem} differs");
    }
}

#[test]
fn missing_required_column_exits_with_schema_code() {
    let dir = tempfile::tempdir().unwrap();
    let tx = synth_small(dir.path());
    let text = fs::read_to_string(&tx).unwrap();
    let stripped: String = text
        .lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(2);
            f.join(",") + "\n"
        })
        .collect();
    let bad = dir.path().join("no_buy.csv");
    fs::write(&bad, stripped).unwrap();
    let out = insider(&["run", "--input", bad.to_str().unwrap(), "--k", "4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_latent_dimension_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = insider(&["run", "--synth", "small", "--k", "banana", "--out", d]);
    assert_eq!(out.status.code(), Some(3));
    let out = insider(&["run", "--synth", "small", "--k", "0", "--out", d]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unknown_flag_exits_with_config_code() {
    let out = insider(&["run", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_file_sets_defaults_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("insider.conf");
    fs::write(&cfg, "# small run\nsynth = small\nk = 5\nd_theta = 4\n").unwrap();
    let from_file = dir.path().join("a");
    let overridden = dir.path().join("b");
    let out = insider(&["--config", cfg.to_str().unwrap(), "run", "--out", from_file.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = insider(&["--config", cfg.to_str().unwrap(), "run", "--k", "7", "--out", overridden.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let summary = |d: &Path| -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(find(d, "summary")).unwrap()).unwrap()
    };
    assert_eq!(summary(&from_file)["k"], 5);
    assert_eq!(summary(&overridden)["k"], 7);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(find(&from_file, "manifest")).unwrap()).unwrap();
    assert_eq!(manifest["settings"]["thresholds"]["d_theta"], 4);
}

#[test]
fn config_file_with_unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    fs::write(&cfg, "colour = blue\n").unwrap();
    let out = insider(&["--config", cfg.to_str().unwrap(), "check"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn scan_k_writes_one_row_per_latent_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let out = insider(&[
        "scan-k", "--synth", "small", "--k-min", "2", "--k-max", "8", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(find(dir.path(), "kscan")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("k,"));
    assert_eq!(lines.count(), 7);
}

#[test]
fn check_passes() {
    let out = insider(&["check"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS"));
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn enrich_reads_group_table() {
    let dir = tempfile::tempdir().unwrap();
    let groups = dir.path().join("groups.csv");
    let mut text = String::from("group,investor_type\n");
    for _ in 0..12 {
        text.push_str("flagged,household\n");
    }
    for _ in 0..2 {
        text.push_str("flagged,firm\n");
    }
    for _ in 0..10 {
        text.push_str("rest,household\n");
    }
    for _ in 0..40 {
        text.push_str("rest,firm\n");
    }
    fs::write(&groups, text).unwrap();
    let out = insider(&["enrich", "--groups", groups.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    find(dir.path(), "manifest");
}
