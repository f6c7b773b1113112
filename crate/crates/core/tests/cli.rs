use std::path::Path;
use std::process::Command;

const TINY: &str = r#"{"methods":["disjoint"],"horizons":[20],"ttes":[0],"roi_scales":[2],"seeds":[0],
 "corpus":{"clips_per_class":CLIPS,"clip_length":60},"roi_output_size":80,
 "budget":{"epochs":1,"batch_size":4},
 "disjoint":{"conv_channels":[4,4,4,4,4],"fc":[8,8]}}"#;

fn lanecast(out: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_lanecast"))
        .args(args)
        .env("LANECAST_OUT", out)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

#[test]
fn synth_then_windows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("synth.json");
    std::fs::write(&cfg, r#"{"clips_per_class":1,"clip_length":60}"#).unwrap();
    let out = lanecast(dir.path(), &["--config", cfg.to_str().unwrap(), "--seed", "4", "synth"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let clips: Vec<String> = (0..3)
        .map(|i| dir.path().join(format!("synth/clip_{i:04}")).display().to_string())
        .collect();
    let mut args = vec!["windows"];
    args.extend(clips.iter().map(String::as_str));
    let out = lanecast(dir.path(), &args);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("LLC") && text.contains("RLC"));
    assert!(dir.path().join("windows/windows.csv").exists());
}

#[test]
fn grid_exit_code_reflects_cell_failures() {
    let dir = tempfile::tempdir().unwrap();
    let ok = dir.path().join("ok.json");
    std::fs::write(&ok, TINY.replace("CLIPS", "3")).unwrap();
    let out = lanecast(&dir.path().join("a"), &["--config", ok.to_str().unwrap(), "grid"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("a/grid/classification.csv").exists());
    assert!(dir.path().join("a/grid/classification.md").exists());

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, TINY.replace("CLIPS", "1")).unwrap();
    let out = lanecast(&dir.path().join("b"), &["--config", bad.to_str().unwrap(), "grid"]);
    assert!(!out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("b/grid/classification.csv")).unwrap();
    assert!(csv.contains("—"));
}

#[test]
fn invalid_config_fails_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"roi_scales":[9]}"#).unwrap();
    let out = lanecast(dir.path(), &["--config", cfg.to_str().unwrap(), "grid"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    assert!(!dir.path().join("grid/cells").exists());
}
