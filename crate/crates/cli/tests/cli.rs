use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "--desk",
    "--missions",
    "2",
    "--budget",
    "40",
    "--mc-samples",
    "4",
    "--max-epochs",
    "20",
    "--set",
    "world.width=48",
    "--set",
    "world.length=48",
    "--set",
    "camera.width=24",
    "--set",
    "camera.height=24",
    "--set",
    "eval.views_per_side=3",
    "--set",
    "train.schedule_epochs=20",
];

fn activeseg(args: &[&str], run_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_activeseg"))
        .args(args)
        .env("ACTIVESEG_RUN_DIR", run_root)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn activeseg")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn dry_run_applies_flags_then_sets() {
    let tmp = tempfile::tempdir().unwrap();
    let o = activeseg(
        &["run", "--desk", "--dry-run", "--alpha", "0.06%", "--human", "random", "--set", "train.patience=3", "--seed", "9"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let cfg = activeseg_core::MissionConfig::from_toml(&text).unwrap();
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.alpha, "0.06%".parse().unwrap());
    assert_eq!(cfg.human, activeseg_core::HumanSelector::Random);
    assert_eq!(cfg.train.patience, 3);
    assert_eq!(cfg.world.width, activeseg_core::MissionConfig::desk().world.width);
}

#[test]
fn configuration_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        &["run", "--dry-run", "--human", "best"][..],
        &["run", "--dry-run", "--set", "budget=-1"],
        &["run", "--dry-run", "--set", "no_such_key=1"],
        &["run", "--dry-run", "--set", "budget"],
        &["run", "--config", "/nonexistent/config.toml"],
        &["run", "--no-such-flag"],
        &["gen-world", "--layout", "forest", "--out", "w"],
    ] {
        let o = activeseg(args, tmp.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn runtime_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.ckpt");
    let mut args = vec!["eval", "--checkpoint", missing.to_str().unwrap()];
    args.extend_from_slice(TINY);
    let o = activeseg(&args, tmp.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn help_exits_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let o = activeseg(&["--help"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("export-plots"));
}

#[test]
fn run_persists_under_the_env_root_and_eval_reproduces_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["run"];
    args.extend_from_slice(TINY);
    let o = activeseg(&args, tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let runs: Vec<_> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1);
    let run = &runs[0];
    for f in ["config.toml", "metrics.csv", "planner_trace.csv", "checkpoints/mission_02.ckpt", "maps/latest.map"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    assert!(stdout(&o).trim_end().ends_with(&run.display().to_string()));

    // Re-scoring the final checkpoint under the saved config matches the
    // campaign's own last mIoU.
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    let last: Vec<&str> = metrics.lines().last().unwrap().split(',').collect();
    let ckpt = run.join("checkpoints/mission_02.ckpt");
    let cfg = run.join("config.toml");
    let o = activeseg(
        &["eval", "--config", cfg.to_str().unwrap(), "--checkpoint", ckpt.to_str().unwrap()],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    let miou: f64 = row[1].parse().unwrap();
    let expected: f64 = last[6].parse().unwrap();
    assert!((miou - expected).abs() < 1e-3, "{miou} vs {expected}");
}

#[test]
fn generated_world_loads_back_into_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let world = tmp.path().join("world");
    let o = activeseg(
        &["gen-world", "--width", "48", "--length", "48", "--seed", "4", "--out", world.to_str().unwrap()],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(world.join("world.txt").exists());
    let mut args = vec!["run", "--dry-run", "--world", world.to_str().unwrap()];
    args.extend_from_slice(TINY);
    let o = activeseg(&args, tmp.path());
    assert!(o.status.success());
    let cfg = activeseg_core::MissionConfig::from_toml(&stdout(&o)).unwrap();
    assert_eq!(cfg.world.path.as_deref(), Some(world.as_path()));
}

#[test]
fn grid_then_export_plots() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("g.toml");
    fs::write(
        &spec,
        r#"
seeds = [1, 2]
[axes]
pseudo = ["none", "ours"]
[base]
missions = 1
budget = 30.0
world = { width = 40, length = 40, layout = "urban" }
camera = { width = 16, height = 16, footprint = 16.0, altitude = 30.0 }
model = { hidden = [8, 6], mc_samples = 3 }
planning = { lowres = [8, 8] }
eval = { views_per_side = 2 }
train = { max_epochs = 8, schedule_epochs = 8 }
"#,
    )
    .unwrap();
    let out = tmp.path().join("grid");
    let o = activeseg(
        &["grid", spec.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", "2", "--summaries-only"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let runs = fs::read_to_string(out.join("grid_runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 4);
    assert!(!out.join("runs").exists());

    let o = activeseg(&["export-plots", out.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("plots").read_dir().unwrap().count() > 0);
}
