//! End-to-end checks of the `clipsim` binary.

use std::path::Path;
use std::process::{Command, Output};

const SMALL: [&str; 6] = ["--set", "workload.popular_clips=5", "--set", "workload.recent_clips=15", "--set", "workload.session_ms=30000"];

fn clipsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clipsim")).args(args).env_remove("CLIPSIM_CONFIG").output().expect("binary runs")
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_names_the_path() {
    let o = clipsim(&["--config", "/no/such/clipsim.toml", "validate"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/no/such/clipsim.toml"), "{}", stderr(&o));
}

#[test]
fn malformed_or_empty_grid_is_rejected() {
    for grid in ["alpha=", "alpha", "alpha=1:2:cube3", "bandwidth=0:1m:log3"] {
        let o = clipsim(&["sweep", "--grid", grid, "--events", "1"]);
        assert!(!o.status.success(), "{grid} accepted");
    }
    let o = clipsim(&["sweep", "--events", "1"]);
    assert!(!o.status.success());
}

#[test]
fn bad_override_is_rejected() {
    let o = clipsim(&["--set", "prefetch.alpha=2", "validate"]);
    assert!(!o.status.success());
    let o = clipsim(&["--set", "nosuch.key=1", "validate"]);
    assert!(!o.status.success());
}

#[test]
fn simulate_writes_csv_files_only() {
    let dir = tempfile::tempdir().unwrap();
    let (out, log, sched) = (dir.path().join("m.csv"), dir.path().join("log.csv"), dir.path().join("s.csv"));
    let mut args = SMALL.to_vec();
    args.extend(["simulate", "--events", "2", "--scheduler", "wt-pf"]);
    args.extend(["--out", out.to_str().unwrap(), "--event-log", log.to_str().unwrap(), "--schedule", sched.to_str().unwrap()]);
    let o = clipsim(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(first_line(&out), "run_id,discontinuity,cost,energy,norm_cost,norm_energy,objective");
    assert_eq!(first_line(&log), "slot,event,video_id,bytes,link_type,cost,energy");
    assert_eq!(first_line(&sched), "slot,video_id,unit_index,link_type,cost,energy");
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 3);
    let text = stdout(&o);
    assert!(text.contains("event0-wt-pf") && text.contains("mean"), "{text}");
    assert!(!text.contains("run_id,"), "CSV leaked to stdout");
}

#[test]
fn sweep_header_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, jobs: &str| {
        let path = dir.path().join(name);
        let mut args = SMALL.to_vec();
        args.extend(["--seed", "7", "--jobs", jobs, "sweep", "--grid", "bandwidth=150k:3m:log3", "--grid", "pqr=1.5,3.5"]);
        args.extend(["--events", "2", "--out", path.to_str().unwrap()]);
        let o = clipsim(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(&path).unwrap()
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "3");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "grid_point,parameters,scheduler,events,discontinuity,cost,energy,norm_cost,norm_energy,objective,prefetched_bytes"
    );
    assert_eq!(text.lines().count(), 1 + 6 * 4);
    assert!(text.contains("bandwidth=150000;pqr=3.5,nextd,2,"));
}

#[test]
fn seed_changes_results() {
    let run = |seed: &str| {
        let mut args = SMALL.to_vec();
        args.extend(["--seed", seed, "simulate", "--events", "1"]);
        stdout(&clipsim(&args))
    };
    assert_eq!(run("1"), run("1"));
    assert_ne!(run("1"), run("2"));
}

#[test]
fn environment_overrides_apply() {
    let o = Command::new(env!("CARGO_BIN_EXE_clipsim"))
        .args(["validate"])
        .env("CLIPSIM_PREFETCH__ALPHA", "1.5")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("alpha"), "{}", stderr(&o));
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, "[prefetch]\nalpha = 0.4\n\n[experiment]\nseed = 3\n").unwrap();
    let o = clipsim(&["--config", path.to_str().unwrap(), "validate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    std::fs::write(&path, "[prefetch]\nalfa = 0.4\n").unwrap();
    let o = clipsim(&["--config", path.to_str().unwrap(), "validate"]);
    assert!(!o.status.success());
}

#[test]
fn generated_traces_load_and_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = SMALL.to_vec();
    args.extend(["gen-traces", "--out-dir", dir.path().to_str().unwrap(), "--events", "2"]);
    let o = clipsim(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let (pl, g) = (dir.path().join("playlist-1.csv"), dir.path().join("gestures-1.csv"));
    assert_eq!(first_line(&pl), "video_id,section,upload_ts,reposts");
    assert_eq!(first_line(&g), "timestamp_ms,kind,initial_speed_px_s");
    let (pl, g) = (pl.to_str().unwrap(), g.to_str().unwrap());
    let o = clipsim(&["validate", "--playlist", pl, "--gestures", g]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("20 clips"));
    let o = clipsim(&["simulate", "--scheduler", "nextd", "--playlist", pl, "--gestures", g]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("trace-nextd"));
}

#[test]
fn kinematics_reports_entries() {
    let o = clipsim(&["kinematics", "--s0", "5000"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("kind: fling") && text.contains("clips crossed: 2"), "{text}");
    let o = clipsim(&["kinematics", "--s0", "3000", "--kind", "drag", "--h", "1000"]);
    assert!(stdout(&o).contains("clips crossed: 2"), "{}", stdout(&o));
}

#[test]
fn unknown_scheduler_is_rejected() {
    let o = clipsim(&["simulate", "--scheduler", "fastest", "--events", "1"]);
    assert!(!o.status.success());
}
