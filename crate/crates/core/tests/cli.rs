use std::path::Path;
use std::process::{Command, Output};

use rtwbc::config::default_person_example;
use rtwbc::model::{RobotExample, RobotModel, Role};
use rtwbc::retarget::{map_pose, segment, CorrespondenceConfig};
use rtwbc::stream::recording;

fn rtwbc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtwbc"))
        .args(args)
        .current_dir(dir)
        .env_remove("RTWBC_LISTEN")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn replay_spiral_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let o = rtwbc(&["--config", "spiral", "--out", "out", "replay"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/metrics.json")).unwrap()).unwrap();
    assert!(m["ee_position_mae"].as_f64().unwrap() < 0.01);
    let csv = std::fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    assert!(csv.starts_with("t,q0,"));
    assert_eq!(csv.lines().count(), 1 + m["ticks"].as_u64().unwrap() as usize);
}

#[test]
fn fixed_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("noisy.toml"),
        "[synth]\nkind = \"static\"\nrate = 60.0\nduration = 2.0\n\n[noise]\nforce_std = 2.0\n\n\
         [[episode.wrench]]\nstart = 0.5\nduration = 1.0\nforce = [8.0, 0.0, 0.0]\n",
    )
    .unwrap();
    let run = |seed: &str, out: &str| {
        let o = rtwbc(&["--config", "noisy.toml", "--seed", seed, "--out", out, "replay"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read(dir.path().join(out).join("trace.csv")).unwrap()
    };
    let a = run("7", "a");
    let b = run("7", "b");
    let c = run("8", "c");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(std::fs::read(dir.path().join("a/metrics.json")).unwrap(), std::fs::read(dir.path().join("b/metrics.json")).unwrap());
}

#[test]
fn missing_model_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), "model = \"robots/absent.toml\"\n").unwrap();
    let o = rtwbc(&["--config", "run.toml", "replay"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("absent.toml"), "{}", stderr(&o));
}

#[test]
fn check_stability_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = rtwbc(&["check-stability"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("lhs = 7.945") && out.contains("rhs = 25.766") && out.contains("holds = true"), "{out}");

    std::fs::write(dir.path().join("c10.toml"), "[admittance]\nc_minus = -10.0\n").unwrap();
    let o = rtwbc(&["--config", "c10.toml", "check-stability"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("holds = false"));

    std::fs::write(dir.path().join("bad.toml"), "[admittance\nk_min = 1\n").unwrap();
    assert_eq!(rtwbc(&["--config", "bad.toml", "check-stability"], dir.path()).status.code(), Some(2));
    std::fs::write(dir.path().join("neg.toml"), "[admittance]\nk_min = -1.0\n").unwrap();
    assert_eq!(rtwbc(&["--config", "neg.toml", "check-stability"], dir.path()).status.code(), Some(2));
    assert_eq!(rtwbc(&["--config", "nowhere.toml", "check-stability"], dir.path()).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(rtwbc(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(rtwbc(&["--speed", "-1", "replay"], dir.path()).status.code(), Some(2));
    assert_eq!(rtwbc(&["--listen", "not-an-address", "serve"], dir.path()).status.code(), Some(2));
}

#[test]
fn sweep_rows_and_empty_grid() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.toml"), "").unwrap();
    let o = rtwbc(&["--out", "e", "sweep", "--grid", "empty.toml"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("e/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("k_min,k_max,a,b,c_minus,c_plus,zeta,m,lhs,rhs,holds,stable,"));

    std::fs::write(dir.path().join("grid.toml"), "k_min = [10.0]\nc_minus = [-0.2, -10.0]\n").unwrap();
    let o = rtwbc(&["--out", "g", "sweep", "--grid", "grid.toml"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("g/sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    // default point: analytic condition holds and the episode settles
    assert_eq!((rows[0][10], rows[0][11]), ("true", "true"));
    // only sufficient: the violating point can still settle
    assert_eq!(rows[1][10], "false");
}

#[test]
fn serve_port_in_use() {
    let dir = tempfile::tempdir().unwrap();
    let held = std::net::UdpSocket::bind("127.0.0.1:0").unwrap();
    let addr = held.local_addr().unwrap().to_string();
    let o = Command::new(env!("CARGO_BIN_EXE_rtwbc"))
        .args(["serve", "--duration", "0.1"])
        .current_dir(dir.path())
        .env("RTWBC_LISTEN", &addr)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(&addr), "{}", stderr(&o));
}

#[test]
fn calibrate_bundled_example_is_a_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = rtwbc(&["--out", "cal", "calibrate"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let cfg = CorrespondenceConfig::load(dir.path().join("cal/correspondence.toml")).unwrap();
    let model = RobotModel::default_model();
    let poses = RobotExample::default_example().role_poses(&model).unwrap();
    let g = map_pose(&default_person_example(), &cfg).unwrap();
    let rs = poses[&Role::Shoulder];
    let rf = poses[&Role::Footprint];
    assert!(g.wrist.rotation.angle_to(&(rs.inverse() * poses[&Role::Wrist]).rotation) < 1e-9);
    assert!(g.elbow.rotation.angle_to(&(rs.inverse() * poses[&Role::Elbow]).rotation) < 1e-9);
    assert!(g.torso.rotation.angle_to(&(rf.inverse() * poses[&Role::Torso]).rotation) < 1e-9);
}

#[test]
fn calibrate_missing_segment() {
    let dir = tempfile::tempdir().unwrap();
    let mut obs = default_person_example();
    obs.segments.remove(&segment::RIGHT_FOREARM);
    recording::save(dir.path().join("person.jsonl"), &[obs]).unwrap();
    let o = rtwbc(&["calibrate", "--person", "person.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("RightForeArm"), "{}", stderr(&o));
}

#[test]
fn synth_then_replay_recording() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.toml"), "[synth]\nkind = \"static\"\nrate = 30.0\nduration = 1.0\n").unwrap();
    let o = rtwbc(&["--config", "s.toml", "--out", "syn", "synth"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rec = recording::load(dir.path().join("syn/synth.jsonl")).unwrap();
    assert_eq!(rec.len(), 31);
    let o = rtwbc(&["--out", "rep", "replay", "--recording", "syn/synth.jsonl"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("rep/trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 100);
}
