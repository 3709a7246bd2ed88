use std::path::Path;
use std::process::Command;

fn smdpnav(dir: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_smdpnav"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "smdpnav {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn train_eval_render_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    smdpnav(dir, &["init-config", "--desk", "--out", "desk.toml"]);
    smdpnav(
        dir,
        &[
            "train", "--config", "desk.toml", "--seed", "3", "--override", "epochs=2",
            "--override", "steps_per_epoch=64", "--override", "ppo.policy_iters=2", "--out", "run",
        ],
    );
    let metrics = std::fs::read_to_string(dir.join("run/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    assert!(metrics.starts_with("epoch,env_steps,"));
    let saved = std::fs::read_to_string(dir.join("run/config.toml")).unwrap();
    assert!(saved.contains("epochs = 2") && saved.contains("seed = 3"));

    let table = smdpnav(
        dir,
        &[
            "eval", "--checkpoint", "run/final.ckpt", "--scenario", "spiral", "--episodes", "3", "--seed", "1",
            "--mode", "mode2", "--out", "eval", "--render", "1",
        ],
    );
    assert!(table.contains("spiral"));
    for f in ["report.csv", "episodes.csv", "summary.txt", "spiral_0000.csv", "spiral_0000.png"] {
        assert!(dir.join("eval").join(f).exists(), "{f}");
    }

    smdpnav(dir, &["scenarios", "--out", "scenarios"]);
    let printed = smdpnav(
        dir,
        &[
            "render", "--episode", "eval/spiral_0000.csv", "--world", "scenarios/spiral_world.toml", "--out",
            "again.png",
        ],
    );
    assert!(printed.contains("decisions"));
    assert!(!std::fs::read(dir.join("again.png")).unwrap().is_empty());
}

#[test]
fn bias_experiment_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    smdpnav(tmp.path(), &["bias", "--episodes", "2000", "--exact-baseline", "--out", "bias.csv"]);
    let csv = std::fs::read_to_string(tmp.path().join("bias.csv")).unwrap();
    assert!(csv.lines().count() > 1);
}

#[test]
fn unknown_override_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    smdpnav(tmp.path(), &["init-config", "--out", "c.toml"]);
    let out = Command::new(env!("CARGO_BIN_EXE_smdpnav"))
        .current_dir(tmp.path())
        .args(["train", "--config", "c.toml", "--override", "ppo.nonsense=1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
