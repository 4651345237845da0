use std::path::Path;
use std::process::{Command, Output};

fn mirrornet(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mirrornet"))
        .args(args)
        .current_dir(cwd)
        .env_remove("MIRRORNET_OUT")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn files_under(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_string_lossy().into_owned());
            }
        }
    }
    out.sort();
    out
}

const SMALL: &str = r#"
seed = 3
[split]
test_size = 400
[probe]
k = 40
[training]
learning_rate = 0.001
neurons_per_layer = 8
max_epochs = 2
"#;

#[test]
fn gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.csv", "b.csv"] {
        let o = mirrornet(
            dir.path(),
            &["gen", "--count", "1000", "--seed", "7", "--out", name],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.csv")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 1001);
    assert!(dir.path().join("a.manifest.json").exists());
}

#[test]
fn missing_checkpoint_exits_4_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let o = mirrornet(
        dir.path(),
        &["cmni", "--checkpoint", "missing.json", "--test", "t.csv"],
    );
    assert_eq!(o.status.code(), Some(4));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("mirrornet: kind=missing-input"));
    assert!(err.contains("missing.json"), "{err}");
}

#[test]
fn bad_config_exits_3_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[world]\nfly_prob = 1.5\n").unwrap();
    let o = mirrornet(dir.path(), &["run-all", "--config", "bad.toml"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("kind=config"));
    std::fs::write(dir.path().join("typo.toml"), "[world]\nflyprob = 0.2\n").unwrap();
    let o = mirrornet(
        dir.path(),
        &["gen", "--config", "typo.toml", "--count", "10"],
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("typo.toml"));
    assert_eq!(files_under(dir.path()), ["bad.toml", "typo.toml"]);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = mirrornet(dir.path(), &["gen", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("mirrornet: kind=usage"));
    assert_eq!(
        mirrornet(dir.path(), &["frobnicate"]).status.code(),
        Some(2)
    );
    assert!(mirrornet(dir.path(), &["--help"]).status.success());
}

#[test]
fn stages_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("small.toml"), SMALL).unwrap();
    let run = |args: &[&str]| {
        let mut full = args.to_vec();
        full.extend(["--config", "small.toml"]);
        let o = mirrornet(p, &full);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        String::from_utf8(o.stdout).unwrap()
    };
    run(&["gen", "--count", "4000", "--out", "data/all.csv"]);
    run(&["split", "--data", "data/all.csv", "--out", "data"]);
    run(&["train", "--train", "data/train.csv", "--out", "train"]);
    let ckpt = std::fs::read_dir(p.join("train"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|f| {
            f.file_name()
                .unwrap()
                .to_string_lossy()
                .contains("-epoch2-")
        })
        .unwrap();
    let ckpt = ckpt.to_str().unwrap();
    let first = run(&[
        "cmni",
        "--checkpoint",
        ckpt,
        "--test",
        "data/test.csv",
        "--out",
        "cmni",
    ]);
    let head = first.lines().next().unwrap();
    assert!(
        head.starts_with("val_loss ") && head.contains(" cmni "),
        "{head}"
    );
    let again = run(&[
        "cmni",
        "--checkpoint",
        ckpt,
        "--stats",
        "cmni/stats.csv",
        "--out",
        "cmni2",
    ]);
    assert_eq!(again, first);
    run(&[
        "circuits",
        "--checkpoint",
        ckpt,
        "--cmni-report",
        "cmni/cmni.json",
        "--out",
        "circuits",
    ]);
    assert!(p.join("circuits/graph.json").exists() && p.join("circuits/graph.txt").exists());
    let out = run(&[
        "eval",
        "--checkpoint",
        ckpt,
        "--test",
        "data/test.csv",
        "--out",
        "eval",
    ]);
    assert!(out.starts_with("accuracy "), "{out}");
}
