use std::path::Path;
use std::process::Command;

fn qedlab(args: &[&str], cwd: &Path) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_qedlab")).args(args).current_dir(cwd).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

#[test]
fn passing_run_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "kind = \"verify-thm1\"\nseeds = [0]\n[thm1]\ntuples = 50\n").unwrap();
    let (code, text) = qedlab(&["verify-thm1", "--config", "c.toml", "--out", "run"], tmp.path());
    assert_eq!(code, 0, "{text}");
    assert!(tmp.path().join("run/manifest.json").exists());
    assert!(tmp.path().join("run/thm1/seed0.csv").exists());
}

#[test]
fn violated_check_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let config = "kind = \"toy\"\nseeds = [0]\n[toy]\nalphas = [0.1]\n[toy.train]\nsteps = 5\nsnapshot_every = 5\n[[toy.expect]]\nalpha = 0.1\nmin_near = 1\n";
    std::fs::write(tmp.path().join("c.toml"), config).unwrap();
    let (code, text) = qedlab(&["toy", "--config", "c.toml", "--out", "run"], tmp.path());
    assert_eq!(code, 2, "{text}");
    assert!(text.contains("toy_alpha0.1_near"), "{text}");
}

#[test]
fn config_errors_exit_one_and_write_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("c.toml"), "kind = \"tabular-qed\"\nseeds = [0, 1]\n[tabular]\nks = [-1.0]\n").unwrap();
    let (code, text) = qedlab(&["tabular-qed", "--config", "c.toml", "--out", "run"], tmp.path());
    assert_eq!(code, 1);
    assert!(text.contains("tabular.ks[0]"), "{text}");
    assert!(!tmp.path().join("run").exists());
    std::fs::write(tmp.path().join("ok.toml"), "kind = \"tabular-qed\"\nseeds = [0, 1]\n").unwrap();
    let (code, text) = qedlab(&["toy", "--config", "ok.toml", "--out", "run"], tmp.path());
    assert_eq!(code, 1);
    assert!(text.contains("`kind`"), "{text}");
}

#[test]
fn report_subcommand_aggregates_positional_dirs() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, text) = qedlab(&["coupled", "--out", "c", "--seeds", "0"], tmp.path());
    assert_eq!(code, 0, "{text}");
    let (code, text) = qedlab(&["report", "c", "--out", "r"], tmp.path());
    assert_eq!(code, 0, "{text}");
    assert!(tmp.path().join("r/summary.csv").exists());
    assert!(tmp.path().join("r/summary.json").exists());
}
