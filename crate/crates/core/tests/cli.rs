use std::fs;
use std::process::Command;

use tempfile::tempdir;

fn feasimap() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_feasimap"));
    c.env("RUST_LOG", "warn");
    c
}

#[test]
fn rho_prints_json() {
    let out = feasimap().args(["rho", "g24", "20000", "--json"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["problem"], "g24");
    assert_eq!(v["samples"], 20000);
    let rho = v["rho"].as_f64().unwrap();
    assert!((rho - 44.2).abs() < 5.0 * v["standard_error"].as_f64().unwrap());
}

#[test]
fn rho_is_reproducible_and_rejects_small_samples() {
    let a = feasimap().args(["rho", "g8", "10000", "--seed", "4"]).output().unwrap();
    let b = feasimap().args(["rho", "g8", "10000", "--seed", "4"]).output().unwrap();
    assert_eq!(a.stdout, b.stdout);
    let bad = feasimap().args(["rho", "g8", "10"]).output().unwrap();
    assert!(!bad.status.success());
    let unknown = feasimap().args(["rho", "g99", "10000"]).output().unwrap();
    assert!(!unknown.status.success());
}

#[test]
fn run_grid_and_compare_end_to_end() {
    let tmp = tempdir().unwrap();
    let cfg = tmp.path().join("campaign.toml");
    fs::write(
        &cfg,
        "problems = [\"demo1d\"]\nmethods = [\"pbe\", \"lhs-only\"]\nreps = 2\n\
         validation_samples = 1000\nacq_eval_multiplier = 100\noutput_dir = \"ignored\"\n",
    )
    .unwrap();
    let out_dir = tmp.path().join("out");
    let run = feasimap()
        .arg("run")
        .arg(&cfg)
        .env("FEASIMAP_OUT", &out_dir)
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(out_dir.join("summary.csv").is_file());
    assert!(!tmp.path().join("ignored").exists());

    let model = out_dir.join("models").join("demo1d_pbe_rep000.json");
    let grid_file = tmp.path().join("grid.csv");
    let grid = feasimap()
        .args(["grid", "demo1d"])
        .arg(&model)
        .args(["200", "-o"])
        .arg(&grid_file)
        .output()
        .unwrap();
    assert!(grid.status.success(), "{}", String::from_utf8_lossy(&grid.stderr));
    assert_eq!(fs::read_to_string(&grid_file).unwrap().lines().count(), 201);

    let wrong = feasimap().args(["grid", "g9"]).arg(&model).arg("10").output().unwrap();
    assert!(!wrong.status.success());

    let cmp = feasimap().arg("compare").arg(&out_dir).output().unwrap();
    assert!(cmp.status.success());
    let text = String::from_utf8(cmp.stdout).unwrap();
    assert!(text.contains("lhs-only") && text.contains("pbe") && text.contains("demo1d"));
    let csv = feasimap().arg("compare").arg(&out_dir).arg("--csv").output().unwrap();
    assert_eq!(String::from_utf8(csv.stdout).unwrap().lines().count(), 3);

    let missing = feasimap().arg("compare").arg(tmp.path().join("nowhere")).output().unwrap();
    assert!(!missing.status.success());
}
