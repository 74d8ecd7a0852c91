use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdde-lift"))
        .args(args)
        .arg("--out-dir")
        .arg(out)
        .env_remove("SDDE_LIFT_SEED")
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.json" {
                let key = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(key, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn zero_template_lift_check_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["lift-check", "--config", "templates/zero.toml", "--paths", "4"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&dir.path().join("lift_check/summary.json"));
    assert_eq!(s["exact"], true);
    for l in s["report"]["levels"].as_array().unwrap() {
        assert_eq!(l["sup_error_y"].as_f64(), Some(0.0));
    }
}

#[test]
fn shift_below_mu0_fails_item_four() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["operators", "--config", "templates/zero.toml", "--mu", "0.25"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let f = json(&dir.path().join("failure.json"));
    let names: Vec<&str> = f["failed"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"weak_b_iv"), "{names:?}");
}

#[test]
fn identical_inputs_give_identical_artifacts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["scenario", "zero", "--seed", "5"];
    assert_eq!(run(&args, a.path()).status.code(), Some(0));
    assert_eq!(run(&args, b.path()).status.code(), Some(0));
    let (x, y) = (artifacts(a.path()), artifacts(b.path()));
    assert!(!x.is_empty());
    assert_eq!(x, y);
}

#[test]
fn worker_count_does_not_change_results() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["simulate", "--paths", "64", "--grid-k", "8"];
    let one = Command::new(env!("CARGO_BIN_EXE_sdde-lift"))
        .args(args)
        .arg("--out-dir")
        .arg(a.path())
        .env("RAYON_NUM_THREADS", "1")
        .env_remove("SDDE_LIFT_SEED")
        .output()
        .unwrap();
    assert_eq!(one.status.code(), Some(0));
    let many = run(&args, b.path());
    assert_eq!(many.status.code(), Some(0));
    assert_eq!(artifacts(a.path()), artifacts(b.path()));
}

#[test]
fn seed_flag_overrides_environment() {
    let dir = tempfile::tempdir().unwrap();
    let env_only = Command::new(env!("CARGO_BIN_EXE_sdde-lift"))
        .args(["simulate", "--paths", "4", "--grid-k", "8", "--out-dir"])
        .arg(dir.path())
        .env("SDDE_LIFT_SEED", "77")
        .output()
        .unwrap();
    assert_eq!(env_only.status.code(), Some(0));
    assert_eq!(json(&dir.path().join("manifest.json"))["seed"], 77);
    let both = Command::new(env!("CARGO_BIN_EXE_sdde-lift"))
        .args(["simulate", "--paths", "4", "--grid-k", "8", "--seed", "3", "--out-dir"])
        .arg(dir.path())
        .env("SDDE_LIFT_SEED", "77")
        .output()
        .unwrap();
    assert_eq!(both.status.code(), Some(0));
    let m = json(&dir.path().join("manifest.json"));
    assert_eq!(m["seed"], 3);
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["grid_k"], 8);
}

#[test]
fn bad_inputs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["operators", "--tolerance", "nope=1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error [cli]"));
    let o = run(&["simulate", "--dt", "0.3"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[grid]\nk = \"many\"\n").unwrap();
    let o = run(&["simulate", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.k"));
}

#[test]
fn tolerance_override_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["operators", "--grid-k", "8", "--tolerance", "weak_b_iv=-1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let m = json(&dir.path().join("manifest.json"));
    assert_eq!(m["tolerance_overrides"]["weak_b_iv"], -1.0);
}

#[test]
fn list_checks_covers_every_command() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--list-checks"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in ["simulate", "lift-check", "operators", "hamiltonian-check", "value", "dpp", "hjb-residual"] {
        assert!(text.lines().any(|l| l.starts_with(cmd)), "{cmd}");
    }
}
