//! The `polaron-tfim` binary end to end: exit codes, output layout,
//! manifests and interrupted runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_polaron-tfim"));
    c.env_remove("POLARON_TFIM_OUT");
    c
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().args(args).current_dir(dir).output().unwrap()
}

fn file_names(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).expect("stderr is one JSON object")
}

#[test]
fn minimal_relax_config_uses_documented_defaults() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("relax.ini"), "model.h_x = 0.3\ndynamics.T = 0.4\ndynamics.seeds = 7\n").unwrap();
    let out = run_in(dir.path(), &["relax", "--config", "relax.ini", "--out", "o"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("o");
    assert_eq!(
        file_names(&o),
        vec!["manifest.json", "relax_h0_T0_s7.jsonl", "relax_summary.csv"]
    );
    let traj = fs::read_to_string(o.join("relax_h0_T0_s7.jsonl")).unwrap();
    assert_eq!(traj.lines().count(), 5001);
    let first: Value = serde_json::from_str(traj.lines().next().unwrap()).unwrap();
    assert_eq!((first["width"].as_u64(), first["height"].as_u64(), first["sweep"].as_u64()), (Some(6), Some(6), Some(0)));
    let m: Value = serde_json::from_str(&fs::read_to_string(o.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["kind"], "relax");
    assert_eq!(m["seeds"], serde_json::json!([7]));
    assert_eq!(m["effective_slices"][0]["M"], 67);
    assert_eq!(m["code_version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn incommensurate_lattice_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.ini"), "lattice.W = 4\nmodel.h_x = 0.3\ndynamics.T = 1\ndynamics.seeds = 1\n").unwrap();
    let out = run_in(dir.path(), &["relax", "--config", "c.ini", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    let e = stderr_json(&out);
    assert_eq!(e["error"], "config");
    assert_eq!(e["key"], "lattice.W");
    assert_eq!(e["line"], 1);
    assert!(!dir.path().join("o").exists());
}

#[test]
fn duplicate_key_names_both_lines() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.ini"), "[dynamics]\nT = 1\nseeds = 1\n\nT = 2\n").unwrap();
    let out = run_in(dir.path(), &["relax", "--config", "c.ini"]);
    assert_eq!(out.status.code(), Some(2));
    let e = stderr_json(&out);
    assert_eq!(e["key"], "dynamics.T");
    assert_eq!(e["line"], 5);
    assert!(e["message"].as_str().unwrap().contains("lines 2 and 5"), "{e}");
}

#[test]
fn usage_and_runtime_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), &["relax"]).status.code(), Some(2));
    assert_eq!(run_in(dir.path(), &["anneal", "--config", "x"]).status.code(), Some(2));
    fs::write(dir.path().join("c.ini"), "collapse.inputs = missing.csv\n").unwrap();
    let out = run_in(dir.path(), &["collapse", "--config", "c.ini", "--out", "o"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "runtime");
    let out = run_in(dir.path(), &["relax", "--config", "nowhere.ini"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn rates_then_collapse_file_contract() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("rates.ini"),
        "[model]\nh_x = 0.2, 0.3, 0.45\n[dynamics]\nT = 0.3, 0.4, 0.5, 0.7, 1, 1.4, 2, 3\nsteps = 200\nseeds = 1..6\n",
    )
    .unwrap();
    let out = run_in(dir.path(), &["rates", "--config", "rates.ini", "--out", "rates"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rates = dir.path().join("rates");
    assert_eq!(
        file_names(&rates),
        vec!["manifest.json", "rates_h0.csv", "rates_h1.csv", "rates_h2.csv"]
    );
    let csv = fs::read_to_string(rates.join("rates_h1.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "h_x,T,R,R_stderr,n_seeds,n_steps");
    assert_eq!(lines.len(), 9);
    assert!(lines[1].ends_with(",5,200"));

    // collapse reads the CSVs relative to its own config file
    fs::create_dir(dir.path().join("fit")).unwrap();
    fs::write(
        dir.path().join("fit/collapse.ini"),
        "collapse.inputs = ../rates/rates_h0.csv, ../rates/rates_h1.csv, ../rates/rates_h2.csv\n",
    )
    .unwrap();
    let out = run_in(dir.path(), &["collapse", "--config", "fit/collapse.ini", "--out", "collapse"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let c = dir.path().join("collapse");
    assert_eq!(file_names(&c), vec!["collapse.json", "manifest.json"]);
    let result: Value = serde_json::from_str(&fs::read_to_string(c.join("collapse.json")).unwrap()).unwrap();
    let n = result["n"].as_f64().unwrap();
    assert!((0.0..=3.0).contains(&n));
    assert!(result["residual"].as_f64().unwrap() >= 0.0);
    assert!(!result["trace"].as_array().unwrap().is_empty());
    let m: Value = serde_json::from_str(&fs::read_to_string(c.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["results"]["n"].as_f64(), Some(n));
    assert_eq!(m["inputs"].as_object().unwrap().len(), 3);

    // the manifest alone regenerates the fit, even with the inputs gone
    fs::remove_dir_all(&rates).unwrap();
    let out = run_in(dir.path(), &["rerun", "--manifest", "collapse/manifest.json", "--out", "again"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["collapse.json", "manifest.json"] {
        assert_eq!(
            fs::read(c.join(name)).unwrap(),
            fs::read(dir.path().join("again").join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn output_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.ini"), "").unwrap();
    let root = dir.path().join("root");
    let out = bin()
        .args(["sw-check", "--config", "c.ini"])
        .current_dir(dir.path())
        .env("POLARON_TFIM_OUT", &root)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(file_names(&root.join("sw-check")), vec!["manifest.json", "sw_check.json"]);

    // output.dir beats the environment, --out beats both
    fs::write(dir.path().join("d.ini"), "output.dir = from_config\n").unwrap();
    let out = bin()
        .args(["ed-check", "--config", "d.ini"])
        .current_dir(dir.path())
        .env("POLARON_TFIM_OUT", &root)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("from_config/ed_check.json").exists());
    let out = run_in(dir.path(), &["ed-check", "--config", "d.ini", "--out", "flag"]);
    assert!(out.status.success());
    assert!(dir.path().join("flag/ed_check.json").exists());
}

fn data_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .into_iter()
        .flatten()
        .map(|e| e.unwrap().path())
        .filter(|p| !polaron_tfim::output::is_temp_file(p))
        .collect();
    v.sort();
    v
}

#[test]
fn killed_run_leaves_no_partial_data_files() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.ini"),
        "model.h_x = 0.3\ndynamics.T = 0.4\ndynamics.steps = 3000\ndynamics.seeds = 1..25\n",
    )
    .unwrap();
    let reference = run_in(dir.path(), &["relax", "--config", "c.ini", "--jobs", "2", "--out", "full"]);
    assert!(reference.status.success());

    let mut child = bin()
        .args(["relax", "--config", "c.ini", "--jobs", "2", "--out", "cut"])
        .current_dir(dir.path())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let cut = dir.path().join("cut");
    let start = Instant::now();
    while data_files(&cut).len() < 3 && start.elapsed() < Duration::from_secs(120) {
        std::thread::sleep(Duration::from_millis(2));
    }
    child.kill().unwrap();
    child.wait().unwrap();

    let survivors = data_files(&cut);
    assert!(!survivors.is_empty(), "run was killed before writing anything");
    assert!(
        !cut.join("manifest.json").exists() || survivors.len() == data_files(&dir.path().join("full")).len(),
        "manifest written before the data"
    );
    for path in survivors {
        let name = path.file_name().unwrap();
        assert_eq!(
            fs::read(&path).unwrap(),
            fs::read(dir.path().join("full").join(name)).unwrap(),
            "{} is incomplete",
            path.display()
        );
    }
}
