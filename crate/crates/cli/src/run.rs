//! Experiment execution, output layout and the run manifest.
//!
//! Every run writes its data files plus `manifest.json` into one directory.
//! Data files depend only on the configuration text, the seeds and the code
//! version, never on the number of worker threads, so reruns are byte for
//! byte identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tfim_core::analysis::{fit_collapse_exponent, rate_vs_temperature, AnalysisError, RateCurve};
use tfim_core::ed::{domain_wall_hopping_family, fit_hopping_exponent, richardson_even, EdError};
use tfim_core::model::{classical_energy, domain_wall_config, ground_state, polaron_density, SpinConfig};
use tfim_core::qmc::{effective_slices, run_relaxation, QmcError};
use tfim_core::swtheory::{SwError, SwSubspace};

use crate::config::{parse_config, ConfigError, ExperimentKind, InitState, RunConfig};
use crate::output::write_atomic;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("bad manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("input {path}: {source}")]
    Input {
        path: String,
        #[source]
        source: AnalysisError,
    },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Qmc(#[from] QmcError),
    #[error(transparent)]
    Ed(#[from] EdError),
    #[error(transparent)]
    Sw(#[from] SwError),
    #[error("thread pool: {0}")]
    Pool(String),
}

impl RunError {
    /// 2 for anything the user can fix in the configuration, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Manifest(_) => 2,
            _ => 3,
        }
    }

    /// Machine-readable description for stderr.
    pub fn to_json(&self) -> String {
        let mut v = json!({
            "error": if self.exit_code() == 2 { "config" } else { "runtime" },
            "message": self.to_string(),
        });
        if let RunError::Config(c) = self {
            v["key"] = json!(c.key);
            v["line"] = json!(c.line);
        }
        v.to_string()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Where `collapse.inputs` are read from.
#[derive(Clone, Debug)]
pub enum InputSource {
    /// Relative paths resolve against this directory.
    Files(PathBuf),
    /// Contents captured in a manifest, keyed by the path as written in the config.
    Embedded(BTreeMap<String, String>),
}

impl InputSource {
    fn read(&self, path: &Path) -> Result<String, RunError> {
        match self {
            InputSource::Files(base) => {
                let full = if path.is_absolute() { path.to_path_buf() } else { base.join(path) };
                fs::read_to_string(&full).map_err(io_err(&full))
            }
            InputSource::Embedded(map) => map
                .get(&path.to_string_lossy().into_owned())
                .cloned()
                .ok_or_else(|| RunError::Manifest(format!("input {} not embedded", path.display()))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceRecord {
    pub h_x: f64,
    #[serde(rename = "T")]
    pub temperature: f64,
    #[serde(rename = "M")]
    pub slices: usize,
}

/// Everything needed to regenerate a run's data files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub code_version: String,
    pub config_text: String,
    pub seeds: Vec<u64>,
    pub effective_slices: Vec<SliceRecord>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub results: Value,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        serde_json::from_str(text).map_err(|e| RunError::Manifest(e.to_string()))
    }

    pub fn experiment_kind(&self) -> Result<ExperimentKind, RunError> {
        self.kind.parse().map_err(RunError::Manifest)
    }
}

/// Options that may change how fast a run goes but never what it writes.
#[derive(Clone, Debug, Default)]
pub struct Execution {
    /// Worker threads; `None` uses the hardware parallelism.
    pub jobs: Option<usize>,
}

/// Parses `config_text`, runs the experiment and writes all outputs.
pub fn run_config_text(
    kind: ExperimentKind,
    config_text: &str,
    inputs: &InputSource,
    out_dir: &Path,
    exec: &Execution,
) -> Result<Manifest, RunError> {
    let cfg = parse_config(config_text, kind)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = exec.jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| RunError::Pool(e.to_string()))?;
    pool.install(|| run_experiment(&cfg, config_text, inputs, out_dir))
}

/// Regenerates a run from its manifest alone.
pub fn rerun_manifest(manifest: &Manifest, out_dir: &Path, exec: &Execution) -> Result<Manifest, RunError> {
    if manifest.code_version != CODE_VERSION {
        eprintln!(
            "warning: manifest written by version {}, running {}",
            manifest.code_version, CODE_VERSION
        );
    }
    let inputs = InputSource::Embedded(manifest.inputs.clone());
    run_config_text(manifest.experiment_kind()?, &manifest.config_text, &inputs, out_dir, exec)
}

/// Runs on the current rayon pool.
pub fn run_experiment(
    cfg: &RunConfig,
    config_text: &str,
    inputs: &InputSource,
    out_dir: &Path,
) -> Result<Manifest, RunError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut manifest = Manifest {
        kind: cfg.kind.name().to_string(),
        code_version: CODE_VERSION.to_string(),
        config_text: config_text.to_string(),
        seeds: cfg.seeds.clone(),
        effective_slices: Vec::new(),
        inputs: BTreeMap::new(),
        outputs: Vec::new(),
        results: Value::Null,
    };
    match cfg.kind {
        ExperimentKind::Relax => run_relax(cfg, out_dir, &mut manifest)?,
        ExperimentKind::Rates => run_rates(cfg, out_dir, &mut manifest)?,
        ExperimentKind::Collapse => run_collapse(cfg, inputs, out_dir, &mut manifest)?,
        ExperimentKind::SwCheck => run_sw_check(cfg, out_dir, &mut manifest)?,
        ExperimentKind::EdCheck => run_ed_check(cfg, out_dir, &mut manifest)?,
    }
    let path = out_dir.join(MANIFEST_NAME);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&path, |w| {
        w.write_all(text.as_bytes())?;
        w.write_all(b"\n")
    })
    .map_err(io_err(&path))?;
    Ok(manifest)
}

fn initial_state(cfg: &RunConfig) -> Result<SpinConfig, RunError> {
    let geom = cfg.geometry();
    Ok(match cfg.init {
        InitState::DomainWall { left, right, wall } => {
            domain_wall_config(&geom, left, right, wall).map_err(QmcError::from)?
        }
        InitState::Ground(s) => ground_state(&geom, s),
    })
}

fn record_slices(cfg: &RunConfig, manifest: &mut Manifest) {
    for &hx in &cfg.transverse {
        for &t in &cfg.temperatures {
            manifest.effective_slices.push(SliceRecord {
                h_x: hx,
                temperature: t,
                slices: effective_slices(cfg.slices, 1.0 / t, &cfg.params(hx)),
            });
        }
    }
}

fn write_file(out_dir: &Path, name: &str, body: &[u8]) -> Result<(), RunError> {
    let path = out_dir.join(name);
    write_atomic(&path, |w| w.write_all(body)).map_err(io_err(&path))
}

pub fn trajectory_file_name(field_index: usize, temp_index: usize, seed: u64) -> String {
    format!("relax_h{field_index}_T{temp_index}_s{seed}.jsonl")
}

fn run_relax(cfg: &RunConfig, out_dir: &Path, manifest: &mut Manifest) -> Result<(), RunError> {
    let geom = cfg.geometry();
    let init = initial_state(cfg)?;
    record_slices(cfg, manifest);

    let jobs: Vec<(usize, usize, u64)> = (0..cfg.transverse.len())
        .flat_map(|h| (0..cfg.temperatures.len()).flat_map(move |t| cfg.seeds.iter().map(move |&s| (h, t, s))))
        .collect();
    // one writer at a time; file names and contents are fixed by the job
    let collector = Mutex::new(());
    let rows: Vec<String> = jobs
        .par_iter()
        .map(|&(h, t, seed)| -> Result<String, RunError> {
            let params = cfg.params(cfg.transverse[h]);
            let temp = cfg.temperatures[t];
            let traj = run_relaxation(&geom, &init, params, temp, cfg.slices, cfg.steps, seed)?;
            let mut body = Vec::new();
            traj.write_jsonl(&geom, &mut body).expect("writing to memory");
            {
                let _guard = collector.lock().unwrap_or_else(|p| p.into_inner());
                write_file(out_dir, &trajectory_file_name(h, t, seed), &body)?;
            }
            let first = &traj.snapshots[0];
            let last = traj.snapshots.last().expect("trajectory has its initial state");
            let e0: f64 = classical_energy(&geom, first, &params).map_err(QmcError::from)?;
            let e1: f64 = classical_energy(&geom, last, &params).map_err(QmcError::from)?;
            Ok(format!(
                "{:.16e},{:.16e},{},{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                params.transverse,
                temp,
                seed,
                traj.slices,
                e0,
                e1,
                polaron_density(first),
                polaron_density(last)
            ))
        })
        .collect::<Result<_, _>>()?;

    let mut summary = String::from("h_x,T,seed,M,E_init,E_final,density_init,density_final\n");
    for r in &rows {
        summary.push_str(r);
    }
    write_file(out_dir, "relax_summary.csv", summary.as_bytes())?;
    manifest.outputs = jobs.iter().map(|&(h, t, s)| trajectory_file_name(h, t, s)).collect();
    manifest.outputs.push("relax_summary.csv".into());
    manifest.results = json!({ "trajectories": jobs.len() });
    Ok(())
}

pub fn rate_file_name(field_index: usize) -> String {
    format!("rates_h{field_index}.csv")
}

fn run_rates(cfg: &RunConfig, out_dir: &Path, manifest: &mut Manifest) -> Result<(), RunError> {
    let geom = cfg.geometry();
    let init = initial_state(cfg)?;
    record_slices(cfg, manifest);
    let mut summary = Vec::new();
    for (h, &hx) in cfg.transverse.iter().enumerate() {
        let curve = rate_vs_temperature(
            &geom,
            &init,
            cfg.params(hx),
            &cfg.temperatures,
            cfg.slices,
            cfg.steps,
            &cfg.seeds,
        )?;
        let name = rate_file_name(h);
        let mut body = Vec::new();
        curve.write_csv(&mut body).expect("writing to memory");
        write_file(out_dir, &name, &body)?;
        summary.push(json!({ "h_x": hx, "file": name, "zero_rate_points": curve.zero_rate_points() }));
        manifest.outputs.push(name);
    }
    manifest.results = json!({ "curves": summary });
    Ok(())
}

fn run_collapse(cfg: &RunConfig, inputs: &InputSource, out_dir: &Path, manifest: &mut Manifest) -> Result<(), RunError> {
    let mut curves: Vec<RateCurve> = Vec::new();
    for path in &cfg.collapse_inputs {
        let key = path.to_string_lossy().into_owned();
        let text = inputs.read(path)?;
        let parsed = RateCurve::read_csv(text.as_bytes()).map_err(|source| RunError::Input {
            path: key.clone(),
            source,
        })?;
        curves.extend(parsed);
        manifest.inputs.insert(key, text);
    }
    let dropped: usize = curves.iter().map(RateCurve::zero_rate_points).sum();
    let fit = fit_collapse_exponent(&curves, cfg.exponent_interval)?;
    let at_zero = if cfg.exponent_interval.0 <= 0.0 && cfg.exponent_interval.1 >= 0.0 {
        fit.trace.iter().find(|(n, _)| *n == 0.0).map(|&(_, r)| r)
    } else {
        None
    };
    let mut body = fit.to_json().into_bytes();
    body.push(b'\n');
    write_file(out_dir, "collapse.json", &body)?;
    manifest.outputs.push("collapse.json".into());
    manifest.results = json!({
        "n": fit.n,
        "residual": fit.residual,
        "residual_at_zero": at_zero,
        "fields": curves.iter().map(|c| c.transverse).collect::<Vec<_>>(),
        "zero_rate_points_dropped": dropped,
    });
    Ok(())
}

/// Richardson limit of `values` when `fields` (ascending) halve step by step.
fn halving_limit(fields: &[f64], values: &[f64]) -> Option<f64> {
    let halving = fields.windows(2).all(|w| (w[1] / w[0] - 2.0).abs() < 1e-12);
    halving.then(|| {
        let rev: Vec<f64> = values.iter().rev().copied().collect();
        richardson_even(&rev)
    })
}

fn sorted_fields(cfg: &RunConfig) -> Vec<f64> {
    let mut f = cfg.pair_fields.clone();
    f.sort_by(f64::total_cmp);
    f
}

fn run_sw_check(cfg: &RunConfig, out_dir: &Path, manifest: &mut Manifest) -> Result<(), RunError> {
    let fields = sorted_fields(cfg);
    let mut rows = Vec::new();
    let mut hopping = Vec::new();
    for &hx in &fields {
        let sub = SwSubspace::new(cfg.coupling, cfg.longitudinal, hx, cfg.hole_coordination, cfg.particle_coordination)?;
        let res = sub.effective_hamiltonian()?;
        hopping.push(res.tunneling_element());
        rows.push(json!({
            "h_x": hx,
            "alpha": res.alpha,
            "beta": res.beta,
            "lambda": res.lambda,
            "hopping": res.tunneling_element(),
            "commutator_residual": sub.commutator_residual(&res.generator),
            "closed_form_deviation": res.closed_form_deviation(),
            "generator": res.generator.0,
            "h_prime": res.h_prime.0,
        }));
    }
    let slope = fit_hopping_exponent(&fields, &hopping)?;
    let ratios: Vec<f64> = fields.iter().zip(&hopping).map(|(h, t)| t / (h * h)).collect();
    let results = json!({
        "hopping_exponent": slope,
        "lambda_extrapolated": halving_limit(&fields, &ratios),
    });
    let body = json!({ "fields": rows, "summary": results });
    write_file(out_dir, "sw_check.json", format!("{}\n", serde_json::to_string_pretty(&body).unwrap()).as_bytes())?;
    manifest.outputs.push("sw_check.json".into());
    manifest.results = results;
    Ok(())
}

fn run_ed_check(cfg: &RunConfig, out_dir: &Path, manifest: &mut Manifest) -> Result<(), RunError> {
    let fields = sorted_fields(cfg);
    let t = domain_wall_hopping_family(
        cfg.coupling,
        cfg.longitudinal,
        cfg.hole_coordination,
        cfg.particle_coordination,
        &fields,
    )?;
    let lambda = SwSubspace::new(
        cfg.coupling,
        cfg.longitudinal,
        fields[0],
        cfg.hole_coordination,
        cfg.particle_coordination,
    )?
    .lambda();
    let rows: Vec<Value> = fields
        .iter()
        .zip(&t)
        .map(|(&hx, &te)| json!({ "h_x": hx, "t_eff": te, "lambda_h2": lambda * hx * hx }))
        .collect();
    let slope = fit_hopping_exponent(&fields, &t)?;
    let ratios: Vec<f64> = fields.iter().zip(&t).map(|(h, t)| t / (h * h)).collect();
    let results = json!({
        "lambda": lambda,
        "hopping_exponent": slope,
        "lambda_extrapolated": halving_limit(&fields, &ratios),
    });
    let body = json!({ "fields": rows, "summary": results });
    write_file(out_dir, "ed_check.json", format!("{}\n", serde_json::to_string_pretty(&body).unwrap()).as_bytes())?;
    manifest.outputs.push("ed_check.json".into());
    manifest.results = results;
    Ok(())
}
