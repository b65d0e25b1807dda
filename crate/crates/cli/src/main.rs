use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use polaron_tfim::config::ExperimentKind;
use polaron_tfim::run::{rerun_manifest, run_config_text, Execution, InputSource, Manifest, RunError};
use polaron_tfim::parse_config;

/// Environment variable naming the default output root.
const OUT_ENV: &str = "POLARON_TFIM_OUT";

#[derive(Parser)]
#[command(name = "polaron-tfim", version, about = "Polaron dynamics in the triangular transverse-field Ising model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Relaxation trajectories from a prepared initial state.
    Relax(RunArgs),
    /// Reconfiguration rate against temperature, one curve per h_x.
    Rates(RunArgs),
    /// Collapse-exponent fit over existing rate curves.
    Collapse(RunArgs),
    /// Effective hopping of the two-spin subspace.
    SwCheck(RunArgs),
    /// Exact-diagonalization hopping of the embedded pair.
    EdCheck(RunArgs),
    /// Regenerate a run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (`section.key = value`).
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct RerunArgs {
    /// `manifest.json` of an earlier run.
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Worker threads (defaults to the available parallelism).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory; overrides `output.dir` and the environment default.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output_dir(flag: Option<PathBuf>, from_config: Option<PathBuf>, kind: ExperimentKind) -> PathBuf {
    flag.or(from_config).unwrap_or_else(|| {
        let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("polaron-tfim-out"), PathBuf::from);
        root.join(kind.name())
    })
}

fn read(path: &Path) -> Result<String, RunError> {
    std::fs::read_to_string(path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn execute(command: Command) -> Result<(Manifest, PathBuf), RunError> {
    let (kind, args) = match command {
        Command::Relax(a) => (ExperimentKind::Relax, a),
        Command::Rates(a) => (ExperimentKind::Rates, a),
        Command::Collapse(a) => (ExperimentKind::Collapse, a),
        Command::SwCheck(a) => (ExperimentKind::SwCheck, a),
        Command::EdCheck(a) => (ExperimentKind::EdCheck, a),
        Command::Rerun(r) => {
            let manifest = Manifest::from_json(&read(&r.manifest)?)?;
            let kind = manifest.experiment_kind()?;
            let cfg = parse_config(&manifest.config_text, kind)?;
            let out = output_dir(r.common.out, cfg.output_dir, kind);
            let m = rerun_manifest(&manifest, &out, &Execution { jobs: r.common.jobs })?;
            return Ok((m, out));
        }
    };
    let text = read(&args.config)?;
    let cfg = parse_config(&text, kind)?;
    let out = output_dir(args.common.out, cfg.output_dir, kind);
    let base = args
        .config
        .parent()
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let m = run_config_text(kind, &text, &InputSource::Files(base), &out, &Execution { jobs: args.common.jobs })?;
    Ok((m, out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok((manifest, out)) => {
            println!("{}: wrote {} files to {}", manifest.kind, manifest.outputs.len() + 1, out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
