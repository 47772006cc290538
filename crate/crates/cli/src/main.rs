use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use semirte_cli::{parse, run, ExperimentSpec, Kind, RunError};

#[derive(Parser)]
#[command(name = "semirte", version, about = "Semilinear transport experiments from JSON specs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Semilinear transport solve and internal data.
    Forward(RunArgs),
    /// Semilinear diffusion limit.
    Diffusion(RunArgs),
    /// Absorption and coefficient recovery from internal data.
    Invert(RunArgs),
    /// Spectral gap of the Peierls operator over epsilon.
    SpectralScan(RunArgs),
    /// Weighted and unweighted stability ratios over epsilon.
    StabilityScan(RunArgs),
    /// Transport vs diffusion-limit error over epsilon.
    DiffusionLimitScan(RunArgs),
    /// Check a spec without computing.
    Validate {
        #[arg(long)]
        spec: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Parent of the run directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Only warnings and errors on stderr.
    #[arg(long)]
    quiet: bool,
}

fn load(path: &Path) -> Result<ExperimentSpec, RunError> {
    let text = fs::read_to_string(path).map_err(|e| RunError::Validation(vec![format!("{}: {e}", path.display())]))?;
    parse(&text).map_err(|e| RunError::Validation(vec![format!("{}: {e}", path.display())]))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn execute(kind: Kind, args: RunArgs) -> Result<(), RunError> {
    let level = if args.quiet { "warn" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(RunError::Validation(vec!["--threads must be positive".into()]));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| RunError::Io(e.to_string()))?;
    }
    let spec = load(&args.spec)?;
    if spec.kind != kind {
        return Err(RunError::Validation(vec![format!(
            "spec kind is `{}` but the `{}` subcommand was used",
            spec.kind.name(),
            kind.name()
        )]));
    }
    let manifest = run(&spec, &base_dir(&args.spec), &args.out)?;
    println!("{}", semirte_cli::run_dir(&args.out, &spec).display());
    if !args.quiet {
        for (name, digest) in &manifest.outputs {
            eprintln!("  {name}  {}", &digest[..16]);
        }
    }
    Ok(())
}

fn validate(path: &Path) -> Result<(), RunError> {
    let spec = load(path)?;
    let diags = spec.diagnostics(&base_dir(path));
    if diags.is_empty() {
        println!("{}: ok ({})", path.display(), spec.kind.name());
        Ok(())
    } else {
        Err(RunError::Validation(diags))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Forward(a) => execute(Kind::Forward, a),
        Command::Diffusion(a) => execute(Kind::Diffusion, a),
        Command::Invert(a) => execute(Kind::Invert, a),
        Command::SpectralScan(a) => execute(Kind::SpectralScan, a),
        Command::StabilityScan(a) => execute(Kind::StabilityScan, a),
        Command::DiffusionLimitScan(a) => execute(Kind::DiffusionLimitScan, a),
        Command::Validate { spec } => validate(&spec),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
