use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use experiments::runner::default_workers;
use experiments::{execute, ExpError, ExperimentConfig, Mode};

#[derive(Parser)]
#[command(name = "qvlasov", version, about = "Semiclassical limit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    config: PathBuf,
    /// Override the output directory from the config.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to QVLASOV_WORKERS, then all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Resolve and print the sweep without running it.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run every point in order, stopping at the first failure.
    Run(RunArgs),
    /// Run all points in parallel and fit convergence rates.
    Sweep(RunArgs),
    /// Summarize an output directory.
    Report { dir: PathBuf },
}

fn launch(args: RunArgs, mode: Mode) -> Result<i32, ExpError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let base = args.config.parent().unwrap_or(Path::new("."));
    let rc = cfg.resolve(base, args.output.as_deref())?;
    if mode == Mode::Sweep {
        experiments::runner::check_sweep_axes(&rc)?;
    }
    if args.dry_run {
        println!("{}", serde_json::to_string_pretty(&rc.points)?);
        for w in &rc.warnings {
            eprintln!("warning: {w}");
        }
        return Ok(0);
    }
    let summary = execute(&rc, mode, default_workers(args.workers))?;
    for r in &summary.results {
        println!("{} h={} eps={} n={} {} weak_error={:e}", r.point.id, r.point.hbar, r.point.epsilon, r.point.n_x, r.status, r.weak_error);
    }
    for f in &summary.fits {
        match &f.fit {
            Some(fit) => println!("fit {} vs {} [{}]: slope {:.3} +/- {:.3}", f.quantity, f.axis, f.group, fit.slope, fit.stderr),
            None => println!("fit {} vs {} [{}]: {}", f.quantity, f.axis, f.group, f.note),
        }
    }
    println!("output: {}", summary.output_dir.display());
    Ok(summary.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => launch(a, Mode::Run),
        Command::Sweep(a) => launch(a, Mode::Sweep),
        Command::Report { dir } => experiments::report::report(&dir).map(|text| {
            print!("{text}");
            0
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
