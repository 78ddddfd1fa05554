use clap::Parser;
use dynact::config::PipelineConfig;
use dynact::pipeline::{self, Stage};
use dynact::Error;
use std::path::PathBuf;
use std::process::ExitCode;

/// Dynamic CT simulation, elastic motion estimation and motion-compensated
/// reconstruction.
///
/// Exit codes: 0 ok, 2 configuration, 3 input/output, 4 solver instability,
/// 5 dimension mismatch. DYNACT_THREADS caps the number of worker threads.
#[derive(Parser, Debug)]
#[command(name = "dynact", version)]
struct Cli {
    #[arg(value_enum)]
    stage: Stage,
    /// Pipeline configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overrides the configured one
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed, overrides the configured one
    #[arg(long)]
    seed: Option<u64>,
}

fn threads() -> Result<usize, Error> {
    match std::env::var("DYNACT_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(vec![format!(
                "DYNACT_THREADS must be a positive integer, got {v:?}"
            )])),
        },
        Err(_) => Ok(0),
    }
}

fn main_inner(cli: Cli) -> Result<(), Error> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.unwrap_or_else(|| cfg.output_dir.clone());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads()?)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker threads: {e}")))?;
    pool.install(|| pipeline::run(cli.stage, &cfg, &out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dynact: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
