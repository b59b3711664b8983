use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use survkit::pipeline::{render_table, rerender, run_pipeline, write_synthetic};
use survkit::synth::SynthSpec;
use survkit::Error;

const THREADS_VAR: &str = "SURVKIT_THREADS";

#[derive(Parser)]
#[command(name = "survkit", version, about = "Survival classification pipeline on clinical and genomic tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every learner in a config and write reports to its out_dir.
    Run { config: PathBuf },
    /// Generate synthetic tables, their schema and a starter config.
    Synth {
        /// TOML file with generator settings; omitted keys take defaults.
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild table.md from report.json in a finished run directory.
    Report { dir: PathBuf },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Config(format!("config error: {THREADS_VAR} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))
}

fn execute(cmd: Command) -> Result<(), Failure> {
    init_threads()?;
    match cmd {
        Command::Run { config } => {
            let (report, out) = run_pipeline(&config).map_err(|e| {
                if e.is_config() {
                    Failure::Config(e.to_string())
                } else {
                    Failure::Runtime(e.to_string())
                }
            })?;
            print!("{}", render_table(&report));
            eprintln!("reports written to {}", out.display());
        }
        Command::Synth { spec, out } => {
            let spec = SynthSpec::from_path(&spec)?;
            let t = write_synthetic(&spec, &out)?;
            println!(
                "wrote {} patients to {} (informative genes: {})",
                t.clinical.n_rows(),
                out.display(),
                t.informative_genes.join(", ")
            );
        }
        Command::Report { dir } => print!("{}", rerender(&dir)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("survkit: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("survkit: {msg}");
            ExitCode::from(1)
        }
    }
}
