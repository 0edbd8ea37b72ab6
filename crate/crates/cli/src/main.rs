use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use privcon_cli::commands::{self, write_file, CliError, CliResult};
use privcon_cli::config::{load_config, parse_list, ExperimentConfig};

#[derive(Parser)]
#[command(name = "privcon", version, about = "Differentially private consensus simulator")]
struct Cli {
    /// Size of the worker pool (defaults to the number of cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write trace.csv, observation.csv and summary.txt.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate privacy and accuracy across the configured sweep; writes sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the convergence condition for a graph file.
    CheckGraph {
        graph: PathBuf,
        /// One coefficient for every client, or a bracketed per-client list.
        #[arg(long)]
        sigma: String,
    },
    /// Verify the noise coupling for client k shifted by delta.
    Couple {
        #[arg(long)]
        config: PathBuf,
        /// 1-based client index.
        #[arg(long)]
        k: usize,
        #[arg(long, allow_negative_numbers = true)]
        delta: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(path: &Path, seed: Option<u64>) -> CliResult<ExperimentConfig> {
    let mut cfg = load_config(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Run { config, out, seed } => {
            let cfg = load(&config, seed)?;
            let res = commands::run(&cfg)?;
            ensure_dir(&out)?;
            write_file(&out.join("trace.csv"), &res.trace_csv)?;
            write_file(&out.join("observation.csv"), &res.observation_csv)?;
            write_file(&out.join("summary.txt"), &res.summary)?;
            print!("{}", res.summary);
        }
        Command::Sweep { config, out, seed } => {
            let cfg = load(&config, seed)?;
            let csv = commands::sweep_csv(&commands::sweep(&cfg)?);
            ensure_dir(&out)?;
            write_file(&out.join("sweep.csv"), &csv)?;
            print!("{csv}");
        }
        Command::CheckGraph { graph, sigma } => {
            let g = commands::read_graph(&graph)?;
            let sigma = if sigma.trim_start().starts_with('[') {
                parse_list(&sigma)
            } else {
                sigma.trim().parse::<f64>().ok().map(|s| vec![s])
            }
            .ok_or_else(|| CliError::Usage(format!("cannot parse --sigma `{sigma}`")))?;
            let check = commands::check_graph(&g, &sigma)?;
            print!("{check}");
        }
        Command::Couple { config, k, delta, seed } => {
            let cfg = load(&config, seed)?;
            print!("{}", commands::couple(&cfg, k, delta)?.render());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprint!("error: {e}");
            if !e.to_string().ends_with('\n') {
                eprintln!();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
