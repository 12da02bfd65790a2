use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use collapse_lab::{
    experiments, output_dir, parallel, validate_config, ExperimentConfig, EXIT_FAIL, EXIT_PASS, EXIT_SOLVER,
    EXIT_USAGE,
};

#[derive(Parser)]
#[command(name = "collapse-lab", version, about = "Numerical experiments on collapsing Kähler-Ricci flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its report bundle.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the registered experiments.
    List {
        #[arg(long)]
        json: bool,
    },
    /// Parse and validate a config, printing it with defaults filled.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &Path) -> Result<ExperimentConfig, i32> {
    let raw = fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        EXIT_USAGE
    })?;
    validate_config(&raw).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_USAGE
    })
}

fn run(config_path: &Path, out: Option<&Path>) -> Result<i32, i32> {
    let config = load(config_path)?;
    let threads = parallel::thread_budget().map_err(|e| {
        eprintln!("error: {e}");
        EXIT_USAGE
    })?;
    let dir = output_dir(&config, out);
    let io_error = |e: std::io::Error| {
        eprintln!("error: cannot write to {}: {e}", dir.display());
        EXIT_USAGE
    };
    match experiments::run(&config, threads) {
        Ok(report) => {
            report.write(&dir, &config.to_json()).map_err(io_error)?;
            for check in &report.checks {
                println!(
                    "{} {:<40} measured {:e} bound {:e}",
                    if check.passed { "PASS" } else { "FAIL" },
                    check.name,
                    check.measured,
                    check.bound
                );
            }
            Ok(if report.passed() { EXIT_PASS } else { EXIT_FAIL })
        }
        Err(e) => {
            eprintln!("solver error: {e}");
            fs::create_dir_all(&dir).map_err(io_error)?;
            fs::write(dir.join("error.txt"), format!("{}\n{e}\n{e:?}\n", config.name.as_str())).map_err(io_error)?;
            Ok(EXIT_SOLVER)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, out } => run(&config, out.as_deref()).unwrap_or_else(|c| c),
        Command::List { json } => {
            if json {
                println!("{}", serde_json::to_string_pretty(&collapse_lab::experiment_json()).expect("JSON"));
            } else {
                print!("{}", collapse_lab::experiment_table());
            }
            EXIT_PASS
        }
        Command::Validate { config } => match load(&config) {
            Ok(c) => {
                println!("{}", serde_json::to_string_pretty(&c.to_json()).expect("JSON"));
                EXIT_PASS
            }
            Err(code) => code,
        },
    };
    ExitCode::from(code as u8)
}
