use std::path::{Path, PathBuf};
use std::process::ExitCode;

use backmc::config::{load_config, Experiment};
use backmc::output::{to_csv, write_atomic};
use backmc::report::{self, ReproduceOptions};
use backmc::run::{build_chain, expm_check, grid_rows, run_experiment, write_run};
use backmc::CliError;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "backmc",
    version,
    about = "Backward Monte Carlo pricing on Markov chain approximations"
)]
struct Cli {
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "BACKMC_THREADS")]
    threads: Option<usize>,
    /// Directory for all artifacts.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// What to print on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Table,
}

#[derive(Subcommand)]
enum Command {
    /// Build the chain and price every payoff of a JSON config.
    Run { config: PathBuf },
    /// Rerun a published experiment and compare.
    Reproduce {
        #[arg(value_enum)]
        experiment: Study,
        #[arg(long, default_value_t = 100)]
        n_points: usize,
        #[arg(long, default_value_t = 10_000)]
        n_mc: usize,
        /// Seed replications for median error ratios.
        #[arg(long, default_value_t = 20)]
        replications: usize,
    },
    /// Build the chain of a config and dump its grids and marginals.
    Quantize { config: PathBuf },
    /// Matrix-exponential diagnostics on the generator grid of a config.
    ExpmCheck { config: PathBuf },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Study {
    Table1,
    Table2,
    Table3,
    #[value(name = "appendixC", alias = "appendixc")]
    AppendixC,
}

fn resolve(path: &Path) -> Result<Experiment, CliError> {
    let cfg = load_config(path)?;
    cfg.resolve(path.parent().unwrap_or(Path::new(".")))
}

fn emit(format: Format, table: &str, csv: &[u8]) {
    match format {
        Format::Table => print!("{table}"),
        Format::Csv => print!("{}", String::from_utf8_lossy(csv)),
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Run { config } => {
            let exp = resolve(config)?;
            let out = run_experiment(&exp, cli.seed.unwrap_or(exp.seed))?;
            write_run(&exp, &out, &cli.out_dir)?;
            emit(cli.format, &out.summary, &out.results_csv);
        }
        Command::Quantize { config } => {
            let exp = resolve(config)?;
            let mut grid_rows_all = Vec::new();
            let mut diagnostics = Vec::new();
            for (label, model) in &exp.models {
                let built = build_chain(&exp, label, model)?;
                grid_rows_all.extend(grid_rows(label, &built.chain));
                diagnostics.extend(built.diagnostics);
            }
            let grids = to_csv(&grid_rows_all)?;
            write_atomic(&cli.out_dir.join("grids.csv"), &grids)?;
            let diag = to_csv(&diagnostics)?;
            write_atomic(&cli.out_dir.join(&exp.diagnostics), &diag)?;
            emit(cli.format, &String::from_utf8_lossy(&diag), &grids);
        }
        Command::ExpmCheck { config } => {
            let exp = resolve(config)?;
            let csv = to_csv(&expm_check(&exp)?)?;
            write_atomic(&cli.out_dir.join("expm_check.csv"), &csv)?;
            emit(cli.format, &String::from_utf8_lossy(&csv), &csv);
        }
        Command::Reproduce {
            experiment,
            n_points,
            n_mc,
            replications,
        } => {
            let opts = ReproduceOptions {
                n_points: *n_points,
                n_mc: *n_mc,
                seed: cli.seed.unwrap_or(0),
                replications: *replications,
            };
            let rep = match experiment {
                Study::Table1 => report::table1(&opts)?,
                Study::Table2 => report::table2(&opts)?,
                Study::Table3 => report::table3(&opts)?,
                Study::AppendixC => report::appendix_c()?,
            };
            let csv = rep.csv()?;
            write_atomic(&cli.out_dir.join(format!("reproduce_{}.csv", rep.name)), &csv)?;
            emit(cli.format, &rep.text(), &csv);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("backmc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
