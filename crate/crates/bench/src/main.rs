use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand};

use qsass::problems::registry;
use qsass::theory::evaluate;
use qsass_bench::experiment::{parse_table, profile_files, Metric};
use qsass_bench::theory_file::parse_theory_inputs;
use qsass_bench::{
    run_experiment, trace, write_outputs, BenchError, ExperimentSpec, RunOptions, EXIT_BUDGET, EXIT_SPEC,
};

/// Worker-count override for experiment runs.
const WORKERS_ENV: &str = "QSASS_WORKERS";

#[derive(Parser)]
#[command(
    name = "qsass-bench",
    version,
    about = "Run solver experiments, build profiles and evaluate complexity bounds"
)]
struct Cli {
    /// Override the master seed of the experiment spec.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (problem, solver, seed) triple of a spec file.
    Run {
        spec: PathBuf,
        /// Output directory, overriding the spec's `output` key.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build performance and data profiles from a result table.
    Profile {
        table: PathBuf,
        /// Write the profile files here instead of printing them.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print every constant and bound for a theory input file.
    Theory { inputs: PathBuf },
    /// List the built-in problems.
    ListProblems,
    /// Rerun a trace and check it is reproduced byte for byte.
    Replay { trace: PathBuf },
}

fn read_input(path: &Path) -> Result<String, BenchError> {
    std::fs::read_to_string(path).map_err(|e| BenchError::spec(0, format!("cannot read {}: {e}", path.display())))
}

fn workers() -> Result<usize, BenchError> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| BenchError::spec(0, format!("{WORKERS_ENV} must be a non-negative integer, got '{v}'"))),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

fn run(spec_path: &Path, output: Option<PathBuf>, seed: Option<u64>) -> Result<i32, BenchError> {
    let mut spec = ExperimentSpec::parse(&read_input(spec_path)?)?;
    if let Some(s) = seed {
        spec.master_seed = s;
    }
    if output.is_some() {
        spec.output = output;
    }
    let options = RunOptions {
        workers: workers()?,
        trace_dir: spec.output.as_ref().map(|d| d.join("traces")),
        deadline: spec.time_budget.map(|t| Instant::now() + Duration::from_secs_f64(t)),
    };
    let outcome = run_experiment(&spec, &options)?;
    if let Some(dir) = &spec.output {
        write_outputs(&outcome, Some(&spec), dir)?;
    }

    println!("problem\tsolver\tsolved\tmedian_iterations\tmedian_samples");
    for entry in &spec.problems {
        for solver in &spec.solvers {
            let cell = outcome.cell(&entry.token(), &solver.label);
            let solved = cell.iter().filter(|r| r.solved()).count();
            let it = median(cell.iter().map(|r| r.metric_iterations).collect());
            let sa = median(cell.iter().map(|r| r.metric_samples).collect());
            println!("{}\t{}\t{solved}/{}\t{it}\t{sa}", entry.token(), solver.label, cell.len());
        }
    }
    if outcome.exhausted() {
        eprintln!("time budget exhausted: {} runs skipped", outcome.skipped);
        return Ok(EXIT_BUDGET);
    }
    Ok(0)
}

fn profile(table: &Path, output: Option<PathBuf>) -> Result<i32, BenchError> {
    let outcome = parse_table(&read_input(table)?)?;
    match output {
        Some(dir) => {
            std::fs::create_dir_all(&dir).map_err(|e| BenchError::io(&dir, e))?;
            for (name, text) in profile_files(&outcome) {
                let path = dir.join(name);
                std::fs::write(&path, text).map_err(|e| BenchError::io(&path, e))?;
            }
        }
        None => {
            for metric in [Metric::Iterations, Metric::Samples] {
                println!("# performance profile, {}", metric.label());
                print!("{}", outcome.performance(metric).to_tsv("tau"));
                println!("# data profile, {}", metric.label());
                print!("{}", outcome.data(metric).to_tsv("alpha"));
            }
        }
    }
    Ok(0)
}

fn dispatch(cli: Cli) -> Result<i32, BenchError> {
    match cli.command {
        Command::Run { spec, output } => run(&spec, output, cli.seed),
        Command::Profile { table, output } => profile(&table, output),
        Command::Theory { inputs } => {
            let inputs = parse_theory_inputs(&read_input(&inputs)?)?;
            print!("{}", evaluate(&inputs).render());
            Ok(0)
        }
        Command::ListProblems => {
            for (name, about) in registry() {
                println!("{name}\t{about}");
            }
            Ok(0)
        }
        Command::Replay { trace: path } => {
            let result = trace::replay(&read_input(&path)?)?;
            println!("replay ok: {} iterations, {} samples", result.iterations, result.total_samples);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_SPEC as u8 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
