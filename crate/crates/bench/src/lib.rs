//! Experiment orchestration for the `qsass` solvers: multi-seed runs over
//! problem and solver grids, performance and data profiles, complexity
//! bounds from input files, and trace replay.

// NaN must fail the positivity checks, so they are written as negations.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod experiment;
pub mod kv;
pub mod profile;
pub mod spec;
pub mod theory_file;
pub mod trace;

use std::path::PathBuf;

use thiserror::Error;

pub use experiment::{parse_table, run_experiment, write_outputs, ExperimentOutcome, Metric, RunOptions, TableRow};
pub use profile::{data_profile, performance_profile, ProfileCurves};
pub use spec::ExperimentSpec;

/// Process exit code for spec and input errors.
pub const EXIT_SPEC: i32 = 2;
/// Process exit code when the orchestrator's own time budget runs out.
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("line {line}: {message}")]
    Spec { line: usize, message: String },
    #[error("{0}")]
    Problem(#[from] qsass::problems::ProblemError),
    #[error("{0}")]
    Solver(#[from] qsass::solver::SolverError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("replay mismatch: {0}")]
    Replay(String),
}

impl BenchError {
    pub fn spec(line: usize, message: impl Into<String>) -> Self {
        BenchError::Spec { line, message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Spec { .. } | BenchError::Problem(_) => EXIT_SPEC,
            BenchError::Solver(qsass::solver::SolverError::Config(_)) => EXIT_SPEC,
            _ => 1,
        }
    }
}
