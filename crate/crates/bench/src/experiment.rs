//! Multi-seed runs over every (problem, solver, seed) triple.
//!
//! Triples run on a rayon pool and are merged by triple index, so the
//! worker count never changes the output bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::profile::{data_profile, default_alpha_grid, default_tau_grid, performance_profile, ProfileCurves};
use crate::spec::ExperimentSpec;
use crate::trace::{render, RunInputs};
use crate::BenchError;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Pool size; 0 lets rayon decide.
    pub workers: usize,
    /// Directory receiving one trace file per run.
    pub trace_dir: Option<PathBuf>,
    /// Runs not started by this instant are skipped.
    pub deadline: Option<Instant>,
}

/// One finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub problem: String,
    pub n: usize,
    pub solver: String,
    pub seed_idx: usize,
    pub seed: u64,
    pub stop_reason: String,
    pub iterations: u64,
    pub samples: u64,
    /// Iterations to the stopping time, infinite on failure.
    pub metric_iterations: f64,
    /// Samples to the stopping time, infinite on failure.
    pub metric_samples: f64,
    pub final_value: f64,
    pub final_grad_norm: f64,
    pub census_fraction: f64,
    pub true_frequency: f64,
}

pub const TABLE_COLUMNS: [&str; 14] = [
    "problem",
    "n",
    "solver",
    "seed_idx",
    "seed",
    "stop_reason",
    "iterations",
    "samples",
    "metric_iterations",
    "metric_samples",
    "final_value",
    "final_grad_norm",
    "census_fraction",
    "true_frequency",
];

impl TableRow {
    pub fn solved(&self) -> bool {
        self.metric_iterations.is_finite()
    }

    fn fields(&self) -> [String; 14] {
        [
            self.problem.clone(),
            self.n.to_string(),
            self.solver.clone(),
            self.seed_idx.to_string(),
            self.seed.to_string(),
            self.stop_reason.clone(),
            self.iterations.to_string(),
            self.samples.to_string(),
            format!("{:?}", self.metric_iterations),
            format!("{:?}", self.metric_samples),
            format!("{:?}", self.final_value),
            format!("{:?}", self.final_grad_norm),
            format!("{:?}", self.census_fraction),
            format!("{:?}", self.true_frequency),
        ]
    }

    fn parse(line: &str, line_no: usize) -> Result<Self, BenchError> {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != TABLE_COLUMNS.len() {
            return Err(BenchError::spec(
                line_no,
                format!("expected {} columns, got {}", TABLE_COLUMNS.len(), cols.len()),
            ));
        }
        fn num<T: std::str::FromStr>(v: &str, line: usize) -> Result<T, BenchError> {
            v.parse().map_err(|_| BenchError::spec(line, format!("bad number '{v}'")))
        }
        Ok(Self {
            problem: cols[0].to_string(),
            n: num(cols[1], line_no)?,
            solver: cols[2].to_string(),
            seed_idx: num(cols[3], line_no)?,
            seed: num(cols[4], line_no)?,
            stop_reason: cols[5].to_string(),
            iterations: num(cols[6], line_no)?,
            samples: num(cols[7], line_no)?,
            metric_iterations: num(cols[8], line_no)?,
            metric_samples: num(cols[9], line_no)?,
            final_value: num(cols[10], line_no)?,
            final_grad_norm: num(cols[11], line_no)?,
            census_fraction: num(cols[12], line_no)?,
            true_frequency: num(cols[13], line_no)?,
        })
    }
}

/// Which stopping-time metric a profile uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Iterations,
    Samples,
}

impl Metric {
    pub fn label(self) -> &'static str {
        match self {
            Metric::Iterations => "iterations",
            Metric::Samples => "samples",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub master_seed: u64,
    pub rows: Vec<TableRow>,
    /// Triples skipped because the time budget ran out.
    pub skipped: usize,
}

impl ExperimentOutcome {
    pub fn exhausted(&self) -> bool {
        self.skipped > 0
    }

    /// Solver labels in first-appearance order.
    pub fn solvers(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.solver) {
                out.push(r.solver.clone());
            }
        }
        out
    }

    /// Instances are (problem, seed index) pairs in first-appearance order;
    /// `(metrics[instance][solver], dims[instance])`. Missing cells are infinite.
    pub fn metric_table(&self, metric: Metric) -> (Vec<Vec<f64>>, Vec<usize>) {
        let solvers = self.solvers();
        let mut index: BTreeMap<(String, usize), usize> = BTreeMap::new();
        let mut metrics: Vec<Vec<f64>> = Vec::new();
        let mut dims = Vec::new();
        for r in &self.rows {
            let key = (r.problem.clone(), r.seed_idx);
            let i = *index.entry(key).or_insert_with(|| {
                metrics.push(vec![f64::INFINITY; solvers.len()]);
                dims.push(r.n);
                metrics.len() - 1
            });
            let s = solvers.iter().position(|l| *l == r.solver).unwrap_or(0);
            metrics[i][s] = match metric {
                Metric::Iterations => r.metric_iterations,
                Metric::Samples => r.metric_samples,
            };
        }
        (metrics, dims)
    }

    pub fn performance(&self, metric: Metric) -> ProfileCurves {
        let (metrics, _) = self.metric_table(metric);
        performance_profile(&metrics, &self.solvers(), &default_tau_grid())
    }

    pub fn data(&self, metric: Metric) -> ProfileCurves {
        let (metrics, dims) = self.metric_table(metric);
        data_profile(&metrics, &dims, &self.solvers(), &default_alpha_grid())
    }

    /// Rows of one (problem, solver) cell, by seed index.
    pub fn cell(&self, problem: &str, solver: &str) -> Vec<&TableRow> {
        self.rows.iter().filter(|r| r.problem == problem && r.solver == solver).collect()
    }

    /// Tab-separated table preceded by `#key=value` metadata, including
    /// failure counts by reason.
    pub fn table_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "#master_seed={}", self.master_seed);
        let _ = writeln!(out, "#runs={}", self.rows.len());
        let _ = writeln!(out, "#skipped={}", self.skipped);
        let mut failures: BTreeMap<&str, usize> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| !r.solved()) {
            *failures.entry(r.stop_reason.as_str()).or_default() += 1;
        }
        for (reason, count) in failures {
            let _ = writeln!(out, "#failures.{reason}={count}");
        }
        out.push_str(&TABLE_COLUMNS.join("\t"));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.fields().join("\t"));
            out.push('\n');
        }
        out
    }
}

/// Reads a table written by [`ExperimentOutcome::table_text`].
pub fn parse_table(text: &str) -> Result<ExperimentOutcome, BenchError> {
    let mut master_seed = 0;
    let mut skipped = 0;
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if let Some(meta) = line.strip_prefix('#') {
            let (k, v) = meta.split_once('=').unwrap_or((meta, ""));
            match k {
                "master_seed" => master_seed = v.parse().map_err(|_| BenchError::spec(line_no, "bad master_seed"))?,
                "skipped" => skipped = v.parse().map_err(|_| BenchError::spec(line_no, "bad skipped count"))?,
                _ => {}
            }
        } else if line.trim().is_empty() {
            continue;
        } else if !header_seen {
            if line.split('\t').ne(TABLE_COLUMNS) {
                return Err(BenchError::spec(line_no, "table header does not match the expected columns"));
            }
            header_seen = true;
        } else {
            rows.push(TableRow::parse(line, line_no)?);
        }
    }
    if !header_seen {
        return Err(BenchError::spec(0, "table has no header line"));
    }
    Ok(ExperimentOutcome { master_seed, rows, skipped })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of run `seed_idx` on problem `problem_idx`. Solvers share seeds, so
/// identically configured solvers produce identical columns.
pub fn run_seed(master: u64, problem_idx: usize, seed_idx: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ problem_idx as u64) ^ seed_idx as u64)
}

fn file_token(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

/// Trace file name of one triple.
pub fn trace_file_name(problem: &str, solver: &str, seed_idx: usize) -> String {
    format!("{}__{}__{seed_idx:03}.trace", file_token(problem), file_token(solver))
}

/// Runs every triple. Spec errors surface before any run starts.
pub fn run_experiment(spec: &ExperimentSpec, options: &RunOptions) -> Result<ExperimentOutcome, BenchError> {
    spec.validate()?;
    let problems = spec.resolve_problems()?;
    let mut jobs = Vec::new();
    for (pi, (entry, problem)) in spec.problems.iter().zip(&problems).enumerate() {
        let setup = spec.oracle_setup(problem);
        let stopping = spec.stopping_rule(problem);
        for solver in &spec.solvers {
            let config = spec.solver_config(problem, solver);
            config.validate()?;
            for seed_idx in 0..spec.seeds {
                let inputs = RunInputs {
                    problem: entry.clone(),
                    solver_label: solver.label.clone(),
                    config: config.clone(),
                    setup,
                    stopping,
                    seed: run_seed(spec.master_seed, pi, seed_idx),
                };
                jobs.push((pi, seed_idx, inputs));
            }
        }
    }
    if let Some(dir) = &options.trace_dir {
        fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| BenchError::spec(0, format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<Option<TableRow>, BenchError>> = pool.install(|| {
        jobs.par_iter()
            .map(|(pi, seed_idx, inputs)| {
                if options.deadline.is_some_and(|d| Instant::now() >= d) {
                    return Ok(None);
                }
                let problem = &problems[*pi];
                let trace = inputs.execute(problem)?;
                if let Some(dir) = &options.trace_dir {
                    let path = dir.join(trace_file_name(&inputs.problem.token(), &inputs.solver_label, *seed_idx));
                    fs::write(&path, render(inputs, &trace)).map_err(|e| BenchError::io(&path, e))?;
                }
                let metric = |v: Option<u64>| v.map_or(f64::INFINITY, |v| v as f64);
                Ok(Some(TableRow {
                    problem: inputs.problem.token(),
                    n: problem.dim(),
                    solver: inputs.solver_label.clone(),
                    seed_idx: *seed_idx,
                    seed: inputs.seed,
                    stop_reason: trace.stop_reason.label().to_string(),
                    iterations: trace.iterations,
                    samples: trace.total_samples,
                    metric_iterations: metric(trace.stopping_iteration),
                    metric_samples: metric(trace.stopping_samples),
                    final_value: trace.final_value,
                    final_grad_norm: trace.final_grad_norm,
                    census_fraction: trace.census_fraction(),
                    true_frequency: trace.true_iteration_frequency(),
                }))
            })
            .collect()
    });

    let mut rows = Vec::with_capacity(results.len());
    let mut skipped = 0;
    for r in results {
        match r? {
            Some(row) => rows.push(row),
            None => skipped += 1,
        }
    }
    Ok(ExperimentOutcome { master_seed: spec.master_seed, rows, skipped })
}

/// Profile files as `(file name, contents)`, for both metrics.
pub fn profile_files(outcome: &ExperimentOutcome) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for metric in [Metric::Iterations, Metric::Samples] {
        out.push((format!("performance_{}.tsv", metric.label()), outcome.performance(metric).to_tsv("tau")));
        out.push((format!("data_{}.tsv", metric.label()), outcome.data(metric).to_tsv("alpha")));
    }
    out
}

fn write(path: &Path, text: &str) -> Result<(), BenchError> {
    fs::write(path, text).map_err(|e| BenchError::io(path, e))
}

/// Writes `table`, `profiles/*.tsv` and, when given, the `spec` echo.
pub fn write_outputs(outcome: &ExperimentOutcome, spec: Option<&ExperimentSpec>, dir: &Path) -> Result<(), BenchError> {
    let profiles = dir.join("profiles");
    fs::create_dir_all(&profiles).map_err(|e| BenchError::io(&profiles, e))?;
    write(&dir.join("table"), &outcome.table_text())?;
    for (name, text) in profile_files(outcome) {
        write(&profiles.join(name), &text)?;
    }
    if let Some(spec) = spec {
        write(&dir.join("spec"), &spec.to_text())?;
    }
    Ok(())
}
