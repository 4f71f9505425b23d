//! Experiment specification files.
//!
//! ```text
//! # comments and blank lines are ignored
//! problems = quadratic:100/10, rosenbrock-chain/2, vqe:h2-like
//! solvers = qsass, sass, bfgs:qsass-bfgs
//! noise = additive
//! seeds = 30
//! master_seed = 7
//! stop = gradient
//! stop_factor = 1e-3
//! ```
//!
//! Problems are `name/n` (VQE presets fix their own dimension and take no
//! `/n`). Solvers are a preset (`qsass`, `sass`, `qsass-bfgs`), optionally
//! labeled as `label:preset`. See [`ExperimentSpec::KEYS`] for every key.

use std::fmt::Write as _;
use std::path::PathBuf;

use qsass::linalg::norm;
use qsass::oracle::{NoiseModel, DEFAULT_SAMPLE_CAP};
use qsass::problems::{builtin_problem, Problem};
use qsass::solver::{GradientMethod, OracleSetup, SolverConfig, StoppingRule, Variant, DEFAULT_PILOT};

use crate::kv::KeyValues;
use crate::BenchError;

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemEntry {
    pub name: String,
    /// Zero for problems whose dimension is fixed by the name.
    pub n: usize,
}

impl ProblemEntry {
    pub fn token(&self) -> String {
        if self.n == 0 {
            self.name.clone()
        } else {
            format!("{}/{}", self.name, self.n)
        }
    }

    pub fn parse(token: &str) -> Result<Self, String> {
        let token = token.trim();
        match token.rsplit_once('/') {
            Some((name, n)) => {
                let n: usize = n.parse().map_err(|_| format!("bad dimension in '{token}'"))?;
                if n == 0 {
                    return Err(format!("dimension must be positive in '{token}'"));
                }
                Ok(Self { name: name.to_string(), n })
            }
            None if token.starts_with("vqe:") => Ok(Self { name: token.to_string(), n: 0 }),
            None => Err(format!("'{token}' needs a dimension, as in '{token}/10'")),
        }
    }

    pub fn build(&self) -> Result<Problem, BenchError> {
        Ok(builtin_problem(&self.name, self.n)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverEntry {
    pub label: String,
    pub variant: Variant,
}

impl SolverEntry {
    pub fn token(&self) -> String {
        if self.label == self.variant.label() {
            self.label.clone()
        } else {
            format!("{}:{}", self.label, self.variant.label())
        }
    }

    pub fn parse(token: &str) -> Result<Self, String> {
        let token = token.trim();
        let (label, preset) = token.split_once(':').unwrap_or((token, token));
        let variant: Variant = preset.trim().parse().map_err(|e: qsass::solver::SolverError| e.to_string())?;
        let label = label.trim();
        if label.is_empty() || label.contains(char::is_whitespace) {
            return Err(format!("bad solver label in '{token}'"));
        }
        Ok(Self { label: label.to_string(), variant })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopKind {
    /// `||grad phi(x)|| <= stop_factor ||grad phi(x0)||`
    Gradient,
    /// `phi(x) - phi* <= stop_factor`
    Gap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientChoice {
    Direct,
    FiniteDifference,
    ParameterShift,
}

impl GradientChoice {
    fn label(self) -> &'static str {
        match self {
            GradientChoice::Direct => "direct",
            GradientChoice::FiniteDifference => "finite-difference",
            GradientChoice::ParameterShift => "parameter-shift",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub problems: Vec<ProblemEntry>,
    pub solvers: Vec<SolverEntry>,
    pub noise: NoiseModel,
    pub gradient: GradientChoice,
    pub seeds: usize,
    pub master_seed: u64,
    pub stop: StopKind,
    pub stop_factor: f64,
    /// Defaults to the stopping threshold of each problem.
    pub target_eps_bar: Option<f64>,
    pub mu: f64,
    pub kappa: f64,
    pub tau: f64,
    pub delta: f64,
    pub eps_f: Option<f64>,
    pub eps_g: Option<f64>,
    pub adaptive_eps_f: bool,
    /// Defaults to `min(30000, 500 n)` per problem.
    pub max_iterations: Option<u64>,
    pub max_samples: u64,
    pub sample_cap: u64,
    pub pilot_samples: u64,
    pub memory: Option<usize>,
    /// Wall-clock budget of the whole experiment in seconds.
    pub time_budget: Option<f64>,
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    pub const KEYS: &'static [(&'static str, &'static str)] = &[
        ("problems", "comma-separated name/n tokens (required)"),
        ("solvers", "comma-separated [label:]preset tokens, presets qsass | sass | qsass-bfgs (required)"),
        ("noise", "exact | additive | multiplicative | mixed-gaussian | vqe-measurement (default additive)"),
        ("mixed_small, mixed_large, mixed_prob", "mixed-gaussian scales and large-regime probability (1e-6, 1e6, 0.2)"),
        (
            "gradient",
            "direct | finite-difference | parameter-shift (default direct, parameter-shift for vqe-measurement)",
        ),
        ("seeds", "runs per problem and solver (default 30)"),
        ("master_seed", "root of all per-run seeds (default 0)"),
        ("stop", "gradient | gap (default gradient)"),
        ("stop_factor", "gradient: fraction of ||grad phi(x0)||; gap: absolute gap (default 1e-3)"),
        ("target_eps_bar", "eps_bar in eps_g = mu eps_bar, eps_f = eps_g^2 (default: the stopping threshold)"),
        ("mu, kappa, tau, delta", "oracle precision constants (0.01, 1, 10, 0.1)"),
        ("eps_f, eps_g", "override the derived tolerances"),
        ("adaptive_eps_f", "true | false (default true)"),
        ("max_iterations", "iteration budget (default min(30000, 500 n))"),
        ("max_samples", "sample budget per run (default unbounded)"),
        ("sample_cap", "cap on any single sample size (default 1e8)"),
        ("pilot", "pilot draws for the initial variance estimates (default 30)"),
        ("memory", "memory of qsass solvers (default 10)"),
        ("time_budget", "wall-clock seconds for the whole experiment; exhaustion exits with code 3"),
        ("output", "output directory (default: none)"),
    ];

    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let mut kv = KeyValues::parse(text)?;
        let problems_entry =
            kv.take("problems").ok_or_else(|| BenchError::spec(0, "missing required key 'problems'"))?;
        let problems = split_list(&problems_entry.value)
            .map(|t| ProblemEntry::parse(t).map_err(|m| BenchError::spec(problems_entry.line, m)))
            .collect::<Result<Vec<_>, _>>()?;
        let solvers_entry = kv.take("solvers").ok_or_else(|| BenchError::spec(0, "missing required key 'solvers'"))?;
        let solvers = split_list(&solvers_entry.value)
            .map(|t| SolverEntry::parse(t).map_err(|m| BenchError::spec(solvers_entry.line, m)))
            .collect::<Result<Vec<_>, _>>()?;
        if problems.is_empty() || solvers.is_empty() {
            return Err(BenchError::spec(0, "need at least one problem and one solver"));
        }
        for (i, s) in solvers.iter().enumerate() {
            if solvers[..i].iter().any(|o| o.label == s.label) {
                return Err(BenchError::spec(solvers_entry.line, format!("duplicate solver label '{}'", s.label)));
            }
        }

        let noise_line = kv.take("noise");
        let mixed = NoiseModel::mixed_default();
        let (d_small, d_large, d_prob) = match mixed {
            NoiseModel::MixedGaussian { small_scale, large_scale, large_prob } => {
                (small_scale, large_scale, large_prob)
            }
            _ => unreachable!(),
        };
        let small = kv.take_parsed("mixed_small")?.unwrap_or(d_small);
        let large = kv.take_parsed("mixed_large")?.unwrap_or(d_large);
        let prob = kv.take_parsed("mixed_prob")?.unwrap_or(d_prob);
        let noise = match noise_line {
            None => NoiseModel::Additive,
            Some(e) => match e.value.as_str() {
                "exact" => NoiseModel::Exact,
                "additive" => NoiseModel::Additive,
                "multiplicative" => NoiseModel::Multiplicative,
                "mixed-gaussian" => {
                    NoiseModel::MixedGaussian { small_scale: small, large_scale: large, large_prob: prob }
                }
                "vqe-measurement" => NoiseModel::VqeMeasurement,
                other => return Err(BenchError::spec(e.line, format!("unknown noise model '{other}'"))),
            },
        };
        noise.validate().map_err(|e| BenchError::spec(0, e.to_string()))?;

        let gradient = match kv.take("gradient") {
            None if noise == NoiseModel::VqeMeasurement => GradientChoice::ParameterShift,
            None => GradientChoice::Direct,
            Some(e) => match e.value.as_str() {
                "direct" => GradientChoice::Direct,
                "finite-difference" => GradientChoice::FiniteDifference,
                "parameter-shift" => GradientChoice::ParameterShift,
                other => return Err(BenchError::spec(e.line, format!("unknown gradient method '{other}'"))),
            },
        };

        let stop = match kv.take("stop") {
            None => StopKind::Gradient,
            Some(e) => match e.value.as_str() {
                "gradient" => StopKind::Gradient,
                "gap" => StopKind::Gap,
                other => return Err(BenchError::spec(e.line, format!("unknown stopping rule '{other}'"))),
            },
        };

        let spec = Self {
            problems,
            solvers,
            noise,
            gradient,
            seeds: kv.take_parsed("seeds")?.unwrap_or(30),
            master_seed: kv.take_parsed("master_seed")?.unwrap_or(0),
            stop,
            stop_factor: kv.take_parsed("stop_factor")?.unwrap_or(1e-3),
            target_eps_bar: kv.take_parsed("target_eps_bar")?,
            mu: kv.take_parsed("mu")?.unwrap_or(0.01),
            kappa: kv.take_parsed("kappa")?.unwrap_or(1.0),
            tau: kv.take_parsed("tau")?.unwrap_or(10.0),
            delta: kv.take_parsed("delta")?.unwrap_or(0.1),
            eps_f: kv.take_parsed("eps_f")?,
            eps_g: kv.take_parsed("eps_g")?,
            adaptive_eps_f: kv.take_parsed("adaptive_eps_f")?.unwrap_or(true),
            max_iterations: kv.take_count("max_iterations")?,
            max_samples: kv.take_count("max_samples")?.unwrap_or(u64::MAX),
            sample_cap: kv.take_count("sample_cap")?.unwrap_or(DEFAULT_SAMPLE_CAP),
            pilot_samples: kv.take_count("pilot")?.unwrap_or(DEFAULT_PILOT),
            memory: kv.take_parsed("memory")?,
            time_budget: kv.take_parsed("time_budget")?,
            output: kv.take("output").map(|e| PathBuf::from(e.value)),
        };
        kv.finish()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.seeds == 0 {
            return Err(BenchError::spec(0, "seeds must be at least 1"));
        }
        if self.max_samples == 0 || self.sample_cap == 0 || self.pilot_samples == 0 {
            return Err(BenchError::spec(0, "budgets must be positive"));
        }
        if !positive(self.stop_factor) || !positive(self.mu) || !positive(self.kappa) || !positive(self.tau) {
            return Err(BenchError::spec(0, "stop_factor, mu, kappa and tau must be positive"));
        }
        if let Some(v) = self.target_eps_bar {
            if !positive(v) {
                return Err(BenchError::spec(0, "target_eps_bar must be positive"));
            }
        }
        if self.time_budget.is_some_and(|t| !(t >= 0.0)) {
            return Err(BenchError::spec(0, "time_budget must be non-negative"));
        }
        if self.noise == NoiseModel::VqeMeasurement && self.gradient != GradientChoice::ParameterShift {
            return Err(BenchError::spec(0, "vqe-measurement noise needs gradient = parameter-shift"));
        }
        Ok(())
    }

    /// Builds every problem, failing before any run starts.
    pub fn resolve_problems(&self) -> Result<Vec<Problem>, BenchError> {
        let problems: Vec<Problem> = self.problems.iter().map(ProblemEntry::build).collect::<Result<_, _>>()?;
        for (entry, p) in self.problems.iter().zip(&problems) {
            if self.stop == StopKind::Gap && p.optimal_value().is_none() {
                return Err(BenchError::spec(
                    0,
                    format!("stop = gap needs a known optimum, '{}' has none", entry.token()),
                ));
            }
            if self.gradient == GradientChoice::ParameterShift && p.vqe().is_none() {
                return Err(BenchError::spec(
                    0,
                    format!("parameter-shift gradients need a VQE problem, got '{}'", entry.token()),
                ));
            }
            if self.noise == NoiseModel::VqeMeasurement && p.vqe().is_none() {
                return Err(BenchError::spec(
                    0,
                    format!("vqe-measurement noise needs a VQE problem, got '{}'", entry.token()),
                ));
            }
        }
        Ok(problems)
    }

    pub fn stopping_rule(&self, problem: &Problem) -> StoppingRule {
        match self.stop {
            StopKind::Gradient => {
                StoppingRule::GradientNorm(self.stop_factor * norm(&problem.gradient(problem.start_point())))
            }
            StopKind::Gap => StoppingRule::OptimalityGap(self.stop_factor),
        }
    }

    /// `(eps_f, eps_g)` from `eps_g = mu eps_bar`, `eps_f = eps_g^2` unless overridden.
    pub fn tolerances(&self, problem: &Problem) -> (f64, f64) {
        let eps_bar = self.target_eps_bar.unwrap_or(match self.stopping_rule(problem) {
            StoppingRule::GradientNorm(t) | StoppingRule::OptimalityGap(t) => t,
            StoppingRule::None => 0.0,
        });
        let eps_g = self.eps_g.unwrap_or(self.mu * eps_bar);
        (self.eps_f.unwrap_or(eps_g * eps_g), eps_g)
    }

    pub fn solver_config(&self, problem: &Problem, solver: &SolverEntry) -> SolverConfig {
        let (eps_f, _) = self.tolerances(problem);
        let mut config = SolverConfig::defaults(solver.variant, problem, eps_f);
        if let (Variant::Qsass, Some(m)) = (solver.variant, self.memory) {
            config.memory = Some(m);
        }
        if let Some(k) = self.max_iterations {
            config.max_iterations = k;
        }
        config.max_samples = self.max_samples;
        config.adaptive_eps_f = self.adaptive_eps_f;
        config
    }

    pub fn oracle_setup(&self, problem: &Problem) -> OracleSetup {
        let (_, eps_g) = self.tolerances(problem);
        let gradient = match self.gradient {
            GradientChoice::Direct => GradientMethod::Direct,
            GradientChoice::ParameterShift => GradientMethod::ParameterShift,
            GradientChoice::FiniteDifference => GradientMethod::FiniteDifference {
                l_bar: problem.hessian_norm_hint().filter(|v| *v > 0.0).unwrap_or(1.0),
            },
        };
        let mut setup = OracleSetup::new(self.noise, gradient, eps_g);
        setup.kappa = self.kappa;
        setup.tau = self.tau;
        setup.delta = self.delta;
        setup.sample_cap = self.sample_cap;
        setup.pilot_samples = self.pilot_samples;
        setup
    }

    /// Canonical text form; parsing it gives back an equal spec.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let list = |items: Vec<String>| items.join(", ");
        let _ = writeln!(out, "problems = {}", list(self.problems.iter().map(ProblemEntry::token).collect()));
        let _ = writeln!(out, "solvers = {}", list(self.solvers.iter().map(SolverEntry::token).collect()));
        let _ = writeln!(out, "noise = {}", self.noise.label());
        if let NoiseModel::MixedGaussian { small_scale, large_scale, large_prob } = self.noise {
            let _ = writeln!(
                out,
                "mixed_small = {small_scale:?}\nmixed_large = {large_scale:?}\nmixed_prob = {large_prob:?}"
            );
        }
        let _ = writeln!(out, "gradient = {}", self.gradient.label());
        let _ = writeln!(out, "seeds = {}", self.seeds);
        let _ = writeln!(out, "master_seed = {}", self.master_seed);
        let _ = writeln!(out, "stop = {}", if self.stop == StopKind::Gradient { "gradient" } else { "gap" });
        let _ = writeln!(out, "stop_factor = {:?}", self.stop_factor);
        if let Some(v) = self.target_eps_bar {
            let _ = writeln!(out, "target_eps_bar = {v:?}");
        }
        let _ = writeln!(
            out,
            "mu = {:?}\nkappa = {:?}\ntau = {:?}\ndelta = {:?}",
            self.mu, self.kappa, self.tau, self.delta
        );
        if let Some(v) = self.eps_f {
            let _ = writeln!(out, "eps_f = {v:?}");
        }
        if let Some(v) = self.eps_g {
            let _ = writeln!(out, "eps_g = {v:?}");
        }
        let _ = writeln!(out, "adaptive_eps_f = {}", self.adaptive_eps_f);
        if let Some(v) = self.max_iterations {
            let _ = writeln!(out, "max_iterations = {v}");
        }
        let _ = writeln!(out, "max_samples = {}", self.max_samples);
        let _ = writeln!(out, "sample_cap = {}", self.sample_cap);
        let _ = writeln!(out, "pilot = {}", self.pilot_samples);
        if let Some(m) = self.memory {
            let _ = writeln!(out, "memory = {m}");
        }
        if let Some(t) = self.time_budget {
            let _ = writeln!(out, "time_budget = {t:?}");
        }
        if let Some(p) = &self.output {
            let _ = writeln!(out, "output = {}", p.display());
        }
        out
    }
}

fn split_list(text: &str) -> impl Iterator<Item = &str> {
    text.split(',').map(str::trim).filter(|t| !t.is_empty())
}
