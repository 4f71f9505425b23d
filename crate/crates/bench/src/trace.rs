//! Self-describing run traces and their replay.
//!
//! A trace starts with `#key=value` lines holding everything needed to rerun
//! it (problem token, seed, every solver and oracle constant), then
//! `#result.*` summary lines, then the per-iteration table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use qsass::oracle::NoiseModel;
use qsass::problems::Problem;
use qsass::solver::{run, GradientMethod, OracleSetup, RunTrace, SolverConfig, StoppingRule, Variant};

use crate::spec::ProblemEntry;
use crate::BenchError;

pub const FORMAT: &str = "qsass-trace-1";

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunInputs {
    pub problem: ProblemEntry,
    pub solver_label: String,
    pub config: SolverConfig,
    pub setup: OracleSetup,
    pub stopping: StoppingRule,
    pub seed: u64,
}

fn opt<T: std::fmt::Debug>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |x| format!("{x:?}"))
}

impl RunInputs {
    pub fn execute(&self, problem: &Problem) -> Result<RunTrace, BenchError> {
        Ok(run(problem, &self.config, &self.setup, self.stopping, self.seed)?)
    }

    pub fn metadata(&self) -> Vec<(String, String)> {
        let c = &self.config;
        let s = &self.setup;
        let mut m: Vec<(String, String)> = vec![
            ("format".into(), FORMAT.into()),
            ("problem".into(), self.problem.token()),
            ("solver".into(), self.solver_label.clone()),
            ("seed".into(), self.seed.to_string()),
            ("variant".into(), c.variant.label().into()),
            ("theta".into(), format!("{:?}", c.theta)),
            ("gamma".into(), format!("{:?}", c.gamma)),
            ("alpha_0".into(), format!("{:?}", c.alpha_0)),
            ("memory".into(), opt(c.memory)),
            ("sigma_lb_b".into(), format!("{:?}", c.sigma_lb_b)),
            ("sigma_ub_b".into(), format!("{:?}", c.sigma_ub_b)),
            ("theta_ip".into(), format!("{:?}", c.theta_ip)),
            ("eps_f".into(), format!("{:?}", c.eps_f)),
            ("c".into(), format!("{:?}", c.c)),
            ("max_iterations".into(), c.max_iterations.to_string()),
            ("max_samples".into(), c.max_samples.to_string()),
            ("adaptive_eps_f".into(), c.adaptive_eps_f.to_string()),
            ("alpha_cap".into(), opt(c.alpha_cap)),
            ("census_max_dim".into(), c.census_max_dim.to_string()),
            ("noise".into(), s.noise.label().into()),
        ];
        if let NoiseModel::MixedGaussian { small_scale, large_scale, large_prob } = s.noise {
            m.push(("mixed_small".into(), format!("{small_scale:?}")));
            m.push(("mixed_large".into(), format!("{large_scale:?}")));
            m.push(("mixed_prob".into(), format!("{large_prob:?}")));
        }
        m.push(("gradient".into(), s.gradient.label().into()));
        if let GradientMethod::FiniteDifference { l_bar } = s.gradient {
            m.push(("l_bar".into(), format!("{l_bar:?}")));
        }
        m.extend([
            ("eps_g".into(), format!("{:?}", s.eps_g)),
            ("tau".into(), format!("{:?}", s.tau)),
            ("kappa".into(), format!("{:?}", s.kappa)),
            ("delta".into(), format!("{:?}", s.delta)),
            ("pilot".into(), s.pilot_samples.to_string()),
            ("sample_cap".into(), s.sample_cap.to_string()),
        ]);
        let (rule, threshold) = match self.stopping {
            StoppingRule::GradientNorm(t) => ("gradient-norm", format!("{t:?}")),
            StoppingRule::OptimalityGap(t) => ("optimality-gap", format!("{t:?}")),
            StoppingRule::None => ("none", "0.0".into()),
        };
        m.push(("stop".into(), rule.into()));
        m.push(("stop_threshold".into(), threshold));
        m
    }

    pub fn from_metadata(meta: &BTreeMap<String, String>) -> Result<Self, BenchError> {
        let get = |k: &str| {
            meta.get(k).map(String::as_str).ok_or_else(|| BenchError::spec(0, format!("trace lacks '#{k}='")))
        };
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T, BenchError> {
            v.parse().map_err(|_| BenchError::spec(0, format!("trace field '{k}' has bad value '{v}'")))
        }
        let real = |k: &str| -> Result<f64, BenchError> { num(k, get(k)?) };
        let count = |k: &str| -> Result<u64, BenchError> { num(k, get(k)?) };
        let optional = |k: &str| -> Result<Option<String>, BenchError> {
            Ok(match get(k)? {
                "none" => None,
                v => Some(v.to_string()),
            })
        };
        if get("format")? != FORMAT {
            return Err(BenchError::spec(0, format!("unsupported trace format '{}'", get("format")?)));
        }
        let variant: Variant = get("variant")?.parse()?;
        let config = SolverConfig {
            theta: real("theta")?,
            gamma: real("gamma")?,
            alpha_0: real("alpha_0")?,
            memory: optional("memory")?.map(|v| num("memory", &v)).transpose()?,
            sigma_lb_b: real("sigma_lb_b")?,
            sigma_ub_b: real("sigma_ub_b")?,
            theta_ip: real("theta_ip")?,
            eps_f: real("eps_f")?,
            c: real("c")?,
            variant,
            max_iterations: count("max_iterations")?,
            max_samples: count("max_samples")?,
            adaptive_eps_f: num("adaptive_eps_f", get("adaptive_eps_f")?)?,
            alpha_cap: optional("alpha_cap")?.map(|v| num("alpha_cap", &v)).transpose()?,
            census_max_dim: num("census_max_dim", get("census_max_dim")?)?,
        };
        let noise = match get("noise")? {
            "exact" => NoiseModel::Exact,
            "additive" => NoiseModel::Additive,
            "multiplicative" => NoiseModel::Multiplicative,
            "vqe-measurement" => NoiseModel::VqeMeasurement,
            "mixed-gaussian" => NoiseModel::MixedGaussian {
                small_scale: real("mixed_small")?,
                large_scale: real("mixed_large")?,
                large_prob: real("mixed_prob")?,
            },
            other => return Err(BenchError::spec(0, format!("unknown noise '{other}' in trace"))),
        };
        let gradient = match get("gradient")? {
            "direct" => GradientMethod::Direct,
            "parameter-shift" => GradientMethod::ParameterShift,
            "finite-difference" => GradientMethod::FiniteDifference { l_bar: real("l_bar")? },
            other => return Err(BenchError::spec(0, format!("unknown gradient method '{other}' in trace"))),
        };
        let setup = OracleSetup {
            noise,
            gradient,
            eps_g: real("eps_g")?,
            tau: real("tau")?,
            kappa: real("kappa")?,
            delta: real("delta")?,
            pilot_samples: count("pilot")?,
            sample_cap: count("sample_cap")?,
        };
        let threshold = real("stop_threshold")?;
        let stopping = match get("stop")? {
            "gradient-norm" => StoppingRule::GradientNorm(threshold),
            "optimality-gap" => StoppingRule::OptimalityGap(threshold),
            "none" => StoppingRule::None,
            other => return Err(BenchError::spec(0, format!("unknown stopping rule '{other}' in trace"))),
        };
        Ok(Self {
            problem: ProblemEntry::parse(get("problem")?).map_err(|m| BenchError::spec(0, m))?,
            solver_label: get("solver")?.to_string(),
            config,
            setup,
            stopping,
            seed: count("seed")?,
        })
    }
}

/// Full trace text for a finished run.
pub fn render(inputs: &RunInputs, trace: &RunTrace) -> String {
    let mut out = String::new();
    for (k, v) in inputs.metadata() {
        let _ = writeln!(out, "#{k}={v}");
    }
    for (k, v) in trace.summary() {
        let _ = writeln!(out, "#result.{k}={v}");
    }
    out.push_str(&trace.table());
    out
}

/// Leading `#key=value` lines of a trace.
pub fn parse_metadata(text: &str) -> Result<BTreeMap<String, String>, BenchError> {
    let mut meta = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let Some(rest) = line.strip_prefix('#') else { break };
        let (k, v) =
            rest.split_once('=').ok_or_else(|| BenchError::spec(i + 1, format!("bad metadata line '{line}'")))?;
        meta.insert(k.to_string(), v.to_string());
    }
    Ok(meta)
}

/// Reruns a trace and checks the regenerated text is byte-identical.
pub fn replay(text: &str) -> Result<RunTrace, BenchError> {
    let inputs = RunInputs::from_metadata(&parse_metadata(text)?)?;
    let problem = inputs.problem.build()?;
    let trace = inputs.execute(&problem)?;
    let again = render(&inputs, &trace);
    if again != text {
        let line = again.lines().zip(text.lines()).position(|(a, b)| a != b).map_or_else(
            || format!("length differs ({} vs {} bytes)", again.len(), text.len()),
            |i| format!("first difference at line {}", i + 1),
        );
        return Err(BenchError::Replay(line));
    }
    Ok(trace)
}
