//! Quasi-Newton stochastic adaptive step search and its variants.
//!
//! One iteration draws a gradient estimate, updates the curvature-pair store,
//! takes the trial step `x+ = x - alpha H g`, and accepts it when the noisy
//! sufficient-decrease test passes. `Sass` is the memoryless baseline and
//! `QsassBfgs` keeps every pair with no spectrum control.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::lbfgs::{CurvaturePairStore, SpectrumBounds, StoreError, DEFAULT_THETA_IP};
use crate::linalg::{self, dot, norm, Matrix};
use crate::oracle::{
    adaptive_eps_f, adaptive_eps_g, compute_sample_sizes, fd_base_std, fd_sample_size, GradientEstimate, NoiseModel,
    OracleError, OracleModel, DEFAULT_SAMPLE_CAP,
};
use crate::problems::Problem;

pub const DEFAULT_THETA: f64 = 0.2;
pub const DEFAULT_GAMMA: f64 = 0.8;
pub const DEFAULT_MEMORY: usize = 10;
/// Floor on the upper spectrum bound used by the experiment defaults.
pub const SPECTRUM_FLOOR: f64 = 1e4;
pub const DEFAULT_PILOT: u64 = 30;
/// Problems above this dimension skip the dense census for `QsassBfgs`.
pub const DEFAULT_CENSUS_MAX_DIM: usize = 64;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Qsass,
    Sass,
    QsassBfgs,
}

impl Variant {
    pub fn label(&self) -> &'static str {
        match self {
            Variant::Qsass => "qsass",
            Variant::Sass => "sass",
            Variant::QsassBfgs => "qsass-bfgs",
        }
    }

    pub fn enforces_spectrum(&self) -> bool {
        !matches!(self, Variant::QsassBfgs)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = SolverError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "qsass" => Ok(Variant::Qsass),
            "sass" => Ok(Variant::Sass),
            "qsass-bfgs" => Ok(Variant::QsassBfgs),
            other => Err(SolverError::Config(format!("unknown variant '{other}'"))),
        }
    }
}

/// Constants of the step-search loop.
///
/// For `QsassBfgs` the spectrum bounds are not enforced; they only define
/// what the eigenvalue census counts as a violation.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub theta: f64,
    pub gamma: f64,
    pub alpha_0: f64,
    /// `None` is unbounded memory.
    pub memory: Option<usize>,
    pub sigma_lb_b: f64,
    pub sigma_ub_b: f64,
    pub theta_ip: f64,
    pub eps_f: f64,
    pub c: f64,
    pub variant: Variant,
    pub max_iterations: u64,
    pub max_samples: u64,
    pub adaptive_eps_f: bool,
    /// Optional upper cap on the step size (off by default).
    pub alpha_cap: Option<f64>,
    pub census_max_dim: usize,
}

impl SolverConfig {
    /// Experiment defaults: `theta = 0.2`, `gamma = 0.8`, `alpha_0 = 1`,
    /// `M = 10`, `c = 1`, `sigma_ub^B = max(||hess phi(x0)||, 1e4)`,
    /// `sigma_lb^B = 1 / sigma_ub^B`, at most `min(30000, 500 n)` iterations.
    pub fn defaults(variant: Variant, problem: &Problem, eps_f: f64) -> Self {
        let upper = problem.hessian_norm_hint().unwrap_or(0.0).max(SPECTRUM_FLOOR);
        let memory = match variant {
            Variant::Qsass => Some(DEFAULT_MEMORY),
            Variant::Sass => Some(0),
            Variant::QsassBfgs => None,
        };
        Self {
            theta: DEFAULT_THETA,
            gamma: DEFAULT_GAMMA,
            alpha_0: 1.0,
            memory,
            sigma_lb_b: 1.0 / upper,
            sigma_ub_b: upper,
            theta_ip: DEFAULT_THETA_IP,
            eps_f,
            c: 1.0,
            variant,
            max_iterations: (500 * problem.dim() as u64).min(30_000),
            max_samples: u64::MAX,
            adaptive_eps_f: true,
            alpha_cap: None,
            census_max_dim: DEFAULT_CENSUS_MAX_DIM,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: String| Err(SolverError::Config(msg));
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad(format!("theta = {} outside (0, 1)", self.theta));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma = {} outside (0, 1)", self.gamma));
        }
        if !(self.alpha_0 > 0.0) || !self.alpha_0.is_finite() {
            return bad(format!("alpha_0 = {} must be positive", self.alpha_0));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return bad(format!("c = {} must be positive", self.c));
        }
        if !(self.theta_ip >= 0.0) || !(self.eps_f >= 0.0) {
            return bad("theta_ip and eps_f must be non-negative".into());
        }
        if let Some(cap) = self.alpha_cap {
            if !(cap > 0.0) {
                return bad(format!("alpha cap {cap} must be positive"));
            }
        }
        match (self.variant, self.memory) {
            (Variant::Sass, m) if m != Some(0) => return bad("variant sass requires memory 0".into()),
            (Variant::QsassBfgs, Some(_)) => return bad("variant qsass-bfgs requires unbounded memory".into()),
            _ => {}
        }
        let bounds = self.bounds()?;
        if self.variant.enforces_spectrum() && !bounds.contains_scale(self.c) {
            return bad(format!("c = {} outside [{}, {}]", self.c, self.sigma_lb_b, self.sigma_ub_b));
        }
        Ok(())
    }

    pub fn bounds(&self) -> Result<SpectrumBounds, SolverError> {
        SpectrumBounds::new(self.sigma_lb_b, self.sigma_ub_b).map_err(|e| SolverError::Config(e.to_string()))
    }
}

/// How the first-order oracle produces gradient estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMethod {
    /// Noisy gradients drawn directly from the noise model.
    Direct,
    /// Forward differences of zeroth-order draws with curvature estimate `l_bar`.
    FiniteDifference { l_bar: f64 },
    /// Parameter-shift rule (VQE problems).
    ParameterShift,
}

impl GradientMethod {
    pub fn label(&self) -> &'static str {
        match self {
            GradientMethod::Direct => "direct",
            GradientMethod::FiniteDifference { .. } => "finite-difference",
            GradientMethod::ParameterShift => "parameter-shift",
        }
    }
}

/// Oracle configuration shared by both oracle streams of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSetup {
    pub noise: NoiseModel,
    pub gradient: GradientMethod,
    pub eps_g: f64,
    pub tau: f64,
    pub kappa: f64,
    pub delta: f64,
    pub pilot_samples: u64,
    pub sample_cap: u64,
}

impl OracleSetup {
    /// `tau = 10`, `kappa = 1`, `delta = 0.1`, pilot of 30 draws, cap `1e8`.
    pub fn new(noise: NoiseModel, gradient: GradientMethod, eps_g: f64) -> Self {
        Self {
            noise,
            gradient,
            eps_g,
            tau: 10.0,
            kappa: 1.0,
            delta: 0.1,
            pilot_samples: DEFAULT_PILOT,
            sample_cap: DEFAULT_SAMPLE_CAP,
        }
    }

    pub fn exact() -> Self {
        Self::new(NoiseModel::Exact, GradientMethod::Direct, 0.0)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        self.noise.validate()?;
        if !(self.eps_g >= 0.0) || !(self.tau > 0.0) || !(self.kappa > 0.0) {
            return Err(SolverError::Config("need eps_g >= 0, tau > 0, kappa > 0".into()));
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(SolverError::Config(format!("delta = {} outside (0, 1/2)", self.delta)));
        }
        if self.pilot_samples == 0 || self.sample_cap == 0 {
            return Err(SolverError::Config("pilot size and sample cap must be positive".into()));
        }
        if let GradientMethod::FiniteDifference { l_bar } = self.gradient {
            if !(l_bar > 0.0) {
                return Err(SolverError::Config(format!("l_bar = {l_bar} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingRule {
    /// `||grad phi(x_k)|| <= eps` on the true gradient.
    GradientNorm(f64),
    /// `phi(x_k) - phi* <= eps`; needs a known optimal value.
    OptimalityGap(f64),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    StoppingRule,
    IterationBudget,
    SampleBudget,
}

impl StopReason {
    pub fn label(&self) -> &'static str {
        match self {
            StopReason::StoppingRule => "stopping-rule",
            StopReason::IterationBudget => "iteration-budget",
            StopReason::SampleBudget => "sample-budget",
        }
    }
}

impl FromStr for StopReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stopping-rule" => Ok(StopReason::StoppingRule),
            "iteration-budget" => Ok(StopReason::IterationBudget),
            "sample-budget" => Ok(StopReason::SampleBudget),
            other => Err(format!("unknown stop reason '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: u64,
    pub alpha: f64,
    pub success: bool,
    pub f_k: f64,
    pub f_plus: f64,
    pub gd_inner: f64,
    pub g_norm: f64,
    pub d_norm: f64,
    pub eps_f_k: f64,
    pub eps_g_k: f64,
    pub n_f: u64,
    pub n_g: u64,
    pub pairs_stored: usize,
    pub pairs_removed: usize,
    /// Enforcement removed (or, without enforcement, would remove) a pair.
    pub census_violation: bool,
    pub cumulative_samples: u64,
    pub true_value: f64,
    pub true_grad_norm: f64,
    /// `||g_k - grad phi(x_k)|| <= max(eps_g, min(tau, kappa alpha) ||g_k||)`
    pub grad_event: bool,
    /// `e_k + e_k+ <= 2 eps_f_k`
    pub f_event: bool,
    pub cap_hit: bool,
}

impl IterationRecord {
    pub const COLUMNS: [&'static str; 21] = [
        "k",
        "alpha",
        "success",
        "f_k",
        "f_plus",
        "gd_inner",
        "g_norm",
        "d_norm",
        "eps_f_k",
        "eps_g_k",
        "n_f",
        "n_g",
        "pairs_stored",
        "pairs_removed",
        "census_violation",
        "cumulative_samples",
        "true_value",
        "true_grad_norm",
        "grad_event",
        "f_event",
        "cap_hit",
    ];

    pub fn fields(&self) -> Vec<String> {
        let b = |v: bool| if v { "1".to_string() } else { "0".to_string() };
        vec![
            self.k.to_string(),
            self.alpha.to_string(),
            b(self.success),
            self.f_k.to_string(),
            self.f_plus.to_string(),
            self.gd_inner.to_string(),
            self.g_norm.to_string(),
            self.d_norm.to_string(),
            self.eps_f_k.to_string(),
            self.eps_g_k.to_string(),
            self.n_f.to_string(),
            self.n_g.to_string(),
            self.pairs_stored.to_string(),
            self.pairs_removed.to_string(),
            b(self.census_violation),
            self.cumulative_samples.to_string(),
            self.true_value.to_string(),
            self.true_grad_norm.to_string(),
            b(self.grad_event),
            b(self.f_event),
            b(self.cap_hit),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub seed: u64,
    pub variant: Variant,
    pub records: Vec<IterationRecord>,
    pub stop_reason: StopReason,
    pub iterations: u64,
    pub total_samples: u64,
    pub hit: bool,
    pub stopping_iteration: Option<u64>,
    pub stopping_samples: Option<u64>,
    pub initial_grad_norm: f64,
    pub final_value: f64,
    pub final_grad_norm: f64,
    pub ground_truth_evals: u64,
    pub census_enabled: bool,
}

impl RunTrace {
    pub fn successful_iterations(&self) -> usize {
        self.records.iter().filter(|r| r.success).count()
    }

    fn fraction(&self, pred: impl Fn(&IterationRecord) -> bool) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| pred(r)).count() as f64 / self.records.len() as f64
    }

    /// Fraction of iterations flagged by the eigenvalue census.
    pub fn census_fraction(&self) -> f64 {
        self.fraction(|r| r.census_violation)
    }

    pub fn grad_event_frequency(&self) -> f64 {
        self.fraction(|r| r.grad_event)
    }

    pub fn true_iteration_frequency(&self) -> f64 {
        self.fraction(|r| r.grad_event && r.f_event)
    }

    /// Tab-separated table: header row, then one row per iteration.
    pub fn table(&self) -> String {
        let mut out = IterationRecord::COLUMNS.join("\t");
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.fields().join("\t"));
            out.push('\n');
        }
        out
    }

    /// Terminal summary as `key = value` pairs.
    pub fn summary(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<u64>| v.map_or("none".to_string(), |v| v.to_string());
        vec![
            ("seed", self.seed.to_string()),
            ("variant", self.variant.to_string()),
            ("stop_reason", self.stop_reason.label().to_string()),
            ("iterations", self.iterations.to_string()),
            ("total_samples", self.total_samples.to_string()),
            ("hit", self.hit.to_string()),
            ("stopping_iteration", opt(self.stopping_iteration)),
            ("stopping_samples", opt(self.stopping_samples)),
            ("successful_iterations", self.successful_iterations().to_string()),
            ("initial_grad_norm", self.initial_grad_norm.to_string()),
            ("final_value", self.final_value.to_string()),
            ("final_grad_norm", self.final_grad_norm.to_string()),
            ("census_enabled", self.census_enabled.to_string()),
            ("census_fraction", self.census_fraction().to_string()),
            ("grad_event_frequency", self.grad_event_frequency().to_string()),
            ("true_iteration_frequency", self.true_iteration_frequency().to_string()),
            ("ground_truth_evals", self.ground_truth_evals.to_string()),
        ]
    }

    pub fn summary_block(&self) -> String {
        self.summary().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// `f+ <= f - alpha theta <d, g> + 2 eps_f`
pub fn sufficient_decrease_test(
    f_k: f64,
    f_k_plus: f64,
    alpha_k: f64,
    theta: f64,
    gd_inner: f64,
    eps_f_k: f64,
) -> bool {
    f_k_plus <= f_k - alpha_k * theta * gd_inner + 2.0 * eps_f_k
}

/// Dense copy of `B` kept for the census when no pair is ever evicted.
#[derive(Debug, Clone)]
struct DenseCensus {
    b: Matrix,
}

impl DenseCensus {
    fn new(n: usize, c: f64) -> Self {
        let mut b = Matrix::identity(n);
        for i in 0..n {
            b[(i, i)] = c;
        }
        Self { b }
    }

    fn violates(&self, bounds: &SpectrumBounds) -> bool {
        match linalg::sym_eig(&self.b) {
            Ok((values, _)) => {
                let largest = values[0];
                let smallest = values[values.len() - 1];
                !(largest < bounds.upper() && smallest > bounds.lower())
            }
            Err(_) => true,
        }
    }
}

/// Mutable state of one run: iterate, step size, pair memory and oracle streams.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub alpha: f64,
    pub k: u64,
    pub store: CurvaturePairStore,
    pub x_prev: Option<Vec<f64>>,
    pub g_prev: Option<Vec<f64>>,
    /// Norm of the most recent gradient estimate.
    pub g_last_norm: f64,
    pub var_f: f64,
    pub var_g: f64,
    pub point_variances: Vec<f64>,
    pub total_samples: u64,
    pub ground_truth_evals: u64,
    zeroth: OracleModel,
    first: OracleModel,
    census: Option<DenseCensus>,
    bounds: SpectrumBounds,
}

impl SolverState {
    /// Fresh state at the problem's start point. Runs the pilot draws that
    /// seed the variance estimates; their samples count toward the total.
    pub fn new(problem: &Problem, config: &SolverConfig, setup: &OracleSetup, seed: u64) -> Result<Self, SolverError> {
        config.validate()?;
        setup.validate()?;
        let n = problem.dim();
        let store = CurvaturePairStore::new(n, config.memory, config.c, config.theta_ip)?;
        let census =
            (config.variant == Variant::QsassBfgs && n <= config.census_max_dim).then(|| DenseCensus::new(n, config.c));
        let mut state = Self {
            x: problem.start_point().to_vec(),
            alpha: config.alpha_0,
            k: 0,
            store,
            x_prev: None,
            g_prev: None,
            g_last_norm: 0.0,
            var_f: 0.0,
            var_g: 0.0,
            point_variances: Vec::new(),
            total_samples: 0,
            ground_truth_evals: 0,
            zeroth: OracleModel::new(setup.noise, seed, 0)?,
            first: OracleModel::new(setup.noise, seed, 1)?,
            census,
            bounds: config.bounds()?,
        };
        state.pilot(problem, setup)?;
        Ok(state)
    }

    fn pilot(&mut self, problem: &Problem, setup: &OracleSetup) -> Result<(), SolverError> {
        let n = problem.dim() as u64;
        let pilot = setup.pilot_samples;
        let f = self.zeroth.draw_function_estimate(problem, &self.x, pilot)?;
        self.total_samples += f.samples;
        self.var_f = f.variance.unwrap_or(0.0);
        let budget = match setup.gradient {
            GradientMethod::Direct => pilot,
            GradientMethod::FiniteDifference { .. } => pilot * (n + 1),
            GradientMethod::ParameterShift => pilot * 2 * n,
        };
        let x = self.x.clone();
        let g = self.gradient(problem, setup, &x, budget)?;
        self.total_samples += g.samples;
        self.absorb_gradient_variance(&g);
        self.g_last_norm = norm(&g.value);
        Ok(())
    }

    fn gradient(
        &mut self,
        problem: &Problem,
        setup: &OracleSetup,
        x: &[f64],
        n_g: u64,
    ) -> Result<GradientEstimate, SolverError> {
        let n = x.len() as u64;
        let memory = (!self.point_variances.is_empty()).then_some(self.point_variances.as_slice());
        let est = match setup.gradient {
            GradientMethod::Direct => self.first.draw_gradient_estimate(problem, x, n_g)?,
            GradientMethod::FiniteDifference { l_bar } => {
                let budget = n_g.max(n + 1);
                let e_std = fd_base_std(self.var_f, x.len(), budget);
                self.first.fd_gradient_estimate(problem, x, budget, l_bar, e_std, memory)?
            }
            GradientMethod::ParameterShift => {
                self.first.parameter_shift_gradient(problem, x, n_g.max(2 * n), memory)?
            }
        };
        Ok(est)
    }

    fn absorb_gradient_variance(&mut self, g: &GradientEstimate) {
        if let Some(v) = g.variance {
            self.var_g = v;
        }
        if g.point_variances.is_empty() {
            return;
        }
        if self.point_variances.len() != g.point_variances.len() {
            // first use: unknown entries take the mean of the known ones
            let known: Vec<f64> = g.point_variances.iter().flatten().copied().collect();
            let fill = if known.is_empty() { 1.0 } else { known.iter().sum::<f64>() / known.len() as f64 };
            self.point_variances = g.point_variances.iter().map(|v| v.unwrap_or(fill)).collect();
        } else {
            for (slot, v) in self.point_variances.iter_mut().zip(&g.point_variances) {
                if let Some(v) = v {
                    *slot = *v;
                }
            }
        }
    }
}

/// One iteration of the step-search loop.
pub fn qsass_step(
    state: &mut SolverState,
    config: &SolverConfig,
    setup: &OracleSetup,
    problem: &Problem,
) -> Result<IterationRecord, SolverError> {
    let cap = setup.sample_cap;
    let k = state.k;
    let alpha = state.alpha;

    // gradient estimate
    let eps_g_k = adaptive_eps_g(setup.eps_g, setup.tau, setup.kappa, alpha, state.g_last_norm);
    let n_g_req = match setup.gradient {
        GradientMethod::FiniteDifference { l_bar } => {
            fd_sample_size(l_bar, problem.dim(), state.var_f, setup.delta, eps_g_k, cap)
        }
        _ => compute_sample_sizes(0.0, state.var_g, 1.0, eps_g_k, setup.delta, cap).1,
    };
    let x = state.x.clone();
    let g_est = state.gradient(problem, setup, &x, n_g_req)?;
    let n_g = g_est.samples;
    state.total_samples += n_g;
    state.absorb_gradient_variance(&g_est);
    let g = g_est.value;
    let g_norm = norm(&g);
    state.g_last_norm = g_norm;

    // memory update
    let mut pairs_removed = 0;
    let mut census_violation = false;
    if let (Some(x_prev), Some(g_prev)) = (&state.x_prev, &state.g_prev) {
        let s: Vec<f64> = x.iter().zip(x_prev).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g.iter().zip(g_prev).map(|(a, b)| a - b).collect();
        let inserted = state.store.try_insert_pair(&s, &y)?;
        if config.variant.enforces_spectrum() {
            pairs_removed = state.store.enforce_spectrum(&state.bounds)?;
            census_violation = pairs_removed > 0;
        } else if let Some(census) = state.census.as_mut() {
            if inserted {
                linalg::bfgs_update(&mut census.b, &s, &y).map_err(StoreError::from)?;
                census.b.symmetrize();
            }
            census_violation = census.violates(&state.bounds);
        }
    }

    // trial step
    let d = state.store.two_loop_apply(&g)?;
    let gd_inner = dot(&d, &g);
    let d_norm = norm(&d);
    let x_plus: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi - alpha * di).collect();

    // sufficient decrease
    let eps_f_k =
        if config.adaptive_eps_f { adaptive_eps_f(config.eps_f, alpha, config.theta, gd_inner) } else { config.eps_f };
    let (n_f, _) = compute_sample_sizes(state.var_f, 0.0, eps_f_k, 1.0, setup.delta, cap);
    let f_k = state.zeroth.draw_function_estimate(problem, &x, n_f)?;
    let f_plus = state.zeroth.draw_function_estimate(problem, &x_plus, n_f)?;
    state.total_samples += f_k.samples + f_plus.samples;
    let known: Vec<f64> = [f_k.variance, f_plus.variance].into_iter().flatten().collect();
    if !known.is_empty() {
        state.var_f = known.iter().sum::<f64>() / known.len() as f64;
    }
    let success = sufficient_decrease_test(f_k.value, f_plus.value, alpha, config.theta, gd_inner, eps_f_k);

    // ground truth, metered separately
    let true_grad = problem.gradient(&x);
    let true_value = problem.value(&x);
    let true_plus = problem.value(&x_plus);
    state.ground_truth_evals += 3;
    let grad_err = norm(&g.iter().zip(&true_grad).map(|(a, b)| a - b).collect::<Vec<_>>());
    let grad_event = grad_err <= setup.eps_g.max(setup.tau.min(setup.kappa * alpha) * g_norm);
    let f_event = (f_k.value - true_value).abs() + (f_plus.value - true_plus).abs() <= 2.0 * eps_f_k;

    if success {
        state.x_prev = Some(x);
        state.g_prev = Some(g);
        state.x = x_plus;
        state.alpha = alpha / config.gamma;
        if let Some(cap) = config.alpha_cap {
            state.alpha = state.alpha.min(cap);
        }
    } else {
        state.alpha = alpha * config.gamma;
    }
    state.k += 1;

    Ok(IterationRecord {
        k,
        alpha,
        success,
        f_k: f_k.value,
        f_plus: f_plus.value,
        gd_inner,
        g_norm,
        d_norm,
        eps_f_k,
        eps_g_k,
        n_f,
        n_g,
        pairs_stored: state.store.len(),
        pairs_removed,
        census_violation,
        cumulative_samples: state.total_samples,
        true_value,
        true_grad_norm: norm(&true_grad),
        grad_event,
        f_event,
        cap_hit: n_f >= cap || n_g_req >= cap,
    })
}

/// Iterates until the stopping rule fires or a budget runs out.
///
/// At the top of every iteration the sample budget is checked first, then
/// the stopping rule on ground truth, then the iteration budget.
pub fn run(
    problem: &Problem,
    config: &SolverConfig,
    setup: &OracleSetup,
    stopping: StoppingRule,
    seed: u64,
) -> Result<RunTrace, SolverError> {
    let optimum = match stopping {
        StoppingRule::OptimalityGap(_) => Some(problem.optimal_value().ok_or_else(|| {
            SolverError::Config(format!("optimality-gap stopping needs a known optimal value for '{}'", problem.name()))
        })?),
        _ => None,
    };
    let mut state = SolverState::new(problem, config, setup, seed)?;
    let initial_grad_norm = norm(&problem.gradient(&state.x));
    state.ground_truth_evals += 1;
    let mut records = Vec::new();
    let mut hit = false;
    let mut stopping_iteration = None;
    let mut stopping_samples = None;

    let stop_reason = loop {
        if state.total_samples > config.max_samples {
            break StopReason::SampleBudget;
        }
        let reached = match stopping {
            StoppingRule::GradientNorm(eps) => {
                state.ground_truth_evals += 1;
                norm(&problem.gradient(&state.x)) <= eps
            }
            StoppingRule::OptimalityGap(eps) => {
                state.ground_truth_evals += 1;
                problem.value(&state.x) - optimum.unwrap_or(0.0) <= eps
            }
            StoppingRule::None => false,
        };
        if reached {
            hit = true;
            stopping_iteration = Some(state.k);
            stopping_samples = Some(state.total_samples);
            break StopReason::StoppingRule;
        }
        if state.k >= config.max_iterations {
            break StopReason::IterationBudget;
        }
        records.push(qsass_step(&mut state, config, setup, problem)?);
    };

    state.ground_truth_evals += 2;
    Ok(RunTrace {
        seed,
        variant: config.variant,
        records,
        stop_reason,
        iterations: state.k,
        total_samples: state.total_samples,
        hit,
        stopping_iteration,
        stopping_samples,
        initial_grad_norm,
        final_value: problem.value(&state.x),
        final_grad_norm: norm(&problem.gradient(&state.x)),
        ground_truth_evals: state.ground_truth_evals,
        census_enabled: config.variant.enforces_spectrum() || state.census.is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::builtin_problem;

    fn exact_config(problem: &Problem) -> SolverConfig {
        SolverConfig::defaults(Variant::Qsass, problem, 0.0)
    }

    #[test]
    fn decrease_test_examples() {
        assert!(sufficient_decrease_test(1.0, 0.9, 1.0, 0.2, 0.4, 0.01));
        assert!(!sufficient_decrease_test(1.0, 0.95, 1.0, 0.2, 0.4, 0.01));
        assert!(sufficient_decrease_test(1.0, 1.0, 1.0, 0.2, 0.0, 0.0));
    }

    fn unit_quadratic_state(alpha_0: f64) -> (Problem, SolverConfig, OracleSetup, SolverState) {
        let text = "dimension 2\nrow 1 0\nrow 0 1\nstart 1 0\n";
        let p = crate::problems::parse_quadratic_manifest(text).unwrap();
        let mut cfg = exact_config(&p);
        cfg.alpha_0 = alpha_0;
        let setup = OracleSetup::exact();
        let state = SolverState::new(&p, &cfg, &setup, 0).unwrap();
        (p, cfg, setup, state)
    }

    #[test]
    fn first_step_succeeds() {
        let (p, cfg, setup, mut st) = unit_quadratic_state(1.0);
        let rec = qsass_step(&mut st, &cfg, &setup, &p).unwrap();
        assert!(rec.success);
        assert_eq!(rec.gd_inner, 1.0);
        assert_eq!(st.x, vec![0.0, 0.0]);
        assert_eq!(st.alpha, 1.25);
    }

    #[test]
    fn large_first_step_fails() {
        let (p, cfg, setup, mut st) = unit_quadratic_state(10.0);
        let rec = qsass_step(&mut st, &cfg, &setup, &p).unwrap();
        assert!(!rec.success);
        assert_eq!(rec.f_plus, 40.5);
        assert_eq!(st.alpha, 8.0);
        assert_eq!(st.x, vec![1.0, 0.0]);
    }

    #[test]
    fn sass_keeps_store_empty() {
        let p = builtin_problem("rosenbrock-chain", 2).unwrap();
        let cfg = SolverConfig::defaults(Variant::Sass, &p, 0.0);
        let trace = run(&p, &cfg, &OracleSetup::exact(), StoppingRule::None, 1).unwrap();
        assert!(trace.records.iter().all(|r| r.pairs_stored == 0));
        assert!(trace.records.iter().all(|r| (r.d_norm - r.g_norm).abs() <= 1e-15 * r.g_norm));
    }

    #[test]
    fn zero_iteration_budget() {
        let p = builtin_problem("quadratic", 3).unwrap();
        let mut cfg = exact_config(&p);
        cfg.max_iterations = 0;
        let g0 = norm(&p.gradient(p.start_point()));
        let trace = run(&p, &cfg, &OracleSetup::exact(), StoppingRule::GradientNorm(1e-3 * g0), 0).unwrap();
        assert!(trace.records.is_empty());
        assert_eq!(trace.stop_reason, StopReason::IterationBudget);
        assert!(!trace.hit);
    }

    #[test]
    fn exact_quadratic_converges() {
        let p = builtin_problem("quadratic:100", 10).unwrap();
        let cfg = exact_config(&p);
        let g0 = norm(&p.gradient(p.start_point()));
        let trace = run(&p, &cfg, &OracleSetup::exact(), StoppingRule::GradientNorm(1e-6 * g0), 0).unwrap();
        assert!(trace.hit, "{:?}", trace.stop_reason);
        assert!(trace.stopping_iteration.unwrap() <= 200);
    }

    #[test]
    fn gap_rule_needs_optimum() {
        let text = "dimension 1\nrow 0\nlinear 1\nstart 0\n";
        let p = crate::problems::parse_quadratic_manifest(text).unwrap();
        let cfg = exact_config(&p);
        assert!(matches!(
            run(&p, &cfg, &OracleSetup::exact(), StoppingRule::OptimalityGap(1e-3), 0),
            Err(SolverError::Config(_))
        ));
    }

    #[test]
    fn config_invariants() {
        let p = builtin_problem("quadratic", 2).unwrap();
        let mut cfg = exact_config(&p);
        assert!(cfg.validate().is_ok());
        cfg.c = 1e5;
        assert!(cfg.validate().is_err());
        let mut cfg = exact_config(&p);
        cfg.variant = Variant::Sass;
        assert!(cfg.validate().is_err());
        cfg.memory = Some(0);
        assert!(cfg.validate().is_ok());
        let mut cfg = exact_config(&p);
        cfg.variant = Variant::QsassBfgs;
        assert!(cfg.validate().is_err());
        cfg.memory = None;
        assert!(cfg.validate().is_ok());
        cfg.gamma = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn step_size_ledger_is_exact() {
        let p = builtin_problem("rosenbrock-chain", 2).unwrap();
        let cfg = exact_config(&p);
        let setup = OracleSetup::new(NoiseModel::Additive, GradientMethod::Direct, 1e-3);
        let trace = run(&p, &SolverConfig { eps_f: 1e-6, ..cfg.clone() }, &setup, StoppingRule::None, 4).unwrap();
        for w in trace.records.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let expected = if a.success { a.alpha / cfg.gamma } else { a.alpha * cfg.gamma };
            assert_eq!(b.alpha, expected);
            assert!(b.cumulative_samples >= a.cumulative_samples);
        }
    }
}
