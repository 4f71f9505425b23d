//! Probabilistic zeroth- and first-order oracles.
//!
//! An [`OracleModel`] owns a private ChaCha stream and turns exact problem
//! information into noisy estimates. Estimates are sample averages of `N`
//! independent observations; for the Gaussian models the average and the
//! sample variance are drawn directly from their exact joint law (normal
//! mean, independent scaled chi-square variance), and VQE measurements draw
//! multinomial outcome counts, so the cost of a draw does not grow with `N`.
//!
//! Nothing here ever reuses a random realization across two evaluation
//! points: every call consumes fresh draws from the model's stream.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use thiserror::Error;

use crate::problems::{vqe_measure_stats, Problem};

/// Per-call sample cap used unless configured otherwise.
pub const DEFAULT_SAMPLE_CAP: u64 = 100_000_000;
/// Weight given to zero-variance coordinates before renormalizing.
pub const ALLOCATION_FLOOR_WEIGHT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("at least one sample is required")]
    NoSamples,
    #[error("gradient budget {budget} is below the minimum {minimum}")]
    Budget { budget: u64, minimum: u64 },
    #[error("problem '{0}' does not support this oracle")]
    UnsupportedProblem(String),
    #[error("invalid oracle parameter: {0}")]
    InvalidParameter(String),
}

/// Noise model applied to exact function and gradient values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    /// Exact values; each call is reported as one sample.
    Exact,
    /// `f = phi + xi`, `g = grad + xi'` with standard normal noise.
    Additive,
    /// `f = (1 + xi/100) phi`, `g = (1 + xi'/100) o grad`.
    Multiplicative,
    /// Additive function noise; per gradient call the noise scale is
    /// `large_scale` with probability `large_prob`, else `small_scale`.
    MixedGaussian { small_scale: f64, large_scale: f64, large_prob: f64 },
    /// Energy measurements of a VQE problem (eigenvalue outcomes).
    VqeMeasurement,
}

impl NoiseModel {
    pub fn mixed_default() -> Self {
        NoiseModel::MixedGaussian { small_scale: 1e-6, large_scale: 1e6, large_prob: 0.2 }
    }

    pub fn label(&self) -> &'static str {
        match self {
            NoiseModel::Exact => "exact",
            NoiseModel::Additive => "additive",
            NoiseModel::Multiplicative => "multiplicative",
            NoiseModel::MixedGaussian { .. } => "mixed-gaussian",
            NoiseModel::VqeMeasurement => "vqe-measurement",
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if let NoiseModel::MixedGaussian { small_scale, large_scale, large_prob } = *self {
            if !(0.0..=1.0).contains(&large_prob) {
                return Err(OracleError::InvalidParameter(format!(
                    "large-noise probability {large_prob} outside [0, 1]"
                )));
            }
            if !(small_scale >= 0.0 && large_scale >= 0.0) {
                return Err(OracleError::InvalidParameter("noise scales must be non-negative".into()));
            }
        }
        Ok(())
    }
}

/// Declared oracle accuracy `(eps_f, nu, b)` and `(eps_g, tau, kappa, delta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleParams {
    pub eps_f: f64,
    pub eps_g: f64,
    pub tau: f64,
    pub kappa: f64,
    pub delta: f64,
    pub nu: f64,
    pub b: f64,
}

impl OracleParams {
    pub fn validate(&self) -> Result<(), OracleError> {
        let non_negative = [self.eps_f, self.eps_g, self.nu, self.b, self.delta];
        if non_negative.iter().any(|v| !(*v >= 0.0)) {
            return Err(OracleError::InvalidParameter("eps_f, eps_g, nu, b, delta must be non-negative".into()));
        }
        if !(self.tau > 0.0) || !(self.kappa > 0.0) {
            return Err(OracleError::InvalidParameter("tau and kappa must be positive".into()));
        }
        if self.delta >= 0.5 {
            return Err(OracleError::InvalidParameter(format!("delta = {} must be below 1/2", self.delta)));
        }
        Ok(())
    }
}

/// A sample-averaged function value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionEstimate {
    pub value: f64,
    /// Unbiased per-observation sample variance (`None` with fewer than two observations).
    pub variance: Option<f64>,
    pub samples: u64,
}

/// A sample-averaged gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub value: Vec<f64>,
    /// Per-observation variance of the estimator, summed over coordinates.
    pub variance: Option<f64>,
    pub samples: u64,
    /// Per-evaluation-point variance estimates (finite differences and
    /// parameter shifts only), used to allocate the next budget.
    pub point_variances: Vec<Option<f64>>,
}

/// Budget split across coordinates or evaluation points.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleAllocation {
    pub weights: Vec<f64>,
    pub shots: Vec<u64>,
}

/// A noise model bound to its own seeded random stream.
#[derive(Debug, Clone)]
pub struct OracleModel {
    noise: NoiseModel,
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl OracleModel {
    pub fn new(noise: NoiseModel, seed: u64, stream: u64) -> Result<Self, OracleError> {
        noise.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(Self { noise, seed, stream, rng })
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    fn check_point(problem: &Problem, x: &[f64]) -> Result<(), OracleError> {
        if x.len() != problem.dim() {
            return Err(OracleError::InvalidPoint(format!("expected dimension {}, got {}", problem.dim(), x.len())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(OracleError::InvalidPoint("non-finite coordinate".into()));
        }
        Ok(())
    }

    /// Mean of `n` standard normals.
    fn normal_mean(&mut self, n: u64) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        z / (n as f64).sqrt()
    }

    /// Sample variance of `n` standard normals (independent of their mean).
    fn normal_sample_variance(&mut self, n: u64) -> Option<f64> {
        (n >= 2).then(|| {
            let dof = (n - 1) as f64;
            ChiSquared::new(dof).expect("positive dof").sample(&mut self.rng) / dof
        })
    }

    /// Average of `n_samples` zeroth-order observations at `x`.
    pub fn draw_function_estimate(
        &mut self,
        problem: &Problem,
        x: &[f64],
        n_samples: u64,
    ) -> Result<FunctionEstimate, OracleError> {
        if n_samples == 0 {
            return Err(OracleError::NoSamples);
        }
        Self::check_point(problem, x)?;
        match self.noise {
            NoiseModel::Exact => Ok(FunctionEstimate { value: problem.value(x), variance: Some(0.0), samples: 1 }),
            NoiseModel::Additive | NoiseModel::MixedGaussian { .. } => {
                let phi = problem.value(x);
                let mean = self.normal_mean(n_samples);
                let variance = self.normal_sample_variance(n_samples);
                Ok(FunctionEstimate { value: phi + mean, variance, samples: n_samples })
            }
            NoiseModel::Multiplicative => {
                let phi = problem.value(x);
                let mean = self.normal_mean(n_samples);
                let scale = phi / 100.0;
                let variance = self.normal_sample_variance(n_samples).map(|v| scale * scale * v);
                Ok(FunctionEstimate { value: phi + scale * mean, variance, samples: n_samples })
            }
            NoiseModel::VqeMeasurement => {
                let vqe = problem.vqe().ok_or_else(|| OracleError::UnsupportedProblem(problem.name().into()))?;
                let stats = vqe_measure_stats(vqe, x, n_samples, &mut self.rng);
                Ok(FunctionEstimate { value: stats.mean, variance: stats.variance, samples: n_samples })
            }
        }
    }

    /// Average of `n_samples` first-order observations at `x`.
    pub fn draw_gradient_estimate(
        &mut self,
        problem: &Problem,
        x: &[f64],
        n_samples: u64,
    ) -> Result<GradientEstimate, OracleError> {
        if n_samples == 0 {
            return Err(OracleError::NoSamples);
        }
        Self::check_point(problem, x)?;
        let grad = problem.gradient(x);
        let (value, variance, samples) = match self.noise {
            NoiseModel::Exact => (grad, Some(0.0), 1),
            NoiseModel::Additive => self.perturb_additive(&grad, 1.0, n_samples),
            NoiseModel::MixedGaussian { small_scale, large_scale, large_prob } => {
                // the regime is fixed for the whole call
                let large = self.rng.random::<f64>() < large_prob;
                let scale = if large { large_scale } else { small_scale };
                self.perturb_additive(&grad, scale, n_samples)
            }
            NoiseModel::Multiplicative => {
                let mut var_sum = Some(0.0);
                let value = grad
                    .iter()
                    .map(|&gi| {
                        let m = self.normal_mean(n_samples);
                        let v = self.normal_sample_variance(n_samples);
                        let comp = gi / 100.0;
                        var_sum = var_sum.zip(v).map(|(acc, v)| acc + comp * comp * v);
                        gi + comp * m
                    })
                    .collect();
                (value, var_sum, n_samples)
            }
            NoiseModel::VqeMeasurement => {
                return Err(OracleError::UnsupportedProblem(format!(
                    "{} (VQE gradients come from the parameter-shift rule)",
                    problem.name()
                )))
            }
        };
        Ok(GradientEstimate { value, variance, samples, point_variances: Vec::new() })
    }

    fn perturb_additive(&mut self, grad: &[f64], scale: f64, n: u64) -> (Vec<f64>, Option<f64>, u64) {
        let mut var_sum = Some(0.0);
        let value = grad
            .iter()
            .map(|&gi| {
                let m = self.normal_mean(n);
                let v = self.normal_sample_variance(n);
                var_sum = var_sum.zip(v).map(|(acc, v)| acc + scale * scale * v);
                gi + scale * m
            })
            .collect();
        (value, var_sum, n)
    }

    /// Forward-difference gradient from zeroth-order draws.
    ///
    /// The base point receives `N_g / (n + 1)` observations and the rest of
    /// the budget is split over the `n` shifted points by
    /// [`allocate_shot_budget`] on `point_variances` (uniform when absent).
    /// The radius is `2 sqrt(e_std / l_bar) + 1e-8`.
    pub fn fd_gradient_estimate(
        &mut self,
        problem: &Problem,
        x: &[f64],
        n_g: u64,
        l_bar: f64,
        e_std: f64,
        point_variances: Option<&[f64]>,
    ) -> Result<GradientEstimate, OracleError> {
        Self::check_point(problem, x)?;
        let n = x.len();
        let minimum = n as u64 + 1;
        if n_g < minimum {
            return Err(OracleError::Budget { budget: n_g, minimum });
        }
        if !(l_bar > 0.0) || !(e_std >= 0.0) {
            return Err(OracleError::InvalidParameter("need l_bar > 0 and e_std >= 0".into()));
        }
        let h = fd_radius(e_std, l_bar);
        let base_budget = n_g / minimum;
        let rest = n_g - base_budget;
        let uniform = vec![1.0; n];
        let alloc = allocate_shot_budget(point_variances.unwrap_or(&uniform), rest)?;

        let base = self.draw_function_estimate(problem, x, base_budget)?;
        let mut used = base.samples;
        let mut value = Vec::with_capacity(n);
        let mut point_vars = Vec::with_capacity(n);
        let mut grad_var = base.variance.map(|_| 0.0);
        let mut z = x.to_vec();
        for i in 0..n {
            z[i] = x[i] + h;
            let shifted = self.draw_function_estimate(problem, &z, alloc.shots[i])?;
            z[i] = x[i];
            used += shifted.samples;
            value.push((shifted.value - base.value) / h);
            point_vars.push(shifted.variance);
            grad_var = match (grad_var, base.variance, shifted.variance) {
                (Some(acc), Some(v0), Some(vi)) => {
                    Some(acc + (v0 / base.samples as f64 + vi / shifted.samples as f64) / (h * h))
                }
                _ => None,
            };
        }
        Ok(GradientEstimate {
            value,
            variance: grad_var.map(|v| v * used as f64),
            samples: used,
            point_variances: point_vars,
        })
    }

    /// Parameter-shift gradient `(f(x + pi/2 e_i) - f(x - pi/2 e_i)) / 2` from
    /// zeroth-order draws, with the budget split over the `2n` points in
    /// proportion to their standard deviations.
    ///
    /// `point_variances` is ordered `[+e_1, -e_1, +e_2, -e_2, ...]`.
    pub fn parameter_shift_gradient(
        &mut self,
        problem: &Problem,
        x: &[f64],
        n_g: u64,
        point_variances: Option<&[f64]>,
    ) -> Result<GradientEstimate, OracleError> {
        if problem.vqe().is_none() {
            return Err(OracleError::UnsupportedProblem(problem.name().into()));
        }
        Self::check_point(problem, x)?;
        let n = x.len();
        let minimum = 2 * n as u64;
        if n_g < minimum {
            return Err(OracleError::Budget { budget: n_g, minimum });
        }
        let uniform = vec![1.0; 2 * n];
        let alloc = allocate_shot_budget(point_variances.unwrap_or(&uniform), n_g)?;
        let mut used = 0;
        let mut value = Vec::with_capacity(n);
        let mut point_vars = Vec::with_capacity(2 * n);
        let mut grad_var = Some(0.0);
        let mut z = x.to_vec();
        for i in 0..n {
            z[i] = x[i] + FRAC_PI_2;
            let up = self.draw_function_estimate(problem, &z, alloc.shots[2 * i])?;
            z[i] = x[i] - FRAC_PI_2;
            let down = self.draw_function_estimate(problem, &z, alloc.shots[2 * i + 1])?;
            z[i] = x[i];
            used += up.samples + down.samples;
            value.push(0.5 * (up.value - down.value));
            point_vars.push(up.variance);
            point_vars.push(down.variance);
            grad_var = match (grad_var, up.variance, down.variance) {
                (Some(acc), Some(vu), Some(vd)) => {
                    Some(acc + 0.25 * (vu / up.samples as f64 + vd / down.samples as f64))
                }
                _ => None,
            };
        }
        Ok(GradientEstimate {
            value,
            variance: grad_var.map(|v| v * used as f64),
            samples: used,
            point_variances: point_vars,
        })
    }
}

/// `max(eps_f, alpha theta <d, g> / 100)`
pub fn adaptive_eps_f(eps_f: f64, alpha_k: f64, theta: f64, gd_inner: f64) -> f64 {
    eps_f.max(0.01 * alpha_k * theta * gd_inner)
}

/// `max(eps_g, min(tau, kappa alpha) ||g_{k-1}||)`
pub fn adaptive_eps_g(eps_g: f64, tau: f64, kappa: f64, alpha_k: f64, g_prev_norm: f64) -> f64 {
    eps_g.max(tau.min(kappa * alpha_k) * g_prev_norm)
}

/// Forward-difference radius `2 sqrt(e_std / l_bar) + 1e-8`.
pub fn fd_radius(e_std: f64, l_bar: f64) -> f64 {
    2.0 * (e_std / l_bar).sqrt() + 1e-8
}

/// Forward-difference gradient budget under constant-variance noise:
/// `N_g = ceil(L^2 n^2 var_f / (4 (n + 1) delta^2 eps_g^4))`, floored at
/// `n + 1` and capped at `cap`.
pub fn fd_sample_size(l_bar: f64, n: usize, var_f: f64, delta: f64, eps_g_k: f64, cap: u64) -> u64 {
    let n_f = n as f64;
    let denom = 4.0 * (n_f + 1.0) * delta * delta * eps_g_k.powi(4);
    chebyshev_count(l_bar * l_bar * n_f * n_f * var_f, denom, cap).max(n as u64 + 1)
}

/// `sqrt(var_f / s_0)` with base-point budget `s_0 = N_g / (n + 1)`.
pub fn fd_base_std(var_f: f64, n: usize, n_g: u64) -> f64 {
    let s0 = (n_g / (n as u64 + 1)).max(1);
    (var_f.max(0.0) / s0 as f64).sqrt()
}

fn chebyshev_count(variance: f64, denom: f64, cap: u64) -> u64 {
    if !(variance > 0.0) {
        return 1;
    }
    let raw = (variance / denom).ceil();
    if !(raw < cap as f64) {
        cap.max(1)
    } else {
        (raw as u64).clamp(1, cap.max(1))
    }
}

/// Sample sizes `N_f = ceil(var_f / eps_f^2)` and `N_g = ceil(var_g / (delta eps_g^2))`,
/// each floored at one and capped at `cap`.
pub fn compute_sample_sizes(var_f: f64, var_g: f64, eps_f_k: f64, eps_g_k: f64, delta: f64, cap: u64) -> (u64, u64) {
    (chebyshev_count(var_f, eps_f_k * eps_f_k, cap), chebyshev_count(var_g, delta * eps_g_k * eps_g_k, cap))
}

/// Splits `total` samples over coordinates with weights proportional to the
/// standard deviations, the minimizer of `sum var_i / w_i` on the simplex.
///
/// Zero-variance coordinates get [`ALLOCATION_FLOOR_WEIGHT`] before
/// renormalizing; all-zero variances give uniform weights. Shots are rounded
/// by the largest-remainder method, then any empty coordinate takes one shot
/// from the largest allocation.
pub fn allocate_shot_budget(variances: &[f64], total: u64) -> Result<SampleAllocation, OracleError> {
    let n = variances.len();
    if n == 0 {
        return Err(OracleError::InvalidParameter("no coordinates to allocate".into()));
    }
    if variances.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(OracleError::InvalidParameter("variances must be finite and non-negative".into()));
    }
    if total < n as u64 {
        return Err(OracleError::Budget { budget: total, minimum: n as u64 });
    }
    let weights = allocation_weights(variances);
    let ideal: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut shots: Vec<u64> = ideal.iter().map(|v| v.floor() as u64).collect();
    let assigned: u64 = shots.iter().sum();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        let ri = ideal[i] - ideal[i].floor();
        let rj = ideal[j] - ideal[j].floor();
        rj.total_cmp(&ri).then(i.cmp(&j))
    });
    for &i in order.iter().cycle().take(total.saturating_sub(assigned) as usize) {
        shots[i] += 1;
    }
    while let Some(empty) = shots.iter().position(|&s| s == 0) {
        let donor = (0..n).max_by(|&i, &j| shots[i].cmp(&shots[j]).then(j.cmp(&i))).expect("non-empty");
        shots[donor] -= 1;
        shots[empty] += 1;
    }
    Ok(SampleAllocation { weights, shots })
}

fn allocation_weights(variances: &[f64]) -> Vec<f64> {
    let n = variances.len();
    if variances.iter().all(|&v| v == 0.0) {
        return vec![1.0 / n as f64; n];
    }
    let raw: Vec<f64> = variances.iter().map(|&v| if v > 0.0 { v.sqrt() } else { 0.0 }).collect();
    let total: f64 = raw.iter().sum();
    let floored: Vec<f64> = raw.iter().map(|&r| if r > 0.0 { r / total } else { ALLOCATION_FLOOR_WEIGHT }).collect();
    let norm: f64 = floored.iter().sum();
    floored.into_iter().map(|w| w / norm).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{builtin_problem, Problem};
    use std::sync::Arc;

    fn quad(n: usize) -> Problem {
        builtin_problem("quadratic", n).unwrap()
    }

    #[test]
    fn exact_function_draw() {
        let p = quad(2);
        let mut o = OracleModel::new(NoiseModel::Exact, 1, 0).unwrap();
        // phi(x) = 5 at |x|^2 = 10
        let est = o.draw_function_estimate(&p, &[1.0, 3.0], 17).unwrap();
        assert_eq!(est.value, 5.0);
        assert_eq!(est.samples, 1);
    }

    #[test]
    fn multiplicative_zero_value_stays_zero() {
        let p = quad(2);
        let mut o = OracleModel::new(NoiseModel::Multiplicative, 3, 0).unwrap();
        for n in [1, 2, 1000] {
            assert_eq!(o.draw_function_estimate(&p, &[0.0, 0.0], n).unwrap().value, 0.0);
            assert_eq!(o.draw_gradient_estimate(&p, &[0.0, 0.0], n).unwrap().value, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn additive_mean_concentrates() {
        let p = quad(1);
        let mut o = OracleModel::new(NoiseModel::Additive, 11, 0).unwrap();
        let mut misses = 0;
        for _ in 0..1000 {
            if o.draw_function_estimate(&p, &[0.0], 10_000).unwrap().value.abs() > 0.04 {
                misses += 1;
            }
        }
        // 4 sigma: P(miss) ~ 6e-5
        assert!(misses <= 1, "{misses}");
    }

    #[test]
    fn exact_gradient_is_exact() {
        let p = builtin_problem("rosenbrock-chain", 3).unwrap();
        let mut o = OracleModel::new(NoiseModel::Exact, 0, 0).unwrap();
        let x = [0.1, 0.2, -0.4];
        assert_eq!(o.draw_gradient_estimate(&p, &x, 5).unwrap().value, p.gradient(&x));
    }

    #[test]
    fn zero_samples_rejected() {
        let p = quad(1);
        let mut o = OracleModel::new(NoiseModel::Additive, 0, 0).unwrap();
        assert_eq!(o.draw_function_estimate(&p, &[0.0], 0), Err(OracleError::NoSamples));
        assert!(o.draw_function_estimate(&p, &[0.0, 1.0], 1).is_err());
        assert!(o.draw_function_estimate(&p, &[f64::NAN], 1).is_err());
    }

    #[test]
    fn mixed_probability_validated() {
        let bad = NoiseModel::MixedGaussian { small_scale: 1e-6, large_scale: 1e6, large_prob: 1.5 };
        assert!(OracleModel::new(bad, 0, 0).is_err());
        assert!(OracleModel::new(NoiseModel::mixed_default(), 0, 0).is_ok());
    }

    #[test]
    fn oracle_params_validation() {
        let ok = OracleParams { eps_f: 0.0, eps_g: 0.1, tau: 10.0, kappa: 1.0, delta: 0.1, nu: 0.0, b: 0.0 };
        assert!(ok.validate().is_ok());
        assert!(OracleParams { delta: 0.5, ..ok }.validate().is_err());
        assert!(OracleParams { eps_g: -1.0, ..ok }.validate().is_err());
    }

    #[test]
    fn adaptive_eps_f_examples() {
        assert_eq!(adaptive_eps_f(0.3, 1.0, 0.2, 0.0), 0.3);
        assert!((adaptive_eps_f(1e-4, 1.0, 0.2, 1.0) - 0.002).abs() < 1e-15);
        assert_eq!(adaptive_eps_f(1.0, 1.0, 0.2, 1.0), 1.0);
    }

    #[test]
    fn adaptive_eps_g_examples() {
        assert_eq!(adaptive_eps_g(0.01, 10.0, 1.0, 0.5, 0.0), 0.01);
        assert_eq!(adaptive_eps_g(0.01, 10.0, 1.0, 0.5, 2.0), 1.0);
        assert_eq!(adaptive_eps_g(0.01, 0.1, 1.0, 5.0, 2.0), 0.2);
    }

    #[test]
    fn sample_size_examples() {
        assert_eq!(compute_sample_sizes(0.0, 0.0, 0.1, 1.0, 0.1, DEFAULT_SAMPLE_CAP), (1, 1));
        // 4 / 0.01 is 400 up to rounding of 0.1^2
        let (nf, _) = compute_sample_sizes(4.0, 0.0, 0.1, 1.0, 0.1, DEFAULT_SAMPLE_CAP);
        assert!(nf == 400 || nf == 401, "{nf}");
        assert_eq!(compute_sample_sizes(4.0, 9.0, 0.5, 1.0, 0.1, DEFAULT_SAMPLE_CAP), (16, 90));
        assert_eq!(compute_sample_sizes(1.0, 1.0, 1e-9, 1e-9, 0.1, 1000), (1000, 1000));
        assert_eq!(compute_sample_sizes(1.0, 1.0, 0.0, 0.0, 0.1, 77), (77, 77));
    }

    #[test]
    fn allocation_examples() {
        let a = allocate_shot_budget(&[2.0, 2.0], 10).unwrap();
        assert_eq!(a.weights, vec![0.5, 0.5]);
        let a = allocate_shot_budget(&[1.0, 4.0], 9).unwrap();
        assert!((a.weights[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((a.weights[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(a.shots, vec![3, 6]);
    }

    #[test]
    fn allocation_all_zero_is_uniform() {
        let a = allocate_shot_budget(&[0.0, 0.0, 0.0], 7).unwrap();
        assert!(a.weights.iter().all(|&w| (w - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(a.shots.iter().sum::<u64>(), 7);
    }

    #[test]
    fn allocation_floor_keeps_every_coordinate() {
        let a = allocate_shot_budget(&[0.0, 100.0, 1.0], 3).unwrap();
        assert_eq!(a.shots, vec![1, 1, 1]);
        let a = allocate_shot_budget(&[0.0, 100.0, 1.0], 1000).unwrap();
        assert!(a.shots.iter().all(|&s| s >= 1));
        assert_eq!(a.shots.iter().sum::<u64>(), 1000);
        assert!((a.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(allocate_shot_budget(&[1.0, 1.0], 1).is_err());
    }

    #[test]
    fn fd_radius_example() {
        assert!((fd_radius(1e-4, 1.0) - 0.02000001).abs() < 1e-15);
    }

    #[test]
    fn fd_exact_linear_function() {
        let text = "dimension 3\nrow 0 0 0\nrow 0 0 0\nrow 0 0 0\nlinear 1.5 -2 0.25\nstart 0 0 0\noptimal 0\n";
        let p = crate::problems::parse_quadratic_manifest(text).unwrap();
        let mut o = OracleModel::new(NoiseModel::Exact, 0, 0).unwrap();
        let g = o.fd_gradient_estimate(&p, &[0.3, -1.0, 2.0], 8, 1.0, 1e-4, None).unwrap();
        for (gi, ai) in g.value.iter().zip([1.5, -2.0, 0.25]) {
            assert!((gi - ai).abs() < 1e-9, "{gi} vs {ai}");
        }
    }

    #[test]
    fn fd_budget_error() {
        let p = quad(3);
        let mut o = OracleModel::new(NoiseModel::Additive, 0, 0).unwrap();
        assert_eq!(
            o.fd_gradient_estimate(&p, &[0.0; 3], 3, 1.0, 0.1, None).unwrap_err(),
            OracleError::Budget { budget: 3, minimum: 4 }
        );
    }

    #[test]
    fn shift_rule_toy_values() {
        let v = Arc::new(crate::problems::vqe_problem("toy-1q").unwrap());
        let p = Problem::from_vqe(v).unwrap();
        let mut o = OracleModel::new(NoiseModel::Exact, 0, 0).unwrap();
        let g0 = o.parameter_shift_gradient(&p, &[0.0], 2, None).unwrap();
        assert!(g0.value[0].abs() < 1e-15);
        let g1 = o.parameter_shift_gradient(&p, &[FRAC_PI_2], 2, None).unwrap();
        assert!((g1.value[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn shift_rule_rejects_non_vqe() {
        let p = quad(2);
        let mut o = OracleModel::new(NoiseModel::Exact, 0, 0).unwrap();
        assert!(matches!(
            o.parameter_shift_gradient(&p, &[0.0, 0.0], 4, None),
            Err(OracleError::UnsupportedProblem(_))
        ));
        let v = Arc::new(crate::problems::vqe_problem("h2-like").unwrap());
        let p = Problem::from_vqe(v).unwrap();
        assert!(matches!(
            o.parameter_shift_gradient(&p, &[0.0; 3], 5, None),
            Err(OracleError::Budget { minimum: 6, .. })
        ));
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        let p = quad(1);
        let draw = |seed, stream| {
            let mut o = OracleModel::new(NoiseModel::Additive, seed, stream).unwrap();
            (0..5).map(|_| o.draw_function_estimate(&p, &[0.0], 1).unwrap().value).collect::<Vec<_>>()
        };
        assert_eq!(draw(7, 0), draw(7, 0));
        assert_ne!(draw(7, 0), draw(7, 1));
        assert_ne!(draw(7, 0), draw(8, 0));
    }
}
