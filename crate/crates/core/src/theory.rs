//! Numerical evaluation of the complexity constants and tail bounds.
//!
//! Every function is pure. Infeasible parameter sets (non-positive step
//! threshold, vacuous probabilities, logs of non-positive numbers) are
//! reported through `issues` lists rather than errors, so callers can map
//! the feasible region. Only the iteration bounds, whose precondition is an
//! interval on `p_hat`, return errors.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("p_hat = {p_hat} outside ({p_ell}, {p})")]
    Domain { p_hat: f64, p_ell: f64, p: f64 },
    #[error("strong convexity constant beta is required")]
    MissingBeta,
    #[error("initial log-gap Z0 = {0} must be non-negative")]
    NegativeLogGap(f64),
    #[error("constants are infeasible: {0}")]
    Infeasible(String),
}

/// Whether `p` is `1 - delta` or also pays for the zeroth-order tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Bounded,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Nonconvex,
    StronglyConvex,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Nonconvex => "nonconvex",
            Mode::StronglyConvex => "strongly-convex",
        })
    }
}

/// Constants entering the bounds. `sigma_lb`, `sigma_ub` bound the inverse
/// Hessian approximation (`1 / sigma_ub^B`, `1 / sigma_lb^B`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryInputs {
    pub l: f64,
    pub beta: Option<f64>,
    pub theta: f64,
    pub gamma: f64,
    pub alpha_0: f64,
    pub sigma_lb: f64,
    pub sigma_ub: f64,
    pub tau: f64,
    pub kappa: f64,
    pub eta: f64,
    pub eps: f64,
    pub eps_f: f64,
    pub eps_g: f64,
    pub delta: f64,
    pub nu: f64,
    pub b: f64,
    pub u: f64,
    pub p_hat: f64,
    pub s: f64,
    /// `phi(x0) - phi*` for the nonconvex bound, `ln((phi(x0) - phi*) / eps)`
    /// for the strongly convex one.
    pub z0: f64,
    pub noise_mode: NoiseMode,
}

impl TheoryInputs {
    /// `K = sigma_lb / sigma_ub`
    pub fn k_ratio(&self) -> f64 {
        self.sigma_lb / self.sigma_ub
    }

    /// Upper end of the admissible interval for `eta`.
    pub fn eta_limit(&self) -> f64 {
        let k = self.k_ratio();
        (1.0 - self.theta * k) / (1.0 + (1.0 - self.theta) * k)
    }

    /// Violated input invariants, empty when all hold.
    pub fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.theta > 0.0 && self.theta < 1.0) {
            out.push(format!("theta = {} outside (0, 1)", self.theta));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            out.push(format!("gamma = {} outside (0, 1)", self.gamma));
        }
        if !(self.delta >= 0.0 && self.delta < 0.5) {
            out.push(format!("delta = {} outside [0, 1/2)", self.delta));
        }
        if !(self.sigma_lb > 0.0 && self.sigma_ub >= self.sigma_lb) {
            out.push("need 0 < sigma_lb <= sigma_ub".to_string());
        }
        if !(self.eta > 0.0 && self.eta < self.eta_limit()) {
            out.push(format!("eta = {} outside (0, {})", self.eta, self.eta_limit()));
        }
        if !(self.l > 0.0) || !(self.alpha_0 > 0.0) || !(self.eps > 0.0) {
            out.push("L, alpha_0 and eps must be positive".to_string());
        }
        if [self.eps_f, self.eps_g, self.nu, self.b, self.s, self.tau, self.kappa].iter().any(|v| !(*v >= 0.0)) {
            out.push("eps_f, eps_g, nu, b, s, tau, kappa must be non-negative".to_string());
        }
        out
    }
}

/// The step-size threshold with both of its branches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaBar {
    pub k: f64,
    pub first: f64,
    pub second: f64,
    pub value: f64,
}

pub fn alpha_bar(inp: &TheoryInputs) -> AlphaBar {
    let k = inp.k_ratio();
    let first = 2.0 * (1.0 - inp.theta) * inp.sigma_lb / ((2.0 * inp.kappa + inp.l * inp.sigma_ub) * inp.sigma_ub);
    let second = 2.0 * ((1.0 - inp.theta) * (1.0 - inp.eta) * k - inp.eta) / (inp.l * inp.sigma_ub * (1.0 - inp.eta));
    AlphaBar { k, first, second, value: first.min(second) }
}

/// Probability that an iteration is true.
pub fn true_iteration_probability(inp: &TheoryInputs) -> f64 {
    match inp.noise_mode {
        NoiseMode::Bounded => 1.0 - inp.delta,
        NoiseMode::General => {
            let tail = (inp.u * inp.u / (2.0 * inp.nu * inp.nu)).min(inp.u / (2.0 * inp.b));
            1.0 - inp.delta - (-tail).exp()
        }
    }
}

/// Number of steps needed to shrink `alpha_0` below `alpha_bar`.
pub fn step_warmup(alpha_0: f64, alpha_bar: f64, gamma: f64) -> f64 {
    (-(alpha_0.ln() - alpha_bar.ln()) / (2.0 * gamma.ln())).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonconvexConstants {
    pub alpha_bar: AlphaBar,
    pub m1_first: f64,
    pub m1_second: f64,
    pub m1: f64,
    pub p: f64,
    pub p_ell: f64,
    /// `h(alpha_bar) = M1 alpha_bar eps^2`
    pub h: f64,
    /// `r(eps_f, 2 eps_f) = 4 eps_f`
    pub r: f64,
    pub nu_r: f64,
    pub b_r: f64,
    pub issues: Vec<String>,
}

impl NonconvexConstants {
    pub fn feasible(&self) -> bool {
        self.issues.is_empty()
    }
}

pub fn nonconvex_constants(inp: &TheoryInputs) -> NonconvexConstants {
    let ab = alpha_bar(inp);
    let m1_first = inp.sigma_lb * inp.theta / ((1.0 + inp.tau) * (1.0 + inp.tau));
    let m1_second = inp.sigma_lb * inp.theta * (1.0 - inp.eta) * (1.0 - inp.eta);
    let m1 = m1_first.min(m1_second);
    let p = true_iteration_probability(inp);
    let h = m1 * ab.value * inp.eps * inp.eps;
    let r = 4.0 * inp.eps_f;
    let p_ell = 0.5 + (r + inp.s) / h;
    let mut issues = inp.issues();
    if !(ab.value > 0.0) {
        issues.push(format!("alpha_bar = {} is not positive", ab.value));
    }
    push_progress_issues(&mut issues, h, r, p);
    NonconvexConstants {
        alpha_bar: ab,
        m1_first,
        m1_second,
        m1,
        p,
        p_ell,
        h,
        r,
        nu_r: 2.0 * inp.nu,
        b_r: 2.0 * inp.b,
        issues,
    }
}

fn push_progress_issues(issues: &mut Vec<String>, h: f64, r: f64, p: f64) {
    if !(p > 0.5) {
        issues.push(format!("p = {p} is not above 1/2"));
    } else if !(h > r / (p - 0.5)) {
        issues.push(format!("progress requirement fails: h = {h} <= r / (p - 1/2) = {}", r / (p - 0.5)));
    }
}

fn check_p_hat(p_hat: f64, p_ell: f64, p: f64) -> Result<(), TheoryError> {
    if p_hat > p_ell && p_hat < p {
        Ok(())
    } else {
        Err(TheoryError::Domain { p_hat, p_ell, p })
    }
}

/// Iterations after which the nonconvex tail bound applies.
pub fn nonconvex_iteration_bound(inp: &TheoryInputs, c: &NonconvexConstants) -> Result<f64, TheoryError> {
    if !(c.alpha_bar.value > 0.0) {
        return Err(TheoryError::Infeasible(format!("alpha_bar = {}", c.alpha_bar.value)));
    }
    check_p_hat(inp.p_hat, c.p_ell, c.p)?;
    let progress = inp.z0 / (c.m1 * c.alpha_bar.value * inp.eps * inp.eps);
    Ok((progress + step_warmup(inp.alpha_0, c.alpha_bar.value, inp.gamma)) / (inp.p_hat - c.p_ell))
}

/// `exp(-(p - p_hat)^2 t / (2 p^2)) + exp(-min(s^2 t / (2 nu_r^2), s t / (2 b_r)))`
///
/// Success probability is `1 - bound` clamped to `[0, 1]`; see
/// [`success_probability`].
pub fn failure_probability(p: f64, p_hat: f64, t: f64, s: f64, nu_r: f64, b_r: f64) -> f64 {
    let gap = p - p_hat;
    let first = (-(gap * gap) * t / (2.0 * p * p)).exp();
    let second = if s == 0.0 {
        1.0
    } else {
        let exponent = (s * s * t / (2.0 * nu_r * nu_r)).min(s * t / (2.0 * b_r));
        (-exponent).exp()
    };
    first + second
}

pub fn success_probability(bound: f64) -> f64 {
    (1.0 - bound).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StronglyConvexConstants {
    pub alpha_bar: AlphaBar,
    pub h_first: f64,
    pub h_second: f64,
    pub h: f64,
    pub p: f64,
    pub p_ell: f64,
    /// `r(eps_f, 2 eps_f) = ln(1 + 4 eps_f / eps)`
    pub r: f64,
    pub nu_r: f64,
    pub b_r: f64,
    pub issues: Vec<String>,
}

impl StronglyConvexConstants {
    pub fn feasible(&self) -> bool {
        self.issues.is_empty()
    }
}

fn neg_log_one_minus(v: f64) -> Option<f64> {
    let arg = 1.0 - v;
    (arg > 0.0).then(|| -arg.ln())
}

/// Both branches of `h(alpha)`; NaN where the log argument is not positive.
pub fn strongly_convex_progress(inp: &TheoryInputs, beta: f64, alpha: f64) -> (f64, f64) {
    let v1 = alpha * inp.sigma_lb * inp.theta * beta / ((1.0 + inp.tau) * (1.0 + inp.tau));
    let v2 = alpha * inp.sigma_lb * beta * inp.theta * (1.0 - inp.eta) * (1.0 - inp.eta);
    (neg_log_one_minus(v1).unwrap_or(f64::NAN), neg_log_one_minus(v2).unwrap_or(f64::NAN))
}

pub fn strongly_convex_constants(inp: &TheoryInputs) -> Result<StronglyConvexConstants, TheoryError> {
    let beta = inp.beta.ok_or(TheoryError::MissingBeta)?;
    let ab = alpha_bar(inp);
    let mut issues = inp.issues();
    if !(beta > 0.0) {
        issues.push(format!("beta = {beta} is not positive"));
    }
    if !(ab.value > 0.0) {
        issues.push(format!("alpha_bar = {} is not positive", ab.value));
    }
    let (h_first, h_second) = strongly_convex_progress(inp, beta, ab.value);
    for h in [h_first, h_second] {
        if h.is_nan() {
            issues.push("a log argument in h(alpha_bar) is not positive".to_string());
        }
    }
    let h = h_first.min(h_second);
    let p = true_iteration_probability(inp);
    let r = (1.0 + 4.0 * inp.eps_f / inp.eps).ln();
    let p_ell = 0.5 + (r + inp.s) / h;
    let e = std::f64::consts::E;
    let nu_r =
        4.0 * e * e * (2.0 * inp.nu / inp.eps).max(2.0 * inp.b / inp.eps) + 4.0 * e * (1.0 + 4.0 * inp.eps_f / inp.eps);
    if h.is_finite() {
        push_progress_issues(&mut issues, h, r, p);
    }
    Ok(StronglyConvexConstants { alpha_bar: ab, h_first, h_second, h, p, p_ell, r, nu_r, b_r: nu_r, issues })
}

/// Iterations after which the strongly convex tail bound applies; `z0` is
/// the log-gap `ln((phi(x0) - phi*) / eps)`.
pub fn strongly_convex_iteration_bound(inp: &TheoryInputs, c: &StronglyConvexConstants) -> Result<f64, TheoryError> {
    if !(c.h > 0.0) || !(c.alpha_bar.value > 0.0) {
        return Err(TheoryError::Infeasible(format!("h = {}, alpha_bar = {}", c.h, c.alpha_bar.value)));
    }
    if !(inp.z0 >= 0.0) {
        return Err(TheoryError::NegativeLogGap(inp.z0));
    }
    check_p_hat(inp.p_hat, c.p_ell, c.p)?;
    Ok((inp.z0 / c.h + step_warmup(inp.alpha_0, c.alpha_bar.value, inp.gamma)) / (inp.p_hat - c.p_ell))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyFloor {
    pub mode: Mode,
    /// Branches of the max, in displayed order.
    pub branches: Vec<f64>,
    /// `None` when the floor is undefined (see `issues`).
    pub value: Option<f64>,
    pub issues: Vec<String>,
}

/// Smallest accuracy the oracles allow.
pub fn accuracy_floor(inp: &TheoryInputs, mode: Mode) -> AccuracyFloor {
    let p = true_iteration_probability(inp);
    let mut issues = Vec::new();
    if !(p > 0.5) {
        issues.push(format!("p = {p} is not above 1/2"));
    }
    let ab = alpha_bar(inp);
    let branches = match mode {
        Mode::Nonconvex => {
            let c = nonconvex_constants(inp);
            let first = inp.eps_g / inp.eta;
            let second = if inp.eps_f == 0.0 { 0.0 } else { (4.0 * inp.eps_f / (c.m1 * ab.value * (p - 0.5))).sqrt() };
            vec![first, second]
        }
        Mode::StronglyConvex => match inp.beta {
            None => {
                issues.push("strong convexity constant beta is required".to_string());
                Vec::new()
            }
            Some(beta) => {
                let first = inp.eps_g * inp.eps_g / (2.0 * beta * inp.eta * inp.eta);
                let k = inp.k_ratio();
                let shrink = (1.0 / ((1.0 + inp.tau) * (1.0 + inp.tau))).min((1.0 - inp.eta) * (1.0 - inp.eta));
                let step = (2.0 * (1.0 - inp.theta) * k / (2.0 * inp.kappa + inp.l * inp.sigma_ub)).min(
                    2.0 * ((1.0 - inp.theta) * (1.0 - inp.eta) * k - inp.eta)
                        / (inp.l * inp.sigma_ub * (1.0 - inp.eta)),
                );
                let base = 1.0 - shrink * inp.sigma_lb * inp.theta * beta * step;
                let second = if inp.eps_f == 0.0 {
                    0.0
                } else if !(base > 0.0) {
                    issues.push(format!("power base {base} is not positive"));
                    f64::NAN
                } else {
                    let denom = base.powf(0.5 - p) - 1.0;
                    if !(denom > 0.0) {
                        issues.push(format!("denominator {denom} is not positive"));
                    }
                    4.0 * inp.eps_f / denom
                };
                vec![first, second, 4.0 * inp.eps_f]
            }
        },
    };
    let value = (issues.is_empty() && branches.iter().all(|v| v.is_finite()))
        .then(|| branches.iter().copied().fold(0.0, f64::max));
    AccuracyFloor { mode, branches, value, issues }
}

/// Everything computable from one input set, as labeled rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryReport {
    pub rows: Vec<(String, String)>,
}

impl TheoryReport {
    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        self.rows.iter().map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
    }
}

fn real(v: f64) -> String {
    v.to_string()
}

pub fn evaluate(inp: &TheoryInputs) -> TheoryReport {
    let mut rows: Vec<(String, String)> = Vec::new();
    let mut push = |k: &str, v: String| rows.push((k.to_string(), v));
    let issues = inp.issues();
    push("inputs.valid", if issues.is_empty() { "yes".into() } else { issues.join("; ") });
    push("K", real(inp.k_ratio()));
    push("eta.limit", real(inp.eta_limit()));

    let nc = nonconvex_constants(inp);
    push("alpha_bar.first", real(nc.alpha_bar.first));
    push("alpha_bar.second", real(nc.alpha_bar.second));
    push("alpha_bar", real(nc.alpha_bar.value));
    push("p", real(nc.p));
    push("nonconvex.M1.first", real(nc.m1_first));
    push("nonconvex.M1.second", real(nc.m1_second));
    push("nonconvex.M1", real(nc.m1));
    push("nonconvex.h", real(nc.h));
    push("nonconvex.p_ell", real(nc.p_ell));
    push("nonconvex.feasible", feasibility(&nc.issues));
    match nonconvex_iteration_bound(inp, &nc) {
        Ok(t) => {
            push("nonconvex.t_min", real(t));
            let bound = failure_probability(nc.p, inp.p_hat, t, inp.s, nc.nu_r, nc.b_r);
            push("nonconvex.failure_bound", real(bound));
            push("nonconvex.success_probability", real(success_probability(bound)));
        }
        Err(e) => push("nonconvex.t_min", format!("undefined ({e})")),
    }
    let floor = accuracy_floor(inp, Mode::Nonconvex);
    push("nonconvex.eps_min", floor_text(&floor));

    match strongly_convex_constants(inp) {
        Err(e) => push("strongly_convex", format!("skipped ({e})")),
        Ok(sc) => {
            push("strongly_convex.h.first", real(sc.h_first));
            push("strongly_convex.h.second", real(sc.h_second));
            push("strongly_convex.h", real(sc.h));
            push("strongly_convex.p_ell", real(sc.p_ell));
            push("strongly_convex.nu_r", real(sc.nu_r));
            push("strongly_convex.b_r", real(sc.b_r));
            push("strongly_convex.feasible", feasibility(&sc.issues));
            match strongly_convex_iteration_bound(inp, &sc) {
                Ok(t) => {
                    push("strongly_convex.t_min", real(t));
                    let bound = failure_probability(sc.p, inp.p_hat, t, inp.s, sc.nu_r, sc.b_r);
                    push("strongly_convex.failure_bound", real(bound));
                    push("strongly_convex.success_probability", real(success_probability(bound)));
                }
                Err(e) => push("strongly_convex.t_min", format!("undefined ({e})")),
            }
            let floor = accuracy_floor(inp, Mode::StronglyConvex);
            push("strongly_convex.eps_min", floor_text(&floor));
        }
    }
    TheoryReport { rows }
}

fn feasibility(issues: &[String]) -> String {
    if issues.is_empty() {
        "yes".into()
    } else {
        format!("no ({})", issues.join("; "))
    }
}

fn floor_text(floor: &AccuracyFloor) -> String {
    match floor.value {
        Some(v) => real(v),
        None => format!("undefined ({})", floor.issues.join("; ")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn base() -> TheoryInputs {
        TheoryInputs {
            l: 1.0,
            beta: Some(0.5),
            theta: 0.2,
            gamma: 0.8,
            alpha_0: 1.0,
            sigma_lb: 1.0,
            sigma_ub: 1.0,
            tau: 10.0,
            kappa: 1.0,
            eta: 0.1,
            eps: 1.0,
            eps_f: 0.0,
            eps_g: 0.0,
            delta: 0.1,
            nu: 0.0,
            b: 0.0,
            u: 0.0,
            p_hat: 0.8,
            s: 0.0,
            z0: 1.0,
            noise_mode: NoiseMode::Bounded,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn alpha_bar_example() {
        let c = nonconvex_constants(&base());
        assert!(rel(c.alpha_bar.value, 8.0 / 15.0) < 1e-14);
        assert!(rel(c.m1, 0.2 / 121.0) < 1e-14);
        assert_eq!(c.p_ell, 0.5);
        assert_eq!(c.p, 0.9);
    }

    #[test]
    fn nonconvex_bound_example() {
        let mut inp = base();
        inp.p_hat = 0.8;
        let c = nonconvex_constants(&inp);
        let t = nonconvex_iteration_bound(&inp, &c).unwrap();
        assert!(rel(t, 3.79e3) < 0.01, "{t}");
    }

    #[test]
    fn nonconvex_bound_zero() {
        let mut inp = base();
        inp.z0 = 0.0;
        inp.alpha_0 = alpha_bar(&inp).value;
        let c = nonconvex_constants(&inp);
        assert_eq!(nonconvex_iteration_bound(&inp, &c).unwrap(), 0.0);
    }

    #[test]
    fn nonconvex_bound_domain() {
        let mut inp = base();
        inp.p_hat = 0.95;
        let c = nonconvex_constants(&inp);
        assert!(matches!(nonconvex_iteration_bound(&inp, &c), Err(TheoryError::Domain { .. })));
    }

    #[test]
    fn failure_examples() {
        assert!(failure_probability(0.9, 0.7, 100.0, 0.0, 1.0, 1.0) >= 1.0);
        let first = failure_probability(0.9, 0.7, 100.0, 1e9, 0.0, 0.0);
        assert!((first - 0.0847).abs() < 5e-5, "{first}");
        assert_eq!(success_probability(1.3), 0.0);
    }

    #[test]
    fn strongly_convex_h_example() {
        let inp = base();
        let (first, second) = strongly_convex_progress(&inp, 0.5, 1.0);
        assert!((first - 8.267e-4).abs() < 1e-7, "{first}");
        assert!((second - 0.08446).abs() < 1e-5, "{second}");
        let c = strongly_convex_constants(&inp).unwrap();
        assert_eq!(c.h, strongly_convex_progress(&inp, 0.5, 8.0 / 15.0).0);
        assert_eq!(c.p_ell, 0.5);
    }

    #[test]
    fn strongly_convex_nu_r_example() {
        let mut inp = base();
        inp.nu = 1.0;
        inp.b = 1.0;
        let c = strongly_convex_constants(&inp).unwrap();
        let e = std::f64::consts::E;
        assert!(rel(c.nu_r, 8.0 * e * e + 4.0 * e) < 1e-14);
        assert_eq!(c.nu_r, c.b_r);
    }

    #[test]
    fn strongly_convex_requires_beta() {
        let mut inp = base();
        inp.beta = None;
        assert_eq!(strongly_convex_constants(&inp), Err(TheoryError::MissingBeta));
    }

    #[test]
    fn floors() {
        let inp = base();
        assert_eq!(accuracy_floor(&inp, Mode::Nonconvex).value, Some(0.0));
        assert_eq!(accuracy_floor(&inp, Mode::StronglyConvex).value, Some(0.0));
        let mut inp = base();
        inp.eps_g = 0.01;
        inp.eps_f = 1e-14;
        assert!(rel(accuracy_floor(&inp, Mode::Nonconvex).value.unwrap(), 0.1) < 1e-12);
        let sc = accuracy_floor(&inp, Mode::StronglyConvex);
        assert!(rel(sc.branches[0], 0.01) < 1e-12);
    }

    #[test]
    fn infeasible_is_reported() {
        let mut inp = base();
        inp.eta = 0.9;
        let c = nonconvex_constants(&inp);
        assert!(c.alpha_bar.value < 0.0);
        assert!(!c.feasible());
        assert!(nonconvex_iteration_bound(&inp, &c).is_err());
        let mut inp = base();
        inp.delta = 0.6;
        assert_eq!(accuracy_floor(&inp, Mode::Nonconvex).value, None);
        let report = evaluate(&inp).render();
        assert!(report.contains("nonconvex.feasible"));
    }
}
