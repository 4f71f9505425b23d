//! Built-in test problems.
//!
//! Five analytic families cover convex and nonconvex, well and badly
//! conditioned, and oscillatory objectives. The VQE family models the
//! energy `psi(x)^T H psi(x)` of a real state prepared by half-angle
//! rotations. Each parameter rotates every pair of a perfect matching of the
//! basis at once, so its generator squares to `-I`, every coordinate enters
//! as `a + b cos x_i + c sin x_i`, and the pi/2 shift rule is exact. Users
//! can add quadratics through a small line-oriented manifest (see [`parse_quadratic_manifest`]).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::{self, dot, norm, Matrix};

/// Relative tolerance of the construction-time gradient self-test.
pub const GRADIENT_CHECK_TOL: f64 = 1e-5;
const GRADIENT_CHECK_POINTS: usize = 20;
const PROBLEM_SEED: u64 = 0x005E_ED0F_9A55;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("unknown problem '{0}'")]
    UnknownName(String),
    #[error("unknown VQE preset '{0}'")]
    UnknownPreset(String),
    #[error("invalid dimension {n} for '{name}'")]
    InvalidDimension { name: String, n: usize },
    #[error("invalid parameter for '{name}': {detail}")]
    InvalidParameter { name: String, detail: String },
    #[error("gradient self-test failed for '{name}' (relative error {error:e})")]
    GradientCheck { name: String, error: f64 },
    #[error("manifest line {line}: {detail}")]
    Manifest { line: usize, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Quadratic,
    IllConditionedQuadratic,
    RosenbrockChain,
    CosineChain,
    TrigSum,
    UserQuadratic,
    Vqe,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::Quadratic => "quadratic",
            Family::IllConditionedQuadratic => "ill-conditioned-quadratic",
            Family::RosenbrockChain => "rosenbrock-chain",
            Family::CosineChain => "cosine-chain",
            Family::TrigSum => "trig-sum",
            Family::UserQuadratic => "user-quadratic",
            Family::Vqe => "vqe",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
enum Objective {
    /// `1/2 x^T A x + b^T x`
    Quadratic {
        a: Matrix,
        b: Vec<f64>,
    },
    RosenbrockChain,
    CosineChain,
    TrigSum,
    Vqe(Arc<VqeProblem>),
}

/// A smooth objective with analytic gradient, start point and metadata.
#[derive(Debug, Clone)]
pub struct Problem {
    name: String,
    family: Family,
    dim: usize,
    objective: Objective,
    start: Vec<f64>,
    optimal_value: Option<f64>,
    hessian_norm_hint: Option<f64>,
}

impl Problem {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn start_point(&self) -> &[f64] {
        &self.start
    }

    pub fn optimal_value(&self) -> Option<f64> {
        self.optimal_value
    }

    /// Operator norm of the Hessian at the start point, when known.
    pub fn hessian_norm_hint(&self) -> Option<f64> {
        self.hessian_norm_hint
    }

    pub fn vqe(&self) -> Option<&Arc<VqeProblem>> {
        match &self.objective {
            Objective::Vqe(v) => Some(v),
            _ => None,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match &self.objective {
            Objective::Quadratic { a, b } => {
                let ax = a.matvec(x).expect("dimension checked");
                0.5 * dot(x, &ax) + dot(b, x)
            }
            Objective::RosenbrockChain => {
                x.windows(2).map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2)).sum()
            }
            Objective::CosineChain => x.windows(2).map(|w| (-0.5 * w[1] + w[0] * w[0]).cos()).sum(),
            Objective::TrigSum => trig_residuals(x).iter().map(|r| r * r).sum(),
            Objective::Vqe(v) => v.energy(x),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        match &self.objective {
            Objective::Quadratic { a, b } => {
                let mut g = a.matvec(x).expect("dimension checked");
                linalg::axpy(1.0, b, &mut g);
                g
            }
            Objective::RosenbrockChain => {
                let mut g = vec![0.0; x.len()];
                for i in 0..x.len().saturating_sub(1) {
                    let t = x[i + 1] - x[i] * x[i];
                    g[i] += -400.0 * x[i] * t - 2.0 * (1.0 - x[i]);
                    g[i + 1] += 200.0 * t;
                }
                g
            }
            Objective::CosineChain => {
                let mut g = vec![0.0; x.len()];
                for i in 0..x.len().saturating_sub(1) {
                    let s = (-0.5 * x[i + 1] + x[i] * x[i]).sin();
                    g[i] += -2.0 * x[i] * s;
                    g[i + 1] += 0.5 * s;
                }
                g
            }
            Objective::TrigSum => {
                let n = x.len();
                let r = trig_residuals(x);
                let rsum: f64 = r.iter().sum();
                (0..n)
                    .map(|k| {
                        let own = (k as f64 + 1.0) * x[k].sin() - x[k].cos();
                        2.0 * (rsum * x[k].sin() + r[k] * own)
                    })
                    .collect()
            }
            Objective::Vqe(v) => v.gradient(x),
        }
    }

    /// Compares the analytic gradient with central differences at seeded
    /// random points around the start point.
    pub fn self_test(&self) -> Result<(), ProblemError> {
        let mut rng = ChaCha8Rng::seed_from_u64(PROBLEM_SEED ^ self.dim as u64);
        let mut worst = 0.0_f64;
        for _ in 0..GRADIENT_CHECK_POINTS {
            let x: Vec<f64> = self.start.iter().map(|&s| s + rng.random_range(-1.0..1.0)).collect();
            let g = self.gradient(&x);
            let fd = central_difference(|z| self.value(z), &x);
            let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
            let err = norm(&diff) / norm(&g).max(1.0);
            worst = worst.max(err);
        }
        if worst > GRADIENT_CHECK_TOL || !worst.is_finite() {
            return Err(ProblemError::GradientCheck { name: self.name.clone(), error: worst });
        }
        Ok(())
    }

    fn finish(mut self) -> Result<Self, ProblemError> {
        self.self_test()?;
        if self.hessian_norm_hint.is_none() {
            self.hessian_norm_hint = Some(fd_hessian_norm(&self, &self.start.clone()));
        }
        Ok(self)
    }
}

fn trig_residuals(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let cos_sum: f64 = x.iter().map(|v| v.cos()).sum();
    x.iter().enumerate().map(|(i, &xi)| n - cos_sum + (i as f64 + 1.0) * (1.0 - xi.cos()) - xi.sin()).collect()
}

/// Central-difference gradient with a per-coordinate step scaled to |x_i|.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut z = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * (1.0 + x[i].abs());
            z[i] = x[i] + h;
            let up = f(&z);
            z[i] = x[i] - h;
            let down = f(&z);
            z[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Operator norm of a central-difference Hessian (of the analytic gradient)
/// by power iteration.
fn fd_hessian_norm(problem: &Problem, x: &[f64]) -> f64 {
    let n = x.len();
    let mut hess = Matrix::zeros(n, n);
    let mut z = x.to_vec();
    for j in 0..n {
        let h = 1e-5 * (1.0 + x[j].abs());
        z[j] = x[j] + h;
        let up = problem.gradient(&z);
        z[j] = x[j] - h;
        let down = problem.gradient(&z);
        z[j] = x[j];
        for i in 0..n {
            hess[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    hess.symmetrize();
    linalg::power_iteration_norm(&hess, 1000)
}

/// Names accepted by [`builtin_problem`], with a one-line description each.
pub fn registry() -> &'static [(&'static str, &'static str)] {
    &[
        ("quadratic[:cond]", "rotated SPD quadratic, eigenvalues log-spaced in [1, cond] (default cond 1)"),
        (
            "ill-conditioned-quadratic[:cond]",
            "rotated SPD quadratic, eigenvalues log-spaced in [cond^-1/2, cond^1/2] (default cond 1e4)",
        ),
        ("rosenbrock-chain", "sum 100(x_{i+1} - x_i^2)^2 + (1 - x_i)^2, start (-1.2, 1, -1.2, ...)"),
        ("cosine-chain", "sum cos(-x_{i+1}/2 + x_i^2), start (1, ..., 1), optimum -(n-1)"),
        ("trig-sum", "sum of squared trigonometric residuals, start (1/n, ..., 1/n), optimum 0"),
        ("vqe:<preset>", "VQE energy for preset toy-1q | h2-like | lih-like (dimension fixed by preset)"),
    ]
}

/// Looks up a built-in problem. `name` is a family, optionally followed by
/// `:<param>` (condition number for the quadratics, preset for `vqe`).
pub fn builtin_problem(name: &str, n: usize) -> Result<Problem, ProblemError> {
    let (family, param) = match name.split_once(':') {
        Some((f, p)) => (f, Some(p)),
        None => (name, None),
    };
    let bad_param =
        |detail: &str| ProblemError::InvalidParameter { name: name.to_string(), detail: detail.to_string() };
    let parse_cond = |default: f64| -> Result<f64, ProblemError> {
        match param {
            None => Ok(default),
            Some(p) => {
                let cond: f64 = p.parse().map_err(|_| bad_param("condition number must be a real"))?;
                if !(cond >= 1.0 && cond.is_finite()) {
                    return Err(bad_param("condition number must be >= 1"));
                }
                Ok(cond)
            }
        }
    };
    if family == "vqe" {
        let preset = param.ok_or_else(|| bad_param("missing preset"))?;
        let vqe = Arc::new(vqe_problem(preset)?);
        if n != 0 && n != vqe.num_parameters() {
            return Err(ProblemError::InvalidDimension { name: name.to_string(), n });
        }
        return Problem::from_vqe(vqe);
    }
    if n == 0 {
        return Err(ProblemError::InvalidDimension { name: name.to_string(), n });
    }
    let chain_min = |min: usize| -> Result<(), ProblemError> {
        if n < min {
            Err(ProblemError::InvalidDimension { name: name.to_string(), n })
        } else {
            Ok(())
        }
    };
    let problem = match family {
        "quadratic" => {
            let cond = parse_cond(1.0)?;
            let eig: Vec<f64> = log_spaced(1.0, cond, n);
            rotated_quadratic(name, Family::Quadratic, &eig)
        }
        "ill-conditioned-quadratic" => {
            let cond = parse_cond(1e4)?;
            let eig: Vec<f64> = log_spaced(cond.sqrt().recip(), cond.sqrt(), n);
            rotated_quadratic(name, Family::IllConditionedQuadratic, &eig)
        }
        "rosenbrock-chain" => {
            chain_min(2)?;
            Problem {
                name: name.to_string(),
                family: Family::RosenbrockChain,
                dim: n,
                objective: Objective::RosenbrockChain,
                start: (0..n).map(|i| if i % 2 == 0 { -1.2 } else { 1.0 }).collect(),
                optimal_value: Some(0.0),
                hessian_norm_hint: None,
            }
        }
        "cosine-chain" => {
            chain_min(2)?;
            Problem {
                name: name.to_string(),
                family: Family::CosineChain,
                dim: n,
                objective: Objective::CosineChain,
                start: vec![1.0; n],
                optimal_value: Some(-((n - 1) as f64)),
                hessian_norm_hint: None,
            }
        }
        "trig-sum" => Problem {
            name: name.to_string(),
            family: Family::TrigSum,
            dim: n,
            objective: Objective::TrigSum,
            start: vec![1.0 / n as f64; n],
            optimal_value: Some(0.0),
            hessian_norm_hint: None,
        },
        _ => return Err(ProblemError::UnknownName(name.to_string())),
    };
    problem.finish()
}

fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                lo * (hi / lo).powf(i as f64 / (n - 1) as f64)
            }
        })
        .collect()
}

/// Deterministic random orthogonal matrix (Q factor of a seeded Gaussian matrix).
fn random_orthogonal(n: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
    let g = Matrix::from_row_major(n, n, data).expect("square");
    linalg::thin_qr(&g).expect("finite").0
}

fn rotated_quadratic(name: &str, family: Family, eig: &[f64]) -> Problem {
    let n = eig.len();
    let a = if eig.iter().all(|&v| v == eig[0]) {
        Matrix::diag(eig)
    } else {
        let q = random_orthogonal(n, PROBLEM_SEED + n as u64);
        let qd = q.matmul(&Matrix::diag(eig)).expect("square");
        let mut a = qd.matmul(&q.transpose()).expect("square");
        a.symmetrize();
        a
    };
    let hint = eig.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Problem {
        name: name.to_string(),
        family,
        dim: n,
        objective: Objective::Quadratic { a, b: vec![0.0; n] },
        start: vec![1.0; n],
        optimal_value: Some(0.0),
        hessian_norm_hint: Some(hint),
    }
}

/// Parses a user quadratic `1/2 x^T A x + b^T x`.
///
/// Grammar (one directive per line, `#` starts a comment, blank lines ignored):
///
/// ```text
/// name <label>            optional
/// dimension <n>           required, first directive
/// row <a_i1> ... <a_in>   exactly n rows, A symmetric
/// linear <b_1> ... <b_n>  optional, default 0
/// start <x_1> ... <x_n>   required
/// optimal <value>         optional; computed when A is positive definite
/// ```
pub fn parse_quadratic_manifest(text: &str) -> Result<Problem, ProblemError> {
    let mut name = String::from("user-quadratic");
    let mut dim: Option<usize> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut linear: Option<Vec<f64>> = None;
    let mut start: Option<Vec<f64>> = None;
    let mut optimal: Option<f64> = None;

    let err = |line: usize, detail: String| ProblemError::Manifest { line, detail };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let key = tokens.next().expect("non-empty");
        let rest: Vec<&str> = tokens.collect();
        let reals = |expected: usize| -> Result<Vec<f64>, ProblemError> {
            let vals = rest
                .iter()
                .map(|t| t.parse::<f64>().map_err(|_| err(line_no, format!("'{t}' is not a real"))))
                .collect::<Result<Vec<_>, _>>()?;
            if vals.len() != expected {
                return Err(err(line_no, format!("expected {expected} values, got {}", vals.len())));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(err(line_no, "non-finite value".into()));
            }
            Ok(vals)
        };
        if key != "dimension" && key != "name" && dim.is_none() {
            return Err(err(line_no, "'dimension' must come first".into()));
        }
        match key {
            "name" => name = rest.join(" "),
            "dimension" => {
                if dim.is_some() {
                    return Err(err(line_no, "duplicate 'dimension'".into()));
                }
                let n: usize = rest
                    .first()
                    .and_then(|t| t.parse().ok())
                    .filter(|&n| n > 0 && rest.len() == 1)
                    .ok_or_else(|| err(line_no, "dimension must be a positive integer".into()))?;
                dim = Some(n);
            }
            "row" => {
                let n = dim.expect("checked");
                if rows.len() == n {
                    return Err(err(line_no, format!("more than {n} rows")));
                }
                rows.push(reals(n)?);
            }
            "linear" => linear = Some(reals(dim.expect("checked"))?),
            "start" => start = Some(reals(dim.expect("checked"))?),
            "optimal" => optimal = Some(reals(1)?[0]),
            other => return Err(err(line_no, format!("unknown directive '{other}'"))),
        }
    }

    let last = text.lines().count().max(1);
    let n = dim.ok_or_else(|| err(last, "missing 'dimension'".into()))?;
    if rows.len() != n {
        return Err(err(last, format!("expected {n} rows, got {}", rows.len())));
    }
    let start = start.ok_or_else(|| err(last, "missing 'start'".into()))?;
    let b = linear.unwrap_or_else(|| vec![0.0; n]);
    let a = Matrix::from_rows(&rows).expect("row lengths checked");
    if a.asymmetry() > linalg::SYMMETRY_TOL * a.max_abs().max(1.0) {
        return Err(err(last, "matrix is not symmetric".into()));
    }
    let eig = linalg::sym_eig_small(&a).map_err(|e| err(last, e.to_string()))?;
    let hint = eig.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if optimal.is_none() && eig.last().is_some_and(|&v| v > 0.0) {
        let rhs = Matrix::from_columns(n, &[&b]).expect("length n");
        if let Ok(sol) = linalg::lu_solve(&a, &rhs) {
            optimal = Some(-0.5 * dot(&b, &sol.column(0)));
        }
    }
    Problem {
        name,
        family: Family::UserQuadratic,
        dim: n,
        objective: Objective::Quadratic { a, b },
        start,
        optimal_value: optimal,
        hessian_norm_hint: Some(hint),
    }
    .finish()
}

// ---------------------------------------------------------------------------
// VQE family
// ---------------------------------------------------------------------------

/// Energy landscape of a rotation ansatz against a symmetric Hamiltonian.
#[derive(Debug, Clone)]
pub struct VqeProblem {
    preset: String,
    hamiltonian: Matrix,
    /// Ascending eigenvalues of the Hamiltonian.
    spectrum: Vec<f64>,
    /// Eigenvectors as columns, matching `spectrum`.
    eigenvectors: Matrix,
    /// Pairing of basis vectors rotated by each parameter, applied in
    /// parameter order. Every pairing covers each basis index exactly once.
    pairings: Vec<Vec<(usize, usize)>>,
    base_state: Vec<f64>,
    start: Vec<f64>,
}

impl VqeProblem {
    /// Builds a problem from an explicit spectrum and eigenbasis.
    pub fn new(
        preset: &str,
        spectrum: Vec<f64>,
        eigenvectors: Matrix,
        pairings: Vec<Vec<(usize, usize)>>,
        base_state: Vec<f64>,
        start: Vec<f64>,
    ) -> Result<Self, ProblemError> {
        let d = spectrum.len();
        let bad =
            |detail: &str| ProblemError::InvalidParameter { name: preset.to_string(), detail: detail.to_string() };
        if eigenvectors.rows() != d || eigenvectors.cols() != d || base_state.len() != d {
            return Err(bad("inconsistent Hilbert-space dimension"));
        }
        for pairing in &pairings {
            let mut seen = vec![false; d];
            for &(p, q) in pairing {
                if p >= d || q >= d || p == q || seen[p] || seen[q] {
                    return Err(bad("pairing indices out of range or repeated"));
                }
                seen[p] = true;
                seen[q] = true;
            }
            if seen.iter().any(|s| !s) {
                return Err(bad("pairing must cover every basis index"));
            }
        }
        if start.len() != pairings.len() {
            return Err(bad("start point length differs from parameter count"));
        }
        if (norm(&base_state) - 1.0).abs() > 1e-12 {
            return Err(bad("base state must be a unit vector"));
        }
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| spectrum[i].total_cmp(&spectrum[j]));
        let sorted: Vec<f64> = order.iter().map(|&i| spectrum[i]).collect();
        let mut vecs = Matrix::zeros(d, d);
        for (dst, &src) in order.iter().enumerate() {
            for k in 0..d {
                vecs[(k, dst)] = eigenvectors[(k, src)];
            }
        }
        let scaled = vecs.matmul(&Matrix::diag(&sorted)).expect("square");
        let mut hamiltonian = scaled.matmul(&vecs.transpose()).expect("square");
        hamiltonian.symmetrize();
        Ok(Self {
            preset: preset.to_string(),
            hamiltonian,
            spectrum: sorted,
            eigenvectors: vecs,
            pairings,
            base_state,
            start,
        })
    }

    pub fn preset(&self) -> &str {
        &self.preset
    }

    pub fn num_parameters(&self) -> usize {
        self.pairings.len()
    }

    pub fn hilbert_dim(&self) -> usize {
        self.spectrum.len()
    }

    pub fn hamiltonian(&self) -> &Matrix {
        &self.hamiltonian
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn ground_energy(&self) -> f64 {
        self.spectrum[0]
    }

    pub fn max_energy(&self) -> f64 {
        *self.spectrum.last().expect("non-empty")
    }

    pub fn eigenvector(&self, j: usize) -> Vec<f64> {
        self.eigenvectors.column(j)
    }

    pub fn start_point(&self) -> &[f64] {
        &self.start
    }

    fn rotate(v: &mut [f64], pairing: &[(usize, usize)], angle: f64) {
        let (sn, cs) = (0.5 * angle).sin_cos();
        for &(p, q) in pairing {
            let (vp, vq) = (v[p], v[q]);
            v[p] = cs * vp - sn * vq;
            v[q] = sn * vp + cs * vq;
        }
    }

    /// Prepared state `psi(x) = G_n(x_n) ... G_1(x_1) psi_0`.
    pub fn state(&self, x: &[f64]) -> Vec<f64> {
        let mut psi = self.base_state.clone();
        for (pairing, &xi) in self.pairings.iter().zip(x) {
            Self::rotate(&mut psi, pairing, xi);
        }
        psi
    }

    pub fn energy(&self, x: &[f64]) -> f64 {
        let psi = self.state(x);
        dot(&psi, &self.hamiltonian.matvec(&psi).expect("dimension"))
    }

    /// Analytic gradient by differentiating each rotation in turn.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let psi = self.state(x);
        let h_psi = self.hamiltonian.matvec(&psi).expect("dimension");
        let mut prefix = self.base_state.clone();
        let mut grad = Vec::with_capacity(x.len());
        for (i, (pairing, &xi)) in self.pairings.iter().zip(x).enumerate() {
            // derivative of the i-th rotation applied to the partial state
            let (sn, cs) = (0.5 * xi).sin_cos();
            let mut dpsi = vec![0.0; prefix.len()];
            for &(p, q) in pairing {
                dpsi[p] = 0.5 * (-sn * prefix[p] - cs * prefix[q]);
                dpsi[q] = 0.5 * (cs * prefix[p] - sn * prefix[q]);
            }
            for (later, &xj) in self.pairings[i + 1..].iter().zip(&x[i + 1..]) {
                Self::rotate(&mut dpsi, later, xj);
            }
            grad.push(2.0 * dot(&h_psi, &dpsi));
            Self::rotate(&mut prefix, pairing, xi);
        }
        grad
    }

    /// Outcome probabilities `<v_j, psi(x)>^2` over the eigenbasis.
    pub fn outcome_probabilities(&self, x: &[f64]) -> Vec<f64> {
        let psi = self.state(x);
        let mut probs: Vec<f64> = (0..self.hilbert_dim())
            .map(|j| {
                let amp: f64 = (0..psi.len()).map(|k| self.eigenvectors[(k, j)] * psi[k]).sum();
                amp * amp
            })
            .collect();
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        probs
    }

    /// Per-shot variance of the energy measurement at `x`.
    pub fn shot_variance(&self, x: &[f64]) -> f64 {
        let probs = self.outcome_probabilities(x);
        let mean: f64 = probs.iter().zip(&self.spectrum).map(|(p, l)| p * l).sum();
        probs.iter().zip(&self.spectrum).map(|(p, l)| p * (l - mean).powi(2)).sum()
    }
}

/// Sample statistics of one batch of measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotStats {
    pub mean: f64,
    /// Unbiased sample variance; `None` for a single shot.
    pub variance: Option<f64>,
    pub shots: u64,
}

/// Draws `shots` energy eigenvalue outcomes and returns their statistics.
///
/// Outcome counts are sampled jointly from the multinomial distribution by
/// sequential binomials, which is exact and costs `O(d)` regardless of the
/// number of shots.
pub fn vqe_measure_stats<R: Rng + ?Sized>(problem: &VqeProblem, x: &[f64], shots: u64, rng: &mut R) -> ShotStats {
    assert!(shots >= 1, "at least one shot is required");
    let probs = problem.outcome_probabilities(x);
    let mut remaining = shots;
    let mut mass = 1.0_f64;
    let mut counts = vec![0u64; probs.len()];
    for (j, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if j + 1 == probs.len() || mass <= 0.0 {
            counts[j] = remaining;
            break;
        }
        let cond = (p / mass).clamp(0.0, 1.0);
        let c = if cond >= 1.0 {
            remaining
        } else if cond <= 0.0 {
            0
        } else {
            Binomial::new(remaining, cond).expect("valid binomial").sample(rng)
        };
        counts[j] = c;
        remaining -= c;
        mass -= p;
    }
    let spectrum = problem.spectrum();
    let total = shots as f64;
    let mean = counts.iter().zip(spectrum).map(|(&c, &l)| c as f64 * l).sum::<f64>() / total;
    let variance = (shots >= 2).then(|| {
        counts.iter().zip(spectrum).map(|(&c, &l)| c as f64 * (l - mean).powi(2)).sum::<f64>() / (total - 1.0)
    });
    ShotStats { mean, variance, shots }
}

/// Mean of `shots` measured energy eigenvalues; unbiased for the energy at `x`.
pub fn vqe_measure<R: Rng + ?Sized>(problem: &VqeProblem, x: &[f64], shots: u64, rng: &mut R) -> f64 {
    vqe_measure_stats(problem, x, shots, rng).mean
}

/// Built-in VQE presets: `toy-1q` (d = 2, n = 1), `h2-like` (d = 4, n = 3)
/// and `lih-like` (d = 16, n = 16).
pub fn vqe_problem(preset: &str) -> Result<VqeProblem, ProblemError> {
    match preset {
        "toy-1q" => {
            VqeProblem::new(preset, vec![-1.0, 1.0], Matrix::identity(2), vec![vec![(0, 1)]], vec![1.0, 0.0], vec![0.5])
        }
        "h2-like" => {
            let spectrum = vec![-1.0, -0.55, 0.15, 0.8];
            synthetic_vqe(preset, spectrum, 3, 0xB0_4D_01)
        }
        "lih-like" => {
            let d = 16;
            let mut spectrum = vec![-1.0];
            spectrum.extend((1..d).map(|i| -0.7 + 1.7 * (i - 1) as f64 / (d - 2) as f64));
            synthetic_vqe(preset, spectrum, 16, 0x11_4D_02)
        }
        other => Err(ProblemError::UnknownPreset(other.to_string())),
    }
}

/// Random eigenbasis (fixed seed). Parameter `i` pairs index `k` with
/// `k xor m_i`, the masks `m_i` cycling through `1..d`.
fn synthetic_vqe(preset: &str, spectrum: Vec<f64>, n_params: usize, seed: u64) -> Result<VqeProblem, ProblemError> {
    let d = spectrum.len();
    let basis = random_orthogonal(d, seed);
    let pairings = (0..n_params)
        .map(|i| {
            let mask = 1 + i % (d - 1);
            (0..d).filter(|&k| k < k ^ mask).map(|k| (k, k ^ mask)).collect()
        })
        .collect();
    let mut base = vec![0.0; d];
    base[0] = 1.0;
    VqeProblem::new(preset, spectrum, basis, pairings, base, vec![0.5; n_params])
}

impl Problem {
    pub fn from_vqe(vqe: Arc<VqeProblem>) -> Result<Problem, ProblemError> {
        Problem {
            name: format!("vqe:{}", vqe.preset()),
            family: Family::Vqe,
            dim: vqe.num_parameters(),
            start: vqe.start_point().to_vec(),
            optimal_value: Some(vqe.ground_energy()),
            hessian_norm_hint: None,
            objective: Objective::Vqe(vqe),
        }
        .finish()
    }
}

/// `(phi(x + pi/2 e_i) - phi(x - pi/2 e_i)) / 2` evaluated on exact energies.
pub fn shift_rule_partial(problem: &VqeProblem, x: &[f64], i: usize) -> f64 {
    let mut z = x.to_vec();
    z[i] = x[i] + PI / 2.0;
    let up = problem.energy(&z);
    z[i] = x[i] - PI / 2.0;
    let down = problem.energy(&z);
    0.5 * (up - down)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_quadratic_is_half_norm_squared() {
        let p = builtin_problem("quadratic", 2).unwrap();
        assert_eq!(p.value(&[3.0, 4.0]), 12.5);
        assert_eq!(p.gradient(&[3.0, 4.0]), vec![3.0, 4.0]);
        assert_eq!(p.optimal_value(), Some(0.0));
    }

    #[test]
    fn conditioned_quadratic_hint() {
        let p = builtin_problem("quadratic:100", 10).unwrap();
        assert_eq!(p.hessian_norm_hint(), Some(100.0));
    }

    #[test]
    fn rosenbrock_start_value() {
        let p = builtin_problem("rosenbrock-chain", 2).unwrap();
        assert_eq!(p.start_point(), &[-1.2, 1.0]);
        assert!((p.value(p.start_point()) - 24.2).abs() < 1e-12);
    }

    #[test]
    fn cosine_chain_origin() {
        let p = builtin_problem("cosine-chain", 2).unwrap();
        assert_eq!(p.value(&[0.0, 0.0]), 1.0);
        assert_eq!(p.gradient(&[0.0, 0.0]), vec![0.0, 0.0]);
        let x = [0.3, -0.7];
        let fd = central_difference(|z| p.value(z), &x);
        let g = p.gradient(&x);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn trig_sum_zero_at_origin() {
        let p = builtin_problem("trig-sum", 4).unwrap();
        assert!(p.value(&[0.0; 4]).abs() < 1e-15);
    }

    #[test]
    fn unknown_name_is_registry_error() {
        assert_eq!(builtin_problem("banana", 3).unwrap_err(), ProblemError::UnknownName("banana".into()));
        assert!(matches!(vqe_problem("h2o"), Err(ProblemError::UnknownPreset(_))));
    }

    #[test]
    fn chain_needs_two_coordinates() {
        assert!(matches!(builtin_problem("rosenbrock-chain", 1), Err(ProblemError::InvalidDimension { .. })));
    }

    #[test]
    fn toy_vqe_is_minus_cosine() {
        let v = vqe_problem("toy-1q").unwrap();
        for &x in &[0.0, 0.3, 1.0, 2.5, -1.7] {
            assert!((v.energy(&[x]) + x.cos()).abs() < 1e-15);
        }
        assert_eq!(v.ground_energy(), -1.0);
    }

    #[test]
    fn vqe_at_origin_is_base_expectation() {
        for preset in ["toy-1q", "h2-like", "lih-like"] {
            let v = vqe_problem(preset).unwrap();
            let x = vec![0.0; v.num_parameters()];
            let h00 = v.hamiltonian()[(0, 0)];
            assert!((v.energy(&x) - h00).abs() < 1e-14);
        }
    }

    #[test]
    fn aligned_state_measures_its_eigenvalue() {
        // toy-1q at x = 0 is the ground state e1: every shot returns -1
        let v = vqe_problem("toy-1q").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let stats = vqe_measure_stats(&v, &[0.0], 1000, &mut rng);
        assert_eq!(stats.mean, -1.0);
        assert_eq!(stats.variance, Some(0.0));
    }

    #[test]
    fn single_shot_is_in_spectrum() {
        let v = vqe_problem("h2-like").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let f = vqe_measure(&v, &[0.3, -1.0, 2.0], 1, &mut rng);
            assert!(v.spectrum().contains(&f));
        }
    }

    #[test]
    fn shift_rule_matches_analytic_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for preset in ["toy-1q", "h2-like", "lih-like"] {
            let v = vqe_problem(preset).unwrap();
            for _ in 0..5 {
                let x: Vec<f64> = (0..v.num_parameters()).map(|_| rng.random_range(-PI..PI)).collect();
                let g = v.gradient(&x);
                for (i, gi) in g.iter().enumerate() {
                    assert!((shift_rule_partial(&v, &x, i) - gi).abs() < 1e-12, "{preset} {i}");
                }
            }
        }
    }

    #[test]
    fn pairing_must_be_perfect_matching() {
        let r = VqeProblem::new(
            "bad",
            vec![0.0; 4],
            Matrix::identity(4),
            vec![vec![(0, 1)]],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0],
        );
        assert!(r.is_err());
    }

    #[test]
    fn manifest_roundtrip() {
        let text = "# simple\nname demo\ndimension 2\nrow 2 0\nrow 0 4\nlinear -2 -4\nstart 0 0\n";
        let p = parse_quadratic_manifest(text).unwrap();
        assert_eq!(p.name(), "demo");
        assert_eq!(p.dim(), 2);
        // minimizer (1, 1): 1/2 (2 + 4) - 6 = -3
        assert!((p.optimal_value().unwrap() + 3.0).abs() < 1e-12);
        assert_eq!(p.gradient(&[1.0, 1.0]), vec![0.0, 0.0]);
        assert_eq!(p.hessian_norm_hint(), Some(4.0));
    }

    #[test]
    fn manifest_errors_carry_line_numbers() {
        let err = parse_quadratic_manifest("dimension 2\nrow 1 0\nrow 0 x\nstart 0 0\n").unwrap_err();
        assert!(matches!(err, ProblemError::Manifest { line: 3, .. }));
        let err = parse_quadratic_manifest("row 1\n").unwrap_err();
        assert!(matches!(err, ProblemError::Manifest { line: 1, .. }));
        let err = parse_quadratic_manifest("dimension 2\nrow 1 2\nrow 0 1\nstart 0 0\n").unwrap_err();
        assert!(matches!(err, ProblemError::Manifest { .. }));
        let err = parse_quadratic_manifest("dimension 1\nrow 1\nbogus 3\n").unwrap_err();
        assert!(matches!(err, ProblemError::Manifest { line: 3, .. }));
    }
}
