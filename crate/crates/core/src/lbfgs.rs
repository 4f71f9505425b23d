//! Curvature-pair memory for limited-memory BFGS with spectrum control.
//!
//! The store keeps `(s, y)` pairs oldest first and never forms `B` or its
//! inverse. Directions come from the two-loop recursion; the extreme
//! eigenvalues of `B` come from its compact representation
//! `B = cI + Psi Gamma Psi^T` with `Psi = [cS, Y]`, at `O(n m^2)` cost.

use std::cell::RefCell;
use std::collections::VecDeque;

use thiserror::Error;

use crate::linalg::{self, dot, LinalgError, Matrix};

/// Default inner-product tolerance for accepting a pair.
pub const DEFAULT_THETA_IP: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoreError {
    #[error("dimension mismatch: store holds {expected}-vectors, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("spectrum query failed: {0}")]
    Spectrum(#[from] LinalgError),
    #[error("initial scale c = {c} lies outside the spectrum bounds [{lower}, {upper}]")]
    ScaleOutsideBounds { c: f64, lower: f64, upper: f64 },
    #[error("invalid spectrum bounds [{lower}, {upper}]")]
    InvalidBounds { lower: f64, upper: f64 },
    #[error("invalid store parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Admissible eigenvalue interval `[lower, upper]` for `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumBounds {
    lower: f64,
    upper: f64,
}

impl SpectrumBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self, StoreError> {
        if !(lower > 0.0 && lower <= upper) || lower.is_nan() || upper.is_nan() {
            return Err(StoreError::InvalidBounds { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    /// The symmetric choice `[1/upper, upper]`.
    pub fn reciprocal(upper: f64) -> Result<Self, StoreError> {
        Self::new(1.0 / upper, upper)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Strict containment, as required before a store is accepted.
    pub fn admits(&self, spectrum: Spectrum) -> bool {
        spectrum.largest < self.upper && spectrum.smallest > self.lower
    }

    pub fn contains_scale(&self, c: f64) -> bool {
        c >= self.lower && c <= self.upper
    }
}

/// Largest and smallest eigenvalue of the implicit `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spectrum {
    pub largest: f64,
    pub smallest: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvaturePair {
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    rho: f64,
}

impl CurvaturePair {
    /// `1 / <s, y>`
    pub fn rho(&self) -> f64 {
        self.rho
    }
}

#[derive(Debug, Clone)]
pub struct CurvaturePairStore {
    dim: usize,
    capacity: Option<usize>,
    c: f64,
    theta_ip: f64,
    pairs: VecDeque<CurvaturePair>,
    spectrum_cache: RefCell<Option<Result<Spectrum, LinalgError>>>,
}

impl CurvaturePairStore {
    /// New empty store for `dim`-vectors. `capacity = None` means unbounded memory.
    pub fn new(dim: usize, capacity: Option<usize>, c: f64, theta_ip: f64) -> Result<Self, StoreError> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(StoreError::InvalidParameter("initial scale c must be positive and finite"));
        }
        if !(theta_ip >= 0.0) {
            return Err(StoreError::InvalidParameter("inner-product tolerance must be non-negative"));
        }
        Ok(Self { dim, capacity, c, theta_ip, pairs: VecDeque::new(), spectrum_cache: RefCell::new(None) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn scale(&self) -> f64 {
        self.c
    }

    pub fn theta_ip(&self) -> f64 {
        self.theta_ip
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = &CurvaturePair> {
        self.pairs.iter()
    }

    pub fn s_vectors(&self) -> Vec<Vec<f64>> {
        self.pairs.iter().map(|p| p.s.clone()).collect()
    }

    pub fn y_vectors(&self) -> Vec<Vec<f64>> {
        self.pairs.iter().map(|p| p.y.clone()).collect()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
        self.invalidate();
    }

    fn invalidate(&self) {
        self.spectrum_cache.replace(None);
    }

    fn check_dim(&self, len: usize) -> Result<(), StoreError> {
        if len != self.dim {
            return Err(StoreError::Dimension { expected: self.dim, got: len });
        }
        Ok(())
    }

    /// Appends `(s, y)` if `<s, y> > theta_ip`, evicting the oldest pair when
    /// the store is full. Returns whether the pair was accepted.
    pub fn try_insert_pair(&mut self, s: &[f64], y: &[f64]) -> Result<bool, StoreError> {
        self.check_dim(s.len())?;
        self.check_dim(y.len())?;
        let inner = dot(s, y);
        // NaN compares false and is rejected here too.
        if !(inner > self.theta_ip) || !inner.is_finite() {
            return Ok(false);
        }
        match self.capacity {
            Some(0) => return Ok(false),
            Some(cap) if self.pairs.len() >= cap => {
                self.pairs.pop_front();
            }
            _ => {}
        }
        self.pairs.push_back(CurvaturePair { s: s.to_vec(), y: y.to_vec(), rho: 1.0 / inner });
        self.invalidate();
        Ok(true)
    }

    /// Drops the oldest pair, if any.
    pub fn remove_oldest(&mut self) -> Option<CurvaturePair> {
        let out = self.pairs.pop_front();
        if out.is_some() {
            self.invalidate();
        }
        out
    }

    /// Largest and smallest eigenvalue of `B` from its compact representation.
    ///
    /// `Psi = [cS, Y] = QR`, `Gamma = -[[c S^T S, L], [L^T, -D]]^{-1}` with `D`
    /// and `L` the diagonal and strict lower part of `S^T Y`. The eigenvalues
    /// of `B` are `c` (on the complement of range(Psi)) and `c + eig(R Gamma R^T)`.
    pub fn extreme_eigenvalues(&self) -> Result<Spectrum, StoreError> {
        if let Some(cached) = self.spectrum_cache.borrow().as_ref() {
            return cached.clone().map_err(StoreError::from);
        }
        let result = self.compute_spectrum();
        self.spectrum_cache.replace(Some(result.clone()));
        result.map_err(StoreError::from)
    }

    fn compute_spectrum(&self) -> Result<Spectrum, LinalgError> {
        let m = self.pairs.len();
        let c = self.c;
        if m == 0 {
            return Ok(Spectrum { largest: c, smallest: c });
        }
        let n = self.dim;

        let mut psi = Matrix::zeros(n, 2 * m);
        for (j, pair) in self.pairs.iter().enumerate() {
            for i in 0..n {
                psi[(i, j)] = c * pair.s[i];
                psi[(i, m + j)] = pair.y[i];
            }
        }
        let (_q, r) = linalg::thin_qr(&psi)?;
        let k = r.rows();

        let mut middle = Matrix::zeros(2 * m, 2 * m);
        for (i, pi) in self.pairs.iter().enumerate() {
            for (j, pj) in self.pairs.iter().enumerate() {
                middle[(i, j)] = c * dot(&pi.s, &pj.s);
                if i > j {
                    // L_ij = s_i^T y_j, and its transpose in the upper-right position
                    let l = dot(&pi.s, &pj.y);
                    middle[(i, m + j)] = l;
                    middle[(m + j, i)] = l;
                }
            }
            middle[(m + i, m + i)] = -dot(&pi.s, &pi.y);
        }

        // R Gamma R^T = -R (middle^{-1} R^T)
        let solved = linalg::lu_solve(&middle, &r.transpose())?;
        let mut core = r.matmul(&solved)?;
        for v in 0..k {
            for w in 0..k {
                core[(v, w)] = -core[(v, w)];
            }
        }
        core.symmetrize();
        let eig = linalg::sym_eig_small(&core)?;
        let (top, bottom) = (eig[0], eig[k - 1]);

        if k < n {
            Ok(Spectrum { largest: (top + c).max(c), smallest: (bottom + c).min(c) })
        } else {
            // range(Psi) is all of R^n: c itself need not be an eigenvalue.
            Ok(Spectrum { largest: top + c, smallest: bottom + c })
        }
    }

    /// Whether the current store violates `bounds` (a failed spectrum query counts).
    pub fn violates(&self, bounds: &SpectrumBounds) -> bool {
        if self.pairs.is_empty() {
            return false;
        }
        match self.extreme_eigenvalues() {
            Ok(sp) => !bounds.admits(sp),
            Err(_) => true,
        }
    }

    /// Removes pairs oldest first, one at a time, until the spectrum of `B`
    /// lies strictly inside `bounds` or the store is empty. Returns the number
    /// of pairs removed.
    pub fn enforce_spectrum(&mut self, bounds: &SpectrumBounds) -> Result<usize, StoreError> {
        if !bounds.contains_scale(self.c) {
            return Err(StoreError::ScaleOutsideBounds { c: self.c, lower: bounds.lower, upper: bounds.upper });
        }
        let mut removed = 0;
        while self.violates(bounds) {
            self.remove_oldest();
            removed += 1;
        }
        Ok(removed)
    }

    /// `d = H g` by the two-loop recursion with `H0 = I / c`.
    pub fn two_loop_apply(&self, g: &[f64]) -> Result<Vec<f64>, StoreError> {
        self.check_dim(g.len())?;
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for pair in self.pairs.iter().rev() {
            let a = pair.rho * dot(&pair.s, &q);
            linalg::axpy(-a, &pair.y, &mut q);
            alphas.push(a);
        }
        let inv_c = 1.0 / self.c;
        for qi in &mut q {
            *qi *= inv_c;
        }
        for (pair, a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = pair.rho * dot(&pair.y, &q);
            linalg::axpy(a - b, &pair.s, &mut q);
        }
        Ok(q)
    }
}
