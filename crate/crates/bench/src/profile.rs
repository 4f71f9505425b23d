//! Performance profiles (Dolan and More) and data profiles (More and Wild).
//!
//! A metric table has one row per problem instance and one column per
//! solver; failures are `f64::INFINITY`.

use std::fmt::Write as _;

/// Number of points in the default grids.
pub const GRID_POINTS: usize = 64;

/// `points` log-spaced values from `lo` to `hi`, both included.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| match i {
            0 => lo,
            _ if i == points - 1 => hi,
            _ => (a + (b - a) * i as f64 / (points - 1) as f64).exp(),
        })
        .collect()
}

/// 64 log-spaced ratios in `[1, 2^10]`.
pub fn default_tau_grid() -> Vec<f64> {
    log_grid(1.0, 1024.0, GRID_POINTS)
}

/// 64 log-spaced budget multipliers in `[1, 1e6]`.
pub fn default_alpha_grid() -> Vec<f64> {
    log_grid(1.0, 1e6, GRID_POINTS)
}

/// Curves sampled on a shared grid, one per solver.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCurves {
    pub grid: Vec<f64>,
    pub labels: Vec<String>,
    /// `curves[s][i]` is solver `s` at `grid[i]`.
    pub curves: Vec<Vec<f64>>,
    /// Instances that no solver solved (performance profiles only).
    pub dropped: Vec<usize>,
}

impl ProfileCurves {
    /// Tab-separated, one row per grid point, one column per solver.
    pub fn to_tsv(&self, grid_name: &str) -> String {
        let mut out = String::new();
        if !self.dropped.is_empty() {
            let list: Vec<String> = self.dropped.iter().map(|i| i.to_string()).collect();
            let _ = writeln!(out, "#unsolved_instances={}", list.join(","));
        }
        let _ = writeln!(out, "{grid_name}\t{}", self.labels.join("\t"));
        for (i, g) in self.grid.iter().enumerate() {
            let _ = write!(out, "{g}");
            for curve in &self.curves {
                let _ = write!(out, "\t{}", curve[i]);
            }
            out.push('\n');
        }
        out
    }

    /// Values in `[0, 1]` and non-decreasing along a sorted grid.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.grid.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err("grid is not sorted".into());
        }
        for (label, curve) in self.labels.iter().zip(&self.curves) {
            if curve.len() != self.grid.len() {
                return Err(format!("{label}: curve length differs from grid"));
            }
            if curve.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(format!("{label}: value outside [0, 1]"));
            }
            if curve.windows(2).any(|w| w[1] < w[0]) {
                return Err(format!("{label}: curve decreases"));
            }
        }
        Ok(())
    }
}

/// Ratio `r_{p,s} = m_{p,s} / min_s' m_{p,s'}` per instance, `None` when
/// every solver failed. A zero best metric gives ratio 1 to the solvers that
/// tie it and infinity to the rest.
pub fn performance_ratios(metrics: &[Vec<f64>]) -> Vec<Option<Vec<f64>>> {
    metrics
        .iter()
        .map(|row| {
            let best = row.iter().copied().fold(f64::INFINITY, f64::min);
            if !best.is_finite() {
                return None;
            }
            Some(
                row.iter()
                    .map(|&m| match (m == best, best == 0.0) {
                        (true, _) => 1.0,
                        (false, true) => f64::INFINITY,
                        (false, false) => m / best,
                    })
                    .collect(),
            )
        })
        .collect()
}

/// `rho_s(tau)`: fraction of all instances with `r_{p,s} <= tau`. Instances
/// no solver solved stay in the denominator and are listed in `dropped`.
pub fn performance_profile(metrics: &[Vec<f64>], labels: &[String], tau_grid: &[f64]) -> ProfileCurves {
    let ratios = performance_ratios(metrics);
    let total = metrics.len().max(1) as f64;
    let dropped = ratios.iter().enumerate().filter(|(_, r)| r.is_none()).map(|(i, _)| i).collect();
    let curves = (0..labels.len())
        .map(|s| {
            tau_grid.iter().map(|&tau| ratios.iter().flatten().filter(|r| r[s] <= tau).count() as f64 / total).collect()
        })
        .collect();
    ProfileCurves { grid: tau_grid.to_vec(), labels: labels.to_vec(), curves, dropped }
}

/// `d_s(alpha)`: fraction of instances solved within `alpha (n_p + 1)` units.
pub fn data_profile(metrics: &[Vec<f64>], dims: &[usize], labels: &[String], alpha_grid: &[f64]) -> ProfileCurves {
    let total = metrics.len().max(1) as f64;
    let curves = (0..labels.len())
        .map(|s| {
            alpha_grid
                .iter()
                .map(|&alpha| {
                    metrics.iter().zip(dims).filter(|(row, &n)| row[s] <= alpha * (n as f64 + 1.0)).count() as f64
                        / total
                })
                .collect()
        })
        .collect();
    ProfileCurves { grid: alpha_grid.to_vec(), labels: labels.to_vec(), curves, dropped: Vec::new() }
}
