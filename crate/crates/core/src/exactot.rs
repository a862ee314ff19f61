//! Exact reference distances: d-dimensional Wasserstein between equal-size
//! uniform clouds by optimal assignment, and grid-search Max-SW in 2D/3D.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::measures::{DiscreteMeasure, Direction};
use crate::ot1d::pow_abs;
use crate::swfamily::projected_pp;

pub const MAX_ASSIGNMENT_SIZE: usize = 2000;

/// Minimum-cost perfect assignment on a square row-major cost matrix
/// (shortest augmenting paths with dual potentials, O(n^3)).
///
/// Returns `(total cost, assignment)` where row `i` is matched to column
/// `assignment[i]`.
pub fn solve_assignment(cost: &[f64], n: usize) -> Result<(f64, Vec<usize>)> {
    if cost.len() != n * n {
        return Err(invalid(format!("cost matrix has {} entries, expected {}", cost.len(), n * n)));
    }
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(invalid("cost matrix must be finite"));
    }
    // 1-based arrays; index 0 is the virtual root column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut col_to_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        col_to_row[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|b| *b = false);
        loop {
            used[j0] = true;
            let i0 = col_to_row[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_to_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_to_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_to_row[j0] = col_to_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[col_to_row[j] - 1] = j - 1;
    }
    let total = assignment.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok((total, assignment))
}

pub fn cost_matrix(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Vec<f64> {
    let n = nu.len();
    let mut c = vec![0.0; mu.len() * n];
    c.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let x = mu.point(i);
        for (j, slot) in row.iter_mut().enumerate() {
            let d2: f64 = x.iter().zip(nu.point(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            *slot = if p == 2.0 { d2 } else { pow_abs(d2.sqrt(), p) };
        }
    });
    c
}

/// `W_p^p` between equal-size uniform clouds.
pub fn wasserstein_exact_pp(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    if !(p >= 1.0) || !p.is_finite() {
        return Err(invalid(format!("order p must be >= 1, got {p}")));
    }
    if mu.len() != nu.len() {
        return Err(invalid(format!("exact OT needs equal sizes, got {} and {}", mu.len(), nu.len())));
    }
    if !mu.is_uniform() || !nu.is_uniform() {
        return Err(invalid("exact OT needs equal weights"));
    }
    if mu.len() > MAX_ASSIGNMENT_SIZE {
        return Err(invalid(format!("exact OT is limited to {MAX_ASSIGNMENT_SIZE} points")));
    }
    let n = mu.len();
    let (total, _) = solve_assignment(&cost_matrix(mu, nu, p), n)?;
    Ok((total / n as f64).max(0.0))
}

pub fn wasserstein_exact(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<f64> {
    Ok(wasserstein_exact_pp(mu, nu, p)?.powf(1.0 / p))
}

/// Direction grid used by [`grid_max_sw`]: angles `k*pi/resolution` on the
/// half circle in 2D, a Fibonacci lattice on the sphere in 3D.
pub fn direction_grid(d: usize, resolution: usize) -> Result<Vec<Direction>> {
    match d {
        2 => Ok((0..resolution)
            .map(|k| {
                let a = std::f64::consts::PI * k as f64 / resolution as f64;
                Direction::from_unit_unchecked(vec![a.cos(), a.sin()])
            })
            .collect()),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            Ok((0..resolution)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / resolution as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let a = golden * k as f64;
                    Direction::from_unit_unchecked(vec![r * a.cos(), r * a.sin(), z])
                })
                .collect())
        }
        _ => Err(Error::Unsupported(format!("grid Max-SW supports d in {{2, 3}}, got {d}"))),
    }
}

/// Max over a direction grid of `W_p(theta#mu, theta#nu)`; also returns the
/// maximizing direction.
pub fn grid_max_sw(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64, resolution: usize) -> Result<(f64, Direction)> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    if !(p >= 1.0) || !p.is_finite() {
        return Err(invalid(format!("order p must be >= 1, got {p}")));
    }
    if resolution < 360 {
        return Err(invalid(format!("grid resolution must be at least 360, got {resolution}")));
    }
    let grid = direction_grid(mu.dim(), resolution)?;
    let (best, idx) = grid
        .par_iter()
        .enumerate()
        .map(|(k, t)| (projected_pp(mu, nu, t, p), k))
        .reduce(|| (f64::NEG_INFINITY, usize::MAX), |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    Ok((best.max(0.0).powf(1.0 / p), grid[idx].clone()))
}
