//! Exact one-dimensional optimal transport through the quantile coupling.
//!
//! Both supports are sorted (stable, so equal values keep index order) and the
//! merged CDF is swept once; every breakpoint interval becomes a
//! [`Segment`] carrying its mass and the pair of atoms matched on it.

use crate::error::{invalid, Result};
use crate::measures::Measure1D;

const MASS_EPS: f64 = 1e-14;

/// A constant piece of the quantile coupling: `mass` units of `left` atom
/// (index into the first measure) sent to `right` atom of the second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub mass: f64,
    pub left: usize,
    pub right: usize,
}

/// Monotone coupling between two 1D measures. For equal-size equal-weight
/// inputs this is the permutation pairing of the two sorted orders.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedMatching {
    segments: Vec<Segment>,
}

impl SortedMatching {
    pub fn new(mu: &Measure1D, nu: &Measure1D) -> Self {
        let segments = if mu.uniform && nu.uniform && mu.len() == nu.len() {
            let a = argsort(&mu.values);
            let b = argsort(&nu.values);
            let m = 1.0 / mu.len() as f64;
            a.into_iter().zip(b).map(|(left, right)| Segment { mass: m, left, right }).collect()
        } else {
            merged_segments(&mu.values, &mu.weights, &nu.values, &nu.weights)
        };
        Self { segments }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_mass(&self) -> f64 {
        self.segments.iter().map(|s| s.mass).sum()
    }

    /// `sum mass * |x_left - y_right|^p` for the given support values.
    pub fn cost_pp(&self, xs: &[f64], ys: &[f64], p: f64) -> f64 {
        self.segments.iter().map(|s| s.mass * pow_abs(xs[s.left] - ys[s.right], p)).sum()
    }
}

fn argsort(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    // `sort_by` is stable: ties stay in index order.
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx
}

fn merged_segments(xv: &[f64], xw: &[f64], yv: &[f64], yw: &[f64]) -> Vec<Segment> {
    let a = argsort(xv);
    let b = argsort(yv);
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    let mut ra = xw[a[0]];
    let mut rb = yw[b[0]];
    while i < a.len() && j < b.len() {
        let take = ra.min(rb);
        if take > 0.0 {
            out.push(Segment { mass: take, left: a[i], right: b[j] });
        }
        ra -= take;
        rb -= take;
        if ra <= MASS_EPS {
            i += 1;
            if i < a.len() {
                ra = xw[a[i]];
            }
        }
        if rb <= MASS_EPS {
            j += 1;
            if j < b.len() {
                rb = yw[b[j]];
            }
        }
    }
    out
}

#[inline]
pub(crate) fn pow_abs(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x * x
    } else if p == 1.0 {
        x.abs()
    } else {
        x.abs().powf(p)
    }
}

#[inline]
fn dpow(g: f64, p: f64) -> f64 {
    // d/dg |g|^p with sign(0) = 0
    if g == 0.0 {
        0.0
    } else if p == 2.0 {
        2.0 * g
    } else if p == 1.0 {
        g.signum()
    } else {
        p * g.abs().powf(p - 1.0) * g.signum()
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(invalid(format!("order p must be >= 1, got {p}")));
    }
    Ok(())
}

/// `W_p(mu, nu)`.
pub fn wasserstein_1d(mu: &Measure1D, nu: &Measure1D, p: f64) -> Result<f64> {
    Ok(wasserstein_1d_pp(mu, nu, p)?.powf(1.0 / p))
}

/// `W_p^p(mu, nu)`, the integral of `|F_mu^{-1} - F_nu^{-1}|^p` over (0, 1).
pub fn wasserstein_1d_pp(mu: &Measure1D, nu: &Measure1D, p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(pp_cost(&mu.values, &mu.weights, mu.uniform, &nu.values, &nu.weights, nu.uniform, p))
}

/// Allocation-light path used by the sliced estimators.
pub(crate) fn pp_cost(
    xv: &[f64],
    xw: &[f64],
    x_uniform: bool,
    yv: &[f64],
    yw: &[f64],
    y_uniform: bool,
    p: f64,
) -> f64 {
    if x_uniform && y_uniform && xv.len() == yv.len() {
        let mut a = xv.to_vec();
        let mut b = yv.to_vec();
        a.sort_unstable_by(f64::total_cmp);
        b.sort_unstable_by(f64::total_cmp);
        let s: f64 = a.iter().zip(&b).map(|(x, y)| pow_abs(x - y, p)).sum();
        s / a.len() as f64
    } else {
        merged_segments(xv, xw, yv, yw)
            .iter()
            .map(|s| s.mass * pow_abs(xv[s.left] - yv[s.right], p))
            .sum()
    }
}

/// Derivatives of `W_p^p` with respect to both supports' values, under the
/// sorted coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingGradient {
    pub value_pp: f64,
    /// `d W_p^p / d x_i` for the first measure's atoms (original order).
    pub left: Vec<f64>,
    /// `d W_p^p / d y_j` for the second measure's atoms.
    pub right: Vec<f64>,
    /// Set when `p == 1` and some matched pair has zero gap, where the
    /// derivative is only a subgradient (taken with `sign(0) = 0`).
    pub degenerate: bool,
}

pub fn coupling_gradient(mu: &Measure1D, nu: &Measure1D, p: f64) -> Result<CouplingGradient> {
    check_p(p)?;
    let matching = SortedMatching::new(mu, nu);
    let mut left = vec![0.0; mu.len()];
    let mut right = vec![0.0; nu.len()];
    let mut value = 0.0;
    let mut degenerate = false;
    for s in matching.segments() {
        let g = mu.values[s.left] - nu.values[s.right];
        value += s.mass * pow_abs(g, p);
        let dg = s.mass * dpow(g, p);
        if g == 0.0 && p <= 1.0 {
            degenerate = true;
        }
        left[s.left] += dg;
        right[s.right] -= dg;
    }
    Ok(CouplingGradient { value_pp: value, left, right, degenerate })
}

/// Gradient of `W_p^p(mu, nu)` with respect to the locations of an
/// equal-weight `mu` given by `mu_values`.
#[derive(Debug, Clone, PartialEq)]
pub struct PpGradient {
    pub value_pp: f64,
    pub grad: Vec<f64>,
    pub degenerate: bool,
}

pub fn wasserstein_1d_pp_grad(mu_values: &[f64], nu: &Measure1D, p: f64) -> Result<PpGradient> {
    let mu = Measure1D::uniform(mu_values.to_vec())?;
    let g = coupling_gradient(&mu, nu, p)?;
    Ok(PpGradient { value_pp: g.value_pp, grad: g.left, degenerate: g.degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(values: &[f64], weights: &[f64]) -> Measure1D {
        Measure1D::new(values.to_vec(), weights.to_vec()).unwrap()
    }

    /// Cost of the best coupling of two equal-weight K-atom measures by
    /// enumerating all K! permutations.
    fn brute_force_pp(x: &[f64], y: &[f64], p: f64) -> f64 {
        fn rec(x: &[f64], y: &mut Vec<f64>, k: usize, p: f64, best: &mut f64) {
            if k == x.len() {
                let c: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b).abs().powf(p)).sum();
                *best = best.min(c);
                return;
            }
            for i in k..y.len() {
                y.swap(k, i);
                rec(x, y, k + 1, p, best);
                y.swap(k, i);
            }
        }
        let mut best = f64::INFINITY;
        rec(x, &mut y.to_vec(), 0, p, &mut best);
        best / x.len() as f64
    }

    /// Replicate atoms whose weights are multiples of 1/k.
    fn expand(values: &[f64], counts: &[usize]) -> Vec<f64> {
        values.iter().zip(counts).flat_map(|(v, c)| std::iter::repeat_n(*v, *c)).collect()
    }

    #[test]
    fn two_point_masses() {
        let w = wasserstein_1d(&m(&[0.0], &[1.0]), &m(&[1.0], &[1.0]), 2.0).unwrap();
        assert_eq!(w, 1.0);
    }

    #[test]
    fn identical_is_zero() {
        let a = m(&[0.3, -1.0, 2.0], &[0.2, 0.5, 0.3]);
        assert_eq!(wasserstein_1d(&a, &a, 1.5).unwrap(), 0.0);
    }

    #[test]
    fn two_by_two_polytope() {
        // Couplings of {0:.75,1:.25} and {0:.25,1:.75}: pi_00 = t in [0, .25],
        // cost = pi_01 + pi_10 = (.75 - t) + (.25 - t), minimized at t = .25.
        let oracle = (0..=1000)
            .map(|k| 0.25 * k as f64 / 1000.0)
            .map(|t| (0.75 - t) + (0.25 - t))
            .fold(f64::INFINITY, f64::min);
        let got = wasserstein_1d(&m(&[0.0, 1.0], &[0.75, 0.25]), &m(&[0.0, 1.0], &[0.25, 0.75]), 1.0).unwrap();
        assert!((got - oracle).abs() < 1e-12);
        assert!((got - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_small_p() {
        let a = m(&[0.0], &[1.0]);
        assert!(wasserstein_1d(&a, &a, 0.5).is_err());
    }

    #[test]
    fn matches_permutation_oracle_on_rational_weights() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let k = 6usize;
        for _ in 0..200 {
            let n = rng.random_range(1..=5usize);
            let mm = rng.random_range(1..=5usize);
            let split = |rng: &mut rand_chacha::ChaCha8Rng, parts: usize| -> Vec<usize> {
                // positive composition of k into `parts` (falls back to fewer parts if needed)
                let parts = parts.min(k);
                let mut counts = vec![1usize; parts];
                for _ in 0..(k - parts) {
                    let i = rng.random_range(0..parts);
                    counts[i] += 1;
                }
                counts
            };
            let cx = split(&mut rng, n);
            let cy = split(&mut rng, mm);
            let xv: Vec<f64> = (0..cx.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let yv: Vec<f64> = (0..cy.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let xw: Vec<f64> = cx.iter().map(|c| *c as f64 / k as f64).collect();
            let yw: Vec<f64> = cy.iter().map(|c| *c as f64 / k as f64).collect();
            for p in [1.0, 1.5, 2.0, 3.0] {
                let got = wasserstein_1d_pp(&m(&xv, &xw), &m(&yv, &yw), p).unwrap();
                let want = brute_force_pp(&expand(&xv, &cx), &expand(&yv, &cy), p);
                assert!((got - want).abs() < 1e-9, "p={p} got {got} want {want}");
            }
        }
    }

    #[test]
    fn segment_masses_sum_to_one() {
        let a = m(&[0.1, 0.5, -0.2], &[0.2, 0.3, 0.5]);
        let b = m(&[1.0, 0.0, 2.0, -1.0], &[0.1, 0.4, 0.25, 0.25]);
        let s = SortedMatching::new(&a, &b);
        assert!(s.segments().iter().all(|seg| seg.mass > 0.0));
        assert!((s.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_single_atom() {
        let nu = m(&[1.0], &[1.0]);
        let g = wasserstein_1d_pp_grad(&[0.0], &nu, 2.0).unwrap();
        assert_eq!(g.grad, vec![-2.0]);
        assert!(!g.degenerate);
    }

    #[test]
    fn gradient_zero_when_identical() {
        let xs = [0.5, -1.0, 2.0];
        let nu = Measure1D::uniform(xs.to_vec()).unwrap();
        let g = wasserstein_1d_pp_grad(&xs, &nu, 2.0).unwrap();
        assert!(g.grad.iter().all(|v| *v == 0.0));
        let g = wasserstein_1d_pp_grad(&xs, &nu, 1.0).unwrap();
        assert!(g.degenerate);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let xs = [0.31, -1.2, 0.77, 2.05, -0.4];
        let nu = Measure1D::uniform(vec![1.1, 0.2, -0.9, 0.55, 3.0]).unwrap();
        let nu_general = m(&[0.0, 1.5, -0.7], &[0.3, 0.3, 0.4]);
        for target in [&nu, &nu_general] {
            for p in [2.0, 3.0, 1.5] {
                let g = wasserstein_1d_pp_grad(&xs, target, p).unwrap();
                let h = 1e-6;
                for i in 0..xs.len() {
                    let mut up = xs.to_vec();
                    let mut dn = xs.to_vec();
                    up[i] += h;
                    dn[i] -= h;
                    let f = |v: Vec<f64>| wasserstein_1d_pp(&Measure1D::uniform(v).unwrap(), target, p).unwrap();
                    let fd = (f(up) - f(dn)) / (2.0 * h);
                    let rel = (fd - g.grad[i]).abs() / g.grad[i].abs().max(1e-8);
                    assert!(rel < 1e-5, "p={p} i={i}: fd {fd} vs {}", g.grad[i]);
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn measure() -> impl Strategy<Value = Measure1D> {
            prop::collection::vec((-5.0f64..5.0, 0.05f64..1.0), 1..8).prop_map(|atoms| {
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                let (v, w): (Vec<f64>, Vec<f64>) = atoms.into_iter().map(|(x, w)| (x, w / total)).unzip();
                Measure1D::new(v, w).unwrap()
            })
        }

        proptest! {
            #[test]
            fn symmetric(a in measure(), b in measure(), p in 1.0f64..4.0) {
                let ab = wasserstein_1d(&a, &b, p).unwrap();
                let ba = wasserstein_1d(&b, &a, p).unwrap();
                prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab));
                prop_assert!(ab >= 0.0);
            }

            #[test]
            fn translation_invariant(a in measure(), b in measure(), c in -10.0f64..10.0) {
                let shift = |m: &Measure1D| Measure1D::new(m.values().iter().map(|x| x + c).collect(), m.weights().to_vec()).unwrap();
                let w0 = wasserstein_1d(&a, &b, 2.0).unwrap();
                let w1 = wasserstein_1d(&shift(&a), &shift(&b), 2.0).unwrap();
                prop_assert!((w0 - w1).abs() < 1e-10);
            }

            #[test]
            fn scales_linearly(a in measure(), b in measure(), s in 0.1f64..10.0, p in 1.0f64..3.0) {
                let scale = |m: &Measure1D| Measure1D::new(m.values().iter().map(|x| x * s).collect(), m.weights().to_vec()).unwrap();
                let w0 = wasserstein_1d(&a, &b, p).unwrap();
                let w1 = wasserstein_1d(&scale(&a), &scale(&b), p).unwrap();
                prop_assert!((w1 - s * w0).abs() < 1e-9 * (1.0 + w1));
            }

            #[test]
            fn p_monotone(a in measure(), b in measure(), p in 1.0f64..4.0) {
                let wp = wasserstein_1d(&a, &b, p).unwrap();
                let w1 = wasserstein_1d(&a, &b, 1.0).unwrap();
                prop_assert!(wp >= w1 - 1e-12);
            }
        }
    }
}
