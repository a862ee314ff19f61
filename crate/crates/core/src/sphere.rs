//! Distributions on the unit hypersphere: uniform, von Mises–Fisher and
//! Power Spherical.
//!
//! Power Spherical draws are built from a Beta marginal and a uniform tangent
//! direction, then rotated onto the location by a Householder reflection.
//! Keeping the noise ([`PsNoise`]) separate from the map makes each draw a
//! differentiable function of the location.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::measures::{dot, norm, Direction};

/// Location-scale family used to perturb a slicing location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SliceFamily {
    Uniform,
    VonMisesFisher { kappa: f64 },
    PowerSpherical { kappa: f64 },
}

impl SliceFamily {
    pub fn power_spherical(kappa: f64) -> Result<Self> {
        check_kappa(kappa)?;
        Ok(Self::PowerSpherical { kappa })
    }

    pub fn von_mises_fisher(kappa: f64) -> Result<Self> {
        check_kappa(kappa)?;
        Ok(Self::VonMisesFisher { kappa })
    }

    pub fn kappa(&self) -> Option<f64> {
        match *self {
            Self::Uniform => None,
            Self::VonMisesFisher { kappa } | Self::PowerSpherical { kappa } => Some(kappa),
        }
    }

    /// Same family with a new concentration; `Uniform` is returned unchanged.
    pub fn with_kappa(self, kappa: f64) -> Self {
        match self {
            Self::Uniform => Self::Uniform,
            Self::VonMisesFisher { .. } => Self::VonMisesFisher { kappa },
            Self::PowerSpherical { .. } => Self::PowerSpherical { kappa },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::VonMisesFisher { .. } => "vmf",
            Self::PowerSpherical { .. } => "ps",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kappa() {
            Some(k) => check_kappa(k),
            None => Ok(()),
        }
    }

    /// Draw one direction located at `loc`.
    pub fn sample<R: Rng + ?Sized>(&self, loc: &Direction, rng: &mut R) -> Result<Direction> {
        match *self {
            Self::Uniform => sample_uniform(loc.dim(), rng),
            Self::VonMisesFisher { kappa } => sample_vmf(loc, kappa, rng),
            Self::PowerSpherical { kappa } => sample_power_spherical(loc, kappa, rng),
        }
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(invalid(format!("concentration must be finite and positive, got {kappa}")));
    }
    Ok(())
}

fn check_dim(d: usize) -> Result<()> {
    if d < 2 {
        return Err(invalid(format!("sphere sampling needs d >= 2, got {d}")));
    }
    Ok(())
}

fn gaussian_unit<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 1e-300 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Uniform direction on S^{d-1}.
pub fn sample_uniform<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Direction> {
    check_dim(d)?;
    Ok(Direction::from_unit_unchecked(gaussian_unit(d, rng)))
}

/// Householder reflection `H = I - 2 u u^T / (u^T u)` with `u = e1 - loc`,
/// so that `H e1 = loc`.
#[derive(Debug, Clone)]
pub struct Householder {
    u: Vec<f64>,
    uu: f64,
}

impl Householder {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        if self.is_identity() {
            return x.to_vec();
        }
        let c = 2.0 * dot(&self.u, x) / self.uu;
        x.iter().zip(&self.u).map(|(xi, ui)| xi - c * ui).collect()
    }

    fn is_identity(&self) -> bool {
        self.uu < 1e-30
    }
}

pub fn householder_to(loc: &Direction) -> Householder {
    householder_raw(loc.as_slice())
}

fn householder_raw(loc: &[f64]) -> Householder {
    let mut u: Vec<f64> = loc.iter().map(|x| -x).collect();
    u[0] += 1.0;
    let uu = dot(&u, &u);
    Householder { u, uu }
}

/// Location-free randomness of one Power Spherical draw: the cosine `t` to the
/// location and a unit tangent `v` on S^{d-2}.
#[derive(Debug, Clone, PartialEq)]
pub struct PsNoise {
    pub t: f64,
    /// `sqrt(1 - t^2)`, computed from the Beta draw to keep precision near `t = 1`.
    pub s: f64,
    pub v: Vec<f64>,
}

impl PsNoise {
    fn canonical(&self) -> Vec<f64> {
        std::iter::once(self.t).chain(self.v.iter().map(|x| self.s * x)).collect()
    }
}

pub fn sample_ps_noise<R: Rng + ?Sized>(d: usize, kappa: f64, rng: &mut R) -> Result<PsNoise> {
    check_dim(d)?;
    check_kappa(kappa)?;
    let half = (d as f64 - 1.0) / 2.0;
    let beta = Beta::new(half + kappa, half).map_err(|e| invalid(format!("beta: {e}")))?;
    let z: f64 = beta.sample(rng);
    let t = 2.0 * z - 1.0;
    let s = 2.0 * (z * (1.0 - z)).max(0.0).sqrt();
    let v = gaussian_unit(d - 1, rng);
    Ok(PsNoise { t, s, v })
}

fn ps_map(loc: &[f64], noise: &PsNoise) -> Vec<f64> {
    householder_raw(loc).apply(&noise.canonical())
}

/// The Power Spherical draw determined by `noise`, located at `loc`.
pub fn ps_from_noise(loc: &Direction, noise: &PsNoise) -> Result<Direction> {
    if noise.v.len() + 1 != loc.dim() {
        return Err(Error::DimensionMismatch { expected: loc.dim(), got: noise.v.len() + 1 });
    }
    // Renormalize away rounding drift.
    Direction::normalize(ps_map(loc.as_slice(), noise))
}

/// Vector-Jacobian product `(d theta / d loc)^T g` of [`ps_from_noise`].
pub fn ps_loc_vjp(loc: &Direction, noise: &PsNoise, g: &[f64]) -> Vec<f64> {
    let h = householder_raw(loc.as_slice());
    if h.is_identity() {
        return g.to_vec();
    }
    // theta = y - 2 (u.y) u / s with u = e1 - loc, s = u.u; du = -dloc.
    let y = noise.canonical();
    let a = dot(&h.u, &y);
    let ug = dot(&h.u, g);
    let s = h.uu;
    y.iter()
        .zip(g)
        .zip(&h.u)
        .map(|((yj, gj), uj)| 2.0 * ug * yj / s + 2.0 * a * gj / s - 4.0 * a * ug * uj / (s * s))
        .collect()
}

/// Power Spherical draw with density proportional to `(1 + loc.theta)^kappa`.
pub fn sample_power_spherical<R: Rng + ?Sized>(
    loc: &Direction,
    kappa: f64,
    rng: &mut R,
) -> Result<Direction> {
    check_unit(loc)?;
    let noise = sample_ps_noise(loc.dim(), kappa, rng)?;
    ps_from_noise(loc, &noise)
}

/// von Mises–Fisher draw via Wood's rejection scheme for the cosine to `loc`.
pub fn sample_vmf<R: Rng + ?Sized>(loc: &Direction, kappa: f64, rng: &mut R) -> Result<Direction> {
    check_unit(loc)?;
    check_kappa(kappa)?;
    let d = loc.dim();
    check_dim(d)?;
    let dm1 = d as f64 - 1.0;
    let b = dm1 / (2.0 * kappa + (4.0 * kappa * kappa + dm1 * dm1).sqrt());
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + dm1 * (1.0 - x0 * x0).ln();
    let beta = Beta::new(dm1 / 2.0, dm1 / 2.0).map_err(|e| invalid(format!("beta: {e}")))?;
    let w = loop {
        let z: f64 = beta.sample(rng);
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        let u: f64 = rng.random();
        if kappa * w + dm1 * (1.0 - x0 * w).ln() - c >= u.ln() {
            break w;
        }
    };
    let s = (1.0 - w * w).max(0.0).sqrt();
    let v = gaussian_unit(d - 1, rng);
    let y: Vec<f64> = std::iter::once(w).chain(v.iter().map(|x| s * x)).collect();
    Direction::normalize(householder_to(loc).apply(&y))
}

fn check_unit(loc: &Direction) -> Result<()> {
    let n = norm(loc.as_slice());
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::NotUnit(n));
    }
    Ok(())
}

/// A log-density value; `normalized == false` means the value is only known up
/// to an additive constant independent of `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDensity {
    pub value: f64,
    pub normalized: bool,
}

/// Log-density of `family` located at `loc`, evaluated at `theta`.
///
/// Uniform and Power Spherical are normalized; von Mises–Fisher returns
/// `kappa * loc.theta` (the Bessel normalizer is omitted). Zero density is
/// reported as `-inf`.
pub fn log_density(family: &SliceFamily, loc: &Direction, theta: &Direction) -> Result<LogDensity> {
    if loc.dim() != theta.dim() {
        return Err(Error::DimensionMismatch { expected: loc.dim(), got: theta.dim() });
    }
    let d = loc.dim() as f64;
    let c = loc.dot(theta.as_slice());
    Ok(match *family {
        SliceFamily::Uniform => LogDensity {
            value: ln_gamma(d / 2.0) - std::f64::consts::LN_2 - (d / 2.0) * std::f64::consts::PI.ln(),
            normalized: true,
        },
        SliceFamily::VonMisesFisher { kappa } => LogDensity { value: kappa * c, normalized: false },
        SliceFamily::PowerSpherical { kappa } => {
            let half = (d - 1.0) / 2.0;
            let log_norm = (d + kappa - 1.0) * std::f64::consts::LN_2
                + half * std::f64::consts::PI.ln()
                + ln_gamma(half + kappa)
                - ln_gamma(d + kappa - 1.0);
            let base = 1.0 + c;
            let value = if base <= 0.0 { f64::NEG_INFINITY } else { kappa * base.ln() - log_norm };
            LogDensity { value, normalized: true }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use std::f64::consts::PI;

    fn rand_dir(d: usize, seed: u64) -> Direction {
        sample_uniform(d, &mut stream_rng(seed, 99)).unwrap()
    }

    /// Pearson chi-square statistic of `angles` in `bins` equal bins on [0, 2pi).
    fn chi2_uniform_angles(angles: &[f64], bins: usize) -> f64 {
        let mut counts = vec![0usize; bins];
        for a in angles {
            let a = a.rem_euclid(2.0 * PI);
            counts[((a / (2.0 * PI)) * bins as f64) as usize % bins] += 1;
        }
        let e = angles.len() as f64 / bins as f64;
        counts.iter().map(|c| (*c as f64 - e).powi(2) / e).sum()
    }

    // 99th percentile of chi-square with 19 degrees of freedom.
    const CHI2_19_P99: f64 = 36.19;

    #[test]
    fn uniform_is_unit_and_centered() {
        let mut rng = stream_rng(1, 0);
        let n = 100_000;
        let d = 4;
        let mut mean = vec![0.0; d];
        for _ in 0..n {
            let t = sample_uniform(d, &mut rng).unwrap();
            assert!((norm(t.as_slice()) - 1.0).abs() < 1e-9);
            for (m, x) in mean.iter_mut().zip(t.as_slice()) {
                *m += x / n as f64;
            }
        }
        // Var of a coordinate is 1/d.
        let se = (1.0 / d as f64 / n as f64).sqrt();
        assert!(mean.iter().all(|m| m.abs() < 3.0 * se), "{mean:?}");
        assert!(sample_uniform(1, &mut rng).is_err());
    }

    #[test]
    fn uniform_circle_angles() {
        let mut rng = stream_rng(2, 0);
        let angles: Vec<f64> = (0..100_000)
            .map(|_| {
                let t = sample_uniform(2, &mut rng).unwrap();
                t.as_slice()[1].atan2(t.as_slice()[0])
            })
            .collect();
        assert!(chi2_uniform_angles(&angles, 20) < CHI2_19_P99);
    }

    #[test]
    fn householder_properties() {
        let e1 = Direction::axis(5, 0).unwrap();
        assert_eq!(householder_to(&e1).apply(e1.as_slice()), e1.as_slice());
        for seed in 0..20 {
            let loc = rand_dir(5, seed);
            let h = householder_to(&loc);
            let he1 = h.apply(e1.as_slice());
            for (a, b) in he1.iter().zip(loc.as_slice()) {
                assert!((a - b).abs() < 1e-12);
            }
            let x: Vec<f64> = (0..5).map(|k| (k as f64 + seed as f64).sin()).collect();
            let hx = h.apply(&x);
            assert!((norm(&hx) - norm(&x)).abs() < 1e-12);
            let hhx = h.apply(&hx);
            for (a, b) in hhx.iter().zip(&x) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn power_spherical_concentrates() {
        let mut rng = stream_rng(3, 0);
        let loc = rand_dir(3, 1);
        let mean_dot: f64 = (0..1000)
            .map(|_| loc.dot(sample_power_spherical(&loc, 1e6, &mut rng).unwrap().as_slice()))
            .sum::<f64>()
            / 1000.0;
        assert!(mean_dot > 0.999);
    }

    /// E[loc.theta] under PS equals kappa / (kappa + d - 1) (mean of 2z - 1
    /// with z ~ Beta((d-1)/2 + kappa, (d-1)/2)).
    #[test]
    fn power_spherical_mean_cosine() {
        let mut rng = stream_rng(4, 0);
        let (d, kappa) = (3usize, 2.0);
        let loc = rand_dir(d, 7);
        let n = 100_000;
        let dots: Vec<f64> =
            (0..n).map(|_| loc.dot(sample_power_spherical(&loc, kappa, &mut rng).unwrap().as_slice())).collect();
        let mean = dots.iter().sum::<f64>() / n as f64;
        let var = dots.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let target = kappa / (kappa + d as f64 - 1.0);
        assert!((target - 0.5).abs() < 1e-15);
        assert!((mean - target).abs() < 3.0 * (var / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn power_spherical_reflection_symmetry_in_2d() {
        let mut rng = stream_rng(5, 0);
        let loc = Direction::axis(2, 0).unwrap();
        let n = 50_000;
        let ys: Vec<f64> =
            (0..n).map(|_| sample_power_spherical(&loc, 3.0, &mut rng).unwrap().as_slice()[1]).collect();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| y * y).sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn power_spherical_rejects_nonunit_loc() {
        let mut rng = stream_rng(5, 1);
        let bad = Direction::from_unit_unchecked(vec![2.0, 0.0]);
        assert!(matches!(sample_power_spherical(&bad, 1.0, &mut rng), Err(Error::NotUnit(_))));
        assert!(sample_power_spherical(&Direction::axis(2, 0).unwrap(), 0.0, &mut rng).is_err());
    }

    #[test]
    fn vmf_aligns_with_location() {
        let mut rng = stream_rng(6, 0);
        let d = 5;
        let loc = rand_dir(d, 3);
        let n = 100_000;
        let mut sum = vec![0.0; d];
        for _ in 0..n {
            let t = sample_vmf(&loc, 50.0, &mut rng).unwrap();
            assert!((norm(t.as_slice()) - 1.0).abs() < 1e-9);
            for (s, x) in sum.iter_mut().zip(t.as_slice()) {
                *s += x;
            }
        }
        let dir = Direction::normalize(sum).unwrap();
        assert!(dir.dot(loc.as_slice()) > 0.99);
    }

    #[test]
    fn vmf_small_kappa_is_uniform() {
        let mut rng = stream_rng(7, 0);
        let loc = rand_dir(2, 4);
        let angles: Vec<f64> = (0..100_000)
            .map(|_| {
                let t = sample_vmf(&loc, 1e-3, &mut rng).unwrap();
                t.as_slice()[1].atan2(t.as_slice()[0])
            })
            .collect();
        assert!(chi2_uniform_angles(&angles, 20) < CHI2_19_P99);
    }

    #[test]
    fn rotational_equivariance_in_distribution() {
        // The law of loc.theta must not depend on where loc points.
        let kappa = 4.0;
        let stat = |loc: &Direction, seed: u64| {
            let mut rng = stream_rng(seed, 0);
            let n = 40_000;
            let xs: Vec<f64> =
                (0..n).map(|_| loc.dot(sample_power_spherical(loc, kappa, &mut rng).unwrap().as_slice())).collect();
            let m = xs.iter().sum::<f64>() / n as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n as f64;
            (m, (v / n as f64).sqrt())
        };
        let (m1, s1) = stat(&Direction::axis(4, 0).unwrap(), 10);
        let (m2, s2) = stat(&rand_dir(4, 11), 12);
        assert!((m1 - m2).abs() < 4.0 * (s1 * s1 + s2 * s2).sqrt());
    }

    #[test]
    fn ps_density_integrates_to_one_on_circle() {
        for kappa in [0.5, 2.0, 17.0] {
            let fam = SliceFamily::PowerSpherical { kappa };
            let loc = rand_dir(2, 8);
            let k = 200_000;
            let h = 2.0 * PI / k as f64;
            let total: f64 = (0..k)
                .map(|i| {
                    let a = (i as f64 + 0.5) * h;
                    let th = Direction::new(vec![a.cos(), a.sin()]).unwrap();
                    log_density(&fam, &loc, &th).unwrap().value.exp() * h
                })
                .sum();
            assert!((total - 1.0).abs() < 1e-6, "kappa={kappa}: {total}");
        }
    }

    #[test]
    fn ps_density_boundary_and_vmf_differences() {
        let loc = rand_dir(3, 9);
        let anti = loc.negated();
        let ps = log_density(&SliceFamily::PowerSpherical { kappa: 2.0 }, &loc, &anti).unwrap();
        assert_eq!(ps.value, f64::NEG_INFINITY);
        let vmf = SliceFamily::VonMisesFisher { kappa: 3.0 };
        let (t1, t2) = (rand_dir(3, 10), rand_dir(3, 11));
        let l1 = log_density(&vmf, &loc, &t1).unwrap();
        let l2 = log_density(&vmf, &loc, &t2).unwrap();
        assert!(!l1.normalized);
        let want = 3.0 * (loc.dot(t1.as_slice()) - loc.dot(t2.as_slice()));
        assert!((l1.value - l2.value - want).abs() < 1e-12);
    }

    #[test]
    fn ps_reparameterization_gradient() {
        let mut rng = stream_rng(12, 0);
        for trial in 0..20 {
            let d = 2 + trial % 5;
            let loc = rand_dir(d, 100 + trial as u64);
            let noise = sample_ps_noise(d, 3.0, &mut rng).unwrap();
            let g: Vec<f64> = (0..d).map(|k| ((k + trial) as f64).cos()).collect();
            let vjp = ps_loc_vjp(&loc, &noise, &g);
            let h = 1e-6;
            for j in 0..d {
                let mut up = loc.as_slice().to_vec();
                let mut dn = up.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (dot(&ps_map(&up, &noise), &g) - dot(&ps_map(&dn, &noise), &g)) / (2.0 * h);
                let rel = (fd - vjp[j]).abs() / vjp[j].abs().max(1e-6);
                assert!(rel < 1e-5, "trial {trial} j {j}: fd {fd} vs {}", vjp[j]);
            }
        }
    }
}
