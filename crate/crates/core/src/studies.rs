//! Benchmark studies producing long-format `(study, x, seed, value)` rows:
//! Monte Carlo error against `L`, sample complexity against `n`, the
//! estimator ordering chain, and wall time against `L`.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::exactot::{grid_max_sw, wasserstein_exact};
use crate::measures::{gen_gaussian, DiscreteMeasure};
use crate::rng::{derive_seed, stream_rng};
use crate::swfamily::{iwrpsw, rpsw, EstimatorConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub study: String,
    pub x: f64,
    pub seed: u64,
    pub value: f64,
}

pub fn write_rows<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| invalid(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(invalid("slope fit needs at least two paired points"));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(invalid("log-log fit needs positive values"));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Mean `value` per distinct `x`, in increasing `x`.
pub fn mean_by_x(rows: &[BenchRow]) -> (Vec<f64>, Vec<f64>) {
    let mut xs: Vec<f64> = rows.iter().map(|r| r.x).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let ys = xs
        .iter()
        .map(|x| {
            let v: Vec<f64> = rows.iter().filter(|r| r.x == *x).map(|r| r.value).collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();
    (xs, ys)
}

/// Gaussian pair `N(0, I)` vs `N(shift e_1, scale^2 I)` of `n` points each.
pub fn gaussian_pair(seed: u64, n: usize, d: usize, shift: f64, scale: f64) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    let mu = gen_gaussian(n, &vec![0.0; d], 1.0, &mut stream_rng(seed, 1 << 40))?;
    let mut m = vec![0.0; d];
    m[0] = shift;
    let nu = gen_gaussian(n, &m, scale, &mut stream_rng(seed, (1 << 40) + 1))?;
    Ok((mu, nu))
}

/// `|rpsw_pp(L) - reference|` for each `L` and seed; the reference is an
/// estimate with `reference_l` directions on an independent seed.
pub fn mc_error(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &EstimatorConfig,
    ls: &[usize],
    seeds: u64,
    reference_l: usize,
) -> Result<Vec<BenchRow>> {
    let base = cfg.clone().with_diagnostics(false);
    let reference = rpsw(mu, nu, &base.clone().with_projections(reference_l).with_seed(derive_seed(cfg.seed, u64::MAX)))?.raw_pp;
    let mut rows = Vec::new();
    for &l in ls {
        for s in 0..seeds {
            let e = rpsw(mu, nu, &base.clone().with_projections(l).with_seed(derive_seed(cfg.seed, s)))?;
            rows.push(BenchRow { study: "mc-error".into(), x: l as f64, seed: s, value: (e.raw_pp - reference).abs() });
        }
    }
    Ok(rows)
}

/// `rpsw` between `n`-point samples and a fixed `reference_n`-point sample
/// of the same `d`-dimensional standard Gaussian.
pub fn sample_complexity(d: usize, ns: &[usize], reference_n: usize, seeds: u64, cfg: &EstimatorConfig) -> Result<Vec<BenchRow>> {
    let reference = gen_gaussian(reference_n, &vec![0.0; d], 1.0, &mut stream_rng(cfg.seed, u64::MAX))?;
    let mut rows = Vec::new();
    for &n in ns {
        for s in 0..seeds {
            let sample = gen_gaussian(n, &vec![0.0; d], 1.0, &mut stream_rng(derive_seed(cfg.seed, s), n as u64))?;
            let c = cfg.clone().with_seed(derive_seed(cfg.seed, s + (1 << 32))).with_diagnostics(false);
            let e = rpsw(&sample, &reference, &c)?;
            rows.push(BenchRow { study: "sample-complexity".into(), x: n as f64, seed: s, value: e.value });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainCheck {
    pub rpsw_pp: f64,
    pub iwrpsw_pp: f64,
    /// `(iwrpsw value, grid Max-SW, exact W_p)` for two-dimensional inputs.
    pub bounds: Option<(f64, f64, f64)>,
}

impl ChainCheck {
    pub fn violations(&self) -> usize {
        let mut v = usize::from(self.rpsw_pp > self.iwrpsw_pp);
        if let Some((iw, grid, exact)) = self.bounds {
            v += usize::from(iw > grid + 1e-6) + usize::from(grid > exact + 1e-9);
        }
        v
    }
}

/// `rpsw <= iwrpsw` on a shared direction set and, in 2D,
/// `iwrpsw <= grid Max-SW <= exact W_p`.
pub fn chain_check(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cfg: &EstimatorConfig, grid_resolution: usize) -> Result<ChainCheck> {
    let c = cfg.clone().with_diagnostics(true);
    let a = rpsw(mu, nu, &c)?;
    let b = iwrpsw(mu, nu, &c)?;
    if a.directions() != b.directions() {
        return Err(invalid("estimators drew different directions"));
    }
    let bounds = if mu.dim() == 2 {
        let (grid, _) = grid_max_sw(mu, nu, cfg.p, grid_resolution)?;
        Some((b.value, grid, wasserstein_exact(mu, nu, cfg.p)?))
    } else {
        None
    };
    Ok(ChainCheck { rpsw_pp: a.raw_pp, iwrpsw_pp: b.raw_pp, bounds })
}

pub fn chain_inequality(n: usize, dims: &[usize], seeds: u64, cfg: &EstimatorConfig, grid_resolution: usize) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &d in dims {
        for s in 0..seeds {
            let (mu, nu) = gaussian_pair(derive_seed(cfg.seed, s), n, d, 1.0, 1.5)?;
            let check = chain_check(&mu, &nu, &cfg.clone().with_seed(s), grid_resolution)?;
            rows.push(BenchRow { study: "chain-inequality".into(), x: d as f64, seed: s, value: check.violations() as f64 });
        }
    }
    Ok(rows)
}

/// Best-of-`repeats` wall time of one `rpsw` call.
pub fn time_rpsw(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cfg: &EstimatorConfig, repeats: usize) -> Result<f64> {
    let c = cfg.clone().with_diagnostics(false);
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        std::hint::black_box(rpsw(mu, nu, &c)?);
        best = best.min(start.elapsed().as_secs_f64());
    }
    Ok(best)
}

pub fn timing(n: usize, d: usize, ls: &[usize], repeats: usize, cfg: &EstimatorConfig) -> Result<Vec<BenchRow>> {
    let (mu, nu) = gaussian_pair(cfg.seed, n, d, 1.0, 1.0)?;
    ls.iter()
        .map(|&l| {
            let secs = time_rpsw(&mu, &nu, &cfg.clone().with_projections(l), repeats)?;
            Ok(BenchRow { study: "timing".into(), x: l as f64, seed: cfg.seed, value: secs })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs = [10.0, 100.0, 1000.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        assert!((loglog_slope(&xs, &ys).unwrap() + 0.5).abs() < 1e-12);
        assert!(loglog_slope(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn mc_error_shape() {
        let (mu, nu) = gaussian_pair(1, 16, 3, 1.0, 1.0).unwrap();
        let rows = mc_error(&mu, &nu, &EstimatorConfig::default(), &[10, 100, 1000, 10_000], 3, 1000).unwrap();
        assert_eq!(rows.len(), 4 * 3);
        let (xs, ys) = mean_by_x(&rows);
        assert_eq!(xs, vec![10.0, 100.0, 1000.0, 10_000.0]);
        assert!(ys.iter().all(|y| y.is_finite()));
    }

    #[test]
    fn chain_has_no_violations() {
        let cfg = EstimatorConfig::default().with_projections(20);
        let rows = chain_inequality(16, &[2, 5], 5, &cfg, 720).unwrap();
        assert_eq!(rows.len(), 10);
        assert!(rows.iter().all(|r| r.value == 0.0));
    }

    #[test]
    fn rows_serialize_as_long_csv() {
        let rows = vec![BenchRow { study: "timing".into(), x: 10.0, seed: 0, value: 0.5 }];
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "study,x,seed,value\ntiming,10.0,0,0.5\n");
    }
}
