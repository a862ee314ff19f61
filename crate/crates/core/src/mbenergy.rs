//! Mini-batch energy distances built on a base distance kernel, with an
//! optional scalar augmentation lifting points to `(x, g(x))`.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::exactot::wasserstein_exact_pp;
use crate::measures::DiscreteMeasure;
use crate::swfamily::{DistanceEstimate, EstimatorConfig, Variant};

/// Equal-weight batch of at least two points.
#[derive(Debug, Clone, PartialEq)]
pub struct MiniBatch(DiscreteMeasure);

impl MiniBatch {
    pub fn new(points: Vec<f64>, dim: usize) -> Result<Self> {
        Self::from_measure(DiscreteMeasure::uniform(points, dim)?)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::from_measure(DiscreteMeasure::from_rows(rows)?)
    }

    pub fn from_measure(m: DiscreteMeasure) -> Result<Self> {
        if m.len() < 2 {
            return Err(Error::InvalidMeasure(format!("a mini-batch needs at least 2 points, got {}", m.len())));
        }
        if !m.is_uniform() {
            return Err(Error::InvalidMeasure("mini-batch points carry equal weights".into()));
        }
        Ok(Self(m))
    }

    pub fn measure(&self) -> &DiscreteMeasure {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    fn halves(&self) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
        let m = self.len();
        if !m.is_multiple_of(2) {
            return Err(invalid(format!("split loss needs an even batch size, got {m}")));
        }
        Ok((self.0.slice_rows(0, m / 2)?, self.0.slice_rows(m / 2, m)?))
    }
}

pub type LiftFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Scalar map `g` used to lift a point `x` to `(x, g(x))`.
#[derive(Clone)]
pub enum Augmentation {
    Zero,
    CoordinateSum,
    /// `g(x) = |x|^2`
    Radial,
    Custom(LiftFn),
}

impl fmt::Debug for Augmentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => f.write_str("Zero"),
            Self::CoordinateSum => f.write_str("CoordinateSum"),
            Self::Radial => f.write_str("Radial"),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Augmentation {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::CoordinateSum => x.iter().sum(),
            Self::Radial => x.iter().map(|v| v * v).sum(),
            Self::Custom(g) => g(x),
        }
    }

    pub fn lift(&self, batch: &MiniBatch) -> Result<MiniBatch> {
        MiniBatch::from_measure(batch.0.lift(|x| self.eval(x))?)
    }
}

/// Base distance between two batches. `seed` is shared by all calls made
/// within one energy-distance evaluation.
pub trait DistanceKernel: Sync {
    fn distance(&self, a: &DiscreteMeasure, b: &DiscreteMeasure, seed: u64) -> Result<DistanceEstimate>;
}

/// Exact `W_p` by optimal assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactKernel {
    pub p: f64,
}

impl DistanceKernel for ExactKernel {
    fn distance(&self, a: &DiscreteMeasure, b: &DiscreteMeasure, _seed: u64) -> Result<DistanceEstimate> {
        let raw_pp = wasserstein_exact_pp(a, b, self.p)?;
        Ok(DistanceEstimate { value: raw_pp.powf(1.0 / self.p), raw_pp, std_error: None, per_direction: Vec::new() })
    }
}

/// Any sliced estimator; the configured seed is replaced by the call seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicedKernel {
    pub variant: Variant,
    pub config: EstimatorConfig,
}

impl DistanceKernel for SlicedKernel {
    fn distance(&self, a: &DiscreteMeasure, b: &DiscreteMeasure, seed: u64) -> Result<DistanceEstimate> {
        let cfg = EstimatorConfig { seed, diagnostics: false, ..self.config.clone() };
        self.variant.estimate(a, b, &cfg)
    }
}

/// Total order on batches so that the cross term is evaluated in the same
/// argument order whichever group comes first.
fn canonical<'a>(a: &'a DiscreteMeasure, b: &'a DiscreteMeasure) -> (&'a DiscreteMeasure, &'a DiscreteMeasure) {
    let key = |m: &DiscreteMeasure| (m.len(), m.points().to_vec(), m.weights().to_vec());
    let (ka, kb) = (key(a), key(b));
    let ord = ka.0.cmp(&kb.0).then_with(|| {
        ka.1.iter()
            .chain(&ka.2)
            .zip(kb.1.iter().chain(&kb.2))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    if ord == Ordering::Greater {
        (b, a)
    } else {
        (a, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTerms {
    /// `D(P_X, P_Y)`
    pub cross: f64,
    /// `D(P_X, P_X')`
    pub within_x: f64,
    /// `D(P_Y, P_Y')`
    pub within_y: f64,
    pub seed: u64,
}

impl EnergyTerms {
    pub fn value(&self) -> f64 {
        2.0 * self.cross - (self.within_x + self.within_y)
    }
}

fn check_dims(batches: &[&MiniBatch]) -> Result<()> {
    let d = batches[0].dim();
    for b in batches {
        if b.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: b.dim() });
        }
    }
    Ok(())
}

fn terms(
    a: (&DiscreteMeasure, &DiscreteMeasure),
    b: (&DiscreteMeasure, &DiscreteMeasure),
    c: (&DiscreteMeasure, &DiscreteMeasure),
    kernel: &dyn DistanceKernel,
    seed: u64,
    pick: fn(&DistanceEstimate) -> f64,
) -> Result<EnergyTerms> {
    let (x, y) = canonical(a.0, a.1);
    let (r1, (r2, r3)) = rayon::join(
        || kernel.distance(x, y, seed),
        || rayon::join(|| kernel.distance(b.0, b.1, seed), || kernel.distance(c.0, c.1, seed)),
    );
    Ok(EnergyTerms { cross: pick(&r1?), within_x: pick(&r2?), within_y: pick(&r3?), seed })
}

/// Plug-in GME^2 on four batches, returning the individual kernel values.
pub fn gme2_terms(
    x: &MiniBatch,
    xp: &MiniBatch,
    y: &MiniBatch,
    yp: &MiniBatch,
    kernel: &dyn DistanceKernel,
    seed: u64,
) -> Result<EnergyTerms> {
    check_dims(&[x, xp, y, yp])?;
    terms((&x.0, &y.0), (&x.0, &xp.0), (&y.0, &yp.0), kernel, seed, |e| e.value)
}

/// `2 D(P_X, P_Y) - D(P_X, P_X') - D(P_Y, P_Y')`.
pub fn gme2(x: &MiniBatch, xp: &MiniBatch, y: &MiniBatch, yp: &MiniBatch, kernel: &dyn DistanceKernel, seed: u64) -> Result<f64> {
    Ok(gme2_terms(x, xp, y, yp, kernel, seed)?.value())
}

/// GME^2 after lifting every batch with `g`.
#[allow(clippy::too_many_arguments)]
pub fn agme2(
    x: &MiniBatch,
    xp: &MiniBatch,
    y: &MiniBatch,
    yp: &MiniBatch,
    kernel: &dyn DistanceKernel,
    g: &Augmentation,
    seed: u64,
) -> Result<f64> {
    check_dims(&[x, xp, y, yp])?;
    gme2(&g.lift(x)?, &g.lift(xp)?, &g.lift(y)?, &g.lift(yp)?, kernel, seed)
}

/// `2 D^2(Xbar, Ybar) - D^2(Xbar_1, Xbar_2) - D^2(Ybar_1, Ybar_2)` with
/// ordered halves and `D^2` the kernel's `raw_pp`.
pub fn agme_split_loss(xbar: &MiniBatch, ybar: &MiniBatch, kernel: &dyn DistanceKernel, seed: u64) -> Result<f64> {
    check_dims(&[xbar, ybar])?;
    let (x1, x2) = xbar.halves()?;
    let (y1, y2) = ybar.halves()?;
    let t = terms((&xbar.0, &ybar.0), (&x1, &x2), (&y1, &y2), kernel, seed, |e| e.raw_pp)?;
    Ok(t.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::gen_gaussian;
    use crate::rng::stream_rng;
    use crate::sphere::SliceFamily;

    fn batch(rows: &[&[f64]]) -> MiniBatch {
        MiniBatch::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn random_batch(seed: u64, m: usize, shift: f64) -> MiniBatch {
        MiniBatch::from_measure(gen_gaussian(m, &[shift, 0.0, 0.0], 1.0, &mut stream_rng(seed, 0)).unwrap()).unwrap()
    }

    fn kernels() -> Vec<Box<dyn DistanceKernel>> {
        let mut out: Vec<Box<dyn DistanceKernel>> = vec![Box::new(ExactKernel { p: 2.0 })];
        for variant in Variant::ALL {
            let config = EstimatorConfig::default()
                .with_projections(16)
                .with_optimizer(5, 0.05)
                .with_family(SliceFamily::PowerSpherical { kappa: 10.0 });
            out.push(Box::new(SlicedKernel { variant, config }));
        }
        out
    }

    #[test]
    fn identical_batches_give_zero() {
        let x = random_batch(1, 8, 0.0);
        for k in kernels() {
            assert_eq!(gme2(&x, &x, &x, &x, k.as_ref(), 3).unwrap(), 0.0);
            assert_eq!(agme2(&x, &x, &x, &x, k.as_ref(), &Augmentation::Radial, 3).unwrap(), 0.0);
        }
    }

    #[test]
    fn group_swap_is_exact() {
        let (x, xp, y, yp) = (random_batch(1, 8, 0.0), random_batch(2, 8, 0.0), random_batch(3, 8, 1.0), random_batch(4, 8, 1.0));
        for k in kernels() {
            let a = gme2(&x, &xp, &y, &yp, k.as_ref(), 11).unwrap();
            let b = gme2(&y, &yp, &x, &xp, k.as_ref(), 11).unwrap();
            assert_eq!(a, b);
            let a = agme_split_loss(&x, &y, k.as_ref(), 5).unwrap();
            let b = agme_split_loss(&y, &x, k.as_ref(), 5).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn exact_kernel_three_point_instance() {
        // Collinear clouds: sorted matching is optimal.
        let x = batch(&[&[0.0, 0.0], &[1.0, 0.0], &[3.0, 0.0]]);
        let xp = batch(&[&[0.0, 1.0], &[1.0, 1.0], &[3.0, 1.0]]);
        let y = batch(&[&[2.0, 0.0], &[0.0, 0.0], &[2.0, 0.0]]);
        let yp = batch(&[&[0.0, 0.0], &[2.0, 0.0], &[4.0, 0.0]]);
        // D(X,Y)^2 = (0 + 1 + 1)/3, D(X,X')^2 = 1, D(Y,Y')^2 = (0 + 0 + 4)/3.
        let expected = 2.0 * (2.0f64 / 3.0).sqrt() - 1.0 - (4.0f64 / 3.0).sqrt();
        let got = gme2(&x, &xp, &y, &yp, &ExactKernel { p: 2.0 }, 0).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn zero_augmentation_matches_plain() {
        let (x, xp, y, yp) = (random_batch(5, 6, 0.0), random_batch(6, 6, 0.5), random_batch(7, 6, 1.0), random_batch(8, 6, 2.0));
        let k = ExactKernel { p: 2.0 };
        assert_eq!(
            gme2(&x, &xp, &y, &yp, &k, 0).unwrap(),
            agme2(&x, &xp, &y, &yp, &k, &Augmentation::Zero, 0).unwrap()
        );
    }

    #[test]
    fn radial_augmentation_two_point_instance() {
        let x = batch(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let xp = batch(&[&[0.0, 0.0], &[0.0, 1.0]]);
        let y = batch(&[&[1.0, 1.0], &[0.0, 0.0]]);
        let yp = batch(&[&[2.0, 0.0], &[1.0, 1.0]]);
        // Lifted: D(X,Y)^2 = 2/2, D(X,X')^2 = 2/2, D(Y,Y')^2 = 12/2.
        let expected = 2.0 - 1.0 - 6f64.sqrt();
        let got = agme2(&x, &xp, &y, &yp, &ExactKernel { p: 2.0 }, &Augmentation::Radial, 0).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        // Plain: D(X,Y)^2 = 1/2, D(X,X')^2 = 1, D(Y,Y')^2 = 4/2.
        let plain = gme2(&x, &xp, &y, &yp, &ExactKernel { p: 2.0 }, 0).unwrap();
        assert!((plain - (2.0 * 0.5f64.sqrt() - 1.0 - 2f64.sqrt())).abs() < 1e-12, "{plain}");
    }

    #[test]
    fn split_loss_hand_instance() {
        let xbar = batch(&[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let ybar = batch(&[&[0.0, 0.0], &[2.0, 0.0], &[0.0, 2.0], &[2.0, 2.0]]);
        // D^2(X,Y) = 1, D^2(X1,X2) = 1, D^2(Y1,Y2) = 4.
        let got = agme_split_loss(&xbar, &ybar, &ExactKernel { p: 2.0 }, 0).unwrap();
        assert!((got - (2.0 - 1.0 - 4.0)).abs() < 1e-12, "{got}");
    }

    #[test]
    fn split_loss_identical_halves_is_zero() {
        let x = batch(&[&[0.0, 1.0], &[2.0, 3.0], &[0.0, 1.0], &[2.0, 3.0]]);
        for k in kernels() {
            assert_eq!(agme_split_loss(&x, &x, k.as_ref(), 1).unwrap(), 0.0);
        }
    }

    #[test]
    fn odd_batches_and_mismatch_rejected() {
        let x = batch(&[&[0.0], &[1.0], &[2.0]]);
        assert!(agme_split_loss(&x, &x, &ExactKernel { p: 2.0 }, 0).is_err());
        let y = batch(&[&[0.0, 0.0], &[1.0, 1.0]]);
        assert!(matches!(gme2(&x, &x, &y, &y, &ExactKernel { p: 2.0 }, 0), Err(Error::DimensionMismatch { .. })));
        assert!(MiniBatch::from_rows(&[vec![1.0]]).is_err());
    }

    #[test]
    fn injective_lift_distinguishes_batches() {
        let x = batch(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let y = batch(&[&[0.0, 0.0], &[3.0, 0.0]]);
        let v = agme2(&x, &x, &y, &y, &ExactKernel { p: 2.0 }, &Augmentation::CoordinateSum, 0).unwrap();
        assert!(v > 0.0);
    }
}
