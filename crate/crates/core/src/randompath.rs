//! Random paths `Z = X - Y` between two measures (independent coupling), the
//! directions obtained by perturbing a normalized path, and batched draws from
//! the resulting slicing distribution.

use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::measures::{norm, DiscreteMeasure, Direction};
use crate::rng::stream_rng;
use crate::sphere::SliceFamily;

/// Paths shorter than this are treated as degenerate.
pub const DEGENERATE_NORM: f64 = 1e-12;
/// Constant added to every coordinate of a degenerate path.
pub const DEGENERATE_SHIFT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct RandomPath {
    pub delta: Vec<f64>,
    pub degenerate: bool,
}

impl RandomPath {
    pub fn direction(&self) -> Direction {
        Direction::normalize(self.delta.clone()).expect("random path has positive norm")
    }
}

/// Categorical samplers for both endpoints, built once per batch.
pub struct PathSampler<'a> {
    mu: &'a DiscreteMeasure,
    nu: &'a DiscreteMeasure,
    mu_index: WeightedIndex<f64>,
    nu_index: WeightedIndex<f64>,
}

impl<'a> PathSampler<'a> {
    pub fn new(mu: &'a DiscreteMeasure, nu: &'a DiscreteMeasure) -> Result<Self> {
        if mu.dim() != nu.dim() {
            return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
        }
        let idx = |m: &DiscreteMeasure| {
            WeightedIndex::new(m.weights().iter().copied()).map_err(|e| invalid(format!("weights: {e}")))
        };
        Ok(Self { mu, nu, mu_index: idx(mu)?, nu_index: idx(nu)? })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> RandomPath {
        let x = self.mu.point(self.mu_index.sample(rng));
        let y = self.nu.point(self.nu_index.sample(rng));
        let mut delta: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        let degenerate = norm(&delta) < DEGENERATE_NORM;
        if degenerate {
            delta.iter_mut().for_each(|z| *z += DEGENERATE_SHIFT);
        }
        RandomPath { delta, degenerate }
    }

    /// One random-path projecting direction.
    pub fn sample_direction<R: Rng + ?Sized>(&self, family: &SliceFamily, rng: &mut R) -> Result<Direction> {
        let path = self.sample(rng);
        match family {
            SliceFamily::Uniform => crate::sphere::sample_uniform(self.mu.dim(), rng),
            fam => fam.sample(&path.direction(), rng),
        }
    }
}

pub fn sample_random_path<R: Rng + ?Sized>(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    rng: &mut R,
) -> Result<RandomPath> {
    Ok(PathSampler::new(mu, nu)?.sample(rng))
}

/// Random-path projecting direction: `theta ~ family(P(X - Y))`.
pub fn sample_rpd<R: Rng + ?Sized>(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    family: &SliceFamily,
    rng: &mut R,
) -> Result<Direction> {
    family.validate()?;
    PathSampler::new(mu, nu)?.sample_direction(family, rng)
}

/// `count` i.i.d. draws from the random-path slicing distribution. Draw `l`
/// uses stream `first_stream + l` of `seed`, so the batch is identical for any
/// thread count.
pub fn sample_rpsd_batch(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    family: &SliceFamily,
    count: usize,
    seed: u64,
    first_stream: u64,
) -> Result<Vec<Direction>> {
    if count == 0 {
        return Err(invalid("number of projections must be at least 1"));
    }
    family.validate()?;
    let sampler = PathSampler::new(mu, nu)?;
    (0..count as u64)
        .into_par_iter()
        .map(|l| sampler.sample_direction(family, &mut stream_rng(seed, first_stream + l)))
        .collect()
}

/// Serial counterpart of [`sample_rpsd_batch`]; same output.
pub fn sample_rpsd_batch_serial(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    family: &SliceFamily,
    count: usize,
    seed: u64,
    first_stream: u64,
) -> Result<Vec<Direction>> {
    if count == 0 {
        return Err(invalid("number of projections must be at least 1"));
    }
    family.validate()?;
    let sampler = PathSampler::new(mu, nu)?;
    (0..count as u64)
        .map(|l| sampler.sample_direction(family, &mut stream_rng(seed, first_stream + l)))
        .collect()
}
