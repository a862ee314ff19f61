//! Weighted point clouds, projections onto directions, synthetic generators
//! and CSV ingestion.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{invalid, Error, Result};

const WEIGHT_TOL: f64 = 1e-9;
const UNIT_TOL: f64 = 1e-9;

/// Empirical probability measure on R^d: `n` support points stored row-major
/// with explicit weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Vec<f64>,
    dim: usize,
    weights: Vec<f64>,
    uniform: bool,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<f64>, dim: usize, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("dimension must be at least 1".into()));
        }
        if points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(Error::InvalidMeasure(format!(
                "{} coordinates do not form rows of dimension {dim}",
                points.len()
            )));
        }
        let n = points.len() / dim;
        if weights.len() != n {
            return Err(Error::InvalidMeasure(format!(
                "{} weights for {n} points",
                weights.len()
            )));
        }
        if let Some(pos) = points.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure(format!(
                "non-finite coordinate in point {}",
                pos / dim
            )));
        }
        check_weights(&weights)?;
        let uniform = is_uniform(&weights);
        Ok(Self { points, dim, weights, uniform })
    }

    /// Equal-weight measure over the given rows.
    pub fn uniform(points: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || !points.len().is_multiple_of(dim) || points.is_empty() {
            return Err(Error::InvalidMeasure("points do not form non-empty rows".into()));
        }
        let n = points.len() / dim;
        Self::new(points, dim, vec![1.0 / n as f64; n])
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidMeasure("ragged rows".into()));
        }
        Self::uniform(rows.concat(), dim)
    }

    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::uniform(point.to_vec(), point.len())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// True when every weight equals `1/n`.
    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (row, w) in self.rows().zip(&self.weights) {
            for (acc, x) in m.iter_mut().zip(row) {
                *acc += w * x;
            }
        }
        m
    }

    /// Same weights, new support locations.
    pub fn with_points(&self, points: Vec<f64>) -> Result<Self> {
        if points.len() != self.points.len() {
            return Err(Error::DimensionMismatch { expected: self.points.len(), got: points.len() });
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite coordinate".into()));
        }
        Ok(Self { points, dim: self.dim, weights: self.weights.clone(), uniform: self.uniform })
    }

    /// Lift every point to `(x, g(x))` in R^{d+1}.
    pub fn lift(&self, g: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut points = Vec::with_capacity(self.len() * (self.dim + 1));
        for row in self.rows() {
            points.extend_from_slice(row);
            points.push(g(row));
        }
        Self::new(points, self.dim + 1, self.weights.clone())
    }

    /// Equal-weight measure over rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(invalid(format!("row range {start}..{end} out of bounds")));
        }
        Self::uniform(self.points[start * self.dim..end * self.dim].to_vec(), self.dim)
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidMeasure(format!("weight {i} is negative or non-finite")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

fn is_uniform(weights: &[f64]) -> bool {
    let target = 1.0 / weights.len() as f64;
    weights.iter().all(|w| (w - target).abs() <= 1e-15)
}

/// One-dimensional measure; values are not required to be sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure1D {
    pub(crate) values: Vec<f64>,
    pub(crate) weights: Vec<f64>,
    pub(crate) uniform: bool,
}

impl Measure1D {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != weights.len() {
            return Err(Error::InvalidMeasure("values and weights must be non-empty and equal length".into()));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite value".into()));
        }
        check_weights(&weights)?;
        let uniform = is_uniform(&weights);
        Ok(Self { values, weights, uniform })
    }

    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let n = values.len().max(1);
        Self::new(values, vec![1.0 / n as f64; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }
}

/// Unit vector on the sphere S^{d-1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction(Vec<f64>);

impl Direction {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        let norm = norm(&components);
        if components.is_empty() || !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::NotUnit(norm));
        }
        Ok(Self(components))
    }

    /// Normalizes `v`; fails for the zero vector.
    pub fn normalize(v: Vec<f64>) -> Result<Self> {
        let n = norm(&v);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::NotUnit(n));
        }
        Ok(Self(v.into_iter().map(|x| x / n).collect()))
    }

    /// Standard basis vector `e_k` in R^d.
    pub fn axis(d: usize, k: usize) -> Result<Self> {
        if k >= d {
            return Err(invalid(format!("axis {k} out of range for dimension {d}")));
        }
        let mut v = vec![0.0; d];
        v[k] = 1.0;
        Ok(Self(v))
    }

    pub(crate) fn from_unit_unchecked(v: Vec<f64>) -> Self {
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|x| -x).collect())
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Push-forward of `measure` through `x -> theta . x`.
pub fn project(measure: &DiscreteMeasure, theta: &Direction) -> Result<Measure1D> {
    if theta.dim() != measure.dim() {
        return Err(Error::DimensionMismatch { expected: measure.dim(), got: theta.dim() });
    }
    Ok(Measure1D {
        values: project_values(measure, theta.as_slice()),
        weights: measure.weights.clone(),
        uniform: measure.uniform,
    })
}

pub(crate) fn project_values(measure: &DiscreteMeasure, theta: &[f64]) -> Vec<f64> {
    measure.rows().map(|row| dot(row, theta)).collect()
}

pub fn gen_gaussian<R: Rng + ?Sized>(
    n: usize,
    mean: &[f64],
    scale: f64,
    rng: &mut R,
) -> Result<DiscreteMeasure> {
    if n == 0 || mean.is_empty() {
        return Err(invalid("gaussian generator needs n >= 1 and d >= 1"));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(invalid(format!("scale must be positive, got {scale}")));
    }
    let d = mean.len();
    let mut points = Vec::with_capacity(n * d);
    for _ in 0..n {
        for m in mean {
            let z: f64 = StandardNormal.sample(rng);
            points.push(m + scale * z);
        }
    }
    DiscreteMeasure::uniform(points, d)
}

/// Point of the S-curve at parameter `t`.
pub fn s_curve_point(t: f64) -> [f64; 2] {
    [t.sin(), t.signum() * (t.cos() - 1.0)]
}

/// 2D S-shaped cloud: `t ~ U[-3pi/2, 3pi/2]` mapped through [`s_curve_point`]
/// plus isotropic Gaussian noise of standard deviation `noise`.
pub fn gen_s_curve<R: Rng + ?Sized>(n: usize, noise: f64, rng: &mut R) -> Result<DiscreteMeasure> {
    if n == 0 {
        return Err(invalid("s-curve generator needs n >= 1"));
    }
    let jitter = Normal::new(0.0, noise).map_err(|e| invalid(format!("noise: {e}")))?;
    let mut points = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let t = rng.random_range(-1.5 * PI..=1.5 * PI);
        let [x, y] = s_curve_point(t);
        points.push(x + jitter.sample(rng));
        points.push(y + jitter.sample(rng));
    }
    DiscreteMeasure::uniform(points, 2)
}

/// 2D ring of the given radius centered at the origin.
pub fn gen_ring<R: Rng + ?Sized>(
    n: usize,
    radius: f64,
    noise: f64,
    rng: &mut R,
) -> Result<DiscreteMeasure> {
    if n == 0 {
        return Err(invalid("ring generator needs n >= 1"));
    }
    let jitter = Normal::new(0.0, noise).map_err(|e| invalid(format!("noise: {e}")))?;
    let mut points = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let a = rng.random_range(0.0..2.0 * PI);
        points.push(radius * a.cos() + jitter.sample(rng));
        points.push(radius * a.sin() + jitter.sample(rng));
    }
    DiscreteMeasure::uniform(points, 2)
}

/// Reads `x0,...,x{d-1}[,w]` CSV. Lines starting with `#` are skipped;
/// without a `w` column the weights are uniform, with one they are normalized.
pub fn read_csv<R: Read>(reader: R) -> Result<DiscreteMeasure> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Csv { row: 0, message: e.to_string() })?
        .clone();
    if header.is_empty() {
        return Err(Error::Csv { row: 0, message: "empty file".into() });
    }
    let has_weight = header.iter().next_back() == Some("w");
    let dim = header.len() - usize::from(has_weight);
    if dim == 0 {
        return Err(Error::Csv { row: 0, message: "no coordinate columns".into() });
    }
    for (k, name) in header.iter().take(dim).enumerate() {
        if name != format!("x{k}") {
            return Err(Error::Csv { row: 0, message: format!("unexpected column name {name:?}") });
        }
    }

    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::Csv { row, message: e.to_string() })?;
        if record.len() != header.len() {
            return Err(Error::Csv {
                row,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        for (k, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Csv { row, message: format!("column {k}: not a number: {field:?}") })?;
            if !v.is_finite() {
                return Err(Error::Csv { row, message: format!("column {k}: non-finite value") });
            }
            if k < dim {
                points.push(v);
            } else {
                if v < 0.0 {
                    return Err(Error::Csv { row, message: format!("negative weight {v}") });
                }
                weights.push(v);
            }
        }
    }
    let n = points.len() / dim;
    if n == 0 {
        return Err(Error::Csv { row: 0, message: "no data rows".into() });
    }
    if has_weight {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Csv { row: 0, message: "weights sum to zero".into() });
        }
        if (total - 1.0).abs() > WEIGHT_TOL {
            weights.iter_mut().for_each(|w| *w /= total);
        }
        DiscreteMeasure::new(points, dim, weights)
    } else {
        DiscreteMeasure::uniform(points, dim)
    }
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<DiscreteMeasure> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file))
}

/// Writes the measure with an explicit weight column.
pub fn write_csv<W: Write>(measure: &DiscreteMeasure, mut out: W) -> Result<()> {
    let header: Vec<String> = (0..measure.dim()).map(|k| format!("x{k}")).chain(["w".to_string()]).collect();
    writeln!(out, "{}", header.join(","))?;
    for (row, w) in measure.rows().zip(measure.weights()) {
        let mut line: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
        line.push(format!("{w:?}"));
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn save_csv(measure: &DiscreteMeasure, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    write_csv(measure, &mut buf)?;
    buf.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn axis_projection() {
        let mu = DiscreteMeasure::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let p = project(&mu, &Direction::axis(2, 0).unwrap()).unwrap();
        assert_eq!(p.values(), &[0.0, 1.0]);
        assert_eq!(p.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn basis_projection_reads_coordinates() {
        let mut rng = stream_rng(1, 0);
        let mu = gen_gaussian(20, &[0.0; 4], 1.0, &mut rng).unwrap();
        for k in 0..4 {
            let p = project(&mu, &Direction::axis(4, k).unwrap()).unwrap();
            for (i, v) in p.values().iter().enumerate() {
                assert_eq!(*v, mu.point(i)[k]);
            }
        }
    }

    #[test]
    fn dot_product_projection() {
        let mu = DiscreteMeasure::dirac(&[3.0, 4.0]).unwrap();
        let p = project(&mu, &Direction::new(vec![0.6, 0.8]).unwrap()).unwrap();
        assert!((p.values()[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn projection_dimension_mismatch() {
        let mu = DiscreteMeasure::dirac(&[3.0, 4.0]).unwrap();
        assert!(matches!(
            project(&mu, &Direction::axis(3, 0).unwrap()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn projection_is_linear_in_direction() {
        let mut rng = stream_rng(2, 0);
        let mu = gen_gaussian(10, &[1.0, -2.0, 0.5], 1.0, &mut rng).unwrap();
        let t1 = [0.3, -0.1, 0.7];
        let t2 = [-0.5, 0.2, 0.4];
        let (a, b) = (1.7, -0.6);
        let comb: Vec<f64> = t1.iter().zip(&t2).map(|(x, y)| a * x + b * y).collect();
        let nrm = norm(&comb);
        let dir = Direction::normalize(comb).unwrap();
        let p = project(&mu, &dir).unwrap();
        for (i, row) in mu.rows().enumerate() {
            let raw = a * dot(&t1, row) + b * dot(&t2, row);
            assert!((p.values()[i] * nrm - raw).abs() < 1e-12);
        }
    }

    #[test]
    fn measure_invariants_rejected() {
        assert!(DiscreteMeasure::new(vec![0.0, 1.0], 1, vec![0.5, 0.6]).is_err());
        assert!(DiscreteMeasure::new(vec![f64::NAN], 1, vec![1.0]).is_err());
        assert!(DiscreteMeasure::new(vec![0.0, 1.0], 1, vec![-0.5, 1.5]).is_err());
        assert!(DiscreteMeasure::new(vec![], 1, vec![]).is_err());
        assert!(Direction::new(vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn gaussian_tiny_scale_and_uniform_weights() {
        let mut rng = stream_rng(3, 0);
        let m = gen_gaussian(1, &[0.0, 0.0], 1e-12, &mut rng).unwrap();
        assert!(m.point(0).iter().all(|x| x.abs() < 1e-10));
        let m = gen_gaussian(7, &[0.0], 1.0, &mut rng).unwrap();
        assert!(m.weights().iter().all(|w| *w == 1.0 / 7.0));
        assert!(m.is_uniform());
        assert!(gen_gaussian(0, &[0.0], 1.0, &mut rng).is_err());
        assert!(gen_gaussian(3, &[0.0], 0.0, &mut rng).is_err());
    }

    #[test]
    fn gaussian_sample_mean_within_three_se() {
        let mut rng = stream_rng(4, 0);
        let n = 10_000;
        let mean = [2.0, -1.0, 0.5];
        let scale = 1.5;
        let m = gen_gaussian(n, &mean, scale, &mut rng).unwrap();
        let se = scale / (n as f64).sqrt();
        for (got, want) in m.mean().iter().zip(&mean) {
            assert!((got - want).abs() < 3.0 * se, "{got} vs {want}");
        }
    }

    #[test]
    fn s_curve_shape() {
        assert_eq!(s_curve_point(0.0), [0.0, 0.0]);
        let mut rng = stream_rng(5, 0);
        let m = gen_s_curve(500, 0.0, &mut rng).unwrap();
        // x = sin t spans [-1, 1]; y = sign(t)(cos t - 1) spans [-2, 2].
        for row in m.rows() {
            assert!(row[0].abs() <= 1.0 + 1e-12);
            assert!(row[1].abs() <= 2.0 + 1e-12);
        }
        let sigma = 0.05;
        let m = gen_s_curve(500, sigma, &mut rng).unwrap();
        for row in m.rows() {
            assert!(row[0].abs() <= 1.0 + 5.0 * sigma);
            assert!(row[1].abs() <= 2.0 + 5.0 * sigma);
        }
        assert!(m.weights().iter().all(|w| *w == 1.0 / 500.0));
    }

    #[test]
    fn csv_round_trip() {
        let mut rng = stream_rng(6, 0);
        let m = gen_gaussian(25, &[0.1, 2.0, -3.0], 1.3, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_csv(&m, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.dim(), 3);
        for (a, b) in m.points().iter().zip(back.points()) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!(back.is_uniform());
    }

    #[test]
    fn csv_weight_column_and_comments() {
        let text = "# two atoms\nx0,w\n0.0,0.25\n1.0,0.75\n";
        let m = read_csv(text.as_bytes()).unwrap();
        assert_eq!(m.weights(), &[0.25, 0.75]);
        let m = read_csv("x0,x1\n1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(m.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn csv_rejects_bad_rows() {
        match read_csv("x0,x1\n1,2\nNaN,4\n".as_bytes()) {
            Err(Error::Csv { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected row error, got {other:?}"),
        }
        assert!(matches!(read_csv("x0,w\n1,-0.5\n".as_bytes()), Err(Error::Csv { row: 1, .. })));
        assert!(matches!(read_csv("x0\n1\nabc\n".as_bytes()), Err(Error::Csv { row: 2, .. })));
        assert!(read_csv("".as_bytes()).is_err());
        assert!(read_csv("x0,x1\n".as_bytes()).is_err());
    }
}
