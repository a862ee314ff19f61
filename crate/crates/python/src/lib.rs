//! Python bindings: measures, distance estimators, exact references, flows
//! and mini-batch energy distances.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use sliced_ot::exactot;
use sliced_ot::flow::{self, FlowConfig, KappaSchedule};
use sliced_ot::mbenergy::{self, Augmentation, DistanceKernel, ExactKernel, MiniBatch, SlicedKernel};
use sliced_ot::measures::{self as m, DiscreteMeasure, Direction, Measure1D};
use sliced_ot::ot1d;
use sliced_ot::rng::stream_rng;
use sliced_ot::sphere::SliceFamily;
use sliced_ot::swfamily::{self, DistanceEstimate, EnergyFunction, EstimatorConfig, OptimizerConfig, Variant};
use sliced_ot::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for sliced_ot::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Weighted point cloud in R^d.
#[pyclass(name = "Measure", module = "sliced_ot_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyMeasure {
    inner: DiscreteMeasure,
}

#[pymethods]
impl PyMeasure {
    #[new]
    #[pyo3(signature = (points, weights=None))]
    fn new(points: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> PyResult<Self> {
        let rows = DiscreteMeasure::from_rows(&points).py()?;
        let inner = match weights {
            Some(w) => DiscreteMeasure::new(rows.points().to_vec(), rows.dim(), w).py()?,
            None => rows,
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (n, mean, scale=1.0, seed=0))]
    fn gaussian(n: usize, mean: Vec<f64>, scale: f64, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: m::gen_gaussian(n, &mean, scale, &mut stream_rng(seed, 0)).py()? })
    }

    #[staticmethod]
    #[pyo3(signature = (n, noise=0.0, seed=0))]
    fn s_curve(n: usize, noise: f64, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: m::gen_s_curve(n, noise, &mut stream_rng(seed, 0)).py()? })
    }

    #[staticmethod]
    #[pyo3(signature = (n, radius=1.0, noise=0.0, seed=0))]
    fn ring(n: usize, radius: f64, noise: f64, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: m::gen_ring(n, radius, noise, &mut stream_rng(seed, 0)).py()? })
    }

    #[staticmethod]
    fn load_csv(path: &str) -> PyResult<Self> {
        Ok(Self { inner: m::load_csv(path).py()? })
    }

    fn save_csv(&self, path: &str) -> PyResult<()> {
        m::save_csv(&self.inner, path).py()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn points(&self) -> Vec<Vec<f64>> {
        self.inner.rows().map(<[f64]>::to_vec).collect()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    fn mean(&self) -> Vec<f64> {
        self.inner.mean()
    }

    fn project(&self, theta: Vec<f64>) -> PyResult<Vec<f64>> {
        let t = Direction::new(theta).py()?;
        Ok(m::project(&self.inner, &t).py()?.values().to_vec())
    }

    fn __repr__(&self) -> String {
        format!("Measure(n={}, dim={})", self.inner.len(), self.inner.dim())
    }
}

/// Result of a distance estimate.
#[pyclass(name = "Estimate", module = "sliced_ot_py", frozen, get_all)]
pub struct PyEstimate {
    value: f64,
    raw_pp: f64,
    std_error: Option<f64>,
    directions: Vec<Vec<f64>>,
    projected_pp: Vec<f64>,
    weights: Vec<f64>,
}

impl From<DistanceEstimate> for PyEstimate {
    fn from(e: DistanceEstimate) -> Self {
        Self {
            value: e.value,
            raw_pp: e.raw_pp,
            std_error: e.std_error,
            directions: e.per_direction.iter().map(|r| r.direction.as_slice().to_vec()).collect(),
            projected_pp: e.per_direction.iter().map(|r| r.projected_pp).collect(),
            weights: e.per_direction.iter().map(|r| r.weight).collect(),
        }
    }
}

#[pymethods]
impl PyEstimate {
    fn __repr__(&self) -> String {
        format!("Estimate(value={}, raw_pp={})", self.value, self.raw_pp)
    }
}

fn family(name: &str, kappa: f64) -> PyResult<SliceFamily> {
    match name {
        "uniform" => Ok(SliceFamily::Uniform),
        "vmf" => SliceFamily::von_mises_fisher(kappa).py(),
        "ps" => SliceFamily::power_spherical(kappa).py(),
        other => Err(PyValueError::new_err(format!("unknown family {other:?}"))),
    }
}

#[allow(clippy::too_many_arguments)]
fn config(
    p: f64,
    projections: usize,
    repeats: usize,
    kappa: f64,
    family_name: &str,
    energy: &str,
    iterations: usize,
    lr: f64,
    seed: u64,
    diagnostics: bool,
) -> PyResult<EstimatorConfig> {
    let cfg = EstimatorConfig {
        p,
        projections,
        repeats,
        family: family(family_name, kappa)?,
        energy: energy.parse::<EnergyFunction>().py()?,
        seed,
        optimizer: OptimizerConfig { iterations, learning_rate: lr },
        diagnostics,
    };
    cfg.validate().py()?;
    Ok(cfg)
}

fn variant(name: &str) -> PyResult<Variant> {
    name.parse().py()
}

/// Distance between two measures with one of the sliced estimators.
#[pyfunction]
#[pyo3(signature = (variant_name, mu, nu, p=2.0, projections=100, repeats=1, kappa=50.0, family_name="ps",
                    energy="exp", iterations=100, lr=0.05, seed=0, diagnostics=false))]
#[allow(clippy::too_many_arguments)]
fn distance(
    py: Python<'_>,
    variant_name: &str,
    mu: &PyMeasure,
    nu: &PyMeasure,
    p: f64,
    projections: usize,
    repeats: usize,
    kappa: f64,
    family_name: &str,
    energy: &str,
    iterations: usize,
    lr: f64,
    seed: u64,
    diagnostics: bool,
) -> PyResult<PyEstimate> {
    let v = variant(variant_name)?;
    let cfg = config(p, projections, repeats, kappa, family_name, energy, iterations, lr, seed, diagnostics)?;
    let (a, b) = (mu.inner.clone(), nu.inner.clone());
    let est = py.detach(move || v.estimate(&a, &b, &cfg)).py()?;
    Ok(est.into())
}

/// Gradient of the estimated `D^p` with respect to `mu`'s points.
#[pyfunction]
#[pyo3(signature = (variant_name, mu, nu, p=2.0, projections=100, repeats=1, kappa=50.0, family_name="ps",
                    energy="exp", iterations=100, lr=0.05, seed=0))]
#[allow(clippy::too_many_arguments)]
fn flow_grad(
    variant_name: &str,
    mu: &PyMeasure,
    nu: &PyMeasure,
    p: f64,
    projections: usize,
    repeats: usize,
    kappa: f64,
    family_name: &str,
    energy: &str,
    iterations: usize,
    lr: f64,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let cfg = config(p, projections, repeats, kappa, family_name, energy, iterations, lr, seed, true)?;
    let g = swfamily::flow_grad(variant(variant_name)?, &mu.inner, &nu.inner, &cfg).py()?;
    Ok(g.grad.chunks(mu.inner.dim()).map(<[f64]>::to_vec).collect())
}

#[pyfunction]
#[pyo3(signature = (x, y, p=2.0, x_weights=None, y_weights=None))]
fn wasserstein_1d(x: Vec<f64>, y: Vec<f64>, p: f64, x_weights: Option<Vec<f64>>, y_weights: Option<Vec<f64>>) -> PyResult<f64> {
    let build = |v: Vec<f64>, w: Option<Vec<f64>>| match w {
        Some(w) => Measure1D::new(v, w),
        None => Measure1D::uniform(v),
    };
    ot1d::wasserstein_1d(&build(x, x_weights).py()?, &build(y, y_weights).py()?, p).py()
}

#[pyfunction]
#[pyo3(signature = (mu, nu, p=2.0))]
fn wasserstein_exact(mu: &PyMeasure, nu: &PyMeasure, p: f64) -> PyResult<f64> {
    exactot::wasserstein_exact(&mu.inner, &nu.inner, p).py()
}

#[pyfunction]
#[pyo3(signature = (mu, nu, p=2.0, resolution=3600))]
fn grid_max_sw(mu: &PyMeasure, nu: &PyMeasure, p: f64, resolution: usize) -> PyResult<(f64, Vec<f64>)> {
    let (v, d) = exactot::grid_max_sw(&mu.inner, &nu.inner, p, resolution).py()?;
    Ok((v, d.into_vec()))
}

/// `n` draws from a location-scale family on the sphere.
#[pyfunction]
#[pyo3(signature = (loc, kappa, n, family_name="ps", seed=0))]
fn sample_sphere(loc: Vec<f64>, kappa: f64, n: usize, family_name: &str, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let f = family(family_name, kappa)?;
    let loc = Direction::new(loc).py()?;
    (0..n as u64).map(|i| Ok(f.sample(&loc, &mut stream_rng(seed, i)).py()?.into_vec())).collect()
}

#[pyfunction]
#[pyo3(signature = (kappa0, steps, t, schedule="toy"))]
fn kappa_at(kappa0: f64, steps: usize, t: usize, schedule: &str) -> PyResult<f64> {
    let s = match schedule {
        "toy" => KappaSchedule::toy(kappa0, steps),
        "long" => KappaSchedule::long_run(kappa0, steps),
        other => return Err(PyValueError::new_err(format!("unknown schedule {other:?}"))),
    };
    flow::kappa_at(&s, t).py()
}

/// Outcome of a particle flow.
#[pyclass(name = "Trajectory", module = "sliced_ot_py", frozen)]
pub struct PyTrajectory {
    inner: flow::Trajectory,
}

#[pymethods]
impl PyTrajectory {
    /// `(step, w2, seconds)` rows.
    #[getter]
    fn metrics(&self) -> Vec<(usize, f64, f64)> {
        self.inner.metrics.iter().map(|r| (r.step, r.w2, r.seconds)).collect()
    }

    #[getter]
    fn kappas(&self) -> Vec<f64> {
        self.inner.kappas.clone()
    }

    #[getter]
    fn snapshot_steps(&self) -> Vec<usize> {
        self.inner.snapshots.iter().map(|s| s.step).collect()
    }

    #[getter]
    fn final_particles(&self) -> PyMeasure {
        PyMeasure { inner: self.inner.final_particles.clone() }
    }

    fn export(&self, dir: &str) -> PyResult<()> {
        self.inner.export(dir).py()
    }
}

#[pyfunction]
#[pyo3(signature = (source, target, variant_name="rpsw", steps=300, step_size=1e-4, projections=10, kappa0=100.0,
                    schedule="toy", p=2.0, seed=0, eval_every=25, record_every=25))]
#[allow(clippy::too_many_arguments)]
fn run_flow(
    py: Python<'_>,
    source: &PyMeasure,
    target: &PyMeasure,
    variant_name: &str,
    steps: usize,
    step_size: f64,
    projections: usize,
    kappa0: f64,
    schedule: &str,
    p: f64,
    seed: u64,
    eval_every: usize,
    record_every: usize,
) -> PyResult<PyTrajectory> {
    let v = variant(variant_name)?;
    let sched = match schedule {
        "toy" => Some(KappaSchedule::toy(kappa0, steps)),
        "long" => Some(KappaSchedule::long_run(kappa0, steps)),
        "none" => None,
        other => return Err(PyValueError::new_err(format!("unknown schedule {other:?}"))),
    }
    .filter(|_| steps > 0);
    let cfg = FlowConfig {
        variant: v,
        estimator: config(p, projections, 1, kappa0, "ps", "exp", 100, 0.05, seed, false)?,
        step_size,
        steps,
        schedule: sched,
        eval_every,
        record_every,
        notes: None,
    };
    let (a, b) = (source.inner.clone(), target.inner.clone());
    let inner = py.detach(move || flow::run_flow(&a, &b, &cfg)).py()?;
    Ok(PyTrajectory { inner })
}

fn kernel(name: &str, p: f64, projections: usize, kappa: f64) -> PyResult<Box<dyn DistanceKernel>> {
    if name == "exact" {
        return Ok(Box::new(ExactKernel { p }));
    }
    let config = config(p, projections, 1, kappa, "ps", "exp", 100, 0.05, 0, false)?;
    Ok(Box::new(SlicedKernel { variant: variant(name)?, config }))
}

fn batch(m: &PyMeasure) -> PyResult<MiniBatch> {
    MiniBatch::from_measure(m.inner.clone()).py()
}

fn augmentation(name: &str) -> PyResult<Augmentation> {
    match name {
        "zero" => Ok(Augmentation::Zero),
        "sum" => Ok(Augmentation::CoordinateSum),
        "radial" => Ok(Augmentation::Radial),
        other => Err(PyValueError::new_err(format!("unknown augmentation {other:?}"))),
    }
}

/// `2 D(X, Y) - D(X, X') - D(Y, Y')`, optionally on lifted batches.
#[pyfunction]
#[pyo3(signature = (x, xp, y, yp, kernel_name="exact", augment=None, p=2.0, projections=100, kappa=10.0, seed=0))]
#[allow(clippy::too_many_arguments)]
fn gme2(
    x: &PyMeasure,
    xp: &PyMeasure,
    y: &PyMeasure,
    yp: &PyMeasure,
    kernel_name: &str,
    augment: Option<&str>,
    p: f64,
    projections: usize,
    kappa: f64,
    seed: u64,
) -> PyResult<f64> {
    let k = kernel(kernel_name, p, projections, kappa)?;
    let (x, xp, y, yp) = (batch(x)?, batch(xp)?, batch(y)?, batch(yp)?);
    match augment {
        Some(g) => mbenergy::agme2(&x, &xp, &y, &yp, k.as_ref(), &augmentation(g)?, seed).py(),
        None => mbenergy::gme2(&x, &xp, &y, &yp, k.as_ref(), seed).py(),
    }
}

#[pyfunction]
#[pyo3(signature = (xbar, ybar, kernel_name="exact", p=2.0, projections=100, kappa=10.0, seed=0))]
fn agme_split_loss(
    xbar: &PyMeasure,
    ybar: &PyMeasure,
    kernel_name: &str,
    p: f64,
    projections: usize,
    kappa: f64,
    seed: u64,
) -> PyResult<f64> {
    let k = kernel(kernel_name, p, projections, kappa)?;
    mbenergy::agme_split_loss(&batch(xbar)?, &batch(ybar)?, k.as_ref(), seed).py()
}

#[pymodule]
fn sliced_ot_py(module: &Bound<'_, PyModule>) -> PyResult<()> {
    module.add_class::<PyMeasure>()?;
    module.add_class::<PyEstimate>()?;
    module.add_class::<PyTrajectory>()?;
    module.add_function(wrap_pyfunction!(distance, module)?)?;
    module.add_function(wrap_pyfunction!(flow_grad, module)?)?;
    module.add_function(wrap_pyfunction!(wasserstein_1d, module)?)?;
    module.add_function(wrap_pyfunction!(wasserstein_exact, module)?)?;
    module.add_function(wrap_pyfunction!(grid_max_sw, module)?)?;
    module.add_function(wrap_pyfunction!(sample_sphere, module)?)?;
    module.add_function(wrap_pyfunction!(kappa_at, module)?)?;
    module.add_function(wrap_pyfunction!(run_flow, module)?)?;
    module.add_function(wrap_pyfunction!(gme2, module)?)?;
    module.add_function(wrap_pyfunction!(agme_split_loss, module)?)?;
    Ok(())
}
