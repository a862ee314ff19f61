//! Particle gradient flows between a source cloud and a target measure,
//! integrated with the explicit Euler scheme
//! `X <- X - step_size * n * grad_X D^p(mu_X, nu)`.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exactot::wasserstein_exact;
use crate::measures::{norm, save_csv, DiscreteMeasure};
use crate::rng::derive_seed;
use crate::sphere::SliceFamily;
use crate::swfamily::{flow_grad, plan_gradient, EstimatorConfig, SlicingPlan, Variant};

pub const DIVERGENCE_NORM: f64 = 1e6;

/// Decaying concentration `(kappa0 - 1) * ((N - t - offset) / (N - 1))^exponent + floor`,
/// clamped to `[floor, kappa0]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaSchedule {
    pub kappa0: f64,
    pub steps: usize,
    pub exponent: f64,
    pub floor: f64,
    pub offset: f64,
}

impl KappaSchedule {
    /// Schedule decaying from `kappa0` at the first step to 1 at the last.
    pub fn toy(kappa0: f64, steps: usize) -> Self {
        Self { kappa0, steps, exponent: 10.0, floor: 1.0, offset: 1.0 }
    }

    /// Schedule used for long runs: offset and floor of `1e-3`.
    pub fn long_run(kappa0: f64, steps: usize) -> Self {
        Self { kappa0, steps, exponent: 10.0, floor: 1e-3, offset: 1e-3 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.floor > 0.0) || !self.floor.is_finite() {
            return Err(invalid("schedule floor must be positive"));
        }
        if !(self.kappa0 > self.floor) || !self.kappa0.is_finite() {
            return Err(invalid(format!("kappa0 ({}) must exceed the floor ({})", self.kappa0, self.floor)));
        }
        if self.steps == 0 {
            return Err(invalid("schedule needs at least one step"));
        }
        if !self.exponent.is_finite() || self.exponent < 0.0 || !self.offset.is_finite() {
            return Err(invalid("schedule exponent and offset must be finite, exponent >= 0"));
        }
        Ok(())
    }
}

pub fn kappa_at(schedule: &KappaSchedule, t: usize) -> Result<f64> {
    schedule.validate()?;
    let n = schedule.steps;
    if t >= n {
        return Err(invalid(format!("step {t} outside schedule of {n} steps")));
    }
    if n == 1 {
        return Ok(schedule.kappa0);
    }
    let frac = ((n as f64 - t as f64 - schedule.offset) / (n as f64 - 1.0)).max(0.0);
    let k = (schedule.kappa0 - 1.0) * frac.powf(schedule.exponent) + schedule.floor;
    Ok(k.clamp(schedule.floor, schedule.kappa0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub variant: Variant,
    pub estimator: EstimatorConfig,
    pub step_size: f64,
    pub steps: usize,
    /// Concentration schedule; when absent the family's own kappa is used.
    pub schedule: Option<KappaSchedule>,
    /// Exact W2 cadence in steps; 0 evaluates only the first and last state.
    pub eval_every: usize,
    /// Snapshot cadence in steps; 0 records only the first and last state.
    pub record_every: usize,
    /// Free-form remark echoed into the manifest.
    pub notes: Option<String>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Rpsw,
            estimator: EstimatorConfig::default()
                .with_projections(10)
                .with_family(SliceFamily::PowerSpherical { kappa: 100.0 })
                .with_diagnostics(false),
            step_size: 1e-4,
            steps: 300,
            schedule: Some(KappaSchedule::toy(100.0, 300)),
            eval_every: 25,
            record_every: 25,
            notes: None,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(invalid("step size must be positive"));
        }
        self.estimator.validate()?;
        if let Some(s) = &self.schedule {
            s.validate()?;
            if s.steps != self.steps {
                return Err(invalid(format!("schedule covers {} steps but the flow runs {}", s.steps, self.steps)));
            }
        }
        Ok(())
    }

    fn due(cadence: usize, step: usize, last: usize) -> bool {
        step == 0 || step == last || (cadence > 0 && step.is_multiple_of(cadence))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub particles: DiscreteMeasure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowMetric {
    pub step: usize,
    pub w2: f64,
    /// Wall-clock seconds spent integrating up to `step`.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub config: FlowConfig,
    pub snapshots: Vec<Snapshot>,
    pub metrics: Vec<FlowMetric>,
    /// Concentration used at each step.
    pub kappas: Vec<f64>,
    pub final_particles: DiscreteMeasure,
}

impl Trajectory {
    pub fn initial_w2(&self) -> Option<f64> {
        self.metrics.first().map(|m| m.w2)
    }

    pub fn final_w2(&self) -> Option<f64> {
        self.metrics.last().map(|m| m.w2)
    }

    /// Writes `step_<k>.csv` per snapshot, `metrics.csv` and `manifest.json`.
    pub fn export(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for s in &self.snapshots {
            save_csv(&s.particles, dir.join(format!("step_{}.csv", s.step)))?;
        }
        let mut m = fs::File::create(dir.join("metrics.csv"))?;
        writeln!(m, "step,w2,seconds")?;
        for r in &self.metrics {
            writeln!(m, "{},{:?},{:?}", r.step, r.w2, r.seconds)?;
        }
        let manifest = serde_json::json!({
            "config": self.config,
            "seed": self.config.estimator.seed,
            "n": self.final_particles.len(),
            "dim": self.final_particles.dim(),
            "snapshots": self.snapshots.iter().map(|s| s.step).collect::<Vec<_>>(),
            "kappas": self.kappas,
        });
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

fn max_norm(m: &DiscreteMeasure) -> f64 {
    m.rows().map(norm).fold(0.0, |a: f64, b| if b.is_nan() { f64::NAN } else { a.max(b) })
}

fn apply_step(particles: &DiscreteMeasure, grad: &[f64], eta: f64) -> Result<DiscreteMeasure> {
    let scale = eta * particles.len() as f64;
    let pts: Vec<f64> = particles.points().iter().zip(grad).map(|(x, g)| x - scale * g).collect();
    if pts.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidMeasure("non-finite particle".into()));
    }
    particles.with_points(pts)
}

/// One Euler step along a fixed slicing plan.
pub fn euler_step_with_plan(
    particles: &DiscreteMeasure,
    target: &DiscreteMeasure,
    plan: SlicingPlan,
    p: f64,
    eta: f64,
) -> Result<DiscreteMeasure> {
    let g = plan_gradient(particles, target, plan, p)?;
    apply_step(particles, &g.grad, eta)
}

pub fn run_flow(source: &DiscreteMeasure, target: &DiscreteMeasure, cfg: &FlowConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch { expected: target.dim(), got: source.dim() });
    }
    if !source.is_uniform() {
        return Err(invalid("flow source must carry equal weights"));
    }
    let w2 = |x: &DiscreteMeasure| wasserstein_exact(x, target, 2.0);
    let last = cfg.steps;
    let mut x = source.clone();
    let mut snapshots = vec![Snapshot { step: 0, particles: x.clone() }];
    let mut metrics = vec![FlowMetric { step: 0, w2: w2(&x)?, seconds: 0.0 }];
    let mut kappas = Vec::with_capacity(cfg.steps);
    let mut elapsed = 0.0;
    for t in 0..cfg.steps {
        let start = Instant::now();
        let mut est = cfg.estimator.clone();
        est.seed = derive_seed(cfg.estimator.seed, t as u64);
        if let Some(s) = &cfg.schedule {
            est.family = est.family.with_kappa(kappa_at(s, t)?);
        }
        kappas.push(est.family.kappa().unwrap_or(f64::NAN));
        let g = flow_grad(cfg.variant, &x, target, &est)?;
        let next = apply_step(&x, &g.grad, cfg.step_size).map_err(|_| Error::Diverged { step: t + 1, max_norm: f64::NAN })?;
        let mn = max_norm(&next);
        if !(mn <= DIVERGENCE_NORM) {
            return Err(Error::Diverged { step: t + 1, max_norm: mn });
        }
        x = next;
        elapsed += start.elapsed().as_secs_f64();
        let step = t + 1;
        if FlowConfig::due(cfg.record_every, step, last) {
            snapshots.push(Snapshot { step, particles: x.clone() });
        }
        if FlowConfig::due(cfg.eval_every, step, last) {
            metrics.push(FlowMetric { step, w2: w2(&x)?, seconds: elapsed });
        }
    }
    Ok(Trajectory { config: cfg.clone(), snapshots, metrics, kappas, final_particles: x })
}
