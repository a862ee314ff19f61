//! Sliced Wasserstein estimators: SW, Max-SW, DSW, EBSW (importance
//! sampling), RPSW and IWRPSW, together with particle gradients used by the
//! flow engine.
//!
//! All estimators are deterministic functions of `(mu, nu, config)`. Direction
//! `l` of a batch is drawn from stream `l` of the configured seed.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measures::{project_values, DiscreteMeasure, Direction, Measure1D};
use crate::ot1d::{coupling_gradient, pp_cost};
use crate::randompath::sample_rpsd_batch;
use crate::rng::{derive_seed, stream_rng};
use crate::sphere::{ps_from_noise, ps_loc_vjp, sample_ps_noise, sample_uniform, SliceFamily};

/// Increasing positive map turning projected distances into importance
/// weights; evaluated in the log domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnergyFunction {
    /// `f(x) = e^x`
    Exponential,
    /// `f(x) = x`; all-zero inputs fall back to uniform weights.
    Identity,
    /// `f(x) = (1 + x)^degree`, `degree > 0`.
    Polynomial { degree: f64 },
}

impl EnergyFunction {
    pub fn log_eval(&self, x: f64) -> f64 {
        match *self {
            Self::Exponential => x,
            Self::Identity => x.ln(),
            Self::Polynomial { degree } => degree * x.ln_1p(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Polynomial { degree } if !(degree > 0.0) || !degree.is_finite() => {
                Err(invalid(format!("polynomial energy degree must be positive, got {degree}")))
            }
            _ => Ok(()),
        }
    }
}

impl FromStr for EnergyFunction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp" | "exponential" => Ok(Self::Exponential),
            "identity" | "id" => Ok(Self::Identity),
            _ => match s.strip_prefix("poly") {
                Some(q) => {
                    let degree: f64 = q.trim_start_matches(':').parse().map_err(|_| invalid(format!("bad energy {s:?}")))?;
                    let f = Self::Polynomial { degree };
                    f.validate()?;
                    Ok(f)
                }
                None => Err(invalid(format!("unknown energy function {s:?}"))),
            },
        }
    }
}

/// Inner optimizer for Max-SW and DSW: projected gradient ascent on the sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub iterations: usize,
    pub learning_rate: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { iterations: 100, learning_rate: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub p: f64,
    pub projections: usize,
    pub repeats: usize,
    pub family: SliceFamily,
    pub energy: EnergyFunction,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    /// Keep per-direction records in the returned estimate.
    pub diagnostics: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            p: 2.0,
            projections: 100,
            repeats: 1,
            family: SliceFamily::PowerSpherical { kappa: 50.0 },
            energy: EnergyFunction::Exponential,
            seed: 0,
            optimizer: OptimizerConfig::default(),
            diagnostics: true,
        }
    }
}

impl EstimatorConfig {
    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }
    pub fn with_projections(mut self, l: usize) -> Self {
        self.projections = l;
        self
    }
    pub fn with_repeats(mut self, h: usize) -> Self {
        self.repeats = h;
        self
    }
    pub fn with_family(mut self, family: SliceFamily) -> Self {
        self.family = family;
        self
    }
    pub fn with_energy(mut self, energy: EnergyFunction) -> Self {
        self.energy = energy;
        self
    }
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
    pub fn with_optimizer(mut self, iterations: usize, learning_rate: f64) -> Self {
        self.optimizer = OptimizerConfig { iterations, learning_rate };
        self
    }
    pub fn with_diagnostics(mut self, on: bool) -> Self {
        self.diagnostics = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0) || !self.p.is_finite() {
            return Err(invalid(format!("order p must be >= 1, got {}", self.p)));
        }
        if self.projections == 0 {
            return Err(invalid("number of projections must be at least 1"));
        }
        if self.repeats == 0 {
            return Err(invalid("number of repeat sets must be at least 1"));
        }
        if self.optimizer.iterations == 0 {
            return Err(invalid("optimizer needs at least one iteration"));
        }
        if !(self.optimizer.learning_rate > 0.0) || !self.optimizer.learning_rate.is_finite() {
            return Err(invalid("learning rate must be positive"));
        }
        self.family.validate()?;
        self.energy.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionRecord {
    pub direction: Direction,
    /// `W_p^p` of the projections onto `direction`.
    pub projected_pp: f64,
    /// Normalized weight of this direction in the estimate.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceEstimate {
    /// The distance, `raw_pp^(1/p)`.
    pub value: f64,
    /// The estimate on the `W_p^p` scale.
    pub raw_pp: f64,
    /// Monte Carlo standard error of `raw_pp` when it is defined.
    pub std_error: Option<f64>,
    pub per_direction: Vec<DirectionRecord>,
}

impl DistanceEstimate {
    pub fn directions(&self) -> Vec<Direction> {
        self.per_direction.iter().map(|r| r.direction.clone()).collect()
    }

    fn from_raw(raw_pp: f64, p: f64) -> Self {
        let raw_pp = raw_pp.max(0.0);
        Self { value: raw_pp.powf(1.0 / p), raw_pp, std_error: None, per_direction: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Sw,
    MaxSw,
    Dsw,
    Ebsw,
    Rpsw,
    Iwrpsw,
}

impl Variant {
    pub const ALL: [Variant; 6] = [Self::Sw, Self::MaxSw, Self::Dsw, Self::Ebsw, Self::Rpsw, Self::Iwrpsw];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Sw => "sw",
            Self::MaxSw => "max-sw",
            Self::Dsw => "dsw",
            Self::Ebsw => "ebsw",
            Self::Rpsw => "rpsw",
            Self::Iwrpsw => "iwrpsw",
        }
    }

    /// Whether the slicing distribution changes with the concentration.
    pub fn uses_kappa(&self) -> bool {
        matches!(self, Self::Dsw | Self::Rpsw | Self::Iwrpsw)
    }

    pub fn estimate(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure, cfg: &EstimatorConfig) -> Result<DistanceEstimate> {
        match self {
            Self::Sw => sw(mu, nu, cfg),
            Self::MaxSw => max_sw(mu, nu, cfg).map(|(e, _)| e),
            Self::Dsw => dsw(mu, nu, cfg),
            Self::Ebsw => ebsw_is(mu, nu, cfg),
            Self::Rpsw => rpsw(mu, nu, cfg),
            Self::Iwrpsw => iwrpsw(mu, nu, cfg),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase())
            .ok_or_else(|| invalid(format!("unknown variant {s:?}")))
    }
}

fn check_dims(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    Ok(())
}

/// `W_p^p(theta#mu, theta#nu)`.
pub fn projected_pp(mu: &DiscreteMeasure, nu: &DiscreteMeasure, theta: &Direction, p: f64) -> f64 {
    let x = project_values(mu, theta.as_slice());
    let y = project_values(nu, theta.as_slice());
    pp_cost(&x, mu.weights(), mu.is_uniform(), &y, nu.weights(), nu.is_uniform(), p)
}

pub fn projected_pp_batch(mu: &DiscreteMeasure, nu: &DiscreteMeasure, dirs: &[Direction], p: f64) -> Vec<f64> {
    dirs.par_iter().map(|t| projected_pp(mu, nu, t, p)).collect()
}

/// `W_p^p(theta#mu, theta#nu)` and its gradient in `theta`.
pub fn projected_pp_theta_grad(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    theta: &[f64],
    p: f64,
) -> Result<(f64, Vec<f64>)> {
    let x = Measure1D::new(project_values(mu, theta), mu.weights().to_vec())?;
    let y = Measure1D::new(project_values(nu, theta), nu.weights().to_vec())?;
    let cg = coupling_gradient(&x, &y, p)?;
    let mut g = vec![0.0; theta.len()];
    for (c, row) in cg.left.iter().zip(mu.rows()).chain(cg.right.iter().zip(nu.rows())) {
        if *c != 0.0 {
            for (gk, xk) in g.iter_mut().zip(row) {
                *gk += c * xk;
            }
        }
    }
    Ok((cg.value_pp, g))
}

fn records(dirs: Vec<Direction>, values: &[f64], weights: &[f64]) -> Vec<DirectionRecord> {
    dirs.into_iter()
        .zip(values)
        .zip(weights)
        .map(|((direction, &projected_pp), &weight)| DirectionRecord { direction, projected_pp, weight })
        .collect()
}

/// Equal-weight Monte Carlo average over a given direction set (the SW / RPSW /
/// DSW estimator form).
pub fn mean_on_directions(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    dirs: Vec<Direction>,
    p: f64,
    keep: bool,
) -> Result<DistanceEstimate> {
    check_dims(mu, nu)?;
    if dirs.is_empty() {
        return Err(invalid("empty direction set"));
    }
    let values = projected_pp_batch(mu, nu, &dirs, p);
    let l = values.len() as f64;
    let mean = values.iter().sum::<f64>() / l;
    let mut est = DistanceEstimate::from_raw(mean, p);
    if values.len() > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (l - 1.0);
        est.std_error = Some((var / l).sqrt());
    }
    if keep {
        est.per_direction = records(dirs, &values, &vec![1.0 / l; values.len()]);
    }
    Ok(est)
}

/// Self-normalized weights `f(v_l) / sum_j f(v_j)` via log-sum-exp.
pub fn energy_weights(values: &[f64], energy: &EnergyFunction) -> Vec<f64> {
    let logs: Vec<f64> = values.iter().map(|v| energy.log_eval(*v)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![1.0 / values.len() as f64; values.len()];
    }
    let exps: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

struct WeightedSet {
    raw: f64,
    weights: Vec<f64>,
    values: Vec<f64>,
    std_error: f64,
}

fn weighted_set(values: Vec<f64>, energy: &EnergyFunction) -> WeightedSet {
    let weights = energy_weights(&values, energy);
    let raw: f64 = values.iter().zip(&weights).map(|(v, w)| v * w).sum();
    // Delta-method standard error of a self-normalized importance estimate.
    let std_error = values.iter().zip(&weights).map(|(v, w)| (w * (v - raw)).powi(2)).sum::<f64>().sqrt();
    WeightedSet { raw, weights, values, std_error }
}

/// Importance-weighted estimate over a given direction set (the EBSW / IWRPSW
/// estimator form with one set).
pub fn weighted_on_directions(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    dirs: Vec<Direction>,
    p: f64,
    energy: &EnergyFunction,
    keep: bool,
) -> Result<DistanceEstimate> {
    check_dims(mu, nu)?;
    if dirs.is_empty() {
        return Err(invalid("empty direction set"));
    }
    let set = weighted_set(projected_pp_batch(mu, nu, &dirs, p), energy);
    let mut est = DistanceEstimate::from_raw(set.raw, p);
    est.std_error = Some(set.std_error);
    if keep {
        est.per_direction = records(dirs, &set.values, &set.weights);
    }
    Ok(est)
}

fn uniform_directions(d: usize, count: usize, seed: u64) -> Result<Vec<Direction>> {
    (0..count as u64).into_par_iter().map(|l| sample_uniform(d, &mut stream_rng(seed, l))).collect()
}

pub fn sw(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cfg: &EstimatorConfig) -> Result<DistanceEstimate> {
    cfg.validate()?;
    check_dims(mu, nu)?;
    let dirs = uniform_directions(mu.dim(), cfg.projections, cfg.seed)?;
    mean_on_directions(mu, nu, dirs, cfg.p, cfg.diagnostics)
}

/// EBSW by importance sampling with the uniform proposal; uses the same
/// directions as [`sw`] for the same seed.
pub fn ebsw_is(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cfg: &EstimatorConfig) -> Result<DistanceEstimate> {
    cfg.validate()?;
    check_dims(mu, nu)?;
    let dirs = uniform_directions(mu.dim(), cfg.projections, cfg.seed)?;
    weighted_on_directions(mu, nu, dirs, cfg.p, &cfg.energy, cfg.diagnostics)
}

pub fn rpsw(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cfg: &EstimatorConfig) -> Result<DistanceEstimate> {
    cfg.validate()?;
    check_dims(mu, nu)?;
    let dirs = sample_rpsd_batch(mu, nu, &cfg.family, cfg.projections, cfg.seed, 0)?;
    mean_on_directions(mu, nu, dirs, cfg.p, cfg.diagnostics)
}

/// IWRPSW with `H = cfg.repeats` independent sets of `L` directions; set `h`
/// uses streams `h*L .. (h+1)*L`. Direction weights are divided by `H` so they
/// sum to one over the whole estimate.
pub fn iwrpsw(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cfg: &EstimatorConfig) -> Result<DistanceEstimate> {
    cfg.validate()?;
    check_dims(mu, nu)?;
    let (l, h) = (cfg.projections, cfg.repeats);
    let mut raw = 0.0;
    let mut se2 = 0.0;
    let mut per_direction = Vec::new();
    for set in 0..h {
        let dirs = sample_rpsd_batch(mu, nu, &cfg.family, l, cfg.seed, (set * l) as u64)?;
        let ws = weighted_set(projected_pp_batch(mu, nu, &dirs, cfg.p), &cfg.energy);
        raw += ws.raw / h as f64;
        se2 += ws.std_error.powi(2);
        if cfg.diagnostics {
            let scaled: Vec<f64> = ws.weights.iter().map(|w| w / h as f64).collect();
            per_direction.extend(records(dirs, &ws.values, &scaled));
        }
    }
    let mut est = DistanceEstimate::from_raw(raw, cfg.p);
    est.std_error = Some(se2.sqrt() / h as f64);
    est.per_direction = per_direction;
    Ok(est)
}

fn step_on_sphere(x: &[f64], g: &[f64], lr: f64) -> Option<Direction> {
    Direction::normalize(x.iter().zip(g).map(|(a, b)| a + lr * b).collect()).ok()
}

/// Max-SW by projected gradient ascent. The start is the best of `L` uniform
/// candidate directions; returns the best iterate seen and its direction.
pub fn max_sw(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &EstimatorConfig,
) -> Result<(DistanceEstimate, Direction)> {
    cfg.validate()?;
    check_dims(mu, nu)?;
    let candidates = uniform_directions(mu.dim(), cfg.projections, cfg.seed)?;
    let values = projected_pp_batch(mu, nu, &candidates, cfg.p);
    let best = values.iter().enumerate().fold(0, |b, (i, v)| if *v > values[b] { i } else { b });
    max_sw_from(mu, nu, cfg, candidates[best].clone())
}

pub fn max_sw_from(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &EstimatorConfig,
    start: Direction,
) -> Result<(DistanceEstimate, Direction)> {
    let mut theta = start;
    let mut best = (f64::NEG_INFINITY, theta.clone());
    for _ in 0..cfg.optimizer.iterations {
        let (value, g) = projected_pp_theta_grad(mu, nu, theta.as_slice(), cfg.p)?;
        if value > best.0 {
            best = (value, theta.clone());
        }
        match step_on_sphere(theta.as_slice(), &g, cfg.optimizer.learning_rate) {
            Some(next) => theta = next,
            None => break,
        }
    }
    let last = projected_pp(mu, nu, &theta, cfg.p);
    if last > best.0 {
        best = (last, theta);
    }
    let mut est = DistanceEstimate::from_raw(best.0, cfg.p);
    if cfg.diagnostics {
        est.per_direction = vec![DirectionRecord { direction: best.1.clone(), projected_pp: best.0, weight: 1.0 }];
    }
    Ok((est, best.1))
}

/// Location parameter found by the DSW ascent.
pub fn dsw_location(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cfg: &EstimatorConfig) -> Result<Direction> {
    let kappa = match cfg.family {
        SliceFamily::PowerSpherical { kappa } => kappa,
        other => return Err(Error::Unsupported(format!("DSW with the {} family (needs a reparameterizable law)", other.name()))),
    };
    let d = mu.dim();
    let diff: Vec<f64> = mu.mean().iter().zip(nu.mean()).map(|(a, b)| a - b).collect();
    let mut loc = match Direction::normalize(diff) {
        Ok(dir) => dir,
        Err(_) => sample_uniform(d, &mut stream_rng(cfg.seed, u64::MAX))?,
    };
    let l = cfg.projections;
    for step in 0..cfg.optimizer.iterations {
        let step_seed = derive_seed(cfg.seed, step as u64 + 1);
        let grads: Vec<Vec<f64>> = (0..l as u64)
            .into_par_iter()
            .map(|k| -> Result<Vec<f64>> {
                let noise = sample_ps_noise(d, kappa, &mut stream_rng(step_seed, k))?;
                let theta = ps_from_noise(&loc, &noise)?;
                let (_, g) = projected_pp_theta_grad(mu, nu, theta.as_slice(), cfg.p)?;
                Ok(ps_loc_vjp(&loc, &noise, &g))
            })
            .collect::<Result<_>>()?;
        let mut g = vec![0.0; d];
        for gl in &grads {
            for (a, b) in g.iter_mut().zip(gl) {
                *a += b / l as f64;
            }
        }
        match step_on_sphere(loc.as_slice(), &g, cfg.optimizer.learning_rate) {
            Some(next) => loc = next,
            None => break,
        }
    }
    Ok(loc)
}

/// DSW restricted to Power Spherical slicing distributions with a learned
/// location: `T` reparameterized ascent steps, then an `L`-sample estimate.
pub fn dsw(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cfg: &EstimatorConfig) -> Result<DistanceEstimate> {
    cfg.validate()?;
    check_dims(mu, nu)?;
    let loc = dsw_location(mu, nu, cfg)?;
    let dirs: Vec<Direction> = (0..cfg.projections as u64)
        .into_par_iter()
        .map(|l| cfg.family.sample(&loc, &mut stream_rng(cfg.seed, l)))
        .collect::<Result<_>>()?;
    mean_on_directions(mu, nu, dirs, cfg.p, cfg.diagnostics)
}

/// Directions and (constant) weights defining a detached estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicingPlan {
    pub directions: Vec<Direction>,
    pub weights: Vec<f64>,
}

impl SlicingPlan {
    pub fn from_estimate(est: &DistanceEstimate) -> Self {
        Self {
            directions: est.per_direction.iter().map(|r| r.direction.clone()).collect(),
            weights: est.per_direction.iter().map(|r| r.weight).collect(),
        }
    }

    /// `sum_l w_l W_p^p(theta_l#mu, theta_l#nu)` with the plan held fixed.
    pub fn evaluate(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> f64 {
        projected_pp_batch(mu, nu, &self.directions, p).iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowGradient {
    /// Row-major `n x d` gradient with respect to the particles.
    pub grad: Vec<f64>,
    pub value_pp: f64,
    pub plan: SlicingPlan,
    pub degenerate: bool,
}

/// Gradient of the estimated `D^p(mu_X, nu)` in the particle locations `X`.
///
/// Directions (and importance weights) come from a detached copy of the
/// particles and are treated as constants.
pub fn flow_grad(
    variant: Variant,
    particles: &DiscreteMeasure,
    target: &DiscreteMeasure,
    cfg: &EstimatorConfig,
) -> Result<FlowGradient> {
    check_dims(particles, target)?;
    if !particles.is_uniform() {
        return Err(invalid("flow particles must carry equal weights"));
    }
    let cfg = EstimatorConfig { diagnostics: true, ..cfg.clone() };
    let est = variant.estimate(particles, target, &cfg)?;
    let plan = SlicingPlan::from_estimate(&est);
    plan_gradient(particles, target, plan, cfg.p)
}

/// Gradient of [`SlicingPlan::evaluate`] with respect to `mu`'s locations.
pub fn plan_gradient(mu: &DiscreteMeasure, nu: &DiscreteMeasure, plan: SlicingPlan, p: f64) -> Result<FlowGradient> {
    let d = mu.dim();
    let parts: Vec<(Vec<f64>, f64, bool)> = plan
        .directions
        .par_iter()
        .zip(&plan.weights)
        .map(|(theta, w)| -> Result<(Vec<f64>, f64, bool)> {
            let x = Measure1D::new(project_values(mu, theta.as_slice()), mu.weights().to_vec())?;
            let y = Measure1D::new(project_values(nu, theta.as_slice()), nu.weights().to_vec())?;
            let cg = coupling_gradient(&x, &y, p)?;
            let mut g = vec![0.0; mu.len() * d];
            for (i, c) in cg.left.iter().enumerate() {
                for (k, t) in theta.as_slice().iter().enumerate() {
                    g[i * d + k] = w * c * t;
                }
            }
            Ok((g, w * cg.value_pp, cg.degenerate))
        })
        .collect::<Result<_>>()?;
    let mut grad = vec![0.0; mu.len() * d];
    let mut value = 0.0;
    let mut degenerate = false;
    for (g, v, deg) in parts {
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        value += v;
        degenerate |= deg;
    }
    Ok(FlowGradient { grad, value_pp: value, plan, degenerate })
}
