//! Meta-training of the prior hyperparameters.
//!
//! Both methods minimize the mean per-task negative marginal log-likelihood
//! with Adam on `(theta, ln phi1, ln phi2)` using central finite-difference
//! gradients. The trust-constrained method adds a squared-hinge penalty on
//! sigmoid-smoothed inclusion rates and, after each round, certifies the
//! iterate with the exact 0-1 inclusion statistics and the optimized
//! concentration bound. If certification fails the penalty weight grows and
//! another round starts.
//!
//! Internally every task is reduced, for a fixed `phi2`, to a handful of
//! Cholesky-derived vectors (`Shape`) from which the likelihood and both
//! interval families follow in `O(t)` for any `(theta, phi1)`. This works
//! because the jittered Gram matrix is `phi1^2 (E + jitter I)` with `E`
//! depending on `phi2` alone.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    compute_inclusion_stats, feasibility_sizes, maximize_gamma_sizes, required_mean, BoundSpec,
    InclusionStats, SampleSizes,
};
use crate::error::{Error, Result};
use crate::gp::{correlation_matrix, distance_matrix, factor_with_jitter, HyperParams, Jitter};
use crate::taskgen::{MetaDataset, TaskData};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub step_size: f64,
    pub fd_step: f64,
    pub smoothing_tau: f64,
    pub penalty_weight: f64,
    pub penalty_growth: f64,
    pub max_outer_rounds: usize,
    pub inclusion_buffer: f64,
    /// `None` starts from [`profile_init`].
    pub init: Option<HyperParams>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 1500,
            step_size: 0.02,
            fd_step: 1e-4,
            smoothing_tau: 0.1,
            penalty_weight: 10.0,
            penalty_growth: 5.0,
            max_outer_rounds: 6,
            inclusion_buffer: 0.02,
            init: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step_size must be positive");
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return bad("fd_step must be positive");
        }
        if !(self.smoothing_tau > 0.0 && self.smoothing_tau.is_finite()) {
            return bad("smoothing_tau must be positive");
        }
        if !(self.penalty_weight >= 0.0 && self.penalty_weight.is_finite()) {
            return bad("penalty_weight must be non-negative");
        }
        if !(self.penalty_growth > 1.0 && self.penalty_growth.is_finite()) {
            return bad("penalty_growth must exceed 1");
        }
        if self.max_outer_rounds == 0 {
            return bad("max_outer_rounds must be at least 1");
        }
        if !(self.inclusion_buffer >= 0.0 && self.inclusion_buffer.is_finite()) {
            return bad("inclusion_buffer must be non-negative");
        }
        if let Some(h) = &self.init {
            h.validate()?;
        }
        Ok(())
    }
}

/// Moment-matched mean and amplitude: `theta` and `phi1` are the mean and
/// standard deviation of every output in the dataset, `phi2 = 1`.
pub fn moment_init(meta: &MetaDataset) -> Result<HyperParams> {
    let ys: Vec<f64> = meta.all_outputs().collect();
    if ys.is_empty() {
        return HyperParams::new(0.0, 1.0, 1.0);
    }
    let n = ys.len() as f64;
    let m = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / n;
    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    HyperParams::new(m, sd, 1.0)
}

/// `ln phi2` grid scanned by [`profile_init`].
pub const INIT_LOG_PHI2_GRID: (f64, f64, usize) = (-4.0, 14.0, 37);

/// Starting point used when the config gives none: `theta` from
/// [`moment_init`], then `phi2` from a coarse log-grid scan of the mean
/// negative log-likelihood with `phi1` profiled out in closed form
/// (`phi1^2 = mean_i r_i^T E_i^{-1} r_i / mean_i t_i`).
///
/// Noiseless data with a relative jitter leaves a spurious basin at long
/// lengthscales and huge amplitudes, where descent from `phi2 = 1` stalls.
pub fn profile_init(meta: &MetaDataset) -> Result<HyperParams> {
    let moment = moment_init(meta)?;
    let prepared = Prepared::new(meta, 1.0, 1.0)?;
    let theta = moment.theta;
    let (lo, hi, k) = INIT_LOG_PHI2_GRID;
    let mut best: Option<(f64, HyperParams)> = None;
    for i in 0..k {
        let phi2 = (lo + (hi - lo) * i as f64 / (k - 1) as f64).exp();
        let shapes = prepared.shapes(phi2)?;
        let (mut quad, mut t) = (0.0, 0.0);
        for s in &shapes {
            quad += s.quad(theta);
            t += s.z_y.len() as f64;
        }
        if !(quad > 0.0 && quad.is_finite()) {
            continue;
        }
        let phi1 = (quad / t).sqrt();
        let nll = prepared.evaluate(&shapes, theta, phi1).nll;
        if nll.is_finite() && best.as_ref().map_or(true, |(b, _)| nll < *b) {
            best = Some((nll, HyperParams::new(theta, phi1, phi2)?));
        }
    }
    Ok(best.map_or(moment, |(_, h)| h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Prior,
    Posterior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    TrustBayes,
    MetaPrior,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::TrustBayes => "trust-bayes",
            Method::MetaPrior => "meta-prior",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub nmll: f64,
    pub smoothed_prior_incl: f64,
    pub smoothed_post_incl: f64,
    pub exact_prior_incl: f64,
    pub exact_post_incl: f64,
    pub p1_star: f64,
    pub p2_star: f64,
    pub hyper: HyperParams,
}

/// Outcome of the exact certification of one set of hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Certification {
    pub certified: bool,
    pub p1_star: f64,
    pub p2_star: f64,
    pub gamma1_star: f64,
    pub gamma2_star: f64,
    pub mean_prior: f64,
    pub mean_posterior: f64,
}

pub fn certify(hyper: &HyperParams, meta: &MetaDataset, spec: &BoundSpec) -> Result<Certification> {
    let stats = compute_inclusion_stats(hyper, meta, spec)?;
    Ok(certify_stats(&stats, spec))
}

pub fn certify_stats(stats: &InclusionStats, spec: &BoundSpec) -> Certification {
    let sizes = stats.sizes();
    let (m1, m2) = (stats.mean_prior(), stats.mean_posterior());
    let g1 = maximize_gamma_sizes(m1, &sizes, spec.gamma_min);
    let g2 = maximize_gamma_sizes(m2, &sizes, spec.gamma_min);
    Certification {
        certified: g1.p >= spec.target() && g2.p >= spec.target(),
        p1_star: g1.p,
        p2_star: g2.p,
        gamma1_star: g1.gamma,
        gamma2_star: g2.gamma,
        mean_prior: m1,
        mean_posterior: m2,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub method: Method,
    pub records: Vec<StepRecord>,
    pub rounds: usize,
    pub final_penalty_weight: f64,
    pub init_certification: Certification,
    /// Exact certification of the returned hyperparameters.
    pub certification: Certification,
}

impl TrainLog {
    pub fn certified(&self) -> bool {
        self.certification.certified
    }
}

// ---------------------------------------------------------------------------
// Per-task reduction

struct TaskCache {
    full_dist: DMatrix<f64>,
    full_y: DVector<f64>,
    train_dist: DMatrix<f64>,
    train_y: DVector<f64>,
    /// `t_tr x t_eval` squared distances between training and eval inputs.
    cross_dist: DMatrix<f64>,
    eval_y: Vec<f64>,
    task_id: u64,
}

impl TaskCache {
    fn new(data: &TaskData) -> Result<Self> {
        let tr = data.train_inputs();
        let ev = data.eval_inputs();
        let mut cross = DMatrix::zeros(tr.len(), ev.len());
        for (j, xe) in ev.iter().enumerate() {
            for (i, xt) in tr.iter().enumerate() {
                cross[(i, j)] = crate::gp::squared_distance(xt, xe)?;
            }
        }
        Ok(TaskCache {
            full_dist: distance_matrix(&data.inputs)?,
            full_y: DVector::from_column_slice(&data.outputs),
            train_dist: distance_matrix(tr)?,
            train_y: DVector::from_column_slice(data.train_outputs()),
            cross_dist: cross,
            eval_y: data.eval_outputs().to_vec(),
            task_id: data.task_id,
        })
    }
}

/// Everything about one task that depends on `phi2` only.
struct Shape {
    /// `L^{-1} y` and `L^{-1} 1` for the full-data factor `L L^T = E + jI`.
    z_y: DVector<f64>,
    z_1: DVector<f64>,
    logdet_unit: f64,
    /// Per eval point: `a^T y_tr`, `a^T 1` with `a = B^{-1} e(x)`, and the
    /// unit-amplitude posterior variance `1 - e(x)^T B^{-1} e(x)`.
    post_ay: Vec<f64>,
    post_a1: Vec<f64>,
    post_var_unit: Vec<f64>,
}

impl Shape {
    fn new(c: &TaskCache, phi2: f64, jitter: &Jitter) -> Result<Self> {
        let t = c.full_y.len();
        let (z_y, z_1, logdet_unit) = if t > 0 {
            let corr = correlation_matrix(&c.full_dist, phi2);
            let (chol, _) = factor_with_jitter(&corr, jitter)?;
            let l = chol.l_dirty();
            let solve = |v: &DVector<f64>| {
                l.solve_lower_triangular(v)
                    .ok_or_else(|| Error::Numerical("triangular solve failed".into()))
            };
            let z_y = solve(&c.full_y)?;
            let z_1 = solve(&DVector::from_element(t, 1.0))?;
            let logdet: f64 = (0..t).map(|i| 2.0 * l[(i, i)].ln()).sum();
            (z_y, z_1, logdet)
        } else {
            (DVector::zeros(0), DVector::zeros(0), 0.0)
        };

        let n_eval = c.eval_y.len();
        let t_tr = c.train_y.len();
        let (post_ay, post_a1, post_var_unit) = if t_tr == 0 {
            (vec![0.0; n_eval], vec![0.0; n_eval], vec![1.0; n_eval])
        } else {
            let corr = correlation_matrix(&c.train_dist, phi2);
            let (chol, _) = factor_with_jitter(&corr, jitter)?;
            let cross = correlation_matrix(&c.cross_dist, phi2);
            let v = chol
                .l_dirty()
                .solve_lower_triangular(&cross)
                .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
            let a = chol.solve(&cross);
            let mut ay = Vec::with_capacity(n_eval);
            let mut a1 = Vec::with_capacity(n_eval);
            let mut var = Vec::with_capacity(n_eval);
            for j in 0..n_eval {
                let col = a.column(j);
                ay.push(col.dot(&c.train_y));
                a1.push(col.sum());
                var.push(1.0 - v.column(j).norm_squared());
            }
            (ay, a1, var)
        };
        Ok(Shape {
            z_y,
            z_1,
            logdet_unit,
            post_ay,
            post_a1,
            post_var_unit,
        })
    }

    /// `r^T (E + jI)^{-1} r` with `r = y - theta`.
    fn quad(&self, theta: f64) -> f64 {
        self.z_y
            .iter()
            .zip(self.z_1.iter())
            .map(|(zy, z1)| {
                let r = zy - theta * z1;
                r * r
            })
            .sum()
    }

    fn nll(&self, theta: f64, phi1: f64) -> f64 {
        let t = self.z_y.len() as f64;
        0.5 * self.quad(theta) / (phi1 * phi1) + 0.5 * (self.logdet_unit + 2.0 * t * phi1.ln()) + 0.5 * t * (2.0 * PI).ln()
    }

    fn posterior(&self, k: usize, theta: f64, phi1: f64) -> (f64, f64) {
        let mean = theta + self.post_ay[k] - theta * self.post_a1[k];
        let std = phi1 * self.post_var_unit[k].max(0.0).sqrt();
        (mean, std)
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Smoothed indicator of `|value - center| <= q std`.
fn soft_inclusion(value: f64, center: f64, std: f64, q: f64, tau: f64, floor: f64) -> f64 {
    let s = std.max(floor);
    sigmoid((q * s - (value - center).abs()) / (tau * s))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Evaluation {
    nll: f64,
    smoothed_prior: f64,
    smoothed_post: f64,
    exact_prior: f64,
    exact_post: f64,
}

fn evaluate(
    caches: &[TaskCache],
    shapes: &[Shape],
    theta: f64,
    phi1: f64,
    q: f64,
    tau: f64,
) -> Evaluation {
    let floor = 1e-12 * phi1;
    let mut acc = Evaluation {
        nll: 0.0,
        smoothed_prior: 0.0,
        smoothed_post: 0.0,
        exact_prior: 0.0,
        exact_post: 0.0,
    };
    for (c, s) in caches.iter().zip(shapes) {
        acc.nll += s.nll(theta, phi1);
        let n = c.eval_y.len() as f64;
        let (mut sp, mut sq, mut ep, mut eq) = (0.0, 0.0, 0.0, 0.0);
        for (k, &y) in c.eval_y.iter().enumerate() {
            sp += soft_inclusion(y, theta, phi1, q, tau, floor);
            ep += f64::from(u8::from((y - theta).abs() <= q * phi1));
            let (m, sd) = s.posterior(k, theta, phi1);
            sq += soft_inclusion(y, m, sd, q, tau, floor);
            eq += f64::from(u8::from((y - m).abs() <= q * sd));
        }
        if n > 0.0 {
            acc.smoothed_prior += sp / n;
            acc.smoothed_post += sq / n;
            acc.exact_prior += ep / n;
            acc.exact_post += eq / n;
        }
    }
    let n = caches.len() as f64;
    acc.nll /= n;
    acc.smoothed_prior /= n;
    acc.smoothed_post /= n;
    acc.exact_prior /= n;
    acc.exact_post /= n;
    acc
}

/// `weight * (max(target - s1, 0)^2 + max(target - s2, 0)^2)`.
pub fn inclusion_penalty(s1: f64, s2: f64, target: f64, weight: f64) -> f64 {
    let h1 = (target - s1).max(0.0);
    let h2 = (target - s2).max(0.0);
    weight * (h1 * h1 + h2 * h2)
}

/// Empirical mean inclusion the penalty pushes toward: the smallest mean
/// whose optimized bound certifies `1 - delta`, plus the buffer, capped at 1.
pub fn penalty_target(meta: &MetaDataset, spec: &BoundSpec, buffer: f64) -> f64 {
    let sizes = SampleSizes::from_t_evals(&meta.t_evals());
    let base = required_mean(&sizes, spec.delta, spec.gamma_min).unwrap_or(1.0);
    (base + buffer).min(1.0)
}

struct Prepared {
    caches: Vec<TaskCache>,
    q: f64,
    tau: f64,
    jitter: Jitter,
}

impl Prepared {
    fn new(meta: &MetaDataset, q: f64, tau: f64) -> Result<Self> {
        let caches = meta
            .tasks
            .par_iter()
            .map(|e| TaskCache::new(&e.data).map_err(|err| err.in_task(e.data.task_id)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Prepared {
            caches,
            q,
            tau,
            jitter: Jitter::default(),
        })
    }

    fn shapes(&self, phi2: f64) -> Result<Vec<Shape>> {
        self.caches
            .par_iter()
            .map(|c| Shape::new(c, phi2, &self.jitter).map_err(|e| e.in_task(c.task_id)))
            .collect()
    }

    fn evaluate(&self, shapes: &[Shape], theta: f64, phi1: f64) -> Evaluation {
        evaluate(&self.caches, shapes, theta, phi1, self.q, self.tau)
    }

    fn evaluate_at(&self, hyper: &HyperParams) -> Result<Evaluation> {
        let shapes = self.shapes(hyper.phi2)?;
        Ok(self.evaluate(&shapes, hyper.theta, hyper.phi1))
    }

    /// Objective value, its central-difference gradient in
    /// `(theta, ln phi1, ln phi2)`, and the diagnostics at the center.
    fn value_and_gradient(
        &self,
        x: [f64; 3],
        h: f64,
        target: f64,
        weight: f64,
    ) -> Result<(f64, [f64; 3], Evaluation)> {
        let obj = |e: &Evaluation| e.nll + inclusion_penalty(e.smoothed_prior, e.smoothed_post, target, weight);
        let [theta, lp1, lp2] = x;
        let phi1 = lp1.exp();
        let center = self.shapes(lp2.exp())?;
        let e0 = self.evaluate(&center, theta, phi1);
        let g_theta = (obj(&self.evaluate(&center, theta + h, phi1))
            - obj(&self.evaluate(&center, theta - h, phi1)))
            / (2.0 * h);
        let g_phi1 = (obj(&self.evaluate(&center, theta, (lp1 + h).exp()))
            - obj(&self.evaluate(&center, theta, (lp1 - h).exp())))
            / (2.0 * h);
        drop(center);
        let plus = self.shapes((lp2 + h).exp())?;
        let f_plus = obj(&self.evaluate(&plus, theta, phi1));
        drop(plus);
        let minus = self.shapes((lp2 - h).exp())?;
        let f_minus = obj(&self.evaluate(&minus, theta, phi1));
        let g_phi2 = (f_plus - f_minus) / (2.0 * h);
        Ok((obj(&e0), [g_theta, g_phi1, g_phi2], e0))
    }
}

/// Mean over tasks of the mean over evaluation points of
/// `sigmoid((q s(x) - |f(x) - m(x)|) / (tau s(x)))`.
pub fn smoothed_inclusion(
    hyper: &HyperParams,
    meta: &MetaDataset,
    q: f64,
    tau: f64,
    which: Which,
) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidInput("tau must be positive".into()));
    }
    hyper.validate()?;
    let e = Prepared::new(meta, q, tau)?.evaluate_at(hyper)?;
    Ok(match which {
        Which::Prior => e.smoothed_prior,
        Which::Posterior => e.smoothed_post,
    })
}

/// Mean per-task negative marginal log-likelihood over each task's full
/// dataset.
pub fn mean_neg_mll(hyper: &HyperParams, meta: &MetaDataset) -> Result<f64> {
    hyper.validate()?;
    Ok(Prepared::new(meta, 1.0, 1.0)?.evaluate_at(hyper)?.nll)
}

pub fn trust_bayes_objective(
    hyper: &HyperParams,
    meta: &MetaDataset,
    spec: &BoundSpec,
    cfg: &TrainConfig,
) -> Result<f64> {
    cfg.validate()?;
    hyper.validate()?;
    let target = penalty_target(meta, spec, cfg.inclusion_buffer);
    let e = Prepared::new(meta, spec.q, cfg.smoothing_tau)?.evaluate_at(hyper)?;
    Ok(e.nll + inclusion_penalty(e.smoothed_prior, e.smoothed_post, target, cfg.penalty_weight))
}

/// The optimizer's finite-difference gradient of [`trust_bayes_objective`]
/// in `(theta, ln phi1, ln phi2)` with step `h`.
pub fn objective_gradient(
    hyper: &HyperParams,
    meta: &MetaDataset,
    spec: &BoundSpec,
    cfg: &TrainConfig,
    h: f64,
) -> Result<[f64; 3]> {
    cfg.validate()?;
    let target = penalty_target(meta, spec, cfg.inclusion_buffer);
    let p = Prepared::new(meta, spec.q, cfg.smoothing_tau)?;
    Ok(p.value_and_gradient(hyper.to_vector(), h, target, cfg.penalty_weight)?.1)
}

struct Adam {
    m: [f64; 3],
    v: [f64; 3],
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new() -> Self {
        Adam {
            m: [0.0; 3],
            v: [0.0; 3],
            t: 0,
        }
    }

    fn step(&mut self, x: &mut [f64; 3], g: &[f64; 3], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..3 {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g[i] * g[i];
            x[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

fn run(
    meta: &MetaDataset,
    spec: &BoundSpec,
    cfg: &TrainConfig,
    method: Method,
) -> Result<(HyperParams, TrainLog)> {
    let init = match cfg.init {
        Some(h) => h,
        None => profile_init(meta)?,
    };
    let (mut weight, rounds) = match method {
        Method::TrustBayes => (cfg.penalty_weight, cfg.max_outer_rounds),
        Method::MetaPrior => (0.0, 1),
    };
    let target = penalty_target(meta, spec, cfg.inclusion_buffer);
    let prepared = Prepared::new(meta, spec.q, cfg.smoothing_tau)?;
    let sizes = SampleSizes::from_t_evals(&meta.t_evals());

    let init_certification = certify(&init, meta, spec)?;
    let mut x = init.to_vector();
    let mut records = Vec::with_capacity(cfg.steps * rounds);
    let mut certification = init_certification.clone();
    let mut rounds_run = 0;
    for round in 0..rounds {
        if round > 0 {
            weight *= cfg.penalty_growth;
        }
        rounds_run = round + 1;
        let mut adam = Adam::new();
        for _ in 0..cfg.steps {
            let hyper = HyperParams::from_vector(x)?;
            let (_, grad, e) = prepared.value_and_gradient(x, cfg.fd_step, target, weight)?;
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite gradient {grad:?} at step {}",
                    records.len()
                )));
            }
            records.push(StepRecord {
                step: records.len(),
                nmll: e.nll,
                smoothed_prior_incl: e.smoothed_prior,
                smoothed_post_incl: e.smoothed_post,
                exact_prior_incl: e.exact_prior,
                exact_post_incl: e.exact_post,
                p1_star: maximize_gamma_sizes(e.exact_prior, &sizes, spec.gamma_min).p,
                p2_star: maximize_gamma_sizes(e.exact_post, &sizes, spec.gamma_min).p,
                hyper,
            });
            adam.step(&mut x, &grad, cfg.step_size);
        }
        let hyper = HyperParams::from_vector(x)?;
        certification = certify(&hyper, meta, spec)?;
        if method == Method::TrustBayes && certification.certified {
            break;
        }
    }
    let hyper = HyperParams::from_vector(x)?;
    Ok((
        hyper,
        TrainLog {
            method,
            records,
            rounds: rounds_run,
            final_penalty_weight: weight,
            init_certification,
            certification,
        },
    ))
}

/// Trust-constrained meta-training. Refuses to start when even perfect
/// empirical inclusion could not certify `1 - delta` with this dataset's
/// sizes; otherwise returns the last iterate and a log whose certification
/// says whether both bounds reached `1 - delta`.
pub fn train_trust_bayes(
    meta: &MetaDataset,
    spec: &BoundSpec,
    cfg: &TrainConfig,
) -> Result<(HyperParams, TrainLog)> {
    spec.validate()?;
    cfg.validate()?;
    let sizes = SampleSizes::from_t_evals(&meta.t_evals());
    let f = feasibility_sizes(&sizes, spec.delta);
    if !f.feasible {
        return Err(Error::Infeasible {
            n: meta.n(),
            delta: spec.delta,
            best: f.p_star,
            required: spec.target(),
            margin: f.margin,
        });
    }
    run(meta, spec, cfg, Method::TrustBayes)
}

/// Unconstrained baseline: the same optimizer on the likelihood alone, one
/// round. `spec` only feeds the inclusion diagnostics in the log.
pub fn train_meta_prior(
    meta: &MetaDataset,
    spec: &BoundSpec,
    cfg: &TrainConfig,
) -> Result<(HyperParams, TrainLog)> {
    spec.validate()?;
    cfg.validate()?;
    run(meta, spec, cfg, Method::MetaPrior)
}
