//! Certified lower bounds on interval inclusion probabilities.
//!
//! For a fixed `gamma` in `(0, 0.5]` the bound on the population inclusion
//! probability is
//!
//! ```text
//! p(gamma) = (1 - 2 gamma) * ( mean_c
//!            - sqrt(log(2/gamma) * sum_i 1/t_eval_i / (2 n^2))
//!            - sqrt(log(2/gamma) / (2 n)) )
//! ```
//!
//! where `mean_c` is the average over tasks of the per-task empirical
//! inclusion rate on the evaluation split. The certified value is the
//! maximum of `p` over `gamma`.

use rand::Rng;
use rand_distr::{Beta, Binomial, Distribution};
use rayon::prelude::*;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{fit_posterior, prior_interval, HyperParams, Interval, Jitter};
use crate::rng;
use crate::taskgen::{MetaDataset, TaskData};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundSpec {
    pub delta: f64,
    pub q: f64,
    pub gamma_min: f64,
}

impl Default for BoundSpec {
    fn default() -> Self {
        BoundSpec {
            delta: 0.1,
            q: 1.64,
            gamma_min: 1e-6,
        }
    }
}

impl BoundSpec {
    pub fn new(delta: f64, q: f64) -> Result<Self> {
        let s = BoundSpec {
            delta,
            q,
            ..Default::default()
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::InvalidInput(format!("delta {} not in [0, 1]", self.delta)));
        }
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::InvalidInput(format!("q {} must be positive", self.q)));
        }
        if !(self.gamma_min > 0.0 && self.gamma_min < 0.5) {
            return Err(Error::InvalidInput(format!(
                "gamma_min {} not in (0, 0.5)",
                self.gamma_min
            )));
        }
        Ok(())
    }

    /// `1 - delta`, the inclusion level the bound must certify.
    pub fn target(&self) -> f64 {
        1.0 - self.delta
    }
}

/// Per-task empirical inclusion rates on the evaluation splits.
#[derive(Debug, Clone, PartialEq)]
pub struct InclusionStats {
    pub per_task_prior: Vec<f64>,
    pub per_task_posterior: Vec<f64>,
    pub t_evals: Vec<usize>,
    pub n: usize,
}

impl InclusionStats {
    pub fn mean_prior(&self) -> f64 {
        mean(&self.per_task_prior)
    }

    pub fn mean_posterior(&self) -> f64 {
        mean(&self.per_task_posterior)
    }

    pub fn sizes(&self) -> SampleSizes {
        SampleSizes::from_t_evals(&self.t_evals)
    }
}

/// Sequential left-to-right mean; the fixed order keeps results identical
/// for any thread count.
pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Closed-interval 0-1 inclusion.
pub fn inclusion_loss(value: f64, interval: &Interval) -> u8 {
    u8::from(interval.contains(value))
}

/// Inclusion rates and squared error of one task's evaluation split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskInclusion {
    pub prior: f64,
    pub posterior: f64,
    pub mse: f64,
}

/// Fits the posterior on the training prefix and scores every point of the
/// evaluation suffix against the prior and posterior intervals.
pub fn task_inclusion(hyper: &HyperParams, data: &TaskData, q: f64) -> Result<TaskInclusion> {
    let t_eval = data.t_eval();
    if t_eval == 0 {
        return Err(Error::InvalidInput("task has no evaluation points".into()).in_task(data.task_id));
    }
    let post = fit_posterior(hyper, data.train_inputs(), data.train_outputs(), &Jitter::default())
        .map_err(|e| e.in_task(data.task_id))?;
    let mut prior_hits = 0usize;
    let mut post_hits = 0usize;
    let mut sse = 0.0;
    for (x, &y) in data.eval_inputs().iter().zip(data.eval_outputs()) {
        prior_hits += inclusion_loss(y, &prior_interval(hyper, x, q)) as usize;
        let (m, v) = post.mean_var(x).map_err(|e| e.in_task(data.task_id))?;
        post_hits += inclusion_loss(y, &Interval::centered(m, v.sqrt(), q)) as usize;
        sse += (y - m) * (y - m);
    }
    let t = t_eval as f64;
    Ok(TaskInclusion {
        prior: prior_hits as f64 / t,
        posterior: post_hits as f64 / t,
        mse: sse / t,
    })
}

pub fn compute_inclusion_stats(
    hyper: &HyperParams,
    meta: &MetaDataset,
    spec: &BoundSpec,
) -> Result<InclusionStats> {
    let per_task: Vec<TaskInclusion> = meta
        .tasks
        .par_iter()
        .map(|e| task_inclusion(hyper, &e.data, spec.q))
        .collect::<Result<_>>()?;
    Ok(InclusionStats {
        per_task_prior: per_task.iter().map(|t| t.prior).collect(),
        per_task_posterior: per_task.iter().map(|t| t.posterior).collect(),
        t_evals: meta.t_evals(),
        n: meta.n(),
    })
}

/// `n` and `sum_i 1/t_eval_i`, all the bound needs from the split sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSizes {
    pub n: f64,
    pub inv_t_sum: f64,
}

impl SampleSizes {
    pub fn from_t_evals(t_evals: &[usize]) -> Self {
        SampleSizes {
            n: t_evals.len() as f64,
            inv_t_sum: t_evals.iter().map(|&t| 1.0 / t as f64).sum(),
        }
    }

    pub fn uniform(n: u64, t_eval: u64) -> Self {
        SampleSizes {
            n: n as f64,
            inv_t_sum: n as f64 / t_eval as f64,
        }
    }

    /// Total deviation subtracted from the empirical mean at `gamma`.
    pub fn slack(&self, gamma: f64) -> f64 {
        let l = (2.0 / gamma).ln();
        (l * self.inv_t_sum / (2.0 * self.n * self.n)).sqrt() + (l / (2.0 * self.n)).sqrt()
    }

    pub fn bound(&self, mean_c: f64, gamma: f64) -> f64 {
        (1.0 - 2.0 * gamma) * (mean_c - self.slack(gamma))
    }
}

pub fn p_bound(mean_c: f64, t_evals: &[usize], n: usize, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 0.5) {
        return Err(Error::InvalidInput(format!("gamma {gamma} not in (0, 0.5]")));
    }
    if !(0.0..=1.0).contains(&mean_c) {
        return Err(Error::InvalidInput(format!("mean {mean_c} not in [0, 1]")));
    }
    if n == 0 || t_evals.len() != n || t_evals.contains(&0) {
        return Err(Error::InvalidInput(format!(
            "need n = {n} >= 1 positive t_eval values, got {}",
            t_evals.len()
        )));
    }
    Ok(SampleSizes::from_t_evals(t_evals).bound(mean_c, gamma))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaOpt {
    pub gamma: f64,
    pub p: f64,
}

const GRID_POINTS: usize = 512;
const GOLDEN_ITERS: usize = 100;

/// Maximizes the bound over `gamma` in `[gamma_min, 0.5]`: a log-spaced grid
/// scan followed by golden-section search on the bracketing cells.
pub fn maximize_gamma_sizes(mean_c: f64, sizes: &SampleSizes, gamma_min: f64) -> GammaOpt {
    let lo = gamma_min.ln();
    let hi = 0.5f64.ln();
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let gamma_at = |k: usize| {
        if k == GRID_POINTS - 1 {
            0.5
        } else {
            (lo + step * k as f64).exp()
        }
    };
    let mut best = 0;
    let mut best_p = f64::NEG_INFINITY;
    for k in 0..GRID_POINTS {
        let p = sizes.bound(mean_c, gamma_at(k));
        if p > best_p {
            best_p = p;
            best = k;
        }
    }
    let grid = GammaOpt {
        gamma: gamma_at(best),
        p: best_p,
    };

    // golden section in log-gamma on [best - 1, best + 1]
    let mut a = gamma_at(best.saturating_sub(1)).ln();
    let mut b = gamma_at((best + 1).min(GRID_POINTS - 1)).ln();
    let f = |lg: f64| sizes.bound(mean_c, lg.exp().min(0.5));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..GOLDEN_ITERS {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let (lg, p) = if fc >= fd { (c, fc) } else { (d, fd) };
    if p > grid.p {
        GammaOpt {
            gamma: lg.exp().min(0.5),
            p,
        }
    } else {
        grid
    }
}

pub fn maximize_gamma(mean_c: f64, t_evals: &[usize], n: usize, spec: &BoundSpec) -> Result<GammaOpt> {
    // validates the domain once at an interior point
    p_bound(mean_c, t_evals, n, 0.25)?;
    Ok(maximize_gamma_sizes(
        mean_c,
        &SampleSizes::from_t_evals(t_evals),
        spec.gamma_min,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    pub margin: f64,
    pub gamma_star: f64,
    pub p_star: f64,
}

pub fn feasibility_sizes(sizes: &SampleSizes, delta: f64) -> Feasibility {
    let opt = maximize_gamma_sizes(1.0, sizes, BoundSpec::default().gamma_min);
    let margin = opt.p - (1.0 - delta);
    Feasibility {
        feasible: margin >= 0.0,
        margin,
        gamma_star: opt.gamma,
        p_star: opt.p,
    }
}

/// Whether perfect empirical inclusion could certify `1 - delta` with these
/// sample sizes.
pub fn feasibility_check(n: usize, t_evals: &[usize], delta: f64) -> Result<Feasibility> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidInput(format!("delta {delta} not in [0, 1]")));
    }
    p_bound(1.0, t_evals, n, 0.25)?;
    Ok(feasibility_sizes(&SampleSizes::from_t_evals(t_evals), delta))
}

pub const MAX_TASKS: u64 = 1 << 40;

/// Smallest task count certifying `delta` with `t_eval` evaluation points
/// per task.
pub fn min_tasks_for_delta(delta: f64, t_eval: u64) -> Result<u64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta {delta} not in (0, 1)")));
    }
    if t_eval == 0 {
        return Err(Error::InvalidInput("t_eval must be at least 1".into()));
    }
    let feasible = |n: u64| feasibility_sizes(&SampleSizes::uniform(n, t_eval), delta).feasible;
    let mut hi = 1u64;
    while !feasible(hi) {
        if hi >= MAX_TASKS {
            return Err(Error::NotFound {
                delta,
                limit: MAX_TASKS,
            });
        }
        hi *= 2;
    }
    let mut lo = hi / 2; // infeasible, or 0
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Smallest empirical mean inclusion whose optimized bound reaches `1 - delta`
/// with these sample sizes, or `None` if even a perfect mean falls short.
pub fn required_mean(sizes: &SampleSizes, delta: f64, gamma_min: f64) -> Option<f64> {
    let target = 1.0 - delta;
    let ok = |m: f64| maximize_gamma_sizes(m, sizes, gamma_min).p >= target;
    if !ok(1.0) {
        return None;
    }
    if ok(0.0) {
        return Some(0.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Distribution of the latent per-task inclusion probability in
/// [`coverage_trial`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatentRate {
    /// Every task has exactly the population rate.
    Fixed,
    /// `Beta(kappa * r, kappa * (1 - r))`, mean `r`.
    Beta { concentration: f64 },
}

impl Default for LatentRate {
    fn default() -> Self {
        LatentRate::Beta { concentration: 20.0 }
    }
}

impl LatentRate {
    fn sample<R: Rng + ?Sized>(&self, rate: f64, rng: &mut R) -> f64 {
        match *self {
            LatentRate::Beta { concentration } if rate > 0.0 && rate < 1.0 => {
                Beta::new(concentration * rate, concentration * (1.0 - rate))
                    .expect("positive beta shape")
                    .sample(rng)
            }
            _ => rate,
        }
    }
}

/// Simulates `trials` meta-evaluations with known population inclusion rate
/// and returns the fraction in which the rate is at least the empirical mean
/// minus both concentration slacks at `gamma`.
pub fn coverage_trial(
    gamma: f64,
    n: usize,
    t_eval: usize,
    true_rate: f64,
    trials: usize,
    latent: LatentRate,
    seed: u64,
) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let sizes = SampleSizes::uniform(n as u64, t_eval as u64);
    let slack = sizes.slack(gamma);
    let hits: Vec<bool> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut r = rng::stream(seed, rng::NS_COVERAGE, trial);
            let mut total = 0.0;
            for _ in 0..n {
                let c = latent.sample(true_rate, &mut r);
                let k = Binomial::new(t_eval as u64, c).expect("rate in [0, 1]").sample(&mut r);
                total += k as f64 / t_eval as f64;
            }
            true_rate >= total / n as f64 - slack
        })
        .collect();
    hits.iter().filter(|&&h| h).count() as f64 / trials as f64
}
