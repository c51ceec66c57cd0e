//! Monte Carlo evaluation on fresh tasks and the function/interval fixture.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{compute_inclusion_stats, task_inclusion, BoundSpec, TaskInclusion};
use crate::gp::{fit_posterior, posterior_interval, prior_interval, HyperParams, Interval, Jitter};
use crate::rng::{NS_FIXTURE, NS_TEST};
use crate::taskgen::{eval_task, gen_meta_dataset_in, gen_task, MetaDataset};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub n_test_tasks: usize,
    pub n_test_inputs: usize,
    pub t_tr_test: usize,
    pub q: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_test_tasks: 500,
            n_test_inputs: 500,
            t_tr_test: 20,
            q: 1.64,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_test_tasks == 0 || self.n_test_inputs == 0 || self.t_tr_test == 0 {
            return Err(Error::InvalidInput("eval counts must all be at least 1".into()));
        }
        if !(self.q.is_finite() && self.q > 0.0) {
            return Err(Error::InvalidInput(format!("q must be positive, got {}", self.q)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub prior_inclusion: f64,
    pub posterior_inclusion: f64,
    pub mse: f64,
    /// Inclusion on the evaluation split of the meta-training data, when
    /// that dataset was supplied.
    pub eval_split_prior_inclusion: Option<f64>,
    pub eval_split_posterior_inclusion: Option<f64>,
    pub config: EvalConfig,
    pub hyper: HyperParams,
}

impl EvalReport {
    /// Fills the eval-split fields from the meta-training dataset.
    pub fn with_eval_split(mut self, meta: &MetaDataset) -> Result<Self> {
        let spec = BoundSpec {
            q: self.config.q,
            ..BoundSpec::default()
        };
        let stats = compute_inclusion_stats(&self.hyper, meta, &spec)?;
        self.eval_split_prior_inclusion = Some(stats.mean_prior());
        self.eval_split_posterior_inclusion = Some(stats.mean_posterior());
        Ok(self)
    }
}

/// The test tasks `monte_carlo_eval` draws, materialized. Training prefix
/// `t_tr_test`, evaluation suffix `n_test_inputs`.
pub fn test_meta_dataset(cfg: &EvalConfig) -> Result<MetaDataset> {
    cfg.validate()?;
    gen_meta_dataset_in(NS_TEST, cfg.n_test_tasks, cfg.t_tr_test, cfg.n_test_inputs, cfg.seed)
}

/// Scores `hyper` on `n_test_tasks` fresh tasks. Tasks are generated one at
/// a time on the workers, so memory stays per-task at any scale.
pub fn monte_carlo_eval(hyper: &HyperParams, cfg: &EvalConfig) -> Result<EvalReport> {
    hyper.validate()?;
    cfg.validate()?;
    let per_task: Vec<TaskInclusion> = (0..cfg.n_test_tasks as u64)
        .into_par_iter()
        .map(|id| {
            let entry = gen_task(cfg.seed, NS_TEST, id, cfg.t_tr_test, cfg.n_test_inputs);
            task_inclusion(hyper, &entry.data, cfg.q).map_err(|e| {
                let source = match e {
                    Error::Task { source, .. } => source,
                    other => Box::new(other),
                };
                Error::TestTask {
                    task_id: id,
                    seed: cfg.seed,
                    source,
                }
            })
        })
        .collect::<Result<_>>()?;
    let n = per_task.len() as f64;
    let (mut prior, mut post, mut mse) = (0.0, 0.0, 0.0);
    for t in &per_task {
        prior += t.prior;
        post += t.posterior;
        mse += t.mse;
    }
    Ok(EvalReport {
        prior_inclusion: prior / n,
        posterior_inclusion: post / n,
        mse: mse / n,
        eval_split_prior_inclusion: None,
        eval_split_posterior_inclusion: None,
        config: *cfg,
        hyper: *hyper,
    })
}

/// One grid point of one fixture function under two hyperparameter sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureRow {
    pub func_id: u64,
    pub x: f64,
    pub f: f64,
    pub a_prior: Interval,
    pub a_post: Interval,
    pub b_prior: Interval,
    pub b_post: Interval,
}

/// `n_funcs` fixture tasks, each conditioned on `t_tr` random inputs and
/// evaluated on the grid `x_j = j / (grid - 1)`.
pub fn emit_function_fixture(
    hyper_a: &HyperParams,
    hyper_b: &HyperParams,
    n_funcs: usize,
    grid: usize,
    t_tr: usize,
    q: f64,
    seed: u64,
) -> Result<Vec<FixtureRow>> {
    if grid < 2 {
        return Err(Error::InvalidInput(format!("grid must be at least 2, got {grid}")));
    }
    hyper_a.validate()?;
    hyper_b.validate()?;
    let per_func: Vec<Vec<FixtureRow>> = (0..n_funcs as u64)
        .into_par_iter()
        .map(|id| {
            let entry = gen_task(seed, NS_FIXTURE, id, t_tr, 0);
            let (xs, ys) = (entry.data.train_inputs(), entry.data.train_outputs());
            let post_a = fit_posterior(hyper_a, xs, ys, &Jitter::default()).map_err(|e| e.in_task(id))?;
            let post_b = fit_posterior(hyper_b, xs, ys, &Jitter::default()).map_err(|e| e.in_task(id))?;
            (0..grid)
                .map(|j| {
                    let x = j as f64 / (grid - 1) as f64;
                    let p = [x];
                    Ok(FixtureRow {
                        func_id: id,
                        x,
                        f: eval_task(&entry.task, x),
                        a_prior: prior_interval(hyper_a, &p, q),
                        a_post: posterior_interval(&post_a, &p, q)?,
                        b_prior: prior_interval(hyper_b, &p, q),
                        b_post: posterior_interval(&post_b, &p, q)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.in_task(id))
        })
        .collect::<Result<_>>()?;
    Ok(per_func.into_iter().flatten().collect())
}
