//! Run configuration file. Every key is optional; unknown keys are errors.
//! Precedence is flags > file > defaults; see [`Overrides`].

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use trustbayes::bounds::BoundSpec;
use trustbayes::eval::EvalConfig;
use trustbayes::train::TrainConfig;
use trustbayes::HyperParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodSel {
    TrustBayes,
    MetaPrior,
    Both,
}

impl MethodSel {
    pub fn runs_trust_bayes(self) -> bool {
        matches!(self, MethodSel::TrustBayes | MethodSel::Both)
    }

    pub fn runs_meta_prior(self) -> bool {
        matches!(self, MethodSel::MetaPrior | MethodSel::Both)
    }
}

impl std::str::FromStr for MethodSel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "trust-bayes" => Ok(MethodSel::TrustBayes),
            "meta-prior" => Ok(MethodSel::MetaPrior),
            "both" => Ok(MethodSel::Both),
            _ => Err(format!("unknown method {s:?} (trust-bayes, meta-prior, both)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub n: usize,
    pub t_tr: usize,
    pub t_eval: usize,
    /// Input dimension. The case-study task family is scalar, so only 1.
    pub n_x: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            n: 200,
            t_tr: 10,
            t_eval: 50,
            n_x: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub steps: usize,
    pub step_size: f64,
    pub fd_step: f64,
    pub smoothing_tau: f64,
    pub penalty_weight: f64,
    pub penalty_growth: f64,
    pub max_outer_rounds: usize,
    pub inclusion_buffer: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<HyperParams>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            steps: d.steps,
            step_size: d.step_size,
            fd_step: d.fd_step,
            smoothing_tau: d.smoothing_tau,
            penalty_weight: d.penalty_weight,
            penalty_growth: d.penalty_growth,
            max_outer_rounds: d.max_outer_rounds,
            inclusion_buffer: d.inclusion_buffer,
            init: d.init,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub n_test_tasks: usize,
    pub n_test_inputs: usize,
    pub t_tr_test: usize,
    /// Fixture functions for the interval overlay plot; 0 disables it.
    pub fixture_funcs: usize,
    pub fixture_grid: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        let d = EvalConfig::default();
        EvalSection {
            n_test_tasks: d.n_test_tasks,
            n_test_inputs: d.n_test_inputs,
            t_tr_test: d.t_tr_test,
            fixture_funcs: 10,
            fixture_grid: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: DatasetSection,
    pub spec: BoundSpec,
    pub train: TrainSection,
    pub eval: EvalSection,
    /// Left out of the config echo: moving outputs does not change them.
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    pub method: MethodSel,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            dataset: DatasetSection::default(),
            spec: BoundSpec::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            output_dir: PathBuf::from("out"),
            method: MethodSel::Both,
        }
    }
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub method: Option<MethodSel>,
    pub n: Option<usize>,
    pub t_tr: Option<usize>,
    pub t_eval: Option<usize>,
    pub delta: Option<f64>,
    pub q: Option<f64>,
    pub steps: Option<usize>,
    pub step_size: Option<f64>,
    pub max_outer_rounds: Option<usize>,
    pub n_test_tasks: Option<usize>,
    pub n_test_inputs: Option<usize>,
    pub t_tr_test: Option<usize>,
}

impl RunConfig {
    /// Loads `path` (or defaults when `None`). A relative `output_dir` in the
    /// file is resolved against the file's directory.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| trustbayes::Error::Parse {
                line: e.line(),
                msg: format!("{}: {e}", path.display()),
            })?;
        if cfg.output_dir.is_relative() {
            let base = path.parent().unwrap_or(Path::new(""));
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($src:expr, $dst:expr) => {
                if let Some(v) = $src.clone() {
                    $dst = v;
                }
            };
        }
        set!(o.seed, self.seed);
        set!(o.output_dir, self.output_dir);
        set!(o.method, self.method);
        set!(o.n, self.dataset.n);
        set!(o.t_tr, self.dataset.t_tr);
        set!(o.t_eval, self.dataset.t_eval);
        set!(o.delta, self.spec.delta);
        set!(o.q, self.spec.q);
        set!(o.steps, self.train.steps);
        set!(o.step_size, self.train.step_size);
        set!(o.max_outer_rounds, self.train.max_outer_rounds);
        set!(o.n_test_tasks, self.eval.n_test_tasks);
        set!(o.n_test_inputs, self.eval.n_test_inputs);
        set!(o.t_tr_test, self.eval.t_tr_test);
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if d.n == 0 {
            bail!(trustbayes::Error::InvalidInput("dataset.n must be at least 1".into()));
        }
        if d.t_eval == 0 {
            bail!(trustbayes::Error::InvalidInput("dataset.t_eval must be at least 1".into()));
        }
        if d.n_x != 1 {
            bail!(trustbayes::Error::InvalidInput(format!(
                "dataset.n_x must be 1 for the sinusoid task family, got {}",
                d.n_x
            )));
        }
        self.spec.validate()?;
        self.train_config().validate()?;
        self.eval_config().validate()?;
        if self.eval.fixture_funcs > 0 && self.eval.fixture_grid < 2 {
            bail!(trustbayes::Error::InvalidInput("eval.fixture_grid must be at least 2".into()));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            steps: t.steps,
            step_size: t.step_size,
            fd_step: t.fd_step,
            smoothing_tau: t.smoothing_tau,
            penalty_weight: t.penalty_weight,
            penalty_growth: t.penalty_growth,
            max_outer_rounds: t.max_outer_rounds,
            inclusion_buffer: t.inclusion_buffer,
            init: t.init,
            seed: self.seed,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            n_test_tasks: self.eval.n_test_tasks,
            n_test_inputs: self.eval.n_test_inputs,
            t_tr_test: self.eval.t_tr_test,
            q: self.spec.q,
            seed: self.seed,
        }
    }

    /// Single-line JSON of everything that determines the outputs.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.output_dir.join("dataset.jsonl")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_rejected() {
        let e = serde_json::from_str::<RunConfig>(r#"{"dataset": {"m": 3}}"#);
        assert!(e.is_err());
        let e = serde_json::from_str::<RunConfig>(r#"{"sed": 3}"#);
        assert!(e.is_err());
    }

    #[test]
    fn partial_file_keeps_defaults_and_flags_win() {
        let mut c: RunConfig =
            serde_json::from_str(r#"{"seed": 4, "dataset": {"n": 30}, "method": "meta-prior"}"#).unwrap();
        assert_eq!(c.dataset.t_eval, 50);
        assert_eq!(c.method, MethodSel::MetaPrior);
        c.apply(&Overrides {
            n: Some(12),
            ..Default::default()
        });
        assert_eq!(c.dataset.n, 12);
        assert_eq!(c.seed, 4);
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::default();
        assert!(c.validate().is_ok());
        c.dataset.n = 0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.dataset.n_x = 2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn echo_round_trips_without_output_dir() {
        let c = RunConfig {
            seed: 9,
            output_dir: PathBuf::from("/somewhere"),
            ..Default::default()
        };
        let back: RunConfig = serde_json::from_str(&c.echo()).unwrap();
        assert_eq!(back.seed, 9);
        assert_eq!(back.output_dir, PathBuf::from("out"));
        assert!(!c.echo().contains("somewhere"));
    }
}
