use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;
use trustbayes::bounds::{feasibility_check, min_tasks_for_delta};
use trustbayes::eval::{emit_function_fixture, monte_carlo_eval, EvalReport};
use trustbayes::taskgen::{gen_meta_dataset, read_jsonl, write_jsonl, MetaDataset};
use trustbayes::train::{train_meta_prior, train_trust_bayes, Method};
use trustbayes::Error;

use crate::config::RunConfig;
use crate::io::{
    comparison_table, fixture_to_csv, log_to_csv, read_file, report_to_csv, report_to_text, write_file,
    HyperRecord, Table, FIXTURE_HEADER, LOG_HEADER,
};
use crate::plot::{plot_fixture, plot_log};

/// Successful outcomes; errors carry their own exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    Uncertified,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Success => 0,
            Status::Uncertified => 2,
        }
    }
}

pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_INPUT: i32 = 4;
pub const EXIT_NUMERICAL: i32 = 5;

pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Infeasible { .. } | Error::NotFound { .. } => EXIT_INFEASIBLE,
                e if e.is_numerical() => EXIT_NUMERICAL,
                _ => EXIT_INPUT,
            };
        }
    }
    EXIT_INPUT
}

pub fn hyper_path(dir: &Path, method: Method) -> PathBuf {
    dir.join(format!("hyper_{}.txt", method.name()))
}

pub fn log_path(dir: &Path, method: Method) -> PathBuf {
    dir.join(format!("log_{}.csv", method.name()))
}

/// Writes `dataset.jsonl` and `manifest.json` into the output directory.
pub fn cmd_gen(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let d = &cfg.dataset;
    let meta = gen_meta_dataset(d.n, d.t_tr, d.t_eval, cfg.seed)?;
    let mut buf = Vec::new();
    write_jsonl(&meta, &mut buf)?;
    let path = cfg.dataset_path();
    write_file(&path, std::str::from_utf8(&buf).expect("utf-8 dataset"))?;
    let manifest = json!({
        "dataset": "dataset.jsonl",
        "seed": cfg.seed,
        "n": d.n,
        "t_tr": d.t_tr,
        "t_eval": d.t_eval,
        "n_x": d.n_x,
        "config": serde_json::from_str::<serde_json::Value>(&cfg.echo())?,
    });
    write_file(
        &cfg.output_dir.join("manifest.json"),
        &(serde_json::to_string_pretty(&manifest)? + "\n"),
    )?;
    Ok(path)
}

pub fn load_dataset(path: &Path, seed: u64) -> Result<MetaDataset> {
    let file = std::fs::File::open(path).with_context(|| format!("opening dataset {}", path.display()))?;
    read_jsonl(BufReader::new(file), seed).with_context(|| format!("reading dataset {}", path.display()))
}

/// Config echo with the dataset section taken from the loaded data, which
/// may have been generated under different flags.
fn echo_with_dataset(cfg: &RunConfig, meta: &MetaDataset) -> String {
    let mut c = cfg.clone();
    c.dataset.n = meta.n();
    if let Some(first) = meta.tasks.first() {
        c.dataset.t_tr = first.data.t_tr;
        c.dataset.t_eval = first.data.t_eval();
    }
    c.echo()
}

/// Trains the selected methods and writes `hyper_<method>.txt` and
/// `log_<method>.csv`. Infeasibility is reported before any training.
pub fn cmd_train(cfg: &RunConfig, dataset: Option<&Path>) -> Result<Status> {
    cfg.validate()?;
    let path = dataset.map_or_else(|| cfg.dataset_path(), Path::to_path_buf);
    let meta = load_dataset(&path, cfg.seed)?;
    let tc = cfg.train_config();
    let echo = echo_with_dataset(cfg, &meta);
    let mut status = Status::Success;
    if cfg.method.runs_trust_bayes() {
        let f = feasibility_check(meta.n(), &meta.t_evals(), cfg.spec.delta)?;
        if !f.feasible {
            return Err(Error::Infeasible {
                n: meta.n(),
                delta: cfg.spec.delta,
                best: f.p_star,
                required: cfg.spec.target(),
                margin: f.margin,
            })
            .context("perfect empirical inclusion cannot certify 1 - delta with this many tasks and evaluation points");
        }
    }
    let mut runs = Vec::new();
    if cfg.method.runs_trust_bayes() {
        runs.push(Method::TrustBayes);
    }
    if cfg.method.runs_meta_prior() {
        runs.push(Method::MetaPrior);
    }
    for method in runs {
        let (hyper, log) = match method {
            Method::TrustBayes => train_trust_bayes(&meta, &cfg.spec, &tc)?,
            Method::MetaPrior => train_meta_prior(&meta, &cfg.spec, &tc)?,
        };
        let rec = HyperRecord::new(method.name(), hyper, &log.certification);
        write_file(&hyper_path(&cfg.output_dir, method), &rec.to_text(&echo))?;
        write_file(&log_path(&cfg.output_dir, method), &log_to_csv(&log, &echo))?;
        let c = &log.certification;
        println!(
            "{}: theta={} phi1={} phi2={} certified={} p1_star={:.6} p2_star={:.6} rounds={}",
            method.name(),
            hyper.theta,
            hyper.phi1,
            hyper.phi2,
            c.certified,
            c.p1_star,
            c.p2_star,
            log.rounds
        );
        if method == Method::TrustBayes && !c.certified {
            status = Status::Uncertified;
        }
    }
    Ok(status)
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub reports: Vec<(String, EvalReport)>,
    pub table: String,
}

/// Evaluates each hyper file; with no files, those of the selected methods
/// in the output directory. Adds eval-split inclusion when the dataset
/// exists, a comparison table and the interval fixture.
pub fn cmd_eval(cfg: &RunConfig, hyper_files: &[PathBuf], dataset: Option<&Path>) -> Result<EvalOutput> {
    cfg.validate()?;
    let files: Vec<PathBuf> = if hyper_files.is_empty() {
        let mut v = Vec::new();
        if cfg.method.runs_trust_bayes() {
            v.push(hyper_path(&cfg.output_dir, Method::TrustBayes));
        }
        if cfg.method.runs_meta_prior() {
            v.push(hyper_path(&cfg.output_dir, Method::MetaPrior));
        }
        v
    } else {
        hyper_files.to_vec()
    };
    let records = files
        .iter()
        .map(|p| {
            let text = read_file(p)?;
            let mut rec = HyperRecord::parse(&text).with_context(|| format!("parsing {}", p.display()))?;
            if rec.method.is_empty() {
                rec.method = p.file_stem().map_or("hyper".into(), |s| s.to_string_lossy().into_owned());
            }
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    let explicit = dataset.is_some();
    let ds_path = dataset.map_or_else(|| cfg.dataset_path(), Path::to_path_buf);
    let meta = if explicit || ds_path.exists() {
        Some(load_dataset(&ds_path, cfg.seed)?)
    } else {
        None
    };
    let ec = cfg.eval_config();
    let echo = match &meta {
        Some(m) => echo_with_dataset(cfg, m),
        None => cfg.echo(),
    };
    let mut reports = Vec::new();
    for rec in &records {
        let mut r = monte_carlo_eval(&rec.hyper, &ec)?;
        if let Some(m) = &meta {
            r = r.with_eval_split(m)?;
        }
        write_file(&cfg.output_dir.join(format!("eval_{}.txt", rec.method)), &report_to_text(&rec.method, &r, &echo))?;
        write_file(&cfg.output_dir.join(format!("eval_{}.csv", rec.method)), &report_to_csv(&rec.method, &r))?;
        reports.push((rec.method.clone(), r));
    }
    let refs: Vec<(&str, &EvalReport)> = reports.iter().map(|(m, r)| (m.as_str(), r)).collect();
    let table = comparison_table(&refs);
    if reports.len() > 1 {
        write_file(&cfg.output_dir.join("comparison.csv"), &table)?;
    }
    if cfg.eval.fixture_funcs > 0 {
        if let Some(a) = records.first() {
            let b = records.get(1).unwrap_or(a);
            let rows = emit_function_fixture(
                &a.hyper,
                &b.hyper,
                cfg.eval.fixture_funcs,
                cfg.eval.fixture_grid,
                ec.t_tr_test,
                ec.q,
                cfg.seed,
            )?;
            let mut text = format!("# a: {}\n# b: {}\n", a.method, b.method);
            text.push_str(&fixture_to_csv(&rows, &echo));
            write_file(&cfg.output_dir.join("fixture.csv"), &text)?;
        }
    }
    Ok(EvalOutput { reports, table })
}

/// Verdict of the feasibility inequality as `key=value` lines followed by
/// the same content as one JSON line.
pub fn cmd_feasibility(n: usize, t_eval: usize, delta: f64) -> Result<(String, bool)> {
    let f = feasibility_check(n, &vec![t_eval; n], delta)?;
    let mut s = format!(
        "feasible={}\nn={n}\nt_eval={t_eval}\ndelta={delta}\np_star={:.6}\ngamma_star={:.6e}\nrequired={:.6}\nmargin={:.6}\n",
        f.feasible,
        f.p_star,
        f.gamma_star,
        1.0 - delta,
        f.margin
    );
    let j = json!({
        "feasible": f.feasible, "n": n, "t_eval": t_eval, "delta": delta,
        "p_star": f.p_star, "gamma_star": f.gamma_star, "required": 1.0 - delta, "margin": f.margin,
    });
    s.push_str(&j.to_string());
    s.push('\n');
    Ok((s, f.feasible))
}

pub fn cmd_min_n(delta: f64, t_eval: u64) -> Result<String> {
    let n = min_tasks_for_delta(delta, t_eval)?;
    let j = json!({ "delta": delta, "t_eval": t_eval, "min_n": n });
    Ok(format!("min_n={n}\ndelta={delta}\nt_eval={t_eval}\n{j}\n"))
}

/// Renders a training-log or fixture CSV to SVG. Nothing is written unless
/// the whole input parses.
pub fn cmd_plot(input: &Path, output: Option<&Path>, delta: Option<f64>) -> Result<PathBuf> {
    let text = read_file(input)?;
    let table = Table::parse(&text).with_context(|| format!("parsing {}", input.display()))?;
    let svg = if table.has_header(&LOG_HEADER) {
        let delta = delta.or_else(|| {
            let cfg: RunConfig = serde_json::from_str(table.comment("config")?).ok()?;
            Some(cfg.spec.delta)
        });
        plot_log(&table, delta)?
    } else if table.has_header(&FIXTURE_HEADER) {
        let a = table.comment("a").unwrap_or("a").to_string();
        let b = table.comment("b").unwrap_or("b").to_string();
        plot_fixture(&table, &a, &b)?
    } else {
        bail!(Error::Parse {
            line: text.lines().position(|l| !l.starts_with('#') && !l.trim().is_empty()).unwrap_or(0) + 1,
            msg: format!(
                "unrecognized header {:?}; expected a training log or fixture CSV",
                table.header.join(",")
            ),
        });
    };
    let out = output.map_or_else(|| input.with_extension("svg"), Path::to_path_buf);
    write_file(&out, &svg)?;
    Ok(out)
}
