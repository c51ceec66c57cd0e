use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use trustbayes_cli::commands::{
    cmd_eval, cmd_feasibility, cmd_gen, cmd_min_n, cmd_plot, cmd_train, exit_code, Status, EXIT_INFEASIBLE,
};
use trustbayes_cli::config::{MethodSel, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "trustbayes", version, about = "Trust-constrained GP prior meta-training")]
struct Cli {
    /// JSON run configuration; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (results do not depend on it).
    #[arg(long, global = true, env = "TRUSTBAYES_THREADS")]
    threads: Option<usize>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long = "out", global = true)]
    output_dir: Option<PathBuf>,

    /// trust-bayes, meta-prior or both.
    #[arg(long, global = true)]
    method: Option<MethodSel>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct DataFlags {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t_tr: Option<usize>,
    #[arg(long)]
    t_eval: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the meta-training dataset.
    Gen {
        #[command(flatten)]
        data: DataFlags,
    },
    /// Meta-train the selected method(s).
    Train {
        /// Dataset file (default: <out>/dataset.jsonl).
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        step_size: Option<f64>,
        #[arg(long)]
        max_outer_rounds: Option<usize>,
    },
    /// Monte Carlo evaluation on fresh tasks.
    Eval {
        /// Hyper files (default: those of the selected methods in <out>).
        #[arg(long = "hyper")]
        hyper: Vec<PathBuf>,
        /// Meta-training dataset for eval-split inclusion.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        n_test_tasks: Option<usize>,
        #[arg(long)]
        n_test_inputs: Option<usize>,
        #[arg(long)]
        t_tr_test: Option<usize>,
    },
    /// Check whether (n, t_eval) can certify 1 - delta, or find the minimal n.
    Feasibility {
        #[arg(long, required_unless_present = "min_n")]
        n: Option<usize>,
        #[arg(long, required_unless_present = "min_n")]
        t_eval: Option<usize>,
        #[arg(long, required_unless_present = "min_n")]
        delta: Option<f64>,
        /// DELTA T_EVAL: print the smallest feasible task count.
        #[arg(long, num_args = 2, value_names = ["DELTA", "T_EVAL"], conflicts_with_all = ["n", "t_eval", "delta"])]
        min_n: Option<Vec<String>>,
    },
    /// Render a training log or fixture CSV as SVG.
    Plot {
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Threshold line at 1 - delta (default: from the log's config echo).
        #[arg(long)]
        delta: Option<f64>,
    },
}

fn config(cli: &Cli, mut o: Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    o.seed = cli.seed;
    o.output_dir = cli.output_dir.clone();
    o.method = cli.method;
    cfg.apply(&o);
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<i32> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match &cli.command {
        Command::Gen { data } => {
            let cfg = config(
                &cli,
                Overrides {
                    n: data.n,
                    t_tr: data.t_tr,
                    t_eval: data.t_eval,
                    ..Default::default()
                },
            )?;
            let path = cmd_gen(&cfg)?;
            println!("wrote {}", path.display());
            Ok(0)
        }
        Command::Train {
            dataset,
            delta,
            q,
            steps,
            step_size,
            max_outer_rounds,
        } => {
            let cfg = config(
                &cli,
                Overrides {
                    delta: *delta,
                    q: *q,
                    steps: *steps,
                    step_size: *step_size,
                    max_outer_rounds: *max_outer_rounds,
                    ..Default::default()
                },
            )?;
            let status = cmd_train(&cfg, dataset.as_deref())?;
            if status == Status::Uncertified {
                eprintln!("trust-bayes finished without certification");
            }
            Ok(status.code())
        }
        Command::Eval {
            hyper,
            dataset,
            q,
            n_test_tasks,
            n_test_inputs,
            t_tr_test,
        } => {
            let cfg = config(
                &cli,
                Overrides {
                    q: *q,
                    n_test_tasks: *n_test_tasks,
                    n_test_inputs: *n_test_inputs,
                    t_tr_test: *t_tr_test,
                    ..Default::default()
                },
            )?;
            let out = cmd_eval(&cfg, hyper, dataset.as_deref())?;
            print!("{}", out.table);
            Ok(0)
        }
        Command::Feasibility {
            n,
            t_eval,
            delta,
            min_n,
        } => {
            if let Some(v) = min_n {
                let delta: f64 = v[0].parse().with_context(|| format!("DELTA {:?}", v[0]))?;
                let t: u64 = v[1].parse().with_context(|| format!("T_EVAL {:?}", v[1]))?;
                print!("{}", cmd_min_n(delta, t)?);
                return Ok(0);
            }
            let (text, feasible) = cmd_feasibility(n.unwrap(), t_eval.unwrap(), delta.unwrap())?;
            print!("{text}");
            Ok(if feasible { 0 } else { EXIT_INFEASIBLE })
        }
        Command::Plot { input, output, delta } => {
            let path = cmd_plot(input, output.as_deref(), *delta)?;
            println!("wrote {}", path.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
