use std::io::Cursor;

use trustbayes::bounds::{compute_inclusion_stats, task_inclusion, BoundSpec};
use trustbayes::eval::{monte_carlo_eval, test_meta_dataset, EvalConfig};
use trustbayes::rng::{NS_TEST, NS_TRAIN};
use trustbayes::taskgen::{gen_task, read_jsonl, write_jsonl};
use trustbayes::HyperParams;

fn cfg() -> EvalConfig {
    EvalConfig {
        n_test_tasks: 30,
        n_test_inputs: 60,
        t_tr_test: 8,
        q: 1.64,
        seed: 17,
    }
}

fn hyper() -> HyperParams {
    HyperParams::new(-0.1, 20.0, 450.0).unwrap()
}

#[test]
fn test_tasks_come_from_their_own_namespace() {
    for id in 0..20 {
        let train = gen_task(17, NS_TRAIN, id, 8, 60);
        let test = gen_task(17, NS_TEST, id, 8, 60);
        assert_ne!(train.task, test.task);
        assert!(train.data.inputs.iter().zip(&test.data.inputs).all(|(a, b)| a != b));
    }
}

#[test]
fn report_matches_stats_on_serialized_test_set() {
    let c = cfg();
    let report = monte_carlo_eval(&hyper(), &c).unwrap();
    let mut buf = Vec::new();
    write_jsonl(&test_meta_dataset(&c).unwrap(), &mut buf).unwrap();
    let meta = read_jsonl(Cursor::new(buf), c.seed).unwrap();
    let spec = BoundSpec {
        q: c.q,
        ..BoundSpec::default()
    };
    let s = compute_inclusion_stats(&hyper(), &meta, &spec).unwrap();
    assert_eq!(report.prior_inclusion, s.mean_prior());
    assert_eq!(report.posterior_inclusion, s.mean_posterior());
}

#[test]
fn grand_means_are_reproducible_across_thread_counts() {
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| monte_carlo_eval(&hyper(), &cfg()).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn grand_means_recombine_per_task_means() {
    let c = cfg();
    let report = monte_carlo_eval(&hyper(), &c).unwrap();
    let per_task: Vec<_> = (0..c.n_test_tasks as u64)
        .map(|id| task_inclusion(&hyper(), &gen_task(c.seed, NS_TEST, id, c.t_tr_test, c.n_test_inputs).data, c.q).unwrap())
        .collect();
    let n = per_task.len() as f64;
    let mse: f64 = per_task.iter().map(|t| t.mse).sum::<f64>() / n;
    let mse_rev: f64 = per_task.iter().rev().map(|t| t.mse).sum::<f64>() / n;
    let prior: f64 = per_task.iter().map(|t| t.prior).sum::<f64>() / n;
    assert_eq!(report.mse, mse);
    assert_eq!(report.prior_inclusion, prior);
    assert!((mse - mse_rev).abs() <= 1e-12 * mse, "{mse} {mse_rev}");
    assert!(report.mse >= 0.0);
    assert!((0.0..=1.0).contains(&report.prior_inclusion) && (0.0..=1.0).contains(&report.posterior_inclusion));
}

#[test]
fn eval_split_uses_training_data() {
    let meta = trustbayes::taskgen::gen_meta_dataset(10, 5, 20, 3).unwrap();
    let r = monte_carlo_eval(&hyper(), &cfg()).unwrap().with_eval_split(&meta).unwrap();
    let s = compute_inclusion_stats(&hyper(), &meta, &BoundSpec::default()).unwrap();
    assert_eq!(r.eval_split_prior_inclusion, Some(s.mean_prior()));
    assert_eq!(r.eval_split_posterior_inclusion, Some(s.mean_posterior()));
}
