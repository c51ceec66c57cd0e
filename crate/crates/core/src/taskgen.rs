//! Synthetic regression tasks: a quadratic trend plus ten sinusoids whose
//! coefficients come from two-component Gaussian mixtures.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::gp::format_real;
use crate::rng;

pub const N_TERMS: usize = 10;

/// One sinusoid term set `(a, b, w, u, beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct Coeff {
    pub a: f64,
    pub b: f64,
    pub w: f64,
    pub u: f64,
    pub beta: f64,
}

/// A sampled function
/// `f(x) = d x^2 + sum_m alpha a_m sin(w_m x + beta_m) + (1 - alpha) b_m sin(u_m x + beta_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub d: f64,
    /// Selects the low-frequency large-amplitude family (`true`) or the
    /// high-frequency unit-amplitude one (`false`).
    pub alpha: bool,
    pub coeffs: [Coeff; N_TERMS],
}

/// Equal-weight mixture of two normals, each given by `(mean, std)`.
#[derive(Debug, Clone, Copy)]
pub struct Mixture2 {
    pub first: (f64, f64),
    pub second: (f64, f64),
}

impl Mixture2 {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (mu, sd) = if rng.gen_bool(0.5) {
            self.first
        } else {
            self.second
        };
        // parameters are compile-time constants with sd > 0
        Normal::new(mu, sd).expect("valid normal").sample(rng)
    }
}

pub const D_DIST: Mixture2 = Mixture2 {
    first: (-10.0, 1.0),
    second: (10.0, 1.0),
};
pub const A_DIST: Mixture2 = Mixture2 {
    first: (-20.0, 5.0),
    second: (10.0, 2.0),
};
pub const B_DIST: Mixture2 = Mixture2 {
    first: (-1.0, 0.1),
    second: (1.0, 0.1),
};
pub const W_DIST: Mixture2 = Mixture2 {
    first: (-10.0, 10.0),
    second: (10.0, 10.0),
};
pub const U_DIST: Mixture2 = Mixture2 {
    first: (-100.0, 10.0),
    second: (100.0, 10.0),
};

pub fn sample_task<R: Rng + ?Sized>(rng: &mut R) -> Task {
    let d = D_DIST.sample(rng);
    let alpha = rng.gen_bool(0.5);
    let beta_dist = Normal::new(0.0, 1.0).expect("standard normal");
    let mut coeffs = [Coeff {
        a: 0.0,
        b: 0.0,
        w: 0.0,
        u: 0.0,
        beta: 0.0,
    }; N_TERMS];
    for c in coeffs.iter_mut() {
        c.a = A_DIST.sample(rng);
        c.b = B_DIST.sample(rng);
        c.w = W_DIST.sample(rng);
        c.u = U_DIST.sample(rng);
        c.beta = beta_dist.sample(rng);
    }
    Task { d, alpha, coeffs }
}

pub fn eval_task(task: &Task, x: f64) -> f64 {
    let alpha = if task.alpha { 1.0 } else { 0.0 };
    let mut sum = task.d * x * x;
    for c in &task.coeffs {
        sum += alpha * c.a * (c.w * x + c.beta).sin() + (1.0 - alpha) * c.b * (c.u * x + c.beta).sin();
    }
    sum
}

/// Samples of one task: a training prefix of `t_tr` points followed by the
/// evaluation suffix.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub task_id: u64,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
    pub t_tr: usize,
}

impl TaskData {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn t_eval(&self) -> usize {
        self.inputs.len() - self.t_tr
    }

    pub fn train_inputs(&self) -> &[Vec<f64>] {
        &self.inputs[..self.t_tr]
    }

    pub fn train_outputs(&self) -> &[f64] {
        &self.outputs[..self.t_tr]
    }

    pub fn eval_inputs(&self) -> &[Vec<f64>] {
        &self.inputs[self.t_tr..]
    }

    pub fn eval_outputs(&self) -> &[f64] {
        &self.outputs[self.t_tr..]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskEntry {
    pub task: Task,
    pub data: TaskData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaDataset {
    pub tasks: Vec<TaskEntry>,
    pub seed: u64,
}

impl MetaDataset {
    pub fn new(tasks: Vec<TaskEntry>, seed: u64) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::InvalidInput("meta dataset needs at least one task".into()));
        }
        for (i, e) in tasks.iter().enumerate() {
            if e.data.task_id != i as u64 {
                return Err(Error::InvalidInput(format!(
                    "task ids must be contiguous from 0: position {i} has id {}",
                    e.data.task_id
                )));
            }
            if e.data.t_tr > e.data.len() || e.data.inputs.len() != e.data.outputs.len() {
                return Err(Error::InvalidInput(format!("task {i}: inconsistent split")));
            }
        }
        Ok(MetaDataset { tasks, seed })
    }

    pub fn n(&self) -> usize {
        self.tasks.len()
    }

    pub fn t_evals(&self) -> Vec<usize> {
        self.tasks.iter().map(|e| e.data.t_eval()).collect()
    }

    /// All outputs of all tasks, in task order.
    pub fn all_outputs(&self) -> impl Iterator<Item = f64> + '_ {
        self.tasks.iter().flat_map(|e| e.data.outputs.iter().copied())
    }
}

/// Draws the task with index `task_id` in `namespace` and `t_tr + t_eval`
/// uniform inputs on `[0, 1]` for it.
pub fn gen_task(seed: u64, namespace: u64, task_id: u64, t_tr: usize, t_eval: usize) -> TaskEntry {
    let mut rng = rng::stream(seed, namespace, task_id);
    let task = sample_task(&mut rng);
    let total = t_tr + t_eval;
    let mut inputs = Vec::with_capacity(total);
    let mut outputs = Vec::with_capacity(total);
    for _ in 0..total {
        let x: f64 = rng.gen();
        inputs.push(vec![x]);
        outputs.push(eval_task(&task, x));
    }
    TaskEntry {
        task,
        data: TaskData {
            task_id,
            inputs,
            outputs,
            t_tr,
        },
    }
}

pub fn gen_meta_dataset(n: usize, t_tr: usize, t_eval: usize, seed: u64) -> Result<MetaDataset> {
    gen_meta_dataset_in(rng::NS_TRAIN, n, t_tr, t_eval, seed)
}

pub(crate) fn gen_meta_dataset_in(
    namespace: u64,
    n: usize,
    t_tr: usize,
    t_eval: usize,
    seed: u64,
) -> Result<MetaDataset> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    if t_eval == 0 {
        return Err(Error::InvalidInput("t_eval must be at least 1".into()));
    }
    let tasks: Vec<TaskEntry> = (0..n as u64)
        .into_par_iter()
        .map(|id| gen_task(seed, namespace, id, t_tr, t_eval))
        .collect();
    MetaDataset::new(tasks, seed)
}

fn write_reals<W: Write>(w: &mut W, values: impl Iterator<Item = f64>) -> std::io::Result<()> {
    write!(w, "[")?;
    for (i, v) in values.enumerate() {
        if i > 0 {
            write!(w, ",")?;
        }
        write!(w, "{}", format_real(v))?;
    }
    write!(w, "]")
}

/// One JSON object per line:
/// `{task_id, d, alpha, coeffs:[{a,b,w,u,beta}; 10], x, y, t_tr}`.
pub fn write_jsonl<W: Write>(meta: &MetaDataset, w: &mut W) -> std::io::Result<()> {
    for e in &meta.tasks {
        let t = &e.task;
        write!(
            w,
            "{{\"task_id\":{},\"d\":{},\"alpha\":{},\"coeffs\":[",
            e.data.task_id,
            format_real(t.d),
            u8::from(t.alpha)
        )?;
        for (i, c) in t.coeffs.iter().enumerate() {
            if i > 0 {
                write!(w, ",")?;
            }
            write!(
                w,
                "{{\"a\":{},\"b\":{},\"w\":{},\"u\":{},\"beta\":{}}}",
                format_real(c.a),
                format_real(c.b),
                format_real(c.w),
                format_real(c.u),
                format_real(c.beta)
            )?;
        }
        write!(w, "],\"x\":")?;
        let scalar = e.data.inputs.iter().all(|x| x.len() == 1);
        if scalar {
            write_reals(w, e.data.inputs.iter().map(|x| x[0]))?;
        } else {
            write!(w, "[")?;
            for (i, x) in e.data.inputs.iter().enumerate() {
                if i > 0 {
                    write!(w, ",")?;
                }
                write_reals(w, x.iter().copied())?;
            }
            write!(w, "]")?;
        }
        write!(w, ",\"y\":")?;
        write_reals(w, e.data.outputs.iter().copied())?;
        writeln!(w, ",\"t_tr\":{}}}", e.data.t_tr)?;
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum InputList {
    Scalar(Vec<f64>),
    Vector(Vec<Vec<f64>>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskRecord {
    task_id: u64,
    d: f64,
    alpha: u8,
    coeffs: Vec<Coeff>,
    x: InputList,
    y: Vec<f64>,
    t_tr: usize,
}

/// Parses and validates a dataset written by [`write_jsonl`]. Every stored
/// output must equal the task function at its input exactly.
pub fn read_jsonl<R: BufRead>(r: R, seed: u64) -> Result<MetaDataset> {
    let mut tasks = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse { line: lineno, msg };
        let rec: TaskRecord = serde_json::from_str(&line).map_err(|e| perr(e.to_string()))?;
        if rec.alpha > 1 {
            return Err(perr(format!("alpha must be 0 or 1, got {}", rec.alpha)));
        }
        let coeffs: [Coeff; N_TERMS] = rec
            .coeffs
            .try_into()
            .map_err(|v: Vec<Coeff>| perr(format!("expected {N_TERMS} coefficient tuples, got {}", v.len())))?;
        let inputs = match rec.x {
            InputList::Scalar(v) => v.into_iter().map(|x| vec![x]).collect::<Vec<_>>(),
            InputList::Vector(v) => v,
        };
        if inputs.len() != rec.y.len() || rec.t_tr > inputs.len() {
            return Err(perr("x/y lengths or t_tr inconsistent".into()));
        }
        let task = Task {
            d: rec.d,
            alpha: rec.alpha == 1,
            coeffs,
        };
        for (t, (x, y)) in inputs.iter().zip(&rec.y).enumerate() {
            if x.len() != 1 {
                return Err(perr(format!("input {t} is not one-dimensional")));
            }
            if !(0.0..=1.0).contains(&x[0]) {
                return Err(perr(format!("input {t} = {} outside [0, 1]", x[0])));
            }
            if eval_task(&task, x[0]) != *y {
                return Err(perr(format!("output {t} does not match the task function")));
            }
        }
        tasks.push(TaskEntry {
            task,
            data: TaskData {
                task_id: rec.task_id,
                inputs,
                outputs: rec.y,
                t_tr: rec.t_tr,
            },
        });
    }
    MetaDataset::new(tasks, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn zero_task() -> Task {
        Task {
            d: 0.0,
            alpha: true,
            coeffs: [Coeff {
                a: 0.0,
                b: 0.0,
                w: 0.0,
                u: 0.0,
                beta: 0.0,
            }; N_TERMS],
        }
    }

    #[test]
    fn pure_quadratic() {
        let mut t = zero_task();
        t.d = 10.0;
        assert_eq!(eval_task(&t, 0.5), 2.5);
    }

    #[test]
    fn single_sine_term() {
        let mut t = zero_task();
        t.coeffs[0].a = 1.0;
        t.coeffs[0].w = PI;
        assert!((eval_task(&t, 0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn value_at_zero_is_phase_sum() {
        let mut rng = rng::stream(11, rng::NS_TRAIN, 0);
        for _ in 0..20 {
            let t = sample_task(&mut rng);
            let al = if t.alpha { 1.0 } else { 0.0 };
            let expected: f64 = t
                .coeffs
                .iter()
                .map(|c| (al * c.a + (1.0 - al) * c.b) * c.beta.sin())
                .sum();
            assert!((eval_task(&t, 0.0) - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_task(&mut rng::stream(5, rng::NS_TRAIN, 9));
        let b = sample_task(&mut rng::stream(5, rng::NS_TRAIN, 9));
        assert_eq!(a, b);
    }

    #[test]
    fn minimal_dataset() {
        let m = gen_meta_dataset(1, 0, 1, 3).unwrap();
        assert_eq!(m.n(), 1);
        let e = &m.tasks[0];
        assert_eq!(e.data.len(), 1);
        assert_eq!(e.data.outputs[0], eval_task(&e.task, e.data.inputs[0][0]));
    }

    #[test]
    fn invalid_counts() {
        assert!(gen_meta_dataset(0, 1, 1, 0).is_err());
        assert!(gen_meta_dataset(1, 1, 0, 0).is_err());
    }

    #[test]
    fn read_rejects_tampered_output() {
        let m = gen_meta_dataset(2, 1, 2, 3).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let first_y = text.find("\"y\":[").unwrap() + 5;
        let mut bad = text.clone();
        bad.insert(first_y, '1');
        let err = read_jsonl(bad.as_bytes(), 3).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn read_rejects_wrong_coefficient_count() {
        let line = r#"{"task_id":0,"d":1.0,"alpha":1,"coeffs":[],"x":[0.5],"y":[0.25],"t_tr":0}"#;
        assert!(read_jsonl(line.as_bytes(), 0).is_err());
    }
}
