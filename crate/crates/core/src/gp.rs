//! Exact Gaussian process regression with a constant prior mean and a scaled
//! squared-exponential kernel.
//!
//! The kernel is `k(x, x') = phi1^2 * exp(-|x - x'|^2 * phi2)`. Observations
//! are noiseless, so every Gram matrix gets a diagonal jitter proportional to
//! `phi1^2` before factorization.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative jitter levels tried in order: `1e-8, 1e-7, ..., 1e-4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jitter {
    pub initial: f64,
    pub max: f64,
    pub growth: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Jitter {
            initial: 1e-8,
            max: 1e-4,
            growth: 10.0,
        }
    }
}

impl Jitter {
    /// A single attempt with no diagonal regularization at all.
    pub fn none() -> Self {
        Jitter {
            initial: 0.0,
            max: 0.0,
            growth: 10.0,
        }
    }

    pub fn levels(&self) -> Vec<f64> {
        if self.initial <= 0.0 {
            return vec![0.0];
        }
        let mut out = Vec::new();
        let mut j = self.initial;
        // the small slack absorbs rounding in repeated multiplication
        while j <= self.max * (1.0 + 1e-9) {
            out.push(j);
            j *= self.growth;
        }
        out
    }
}

/// Prior hyperparameters: constant mean `theta`, kernel amplitude `phi1`
/// and inverse squared lengthscale `phi2`.
///
/// Stored on the natural scale so that the key-value record round-trips
/// exactly; optimizers work on `(theta, ln phi1, ln phi2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    pub theta: f64,
    pub phi1: f64,
    pub phi2: f64,
}

impl HyperParams {
    pub fn new(theta: f64, phi1: f64, phi2: f64) -> Result<Self> {
        let h = HyperParams { theta, phi1, phi2 };
        h.validate()?;
        Ok(h)
    }

    pub fn from_log(theta: f64, log_phi1: f64, log_phi2: f64) -> Result<Self> {
        Self::new(theta, log_phi1.exp(), log_phi2.exp())
    }

    pub fn from_vector(v: [f64; 3]) -> Result<Self> {
        Self::from_log(v[0], v[1], v[2])
    }

    /// `(theta, ln phi1, ln phi2)`, the optimizer's coordinates.
    pub fn to_vector(&self) -> [f64; 3] {
        [self.theta, self.log_phi1(), self.log_phi2()]
    }

    pub fn log_phi1(&self) -> f64 {
        self.phi1.ln()
    }

    pub fn log_phi2(&self) -> f64 {
        self.phi2.ln()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.theta.is_finite()
            && self.phi1.is_finite()
            && self.phi1 > 0.0
            && self.phi2.is_finite()
            && self.phi2 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidHyper(format!(
                "theta={}, phi1={}, phi2={}",
                self.theta, self.phi1, self.phi2
            )))
        }
    }

    /// Prior mean `m_theta(x)`; constant for the shipped model.
    pub fn prior_mean(&self, _x: &[f64]) -> f64 {
        self.theta
    }

    /// Prior variance `k(x, x) = phi1^2`.
    pub fn prior_var(&self) -> f64 {
        self.phi1 * self.phi1
    }

    pub fn prior_std(&self) -> f64 {
        self.phi1
    }
}

/// Closed interval `[lo, hi]` in output units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn centered(center: f64, std: f64, q: f64) -> Self {
        Interval {
            lo: center - q * std,
            hi: center + q * std,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }
}

pub fn squared_distance(x: &[f64], x2: &[f64]) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(Error::DimensionMismatch {
            left: x.len(),
            right: x2.len(),
        });
    }
    Ok(x.iter().zip(x2).map(|(a, b)| (a - b) * (a - b)).sum())
}

pub fn kernel_eval(hyper: &HyperParams, x: &[f64], x2: &[f64]) -> Result<f64> {
    let d2 = squared_distance(x, x2)?;
    Ok(hyper.prior_var() * (-d2 * hyper.phi2).exp())
}

pub fn prior_interval(hyper: &HyperParams, x: &[f64], q: f64) -> Interval {
    Interval::centered(hyper.prior_mean(x), hyper.prior_std(), q)
}

/// Pairwise squared distances of a point set. Does not depend on the
/// hyperparameters, so callers that refit often can cache it.
pub fn distance_matrix(inputs: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let t = inputs.len();
    let mut d = DMatrix::zeros(t, t);
    for i in 0..t {
        for j in 0..i {
            let v = squared_distance(&inputs[i], &inputs[j])?;
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(d)
}

/// Unit-amplitude correlation matrix `exp(-D * phi2)`.
pub fn correlation_matrix(dist: &DMatrix<f64>, phi2: f64) -> DMatrix<f64> {
    dist.map(|d| (-d * phi2).exp())
}

/// Factorizes `corr + jitter * I`, escalating the jitter on failure.
///
/// The Gram matrix of the model is `phi1^2 * (corr + jitter * I)`, so the
/// relative jitter is independent of the amplitude.
pub fn factor_with_jitter(
    corr: &DMatrix<f64>,
    jitter: &Jitter,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let levels = jitter.levels();
    for &j in &levels {
        let mut m = corr.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += j;
        }
        if let Some(chol) = Cholesky::new(m) {
            let l = chol.l_dirty();
            if (0..l.nrows()).all(|i| l[(i, i)] > 0.0 && l[(i, i)].is_finite()) {
                return Ok((chol, j));
            }
        }
    }
    Err(Error::Cholesky { attempted: levels })
}

/// A GP conditioned on one task's training split.
#[derive(Debug, Clone)]
pub struct Posterior {
    hyper: HyperParams,
    train_inputs: Vec<Vec<f64>>,
    /// Lower Cholesky factor of the jittered Gram matrix `K`.
    chol_l: DMatrix<f64>,
    /// `K^{-1} (Y - m(X))`.
    weights: DVector<f64>,
    jitter: f64,
}

impl Posterior {
    pub fn hyper(&self) -> &HyperParams {
        &self.hyper
    }

    pub fn train_inputs(&self) -> &[Vec<f64>] {
        &self.train_inputs
    }

    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol_l
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn cross_kernel(&self, x: &[f64]) -> Result<DVector<f64>> {
        let mut k = DVector::zeros(self.train_inputs.len());
        for (i, xi) in self.train_inputs.iter().enumerate() {
            k[i] = kernel_eval(&self.hyper, x, xi)?;
        }
        Ok(k)
    }

    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        Ok(self.mean_var(x)?.0)
    }

    pub fn var(&self, x: &[f64]) -> Result<f64> {
        Ok(self.mean_var(x)?.1)
    }

    pub fn std(&self, x: &[f64]) -> Result<f64> {
        Ok(self.var(x)?.sqrt())
    }

    /// Posterior mean and variance at `x`; the variance is clamped at zero.
    pub fn mean_var(&self, x: &[f64]) -> Result<(f64, f64)> {
        let m = self.hyper.prior_mean(x);
        let prior_var = self.hyper.prior_var();
        if self.train_inputs.is_empty() {
            return Ok((m, prior_var));
        }
        if x.len() != self.train_inputs[0].len() {
            return Err(Error::DimensionMismatch {
                left: x.len(),
                right: self.train_inputs[0].len(),
            });
        }
        let k = self.cross_kernel(x)?;
        let mean = m + k.dot(&self.weights);
        let v = self
            .chol_l
            .solve_lower_triangular(&k)
            .ok_or(Error::Numerical("triangular solve failed".into()))?;
        let var = (prior_var - v.norm_squared()).max(0.0);
        Ok((mean, var))
    }
}

/// Conditions the prior on `(inputs, outputs)`.
pub fn fit_posterior(
    hyper: &HyperParams,
    inputs: &[Vec<f64>],
    outputs: &[f64],
    jitter: &Jitter,
) -> Result<Posterior> {
    hyper.validate()?;
    if inputs.len() != outputs.len() {
        return Err(Error::LengthMismatch {
            inputs: inputs.len(),
            outputs: outputs.len(),
        });
    }
    if inputs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite training input".into()));
    }
    let t = inputs.len();
    if t == 0 {
        return Ok(Posterior {
            hyper: *hyper,
            train_inputs: Vec::new(),
            chol_l: DMatrix::zeros(0, 0),
            weights: DVector::zeros(0),
            jitter: 0.0,
        });
    }
    let dist = distance_matrix(inputs)?;
    let gram = correlation_matrix(&dist, hyper.phi2) * hyper.prior_var();
    let scale = hyper.prior_var();
    let levels = jitter.levels();
    for &j in &levels {
        let mut m = gram.clone();
        for i in 0..t {
            m[(i, i)] += j * scale;
        }
        if let Some(chol) = Cholesky::new(m) {
            let l = chol.l();
            if !(0..t).all(|i| l[(i, i)] > 0.0 && l[(i, i)].is_finite()) {
                continue;
            }
            let resid =
                DVector::from_iterator(t, inputs.iter().zip(outputs).map(|(x, y)| y - hyper.prior_mean(x)));
            let weights = chol.solve(&resid);
            return Ok(Posterior {
                hyper: *hyper,
                train_inputs: inputs.to_vec(),
                chol_l: l,
                weights,
                jitter: j,
            });
        }
    }
    Err(Error::Cholesky { attempted: levels })
}

pub fn posterior_interval(post: &Posterior, x: &[f64], q: f64) -> Result<Interval> {
    let (m, v) = post.mean_var(x)?;
    Ok(Interval::centered(m, v.sqrt(), q))
}

/// Negative marginal log-likelihood of `outputs` under the GP prior:
/// `0.5 r^T K^{-1} r + 0.5 log|K| + (t/2) log(2 pi)` with `r = y - m(X)`.
pub fn neg_mll(
    hyper: &HyperParams,
    inputs: &[Vec<f64>],
    outputs: &[f64],
    jitter: &Jitter,
) -> Result<f64> {
    Ok(neg_mll_with_grad(hyper, inputs, outputs, jitter)?.0)
}

/// `neg_mll` together with its gradient in `(theta, ln phi1, ln phi2)`.
pub fn neg_mll_with_grad(
    hyper: &HyperParams,
    inputs: &[Vec<f64>],
    outputs: &[f64],
    jitter: &Jitter,
) -> Result<(f64, [f64; 3])> {
    hyper.validate()?;
    if inputs.is_empty() {
        return Err(Error::InvalidInput("neg_mll needs at least one point".into()));
    }
    if inputs.len() != outputs.len() {
        return Err(Error::LengthMismatch {
            inputs: inputs.len(),
            outputs: outputs.len(),
        });
    }
    let t = inputs.len();
    let dist = distance_matrix(inputs)?;
    let corr = correlation_matrix(&dist, hyper.phi2);
    let (chol, _) = factor_with_jitter(&corr, jitter)?;
    let s2 = hyper.prior_var();

    let resid = DVector::from_iterator(
        t,
        inputs.iter().zip(outputs).map(|(x, y)| y - hyper.prior_mean(x)),
    );
    // K = s2 * B, so K^{-1} r = B^{-1} r / s2.
    let alpha = chol.solve(&resid) / s2;
    let quad = resid.dot(&alpha);
    let l = chol.l_dirty();
    let logdet_b: f64 = (0..t).map(|i| 2.0 * l[(i, i)].ln()).sum();
    let logdet = logdet_b + t as f64 * s2.ln();
    let value = 0.5 * quad + 0.5 * logdet + 0.5 * t as f64 * (2.0 * PI).ln();

    let d_theta = -alpha.sum();
    let d_log_phi1 = t as f64 - quad;
    // dK/d ln phi2 = -phi2 * s2 * (D o E)
    let k_inv = chol.inverse() / s2;
    let mut d_log_phi2 = 0.0;
    for i in 0..t {
        for j in 0..t {
            let dk = -hyper.phi2 * s2 * dist[(i, j)] * corr[(i, j)];
            d_log_phi2 += (k_inv[(i, j)] - alpha[i] * alpha[j]) * dk;
        }
    }
    d_log_phi2 *= 0.5;
    Ok((value, [d_theta, d_log_phi1, d_log_phi2]))
}

/// Record `{theta, phi1, phi2}` with 17 significant digits per value.
pub fn format_real(v: f64) -> String {
    format!("{:.16e}", v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn h(theta: f64, phi1: f64, phi2: f64) -> HyperParams {
        HyperParams::new(theta, phi1, phi2).unwrap()
    }

    #[test]
    fn kernel_at_identical_points_is_amplitude_squared() {
        assert_eq!(kernel_eval(&h(0.0, 3.0, 7.3), &[0.4], &[0.4]).unwrap(), 9.0);
    }

    #[test]
    fn kernel_closed_form() {
        let k = kernel_eval(&h(0.0, 1.0, 1.0), &[0.0], &[1.0]).unwrap();
        assert_relative_eq!(k, (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(k, 0.367879, epsilon = 1e-6);
    }

    #[test]
    fn kernel_flat_limit() {
        let k = kernel_eval(&h(0.0, 1.0, 1e-300), &[0.0], &[1.0]).unwrap();
        assert_eq!(k, 1.0);
    }

    #[test]
    fn kernel_dimension_mismatch() {
        let err = kernel_eval(&h(0.0, 1.0, 1.0), &[0.0, 1.0], &[1.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn invalid_hyper_rejected() {
        assert!(HyperParams::new(0.0, 0.0, 1.0).is_err());
        assert!(HyperParams::new(f64::NAN, 1.0, 1.0).is_err());
        assert!(HyperParams::from_log(0.0, 1e6, 0.0).is_err());
    }

    #[test]
    fn prior_intervals() {
        let i = prior_interval(&h(0.0, 1.0, 1.0), &[0.3], 1.64);
        assert_eq!((i.lo, i.hi), (-1.64, 1.64));
        let i = prior_interval(&h(2.0, 3.0, 1.0), &[0.3], 2.0);
        assert_eq!((i.lo, i.hi), (-4.0, 8.0));
        let i = prior_interval(&h(5.0, 1e-300, 1.0), &[0.3], 1.64);
        assert_eq!((i.lo, i.hi), (5.0, 5.0));
    }

    #[test]
    fn empty_posterior_is_prior() {
        let p = fit_posterior(&h(1.0, 2.0, 3.0), &[], &[], &Jitter::default()).unwrap();
        assert_eq!(p.mean_var(&[0.7]).unwrap(), (1.0, 4.0));
        let p = fit_posterior(&h(0.0, 1.0, 3.0), &[], &[], &Jitter::default()).unwrap();
        let i = posterior_interval(&p, &[0.2], 1.64).unwrap();
        assert_eq!((i.lo, i.hi), (-1.64, 1.64));
    }

    #[test]
    fn one_point_posterior() {
        let p = fit_posterior(&h(0.0, 1.0, 1.0), &[vec![0.0]], &[2.0], &Jitter::default()).unwrap();
        let (m, v) = p.mean_var(&[1.0]).unwrap();
        assert_relative_eq!(m, 0.735759, epsilon = 1e-6);
        assert_relative_eq!(v, 0.864665, epsilon = 1e-6);
        let (m0, v0) = p.mean_var(&[0.0]).unwrap();
        assert_relative_eq!(m0, 2.0, epsilon = 1e-7);
        assert!(v0 <= 1e-8);
        let i = posterior_interval(&p, &[0.0], 1.64).unwrap();
        assert_relative_eq!(i.lo, 2.0, epsilon = 1e-3);
        assert_relative_eq!(i.hi, 2.0, epsilon = 1e-3);
        let i = posterior_interval(&p, &[1.0], 1.0).unwrap();
        assert_relative_eq!(i.lo, -0.194115, epsilon = 1e-6);
        assert_relative_eq!(i.hi, 1.665633, epsilon = 1e-6);
    }

    #[test]
    fn cholesky_factor_is_lower_with_positive_diagonal() {
        let xs: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 / 5.0]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x[0].sin()).collect();
        let p = fit_posterior(&h(0.0, 1.5, 4.0), &xs, &ys, &Jitter::default()).unwrap();
        let l = p.cholesky_factor();
        for i in 0..l.nrows() {
            assert!(l[(i, i)] > 0.0);
            for j in i + 1..l.ncols() {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn neg_mll_scalar_cases() {
        let j = Jitter::none();
        let v = neg_mll(&h(0.0, 1.0, 1.0), &[vec![0.0]], &[0.0], &j).unwrap();
        assert_relative_eq!(v, 0.918939, epsilon = 1e-6);
        let v = neg_mll(&h(0.0, 1.0, 1.0), &[vec![0.0]], &[2.0], &j).unwrap();
        assert_relative_eq!(v, 2.918939, epsilon = 1e-6);
    }

    #[test]
    fn neg_mll_rank_deficient() {
        let xs = vec![vec![0.5], vec![0.5]];
        let ys = [1.0, 1.0];
        let err = neg_mll(&h(0.0, 1.0, 1.0), &xs, &ys, &Jitter::none()).unwrap_err();
        assert!(matches!(err, Error::Cholesky { .. }));
        let v = neg_mll(&h(0.0, 1.0, 1.0), &xs, &ys, &Jitter::default()).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn neg_mll_requires_data() {
        assert!(neg_mll(&h(0.0, 1.0, 1.0), &[], &[], &Jitter::default()).is_err());
    }

    #[test]
    fn jitter_levels_escalate_tenfold() {
        let l = Jitter::default().levels();
        assert_eq!(l.len(), 5);
        assert_eq!(l[0], 1e-8);
        assert_relative_eq!(l[4], 1e-4, max_relative = 1e-12);
        assert_eq!(Jitter::none().levels(), vec![0.0]);
    }

    #[test]
    fn cholesky_failure_reports_levels() {
        let xs = vec![vec![0.5], vec![f64::INFINITY]];
        assert!(fit_posterior(&h(0.0, 1.0, 1.0), &xs, &[0.0, 0.0], &Jitter::default()).is_err());
    }
}
