//! GLM likelihoods and the proximal-gradient solver.
//!
//! A GLM with cumulant `G` has mean `G'(x'b)`. The negative log-likelihood,
//! with the `b`-independent normalizer dropped and averaged over rows, is
//!
//! ```text
//! nll(b) = (1/n) * sum_i [ -r_i * x_i'b + G(x_i'b) ]
//! ```
//!
//! whose gradient is `(1/n) * sum_i (G'(x_i'b) - r_i) * x_i`.
//!
//! Both transfer steps reduce to one problem: minimize
//! `f(reference + delta) + lambda * |delta|_1` over `delta`, starting at zero.
//! [`minimize_l1_deviation`] solves it by proximal gradient with
//! soft-thresholding, either on a fixed decaying step schedule or with a
//! backtracking line search that guarantees monotone descent.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Result, TclError};

/// Inverse link / cumulant family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkKind {
    /// `G(x) = x^2/2`, `G'(x) = x` (least squares).
    Identity,
    /// `G(x) = log(1 + e^x)`, `G'(x) = 1/(1 + e^-x)` (logistic).
    Sigmoid,
    /// `G(x) = x + e^-x`, `G'(x) = 1 - e^-x`, defined for `x >= 0`.
    Exponential,
}

impl LinkKind {
    /// Cumulant `G`.
    pub fn cumulant(self, x: f64) -> f64 {
        match self {
            LinkKind::Identity => 0.5 * x * x,
            LinkKind::Sigmoid => softplus(x),
            LinkKind::Exponential => x + (-x).exp(),
        }
    }

    /// Mean function `G'`.
    pub fn mean(self, x: f64) -> f64 {
        match self {
            LinkKind::Identity => x,
            LinkKind::Sigmoid => sigmoid(x),
            LinkKind::Exponential => 1.0 - (-x).exp(),
        }
    }

    pub fn in_domain(self, x: f64) -> bool {
        match self {
            LinkKind::Exponential => x >= 0.0,
            _ => x.is_finite(),
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `log(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Which column of a dataset plays the GLM response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Response {
    Treatment,
    Outcome,
}

impl Response {
    pub fn values(self, data: &Dataset) -> &Array1<f64> {
        match self {
            Response::Treatment => data.treatment(),
            Response::Outcome => data.outcome(),
        }
    }
}

/// A fitted GLM: link plus coefficient vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit {
    pub link: LinkKind,
    pub coefficients: Array1<f64>,
}

impl GlmFit {
    pub fn new(link: LinkKind, coefficients: Array1<f64>) -> Result<Self> {
        if coefficients.iter().any(|b| !b.is_finite()) {
            return Err(TclError::Objective("non-finite coefficient".into()));
        }
        Ok(Self { link, coefficients })
    }

    pub fn zeros(link: LinkKind, d: usize) -> Self {
        Self {
            link,
            coefficients: Array1::zeros(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    /// `x_i'b` for every row.
    pub fn linear_index(&self, data: &Dataset) -> Result<Array1<f64>> {
        check_dim(data, self.dim())?;
        Ok(data.covariates().dot(&self.coefficients))
    }

    /// `G'(x_i'b)` for every row.
    pub fn predict_mean(&self, data: &Dataset) -> Result<Array1<f64>> {
        let eta = self.linear_index(data)?;
        for (row, &v) in eta.iter().enumerate() {
            if !self.link.in_domain(v) {
                return Err(TclError::LinkDomain { row: row + 1, index: v });
            }
        }
        Ok(eta.mapv(|v| self.link.mean(v)))
    }
}

fn check_dim(data: &Dataset, d: usize) -> Result<()> {
    if data.d() != d {
        return Err(TclError::Shape(format!(
            "coefficient length {d} does not match dataset d={}",
            data.d()
        )));
    }
    Ok(())
}

/// A smooth loss over a parameter vector, with gradient.
pub trait SmoothObjective {
    fn dim(&self) -> usize;

    fn value(&self, params: ArrayView1<f64>) -> Result<f64>;

    fn gradient(&self, params: ArrayView1<f64>) -> Result<Array1<f64>>;

    fn value_and_gradient(&self, params: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
        Ok((self.value(params)?, self.gradient(params)?))
    }
}

/// Mean GLM negative log-likelihood of one dataset column.
#[derive(Debug, Clone, Copy)]
pub struct GlmObjective<'a> {
    pub data: &'a Dataset,
    pub response: Response,
    pub link: LinkKind,
}

impl<'a> GlmObjective<'a> {
    pub fn new(data: &'a Dataset, response: Response, link: LinkKind) -> Self {
        Self { data, response, link }
    }

    fn index(&self, params: ArrayView1<f64>) -> Result<Array1<f64>> {
        if params.len() != self.data.d() {
            return Err(TclError::Shape(format!(
                "coefficient length {} does not match dataset d={}",
                params.len(),
                self.data.d()
            )));
        }
        let eta = self.data.covariates().dot(&params);
        for (row, &v) in eta.iter().enumerate() {
            if !self.link.in_domain(v) {
                return Err(TclError::LinkDomain { row: row + 1, index: v });
            }
        }
        Ok(eta)
    }
}

impl SmoothObjective for GlmObjective<'_> {
    fn dim(&self) -> usize {
        self.data.d()
    }

    fn value(&self, params: ArrayView1<f64>) -> Result<f64> {
        let eta = self.index(params)?;
        let r = self.response.values(self.data);
        let total: f64 = eta
            .iter()
            .zip(r.iter())
            .map(|(&e, &ri)| -ri * e + self.link.cumulant(e))
            .sum();
        Ok(total / self.data.n() as f64)
    }

    fn gradient(&self, params: ArrayView1<f64>) -> Result<Array1<f64>> {
        Ok(self.value_and_gradient(params)?.1)
    }

    fn value_and_gradient(&self, params: ArrayView1<f64>) -> Result<(f64, Array1<f64>)> {
        let eta = self.index(params)?;
        let r = self.response.values(self.data);
        let n = self.data.n() as f64;
        let mut total = 0.0;
        let mut resid = Array1::zeros(eta.len());
        for (i, (&e, &ri)) in eta.iter().zip(r.iter()).enumerate() {
            total += -ri * e + self.link.cumulant(e);
            resid[i] = self.link.mean(e) - ri;
        }
        let grad = self.data.covariates().t().dot(&resid) / n;
        Ok((total / n, grad))
    }
}

/// Mean negative log-likelihood of `fit` on one column of `data`.
pub fn nll(data: &Dataset, response: Response, fit: &GlmFit) -> Result<f64> {
    GlmObjective::new(data, response, fit.link).value(fit.coefficients.view())
}

/// Gradient of [`nll`] with respect to the coefficients.
pub fn nll_gradient(data: &Dataset, response: Response, fit: &GlmFit) -> Result<Array1<f64>> {
    GlmObjective::new(data, response, fit.link).gradient(fit.coefficients.view())
}

/// Proximal-gradient settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub initial_step: f64,
    /// Multiplicative step decay applied every `decay_every` iterations.
    pub step_decay: f64,
    pub decay_every: usize,
    /// Relative objective change below which an iteration counts as stalled.
    pub tolerance: f64,
    /// Number of consecutive stalled iterations that stops the solver.
    pub patience: usize,
    /// l1 strength.
    pub lambda: f64,
    /// Backtracking line search. Starting from twice the previous accepted
    /// step, the step is halved until the quadratic upper bound holds, which
    /// makes the composite objective non-increasing.
    pub line_search: bool,
    /// Keep every k-th composite objective value in the trace; 0 keeps none.
    pub history_every: usize,
}

impl Default for SolverConfig {
    /// 8000 iterations at step 0.02, halved every 2000 iterations.
    fn default() -> Self {
        Self {
            max_iters: 8000,
            initial_step: 0.02,
            step_decay: 0.5,
            decay_every: 2000,
            tolerance: 1e-10,
            patience: 10,
            lambda: 0.0,
            line_search: false,
            history_every: 1,
        }
    }
}

impl SolverConfig {
    /// Backtracking variant, starting from unit step.
    pub fn backtracking() -> Self {
        Self {
            initial_step: 1.0,
            line_search: true,
            ..Self::default()
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TclError::InvalidConfig(m.to_string()));
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return bad("initial_step must be positive");
        }
        if !(self.step_decay > 0.0 && self.step_decay <= 1.0) {
            return bad("step_decay must lie in (0, 1]");
        }
        if self.decay_every == 0 {
            return bad("decay_every must be at least 1");
        }
        if !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be a nonnegative finite number");
        }
        Ok(())
    }

    fn scheduled_step(&self, iter: usize) -> f64 {
        self.initial_step * self.step_decay.powi((iter / self.decay_every) as i32)
    }
}

/// What the solver did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub iterations_run: usize,
    /// Composite objective `f + lambda*|delta|_1` at the returned point.
    pub final_objective: f64,
    pub converged: bool,
    pub objective_history: Vec<f64>,
}

/// Coordinate-wise `sign(v) * max(|v| - threshold, 0)`.
pub fn soft_threshold(v: f64, threshold: f64) -> f64 {
    if v > threshold {
        v - threshold
    } else if v < -threshold {
        v + threshold
    } else {
        0.0
    }
}

fn l1(v: &Array1<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn prox_step(delta: &Array1<f64>, grad: &Array1<f64>, step: f64, lambda: f64) -> Array1<f64> {
    let thr = step * lambda;
    delta
        .iter()
        .zip(grad.iter())
        .map(|(&d, &g)| soft_threshold(d - step * g, thr))
        .collect()
}

/// Minimizes `objective(reference + delta) + lambda * |delta|_1` over `delta`
/// by proximal gradient, starting from `init` (zero when `None`).
///
/// Returns the minimizing `delta`. Link-domain violations at the starting
/// point are errors; with line search enabled a trial point outside the
/// domain only shrinks the step.
pub fn minimize_l1_deviation<O: SmoothObjective + ?Sized>(
    objective: &O,
    reference: &Array1<f64>,
    init: Option<&Array1<f64>>,
    config: &SolverConfig,
) -> Result<(Array1<f64>, SolveTrace)> {
    config.validate()?;
    let d = objective.dim();
    if reference.len() != d {
        return Err(TclError::Shape(format!(
            "reference length {} does not match objective dimension {d}",
            reference.len()
        )));
    }
    let lambda = config.lambda;
    let mut delta = match init {
        Some(v) if v.len() != d => {
            return Err(TclError::Shape("initial point has the wrong dimension".into()))
        }
        Some(v) => v.clone(),
        None => Array1::zeros(d),
    };

    let (mut smooth, mut grad) = objective.value_and_gradient((reference + &delta).view())?;
    let mut composite = smooth + lambda * l1(&delta);
    let mut history = Vec::new();
    if config.history_every > 0 {
        history.push(composite);
    }
    let mut stalled = 0usize;
    let mut converged = false;
    let mut iterations = 0usize;
    let mut step = config.initial_step;

    for iter in 0..config.max_iters {
        iterations = iter + 1;
        let next = if config.line_search {
            let mut t = if iter == 0 { config.initial_step } else { (2.0 * step).min(1e8) };
            let mut accepted = None;
            for _ in 0..80 {
                let cand = prox_step(&delta, &grad, t, lambda);
                let diff = &cand - &delta;
                match objective.value_and_gradient((reference + &cand).view()) {
                    Ok((f_new, g_new)) => {
                        let bound = smooth + grad.dot(&diff) + diff.dot(&diff) / (2.0 * t);
                        let monotone = f_new + lambda * l1(&cand) <= composite;
                        if monotone && f_new <= bound + 1e-12 * smooth.abs().max(1.0) {
                            accepted = Some((cand, f_new, g_new));
                            break;
                        }
                    }
                    Err(TclError::LinkDomain { .. }) => {}
                    Err(e) => return Err(e),
                }
                t *= 0.5;
            }
            step = t;
            match accepted {
                Some(a) => a,
                None => {
                    // no admissible step: stationary to machine precision
                    converged = true;
                    break;
                }
            }
        } else {
            let t = config.scheduled_step(iter);
            let cand = prox_step(&delta, &grad, t, lambda);
            let (f_new, g_new) = objective.value_and_gradient((reference + &cand).view())?;
            (cand, f_new, g_new)
        };

        let (cand, f_new, g_new) = next;
        let new_composite = f_new + lambda * l1(&cand);
        if !new_composite.is_finite() {
            return Err(TclError::Objective(format!(
                "objective diverged at iteration {iterations}"
            )));
        }
        let change = (new_composite - composite).abs();
        delta = cand;
        smooth = f_new;
        grad = g_new;
        composite = new_composite;
        if config.history_every > 0 && iterations % config.history_every == 0 {
            history.push(composite);
        }
        if change <= config.tolerance * (1.0 + composite.abs()) {
            stalled += 1;
            if stalled >= config.patience {
                converged = true;
                break;
            }
        } else {
            stalled = 0;
        }
    }

    Ok((
        delta,
        SolveTrace {
            iterations_run: iterations,
            final_objective: composite,
            converged,
            objective_history: history,
        },
    ))
}

/// Unpenalized maximum-likelihood fit (the solver run with `lambda = 0`
/// from the zero vector). The `lambda` field of `config` is ignored.
pub fn fit_mle(
    data: &Dataset,
    response: Response,
    link: LinkKind,
    config: &SolverConfig,
) -> Result<(GlmFit, SolveTrace)> {
    let objective = GlmObjective::new(data, response, link);
    let zero = Array1::zeros(data.d());
    let (coef, trace) = minimize_l1_deviation(&objective, &zero, None, &config.with_lambda(0.0))?;
    Ok((GlmFit::new(link, coef)?, trace))
}

/// l1-penalized deviation from `reference`: returns `delta` minimizing
/// `nll(reference + delta) + lambda * |delta|_1`, started at zero.
pub fn fit_l1_deviation(
    data: &Dataset,
    response: Response,
    link: LinkKind,
    reference: &GlmFit,
    config: &SolverConfig,
) -> Result<(Array1<f64>, SolveTrace)> {
    check_dim(data, reference.dim())?;
    let objective = GlmObjective::new(data, response, link);
    minimize_l1_deviation(&objective, &reference.coefficients, None, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn one_row(x: f64, z: f64) -> Dataset {
        Dataset::new(array![[x]], array![z], array![z]).unwrap()
    }

    #[test]
    fn sigmoid_nll_at_zero_is_log_two() {
        let data = Dataset::new(
            array![[1.0, 2.0], [-0.5, 0.3], [0.2, 0.0]],
            array![1.0, 0.0, 1.0],
            array![0.1, 0.2, 0.3],
        )
        .unwrap();
        let v = nll(&data, Response::Treatment, &GlmFit::zeros(LinkKind::Sigmoid, 2)).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
        let v = nll(&data, Response::Outcome, &GlmFit::zeros(LinkKind::Identity, 2)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn sigmoid_single_row_value() {
        let fit = GlmFit::new(LinkKind::Sigmoid, array![2.0]).unwrap();
        let v = nll(&one_row(1.0, 1.0), Response::Treatment, &fit).unwrap();
        let expected = -2.0 + (1.0 + 2f64.exp()).ln();
        assert!((v - expected).abs() < 1e-14);
        assert!((v - 0.126928).abs() < 1e-6);
    }

    #[test]
    fn balanced_gradient_at_zero() {
        let data = Dataset::new(
            array![[1.0], [-1.0], [2.0], [-2.0]],
            array![1.0, 0.0, 0.0, 1.0],
            array![0.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let g = nll_gradient(&data, Response::Treatment, &GlmFit::zeros(LinkKind::Sigmoid, 1)).unwrap();
        let expected: f64 = [(1.0, 1.0), (-1.0, 0.0), (2.0, 0.0), (-2.0, 1.0)]
            .iter()
            .map(|(x, z)| (0.5 - z) * x)
            .sum::<f64>()
            / 4.0;
        assert!((g[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn identity_gradient_is_least_squares() {
        let data = Dataset::new(
            array![[1.0, 0.5], [2.0, -1.0], [0.0, 3.0]],
            array![0.0, 1.0, 0.0],
            array![1.0, -2.0, 0.5],
        )
        .unwrap();
        let b = array![0.3, -0.4];
        let g = nll_gradient(&data, Response::Outcome, &GlmFit::new(LinkKind::Identity, b.clone()).unwrap()).unwrap();
        let resid = data.covariates().dot(&b) - data.outcome();
        let expected = data.covariates().t().dot(&resid) / 3.0;
        for (a, e) in g.iter().zip(expected.iter()) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn exponential_link_rejects_negative_index() {
        let data = Dataset::new(array![[1.0], [-1.0]], array![1.0, 0.0], array![0.3, 0.1]).unwrap();
        let fit = GlmFit::new(LinkKind::Exponential, array![0.5]).unwrap();
        match nll(&data, Response::Outcome, &fit) {
            Err(TclError::LinkDomain { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn identity_mle_recovers_exact_line() {
        let data = Dataset::new(array![[1.0], [2.0]], array![0.0, 1.0], array![1.0, 2.0]).unwrap();
        let (fit, trace) = fit_mle(&data, Response::Outcome, LinkKind::Identity, &SolverConfig::backtracking()).unwrap();
        assert!(trace.converged);
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn identity_mle_matches_normal_equations() {
        let x = array![[1.0, 0.2], [1.0, -0.7], [1.0, 1.5], [1.0, 0.1], [1.0, -1.2]];
        let y = array![0.3, -0.1, 1.2, 0.4, -0.6];
        let data = Dataset::new(x.clone(), Array1::zeros(5), y.clone()).unwrap();
        let (fit, _) = fit_mle(&data, Response::Outcome, LinkKind::Identity, &SolverConfig::backtracking()).unwrap();
        // 2x2 normal equations by Cramer's rule
        let g = x.t().dot(&x);
        let r = x.t().dot(&y);
        let det = g[[0, 0]] * g[[1, 1]] - g[[0, 1]] * g[[1, 0]];
        let b0 = (r[0] * g[[1, 1]] - g[[0, 1]] * r[1]) / det;
        let b1 = (g[[0, 0]] * r[1] - g[[1, 0]] * r[0]) / det;
        assert!((fit.coefficients[0] - b0).abs() < 1e-5);
        assert!((fit.coefficients[1] - b1).abs() < 1e-5);
    }

    #[test]
    fn separable_logistic_does_not_converge() {
        let x = Array2::from_shape_fn((20, 1), |(i, _)| i as f64 - 9.5);
        let z = Array1::from_iter((0..20).map(|i| if i >= 10 { 1.0 } else { 0.0 }));
        let data = Dataset::new(x, z, Array1::zeros(20)).unwrap();
        let cfg = SolverConfig {
            max_iters: 300,
            ..SolverConfig::default()
        };
        let (fit, trace) = fit_mle(&data, Response::Treatment, LinkKind::Sigmoid, &cfg).unwrap();
        assert!(!trace.converged);
        assert!(fit.coefficients[0] > 0.0);
        assert!(fit.coefficients[0].is_finite());
    }

    #[test]
    fn huge_lambda_keeps_delta_exactly_zero() {
        let data = Dataset::new(
            array![[1.0, 0.5], [0.3, -1.0], [-0.2, 0.8], [1.1, 0.1]],
            array![1.0, 0.0, 1.0, 0.0],
            array![0.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let reference = GlmFit::new(LinkKind::Sigmoid, array![0.4, -0.3]).unwrap();
        let g = nll_gradient(&data, Response::Treatment, &reference).unwrap();
        let gmax = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for cfg in [SolverConfig::default(), SolverConfig::backtracking()] {
            let (delta, _) = fit_l1_deviation(
                &data,
                Response::Treatment,
                LinkKind::Sigmoid,
                &reference,
                &cfg.with_lambda(10.0 * gmax),
            )
            .unwrap();
            assert!(delta.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn one_prox_step_from_zero_soft_thresholds() {
        let data = Dataset::new(
            array![[1.0, 0.5, -0.2], [0.3, -1.0, 2.0], [-0.2, 0.8, 0.1]],
            array![1.0, 0.0, 1.0],
            array![0.0, 0.0, 0.0],
        )
        .unwrap();
        let reference = GlmFit::zeros(LinkKind::Sigmoid, 3);
        let g = nll_gradient(&data, Response::Treatment, &reference).unwrap();
        let (step, lambda) = (0.7, 0.05);
        let cfg = SolverConfig {
            max_iters: 1,
            initial_step: step,
            lambda,
            ..SolverConfig::default()
        };
        let (delta, _) = fit_l1_deviation(&data, Response::Treatment, LinkKind::Sigmoid, &reference, &cfg).unwrap();
        for j in 0..3 {
            let v = -step * g[j];
            let expected = v.signum() * (v.abs() - step * lambda).max(0.0);
            assert!((delta[j] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-1.0, 1.0), 0.0);
    }

    #[test]
    fn stable_link_helpers() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(800.0) - 1.0).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(LinkKind::Exponential.in_domain(0.0));
        assert!(!LinkKind::Exponential.in_domain(-1e-9));
        assert!((LinkKind::Exponential.mean(0.0)).abs() < 1e-15);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let data = one_row(1.0, 1.0);
        for cfg in [
            SolverConfig { max_iters: 0, ..SolverConfig::default() },
            SolverConfig { tolerance: 0.0, ..SolverConfig::default() },
            SolverConfig { step_decay: 1.5, ..SolverConfig::default() },
            SolverConfig { lambda: -1.0, ..SolverConfig::default() },
        ] {
            let r = fit_l1_deviation(&data, Response::Treatment, LinkKind::Sigmoid, &GlmFit::zeros(LinkKind::Sigmoid, 1), &cfg);
            assert!(matches!(r, Err(TclError::InvalidConfig(_))));
        }
    }
}
