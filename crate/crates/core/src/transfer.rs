//! Two-step nuisance transfer: a rough fit on the source domain, then an
//! l1-penalized correction on the target domain that estimates the sparse
//! target-minus-source difference.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::{Arm, Dataset, DomainPair};
use crate::error::{Result, TclError};
use crate::glm::{
    fit_l1_deviation, fit_mle, minimize_l1_deviation, GlmFit, LinkKind, Response, SmoothObjective,
    SolveTrace, SolverConfig,
};

/// Result of a source-fit / target-correction run for one GLM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferFit {
    pub source_fit: GlmFit,
    pub delta: Array1<f64>,
    /// `source_fit + delta`, element-wise.
    pub target_fit: GlmFit,
    pub lambda: f64,
    /// Trace of the correction step.
    pub trace: SolveTrace,
}

impl TransferFit {
    fn assemble(source_fit: GlmFit, delta: Array1<f64>, lambda: f64, trace: SolveTrace) -> Result<Self> {
        let target = &source_fit.coefficients + &delta;
        let target_fit = GlmFit::new(source_fit.link, target)?;
        Ok(Self {
            source_fit,
            delta,
            target_fit,
            lambda,
            trace,
        })
    }

    /// Number of nonzero coordinates in the estimated difference.
    pub fn support_size(&self) -> usize {
        self.delta.iter().filter(|&&v| v != 0.0).count()
    }
}

/// Treated-arm and control-arm outcome-regression transfers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrPairFit {
    pub treated: TransferFit,
    pub control: TransferFit,
}

impl OrPairFit {
    pub fn models(&self) -> OrModels {
        OrModels {
            treated: self.treated.target_fit.clone(),
            control: self.control.target_fit.clone(),
        }
    }

    pub fn arm(&self, arm: Arm) -> &TransferFit {
        match arm {
            Arm::Treated => &self.treated,
            Arm::Control => &self.control,
        }
    }
}

/// Fitted per-arm outcome models, however they were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrModels {
    pub treated: GlmFit,
    pub control: GlmFit,
}

impl OrModels {
    pub fn zeros(d: usize) -> Self {
        Self {
            treated: GlmFit::zeros(LinkKind::Identity, d),
            control: GlmFit::zeros(LinkKind::Identity, d),
        }
    }

    pub fn arm(&self, arm: Arm) -> &GlmFit {
        match arm {
            Arm::Treated => &self.treated,
            Arm::Control => &self.control,
        }
    }
}

/// Both treatment classes must be present for a propensity fit.
pub fn check_both_classes(data: &Dataset, domain: &str) -> Result<()> {
    let counts = data.group_counts();
    if counts.n_treated == 0 || counts.n_control == 0 {
        return Err(TclError::DegenerateDomain {
            domain: domain.into(),
            reason: format!(
                "{} treated and {} control rows; both classes are required",
                counts.n_treated, counts.n_control
            ),
        });
    }
    Ok(())
}

/// Logistic MLE of the treatment on the source domain.
pub fn rough_ps(source: &Dataset, config: &SolverConfig) -> Result<(GlmFit, SolveTrace)> {
    check_both_classes(source, "source")?;
    fit_mle(source, Response::Treatment, LinkKind::Sigmoid, config)
}

/// l1 correction of a source propensity fit on target treatment.
pub fn correct_ps(
    target: &Dataset,
    source_fit: &GlmFit,
    lambda: f64,
    config: &SolverConfig,
) -> Result<TransferFit> {
    check_both_classes(target, "target")?;
    let (delta, trace) = fit_l1_deviation(
        target,
        Response::Treatment,
        LinkKind::Sigmoid,
        source_fit,
        &config.with_lambda(lambda),
    )?;
    TransferFit::assemble(source_fit.clone(), delta, lambda, trace)
}

/// Propensity-score transfer across a domain pair with the sigmoid link.
pub fn transfer_ps(domains: &DomainPair, lambda: f64, config: &SolverConfig) -> Result<TransferFit> {
    check_both_classes(&domains.target, "target")?;
    let (source_fit, _) = rough_ps(&domains.source, config)?;
    correct_ps(&domains.target, &source_fit, lambda, config)
}

/// Least-squares fits of the outcome on each source arm.
pub fn rough_or(source: &Dataset, config: &SolverConfig) -> Result<OrModels> {
    let fit_arm = |arm: Arm| -> Result<GlmFit> {
        let rows = source.arm(arm, "source")?;
        Ok(fit_mle(&rows, Response::Outcome, LinkKind::Identity, config)?.0)
    };
    Ok(OrModels {
        treated: fit_arm(Arm::Treated)?,
        control: fit_arm(Arm::Control)?,
    })
}

/// Per-arm l1 correction of source outcome fits on target rows.
///
/// `lambda` is on the scale of the mean-squared-error objective
/// `(1/n_z) * sum (y - x'a)^2 + lambda * |a - a_s|_1`; since the identity-link
/// likelihood is half the mean squared error, the solver receives `lambda / 2`.
pub fn correct_or(
    target: &Dataset,
    source_fits: &OrModels,
    lambda: f64,
    config: &SolverConfig,
) -> Result<OrPairFit> {
    let fit_arm = |arm: Arm| -> Result<TransferFit> {
        let rows = target.arm(arm, "target")?;
        let reference = source_fits.arm(arm);
        let (delta, trace) = fit_l1_deviation(
            &rows,
            Response::Outcome,
            LinkKind::Identity,
            reference,
            &config.with_lambda(lambda / 2.0),
        )?;
        TransferFit::assemble(reference.clone(), delta, lambda, trace)
    };
    Ok(OrPairFit {
        treated: fit_arm(Arm::Treated)?,
        control: fit_arm(Arm::Control)?,
    })
}

/// Outcome-regression transfer for both arms.
pub fn transfer_or(domains: &DomainPair, lambda: f64, config: &SolverConfig) -> Result<OrPairFit> {
    for arm in [Arm::Treated, Arm::Control] {
        if domains.target.arm_rows(arm).is_empty() {
            return Err(TclError::EmptyArm {
                arm: arm.name().into(),
                domain: "target".into(),
            });
        }
    }
    let rough = rough_or(&domains.source, config)?;
    correct_or(&domains.target, &rough, lambda, config)
}

/// Constants entering the closed-form regularization strengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    /// Bound on `|x_ij|`.
    pub m_x: f64,
    /// Target noise scale.
    pub sigma: f64,
    /// Source noise scale.
    pub sigma_s: f64,
    /// Lower bound on the arm fractions.
    pub r: f64,
}

impl TheoryConstants {
    /// Heuristic plug-in values: `m_x` is the largest absolute covariate over
    /// both domains, `sigma_s` the residual SD of the source arm fits, `sigma`
    /// the residual SD of target rows around those fits, and `r` the smallest
    /// arm fraction in either domain.
    pub fn estimate(domains: &DomainPair, config: &SolverConfig) -> Result<Self> {
        let m_x = domains.target.max_abs_covariate().max(domains.source.max_abs_covariate());
        let rough = rough_or(&domains.source, config)?;
        let resid_sd = |data: &Dataset| -> Result<f64> {
            let mut ss = 0.0;
            for arm in [Arm::Treated, Arm::Control] {
                let rows = data.arm_rows(arm);
                if rows.is_empty() {
                    continue;
                }
                let sub = data.select_rows(&rows)?;
                let pred = rough.arm(arm).linear_index(&sub)?;
                ss += (sub.outcome() - &pred).mapv(|v| v * v).sum();
            }
            Ok((ss / data.n() as f64).sqrt().max(f64::EPSILON))
        };
        let frac = |data: &Dataset| {
            let c = data.group_counts();
            c.n_treated.min(c.n_control) as f64 / c.total() as f64
        };
        let r = frac(&domains.target).min(frac(&domains.source));
        if r <= 0.0 {
            return Err(TclError::DegenerateDomain {
                domain: "target or source".into(),
                reason: "an arm is empty".into(),
            });
        }
        Ok(Self {
            m_x: m_x.max(f64::EPSILON),
            sigma: resid_sd(&domains.target)?,
            sigma_s: resid_sd(&domains.source)?,
            r,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.m_x > 0.0 && self.sigma > 0.0 && self.sigma_s > 0.0 && self.r > 0.0 && self.r < 1.0) {
            return Err(TclError::InvalidConfig(format!("invalid theory constants {self:?}")));
        }
        Ok(())
    }
}

fn check_sizes(n: usize, n_s: usize, d: usize) -> Result<()> {
    if n == 0 || n_s == 0 || d == 0 {
        return Err(TclError::InvalidConfig("n, n_s and d must be at least 1".into()));
    }
    Ok(())
}

fn ps_formula(log_factor: f64, n: usize, n_s: usize, d: usize, c: &TheoryConstants) -> Result<f64> {
    check_sizes(n, n_s, d)?;
    c.validate()?;
    let (n, n_s, d) = (n as f64, n_s as f64, d as f64);
    let ratio = (n * d * d / n_s).max(25.0);
    Ok((5.0 * c.m_x * c.m_x * (log_factor * n * d).ln() / (2.0 * n) * ratio).sqrt())
}

fn or_formula(log_factor: f64, n: usize, n_s: usize, d: usize, c: &TheoryConstants) -> Result<f64> {
    check_sizes(n, n_s, d)?;
    c.validate()?;
    let (n, n_s, d) = (n as f64, n_s as f64, d as f64);
    let target_term = 100.0 * c.sigma * c.sigma / (c.r * n);
    let source_term = d * d * c.sigma_s * c.sigma_s / (c.r * n_s);
    Ok((2.0 * c.m_x * c.m_x * (log_factor * n * d).ln() * target_term.max(source_term)).sqrt())
}

/// `sqrt(5 M^2 log(6nd) / (2n) * max(25, n d^2 / n_s))`.
pub fn theory_lambda_ps(n: usize, n_s: usize, d: usize, constants: &TheoryConstants) -> Result<f64> {
    ps_formula(6.0, n, n_s, d, constants)
}

/// `sqrt(2 M^2 log(12nd) * max(100 sigma^2 / (r n), d^2 sigma_s^2 / (r n_s)))`.
pub fn theory_lambda_or(n: usize, n_s: usize, d: usize, constants: &TheoryConstants) -> Result<f64> {
    or_formula(12.0, n, n_s, d, constants)
}

/// Propensity and outcome strengths for the doubly robust estimator, which
/// use `log(10nd)` and `log(16nd)` in place of `log(6nd)` and `log(12nd)`.
pub fn theory_lambdas_dr(n: usize, n_s: usize, d: usize, constants: &TheoryConstants) -> Result<(f64, f64)> {
    Ok((ps_formula(10.0, n, n_s, d, constants)?, or_formula(16.0, n, n_s, d, constants)?))
}

/// Adapts a pair of closures to [`SmoothObjective`].
pub struct FnObjective<V, G> {
    dim: usize,
    value: V,
    gradient: G,
}

impl<V, G> FnObjective<V, G>
where
    V: Fn(ArrayView1<f64>) -> Result<f64>,
    G: Fn(ArrayView1<f64>) -> Result<Array1<f64>>,
{
    pub fn new(dim: usize, value: V, gradient: G) -> Self {
        Self { dim, value, gradient }
    }
}

impl<V, G> SmoothObjective for FnObjective<V, G>
where
    V: Fn(ArrayView1<f64>) -> Result<f64>,
    G: Fn(ArrayView1<f64>) -> Result<Array1<f64>>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, params: ArrayView1<f64>) -> Result<f64> {
        (self.value)(params)
    }

    fn gradient(&self, params: ArrayView1<f64>) -> Result<Array1<f64>> {
        (self.gradient)(params)
    }
}

/// Transfer for an arbitrary differentiable loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericTransfer {
    pub source: Array1<f64>,
    pub delta: Array1<f64>,
    pub target: Array1<f64>,
    pub lambda: f64,
    pub trace: SolveTrace,
}

/// Minimizes `target_loss(theta) + lambda * |theta - source_params|_1` by
/// optimizing over the difference `theta - source_params` from zero.
pub fn generic_transfer<O: SmoothObjective + ?Sized>(
    target_loss: &O,
    source_params: &Array1<f64>,
    lambda: f64,
    config: &SolverConfig,
) -> Result<GenericTransfer> {
    let (delta, trace) = minimize_l1_deviation(target_loss, source_params, None, &config.with_lambda(lambda))?;
    let target = source_params + &delta;
    Ok(GenericTransfer {
        source: source_params.clone(),
        delta,
        target,
        lambda,
        trace,
    })
}

/// Rough step for an arbitrary loss: unpenalized minimization from zero.
pub fn generic_rough<O: SmoothObjective + ?Sized>(
    source_loss: &O,
    config: &SolverConfig,
) -> Result<(Array1<f64>, SolveTrace)> {
    let zero = Array1::zeros(source_loss.dim());
    minimize_l1_deviation(source_loss, &zero, None, &config.with_lambda(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::GlmObjective;
    use ndarray::{array, Array2};

    fn quadratic(c: Array1<f64>) -> impl SmoothObjective {
        let c2 = c.clone();
        FnObjective::new(
            c.len(),
            move |t: ArrayView1<f64>| Ok(0.5 * (&t - &c).mapv(|v| v * v).sum()),
            move |t: ArrayView1<f64>| Ok(&t - &c2),
        )
    }

    fn small_pair() -> DomainPair {
        let target = Dataset::new(
            array![[1.0, 0.2], [0.5, -1.0], [-0.3, 0.7], [1.2, 0.4], [-0.8, -0.5], [0.1, 1.1]],
            array![1.0, 0.0, 1.0, 1.0, 0.0, 0.0],
            array![1.0, 0.5, 0.2, 1.5, -0.3, 0.0],
        )
        .unwrap();
        let source = Dataset::new(
            array![[0.9, 0.1], [0.4, -0.8], [-0.2, 0.6], [1.0, 0.3], [-0.7, -0.4], [0.2, 1.0], [0.3, 0.3]],
            array![1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0],
            array![0.8, 0.4, 0.1, 1.4, -0.2, 0.1, 0.6],
        )
        .unwrap();
        DomainPair::new(target, source).unwrap()
    }

    #[test]
    fn quadratic_closed_forms() {
        let c = array![0.5, -1.5, 2.0];
        let cfg = SolverConfig::backtracking();
        let fit = generic_transfer(&quadratic(c.clone()), &Array1::zeros(3), 0.0, &cfg).unwrap();
        for (a, b) in fit.target.iter().zip(c.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
        let fit = generic_transfer(&quadratic(c.clone()), &Array1::zeros(3), 2.5, &cfg).unwrap();
        assert!(fit.target.iter().all(|&v| v == 0.0));
        let fit = generic_transfer(&quadratic(c), &Array1::zeros(3), 1.0, &cfg).unwrap();
        let expected = [0.0, -0.5, 1.0];
        for (a, b) in fit.target.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn generic_path_reproduces_transfer_ps() {
        let pair = small_pair();
        let cfg = SolverConfig::backtracking();
        let ps = transfer_ps(&pair, 0.05, &cfg).unwrap();
        let rough = generic_rough(&GlmObjective::new(&pair.source, Response::Treatment, LinkKind::Sigmoid), &cfg).unwrap().0;
        assert_eq!(rough, ps.source_fit.coefficients);
        let obj = GlmObjective::new(&pair.target, Response::Treatment, LinkKind::Sigmoid);
        let g = generic_transfer(&obj, &rough, 0.05, &cfg).unwrap();
        assert_eq!(g.target, ps.target_fit.coefficients);
        assert_eq!(g.delta, ps.delta);
    }

    #[test]
    fn assembly_identity_is_exact() {
        let pair = small_pair();
        let fit = transfer_ps(&pair, 0.01, &SolverConfig::backtracking()).unwrap();
        let sum = &fit.source_fit.coefficients + &fit.delta;
        assert_eq!(sum, fit.target_fit.coefficients);
        let or = transfer_or(&pair, 0.01, &SolverConfig::backtracking()).unwrap();
        for arm in [Arm::Treated, Arm::Control] {
            let f = or.arm(arm);
            assert_eq!(&f.source_fit.coefficients + &f.delta, f.target_fit.coefficients);
            assert_eq!(f.target_fit.link, LinkKind::Identity);
        }
    }

    #[test]
    fn huge_lambda_returns_source_fits() {
        let pair = small_pair();
        let cfg = SolverConfig::backtracking();
        let ps = transfer_ps(&pair, 1e6, &cfg).unwrap();
        assert_eq!(ps.target_fit.coefficients, ps.source_fit.coefficients);
        assert_eq!(ps.support_size(), 0);
        let or = transfer_or(&pair, 1e6, &cfg).unwrap();
        assert_eq!(or.treated.target_fit, or.treated.source_fit);
        assert_eq!(or.control.target_fit, or.control.source_fit);
    }

    #[test]
    fn identical_domains_with_zero_lambda_agree() {
        let pair = small_pair();
        let same = DomainPair::new(pair.target.clone(), pair.target.clone()).unwrap();
        let cfg = SolverConfig::backtracking();
        let fit = transfer_ps(&same, 0.0, &cfg).unwrap();
        let obj = GlmObjective::new(&same.target, Response::Treatment, LinkKind::Sigmoid);
        let a = obj.value(fit.source_fit.coefficients.view()).unwrap();
        let b = obj.value(fit.target_fit.coefficients.view()).unwrap();
        assert!((a - b).abs() <= 10.0 * cfg.tolerance * (1.0 + a.abs()));
    }

    #[test]
    fn degenerate_domains_are_rejected() {
        let pair = small_pair();
        let all_treated = pair.target.with_treatment(Array1::ones(6)).unwrap();
        let bad = DomainPair::new(all_treated, pair.source.clone()).unwrap();
        assert!(matches!(
            transfer_ps(&bad, 0.1, &SolverConfig::backtracking()),
            Err(TclError::DegenerateDomain { .. })
        ));
        match transfer_or(&bad, 0.1, &SolverConfig::backtracking()) {
            Err(TclError::EmptyArm { arm, domain }) => {
                assert_eq!(arm, "control");
                assert_eq!(domain, "target");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn consts() -> TheoryConstants {
        TheoryConstants { m_x: 1.0, sigma: 1.0, sigma_s: 1.0, r: 0.5 }
    }

    #[test]
    fn theory_lambda_ps_reference_value() {
        let v = theory_lambda_ps(100, 1_000_000, 10, &consts()).unwrap();
        // sqrt(5 * ln(6000) / 200 * 25), evaluated independently
        assert!((v - 2.331_779_731_799_590).abs() < 1e-12);
    }

    #[test]
    fn theory_lambda_ps_branch_switch() {
        // n d^2 = 25 n_s exactly at n=100, d=10, n_s=400
        let c = consts();
        let at = theory_lambda_ps(100, 400, 10, &c).unwrap();
        let base = (5.0 * (6000f64).ln() / 200.0 * 25.0).sqrt();
        assert!((at - base).abs() < 1e-12);
        let above = theory_lambda_ps(100, 200, 10, &c).unwrap();
        let expected = (5.0 * (6000f64).ln() / 200.0 * 50.0).sqrt();
        assert!((above - expected).abs() < 1e-12);
        let below = theory_lambda_ps(100, 800, 10, &c).unwrap();
        assert!((below - base).abs() < 1e-12);
    }

    #[test]
    fn theory_lambda_ps_doubling_n() {
        let c = consts();
        let a = theory_lambda_ps(100, 1_000_000, 10, &c).unwrap();
        let b = theory_lambda_ps(200, 1_000_000, 10, &c).unwrap();
        let ratio = ((12.0 * 100.0 * 10.0f64).ln() / (6.0 * 100.0 * 10.0f64).ln() / 2.0).sqrt();
        assert!((b / a - ratio).abs() < 1e-12);
    }

    #[test]
    fn theory_lambda_or_reference_value() {
        let v = theory_lambda_or(100, 1_000_000, 10, &consts()).unwrap();
        // target branch 100/(0.5*100) = 2 dominates 100/(0.5*1e6)
        let expected = (2.0 * (12000f64).ln() * 2.0).sqrt();
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 6.129_490_004_484_920).abs() < 1e-12);
    }

    #[test]
    fn theory_lambda_or_monotone_in_r_and_d1_branch() {
        let mut c = consts();
        let a = theory_lambda_or(100, 1000, 10, &c).unwrap();
        c.r = 0.8;
        let b = theory_lambda_or(100, 1000, 10, &c).unwrap();
        assert!(b < a);
        let c = consts();
        let v = theory_lambda_or(50, 50, 1, &c).unwrap();
        let expected = (2.0 * (12.0 * 50.0f64).ln() * 100.0 / (0.5 * 50.0)).sqrt();
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn dr_variants_use_larger_log_factors() {
        let c = consts();
        let (ps, or) = theory_lambdas_dr(100, 1_000_000, 10, &c).unwrap();
        assert!((ps - (5.0 * (10000f64).ln() / 200.0 * 25.0).sqrt()).abs() < 1e-12);
        assert!((or - (2.0 * (16000f64).ln() * 2.0).sqrt()).abs() < 1e-12);
        assert!(theory_lambda_ps(0, 1, 1, &c).is_err());
    }

    #[test]
    fn estimated_constants_are_sane() {
        let pair = small_pair();
        let c = TheoryConstants::estimate(&pair, &SolverConfig::backtracking()).unwrap();
        let max_abs = Array2::from(pair.target.covariates().clone())
            .iter()
            .chain(pair.source.covariates().iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(c.m_x >= max_abs);
        assert!(c.r > 0.0 && c.r <= 0.5);
        assert!(c.sigma > 0.0 && c.sigma_s > 0.0);
    }
}
