//! Plug-in average-causal-effect estimators and the three learning
//! frameworks that feed them nuisance models.
//!
//! Every estimator is evaluated on target-domain rows only. The frameworks
//! differ in where the nuisance models come from: target rows alone
//! (`TO-CL`), target and source rows concatenated (`Merge-CL`), or a source
//! fit corrected on target rows (`l1-TCL`).

use std::fmt;
use std::str::FromStr;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::data::{Arm, ColumnScaling, Dataset, DomainPair};
use crate::error::{Result, TclError};
use crate::glm::{fit_mle, GlmFit, LinkKind, Response, SolverConfig};
use crate::selection::{select_lambda_from, Nuisance, NuisanceReference, ScoreTable, SelectionPolicy};
use crate::transfer::{
    check_both_classes, correct_or, correct_ps, rough_or, rough_ps, theory_lambda_or, theory_lambda_ps,
    theory_lambdas_dr, OrModels, TheoryConstants,
};

/// Which plug-in estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Ipw,
    Or,
    Dr,
}

impl EstimatorKind {
    pub fn needs_ps(self) -> bool {
        matches!(self, EstimatorKind::Ipw | EstimatorKind::Dr)
    }

    pub fn needs_or(self) -> bool {
        matches!(self, EstimatorKind::Or | EstimatorKind::Dr)
    }
}

impl FromStr for EstimatorKind {
    type Err = TclError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ipw" => Ok(Self::Ipw),
            "or" => Ok(Self::Or),
            "dr" => Ok(Self::Dr),
            _ => Err(TclError::InvalidConfig(format!("unknown estimator `{s}`"))),
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ipw => "ipw",
            Self::Or => "or",
            Self::Dr => "dr",
        })
    }
}

/// Where a nuisance model came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    TargetOnly,
    Merged,
    Transfer,
    Oracle,
    /// Fitted by the caller; relabel with [`AceEstimate::with_sources`].
    Supplied,
    None,
}

/// Learning framework for the nuisance models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Framework {
    #[serde(rename = "to-cl")]
    TargetOnly,
    #[serde(rename = "merge-cl")]
    Merged,
    #[serde(rename = "l1-tcl")]
    Transfer,
}

impl Framework {
    pub const ALL: [Framework; 3] = [Framework::TargetOnly, Framework::Merged, Framework::Transfer];

    pub fn provenance(self) -> Provenance {
        match self {
            Framework::TargetOnly => Provenance::TargetOnly,
            Framework::Merged => Provenance::Merged,
            Framework::Transfer => Provenance::Transfer,
        }
    }
}

impl FromStr for Framework {
    type Err = TclError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "to-cl" | "target-only" => Ok(Self::TargetOnly),
            "merge-cl" | "merged" => Ok(Self::Merged),
            "l1-tcl" | "transfer" => Ok(Self::Transfer),
            _ => Err(TclError::InvalidConfig(format!("unknown framework `{s}`"))),
        }
    }
}

impl fmt::Display for Framework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::TargetOnly => "to-cl",
            Self::Merged => "merge-cl",
            Self::Transfer => "l1-tcl",
        })
    }
}

/// Symmetric clipping of fitted propensities into `[floor, 1 - floor]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropensityClip {
    floor: f64,
}

impl PropensityClip {
    /// `floor` must lie in `[0, 0.5)`; zero disables clipping.
    pub fn new(floor: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&floor) {
            return Err(TclError::InvalidConfig(format!(
                "propensity clip floor {floor} outside [0, 0.5)"
            )));
        }
        Ok(Self { floor })
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Clipped value and whether clipping changed it.
    pub fn apply(&self, e: f64) -> (f64, bool) {
        if e < self.floor {
            (self.floor, true)
        } else if e > 1.0 - self.floor {
            (1.0 - self.floor, true)
        } else {
            (e, false)
        }
    }
}

impl Default for PropensityClip {
    fn default() -> Self {
        Self { floor: 1e-6 }
    }
}

/// A point estimate of the average causal effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AceEstimate {
    pub value: f64,
    pub estimator: EstimatorKind,
    pub ps_source: Provenance,
    pub or_source: Provenance,
    /// Rows whose propensity was moved by clipping.
    pub clipped_rows: usize,
}

impl AceEstimate {
    pub fn with_sources(mut self, ps: Provenance, or: Provenance) -> Self {
        if self.estimator.needs_ps() {
            self.ps_source = ps;
        }
        if self.estimator.needs_or() {
            self.or_source = or;
        }
        self
    }
}

/// Clipped propensities `g(x_i'b)` and the number of clipped rows.
pub fn propensities(data: &Dataset, ps: &GlmFit, clip: PropensityClip) -> Result<(Array1<f64>, usize)> {
    let raw = ps.predict_mean(data)?;
    let mut clipped = 0;
    let e = raw.mapv(|v| {
        let (c, moved) = clip.apply(v);
        clipped += moved as usize;
        c
    });
    Ok((e, clipped))
}

/// Inverse-propensity-weighted estimate
/// `(1/n) * sum_i [ z_i y_i / e_i - (1 - z_i) y_i / (1 - e_i) ]`.
pub fn estimate_ipw(data: &Dataset, ps: &GlmFit, clip: PropensityClip) -> Result<AceEstimate> {
    let (e, clipped_rows) = propensities(data, ps, clip)?;
    Ok(AceEstimate {
        value: ipw_from_propensities(data, &e),
        estimator: EstimatorKind::Ipw,
        ps_source: Provenance::Supplied,
        or_source: Provenance::None,
        clipped_rows,
    })
}

/// IPW average for already computed propensities.
pub fn ipw_from_propensities(data: &Dataset, e: &Array1<f64>) -> f64 {
    let z = data.treatment();
    let y = data.outcome();
    let mut total = 0.0;
    for i in 0..data.n() {
        total += z[i] * y[i] / e[i] - (1.0 - z[i]) * y[i] / (1.0 - e[i]);
    }
    total / data.n() as f64
}

/// Outcome-regression estimate: mean fitted treated outcome over treated rows
/// minus mean fitted control outcome over control rows.
pub fn estimate_or(data: &Dataset, models: &OrModels) -> Result<AceEstimate> {
    let mean_fitted = |arm: Arm| -> Result<f64> {
        let rows = data.arm(arm, "target")?;
        let fitted = models.arm(arm).linear_index(&rows)?;
        Ok(fitted.sum() / rows.n() as f64)
    };
    Ok(AceEstimate {
        value: mean_fitted(Arm::Treated)? - mean_fitted(Arm::Control)?,
        estimator: EstimatorKind::Or,
        ps_source: Provenance::None,
        or_source: Provenance::Supplied,
        clipped_rows: 0,
    })
}

/// Doubly robust (augmented IPW) estimate
///
/// ```text
/// (1/n) * sum_i [ (z_i y_i - m1_i (z_i - e_i)) / e_i
///               - ((1 - z_i) y_i + m0_i (z_i - e_i)) / (1 - e_i) ]
/// ```
///
/// with `m_z = x'a_z`. Zero outcome models reproduce [`estimate_ipw`] exactly.
pub fn estimate_dr(data: &Dataset, ps: &GlmFit, models: &OrModels, clip: PropensityClip) -> Result<AceEstimate> {
    for arm in [Arm::Treated, Arm::Control] {
        if data.arm_rows(arm).is_empty() {
            return Err(TclError::EmptyArm {
                arm: arm.name().into(),
                domain: "target".into(),
            });
        }
    }
    let (e, clipped_rows) = propensities(data, ps, clip)?;
    let m1 = models.treated.linear_index(data)?;
    let m0 = models.control.linear_index(data)?;
    let z = data.treatment();
    let y = data.outcome();
    let mut total = 0.0;
    for i in 0..data.n() {
        let resid = z[i] - e[i];
        total += (z[i] * y[i] - m1[i] * resid) / e[i] - ((1.0 - z[i]) * y[i] + m0[i] * resid) / (1.0 - e[i]);
    }
    Ok(AceEstimate {
        value: total / data.n() as f64,
        estimator: EstimatorKind::Dr,
        ps_source: Provenance::Supplied,
        or_source: Provenance::Supplied,
        clipped_rows,
    })
}

/// How the l1 strength is chosen for transfer fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaChoice {
    Fixed { ps: f64, or: f64 },
    Select(SelectionPolicy),
    /// Closed-form strengths with data-estimated constants.
    Theory,
}

/// Everything `run_framework` needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameworkConfig {
    pub framework: Framework,
    pub estimator: EstimatorKind,
    pub lambda: LambdaChoice,
    pub solver: SolverConfig,
    pub clip: PropensityClip,
    /// Divide covariates by their target-domain SD before fitting.
    pub standardize: bool,
}

impl FrameworkConfig {
    pub fn new(framework: Framework, estimator: EstimatorKind) -> Self {
        Self {
            framework,
            estimator,
            lambda: LambdaChoice::Select(SelectionPolicy::default()),
            solver: SolverConfig::backtracking(),
            clip: PropensityClip::default(),
            standardize: false,
        }
    }
}

/// Source-domain rough fits, computed once and reused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceFits {
    pub ps: Option<GlmFit>,
    pub or: Option<OrModels>,
    pub converged: bool,
}

impl SourceFits {
    pub fn fit(source: &Dataset, estimator: EstimatorKind, solver: &SolverConfig) -> Result<Self> {
        let mut converged = true;
        let ps = if estimator.needs_ps() {
            let (fit, trace) = rough_ps(source, solver)?;
            converged &= trace.converged;
            Some(fit)
        } else {
            None
        };
        let or = if estimator.needs_or() {
            Some(rough_or(source, solver)?)
        } else {
            None
        };
        Ok(Self { ps, or, converged })
    }
}

/// Output of one framework run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameworkRun {
    pub framework: Framework,
    pub estimate: AceEstimate,
    /// Propensity model on the raw covariate scale.
    pub ps_fit: Option<GlmFit>,
    /// Outcome models on the raw covariate scale.
    pub or_fits: Option<OrModels>,
    pub lambda_ps: Option<f64>,
    pub lambda_or: Option<f64>,
    pub selection: Vec<ScoreTable>,
    /// False when any solver hit its iteration cap.
    pub converged: bool,
}

/// Fits nuisances under the chosen framework and evaluates the estimator on
/// target rows.
pub fn run_framework(domains: &DomainPair, cfg: &FrameworkConfig) -> Result<FrameworkRun> {
    let scaling = cfg.standardize.then(|| ColumnScaling::from_dataset(&domains.target));
    let scaled;
    let domains = match &scaling {
        Some(s) => {
            scaled = s.apply_pair(domains)?;
            &scaled
        }
        None => domains,
    };
    let sources = match cfg.framework {
        Framework::Transfer => Some(SourceFits::fit(&domains.source, cfg.estimator, &cfg.solver)?),
        _ => None,
    };
    let mut run = run_with_sources(&domains.target, &domains.source, sources.as_ref(), cfg)?;
    if let Some(s) = &scaling {
        if let Some(ps) = run.ps_fit.as_mut() {
            ps.coefficients = s.unscale_coefficients(&ps.coefficients);
        }
        if let Some(or) = run.or_fits.as_mut() {
            or.treated.coefficients = s.unscale_coefficients(&or.treated.coefficients);
            or.control.coefficients = s.unscale_coefficients(&or.control.coefficients);
        }
    }
    Ok(run)
}

/// Like [`run_framework`] but with precomputed source fits (used only by
/// `l1-TCL`). `cfg.standardize` is ignored; callers that standardize pass
/// scaled data and fits.
pub fn run_with_sources(
    target: &Dataset,
    source: &Dataset,
    sources: Option<&SourceFits>,
    cfg: &FrameworkConfig,
) -> Result<FrameworkRun> {
    let est = cfg.estimator;
    let mut converged = true;
    let mut lambda_ps = None;
    let mut lambda_or = None;
    let mut selection = Vec::new();

    let (ps_fit, or_fits) = match cfg.framework {
        Framework::TargetOnly | Framework::Merged => {
            let data = if cfg.framework == Framework::Merged {
                target.concat(source)?
            } else {
                target.clone()
            };
            let domain = if cfg.framework == Framework::Merged { "merged" } else { "target" };
            let ps = if est.needs_ps() {
                check_both_classes(&data, domain)?;
                let (fit, trace) = fit_mle(&data, Response::Treatment, LinkKind::Sigmoid, &cfg.solver)?;
                converged &= trace.converged;
                Some(fit)
            } else {
                None
            };
            let or = if est.needs_or() {
                let mut fit_arm = |arm: Arm| -> Result<GlmFit> {
                    let rows = data.arm(arm, domain)?;
                    let (fit, trace) = fit_mle(&rows, Response::Outcome, LinkKind::Identity, &cfg.solver)?;
                    converged &= trace.converged;
                    Ok(fit)
                };
                Some(OrModels {
                    treated: fit_arm(Arm::Treated)?,
                    control: fit_arm(Arm::Control)?,
                })
            } else {
                None
            };
            (ps, or)
        }
        Framework::Transfer => {
            let owned;
            let sources = match sources {
                Some(s) => s,
                None => {
                    owned = SourceFits::fit(source, est, &cfg.solver)?;
                    &owned
                }
            };
            converged &= sources.converged;
            let (lps, lor) = choose_lambdas(target, source, sources, cfg, &mut selection)?;
            let ps = match (est.needs_ps(), &sources.ps) {
                (true, Some(src)) => {
                    let fit = correct_ps(target, src, lps, &cfg.solver)?;
                    converged &= fit.trace.converged;
                    lambda_ps = Some(lps);
                    Some(fit.target_fit)
                }
                (true, None) => return Err(TclError::InvalidConfig("missing source propensity fit".into())),
                _ => None,
            };
            let or = match (est.needs_or(), &sources.or) {
                (true, Some(src)) => {
                    let fit = correct_or(target, src, lor, &cfg.solver)?;
                    converged &= fit.treated.trace.converged && fit.control.trace.converged;
                    lambda_or = Some(lor);
                    Some(fit.models())
                }
                (true, None) => return Err(TclError::InvalidConfig("missing source outcome fits".into())),
                _ => None,
            };
            (ps, or)
        }
    };

    let estimate = match est {
        EstimatorKind::Ipw => estimate_ipw(target, ps_fit.as_ref().expect("ps fitted"), cfg.clip)?,
        EstimatorKind::Or => estimate_or(target, or_fits.as_ref().expect("or fitted"))?,
        EstimatorKind::Dr => estimate_dr(
            target,
            ps_fit.as_ref().expect("ps fitted"),
            or_fits.as_ref().expect("or fitted"),
            cfg.clip,
        )?,
    }
    .with_sources(cfg.framework.provenance(), cfg.framework.provenance());

    Ok(FrameworkRun {
        framework: cfg.framework,
        estimate,
        ps_fit,
        or_fits,
        lambda_ps,
        lambda_or,
        selection,
        converged,
    })
}

fn choose_lambdas(
    target: &Dataset,
    source: &Dataset,
    sources: &SourceFits,
    cfg: &FrameworkConfig,
    tables: &mut Vec<ScoreTable>,
) -> Result<(f64, f64)> {
    let est = cfg.estimator;
    match &cfg.lambda {
        LambdaChoice::Fixed { ps, or } => Ok((*ps, *or)),
        LambdaChoice::Theory => {
            let pair = DomainPair::new(target.clone(), source.clone())?;
            let c = TheoryConstants::estimate(&pair, &cfg.solver)?;
            let (n, ns, d) = (target.n(), source.n(), target.d());
            if est == EstimatorKind::Dr {
                theory_lambdas_dr(n, ns, d, &c)
            } else {
                Ok((theory_lambda_ps(n, ns, d, &c)?, theory_lambda_or(n, ns, d, &c)?))
            }
        }
        LambdaChoice::Select(policy) => {
            let mut lps = f64::NAN;
            let mut lor = f64::NAN;
            if let (true, Some(ps)) = (est.needs_ps(), &sources.ps) {
                let sel = select_lambda_from(target, NuisanceReference::Propensity(ps), policy, &cfg.solver)?;
                lps = sel.lambda;
                tables.push(sel.table);
            }
            if let (true, Some(or)) = (est.needs_or(), &sources.or) {
                let mut or_policy = policy.clone();
                if or_policy.criterion.applies_to(Nuisance::Outcome).is_err() {
                    or_policy.criterion = crate::selection::Criterion::Nll;
                }
                let sel = select_lambda_from(target, NuisanceReference::Outcome(or), &or_policy, &cfg.solver)?;
                lor = sel.lambda;
                tables.push(sel.table);
            }
            Ok((lps, lor))
        }
    }
}
