//! Choosing the l1 strength: grids, folds, scoring criteria and the
//! cross-validation driver.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Arm, Dataset};
use crate::error::{Result, TclError};
use crate::estimators::{propensities, PropensityClip};
use crate::glm::{nll, GlmFit, Response, SolverConfig};
use crate::transfer::{correct_or, correct_ps, OrModels};

/// Strictly increasing, positive candidate strengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LambdaGrid {
    values: Vec<f64>,
}

impl LambdaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(TclError::InvalidConfig("empty lambda grid".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(TclError::InvalidConfig("lambda grid values must be finite and positive".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TclError::InvalidConfig("lambda grid must be strictly increasing".into()));
        }
        Ok(Self { values })
    }

    /// `10^e` for `e` from `lo` to `hi` (inclusive) in steps of `step`.
    pub fn log10_range(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || hi < lo {
            return Err(TclError::InvalidConfig("bad log10 grid range".into()));
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        Self::new((0..count).map(|i| 10f64.powf(lo + i as f64 * step)).collect())
    }

    /// Eleven values, `log10 lambda` from -2.5 to 0 in steps of 0.25.
    pub fn default_grid() -> Self {
        Self::log10_range(-2.5, 0.0, 0.25).expect("valid grid")
    }

    /// Six values, `log10 lambda` from -2.5 to 0 in steps of 0.5.
    pub fn reduced() -> Self {
        Self::log10_range(-2.5, 0.0, 0.5).expect("valid grid")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self::default_grid()
    }
}

impl TryFrom<Vec<f64>> for LambdaGrid {
    type Error = TclError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LambdaGrid> for Vec<f64> {
    fn from(g: LambdaGrid) -> Self {
        g.values
    }
}

/// Which nuisance is being tuned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Nuisance {
    Propensity,
    Outcome,
}

/// Source fit the correction starts from.
#[derive(Debug, Clone, Copy)]
pub enum NuisanceReference<'a> {
    Propensity(&'a GlmFit),
    Outcome(&'a OrModels),
}

impl NuisanceReference<'_> {
    pub fn kind(&self) -> Nuisance {
        match self {
            Self::Propensity(_) => Nuisance::Propensity,
            Self::Outcome(_) => Nuisance::Outcome,
        }
    }
}

/// Scoring rule for a candidate strength.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// Held-out ROC AUC of the propensity index; maximized.
    Auc,
    /// Covariate balance on the full target set; minimized.
    Smd,
    /// Held-out loss; minimized. Logistic NLL for propensities, arm-wise
    /// mean squared error for outcome models.
    Nll,
}

impl Criterion {
    pub fn maximize(self) -> bool {
        self == Criterion::Auc
    }

    pub fn applies_to(self, nuisance: Nuisance) -> Result<()> {
        match (self, nuisance) {
            (Criterion::Nll, _) | (_, Nuisance::Propensity) => Ok(()),
            _ => Err(TclError::InvalidConfig(format!(
                "criterion `{self}` does not apply to outcome models"
            ))),
        }
    }
}

impl FromStr for Criterion {
    type Err = TclError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auc" => Ok(Self::Auc),
            "smd" => Ok(Self::Smd),
            "nll" | "mse" => Ok(Self::Nll),
            _ => Err(TclError::InvalidConfig(format!("unknown criterion `{s}`"))),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Auc => "auc",
            Self::Smd => "smd",
            Self::Nll => "nll",
        })
    }
}

/// Grid, folds and criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    pub criterion: Criterion,
    pub grid: LambdaGrid,
    pub k: usize,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self {
            criterion: Criterion::Auc,
            grid: LambdaGrid::default_grid(),
            k: 5,
            stratified: true,
            seed: 0,
        }
    }
}

/// Assignment of rows to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    assignment: Vec<usize>,
}

impl FoldPlan {
    /// Shuffles rows with a seeded generator and deals them round-robin.
    /// Stratified plans deal treated rows first and continue with control
    /// rows, so every fold holds both classes and fold sizes differ by at
    /// most one.
    pub fn new(labels: &Array1<f64>, k: usize, stratified: bool, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(TclError::InvalidConfig(format!("need at least 2 folds, got {k}")));
        }
        let n = labels.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut assignment = vec![0; n];
        let groups: Vec<Vec<usize>> = if stratified {
            let pos: Vec<usize> = (0..n).filter(|&i| labels[i] == 1.0).collect();
            let neg: Vec<usize> = (0..n).filter(|&i| labels[i] != 1.0).collect();
            if pos.len() < k || neg.len() < k {
                return Err(TclError::DegeneratePartition(format!(
                    "stratified {k}-fold split needs {k} rows per class, have {} and {}",
                    pos.len(),
                    neg.len()
                )));
            }
            vec![pos, neg]
        } else {
            if n < k {
                return Err(TclError::DegeneratePartition(format!("{n} rows cannot fill {k} folds")));
            }
            vec![(0..n).collect()]
        };
        let mut slot = 0;
        for mut group in groups {
            group.shuffle(&mut rng);
            for i in group {
                assignment[i] = slot % k;
                slot += 1;
            }
        }
        Ok(Self { k, assignment })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_of(&self, row: usize) -> usize {
        self.assignment[row]
    }

    /// Training and validation rows for fold `j`.
    pub fn split(&self, j: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignment.len()).partition(|&i| self.assignment[i] != j)
    }
}

/// Mann-Whitney ROC AUC; tied scores count one half.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(TclError::Shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l != 0.0 && l != 1.0) {
        return Err(TclError::InvalidConfig(format!("label {bad} is not 0 or 1")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(TclError::Objective("non-finite score".into()));
    }
    let n1 = labels.iter().filter(|&&l| l == 1.0).count();
    let n0 = labels.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(TclError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks, 1-based
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid * order[i..j].iter().filter(|&&r| labels[r] == 1.0).count() as f64;
        i = j;
    }
    let (n1, n0) = (n1 as f64, n0 as f64);
    Ok((rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0))
}

/// Cohen's d with population variances,
/// `(mean_a - mean_b) / sqrt((var_a + var_b) / 2)`.
///
/// With both variances zero the result is 0 for equal means and a signed
/// infinity otherwise; callers treat the infinity as degenerate.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(TclError::Shape("Cohen's d needs two non-empty samples".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], m: f64| v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let pooled = ((var(a, ma) + var(b, mb)) / 2.0).sqrt();
    let diff = ma - mb;
    if pooled == 0.0 {
        return Ok(if diff == 0.0 { 0.0 } else { diff.signum() * f64::INFINITY });
    }
    Ok(diff / pooled)
}

/// Mean absolute Cohen's d across covariates between `{x / e : z = 1}` and
/// `{x / (1 - e) : z = 0}`, with `e` the clipped fitted propensity.
///
/// Returns `+inf` if any covariate is degenerate (see [`cohens_d`]).
pub fn smd(data: &Dataset, ps: &GlmFit, clip: PropensityClip) -> Result<f64> {
    let treated = data.arm_rows(Arm::Treated);
    let control = data.arm_rows(Arm::Control);
    for (rows, arm) in [(&treated, Arm::Treated), (&control, Arm::Control)] {
        if rows.is_empty() {
            return Err(TclError::EmptyArm {
                arm: arm.name().into(),
                domain: "target".into(),
            });
        }
    }
    let (e, _) = propensities(data, ps, clip)?;
    let x = data.covariates();
    let mut total = 0.0;
    for j in 0..data.d() {
        let a: Vec<f64> = treated.iter().map(|&i| x[[i, j]] / e[i]).collect();
        let b: Vec<f64> = control.iter().map(|&i| x[[i, j]] / (1.0 - e[i])).collect();
        total += cohens_d(&a, &b)?.abs();
    }
    Ok(total / data.d() as f64)
}

/// One scored (lambda, fold) cell. `score` is `None` when the fit or the
/// score was degenerate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub lambda: f64,
    pub fold: String,
    pub criterion: Criterion,
    pub score: Option<f64>,
}

/// Mean score of one lambda over its non-degenerate folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSummary {
    pub lambda: f64,
    pub mean: Option<f64>,
    pub valid_folds: usize,
}

/// Every score computed during a selection, plus the choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub nuisance: Nuisance,
    pub criterion: Criterion,
    pub rows: Vec<ScoreRow>,
    pub summary: Vec<LambdaSummary>,
    pub selected: f64,
}

impl ScoreTable {
    /// CSV with columns `lambda,fold,criterion,score`; per-lambda means use
    /// fold `mean` and degenerate scores are written as `NaN`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["lambda", "fold", "criterion", "score"])?;
        let fmt = |s: Option<f64>| s.map_or_else(|| "NaN".to_string(), |v| v.to_string());
        let crit = self.criterion.to_string();
        for r in &self.rows {
            w.write_record([r.lambda.to_string(), r.fold.clone(), crit.clone(), fmt(r.score)])?;
        }
        for s in &self.summary {
            w.write_record([s.lambda.to_string(), "mean".into(), crit.clone(), fmt(s.mean)])?;
        }
        w.flush().map_err(|e| TclError::Io {
            path: "<score table>".into(),
            source: e,
        })?;
        Ok(())
    }
}

/// A chosen strength and the scores behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub lambda: f64,
    pub table: ScoreTable,
}

struct Split {
    label: String,
    train: Dataset,
    valid: Dataset,
}

/// k-fold (or, for SMD, full-sample) selection of the correction strength
/// for a fixed source fit. Ties go to the larger lambda.
pub fn select_lambda_from(
    target: &Dataset,
    reference: NuisanceReference<'_>,
    policy: &SelectionPolicy,
    solver: &SolverConfig,
) -> Result<Selection> {
    policy.criterion.applies_to(reference.kind())?;
    let splits = if policy.criterion == Criterion::Smd {
        vec![Split {
            label: "full".into(),
            train: target.clone(),
            valid: target.clone(),
        }]
    } else {
        let plan = FoldPlan::new(target.treatment(), policy.k, policy.stratified, policy.seed)?;
        (0..plan.k())
            .map(|j| {
                let (train, valid) = plan.split(j);
                Ok(Split {
                    label: j.to_string(),
                    train: target.select_rows(&train)?,
                    valid: target.select_rows(&valid)?,
                })
            })
            .collect::<Result<Vec<_>>>()?
    };
    run_selection(&splits, reference, policy.criterion, &policy.grid, solver)
}

/// Selection against a separate validation set.
pub fn select_lambda_holdout(
    train: &Dataset,
    validation: &Dataset,
    reference: NuisanceReference<'_>,
    criterion: Criterion,
    grid: &LambdaGrid,
    solver: &SolverConfig,
) -> Result<Selection> {
    criterion.applies_to(reference.kind())?;
    let splits = [Split {
        label: "holdout".into(),
        train: train.clone(),
        valid: validation.clone(),
    }];
    run_selection(&splits, reference, criterion, grid, solver)
}

fn run_selection(
    splits: &[Split],
    reference: NuisanceReference<'_>,
    criterion: Criterion,
    grid: &LambdaGrid,
    solver: &SolverConfig,
) -> Result<Selection> {
    let cells: Vec<(f64, &Split)> = grid
        .values()
        .iter()
        .flat_map(|&l| splits.iter().map(move |s| (l, s)))
        .collect();
    let scores: Vec<Option<f64>> = cells
        .par_iter()
        .map(|(lambda, split)| {
            score_cell(reference, criterion, *lambda, &split.train, &split.valid, solver)
                .ok()
                .filter(|s| s.is_finite())
        })
        .collect();
    let rows: Vec<ScoreRow> = cells
        .iter()
        .zip(&scores)
        .map(|((lambda, split), score)| ScoreRow {
            lambda: *lambda,
            fold: split.label.clone(),
            criterion,
            score: *score,
        })
        .collect();
    let summary: Vec<LambdaSummary> = grid
        .values()
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let valid: Vec<f64> = scores[i * splits.len()..(i + 1) * splits.len()]
                .iter()
                .flatten()
                .copied()
                .collect();
            LambdaSummary {
                lambda,
                mean: (!valid.is_empty()).then(|| valid.iter().sum::<f64>() / valid.len() as f64),
                valid_folds: valid.len(),
            }
        })
        .collect();
    let lambda = pick(&summary, criterion.maximize())?;
    Ok(Selection {
        lambda,
        table: ScoreTable {
            nuisance: reference.kind(),
            criterion,
            rows,
            summary,
            selected: lambda,
        },
    })
}

/// Largest lambda whose mean score is within rounding of the optimum.
fn pick(summary: &[LambdaSummary], maximize: bool) -> Result<f64> {
    let sign = if maximize { 1.0 } else { -1.0 };
    let best = summary
        .iter()
        .filter_map(|s| s.mean)
        .map(|m| sign * m)
        .fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return Err(TclError::DegenerateSelection(format!(
            "{} candidates, none scored",
            summary.len()
        )));
    }
    let tol = 1e-12 * best.abs().max(1.0);
    Ok(summary
        .iter()
        .filter(|s| s.mean.is_some_and(|m| sign * m >= best - tol))
        .map(|s| s.lambda)
        .fold(f64::NEG_INFINITY, f64::max))
}

fn score_cell(
    reference: NuisanceReference<'_>,
    criterion: Criterion,
    lambda: f64,
    train: &Dataset,
    valid: &Dataset,
    solver: &SolverConfig,
) -> Result<f64> {
    match reference {
        NuisanceReference::Propensity(src) => {
            let fit = correct_ps(train, src, lambda, solver)?.target_fit;
            match criterion {
                Criterion::Auc => {
                    let index = fit.linear_index(valid)?;
                    auc(index.as_slice().expect("contiguous"), valid.treatment().as_slice().expect("contiguous"))
                }
                Criterion::Nll => nll(valid, Response::Treatment, &fit),
                Criterion::Smd => smd(valid, &fit, PropensityClip::default()),
            }
        }
        NuisanceReference::Outcome(src) => {
            let models = correct_or(train, src, lambda, solver)?.models();
            held_out_mse(valid, &models)
        }
    }
}

/// Mean squared error of each row's own-arm prediction.
pub fn held_out_mse(data: &Dataset, models: &OrModels) -> Result<f64> {
    let m1 = models.treated.linear_index(data)?;
    let m0 = models.control.linear_index(data)?;
    let z = data.treatment();
    let y = data.outcome();
    let sse: f64 = (0..data.n())
        .map(|i| {
            let m = if z[i] == 1.0 { m1[i] } else { m0[i] };
            (y[i] - m).powi(2)
        })
        .sum();
    Ok(sse / data.n() as f64)
}
