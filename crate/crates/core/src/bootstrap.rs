//! Percentile bootstrap over target rows.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnScaling, DomainPair};
use crate::error::{Result, TclError};
use crate::estimators::{run_with_sources, FrameworkConfig, FrameworkRun, LambdaChoice, SourceFits};
use crate::estimators::Framework;
use crate::selection::LambdaGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub trials: usize,
    /// Rows drawn per trial; `None` draws as many rows as the target has.
    pub resample_size: Option<usize>,
    /// Re-run lambda selection inside every trial.
    pub reselect_lambda: bool,
    /// Reselect over the configured grid instead of the reduced one.
    pub full_grid: bool,
    pub ci_level: f64,
    pub master_seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            trials: 200,
            resample_size: None,
            reselect_lambda: true,
            full_grid: false,
            ci_level: 0.9,
            master_seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 2 {
            return Err(TclError::InvalidConfig("bootstrap needs at least 2 trials".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(TclError::InvalidConfig(format!("ci level {} outside (0, 1)", self.ci_level)));
        }
        if self.resample_size == Some(0) {
            return Err(TclError::InvalidConfig("resample size must be positive".into()));
        }
        Ok(())
    }
}

/// Result of one trial; exactly one of `estimate` and `failure` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub estimate: Option<f64>,
    pub lambda_ps: Option<f64>,
    pub lambda_or: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    /// Estimate on the original (not resampled) target.
    pub point: f64,
    pub trials: Vec<TrialOutcome>,
    pub mean: f64,
    pub median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_level: f64,
    pub failure_count: usize,
}

impl BootstrapSummary {
    pub fn successes(&self) -> Vec<f64> {
        self.trials.iter().filter_map(|t| t.estimate).collect()
    }

    /// Per-trial CSV: `trial,estimate,lambda_ps,lambda_or,failure`.
    pub fn write_trials_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["trial", "estimate", "lambda_ps", "lambda_or", "failure"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for t in &self.trials {
            w.write_record([
                t.trial.to_string(),
                opt(t.estimate),
                opt(t.lambda_ps),
                opt(t.lambda_or),
                t.failure.clone().unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(|e| TclError::Io {
            path: "<bootstrap trials>".into(),
            source: e,
        })?;
        Ok(())
    }
}

/// Linear interpolation between order statistics at position `q * (n - 1)`.
///
/// # Panics
/// If `sorted` is empty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Generator for trial `t`: the master seed picks the key, the trial index
/// picks the stream, so trials are independent of execution order.
pub fn trial_rng(master_seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial as u64);
    rng
}

/// Resamples target rows with replacement, refits the framework on each
/// resample and summarizes the estimates. Source data and its rough fits
/// stay fixed.
pub fn bootstrap(domains: &DomainPair, cfg: &FrameworkConfig, bcfg: &BootstrapConfig) -> Result<BootstrapSummary> {
    bcfg.validate()?;
    if domains.target.n() < 2 {
        return Err(TclError::InvalidConfig("bootstrap needs at least 2 target rows".into()));
    }
    let scaled;
    let domains = if cfg.standardize {
        scaled = ColumnScaling::from_dataset(&domains.target).apply_pair(domains)?;
        &scaled
    } else {
        domains
    };
    let sources = match cfg.framework {
        Framework::Transfer => Some(SourceFits::fit(&domains.source, cfg.estimator, &cfg.solver)?),
        _ => None,
    };
    let point_run = run_with_sources(&domains.target, &domains.source, sources.as_ref(), cfg)?;
    let trial_cfg = trial_config(cfg, bcfg, &point_run);
    let size = bcfg.resample_size.unwrap_or(domains.target.n());

    let trials: Vec<TrialOutcome> = (0..bcfg.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(bcfg.master_seed, t);
            let rows: Vec<usize> = (0..size).map(|_| rng.random_range(0..domains.target.n())).collect();
            let mut cfg_t = trial_cfg.clone();
            if let LambdaChoice::Select(policy) = &mut cfg_t.lambda {
                policy.seed = rng.random();
            }
            let run = domains
                .target
                .select_rows(&rows)
                .and_then(|target| run_with_sources(&target, &domains.source, sources.as_ref(), &cfg_t));
            match run {
                Ok(r) => TrialOutcome {
                    trial: t,
                    estimate: Some(r.estimate.value).filter(|v| v.is_finite()),
                    lambda_ps: r.lambda_ps,
                    lambda_or: r.lambda_or,
                    failure: (!r.estimate.value.is_finite()).then(|| "non-finite estimate".to_string()),
                },
                Err(e) => TrialOutcome {
                    trial: t,
                    estimate: None,
                    lambda_ps: None,
                    lambda_or: None,
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect();

    let failure_count = trials.iter().filter(|t| t.estimate.is_none()).count();
    if 2 * failure_count > bcfg.trials {
        let reasons = trials
            .iter()
            .filter_map(|t| t.failure.as_ref().map(|f| format!("trial {}: {f}", t.trial)))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(TclError::TooManyFailures {
            failed: failure_count,
            trials: bcfg.trials,
            reasons,
        });
    }
    let mut ok: Vec<f64> = trials.iter().filter_map(|t| t.estimate).collect();
    ok.sort_by(f64::total_cmp);
    let tail = (1.0 - bcfg.ci_level) / 2.0;
    Ok(BootstrapSummary {
        point: point_run.estimate.value,
        mean: ok.iter().sum::<f64>() / ok.len() as f64,
        median: quantile(&ok, 0.5),
        ci_low: quantile(&ok, tail),
        ci_high: quantile(&ok, 1.0 - tail),
        ci_level: bcfg.ci_level,
        failure_count,
        trials,
    })
}

fn trial_config(cfg: &FrameworkConfig, bcfg: &BootstrapConfig, point: &FrameworkRun) -> FrameworkConfig {
    let mut out = cfg.clone();
    out.standardize = false;
    match &cfg.lambda {
        LambdaChoice::Select(policy) if bcfg.reselect_lambda => {
            let mut p = policy.clone();
            if !bcfg.full_grid {
                p.grid = LambdaGrid::reduced();
            }
            out.lambda = LambdaChoice::Select(p);
        }
        LambdaChoice::Select(_) | LambdaChoice::Theory if !bcfg.reselect_lambda => {
            out.lambda = LambdaChoice::Fixed {
                ps: point.lambda_ps.unwrap_or(f64::NAN),
                or: point.lambda_or.unwrap_or(f64::NAN),
            };
        }
        _ => {}
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0], 0.5), 2.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert!((quantile(&[10.0, 20.0], 0.05) - 10.5).abs() < 1e-12);
        let v: Vec<f64> = (1..=200).map(f64::from).collect();
        assert!((quantile(&v, 0.05) - 10.95).abs() < 1e-12);
        assert!((quantile(&v, 0.95) - 190.05).abs() < 1e-12);
        assert_eq!(quantile(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn trial_streams_differ_and_repeat() {
        let a: u64 = trial_rng(3, 0).random();
        let b: u64 = trial_rng(3, 1).random();
        let c: u64 = trial_rng(3, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn config_validation() {
        assert!(BootstrapConfig::default().validate().is_ok());
        let bad = BootstrapConfig {
            trials: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = BootstrapConfig {
            ci_level: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
