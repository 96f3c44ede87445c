//! l1-regularized transfer causal learning.
//!
//! Nuisance models (propensity score and per-arm outcome regressions) are
//! first fitted on a large source domain and then corrected on a small
//! target domain by an l1-penalized deviation. The corrected models feed
//! IPW, outcome-regression and doubly robust estimates of the average
//! causal effect in the target domain.

pub mod bootstrap;
pub mod data;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod glm;
pub mod selection;
pub mod synthetic;
pub mod transfer;

pub use bootstrap::{bootstrap, quantile, BootstrapConfig, BootstrapSummary};
pub use data::{load_csv, Arm, Dataset, DomainPair};
pub use error::{Result, TclError};
pub use estimators::{
    estimate_dr, estimate_ipw, estimate_or, run_framework, AceEstimate, EstimatorKind, Framework, FrameworkConfig,
    LambdaChoice, PropensityClip, Provenance,
};
pub use glm::{GlmFit, LinkKind, SolverConfig};
pub use selection::{auc, cohens_d, smd, Criterion, LambdaGrid, SelectionPolicy};
pub use transfer::{transfer_or, transfer_ps, OrModels, TheoryConstants, TransferFit};
pub use synthetic::{generate_grid_instance, generate_toy, true_propensity, OracleInfo, ToyConfig};
