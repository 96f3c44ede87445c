//! Seeded data generators with known ground truth.
//!
//! The toy generator writes its propensity as `1 / (1 + exp(b1 x1 + b2 x2))`,
//! a decreasing function of the index. The estimation stack uses the
//! standard logistic `1 / (1 + exp(-x'b))`, so the oracle stores the toy
//! propensity parameters negated: `-b` in standard form gives the same
//! probabilities.

use ndarray::{Array1, Array2};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DomainPair};
use crate::error::{Result, TclError};
use crate::glm::sigmoid;

/// Covariate mean and propensity slope on `x2` for one toy domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyDomain {
    pub mu2: f64,
    pub beta2: f64,
}

/// Two-covariate toy example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub mu1: f64,
    pub beta1: f64,
    pub target: ToyDomain,
    pub source: ToyDomain,
    pub tau: f64,
    pub alpha: f64,
    pub noise_sd: f64,
    pub n_target: usize,
    /// Rows drawn from the target domain; only the first `n_target` are kept.
    pub n_target_pool: usize,
    pub n_source: usize,
    /// Prepend a column of ones to the covariates.
    pub intercept: bool,
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            mu1: 0.0,
            beta1: 0.1,
            target: ToyDomain { mu2: 2.0, beta2: -0.1 },
            source: ToyDomain { mu2: 1.0, beta2: -0.2 },
            tau: -2.0 / 30.0,
            alpha: 0.1,
            noise_sd: 0.5,
            n_target: 100,
            n_target_pool: 2000,
            n_source: 1000,
            intercept: false,
            seed: 0,
        }
    }
}

impl ToyConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_target == 0 || self.n_source == 0 {
            return Err(TclError::InvalidConfig("toy domains need at least one row".into()));
        }
        if self.n_target > self.n_target_pool {
            return Err(TclError::InvalidConfig(format!(
                "n_target {} exceeds pool size {}",
                self.n_target, self.n_target_pool
            )));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(TclError::InvalidConfig("noise SD must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Linear outcome truth per arm: `E[y | x, z] = x'a_z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrTruth {
    pub treated: Vec<f64>,
    pub control: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    Target,
    Source,
}

/// Ground truth behind a generated domain pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleInfo {
    pub true_tau: f64,
    /// Standard-form logistic parameters, `P(z = 1 | x) = 1 / (1 + exp(-x'b))`.
    pub ps_target: Vec<f64>,
    pub ps_source: Vec<f64>,
    /// Present when the outcome mean is linear in the stored covariates.
    pub or_target: Option<OrTruth>,
    pub or_source: Option<OrTruth>,
    /// Covariate slope shared by both arms and domains:
    /// `y = true_tau * z + x'outcome_slope + noise`.
    pub outcome_slope: Vec<f64>,
    /// Noise drawn for each kept row, in row order.
    pub noise_target: Vec<f64>,
    pub noise_source: Vec<f64>,
}

impl OracleInfo {
    pub fn ps_params(&self, domain: Domain) -> &[f64] {
        match domain {
            Domain::Target => &self.ps_target,
            Domain::Source => &self.ps_source,
        }
    }
}

/// Structural propensity of covariate row `x` in `domain`.
pub fn true_propensity(oracle: &OracleInfo, x: &[f64], domain: Domain) -> Result<f64> {
    let b = oracle.ps_params(domain);
    if b.len() != x.len() {
        return Err(TclError::Shape(format!(
            "covariate row has {} entries, parameters have {}",
            x.len(),
            b.len()
        )));
    }
    Ok(sigmoid(x.iter().zip(b).map(|(a, c)| a * c).sum()))
}

/// Structural propensities for every row of `data`.
pub fn true_propensities(oracle: &OracleInfo, data: &Dataset, domain: Domain) -> Result<Array1<f64>> {
    data.covariates()
        .rows()
        .into_iter()
        .map(|r| true_propensity(oracle, &r.to_vec(), domain))
        .collect::<Result<Vec<_>>>()
        .map(Array1::from)
}

struct Draw {
    x: Array2<f64>,
    z: Array1<f64>,
    y: Array1<f64>,
    noise: Vec<f64>,
}

fn draw_toy_domain(cfg: &ToyConfig, dom: ToyDomain, rows: usize, rng: &mut ChaCha8Rng) -> Draw {
    let width = if cfg.intercept { 3 } else { 2 };
    let mut x = Array2::zeros((rows, width));
    let mut z = Array1::zeros(rows);
    let mut y = Array1::zeros(rows);
    let mut noise = Vec::with_capacity(rows);
    let off = width - 2;
    for i in 0..rows {
        let x1 = cfg.mu1 + rng.sample::<f64, _>(StandardNormal);
        let x2 = dom.mu2 + rng.sample::<f64, _>(StandardNormal);
        // decreasing logistic form
        let p = 1.0 / (1.0 + (cfg.beta1 * x1 + dom.beta2 * x2).exp());
        let zi = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
        let eps = cfg.noise_sd * rng.sample::<f64, _>(StandardNormal);
        if cfg.intercept {
            x[[i, 0]] = 1.0;
        }
        x[[i, off]] = x1;
        x[[i, off + 1]] = x2;
        z[i] = zi;
        y[i] = cfg.tau * zi + cfg.alpha * x2 + eps;
        noise.push(eps);
    }
    Draw { x, z, y, noise }
}

/// Toy domain pair: target is the first `n_target` rows of an
/// `n_target_pool` draw, then `n_source` source rows.
pub fn generate_toy(cfg: &ToyConfig) -> Result<(DomainPair, OracleInfo)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pool = draw_toy_domain(cfg, cfg.target, cfg.n_target_pool, &mut rng);
    let src = draw_toy_domain(cfg, cfg.source, cfg.n_source, &mut rng);
    let keep: Vec<usize> = (0..cfg.n_target).collect();
    let names: Vec<String> = if cfg.intercept {
        vec!["intercept".into(), "x1".into(), "x2".into()]
    } else {
        vec!["x1".into(), "x2".into()]
    };
    let build = |d: &Draw| Dataset::with_names(d.x.clone(), d.z.clone(), d.y.clone(), names.clone(), "z".into(), "y".into());
    let target = build(&pool)?.select_rows(&keep)?;
    let source = build(&src)?;

    let ps = |dom: ToyDomain| {
        let mut v = vec![-cfg.beta1, -dom.beta2];
        if cfg.intercept {
            v.insert(0, 0.0);
        }
        v
    };
    let or_truth = cfg.intercept.then(|| OrTruth {
        treated: vec![cfg.tau, 0.0, cfg.alpha],
        control: vec![0.0, 0.0, cfg.alpha],
    });
    let oracle = OracleInfo {
        true_tau: cfg.tau,
        ps_target: ps(cfg.target),
        ps_source: ps(cfg.source),
        or_target: or_truth.clone(),
        or_source: or_truth,
        outcome_slope: if cfg.intercept {
            vec![0.0, 0.0, cfg.alpha]
        } else {
            vec![0.0, cfg.alpha]
        },
        noise_target: pool.noise[..cfg.n_target].to_vec(),
        noise_source: src.noise,
    };
    Ok((DomainPair::new(target, source)?, oracle))
}

/// One synthetic grid instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInstanceConfig {
    pub d: usize,
    pub s: usize,
    pub n: usize,
    pub n_s: usize,
    /// Extra target rows held out for lambda selection.
    pub validation: usize,
    pub coefficient_scale: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl GridInstanceConfig {
    pub fn new(d: usize, s: usize, n: usize, n_s: usize, seed: u64) -> Self {
        Self {
            d,
            s,
            n,
            n_s,
            validation: 50,
            coefficient_scale: 0.5,
            noise_sd: 0.5,
            seed,
        }
    }
}

/// A grid draw: training target, source, validation target and the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct GridInstance {
    pub domains: DomainPair,
    pub validation: Dataset,
    pub oracle: OracleInfo,
    /// Nonzero positions of the propensity difference.
    pub support: Vec<usize>,
}

/// Source propensity parameters drawn i.i.d. `N(0, scale^2)`; the target
/// differs in exactly `s` coordinates by nonzero `N(0, scale^2)` amounts.
/// Covariates are `N(0, I)` and outcomes follow `y = tau z + x'eta + eps`
/// with `eta ~ N(0, scale^2 / d)`, `tau ~ N(0, 1)` and `eps ~ N(0, noise_sd^2)`,
/// shared by both domains.
pub fn generate_grid_instance(cfg: &GridInstanceConfig) -> Result<GridInstance> {
    if cfg.s > cfg.d {
        return Err(TclError::InvalidConfig(format!("sparsity {} exceeds dimension {}", cfg.s, cfg.d)));
    }
    if cfg.d == 0 || cfg.n == 0 || cfg.n_s == 0 {
        return Err(TclError::InvalidConfig("grid instance needs positive d, n and n_s".into()));
    }
    if !(cfg.coefficient_scale > 0.0 && cfg.coefficient_scale.is_finite()) {
        return Err(TclError::InvalidConfig("coefficient scale must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let coef = Normal::new(0.0, cfg.coefficient_scale).expect("valid scale");
    let ps_source: Vec<f64> = (0..cfg.d).map(|_| coef.sample(&mut rng)).collect();
    let mut support = index::sample(&mut rng, cfg.d, cfg.s).into_vec();
    support.sort_unstable();
    let mut ps_target = ps_source.clone();
    for &j in &support {
        let mut delta = 0.0;
        while delta == 0.0 {
            delta = coef.sample(&mut rng);
        }
        ps_target[j] += delta;
    }
    let eta_dist = Normal::new(0.0, cfg.coefficient_scale / (cfg.d as f64).sqrt()).expect("valid scale");
    let eta: Vec<f64> = (0..cfg.d).map(|_| eta_dist.sample(&mut rng)).collect();
    let tau: f64 = rng.sample(StandardNormal);

    let draw = |rows: usize, b: &[f64], rng: &mut ChaCha8Rng| -> Draw {
        let mut x = Array2::zeros((rows, cfg.d));
        let mut z = Array1::zeros(rows);
        let mut y = Array1::zeros(rows);
        let mut noise = Vec::with_capacity(rows);
        for i in 0..rows {
            let mut index = 0.0;
            let mut linear = 0.0;
            for j in 0..cfg.d {
                let v: f64 = rng.sample(StandardNormal);
                x[[i, j]] = v;
                index += v * b[j];
                linear += v * eta[j];
            }
            let zi = if rng.random::<f64>() < sigmoid(index) { 1.0 } else { 0.0 };
            let eps = cfg.noise_sd * rng.sample::<f64, _>(StandardNormal);
            z[i] = zi;
            y[i] = tau * zi + linear + eps;
            noise.push(eps);
        }
        Draw { x, z, y, noise }
    };
    let tgt = draw(cfg.n + cfg.validation, &ps_target, &mut rng);
    let src = draw(cfg.n_s, &ps_source, &mut rng);
    let full_target = Dataset::new(tgt.x, tgt.z, tgt.y)?;
    let train_rows: Vec<usize> = (0..cfg.n).collect();
    let valid_rows: Vec<usize> = (cfg.n..cfg.n + cfg.validation).collect();
    let target = full_target.select_rows(&train_rows)?;
    let validation = full_target.select_rows(&valid_rows)?;
    let source = Dataset::new(src.x, src.z, src.y)?;
    let oracle = OracleInfo {
        true_tau: tau,
        ps_target,
        ps_source,
        or_target: None,
        or_source: None,
        outcome_slope: eta,
        noise_target: tgt.noise[..cfg.n].to_vec(),
        noise_source: src.noise,
    };
    Ok(GridInstance {
        domains: DomainPair::new(target, source)?,
        validation,
        oracle,
        support,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_truth_and_shapes() {
        let (pair, oracle) = generate_toy(&ToyConfig::with_seed(3)).unwrap();
        assert_eq!(oracle.true_tau, -2.0 / 30.0);
        assert_eq!(pair.target.n(), 100);
        assert_eq!(pair.source.n(), 1000);
        assert_eq!(pair.d(), 2);
        assert_eq!(oracle.ps_target, vec![-0.1, 0.1]);
        assert_eq!(oracle.ps_source, vec![-0.1, 0.2]);
        assert!(oracle.or_target.is_none());
    }

    #[test]
    fn toy_is_deterministic() {
        let a = generate_toy(&ToyConfig::with_seed(9)).unwrap();
        let b = generate_toy(&ToyConfig::with_seed(9)).unwrap();
        assert_eq!(a, b);
        let c = generate_toy(&ToyConfig::with_seed(10)).unwrap();
        assert_ne!(a.0.target, c.0.target);
    }

    #[test]
    fn toy_structural_identity() {
        let cfg = ToyConfig::with_seed(1);
        let (pair, oracle) = generate_toy(&cfg).unwrap();
        for (data, noise) in [(&pair.target, &oracle.noise_target), (&pair.source, &oracle.noise_source)] {
            for i in 0..data.n() {
                let r = data.outcome()[i] - cfg.tau * data.treatment()[i] - cfg.alpha * data.covariates()[[i, 1]];
                assert!((r - noise[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn toy_target_is_prefix_of_pool() {
        let small = ToyConfig {
            n_target: 10,
            ..ToyConfig::with_seed(4)
        };
        let large = ToyConfig {
            n_target: 50,
            ..ToyConfig::with_seed(4)
        };
        let (a, _) = generate_toy(&small).unwrap();
        let (b, _) = generate_toy(&large).unwrap();
        let first: Vec<usize> = (0..10).collect();
        assert_eq!(a.target, b.target.select_rows(&first).unwrap());
        assert_eq!(a.source, b.source);
    }

    #[test]
    fn toy_with_intercept_has_linear_or_truth() {
        let cfg = ToyConfig {
            intercept: true,
            ..ToyConfig::with_seed(2)
        };
        let (pair, oracle) = generate_toy(&cfg).unwrap();
        assert_eq!(pair.d(), 3);
        assert!(pair.target.covariates().column(0).iter().all(|&v| v == 1.0));
        let or = oracle.or_target.unwrap();
        for i in 0..pair.target.n() {
            let x = pair.target.covariates().row(i);
            let a = if pair.target.is_treated(i) { &or.treated } else { &or.control };
            let mean: f64 = x.iter().zip(a).map(|(u, v)| u * v).sum();
            assert!((pair.target.outcome()[i] - mean - oracle.noise_target[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn true_propensity_at_origin_and_toy_form() {
        let (_, oracle) = generate_toy(&ToyConfig::default()).unwrap();
        assert_eq!(true_propensity(&oracle, &[0.0, 0.0], Domain::Target).unwrap(), 0.5);
        let (x1, x2): (f64, f64) = (0.7, 2.3);
        let toy = 1.0 / (1.0 + (0.1 * x1 - 0.2 * x2).exp());
        assert!((true_propensity(&oracle, &[x1, x2], Domain::Source).unwrap() - toy).abs() < 1e-15);
        assert!(true_propensity(&oracle, &[1.0], Domain::Source).is_err());
    }

    /// Treatment rate under `x1 ~ N(mu1, 1)`, `x2 ~ N(mu2, 1)` by a
    /// midpoint rule on [-8, 8]^2 around the means.
    fn analytic_rate(mu1: f64, b1: f64, mu2: f64, b2: f64) -> f64 {
        let h = 0.02;
        let phi = |u: f64| (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut total = 0.0;
        let steps = (16.0 / h) as usize;
        for a in 0..steps {
            let u = -8.0 + (a as f64 + 0.5) * h;
            for b in 0..steps {
                let v = -8.0 + (b as f64 + 0.5) * h;
                let p = 1.0 / (1.0 + (b1 * (mu1 + u) + b2 * (mu2 + v)).exp());
                total += p * phi(u) * phi(v) * h * h;
            }
        }
        total
    }

    #[test]
    fn source_treatment_rate_matches_integral() {
        let cfg = ToyConfig {
            n_source: 100_000,
            ..ToyConfig::with_seed(5)
        };
        let (pair, _) = generate_toy(&cfg).unwrap();
        let rate = pair.source.treatment().sum() / pair.source.n() as f64;
        let expect = analytic_rate(0.0, 0.1, 1.0, -0.2);
        assert!((rate - expect).abs() < 0.05, "{rate} vs {expect}");
    }

    #[test]
    fn average_true_propensity_matches_treated_fraction() {
        let cfg = ToyConfig {
            n_target: 100_000,
            n_target_pool: 100_000,
            n_source: 10,
            ..ToyConfig::with_seed(6)
        };
        let (pair, oracle) = generate_toy(&cfg).unwrap();
        let e = true_propensities(&oracle, &pair.target, Domain::Target).unwrap();
        let rate = pair.target.treatment().sum() / pair.target.n() as f64;
        assert!((e.mean().unwrap() - rate).abs() < 0.01);
    }

    #[test]
    fn grid_instance_sparsity() {
        for s in [0, 1, 3, 10] {
            let inst = generate_grid_instance(&GridInstanceConfig::new(10, s, 30, 60, s as u64)).unwrap();
            let nonzero = inst
                .oracle
                .ps_target
                .iter()
                .zip(&inst.oracle.ps_source)
                .filter(|(a, b)| a != b)
                .count();
            assert_eq!(nonzero, s);
            assert_eq!(inst.support.len(), s);
            assert_eq!(inst.domains.target.n(), 30);
            assert_eq!(inst.validation.n(), 50);
            assert_eq!(inst.domains.source.n(), 60);
        }
        assert!(generate_grid_instance(&GridInstanceConfig::new(3, 4, 10, 10, 0)).is_err());
    }

    #[test]
    fn grid_instance_outcome_identity() {
        let inst = generate_grid_instance(&GridInstanceConfig::new(5, 2, 40, 40, 11)).unwrap();
        let again = generate_grid_instance(&GridInstanceConfig::new(5, 2, 40, 40, 11)).unwrap();
        assert_eq!(inst, again);
        let t = &inst.domains.target;
        for i in 0..t.n() {
            let lin: f64 = t.covariates().row(i).iter().zip(&inst.oracle.outcome_slope).map(|(a, b)| a * b).sum();
            let r = t.outcome()[i] - inst.oracle.true_tau * t.treatment()[i] - lin;
            assert!((r - inst.oracle.noise_target[i]).abs() < 1e-12);
        }
    }
}
