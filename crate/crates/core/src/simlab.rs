//! Gaussian simulation settings, replicated experiments over all
//! precision × rule combinations, and error-rate tables.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::classifier::{fit_rule_from_means, LabeledDataset, RuleSpec, WhitenedMeans};
use crate::error::{Error, Result};
use crate::linalg::{self, EigenSystem, Power};
use crate::matrix::{Matrix, SymMatrix};
use crate::precision::{oracle_precision, GlassoSpec, LamConfig, PrecisionEstimate, PrecisionKind, PrecisionMethod};
use crate::seed;
use crate::shrinkage::ShrinkageConfig;
use crate::stats::mean_sd;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CovarianceFamily {
    /// `Ω_ij = ρ^{|i−j|}`.
    Ar1Prec,
    /// `Ω = blockdiag(Ω_q, I_{p−q})` with an AR(1) block `Ω_q`.
    BlockedAr1Prec,
    /// `Ω = (1−ρ)I + ρ11ᵀ`.
    ExchangeablePrec,
    /// `Σ_ij = 1/(|i−j|+1)`.
    ToeplitzCov,
    /// `Σ_ij = max(1 − |i−j|/10, 0)`.
    BandedCov,
}

impl CovarianceFamily {
    pub fn tag(self) -> &'static str {
        match self {
            CovarianceFamily::Ar1Prec => "AR1_PREC",
            CovarianceFamily::BlockedAr1Prec => "BLOCKED_AR1_PREC",
            CovarianceFamily::ExchangeablePrec => "EXCHANGEABLE_PREC",
            CovarianceFamily::ToeplitzCov => "TOEPLITZ_COV",
            CovarianceFamily::BandedCov => "BANDED_COV",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            CovarianceFamily::Ar1Prec,
            CovarianceFamily::BlockedAr1Prec,
            CovarianceFamily::ExchangeablePrec,
            CovarianceFamily::ToeplitzCov,
            CovarianceFamily::BandedCov,
        ]
        .into_iter()
        .find(|f| f.tag().eq_ignore_ascii_case(s.trim()))
    }

    fn defines_precision(self) -> bool {
        matches!(
            self,
            CovarianceFamily::Ar1Prec | CovarianceFamily::BlockedAr1Prec | CovarianceFamily::ExchangeablePrec
        )
    }
}

impl fmt::Display for CovarianceFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSpec {
    pub family: CovarianceFamily,
    pub p: usize,
    /// Correlation parameter of the AR(1) and exchangeable families.
    pub rho: f64,
    /// Block size of the blocked AR(1) family.
    pub q: usize,
}

impl CovarianceSpec {
    pub fn new(family: CovarianceFamily, p: usize) -> Self {
        Self { family, p, rho: 0.0, q: p }
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_block(mut self, q: usize) -> Self {
        self.q = q;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if !self.rho.is_finite() {
            return Err(Error::invalid("rho must be finite"));
        }
        match self.family {
            CovarianceFamily::Ar1Prec | CovarianceFamily::BlockedAr1Prec if libm::fabs(self.rho) >= 1.0 => {
                Err(Error::invalid("AR(1) rho must satisfy |rho| < 1"))
            }
            CovarianceFamily::BlockedAr1Prec if self.q == 0 || self.q > self.p => {
                Err(Error::invalid("block size must lie in 1..=p"))
            }
            CovarianceFamily::ExchangeablePrec if self.rho >= 1.0 => {
                Err(Error::invalid("exchangeable rho must be below 1"))
            }
            _ => Ok(()),
        }
    }

    /// The defining matrix (precision for `*_PREC`, covariance otherwise).
    fn defining_matrix(&self) -> SymMatrix {
        let rho = self.rho;
        let dist = |i: usize, j: usize| i.abs_diff(j);
        match self.family {
            CovarianceFamily::Ar1Prec => SymMatrix::from_fn(self.p, |i, j| libm::pow(rho, dist(i, j) as f64)),
            CovarianceFamily::BlockedAr1Prec => SymMatrix::from_fn(self.p, |i, j| {
                if i < self.q && j < self.q {
                    libm::pow(rho, dist(i, j) as f64)
                } else if i == j {
                    1.0
                } else {
                    0.0
                }
            }),
            CovarianceFamily::ExchangeablePrec => SymMatrix::from_fn(self.p, |i, j| if i == j { 1.0 } else { rho }),
            CovarianceFamily::ToeplitzCov => SymMatrix::from_fn(self.p, |i, j| 1.0 / (dist(i, j) as f64 + 1.0)),
            CovarianceFamily::BandedCov => SymMatrix::from_fn(self.p, |i, j| (1.0 - dist(i, j) as f64 / 10.0).max(0.0)),
        }
    }
}

/// Σ, Ω = Σ⁻¹ and the eigensystem of the defining matrix.
struct Spectral {
    sigma: SymMatrix,
    omega: SymMatrix,
    eig: EigenSystem,
    defines_precision: bool,
}

impl Spectral {
    fn sigma_half(&self) -> SymMatrix {
        if self.defines_precision {
            self.eig.reconstruct_with(|x| 1.0 / libm::sqrt(x))
        } else {
            self.eig.reconstruct_with(libm::sqrt)
        }
    }
}

fn spectral(spec: &CovarianceSpec) -> Result<Spectral> {
    spec.validate()?;
    let m = spec.defining_matrix();
    let eig = linalg::sym_eigen(&m)?;
    let vals = eig.values();
    let (max, min) = (vals[0], vals[vals.len() - 1]);
    if !(min > 1e-12 * max) {
        return Err(Error::NotPositiveDefinite);
    }
    let inverse = eig.reconstruct_with(|x| 1.0 / x);
    let defines_precision = spec.family.defines_precision();
    let (sigma, omega) = if defines_precision { (inverse, m) } else { (m, inverse) };
    Ok(Spectral { sigma, omega, eig, defines_precision })
}

/// Returns `(Σ, Ω)`; whichever one the family defines is exact and the other
/// is its inverse.
pub fn build_covariance(spec: &CovarianceSpec) -> Result<(SymMatrix, SymMatrix)> {
    let s = spectral(spec)?;
    Ok((s.sigma, s.omega))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeanScale {
    /// `μ₂ = (Δ_l, 0)` directly.
    Raw,
    /// `μ₂ = Σ^{1/2}(Δ_l, 0)`, so the whitened mean difference is sparse.
    SScale,
}

impl MeanScale {
    pub fn tag(self) -> &'static str {
        match self {
            MeanScale::Raw => "RAW",
            MeanScale::SScale => "S_SCALE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "RAW" => Some(MeanScale::Raw),
            "S_SCALE" => Some(MeanScale::SScale),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanSpec {
    pub delta: f64,
    pub l: usize,
    pub scale: MeanScale,
}

fn sparse_pattern(spec: &MeanSpec, p: usize) -> Result<Vec<f64>> {
    if spec.l > p {
        return Err(Error::invalid("l exceeds the dimension"));
    }
    if !spec.delta.is_finite() {
        return Err(Error::invalid("delta must be finite"));
    }
    let mut v = vec![0.0; p];
    v[..spec.l].iter_mut().for_each(|x| *x = spec.delta);
    Ok(v)
}

fn means_with_root(
    spec: &MeanSpec,
    p: usize,
    sigma_half: impl FnOnce() -> Result<SymMatrix>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let pattern = sparse_pattern(spec, p)?;
    let mu2 = match spec.scale {
        MeanScale::Raw => pattern,
        MeanScale::SScale => sigma_half()?.mul_vec(&pattern)?,
    };
    Ok((vec![0.0; p], mu2))
}

/// `(μ₁, μ₂)` with `μ₁ = 0`.
pub fn build_means(spec: &MeanSpec, sigma: &SymMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    means_with_root(spec, sigma.dim(), || linalg::pd_power(sigma, Power::Sqrt))
}

/// Draws rows from `N(μ, Σ)` as `μ + Σ^{1/2}z`.
#[derive(Debug, Clone, PartialEq)]
pub struct MvnSampler {
    mu: Vec<f64>,
    root: SymMatrix,
}

impl MvnSampler {
    pub fn new(mu: Vec<f64>, sigma: &SymMatrix) -> Result<Self> {
        Self::from_root(mu, linalg::pd_power(sigma, Power::Sqrt)?)
    }

    pub fn from_root(mu: Vec<f64>, root: SymMatrix) -> Result<Self> {
        if mu.len() != root.dim() {
            return Err(Error::ShapeMismatch { expected: root.dim(), got: mu.len() });
        }
        Ok(Self { mu, root })
    }

    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let p = self.mu.len();
        let mut out = Matrix::zeros(n, p);
        let mut z = vec![0.0; p];
        for i in 0..n {
            z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            let row = out.row_mut(i);
            for (k, r) in row.iter_mut().enumerate() {
                *r = self.mu[k] + crate::matrix::dot(self.root.row(k), &z);
            }
        }
        out
    }
}

/// `n` i.i.d. rows from `N(μ, Σ)`, deterministic in `seed`.
pub fn sample_mvn(mu: &[f64], sigma: &SymMatrix, n: usize, seed: u64) -> Result<Matrix> {
    let sampler = MvnSampler::new(mu.to_vec(), sigma)?;
    Ok(sampler.sample(n, &mut seed::rng(seed)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSetting {
    pub id: String,
    pub cov: CovarianceSpec,
    pub mean: MeanSpec,
    pub n_train: usize,
    pub n_test: usize,
    pub replications: usize,
    pub seed: u64,
}

impl SimSetting {
    /// Identifiers of the ten built-in settings.
    pub const PRESET_IDS: [&'static str; 10] = ["1-1", "1-2", "2-1", "2-2", "3-1", "3-2", "4-1", "4-2", "5-1", "5-2"];

    /// A built-in setting: `p = 500`, 50 training and 250 test rows per
    /// group, 100 replications.
    pub fn preset(id: &str) -> Option<Self> {
        use CovarianceFamily::*;
        use MeanScale::*;
        let p = 500;
        let (cov, delta, l, scale) = match id {
            "1-1" => (CovarianceSpec::new(Ar1Prec, p).with_rho(0.8), 3.0, 20, SScale),
            "1-2" => (CovarianceSpec::new(Ar1Prec, p).with_rho(0.8), 0.4, 400, SScale),
            "2-1" => (CovarianceSpec::new(BlockedAr1Prec, p).with_rho(0.9).with_block(50), 3.0, 20, SScale),
            "2-2" => (CovarianceSpec::new(BlockedAr1Prec, p).with_rho(0.9).with_block(50), 0.15, 400, SScale),
            "3-1" => (CovarianceSpec::new(ExchangeablePrec, p).with_rho(0.3), 0.7, 20, Raw),
            "3-2" => (CovarianceSpec::new(ExchangeablePrec, p).with_rho(0.3), 0.07, 20, SScale),
            "4-1" => (CovarianceSpec::new(ToeplitzCov, p), 1.0, 20, Raw),
            "4-2" => (CovarianceSpec::new(ToeplitzCov, p), 0.4, 20, SScale),
            "5-1" => (CovarianceSpec::new(BandedCov, p), 0.7, 20, Raw),
            "5-2" => (CovarianceSpec::new(BandedCov, p), 0.6, 20, SScale),
            _ => return None,
        };
        Some(Self {
            id: id.to_string(),
            cov,
            mean: MeanSpec { delta, l, scale },
            n_train: 50,
            n_test: 250,
            replications: 100,
            seed: 0,
        })
    }

    pub fn p(&self) -> usize {
        self.cov.p
    }

    fn validate(&self) -> Result<()> {
        if self.n_train < 2 {
            return Err(Error::InsufficientData { needed: 2, got: self.n_train });
        }
        if self.n_test == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        Ok(())
    }
}

/// The data-generating model of a setting.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub sigma: SymMatrix,
    pub omega: SymMatrix,
    pub mu1: Vec<f64>,
    pub mu2: Vec<f64>,
    oracle: PrecisionEstimate,
    sampler1: MvnSampler,
    sampler2: MvnSampler,
}

impl Population {
    pub fn build(setting: &SimSetting) -> Result<Self> {
        setting.validate()?;
        let spec = spectral(&setting.cov)?;
        let root = spec.sigma_half();
        let (mu1, mu2) = means_with_root(&setting.mean, setting.p(), || Ok(root.clone()))?;
        let oracle = oracle_precision(&spec.omega)?;
        Ok(Self {
            sampler1: MvnSampler::from_root(mu1.clone(), root.clone())?,
            sampler2: MvnSampler::from_root(mu2.clone(), root)?,
            sigma: spec.sigma,
            omega: spec.omega,
            mu1,
            mu2,
            oracle,
        })
    }

    pub fn oracle(&self) -> &PrecisionEstimate {
        &self.oracle
    }

    pub fn sigma_half(&self) -> &SymMatrix {
        &self.sampler1.root
    }

    /// `n_per_group` rows from each group, group 1 first.
    pub fn sample(&self, n_per_group: usize, rng: &mut ChaCha8Rng) -> Result<LabeledDataset> {
        let g1 = self.sampler1.sample(n_per_group, rng);
        let g2 = self.sampler2.sample(n_per_group, rng);
        LabeledDataset::from_groups(&g1, &g2)
    }
}

/// Estimator settings for an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentMethods {
    pub precisions: Vec<PrecisionKind>,
    pub rules: Vec<RuleSpec>,
    pub glasso: GlassoSpec,
    pub lam: LamConfig,
    pub shrinkage: ShrinkageConfig,
}

impl Default for ExperimentMethods {
    fn default() -> Self {
        Self {
            precisions: PrecisionKind::ALL.to_vec(),
            rules: RuleSpec::TABLE_ROWS.to_vec(),
            glasso: GlassoSpec::default(),
            lam: LamConfig::default(),
            shrinkage: ShrinkageConfig::default(),
        }
    }
}

impl ExperimentMethods {
    fn resolve(&self, kind: PrecisionKind, pop: &Population) -> PrecisionMethod {
        match kind {
            PrecisionKind::Ir => PrecisionMethod::Ir,
            PrecisionKind::Glasso => PrecisionMethod::Glasso(self.glasso.clone()),
            PrecisionKind::Lam => PrecisionMethod::Lam(self.lam.clone()),
            PrecisionKind::Oracle => PrecisionMethod::Oracle(Box::new(pop.oracle.clone())),
        }
    }
}

/// One table cell: a precision estimator with a discriminant rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub precision: PrecisionKind,
    pub rule: RuleSpec,
}

/// Test error of every cell in one replication; failed fits carry the error
/// message instead.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub rep: usize,
    pub cells: BTreeMap<CellKey, core::result::Result<f64, String>>,
}

/// Seed of replication `rep` under master seed `master`.
pub fn replication_seed(master: u64, rep: usize) -> u64 {
    seed::derive(master, rep as u64)
}

/// Draws fresh training and test sets and evaluates every cell.
pub fn run_replication(
    setting: &SimSetting,
    pop: &Population,
    methods: &ExperimentMethods,
    rep: usize,
) -> Result<ReplicationResult> {
    let rep_seed = replication_seed(setting.seed, rep);
    let mut rng = seed::rng(seed::derive(rep_seed, 0));
    let train = pop.sample(setting.n_train, &mut rng)?;
    let test = pop.sample(setting.n_test, &mut rng)?;
    let (g1, g2) = (train.group(1), train.group(2));
    let mut cells = BTreeMap::new();
    for &kind in &methods.precisions {
        let method = methods.resolve(kind, pop);
        let fit_seed = seed::derive_path(rep_seed, &[1, kind as u64]);
        let outcome = method.fit_pooled(&g1, &g2, fit_seed).and_then(|prec| {
            let means = WhitenedMeans::compute(&train, &prec)?;
            Ok((prec, means))
        });
        for &rule in &methods.rules {
            let key = CellKey { precision: kind, rule };
            let value = match &outcome {
                Ok((prec, means)) => fit_rule_from_means(means, prec, rule, &methods.shrinkage)
                    .and_then(|r| r.evaluate(&test))
                    .map(|r| r.error_rate)
                    .map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            };
            cells.insert(key, value);
        }
    }
    Ok(ReplicationResult { rep, cells })
}

/// Mean and standard deviation of one cell's error rates.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub mean: f64,
    pub sd: f64,
    /// Successful replications.
    pub reps: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentTable {
    pub setting: String,
    pub cells: BTreeMap<CellKey, CellSummary>,
}

impl ExperimentTable {
    pub fn get(&self, precision: PrecisionKind, rule: RuleSpec) -> Option<&CellSummary> {
        self.cells.get(&CellKey { precision, rule })
    }

    /// Rule labels (rows) and precision labels (columns) present, in
    /// table order.
    pub fn layout(&self) -> (Vec<RuleSpec>, Vec<PrecisionKind>) {
        let mut rows: Vec<RuleSpec> =
            RuleSpec::TABLE_ROWS.iter().copied().filter(|r| self.cells.keys().any(|k| k.rule == *r)).collect();
        for k in self.cells.keys() {
            if !rows.contains(&k.rule) {
                rows.push(k.rule);
            }
        }
        let cols =
            PrecisionKind::ALL.iter().copied().filter(|p| self.cells.keys().any(|k| k.precision == *p)).collect();
        (rows, cols)
    }
}

/// Combines replications into per-cell summaries. Replications are ordered
/// by index first, so the result does not depend on completion order.
pub fn aggregate(setting: &str, mut results: Vec<ReplicationResult>) -> ExperimentTable {
    results.sort_by_key(|r| r.rep);
    let mut values: BTreeMap<CellKey, (Vec<f64>, usize)> = BTreeMap::new();
    for r in &results {
        for (k, v) in &r.cells {
            let entry = values.entry(*k).or_default();
            match v {
                Ok(e) => entry.0.push(*e),
                Err(_) => entry.1 += 1,
            }
        }
    }
    let cells = values
        .into_iter()
        .map(|(k, (errs, failures))| {
            let (mean, sd) = mean_sd(&errs);
            (k, CellSummary { mean, sd, reps: errs.len(), failures })
        })
        .collect();
    ExperimentTable { setting: setting.to_string(), cells }
}

/// Runs every replication of a setting sequentially.
pub fn run_setting(setting: &SimSetting, methods: &ExperimentMethods) -> Result<ExperimentTable> {
    if setting.replications < 2 {
        return Err(Error::InsufficientData { needed: 2, got: setting.replications });
    }
    let pop = Population::build(setting)?;
    let results = (0..setting.replications)
        .map(|rep| run_replication(setting, &pop, methods, rep))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(&setting.id, results))
}
