//! Two-group linear discriminant rules on decorrelated data.
//!
//! Observations are whitened with `Ω̂^{1/2}`; the rule is
//! `δ(x) = aᵀ(Ω̂^{1/2}x − m) + log(n₁/n₂)` and `x` is assigned to group 1 iff
//! `δ(x) > 0`. The coefficient vector `a` comes either from shrinking the
//! difference of whitened group means ([`Variant::Diff`], rule "1") or from
//! shrinking each whitened group mean separately ([`Variant::PerGroup`],
//! rule "2").

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix, SymMatrix};
use crate::precision::{PrecisionEstimate, PrecisionKind, PrecisionMethod};
use crate::shrinkage::{shrink, MeanMethod, NoisyVector, ShrinkageConfig};

/// Feature matrix with group labels in `{1, 2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Matrix,
    labels: Vec<u8>,
}

impl LabeledDataset {
    pub fn new(features: Matrix, labels: Vec<u8>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::ShapeMismatch { expected: features.nrows(), got: labels.len() });
        }
        if features.ncols() == 0 {
            return Err(Error::invalid("dataset needs at least one feature"));
        }
        if let Some(bad) = labels.iter().find(|&&l| l != 1 && l != 2) {
            return Err(Error::invalid(alloc::format!("label {bad} is not 1 or 2")));
        }
        if !features.is_finite() {
            return Err(Error::invalid("features must be finite"));
        }
        Ok(Self { features, labels })
    }

    /// Stacks group-1 rows followed by group-2 rows.
    pub fn from_groups(group1: &Matrix, group2: &Matrix) -> Result<Self> {
        if group1.ncols() != group2.ncols() {
            return Err(Error::ShapeMismatch { expected: group1.ncols(), got: group2.ncols() });
        }
        let p = group1.ncols();
        let mut data = Vec::with_capacity((group1.nrows() + group2.nrows()) * p);
        data.extend_from_slice(group1.as_slice());
        data.extend_from_slice(group2.as_slice());
        let mut labels = alloc::vec![1u8; group1.nrows()];
        labels.resize(group1.nrows() + group2.nrows(), 2);
        Self::new(Matrix::from_vec(labels.len(), p, data)?, labels)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn n1(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn n2(&self) -> usize {
        self.len() - self.n1()
    }

    /// Rows belonging to group `g`.
    pub fn group(&self, g: u8) -> Matrix {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == g).collect();
        self.features.select_rows(&idx)
    }

    /// The dataset with row `i` removed.
    pub fn without(&self, i: usize) -> LabeledDataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&k| k != i).collect();
        LabeledDataset {
            features: self.features.select_rows(&idx),
            labels: idx.iter().map(|&k| self.labels[k]).collect(),
        }
    }

    /// Same features with labels replaced.
    pub fn relabeled(&self, labels: Vec<u8>) -> Result<Self> {
        Self::new(self.features.clone(), labels)
    }

    fn check_fit_sizes(&self) -> Result<()> {
        let (n1, n2) = (self.n1(), self.n2());
        if n1 < 2 || n2 < 2 {
            return Err(Error::InsufficientData { needed: 2, got: n1.min(n2) });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    /// Shrink the difference of whitened means (rule "1").
    Diff,
    /// Shrink each whitened group mean separately (rule "2").
    PerGroup,
}

impl Variant {
    pub fn tag(self) -> &'static str {
        match self {
            Variant::Diff => "DIFF",
            Variant::PerGroup => "PERGROUP",
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            Variant::Diff => "1",
            Variant::PerGroup => "2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "DIFF" | "1" => Some(Variant::Diff),
            "PERGROUP" | "2" => Some(Variant::PerGroup),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// A mean-estimation method paired with a rule variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RuleSpec {
    pub mean_method: MeanMethod,
    pub variant: Variant,
}

impl RuleSpec {
    pub const fn new(mean_method: MeanMethod, variant: Variant) -> Self {
        Self { mean_method, variant }
    }

    /// The five rules reported in the simulation tables, in row order.
    pub const TABLE_ROWS: [RuleSpec; 5] = [
        RuleSpec::new(MeanMethod::Npeb, Variant::Diff),
        RuleSpec::new(MeanMethod::Npeb, Variant::PerGroup),
        RuleSpec::new(MeanMethod::Npmle, Variant::Diff),
        RuleSpec::new(MeanMethod::Npmle, Variant::PerGroup),
        RuleSpec::new(MeanMethod::Sm, Variant::Diff),
    ];

    /// Row label such as `NPEB1` or `NPMLE2`; both sample-mean variants are
    /// the same rule and share the label `SM`.
    pub fn label(&self) -> String {
        match self.mean_method {
            MeanMethod::Sm => String::from("SM"),
            m => alloc::format!("{}{}", m.tag(), self.variant.suffix()),
        }
    }

    /// Inverse of [`Self::label`]; `SM` maps to the difference variant.
    pub fn parse(label: &str) -> Option<Self> {
        let l = label.trim().to_ascii_uppercase();
        if l == "SM" || l == "SM1" {
            return Some(RuleSpec::new(MeanMethod::Sm, Variant::Diff));
        }
        if l == "SM2" {
            return Some(RuleSpec::new(MeanMethod::Sm, Variant::PerGroup));
        }
        let (head, tail) = l.split_at(l.len().checked_sub(1)?);
        Some(RuleSpec::new(MeanMethod::parse(head)?, Variant::parse(tail)?))
    }
}

impl fmt::Display for RuleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// A fitted linear discriminant rule.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminantRule {
    weights: Vec<f64>,
    intercept: f64,
    prior_term: f64,
    whitener: SymMatrix,
    // whitener · weights, so that scoring is a single dot product on raw x
    raw_weights: Vec<f64>,
    variant: Variant,
    mean_method: MeanMethod,
    precision_method: PrecisionKind,
    tie_label: u8,
}

impl DiscriminantRule {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn prior_term(&self) -> f64 {
        self.prior_term
    }

    pub fn whitener(&self) -> &SymMatrix {
        &self.whitener
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn mean_method(&self) -> MeanMethod {
        self.mean_method
    }

    pub fn precision_method(&self) -> PrecisionKind {
        self.precision_method
    }

    pub fn spec(&self) -> RuleSpec {
        RuleSpec::new(self.mean_method, self.variant)
    }

    /// Multiplies weights and intercept by `c > 0`, leaving the prior term.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::invalid("scale must be positive"));
        }
        let mut out = self.clone();
        out.weights.iter_mut().for_each(|w| *w *= c);
        out.raw_weights.iter_mut().for_each(|w| *w *= c);
        out.intercept *= c;
        Ok(out)
    }

    /// `δ(x) = weightsᵀ(whitener·x) + intercept + prior_term`.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.raw_weights.len() {
            return Err(Error::ShapeMismatch { expected: self.raw_weights.len(), got: x.len() });
        }
        Ok(dot(&self.raw_weights, x) + self.intercept + self.prior_term)
    }

    /// Label for a score: 1 iff `δ > 0`, ties to the larger training group.
    pub fn label_for(&self, delta: f64) -> u8 {
        if delta > 0.0 {
            1
        } else if delta < 0.0 {
            2
        } else {
            self.tie_label
        }
    }

    pub fn classify(&self, x: &[f64]) -> Result<u8> {
        Ok(self.label_for(self.score(x)?))
    }

    pub fn evaluate(&self, test: &LabeledDataset) -> Result<PredictionReport> {
        let predicted = test.features.rows_iter().map(|x| self.classify(x)).collect::<Result<Vec<u8>>>()?;
        PredictionReport::from_predictions(&test.labels, predicted)
    }
}

/// Predicted labels with their error rate and confusion counts.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionReport {
    pub predicted: Vec<u8>,
    pub error_rate: f64,
    /// `confusion[true − 1][predicted − 1]`.
    pub confusion: [[usize; 2]; 2],
}

impl PredictionReport {
    pub fn from_predictions(truth: &[u8], predicted: Vec<u8>) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::ShapeMismatch { expected: truth.len(), got: predicted.len() });
        }
        if truth.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let mut confusion = [[0usize; 2]; 2];
        for (&t, &p) in truth.iter().zip(&predicted) {
            if !(1..=2).contains(&t) || !(1..=2).contains(&p) {
                return Err(Error::invalid("labels must be 1 or 2"));
            }
            confusion[(t - 1) as usize][(p - 1) as usize] += 1;
        }
        let wrong = confusion[0][1] + confusion[1][0];
        Ok(Self { predicted, error_rate: wrong as f64 / truth.len() as f64, confusion })
    }

    pub fn misclassified(&self) -> usize {
        self.confusion[0][1] + self.confusion[1][0]
    }
}

/// Replaces each row `x` by `Ω̂^{1/2}x`.
pub fn whiten(data: &Matrix, prec: &PrecisionEstimate) -> Result<Matrix> {
    let p = prec.dim();
    if data.ncols() != p {
        return Err(Error::ShapeMismatch { expected: p, got: data.ncols() });
    }
    let mut out = Matrix::zeros(data.nrows(), p);
    for i in 0..data.nrows() {
        let z = prec.omega_half().mul_vec(data.row(i))?;
        out.row_mut(i).copy_from_slice(&z);
    }
    Ok(out)
}

/// Whitened group sample means `z̄_g = Ω̂^{1/2} x̄_g` with group sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct WhitenedMeans {
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub n1: usize,
    pub n2: usize,
}

impl WhitenedMeans {
    pub fn compute(train: &LabeledDataset, prec: &PrecisionEstimate) -> Result<Self> {
        train.check_fit_sizes()?;
        if train.dim() != prec.dim() {
            return Err(Error::ShapeMismatch { expected: prec.dim(), got: train.dim() });
        }
        let p = train.dim();
        let mut sums = [alloc::vec![0.0; p], alloc::vec![0.0; p]];
        for (row, &l) in train.features.rows_iter().zip(&train.labels) {
            for (s, &x) in sums[(l - 1) as usize].iter_mut().zip(row) {
                *s += x;
            }
        }
        let (n1, n2) = (train.n1(), train.n2());
        let [mut m1, mut m2] = sums;
        m1.iter_mut().for_each(|v| *v /= n1 as f64);
        m2.iter_mut().for_each(|v| *v /= n2 as f64);
        let z1 = prec.omega_half().mul_vec(&m1)?;
        let z2 = prec.omega_half().mul_vec(&m2)?;
        Ok(Self { z1, z2, n1, n2 })
    }
}

/// Builds a rule from precomputed whitened means.
pub fn fit_rule_from_means(
    means: &WhitenedMeans,
    prec: &PrecisionEstimate,
    spec: RuleSpec,
    cfg: &ShrinkageConfig,
) -> Result<DiscriminantRule> {
    let WhitenedMeans { z1, z2, n1, n2 } = means;
    let (n1, n2) = (*n1, *n2);
    let (weights, midpoint) = match spec.variant {
        Variant::Diff => {
            let d: Vec<f64> = z1.iter().zip(z2).map(|(a, b)| a - b).collect();
            let sd = libm::sqrt(1.0 / n1 as f64 + 1.0 / n2 as f64);
            let w = shrink(&NoisyVector::new(d, sd)?, spec.mean_method, cfg)?.estimates;
            let mid: Vec<f64> = z1.iter().zip(z2).map(|(a, b)| (a + b) / 2.0).collect();
            (w, mid)
        }
        Variant::PerGroup => {
            let mu1 =
                shrink(&NoisyVector::new(z1.clone(), 1.0 / libm::sqrt(n1 as f64))?, spec.mean_method, cfg)?.estimates;
            let mu2 =
                shrink(&NoisyVector::new(z2.clone(), 1.0 / libm::sqrt(n2 as f64))?, spec.mean_method, cfg)?.estimates;
            let w: Vec<f64> = mu1.iter().zip(&mu2).map(|(a, b)| a - b).collect();
            let mid: Vec<f64> = mu1.iter().zip(&mu2).map(|(a, b)| (a + b) / 2.0).collect();
            (w, mid)
        }
    };
    let intercept = -dot(&weights, &midpoint);
    let raw_weights = prec.omega_half().mul_vec(&weights)?;
    Ok(DiscriminantRule {
        weights,
        intercept,
        prior_term: libm::log(n1 as f64 / n2 as f64),
        whitener: prec.omega_half().clone(),
        raw_weights,
        variant: spec.variant,
        mean_method: spec.mean_method,
        precision_method: prec.method(),
        tie_label: if n1 >= n2 { 1 } else { 2 },
    })
}

pub fn fit_rule(
    train: &LabeledDataset,
    prec: &PrecisionEstimate,
    spec: RuleSpec,
    cfg: &ShrinkageConfig,
) -> Result<DiscriminantRule> {
    fit_rule_from_means(&WhitenedMeans::compute(train, prec)?, prec, spec, cfg)
}

/// Rule "1": shrink `z̄₁ − z̄₂` with noise level `√(1/n₁ + 1/n₂)`.
pub fn fit_rule_diff(
    train: &LabeledDataset,
    prec: &PrecisionEstimate,
    mean_method: MeanMethod,
) -> Result<DiscriminantRule> {
    fit_rule(train, prec, RuleSpec::new(mean_method, Variant::Diff), &ShrinkageConfig::default())
}

/// Rule "2": shrink `z̄₁` and `z̄₂` separately with noise levels `1/√n_g`.
pub fn fit_rule_pergroup(
    train: &LabeledDataset,
    prec: &PrecisionEstimate,
    mean_method: MeanMethod,
) -> Result<DiscriminantRule> {
    fit_rule(train, prec, RuleSpec::new(mean_method, Variant::PerGroup), &ShrinkageConfig::default())
}

/// Estimates the pooled precision of a training set with `method`.
pub fn fit_precision(train: &LabeledDataset, method: &PrecisionMethod, seed: u64) -> Result<PrecisionEstimate> {
    train.check_fit_sizes()?;
    method.fit_pooled(&train.group(1), &train.group(2), seed)
}

/// Leave-one-out settings.
#[derive(Debug, Clone, PartialEq)]
pub struct LoocvOptions {
    pub rule: RuleSpec,
    pub shrinkage: ShrinkageConfig,
    pub seed: u64,
    /// Reuse one precision estimate fitted on all rows instead of refitting
    /// per fold. Faster, but the held-out row leaks into the whitener.
    pub fast_whitener: bool,
}

impl LoocvOptions {
    pub fn new(rule: RuleSpec, seed: u64) -> Self {
        Self { rule, shrinkage: ShrinkageConfig::default(), seed, fast_whitener: false }
    }
}

/// Predicts row `i` from a rule fitted on the remaining rows. `shared` is
/// the full-data precision used in fast mode.
pub fn loocv_fold(
    data: &LabeledDataset,
    i: usize,
    method: &PrecisionMethod,
    opts: &LoocvOptions,
    shared: Option<&PrecisionEstimate>,
) -> Result<u8> {
    if i >= data.len() {
        return Err(Error::invalid("fold index out of range"));
    }
    let train = data.without(i);
    train.check_fit_sizes()?;
    let owned;
    let prec = match shared {
        Some(p) => p,
        None => {
            owned = fit_precision(&train, method, crate::seed::derive(opts.seed, i as u64))?;
            &owned
        }
    };
    let rule = fit_rule(&train, prec, opts.rule, &opts.shrinkage)?;
    rule.classify(data.features.row(i))
}

/// Precision estimate shared by all folds in fast mode.
pub fn loocv_shared_precision(
    data: &LabeledDataset,
    method: &PrecisionMethod,
    opts: &LoocvOptions,
) -> Result<Option<PrecisionEstimate>> {
    if opts.fast_whitener {
        Ok(Some(fit_precision(data, method, opts.seed)?))
    } else {
        Ok(None)
    }
}

/// Leave-one-out cross-validated predictions.
pub fn loocv(data: &LabeledDataset, method: &PrecisionMethod, opts: &LoocvOptions) -> Result<PredictionReport> {
    if data.len() < 5 {
        return Err(Error::InsufficientData { needed: 5, got: data.len() });
    }
    let shared = loocv_shared_precision(data, method, opts)?;
    let predicted =
        (0..data.len()).map(|i| loocv_fold(data, i, method, opts, shared.as_ref())).collect::<Result<Vec<u8>>>()?;
    PredictionReport::from_predictions(&data.labels, predicted)
}
