//! Normal-means shrinkage on standardised values `u = values / σ`, where
//! `u_i ~ N(θ_i, 1)`: sample mean, hard threshold, kernel empirical Bayes
//! (f-modelling) and the grid NPMLE of the prior with its posterior mean
//! (g-modelling).

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::stats::{normal_pdf, NeumaierSum};

/// Observed values with a common noise level: `values[i] / σ ~ N(θ_i, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyVector {
    values: Vec<f64>,
    noise_sd: f64,
}

impl NoisyVector {
    pub fn new(values: Vec<f64>, noise_sd: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if !(noise_sd > 0.0) || !noise_sd.is_finite() {
            return Err(Error::invalid("noise_sd must be positive and finite"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("values must be finite"));
        }
        Ok(Self { values, noise_sd })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values on the unit-noise scale.
    pub fn standardized(&self) -> Vec<f64> {
        self.values.iter().map(|v| v / self.noise_sd).collect()
    }
}

/// Discrete prior on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingDistribution {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl MixingDistribution {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::ShapeMismatch { expected: atoms.len(), got: weights.len() });
        }
        if atoms.iter().any(|a| !a.is_finite()) || atoms.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("atoms must be finite and strictly increasing"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("weights must be non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("weights must sum to one"));
        }
        Ok(Self { atoms, weights })
    }

    /// Uniform weights over `atoms`.
    pub fn uniform(atoms: Vec<f64>) -> Result<Self> {
        let k = atoms.len().max(1);
        Self::new(atoms, vec![1.0 / k as f64; k])
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.atoms.iter().zip(&self.weights).map(|(a, w)| w * (a - m) * (a - m)).sum()
    }

    /// Marginal density `Σ_k w_k φ(u − v_k)` of an observation.
    pub fn marginal_density(&self, u: f64) -> f64 {
        self.atoms.iter().zip(&self.weights).map(|(v, w)| w * normal_pdf(u - v)).sum()
    }

    /// Derivative of [`Self::marginal_density`].
    pub fn marginal_density_derivative(&self, u: f64) -> f64 {
        self.atoms.iter().zip(&self.weights).map(|(v, w)| w * (v - u) * normal_pdf(u - v)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MeanMethod {
    Sm,
    Hard,
    Npeb,
    Npmle,
}

impl MeanMethod {
    pub const ALL: [MeanMethod; 4] = [MeanMethod::Sm, MeanMethod::Hard, MeanMethod::Npeb, MeanMethod::Npmle];

    pub fn tag(self) -> &'static str {
        match self {
            MeanMethod::Sm => "SM",
            MeanMethod::Hard => "HARD",
            MeanMethod::Npeb => "NPEB",
            MeanMethod::Npmle => "NPMLE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SM" => Some(MeanMethod::Sm),
            "HARD" => Some(MeanMethod::Hard),
            "NPEB" => Some(MeanMethod::Npeb),
            "NPMLE" => Some(MeanMethod::Npmle),
            _ => None,
        }
    }
}

impl fmt::Display for MeanMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageResult {
    pub estimates: Vec<f64>,
    pub method: MeanMethod,
    pub diagnostics: BTreeMap<String, f64>,
}

impl ShrinkageResult {
    fn plain(estimates: Vec<f64>, method: MeanMethod) -> Self {
        Self { estimates, method, diagnostics: BTreeMap::new() }
    }
}

/// Tuning knobs for every shrinkage method.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageConfig {
    pub hard_lambda_mult: f64,
    pub npeb_bandwidth: Option<f64>,
    pub npmle_grid_size: Option<usize>,
    pub npmle_max_iters: usize,
    pub npmle_tol: f64,
}

impl Default for ShrinkageConfig {
    fn default() -> Self {
        Self {
            hard_lambda_mult: 1.0,
            npeb_bandwidth: None,
            npmle_grid_size: None,
            npmle_max_iters: 5000,
            npmle_tol: 1e-8,
        }
    }
}

/// Applies `method` to `v`.
pub fn shrink(v: &NoisyVector, method: MeanMethod, cfg: &ShrinkageConfig) -> Result<ShrinkageResult> {
    match method {
        MeanMethod::Sm => Ok(shrink_sample_mean(v)),
        MeanMethod::Hard => shrink_hard_threshold(v, cfg.hard_lambda_mult),
        MeanMethod::Npeb => shrink_npeb(v, cfg.npeb_bandwidth),
        MeanMethod::Npmle => {
            let fit = npmle_fit(v, cfg.npmle_grid_size, cfg.npmle_max_iters, cfg.npmle_tol)?;
            Ok(npmle_result(v, fit))
        }
    }
}

/// Identity estimator.
pub fn shrink_sample_mean(v: &NoisyVector) -> ShrinkageResult {
    ShrinkageResult::plain(v.values.clone(), MeanMethod::Sm)
}

/// Keeps values whose standardised magnitude exceeds
/// `lambda_mult · √(2 log m)` and zeroes the rest.
pub fn shrink_hard_threshold(v: &NoisyVector, lambda_mult: f64) -> Result<ShrinkageResult> {
    if !(lambda_mult >= 0.0) || !lambda_mult.is_finite() {
        return Err(Error::invalid("lambda_mult must be non-negative"));
    }
    let lambda = lambda_mult * libm::sqrt(2.0 * libm::log(v.len() as f64));
    let estimates = v.values.iter().map(|&x| if libm::fabs(x / v.noise_sd) > lambda { x } else { 0.0 }).collect();
    let mut r = ShrinkageResult::plain(estimates, MeanMethod::Hard);
    r.diagnostics.insert("lambda".to_string(), lambda);
    Ok(r)
}

/// Default kernel bandwidth `1/√(log m)`, or 1 when `m ≤ 2`.
pub fn default_bandwidth(m: usize) -> f64 {
    if m <= 2 {
        1.0
    } else {
        1.0 / libm::sqrt(libm::log(m as f64))
    }
}

/// Tweedie-formula estimator with a Gaussian kernel density estimate of the
/// marginal: `θ̂_i = u_i + (1/h²) Σ_j (u_j − u_i) φ((u_i−u_j)/h) / Σ_j φ((u_i−u_j)/h)`,
/// both sums including `j = i`.
pub fn shrink_npeb(v: &NoisyVector, bandwidth: Option<f64>) -> Result<ShrinkageResult> {
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(_) => return Err(Error::invalid("bandwidth must be positive")),
        None => default_bandwidth(v.len()),
    };
    let u = v.standardized();
    let inv_h2 = 1.0 / (h * h);
    let estimates = u
        .iter()
        .map(|&ui| {
            let mut num = NeumaierSum::new();
            let mut den = NeumaierSum::new();
            for &uj in &u {
                let k = normal_pdf((ui - uj) / h);
                num.add((uj - ui) * k);
                den.add(k);
            }
            v.noise_sd * (ui + inv_h2 * num.value() / den.value())
        })
        .collect();
    let mut r = ShrinkageResult::plain(estimates, MeanMethod::Npeb);
    r.diagnostics.insert("bandwidth".to_string(), h);
    Ok(r)
}

/// Grid NPMLE of the prior fitted by EM, with its convergence record.
#[derive(Debug, Clone, PartialEq)]
pub struct NpmleFit {
    pub mixing: MixingDistribution,
    pub iterations: usize,
    /// Log-likelihood before the first update and after each update.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
}

impl NpmleFit {
    pub fn loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace is never empty")
    }
}

/// Default number of grid intervals `max(⌈√m⌉, 10)`.
pub fn default_grid_size(m: usize) -> usize {
    (libm::ceil(libm::sqrt(m as f64)) as usize).max(10)
}

/// Fits a discrete prior on `K+1` equally spaced atoms spanning
/// `[min u − 0.1, max u + 0.1]` by maximising the marginal likelihood with EM.
pub fn npmle_fit(v: &NoisyVector, grid_size: Option<usize>, max_iters: usize, tol: f64) -> Result<NpmleFit> {
    if !(tol >= 0.0) {
        return Err(Error::invalid("tol must be non-negative"));
    }
    let u = v.standardized();
    let m = u.len();
    let k = grid_size.unwrap_or_else(|| default_grid_size(m));
    let lo = u.iter().copied().fold(f64::INFINITY, f64::min) - 0.1;
    let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 0.1;
    let atoms: Vec<f64> = if k == 0 {
        vec![0.5 * (lo + hi)]
    } else {
        let step = (hi - lo) / k as f64;
        (0..=k).map(|i| if i == k { hi } else { lo + step * i as f64 }).collect()
    };
    let na = atoms.len();

    // likelihood rows scaled by their maximum: lik[i][k] = φ(u_i − v_k) / max_k φ(u_i − v_k),
    // zero-padded to a multiple of LANES atoms so the inner loops vectorise
    let stride = na.div_ceil(LANES) * LANES;
    let mut lik = vec![0.0; m * stride];
    let mut log_scale = 0.0;
    for (row, &ui) in lik.chunks_exact_mut(stride).zip(&u) {
        let row = &mut row[..na];
        let mut best = f64::INFINITY;
        for (r, &a) in row.iter_mut().zip(&atoms) {
            *r = 0.5 * (ui - a) * (ui - a);
            best = best.min(*r);
        }
        row.iter_mut().for_each(|r| *r = flush(libm::exp(best - *r)));
        log_scale -= best;
    }
    log_scale -= m as f64 * libm::log(libm::sqrt(2.0 * core::f64::consts::PI));

    // One pass per iteration: the mixture densities at the current weights
    // give both the log-likelihood and the EM update.
    let mut weights = vec![0.0; stride];
    weights[..na].iter_mut().for_each(|w| *w = 1.0 / na as f64);
    let mut next = vec![0.0; stride];
    let sweep = |weights: &[f64], next: &mut [f64]| -> f64 {
        next.iter_mut().for_each(|x| *x = 0.0);
        let mut acc = NeumaierSum::new();
        for row in lik.chunks_exact(stride) {
            let f = dot_lanes(row, weights);
            acc.add(libm::log(f));
            axpy_lanes(1.0 / f, row, next);
        }
        acc.value() + log_scale
    };

    let mut trace = vec![sweep(&weights, &mut next)];
    let mut iterations = 0;
    let mut converged = na == 1;
    while !converged && iterations < max_iters {
        for (w, nx) in weights.iter_mut().zip(&next) {
            *w = flush(*w * nx / m as f64);
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        iterations += 1;
        let ll = sweep(&weights, &mut next);
        let prev = *trace.last().expect("non-empty");
        debug_assert!(ll >= prev - 1e-9 * prev.abs(), "EM decreased the log-likelihood: {prev} -> {ll}");
        trace.push(ll);
        converged = ll - prev < tol;
    }
    weights.truncate(na);
    Ok(NpmleFit { mixing: MixingDistribution { atoms, weights }, iterations, loglik_trace: trace, converged })
}

const LANES: usize = 4;

/// EM drives unsupported atoms' weights geometrically to zero; letting them
/// (or far-tail likelihoods) go subnormal makes every product in the sweep
/// crawl. Values this small cannot move the log-likelihood.
#[inline]
fn flush(x: f64) -> f64 {
    if x < 1e-150 {
        0.0
    } else {
        x
    }
}

fn dot_lanes(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; LANES];
    for (x, y) in a.chunks_exact(LANES).zip(b.chunks_exact(LANES)) {
        for k in 0..LANES {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

fn axpy_lanes(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (xs, ys) in x.chunks_exact(LANES).zip(y.chunks_exact_mut(LANES)) {
        for k in 0..LANES {
            ys[k] += alpha * xs[k];
        }
    }
}

/// Posterior mean `Σ_k v_k w_k φ(u−v_k) / Σ_k w_k φ(u−v_k)` under the prior
/// `g`, evaluated in log space and rescaled by σ.
pub fn posterior_mean(v: &NoisyVector, g: &MixingDistribution) -> ShrinkageResult {
    let log_w: Vec<f64> = g.weights.iter().map(|&w| if w > 0.0 { libm::log(w) } else { f64::NEG_INFINITY }).collect();
    let mut expo = vec![0.0; g.atoms.len()];
    let estimates = v
        .values
        .iter()
        .map(|&x| {
            let u = x / v.noise_sd;
            let mut best = f64::NEG_INFINITY;
            for ((e, &a), &lw) in expo.iter_mut().zip(&g.atoms).zip(&log_w) {
                *e = lw - 0.5 * (u - a) * (u - a);
                best = best.max(*e);
            }
            let mut num = NeumaierSum::new();
            let mut den = NeumaierSum::new();
            for (&e, &a) in expo.iter().zip(&g.atoms) {
                let t = libm::exp(e - best);
                num.add(a * t);
                den.add(t);
            }
            v.noise_sd * (num.value() / den.value())
        })
        .collect();
    ShrinkageResult::plain(estimates, MeanMethod::Npmle)
}

fn npmle_result(v: &NoisyVector, fit: NpmleFit) -> ShrinkageResult {
    let mut r = posterior_mean(v, &fit.mixing);
    r.diagnostics.insert("iterations".to_string(), fit.iterations as f64);
    r.diagnostics.insert("loglik".to_string(), fit.loglik());
    r.diagnostics.insert("converged".to_string(), if fit.converged { 1.0 } else { 0.0 });
    r.diagnostics.insert("grid_atoms".to_string(), fit.mixing.atoms.len() as f64);
    r
}

/// NPMLE prior with default settings followed by its posterior mean.
pub fn shrink_npmle(v: &NoisyVector) -> Result<ShrinkageResult> {
    let cfg = ShrinkageConfig::default();
    let fit = npmle_fit(v, cfg.npmle_grid_size, cfg.npmle_max_iters, cfg.npmle_tol)?;
    Ok(npmle_result(v, fit))
}
