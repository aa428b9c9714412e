//! Precision-matrix estimators: independence rule, graphical lasso, the
//! sample-splitting LAM estimator, and an oracle wrapper, plus pooling of two
//! group estimates.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg::{self, outer_sum, Power, EPS_PD};
use crate::matrix::{Matrix, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PrecisionKind {
    Ir,
    Glasso,
    Lam,
    Oracle,
}

impl PrecisionKind {
    pub const ALL: [PrecisionKind; 4] =
        [PrecisionKind::Oracle, PrecisionKind::Glasso, PrecisionKind::Lam, PrecisionKind::Ir];

    /// Short machine-readable tag.
    pub fn tag(self) -> &'static str {
        match self {
            PrecisionKind::Ir => "IR",
            PrecisionKind::Glasso => "GLASSO",
            PrecisionKind::Lam => "LAM",
            PrecisionKind::Oracle => "ORACLE",
        }
    }

    /// Column label used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            PrecisionKind::Ir => "IR",
            PrecisionKind::Glasso => "glasso",
            PrecisionKind::Lam => "LAM",
            PrecisionKind::Oracle => "Oracle.prec",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "IR" => Some(PrecisionKind::Ir),
            "GLASSO" => Some(PrecisionKind::Glasso),
            "LAM" => Some(PrecisionKind::Lam),
            "ORACLE" | "ORACLE.PREC" => Some(PrecisionKind::Oracle),
            _ => None,
        }
    }
}

impl fmt::Display for PrecisionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// An estimated precision matrix together with its symmetric square root.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionEstimate {
    omega: SymMatrix,
    omega_half: SymMatrix,
    method: PrecisionKind,
    params: BTreeMap<String, f64>,
}

impl PrecisionEstimate {
    /// Wraps `omega`, clipping its spectrum at `EPS_PD × λ_max` if needed and
    /// computing `omega^{1/2}`.
    pub fn new(omega: SymMatrix, method: PrecisionKind, params: BTreeMap<String, f64>) -> Result<Self> {
        let (omega, omega_half) = clip_and_root(omega)?;
        Ok(Self { omega, omega_half, method, params })
    }

    pub fn omega(&self) -> &SymMatrix {
        &self.omega
    }

    pub fn omega_half(&self) -> &SymMatrix {
        &self.omega_half
    }

    pub fn method(&self) -> PrecisionKind {
        self.method
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.omega.dim()
    }
}

fn clip_and_root(omega: SymMatrix) -> Result<(SymMatrix, SymMatrix)> {
    if !omega.is_finite() {
        return Err(Error::invalid("precision matrix has non-finite entries"));
    }
    if omega.is_diagonal() {
        let d = omega.diag();
        let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        let floor = EPS_PD * max;
        let clipped: Vec<f64> = d.iter().map(|&x| x.max(floor)).collect();
        let half: Vec<f64> = clipped.iter().map(|&x| libm::sqrt(x)).collect();
        return Ok((SymMatrix::from_diag(&clipped), SymMatrix::from_diag(&half)));
    }
    let eig = linalg::sym_eigen(&omega)?;
    let max = eig.values()[0];
    if !(max > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let floor = EPS_PD * max;
    let half = eig.reconstruct_with(|x| libm::sqrt(x.max(floor)));
    let omega = if eig.values().iter().any(|&x| x < floor) { eig.reconstruct_with(|x| x.max(floor)) } else { omega };
    Ok((omega, half))
}

/// Unbiased sample covariance (divisor `n − 1`).
pub fn sample_covariance(data: &Matrix) -> Result<SymMatrix> {
    let n = data.nrows();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let p = data.ncols();
    let mean = data.column_means();
    let mut out = vec![0.0; p * p];
    let mut c = vec![0.0; p];
    for row in data.rows_iter() {
        for ((ci, &x), &m) in c.iter_mut().zip(row).zip(&mean) {
            *ci = x - m;
        }
        for i in 0..p {
            let a = c[i];
            if a == 0.0 {
                continue;
            }
            for (o, &b) in out[i * p + i..(i + 1) * p].iter_mut().zip(&c[i..]) {
                *o += a * b;
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..p {
        for j in i..p {
            let v = out[i * p + j] / denom;
            out[i * p + j] = v;
            out[j * p + i] = v;
        }
    }
    Ok(SymMatrix::from_raw(p, out))
}

fn feature_variances(data: &Matrix) -> Result<Vec<f64>> {
    let n = data.nrows();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let mean = data.column_means();
    let mut var = vec![0.0; data.ncols()];
    for row in data.rows_iter() {
        for ((v, &x), &m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let denom = (n - 1) as f64;
    var.iter_mut().for_each(|v| *v /= denom);
    Ok(var)
}

fn ir_omega(data: &Matrix) -> Result<SymMatrix> {
    let var = feature_variances(data)?;
    let max = var.iter().copied().fold(0.0, f64::max);
    let floor = if max > 0.0 { EPS_PD * max } else { EPS_PD };
    let inv: Vec<f64> = var.iter().map(|&v| 1.0 / v.max(floor)).collect();
    Ok(SymMatrix::from_diag(&inv))
}

/// Independence rule: diagonal precision with inverse sample variances.
pub fn estimate_ir(data: &Matrix) -> Result<PrecisionEstimate> {
    PrecisionEstimate::new(ir_omega(data)?, PrecisionKind::Ir, BTreeMap::new())
}

/// Wraps a known precision matrix.
pub fn oracle_precision(omega_true: &SymMatrix) -> Result<PrecisionEstimate> {
    if !linalg::is_pd(omega_true, 1e-12) {
        return Err(Error::NotPositiveDefinite);
    }
    PrecisionEstimate::new(omega_true.clone(), PrecisionKind::Oracle, BTreeMap::new())
}

/// Weighted average `((n1−1)Ω₁ + (n2−1)Ω₂) / (n1+n2−2)` of two group
/// estimates from the same method.
pub fn pool_precisions(
    omega1: &PrecisionEstimate,
    n1: usize,
    omega2: &PrecisionEstimate,
    n2: usize,
) -> Result<PrecisionEstimate> {
    if omega1.dim() != omega2.dim() {
        return Err(Error::ShapeMismatch { expected: omega1.dim(), got: omega2.dim() });
    }
    if omega1.method != omega2.method {
        return Err(Error::invalid("cannot pool estimates from different methods"));
    }
    let pooled = pool_omegas(&omega1.omega, n1, &omega2.omega, n2)?;
    let mut params = omega1.params.clone();
    for (k, v) in &omega2.params {
        params.insert(alloc::format!("{k}_2"), *v);
    }
    PrecisionEstimate::new(pooled, omega1.method, params)
}

pub(crate) fn pool_omegas(a: &SymMatrix, n1: usize, b: &SymMatrix, n2: usize) -> Result<SymMatrix> {
    if n1 < 2 || n2 < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n1.min(n2) });
    }
    let total = (n1 + n2 - 2) as f64;
    a.linear_combination((n1 - 1) as f64 / total, b, (n2 - 1) as f64 / total)
}

// ---------------------------------------------------------------------------
// graphical lasso
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct GlassoConfig {
    /// ℓ1 penalty on the off-diagonal entries of Θ.
    pub rho: f64,
    pub max_outer_iters: usize,
    /// Threshold on the mean absolute change of the working covariance
    /// between sweeps. `None` uses `1e-5 × mean |S_ii|`.
    pub tol: Option<f64>,
    /// Also penalise the diagonal of Θ.
    pub penalize_diagonal: bool,
    /// Record the penalised log-likelihood after every sweep.
    pub track_objective: bool,
}

impl GlassoConfig {
    pub fn new(rho: f64) -> Self {
        Self { rho, max_outer_iters: 200, tol: None, penalize_diagonal: false, track_objective: false }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::invalid("glasso rho must be positive"));
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(Error::invalid("glasso tol must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlassoFit {
    pub theta: SymMatrix,
    /// Working covariance `W ≈ Θ⁻¹` maintained by the solver.
    pub covariance: SymMatrix,
    pub sweeps: usize,
    /// Final mean absolute change of `W`.
    pub residual: f64,
    /// Penalised log-likelihood of Θ after each sweep (when tracked).
    pub objective_trace: Vec<f64>,
    /// `log det W` after each sweep (when tracked).
    pub dual_trace: Vec<f64>,
}

/// Penalised Gaussian log-likelihood `log det Θ − tr(SΘ) − ρ‖Θ‖₁`;
/// `-inf` if Θ is not positive definite.
pub fn glasso_objective(s: &SymMatrix, theta: &SymMatrix, rho: f64, penalize_diagonal: bool) -> f64 {
    let Some(ld) = linalg::log_det(theta) else {
        return f64::NEG_INFINITY;
    };
    let p = s.dim();
    let mut tr = 0.0;
    let mut l1 = 0.0;
    for i in 0..p {
        for j in 0..p {
            let t = theta.get(i, j);
            tr += s.get(i, j) * t;
            if i != j || penalize_diagonal {
                l1 += libm::fabs(t);
            }
        }
    }
    ld - tr - rho * l1
}

/// Largest violation of the stationarity conditions at Θ, with `W = Θ⁻¹`:
/// `W_ij − S_ij = ρ·sign(Θ_ij)` where `Θ_ij ≠ 0`, `|W_ij − S_ij| ≤ ρ`
/// elsewhere, and `W_ii = S_ii` (`+ ρ` when the diagonal is penalised).
pub fn glasso_kkt_residual(s: &SymMatrix, theta: &SymMatrix, rho: f64, penalize_diagonal: bool) -> Result<f64> {
    let w = linalg::pd_power(theta, Power::Inverse)?;
    let p = s.dim();
    let mut worst: f64 = 0.0;
    for i in 0..p {
        for j in 0..p {
            let g = w.get(i, j) - s.get(i, j);
            let t = theta.get(i, j);
            let v = if i == j {
                libm::fabs(g - if penalize_diagonal { rho } else { 0.0 })
            } else if t != 0.0 {
                libm::fabs(g - rho * libm::copysign(1.0, t))
            } else {
                (libm::fabs(g) - rho).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    Ok(worst)
}

struct Block {
    idx: Vec<usize>,
    s: Vec<f64>,
    w: Vec<f64>,
    // column j of the lasso coefficients at beta[j*c..(j+1)*c]; beta[j*c+j] = 0
    beta: Vec<f64>,
    converged: bool,
    residual: f64,
}

impl Block {
    fn dim(&self) -> usize {
        self.idx.len()
    }

    /// One sweep of column-wise lasso updates; returns the mean absolute
    /// change of the off-diagonal working covariance.
    fn sweep(&mut self, rho: f64, inner_tol: f64) -> f64 {
        let c = self.dim();
        let before = self.w.clone();
        let mut r = vec![0.0; c];
        for j in 0..c {
            let beta = &mut self.beta[j * c..(j + 1) * c];
            r.iter_mut().for_each(|v| *v = 0.0);
            for (l, &b) in beta.iter().enumerate() {
                if b != 0.0 {
                    for (rk, &wk) in r.iter_mut().zip(&self.w[l * c..(l + 1) * c]) {
                        *rk += wk * b;
                    }
                }
            }
            lasso_cd(c, j, &self.w, &self.s[j * c..(j + 1) * c], beta, &mut r, rho, inner_tol);
            for (k, &rk) in r.iter().enumerate() {
                if k != j {
                    self.w[k * c + j] = rk;
                    self.w[j * c + k] = rk;
                }
            }
        }
        if c < 2 {
            return 0.0;
        }
        let total: f64 = self.w.iter().zip(&before).map(|(a, b)| libm::fabs(a - b)).sum();
        total / (c * (c - 1)) as f64
    }

    fn theta(&self) -> Vec<f64> {
        let c = self.dim();
        let mut t = vec![0.0; c * c];
        for j in 0..c {
            let beta = &self.beta[j * c..(j + 1) * c];
            let mut q = 0.0;
            for (k, &b) in beta.iter().enumerate() {
                q += self.w[k * c + j] * b;
            }
            let tjj = 1.0 / (self.w[j * c + j] - q);
            t[j * c + j] = tjj;
            for (k, &b) in beta.iter().enumerate() {
                if k != j {
                    t[k * c + j] = -b * tjj;
                }
            }
        }
        for i in 0..c {
            for j in (i + 1)..c {
                let v = 0.5 * (t[i * c + j] + t[j * c + i]);
                t[i * c + j] = v;
                t[j * c + i] = v;
            }
        }
        t
    }
}

/// Coordinate descent for `min ½βᵀW₁₁β − s₁₂ᵀβ + ρ‖β‖₁` (column `j` excluded).
/// `r` holds `Wβ` on entry and is kept current.
#[allow(clippy::too_many_arguments)]
fn lasso_cd(c: usize, j: usize, w: &[f64], s_col: &[f64], beta: &mut [f64], r: &mut [f64], rho: f64, tol: f64) {
    const MAX_PASSES: usize = 10_000;
    let update = |k: usize, beta: &mut [f64], r: &mut [f64]| -> f64 {
        let wkk = w[k * c + k];
        let old = beta[k];
        let g = s_col[k] - (r[k] - wkk * old);
        let new = soft_threshold(g, rho) / wkk;
        if new == old {
            return 0.0;
        }
        let delta = new - old;
        beta[k] = new;
        for (rl, &wl) in r.iter_mut().zip(&w[k * c..(k + 1) * c]) {
            *rl += delta * wl;
        }
        libm::fabs(delta) * wkk
    };
    let mut passes = 0;
    loop {
        let mut change: f64 = 0.0;
        for k in 0..c {
            if k != j {
                change = change.max(update(k, beta, r));
            }
        }
        passes += 1;
        if change < tol || passes >= MAX_PASSES {
            break;
        }
        let active: Vec<usize> = (0..c).filter(|&k| k != j && beta[k] != 0.0).collect();
        loop {
            let mut change: f64 = 0.0;
            for &k in &active {
                change = change.max(update(k, beta, r));
            }
            passes += 1;
            if change < tol || passes >= MAX_PASSES {
                break;
            }
        }
    }
}

#[inline]
fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Connected components of the graph with edges `|S_ij| > ρ`; the glasso
/// solution is block diagonal over them.
fn screen_components(s: &SymMatrix, rho: f64) -> Vec<Vec<usize>> {
    let p = s.dim();
    let mut parent: Vec<usize> = (0..p).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..p {
        for j in (i + 1)..p {
            if libm::fabs(s.get(i, j)) > rho {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..p {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Graphical lasso on a covariance matrix by block coordinate descent over
/// columns of the working covariance, each column solved as a lasso.
pub fn glasso(s: &SymMatrix, cfg: &GlassoConfig) -> Result<GlassoFit> {
    glasso_warm(s, cfg, None)
}

/// [`glasso`] started from a previous fit (typically at a larger ρ).
pub fn glasso_warm(s: &SymMatrix, cfg: &GlassoConfig, warm: Option<&GlassoFit>) -> Result<GlassoFit> {
    cfg.validate()?;
    if !s.is_finite() {
        return Err(Error::invalid("covariance has non-finite entries"));
    }
    let p = s.dim();
    if let Some(w) = warm {
        if w.theta.dim() != p {
            return Err(Error::ShapeMismatch { expected: p, got: w.theta.dim() });
        }
    }
    let rho = cfg.rho;
    // constant features would make the problem unbounded
    let max_diag = s.diag().into_iter().fold(0.0, f64::max);
    let diag_floor = if max_diag > 0.0 { EPS_PD * max_diag } else { EPS_PD };
    let mut s = s.clone();
    for i in 0..p {
        if s.get(i, i) < diag_floor {
            s.set(i, i, diag_floor);
        }
    }
    let tol = cfg.tol.unwrap_or_else(|| 1e-5 * s.diag().iter().map(|v| libm::fabs(*v)).sum::<f64>() / p as f64);
    let inner_tol = 0.1 * tol;
    let diag_shift = if cfg.penalize_diagonal { rho } else { 0.0 };

    let mut blocks: Vec<Block> = screen_components(&s, rho)
        .into_iter()
        .map(|idx| {
            let c = idx.len();
            let sub = s.submatrix(&idx);
            let mut w = sub.as_slice().to_vec();
            let mut beta = vec![0.0; c * c];
            if let Some(prev) = warm {
                for (a, &i) in idx.iter().enumerate() {
                    for (b, &j) in idx.iter().enumerate() {
                        if a != b {
                            w[a * c + b] = prev.covariance.get(i, j);
                        }
                    }
                }
                for (b, &j) in idx.iter().enumerate() {
                    let tjj = prev.theta.get(j, j);
                    for (a, &i) in idx.iter().enumerate() {
                        if a != b && tjj > 0.0 {
                            beta[b * c + a] = -prev.theta.get(i, j) / tjj;
                        }
                    }
                }
            }
            for a in 0..c {
                w[a * c + a] = sub.get(a, a) + diag_shift;
            }
            Block { idx, s: sub.as_slice().to_vec(), w, beta, converged: c < 2, residual: 0.0 }
        })
        .collect();

    let mut objective_trace = Vec::new();
    let mut dual_trace = Vec::new();
    let mut sweeps = 0;
    while blocks.iter().any(|b| !b.converged) && sweeps < cfg.max_outer_iters {
        sweeps += 1;
        for b in blocks.iter_mut().filter(|b| !b.converged) {
            b.residual = b.sweep(rho, inner_tol);
            b.converged = b.residual < tol;
        }
        if cfg.track_objective {
            let (theta, w) = assemble(p, &blocks);
            objective_trace.push(glasso_objective(&s, &theta, rho, cfg.penalize_diagonal));
            dual_trace.push(linalg::log_det(&w).unwrap_or(f64::NEG_INFINITY));
        }
    }
    let residual = blocks.iter().map(|b| b.residual).fold(0.0, f64::max);
    let (theta, covariance) = assemble(p, &blocks);
    if blocks.iter().any(|b| !b.converged) {
        return Err(Error::ConvergenceFailure { iterations: sweeps, residual, last_iterate: Some(Box::new(theta)) });
    }
    Ok(GlassoFit { theta, covariance, sweeps, residual, objective_trace, dual_trace })
}

fn assemble(p: usize, blocks: &[Block]) -> (SymMatrix, SymMatrix) {
    let mut theta = vec![0.0; p * p];
    let mut w = vec![0.0; p * p];
    for b in blocks {
        let c = b.dim();
        let t = if c == 1 { vec![1.0 / b.w[0]] } else { b.theta() };
        for (a, &i) in b.idx.iter().enumerate() {
            for (bb, &j) in b.idx.iter().enumerate() {
                theta[i * p + j] = t[a * c + bb];
                w[i * p + j] = b.w[a * c + bb];
            }
        }
    }
    (SymMatrix::from_raw(p, theta), SymMatrix::from_raw(p, w))
}

/// Reference magnitude that the cross-validation multipliers scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridScale {
    /// Mean absolute off-diagonal entry of S.
    MeanAbsOffDiag,
    /// Largest absolute off-diagonal entry of S, the smallest ρ whose
    /// solution is diagonal.
    MaxAbsOffDiag,
}

impl GridScale {
    fn of(self, s: &SymMatrix) -> f64 {
        let p = s.dim();
        if p < 2 {
            return 0.0;
        }
        match self {
            GridScale::MeanAbsOffDiag => mean_abs_offdiag(s),
            GridScale::MaxAbsOffDiag => {
                let mut m: f64 = 0.0;
                for i in 0..p {
                    for j in (i + 1)..p {
                        m = m.max(libm::fabs(s.get(i, j)));
                    }
                }
                m
            }
        }
    }
}

/// How the glasso penalty is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum RhoSelection {
    Fixed(f64),
    /// K-fold cross-validated Gaussian log-likelihood over
    /// `multipliers × scale(S)`.
    CrossValidated {
        folds: usize,
        multipliers: Vec<f64>,
        scale: GridScale,
    },
    /// `ρ = multiplier · median_j(S_jj) · √(log p / n)`: the universal
    /// rate on the scale of a typical variance.
    Universal {
        multiplier: f64,
    },
}

impl RhoSelection {
    pub fn default_cv() -> Self {
        RhoSelection::CrossValidated {
            folds: 5,
            multipliers: vec![0.01, 0.025, 0.05, 0.1, 0.25, 0.5],
            scale: GridScale::MeanAbsOffDiag,
        }
    }
}

impl Default for RhoSelection {
    fn default() -> Self {
        RhoSelection::Universal { multiplier: 1.0 }
    }
}

/// `median_j(S_jj) · √(log p / n)` for `n` rows.
pub fn universal_rho(s: &SymMatrix, n: usize) -> f64 {
    let p = s.dim();
    let med = crate::stats::median(&s.diag());
    med * libm::sqrt(libm::log(p.max(2) as f64) / n as f64)
}

/// Full glasso estimator settings: penalty selection plus solver settings
/// (the solver's `rho` field is overwritten by the selected value).
#[derive(Debug, Clone, PartialEq)]
pub struct GlassoSpec {
    pub selection: RhoSelection,
    pub solver: GlassoConfig,
}

impl Default for GlassoSpec {
    fn default() -> Self {
        Self { selection: RhoSelection::default(), solver: GlassoConfig::new(1.0) }
    }
}

/// Result of cross-validating the glasso penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoPath {
    pub chosen: f64,
    /// `(ρ, mean held-out log-likelihood)` in grid order.
    pub scores: Vec<(f64, f64)>,
}

fn mean_abs_offdiag(s: &SymMatrix) -> f64 {
    let p = s.dim();
    if p < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..p {
        for j in (i + 1)..p {
            acc += libm::fabs(s.get(i, j));
        }
    }
    acc / (p * (p - 1) / 2) as f64
}

/// Cross-validates ρ on the rows of `data`; fold of row `i` is `i mod folds`.
pub fn select_glasso_rho(
    data: &Matrix,
    folds: usize,
    multipliers: &[f64],
    scale: GridScale,
    solver: &GlassoConfig,
) -> Result<RhoPath> {
    let n = data.nrows();
    if folds < 2 || n < 2 * folds {
        return Err(Error::InsufficientData { needed: 2 * folds.max(2), got: n });
    }
    if multipliers.is_empty() {
        return Err(Error::invalid("empty rho grid"));
    }
    let scale = scale.of(&sample_covariance(data)?);
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut grid: Vec<f64> = multipliers.iter().map(|m| m * scale).collect();
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup();
    let mut totals = vec![0.0; grid.len()];
    for f in 0..folds {
        let train_idx: Vec<usize> = (0..n).filter(|i| i % folds != f).collect();
        let test_idx: Vec<usize> = (0..n).filter(|i| i % folds == f).collect();
        let train = data.select_rows(&train_idx);
        let test = data.select_rows(&test_idx);
        let s_train = sample_covariance(&train)?;
        let center = train.column_means();
        let mut warm: Option<GlassoFit> = None;
        for (g, &rho) in grid.iter().enumerate() {
            let cfg = GlassoConfig { rho, track_objective: false, ..solver.clone() };
            match glasso_warm(&s_train, &cfg, warm.as_ref()) {
                Ok(fit) => {
                    totals[g] += heldout_loglik(&fit.theta, &test, &center);
                    warm = Some(fit);
                }
                Err(Error::ConvergenceFailure { .. }) => totals[g] = f64::NEG_INFINITY,
                Err(e) => return Err(e),
            }
        }
    }
    let scores: Vec<(f64, f64)> = grid.iter().zip(&totals).map(|(&r, &t)| (r, t / folds as f64)).collect();
    // grid is descending, so ties resolve to the larger penalty
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.1 > scores[best].1 {
            best = i;
        }
    }
    if !scores[best].1.is_finite() {
        return Err(Error::ConvergenceFailure {
            iterations: solver.max_outer_iters,
            residual: f64::NAN,
            last_iterate: None,
        });
    }
    Ok(RhoPath { chosen: scores[best].0, scores })
}

fn heldout_loglik(theta: &SymMatrix, test: &Matrix, center: &[f64]) -> f64 {
    let Some(ld) = linalg::log_det(theta) else {
        return f64::NEG_INFINITY;
    };
    let p = theta.dim();
    let mut d = vec![0.0; p];
    let mut quad = 0.0;
    for row in test.rows_iter() {
        for ((di, &x), &m) in d.iter_mut().zip(row).zip(center) {
            *di = x - m;
        }
        let td = theta.mul_vec(&d).expect("dimensions agree");
        quad += crate::matrix::dot(&d, &td);
    }
    ld - quad / test.nrows() as f64
}

fn glasso_omega(data: &Matrix, spec: &GlassoSpec) -> Result<(SymMatrix, BTreeMap<String, f64>)> {
    let mut params = BTreeMap::new();
    let s = sample_covariance(data)?;
    let rho = match &spec.selection {
        RhoSelection::Fixed(r) => *r,
        RhoSelection::CrossValidated { folds, multipliers, scale } => {
            let path = select_glasso_rho(data, *folds, multipliers, *scale, &spec.solver)?;
            if let Some(&(_, score)) = path.scores.iter().find(|(r, _)| *r == path.chosen) {
                params.insert("cv_score".to_string(), score);
            }
            path.chosen
        }
        RhoSelection::Universal { multiplier } => *multiplier * universal_rho(&s, data.nrows()),
    };
    let cfg = GlassoConfig { rho, ..spec.solver.clone() };
    let fit = glasso(&s, &cfg)?;
    params.insert("rho".to_string(), rho);
    params.insert("sweeps".to_string(), fit.sweeps as f64);
    Ok((fit.theta, params))
}

/// Graphical-lasso precision estimate with a fixed penalty.
pub fn estimate_glasso(data: &Matrix, cfg: &GlassoConfig) -> Result<PrecisionEstimate> {
    let spec = GlassoSpec { selection: RhoSelection::Fixed(cfg.rho), solver: cfg.clone() };
    estimate_glasso_with(data, &spec)
}

/// Graphical-lasso precision estimate with penalty selection.
pub fn estimate_glasso_with(data: &Matrix, spec: &GlassoSpec) -> Result<PrecisionEstimate> {
    let (omega, params) = glasso_omega(data, spec)?;
    PrecisionEstimate::new(omega, PrecisionKind::Glasso, params)
}

// ---------------------------------------------------------------------------
// LAM split-eigen estimator
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct LamConfig {
    /// Fraction of rows used to estimate the eigenvectors.
    pub split_fraction: f64,
    /// Number of independent splits averaged.
    pub num_splits: usize,
    pub seed: u64,
    /// When fitting two classes, use the classes themselves as the split:
    /// eigenvectors from one class, variances from the other, in both
    /// directions, pooled. Otherwise each class is split at random.
    pub cross_groups: bool,
}

impl Default for LamConfig {
    fn default() -> Self {
        Self { split_fraction: 0.5, num_splits: 1, seed: 0, cross_groups: true }
    }
}

impl LamConfig {
    fn split_sizes(&self, n: usize) -> Result<(usize, usize)> {
        if n < 4 {
            return Err(Error::InsufficientData { needed: 4, got: n });
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::invalid("split_fraction must lie in (0, 1)"));
        }
        if self.num_splits == 0 {
            return Err(Error::invalid("num_splits must be positive"));
        }
        let n1 = libm::floor(self.split_fraction * n as f64) as usize;
        let n2 = n - n1;
        if n1 < 2 || n2 < 2 {
            return Err(Error::InsufficientData { needed: 4, got: n });
        }
        Ok((n1, n2))
    }
}

/// One split: eigenvectors of the first part and the variances of the second
/// part along them.
struct LamSplit {
    eig: linalg::EigenSystem,
    diag: Vec<f64>,
}

fn lam_split(data: &Matrix, first: &[usize], second: &[usize]) -> Result<LamSplit> {
    lam_split_parts(&data.select_rows(first), &data.select_rows(second))
}

fn lam_split_parts(part1: &Matrix, part2: &Matrix) -> Result<LamSplit> {
    if part1.nrows() < 2 || part2.nrows() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: part1.nrows().min(part2.nrows()) });
    }
    let eig = linalg::sym_eigen(&sample_covariance(part1)?)?;
    let mean = part2.column_means();
    let p = part1.ncols();
    let mut diag = vec![0.0; p];
    let mut c = vec![0.0; p];
    for row in part2.rows_iter() {
        for ((ci, &x), &m) in c.iter_mut().zip(row).zip(&mean) {
            *ci = x - m;
        }
        for (k, dk) in diag.iter_mut().enumerate() {
            let proj = crate::matrix::dot(eig.vector(k), &c);
            *dk += proj * proj;
        }
    }
    let denom = (part2.nrows() - 1) as f64;
    diag.iter_mut().for_each(|v| *v /= denom);
    Ok(LamSplit { eig, diag })
}

fn lam_splits(data: &Matrix, cfg: &LamConfig) -> Result<Vec<LamSplit>> {
    let n = data.nrows();
    let (n1, _) = cfg.split_sizes(n)?;
    let mut rng = crate::seed::rng(cfg.seed);
    let mut idx: Vec<usize> = (0..n).collect();
    (0..cfg.num_splits)
        .map(|_| {
            idx.shuffle(&mut rng);
            lam_split(data, &idx[..n1], &idx[n1..])
        })
        .collect()
}

fn split_sigma(split: &LamSplit) -> SymMatrix {
    let n = split.eig.dim();
    let mut cols = Vec::with_capacity(n * n);
    for k in 0..n {
        cols.extend_from_slice(split.eig.vector(k));
    }
    outer_sum(n, &cols, &split.diag)
}

/// LAM covariance estimate `P̂₁ diag(P̂₁ᵀ S₂ P̂₁) P̂₁ᵀ`, averaged over splits.
pub fn lam_covariance(data: &Matrix, cfg: &LamConfig) -> Result<SymMatrix> {
    let splits = lam_splits(data, cfg)?;
    average(splits.iter().map(split_sigma))
}

fn average(mut it: impl Iterator<Item = SymMatrix>) -> Result<SymMatrix> {
    let first = it.next().ok_or_else(|| Error::invalid("nothing to average"))?;
    let mut count = 1.0;
    let mut acc = first;
    for m in it {
        acc = acc.linear_combination(1.0, &m, 1.0)?;
        count += 1.0;
    }
    Ok(if count > 1.0 { acc.scaled(1.0 / count) } else { acc })
}

fn lam_omega(data: &Matrix, cfg: &LamConfig) -> Result<(SymMatrix, BTreeMap<String, f64>)> {
    let (n1, n2) = cfg.split_sizes(data.nrows())?;
    let splits = lam_splits(data, cfg)?;
    let omega = if splits.len() == 1 {
        split_omega(&splits[0])?
    } else {
        let sigma = average(splits.iter().map(split_sigma))?;
        linalg::pd_power(&sigma, Power::Inverse)?
    };
    let mut params = BTreeMap::new();
    params.insert("split_fraction".to_string(), cfg.split_fraction);
    params.insert("num_splits".to_string(), cfg.num_splits as f64);
    params.insert("n1".to_string(), n1 as f64);
    params.insert("n2".to_string(), n2 as f64);
    Ok((omega, params))
}

/// `Σ̂⁻¹` of a single split, which `P̂₁` already diagonalises.
fn split_omega(split: &LamSplit) -> Result<SymMatrix> {
    let n = split.eig.dim();
    let max = split.diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let floor = EPS_PD * max;
    let inv: Vec<f64> = split.diag.iter().map(|&d| 1.0 / d.max(floor)).collect();
    let mut cols = Vec::with_capacity(n * n);
    for k in 0..n {
        cols.extend_from_slice(split.eig.vector(k));
    }
    Ok(outer_sum(n, &cols, &inv))
}

/// Cross-class LAM: `Σ̂₁₂ = P̂(S₁) diag(P̂(S₁)ᵀ S₂ P̂(S₁)) P̂(S₁)ᵀ` and its
/// mirror `Σ̂₂₁`; returns their inverses.
pub fn lam_cross_omegas(group1: &Matrix, group2: &Matrix) -> Result<(SymMatrix, SymMatrix)> {
    if group1.ncols() != group2.ncols() {
        return Err(Error::ShapeMismatch { expected: group1.ncols(), got: group2.ncols() });
    }
    Ok((split_omega(&lam_split_parts(group1, group2)?)?, split_omega(&lam_split_parts(group2, group1)?)?))
}

/// LAM precision estimate `Σ̂⁻¹`.
pub fn estimate_lam(data: &Matrix, cfg: &LamConfig) -> Result<PrecisionEstimate> {
    let (omega, params) = lam_omega(data, cfg)?;
    PrecisionEstimate::new(omega, PrecisionKind::Lam, params)
}

// ---------------------------------------------------------------------------
// method dispatch
// ---------------------------------------------------------------------------

/// A precision estimator together with its settings.
#[derive(Debug, Clone, PartialEq)]
pub enum PrecisionMethod {
    Ir,
    Glasso(GlassoSpec),
    /// The seed in the config is replaced by the caller-supplied seed.
    Lam(LamConfig),
    Oracle(Box<PrecisionEstimate>),
}

impl PrecisionMethod {
    pub fn kind(&self) -> PrecisionKind {
        match self {
            PrecisionMethod::Ir => PrecisionKind::Ir,
            PrecisionMethod::Glasso(_) => PrecisionKind::Glasso,
            PrecisionMethod::Lam(_) => PrecisionKind::Lam,
            PrecisionMethod::Oracle(_) => PrecisionKind::Oracle,
        }
    }

    /// Estimates Ω from one group's rows without forming its square root.
    pub(crate) fn group_omega(&self, data: &Matrix, seed: u64) -> Result<(SymMatrix, BTreeMap<String, f64>)> {
        match self {
            PrecisionMethod::Ir => Ok((ir_omega(data)?, BTreeMap::new())),
            PrecisionMethod::Glasso(spec) => glasso_omega(data, spec),
            PrecisionMethod::Lam(cfg) => lam_omega(data, &LamConfig { seed, ..cfg.clone() }),
            PrecisionMethod::Oracle(est) => Ok((est.omega.clone(), BTreeMap::new())),
        }
    }

    /// Estimates Ω on each group separately and pools the two estimates.
    pub fn fit_pooled(&self, group1: &Matrix, group2: &Matrix, seed: u64) -> Result<PrecisionEstimate> {
        if group1.ncols() != group2.ncols() {
            return Err(Error::ShapeMismatch { expected: group1.ncols(), got: group2.ncols() });
        }
        if let PrecisionMethod::Oracle(est) = self {
            if est.dim() != group1.ncols() {
                return Err(Error::ShapeMismatch { expected: est.dim(), got: group1.ncols() });
            }
            return Ok((**est).clone());
        }
        let (n1, n2) = (group1.nrows(), group2.nrows());
        if let PrecisionMethod::Lam(LamConfig { cross_groups: true, .. }) = self {
            let (o1, o2) = lam_cross_omegas(group1, group2)?;
            let mut params = BTreeMap::new();
            params.insert("cross_groups".to_string(), 1.0);
            return PrecisionEstimate::new(pool_omegas(&o1, n1, &o2, n2)?, PrecisionKind::Lam, params);
        }
        let (o1, p1) = self.group_omega(group1, crate::seed::derive(seed, 1))?;
        let (o2, p2) = self.group_omega(group2, crate::seed::derive(seed, 2))?;
        let pooled = pool_omegas(&o1, n1, &o2, n2)?;
        let mut params = p1;
        for (k, v) in p2 {
            params.insert(alloc::format!("{k}_2"), v);
        }
        PrecisionEstimate::new(pooled, self.kind(), params)
    }
}
