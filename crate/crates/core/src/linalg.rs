//! Dense symmetric eigensolver and positive-definite matrix powers.
//!
//! The eigensolver is the classic Householder tridiagonalisation followed by
//! implicit QL iterations (the EISPACK `tred2`/`tql2` pair). Eigenvectors are
//! kept column-major internally so every inner loop is contiguous.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{Matrix, SymMatrix};

/// Relative eigenvalue floor used when powering estimated matrices.
pub const EPS_PD: f64 = 1e-10;

const MAX_QL_SWEEPS: usize = 64;

/// Eigenvalues in non-increasing order with matching orthonormal vectors.
///
/// Each eigenvector's largest-magnitude component is positive (ties go to the
/// lowest index), which makes the decomposition fully deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    values: Vec<f64>,
    // column-major: vector k occupies vectors[k*dim .. (k+1)*dim]
    vectors: Vec<f64>,
    dim: usize,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.dim..(k + 1) * self.dim]
    }

    /// Matrix whose column `k` is eigenvector `k`.
    pub fn vectors(&self) -> Matrix {
        Matrix::from_fn(self.dim, self.dim, |i, k| self.vectors[k * self.dim + i])
    }

    /// `V · diag(f(λ)) · Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let scaled: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        outer_sum(self.dim, &self.vectors, &scaled)
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.reconstruct_with(|v| v)
    }
}

/// `Σ_k c_k v_k v_kᵀ` for column-major vectors `v_k`; fills the upper
/// triangle and mirrors it.
pub(crate) fn outer_sum(n: usize, vecs: &[f64], coef: &[f64]) -> SymMatrix {
    let mut out = vec![0.0; n * n];
    for (k, &c) in coef.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let v = &vecs[k * n..(k + 1) * n];
        for i in 0..n {
            let a = c * v[i];
            if a == 0.0 {
                continue;
            }
            let row = &mut out[i * n + i..(i + 1) * n];
            for (o, &b) in row.iter_mut().zip(&v[i..]) {
                *o += a * b;
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            out[j * n + i] = out[i * n + j];
        }
    }
    SymMatrix::from_raw(n, out)
}

/// Eigendecomposition of a symmetric matrix.
pub fn sym_eigen(m: &SymMatrix) -> Result<EigenSystem> {
    if !m.is_finite() {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let n = m.dim();
    if n == 0 {
        return Err(Error::invalid("empty matrix"));
    }
    // symmetric input: the row-major buffer is also its column-major transpose
    let mut v = m.as_slice().to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(n, &mut v, &mut d, &mut e);
    tql2(n, &mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(a.cmp(&b)));
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n * n);
    for &k in &order {
        values.push(d[k]);
        let col = &v[k * n..(k + 1) * n];
        let mut pivot = 0;
        for (i, x) in col.iter().enumerate() {
            if libm::fabs(*x) > libm::fabs(col[pivot]) {
                pivot = i;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        vectors.extend(col.iter().map(|x| sign * x));
    }
    Ok(EigenSystem { values, vectors, dim: n })
}

// Householder reduction to tridiagonal form. `v` is column-major:
// V[r][c] lives at v[c*n + r].
#[allow(clippy::needless_range_loop)]
fn tred2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    let ix = |r: usize, c: usize| c * n + r;
    for j in 0..n {
        d[j] = v[ix(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += libm::fabs(d[k]);
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[ix(i - 1, j)];
                v[ix(i, j)] = 0.0;
                v[ix(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = libm::sqrt(h);
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for j in 0..i {
                e[j] = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[ix(j, i)] = f;
                g = e[j] + v[ix(j, j)] * f;
                let col = &v[j * n..j * n + i];
                for k in (j + 1)..i {
                    g += col[k] * d[k];
                    e[k] += col[k] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                let col = &mut v[j * n..j * n + i];
                for k in j..i {
                    col[k] -= f * e[k] + g * d[k];
                }
                d[j] = v[ix(i - 1, j)];
                v[ix(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }
    // accumulate transformations
    for i in 0..n.saturating_sub(1) {
        v[ix(n - 1, i)] = v[ix(i, i)];
        v[ix(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[ix(k, i + 1)] / h;
            }
            for j in 0..=i {
                let (left, right) = v.split_at_mut((i + 1) * n);
                let cj = &mut left[j * n..j * n + i + 1];
                let ci = &right[..i + 1];
                let mut g = 0.0;
                for k in 0..=i {
                    g += ci[k] * cj[k];
                }
                for k in 0..=i {
                    cj[k] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[ix(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[ix(n - 1, j)];
        v[ix(n - 1, j)] = 0.0;
    }
    v[ix(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

// Implicit QL on the tridiagonal (d, e), rotating the columns of `v`.
#[allow(clippy::needless_range_loop)]
fn tql2(n: usize, v: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(libm::fabs(d[l]) + libm::fabs(e[l]));
        let mut m = l;
        while m < n {
            if libm::fabs(e[m]) <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_SWEEPS {
                    return Err(Error::ConvergenceFailure {
                        iterations: iter,
                        residual: libm::fabs(e[l]),
                        last_iterate: None,
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = libm::hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for i in (l + 2)..n {
                    d[i] -= h;
                }
                f += h;
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = libm::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (a, b) = v.split_at_mut((i + 1) * n);
                    let ci = &mut a[i * n..];
                    let ci1 = &mut b[..n];
                    for (x, y) in ci.iter_mut().zip(ci1.iter_mut()) {
                        let t = *y;
                        *y = s * *x + c * t;
                        *x = c * *x - s * t;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if libm::fabs(e[l]) <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Exponents supported by [`pd_power`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Power {
    /// `M⁻¹`
    Inverse,
    /// `M^{-1/2}`
    InvSqrt,
    /// `M^{1/2}`
    Sqrt,
}

impl Power {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Power::Inverse => 1.0 / x,
            Power::InvSqrt => 1.0 / libm::sqrt(x),
            Power::Sqrt => libm::sqrt(x),
        }
    }

    pub fn exponent(self) -> f64 {
        match self {
            Power::Inverse => -1.0,
            Power::InvSqrt => -0.5,
            Power::Sqrt => 0.5,
        }
    }
}

/// Clip floor for a spectrum whose largest eigenvalue is `max`.
fn clip_floor(max: f64) -> Result<f64> {
    if !(max > 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    Ok(EPS_PD * max)
}

/// Power of a symmetric matrix after clipping its eigenvalues below
/// `EPS_PD × λ_max` up to that floor.
pub fn pd_power(m: &SymMatrix, power: Power) -> Result<SymMatrix> {
    if m.is_diagonal() {
        if !m.is_finite() {
            return Err(Error::invalid("matrix has non-finite entries"));
        }
        let d = m.diag();
        let floor = clip_floor(d.iter().copied().fold(f64::NEG_INFINITY, f64::max))?;
        let powered: Vec<f64> = d.iter().map(|&x| power.apply(x.max(floor))).collect();
        return Ok(SymMatrix::from_diag(&powered));
    }
    let eig = sym_eigen(m)?;
    power_from_eigen(&eig, power)
}

/// [`pd_power`] from an existing decomposition.
pub fn power_from_eigen(eig: &EigenSystem, power: Power) -> Result<SymMatrix> {
    let floor = clip_floor(eig.values()[0])?;
    Ok(eig.reconstruct_with(|x| power.apply(x.max(floor))))
}

/// Whether the smallest eigenvalue exceeds `tol` times the largest eigenvalue
/// magnitude.
pub fn is_pd(m: &SymMatrix, tol: f64) -> bool {
    let (min, maxabs) = if m.is_diagonal() {
        let d = m.diag();
        let min = d.iter().copied().fold(f64::INFINITY, f64::min);
        let maxabs = d.iter().map(|x| libm::fabs(*x)).fold(0.0, f64::max);
        (min, maxabs)
    } else {
        match sym_eigen(m) {
            Ok(eig) => {
                let v = eig.values();
                (v[v.len() - 1], libm::fabs(v[0]).max(libm::fabs(v[v.len() - 1])))
            }
            Err(_) => return false,
        }
    };
    min.is_finite() && min > tol * maxabs && min > 0.0
}

/// Lower Cholesky factor (row-major), or `None` if a pivot is not positive.
pub fn cholesky(m: &SymMatrix) -> Option<Vec<f64>> {
    let n = m.dim();
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut s = m.get(j, j);
        for k in 0..j {
            s -= l[j * n + k] * l[j * n + k];
        }
        if !(s > 0.0) {
            return None;
        }
        let ljj = libm::sqrt(s);
        l[j * n + j] = ljj;
        for i in (j + 1)..n {
            let (ri, rj) = (i * n, j * n);
            let mut t = m.get(i, j);
            for k in 0..j {
                t -= l[ri + k] * l[rj + k];
            }
            l[ri + j] = t / ljj;
        }
    }
    Some(l)
}

/// `log det M` via Cholesky; `None` when `M` is not positive definite.
pub fn log_det(m: &SymMatrix) -> Option<f64> {
    let n = m.dim();
    let l = cholesky(m)?;
    Some(2.0 * (0..n).map(|i| libm::log(l[i * n + i])).sum::<f64>())
}
