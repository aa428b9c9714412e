//! Asymptotic regions of the signal exponents `(a, b)`, where a sparse mean
//! difference has `l = ⌊p^a⌋` non-zero components of size `Δ = p^b`, and a
//! Monte Carlo probe of the statistic `V = ⟨μ, μ̂⟩ / ‖μ̂‖`, whose divergence
//! drives the misclassification rate to zero.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seed;
use crate::shrinkage::{shrink, MeanMethod, NoisyVector, ShrinkageConfig};
use crate::stats::quantile_sorted;

/// Whether a method is proven to reach zero error at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Coverage {
    Covered,
    /// No claim either way.
    Unknown,
    /// Outside the method's exact region where the exact region is known.
    Excluded,
}

impl Coverage {
    pub fn tag(self) -> &'static str {
        match self {
            Coverage::Covered => "covered",
            Coverage::Unknown => "unknown",
            Coverage::Excluded => "excluded",
        }
    }
}

impl fmt::Display for Coverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionReport {
    pub a: f64,
    pub b: f64,
    pub in_a: bool,
    pub in_b: bool,
    pub in_c: bool,
    pub in_d: bool,
    pub in_t1: bool,
    pub in_t2: bool,
    pub coverage: BTreeMap<MeanMethod, Coverage>,
}

impl RegionReport {
    /// Methods proven to reach zero error here.
    pub fn covered_by(&self) -> Vec<MeanMethod> {
        self.coverage.iter().filter(|(_, c)| **c == Coverage::Covered).map(|(m, _)| *m).collect()
    }

    pub fn coverage_of(&self, m: MeanMethod) -> Coverage {
        self.coverage[&m]
    }

    /// Names of the regions among A–D containing the point.
    pub fn regions(&self) -> Vec<char> {
        [(self.in_a, 'A'), (self.in_b, 'B'), (self.in_c, 'C'), (self.in_d, 'D')]
            .iter()
            .filter(|(inside, _)| *inside)
            .map(|(_, c)| *c)
            .collect()
    }
}

/// Evaluates the region inequalities at `(a, b)`:
///
/// * A: `0 ≤ a+2b ≤ 1/2`, `−1/4 < b < 0`, `0 < a < 1`
/// * B: `a+b ≥ 1/2`, `−1/2 < b < 0`, `1/2 < a < 1`
/// * C: `a+2b ≤ 1/2`, `0 < b < 1/4`, `0 < a < 1/2`
/// * D: `a+2b ≥ 1/2`, `−1/4 < b < 0`, `1/2 < a < 1`
/// * T1: `a+2b ≥ 1/2`, `0 < a ≤ 1/2`; T2: `1/2 < a ≤ 1`, `b > 0`
///
/// Hard thresholding succeeds exactly on C and the sample mean exactly on D;
/// outside those they are excluded, except inside T1 ∪ T2 where the signal is
/// strong enough that no exclusion is claimed. The kernel and NPMLE rules are
/// covered on A∪C∪D and B∪C∪D respectively and unknown elsewhere.
pub fn region_membership(a: f64, b: f64) -> Result<RegionReport> {
    if !(a > 0.0 && a < 1.0) || !b.is_finite() {
        return Err(Error::invalid("a must lie in (0, 1) and b must be finite"));
    }
    let s2 = a + 2.0 * b;
    let in_a = (0.0..=0.5).contains(&s2) && -0.25 < b && b < 0.0;
    let in_b = a + b >= 0.5 && -0.5 < b && b < 0.0 && 0.5 < a;
    let in_c = s2 <= 0.5 && 0.0 < b && b < 0.25 && a < 0.5;
    let in_d = s2 >= 0.5 && -0.25 < b && b < 0.0 && 0.5 < a;
    let in_t1 = s2 >= 0.5 && a <= 0.5;
    let in_t2 = 0.5 < a && b > 0.0;

    let outside = if in_t1 || in_t2 { Coverage::Unknown } else { Coverage::Excluded };
    let exact = |inside: bool| if inside { Coverage::Covered } else { outside };
    let superset = |inside: bool| if inside { Coverage::Covered } else { Coverage::Unknown };
    let mut coverage = BTreeMap::new();
    coverage.insert(MeanMethod::Sm, exact(in_d));
    coverage.insert(MeanMethod::Hard, exact(in_c));
    coverage.insert(MeanMethod::Npeb, superset(in_a || in_c || in_d));
    coverage.insert(MeanMethod::Npmle, superset(in_b || in_c || in_d));
    Ok(RegionReport { a, b, in_a, in_b, in_c, in_d, in_t1, in_t2, coverage })
}

/// `V = ⟨μ, μ̂⟩ / ‖μ̂‖₂`; zero when `μ̂ = 0`.
pub fn v_statistic(mu_true: &[f64], mu_hat: &[f64]) -> Result<f64> {
    if mu_true.len() != mu_hat.len() {
        return Err(Error::ShapeMismatch { expected: mu_true.len(), got: mu_hat.len() });
    }
    let norm = libm::sqrt(mu_hat.iter().map(|x| x * x).sum());
    if norm == 0.0 {
        return Ok(0.0);
    }
    Ok(crate::matrix::dot(mu_true, mu_hat) / norm)
}

/// Signal exponents and group sizes; the signal at dimension `p` has
/// `l = ⌊p^a⌋` components equal to `Δ = p^b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalConfig {
    pub a: f64,
    pub b: f64,
    pub n1: usize,
    pub n2: usize,
}

impl SignalConfig {
    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b, n1: 50, n2: 50 }
    }

    /// `a_n = (1/n₁ + 1/n₂)^{−1/2}`.
    pub fn a_n(&self) -> f64 {
        1.0 / libm::sqrt(1.0 / self.n1 as f64 + 1.0 / self.n2 as f64)
    }

    /// `(Δ, l)` at dimension `p`. A tiny tolerance keeps exact powers such
    /// as `4096^{0.5}` from rounding down.
    pub fn at(&self, p: usize) -> Result<(f64, usize)> {
        if !(self.a > 0.0 && self.a < 1.0) {
            return Err(Error::invalid("a must lie in (0, 1)"));
        }
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::invalid("group sizes must be positive"));
        }
        let pf = p as f64;
        let l = libm::floor(libm::pow(pf, self.a) + 1e-9) as usize;
        if l < 1 || l > p {
            return Err(Error::invalid("signal count l must lie in 1..=p"));
        }
        Ok((libm::pow(pf, self.b), l))
    }

    /// The sparse mean difference `(Δ_l, 0_{p−l})`.
    pub fn mean_difference(&self, p: usize) -> Result<Vec<f64>> {
        let (delta, l) = self.at(p)?;
        let mut mu = vec![0.0; p];
        mu[..l].iter_mut().for_each(|x| *x = delta);
        Ok(mu)
    }
}

/// V-statistics of every method on one draw `z̄ ~ N(μ, a_n⁻² I_p)`. The
/// draw depends only on `(seed, p, draw)`, so all methods see the same data.
pub fn v_scan_draw(
    cfg: &SignalConfig,
    p: usize,
    draw: usize,
    methods: &[MeanMethod],
    seed: u64,
    shrinkage: &ShrinkageConfig,
) -> Result<Vec<f64>> {
    let mu = cfg.mean_difference(p)?;
    let sd = 1.0 / cfg.a_n();
    let mut rng = seed::rng(seed::derive_path(seed, &[p as u64, draw as u64]));
    let z: Vec<f64> = mu.iter().map(|m| m + sd * rng.sample::<f64, _>(StandardNormal)).collect();
    let noisy = NoisyVector::new(z, sd)?;
    methods
        .iter()
        .map(|&m| {
            let est = shrink(&noisy, m, shrinkage)?;
            v_statistic(&mu, &est.estimates)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VScanRow {
    pub method: MeanMethod,
    pub p: usize,
    pub median: f64,
    pub q10: f64,
    pub q90: f64,
    pub draws: usize,
    /// Draws whose estimate was identically zero (V set to 0).
    pub zero_estimates: usize,
}

/// Summarises `values[draw][method]` for one dimension.
pub fn summarize_draws(p: usize, methods: &[MeanMethod], values: &[Vec<f64>]) -> Vec<VScanRow> {
    methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let mut v: Vec<f64> = values.iter().map(|row| row[k]).collect();
            v.sort_by(f64::total_cmp);
            VScanRow {
                method,
                p,
                median: quantile_sorted(&v, 0.5),
                q10: quantile_sorted(&v, 0.1),
                q90: quantile_sorted(&v, 0.9),
                draws: v.len(),
                zero_estimates: v.iter().filter(|x| **x == 0.0).count(),
            }
        })
        .collect()
}

/// Median (and 10%/90% quantiles) of V per method and dimension.
pub fn v_scan(
    cfg: &SignalConfig,
    p_list: &[usize],
    methods: &[MeanMethod],
    draws: usize,
    seed: u64,
    shrinkage: &ShrinkageConfig,
) -> Result<Vec<VScanRow>> {
    if draws < 10 {
        return Err(Error::InsufficientData { needed: 10, got: draws });
    }
    let mut rows = Vec::new();
    for &p in p_list {
        let values =
            (0..draws).map(|d| v_scan_draw(cfg, p, d, methods, seed, shrinkage)).collect::<Result<Vec<_>>>()?;
        rows.extend(summarize_draws(p, methods, &values));
    }
    Ok(rows)
}

/// `median V(p_hi) / median V(p_lo)` for `method`, if both rows exist.
pub fn median_ratio(rows: &[VScanRow], method: MeanMethod, p_hi: usize, p_lo: usize) -> Option<f64> {
    let find = |p: usize| rows.iter().find(|r| r.method == method && r.p == p).map(|r| r.median);
    Some(find(p_hi)? / find(p_lo)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        let c = region_membership(0.25, 0.10).unwrap();
        assert_eq!(c.regions(), ['C']);
        for m in [MeanMethod::Hard, MeanMethod::Npeb, MeanMethod::Npmle] {
            assert_eq!(c.coverage_of(m), Coverage::Covered);
        }
        assert_ne!(c.coverage_of(MeanMethod::Sm), Coverage::Covered);

        let d = region_membership(0.75, -0.10).unwrap();
        assert!(d.in_d);
        for m in [MeanMethod::Sm, MeanMethod::Npeb, MeanMethod::Npmle] {
            assert_eq!(d.coverage_of(m), Coverage::Covered);
        }

        let a = region_membership(0.30, -0.10).unwrap();
        assert_eq!(a.regions(), ['A']);
        assert_eq!(a.covered_by(), [MeanMethod::Npeb]);
        assert_eq!(a.coverage_of(MeanMethod::Npmle), Coverage::Unknown);
    }

    #[test]
    fn rejects_a_outside_unit_interval() {
        assert!(region_membership(0.0, 0.1).is_err());
        assert!(region_membership(1.0, 0.1).is_err());
    }

    fn grid() -> impl Iterator<Item = (f64, f64)> {
        (0..100).flat_map(|i| (0..100).map(move |j| ((i as f64 + 0.5) / 100.0, -0.5 + (j as f64 + 0.5) / 100.0)))
    }

    #[test]
    fn region_relations_on_grid() {
        // C is disjoint from the others and D sits inside B, so the four
        // sets are not a partition.
        let mut b_and_not_d = 0;
        for (a, b) in grid() {
            let r = region_membership(a, b).unwrap();
            if r.in_c {
                assert!(!r.in_a && !r.in_b && !r.in_d);
            }
            if r.in_d {
                assert!(r.in_b, "({a}, {b})");
            }
            if r.in_b && !r.in_d {
                b_and_not_d += 1;
            }
        }
        assert!(b_and_not_d > 0);
    }

    #[test]
    fn coverage_respects_inclusions() {
        for (a, b) in grid() {
            let r = region_membership(a, b).unwrap();
            assert_eq!(r.coverage_of(MeanMethod::Hard) == Coverage::Covered, r.in_c);
            assert_eq!(r.coverage_of(MeanMethod::Sm) == Coverage::Covered, r.in_d);
            if r.in_a || r.in_c || r.in_d {
                assert_eq!(r.coverage_of(MeanMethod::Npeb), Coverage::Covered);
            } else {
                assert_eq!(r.coverage_of(MeanMethod::Npeb), Coverage::Unknown);
            }
            if r.in_b || r.in_c || r.in_d {
                assert_eq!(r.coverage_of(MeanMethod::Npmle), Coverage::Covered);
            } else {
                assert_eq!(r.coverage_of(MeanMethod::Npmle), Coverage::Unknown);
            }
        }
    }

    #[test]
    fn v_statistic_examples() {
        let mu = [3.0, 0.0, 0.0];
        assert_eq!(v_statistic(&mu, &mu).unwrap(), 3.0);
        assert_eq!(v_statistic(&mu, &[0.0, 1.0, -2.0]).unwrap(), 0.0);
        assert!((v_statistic(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(v_statistic(&mu, &[0.0; 3]).unwrap(), 0.0);
        assert!(v_statistic(&mu, &[1.0]).is_err());
        let hat = [0.3, -1.2, 2.2];
        let base = v_statistic(&mu, &hat).unwrap();
        for c in [0.01, 7.0, 1e6] {
            let scaled: Vec<f64> = hat.iter().map(|x| x * c).collect();
            assert!((v_statistic(&mu, &scaled).unwrap() - base).abs() < 1e-12);
        }
    }

    #[test]
    fn signal_parametrisation() {
        let cfg = SignalConfig::new(0.5, -0.5);
        assert_eq!(cfg.at(4096).unwrap(), (1.0 / 64.0, 64));
        assert_eq!(cfg.a_n(), 5.0);
        let mu = cfg.mean_difference(16).unwrap();
        assert_eq!(mu.iter().filter(|x| **x != 0.0).count(), 4);
        assert!(SignalConfig::new(1.2, 0.0).at(10).is_err());
    }

    #[test]
    fn scan_is_deterministic_and_order_free() {
        let cfg = SignalConfig::new(0.3, 0.1);
        let methods = [MeanMethod::Sm, MeanMethod::Npeb];
        let sc = ShrinkageConfig::default();
        let a = v_scan(&cfg, &[64, 128], &methods, 12, 4, &sc).unwrap();
        assert_eq!(a, v_scan(&cfg, &[64, 128], &methods, 12, 4, &sc).unwrap());
        let mut draws: Vec<Vec<f64>> = (0..12).map(|d| v_scan_draw(&cfg, 64, d, &methods, 4, &sc).unwrap()).collect();
        draws.reverse();
        assert_eq!(summarize_draws(64, &methods, &draws), a[..2]);
        assert!(v_scan(&cfg, &[64], &methods, 9, 4, &sc).is_err());
        assert!(median_ratio(&a, MeanMethod::Npeb, 128, 64).unwrap() > 0.0);
    }

    #[test]
    fn sample_mean_scan_matches_independent_monte_carlo() {
        // independent implementation: Box–Muller on a different generator
        let cfg = SignalConfig::new(0.5, 0.1);
        let p = 256;
        let draws = 400;
        let rows = v_scan(&cfg, &[p], &[MeanMethod::Sm], draws, 17, &ShrinkageConfig::default()).unwrap();
        let (delta, l) = cfg.at(p).unwrap();
        let sd = 1.0 / cfg.a_n();
        let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
        let mut uniform = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            ((state >> 11) as f64 + 0.5) / (1u64 << 53) as f64
        };
        let mut vs: Vec<f64> = (0..draws)
            .map(|_| {
                let (mut num, mut den) = (0.0, 0.0);
                for k in 0..p {
                    let g =
                        libm::sqrt(-2.0 * libm::log(uniform())) * libm::cos(2.0 * core::f64::consts::PI * uniform());
                    let mu = if k < l { delta } else { 0.0 };
                    let z = mu + sd * g;
                    num += mu * z;
                    den += z * z;
                }
                num / libm::sqrt(den)
            })
            .collect();
        vs.sort_by(f64::total_cmp);
        let independent = quantile_sorted(&vs, 0.5);
        assert!((rows[0].median - independent).abs() < 0.05 * independent, "{} vs {independent}", rows[0].median);
    }
}
