//! Mergeable streaming moments, goodness-of-fit tests and trend checks.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Running means, co-moments and per-coordinate third/fourth central moments
/// over a fixed number of coordinates. Two accumulators merge exactly as if
/// their streams had been concatenated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentAccumulator {
    dim: usize,
    count: u64,
    mean: Vec<f64>,
    /// Row-major `dim x dim` sums of centered products.
    comoment: Vec<f64>,
    m3: Vec<f64>,
    m4: Vec<f64>,
}

/// An estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            count: 0,
            mean: vec![0.0; dim],
            comoment: vec![0.0; dim * dim],
            m3: vec![0.0; dim],
            m4: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                got: x.len(),
            });
        }
        let n1 = self.count as f64;
        self.count += 1;
        let n = self.count as f64;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for i in 0..self.dim {
            let d = delta[i];
            let dn = d / n;
            let dn2 = dn * dn;
            let term1 = d * dn * n1;
            let m2 = self.comoment[i * self.dim + i];
            self.m4[i] += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * m2 - 4.0 * dn * self.m3[i];
            self.m3[i] += term1 * dn * (n - 2.0) - 3.0 * dn * m2;
            self.mean[i] += dn;
        }
        let w = n1 / n;
        for i in 0..self.dim {
            for k in 0..self.dim {
                self.comoment[i * self.dim + k] += w * delta[i] * delta[k];
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                got: other.dim,
            });
        }
        if other.count == 0 {
            return Ok(());
        }
        if self.count == 0 {
            *self = other.clone();
            return Ok(());
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(b, a)| b - a).collect();
        for i in 0..self.dim {
            let d = delta[i];
            let m2a = self.comoment[i * self.dim + i];
            let m2b = other.comoment[i * self.dim + i];
            let (m3a, m3b) = (self.m3[i], other.m3[i]);
            self.m4[i] += other.m4[i]
                + d.powi(4) * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
                + 6.0 * d * d * (na * na * m2b + nb * nb * m2a) / (n * n)
                + 4.0 * d * (na * m3b - nb * m3a) / n;
            self.m3[i] += m3b + d.powi(3) * na * nb * (na - nb) / (n * n) + 3.0 * d * (na * m2b - nb * m2a) / n;
            self.mean[i] += d * nb / n;
        }
        let w = na * nb / n;
        for i in 0..self.dim {
            for k in 0..self.dim {
                let idx = i * self.dim + k;
                self.comoment[idx] += other.comoment[idx] + w * delta[i] * delta[k];
            }
        }
        self.count += other.count;
        Ok(())
    }

    /// `None` when empty.
    pub fn mean(&self) -> Option<&[f64]> {
        (self.count > 0).then_some(&self.mean[..])
    }

    /// Standard error of the mean of coordinate `i`.
    pub fn mean_se(&self, i: usize) -> Option<f64> {
        self.covariance(i, i).map(|v| (v / self.count as f64).sqrt())
    }

    /// Unbiased covariance of coordinates `a` and `b`.
    pub fn covariance(&self, a: usize, b: usize) -> Option<f64> {
        (self.count >= 2).then(|| self.comoment[a * self.dim + b] / (self.count as f64 - 1.0))
    }

    /// Covariance with the large-sample SE `sqrt((s_a^2 s_b^2 + c^2)/n)`, exact
    /// for Gaussian data. On the diagonal the fourth moment is used instead.
    pub fn cov_estimate(&self, a: usize, b: usize) -> Option<Estimate> {
        let c = self.covariance(a, b)?;
        let n = self.count as f64;
        let se = if a == b {
            let m4 = self.m4[a] / n;
            let m2 = self.comoment[a * self.dim + a] / n;
            ((m4 - m2 * m2).max(0.0) / n).sqrt()
        } else {
            let va = self.covariance(a, a)?;
            let vb = self.covariance(b, b)?;
            ((va * vb + c * c) / n).sqrt()
        };
        Some(Estimate { value: c, se })
    }

    pub fn correlation(&self, a: usize, b: usize) -> Option<f64> {
        let c = self.covariance(a, b)?;
        Some(c / (self.covariance(a, a)? * self.covariance(b, b)?).sqrt())
    }
}

/// Full covariance matrix with per-entry standard errors (row-major).
pub fn empirical_cov(acc: &MomentAccumulator) -> Result<(Vec<f64>, Vec<f64>)> {
    if acc.count() < 2 {
        return Err(Error::Domain("covariance needs at least two samples".into()));
    }
    let d = acc.dim();
    let mut cov = Vec::with_capacity(d * d);
    let mut se = Vec::with_capacity(d * d);
    for a in 0..d {
        for b in 0..d {
            let e = acc.cov_estimate(a, b).unwrap();
            cov.push(e.value);
            se.push(e.se);
        }
    }
    Ok((cov, se))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ReferenceCdf {
    StandardNormal,
    StandardGumbel,
    Exponential { rate: f64 },
}

impl ReferenceCdf {
    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            ReferenceCdf::StandardNormal => normal_cdf(x),
            ReferenceCdf::StandardGumbel => (-(-x).exp()).exp(),
            ReferenceCdf::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
        }
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample Kolmogorov-Smirnov test with the Stephens small-sample
/// correction applied to the asymptotic distribution.
pub fn ks_statistic(sample: &[f64], law: ReferenceCdf) -> Result<KsResult> {
    ks_with(sample, |x| law.cdf(x))
}

pub fn ks_with(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    let n = sample.len();
    if n < 50 {
        return Err(Error::Domain(format!("KS test needs at least 50 samples, got {n}")));
    }
    if sample.iter().any(|x| x.is_nan()) {
        return Err(Error::Domain("KS sample contains NaN".into()));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f);
    }
    let sn = nf.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_survival(lambda),
        n,
    })
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // Jacobi-transformed series, fast for small lambda.
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let mut s = 0.0;
        for k in 1..=20 {
            let odd = (2 * k - 1) as f64;
            s += (-odd * odd * c).exp();
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            s += if k % 2 == 1 { term } else { -term };
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub pass: bool,
    pub points: Vec<(f64, f64)>,
    /// Largest `|d_{k+1}| / |d_k|` over consecutive scales.
    pub worst_step: f64,
}

/// Step slack applied to each consecutive pair of deviations.
pub const TREND_SLACK: f64 = 1.1;

/// Passes iff `|deviation|` does not grow by more than 10% between
/// consecutive scales.
pub fn trend_diagnostic(points: &[(f64, f64)]) -> Result<TrendReport> {
    if points.len() < 3 {
        return Err(Error::Domain(format!(
            "trend needs at least 3 scales, got {}",
            points.len()
        )));
    }
    if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::Domain("trend scales must be strictly increasing".into()));
    }
    let mut pass = true;
    let mut worst = 0.0f64;
    for w in points.windows(2) {
        let (a, b) = (w[0].1.abs(), w[1].1.abs());
        if !(b <= TREND_SLACK * a) {
            pass = false;
        }
        let ratio = if a > 0.0 {
            b / a
        } else if b > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        worst = worst.max(ratio);
    }
    Ok(TrendReport {
        pass,
        points: points.to_vec(),
        worst_step: worst,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Two-sample chi-square homogeneity test over matching histogram bins.
/// Bins whose pooled count is below 10 are merged into a single bin.
pub fn chi_square_homogeneity(a: &[u64], b: &[u64]) -> Result<ChiSquareResult> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            expected: a.len(),
            got: b.len(),
        });
    }
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut sparse = (0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        if x + y >= 10 {
            cells.push((x as f64, y as f64));
        } else {
            sparse.0 += x as f64;
            sparse.1 += y as f64;
        }
    }
    if sparse.0 + sparse.1 > 0.0 {
        cells.push(sparse);
    }
    if cells.len() < 2 {
        return Err(Error::Domain("chi-square needs at least two populated bins".into()));
    }
    let na: f64 = cells.iter().map(|c| c.0).sum();
    let nb: f64 = cells.iter().map(|c| c.1).sum();
    let n = na + nb;
    let mut stat = 0.0;
    for &(x, y) in &cells {
        let pooled = (x + y) / n;
        let (ea, eb) = (na * pooled, nb * pooled);
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    let dof = cells.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(ChiSquareResult {
        statistic: stat,
        dof,
        p_value: dist.sf(stat),
    })
}

/// One line of the verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimEntry {
    pub claim_id: String,
    pub statement: String,
    pub observed: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl ClaimEntry {
    /// Passes when `|observed - target| <= tolerance`.
    pub fn within(
        claim_id: impl Into<String>,
        statement: impl Into<String>,
        observed: f64,
        target: f64,
        tolerance: f64,
    ) -> Self {
        Self {
            claim_id: claim_id.into(),
            statement: statement.into(),
            observed,
            target,
            tolerance,
            pass: (observed - target).abs() <= tolerance,
            note: String::new(),
        }
    }

    pub fn flag(
        claim_id: impl Into<String>,
        statement: impl Into<String>,
        observed: f64,
        target: f64,
        tolerance: f64,
        pass: bool,
    ) -> Self {
        Self {
            claim_id: claim_id.into(),
            statement: statement.into(),
            observed,
            target,
            tolerance,
            pass,
            note: String::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn data(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|_| rng.random::<f64>().powi(3) * 10.0 - 1.0).collect())
            .collect()
    }

    fn naive_cov(xs: &[Vec<f64>], a: usize, b: usize) -> f64 {
        let n = xs.len() as f64;
        let ma = xs.iter().map(|x| x[a]).sum::<f64>() / n;
        let mb = xs.iter().map(|x| x[b]).sum::<f64>() / n;
        xs.iter().map(|x| (x[a] - ma) * (x[b] - mb)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn empty_and_single() {
        let mut acc = MomentAccumulator::new(3);
        assert!(acc.mean().is_none());
        acc.push(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(acc.mean().unwrap(), &[1.0, 2.0, 3.0]);
        assert!(acc.covariance(0, 0).is_none());
        assert!(matches!(acc.push(&[1.0]), Err(Error::Shape { expected: 3, got: 1 })));
    }

    #[test]
    fn matches_two_pass() {
        let xs = data(500, 3, 1);
        let mut acc = MomentAccumulator::new(3);
        for x in &xs {
            acc.push(x).unwrap();
        }
        for a in 0..3 {
            for b in 0..3 {
                let c = naive_cov(&xs, a, b);
                assert!((acc.covariance(a, b).unwrap() - c).abs() < 1e-10 * c.abs().max(1.0));
            }
        }
        let n = xs.len() as f64;
        let m = xs.iter().map(|x| x[0]).sum::<f64>() / n;
        let m4: f64 = xs.iter().map(|x| (x[0] - m).powi(4)).sum();
        let m3: f64 = xs.iter().map(|x| (x[0] - m).powi(3)).sum();
        assert!((acc.m4[0] - m4).abs() < 1e-9 * m4);
        assert!((acc.m3[0] - m3).abs() < 1e-9 * m3.abs());
    }

    #[test]
    fn merge_equals_single_pass() {
        let xs = data(1001, 4, 2);
        let mut whole = MomentAccumulator::new(4);
        for x in &xs {
            whole.push(x).unwrap();
        }
        for split in [1usize, 17, 500, 1000] {
            let mut a = MomentAccumulator::new(4);
            let mut b = MomentAccumulator::new(4);
            for x in &xs[..split] {
                a.push(x).unwrap();
            }
            for x in &xs[split..] {
                b.push(x).unwrap();
            }
            a.merge(&b).unwrap();
            assert_eq!(a.count(), whole.count());
            let close = |u: f64, v: f64| (u - v).abs() <= 1e-12 * u.abs().max(v.abs()).max(1e-300);
            for i in 0..4 {
                assert!(close(a.mean[i], whole.mean[i]));
                assert!(close(a.m3[i], whole.m3[i]) || (a.m3[i] - whole.m3[i]).abs() < 1e-9);
                assert!(close(a.m4[i], whole.m4[i]));
            }
            for (u, v) in a.comoment.iter().zip(&whole.comoment) {
                assert!(close(*u, *v));
            }
        }
    }

    #[test]
    fn merge_is_order_independent() {
        let xs = data(300, 2, 3);
        let parts: Vec<MomentAccumulator> = xs
            .chunks(50)
            .map(|c| {
                let mut a = MomentAccumulator::new(2);
                c.iter().for_each(|x| a.push(x).unwrap());
                a
            })
            .collect();
        let mut fwd = MomentAccumulator::new(2);
        parts.iter().for_each(|p| fwd.merge(p).unwrap());
        let mut rev = MomentAccumulator::new(2);
        parts.iter().rev().for_each(|p| rev.merge(p).unwrap());
        for (u, v) in fwd.comoment.iter().zip(&rev.comoment) {
            assert!((u - v).abs() <= 1e-12 * u.abs());
        }
    }

    #[test]
    fn iid_normal_identity_cov() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut acc = MomentAccumulator::new(3);
        for _ in 0..20_000 {
            let x: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
            acc.push(&x).unwrap();
        }
        let (cov, se) = empirical_cov(&acc).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((cov[a * 3 + b] - target).abs() <= 3.0 * se[a * 3 + b] + 1e-3);
            }
        }
        // Gaussian: var SE ≈ sqrt(2/n)
        let s = acc.cov_estimate(0, 0).unwrap().se;
        assert!((s / (2.0f64 / 20_000.0).sqrt() - 1.0).abs() < 0.1);
    }

    #[test]
    fn ks_power_and_null() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
        assert!(ks_statistic(&xs, ReferenceCdf::StandardGumbel).unwrap().p_value < 1e-3);
        assert!(ks_statistic(&xs, ReferenceCdf::StandardNormal).unwrap().p_value > 0.01);
        let mut ps: Vec<f64> = (0..200)
            .map(|_| {
                let s: Vec<f64> = (0..200).map(|_| rng.sample(StandardNormal)).collect();
                ks_statistic(&s, ReferenceCdf::StandardNormal).unwrap().p_value
            })
            .collect();
        ps.sort_by(f64::total_cmp);
        let median = ps[100];
        assert!((median - 0.5).abs() < 0.12, "median p {median}");
        assert!(ks_statistic(&xs[..10], ReferenceCdf::StandardNormal).is_err());
    }

    #[test]
    fn kolmogorov_series_agree() {
        // the two branches meet at lambda = 1
        let lo = {
            let c = std::f64::consts::PI.powi(2) / 8.0;
            let s: f64 = (1..=20).map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp()).sum();
            1.0 - (2.0 * std::f64::consts::PI).sqrt() * s
        };
        assert!((lo - kolmogorov_survival(1.0)).abs() < 1e-12);
        assert!((kolmogorov_survival(1.36) - 0.0494).abs() < 5e-4);
        assert!((kolmogorov_survival(0.5) - 0.9639).abs() < 5e-4);
    }

    #[test]
    fn cdfs() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.96) - 0.9750021048517795).abs() < 1e-11);
        assert!((ReferenceCdf::StandardGumbel.cdf(0.0) - (-1f64).exp()).abs() < 1e-15);
        let e = ReferenceCdf::Exponential { rate: 2.0 };
        assert!((e.cdf(1.0) - (1.0 - (-2f64).exp())).abs() < 1e-15);
        assert_eq!(e.cdf(-1.0), 0.0);
    }

    #[test]
    fn trend_examples() {
        let ok = trend_diagnostic(&[(20.0, 0.3), (40.0, 0.15), (80.0, 0.08)]).unwrap();
        assert!(ok.pass);
        let bad = trend_diagnostic(&[(20.0, 0.1), (40.0, 0.2), (80.0, 0.4)]).unwrap();
        assert!(!bad.pass);
        assert!(trend_diagnostic(&[(20.0, 0.1), (40.0, 0.05)]).is_err());
        assert!(trend_diagnostic(&[(20.0, 0.1), (20.0, 0.05), (30.0, 0.01)]).is_err());
        assert!(
            trend_diagnostic(&[(1.0, -0.1), (2.0, 0.105), (3.0, -0.05)])
                .unwrap()
                .pass
        );
    }

    #[test]
    fn chi_square_same_and_different() {
        let a = [100, 200, 300, 5, 3];
        let r = chi_square_homogeneity(&a, &a).unwrap();
        assert!(r.statistic.abs() < 1e-12 && (r.p_value - 1.0).abs() < 1e-12);
        let b = [300, 200, 100, 5, 3];
        assert!(chi_square_homogeneity(&a, &b).unwrap().p_value < 1e-10);
        assert_eq!(r.dof, 4);
    }

    #[test]
    fn claim_json_shape() {
        let c = ClaimEntry::within("x", "desc", 1.0, 1.05, 0.1);
        assert!(c.pass);
        let v: serde_json::Value = serde_json::to_value(&c).unwrap();
        for key in ["claim_id", "statement", "observed", "target", "tolerance", "pass"] {
            assert!(v.get(key).is_some());
        }
    }
}
