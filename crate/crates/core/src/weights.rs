//! Base probability sequences `(p_k)` and their counting function.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, HypothesisViolated, Result};
use crate::numeric::{log_within, CompensatedSum};

/// Direct-summation cap for the Weibull normalizing series. Past this the
/// remainder is estimated by a midpoint integral (only reachable for alpha
/// below about 0.2).
const MAX_SERIES_TERMS: u64 = 1 << 27;

/// Cap on the cached inverse-CDF table; sampling past it falls back to a scan.
const MAX_CDF_TABLE: usize = 1 << 22;

/// Tail mass below which the inverse-CDF table stops growing (below the
/// resolution of a 53-bit uniform).
const CDF_TABLE_TAIL: f64 = 8.7e-19;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "distribution", rename_all = "snake_case")]
pub enum WeightKind {
    /// `p_k = C exp(-k^alpha)`.
    Weibull { alpha: f64, c: f64 },
    /// `p_k = p (1-p)^(k-1)`.
    Geometric { p: f64 },
    /// Finite list, normalized on construction.
    Custom { probabilities: Vec<f64> },
}

/// The slowly varying factor of the counting-function regularity condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SlowlyVarying {
    Constant(f64),
}

impl SlowlyVarying {
    pub fn eval(&self, _t: f64) -> f64 {
        match *self {
            SlowlyVarying::Constant(c) => c,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        match self {
            SlowlyVarying::Constant(_) => false,
        }
    }
}

/// Exponent `beta` and slowly varying `ell` for a model whose counting
/// function satisfies the de Haan regularity condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeHaan {
    pub beta: f64,
    pub ell: SlowlyVarying,
}

impl DeHaan {
    pub fn new(beta: f64, ell: SlowlyVarying) -> Result<Self, HypothesisViolated> {
        if !(beta >= 0.0) {
            return Err(HypothesisViolated {
                reason: format!("beta = {beta} must be nonnegative"),
            });
        }
        if beta == 0.0 && !ell.is_unbounded() {
            return Err(HypothesisViolated {
                reason: "beta = 0 requires an unbounded, eventually nondecreasing ell".into(),
            });
        }
        Ok(Self { beta, ell })
    }
}

/// Immutable description of `(p_k)_{k>=1}`.
#[derive(Debug, Clone)]
pub struct WeightModel {
    kind: WeightKind,
    /// Added to the index-dependent part of `-ln p_k`.
    log_offset: f64,
    /// `cdf[k-1] = p_1 + ... + p_k`.
    cdf: Vec<f64>,
}

impl WeightModel {
    pub fn weibull(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!(
                "weibull alpha must lie in the open interval (0,1), got {alpha}"
            )));
        }
        let ln_total = ln_weibull_tail(alpha, 1);
        let c = (-ln_total).exp();
        let mut model = Self {
            kind: WeightKind::Weibull { alpha, c },
            log_offset: ln_total,
            cdf: Vec::new(),
        };
        model.cdf = model.build_cdf_table();
        Ok(model)
    }

    pub fn geometric(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!(
                "geometric p must lie in the open interval (0,1), got {p}"
            )));
        }
        Ok(Self {
            kind: WeightKind::Geometric { p },
            log_offset: -p.ln(),
            cdf: Vec::new(),
        })
    }

    /// Accepts any finite list of positive reals and rescales it to sum to 1.
    pub fn custom(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Domain("custom weight list is empty".into()));
        }
        if let Some(bad) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Domain(format!(
                "custom weights must be positive and finite, found {bad}"
            )));
        }
        let total: CompensatedSum = weights.iter().copied().collect();
        let total = total.value();
        let probabilities: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut acc = CompensatedSum::new();
        let cdf = probabilities
            .iter()
            .map(|&p| {
                acc.add(p);
                acc.value()
            })
            .collect();
        Ok(Self {
            kind: WeightKind::Custom { probabilities },
            log_offset: 0.0,
            cdf,
        })
    }

    /// Parses one probability per line; blank lines and `#` comments are skipped.
    pub fn from_weights_text(text: &str) -> Result<Self> {
        let mut weights = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let w: f64 = line
                .parse()
                .map_err(|_| Error::Domain(format!("weights file line {}: cannot parse {line:?}", lineno + 1)))?;
            weights.push(w);
        }
        Self::custom(weights)
    }

    pub fn kind(&self) -> &WeightKind {
        &self.kind
    }

    /// True when `p_k` is nonincreasing in `k` (so `rho` can binary search).
    pub fn is_monotone(&self) -> bool {
        !matches!(self.kind, WeightKind::Custom { .. })
    }

    /// Number of indices with positive mass, `None` for infinite support.
    pub fn support_len(&self) -> Option<u64> {
        match &self.kind {
            WeightKind::Custom { probabilities } => Some(probabilities.len() as u64),
            _ => None,
        }
    }

    /// `-ln p_k` for `k >= 1`; `+inf` outside a finite support.
    pub fn log_weight(&self, k: u64) -> f64 {
        debug_assert!(k >= 1);
        match &self.kind {
            WeightKind::Weibull { alpha, .. } => (k as f64).powf(*alpha) + self.log_offset,
            WeightKind::Geometric { p } => self.log_offset - (k - 1) as f64 * (-p).ln_1p(),
            WeightKind::Custom { probabilities } => match probabilities.get(k as usize - 1) {
                Some(p) => -p.ln(),
                None => f64::INFINITY,
            },
        }
    }

    pub fn weight(&self, k: u64) -> f64 {
        match &self.kind {
            WeightKind::Custom { probabilities } => probabilities.get(k as usize - 1).copied().unwrap_or(0.0),
            _ => (-self.log_weight(k)).exp(),
        }
    }

    /// `sum_{i > k} p_i`, computed without cancellation against 1.
    pub fn tail_mass_after(&self, k: u64) -> f64 {
        match &self.kind {
            WeightKind::Weibull { alpha, .. } => (ln_weibull_tail(*alpha, k + 1) - self.log_offset).exp(),
            WeightKind::Geometric { p } => (k as f64 * (-p).ln_1p()).exp(),
            WeightKind::Custom { probabilities } => {
                let k = (k as usize).min(probabilities.len());
                // smallest terms first
                probabilities[k..]
                    .iter()
                    .rev()
                    .copied()
                    .collect::<CompensatedSum>()
                    .value()
            }
        }
    }

    pub fn beta(&self) -> Option<f64> {
        self.asymptotics().ok().map(|d| d.beta)
    }

    pub fn ell(&self) -> Option<SlowlyVarying> {
        self.asymptotics().ok().map(|d| d.ell)
    }

    /// De Haan parameters, or the reason the asymptotic theory does not apply.
    pub fn asymptotics(&self) -> Result<DeHaan, HypothesisViolated> {
        match &self.kind {
            WeightKind::Weibull { alpha, .. } => DeHaan::new(1.0 / alpha - 1.0, SlowlyVarying::Constant(1.0 / alpha)),
            WeightKind::Geometric { .. } => Err(HypothesisViolated {
                reason: "the geometric counting function is not in de Haan's class Pi \
                         with auxiliary (log t)^beta ell(log t)"
                    .into(),
            }),
            WeightKind::Custom { .. } => Err(HypothesisViolated {
                reason: "a finitely supported distribution has a bounded counting function".into(),
            }),
        }
    }

    /// `#{k : p_k >= 1/x}`.
    pub fn rho(&self, x: f64) -> u64 {
        if !(x > 0.0) {
            return 0;
        }
        let log_x = x.ln();
        match &self.kind {
            WeightKind::Custom { probabilities } => {
                probabilities.iter().filter(|p| log_within(-p.ln(), log_x)).count() as u64
            }
            _ => self.count_log_weights_within(log_x),
        }
    }

    /// Closed form `floor((ln(Cx))^(1/alpha))` for the Weibull family.
    pub fn rho_closed_form(&self, x: f64) -> Option<u64> {
        match self.kind {
            WeightKind::Weibull { alpha, .. } => {
                let l = x.ln() - self.log_offset;
                Some(if l <= 0.0 {
                    0
                } else {
                    l.powf(1.0 / alpha).floor() as u64
                })
            }
            _ => None,
        }
    }

    /// Largest `k` with `-ln p_k <= log_x` for a monotone model.
    fn count_log_weights_within(&self, log_x: f64) -> u64 {
        debug_assert!(self.is_monotone());
        if !log_within(self.log_weight(1), log_x) {
            return 0;
        }
        let mut lo = 1u64; // within
        let mut hi = 2u64;
        while log_within(self.log_weight(hi), log_x) {
            lo = hi;
            hi = hi.saturating_mul(2);
        }
        // invariant: lo within, hi not
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if log_within(self.log_weight(mid), log_x) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Inverse-CDF draw: the smallest `k` with `p_1 + ... + p_k >= uniform`.
    pub fn sample_index(&self, uniform: f64) -> u64 {
        debug_assert!(uniform > 0.0 && uniform < 1.0);
        match &self.kind {
            WeightKind::Geometric { p } => {
                let k = ((-uniform).ln_1p() / (-p).ln_1p()).ceil();
                (k as u64).max(1)
            }
            WeightKind::Custom { .. } => {
                let i = self.cdf.partition_point(|&f| f < uniform);
                (i.min(self.cdf.len() - 1) + 1) as u64
            }
            WeightKind::Weibull { .. } => {
                let i = self.cdf.partition_point(|&f| f < uniform);
                if i < self.cdf.len() {
                    return i as u64 + 1;
                }
                let mut acc = CompensatedSum::new();
                acc.add(*self.cdf.last().unwrap_or(&0.0));
                let mut k = self.cdf.len() as u64;
                loop {
                    k += 1;
                    let p = self.weight(k);
                    acc.add(p);
                    if acc.value() >= uniform || p == 0.0 {
                        return k;
                    }
                }
            }
        }
    }

    fn build_cdf_table(&self) -> Vec<f64> {
        let WeightKind::Weibull { alpha, c } = self.kind else {
            return Vec::new();
        };
        let mut cdf = Vec::new();
        let mut acc = CompensatedSum::new();
        let mut k = 0u64;
        while cdf.len() < MAX_CDF_TABLE {
            k += 1;
            acc.add(self.weight(k));
            cdf.push(acc.value());
            if k % 32 == 0 && c * (ln_weibull_integral_bound(alpha, k as f64)).exp() < CDF_TABLE_TAIL {
                break;
            }
        }
        cdf
    }

    /// Stable identifier of the distribution (hex SHA-256 of its canonical form).
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        match &self.kind {
            WeightKind::Weibull { alpha, .. } => {
                h.update(b"weibull");
                h.update(alpha.to_bits().to_le_bytes());
            }
            WeightKind::Geometric { p } => {
                h.update(b"geometric");
                h.update(p.to_bits().to_le_bytes());
            }
            WeightKind::Custom { probabilities } => {
                h.update(b"custom");
                for p in probabilities {
                    h.update(p.to_bits().to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }
}

/// Log of an upper bound on `int_y^inf exp(-x^alpha) dx`, or `+inf` when the
/// incomplete-gamma bound is not yet valid.
///
/// With `a = 1/alpha` and `Y = y^alpha` the integral is `Gamma(a, Y)/alpha`,
/// and `Gamma(a, Y) <= Y^(a-1) e^-Y / (1 - (a-1)/Y)` for `Y > a-1`.
fn ln_weibull_integral_bound(alpha: f64, y: f64) -> f64 {
    let a = 1.0 / alpha;
    let big_y = y.powf(alpha);
    if big_y <= 2.0 * (a - 1.0) {
        return f64::INFINITY;
    }
    -alpha.ln() + (a - 1.0) * big_y.ln() - big_y - (1.0 - (a - 1.0) / big_y).ln()
}

/// `ln sum_{k >= start} exp(-k^alpha)`, summed relative to the first term so
/// that deep starts do not underflow.
pub(crate) fn ln_weibull_tail(alpha: f64, start: u64) -> f64 {
    let first = (start as f64).powf(alpha);
    let mut acc = CompensatedSum::new();
    let mut k = start;
    loop {
        acc.add((-((k as f64).powf(alpha) - first)).exp());
        k += 1;
        if (k - start) % 32 == 0 {
            // remainder bound relative to the first term
            let rel = ln_weibull_integral_bound(alpha, (k - 1) as f64) + first;
            if rel < (1e-17 * acc.value()).ln() {
                break;
            }
        }
        if k - start >= MAX_SERIES_TERMS {
            acc.add(midpoint_tail_estimate(alpha, k) * first.exp());
            break;
        }
    }
    acc.value().ln() - first
}

/// `int_{k-1/2}^inf exp(-x^alpha) dx`, the Euler-Maclaurin midpoint estimate
/// of `sum_{i >= k} exp(-i^alpha)`.
fn midpoint_tail_estimate(alpha: f64, k: u64) -> f64 {
    let a = 1.0 / alpha;
    let big_y = (k as f64 - 0.5).powf(alpha);
    statrs::function::gamma::gamma_ui(a, big_y) / alpha
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn direct_weibull_sum(alpha: f64) -> f64 {
        // oracle: plain series with a crude but safe cutoff and integral tail check
        let mut s = 0.0f64;
        let mut c = 0.0f64;
        let mut k = 1u64;
        loop {
            let t = (-(k as f64).powf(alpha)).exp();
            let y = t - c;
            let z = s + y;
            c = (z - s) - y;
            s = z;
            // tail <= integral from k of exp(-x^alpha); for alpha=1/2 that is 2(sqrt k + 1) e^{-sqrt k}
            let sk = (k as f64).sqrt();
            if alpha == 0.5 && 2.0 * (sk + 1.0) * (-sk).exp() < 1e-18 {
                break;
            }
            k += 1;
        }
        s
    }

    #[test]
    fn weibull_half_parameters() {
        let m = WeightModel::weibull(0.5).unwrap();
        let d = m.asymptotics().unwrap();
        assert_eq!(d.beta, 1.0);
        assert_eq!(d.ell, SlowlyVarying::Constant(2.0));
        let WeightKind::Weibull { c, .. } = *m.kind() else {
            unreachable!()
        };
        let oracle = 1.0 / direct_weibull_sum(0.5);
        assert!((c - oracle).abs() < 1e-14, "{c} vs {oracle}");
        // sum of p_k is one
        let total = m.cdf.last().unwrap();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weibull_rejects_boundary() {
        for a in [1.0, 0.0, -0.5, 1.5, f64::NAN] {
            assert!(matches!(WeightModel::weibull(a), Err(Error::Domain(_))), "{a}");
        }
    }

    #[test]
    fn weights_are_nonincreasing() {
        for m in [WeightModel::weibull(0.3).unwrap(), WeightModel::geometric(0.3).unwrap()] {
            for k in 1..500 {
                assert!(m.weight(k + 1) <= m.weight(k));
            }
        }
    }

    #[test]
    fn rho_small_x_is_zero() {
        let models = [
            WeightModel::weibull(0.5).unwrap(),
            WeightModel::geometric(0.5).unwrap(),
            WeightModel::custom(vec![3.0, 2.0, 1.0]).unwrap(),
        ];
        for m in &models {
            assert_eq!(m.rho(0.5), 0);
            assert_eq!(m.rho(1.0), 0);
        }
    }

    #[test]
    fn rho_weibull_closed_form_point() {
        let m = WeightModel::weibull(0.5).unwrap();
        let WeightKind::Weibull { c, .. } = *m.kind() else {
            unreachable!()
        };
        let x = 5f64.exp() / c;
        assert_eq!(m.rho(x), 25);
    }

    #[test]
    fn rho_geometric_half() {
        let m = WeightModel::geometric(0.5).unwrap();
        assert_eq!(m.rho(8.0), 3);
        // brute force over the first indices
        for x in [1.5, 2.0, 3.0, 7.9, 8.0, 100.0, 1e6] {
            let brute = (1..200u64).filter(|&k| 0.5f64.powi(k as i32) >= 1.0 / x).count() as u64;
            assert_eq!(m.rho(x), brute, "x={x}");
        }
    }

    #[test]
    fn rho_closed_form_matches_scan() {
        let m = WeightModel::weibull(0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let log_x: f64 = rng.random_range(-1.0..60.0);
            let x = log_x.exp();
            assert_eq!(m.rho(x), m.rho_closed_form(x).unwrap(), "x = e^{log_x}");
        }
    }

    #[test]
    fn rho_is_nondecreasing_for_custom() {
        let m = WeightModel::custom(vec![0.1, 0.5, 0.05, 0.35]).unwrap();
        let mut last = 0;
        for i in 1..400 {
            let r = m.rho(i as f64 * 0.1);
            assert!(r >= last);
            last = r;
        }
        assert_eq!(m.rho(1e9), 4);
    }

    #[test]
    fn sample_index_geometric_examples() {
        let m = WeightModel::geometric(0.5).unwrap();
        assert_eq!(m.sample_index(0.4), 1);
        assert_eq!(m.sample_index(0.6), 2);
        assert_eq!(m.sample_index(0.5), 1);
        assert_eq!(m.sample_index(0.75), 2);
        assert_eq!(m.sample_index(0.76), 3);
    }

    #[test]
    fn sample_index_degenerate_custom() {
        let m = WeightModel::custom(vec![7.0]).unwrap();
        for u in [1e-9, 0.3, 0.999_999] {
            assert_eq!(m.sample_index(u), 1);
        }
    }

    #[test]
    fn custom_is_normalized() {
        let m = WeightModel::custom(vec![2.0, 6.0, 2.0]).unwrap();
        let WeightKind::Custom { probabilities } = m.kind() else {
            unreachable!()
        };
        assert_eq!(probabilities, &vec![0.2, 0.6, 0.2]);
        assert!(m.asymptotics().is_err());
        assert!(WeightModel::custom(vec![]).is_err());
        assert!(WeightModel::custom(vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn geometric_refuses_asymptotics() {
        let m = WeightModel::geometric(0.5).unwrap();
        assert!(m.asymptotics().is_err());
        assert!(m.beta().is_none());
        assert!(m.ell().is_none());
    }

    #[test]
    fn tail_mass_after_matches_cdf() {
        let m = WeightModel::weibull(0.5).unwrap();
        for k in [1u64, 10, 100, 500] {
            let via_cdf = 1.0 - m.cdf[k as usize - 1];
            assert!((m.tail_mass_after(k) - via_cdf).abs() < 1e-14);
        }
        let g = WeightModel::geometric(0.5).unwrap();
        assert!((g.tail_mass_after(3) - 0.125).abs() < 1e-15);
        // deep tails are summed relative to their first term
        let deep = m.tail_mass_after(250_000);
        let first = m.weight(250_001);
        assert!(deep > first && deep < 2000.0 * first);
    }

    #[test]
    fn sample_index_frequencies() {
        for m in [WeightModel::weibull(0.5).unwrap(), WeightModel::geometric(0.3).unwrap()] {
            let n = 1_000_000usize;
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut counts = [0u64; 20];
            for _ in 0..n {
                let u: f64 = rng.sample(rand::distr::Open01);
                let k = m.sample_index(u);
                if k <= 20 {
                    counts[k as usize - 1] += 1;
                }
            }
            for (i, &c) in counts.iter().enumerate() {
                let p = m.weight(i as u64 + 1);
                let se = (n as f64 * p * (1.0 - p)).sqrt();
                assert!((c as f64 - n as f64 * p).abs() <= 4.0 * se, "bin {}", i + 1);
            }
        }
    }

    #[test]
    fn counting_increment_trend() {
        // (rho(lambda t) - rho(t)) / ((log t)^beta ell(log t)) -> log lambda
        let m = WeightModel::weibull(0.5).unwrap();
        for lambda in [0.5f64, 2.0, 10.0] {
            let devs: Vec<(f64, f64)> = [20.0f64, 40.0, 80.0]
                .iter()
                .map(|&big_t| {
                    let inc = m.rho((big_t + lambda.ln()).exp()) as f64 - m.rho(big_t.exp()) as f64;
                    (big_t, inc / (2.0 * big_t) - lambda.ln())
                })
                .collect();
            let report = crate::stats::trend_diagnostic(&devs).unwrap();
            assert!(report.pass, "lambda={lambda}: {devs:?}");
        }
    }
}
