//! Exact (truncated, error-bounded) moments of the generation-`j` occupancy
//! counts and their asymptotic constants.
//!
//! Every truncated quantity is returned as a [`Bounded`] whose `bound` is a
//! certified upper bound on the contribution of the dropped boxes.

use std::f64::consts::LN_2;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, HypothesisViolated, Result};
use crate::genweights::GenerationWeights;
use crate::numeric::{compensated_sum, ln_gamma, CompensatedSum};
use crate::weights::WeightModel;

/// Boxes per parallel chunk when summing over a generation.
const CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounded {
    pub value: f64,
    /// Upper bound on `|exact - value|`.
    pub bound: f64,
}

/// Sums `f(-ln p_r)` over the kept boxes in descending-weight order. The
/// chunking is fixed so the result does not depend on the thread count.
fn sum_over(gw: &GenerationWeights, f: impl Fn(f64) -> f64 + Sync) -> f64 {
    let lw = gw.log_weights();
    if lw.len() <= CHUNK {
        return compensated_sum(lw.iter().map(|&l| f(l)));
    }
    let parts: Vec<CompensatedSum> = lw
        .par_chunks(CHUNK)
        .map(|c| c.iter().map(|&l| f(l)).collect())
        .collect();
    let mut acc = CompensatedSum::new();
    for p in &parts {
        acc.merge(p);
    }
    acc.value()
}

/// `1 - exp(-t p)` with `ln p = -lw`, accurate when `t p` is tiny.
#[inline]
fn one_minus_exp(ln_t: f64, lw: f64) -> f64 {
    -(-(ln_t - lw).exp()).exp_m1()
}

/// `Phi_j(t) = sum_r (1 - exp(-t p_r))`, the mean number of occupied boxes.
pub fn phi(gw: &GenerationWeights, t: f64) -> Bounded {
    if !(t > 0.0) {
        return Bounded { value: 0.0, bound: 0.0 };
    }
    let ln_t = t.ln();
    Bounded {
        value: sum_over(gw, |lw| one_minus_exp(ln_t, lw)),
        bound: t * gw.tail_mass(),
    }
}

/// `Phi_j'(t) = sum_r p_r exp(-t p_r)`.
pub fn phi_prime(gw: &GenerationWeights, t: f64) -> Bounded {
    let t = t.max(0.0);
    Bounded {
        value: sum_over(gw, |lw| (-lw - t * (-lw).exp()).exp()),
        bound: gw.tail_mass(),
    }
}

/// `Cov(K_s, K_t) = Phi(s + t) - Phi(max(s, t))`.
pub fn cov_same_gen(gw: &GenerationWeights, s: f64, t: f64) -> Bounded {
    if !(s > 0.0 && t > 0.0) {
        return Bounded { value: 0.0, bound: 0.0 };
    }
    let hi = phi(gw, s + t).value;
    let lo = phi(gw, s.max(t)).value;
    Bounded {
        value: hi - lo,
        bound: s.min(t) * gw.tail_mass(),
    }
}

/// `Var K_t = Phi(2t) - Phi(t)`.
pub fn variance(gw: &GenerationWeights, t: f64) -> Bounded {
    cov_same_gen(gw, t, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossCov {
    pub value: f64,
    pub bound: f64,
    /// `t * Phi_i'(s)`, an upper bound on the exact covariance.
    pub upper: f64,
}

/// `Cov(K^(i)_s, K^(j)_t)` for `j > i`, given generation `i` and generation
/// `j - i` (the subtree below each generation-`i` box is a scaled copy of it):
///
/// `sum_{r1} exp(-s q1) [Phi_{j-i}(t q1) - Phi_{j-i}((t-s)_+ q1)]`.
pub fn cov_cross_gen(gw_i: &GenerationWeights, gw_diff: &GenerationWeights, s: f64, t: f64) -> CrossCov {
    if !(s > 0.0 && t > 0.0) {
        return CrossCov {
            value: 0.0,
            bound: 0.0,
            upper: 0.0,
        };
    }
    let lag = (t - s).max(0.0);
    let (ln_t, ln_lag) = (t.ln(), lag.ln());
    let inner = gw_diff.log_weights();
    let terms: Vec<f64> = gw_i
        .log_weights()
        .par_iter()
        .map(|&l1| {
            let outer = (-s * (-l1).exp()).exp();
            if outer == 0.0 {
                return 0.0;
            }
            let hi = ln_t - l1;
            let lo = ln_lag - l1;
            let inner_sum = compensated_sum(inner.iter().map(|&l2| {
                let a = one_minus_exp(hi, l2);
                let b = if lag > 0.0 { one_minus_exp(lo, l2) } else { 0.0 };
                a - b
            }));
            outer * inner_sum
        })
        .collect();
    CrossCov {
        value: compensated_sum(terms),
        bound: s.min(t) * (gw_i.tail_mass() + gw_i.kept_mass() * gw_diff.tail_mass()),
        upper: t * phi_prime(gw_i, s).value,
    }
}

/// `sum_r exp(-a |t + ln p_r|)`.
///
/// The bound `e^(a t) eps^(a-1) tail` holds for `a >= 1` and `t <= -ln eps`;
/// otherwise no certified bound is available and it is infinite.
pub fn exp_abs_sum(gw: &GenerationWeights, a: f64, t: f64) -> Bounded {
    let value = sum_over(gw, |lw| (-a * (t - lw).abs()).exp());
    let log_limit = -gw.threshold().ln();
    let bound = if a >= 1.0 && t <= log_limit {
        (a * t + (a - 1.0) * gw.threshold().ln()).exp() * gw.tail_mass()
    } else {
        f64::INFINITY
    };
    Bounded { value, bound }
}

/// `Gamma(beta+1)^j / Gamma(j(beta+1)) * T^(j beta + j - 1) * ell^j`, the
/// leading term of `Phi_j(lambda e^T) - Phi_j(e^T)` per unit `ln lambda`.
pub fn auxiliary_f(beta: f64, ell_value: f64, j: usize, big_t: f64) -> f64 {
    let jf = j as f64;
    let log_c = jf * ln_gamma(beta + 1.0) - ln_gamma(jf * (beta + 1.0));
    (log_c + (jf * beta + jf - 1.0) * big_t.ln()).exp() * ell_value.powf(jf)
}

/// Leading asymptote of `Var K^(j)_{e^T}`.
pub fn var_asymptotic(beta: f64, ell_value: f64, j: usize, big_t: f64) -> f64 {
    LN_2 * auxiliary_f(beta, ell_value, j, big_t)
}

/// [`var_asymptotic`] for a model, or the reason it does not apply.
pub fn var_asymptotic_for(model: &WeightModel, j: usize, big_t: f64) -> Result<f64, HypothesisViolated> {
    let d = model.asymptotics()?;
    Ok(var_asymptotic(d.beta, d.ell.eval(big_t), j, big_t))
}

/// `E Z(u) Z(v) = ln(1 + e^-|u-v|) / ln 2`.
pub fn limit_cov(u: f64, v: f64) -> f64 {
    (-(u - v).abs()).exp().ln_1p() / LN_2
}

/// `Phi_j` and `Var K^(j)` on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub generation: usize,
    pub time_grid: Vec<f64>,
    pub phi: Vec<f64>,
    pub var: Vec<f64>,
    pub trunc_error_bound: Vec<f64>,
}

impl MomentTable {
    /// The grid is sorted and deduplicated.
    pub fn build(gw: &GenerationWeights, times: &[f64]) -> Result<Self> {
        if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(Error::Domain("moment grid times must be finite and nonnegative".into()));
        }
        let mut grid = times.to_vec();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let rows: Vec<(f64, f64, f64)> = grid
            .iter()
            .map(|&t| {
                let p = phi(gw, t);
                let v = variance(gw, t);
                (p.value, v.value, p.bound.max(v.bound))
            })
            .collect();
        Ok(Self {
            generation: gw.generation(),
            time_grid: grid,
            phi: rows.iter().map(|r| r.0).collect(),
            var: rows.iter().map(|r| r.1).collect(),
            trunc_error_bound: rows.iter().map(|r| r.2).collect(),
        })
    }

    /// Grid for normalizing counts at `e^(T+u)`: every `e^(T+u)` plus `e^T`.
    pub fn for_log_grid(gw: &GenerationWeights, t_center: f64, u_grid: &[f64]) -> Result<Self> {
        let mut times: Vec<f64> = u_grid.iter().map(|u| (t_center + u).exp()).collect();
        times.push(t_center.exp());
        Self::build(gw, &times)
    }

    fn index_of(&self, t: f64) -> Result<usize> {
        let i = self.time_grid.partition_point(|&g| g < t * (1.0 - 1e-12));
        match self.time_grid.get(i) {
            Some(&g) if (g - t).abs() <= 1e-12 * t.abs().max(f64::MIN_POSITIVE) => Ok(i),
            _ => Err(Error::Coverage(t)),
        }
    }

    pub fn phi_at(&self, t: f64) -> Result<f64> {
        Ok(self.phi[self.index_of(t)?])
    }

    pub fn var_at(&self, t: f64) -> Result<f64> {
        Ok(self.var[self.index_of(t)?])
    }

    /// Columns `t,phi,var,trunc_bound`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,phi,var,trunc_bound")?;
        for i in 0..self.time_grid.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.time_grid[i], self.phi[i], self.var[i], self.trunc_error_bound[i]
            )?;
        }
        Ok(())
    }
}

/// One point of an asymptotic-ratio diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    #[serde(rename = "T")]
    pub big_t: f64,
    pub ratio: f64,
    pub deviation: f64,
}

impl RatioPoint {
    pub fn new(big_t: f64, ratio: f64) -> Self {
        Self {
            big_t,
            ratio,
            deviation: ratio - 1.0,
        }
    }

    pub fn as_pair(&self) -> (f64, f64) {
        (self.big_t, self.deviation)
    }
}
