//! Truncated enumeration of generation-`j` box weights `p_r = p_{r_1} ... p_{r_j}`.
//!
//! Boxes are kept when `p_r >= eps`. All weights are stored as `-ln p_r`
//! (ascending, i.e. heaviest box first) since deep generations underflow.
//! The dropped mass is tracked exactly as a sum of nonnegative pieces, so
//! `kept_mass + tail_mass = 1` holds without cancellation.

pub mod cache;

use std::io::Write;

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, ln_gamma, log_within, CompensatedSum};
use crate::weights::WeightModel;

pub const DEFAULT_BOX_BUDGET: u64 = 100_000_000;

#[derive(Debug, Clone, Copy)]
pub struct EnumerationOptions {
    /// Maximum number of boxes in any one generation.
    pub budget: u64,
    /// Keep parent links (needed by the coupled simulator).
    pub ancestry: bool,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self {
            budget: DEFAULT_BOX_BUDGET,
            ancestry: false,
        }
    }
}

/// Per-box ancestry: `parent[i]` indexes the previous generation and
/// `child[i]` is the rank of the last letter among the kept base boxes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ancestry {
    pub parent: Vec<u32>,
    pub child: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct GenerationWeights {
    generation: usize,
    threshold: f64,
    log_weights: Vec<f64>,
    kept_mass: f64,
    tail_mass: f64,
    ancestry: Option<Ancestry>,
}

impl GenerationWeights {
    pub(crate) fn from_parts(
        generation: usize,
        threshold: f64,
        log_weights: Vec<f64>,
        kept_mass: f64,
        tail_mass: f64,
    ) -> Self {
        Self {
            generation,
            threshold,
            log_weights,
            kept_mass,
            tail_mass,
            ancestry: None,
        }
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// `-ln p_r` of every kept box, ascending.
    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn kept_mass(&self) -> f64 {
        self.kept_mass
    }

    /// Total weight of generation-`j` boxes below the threshold.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn ancestry(&self) -> Option<&Ancestry> {
        self.ancestry.as_ref()
    }

    /// `#{r : |r| = j, p_r >= 1/x}`. Fails when `1/x` lies below the
    /// threshold, where boxes may be missing from the enumeration.
    pub fn rho_j(&self, x: f64) -> Result<u64> {
        if !(x > 0.0) {
            return Ok(0);
        }
        let log_x = x.ln();
        if !log_within(log_x, -self.threshold.ln()) {
            return Err(Error::Truncated {
                inv_x: 1.0 / x,
                threshold: self.threshold,
            });
        }
        Ok(self.log_weights.partition_point(|&lw| log_within(lw, log_x)) as u64)
    }

    /// Plain CSV, header `log_weight`, one kept box per line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "log_weight")?;
        for lw in &self.log_weights {
            writeln!(out, "{lw:.16e}")?;
        }
        Ok(())
    }
}

/// Generations `1..=j_max` enumerated together, with parent links and the
/// rate at which each internal box loses balls to dropped children.
#[derive(Debug, Clone)]
pub struct GenerationChain {
    levels: Vec<GenerationWeights>,
    residual_rates: Vec<Vec<f64>>,
}

impl GenerationChain {
    pub fn enumerate(model: &WeightModel, j_max: usize, eps: f64, budget: u64) -> Result<Self> {
        let opts = EnumerationOptions { budget, ancestry: true };
        let mut e = Enumerator::new(model, eps, opts)?;
        let mut levels = vec![e.base_level()];
        let mut residual_rates = Vec::new();
        for _ in 1..j_max.max(1) {
            let (next, residual) = e.expand(levels.last().unwrap(), true)?;
            residual_rates.push(residual.expect("residuals requested"));
            levels.push(next);
        }
        Ok(Self { levels, residual_rates })
    }

    pub fn j_max(&self) -> usize {
        self.levels.len()
    }

    /// Generation `j` (1-based).
    pub fn level(&self, j: usize) -> &GenerationWeights {
        &self.levels[j - 1]
    }

    pub fn levels(&self) -> &[GenerationWeights] {
        &self.levels
    }

    /// For generation `j < j_max`: per box, the total weight of its children
    /// that fell below the threshold.
    pub fn residual_rates(&self, j: usize) -> &[f64] {
        &self.residual_rates[j - 1]
    }

    pub fn into_levels(self) -> Vec<GenerationWeights> {
        self.levels
    }
}

/// All generation-`j` boxes with `p_r >= eps`.
pub fn enumerate_generation(model: &WeightModel, j: usize, eps: f64) -> Result<GenerationWeights> {
    enumerate_generation_with(model, j, eps, EnumerationOptions::default())
}

pub fn enumerate_generation_with(
    model: &WeightModel,
    j: usize,
    eps: f64,
    opts: EnumerationOptions,
) -> Result<GenerationWeights> {
    if j == 0 {
        return Err(Error::Domain("generation must be at least 1".into()));
    }
    let mut e = Enumerator::new(model, eps, opts)?;
    let mut level = e.base_level();
    for _ in 1..j {
        level = e.expand(&level, false)?.0;
    }
    Ok(level)
}

/// Enumerates generation `j` deep enough that `t_max * tail_mass <= tol`,
/// which bounds the truncation error of every moment up to time `t_max`.
/// Starts from `eps = tol / (10 t_max)` and tightens using the observed tail.
pub fn enumerate_certified(
    model: &WeightModel,
    j: usize,
    t_max: f64,
    tol: f64,
    opts: EnumerationOptions,
) -> Result<GenerationWeights> {
    let mut eps = initial_threshold(model, t_max, tol)?;
    loop {
        let gw = enumerate_generation_with(model, j, eps, opts)?;
        if t_max * gw.tail_mass() <= tol {
            return Ok(gw);
        }
        eps = next_threshold(eps, t_max * gw.tail_mass(), tol)?;
    }
}

impl GenerationChain {
    /// Chain whose deepest generation satisfies `t_max * tail_mass <= tol`.
    pub fn certified(model: &WeightModel, j_max: usize, t_max: f64, tol: f64, budget: u64) -> Result<Self> {
        let mut eps = initial_threshold(model, t_max, tol)?;
        loop {
            let chain = Self::enumerate(model, j_max, eps, budget)?;
            let bound = t_max * chain.level(j_max).tail_mass();
            if bound <= tol {
                return Ok(chain);
            }
            eps = next_threshold(eps, bound, tol)?;
        }
    }
}

pub(crate) fn initial_threshold(model: &WeightModel, t_max: f64, tol: f64) -> Result<f64> {
    if !(t_max > 0.0 && tol > 0.0) {
        return Err(Error::Domain(format!(
            "need t_max > 0 and tol > 0, got {t_max:e} and {tol:e}"
        )));
    }
    let cap = 0.5 * (-model.log_weight(1)).exp();
    Ok((tol / (10.0 * t_max)).min(cap))
}

/// The tail scales roughly linearly in `eps` (up to log factors).
pub(crate) fn next_threshold(eps: f64, bound: f64, tol: f64) -> Result<f64> {
    let next = eps * (0.5 * tol / bound).min(0.1);
    if !(next > f64::MIN_POSITIVE) {
        return Err(Error::Numeric {
            reason: "cannot reach the requested truncation tolerance".into(),
            estimate: bound,
        });
    }
    Ok(next)
}

/// `(Gamma(beta+1))^j / Gamma(1 + j(beta+1)) * ell^j`, the leading
/// coefficient of `rho_j(e^T) / T^(j(beta+1))`.
pub fn rho_j_asymptotic_constant(beta: f64, ell_value: f64, j: usize) -> f64 {
    let j = j as f64;
    (j * ln_gamma(beta + 1.0) - ln_gamma(1.0 + j * (beta + 1.0))).exp() * ell_value.powf(j)
}

struct Enumerator {
    threshold: f64,
    log_limit: f64,
    opts: EnumerationOptions,
    /// Kept base boxes, ascending `-ln p`.
    base_lw: Vec<f64>,
    /// `suffix[m]` = mass of all base boxes after the first `m` kept ones.
    suffix: Vec<f64>,
}

impl Enumerator {
    fn new(model: &WeightModel, eps: f64, opts: EnumerationOptions) -> Result<Self> {
        let max_log = model.log_weight(1);
        let min_lw = if model.is_monotone() {
            max_log
        } else {
            (1..=model.support_len().unwrap_or(1))
                .map(|k| model.log_weight(k))
                .fold(f64::INFINITY, f64::min)
        };
        if !(eps > 0.0 && eps < (-min_lw).exp()) {
            return Err(Error::Domain(format!(
                "threshold eps = {eps:e} must lie in (0, max_k p_k = {:e})",
                (-min_lw).exp()
            )));
        }
        let log_limit = -eps.ln();

        let (base_lw, base_tail) = if model.is_monotone() {
            let mut lw = Vec::new();
            let mut k = 1u64;
            loop {
                let l = model.log_weight(k);
                if !log_within(l, log_limit) {
                    break;
                }
                if lw.len() as u64 >= opts.budget {
                    return Err(Error::Budget {
                        what: "generation boxes",
                        needed: lw.len() as u64 + 1,
                        budget: opts.budget,
                    });
                }
                lw.push(l);
                k += 1;
            }
            let tail = model.tail_mass_after(k - 1);
            (lw, tail)
        } else {
            let n = model.support_len().unwrap();
            let mut all: Vec<(f64, u64)> = (1..=n).map(|k| (model.log_weight(k), k)).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let split = all.partition_point(|(l, _)| log_within(*l, log_limit));
            let tail = compensated_sum(all[split..].iter().rev().map(|(l, _)| (-l).exp()));
            all.truncate(split);
            (all.into_iter().map(|(l, _)| l).collect(), tail)
        };

        let mut suffix = vec![0.0; base_lw.len() + 1];
        let mut acc = CompensatedSum::new();
        acc.add(base_tail);
        suffix[base_lw.len()] = acc.value();
        for m in (0..base_lw.len()).rev() {
            acc.add((-base_lw[m]).exp());
            suffix[m] = acc.value();
        }

        Ok(Self {
            threshold: eps,
            log_limit,
            opts,
            base_lw,
            suffix,
        })
    }

    fn base_level(&mut self) -> GenerationWeights {
        let kept = compensated_sum(self.base_lw.iter().map(|l| (-l).exp()));
        let ancestry = self.opts.ancestry.then(|| Ancestry {
            parent: Vec::new(),
            child: (0..self.base_lw.len() as u32).collect(),
        });
        GenerationWeights {
            generation: 1,
            threshold: self.threshold,
            log_weights: self.base_lw.clone(),
            kept_mass: kept,
            tail_mass: self.suffix[self.base_lw.len()],
            ancestry,
        }
    }

    /// Extends every box of `level` by each base child whose product stays
    /// above the threshold. Children are scanned in descending weight, so the
    /// scan stops at the first miss.
    fn expand(&self, level: &GenerationWeights, want_residuals: bool) -> Result<(GenerationWeights, Option<Vec<f64>>)> {
        let mut tail = CompensatedSum::new();
        tail.add(level.tail_mass);
        let mut residuals = want_residuals.then(|| Vec::with_capacity(level.len()));

        let mut lw_out: Vec<f64> = Vec::new();
        let mut links: Vec<(f64, u32, u32)> = Vec::new();
        for (r, &lw_r) in level.log_weights.iter().enumerate() {
            let m = if log_within(lw_r + self.base_lw[0], self.log_limit) {
                self.base_lw.partition_point(|&b| log_within(lw_r + b, self.log_limit))
            } else {
                0
            };
            let produced = if self.opts.ancestry { links.len() } else { lw_out.len() } as u64;
            if produced + m as u64 > self.opts.budget {
                return Err(Error::Budget {
                    what: "generation boxes",
                    needed: produced + m as u64,
                    budget: self.opts.budget,
                });
            }
            let p_r = (-lw_r).exp();
            let residual = p_r * self.suffix[m];
            tail.add(residual);
            if let Some(res) = residuals.as_mut() {
                res.push(residual);
            }
            if self.opts.ancestry {
                links.extend(
                    self.base_lw[..m]
                        .iter()
                        .enumerate()
                        .map(|(i, &b)| (lw_r + b, r as u32, i as u32)),
                );
            } else {
                lw_out.extend(self.base_lw[..m].iter().map(|&b| lw_r + b));
            }
        }

        let (log_weights, ancestry) = if self.opts.ancestry {
            links.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut lw = Vec::with_capacity(links.len());
            let mut anc = Ancestry {
                parent: Vec::with_capacity(links.len()),
                child: Vec::with_capacity(links.len()),
            };
            for (l, p, c) in links {
                lw.push(l);
                anc.parent.push(p);
                anc.child.push(c);
            }
            (lw, Some(anc))
        } else {
            lw_out.sort_unstable_by(f64::total_cmp);
            (lw_out, None)
        };

        let kept = compensated_sum(log_weights.iter().map(|l| (-l).exp()));
        Ok((
            GenerationWeights {
                generation: level.generation + 1,
                threshold: self.threshold,
                log_weights,
                kept_mass: kept,
                tail_mass: tail.value(),
                ancestry,
            },
            residuals,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Oracle: nested loops over index tuples of Geometric(1/2), p = 2^-(k1+...+kj).
    fn brute_geometric_half(j: usize, max_exp: u32) -> Vec<u32> {
        fn rec(j: usize, budget: u32, acc: u32, out: &mut Vec<u32>) {
            if j == 0 {
                out.push(acc);
                return;
            }
            for k in 1..=budget {
                rec(j - 1, budget - k, acc + k, out);
            }
        }
        let mut out = Vec::new();
        rec(j, max_exp, 0, &mut out);
        out.sort_unstable();
        out
    }

    #[test]
    fn geometric_pairs_example() {
        let m = WeightModel::geometric(0.5).unwrap();
        let gw = enumerate_generation(&m, 2, 2f64.powi(-4)).unwrap();
        assert_eq!(gw.len(), 6);
        let exps: Vec<i64> = gw
            .log_weights()
            .iter()
            .map(|l| (l / std::f64::consts::LN_2).round() as i64)
            .collect();
        assert_eq!(exps, vec![2, 3, 3, 4, 4, 4]);
        assert_eq!(gw.rho_j(16.0).unwrap(), 6);
    }

    #[test]
    fn matches_cartesian_oracle() {
        let m = WeightModel::geometric(0.5).unwrap();
        for j in 1..=3 {
            let gw = enumerate_generation(&m, j, 2f64.powi(-10)).unwrap();
            let oracle = brute_geometric_half(j, 10);
            let got: Vec<u32> = gw
                .log_weights()
                .iter()
                .map(|l| (l / std::f64::consts::LN_2).round() as u32)
                .collect();
            assert_eq!(got, oracle, "j={j}");
            for (l, e) in gw.log_weights().iter().zip(&oracle) {
                assert!((l - *e as f64 * std::f64::consts::LN_2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn first_generation_is_base_filter() {
        let m = WeightModel::weibull(0.5).unwrap();
        let eps = 1e-6;
        let gw = enumerate_generation(&m, 1, eps).unwrap();
        let expected: Vec<f64> = (1..100_000u64)
            .map(|k| m.log_weight(k))
            .filter(|l| (-l).exp() >= eps)
            .collect();
        assert_eq!(gw.log_weights(), &expected[..]);
    }

    #[test]
    fn sumset_property() {
        let m = WeightModel::weibull(0.5).unwrap();
        let eps = (-14f64).exp();
        let g1 = enumerate_generation(&m, 1, eps).unwrap();
        let g2 = enumerate_generation(&m, 2, eps).unwrap();
        let g3 = enumerate_generation(&m, 3, eps).unwrap();
        for (prev, next) in [(&g1, &g2), (&g2, &g3)] {
            let mut sumset: Vec<f64> = prev
                .log_weights()
                .iter()
                .flat_map(|a| g1.log_weights().iter().map(move |b| a + b))
                .filter(|l| log_within(*l, -eps.ln()))
                .collect();
            sumset.sort_by(f64::total_cmp);
            assert_eq!(sumset.len(), next.len());
            for (a, b) in sumset.iter().zip(next.log_weights()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mass_accounting() {
        for m in [
            WeightModel::weibull(0.5).unwrap(),
            WeightModel::geometric(0.3).unwrap(),
            WeightModel::custom(vec![0.4, 0.1, 0.3, 0.2]).unwrap(),
        ] {
            for j in 1..=3 {
                let mut last_tail = f64::INFINITY;
                for eps in [1e-2, 1e-4, 1e-6, 1e-8] {
                    let gw = enumerate_generation(&m, j, eps).unwrap();
                    assert!((gw.kept_mass() + gw.tail_mass() - 1.0).abs() < 1e-12);
                    assert!(gw.tail_mass() >= 0.0);
                    assert!(gw.tail_mass() <= last_tail);
                    last_tail = gw.tail_mass();
                    assert!(gw.log_weights().iter().all(|&l| log_within(l, -eps.ln())));
                }
            }
        }
    }

    #[test]
    fn weibull_count_matches_rho_j() {
        let m = WeightModel::weibull(0.5).unwrap();
        let gw = enumerate_generation(&m, 2, (-30f64).exp()).unwrap();
        assert_eq!(gw.len() as u64, gw.rho_j(30f64.exp()).unwrap());
    }

    #[test]
    fn rho_j_errors_below_threshold() {
        let m = WeightModel::geometric(0.5).unwrap();
        let gw = enumerate_generation(&m, 2, 2f64.powi(-4)).unwrap();
        assert!(matches!(gw.rho_j(1000.0), Err(Error::Truncated { .. })));
        assert_eq!(gw.rho_j(1.0).unwrap(), 0);
    }

    #[test]
    fn rho_j_counts_pairs_by_brute_force() {
        let m = WeightModel::weibull(0.5).unwrap();
        let eps = (-12f64).exp();
        let g2 = enumerate_generation(&m, 2, eps).unwrap();
        for x in [5.0f64, 50.0, 1e3, 1e4, 1e5] {
            let mut brute = 0u64;
            for a in 1..2000u64 {
                for b in 1..2000u64 {
                    if m.weight(a) * m.weight(b) >= 1.0 / x {
                        brute += 1;
                    }
                }
            }
            assert_eq!(g2.rho_j(x).unwrap(), brute, "x={x}");
        }
    }

    #[test]
    fn asymptotic_constants() {
        assert!((rho_j_asymptotic_constant(0.0, 1.0, 1) - 1.0).abs() < 1e-14);
        assert!((rho_j_asymptotic_constant(1.0, 2.0, 2) - 1.0 / 6.0).abs() < 1e-14);
        assert!((rho_j_asymptotic_constant(1.0, 2.0, 1) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rho_2_ratio_trend() {
        let m = WeightModel::weibull(0.5).unwrap();
        let c = rho_j_asymptotic_constant(1.0, 2.0, 2);
        let mut devs = Vec::new();
        for big_t in [10.0f64, 20.0, 40.0] {
            let gw = enumerate_generation(&m, 2, (-big_t).exp()).unwrap();
            let ratio = gw.rho_j(big_t.exp()).unwrap() as f64 / (c * big_t.powi(4));
            devs.push((big_t, ratio - 1.0));
        }
        assert!(crate::stats::trend_diagnostic(&devs).unwrap().pass, "{devs:?}");
    }

    #[test]
    fn budget_is_enforced() {
        let m = WeightModel::weibull(0.5).unwrap();
        let opts = EnumerationOptions {
            budget: 100,
            ancestry: false,
        };
        let err = enumerate_generation_with(&m, 2, 1e-8, opts).unwrap_err();
        assert!(matches!(err, Error::Budget { budget: 100, .. }), "{err}");
    }

    #[test]
    fn rejects_bad_threshold() {
        let m = WeightModel::geometric(0.5).unwrap();
        assert!(enumerate_generation(&m, 1, 0.6).is_err());
        assert!(enumerate_generation(&m, 1, 0.0).is_err());
        assert!(enumerate_generation(&m, 0, 0.1).is_err());
    }

    #[test]
    fn chain_links_are_consistent() {
        let m = WeightModel::weibull(0.5).unwrap();
        let chain = GenerationChain::enumerate(&m, 3, 1e-7, DEFAULT_BOX_BUDGET).unwrap();
        let base = chain.level(1).log_weights().to_vec();
        for j in 2..=3 {
            let (prev, cur) = (chain.level(j - 1), chain.level(j));
            let anc = cur.ancestry().unwrap();
            for i in 0..cur.len() {
                let want = prev.log_weights()[anc.parent[i] as usize] + base[anc.child[i] as usize];
                assert!((cur.log_weights()[i] - want).abs() < 1e-12);
            }
            // parent weight = kept children + residual
            let rates = chain.residual_rates(j - 1);
            let mut child_mass = vec![0.0; prev.len()];
            for i in 0..cur.len() {
                child_mass[anc.parent[i] as usize] += (-cur.log_weights()[i]).exp();
            }
            for r in 0..prev.len() {
                let p = (-prev.log_weights()[r]).exp();
                assert!((child_mass[r] + rates[r] - p).abs() <= 1e-12 * p);
            }
        }
    }

    #[test]
    fn certified_enumeration_meets_tolerance() {
        let m = WeightModel::weibull(0.5).unwrap();
        let t = 20f64.exp();
        let gw = enumerate_certified(&m, 2, t, 1e-3, EnumerationOptions::default()).unwrap();
        assert!(t * gw.tail_mass() <= 1e-3);
        let chain = GenerationChain::certified(&m, 2, t, 1e-3, DEFAULT_BOX_BUDGET).unwrap();
        assert!(t * chain.level(2).tail_mass() <= 1e-3);
    }

    #[test]
    fn csv_export() {
        let m = WeightModel::geometric(0.5).unwrap();
        let gw = enumerate_generation(&m, 1, 0.2).unwrap();
        let mut buf = Vec::new();
        gw.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "log_weight");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1].parse::<f64>().unwrap(), gw.log_weights()[0]);
    }
}
