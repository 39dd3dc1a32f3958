//! Coupled first-hit times over a truncated box tree.
//!
//! Balls arrive as a unit-rate Poisson process, so box `r` is first hit at
//! `T_r ~ Exp(p_r)` and a parent is hit exactly when its first child is. Dropped
//! children are folded into one residual clock per internal box with rate
//! `p_r - sum(kept children)`, which keeps the joint law of kept boxes exact.
//!
//! Times beyond a horizon are never materialized: hit boxes are found by
//! geometric skipping over the (nonincreasing) hit probabilities, so a replica
//! costs about as much as the number of boxes it actually hits.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::genweights::GenerationChain;
use crate::rng::{exponential, geometric_skip, open_uniform};

/// Hit times of one replica, censored at `horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct HittingTimes {
    horizon: f64,
    /// Per generation: `(box index, time)` for boxes hit by the horizon,
    /// ordered by index.
    hits: Vec<Vec<(u32, f64)>>,
    /// Per internal generation: the residual clock of every box (`+inf` when
    /// it rings after the horizon).
    residual: Vec<Vec<f64>>,
}

impl HittingTimes {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn j_max(&self) -> usize {
        self.hits.len()
    }

    /// Hit boxes of generation `j` (1-based).
    pub fn hits(&self, j: usize) -> &[(u32, f64)] {
        &self.hits[j - 1]
    }

    /// Residual clocks of generation `j < j_max`.
    pub fn residual(&self, j: usize) -> &[f64] {
        &self.residual[j - 1]
    }

    /// Dense time vector of generation `j`, `+inf` for boxes not hit.
    pub fn dense(&self, j: usize, len: usize) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; len];
        for &(i, t) in self.hits(j) {
            out[i as usize] = t;
        }
        out
    }
}

/// Samples hit times for a chain built with ancestry.
pub struct TreeSimulator<'a> {
    chain: &'a GenerationChain,
}

impl<'a> TreeSimulator<'a> {
    /// Checks parent links and that every residual rate is nonnegative.
    pub fn new(chain: &'a GenerationChain) -> Result<Self> {
        for j in 2..=chain.j_max() {
            let level = chain.level(j);
            let prev = chain.level(j - 1);
            let anc = level
                .ancestry()
                .ok_or_else(|| Error::Consistency(format!("generation {j} has no parent links")))?;
            if anc.parent.len() != level.len() {
                return Err(Error::Consistency(format!(
                    "generation {j}: {} parent links for {} boxes",
                    anc.parent.len(),
                    level.len()
                )));
            }
            if anc.parent.iter().any(|&p| p as usize >= prev.len()) {
                return Err(Error::Consistency(format!("generation {j}: parent index out of range")));
            }
            let rates = chain.residual_rates(j - 1);
            if rates.len() != prev.len() {
                return Err(Error::Consistency(format!(
                    "generation {}: {} residual rates for {} boxes",
                    j - 1,
                    rates.len(),
                    prev.len()
                )));
            }
            if let Some(r) = rates.iter().find(|r| !(**r >= 0.0)) {
                return Err(Error::Consistency(format!(
                    "negative residual rate {r:e} in generation {}",
                    j - 1
                )));
            }
        }
        Ok(Self { chain })
    }

    pub fn chain(&self) -> &GenerationChain {
        self.chain
    }

    pub fn sample<R: RngCore + ?Sized>(&self, horizon: f64, rng: &mut R) -> HittingTimes {
        let j_max = self.chain.j_max();
        let mut hits: Vec<Vec<(u32, f64)>> = vec![Vec::new(); j_max];
        let mut residual: Vec<Vec<f64>> = vec![Vec::new(); j_max.saturating_sub(1)];

        let deepest = self.chain.level(j_max).log_weights();
        hits[j_max - 1] = sample_level(
            rng,
            horizon,
            deepest.len(),
            |k| (-deepest[k]).exp(),
            |k| (-deepest[k]).exp(),
        );

        for j in (1..j_max).rev() {
            let lw = self.chain.level(j).log_weights();
            let rates = self.chain.residual_rates(j);
            let parents = &self.chain.level(j + 1).ancestry().unwrap().parent;

            let mut first = vec![f64::INFINITY; lw.len()];
            for &(c, t) in &hits[j] {
                let p = parents[c as usize] as usize;
                if t < first[p] {
                    first[p] = t;
                }
            }
            let mut res = vec![f64::INFINITY; lw.len()];
            for (k, t) in sample_level(rng, horizon, lw.len(), |k| (-lw[k]).exp(), |k| rates[k]) {
                res[k as usize] = t;
            }
            hits[j - 1] = first
                .iter()
                .zip(&res)
                .enumerate()
                .filter_map(|(k, (&a, &b))| {
                    let t = a.min(b);
                    t.is_finite().then_some((k as u32, t))
                })
                .collect();
            residual[j - 1] = res;
        }

        HittingTimes {
            horizon,
            hits,
            residual,
        }
    }
}

/// Convenience wrapper: validates the chain and draws one replica.
pub fn simulate_hitting_times<R: RngCore + ?Sized>(
    chain: &GenerationChain,
    horizon: f64,
    rng: &mut R,
) -> Result<HittingTimes> {
    Ok(TreeSimulator::new(chain)?.sample(horizon, rng))
}

/// Draws the clocks with rates `rate(k)` that ring by `horizon`. `envelope(k)`
/// must dominate `rate(k)` and be nonincreasing in `k`.
fn sample_level<R: RngCore + ?Sized>(
    rng: &mut R,
    horizon: f64,
    n: usize,
    envelope: impl Fn(usize) -> f64,
    rate: impl Fn(usize) -> f64,
) -> Vec<(u32, f64)> {
    let mut out = Vec::new();
    if horizon.is_infinite() {
        for k in 0..n {
            let r = rate(k);
            if r > 0.0 {
                out.push((k as u32, exponential(rng, r)));
            }
        }
        return out;
    }
    let hit_prob = |r: f64| -(-r * horizon).exp_m1();
    let mut i = 0usize;
    let mut bound = match n {
        0 => return out,
        _ => hit_prob(envelope(0)),
    };
    while i < n && bound > 0.0 {
        let skip = geometric_skip(rng, bound);
        if skip >= (n - i) as u64 {
            break;
        }
        let k = i + skip as usize;
        let r = rate(k);
        let q = hit_prob(r);
        if q > 0.0 && open_uniform(rng) * bound < q {
            // Exp(r) conditioned on ringing by the horizon.
            let t = -(-open_uniform(rng) * q).ln_1p() / r;
            out.push((k as u32, t.min(horizon)));
        }
        bound = hit_prob(envelope(k));
        i = k + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genweights::DEFAULT_BOX_BUDGET;
    use crate::rng::replica_stream;
    use crate::stats::{ks_statistic, ReferenceCdf};
    use crate::weights::WeightModel;

    fn chain(eps: f64) -> GenerationChain {
        GenerationChain::enumerate(&WeightModel::weibull(0.5).unwrap(), 2, eps, DEFAULT_BOX_BUDGET).unwrap()
    }

    #[test]
    fn parent_is_min_of_children_and_residual() {
        let c = chain(1e-5);
        let sim = TreeSimulator::new(&c).unwrap();
        for (seed, h) in [(1u64, f64::INFINITY), (2, 50.0), (3, 5000.0)] {
            let ht = sim.sample(h, &mut replica_stream(seed, 0));
            let child = ht.dense(2, c.level(2).len());
            let parent = ht.dense(1, c.level(1).len());
            let mut mins = ht.residual(1).to_vec();
            for (i, &p) in c.level(2).ancestry().unwrap().parent.iter().enumerate() {
                mins[p as usize] = mins[p as usize].min(child[i]);
            }
            assert_eq!(parent, mins);
            assert!(ht.hits(2).iter().all(|&(_, t)| t > 0.0 && t <= h));
        }
    }

    #[test]
    fn full_residual_when_nothing_kept() {
        // at a coarse threshold the light first-generation boxes keep no children
        let c = chain(1e-2);
        let rates = c.residual_rates(1);
        let lw = c.level(1).log_weights();
        let last = lw.len() - 1;
        assert!((rates[last] - (-lw[last]).exp()).abs() < 1e-15);
    }

    #[test]
    fn marginal_law_is_exponential() {
        let c = chain(1e-4);
        let sim = TreeSimulator::new(&c).unwrap();
        let picks = [(1usize, 0usize), (1, 3), (2, 0), (2, 5), (2, 40)];
        let mut samples = vec![Vec::new(); picks.len()];
        for rep in 0..20_000u64 {
            let ht = sim.sample(f64::INFINITY, &mut replica_stream(77, rep));
            for (s, &(j, k)) in samples.iter_mut().zip(&picks) {
                let t = ht.hits(j).iter().find(|h| h.0 as usize == k).unwrap().1;
                s.push(t);
            }
        }
        for (s, &(j, k)) in samples.iter().zip(&picks) {
            let rate = (-c.level(j).log_weights()[k]).exp();
            let r = ks_statistic(s, ReferenceCdf::Exponential { rate }).unwrap();
            assert!(r.p_value > 0.001, "box ({j},{k}) p={}", r.p_value);
        }
    }

    #[test]
    fn censoring_matches_full_draw_in_law() {
        // P(hit by h) for a mid-weight box, censored sampler vs exact
        let c = chain(1e-5);
        let sim = TreeSimulator::new(&c).unwrap();
        let h = 200.0;
        let k = 30usize;
        let p = (-c.level(2).log_weights()[k]).exp();
        let n = 40_000u64;
        let hits = (0..n)
            .filter(|&rep| {
                let ht = sim.sample(h, &mut replica_stream(5, rep));
                ht.hits(2).iter().any(|x| x.0 as usize == k)
            })
            .count() as f64;
        let q = 1.0 - (-p * h).exp();
        let se = (q * (1.0 - q) / n as f64).sqrt();
        assert!((hits / n as f64 - q).abs() < 4.0 * se, "{} vs {q}", hits / n as f64);
    }

    #[test]
    fn same_seed_same_times() {
        let c = chain(1e-5);
        let sim = TreeSimulator::new(&c).unwrap();
        let a = sim.sample(1000.0, &mut replica_stream(3, 8));
        let b = sim.sample(1000.0, &mut replica_stream(3, 8));
        assert_eq!(a, b);
    }
}
