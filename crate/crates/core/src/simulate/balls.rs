//! Direct ball throwing: every ball picks an iid index path
//! `(i_1, ..., i_jmax)` and occupies one box per generation.
//!
//! Distinct boxes are counted through 128-bit prefix hashes. For `m` boxes the
//! collision probability is below `m^2 / 2^129`, i.e. under `1e-20` for the
//! 10^8-box budget.

use std::collections::HashSet;
use std::hash::{BuildHasherDefault, Hasher};

use rand::RngCore;

use crate::error::{Error, Result};
use crate::rng::{open_uniform, poisson};
use crate::weights::WeightModel;

pub const DEFAULT_BALL_BUDGET: u64 = 100_000_000;

/// The keys are already uniform hashes; use their low bits directly.
#[derive(Default)]
struct PassThrough(u64);

impl Hasher for PassThrough {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0 << 8) | b as u64;
        }
    }

    fn write_u128(&mut self, v: u128) {
        self.0 = v as u64;
    }
}

type PrefixSet = HashSet<u128, BuildHasherDefault<PassThrough>>;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Extends a prefix hash by one more index.
#[inline]
fn extend(h: u128, index: u64) -> u128 {
    let hi = (h >> 64) as u64;
    let lo = h as u64;
    let a = mix64(lo ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ hi.rotate_left(17));
    let b = mix64(hi.wrapping_add(index).wrapping_add(0xd1b5_4a32_d192_ed03) ^ lo.rotate_left(41));
    ((b as u128) << 64) | a as u128
}

/// Occupied-box counts after exactly `n` balls, one entry per generation.
pub fn simulate_balls<R: RngCore + ?Sized>(model: &WeightModel, n: u64, j_max: usize, rng: &mut R) -> Result<Vec<u64>> {
    Ok(
        simulate_balls_checkpoints(model, &[n], j_max, DEFAULT_BALL_BUDGET, rng)?
            .into_iter()
            .map(|c| c[0])
            .collect(),
    )
}

/// Counts `[j][c]` after `checkpoints[c]` balls (checkpoints nondecreasing).
pub fn simulate_balls_checkpoints<R: RngCore + ?Sized>(
    model: &WeightModel,
    checkpoints: &[u64],
    j_max: usize,
    budget: u64,
    rng: &mut R,
) -> Result<Vec<Vec<u64>>> {
    if j_max == 0 {
        return Err(Error::Domain("j_max must be at least 1".into()));
    }
    if checkpoints.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Domain("ball checkpoints must be nondecreasing".into()));
    }
    let n = checkpoints.last().copied().unwrap_or(0);
    let needed = n.saturating_mul(j_max as u64);
    if needed > budget {
        return Err(Error::Budget {
            what: "ball path entries",
            needed,
            budget,
        });
    }
    let mut sets: Vec<PrefixSet> = (0..j_max)
        .map(|_| PrefixSet::with_capacity_and_hasher(n.min(1 << 20) as usize, Default::default()))
        .collect();
    let mut out = vec![Vec::with_capacity(checkpoints.len()); j_max];
    let mut next = 0usize;
    let record = |sets: &[PrefixSet], out: &mut [Vec<u64>], thrown: u64, next: &mut usize| {
        while *next < checkpoints.len() && checkpoints[*next] == thrown {
            for (o, s) in out.iter_mut().zip(sets) {
                o.push(s.len() as u64);
            }
            *next += 1;
        }
    };
    record(&sets, &mut out, 0, &mut next);
    for ball in 1..=n {
        let mut h: u128 = 0;
        for set in sets.iter_mut() {
            let k = model.sample_index(open_uniform(rng));
            h = extend(h, k);
            set.insert(h);
        }
        record(&sets, &mut out, ball, &mut next);
    }
    Ok(out)
}

/// Ball throwing with a Poisson(`t`) number of balls, i.e. the Poissonized
/// scheme observed at time `t`.
pub fn simulate_poissonized_balls<R: rand::Rng + ?Sized>(
    model: &WeightModel,
    t: f64,
    j_max: usize,
    rng: &mut R,
) -> Result<Vec<u64>> {
    let n = poisson(rng, t);
    simulate_balls(model, n, j_max, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_stream;

    #[test]
    fn one_ball_occupies_one_box_per_generation() {
        let m = WeightModel::weibull(0.5).unwrap();
        let c = simulate_balls(&m, 1, 4, &mut replica_stream(1, 0)).unwrap();
        assert_eq!(c, vec![1, 1, 1, 1]);
    }

    #[test]
    fn nesting_holds() {
        let m = WeightModel::geometric(0.3).unwrap();
        for rep in 0..50 {
            let c = simulate_balls(&m, 500, 3, &mut replica_stream(2, rep)).unwrap();
            assert!(c[0] <= c[1] && c[1] <= c[2] && c[2] <= 500);
        }
    }

    #[test]
    fn mean_matches_binomial_occupancy() {
        let m = WeightModel::geometric(0.5).unwrap();
        let n = 100u64;
        let reps = 100_000u64;
        let (mut s, mut s2) = (0.0, 0.0);
        for rep in 0..reps {
            let k = simulate_balls(&m, n, 2, &mut replica_stream(3, rep)).unwrap()[0] as f64;
            s += k;
            s2 += k * k;
        }
        let mean = s / reps as f64;
        let sd = (s2 / reps as f64 - mean * mean).sqrt();
        let oracle: f64 = (1..200).map(|k| 1.0 - (1.0 - 0.5f64.powi(k)).powi(n as i32)).sum();
        assert!(
            (mean - oracle).abs() < 4.0 * sd / (reps as f64).sqrt(),
            "{mean} vs {oracle}"
        );
    }

    #[test]
    fn checkpoints_are_prefixes_of_one_run() {
        let m = WeightModel::weibull(0.5).unwrap();
        let a = simulate_balls_checkpoints(&m, &[10, 100, 1000], 2, DEFAULT_BALL_BUDGET, &mut replica_stream(4, 0))
            .unwrap();
        let b = simulate_balls(&m, 1000, 2, &mut replica_stream(4, 0)).unwrap();
        assert_eq!(a[0][2], b[0]);
        assert_eq!(a[1][2], b[1]);
        assert!(a[0].windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn budget_and_shape_errors() {
        let m = WeightModel::weibull(0.5).unwrap();
        let err = simulate_balls_checkpoints(&m, &[1000], 2, 100, &mut replica_stream(5, 0)).unwrap_err();
        assert!(matches!(err, Error::Budget { budget: 100, .. }));
        assert!(simulate_balls(&m, 3, 0, &mut replica_stream(5, 0)).is_err());
    }

    #[test]
    fn hash_extension_separates_paths() {
        let mut seen = std::collections::HashSet::new();
        for a in 1..200u64 {
            for b in 1..200u64 {
                assert!(seen.insert(extend(extend(0, a), b)));
            }
        }
        assert_ne!(extend(extend(0, 1), 2), extend(extend(0, 2), 1));
    }
}
