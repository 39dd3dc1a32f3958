//! Per-replica random streams and the few variate transforms used by the
//! simulators.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Independent stream number `replica` under `master`; the same pair always
/// yields the same sequence regardless of which thread runs it.
pub fn replica_stream(master: u64, replica: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(replica);
    rng
}

/// Uniform on the open interval (0,1), 53-bit resolution.
#[inline]
pub fn open_uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// `Exp(rate)` by inversion; `+inf` for rate 0.
#[inline]
pub fn exponential<R: RngCore + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    -open_uniform(rng).ln() / rate
}

/// Number of failures before the first success in Bernoulli(`q`) trials.
/// Saturates at `u64::MAX` when `q` is too small to matter.
#[inline]
pub fn geometric_skip<R: RngCore + ?Sized>(rng: &mut R, q: f64) -> u64 {
    if q >= 1.0 {
        return 0;
    }
    let k = open_uniform(rng).ln() / (-q).ln_1p();
    if k >= u64::MAX as f64 {
        u64::MAX
    } else {
        k as u64
    }
}

/// Poisson count with mean `mean`, via `rand_distr`.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = rand_distr::Poisson::new(mean).expect("positive finite mean");
    rng.sample::<f64, _>(d) as u64
}
