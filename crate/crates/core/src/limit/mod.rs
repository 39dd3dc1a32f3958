//! The limit process `Z`: a centered stationary Gaussian process with
//! covariance `ln(1 + e^-|u-v|) / ln 2`.

pub mod quad;

use std::f64::consts::{LN_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::limit_cov;

const JITTER_START: f64 = 1e-12;
const JITTER_CAP: f64 = 1e-6;

/// Covariance of `Z` on a grid and its Cholesky factor.
#[derive(Debug, Clone)]
pub struct GaussGrid {
    u_grid: Vec<f64>,
    cov: DMatrix<f64>,
    factor: DMatrix<f64>,
    jitter: f64,
}

impl GaussGrid {
    /// Factorizes with no jitter first, then `1e-12, 1e-11, ...` up to `1e-6`.
    pub fn new(u_grid: &[f64]) -> Result<Self> {
        if u_grid.is_empty() {
            return Err(Error::Domain("u grid is empty".into()));
        }
        if u_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain("u grid must be strictly increasing".into()));
        }
        let n = u_grid.len();
        let cov = DMatrix::from_fn(n, n, |a, b| limit_cov(u_grid[a], u_grid[b]));
        let mut jitter = 0.0;
        loop {
            let shifted = &cov + DMatrix::identity(n, n) * jitter;
            if let Some(ch) = shifted.cholesky() {
                return Ok(Self {
                    u_grid: u_grid.to_vec(),
                    cov,
                    factor: ch.unpack(),
                    jitter,
                });
            }
            jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
            if jitter > JITTER_CAP * (1.0 + 1e-9) {
                return Err(Error::Numeric {
                    reason: format!("covariance factorization failed up to jitter {JITTER_CAP:e}"),
                    estimate: f64::NAN,
                });
            }
        }
    }

    pub fn u_grid(&self) -> &[f64] {
        &self.u_grid
    }

    pub fn cov_matrix(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Lower-triangular factor.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Largest entry of `|L L^T - C|`.
    pub fn reconstruction_error(&self) -> f64 {
        (&self.factor * self.factor.transpose() - &self.cov).amax()
    }

    /// One path `L xi` on the grid.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.u_grid.len();
        let xi = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.factor * xi).iter().copied().collect()
    }
}

pub fn sample_z_cholesky<R: Rng + ?Sized>(grid: &GaussGrid, rng: &mut R) -> Vec<f64> {
    grid.sample(rng)
}

/// Cell layout for the white-noise integral over `[x_lo, x_hi] x [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhiteNoiseDiscretization {
    pub x_lo: f64,
    pub x_hi: f64,
    pub nx: usize,
    pub ny: usize,
}

impl WhiteNoiseDiscretization {
    /// `dx = 0.05` over `[u_min - 20, u_max + 20]`, `dy = 0.01`.
    pub fn for_grid(u_grid: &[f64]) -> Self {
        Self::with_steps(u_grid, 0.05, 0.01)
    }

    pub fn with_steps(u_grid: &[f64], dx: f64, dy: f64) -> Self {
        let lo = u_grid.iter().copied().fold(f64::INFINITY, f64::min) - 20.0;
        let hi = u_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 20.0;
        let nx = ((hi - lo) / dx).ceil().max(1.0) as usize;
        let ny = (1.0 / dy).round().max(1.0) as usize;
        Self {
            x_lo: lo,
            x_hi: lo + nx as f64 * dx,
            nx,
            ny,
        }
    }

    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        1.0 / self.ny as f64
    }

    fn x_center(&self, i: usize) -> f64 {
        self.x_lo + (i as f64 + 0.5) * self.dx()
    }

    /// Cell level `a = exp(-e^-(x-u))` and the number of `y` cell centers
    /// below it.
    fn level(&self, x: f64, u: f64) -> (f64, usize) {
        let a = (-(-(x - u)).exp()).exp();
        let m = ((a * self.ny as f64 + 0.5).floor() as usize).min(self.ny);
        (a, m)
    }

    /// Exact covariance of the discretized sampler, for comparing against
    /// [`limit_cov`].
    pub fn discretized_cov(&self, u: f64, v: f64) -> f64 {
        let ny = self.ny as f64;
        let mut s = 0.0;
        for i in 0..self.nx {
            let x = self.x_center(i);
            let (a, m) = self.level(x, u);
            let (b, k) = self.level(x, v);
            let (fm, fk) = (m as f64 / ny, k as f64 / ny);
            s += fm.min(fk) - b * fm - a * fk + a * b;
        }
        s * self.dx() / LN_2
    }
}

/// Riemann sum of the white-noise integral: per cell
/// `(1{y <= a} - a) sqrt(dx dy) xi`, summed with prefix sums over `y`.
pub fn sample_z_whitenoise<R: Rng + ?Sized>(disc: &WhiteNoiseDiscretization, u_grid: &[f64], rng: &mut R) -> Vec<f64> {
    let scale = (disc.dx() * disc.dy() / LN_2).sqrt();
    let mut out = vec![0.0; u_grid.len()];
    let mut prefix = vec![0.0; disc.ny + 1];
    for i in 0..disc.nx {
        for k in 0..disc.ny {
            prefix[k + 1] = prefix[k] + rng.sample::<f64, _>(StandardNormal);
        }
        let total = prefix[disc.ny];
        let x = disc.x_center(i);
        for (z, &u) in out.iter_mut().zip(u_grid) {
            let (a, m) = disc.level(x, u);
            *z += prefix[m] - a * total;
        }
    }
    out.iter_mut().for_each(|z| *z *= scale);
    out
}

/// Crossover between the series and the closed form of the spectral density.
pub const SPECTRAL_SERIES_CUTOFF: f64 = 0.25;

/// `B_2, B_4, ..., B_24`.
const BERNOULLI_EVEN: [f64; 12] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
    854513.0 / 138.0,
    -236364091.0 / 2730.0,
];

/// Dirichlet eta at even arguments `2m`, `m = 1..=12`.
fn eta_even(m: usize) -> f64 {
    let b = BERNOULLI_EVEN[m - 1].abs();
    let two_m = (2 * m) as i32;
    let fact: f64 = (1..=2 * m).map(|k| k as f64).product();
    (1.0 - 2f64.powi(1 - two_m)) * b * (2.0 * PI).powi(two_m) / (2.0 * fact)
}

/// Spectral density `f(x) = (1/(2 ln 2)) (1/(pi x^2) - 1/(x sinh(pi x)))`.
/// Near zero the two terms cancel, so an even power series is used there.
pub fn spectral_f(x: f64) -> f64 {
    let x = x.abs();
    if x < SPECTRAL_SERIES_CUTOFF {
        let x2 = x * x;
        let mut s = 0.0;
        for k in (0..12).rev() {
            let c = if k % 2 == 0 { eta_even(k + 1) } else { -eta_even(k + 1) };
            s = s * x2 + c;
        }
        s / (PI * LN_2)
    } else {
        (1.0 / (PI * x * x) - 1.0 / (x * (PI * x).sinh())) / (2.0 * LN_2)
    }
}

/// `2 int_0^inf cos(t x) f(x) dx` by adaptive quadrature on `(0, X]` plus an
/// asymptotic tail; `X = max(50, 200/|t|)`.
pub fn fourier_transform(t: f64) -> Result<f64> {
    let t = t.abs();
    let big_x = if t > 0.0 { (200.0 / t).max(50.0) } else { 50.0 };
    let pieces = ((t * big_x / PI).ceil() as usize).max(16);
    let (body, _) = quad::integrate(
        |x| (t * x).cos() * spectral_f(x),
        0.0,
        big_x,
        pieces,
        Default::default(),
    )?;
    // Past X the sinh term is below e^-150; only 1/(2 pi ln2 x^2) remains.
    let tail = cos_over_x2_tail(t, big_x) / (2.0 * PI * LN_2);
    Ok(2.0 * (body + tail))
}

/// `int_X^inf cos(t x) / x^2 dx` by repeated integration by parts.
fn cos_over_x2_tail(t: f64, big_x: f64) -> f64 {
    if t == 0.0 {
        return 1.0 / big_x;
    }
    let (s, c) = (t * big_x).sin_cos();
    // int_X^inf cos(tx) x^-n dx = -s/(t X^n) + n/t * int sin(tx) x^-(n+1)
    // int_X^inf sin(tx) x^-n dx =  c/(t X^n) - n/t * int cos(tx) x^-(n+1)
    let mut total = 0.0;
    let mut coef = 1.0;
    let mut n = 2.0;
    for k in 0..12 {
        let term = match k % 4 {
            0 => -s,
            1 => c,
            2 => s,
            _ => -c,
        } / (t * big_x.powf(n));
        total += coef * term;
        coef *= n / t;
        n += 1.0;
        if (coef / big_x.powf(n)).abs() < 1e-18 {
            break;
        }
    }
    total
}

/// `|fourier_transform(t) - limit_cov(0, t)|`.
pub fn fourier_check(t: f64) -> Result<f64> {
    Ok((fourier_transform(t)? - limit_cov(0.0, t)).abs())
}

/// `E (Z(u+h) - Z(u))^2 = 2 (1 - ln(1 + e^-|h|)/ln 2)`.
pub fn increment_variance(h: f64) -> f64 {
    // ln(1+e^-h) = ln 2 + ln(1 + (e^-h - 1)/2)
    -2.0 * (0.5 * (-h.abs()).exp_m1()).ln_1p() / LN_2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityPoint {
    pub x: f64,
    pub f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierPoint {
    pub t: f64,
    pub r_closed: f64,
    pub r_quadrature: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub density: Vec<DensityPoint>,
    pub fourier: Vec<FourierPoint>,
}

pub fn spectral_report(xs: &[f64], ts: &[f64]) -> Result<SpectralReport> {
    let density = xs.iter().map(|&x| DensityPoint { x, f: spectral_f(x) }).collect();
    let fourier = ts
        .iter()
        .map(|&t| {
            let r_quadrature = fourier_transform(t)?;
            let r_closed = limit_cov(0.0, t);
            Ok(FourierPoint {
                t,
                r_closed,
                r_quadrature,
                deviation: (r_quadrature - r_closed).abs(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(SpectralReport { density, fourier })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_stream;
    use crate::stats::MomentAccumulator;

    #[test]
    fn spectral_values() {
        assert!((spectral_f(0.0) - PI / (12.0 * LN_2)).abs() < 1e-15);
        assert!((spectral_f(0.0) - 0.3776966784855995).abs() < 1e-15);
        let closed = |x: f64| (1.0 / (PI * x * x) - 1.0 / (x * (PI * x).sinh())) / (2.0 * LN_2);
        let x0 = SPECTRAL_SERIES_CUTOFF;
        assert!((closed(x0) - spectral_f(x0 - 1e-15)).abs() < 1e-12);
        assert!((spectral_f(1.0) - 0.16715).abs() < 1e-5);
        for x in [0.1, 0.7, 3.0, 40.0] {
            assert_eq!(spectral_f(x), spectral_f(-x));
        }
        assert!(spectral_f(1e6) < 1e-12);
        let mut last = spectral_f(0.0);
        for i in 1..2000 {
            let v = spectral_f(i as f64 * 0.01);
            assert!(v > 0.0 && v <= last);
            last = v;
        }
    }

    #[test]
    fn series_matches_partial_fractions() {
        // 1/sinh z - 1/z = 2z sum_{n>=1} (-1)^n / (z^2 + pi^2 n^2)
        for z in [0.5f64, 1.0, 2.0] {
            let exact = 1.0 / z.sinh() - 1.0 / z;
            let partial = |n_max: usize| {
                2.0 * z
                    * (1..=n_max)
                        .map(|n| {
                            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                            sign / (z * z + PI * PI * (n * n) as f64)
                        })
                        .sum::<f64>()
            };
            let errs: Vec<f64> = [10usize, 100, 1000, 10000]
                .iter()
                .map(|&n| (partial(n) - exact).abs())
                .collect();
            assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
            assert!(errs[3] < 1e-8);
        }
    }

    #[test]
    fn fourier_inversion() {
        for t in [0.0, 0.5, 1.0, 2.0] {
            let d = fourier_check(t).unwrap();
            assert!(d < 1e-8, "t={t}: {d:e}");
        }
        assert!(fourier_transform(40.0).unwrap().abs() < 1e-6);
    }

    #[test]
    fn increments() {
        assert_eq!(increment_variance(0.0), 0.0);
        let h = 0.01;
        assert!((increment_variance(h) / (h / LN_2) - 1.0).abs() < 0.01);
        for h in [0.3, 1.0, 5.0] {
            assert!((increment_variance(h) - 2.0 * (1.0 - limit_cov(0.0, h))).abs() < 1e-14);
        }
    }

    #[test]
    fn grid_factorization() {
        let u: Vec<f64> = (0..200).map(|i| -10.0 + 0.1 * i as f64).collect();
        let g = GaussGrid::new(&u).unwrap();
        assert!(g.jitter() <= 1e-10);
        assert!(g.reconstruction_error() <= 1e-10 + g.jitter());
        assert!(g.cov_matrix().diagonal().iter().all(|&d| d == 1.0));
        assert!(GaussGrid::new(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn cholesky_paths_have_target_covariance() {
        let u = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let g = GaussGrid::new(&u).unwrap();
        let mut acc = MomentAccumulator::new(5);
        for rep in 0..10_000 {
            acc.push(&g.sample(&mut replica_stream(4, rep))).unwrap();
        }
        for a in 0..5 {
            for b in 0..5 {
                let e = acc.cov_estimate(a, b).unwrap();
                let r = limit_cov(u[a], u[b]);
                let se = ((1.0 + r * r) / 10_000f64).sqrt();
                assert!((e.value - r).abs() < 3.0 * se.max(e.se), "({a},{b}) {} vs {r}", e.value);
            }
        }
    }

    #[test]
    fn whitenoise_discretization_is_close() {
        let u = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let disc = WhiteNoiseDiscretization::for_grid(&u);
        assert!((disc.dx() - 0.05).abs() < 1e-12 && disc.ny == 100);
        for &a in &u {
            for &b in &u {
                assert!((disc.discretized_cov(a, b) - limit_cov(a, b)).abs() < 0.01);
            }
        }
    }

    #[test]
    fn whitenoise_paths() {
        let u = [0.0, 1.0];
        let disc = WhiteNoiseDiscretization::for_grid(&u);
        let mut acc = MomentAccumulator::new(2);
        for rep in 0..3000 {
            acc.push(&sample_z_whitenoise(&disc, &u, &mut replica_stream(6, rep)))
                .unwrap();
        }
        let m = acc.mean().unwrap();
        assert!(m[0].abs() < 4.0 * acc.mean_se(0).unwrap());
        let c = acc.cov_estimate(0, 1).unwrap();
        assert!((c.value - limit_cov(0.0, 1.0)).abs() < 0.02 + 3.0 * c.se);
        let v = acc.cov_estimate(0, 0).unwrap();
        assert!((v.value - 1.0).abs() < 0.02 + 3.0 * v.se);
    }
}
