//! Adaptive 7/15-point Gauss-Kronrod quadrature.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

/// Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Returns (Kronrod estimate, |Kronrod - Gauss|) on `[a, b]`.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            max_intervals: 20_000,
        }
    }
}

/// Integrates `f` over `[a, b]`, first split into `pieces` equal parts, then
/// bisecting the interval with the largest error until the summed error
/// estimate is below `abs_tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, pieces: usize, opts: QuadOptions) -> Result<(f64, f64)> {
    let pieces = pieces.max(1);
    let w = (b - a) / pieces as f64;
    let mut intervals: Vec<(f64, f64, f64, f64)> = (0..pieces)
        .map(|i| {
            let lo = a + w * i as f64;
            let hi = if i + 1 == pieces { b } else { lo + w };
            let (v, e) = gk15(&f, lo, hi);
            (lo, hi, v, e)
        })
        .collect();
    loop {
        let err: f64 = intervals.iter().map(|iv| iv.3).sum();
        let val: f64 = intervals.iter().map(|iv| iv.2).sum();
        if err <= opts.abs_tol {
            return Ok((val, err));
        }
        if intervals.len() >= opts.max_intervals {
            return Err(Error::Numeric {
                reason: format!("quadrature did not converge (error estimate {err:e})"),
                estimate: val,
            });
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap();
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_polynomials() {
        // 15-point Kronrod is exact through degree 22
        let (v, _) = integrate(|x| x.powi(20), 0.0, 1.0, 1, QuadOptions::default()).unwrap();
        assert!((v - 1.0 / 21.0).abs() < 1e-15);
        let (v, _) = integrate(|x| 3.0 * x * x - x + 2.0, -1.0, 2.0, 1, QuadOptions::default()).unwrap();
        assert!((v - 13.5).abs() < 1e-13);
    }

    #[test]
    fn oscillatory_and_peaked() {
        let (v, _) = integrate(|x| (10.0 * x).cos(), 0.0, 7.0, 4, QuadOptions::default()).unwrap();
        assert!((v - (70f64).sin() / 10.0).abs() < 1e-13);
        let (v, _) = integrate(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1, QuadOptions::default()).unwrap();
        assert!((v - 2.0 * 100.0 * (100f64).atan()).abs() < 1e-9);
    }

    #[test]
    fn reports_failure() {
        let opts = QuadOptions {
            abs_tol: 1e-15,
            max_intervals: 4,
        };
        let err = integrate(|x| x.abs().sqrt().recip(), -1.0, 1.0, 1, opts).unwrap_err();
        assert!(matches!(err, Error::Numeric { .. }));
    }
}
