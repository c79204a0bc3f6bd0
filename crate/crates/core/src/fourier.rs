//! Fourier collocation on the uniform periodic grid `theta_i = 2 pi i / N`.
//!
//! Differentiation matrices follow the classical cardinal-function formulas
//! for even `N`; the Nyquist mode is dropped by the first derivative and
//! mapped to `-(N/2)^2` by the second.

use nalgebra::DMatrix;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

#[derive(Debug)]
pub struct FourierOps {
    pub n: usize,
    pub d1: DMatrix<f64>,
    pub d2: DMatrix<f64>,
    pub theta: Vec<f64>,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl FourierOps {
    fn build(n: usize) -> Self {
        let h = 2.0 * PI / n as f64;
        let mut d1 = DMatrix::zeros(n, n);
        let mut d2 = DMatrix::zeros(n, n);
        let diag2 = -PI * PI / (3.0 * h * h) - 1.0 / 6.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    d2[(i, j)] = diag2;
                    continue;
                }
                let k = i as isize - j as isize;
                let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                let x = k as f64 * h / 2.0;
                d1[(i, j)] = 0.5 * sign / x.tan();
                d2[(i, j)] = -sign / (2.0 * x.sin().powi(2));
            }
        }
        let theta: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let cos = theta.iter().map(|t| t.cos()).collect();
        let sin = theta.iter().map(|t| t.sin()).collect();
        FourierOps {
            n,
            d1,
            d2,
            theta,
            cos,
            sin,
        }
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    pub fn apply(&self, order: usize, f: &[f64]) -> Vec<f64> {
        let m = match order {
            1 => &self.d1,
            2 => &self.d2,
            _ => panic!("unsupported derivative order {order}"),
        };
        let n = self.n;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += m[(i, j)] * f[j];
            }
            out[i] = acc;
        }
        out
    }

    /// `f'' + f` at the grid points.
    pub fn radius(&self, f: &[f64]) -> Vec<f64> {
        let mut r = self.apply(2, f);
        for (ri, fi) in r.iter_mut().zip(f) {
            *ri += fi;
        }
        r
    }
}

static CACHE: OnceLock<Mutex<HashMap<usize, Arc<FourierOps>>>> = OnceLock::new();

pub fn ops(n: usize) -> Arc<FourierOps> {
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fourier cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| Arc::new(FourierOps::build(n)))
        .clone()
}

/// Evaluates the trigonometric interpolant of `samples` at an arbitrary angle.
pub fn interpolate(samples: &[f64], theta: f64) -> f64 {
    let n = samples.len();
    let h = 2.0 * PI / n as f64;
    let mut acc = 0.0;
    for (j, &u) in samples.iter().enumerate() {
        let x = theta - j as f64 * h;
        let half = 0.5 * x;
        let s = half.tan();
        if s.abs() < 1e-14 && (half.sin()).abs() < 1e-14 {
            // node hit (x = 0 mod 2 pi)
            return u;
        }
        acc += u * (0.5 * n as f64 * x).sin() / (n as f64 * s);
    }
    acc
}

/// Derivative of the trigonometric interpolant at an arbitrary angle.
pub fn interpolate_derivative(samples: &[f64], theta: f64) -> f64 {
    let n = samples.len();
    let (a, b) = real_dft(samples);
    let mut acc = 0.0;
    for k in 1..n / 2 {
        let kf = k as f64;
        acc += kf * (-a[k] * (kf * theta).sin() + b[k] * (kf * theta).cos());
    }
    acc
}

/// Cosine/sine coefficients `a_k, b_k` with `f = a_0 + sum_k a_k cos k t + b_k sin k t`
/// (the Nyquist term is folded into `a_{N/2}` with half weight convention).
pub fn real_dft(samples: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = samples.len();
    let half = n / 2;
    let mut a = vec![0.0; half + 1];
    let mut b = vec![0.0; half + 1];
    let h = 2.0 * PI / n as f64;
    for k in 0..=half {
        let mut sc = 0.0;
        let mut ss = 0.0;
        for (j, &u) in samples.iter().enumerate() {
            let t = k as f64 * j as f64 * h;
            sc += u * t.cos();
            ss += u * t.sin();
        }
        let scale = if k == 0 || k == half { 1.0 } else { 2.0 } / n as f64;
        a[k] = sc * scale;
        b[k] = ss * scale;
    }
    (a, b)
}

/// Resamples a periodic field onto a grid of `m` points by trigonometric interpolation.
pub fn resample(samples: &[f64], m: usize) -> Vec<f64> {
    if m == samples.len() {
        return samples.to_vec();
    }
    let h = 2.0 * PI / m as f64;
    (0..m).map(|i| interpolate(samples, i as f64 * h)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_derivative_matrix_is_symmetric() {
        let o = ops(32);
        let defect = (&o.d2 - o.d2.transpose()).abs().max();
        assert!(defect < 1e-12, "{defect}");
    }

    #[test]
    fn interpolant_reproduces_harmonics_off_grid() {
        let n = 32;
        let o = ops(n);
        let f: Vec<f64> = o.theta.iter().map(|t| (3.0 * t).sin() + 0.5 * (2.0 * t).cos()).collect();
        for &t in &[0.1f64, 1.234, 3.3, 6.0] {
            let exact = (3.0 * t).sin() + 0.5 * (2.0 * t).cos();
            assert!((interpolate(&f, t) - exact).abs() < 1e-12);
            let dexact = 3.0 * (3.0 * t).cos() - (2.0 * t).sin();
            assert!((interpolate_derivative(&f, t) - dexact).abs() < 1e-11);
        }
    }
}
