//! Convex curves through their support functions.
//!
//! A [`SupportFunction`] stores samples `u(theta_i)` on the uniform grid
//! `theta_i = 2 pi i / N`. Derivatives are those of the trigonometric
//! interpolant and integrals use the trapezoid rule, which is spectrally
//! accurate for smooth periodic integrands.

use crate::error::{Error, Result};
use crate::fourier::{self, FourierOps};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Radius-of-curvature floor shared by every module.
pub const CONVEXITY_EPS: f64 = 1e-8;

/// Default number of grid points.
pub const DEFAULT_N: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportFunction {
    alpha: f64,
    samples: Vec<f64>,
}

impl SupportFunction {
    pub fn new(alpha: f64, samples: Vec<f64>) -> Result<Self> {
        let n = samples.len();
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(n));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::DomainError(format!("alpha must be positive, got {alpha}")));
        }
        Ok(SupportFunction { alpha, samples })
    }

    pub fn from_fn(alpha: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = 2.0 * PI / n as f64;
        Self::new(alpha, (0..n).map(|i| f(i as f64 * h)).collect())
    }

    pub fn constant(alpha: f64, n: usize, radius: f64) -> Result<Self> {
        Self::new(alpha, vec![radius; n])
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(self.alpha, samples)
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(alpha, self.samples.clone())
    }

    pub fn theta(&self) -> Vec<f64> {
        self.ops().theta.clone()
    }

    pub(crate) fn ops(&self) -> Arc<FourierOps> {
        fourier::ops(self.n())
    }

    /// Value of the trigonometric interpolant at an arbitrary angle.
    pub fn eval(&self, theta: f64) -> f64 {
        fourier::interpolate(&self.samples, theta)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        self.with_samples(self.samples.iter().map(|v| v * factor).collect())
    }

    /// Support function of the curve translated by `shift`.
    pub fn translated(&self, shift: [f64; 2]) -> Result<Self> {
        let o = self.ops();
        let s = self
            .samples
            .iter()
            .enumerate()
            .map(|(i, v)| v + shift[0] * o.cos[i] + shift[1] * o.sin[i])
            .collect();
        self.with_samples(s)
    }

    /// `u_thetatheta + u` on the grid.
    pub fn radius_of_curvature(&self) -> Vec<f64> {
        self.ops().radius(&self.samples)
    }

    pub fn min_radius(&self) -> f64 {
        self.radius_of_curvature()
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn check_convex(&self) -> Result<()> {
        let m = self.min_radius();
        if m.is_nan() || m <= CONVEXITY_EPS {
            return Err(Error::ConvexityLost { min_radius: m });
        }
        Ok(())
    }

    pub fn sup_distance(&self, other: &SupportFunction) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Derivative of a periodic field sampled on the uniform grid.
pub fn differentiate_field(f: &[f64], order: usize) -> Vec<f64> {
    assert!(order == 1 || order == 2, "order must be 1 or 2");
    fourier::ops(f.len()).apply(order, f)
}

/// Exact derivative (order 1 or 2) of the trigonometric interpolant of `u`.
pub fn differentiate(u: &SupportFunction, order: usize) -> Vec<f64> {
    differentiate_field(u.samples(), order)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureProfile {
    pub samples: Vec<f64>,
}

pub fn curvature(u: &SupportFunction) -> Result<CurvatureProfile> {
    let r = u.radius_of_curvature();
    let min = r.iter().copied().fold(f64::INFINITY, f64::min);
    if min.is_nan() || min <= CONVEXITY_EPS {
        return Err(Error::ConvexityLost { min_radius: min });
    }
    Ok(CurvatureProfile {
        samples: r.into_iter().map(|v| 1.0 / v).collect(),
    })
}

/// Enclosed area `1/2 int (u^2 - u_theta^2)`.
pub fn area(u: &SupportFunction) -> Result<f64> {
    u.check_convex()?;
    Ok(area_unchecked(u))
}

fn area_unchecked(u: &SupportFunction) -> f64 {
    let du = differentiate(u, 1);
    let h = 2.0 * PI / u.n() as f64;
    0.5 * h
        * u.samples()
            .iter()
            .zip(&du)
            .map(|(a, b)| a * a - b * b)
            .sum::<f64>()
}

/// Perimeter `int u`.
pub fn perimeter(u: &SupportFunction) -> Result<f64> {
    u.check_convex()?;
    Ok(2.0 * PI / u.n() as f64 * u.samples().iter().sum::<f64>())
}

/// `L^2 / (4 pi A)`; equals one exactly for circles.
pub fn isoperimetric_ratio(u: &SupportFunction) -> Result<f64> {
    let l = perimeter(u)?;
    Ok(l * l / (4.0 * PI * area_unchecked(u)))
}

/// Steiner point `(1/pi) int u (cos, sin)`.
pub fn steiner_point(u: &SupportFunction) -> [f64; 2] {
    let o = u.ops();
    let h = o.spacing();
    let mut s = [0.0; 2];
    for (i, v) in u.samples().iter().enumerate() {
        s[0] += v * o.cos[i];
        s[1] += v * o.sin[i];
    }
    [s[0] * h / PI, s[1] * h / PI]
}

/// Area centroid `(1/3A) int X u r dtheta`.
pub fn centroid(u: &SupportFunction) -> Result<[f64; 2]> {
    let pts = boundary_points(u)?;
    let r = u.radius_of_curvature();
    let a = area_unchecked(u);
    let h = 2.0 * PI / u.n() as f64;
    let mut c = [0.0; 2];
    for (i, p) in pts.iter().enumerate() {
        let w = u.samples()[i] * r[i];
        c[0] += p[0] * w;
        c[1] += p[1] * w;
    }
    Ok([c[0] * h / (3.0 * a), c[1] * h / (3.0 * a)])
}

/// `X(theta) = u (cos, sin) + u_theta (-sin, cos)`.
pub fn boundary_points(u: &SupportFunction) -> Result<Vec<[f64; 2]>> {
    u.check_convex()?;
    let o = u.ops();
    let du = differentiate(u, 1);
    Ok(u.samples()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            [
                v * o.cos[i] - du[i] * o.sin[i],
                v * o.sin[i] + du[i] * o.cos[i],
            ]
        })
        .collect())
}

/// Weighted inner product `(f, g)_h = int f g h^(-1-1/alpha)`.
pub fn inner_h(f: &[f64], g: &[f64], h: &SupportFunction) -> f64 {
    let w = weight_h(h);
    f.iter().zip(g).zip(&w).map(|((a, b), c)| a * b * c).sum()
}

/// Quadrature weights `h^(-1-1/alpha)(theta_i) * 2 pi / N`.
pub fn weight_h(h: &SupportFunction) -> Vec<f64> {
    let dx = 2.0 * PI / h.n() as f64;
    let p = -1.0 - 1.0 / h.alpha();
    h.samples().iter().map(|v| v.powf(p) * dx).collect()
}

pub fn norm_h(f: &[f64], h: &SupportFunction) -> f64 {
    inner_h(f, f, h).sqrt()
}

// ---------------------------------------------------------------------------
// Entropy
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub value: f64,
    pub center: [f64; 2],
    pub inner_value_at_centroid: f64,
    pub iterations: usize,
}

/// `E_alpha(Omega, z0)`.
pub fn entropy_at(u: &SupportFunction, z0: [f64; 2]) -> Result<f64> {
    let a = area(u)?;
    entropy_with_area(u, z0, a)
}

fn shifted_support(u: &SupportFunction, z0: [f64; 2]) -> Result<Vec<f64>> {
    let o = u.ops();
    let mut out = Vec::with_capacity(u.n());
    for (i, v) in u.samples().iter().enumerate() {
        let w = v - z0[0] * o.cos[i] - z0[1] * o.sin[i];
        if !(w > 0.0) {
            return Err(Error::CenterOutside(z0[0], z0[1]));
        }
        out.push(w);
    }
    Ok(out)
}

fn entropy_with_area(u: &SupportFunction, z0: [f64; 2], area: f64) -> Result<f64> {
    let uz = shifted_support(u, z0)?;
    let alpha = u.alpha();
    let n = uz.len() as f64;
    let scale = -0.5 * (area / PI).ln();
    if alpha == 1.0 {
        let avg = uz.iter().map(|v| v.ln()).sum::<f64>() / n;
        Ok(avg + scale)
    } else {
        let p = 1.0 - 1.0 / alpha;
        let avg = uz.iter().map(|v| v.powf(p)).sum::<f64>() / n;
        Ok(alpha / (alpha - 1.0) * avg.ln() + scale)
    }
}

/// Gradient and Hessian of `z0 -> E_alpha(Omega, z0)`.
fn entropy_derivatives(u: &SupportFunction, z0: [f64; 2]) -> Result<([f64; 2], [[f64; 2]; 2])> {
    let uz = shifted_support(u, z0)?;
    let o = u.ops();
    let alpha = u.alpha();
    let n = uz.len() as f64;
    let p = 1.0 - 1.0 / alpha;
    let mut m = 0.0;
    let mut g = [0.0; 2];
    let mut k = [[0.0; 2]; 2];
    for (i, &w) in uz.iter().enumerate() {
        let e = [o.cos[i], o.sin[i]];
        let a = w.powf(-1.0 / alpha);
        m += if alpha == 1.0 { 1.0 } else { w.powf(p) };
        let b = a / w;
        for r in 0..2 {
            g[r] += a * e[r];
            for c in 0..2 {
                k[r][c] += b * e[r] * e[c];
            }
        }
    }
    m /= n;
    for r in 0..2 {
        g[r] /= n;
        for c in 0..2 {
            k[r][c] /= n;
        }
    }
    let grad = [-g[0] / m, -g[1] / m];
    let mut hess = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            hess[r][c] = -k[r][c] / (alpha * m) + (1.0 - alpha) / alpha * g[r] * g[c] / (m * m);
        }
    }
    Ok((grad, hess))
}

const ENTROPY_STEP_TOL: f64 = 1e-12;
const ENTROPY_MAX_ITER: usize = 4000;
const ENTROPY_GRID: usize = 64;

/// `E_alpha(Omega) = sup_{z0} E_alpha(Omega, z0)`.
///
/// Nelder-Mead ascent from the Steiner point, a Newton polish using the
/// analytic gradient, and a 64x64 grid scan over the bounding box that
/// restarts the ascent if it finds a better interior point.
pub fn entropy(u: &SupportFunction) -> Result<EntropyReport> {
    let a = area(u)?;
    let f = |z: [f64; 2]| entropy_with_area(u, z, a).unwrap_or(f64::NEG_INFINITY);

    let start = steiner_point(u);
    if !f(start).is_finite() {
        return Err(Error::OptimizerFailed("Steiner point is not interior".into()));
    }
    let scale = 0.05 * u.samples().iter().copied().fold(f64::INFINITY, f64::min).max(1e-6);
    let (mut best, mut iterations) = nelder_mead(&f, start, scale);
    let (z, it) = newton_polish(u, &f, best);
    best = z;
    iterations += it;

    let pts = boundary_points(u)?;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &pts {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let mut grid_best = (f64::NEG_INFINITY, best);
    for i in 0..ENTROPY_GRID {
        for j in 0..ENTROPY_GRID {
            let z = [
                lo[0] + (hi[0] - lo[0]) * (i as f64 + 0.5) / ENTROPY_GRID as f64,
                lo[1] + (hi[1] - lo[1]) * (j as f64 + 0.5) / ENTROPY_GRID as f64,
            ];
            let v = f(z);
            if v > grid_best.0 {
                grid_best = (v, z);
            }
        }
    }
    iterations += 1;
    if grid_best.0 > f(best) + 1e-12 {
        let (z, it) = nelder_mead(&f, grid_best.1, scale);
        let (z, it2) = newton_polish(u, &f, z);
        iterations += it + it2;
        if f(z) > f(best) {
            best = z;
        }
    }
    let value = f(best);
    if !value.is_finite() {
        return Err(Error::OptimizerFailed("no interior maximizer found".into()));
    }
    let c = centroid(u)?;
    let at_centroid = f(c);
    Ok(EntropyReport {
        value: value.max(at_centroid),
        center: if at_centroid > value { c } else { best },
        inner_value_at_centroid: at_centroid,
        iterations,
    })
}

fn newton_polish(
    u: &SupportFunction,
    f: &impl Fn([f64; 2]) -> f64,
    mut z: [f64; 2],
) -> ([f64; 2], usize) {
    let mut it = 0;
    while it < 50 {
        it += 1;
        let Ok((g, hm)) = entropy_derivatives(u, z) else { break };
        let det = hm[0][0] * hm[1][1] - hm[0][1] * hm[1][0];
        if !(det > 0.0 && hm[0][0] < 0.0) {
            break;
        }
        let step = [
            -(hm[1][1] * g[0] - hm[0][1] * g[1]) / det,
            -(-hm[1][0] * g[0] + hm[0][0] * g[1]) / det,
        ];
        let f0 = f(z);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-6 {
            let cand = [z[0] + t * step[0], z[1] + t * step[1]];
            if f(cand) >= f0 - 1e-15 {
                z = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        let len = t * (step[0].hypot(step[1]));
        if !accepted || len < ENTROPY_STEP_TOL {
            break;
        }
    }
    (z, it)
}

/// Two-dimensional Nelder-Mead maximization.
fn nelder_mead(f: &impl Fn([f64; 2]) -> f64, start: [f64; 2], scale: f64) -> ([f64; 2], usize) {
    let mut simplex = [
        start,
        [start[0] + scale, start[1]],
        [start[0], start[1] + scale],
    ];
    // keep the initial simplex inside the domain
    for p in simplex.iter_mut().skip(1) {
        let mut tries = 0;
        while !f(*p).is_finite() && tries < 60 {
            tries += 1;
            *p = [start[0] + (p[0] - start[0]) * 0.5, start[1] + (p[1] - start[1]) * 0.5];
        }
    }
    let mut vals: Vec<f64> = simplex.iter().map(|p| f(*p)).collect();
    let mut iter = 0;
    while iter < ENTROPY_MAX_ITER {
        iter += 1;
        // order: best (max) first
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap_or(std::cmp::Ordering::Equal));
        let s2 = [simplex[idx[0]], simplex[idx[1]], simplex[idx[2]]];
        let v2 = [vals[idx[0]], vals[idx[1]], vals[idx[2]]];
        simplex = s2;
        vals = v2.to_vec();

        let size = (1..3)
            .map(|i| (simplex[i][0] - simplex[0][0]).hypot(simplex[i][1] - simplex[0][1]))
            .fold(0.0, f64::max);
        if size < ENTROPY_STEP_TOL {
            break;
        }
        let c = [
            0.5 * (simplex[0][0] + simplex[1][0]),
            0.5 * (simplex[0][1] + simplex[1][1]),
        ];
        let worst = simplex[2];
        let lerp = |t: f64| [c[0] + t * (worst[0] - c[0]), c[1] + t * (worst[1] - c[1])];
        let xr = lerp(-1.0);
        let fr = f(xr);
        if fr > vals[0] {
            let xe = lerp(-2.0);
            let fe = f(xe);
            if fe > fr {
                simplex[2] = xe;
                vals[2] = fe;
            } else {
                simplex[2] = xr;
                vals[2] = fr;
            }
            continue;
        }
        if fr > vals[1] {
            simplex[2] = xr;
            vals[2] = fr;
            continue;
        }
        let outside = fr > vals[2];
        let xc = if outside { lerp(-0.5) } else { lerp(0.5) };
        let fc = f(xc);
        if (outside && fc >= fr) || (!outside && fc > vals[2]) {
            simplex[2] = xc;
            vals[2] = fc;
            continue;
        }
        // shrink toward the best vertex
        for i in 1..3 {
            simplex[i] = [
                simplex[0][0] + 0.5 * (simplex[i][0] - simplex[0][0]),
                simplex[0][1] + 0.5 * (simplex[i][1] - simplex[0][1]),
            ];
            vals[i] = f(simplex[i]);
        }
    }
    let best = (0..3)
        .max_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(0);
    (simplex[best], iter)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle(alpha: f64, r: f64) -> SupportFunction {
        SupportFunction::constant(alpha, 64, r).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(
            SupportFunction::new(0.5, vec![1.0; 24]),
            Err(Error::InvalidGrid(24))
        ));
        assert!(matches!(
            SupportFunction::new(0.5, vec![1.0; 8]),
            Err(Error::InvalidGrid(8))
        ));
        let mut s = vec![1.0; 16];
        s[3] = f64::NAN;
        assert!(matches!(SupportFunction::new(0.5, s), Err(Error::NonFinite(3))));
    }

    #[test]
    fn differentiate_harmonics() {
        let u = SupportFunction::from_fn(1.0, 64, |t| t.cos()).unwrap();
        let d2 = differentiate(&u, 2);
        for (i, t) in u.theta().iter().enumerate() {
            assert!((d2[i] + t.cos()).abs() < 1e-12);
        }
        let one = circle(1.0, 1.0);
        assert!(differentiate(&one, 1).iter().all(|v| v.abs() < 1e-12));
        let s3 = SupportFunction::from_fn(1.0, 64, |t| (3.0 * t).sin()).unwrap();
        let d2 = differentiate(&s3, 2);
        for (i, t) in s3.theta().iter().enumerate() {
            assert!((d2[i] + 9.0 * (3.0 * t).sin()).abs() < 1e-11);
        }
    }

    #[test]
    fn curvature_of_circles() {
        let k = curvature(&circle(0.5, 1.0)).unwrap();
        assert!(k.samples.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let shifted = SupportFunction::from_fn(0.5, 64, |t| 1.0 + 0.3 * t.cos()).unwrap();
        let k = curvature(&shifted).unwrap();
        assert!(k.samples.iter().all(|v| (v - 1.0).abs() < 1e-10));
        let k = curvature(&circle(0.5, 2.5)).unwrap();
        assert!(k.samples.iter().all(|v| (v - 0.4).abs() < 1e-12));
    }

    #[test]
    fn curvature_reports_convexity_loss() {
        let u = SupportFunction::from_fn(0.5, 64, |t| 1.0 + 0.2 * (3.0 * t).cos()).unwrap();
        assert!(matches!(curvature(&u), Err(Error::ConvexityLost { .. })));
        assert!(matches!(area(&u), Err(Error::ConvexityLost { .. })));
        assert!(matches!(boundary_points(&u), Err(Error::ConvexityLost { .. })));
    }

    #[test]
    fn areas() {
        assert!((area(&circle(0.5, 1.0)).unwrap() - PI).abs() < 1e-12);
        assert!((area(&circle(0.5, 2.0)).unwrap() - 4.0 * PI).abs() < 1e-12);
        let shifted = SupportFunction::from_fn(0.5, 64, |t| 1.0 + 0.3 * t.cos()).unwrap();
        assert!((area(&shifted).unwrap() - PI).abs() < 1e-12);
    }

    #[test]
    fn entropy_at_circle_centers() {
        for alpha in [0.1, 0.5, 2.0] {
            assert!(entropy_at(&circle(alpha, 1.0), [0.0, 0.0]).unwrap().abs() < 1e-14);
            assert!(entropy_at(&circle(alpha, 3.7), [0.0, 0.0]).unwrap().abs() < 1e-13);
        }
        assert!(entropy_at(&circle(1.0, 1.0), [0.0, 0.0]).unwrap().abs() < 1e-14);
        assert!(matches!(
            entropy_at(&circle(0.5, 1.0), [1.5, 0.0]),
            Err(Error::CenterOutside(..))
        ));
    }

    #[test]
    fn entropy_of_circles() {
        let r = entropy(&circle(0.5, 1.0)).unwrap();
        assert!(r.value.abs() < 1e-12);
        assert!(r.center[0].hypot(r.center[1]) < 1e-8);
        let shifted = SupportFunction::from_fn(0.25, 64, |t| 1.0 + 0.3 * t.cos()).unwrap();
        let r = entropy(&shifted).unwrap();
        assert!(r.value.abs() < 1e-12);
        assert!((r.center[0] - 0.3).abs() < 1e-8 && r.center[1].abs() < 1e-8);
        assert!(r.value >= r.inner_value_at_centroid - 1e-12);
    }

    #[test]
    fn analytic_gradient_matches_differences() {
        let u = SupportFunction::from_fn(0.3, 64, |t| 1.0 + 0.1 * (2.0 * t).cos() + 0.05 * (3.0 * t).sin())
            .unwrap();
        let z = [0.05, -0.02];
        let (g, hm) = entropy_derivatives(&u, z).unwrap();
        let e = 1e-5;
        for d in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[d] += e;
            zm[d] -= e;
            let fd = (entropy_at(&u, zp).unwrap() - entropy_at(&u, zm).unwrap()) / (2.0 * e);
            assert!((fd - g[d]).abs() < 1e-8, "{fd} {}", g[d]);
            let (gp, _) = entropy_derivatives(&u, zp).unwrap();
            let (gm, _) = entropy_derivatives(&u, zm).unwrap();
            for r in 0..2 {
                let fd2 = (gp[r] - gm[r]) / (2.0 * e);
                assert!((fd2 - hm[r][d]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn inner_products() {
        let one = circle(0.5, 1.0);
        let c: Vec<f64> = one.theta().iter().map(|t| t.cos()).collect();
        let ones = vec![1.0; 64];
        assert!((inner_h(&c, &c, &one) - PI).abs() < 1e-12);
        assert!(inner_h(&ones, &c, &one).abs() < 1e-12);
    }

    #[test]
    fn boundary_of_circles() {
        let pts = boundary_points(&circle(0.5, 2.0)).unwrap();
        assert!(pts.iter().all(|p| (p[0].hypot(p[1]) - 2.0).abs() < 1e-12));
        let shifted = SupportFunction::from_fn(0.5, 64, |t| 1.0 + 0.3 * t.cos()).unwrap();
        let pts = boundary_points(&shifted).unwrap();
        assert!(pts.iter().all(|p| ((p[0] - 0.3).hypot(p[1]) - 1.0).abs() < 1e-12));
    }
}
