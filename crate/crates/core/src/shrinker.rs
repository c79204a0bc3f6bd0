//! Self-shrinkers: support functions solving `h'' + h = h^(-1/alpha)`.
//!
//! The round solution is `h = 1`. The k-fold solutions are built by shooting
//! from the maximum `U(0) = r U_min(r)` and tuning the height ratio `r`
//! until the first return of `U' = 0` happens at `theta = pi / k`; the
//! profile on `[0, pi/k]` is then extended to the circle by even reflections.

use crate::error::{Error, Result};
use crate::fourier;
use crate::geometry::SupportFunction;
use crate::ode::{integrate_at, Integrator, Tolerance};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Circle,
    KFold(usize),
}

impl Shape {
    pub fn fold(&self) -> Option<usize> {
        match self {
            Shape::Circle => None,
            Shape::KFold(k) => Some(*k),
        }
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Shape::Circle => write!(f, "circle"),
            Shape::KFold(k) => write!(f, "k{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkerProfile {
    pub alpha: f64,
    pub shape: Shape,
    pub h: SupportFunction,
    pub r_star: f64,
    /// `(r, Theta(alpha, r))` pairs evaluated during the root search.
    pub theta_table: Vec<(f64, f64)>,
    /// `sup |h'' + h - h^(-1/alpha)|` on the grid.
    pub residual: f64,
}

impl ShrinkerProfile {
    pub fn n(&self) -> usize {
        self.h.n()
    }

    /// The same shrinker sampled on an `n`-point grid.
    pub fn on_grid(&self, n: usize) -> Result<ShrinkerProfile> {
        if n == self.n() {
            return Ok(self.clone());
        }
        match self.shape {
            Shape::Circle => circle_shrinker(self.alpha, n),
            Shape::KFold(k) => {
                let samples = reflected_profile(self.alpha, k, self.r_star, n)?;
                let samples = newton_polish(self.alpha, samples)?;
                let h = SupportFunction::new(self.alpha, samples)?;
                let residual = shrinker_residual(&h);
                Ok(ShrinkerProfile {
                    h,
                    residual,
                    ..self.clone()
                })
            }
        }
    }

    /// `L^2 / (4 pi |Omega|)` using `r[h] = h^(-1/alpha)`, so that
    /// `L = int h` and `|Omega| = 1/2 int h^(1 - 1/alpha)` need no derivatives.
    /// Stays meaningful when the corners are sharper than the grid resolves.
    pub fn isoperimetric_ratio(&self) -> f64 {
        let h = self.h.samples();
        let dx = 2.0 * PI / h.len() as f64;
        let a = self.alpha;
        let length: f64 = h.iter().sum::<f64>() * dx;
        let area: f64 = 0.5 * h.iter().map(|v| v.powf(1.0 - 1.0 / a)).sum::<f64>() * dx;
        length * length / (4.0 * PI * area)
    }
}

fn shooting_tolerance() -> Tolerance {
    Tolerance {
        abs: 1e-13,
        rel: 1e-13,
    }
}

/// Upper bound (exclusive) on alpha for a k-fold shrinker.
pub fn alpha_limit(k: usize) -> f64 {
    1.0 / ((k * k) as f64 - 1.0)
}

pub fn circle_shrinker(alpha: f64, n: usize) -> Result<ShrinkerProfile> {
    if !(alpha > 0.0) {
        return Err(Error::DomainError(format!("alpha must be positive, got {alpha}")));
    }
    Ok(ShrinkerProfile {
        alpha,
        shape: Shape::Circle,
        h: SupportFunction::constant(alpha, n, 1.0)?,
        r_star: 1.0,
        theta_table: Vec::new(),
        residual: 0.0,
    })
}

fn check_height_domain(alpha: f64, r: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::DomainError(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(r > 1.0) || !r.is_finite() {
        return Err(Error::DomainError(format!("height ratio must exceed 1, got {r}")));
    }
    Ok(())
}

/// `G(r) = 2 alpha/(1 - alpha) * (1 - r^(1 - 1/alpha)) / (r^2 - 1)`, evaluated
/// without cancellation near `r = 1`.
fn energy_ratio(alpha: f64, r: f64) -> f64 {
    let s = (r - 1.0).ln_1p();
    let p = 1.0 - 1.0 / alpha;
    let num = -(p * s).exp_m1();
    let den = (2.0 * s).exp_m1();
    2.0 * alpha / (1.0 - alpha) * num / den
}

/// Turning-point heights `(U_max, U_min)` of the shrinker ODE with ratio `r`,
/// from conservation of `w'^2/2 + w^2/2 + alpha/(1-alpha) w^(1-1/alpha)`.
pub fn initial_height(alpha: f64, r: f64) -> Result<(f64, f64)> {
    check_height_domain(alpha, r)?;
    let u_min = energy_ratio(alpha, r).powf(alpha / (alpha + 1.0));
    Ok((r * u_min, u_min))
}

/// The `r -> 1` limit of both heights.
pub fn limit_height(_alpha: f64) -> f64 {
    1.0
}

/// `d/dr [r U_min(r)]`, the initial value of the variation `eta`.
pub fn initial_height_derivative(alpha: f64, r: f64) -> Result<f64> {
    check_height_domain(alpha, r)?;
    let p = 1.0 - 1.0 / alpha;
    let c = 2.0 * alpha / (1.0 - alpha);
    let beta = alpha / (alpha + 1.0);
    let g = energy_ratio(alpha, r);
    let r2m1 = r * r - 1.0;
    let one_minus = 1.0 - r.powf(p);
    let dg = c * (-p * r.powf(p - 1.0) * r2m1 - one_minus * 2.0 * r) / (r2m1 * r2m1);
    let u_min = g.powf(beta);
    let du_min = beta * g.powf(beta - 1.0) * dg;
    Ok(u_min + r * du_min)
}

fn shrinker_rhs(alpha: f64) -> impl Fn(f64, &[f64; 2]) -> [f64; 2] {
    move |_t, y| [y[1], y[0].powf(-1.0 / alpha) - y[0]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub theta: f64,
    pub u_max: f64,
    pub u_min: f64,
    /// `w(Theta)` reached by the integration, to compare with `u_min`.
    pub w_end: f64,
}

/// Integrates `w'' + w = w^(-1/alpha)` from the maximum `r U_min` until the
/// next critical point.
pub fn shoot(alpha: f64, r: f64) -> Result<Shot> {
    let (u_max, u_min) = initial_height(alpha, r)?;
    let mut it = Integrator::new(shrinker_rhs(alpha), 0.0, [u_max, 0.0], shooting_tolerance());
    match it.find_event(PI, |_, y| y[1], true, 1e-14)? {
        Some((theta, y)) => Ok(Shot {
            theta,
            u_max,
            u_min,
            w_end: y[0],
        }),
        None => Err(Error::IntegrationFailed(format!(
            "no return of w' = 0 within (0, pi] for alpha = {alpha}, r = {r}"
        ))),
    }
}

/// The period function `Theta(alpha, r)`.
pub fn period(alpha: f64, r: f64) -> Result<f64> {
    Ok(shoot(alpha, r)?.theta)
}

/// Half-period of the linearization about `h = 1`, the `r -> 1` limit of `Theta`.
pub fn linearized_period(alpha: f64) -> f64 {
    PI / (1.0 + 1.0 / alpha).sqrt()
}

const R_LOW: f64 = 1.0 + 1e-8;
const R_CAP: f64 = 1e6;
const THETA_TOL: f64 = 1e-12;

/// Solves for the k-fold shrinker on an `n`-point grid.
pub fn solve_shrinker(alpha: f64, k: usize, n: usize) -> Result<ShrinkerProfile> {
    if k < 3 {
        return Err(Error::DomainError(format!("fold symmetry must be at least 3, got {k}")));
    }
    let limit = alpha_limit(k);
    if !(alpha > 0.0 && alpha < limit) {
        return Err(Error::DomainError(format!(
            "alpha = {alpha} outside (0, 1/(k^2 - 1)) = (0, {limit}) for k = {k}"
        )));
    }
    let target = PI / k as f64;
    let mut table = Vec::new();
    let mut eval = |r: f64| -> Result<f64> {
        let th = period(alpha, r)?;
        table.push((r, th));
        Ok(th - target)
    };

    let mut lo = R_LOW;
    let mut f_lo = eval(lo)?;
    if f_lo >= 0.0 {
        return Err(Error::RootNotBracketed(format!(
            "Theta(1+) already exceeds pi/{k}"
        )));
    }
    let mut hi = 2.0;
    let mut f_hi = eval(hi)?;
    while f_hi < 0.0 {
        lo = hi;
        f_lo = f_hi;
        hi *= 2.0;
        if hi > R_CAP {
            return Err(Error::RootNotBracketed(format!(
                "Theta stays below pi/{k} up to r = {R_CAP}"
            )));
        }
        f_hi = eval(hi)?;
    }

    // Illinois-modified regula falsi
    let mut r_star = 0.5 * (lo + hi);
    let mut side = 0i8;
    for _ in 0..200 {
        let r = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
        let r = if r > lo && r < hi { r } else { 0.5 * (lo + hi) };
        let fr = eval(r)?;
        r_star = r;
        if fr.abs() < THETA_TOL || (hi - lo) < 4.0 * f64::EPSILON * hi {
            break;
        }
        if (fr < 0.0) == (f_lo < 0.0) {
            lo = r;
            f_lo = fr;
            if side == -1 {
                f_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = r;
            f_hi = fr;
            if side == 1 {
                f_lo *= 0.5;
            }
            side = 1;
        }
    }

    let samples = reflected_profile(alpha, k, r_star, n)?;
    let samples = newton_polish(alpha, samples)?;
    let h = SupportFunction::new(alpha, samples)?;
    let residual = shrinker_residual(&h);
    Ok(ShrinkerProfile {
        alpha,
        shape: Shape::KFold(k),
        h,
        r_star,
        theta_table: table,
        residual,
    })
}

/// Maps `theta` into the fundamental interval `[0, pi/k]` of the reflection group.
pub fn fold_angle(theta: f64, k: usize) -> f64 {
    let period = 2.0 * PI / k as f64;
    let t = theta.rem_euclid(period);
    if t > 0.5 * period {
        period - t
    } else {
        t
    }
}

/// Integrates the shooting solution directly to every reflected grid angle.
fn reflected_profile(alpha: f64, k: usize, r: f64, n: usize) -> Result<Vec<f64>> {
    let (u_max, _) = initial_height(alpha, r)?;
    let dx = 2.0 * PI / n as f64;
    let folded: Vec<f64> = (0..n).map(|i| fold_angle(i as f64 * dx, k)).collect();
    let mut targets = folded.clone();
    targets.sort_by(|a, b| a.partial_cmp(b).unwrap());
    targets.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let values = integrate_at(shrinker_rhs(alpha), 0.0, [u_max, 0.0], &targets, shooting_tolerance())?;
    Ok(folded
        .iter()
        .map(|t| {
            let j = targets
                .binary_search_by(|x| x.partial_cmp(t).unwrap())
                .unwrap_or_else(|j| {
                    if j > 0 && (targets[j - 1] - t).abs() < 1e-15 {
                        j - 1
                    } else {
                        j.min(targets.len() - 1)
                    }
                });
            values[j][0]
        })
        .collect())
}

/// Newton iterations on the collocation equations `D2 h + h - h^(-1/alpha) = 0`.
/// The Jacobian is singular along the rotation mode `h'`, which is removed
/// by a rank-one shift. The polished samples are kept only when they stay
/// within `1e-7` of the shooting values (an under-resolved grid can carry
/// spurious discrete solutions).
fn newton_polish(alpha: f64, initial: Vec<f64>) -> Result<Vec<f64>> {
    let n = initial.len();
    let ops = fourier::ops(n);
    let residual = |h: &[f64]| -> Vec<f64> {
        let r = ops.radius(h);
        (0..n).map(|i| r[i] - h[i].powf(-1.0 / alpha)).collect()
    };
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let start_res = sup(&residual(&initial));
    let mut h = initial.clone();
    let mut best = (start_res, initial.clone());
    for _ in 0..6 {
        let f = residual(&h);
        let res = sup(&f);
        if res < best.0 {
            best = (res, h.clone());
        }
        if res < 1e-13 {
            break;
        }
        let mut kernel = ops.apply(1, &h);
        let norm = kernel.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            kernel.iter_mut().for_each(|v| *v /= norm);
        }
        let scale = ops.d2[(0, 0)].abs();
        let mut jac = ops.d2.clone();
        for i in 0..n {
            jac[(i, i)] += 1.0 + h[i].powf(-1.0 / alpha - 1.0) / alpha;
            for j in 0..n {
                jac[(i, j)] += scale * kernel[i] * kernel[j];
            }
        }
        let rhs = DVector::from_iterator(n, f.iter().map(|v| -v));
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::LinearSolveFailure("singular shrinker Jacobian".into()))?;
        for i in 0..n {
            h[i] += step[i];
        }
    }
    let f = residual(&h);
    if sup(&f) < best.0 {
        best = (sup(&f), h);
    }
    let drift = best
        .1
        .iter()
        .zip(&initial)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if drift > 1e-7 {
        return Ok(initial);
    }
    Ok(best.1)
}

/// `sup |h'' + h - h^(-1/alpha)|` using spectral differentiation.
pub fn shrinker_residual(h: &SupportFunction) -> f64 {
    let r = h.radius_of_curvature();
    let a = h.alpha();
    r.iter()
        .zip(h.samples())
        .map(|(ri, hi)| (ri - hi.powf(-1.0 / a)).abs())
        .fold(0.0, f64::max)
}

/// Shooting solution `U(r, theta)` sampled at increasing angles.
pub fn shooting_profile(alpha: f64, r: f64, thetas: &[f64]) -> Result<Vec<f64>> {
    let (u_max, _) = initial_height(alpha, r)?;
    Ok(
        integrate_at(shrinker_rhs(alpha), 0.0, [u_max, 0.0], thetas, shooting_tolerance())?
            .into_iter()
            .map(|y| y[0])
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// eta = dU/dr at r = r*
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaProfile {
    pub theta: Vec<f64>,
    pub samples: Vec<f64>,
    pub derivative: Vec<f64>,
    pub eta0: f64,
    pub eta_end: f64,
    pub etaprime_end: f64,
}

impl EtaProfile {
    /// Sign changes strictly inside `(0, pi/k)`.
    pub fn interior_zeros(&self) -> usize {
        let m = self.samples.len();
        let crossings = self
            .samples
            .windows(2)
            .filter(|w| w[0] * w[1] < 0.0 || (w[1] == 0.0 && w[0] != 0.0))
            .count();
        if self.samples[m - 1] == 0.0 {
            crossings - 1
        } else {
            crossings
        }
    }
}

pub const ETA_SAMPLES: usize = 512;

/// Solves `eta'' + eta + (1/alpha) h^(-1-1/alpha) eta = 0` on `[0, pi/k]` with
/// `eta'(0) = 0` and `eta(0) = d/dr [r U_min(r)]` at `r*`.
pub fn eta(profile: &ShrinkerProfile) -> Result<EtaProfile> {
    let k = profile.shape.fold().ok_or_else(|| {
        Error::DomainError("eta is defined for k-fold shrinkers only".into())
    })?;
    let alpha = profile.alpha;
    let r = profile.r_star;
    let (u_max, _) = initial_height(alpha, r)?;
    let eta0 = initial_height_derivative(alpha, r)?;
    let end = PI / k as f64;
    let theta: Vec<f64> = (0..=ETA_SAMPLES)
        .map(|i| end * i as f64 / ETA_SAMPLES as f64)
        .collect();
    let rhs = move |_t: f64, y: &[f64; 4]| {
        let w = y[0];
        [
            y[1],
            w.powf(-1.0 / alpha) - w,
            y[3],
            -y[2] - w.powf(-1.0 - 1.0 / alpha) * y[2] / alpha,
        ]
    };
    let ys = integrate_at(rhs, 0.0, [u_max, 0.0, eta0, 0.0], &theta, shooting_tolerance())?;
    let samples: Vec<f64> = ys.iter().map(|y| y[2]).collect();
    let derivative: Vec<f64> = ys.iter().map(|y| y[3]).collect();
    Ok(EtaProfile {
        eta0,
        eta_end: *samples.last().unwrap(),
        etaprime_end: *derivative.last().unwrap(),
        theta,
        samples,
        derivative,
    })
}

/// Profile values at arbitrary angles, by shooting rather than from the grid.
pub fn profile_values(profile: &ShrinkerProfile, thetas: &[f64]) -> Result<Vec<f64>> {
    match profile.shape {
        Shape::Circle => Ok(vec![1.0; thetas.len()]),
        Shape::KFold(k) => {
            let folded: Vec<f64> = thetas.iter().map(|t| fold_angle(*t, k)).collect();
            let mut order: Vec<usize> = (0..folded.len()).collect();
            order.sort_by(|a, b| folded[*a].partial_cmp(&folded[*b]).unwrap());
            let sorted: Vec<f64> = order.iter().map(|i| folded[*i]).collect();
            let vals = shooting_profile(profile.alpha, profile.r_star, &sorted)?;
            let mut out = vec![0.0; thetas.len()];
            for (j, i) in order.iter().enumerate() {
                out[*i] = vals[j];
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_profile_is_flat() {
        for alpha in [0.5, 1.0, 1.0 / 16.0] {
            let p = circle_shrinker(alpha, 64).unwrap();
            assert!(p.h.samples().iter().all(|v| *v == 1.0));
            assert_eq!(p.residual, 0.0);
        }
    }

    #[test]
    fn height_closed_form() {
        let a = 1.0 / 16.0;
        let (umax, umin) = initial_height(a, 2.0).unwrap();
        let expect = ((2.0 / 15.0) * (1.0 - 2f64.powi(-15)) / 3.0).powf(1.0 / 17.0);
        assert!((umin - expect).abs() < 1e-15);
        assert!((umax / umin - 2.0).abs() < 1e-15);
        let (_, u) = initial_height(a, 1.0 + 1e-6).unwrap();
        assert!((u - limit_height(a)).abs() < 1e-5);
        assert!(matches!(initial_height(a, 1.0), Err(Error::DomainError(_))));
        assert!(matches!(initial_height(a, 0.5), Err(Error::DomainError(_))));
    }

    #[test]
    fn height_derivative_matches_difference() {
        let a = 1.0 / 16.0;
        for r in [1.1, 1.5, 2.0] {
            let e = 1e-6;
            let f = |r: f64| {
                let (m, _) = initial_height(a, r).unwrap();
                m
            };
            let fd = (f(r + e) - f(r - e)) / (2.0 * e);
            assert!((fd - initial_height_derivative(a, r).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn shot_returns_to_closed_form_minimum() {
        let s = shoot(1.0 / 16.0, 1.3).unwrap();
        assert!((s.w_end - s.u_min).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(solve_shrinker(0.2, 3, 64), Err(Error::DomainError(_))));
        assert!(matches!(solve_shrinker(0.0625, 2, 64), Err(Error::DomainError(_))));
        assert!(matches!(solve_shrinker(1.0 / 15.0, 4, 64), Err(Error::DomainError(_))));
        assert!(matches!(
            eta(&circle_shrinker(0.1, 64).unwrap()),
            Err(Error::DomainError(_))
        ));
    }

    #[test]
    fn fold_angle_reflects() {
        let k = 3;
        assert!((fold_angle(0.1, k) - 0.1).abs() < 1e-15);
        assert!((fold_angle(2.0 * PI / 3.0 - 0.1, k) - 0.1).abs() < 1e-14);
        assert!((fold_angle(-0.1, k) - 0.1).abs() < 1e-14);
    }
}
