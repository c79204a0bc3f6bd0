//! Time evolution of support functions.
//!
//! Raw gauge: `u_t = -(u'' + u)^(-alpha)`. Normalized gauge:
//! `u_tau = -(u'' + u)^(-alpha) + u`, in which shrinkers are stationary.
//! The two are related by `u_norm = (1+alpha)^(-1/(1+alpha)) e^tau u(t)` with
//! `t = -e^(-(1+alpha) tau)`.

use crate::error::{Error, Result};
use crate::fourier;
use crate::geometry::{entropy, SupportFunction, CONVEXITY_EPS};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gauge {
    Raw,
    Normalized,
}

impl Gauge {
    fn dilation(self) -> f64 {
        match self {
            Gauge::Raw => 0.0,
            Gauge::Normalized => 1.0,
        }
    }
}

impl std::fmt::Display for Gauge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Gauge::Raw => write!(f, "raw"),
            Gauge::Normalized => write!(f, "normalized"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// One Rosenbrock-Euler solve per step.
    #[default]
    LinearlyImplicit,
    /// Backward Euler solved by Newton iteration.
    Newton,
}

/// `(-r^(-alpha) + gamma u, alpha r^(-alpha-1))` with the convexity check.
fn speed(u: &[f64], alpha: f64, gamma: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let ops = fourier::ops(u.len());
    let r = ops.radius(u);
    let min = r.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > CONVEXITY_EPS) {
        return Err(Error::ConvexityLost { min_radius: min });
    }
    let f = r
        .iter()
        .zip(u)
        .map(|(ri, ui)| -ri.powf(-alpha) + gamma * ui)
        .collect();
    let c = r.iter().map(|ri| alpha * ri.powf(-alpha - 1.0)).collect();
    Ok((f, c))
}

/// `I - dt (diag(c) (D2 + I) + gamma I)`.
fn step_matrix(c: &[f64], dt: f64, gamma: f64) -> DMatrix<f64> {
    let n = c.len();
    let ops = fourier::ops(n);
    let mut m = DMatrix::from_fn(n, n, |i, j| -dt * c[i] * ops.d2[(i, j)]);
    for i in 0..n {
        m[(i, i)] += 1.0 - dt * (c[i] + gamma);
    }
    m
}

fn solve(m: DMatrix<f64>, rhs: Vec<f64>) -> Result<Vec<f64>> {
    let n = rhs.len();
    let x = m
        .lu()
        .solve(&DVector::from_vec(rhs))
        .ok_or_else(|| Error::LinearSolveFailure("singular step matrix".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::LinearSolveFailure("non-finite increment".into()));
    }
    Ok((0..n).map(|i| x[i]).collect())
}

fn linear_step(u: &[f64], alpha: f64, gamma: f64, dt: f64) -> Result<Vec<f64>> {
    let (f, c) = speed(u, alpha, gamma)?;
    let rhs = f.iter().map(|v| dt * v).collect();
    let w = solve(step_matrix(&c, dt, gamma), rhs)?;
    Ok(u.iter().zip(&w).map(|(a, b)| a + b).collect())
}

fn newton_step(u: &[f64], alpha: f64, gamma: f64, dt: f64) -> Result<Vec<f64>> {
    let mut v = linear_step(u, alpha, gamma, dt)?;
    for _ in 0..20 {
        let (f, c) = speed(&v, alpha, gamma)?;
        let g: Vec<f64> = (0..v.len()).map(|i| -(v[i] - u[i] - dt * f[i])).collect();
        let delta = solve(step_matrix(&c, dt, gamma), g)?;
        let size = delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        for (vi, di) in v.iter_mut().zip(&delta) {
            *vi += di;
        }
        if size < 1e-14 * (1.0 + v.iter().fold(0.0f64, |m, x| m.max(x.abs()))) {
            return Ok(v);
        }
    }
    Err(Error::LinearSolveFailure("Newton iteration did not converge".into()))
}

fn raw_step(u: &[f64], alpha: f64, gauge: Gauge, dt: f64, scheme: Scheme) -> Result<Vec<f64>> {
    let gamma = gauge.dilation();
    let v = match scheme {
        Scheme::LinearlyImplicit => linear_step(u, alpha, gamma, dt)?,
        Scheme::Newton => newton_step(u, alpha, gamma, dt)?,
    };
    let r = fourier::ops(v.len()).radius(&v);
    let min = r.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > CONVEXITY_EPS) {
        return Err(Error::ConvexityLost { min_radius: min });
    }
    Ok(v)
}

/// One linearly implicit step of the normalized flow.
pub fn step_normalized(u: &SupportFunction, dtau: f64) -> Result<SupportFunction> {
    if !(dtau > 0.0) {
        return Err(Error::DomainError(format!("time step must be positive, got {dtau}")));
    }
    u.with_samples(raw_step(u.samples(), u.alpha(), Gauge::Normalized, dtau, Scheme::LinearlyImplicit)?)
}

/// One linearly implicit step of the raw flow.
pub fn step_raw(u: &SupportFunction, dt: f64) -> Result<SupportFunction> {
    if !(dt > 0.0) {
        return Err(Error::DomainError(format!("time step must be positive, got {dt}")));
    }
    u.with_samples(raw_step(u.samples(), u.alpha(), Gauge::Raw, dt, Scheme::LinearlyImplicit)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveOptions {
    pub t_start: f64,
    /// Step-doubling error tolerance, relative to `max(1, sup|u|)`.
    pub tol: f64,
    /// Spacing of stored snapshots.
    pub dt_out: f64,
    pub dt_initial: f64,
    pub dt_max: f64,
    pub scheme: Scheme,
    pub compute_entropy: bool,
    /// Treat `min u < extinction_fraction * max u0` as extinction.
    pub extinction_fraction: f64,
    /// Return the trajectory up to extinction instead of an error.
    pub stop_at_extinction: bool,
    pub max_steps: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            t_start: 0.0,
            tol: 1e-8,
            dt_out: 0.1,
            dt_initial: 1e-4,
            dt_max: 0.1,
            scheme: Scheme::LinearlyImplicit,
            compute_entropy: false,
            extinction_fraction: 1e-3,
            stop_at_extinction: false,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub min_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub gauge: Gauge,
    pub alpha: f64,
    pub times: Vec<f64>,
    pub snapshots: Vec<SupportFunction>,
    pub entropy_series: Option<Vec<f64>>,
    pub step_stats: StepStats,
    /// Set when the run stopped at extinction.
    pub extinction_time: Option<f64>,
}

impl FlowTrajectory {
    pub fn last(&self) -> &SupportFunction {
        self.snapshots.last().expect("trajectory holds the initial snapshot")
    }
}

const MAX_HALVINGS: usize = 40;

/// Adaptive integration from `opts.t_start` to `t_end` by step doubling with
/// local extrapolation. Snapshots are taken at multiples of `dt_out` after
/// `t_start` and at `t_end`; steps are clipped to land on them.
pub fn evolve(u0: &SupportFunction, gauge: Gauge, t_end: f64, opts: &EvolveOptions) -> Result<FlowTrajectory> {
    if !(t_end > opts.t_start) {
        return Err(Error::DomainError(format!(
            "end time {t_end} must exceed start time {}",
            opts.t_start
        )));
    }
    if !(opts.tol > 0.0 && opts.dt_out > 0.0 && opts.dt_initial > 0.0 && opts.dt_max > 0.0) {
        return Err(Error::Config("tolerance and step sizes must be positive".into()));
    }
    u0.check_convex()?;
    let alpha = u0.alpha();
    let scale0 = u0.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut stats = StepStats {
        min_radius: u0.min_radius(),
        ..Default::default()
    };
    let mut times = vec![opts.t_start];
    let mut snapshots = vec![u0.clone()];
    let mut u = u0.samples().to_vec();
    let mut t = opts.t_start;
    let mut dt = opts.dt_initial.min(opts.dt_max);
    let mut out_index = 1usize;
    let mut extinction_time = None;

    let extinct = |u: &[f64]| -> bool {
        u.iter().copied().fold(f64::INFINITY, f64::min) < opts.extinction_fraction * scale0
    };

    'outer: while t < t_end {
        let next_out = (opts.t_start + out_index as f64 * opts.dt_out).min(t_end);
        let mut halvings = 0;
        loop {
            if stats.accepted + stats.rejected > opts.max_steps {
                return Err(Error::IntegrationFailed(format!("step budget exhausted at t = {t}")));
            }
            let h = dt.min(next_out - t);
            let hits_output = h >= next_out - t;
            let attempt = (|| -> Result<(Vec<f64>, f64)> {
                let full = raw_step(&u, alpha, gauge, h, opts.scheme)?;
                let half = raw_step(&u, alpha, gauge, 0.5 * h, opts.scheme)?;
                let half = raw_step(&half, alpha, gauge, 0.5 * h, opts.scheme)?;
                let size = half.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                let err = half
                    .iter()
                    .zip(&full)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
                    / (opts.tol * size);
                let extrapolated: Vec<f64> = half.iter().zip(&full).map(|(a, b)| 2.0 * a - b).collect();
                Ok((extrapolated, err))
            })();
            match attempt {
                Ok((next, err)) if err <= 1.0 => {
                    let r = fourier::ops(next.len()).radius(&next);
                    let min_r = r.iter().copied().fold(f64::INFINITY, f64::min);
                    if !(min_r > CONVEXITY_EPS) || next.iter().any(|v| !v.is_finite()) {
                        if extinct(&u) || h < 1e-14 * t.abs().max(1.0) {
                            extinction_time = Some(t);
                            break 'outer;
                        }
                        halvings += 1;
                        stats.rejected += 1;
                        dt = 0.5 * h;
                        if halvings > MAX_HALVINGS {
                            return Err(Error::ConvexityLost { min_radius: min_r });
                        }
                        continue;
                    }
                    stats.accepted += 1;
                    stats.min_radius = stats.min_radius.min(min_r);
                    t = if hits_output { next_out } else { t + h };
                    u = next;
                    let factor = if err == 0.0 { 4.0 } else { (0.9 / err.sqrt()).clamp(0.2, 4.0) };
                    if !hits_output || factor < 1.0 {
                        dt = (h * factor).min(opts.dt_max);
                    }
                    if extinct(&u) {
                        extinction_time = Some(t);
                        times.push(t);
                        snapshots.push(u0.with_samples(u.clone())?);
                        break 'outer;
                    }
                    if hits_output {
                        times.push(t);
                        snapshots.push(u0.with_samples(u.clone())?);
                        out_index += 1;
                    }
                    break;
                }
                Ok((_, err)) => {
                    stats.rejected += 1;
                    dt = h * (0.9 / err.sqrt()).clamp(0.2, 1.0);
                }
                Err(Error::ConvexityLost { .. }) | Err(Error::LinearSolveFailure(_)) if halvings < MAX_HALVINGS => {
                    halvings += 1;
                    stats.rejected += 1;
                    dt = 0.5 * h;
                }
                Err(e) => {
                    if extinct(&u) || matches!(e, Error::ConvexityLost { .. }) {
                        extinction_time = Some(t);
                        break 'outer;
                    }
                    return Err(e);
                }
            }
            if dt < 1e-14 * t.abs().max(1.0) {
                extinction_time = Some(t);
                break 'outer;
            }
        }
    }

    if let Some(time) = extinction_time {
        if !opts.stop_at_extinction {
            return Err(Error::Extinction { time });
        }
    }
    let mut traj = FlowTrajectory {
        gauge,
        alpha,
        times,
        snapshots,
        entropy_series: None,
        step_stats: stats,
        extinction_time,
    };
    if opts.compute_entropy {
        traj.entropy_series = Some(entropy_along(&traj)?.values);
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaugeDirection {
    RawToNormalized,
    NormalizedToRaw,
}

/// Converts a snapshot between gauges, returning the new profile and time.
pub fn gauge_convert(u: &SupportFunction, direction: GaugeDirection, time: f64) -> Result<(SupportFunction, f64)> {
    let a = u.alpha();
    let c = (1.0 + a).powf(-1.0 / (1.0 + a));
    match direction {
        GaugeDirection::RawToNormalized => {
            if !(time < 0.0) {
                return Err(Error::DomainError(format!("raw time must be negative, got {time}")));
            }
            let tau = -(-time).ln() / (1.0 + a);
            Ok((u.scaled(c * tau.exp())?, tau))
        }
        GaugeDirection::NormalizedToRaw => {
            let t = -(-(1.0 + a) * time).exp();
            Ok((u.scaled((-time).exp() / c)?, t))
        }
    }
}

/// Raw time of a normalized time.
pub fn raw_time(alpha: f64, tau: f64) -> f64 {
    -(-(1.0 + alpha) * tau).exp()
}

/// Radius of a raw shrinking circle.
pub fn circle_radius(alpha: f64, r0: f64, t: f64) -> f64 {
    (r0.powf(1.0 + alpha) - (1.0 + alpha) * t).powf(1.0 / (1.0 + alpha))
}

/// Normalized-gauge radius of a circle with initial radius `c`.
pub fn normalized_circle_radius(alpha: f64, c: f64, tau: f64) -> f64 {
    (1.0 + (c.powf(1.0 + alpha) - 1.0) * ((1.0 + alpha) * tau).exp()).powf(1.0 / (1.0 + alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropySeries {
    pub values: Vec<f64>,
    /// Largest increase between consecutive snapshots (negative if strictly decreasing).
    pub max_increase: f64,
    pub nonincreasing: bool,
}

pub const ENTROPY_SLACK: f64 = 1e-8;

pub fn entropy_along(traj: &FlowTrajectory) -> Result<EntropySeries> {
    let values = traj
        .snapshots
        .iter()
        .map(|s| entropy(s).map(|r| r.value))
        .collect::<Result<Vec<f64>>>()?;
    let max_increase = values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(EntropySeries {
        nonincreasing: values.len() < 2 || max_increase <= ENTROPY_SLACK,
        max_increase,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_circle_is_fixed_in_normalized_gauge() {
        let u = SupportFunction::constant(0.5, 32, 1.0).unwrap();
        let v = step_normalized(&u, 0.1).unwrap();
        assert!(v.samples().iter().all(|x| (x - 1.0).abs() < 1e-14));
    }

    #[test]
    fn circle_step_is_second_order_locally() {
        let a = 0.5;
        let u = SupportFunction::constant(a, 32, 1.3).unwrap();
        let errs: Vec<f64> = [1e-2, 5e-3]
            .iter()
            .map(|&dt| {
                let v = step_raw(&u, dt).unwrap();
                (v.samples()[0] - circle_radius(a, 1.3, dt)).abs()
            })
            .collect();
        let order = (errs[0] / errs[1]).log2();
        assert!((order - 2.0).abs() < 0.1, "{order}");
    }

    #[test]
    fn gauge_round_trip() {
        let u = SupportFunction::from_fn(0.25, 32, |t| 1.0 + 0.2 * t.cos() + 0.01 * (2.0 * t).cos()).unwrap();
        let (v, tau) = gauge_convert(&u, GaugeDirection::RawToNormalized, -0.3).unwrap();
        let (w, t) = gauge_convert(&v, GaugeDirection::NormalizedToRaw, tau).unwrap();
        assert!((t + 0.3).abs() < 1e-15);
        assert!(w.sup_distance(&u) < 1e-12);
        let (_, t0) = gauge_convert(&u, GaugeDirection::NormalizedToRaw, 0.0).unwrap();
        assert_eq!(t0, -1.0);
        assert!(matches!(
            gauge_convert(&u, GaugeDirection::RawToNormalized, 0.0),
            Err(Error::DomainError(_))
        ));
    }

    #[test]
    fn shrinking_circle_maps_to_unit_circle() {
        let a = 1.0 / 16.0;
        for t in [-2.0, -1.0, -0.25] {
            let r = ((1.0 + a) * (-t as f64)).powf(1.0 / (1.0 + a));
            let u = SupportFunction::constant(a, 16, r).unwrap();
            let (v, _) = gauge_convert(&u, GaugeDirection::RawToNormalized, t).unwrap();
            assert!(v.samples().iter().all(|x| (x - 1.0).abs() < 1e-14));
        }
    }
}
