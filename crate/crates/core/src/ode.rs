//! Adaptive Dormand-Prince 5(4) integrator for small autonomous-in-form
//! systems `y' = f(t, y)` with fixed dimension, plus first-crossing event
//! location.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            abs: 1e-12,
            rel: 1e-12,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// error coefficients b - b*
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const MAX_STEPS: usize = 2_000_000;

/// One Dormand-Prince step; returns the fifth-order solution and the
/// embedded error estimate.
pub fn dopri_step<const D: usize, F>(f: &F, t: f64, y: &[f64; D], h: f64) -> ([f64; D], [f64; D])
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    let comb = |terms: &[(f64, &[f64; D])]| {
        let mut out = *y;
        for (c, k) in terms {
            for i in 0..D {
                out[i] += h * c * k[i];
            }
        }
        out
    };
    let k1 = f(t, y);
    let k2 = f(t + C2 * h, &comb(&[(A21, &k1)]));
    let k3 = f(t + C3 * h, &comb(&[(A31, &k1), (A32, &k2)]));
    let k4 = f(t + C4 * h, &comb(&[(A41, &k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(
        t + C5 * h,
        &comb(&[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    let k6 = f(
        t + h,
        &comb(&[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    );
    let y5 = comb(&[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    let k7 = f(t + h, &y5);
    let mut err = [0.0; D];
    for i in 0..D {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    (y5, err)
}

fn error_norm<const D: usize>(y0: &[f64; D], y1: &[f64; D], err: &[f64; D], tol: Tolerance) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..D {
        let sc = tol.abs + tol.rel * y0[i].abs().max(y1[i].abs());
        m = m.max((err[i] / sc).abs());
    }
    m
}

/// Adaptive integrator state.
pub struct Integrator<const D: usize, F> {
    f: F,
    tol: Tolerance,
    pub t: f64,
    pub y: [f64; D],
    h: f64,
    pub steps: usize,
}

impl<const D: usize, F> Integrator<D, F>
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    pub fn new(f: F, t0: f64, y0: [f64; D], tol: Tolerance) -> Self {
        Integrator {
            f,
            tol,
            t: t0,
            y: y0,
            h: 1e-3,
            steps: 0,
        }
    }

    /// Takes one accepted adaptive step, never passing `t_stop`.
    /// Returns the state before the step.
    pub fn step(&mut self, t_stop: f64) -> Result<(f64, [f64; D])> {
        let prev = (self.t, self.y);
        let dir = (t_stop - self.t).signum();
        loop {
            let remaining = (t_stop - self.t).abs();
            let mut h = self.h.abs().min(remaining);
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            let (y1, err) = dopri_step(&self.f, self.t, &self.y, dir * h);
            let en = error_norm(&self.y, &y1, &err, self.tol);
            if !en.is_finite() {
                self.h = 0.25 * h;
                if self.h < 1e-15 {
                    return Err(Error::IntegrationFailed("non-finite state".into()));
                }
                continue;
            }
            let factor = if en == 0.0 {
                5.0
            } else {
                (0.9 * en.powf(-0.2)).clamp(0.2, 5.0)
            };
            if en <= 1.0 {
                self.t = if last { t_stop } else { self.t + dir * h };
                self.y = y1;
                self.steps += 1;
                if !last || factor < 1.0 {
                    self.h = h * factor;
                }
                return Ok(prev);
            }
            self.h = h * factor;
            if self.h < 1e-15 {
                return Err(Error::IntegrationFailed(format!("step size underflow at t = {}", self.t)));
            }
            if self.steps > MAX_STEPS {
                return Err(Error::IntegrationFailed("too many steps".into()));
            }
        }
    }

    pub fn advance_to(&mut self, t_end: f64) -> Result<[f64; D]> {
        while self.t != t_end {
            self.step(t_end)?;
            if self.steps > MAX_STEPS {
                return Err(Error::IntegrationFailed("too many steps".into()));
            }
        }
        Ok(self.y)
    }

    /// Integrates until `g(t, y)` changes sign from negative to non-negative
    /// (if `rising`) or positive to non-positive, locating the crossing by
    /// bisection on the length of a single step from the bracketing state.
    pub fn find_event(
        &mut self,
        t_max: f64,
        g: impl Fn(f64, &[f64; D]) -> f64,
        rising: bool,
        t_tol: f64,
    ) -> Result<Option<(f64, [f64; D])>> {
        let crosses = |a: f64, b: f64| if rising { a < 0.0 && b >= 0.0 } else { a > 0.0 && b <= 0.0 };
        let mut g_prev = g(self.t, &self.y);
        while self.t < t_max {
            let (t0, y0) = self.step(t_max)?;
            let g_now = g(self.t, &self.y);
            if crosses(g_prev, g_now) {
                let (mut lo, mut hi) = (0.0, self.t - t0);
                let mut g_lo = g_prev;
                while hi - lo > t_tol {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    let (ym, _) = dopri_step(&self.f, t0, &y0, mid);
                    let gm = g(t0 + mid, &ym);
                    if crosses(g_lo, gm) {
                        hi = mid;
                    } else {
                        lo = mid;
                        g_lo = gm;
                    }
                }
                let t_ev = t0 + hi;
                let (y_ev, _) = dopri_step(&self.f, t0, &y0, hi);
                self.t = t_ev;
                self.y = y_ev;
                return Ok(Some((t_ev, y_ev)));
            }
            g_prev = g_now;
        }
        Ok(None)
    }
}

/// Integrates from `t0` and records the state at each (increasing) target.
pub fn integrate_at<const D: usize, F>(
    f: F,
    t0: f64,
    y0: [f64; D],
    targets: &[f64],
    tol: Tolerance,
) -> Result<Vec<[f64; D]>>
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    let mut it = Integrator::new(f, t0, y0, tol);
    let mut out = Vec::with_capacity(targets.len());
    for &t in targets {
        if t < it.t {
            return Err(Error::IntegrationFailed("targets must be increasing".into()));
        }
        out.push(it.advance_to(t)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oscillator(_t: f64, y: &[f64; 2]) -> [f64; 2] {
        [y[1], -4.0 * y[0]]
    }

    #[test]
    fn harmonic_oscillator_period() {
        let t = std::f64::consts::PI;
        let ys = integrate_at(oscillator, 0.0, [1.0, 0.0], &[t / 4.0, t], Tolerance::default()).unwrap();
        assert!((ys[0][0] - (0.5 * t).cos()).abs() < 1e-10);
        assert!((ys[1][0] - 1.0).abs() < 1e-10);
        assert!(ys[1][1].abs() < 1e-9);
    }

    #[test]
    fn event_location_finds_first_turning_point() {
        let mut it = Integrator::new(oscillator, 0.0, [1.0, 0.0], Tolerance::default());
        // skip the initial zero of y' by requiring a rising crossing
        let (t, y) = it.find_event(4.0, |_, y| y[1], true, 1e-14).unwrap().unwrap();
        assert!((t - std::f64::consts::FRAC_PI_2).abs() < 1e-11, "{t}");
        assert!((y[0] + 1.0).abs() < 1e-10);
    }
}
