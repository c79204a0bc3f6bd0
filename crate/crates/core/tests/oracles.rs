//! Reference values from independent computations in test code, and
//! invariants of constructed ancient solutions.

use ancientflow::ancient::{
    construct_ancient, entropy_along_solution, linear_mode_ansatz, AncientOptions, AncientSolution,
    CoefficientVector,
};
use ancientflow::geometry::entropy;
use ancientflow::shrinker::{circle_shrinker, solve_shrinker, ShrinkerProfile};
use ancientflow::spectrum::{spectrum, SpectralDecomposition};
use std::f64::consts::PI;

/// Minimum height of the periodic orbit whose maximum is `r` times its
/// minimum, from equal values of `u'^2/2 + u^2/2 - u^p/p` with `p = 1 - 1/alpha`.
fn orbit_minimum(alpha: f64, r: f64) -> f64 {
    let p = 1.0 - 1.0 / alpha;
    (2.0 * (r.powf(p) - 1.0) / (p * (r * r - 1.0))).powf(alpha / (1.0 + alpha))
}

fn rk4(alpha: f64, y: [f64; 2], dt: f64) -> [f64; 2] {
    let f = |y: [f64; 2]| [y[1], y[0].powf(-1.0 / alpha) - y[0]];
    let add = |y: [f64; 2], k: [f64; 2], s: f64| [y[0] + s * k[0], y[1] + s * k[1]];
    let k1 = f(y);
    let k2 = f(add(y, k1, dt / 2.0));
    let k3 = f(add(y, k2, dt / 2.0));
    let k4 = f(add(y, k3, dt));
    [
        y[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Angle from the maximum to the next minimum, by fixed-step RK4 and
/// bisection on the length of the last step.
fn half_period(alpha: f64, r: f64) -> f64 {
    let dt = 2e-5;
    let mut y = [r * orbit_minimum(alpha, r), 0.0];
    let mut theta = 0.0;
    loop {
        let next = rk4(alpha, y, dt);
        if theta > 0.0 && next[1] >= 0.0 {
            let (mut lo, mut hi) = (0.0, dt);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if rk4(alpha, y, mid)[1] >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return theta + 0.5 * (lo + hi);
        }
        y = next;
        theta += dt;
    }
}

fn oracle_ratio(alpha: f64, k: usize) -> f64 {
    let target = PI / k as f64;
    let (mut lo, mut hi) = (1.0 + 1e-6, 4.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if half_period(alpha, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Height ratio of the 3-fold shrinker at alpha = 1/16, from `oracle_ratio`.
const RATIO_K3_ALPHA_16: f64 = 1.783_028_843_701_143_5;

#[test]
fn height_ratio_oracle_is_frozen() {
    let r = oracle_ratio(1.0 / 16.0, 3);
    assert!((r - RATIO_K3_ALPHA_16).abs() < 1e-12, "{r}");
}

#[test]
fn solver_height_ratio_matches_oracle() {
    let p = solve_shrinker(1.0 / 16.0, 3, 256).unwrap();
    assert!((p.r_star - RATIO_K3_ALPHA_16).abs() < 1e-9, "{}", p.r_star);
    for (alpha, k) in [(1.0 / 24.0, 4), (1.0 / 40.0, 5)] {
        let r = oracle_ratio(alpha, k);
        let p = solve_shrinker(alpha, k, 256).unwrap();
        assert!((p.r_star - r).abs() < 1e-9, "k = {k}: {} vs {r}", p.r_star);
    }
}

#[test]
fn orbit_minimum_balances_energy() {
    let alpha: f64 = 1.0 / 16.0;
    let p = 1.0 - 1.0 / alpha;
    let energy = |u: f64| 0.5 * u * u - u.powf(p) / p;
    for r in [1.1, RATIO_K3_ALPHA_16, 3.0] {
        let m = orbit_minimum(alpha, r);
        assert!((energy(r * m) - energy(m)).abs() < 1e-12 * energy(m).abs());
    }
}

struct Setup {
    profile: ShrinkerProfile,
    dec: SpectralDecomposition,
}

fn k3() -> Setup {
    k3_on(64)
}

fn k3_on(n: usize) -> Setup {
    let profile = solve_shrinker(1.0 / 16.0, 3, n).unwrap();
    let dec = spectrum(&profile, n, n).unwrap();
    Setup { profile, dec }
}

fn solve(s: &Setup, a: &[f64]) -> AncientSolution {
    let a = CoefficientVector::new(a.to_vec());
    construct_ancient(&s.profile, &s.dec, &a, &AncientOptions::default()).unwrap()
}

const A: [f64; 5] = [2e-3, -1.5e-3, 1e-3, 2.5e-3, -1e-3];

#[test]
fn iterates_contract_by_half() {
    let s = k3();
    let sol = solve(&s, &A);
    for layer in &sol.layers {
        for w in layer.changes.windows(2) {
            if w[0] > 1e-12 {
                assert!(w[1] <= 0.5 * w[0], "layer {}: {:?}", layer.layer, layer.changes);
            }
        }
    }
}

#[test]
fn correction_is_quadratic_in_coefficients() {
    let s = k3();
    let correction = |a: &[f64]| {
        let sol = solve(&s, a);
        let lin = linear_mode_ansatz(&s.dec, &sol.a, &(0..a.len()).collect::<Vec<_>>(), &sol.taus());
        (0..sol.len())
            .map(|c| {
                sol.v_at(c)
                    .iter()
                    .enumerate()
                    .fold(0.0f64, |m, (i, v)| m.max((v - lin[(i, c)]).abs()))
            })
            .fold(0.0f64, f64::max)
    };
    let half: Vec<f64> = A.iter().map(|x| 0.5 * x).collect();
    let ratio = correction(&A) / correction(&half);
    assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn endpoint_depends_lipschitz_on_coefficients() {
    let s = k3();
    let base = solve(&s, &A);
    let end = base.len() - 1;
    let diff = |eta: f64| {
        let mut b = A;
        b[3] += eta;
        let sol = solve(&s, &b);
        sol.v_at(end)
            .iter()
            .zip(base.v_at(end))
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    };
    let (d1, d2) = (diff(1e-6), diff(2e-6));
    assert!(d1 > 0.0 && d1 / 1e-6 < 100.0, "{d1}");
    assert!((d2 / d1 - 2.0).abs() < 0.02, "{d1} {d2}");
}

#[test]
fn entropy_stays_below_shrinker_and_decreases() {
    for s in [k3_on(256), {
        let profile = circle_shrinker(1.0 / 16.0, 64).unwrap();
        let dec = spectrum(&profile, 64, 64).unwrap();
        Setup { profile, dec }
    }] {
        let mut a = vec![0.0; s.dec.morse_index];
        a[..5].copy_from_slice(&[1e-3, 0.0, 0.0, -2e-3, 1e-3]);
        let sol = solve(&s, &a);
        let cap = entropy(&s.profile.h).unwrap().value + 1e-6;
        let series = entropy_along_solution(&sol, 100).unwrap();
        for w in series.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-10, "{:?}", w);
        }
        assert!(series.iter().all(|(_, e)| *e <= cap));
    }
}
