//! Perturbs a shrinker along single eigenfunctions and compares the growth
//! or decay of the perturbation under the normalized flow with the eigenvalue.
//!
//! cargo run --release --example shrinker_stability -- [k] [alpha]

use ancientflow::ancient::project;
use ancientflow::flow::{evolve, EvolveOptions, Gauge};
use ancientflow::shrinker::solve_shrinker;
use ancientflow::spectrum::spectrum;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let k: usize = args.first().map_or(Ok(3), |s| s.parse())?;
    let alpha: f64 = args.get(1).map_or(Ok(1.0 / 16.0), |s| s.parse())?;
    let n = 128;
    let profile = solve_shrinker(alpha, k, n)?;
    let dec = spectrum(&profile, n, 2 * k + 2)?;
    let eps = 1e-5;
    let span = 1.0;
    let opts = EvolveOptions {
        dt_out: span,
        tol: 1e-11,
        ..Default::default()
    };
    let base = evolve(&profile.h, Gauge::Normalized, span, &opts)?;
    for j in 0..dec.len() {
        let u0 = profile.h.with_samples(
            profile
                .h
                .samples()
                .iter()
                .zip(&dec.eigenfunctions[j])
                .map(|(h, p)| h + eps * p)
                .collect(),
        )?;
        let traj = evolve(&u0, Gauge::Normalized, span, &opts)?;
        let v: Vec<f64> = traj
            .last()
            .samples()
            .iter()
            .zip(base.last().samples())
            .map(|(u, h)| u - h)
            .collect();
        let rate = (project(&dec, &v, j) / eps).ln() / span;
        println!(
            "mode {:2}: lambda {:+.8}  observed rate {:+.8}",
            j + 1,
            dec.eigenvalues[j],
            rate
        );
    }
    Ok(())
}
