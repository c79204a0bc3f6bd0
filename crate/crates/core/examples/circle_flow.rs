//! Shrinking and expanding circles against their closed forms, in both gauges.
//!
//! cargo run --release --example circle_flow

use ancientflow::flow::{circle_radius, evolve, normalized_circle_radius, EvolveOptions, Gauge};
use ancientflow::geometry::area;
use ancientflow::SupportFunction;

fn main() -> anyhow::Result<()> {
    let opts = EvolveOptions::default();
    for alpha in [1.0 / 16.0, 0.5, 1.0] {
        let r0 = 1.5;
        let u0 = SupportFunction::constant(alpha, 64, r0)?;
        let t_end = 0.9 * r0.powf(1.0 + alpha) / (1.0 + alpha);
        let traj = evolve(&u0, Gauge::Raw, t_end, &opts)?;
        let err = traj
            .times
            .iter()
            .zip(&traj.snapshots)
            .map(|(t, s)| (s.samples()[0] - circle_radius(alpha, r0, *t)).abs())
            .fold(0.0, f64::max);
        println!(
            "raw        alpha = {alpha:<8.5} R0 = {r0}: max error {err:.2e} over {} snapshots ({} steps)",
            traj.times.len(),
            traj.step_stats.accepted
        );

        for c in [0.9, 1.1] {
            let u0 = SupportFunction::constant(alpha, 64, c)?;
            let traj = evolve(&u0, Gauge::Normalized, 0.5, &opts)?;
            let err = traj
                .times
                .iter()
                .zip(&traj.snapshots)
                .map(|(t, s)| (s.samples()[0] - normalized_circle_radius(alpha, c, *t)).abs())
                .fold(0.0, f64::max);
            println!("normalized alpha = {alpha:<8.5} c = {c}: max error {err:.2e}");
        }
    }

    let u0 = SupportFunction::constant(1.0, 64, 1.0)?;
    let traj = evolve(&u0, Gauge::Raw, 0.3, &opts)?;
    let a0 = area(&traj.snapshots[0])?;
    let a1 = area(traj.last())?;
    println!("alpha = 1 area loss rate: {:.10} (2 pi = {:.10})", (a0 - a1) / 0.3, 2.0 * std::f64::consts::PI);
    Ok(())
}
