//! Entropy of convex curves: invariance under dilation and translation, and
//! its decay along the raw flow of randomly generated curves.
//!
//! cargo run --release --example entropy_monotonicity -- [seed]

use ancientflow::flow::{entropy_along, evolve, EvolveOptions, Gauge};
use ancientflow::geometry::entropy;
use ancientflow::verify::random_convex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(Ok(1), |s| s.parse())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for alpha in [1.0 / 16.0, 0.5, 1.0] {
        let u = random_convex(&mut rng, alpha, 128)?;
        let e = entropy(&u)?;
        let moved = entropy(&u.scaled(2.5)?.translated([0.7, -0.4])?)?;
        println!(
            "alpha {alpha:<7.4}: entropy {:.12} at center ({:.4}, {:.4}); dilated and translated {:.12}",
            e.value, e.center[0], e.center[1], moved.value
        );
        let scale = u.samples().iter().fold(f64::INFINITY, |m, v| m.min(*v));
        let t_end = 0.4 * scale.powf(1.0 + alpha) / (1.0 + alpha);
        let opts = EvolveOptions {
            dt_out: t_end / 10.0,
            ..Default::default()
        };
        let traj = evolve(&u, Gauge::Raw, t_end, &opts)?;
        let series = entropy_along(&traj)?;
        let values: Vec<String> = series.values.iter().map(|v| format!("{v:.6}")).collect();
        println!(
            "  along the flow: [{}], nonincreasing: {}",
            values.join(", "),
            series.nonincreasing
        );
    }
    Ok(())
}
