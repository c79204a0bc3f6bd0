//! Constructs ancient solutions converging to a shrinker and checks their
//! mode-wise asymptotics.
//!
//! Usage: `cargo run --release --example ancient_solution -- [k|circle] [alpha] [n]`

use ancientflow::ancient::{
    construct_ancient, cross_validate, entropy_along_solution, layer_rates, AncientOptions, CoefficientVector,
};
use ancientflow::geometry::entropy;
use ancientflow::shrinker::{circle_shrinker, solve_shrinker};
use ancientflow::spectrum::spectrum;
use std::time::Instant;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let shape = args.first().map(String::as_str).unwrap_or("3");
    let alpha: f64 = args.get(1).map_or(Ok(1.0 / 16.0), |s| s.parse())?;
    let n: usize = args.get(2).map_or(Ok(256), |s| s.parse())?;
    let profile = match shape {
        "circle" => circle_shrinker(alpha, n)?,
        k => solve_shrinker(alpha, k.parse()?, n)?,
    };
    let clock = Instant::now();
    let dec = spectrum(&profile, n, n)?;
    let unstable = dec.morse_index;
    println!("shape {} alpha {alpha} n {n}: {unstable} unstable modes ({:.2?})", profile.shape, clock.elapsed());

    let opts = AncientOptions::default();
    let zero = construct_ancient(&profile, &dec, &CoefficientVector::zeros(unstable), &opts)?;
    println!("a = 0: sup|v| = {:.3e}", zero.sup_norm());

    let mut a = vec![0.0; unstable];
    for (i, x) in a.iter_mut().enumerate() {
        *x = 3e-3 * (1.0 + 0.3 * i as f64) * if i % 2 == 0 { 1.0 } else { -1.0 };
    }
    let a = CoefficientVector::new(a);
    let clock = Instant::now();
    let sol = construct_ancient(&profile, &dec, &a, &opts)?;
    println!("|a| = {:.3e}, built in {:.2?}, sup|v| = {:.3e}", a.norm(), clock.elapsed(), sol.sup_norm());
    for layer in &sol.layers {
        let ratios: Vec<String> = layer
            .changes
            .windows(2)
            .map(|w| format!("{:.2}", w[1] / w[0]))
            .collect();
        println!(
            "  layer {:2} modes {:?} delta {:.4} iterations {} ratios [{}]",
            layer.layer,
            layer.modes,
            layer.delta,
            layer.iterations,
            ratios.join(" ")
        );
    }
    println!("PDE residual {:.3e}", sol.pde_residual()?);

    let h_entropy = entropy(&profile.h)?.value;
    let series = entropy_along_solution(&sol, 200)?;
    let worst = series.iter().map(|(_, e)| e - h_entropy).fold(f64::NEG_INFINITY, f64::max);
    println!("entropy excess over the shrinker: {worst:.3e}");

    let cv = cross_validate(&sol, 1.0, 1e-8)?;
    println!(
        "forward check from tau {:.2} to {:.2}: error {:.3e} (tolerance {:.1e})",
        cv.tau_start, cv.tau_end, cv.sup_error, cv.tolerance
    );

    for m in [0, unstable - 1] {
        let lambda = dec.eigenvalues[m];
        let t_max = (1e-4f64 / 1e-11).ln() / lambda.abs();
        let single = CoefficientVector::unit(unstable, m, 1e-4);
        let opts = AncientOptions {
            t_max: Some(t_max.min(40.0 / (1.0 + alpha))),
            ..Default::default()
        };
        let sol = construct_ancient(&profile, &dec, &single, &opts)?;
        for rate in layer_rates(&sol)? {
            println!(
                "mode {}: slope {:.6} vs {:.6}, amplitude {:.6e} vs {:.6e}",
                rate.mode + 1,
                rate.slope,
                -rate.lambda,
                rate.recovered,
                rate.expected
            );
        }
    }
    Ok(())
}
