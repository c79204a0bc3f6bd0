//! Solves k-fold shrinkers and prints their shooting data.
//!
//! cargo run --release --example shrinker_profile -- 3 0.0625 256

use ancientflow::shrinker::{eta, period, solve_shrinker};
use std::time::Instant;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let k: usize = args.first().map(|s| s.parse()).transpose()?.unwrap_or(3);
    let alpha: f64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(1.0 / 16.0);
    let n: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(256);

    let start = Instant::now();
    let p = solve_shrinker(alpha, k, n)?;
    let h = p.h.samples();
    let max = h.iter().cloned().fold(f64::MIN, f64::max);
    let min = h.iter().cloned().fold(f64::MAX, f64::min);
    println!("k = {k}, alpha = {alpha}, N = {n}  ({:.2?})", start.elapsed());
    println!("r*               = {:.15}", p.r_star);
    println!("Theta(r*) - pi/k = {:.3e}", period(alpha, p.r_star)? - std::f64::consts::PI / k as f64);
    println!("residual         = {:.3e}", p.residual);
    println!("max h / min h    = {:.15} (grid samples)", max / min);
    println!("min radius       = {:.6e}", p.h.min_radius());
    println!("isoperimetric    = {:.12}", p.isoperimetric_ratio());
    let e = eta(&p)?;
    println!("eta(0) = {:.6}, eta(pi/k) = {:.6}, eta'(pi/k) = {:.6}, interior zeros = {}",
        e.eta0, e.eta_end, e.etaprime_end, e.interior_zeros());
    Ok(())
}
