//! Spectrum of the linearization about k-fold shrinkers: Morse index, the
//! known eigenpairs, nodal counts and the four boundary problems.
//!
//! cargo run --release --example morse_index -- 3 0.0625 256

use ancientflow::shrinker::solve_shrinker;
use ancientflow::spectrum::{boundary_eigs, spectrum, verify_spectrum, BoundaryCondition};
use std::time::Instant;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let k: usize = args.first().map(|s| s.parse()).transpose()?.unwrap_or(3);
    let alpha: f64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(1.0 / 16.0);
    let n: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(256);

    let start = Instant::now();
    let profile = solve_shrinker(alpha, k, n)?;
    let dec = spectrum(&profile, n, 2 * k + 6)?;
    println!("k = {k}, alpha = {alpha}, N = {n}  ({:.2?})", start.elapsed());
    println!("{:>4} {:>22} {:>6} {:>6} {:>10}", "j", "lambda", "group", "zeros", "residual");
    let groups = dec.group_of();
    for j in 0..dec.len() {
        println!(
            "{:>4} {:>22.15e} {:>6} {:>6} {:>10.2e}",
            j + 1,
            dec.eigenvalues[j],
            groups[j],
            dec.nodal_counts[j].map_or("-".to_string(), |c| c.to_string()),
            dec.residual(j)
        );
    }
    let report = verify_spectrum(&dec, &profile);
    println!("morse index {} (expected {})", report.morse_index, report.morse_expected);
    println!("all checks pass: {}", report.all_pass());
    println!("{report:?}");

    let start = Instant::now();
    for bc in BoundaryCondition::ALL {
        let b = boundary_eigs(&profile, bc, 3)?;
        println!("{bc}: mu = {:?}  zeros = {:?}", b.eigenvalues, b.interior_zeros);
    }
    println!("boundary problems: {:.2?}", start.elapsed());
    Ok(())
}
