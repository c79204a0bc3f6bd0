//! Moving the space-time center of an ancient flow changes only the
//! coefficients of the dilation and translation modes. This compares the
//! predicted change with two raw flows, one translated, after renormalizing.
//! It also shows how large coefficient vectors are brought into range by a time shift.
//!
//! cargo run --release --example recentering

use ancientflow::ancient::{recenter, time_shift, time_shift_formula, CoefficientVector};
use ancientflow::flow::{evolve, gauge_convert, raw_time, EvolveOptions, Gauge, GaugeDirection};
use ancientflow::geometry::inner_h;
use ancientflow::shrinker::solve_shrinker;
use ancientflow::spectrum::spectrum;

fn main() -> anyhow::Result<()> {
    let alpha = 1.0 / 16.0;
    let profile = solve_shrinker(alpha, 3, 128)?;
    let dec = spectrum(&profile, 128, 8)?;
    let unstable = dec.morse_index;

    let moved = recenter(&CoefficientVector::zeros(unstable), [0.2, 0.1, -0.05], &dec)?;
    println!("time shift 0.2, translation (0.1, -0.05): coefficient change {:?}", &moved.a[..3]);

    let c = (1.0 + alpha).powf(-1.0 / (1.0 + alpha));
    let u0 = profile.h.scaled(1.0 / c)?;
    let opts = EvolveOptions {
        t_start: -1.0,
        dt_out: 0.1,
        ..Default::default()
    };
    let t_end = raw_time(alpha, 1.0);
    let a = evolve(&u0, Gauge::Raw, t_end, &opts)?;
    let b = evolve(&u0.translated([0.1, 0.0])?, Gauge::Raw, t_end, &opts)?;
    let predicted = recenter(&CoefficientVector::zeros(unstable), [0.0, 0.1, 0.0], &dec)?.a[1];
    for ((t, ua), ub) in a.times.iter().zip(&a.snapshots).zip(&b.snapshots) {
        let (na, tau) = gauge_convert(ua, GaugeDirection::RawToNormalized, *t)?;
        let (nb, _) = gauge_convert(ub, GaugeDirection::RawToNormalized, *t)?;
        let diff: Vec<f64> = nb.samples().iter().zip(na.samples()).map(|(x, y)| x - y).collect();
        let coef = inner_h(&diff, &dec.eigenfunctions[1], &dec.h);
        println!("tau {tau:.3}: cos-mode coefficient / e^tau = {:.10} (predicted {predicted:.10})", coef / tau.exp());
    }

    let big = CoefficientVector::new(vec![0.6, 0.0, 0.0, 0.5, -0.6]);
    let shift = time_shift(&big, &dec.eigenvalues[..unstable], alpha, 1e-2);
    println!(
        "|a| = {:.3}: closed-form shift {:.4}, applied shift {:.4}, rescaled |a| = {:.3e}",
        big.norm(),
        time_shift_formula(alpha, big.norm(), 1e-2),
        shift.shift,
        shift.scaled.norm()
    );
    Ok(())
}
