use ancientflow::ancient::{mode_duhamel, recenter, time_shift, CoefficientVector};
use ancientflow::export::fmt17;
use ancientflow::flow::{gauge_convert, GaugeDirection};
use ancientflow::geometry::{area, entropy, inner_h, SupportFunction};
use ancientflow::shrinker::circle_shrinker;
use ancientflow::spectrum::{spectrum, SpectralDecomposition};
use proptest::prelude::*;
use std::sync::OnceLock;

const N: usize = 64;

/// A convex curve: unit circle plus low harmonics small enough to keep `h + h'' > 0`.
fn curve() -> impl Strategy<Value = (f64, Vec<f64>)> {
    (
        prop::sample::select(vec![1.0 / 16.0, 0.25, 1.0]),
        prop::collection::vec(-0.005..0.005f64, 8),
    )
}

fn build(alpha: f64, c: &[f64]) -> SupportFunction {
    SupportFunction::from_fn(alpha, N, |t| {
        1.0 + (0..4)
            .map(|i| {
                let l = (i + 2) as f64;
                c[2 * i] * (l * t).cos() + c[2 * i + 1] * (l * t).sin()
            })
            .sum::<f64>()
    })
    .unwrap()
}

fn circle_spectrum() -> &'static SpectralDecomposition {
    static DEC: OnceLock<SpectralDecomposition> = OnceLock::new();
    DEC.get_or_init(|| {
        let p = circle_shrinker(1.0 / 16.0, N).unwrap();
        spectrum(&p, N, 12).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn entropy_ignores_dilation_and_translation((alpha, c) in curve(), s in 0.3..3.0f64, x in -1.0..1.0f64, y in -1.0..1.0f64) {
        let u = build(alpha, &c);
        let e = entropy(&u).unwrap().value;
        let moved = entropy(&u.scaled(s).unwrap().translated([x, y]).unwrap()).unwrap().value;
        prop_assert!((e - moved).abs() < 1e-9, "{e} vs {moved}");
    }

    #[test]
    fn area_scales_quadratically((alpha, c) in curve(), s in 0.1..10.0f64) {
        let u = build(alpha, &c);
        let a = area(&u).unwrap();
        let b = area(&u.scaled(s).unwrap()).unwrap();
        prop_assert!((b - s * s * a).abs() < 1e-12 * b);
    }

    #[test]
    fn weighted_inner_product_is_symmetric_and_linear(
        (alpha, c) in curve(),
        f in prop::collection::vec(-1.0..1.0f64, N),
        g in prop::collection::vec(-1.0..1.0f64, N),
        k in -3.0..3.0f64,
    ) {
        let h = build(alpha, &c);
        let fg = inner_h(&f, &g, &h);
        prop_assert!((fg - inner_h(&g, &f, &h)).abs() < 1e-12);
        let kf: Vec<f64> = f.iter().map(|x| k * x).collect();
        prop_assert!((inner_h(&kf, &g, &h) - k * fg).abs() < 1e-11);
        prop_assert!(inner_h(&f, &f, &h) >= 0.0);
    }

    #[test]
    fn gauge_conversion_round_trips((alpha, c) in curve(), t in -5.0..-0.01f64) {
        let u = build(alpha, &c);
        let (n, tau) = gauge_convert(&u, GaugeDirection::RawToNormalized, t).unwrap();
        let (back, t2) = gauge_convert(&n, GaugeDirection::NormalizedToRaw, tau).unwrap();
        prop_assert!((t2 - t).abs() < 1e-12 * t.abs());
        prop_assert!(back.sup_distance(&u) < 1e-12);
    }

    #[test]
    fn duhamel_is_linear(
        f in prop::collection::vec(-1.0..1.0f64, 40),
        g in prop::collection::vec(-1.0..1.0f64, 40),
        k in -2.0..2.0f64,
        lambda in prop::sample::select(vec![-1.5, -0.6, 0.3, 2.0]),
        pinned in any::<bool>(),
    ) {
        let delta = 0.1;
        let forward = lambda + delta > 0.0;
        prop_assume!(pinned != forward);
        let comb: Vec<f64> = f.iter().zip(&g).map(|(x, y)| x + k * y).collect();
        let uf = mode_duhamel(&f, lambda, delta, 0.05, pinned).unwrap();
        let ug = mode_duhamel(&g, lambda, delta, 0.05, pinned).unwrap();
        let uc = mode_duhamel(&comb, lambda, delta, 0.05, pinned).unwrap();
        for i in 0..uc.len() {
            prop_assert!((uc[i] - uf[i] - k * ug[i]).abs() < 1e-10 * (1.0 + uc[i].abs()));
        }
    }

    #[test]
    fn recentering_composes_additively(
        a in prop::collection::vec(-1e-2..1e-2f64, 9),
        b in prop::array::uniform3(-0.5..0.5f64),
        c in prop::array::uniform3(-0.5..0.5f64),
    ) {
        let dec = circle_spectrum();
        let a = CoefficientVector::new(a);
        let sum = [b[0] + c[0], b[1] + c[1], b[2] + c[2]];
        let twice = recenter(&recenter(&a, b, dec).unwrap(), c, dec).unwrap();
        let once = recenter(&a, sum, dec).unwrap();
        for (x, y) in twice.a.iter().zip(&once.a) {
            prop_assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn time_shift_brings_coefficients_into_range(
        a in prop::collection::vec(-1.0..1.0f64, 9),
        eps in prop::sample::select(vec![1e-3, 1e-2]),
    ) {
        let dec = circle_spectrum();
        let a = CoefficientVector::new(a);
        let s = time_shift(&a, &dec.eigenvalues[..9], 1.0 / 16.0, eps);
        prop_assert!(s.shift >= 0.0);
        prop_assert!(s.scaled.norm() <= eps * (1.0 + 1e-12) || a.norm() < eps);
    }

    #[test]
    fn seventeen_digit_output_round_trips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        let back: f64 = fmt17(x).parse().unwrap();
        prop_assert_eq!(back.to_bits(), x.to_bits());
    }
}
