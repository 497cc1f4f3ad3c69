use std::f64::consts::PI;

use proptest::prelude::*;
use qshear::counting::{g2_analytic, simulate_tallies, thermal_distribution, CountingModel};
use qshear::elements::{apply_delay, apply_dispersion, apply_eom, ideal_shear, DispersiveElement, EomElement, RfDrive};
use qshear::grid::TimeFrequencyGrid;
use qshear::instruments::hom_coincidence;
use qshear::pulse::{make_gaussian_pulse, overlap, PulseMode};
use qshear::state::State;

fn grid() -> TimeFrequencyGrid {
    TimeFrequencyGrid::new(512, 50e-15, 831.5e-9).unwrap()
}

fn pulse(center_ghz: f64, fwhm_ghz: f64, chirp: f64) -> PulseMode {
    make_gaussian_pulse(&grid(), 2.0 * PI * center_ghz * 1e9, 2.0 * PI * fwhm_ghz * 1e9, chirp).unwrap()
}

fn counting() -> impl Strategy<Value = CountingModel> {
    (0.0..0.3f64, 0.01..1.0f64, 0.01..1.0f64, 0.0..1e-3f64).prop_map(|(mu, es, ei, d)| CountingModel {
        mu,
        eta_signal: es,
        eta_idler: ei,
        dark_prob: d,
        ..CountingModel::default()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hom_coincidence_between_zero_and_half(
        c1 in -300.0..300.0f64, w1 in 200.0..800.0f64, b1 in -5e-25..5e-25f64,
        c2 in -300.0..300.0f64, w2 in 200.0..800.0f64, tau in -3e-12..3e-12f64,
    ) {
        let a = State::Pure(pulse(c1, w1, b1));
        let b = State::Pure(pulse(c2, w2, 0.0));
        let p = hom_coincidence(&a, &b, tau).unwrap();
        prop_assert!((-1e-12..=0.5 + 1e-12).contains(&p), "P = {p}");
    }

    #[test]
    fn phase_only_elements_keep_the_norm(
        a in 0.0..2.5f64, nu in 5.0..60.0f64, phi0 in -PI..PI,
        gdd in -1e-24..1e-24f64, tau in -5e-12..5e-12f64,
    ) {
        let p = pulse(50.0, 435.0, 0.0);
        let eom = EomElement::new(RfDrive::new(a, 1.0, nu * 1e9, phi0).unwrap(), 0.5).unwrap();
        let (out, t) = apply_eom(&p, &eom);
        prop_assert_eq!(t, 0.5);
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-10);
        let d = apply_dispersion(&p, &DispersiveElement::new(gdd, 0.0).unwrap());
        prop_assert!((d.norm_sqr() - 1.0).abs() < 1e-10);
        prop_assert!((apply_delay(&p, tau).norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ideal_shear_translates_centroid(shift in -1000.0..1000.0f64, chirp in -3e-25..3e-25f64) {
        let p = pulse(0.0, 435.0, chirp);
        let omega = 2.0 * PI * shift * 1e9;
        let q = ideal_shear(&p, omega);
        let moved = q.moments().spectral_centroid - p.moments().spectral_centroid;
        prop_assert!((moved - omega).abs() < 1e-6 * 2.0 * PI * 1e9, "{moved} vs {omega}");
        // sampled FWHM moves with the sub-bin position of the line
        prop_assert!((q.moments().spectral_fwhm / p.moments().spectral_fwhm - 1.0).abs() < 2e-2);
        let back = ideal_shear(&q, -omega);
        prop_assert!(overlap(&p, &back).unwrap().norm_sqr() > 1.0 - 1e-9);
    }

    #[test]
    fn thermal_law_is_normalized(mu in 0.0..0.5f64) {
        let p = thermal_distribution(mu);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mean: f64 = p.iter().enumerate().map(|(n, q)| n as f64 * q).sum();
        prop_assert!((mean - mu).abs() < 1e-6 * mu.max(1e-6));
    }

    #[test]
    fn analytic_g2_is_finite_and_nonnegative(model in counting()) {
        prop_assume!(model.mu > 1e-4 || model.dark_prob > 1e-6);
        let g2 = g2_analytic(&model).unwrap();
        prop_assert!(g2.is_finite() && g2 >= 0.0, "g2 = {g2}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn tallies_are_consistent(model in counting(), seed in any::<u64>()) {
        let t = simulate_tallies(&model, 200_000, seed);
        prop_assert!(t.is_consistent(), "{t:?}");
        prop_assert_eq!(t.pulses, 200_000);
    }
}
