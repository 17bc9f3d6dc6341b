//! Closed forms checked against independent numerical oracles.

use num_complex::Complex64;
use proptest::prelude::*;

use g2scan::analytic::{g2_entangled, g2_thermal, g2_thermal_unit, young_reference};
use g2scan::geometry::{aperture_spectrum, sinc, transmission, SampledProfile};
use g2scan::{Aperture, PaperPreset};

const A: f64 = PaperPreset::SLIT_WIDTH;
const D: f64 = PaperPreset::SLIT_SEPARATION;

/// Trapezoid rule for the transform of a 0/1 slit pair, `nodes` per slit,
/// with nodes on the slit edges.
fn trapezoid_spectrum(xi: f64, nodes: usize) -> Complex64 {
    let mut total = Complex64::new(0.0, 0.0);
    for centre in [-0.5 * D, 0.5 * D] {
        let (lo, h) = (centre - 0.5 * A, A / (nodes - 1) as f64);
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..nodes {
            let w = if i == 0 || i == nodes - 1 { 0.5 } else { 1.0 };
            acc += Complex64::from_polar(w, -xi * (lo + i as f64 * h));
        }
        total += acc * h;
    }
    total
}

#[test]
fn spectrum_at_two_pi_over_d_matches_quadrature() {
    let ap = PaperPreset::aperture();
    let xi = 2.0 * std::f64::consts::PI / D;
    let closed = aperture_spectrum(&ap, xi);
    let oracle = trapezoid_spectrum(xi, 10_000);
    assert!(
        (closed - oracle).norm() < 1e-6 * closed.norm(),
        "{closed} vs {oracle}"
    );
}

proptest! {
    #[test]
    fn spectrum_matches_quadrature_up_to_ten_lobes(
        xi in -10.0 * 2.0 * std::f64::consts::PI / A..10.0 * 2.0 * std::f64::consts::PI / A
    ) {
        let ap = PaperPreset::aperture();
        let closed = aperture_spectrum(&ap, xi);
        let oracle = trapezoid_spectrum(xi, 100_000);
        // relative to the open area, which bounds |spectrum|
        prop_assert!((closed - oracle).norm() < 1e-6 * 2.0 * A);
    }

    #[test]
    fn spectrum_is_hermitian_and_real(xi in -2e6..2e6f64) {
        let ap = PaperPreset::aperture();
        let s = aperture_spectrum(&ap, xi);
        prop_assert_eq!(aperture_spectrum(&ap, -xi), s.conj());
        prop_assert_eq!(s.im, 0.0);
    }

    #[test]
    fn transmission_is_even(x in -2e-4..2e-4f64) {
        let ap = PaperPreset::aperture();
        prop_assert_eq!(transmission(&ap, x), transmission(&ap, -x));
    }
}

#[test]
fn sampled_double_slit_converges_to_closed_form() {
    let ap = PaperPreset::aperture();
    let step = 1e-8;
    let n = (2.0 * 8e-5 / step) as usize + 1;
    let values: Vec<f64> = (0..n)
        .map(|i| ap.transmission(-8e-5 + i as f64 * step))
        .collect();
    let custom = Aperture::custom(SampledProfile::new(-8e-5, step, values).unwrap());
    for xi in [0.0, 1e4, 5e4, 2.0 * std::f64::consts::PI / D] {
        let a = custom.spectrum(xi);
        let b = ap.spectrum(xi);
        // linear interpolation across each slit edge costs about one step of area
        assert!((a - b).norm() < 2.0 * step, "xi {xi}: {a} vs {b}");
    }
}

#[test]
fn thermal_cosine_zero_by_root_finding() {
    let cfg = PaperPreset::config();
    let ap = PaperPreset::aperture();
    let half_period = cfg.wavelength() * cfg.distance() / (2.0 * D);
    // bisection on the closed form amplitude (sign change of the cosine)
    let amp = |lag: f64| {
        let xi = cfg.spatial_frequency(lag);
        2.0 * A * sinc(0.5 * A * xi) * (0.5 * D * xi).cos()
    };
    let (mut lo, mut hi) = (0.3e-3, 0.6e-3);
    assert!(amp(lo) * amp(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if amp(lo) * amp(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    assert!(
        (root - half_period).abs() < 1e-12,
        "{root} vs {half_period}"
    );
    assert!(g2_thermal_unit(&cfg, &ap, 0.0, half_period) < 1e-20);
    let quad = trapezoid_spectrum(cfg.spatial_frequency(half_period), 10_000);
    assert!(quad.norm() < 1e-6 * 2.0 * A);
}

#[test]
fn entangled_zero_at_quarter_phase() {
    let cfg = PaperPreset::config();
    let ap = PaperPreset::aperture();
    let s = cfg.wavelength() * cfg.distance() / (2.0 * D);
    assert!((s - 0.438e-3).abs() < 1e-6);
    assert!(g2_entangled(&cfg, &ap, 0.3 * s, 0.7 * s).unwrap() < 1e-20);
    assert_eq!(g2_entangled(&cfg, &ap, 0.1e-3, -0.1e-3).unwrap(), 1.0);
}

#[test]
fn young_envelope_null_at_lambda_z_over_a() {
    let cfg = PaperPreset::config();
    let ap = PaperPreset::aperture();
    let x = cfg.wavelength() * cfg.distance() / A;
    assert!((x - 2.77e-3).abs() < 0.01e-3);
    assert!(young_reference(&cfg, &ap, x) < 1e-24 * young_reference(&cfg, &ap, 0.0));
    let peak = g2_thermal(&cfg, &ap, 0.0, 0.0);
    for x in [0.1e-3, 0.5e-3, 1.3e-3] {
        assert!(young_reference(&cfg, &ap, x) <= peak);
    }
}
