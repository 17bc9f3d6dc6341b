//! Apertures, optical configurations and the sampling grids shared by the
//! analytic, Monte-Carlo and frame pipelines.
//!
//! All lengths are SI meters. Millimeters and micrometers only appear at the
//! CLI and report boundaries.
//!
//! # sinc convention
//!
//! [`sinc`] is the *unnormalized* cardinal sine, `sin(u)/u`. The closed-form
//! double-slit spectrum is written in that convention:
//!
//! ```text
//! FT[T](xi) = 2a * sinc(a*xi/2) * cos(d*xi/2)
//! ```
//!
//! Substituting the pi-normalized `sin(pi u)/(pi u)` here moves every
//! envelope zero by a factor of pi.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unnormalized cardinal sine, `sin(u)/u` with `sinc(0) = 1`.
pub fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-8 {
        // Taylor: 1 - u^2/6 is exact to f64 precision here
        1.0 - u * u / 6.0
    } else {
        u.sin() / u
    }
}

/// A transmission profile sampled on a uniform grid.
///
/// Evaluation interpolates linearly between samples and is zero outside
/// `[start, start + (n-1)*step]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledProfile {
    start: f64,
    step: f64,
    values: Vec<f64>,
}

impl SampledProfile {
    pub fn new(start: f64, step: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidAperture(
                "custom profile needs at least 2 samples".into(),
            ));
        }
        if !(step > 0.0 && step.is_finite() && start.is_finite()) {
            return Err(Error::InvalidAperture(format!(
                "custom profile step must be positive and finite, got {step}"
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidAperture(format!(
                "transmission sample {i} = {v} is outside [0, 1]"
            )));
        }
        Ok(Self {
            start,
            step,
            values,
        })
    }

    /// Builds a profile from explicit sample positions. Positions must be
    /// increasing and uniformly spaced (relative tolerance 1e-9).
    pub fn from_positions(positions: &[f64], values: Vec<f64>) -> Result<Self> {
        if positions.len() != values.len() {
            return Err(Error::InvalidAperture(format!(
                "{} positions but {} transmission samples",
                positions.len(),
                values.len()
            )));
        }
        if positions.len() < 2 {
            return Err(Error::InvalidAperture(
                "custom profile needs at least 2 samples".into(),
            ));
        }
        let step = (positions[positions.len() - 1] - positions[0]) / (positions.len() - 1) as f64;
        for (i, w) in positions.windows(2).enumerate() {
            let local = w[1] - w[0];
            if (local - step).abs() > 1e-9 * step.abs() {
                return Err(Error::NonUniformGrid(format!(
                    "custom aperture spacing at sample {i} is {local:e} m, expected {step:e} m"
                )));
            }
        }
        Self::new(positions[0], step, values)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn end(&self) -> f64 {
        self.start + self.step * (self.values.len() - 1) as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn position(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x < self.start || x > self.end() {
            return 0.0;
        }
        let t = (x - self.start) / self.step;
        let i = (t.floor() as usize).min(self.values.len() - 2);
        let frac = t - i as f64;
        let v = self.values[i] * (1.0 - frac) + self.values[i + 1] * frac;
        v.clamp(0.0, 1.0)
    }

    /// Trapezoid quadrature of `T(x)^power * exp(-i xi x)` over the samples.
    fn spectrum(&self, xi: f64, power: i32) -> Complex64 {
        let last = self.values.len() - 1;
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, &v) in self.values.iter().enumerate() {
            let w = if i == 0 || i == last { 0.5 } else { 1.0 };
            let x = self.position(i);
            acc += Complex64::from_polar(w * v.powi(power), -xi * x);
        }
        acc * self.step
    }
}

/// One-dimensional aperture transmission `T(x')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Aperture {
    /// Two open slits of width `width`, centers `separation` apart,
    /// symmetric about `x' = 0`.
    DoubleSlit {
        width: f64,
        separation: f64,
    },
    Custom {
        profile: SampledProfile,
    },
}

impl Aperture {
    pub fn double_slit(width: f64, separation: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::InvalidAperture(format!(
                "slit width must be positive, got {width}"
            )));
        }
        if !(separation > width && separation.is_finite()) {
            return Err(Error::InvalidAperture(format!(
                "slit separation {separation} must exceed slit width {width} (slits would overlap)"
            )));
        }
        Ok(Aperture::DoubleSlit { width, separation })
    }

    pub fn custom(profile: SampledProfile) -> Self {
        Aperture::Custom { profile }
    }

    /// `(width, separation)` for a double slit.
    pub fn double_slit_params(&self) -> Option<(f64, f64)> {
        match *self {
            Aperture::DoubleSlit { width, separation } => Some((width, separation)),
            Aperture::Custom { .. } => None,
        }
    }

    /// Largest `|x'|` at which the transmission can be nonzero.
    pub fn support_half_width(&self) -> f64 {
        match self {
            Aperture::DoubleSlit { width, separation } => 0.5 * (separation + width),
            Aperture::Custom { profile } => profile.start().abs().max(profile.end().abs()),
        }
    }

    pub fn transmission(&self, x: f64) -> f64 {
        match self {
            Aperture::DoubleSlit { width, separation } => {
                let half_w = 0.5 * width;
                let c = 0.5 * separation;
                if (x - c).abs() <= half_w || (x + c).abs() <= half_w {
                    1.0
                } else {
                    0.0
                }
            }
            Aperture::Custom { profile } => profile.eval(x),
        }
    }

    /// Fourier transform of `T^2` at spatial frequency `xi` (rad/m).
    pub fn spectrum(&self, xi: f64) -> Complex64 {
        match self {
            // T is 0/1, so T^2 = T
            Aperture::DoubleSlit { .. } => self.transmission_spectrum(xi),
            Aperture::Custom { profile } => profile.spectrum(xi, 2),
        }
    }

    /// Fourier transform of `T` itself; the coherent far-field amplitude.
    pub fn transmission_spectrum(&self, xi: f64) -> Complex64 {
        match *self {
            Aperture::DoubleSlit { width, separation } => Complex64::new(
                2.0 * width * sinc(0.5 * width * xi) * (0.5 * separation * xi).cos(),
                0.0,
            ),
            Aperture::Custom { ref profile } => profile.spectrum(xi, 1),
        }
    }
}

/// Transmission amplitude of `aperture` at source coordinate `x_prime`.
pub fn transmission(aperture: &Aperture, x_prime: f64) -> f64 {
    aperture.transmission(x_prime)
}

/// Fourier transform of `T^2` evaluated at `xi` (rad/m).
pub fn aperture_spectrum(aperture: &Aperture, xi: f64) -> Complex64 {
    aperture.spectrum(xi)
}

/// Cell-centered grid over `[-half_extent, half_extent]` on the source plane.
///
/// Sample `j` sits at `-h + (j + 1/2) * 2h/n`, so cell boundaries include
/// `0` for even `n`. Apertures whose edges fall on cell boundaries are
/// sampled without edge error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceGrid {
    pub half_extent: f64,
    pub n_samples: usize,
}

impl SourceGrid {
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_extent / self.n_samples as f64
    }

    pub fn coord(&self, j: usize) -> f64 {
        -self.half_extent + (j as f64 + 0.5) * self.spacing()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n_samples).map(|j| self.coord(j)).collect()
    }
}

/// A row of detector pixels centered on the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorGrid {
    pub pixel_pitch: f64,
    pub n_pixels: usize,
}

impl DetectorGrid {
    /// Physical half-width of the pixel row.
    pub fn half_extent(&self) -> f64 {
        0.5 * self.n_pixels as f64 * self.pixel_pitch
    }

    /// Center of pixel `i`.
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - 0.5 * (self.n_pixels as f64 - 1.0)) * self.pixel_pitch
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n_pixels).map(|i| self.coord(i)).collect()
    }
}

/// Wavelength, propagation distance and the source/detector sampling.
///
/// Construction checks that the source spacing satisfies
/// `dx' <= lambda*z / (2*X)` where `X` is the detector half-extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalConfig {
    wavelength: f64,
    distance: f64,
    source: SourceGrid,
    detector: DetectorGrid,
}

impl OpticalConfig {
    pub fn new(
        wavelength: f64,
        distance: f64,
        source: SourceGrid,
        detector: DetectorGrid,
    ) -> Result<Self> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("wavelength", wavelength)?;
        positive("distance", distance)?;
        positive("source half extent", source.half_extent)?;
        positive("pixel pitch", detector.pixel_pitch)?;
        if source.n_samples < 2 {
            return Err(Error::InvalidConfig(
                "source grid needs at least 2 samples".into(),
            ));
        }
        if detector.n_pixels < 1 {
            return Err(Error::InvalidConfig(
                "detector needs at least 1 pixel".into(),
            ));
        }
        let limit = wavelength * distance / (2.0 * detector.half_extent());
        let spacing = source.spacing();
        if spacing > limit * (1.0 + 1e-12) {
            let min_samples = (2.0 * source.half_extent / limit).ceil() as usize;
            return Err(Error::SamplingCriterion {
                source_spacing: spacing,
                limit,
                min_samples,
            });
        }
        Ok(Self {
            wavelength,
            distance,
            source,
            detector,
        })
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    /// `k = 2 pi / lambda`.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Spatial frequency `k x / z` conjugate to detector coordinate `x`.
    pub fn spatial_frequency(&self, x: f64) -> f64 {
        self.wavenumber() * x / self.distance
    }

    pub fn source(&self) -> &SourceGrid {
        &self.source
    }

    pub fn detector(&self) -> &DetectorGrid {
        &self.detector
    }

    pub fn with_detector(&self, detector: DetectorGrid) -> Result<Self> {
        Self::new(self.wavelength, self.distance, self.source, detector)
    }

    pub fn with_source(&self, source: SourceGrid) -> Result<Self> {
        Self::new(self.wavelength, self.distance, source, self.detector)
    }

    pub fn with_wavelength(&self, wavelength: f64) -> Result<Self> {
        Self::new(wavelength, self.distance, self.source, self.detector)
    }
}

/// The published experimental configuration: 457 nm light, a 0.038 mm /
/// 0.12 mm double slit, CCDs 23 cm behind it with 4.65 um pixels on a
/// 1392-pixel row.
#[derive(Debug, Clone, Copy)]
pub struct PaperPreset;

impl PaperPreset {
    pub const NAME: &'static str = "paper";
    pub const WAVELENGTH: f64 = 457e-9;
    pub const SLIT_WIDTH: f64 = 0.038e-3;
    pub const SLIT_SEPARATION: f64 = 0.12e-3;
    pub const DISTANCE: f64 = 0.23;
    pub const PIXEL_PITCH: f64 = 4.65e-6;
    pub const ROW_PIXELS: usize = 1392;
    pub const SOURCE_HALF_EXTENT: f64 = 80e-6;
    pub const SOURCE_SAMPLES: usize = 128;

    pub fn aperture() -> Aperture {
        Aperture::DoubleSlit {
            width: Self::SLIT_WIDTH,
            separation: Self::SLIT_SEPARATION,
        }
    }

    pub fn config() -> OpticalConfig {
        OpticalConfig::new(
            Self::WAVELENGTH,
            Self::DISTANCE,
            SourceGrid {
                half_extent: Self::SOURCE_HALF_EXTENT,
                n_samples: Self::SOURCE_SAMPLES,
            },
            DetectorGrid {
                pixel_pitch: Self::PIXEL_PITCH,
                n_pixels: Self::ROW_PIXELS,
            },
        )
        .expect("paper preset is a valid configuration")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MM: f64 = 1e-3;

    #[test]
    fn preset_transmission_points() {
        let ap = PaperPreset::aperture();
        assert_eq!(transmission(&ap, 0.06 * MM), 1.0);
        assert_eq!(transmission(&ap, -0.06 * MM), 1.0);
        assert_eq!(transmission(&ap, 0.0), 0.0);
        assert_eq!(transmission(&ap, 0.06 * MM + PaperPreset::SLIT_WIDTH), 0.0);
    }

    #[test]
    fn spectrum_dc_and_first_cosine_zero() {
        let ap = PaperPreset::aperture();
        let dc = aperture_spectrum(&ap, 0.0);
        assert!((dc.re - 7.6e-5).abs() < 1e-18);
        assert_eq!(dc.im, 0.0);
        let z = aperture_spectrum(&ap, PI / PaperPreset::SLIT_SEPARATION);
        assert!(z.norm() < 1e-20, "{z}");
    }

    #[test]
    fn sinc_is_unnormalized() {
        assert_eq!(sinc(0.0), 1.0);
        assert!(sinc(PI).abs() < 1e-16);
        assert!((sinc(1.0) - 1f64.sin()).abs() < 1e-16);
        assert!((sinc(1e-9) - 1.0).abs() < 1e-16);
    }

    #[test]
    fn overlapping_slits_rejected() {
        assert!(Aperture::double_slit(0.1, 0.05).is_err());
        assert!(Aperture::double_slit(0.0, 0.05).is_err());
        assert!(Aperture::double_slit(0.01, 0.05).is_ok());
    }

    #[test]
    fn custom_profile_interpolates_and_clamps() {
        let p = SampledProfile::new(-1.0, 1.0, vec![0.0, 1.0, 0.0]).unwrap();
        let ap = Aperture::custom(p);
        assert_eq!(ap.transmission(0.0), 1.0);
        assert_eq!(ap.transmission(0.5), 0.5);
        assert_eq!(ap.transmission(-0.25), 0.75);
        assert_eq!(ap.transmission(1.5), 0.0);
        assert!(SampledProfile::new(0.0, 1.0, vec![0.0, 1.2]).is_err());
    }

    #[test]
    fn non_uniform_positions_rejected() {
        let err = SampledProfile::from_positions(&[0.0, 1.0, 2.5], vec![0.0, 1.0, 0.0]);
        assert!(matches!(err, Err(Error::NonUniformGrid(_))));
        let ok = SampledProfile::from_positions(&[0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(ok.step(), 1.0);
    }

    #[test]
    fn sampling_criterion_enforced() {
        let err = OpticalConfig::new(
            457e-9,
            0.23,
            SourceGrid {
                half_extent: 80e-6,
                n_samples: 8,
            },
            DetectorGrid {
                pixel_pitch: 46.5e-6,
                n_pixels: 256,
            },
        );
        match err {
            Err(Error::SamplingCriterion { min_samples, .. }) => assert!(min_samples > 8),
            other => panic!("expected sampling error, got {other:?}"),
        }
    }

    #[test]
    fn preset_builds_and_exposes_wavenumber() {
        let cfg = PaperPreset::config();
        assert!((cfg.wavenumber() - 2.0 * PI / 457e-9).abs() < 1e-6);
        assert_eq!(cfg.detector().n_pixels, 1392);
        // grid is centered
        let d = cfg.detector();
        assert!((d.coord(0) + d.coord(d.n_pixels - 1)).abs() < 1e-18);
    }

    #[test]
    fn custom_spectrum_matches_closed_form_for_sampled_slits() {
        // dense sampling of the double slit, edges on sample points with
        // half weight reproduces the closed form through the trapezoid rule
        let (a, d) = (PaperPreset::SLIT_WIDTH, PaperPreset::SLIT_SEPARATION);
        let step = 1e-8;
        let n = 16001usize;
        let start = -80e-6;
        let values: Vec<f64> = (0..n)
            .map(|i| {
                let x = start + step * i as f64;
                let e = ((x.abs() - 0.5 * d).abs() - 0.5 * a) / step;
                if e.abs() < 1e-6 {
                    0.5_f64.sqrt()
                } else if e < 0.0 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let custom = Aperture::custom(SampledProfile::new(start, step, values).unwrap());
        let ds = PaperPreset::aperture();
        for xi in [0.0, 1e4, 5e4, 2.0 * PI / d] {
            let c = custom.spectrum(xi);
            let r = ds.spectrum(xi);
            assert!((c - r).norm() < 1e-6 * 2.0 * a, "xi={xi}: {c} vs {r}");
        }
    }
}
