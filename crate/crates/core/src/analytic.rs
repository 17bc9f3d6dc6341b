//! Closed-form correlation surfaces.
//!
//! Thermal light behind the aperture gives a correlation that depends only
//! on the detector separation `D = x2 - x1`:
//!
//! ```text
//! G2_thermal(x1, x2) = | FT[T^2]( k D / z ) |^2
//! ```
//!
//! Entangled pairs born at the same slit give a pattern that depends only on
//! the sum `S = x1 + x2`:
//!
//! ```text
//! G2_entangled(x1, x2) = cos^2( k d S / (2 z) )
//! ```
//!
//! with the single-slit envelope left out unless
//! [`AnalyticOptions::entangled_envelope`] is set.
//!
//! Both expressions are proportionalities. The thermal surface here is the
//! correlated (fluctuation) part only; the uncorrelated background of a
//! measured `g2` is not part of it.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{sinc, Aperture, OpticalConfig};
use crate::surface::{Axis, CorrelationSurface, Normalization, Provenance, SourceKind};

/// Upper bound on the number of values a dense surface may hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SurfaceBudget {
    pub max_values: usize,
}

impl Default for SurfaceBudget {
    fn default() -> Self {
        // 4096^2 doubles, 128 MiB
        Self {
            max_values: 4096 * 4096,
        }
    }
}

impl SurfaceBudget {
    pub fn check(&self, n1: usize, n2: usize) -> Result<()> {
        let requested = n1.saturating_mul(n2);
        if requested > self.max_values {
            Err(Error::GridTooLarge {
                requested,
                budget: self.max_values,
            })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyticOptions {
    /// Multiply the entangled pattern by the single-slit envelopes
    /// `sinc^2(a k x1 / 2z) sinc^2(a k x2 / 2z)`.
    pub entangled_envelope: bool,
    pub budget: SurfaceBudget,
}

/// Thermal correlation `|FT[T^2](k (x2 - x1) / z)|^2`, unnormalized.
pub fn g2_thermal(config: &OpticalConfig, aperture: &Aperture, x1: f64, x2: f64) -> f64 {
    thermal_at_lag(config, aperture, x2 - x1)
}

/// [`g2_thermal`] scaled so that `x1 == x2` gives 1.
pub fn g2_thermal_unit(config: &OpticalConfig, aperture: &Aperture, x1: f64, x2: f64) -> f64 {
    g2_thermal(config, aperture, x1, x2) / thermal_at_lag(config, aperture, 0.0)
}

fn thermal_at_lag(config: &OpticalConfig, aperture: &Aperture, lag: f64) -> f64 {
    // real T makes |FT|^2 even in the lag
    aperture
        .spectrum(config.spatial_frequency(lag.abs()))
        .norm_sqr()
}

/// Entangled-pair coincidence pattern `cos^2(k d (x1 + x2) / 2z)` in `[0, 1]`.
pub fn g2_entangled(config: &OpticalConfig, aperture: &Aperture, x1: f64, x2: f64) -> Result<f64> {
    let (_, d) = aperture
        .double_slit_params()
        .ok_or(Error::RequiresDoubleSlit)?;
    Ok(entangled_at_sum(config, d, x1 + x2))
}

fn entangled_at_sum(config: &OpticalConfig, separation: f64, sum: f64) -> f64 {
    let phase = config.wavenumber() * separation * sum / (2.0 * config.distance());
    let c = phase.cos();
    c * c
}

fn single_slit_envelope(config: &OpticalConfig, width: f64, x: f64) -> f64 {
    let s = sinc(0.5 * width * config.spatial_frequency(x));
    s * s
}

/// Coherent-illumination far-field intensity `|FT[T](k x / z)|^2`.
pub fn young_reference(config: &OpticalConfig, aperture: &Aperture, x: f64) -> f64 {
    aperture
        .transmission_spectrum(config.spatial_frequency(x))
        .norm_sqr()
}

/// Pointwise evaluator for one source model.
#[derive(Debug, Clone)]
pub struct SourceModel<'a> {
    config: &'a OpticalConfig,
    aperture: &'a Aperture,
    kind: SourceKind,
    entangled_envelope: bool,
}

impl<'a> SourceModel<'a> {
    pub fn new(
        config: &'a OpticalConfig,
        aperture: &'a Aperture,
        kind: SourceKind,
        options: &AnalyticOptions,
    ) -> Result<Self> {
        if kind == SourceKind::Entangled && aperture.double_slit_params().is_none() {
            return Err(Error::RequiresDoubleSlit);
        }
        Ok(Self {
            config,
            aperture,
            kind,
            entangled_envelope: options.entangled_envelope,
        })
    }

    pub fn kind(&self) -> SourceKind {
        self.kind
    }

    /// Raw (unnormalized) value at `(x1, x2)`.
    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        match self.kind {
            SourceKind::Thermal => g2_thermal(self.config, self.aperture, x1, x2),
            SourceKind::Entangled => {
                let (a, d) = self.aperture.double_slit_params().expect("checked in new");
                let fringe = entangled_at_sum(self.config, d, x1 + x2);
                if self.entangled_envelope {
                    fringe
                        * single_slit_envelope(self.config, a, x1)
                        * single_slit_envelope(self.config, a, x2)
                } else {
                    fringe
                }
            }
            SourceKind::CoherentReference => {
                young_reference(self.config, self.aperture, x1)
                    * young_reference(self.config, self.aperture, x2)
            }
        }
    }

    /// Value scaled by the model's natural peak (`x1 = x2 = 0`).
    pub fn eval_unit(&self, x1: f64, x2: f64) -> f64 {
        self.eval(x1, x2) / self.eval(0.0, 0.0)
    }
}

/// Dense evaluation over detector grid x detector grid.
pub fn evaluate_surface(
    config: &OpticalConfig,
    aperture: &Aperture,
    source_kind: SourceKind,
    normalization: Normalization,
    options: &AnalyticOptions,
) -> Result<CorrelationSurface> {
    let grid = config.detector();
    let n = grid.n_pixels;
    options.budget.check(n, n)?;
    let model = SourceModel::new(config, aperture, source_kind, options)?;
    let axis = Axis::from_detector(grid);
    let pitch = grid.pixel_pitch;
    let centre = 0.5 * (n as f64 - 1.0);

    // On a shared uniform grid the thermal value depends on j - i and the
    // entangled one on i + j, so each family is tabulated once by index.
    let lag_table = |f: &(dyn Fn(f64) -> f64 + Sync)| -> Vec<f64> {
        (0..2 * n - 1)
            .into_par_iter()
            .map(|m| f((m as f64 - (n as f64 - 1.0)) * pitch))
            .collect()
    };
    let mut values = vec![0.0; n * n];
    match (source_kind, options.entangled_envelope) {
        (SourceKind::Thermal, _) => {
            let table = lag_table(&|lag| thermal_at_lag(config, aperture, lag));
            values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = table[j + n - 1 - i];
                }
            });
        }
        (SourceKind::Entangled, false) => {
            let (_, d) = aperture
                .double_slit_params()
                .expect("checked by SourceModel");
            let table: Vec<f64> = (0..2 * n - 1)
                .into_par_iter()
                .map(|m| entangled_at_sum(config, d, (m as f64 - 2.0 * centre) * pitch))
                .collect();
            values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = table[i + j];
                }
            });
        }
        _ => {
            values.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                let x1 = grid.coord(i);
                for (j, v) in row.iter_mut().enumerate() {
                    *v = model.eval(x1, grid.coord(j));
                }
            });
        }
    }

    let surface = CorrelationSurface::new(
        values,
        axis,
        axis,
        Normalization::Raw,
        Provenance::Analytic,
        source_kind,
    )?;
    Ok(match normalization {
        Normalization::Raw => surface,
        // analytic surfaces carry no uncorrelated background
        Normalization::BackgroundSubtracted => CorrelationSurface {
            normalization: Normalization::BackgroundSubtracted,
            ..surface
        },
        Normalization::UnitPeak => surface.to_unit_peak(),
        Normalization::BackgroundSubtractedUnitPeak => CorrelationSurface {
            normalization: Normalization::BackgroundSubtracted,
            ..surface
        }
        .to_unit_peak(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DetectorGrid, PaperPreset};

    const MM: f64 = 1e-3;

    fn preset() -> (OpticalConfig, Aperture) {
        (PaperPreset::config(), PaperPreset::aperture())
    }

    fn young_spacing() -> f64 {
        PaperPreset::WAVELENGTH * PaperPreset::DISTANCE / PaperPreset::SLIT_SEPARATION
    }

    #[test]
    fn thermal_peak_on_diagonal() {
        let (c, a) = preset();
        let peak = g2_thermal(&c, &a, 0.3 * MM, 0.3 * MM);
        assert!((peak - (2.0 * PaperPreset::SLIT_WIDTH).powi(2)).abs() < 1e-22);
        assert_eq!(g2_thermal_unit(&c, &a, -MM, -MM), 1.0);
        for dx in [0.1, 0.3, 0.6, 1.2, 2.0] {
            assert!(g2_thermal(&c, &a, 0.0, dx * MM) < peak);
        }
    }

    #[test]
    fn thermal_zero_at_half_young_spacing() {
        let (c, a) = preset();
        let v = g2_thermal_unit(&c, &a, 0.0, 0.5 * young_spacing());
        assert!(v < 1e-28, "{v}");
        assert!((young_spacing() - 0.876 * MM).abs() < 0.0005 * MM);
    }

    #[test]
    fn entangled_values() {
        let (c, a) = preset();
        assert_eq!(g2_entangled(&c, &a, 0.4 * MM, -0.4 * MM).unwrap(), 1.0);
        let half = 0.5 * young_spacing();
        assert!(g2_entangled(&c, &a, half, 0.0).unwrap() < 1e-28);
        // x1 = x2 = x: zeros every half Young spacing in x
        let s = g2_entangled(&c, &a, 0.25 * young_spacing(), 0.25 * young_spacing()).unwrap();
        assert!(s < 1e-28);
        let p = g2_entangled(&c, &a, 0.5 * young_spacing(), 0.5 * young_spacing()).unwrap();
        assert!((p - 1.0).abs() < 1e-24);
    }

    #[test]
    fn entangled_needs_double_slit() {
        let c = PaperPreset::config();
        let prof = crate::geometry::SampledProfile::new(-1e-5, 1e-6, vec![1.0; 21]).unwrap();
        let custom = Aperture::custom(prof);
        assert!(matches!(
            g2_entangled(&c, &custom, 0.0, 0.0),
            Err(Error::RequiresDoubleSlit)
        ));
    }

    #[test]
    fn young_matches_thermal_lag_for_binary_slit() {
        let (c, a) = preset();
        for i in -200..=200 {
            let x = i as f64 * 0.02 * MM;
            assert_eq!(young_reference(&c, &a, x), g2_thermal(&c, &a, 0.0, x));
        }
    }

    #[test]
    fn young_envelope_null() {
        let (c, a) = preset();
        let x = PaperPreset::WAVELENGTH * PaperPreset::DISTANCE / PaperPreset::SLIT_WIDTH;
        assert!((x - 2.766 * MM).abs() < 0.001 * MM);
        assert!(young_reference(&c, &a, x) / young_reference(&c, &a, 0.0) < 1e-28);
    }

    fn small_config() -> OpticalConfig {
        PaperPreset::config()
            .with_detector(DetectorGrid {
                pixel_pitch: 20e-6,
                n_pixels: 96,
            })
            .unwrap()
    }

    #[test]
    fn surfaces_constant_along_their_invariant_directions() {
        let c = small_config();
        let a = PaperPreset::aperture();
        let opts = AnalyticOptions::default();
        let t = evaluate_surface(&c, &a, SourceKind::Thermal, Normalization::Raw, &opts).unwrap();
        let e = evaluate_surface(&c, &a, SourceKind::Entangled, Normalization::Raw, &opts).unwrap();
        let n = 96;
        for i in 0..n - 1 {
            for j in 0..n - 1 {
                assert_eq!(t.get(i, j), t.get(i + 1, j + 1));
                if j > 0 {
                    assert_eq!(e.get(i, j), e.get(i + 1, j - 1));
                }
                assert_eq!(t.get(i, j), t.get(j, i));
            }
        }
    }

    #[test]
    fn unit_peak_surface_max_on_diagonal() {
        let c = small_config();
        let a = PaperPreset::aperture();
        let s = evaluate_surface(
            &c,
            &a,
            SourceKind::Thermal,
            Normalization::UnitPeak,
            &AnalyticOptions::default(),
        )
        .unwrap();
        assert!((s.max() - 1.0).abs() < 1e-12);
        for i in 0..96 {
            assert!((s.get(i, i) - 1.0).abs() < 1e-12);
        }
        assert!((s.raw_scale - (2.0 * PaperPreset::SLIT_WIDTH).powi(2)).abs() < 1e-20);
    }

    #[test]
    fn surface_matches_pointwise_model() {
        let c = small_config();
        let a = PaperPreset::aperture();
        let opts = AnalyticOptions::default();
        for kind in [SourceKind::Thermal, SourceKind::Entangled] {
            let s = evaluate_surface(&c, &a, kind, Normalization::Raw, &opts).unwrap();
            let m = SourceModel::new(&c, &a, kind, &opts).unwrap();
            let scale = m.eval(0.0, 0.0);
            for (i, j) in [(0, 0), (3, 70), (95, 12), (50, 50)] {
                let want = m.eval(c.detector().coord(i), c.detector().coord(j));
                assert!(
                    (s.get(i, j) - want).abs() <= 1e-9 * scale,
                    "{kind:?} {i} {j}"
                );
            }
        }
    }

    #[test]
    fn budget_guard() {
        let c = small_config();
        let a = PaperPreset::aperture();
        let opts = AnalyticOptions {
            budget: SurfaceBudget { max_values: 1000 },
            ..Default::default()
        };
        match evaluate_surface(&c, &a, SourceKind::Thermal, Normalization::Raw, &opts) {
            Err(Error::GridTooLarge { requested, budget }) => {
                assert_eq!(requested, 96 * 96);
                assert_eq!(budget, 1000);
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn envelope_flag_only_lowers_values() {
        let c = small_config();
        let a = PaperPreset::aperture();
        let plain = AnalyticOptions::default();
        let env = AnalyticOptions {
            entangled_envelope: true,
            ..plain
        };
        let m0 = SourceModel::new(&c, &a, SourceKind::Entangled, &plain).unwrap();
        let m1 = SourceModel::new(&c, &a, SourceKind::Entangled, &env).unwrap();
        assert_eq!(m1.eval(0.0, 0.0), 1.0);
        for x in [0.1, 0.7, 1.9] {
            assert!(m1.eval(x * MM, -0.3 * MM) <= m0.eval(x * MM, -0.3 * MM));
        }
    }
}
