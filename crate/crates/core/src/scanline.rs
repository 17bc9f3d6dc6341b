//! Detector trajectories across a correlation surface.
//!
//! A scan line moves both detectors with a common parameter `x`:
//! `x1 = x`, `x2 = alpha * x + beta`. The one configuration this cannot
//! express, `x1` held fixed while `x2` scans, is [`LineShape::FixedX1`].
//!
//! Along an affine line the thermal pattern sees the separation
//! `x2 - x1 = (alpha - 1) x + beta` and the entangled pattern sees the sum
//! `x1 + x2 = (alpha + 1) x + beta`, so the fringe spacing in `x` is the
//! classical Young spacing `lambda z / d` divided by `|alpha - 1|` or
//! `|alpha + 1|` respectively. At `alpha = 1` (thermal) or `alpha = -1`
//! (entangled) the pattern is flat.

use serde::{Deserialize, Serialize};

use crate::analytic::{AnalyticOptions, SourceModel};
use crate::error::{Error, Result};
use crate::geometry::{Aperture, OpticalConfig};
use crate::surface::{CorrelationSurface, Normalization, Provenance, SourceKind};

/// Slopes below this are treated as a flat pattern.
const FLAT_SLOPE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum LineShape {
    Affine { alpha: f64, beta: f64 },
    FixedX1 { x1: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanLine {
    pub shape: LineShape,
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
    pub label: Option<String>,
}

impl ScanLine {
    pub fn new(shape: LineShape, x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !(x_min < x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidScanLine(format!(
                "range [{x_min}, {x_max}] is empty"
            )));
        }
        if n_points < 2 {
            return Err(Error::InvalidScanLine("need at least 2 points".into()));
        }
        if let LineShape::Affine { alpha, beta } = shape {
            if !alpha.is_finite() || !beta.is_finite() {
                return Err(Error::InvalidScanLine(
                    "alpha and beta must be finite".into(),
                ));
            }
        }
        Ok(Self {
            shape,
            x_min,
            x_max,
            n_points,
            label: None,
        })
    }

    pub fn affine(alpha: f64, beta: f64, x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        Self::new(LineShape::Affine { alpha, beta }, x_min, x_max, n_points)
    }

    /// Slope `alpha` of the named preset line for `kind`.
    ///
    /// Thermal: (a) `x2 = 0`, (b) `x2 = -x`, (c) `x2 = -2x`, (d) `x2 = x/2`.
    /// Entangled: (a) `x2 = 0`, (b) `x2 = x`, (c) `x2 = 2x`, (d) `x2 = -x/2`.
    pub fn preset_alpha(kind: SourceKind, name: char) -> Result<f64> {
        let alpha = match (kind, name.to_ascii_lowercase()) {
            (_, 'a') => 0.0,
            (SourceKind::Thermal, 'b') => -1.0,
            (SourceKind::Thermal, 'c') => -2.0,
            (SourceKind::Thermal, 'd') => 0.5,
            (SourceKind::Entangled, 'b') => 1.0,
            (SourceKind::Entangled, 'c') => 2.0,
            (SourceKind::Entangled, 'd') => -0.5,
            (SourceKind::CoherentReference, _) => {
                return Err(Error::UnsupportedSource("coherent_reference"))
            }
            (_, other) => {
                return Err(Error::InvalidScanLine(format!(
                    "unknown preset line {other:?}"
                )))
            }
        };
        Ok(alpha)
    }

    pub fn preset(
        kind: SourceKind,
        name: char,
        x_min: f64,
        x_max: f64,
        n_points: usize,
    ) -> Result<Self> {
        let alpha = Self::preset_alpha(kind, name)?;
        let mut line = Self::affine(alpha, 0.0, x_min, x_max, n_points)?;
        line.label = Some(format!("{}", name.to_ascii_lowercase()));
        Ok(line)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn step(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn parameter(&self, k: usize) -> f64 {
        if k + 1 == self.n_points {
            self.x_max
        } else {
            self.x_min + self.step() * k as f64
        }
    }

    /// Detector positions `(x1, x2)` at parameter `x`.
    pub fn position(&self, x: f64) -> (f64, f64) {
        match self.shape {
            LineShape::Affine { alpha, beta } => (x, alpha * x + beta),
            LineShape::FixedX1 { x1 } => (x1, x),
        }
    }

    /// Rate of change of the variable the source pattern depends on.
    fn pattern_slope(&self, kind: SourceKind) -> Result<f64> {
        match (kind, self.shape) {
            (SourceKind::Thermal, LineShape::Affine { alpha, .. }) => Ok(alpha - 1.0),
            (SourceKind::Entangled, LineShape::Affine { alpha, .. }) => Ok(alpha + 1.0),
            (SourceKind::Thermal | SourceKind::Entangled, LineShape::FixedX1 { .. }) => Ok(1.0),
            (SourceKind::CoherentReference, _) => {
                Err(Error::UnsupportedSource("coherent_reference"))
            }
        }
    }
}

/// Values of a surface sampled along a scan line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub parameter: Vec<f64>,
    pub values: Vec<f64>,
    pub source_kind: SourceKind,
    pub scanline: ScanLine,
    pub provenance: Provenance,
    pub normalization: Normalization,
    /// Line samples that fell outside the surface and were dropped.
    pub excluded: usize,
}

impl CrossSection {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `x,value` rows with a header line.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,value")?;
        for (x, v) in self.parameter.iter().zip(&self.values) {
            writeln!(w, "{x:e},{v:e}")?;
        }
        Ok(())
    }

    /// Same section multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.values.iter_mut().for_each(|v| *v *= factor);
        s
    }

    /// Same section with `offset` added.
    pub fn offset(&self, offset: f64) -> Self {
        let mut s = self.clone();
        s.values.iter_mut().for_each(|v| *v += offset);
        s
    }
}

/// Bilinear samples of `surface` along `line`. Points outside the surface
/// axes are dropped and counted in [`CrossSection::excluded`].
pub fn extract_cross_section(
    surface: &CorrelationSurface,
    line: &ScanLine,
) -> Result<CrossSection> {
    let mut parameter = Vec::with_capacity(line.n_points);
    let mut values = Vec::with_capacity(line.n_points);
    let mut excluded = 0;
    for k in 0..line.n_points {
        let x = line.parameter(k);
        let (x1, x2) = line.position(x);
        match surface.interpolate(x1, x2) {
            Some(v) => {
                parameter.push(x);
                values.push(v);
            }
            None => excluded += 1,
        }
    }
    if values.is_empty() {
        return Err(Error::EmptySection { excluded });
    }
    Ok(CrossSection {
        parameter,
        values,
        source_kind: surface.source_kind,
        scanline: line.clone(),
        provenance: surface.provenance,
        normalization: surface.normalization,
        excluded,
    })
}

/// Evaluates the closed-form model directly along `line`, scaled to the
/// model's peak at `x1 = x2 = 0`. Not limited by any surface extent.
pub fn analytic_cross_section(
    config: &OpticalConfig,
    aperture: &Aperture,
    kind: SourceKind,
    line: &ScanLine,
    options: &AnalyticOptions,
) -> Result<CrossSection> {
    let model = SourceModel::new(config, aperture, kind, options)?;
    let (parameter, values) = (0..line.n_points)
        .map(|k| {
            let x = line.parameter(k);
            let (x1, x2) = line.position(x);
            (x, model.eval_unit(x1, x2))
        })
        .unzip();
    Ok(CrossSection {
        parameter,
        values,
        source_kind: kind,
        scanline: line.clone(),
        provenance: Provenance::Analytic,
        normalization: Normalization::UnitPeak,
        excluded: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FringeSpacing {
    /// Fringe period along the scan parameter and its ratio to `lambda z / d`.
    Periodic {
        spacing: f64,
        resolution_factor: f64,
    },
    /// The pattern does not vary along the line.
    Flat,
}

impl FringeSpacing {
    pub fn spacing(&self) -> Option<f64> {
        match self {
            FringeSpacing::Periodic { spacing, .. } => Some(*spacing),
            FringeSpacing::Flat => None,
        }
    }

    pub fn resolution_factor(&self) -> Option<f64> {
        match self {
            FringeSpacing::Periodic {
                resolution_factor, ..
            } => Some(*resolution_factor),
            FringeSpacing::Flat => None,
        }
    }
}

/// Young fringe spacing `lambda z / d` under coherent illumination.
pub fn classical_baseline(config: &OpticalConfig, aperture: &Aperture) -> Result<f64> {
    let (_, d) = aperture
        .double_slit_params()
        .ok_or(Error::RequiresDoubleSlit)?;
    Ok(config.wavelength() * config.distance() / d)
}

/// Fringe spacing along `line` predicted by the two-slit cosine term.
pub fn predict_fringe_spacing(
    line: &ScanLine,
    config: &OpticalConfig,
    aperture: &Aperture,
    kind: SourceKind,
) -> Result<FringeSpacing> {
    let slope = line.pattern_slope(kind)?.abs();
    let baseline = classical_baseline(config, aperture)?;
    if slope < FLAT_SLOPE {
        return Ok(FringeSpacing::Flat);
    }
    Ok(FringeSpacing::Periodic {
        spacing: baseline / slope,
        resolution_factor: 1.0 / slope,
    })
}
