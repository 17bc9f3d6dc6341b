//! Configuration files.
//!
//! A config is a TOML document with three flat sections. Lengths may be
//! bare numbers (meters) or strings carrying a unit suffix:
//!
//! ```toml
//! [aperture]
//! kind = "double_slit"
//! slit_width = "0.038 mm"
//! slit_separation = "0.12 mm"
//!
//! [optics]
//! wavelength = "457 nm"
//! distance = "0.23 m"
//!
//! [grids]
//! source_half_extent = "80 um"
//! source_samples = 128
//! pixel_pitch = "4.65 um"
//! detector_pixels = 1392
//! ```
//!
//! A custom aperture uses `kind = "custom"` with `transmission = [...]` and
//! either `profile_start` + `profile_step` or an explicit, uniformly spaced
//! `positions = [...]` list.
//!
//! The name `paper` is reserved and resolves to [`PaperPreset`] without
//! touching the filesystem.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geometry::{
    Aperture, DetectorGrid, OpticalConfig, PaperPreset, SampledProfile, SourceGrid,
};

/// Parses a length such as `"457 nm"`, `"0.038mm"`, `"4.65 um"` or `"0.23"`
/// into meters.
pub fn parse_length(text: &str) -> Result<f64> {
    let t = text.trim();
    let split = t
        .rfind(|c: char| !(c.is_alphabetic() || c == 'µ'))
        .map_or(0, |i| i + t[i..].chars().next().map_or(1, char::len_utf8));
    let (num, unit) = t.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::BadLength(text.to_string()))?;
    let scale = match unit.trim() {
        "" | "m" => 1.0,
        "cm" => 1e-2,
        "mm" => 1e-3,
        "um" | "µm" => 1e-6,
        "nm" => 1e-9,
        _ => return Err(Error::BadLength(text.to_string())),
    };
    if !value.is_finite() {
        return Err(Error::BadLength(text.to_string()));
    }
    Ok(value * scale)
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Length {
    Meters(f64),
    Text(String),
}

impl Length {
    fn meters(&self) -> Result<f64> {
        match self {
            Length::Meters(v) => Ok(*v),
            Length::Text(s) => parse_length(s),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ApertureSection {
    kind: String,
    slit_width: Option<Length>,
    slit_separation: Option<Length>,
    transmission: Option<Vec<f64>>,
    profile_start: Option<Length>,
    profile_step: Option<Length>,
    positions: Option<Vec<Length>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OpticsSection {
    wavelength: Length,
    distance: Length,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridsSection {
    source_half_extent: Length,
    source_samples: usize,
    pixel_pitch: Length,
    detector_pixels: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    aperture: ApertureSection,
    optics: OpticsSection,
    grids: GridsSection,
}

/// A fully resolved setup: aperture plus validated optical configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub aperture: Aperture,
    pub optics: OpticalConfig,
}

impl Setup {
    pub fn paper() -> Self {
        Self {
            aperture: PaperPreset::aperture(),
            optics: PaperPreset::config(),
        }
    }

    /// Parses a config document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Format {
            what: "config",
            detail: e.to_string(),
        })?;
        let aperture = build_aperture(&file.aperture)?;
        let source = SourceGrid {
            half_extent: file.grids.source_half_extent.meters()?,
            n_samples: file.grids.source_samples,
        };
        let detector = DetectorGrid {
            pixel_pitch: file.grids.pixel_pitch.meters()?,
            n_pixels: file.grids.detector_pixels,
        };
        let optics = OpticalConfig::new(
            file.optics.wavelength.meters()?,
            file.optics.distance.meters()?,
            source,
            detector,
        )?;
        if aperture.support_half_width() > source.half_extent {
            return Err(Error::InvalidConfig(format!(
                "source grid half extent {:e} m does not cover the aperture (needs {:e} m)",
                source.half_extent,
                aperture.support_half_width()
            )));
        }
        Ok(Self { aperture, optics })
    }

    /// Loads `name_or_path`; the reserved name `paper` yields the preset.
    pub fn load(name_or_path: &str) -> Result<Self> {
        if name_or_path == PaperPreset::NAME {
            return Ok(Self::paper());
        }
        let path = Path::new(name_or_path);
        let text = std::fs::read_to_string(path).map_err(|e| Error::ConfigFile {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        Self::from_toml_str(&text).map_err(|e| Error::ConfigFile {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })
    }

    /// Stable hex digest of the resolved setup, used in run metadata.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::json!({
            "aperture": self.aperture,
            "optics": self.optics,
        });
        hex::encode(Sha256::digest(json.to_string().as_bytes()))
    }
}

fn build_aperture(sec: &ApertureSection) -> Result<Aperture> {
    match sec.kind.as_str() {
        "double_slit" => {
            let width = sec
                .slit_width
                .as_ref()
                .ok_or_else(|| Error::InvalidAperture("missing slit_width".into()))?
                .meters()?;
            let sep = sec
                .slit_separation
                .as_ref()
                .ok_or_else(|| Error::InvalidAperture("missing slit_separation".into()))?
                .meters()?;
            Aperture::double_slit(width, sep)
        }
        "custom" => {
            let values = sec.transmission.clone().ok_or_else(|| {
                Error::InvalidAperture("custom aperture needs transmission".into())
            })?;
            let profile =
                match (&sec.positions, &sec.profile_start, &sec.profile_step) {
                    (Some(pos), None, None) => {
                        let pos = pos.iter().map(Length::meters).collect::<Result<Vec<_>>>()?;
                        SampledProfile::from_positions(&pos, values)?
                    }
                    (None, Some(start), Some(step)) => {
                        SampledProfile::new(start.meters()?, step.meters()?, values)?
                    }
                    _ => return Err(Error::InvalidAperture(
                        "custom aperture needs either positions or profile_start + profile_step"
                            .into(),
                    )),
                };
            Ok(Aperture::custom(profile))
        }
        other => Err(Error::InvalidAperture(format!(
            "unknown aperture kind {other:?}"
        ))),
    }
}
