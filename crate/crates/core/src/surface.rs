//! Dense correlation surfaces over `(x1, x2)` and their text formats.
//!
//! Matrix text format:
//!
//! ```text
//! # axis_x1 <min> <max> <n>
//! # axis_x2 <min> <max> <n>
//! # source <thermal|entangled|coherent_reference>
//! # normalization <raw|background_subtracted|unit_peak|background_subtracted_unit_peak>
//! # provenance <analytic|monte_carlo>
//! # raw_scale <value>
//! v(0,0) v(0,1) ...
//! ```
//!
//! Row `i` holds the values at `x1 = axis_x1[i]` for every `x2`. Readers
//! ignore unknown `#` lines; `provenance` and `raw_scale` are optional.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DetectorGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Thermal,
    Entangled,
    CoherentReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Raw,
    /// `g2 - 1`; may be negative for estimated surfaces.
    BackgroundSubtracted,
    UnitPeak,
    /// `g2 - 1` followed by division by its maximum.
    BackgroundSubtractedUnitPeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    MonteCarlo,
}

macro_rules! tag_enum {
    ($ty:ty, $what:literal, { $($variant:path => $tag:literal),+ $(,)? }) => {
        impl $ty {
            pub fn tag(&self) -> &'static str {
                match self { $($variant => $tag),+ }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.tag())
            }
        }
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($tag => Ok($variant),)+
                    other => Err(Error::Format { what: $what, detail: format!("unknown tag {other:?}") }),
                }
            }
        }
    };
}

tag_enum!(SourceKind, "source kind", {
    SourceKind::Thermal => "thermal",
    SourceKind::Entangled => "entangled",
    SourceKind::CoherentReference => "coherent_reference",
});

tag_enum!(Normalization, "normalization", {
    Normalization::Raw => "raw",
    Normalization::BackgroundSubtracted => "background_subtracted",
    Normalization::UnitPeak => "unit_peak",
    Normalization::BackgroundSubtractedUnitPeak => "background_subtracted_unit_peak",
});

tag_enum!(Provenance, "provenance", {
    Provenance::Analytic => "analytic",
    Provenance::MonteCarlo => "monte_carlo",
});

/// Uniformly spaced coordinate axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl Axis {
    pub fn from_detector(grid: &DetectorGrid) -> Self {
        Self {
            start: grid.coord(0),
            step: grid.pixel_pitch,
            len: grid.n_pixels,
        }
    }

    pub fn from_min_max(min: f64, max: f64, len: usize) -> Self {
        let step = if len > 1 {
            (max - min) / (len - 1) as f64
        } else {
            0.0
        };
        Self {
            start: min,
            step,
            len,
        }
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }

    pub fn min(&self) -> f64 {
        self.start
    }

    pub fn max(&self) -> f64 {
        self.coord(self.len.saturating_sub(1))
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.coord(i)).collect()
    }

    /// Cell index and fractional offset for linear interpolation, or `None`
    /// when `x` lies outside `[min, max]`.
    pub fn locate(&self, x: f64) -> Option<(usize, f64)> {
        if self.len == 0 {
            return None;
        }
        if self.len == 1 {
            return (x == self.start).then_some((0, 0.0));
        }
        let t = (x - self.start) / self.step;
        let last = (self.len - 1) as f64;
        // accept round-off at the end points
        if !(-1e-9..=last + 1e-9).contains(&t) {
            return None;
        }
        let mut t = t.clamp(0.0, last);
        if (t - t.round()).abs() < 1e-9 {
            t = t.round();
        }
        let i = (t.floor() as usize).min(self.len - 2);
        Some((i, t - i as f64))
    }
}

/// Correlation values on a `len(x1) x len(x2)` grid, row-major in `x1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSurface {
    pub values: Vec<f64>,
    pub axis_x1: Axis,
    pub axis_x2: Axis,
    pub normalization: Normalization,
    pub provenance: Provenance,
    pub source_kind: SourceKind,
    /// Factor divided out by unit-peak normalization (1 when none was applied).
    pub raw_scale: f64,
}

impl CorrelationSurface {
    pub fn new(
        values: Vec<f64>,
        axis_x1: Axis,
        axis_x2: Axis,
        normalization: Normalization,
        provenance: Provenance,
        source_kind: SourceKind,
    ) -> Result<Self> {
        if values.len() != axis_x1.len * axis_x2.len {
            return Err(Error::Format {
                what: "surface",
                detail: format!(
                    "{} values for a {}x{} grid",
                    values.len(),
                    axis_x1.len,
                    axis_x2.len
                ),
            });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Format {
                what: "surface",
                detail: format!("non-finite value {v}"),
            });
        }
        Ok(Self {
            values,
            axis_x1,
            axis_x2,
            normalization,
            provenance,
            source_kind,
            raw_scale: 1.0,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.axis_x1.len, self.axis_x2.len)
    }

    pub fn get(&self, i1: usize, i2: usize) -> f64 {
        self.values[i1 * self.axis_x2.len + i2]
    }

    pub fn row(&self, i1: usize) -> &[f64] {
        let n2 = self.axis_x2.len;
        &self.values[i1 * n2..(i1 + 1) * n2]
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Bilinear interpolation at `(x1, x2)`; `None` outside the axes.
    pub fn interpolate(&self, x1: f64, x2: f64) -> Option<f64> {
        let (i, fx) = self.axis_x1.locate(x1)?;
        let (j, fy) = self.axis_x2.locate(x2)?;
        let i1 = (i + 1).min(self.axis_x1.len - 1);
        let j1 = (j + 1).min(self.axis_x2.len - 1);
        let v00 = self.get(i, j);
        let v01 = self.get(i, j1);
        let v10 = self.get(i1, j);
        let v11 = self.get(i1, j1);
        // exact at nodes: no blending when the fraction is zero
        let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else { a + (b - a) * t };
        Some(lerp(lerp(v00, v01, fy), lerp(v10, v11, fy), fx))
    }

    /// Divides by the maximum value, recording it in `raw_scale`.
    pub fn to_unit_peak(&self) -> Self {
        let peak = self.max();
        let mut out = self.clone();
        if peak > 0.0 {
            out.values.iter_mut().for_each(|v| *v /= peak);
            out.raw_scale = self.raw_scale * peak;
        }
        out.normalization = match self.normalization {
            Normalization::BackgroundSubtracted | Normalization::BackgroundSubtractedUnitPeak => {
                Normalization::BackgroundSubtractedUnitPeak
            }
            _ => Normalization::UnitPeak,
        };
        out
    }

    /// Subtracts the uncorrelated background `g2 = 1` from a raw estimate.
    pub fn background_subtracted(&self) -> Self {
        let mut out = self.clone();
        if self.normalization == Normalization::Raw {
            out.values.iter_mut().for_each(|v| *v -= 1.0);
            out.normalization = Normalization::BackgroundSubtracted;
        }
        out
    }

    pub fn write_matrix<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# axis_x1 {:e} {:e} {}",
            self.axis_x1.min(),
            self.axis_x1.max(),
            self.axis_x1.len
        )?;
        writeln!(
            w,
            "# axis_x2 {:e} {:e} {}",
            self.axis_x2.min(),
            self.axis_x2.max(),
            self.axis_x2.len
        )?;
        writeln!(w, "# source {}", self.source_kind)?;
        writeln!(w, "# normalization {}", self.normalization)?;
        writeln!(w, "# provenance {}", self.provenance)?;
        writeln!(w, "# raw_scale {:e}", self.raw_scale)?;
        let mut line = String::new();
        for i in 0..self.axis_x1.len {
            line.clear();
            for (j, v) in self.row(i).iter().enumerate() {
                if j > 0 {
                    line.push(' ');
                }
                line.push_str(&format!("{v:e}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_matrix<R: BufRead>(r: R) -> Result<Self> {
        let bad = |detail: String| Error::Format {
            what: "matrix file",
            detail,
        };
        let mut axis_x1 = None;
        let mut axis_x2 = None;
        let mut source = None;
        let mut norm = None;
        let mut provenance = Provenance::Analytic;
        let mut raw_scale = 1.0;
        let mut values = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                let mut parts = header.split_whitespace();
                let key = parts.next().unwrap_or("");
                let rest: Vec<&str> = parts.collect();
                match key {
                    "axis_x1" | "axis_x2" => {
                        if rest.len() != 3 {
                            return Err(bad(format!("line {}: axis needs min max n", lineno + 1)));
                        }
                        let parse = |s: &str| s.parse::<f64>().map_err(|e| bad(e.to_string()));
                        let n: usize = rest[2]
                            .parse()
                            .map_err(|_| bad(format!("bad axis length {}", rest[2])))?;
                        let axis = Axis::from_min_max(parse(rest[0])?, parse(rest[1])?, n);
                        if key == "axis_x1" {
                            axis_x1 = Some(axis);
                        } else {
                            axis_x2 = Some(axis);
                        }
                    }
                    "source" => source = Some(rest.first().copied().unwrap_or("").parse()?),
                    "normalization" => norm = Some(rest.first().copied().unwrap_or("").parse()?),
                    "provenance" => provenance = rest.first().copied().unwrap_or("").parse()?,
                    "raw_scale" => {
                        raw_scale = rest
                            .first()
                            .and_then(|s| s.parse().ok())
                            .ok_or_else(|| bad("bad raw_scale".into()))?
                    }
                    _ => {}
                }
                continue;
            }
            for tok in line.split_whitespace() {
                values.push(
                    tok.parse::<f64>()
                        .map_err(|_| bad(format!("line {}: bad value {tok:?}", lineno + 1)))?,
                );
            }
        }
        let mut s = Self::new(
            values,
            axis_x1.ok_or_else(|| bad("missing axis_x1".into()))?,
            axis_x2.ok_or_else(|| bad("missing axis_x2".into()))?,
            norm.ok_or_else(|| bad("missing normalization".into()))?,
            provenance,
            source.ok_or_else(|| bad("missing source".into()))?,
        )?;
        s.raw_scale = raw_scale;
        Ok(s)
    }

    /// `x1,x2,value` rows in meters; meant for small grids.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x1,x2,value")?;
        for i in 0..self.axis_x1.len {
            let x1 = self.axis_x1.coord(i);
            for j in 0..self.axis_x2.len {
                writeln!(
                    w,
                    "{:e},{:e},{:e}",
                    x1,
                    self.axis_x2.coord(j),
                    self.get(i, j)
                )?;
            }
        }
        Ok(())
    }
}
