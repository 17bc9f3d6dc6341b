//! Second-order (intensity-correlation) interference behind a double slit.
//!
//! The crate evaluates the full two-detector correlation surface
//! `G2(x1, x2)` for thermal and entangled sources, estimates the thermal
//! surface independently by Monte-Carlo speckle simulation, cuts scan-line
//! cross-sections through either, and measures their fringe spacing. The
//! spacing along a line depends on how the two detectors move together;
//! [`scanline::predict_fringe_spacing`] gives the closed form.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod analytic;
pub mod config;
pub mod error;
pub mod frames;
pub mod geometry;
pub mod montecarlo;
pub mod propagate;
pub mod report;
pub mod rng;
pub mod scanline;
pub mod surface;

pub use error::{Error, Result};
pub use geometry::{Aperture, DetectorGrid, OpticalConfig, PaperPreset, SourceGrid};
pub use surface::{CorrelationSurface, Normalization, Provenance, SourceKind};
