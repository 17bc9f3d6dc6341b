use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid aperture: {0}")]
    InvalidAperture(String),

    #[error("invalid optical configuration: {0}")]
    InvalidConfig(String),

    /// Source grid too coarse for the detector extent; the discretized
    /// Fraunhofer kernel would alias.
    #[error(
        "sampling criterion violated: source spacing {source_spacing:.4e} m exceeds \
         lambda*z/(2*X) = {limit:.4e} m; refine the source grid to at least {min_samples} \
         samples or shrink the detector"
    )]
    SamplingCriterion {
        source_spacing: f64,
        limit: f64,
        min_samples: usize,
    },

    #[error("non-uniform grid: {0}")]
    NonUniformGrid(String),

    #[error("bad length literal {0:?} (expected a number with optional nm/um/mm/cm/m suffix)")]
    BadLength(String),

    #[error("surface of {requested} values exceeds the memory budget of {budget} values")]
    GridTooLarge { requested: usize, budget: usize },

    #[error("scan line lies entirely outside the surface ({excluded} points excluded)")]
    EmptySection { excluded: usize },

    #[error("invalid scan line: {0}")]
    InvalidScanLine(String),

    #[error("{0} is not supported for this operation")]
    UnsupportedSource(&'static str),

    #[error("operation requires a double-slit aperture")]
    RequiresDoubleSlit,

    #[error("found {} peak(s), need at least 2 to measure a spacing", .peaks.len())]
    TooFewPeaks { peaks: Vec<f64> },

    #[error("invalid analysis input: {0}")]
    InvalidAnalysis(String),

    #[error("mean intensity is zero at pixel {pixel}; cannot normalize")]
    ZeroIntensity { pixel: usize },

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("frame stacks do not match: {0}")]
    StackMismatch(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("config file {path}: {detail}")]
    ConfigFile { path: PathBuf, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
