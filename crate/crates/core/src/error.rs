//! Crate-wide error type.
//!
//! Every fallible operation returns [`Error`]. Each variant carries a stable
//! machine-parsable code (`module.kind`) used by the CLI for single-line
//! error reporting.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An operation that requires at least one element received none.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Two data sets that must share a frequency grid do not.
    #[error("frequency grids do not match")]
    GridMismatch,

    /// A frequency grid failed its construction invariants.
    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),

    /// Array lengths inconsistent with the owning grid.
    #[error("array length {got} does not match grid length {expected}")]
    LengthMismatch { expected: usize, got: usize },

    /// A numeric argument violated a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A frequency lies outside the supported or measured band.
    #[error("frequency {f_hz} Hz outside valid range [{lo_hz}, {hi_hz}] Hz")]
    FrequencyOutOfRange { f_hz: f64, lo_hz: f64, hi_hz: f64 },

    /// Reference permittivity requested for the short standard.
    #[error("the short standard has no finite reference permittivity")]
    ShortHasNoPermittivity,

    /// A reference-liquid model is missing or malformed.
    #[error("reference liquid error: {0}")]
    ReferenceLiquid(String),

    /// Calibration solve is missing a required standard.
    #[error("calibration requires standard: {0}")]
    MissingStandard(&'static str),

    /// Calibration system is numerically degenerate at some frequency.
    #[error("degenerate calibration system at {f_hz} Hz (condition estimate {cond:.3e})")]
    DegenerateCalibration { f_hz: f64, cond: f64 },

    /// Stored short reference too small to normalize drift against.
    #[error("short reference magnitude below threshold at {f_hz} Hz")]
    ShortReferenceVanishes { f_hz: f64 },

    /// Model parameters violate their invariants.
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    /// Fit input has fewer points than unknowns allow.
    #[error("fit needs at least {needed} frequency points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    /// File parse failure (Touchstone, CSV, parameter files).
    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },

    /// Document schema version differs from what this build writes.
    #[error("schema version mismatch in {path}: found {found}, expected {expected}")]
    VersionMismatch {
        path: String,
        found: u32,
        expected: u32,
    },

    /// Session-level structural invariant violated.
    #[error("invalid session: {0}")]
    InvalidSession(String),

    /// Underlying I/O failure.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable `module.kind` code for machine-parsable CLI error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyInput(_) => "spectra.empty_input",
            Error::GridMismatch => "spectra.grid_mismatch",
            Error::InvalidGrid(_) => "spectra.invalid_grid",
            Error::LengthMismatch { .. } => "spectra.length_mismatch",
            Error::InvalidArgument(_) => "spectra.invalid_argument",
            Error::FrequencyOutOfRange { .. } => "spectra.frequency_out_of_range",
            Error::ShortHasNoPermittivity => "probe_cal.short_has_no_permittivity",
            Error::ReferenceLiquid(_) => "probe_cal.reference_liquid",
            Error::MissingStandard(_) => "probe_cal.missing_standard",
            Error::DegenerateCalibration { .. } => "probe_cal.degenerate",
            Error::ShortReferenceVanishes { .. } => "probe_cal.short_reference_vanishes",
            Error::InvalidParams(_) => "colecole.invalid_params",
            Error::TooFewPoints { .. } => "colecole.too_few_points",
            Error::Parse { .. } => "campaign.parse",
            Error::VersionMismatch { .. } => "campaign.version_mismatch",
            Error::InvalidSession(_) => "campaign.invalid_session",
            Error::Io { .. } => "campaign.io",
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: &std::path::Path, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.display().to_string(),
            msg: msg.into(),
        }
    }
}
