//! Dielectric spectroscopy toolkit for open-ended coaxial probe measurements.
//!
//! The crate covers the full processing chain used in tissue-characterization
//! measurement campaigns:
//!
//! - [`spectra`] — frequency grids, complex permittivity and reflection data,
//!   sweep averaging, unit conversions.
//! - [`probe_cal`] — probe calibration from reference standards (air, short,
//!   water, methanol), reflection-to-permittivity inversion, and
//!   short-referenced drift correction for sterile-probe workflows.
//! - [`colecole`] — evaluation and multi-start damped least-squares fitting of
//!   the multi-pole Cole-Cole dispersion model.
//! - [`contrast`] — tumor-minus-healthy difference curves, cubic fits,
//!   equal-weight group aggregation by scenario and tumor stage, and
//!   plane-wave penetration depth.
//! - [`campaign`] — campaign data model, Touchstone/CSV ingestion, session
//!   persistence, and report/plot-data generation.
//! - [`synth`] — synthetic-campaign generator with known ground truth, used to
//!   verify every pipeline stage round-trip.

pub mod campaign;
pub mod colecole;
pub mod contrast;
mod error;
pub mod probe_cal;
pub mod spectra;
pub mod synth;

pub use error::{Error, Result};
