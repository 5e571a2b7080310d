//! CSV interchange for pre-inverted permittivity spectra.
//!
//! Format: header `f_hz,eps_real,eps_imag_lossfactor`, one row per frequency,
//! loss factor stored positive. Values are written with Rust's shortest
//! round-trip float formatting, so export followed by import is bitwise
//! exact.

use std::path::Path;

use crate::spectra::{FrequencyGrid, PermittivitySpectrum};
use crate::{Error, Result};

pub(crate) const CSV_HEADER: &str = "f_hz,eps_real,eps_imag_lossfactor";

/// Write a spectrum to `path`.
pub fn export_csv_spectrum(spectrum: &PermittivitySpectrum, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(32 * spectrum.grid().len());
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (i, &f) in spectrum.grid().points_hz().iter().enumerate() {
        out.push_str(&format!(
            "{},{},{}\n",
            f,
            spectrum.dielectric_constant()[i],
            spectrum.loss_factor()[i]
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a spectrum from `path`.
pub fn import_csv_spectrum(path: &Path) -> Result<PermittivitySpectrum> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv_spectrum(&text, path)
}

pub(crate) fn parse_csv_spectrum(text: &str, path: &Path) -> Result<PermittivitySpectrum> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, "empty file"))?;
    let normalized: String = header.split(',').map(|c| c.trim()).collect::<Vec<_>>().join(",");
    if normalized != CSV_HEADER {
        return Err(Error::parse(
            path,
            format!("expected header '{CSV_HEADER}', got '{}'", header.trim()),
        ));
    }
    let mut freqs = Vec::new();
    let mut dc = Vec::new();
    let mut lf = Vec::new();
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').map(|c| c.trim()).collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                path,
                format!("line {}: expected 3 columns, got {}", lineno + 1, fields.len()),
            ));
        }
        let mut vals = [0.0f64; 3];
        for (slot, field) in vals.iter_mut().zip(fields.iter()) {
            *slot = field.parse().map_err(|_| {
                Error::parse(path, format!("line {}: bad number '{field}'", lineno + 1))
            })?;
        }
        freqs.push(vals[0]);
        dc.push(vals[1]);
        lf.push(vals[2]);
    }
    let grid = FrequencyGrid::new(freqs)
        .map_err(|e| Error::parse(path, format!("bad frequency column: {e}")))?;
    PermittivitySpectrum::new(grid, dc, lf)
        .map_err(|e| Error::parse(path, format!("bad spectrum data: {e}")))
}
