//! One-port Touchstone (.s1p) import.
//!
//! Supported option line: `# <unit> S <RI|MA|DB> R <resistance>`, token
//! matching case-insensitive, `R <resistance>` optional (defaults to 50).
//! Only one-port reflection data is accepted: every data row must carry
//! exactly `f re im` / `f mag ang` / `f db ang` columns.

use num_complex::Complex64;
use std::path::Path;

use crate::spectra::{FrequencyGrid, ReflectionSweep};
use crate::{Error, Result};

/// Parsed contents of a one-port Touchstone file.
#[derive(Clone, Debug, PartialEq)]
pub struct TouchstoneData {
    pub sweep: ReflectionSweep,
    /// `!` comment lines in file order, leading marker stripped.
    pub comments: Vec<String>,
    /// Reference resistance from the option line; parsed and preserved but
    /// unused by this pipeline.
    pub reference_ohms: f64,
}

#[derive(Clone, Copy, PartialEq)]
enum DataFormat {
    Ri,
    Ma,
    Db,
}

/// Read and parse a one-port Touchstone file.
pub fn import_touchstone(path: &Path) -> Result<TouchstoneData> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_touchstone(&text, path)
}

/// Parse Touchstone text; `path` only labels errors.
pub fn parse_touchstone(text: &str, path: &Path) -> Result<TouchstoneData> {
    let mut comments = Vec::new();
    let mut option: Option<(f64, DataFormat, f64)> = None; // unit factor, format, resistance
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('!') {
            comments.push(comment.trim().to_string());
            continue;
        }
        if let Some(opts) = line.strip_prefix('#') {
            if option.is_some() {
                return Err(Error::parse(
                    path,
                    format!("line {}: repeated option line", lineno + 1),
                ));
            }
            option = Some(parse_option_line(opts, path, lineno)?);
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                path,
                format!(
                    "line {}: expected 3 columns of one-port data, got {} \
                     (multi-port files are not supported)",
                    lineno + 1,
                    fields.len()
                ),
            ));
        }
        if option.is_none() {
            return Err(Error::parse(
                path,
                format!("line {}: data before the option line", lineno + 1),
            ));
        }
        let mut vals = [0.0f64; 3];
        for (slot, field) in vals.iter_mut().zip(fields.iter()) {
            *slot = field.parse().map_err(|_| {
                Error::parse(path, format!("line {}: bad number '{field}'", lineno + 1))
            })?;
        }
        rows.push((vals[0], vals[1], vals[2]));
    }

    let (unit_factor, format, reference_ohms) =
        option.ok_or_else(|| Error::parse(path, "missing option line (`# <unit> S <fmt> ...`)"))?;

    let freqs: Vec<f64> = rows.iter().map(|r| r.0 * unit_factor).collect();
    let gamma: Vec<Complex64> = rows
        .iter()
        .map(|&(_, a, b)| match format {
            DataFormat::Ri => Complex64::new(a, b),
            DataFormat::Ma => Complex64::from_polar(a, b.to_radians()),
            DataFormat::Db => Complex64::from_polar(10f64.powf(a / 20.0), b.to_radians()),
        })
        .collect();

    let grid = FrequencyGrid::new(freqs)
        .map_err(|e| Error::parse(path, format!("bad frequency column: {e}")))?;
    let sweep = ReflectionSweep::new(grid, gamma)
        .map_err(|e| Error::parse(path, format!("bad reflection data: {e}")))?;

    Ok(TouchstoneData {
        sweep,
        comments,
        reference_ohms,
    })
}

fn parse_option_line(opts: &str, path: &Path, lineno: usize) -> Result<(f64, DataFormat, f64)> {
    let tokens: Vec<String> = opts.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() < 3 {
        return Err(Error::parse(
            path,
            format!("line {}: option line needs `<unit> S <format>`", lineno + 1),
        ));
    }
    let unit_factor = match tokens[0].as_str() {
        "hz" => 1.0,
        "khz" => 1e3,
        "mhz" => 1e6,
        "ghz" => 1e9,
        other => {
            return Err(Error::parse(
                path,
                format!("line {}: unknown frequency unit '{other}'", lineno + 1),
            ))
        }
    };
    if tokens[1] != "s" {
        return Err(Error::parse(
            path,
            format!(
                "line {}: only S-parameter files are supported, got '{}'",
                lineno + 1,
                tokens[1]
            ),
        ));
    }
    let format = match tokens[2].as_str() {
        "ri" => DataFormat::Ri,
        "ma" => DataFormat::Ma,
        "db" => DataFormat::Db,
        other => {
            return Err(Error::parse(
                path,
                format!("line {}: unknown data format '{other}'", lineno + 1),
            ))
        }
    };
    let mut reference_ohms = 50.0;
    if let Some(r_pos) = tokens.iter().position(|t| t == "r") {
        let value = tokens.get(r_pos + 1).ok_or_else(|| {
            Error::parse(path, format!("line {}: R token without a value", lineno + 1))
        })?;
        reference_ohms = value.parse().map_err(|_| {
            Error::parse(path, format!("line {}: bad resistance '{value}'", lineno + 1))
        })?;
    }
    Ok((unit_factor, format, reference_ohms))
}
