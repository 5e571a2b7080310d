//! Open-ended coaxial probe calibration and reflection-to-permittivity
//! inversion.
//!
//! The probe is calibrated per frequency with a bilinear (Moebius) model
//!
//! ```text
//! eps(gamma) = (A*gamma + B) / (1 + C*gamma)
//! ```
//!
//! solved from the three finite-permittivity standards (air, water,
//! methanol). The short circuit is not part of the solve; its reflection is
//! stored as a drift reference so a post-session short measurement can
//! correct cable/connector drift multiplicatively, which is what the
//! sterile-probe pre-set-calibration workflow needs.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::spectra::{average_sweeps, FrequencyGrid, PermittivitySpectrum, PointFlags, ReflectionSweep};
use crate::{Error, Result};

/// Validity band of the reference-liquid models.
pub const REFERENCE_VALID_LO_HZ: f64 = 0.1e9;
pub const REFERENCE_VALID_HI_HZ: f64 = 50.0e9;

/// Liquid standards must be measured within this temperature window (deg C).
pub const LIQUID_TEMP_LO_C: f64 = 10.0;
pub const LIQUID_TEMP_HI_C: f64 = 40.0;

/// Per-frequency solve is rejected above this condition estimate.
pub const CONDITION_LIMIT: f64 = 1e10;

/// Threshold below which the bilinear map is considered degenerate.
pub const DEGENERACY_EPS: f64 = 1e-12;

/// A calibration standard.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StandardKind {
    Air,
    Short,
    Water { temperature_c: f64 },
    Methanol { temperature_c: f64 },
}

impl StandardKind {
    pub fn is_short(&self) -> bool {
        matches!(self, StandardKind::Short)
    }

    pub fn has_finite_permittivity(&self) -> bool {
        !self.is_short()
    }

    pub fn temperature_c(&self) -> Option<f64> {
        match self {
            StandardKind::Water { temperature_c } | StandardKind::Methanol { temperature_c } => {
                Some(*temperature_c)
            }
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            StandardKind::Air => "air",
            StandardKind::Short => "short",
            StandardKind::Water { .. } => "water",
            StandardKind::Methanol { .. } => "methanol",
        }
    }

    fn sort_rank(&self) -> u8 {
        match self {
            StandardKind::Air => 0,
            StandardKind::Water { .. } => 1,
            StandardKind::Methanol { .. } => 2,
            StandardKind::Short => 3,
        }
    }
}

/// Single-pole Debye model of a reference liquid, linearized in temperature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLiquidModel {
    pub name: String,
    pub eps_static: f64,
    pub eps_inf: f64,
    pub tau_ps: f64,
    pub ref_temperature_c: f64,
    #[serde(default)]
    pub eps_static_per_c: f64,
    #[serde(default)]
    pub eps_inf_per_c: f64,
    #[serde(default)]
    pub tau_ps_per_c: f64,
    pub source: String,
}

impl ReferenceLiquidModel {
    fn params_at(&self, temperature_c: f64) -> Result<(f64, f64, f64)> {
        if !(LIQUID_TEMP_LO_C..=LIQUID_TEMP_HI_C).contains(&temperature_c) {
            return Err(Error::ReferenceLiquid(format!(
                "{}: temperature {temperature_c} C outside [{LIQUID_TEMP_LO_C}, {LIQUID_TEMP_HI_C}]",
                self.name
            )));
        }
        let dt = temperature_c - self.ref_temperature_c;
        let eps_s = self.eps_static + self.eps_static_per_c * dt;
        let eps_inf = self.eps_inf + self.eps_inf_per_c * dt;
        let tau_ps = self.tau_ps + self.tau_ps_per_c * dt;
        if !(eps_s > eps_inf && eps_inf >= 1.0 && tau_ps > 0.0) {
            return Err(Error::ReferenceLiquid(format!(
                "{}: adjusted parameters invalid at {temperature_c} C",
                self.name
            )));
        }
        Ok((eps_s, eps_inf, tau_ps * 1e-12))
    }

    /// Complex permittivity `eps' - j*eps''` of the liquid at `temperature_c`
    /// and frequency `f_hz`. No band check; callers gate the band.
    pub fn debye(&self, temperature_c: f64, f_hz: f64) -> Result<Complex64> {
        let (eps_s, eps_inf, tau_s) = self.params_at(temperature_c)?;
        let omega = 2.0 * std::f64::consts::PI * f_hz;
        let denom = Complex64::new(1.0, omega * tau_s);
        Ok(Complex64::new(eps_inf, 0.0) + Complex64::new(eps_s - eps_inf, 0.0) / denom)
    }
}

/// The set of reference-liquid models available to a calibration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLiquids {
    schema_version: u32,
    liquids: Vec<ReferenceLiquidModel>,
}

pub const REFERENCE_LIQUIDS_SCHEMA_VERSION: u32 = 1;

impl ReferenceLiquids {
    /// Models shipped with the crate (water and methanol at 25 C).
    pub fn builtin() -> Self {
        ReferenceLiquids::from_toml_str(include_str!("../data/reference_liquids.toml"))
            .expect("builtin reference liquid file is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let set: ReferenceLiquids = toml::from_str(text)
            .map_err(|e| Error::ReferenceLiquid(format!("parse failure: {e}")))?;
        if set.schema_version != REFERENCE_LIQUIDS_SCHEMA_VERSION {
            return Err(Error::VersionMismatch {
                path: "<reference liquids>".into(),
                found: set.schema_version,
                expected: REFERENCE_LIQUIDS_SCHEMA_VERSION,
            });
        }
        for l in &set.liquids {
            if !(l.eps_static > l.eps_inf && l.eps_inf >= 1.0 && l.tau_ps > 0.0) {
                return Err(Error::ReferenceLiquid(format!(
                    "{}: eps_static > eps_inf >= 1 and tau_ps > 0 required",
                    l.name
                )));
            }
        }
        Ok(set)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ReferenceLiquids::from_toml_str(&text)
    }

    pub fn get(&self, name: &str) -> Result<&ReferenceLiquidModel> {
        self.liquids
            .iter()
            .find(|l| l.name == name)
            .ok_or_else(|| Error::ReferenceLiquid(format!("no model named '{name}'")))
    }

    /// Known complex permittivity of a standard at `f_hz`.
    ///
    /// Air is exactly `1 - j0`; liquids evaluate their Debye model at the
    /// standard's temperature. The short has no finite permittivity.
    pub fn reference_permittivity(&self, kind: &StandardKind, f_hz: f64) -> Result<Complex64> {
        if !(REFERENCE_VALID_LO_HZ..=REFERENCE_VALID_HI_HZ).contains(&f_hz) {
            return Err(Error::FrequencyOutOfRange {
                f_hz,
                lo_hz: REFERENCE_VALID_LO_HZ,
                hi_hz: REFERENCE_VALID_HI_HZ,
            });
        }
        match kind {
            StandardKind::Air => Ok(Complex64::new(1.0, 0.0)),
            StandardKind::Short => Err(Error::ShortHasNoPermittivity),
            StandardKind::Water { temperature_c } => self.get("water")?.debye(*temperature_c, f_hz),
            StandardKind::Methanol { temperature_c } => {
                self.get("methanol")?.debye(*temperature_c, f_hz)
            }
        }
    }
}

/// One sweep-averaged measurement of a standard.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardMeasurement {
    pub kind: StandardKind,
    pub sweep: ReflectionSweep,
}

/// Per-frequency bilinear calibration coefficients plus drift state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "CalibrationRepr", try_from = "CalibrationRepr")]
pub struct CalibrationModel {
    grid: FrequencyGrid,
    coeff_a: Vec<Complex64>,
    coeff_b: Vec<Complex64>,
    coeff_c: Vec<Complex64>,
    short_reference: Vec<Complex64>,
    residual: Vec<f64>,
    drift: Option<Vec<Complex64>>,
}

#[derive(Serialize, Deserialize)]
struct CalibrationRepr {
    grid: FrequencyGrid,
    coeff_a: Vec<Complex64>,
    coeff_b: Vec<Complex64>,
    coeff_c: Vec<Complex64>,
    short_reference: Vec<Complex64>,
    residual: Vec<f64>,
    drift: Option<Vec<Complex64>>,
}

impl From<CalibrationModel> for CalibrationRepr {
    fn from(m: CalibrationModel) -> CalibrationRepr {
        CalibrationRepr {
            grid: m.grid,
            coeff_a: m.coeff_a,
            coeff_b: m.coeff_b,
            coeff_c: m.coeff_c,
            short_reference: m.short_reference,
            residual: m.residual,
            drift: m.drift,
        }
    }
}

impl TryFrom<CalibrationRepr> for CalibrationModel {
    type Error = Error;
    fn try_from(r: CalibrationRepr) -> Result<Self> {
        let mut m = CalibrationModel::new(
            r.grid,
            r.coeff_a,
            r.coeff_b,
            r.coeff_c,
            r.short_reference,
            r.residual,
        )?;
        if let Some(d) = r.drift {
            if d.len() != m.grid.len() {
                return Err(Error::LengthMismatch {
                    expected: m.grid.len(),
                    got: d.len(),
                });
            }
            m.drift = Some(d);
        }
        Ok(m)
    }
}

impl CalibrationModel {
    pub fn new(
        grid: FrequencyGrid,
        coeff_a: Vec<Complex64>,
        coeff_b: Vec<Complex64>,
        coeff_c: Vec<Complex64>,
        short_reference: Vec<Complex64>,
        residual: Vec<f64>,
    ) -> Result<Self> {
        let n = grid.len();
        for (len, what) in [
            (coeff_a.len(), "coeff_a"),
            (coeff_b.len(), "coeff_b"),
            (coeff_c.len(), "coeff_c"),
            (short_reference.len(), "short_reference"),
            (residual.len(), "residual"),
        ] {
            if len != n {
                return Err(Error::InvalidArgument(format!(
                    "{what} length {len} does not match grid length {n}"
                )));
            }
        }
        for i in 0..n {
            let det = coeff_a[i] - coeff_b[i] * coeff_c[i];
            if det.norm() <= DEGENERACY_EPS {
                return Err(Error::DegenerateCalibration {
                    f_hz: grid.points_hz()[i],
                    cond: f64::INFINITY,
                });
            }
        }
        Ok(CalibrationModel {
            grid,
            coeff_a,
            coeff_b,
            coeff_c,
            short_reference,
            residual,
            drift: None,
        })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn coeff_a(&self) -> &[Complex64] {
        &self.coeff_a
    }

    pub fn coeff_b(&self) -> &[Complex64] {
        &self.coeff_b
    }

    pub fn coeff_c(&self) -> &[Complex64] {
        &self.coeff_c
    }

    pub fn short_reference(&self) -> &[Complex64] {
        &self.short_reference
    }

    /// Max-over-standards bilinear fit residual per frequency.
    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn drift(&self) -> Option<&[Complex64]> {
        self.drift.as_deref()
    }

    /// Bilinear map at grid index `i`, after drift normalization.
    ///
    /// Returns `None` when the drift-corrected reflection sits on the pole of
    /// the map.
    pub fn eval_point(&self, i: usize, gamma: Complex64) -> Option<Complex64> {
        let g = match &self.drift {
            Some(d) => gamma / d[i],
            None => gamma,
        };
        let denom = Complex64::new(1.0, 0.0) + self.coeff_c[i] * g;
        if denom.norm() < DEGENERACY_EPS {
            return None;
        }
        Some((self.coeff_a[i] * g + self.coeff_b[i]) / denom)
    }
}

/// Drift ratio report from a post-session short measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct DriftReport {
    pub grid: FrequencyGrid,
    /// |d(f)| per frequency.
    pub magnitude: Vec<f64>,
    /// arg d(f) in radians per frequency.
    pub phase_rad: Vec<f64>,
}

/// Residuals of a calibration checked against a known standard.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub grid: FrequencyGrid,
    /// `|inverted - reference|` per frequency.
    pub residual: Vec<f64>,
    pub max_abs: f64,
    pub rms: f64,
}

fn inf_norm(m: &nalgebra::Matrix3<Complex64>) -> f64 {
    (0..3)
        .map(|r| (0..3).map(|c| m[(r, c)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solve `A*g + B - C*eps*g = eps` per frequency over the finite-permittivity
/// standards; exact with three standards, least-squares with more.
///
/// The short standard is required but enters only as the stored drift
/// reference. Exact duplicates in the standards list are dropped, and the
/// solve order is canonicalized so the result does not depend on list order.
pub fn solve_calibration(
    standards: &[StandardMeasurement],
    liquids: &ReferenceLiquids,
) -> Result<CalibrationModel> {
    if standards.is_empty() {
        return Err(Error::EmptyInput("solve_calibration"));
    }
    let grid = standards[0].sweep.grid().clone();
    for s in standards {
        if *s.sweep.grid() != grid {
            return Err(Error::GridMismatch);
        }
    }

    // drop exact duplicates (same kind, bitwise-equal sweep)
    let mut unique: Vec<&StandardMeasurement> = Vec::new();
    for s in standards {
        if !unique.iter().any(|u| **u == *s) {
            unique.push(s);
        }
    }

    let mut finite: Vec<&StandardMeasurement> = unique
        .iter()
        .copied()
        .filter(|s| s.kind.has_finite_permittivity())
        .collect();
    let shorts: Vec<&StandardMeasurement> =
        unique.iter().copied().filter(|s| s.kind.is_short()).collect();

    for (label, present) in [
        ("air", finite.iter().any(|s| s.kind == StandardKind::Air)),
        (
            "water",
            finite.iter().any(|s| matches!(s.kind, StandardKind::Water { .. })),
        ),
        (
            "methanol",
            finite
                .iter()
                .any(|s| matches!(s.kind, StandardKind::Methanol { .. })),
        ),
        ("short", !shorts.is_empty()),
    ] {
        if !present {
            return Err(Error::MissingStandard(match label {
                "air" => "air",
                "water" => "water",
                "methanol" => "methanol",
                _ => "short",
            }));
        }
    }

    // canonical solve order: kind rank, then temperature, then first point
    finite.sort_by(|a, b| {
        let ka = (
            a.kind.sort_rank(),
            a.kind.temperature_c().unwrap_or(0.0),
            a.sweep.gamma()[0].re,
            a.sweep.gamma()[0].im,
        );
        let kb = (
            b.kind.sort_rank(),
            b.kind.temperature_c().unwrap_or(0.0),
            b.sweep.gamma()[0].re,
            b.sweep.gamma()[0].im,
        );
        ka.partial_cmp(&kb).unwrap()
    });

    let n = grid.len();
    let mut coeff_a = Vec::with_capacity(n);
    let mut coeff_b = Vec::with_capacity(n);
    let mut coeff_c = Vec::with_capacity(n);
    let mut residual = Vec::with_capacity(n);

    // reference permittivities are frequency-dependent; precompute per standard
    let mut refs: Vec<Vec<Complex64>> = Vec::with_capacity(finite.len());
    for s in &finite {
        let col: Result<Vec<Complex64>> = grid
            .points_hz()
            .iter()
            .map(|&f| liquids.reference_permittivity(&s.kind, f))
            .collect();
        refs.push(col?);
    }

    for i in 0..n {
        let f_hz = grid.points_hz()[i];
        let rows: Vec<(Complex64, Complex64)> = finite
            .iter()
            .enumerate()
            .map(|(k, s)| (s.sweep.gamma()[i], refs[k][i]))
            .collect();

        // assemble the square system: direct for 3 rows, normal equations above
        let (m, rhs) = if rows.len() == 3 {
            let mut m = nalgebra::Matrix3::<Complex64>::zeros();
            let mut rhs = nalgebra::Vector3::<Complex64>::zeros();
            for (r, (g, eps)) in rows.iter().enumerate() {
                m[(r, 0)] = *g;
                m[(r, 1)] = Complex64::new(1.0, 0.0);
                m[(r, 2)] = -eps * g;
                rhs[r] = *eps;
            }
            (m, rhs)
        } else {
            let mut m = nalgebra::Matrix3::<Complex64>::zeros();
            let mut rhs = nalgebra::Vector3::<Complex64>::zeros();
            for (g, eps) in &rows {
                let row = [*g, Complex64::new(1.0, 0.0), -eps * g];
                for a in 0..3 {
                    for b in 0..3 {
                        m[(a, b)] += row[a].conj() * row[b];
                    }
                    rhs[a] += row[a].conj() * eps;
                }
            }
            (m, rhs)
        };

        let inv = m.try_inverse().ok_or(Error::DegenerateCalibration {
            f_hz,
            cond: f64::INFINITY,
        })?;
        let cond = inf_norm(&m) * inf_norm(&inv);
        if cond > CONDITION_LIMIT {
            return Err(Error::DegenerateCalibration { f_hz, cond });
        }
        let x = inv * rhs;
        let (a, b, c) = (x[0], x[1], x[2]);

        let mut res: f64 = 0.0;
        for (g, eps) in &rows {
            let denom = Complex64::new(1.0, 0.0) + c * g;
            let fit = (a * g + b) / denom;
            res = res.max((fit - eps).norm());
        }

        coeff_a.push(a);
        coeff_b.push(b);
        coeff_c.push(c);
        residual.push(res);
    }

    let short_sweeps: Vec<ReflectionSweep> = shorts.iter().map(|s| s.sweep.clone()).collect();
    let short_reference = average_sweeps(&short_sweeps)?.gamma().to_vec();

    CalibrationModel::new(grid, coeff_a, coeff_b, coeff_c, short_reference, residual)
}

/// Invert a measured reflection sweep to complex permittivity.
///
/// Points where the bilinear map hits its pole get a placeholder value of
/// zero and the [`PointFlags::INVERSION_POLE`] flag; all other points are
/// returned normally, with nonphysical values flagged rather than clipped.
pub fn invert_reflection(
    cal: &CalibrationModel,
    sweep: &ReflectionSweep,
) -> Result<PermittivitySpectrum> {
    if sweep.grid() != cal.grid() {
        return Err(Error::GridMismatch);
    }
    let n = cal.grid().len();
    let mut dc = Vec::with_capacity(n);
    let mut lf = Vec::with_capacity(n);
    let mut flags = vec![PointFlags::CLEAR; n];
    for i in 0..n {
        match cal.eval_point(i, sweep.gamma()[i]) {
            Some(eps) => {
                dc.push(eps.re);
                lf.push(-eps.im);
                if eps.re < 1.0 {
                    flags[i].insert(PointFlags::NONPHYSICAL_DC);
                }
                if -eps.im < 0.0 {
                    flags[i].insert(PointFlags::NONPHYSICAL_LF);
                }
            }
            None => {
                dc.push(0.0);
                lf.push(0.0);
                flags[i].insert(PointFlags::INVERSION_POLE);
            }
        }
    }
    PermittivitySpectrum::new(cal.grid().clone(), dc, lf)?.with_flags(flags)
}

/// Fold a post-session short measurement into the calibration.
///
/// The drift ratio `d(f) = gamma_post_short / gamma_short_at_calibration` is
/// stored so subsequent inversions normalize measured reflections by `1/d(f)`
/// before the bilinear map. The ratio is always taken against the
/// calibration-time short, so repeating the correction with the same
/// measurement is idempotent.
pub fn drift_correct(
    cal: &CalibrationModel,
    post_short: &StandardMeasurement,
) -> Result<(CalibrationModel, DriftReport)> {
    if !post_short.kind.is_short() {
        return Err(Error::InvalidArgument(format!(
            "drift correction needs a short measurement, got {}",
            post_short.kind.label()
        )));
    }
    if post_short.sweep.grid() != cal.grid() {
        return Err(Error::GridMismatch);
    }
    let n = cal.grid().len();
    let mut drift = Vec::with_capacity(n);
    for i in 0..n {
        let reference = cal.short_reference[i];
        if reference.norm() < DEGENERACY_EPS {
            return Err(Error::ShortReferenceVanishes {
                f_hz: cal.grid().points_hz()[i],
            });
        }
        drift.push(post_short.sweep.gamma()[i] / reference);
    }
    let report = DriftReport {
        grid: cal.grid().clone(),
        magnitude: drift.iter().map(|d| d.norm()).collect(),
        phase_rad: drift.iter().map(|d| d.arg()).collect(),
    };
    let mut corrected = cal.clone();
    corrected.drift = Some(drift);
    Ok((corrected, report))
}

/// Check a calibration against a standard with known permittivity.
pub fn validate_calibration(
    cal: &CalibrationModel,
    check: &StandardMeasurement,
    liquids: &ReferenceLiquids,
) -> Result<ValidationReport> {
    if !check.kind.has_finite_permittivity() {
        return Err(Error::ShortHasNoPermittivity);
    }
    if check.sweep.grid() != cal.grid() {
        return Err(Error::GridMismatch);
    }
    let inverted = invert_reflection(cal, &check.sweep)?;
    let n = cal.grid().len();
    let mut residual = Vec::with_capacity(n);
    for i in 0..n {
        let reference = liquids.reference_permittivity(&check.kind, cal.grid().points_hz()[i])?;
        residual.push((inverted.complex_at(i) - reference).norm());
    }
    let max_abs = residual.iter().copied().fold(0.0, f64::max);
    let rms = (residual.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();
    Ok(ValidationReport {
        grid: cal.grid().clone(),
        residual,
        max_abs,
        rms,
    })
}

/// Reflection a probe with bilinear coefficients `(a, b, c)` produces for a
/// material of permittivity `eps`: the forward map `gamma = (eps - B)/(A - C*eps)`.
pub fn forward_reflection(
    a: Complex64,
    b: Complex64,
    c: Complex64,
    eps: Complex64,
) -> Result<Complex64> {
    let denom = a - c * eps;
    if denom.norm() < DEGENERACY_EPS {
        return Err(Error::InvalidArgument(
            "forward bilinear map degenerate for this permittivity".into(),
        ));
    }
    Ok((eps - b) / denom)
}
