//! Tumor-minus-healthy contrast analysis: per-patient difference curves,
//! cubic fits over frequency in GHz, equal-weight group aggregation, spot
//! frequencies, and plane-wave penetration depth.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::spectra::{mean_spectra, FrequencyGrid, PermittivitySpectrum, SPEED_OF_LIGHT};
use crate::{Error, Result};

/// Band within which spot frequencies are meaningful (GHz).
pub const REPORT_BAND_GHZ: (f64, f64) = (0.5, 26.5);

/// Spot frequencies used by the standard report (GHz).
pub const DEFAULT_SPOT_FREQS_GHZ: [f64; 3] = [2.45, 12.5, 18.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TissueStatus {
    Healthy,
    Tumor,
}

impl TissueStatus {
    pub fn label(&self) -> &'static str {
        match self {
            TissueStatus::Healthy => "healthy",
            TissueStatus::Tumor => "tumor",
        }
    }
}

/// Tumor depth-of-invasion stage, ordered from lowest to highest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TumorStage {
    T3,
    T4a,
    T4b,
}

impl TumorStage {
    pub const ALL: [TumorStage; 3] = [TumorStage::T3, TumorStage::T4a, TumorStage::T4b];

    pub fn label(&self) -> &'static str {
        match self {
            TumorStage::T3 => "t3",
            TumorStage::T4a => "t4a",
            TumorStage::T4b => "t4b",
        }
    }
}

impl std::str::FromStr for TumorStage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t3" => Ok(TumorStage::T3),
            "t4a" => Ok(TumorStage::T4a),
            "t4b" => Ok(TumorStage::T4b),
            other => Err(Error::InvalidArgument(format!("unknown tumor stage '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    ExVivo,
    InVivo,
}

impl Scenario {
    pub const ALL: [Scenario; 2] = [Scenario::ExVivo, Scenario::InVivo];

    pub fn label(&self) -> &'static str {
        match self {
            Scenario::ExVivo => "ex_vivo",
            Scenario::InVivo => "in_vivo",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ex_vivo" | "exvivo" | "ex-vivo" => Ok(Scenario::ExVivo),
            "in_vivo" | "invivo" | "in-vivo" => Ok(Scenario::InVivo),
            other => Err(Error::InvalidArgument(format!("unknown scenario '{other}'"))),
        }
    }
}

/// Tumor-minus-healthy difference of dielectric constant and loss factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferenceCurve {
    pub grid: FrequencyGrid,
    pub delta_dc: Vec<f64>,
    pub delta_lf: Vec<f64>,
}

impl DifferenceCurve {
    pub fn new(grid: FrequencyGrid, delta_dc: Vec<f64>, delta_lf: Vec<f64>) -> Result<Self> {
        if delta_dc.len() != grid.len() || delta_lf.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: delta_dc.len().max(delta_lf.len()),
            });
        }
        if delta_dc
            .iter()
            .chain(delta_lf.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument(
                "difference values must be finite".into(),
            ));
        }
        Ok(DifferenceCurve {
            grid,
            delta_dc,
            delta_lf,
        })
    }
}

/// Degree-3 polynomial fits of a difference curve, abscissa in GHz.
///
/// `coeffs[k]` multiplies `f_ghz^k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubicFit {
    pub coeffs_dc: [f64; 4],
    pub coeffs_lf: [f64; 4],
    pub rms_residual_dc: f64,
    pub rms_residual_lf: f64,
}

impl CubicFit {
    pub fn eval_dc(&self, f_ghz: f64) -> f64 {
        horner(&self.coeffs_dc, f_ghz)
    }

    pub fn eval_lf(&self, f_ghz: f64) -> f64 {
        horner(&self.coeffs_lf, f_ghz)
    }
}

fn horner(coeffs: &[f64; 4], x: f64) -> f64 {
    ((coeffs[3] * x + coeffs[2]) * x + coeffs[1]) * x + coeffs[0]
}

/// One reported spot frequency of a group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpotRow {
    pub f_ghz: f64,
    pub delta_dc: f64,
    pub delta_lf: f64,
}

/// Equal-weight aggregate of one (scenario, stage-or-all) patient group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub scenario: Scenario,
    /// `None` means all stages pooled.
    pub stage: Option<TumorStage>,
    pub n_patients: usize,
    pub mean_curve: DifferenceCurve,
    pub mean_fit: CubicFit,
    pub spot_rows: Vec<SpotRow>,
    /// Set when the group holds a single patient.
    pub small_sample: bool,
}

/// Difference between the mean tumor and mean healthy spectrum of one
/// patient.
///
/// Each side is averaged over its measurement points first, so a patient
/// contributes a single curve regardless of how many locations were measured.
pub fn patient_difference(
    tumor_spectra: &[PermittivitySpectrum],
    healthy_spectra: &[PermittivitySpectrum],
) -> Result<DifferenceCurve> {
    if tumor_spectra.is_empty() {
        return Err(Error::EmptyInput("patient_difference: tumor side"));
    }
    if healthy_spectra.is_empty() {
        return Err(Error::EmptyInput("patient_difference: healthy side"));
    }
    let tumor = mean_spectra(tumor_spectra)?;
    let healthy = mean_spectra(healthy_spectra)?;
    if tumor.grid() != healthy.grid() {
        return Err(Error::GridMismatch);
    }
    let delta_dc: Vec<f64> = tumor
        .dielectric_constant()
        .iter()
        .zip(healthy.dielectric_constant())
        .map(|(t, h)| t - h)
        .collect();
    let delta_lf: Vec<f64> = tumor
        .loss_factor()
        .iter()
        .zip(healthy.loss_factor())
        .map(|(t, h)| t - h)
        .collect();
    DifferenceCurve::new(tumor.grid().clone(), delta_dc, delta_lf)
}

fn cubic_least_squares(f_ghz: &[f64], y: &[f64]) -> Result<([f64; 4], f64)> {
    let n = f_ghz.len();
    let vandermonde = DMatrix::from_fn(n, 4, |r, c| f_ghz[r].powi(c as i32));
    let rhs = DVector::from_column_slice(y);
    let svd = vandermonde.clone().svd(true, true);
    let sol = svd
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::InvalidArgument(format!("cubic fit failed: {e}")))?;
    let fitted = vandermonde * &sol;
    let rms = ((&rhs - fitted).norm_squared() / n as f64).sqrt();
    Ok(([sol[0], sol[1], sol[2], sol[3]], rms))
}

/// Ordinary least-squares cubic fit of a difference curve, independently for
/// the dielectric-constant and loss-factor components.
pub fn fit_cubic(curve: &DifferenceCurve) -> Result<CubicFit> {
    if curve.grid.len() < 4 {
        return Err(Error::TooFewPoints {
            needed: 4,
            got: curve.grid.len(),
        });
    }
    let f_ghz: Vec<f64> = curve.grid.points_hz().iter().map(|f| f / 1e9).collect();
    let (coeffs_dc, rms_residual_dc) = cubic_least_squares(&f_ghz, &curve.delta_dc)?;
    let (coeffs_lf, rms_residual_lf) = cubic_least_squares(&f_ghz, &curve.delta_lf)?;
    Ok(CubicFit {
        coeffs_dc,
        coeffs_lf,
        rms_residual_dc,
        rms_residual_lf,
    })
}

/// Unweighted mean of per-patient difference curves, then a cubic fit of the
/// mean.
///
/// Every patient carries the same weight here no matter how many measurement
/// points produced their curve; intra-patient averaging already happened in
/// [`patient_difference`].
pub fn group_mean_difference(
    per_patient: &[DifferenceCurve],
) -> Result<(DifferenceCurve, CubicFit)> {
    let first = per_patient
        .first()
        .ok_or(Error::EmptyInput("group_mean_difference"))?;
    for c in &per_patient[1..] {
        if c.grid != first.grid {
            return Err(Error::GridMismatch);
        }
    }
    let n = first.grid.len();
    let inv = 1.0 / per_patient.len() as f64;
    let mut delta_dc = vec![0.0; n];
    let mut delta_lf = vec![0.0; n];
    for c in per_patient {
        for i in 0..n {
            delta_dc[i] += c.delta_dc[i];
            delta_lf[i] += c.delta_lf[i];
        }
    }
    for i in 0..n {
        delta_dc[i] *= inv;
        delta_lf[i] *= inv;
    }
    let mean = DifferenceCurve::new(first.grid.clone(), delta_dc, delta_lf)?;
    let fit = fit_cubic(&mean)?;
    Ok((mean, fit))
}

/// Evaluate a cubic fit at the requested spot frequencies.
///
/// Values are returned unrounded; two-decimal rounding happens only in the
/// reporting layer.
pub fn spot_values(fit: &CubicFit, freqs_ghz: &[f64]) -> Result<Vec<SpotRow>> {
    let mut rows = Vec::with_capacity(freqs_ghz.len());
    for &f in freqs_ghz {
        if !(REPORT_BAND_GHZ.0..=REPORT_BAND_GHZ.1).contains(&f) {
            return Err(Error::FrequencyOutOfRange {
                f_hz: f * 1e9,
                lo_hz: REPORT_BAND_GHZ.0 * 1e9,
                hi_hz: REPORT_BAND_GHZ.1 * 1e9,
            });
        }
        rows.push(SpotRow {
            f_ghz: f,
            delta_dc: fit.eval_dc(f),
            delta_lf: fit.eval_lf(f),
        });
    }
    Ok(rows)
}

/// Plane-wave 1/e field penetration depth in meters.
///
/// `depth = 1/alpha` with
/// `alpha = (2*pi*f/c) * sqrt((dc/2) * (sqrt(1 + (lf/dc)^2) - 1))`.
/// A lossless medium (`lf = 0`) yields `f64::INFINITY`.
pub fn penetration_depth(dc: f64, lf: f64, f_hz: f64) -> Result<f64> {
    if !(dc >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "dielectric constant must be >= 1, got {dc}"
        )));
    }
    if !(lf >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "loss factor must be >= 0, got {lf}"
        )));
    }
    if !(f_hz > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "frequency must be > 0, got {f_hz}"
        )));
    }
    if lf == 0.0 {
        return Ok(f64::INFINITY);
    }
    let ratio = lf / dc;
    let alpha = (2.0 * std::f64::consts::PI * f_hz / SPEED_OF_LIGHT)
        * ((dc / 2.0) * ((1.0 + ratio * ratio).sqrt() - 1.0)).sqrt();
    Ok(1.0 / alpha)
}
