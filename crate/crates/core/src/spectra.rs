//! Frequency grids, permittivity and reflection spectra, and the unit
//! conventions shared by the rest of the crate.
//!
//! Complex relative permittivity follows the convention `eps = eps' - j*eps''`
//! with the loss factor `eps''` stored as a positive real array; the `-j` is
//! applied only where complex values are formed or consumed.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Vacuum permittivity (F/m).
pub const EPSILON_0: f64 = 8.8541878128e-12;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299792458.0;

/// Reflection magnitudes above this are flagged as calibration-plane ripple.
pub const GAMMA_MAGNITUDE_TOLERANCE: f64 = 1.05;

/// Per-point provenance flags attached to spectra.
///
/// Raw inverted data may be nonphysical due to noise; such points are flagged
/// here rather than clipped so downstream fits see unbiased values.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointFlags(u8);

impl PointFlags {
    pub const CLEAR: PointFlags = PointFlags(0);
    /// Dielectric constant below 1.
    pub const NONPHYSICAL_DC: PointFlags = PointFlags(1);
    /// Negative loss factor.
    pub const NONPHYSICAL_LF: PointFlags = PointFlags(1 << 1);
    /// Bilinear inversion hit a pole; the stored value is a placeholder.
    pub const INVERSION_POLE: PointFlags = PointFlags(1 << 2);

    pub fn contains(self, other: PointFlags) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn insert(&mut self, other: PointFlags) {
        self.0 |= other.0;
    }

    pub fn union(self, other: PointFlags) -> PointFlags {
        PointFlags(self.0 | other.0)
    }

    pub fn is_clear(self) -> bool {
        self.0 == 0
    }
}

/// Strictly increasing list of positive frequencies in Hz.
///
/// Grids are compared by exact value equality: all grids in one campaign
/// derive from the same configured sweep, so fuzzy matching is not needed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct FrequencyGrid {
    points_hz: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(points_hz: Vec<f64>) -> Result<Self> {
        if points_hz.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {}",
                points_hz.len()
            )));
        }
        for (i, &f) in points_hz.iter().enumerate() {
            if !f.is_finite() || f <= 0.0 {
                return Err(Error::InvalidGrid(format!(
                    "point {i} is {f}, must be finite and > 0"
                )));
            }
            if i > 0 && points_hz[i - 1] >= f {
                return Err(Error::InvalidGrid(format!(
                    "points must be strictly increasing (index {i})"
                )));
            }
        }
        Ok(FrequencyGrid { points_hz })
    }

    /// Uniform grid with `n` points from `start_hz` to `stop_hz` inclusive.
    pub fn linspace(start_hz: f64, stop_hz: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {n}")));
        }
        let step = (stop_hz - start_hz) / (n - 1) as f64;
        let mut points = Vec::with_capacity(n);
        for i in 0..n {
            points.push(start_hz + step * i as f64);
        }
        // force the endpoint to be exact
        points[n - 1] = stop_hz;
        FrequencyGrid::new(points)
    }

    pub fn points_hz(&self) -> &[f64] {
        &self.points_hz
    }

    pub fn len(&self) -> usize {
        self.points_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_hz(&self) -> f64 {
        self.points_hz[0]
    }

    pub fn max_hz(&self) -> f64 {
        *self.points_hz.last().unwrap()
    }

    /// Restrict to the closed band `[lo_hz, hi_hz]`.
    pub fn band(&self, lo_hz: f64, hi_hz: f64) -> Result<Self> {
        let points: Vec<f64> = self
            .points_hz
            .iter()
            .copied()
            .filter(|&f| f >= lo_hz && f <= hi_hz)
            .collect();
        FrequencyGrid::new(points)
    }
}

impl From<FrequencyGrid> for Vec<f64> {
    fn from(g: FrequencyGrid) -> Vec<f64> {
        g.points_hz
    }
}

impl TryFrom<Vec<f64>> for FrequencyGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        FrequencyGrid::new(v)
    }
}

/// Complex relative permittivity sampled on a frequency grid.
///
/// `dielectric_constant` holds `eps'` and `loss_factor` holds `eps''` (stored
/// positive). Physical spectra satisfy `eps' >= 1` and `eps'' >= 0`; raw
/// inverted data may violate this and is flagged per point, not rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "SpectrumRepr", try_from = "SpectrumRepr")]
pub struct PermittivitySpectrum {
    grid: FrequencyGrid,
    dielectric_constant: Vec<f64>,
    loss_factor: Vec<f64>,
    flags: Vec<PointFlags>,
}

#[derive(Serialize, Deserialize)]
struct SpectrumRepr {
    grid: FrequencyGrid,
    dielectric_constant: Vec<f64>,
    loss_factor: Vec<f64>,
    flags: Vec<PointFlags>,
}

impl From<PermittivitySpectrum> for SpectrumRepr {
    fn from(s: PermittivitySpectrum) -> SpectrumRepr {
        SpectrumRepr {
            grid: s.grid,
            dielectric_constant: s.dielectric_constant,
            loss_factor: s.loss_factor,
            flags: s.flags,
        }
    }
}

impl TryFrom<SpectrumRepr> for PermittivitySpectrum {
    type Error = Error;
    fn try_from(r: SpectrumRepr) -> Result<Self> {
        let s = PermittivitySpectrum::new(r.grid, r.dielectric_constant, r.loss_factor)?;
        if r.flags.len() != s.grid.len() {
            return Err(Error::LengthMismatch {
                expected: s.grid.len(),
                got: r.flags.len(),
            });
        }
        Ok(PermittivitySpectrum { flags: r.flags, ..s })
    }
}

impl PermittivitySpectrum {
    pub fn new(
        grid: FrequencyGrid,
        dielectric_constant: Vec<f64>,
        loss_factor: Vec<f64>,
    ) -> Result<Self> {
        if dielectric_constant.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: dielectric_constant.len(),
            });
        }
        if loss_factor.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: loss_factor.len(),
            });
        }
        if let Some(v) = dielectric_constant
            .iter()
            .chain(loss_factor.iter())
            .find(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "spectrum values must be finite, got {v}"
            )));
        }
        let n = grid.len();
        Ok(PermittivitySpectrum {
            grid,
            dielectric_constant,
            loss_factor,
            flags: vec![PointFlags::CLEAR; n],
        })
    }

    pub(crate) fn with_flags(mut self, flags: Vec<PointFlags>) -> Result<Self> {
        if flags.len() != self.grid.len() {
            return Err(Error::LengthMismatch {
                expected: self.grid.len(),
                got: flags.len(),
            });
        }
        self.flags = flags;
        Ok(self)
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn dielectric_constant(&self) -> &[f64] {
        &self.dielectric_constant
    }

    pub fn loss_factor(&self) -> &[f64] {
        &self.loss_factor
    }

    pub fn flags(&self) -> &[PointFlags] {
        &self.flags
    }

    /// Complex value `eps' - j*eps''` at grid index `i`.
    pub fn complex_at(&self, i: usize) -> Complex64 {
        Complex64::new(self.dielectric_constant[i], -self.loss_factor[i])
    }

    /// Indices where the spectrum violates `eps' >= 1` or `eps'' >= 0`.
    pub fn nonphysical_points(&self) -> Vec<usize> {
        (0..self.grid.len())
            .filter(|&i| {
                self.flags[i].contains(PointFlags::NONPHYSICAL_DC)
                    || self.flags[i].contains(PointFlags::NONPHYSICAL_LF)
            })
            .collect()
    }

    /// Scan values and set the nonphysical flags; returns how many points are
    /// flagged.
    pub fn mark_nonphysical(&mut self) -> usize {
        let mut count = 0;
        for i in 0..self.grid.len() {
            let mut hit = false;
            if self.dielectric_constant[i] < 1.0 {
                self.flags[i].insert(PointFlags::NONPHYSICAL_DC);
                hit = true;
            }
            if self.loss_factor[i] < 0.0 {
                self.flags[i].insert(PointFlags::NONPHYSICAL_LF);
                hit = true;
            }
            if hit {
                count += 1;
            }
        }
        count
    }
}

/// Raw complex reflection coefficient vs frequency from one probe contact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "SweepRepr", try_from = "SweepRepr")]
pub struct ReflectionSweep {
    grid: FrequencyGrid,
    gamma: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct SweepRepr {
    grid: FrequencyGrid,
    gamma: Vec<Complex64>,
}

impl From<ReflectionSweep> for SweepRepr {
    fn from(s: ReflectionSweep) -> SweepRepr {
        SweepRepr {
            grid: s.grid,
            gamma: s.gamma,
        }
    }
}

impl TryFrom<SweepRepr> for ReflectionSweep {
    type Error = Error;
    fn try_from(r: SweepRepr) -> Result<Self> {
        ReflectionSweep::new(r.grid, r.gamma)
    }
}

impl ReflectionSweep {
    pub fn new(grid: FrequencyGrid, gamma: Vec<Complex64>) -> Result<Self> {
        if gamma.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: gamma.len(),
            });
        }
        if let Some(g) = gamma.iter().find(|g| !g.re.is_finite() || !g.im.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "reflection values must be finite, got {g}"
            )));
        }
        Ok(ReflectionSweep { grid, gamma })
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn gamma(&self) -> &[Complex64] {
        &self.gamma
    }

    /// Indices where `|gamma|` exceeds [`GAMMA_MAGNITUDE_TOLERANCE`].
    ///
    /// Such points indicate calibration-plane ripple or contact problems;
    /// they are reported, never rejected.
    pub fn excess_magnitude_points(&self) -> Vec<usize> {
        self.gamma
            .iter()
            .enumerate()
            .filter(|(_, g)| g.norm() > GAMMA_MAGNITUDE_TOLERANCE)
            .map(|(i, _)| i)
            .collect()
    }
}

/// VNA acquisition settings for one session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub f_start_hz: f64,
    pub f_stop_hz: f64,
    pub n_points: usize,
    pub if_bandwidth_hz: f64,
    pub power_dbm: f64,
    pub n_sweeps: usize,
}

impl AcquisitionConfig {
    /// 0.5-26.5 GHz, 1601 points, 3 kHz IF bandwidth, -15 dBm, 3 sweeps.
    pub fn ex_vivo_default() -> Self {
        AcquisitionConfig {
            f_start_hz: 0.5e9,
            f_stop_hz: 26.5e9,
            n_points: 1601,
            if_bandwidth_hz: 3e3,
            power_dbm: -15.0,
            n_sweeps: 3,
        }
    }

    /// Same band and settings as ex vivo but 401 points.
    pub fn in_vivo_default() -> Self {
        AcquisitionConfig {
            n_points: 401,
            ..AcquisitionConfig::ex_vivo_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sweeps < 1 {
            return Err(Error::InvalidArgument("n_sweeps must be >= 1".into()));
        }
        if !(self.f_start_hz < self.f_stop_hz) {
            return Err(Error::InvalidArgument(
                "f_start_hz must be below f_stop_hz".into(),
            ));
        }
        if self.n_points < 2 {
            return Err(Error::InvalidArgument("n_points must be >= 2".into()));
        }
        Ok(())
    }

    /// The uniform frequency grid this configuration sweeps.
    pub fn grid(&self) -> Result<FrequencyGrid> {
        self.validate()?;
        FrequencyGrid::linspace(self.f_start_hz, self.f_stop_hz, self.n_points)
    }
}

/// Complex arithmetic mean of sweeps sharing one grid.
pub fn average_sweeps(sweeps: &[ReflectionSweep]) -> Result<ReflectionSweep> {
    let first = sweeps.first().ok_or(Error::EmptyInput("average_sweeps"))?;
    for s in &sweeps[1..] {
        if s.grid != first.grid {
            return Err(Error::GridMismatch);
        }
    }
    let n = first.grid.len();
    let inv = 1.0 / sweeps.len() as f64;
    let mut gamma = vec![Complex64::new(0.0, 0.0); n];
    for s in sweeps {
        for (acc, g) in gamma.iter_mut().zip(s.gamma.iter()) {
            *acc += g;
        }
    }
    for g in &mut gamma {
        *g *= inv;
    }
    ReflectionSweep::new(first.grid.clone(), gamma)
}

/// Pointwise arithmetic mean of `eps'` and `eps''` separately.
///
/// Point flags of the inputs are unioned: a mean that consumed a flagged
/// point is itself suspect.
pub fn mean_spectra(spectra: &[PermittivitySpectrum]) -> Result<PermittivitySpectrum> {
    let first = spectra.first().ok_or(Error::EmptyInput("mean_spectra"))?;
    for s in &spectra[1..] {
        if s.grid != first.grid {
            return Err(Error::GridMismatch);
        }
    }
    let n = first.grid.len();
    let inv = 1.0 / spectra.len() as f64;
    let mut dc = vec![0.0; n];
    let mut lf = vec![0.0; n];
    let mut flags = vec![PointFlags::CLEAR; n];
    for s in spectra {
        for i in 0..n {
            dc[i] += s.dielectric_constant[i];
            lf[i] += s.loss_factor[i];
            flags[i] = flags[i].union(s.flags[i]);
        }
    }
    for i in 0..n {
        dc[i] *= inv;
        lf[i] *= inv;
    }
    PermittivitySpectrum::new(first.grid.clone(), dc, lf)?.with_flags(flags)
}

/// Linear interpolation of a spectrum onto `target`.
///
/// Target points must lie within the source band; no extrapolation. A target
/// point that exactly equals a source point copies the source value bitwise.
pub fn resample(
    spectrum: &PermittivitySpectrum,
    target: &FrequencyGrid,
) -> Result<PermittivitySpectrum> {
    let src = spectrum.grid.points_hz();
    let (lo, hi) = (spectrum.grid.min_hz(), spectrum.grid.max_hz());
    let n = target.len();
    let mut dc = Vec::with_capacity(n);
    let mut lf = Vec::with_capacity(n);
    let mut flags = Vec::with_capacity(n);
    for &f in target.points_hz() {
        if f < lo || f > hi {
            return Err(Error::FrequencyOutOfRange {
                f_hz: f,
                lo_hz: lo,
                hi_hz: hi,
            });
        }
        match src.binary_search_by(|p| p.partial_cmp(&f).unwrap()) {
            Ok(i) => {
                dc.push(spectrum.dielectric_constant[i]);
                lf.push(spectrum.loss_factor[i]);
                flags.push(spectrum.flags[i]);
            }
            Err(i) => {
                // f lies strictly between src[i-1] and src[i]
                let (a, b) = (i - 1, i);
                let w = (f - src[a]) / (src[b] - src[a]);
                dc.push(
                    spectrum.dielectric_constant[a]
                        + w * (spectrum.dielectric_constant[b] - spectrum.dielectric_constant[a]),
                );
                lf.push(
                    spectrum.loss_factor[a] + w * (spectrum.loss_factor[b] - spectrum.loss_factor[a]),
                );
                flags.push(spectrum.flags[a].union(spectrum.flags[b]));
            }
        }
    }
    PermittivitySpectrum::new(target.clone(), dc, lf)?.with_flags(flags)
}

/// Conductivity (S/m) equivalent to a loss factor at frequency `f_hz`.
pub fn loss_factor_to_conductivity(loss_factor: f64, f_hz: f64) -> Result<f64> {
    if !(f_hz > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "frequency must be > 0, got {f_hz}"
        )));
    }
    Ok(2.0 * std::f64::consts::PI * f_hz * EPSILON_0 * loss_factor)
}

/// Loss factor equivalent to a conductivity (S/m) at frequency `f_hz`.
pub fn conductivity_to_loss_factor(sigma_s_per_m: f64, f_hz: f64) -> Result<f64> {
    if !(f_hz > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "frequency must be > 0, got {f_hz}"
        )));
    }
    Ok(sigma_s_per_m / (2.0 * std::f64::consts::PI * f_hz * EPSILON_0))
}
