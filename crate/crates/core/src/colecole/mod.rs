//! Multi-pole Cole-Cole dispersion model: evaluation and least-squares
//! fitting.
//!
//! The model is
//!
//! ```text
//! eps(f) = eps_inf + sum_m delta_eps_m / (1 + (j*omega*tau_m)^(1 - alpha_m))
//!          + sigma_s / (j*omega*eps0)
//! ```
//!
//! with `omega = 2*pi*f` and the principal branch for the fractional power
//! (`omega > 0`, so `j*omega*tau` sits on the positive imaginary axis and no
//! branch-cut ambiguity arises). Returned spectra use `eps' = Re`,
//! `eps'' = -Im`.

mod fit;

pub use fit::jacobian_max_relative_deviation;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::spectra::{FrequencyGrid, PermittivitySpectrum, EPSILON_0};
use crate::{Error, Result};

/// One relaxation pole of the dispersion model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColeColePole {
    pub delta_eps: f64,
    pub tau_s: f64,
    pub alpha: f64,
}

/// Full parameter set: `eps_inf`, per-pole terms, static conductivity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColeColeParams {
    pub eps_inf: f64,
    pub poles: Vec<ColeColePole>,
    pub sigma_s: f64,
}

impl ColeColeParams {
    /// Dispersion-free parameters (`M = 0`, no conductivity).
    pub fn constant(eps_inf: f64) -> Self {
        ColeColeParams {
            eps_inf,
            poles: Vec::new(),
            sigma_s: 0.0,
        }
    }

    /// Canonical tissue-like starting point shipped with the crate.
    pub fn canonical_init() -> Self {
        #[derive(Deserialize)]
        struct InitFile {
            schema_version: u32,
            eps_inf: f64,
            sigma_s: f64,
            poles: Vec<ColeColePole>,
        }
        let file: InitFile = toml::from_str(include_str!("../../data/canonical_init.toml"))
            .expect("builtin canonical init file is valid");
        assert_eq!(file.schema_version, 1);
        ColeColeParams {
            eps_inf: file.eps_inf,
            poles: file.poles,
            sigma_s: file.sigma_s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_inf.is_finite() && self.eps_inf >= 1.0) {
            return Err(Error::InvalidParams(format!(
                "eps_inf must be >= 1, got {}",
                self.eps_inf
            )));
        }
        if !(self.sigma_s.is_finite() && self.sigma_s >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "sigma_s must be >= 0, got {}",
                self.sigma_s
            )));
        }
        for (m, p) in self.poles.iter().enumerate() {
            if !(p.delta_eps.is_finite() && p.delta_eps >= 0.0) {
                return Err(Error::InvalidParams(format!(
                    "pole {m}: delta_eps must be >= 0, got {}",
                    p.delta_eps
                )));
            }
            if !(p.tau_s.is_finite() && p.tau_s > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "pole {m}: tau_s must be > 0, got {}",
                    p.tau_s
                )));
            }
            if !(p.alpha.is_finite() && (0.0..1.0).contains(&p.alpha)) {
                return Err(Error::InvalidParams(format!(
                    "pole {m}: alpha must be in [0, 1), got {}",
                    p.alpha
                )));
            }
        }
        Ok(())
    }

    /// Complex model value `eps' - j*eps''` at a single frequency.
    pub fn complex_at(&self, f_hz: f64) -> Complex64 {
        let omega = 2.0 * std::f64::consts::PI * f_hz;
        let mut eps = Complex64::new(self.eps_inf, 0.0);
        for p in &self.poles {
            let q = 1.0 - p.alpha;
            // (j*omega*tau)^q on the principal branch
            let z = Complex64::from_polar((omega * p.tau_s).powf(q), q * std::f64::consts::FRAC_PI_2);
            eps += Complex64::new(p.delta_eps, 0.0) / (Complex64::new(1.0, 0.0) + z);
        }
        // sigma/(j*omega*eps0) contributes only to the loss factor
        eps += Complex64::new(0.0, -self.sigma_s / (omega * EPSILON_0));
        eps
    }
}

/// Evaluate the model on a grid.
pub fn evaluate(params: &ColeColeParams, grid: &FrequencyGrid) -> Result<PermittivitySpectrum> {
    params.validate()?;
    let mut dc = Vec::with_capacity(grid.len());
    let mut lf = Vec::with_capacity(grid.len());
    for &f in grid.points_hz() {
        let eps = params.complex_at(f);
        dc.push(eps.re);
        lf.push(-eps.im);
    }
    PermittivitySpectrum::new(grid.clone(), dc, lf)
}

/// Residual weighting for the fit objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `w = 1`.
    Absolute,
    /// `w = 1/|eps_meas|^2`; keeps the high-frequency tail from being
    /// swamped by large low-frequency values.
    Relative,
}

/// Box bounds applied to every parameter during fitting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub eps_inf: (f64, f64),
    pub delta_eps: (f64, f64),
    pub tau_s: (f64, f64),
    pub alpha: (f64, f64),
    pub sigma_s: (f64, f64),
}

impl Default for ParamBounds {
    fn default() -> Self {
        ParamBounds {
            eps_inf: (1.0, 100.0),
            delta_eps: (0.0, 200.0),
            tau_s: (1e-14, 1e-7),
            // alpha capped well below 1 by default to prevent pole-flattening
            // degeneracy on smooth data; widen via config when needed
            alpha: (0.0, 0.3),
            sigma_s: (0.0, 20.0),
        }
    }
}

impl ParamBounds {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eps_inf.0 >= 1.0
            && self.eps_inf.0 < self.eps_inf.1
            && self.delta_eps.0 >= 0.0
            && self.delta_eps.0 < self.delta_eps.1
            && self.tau_s.0 > 0.0
            && self.tau_s.0 < self.tau_s.1
            && self.alpha.0 >= 0.0
            && self.alpha.1 < 1.0
            && self.alpha.0 <= self.alpha.1
            && self.sigma_s.0 >= 0.0
            && self.sigma_s.0 < self.sigma_s.1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(
                "fit bounds inconsistent with Cole-Cole parameter invariants".into(),
            ))
        }
    }
}

/// Fit driver settings. Everything that influences the result is here, so a
/// `(spectrum, m_poles, config)` triple reproduces a fit bitwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Relative objective decrease below which an accepted step counts as
    /// converged.
    pub convergence_tol: f64,
    pub n_starts: usize,
    pub bounds: ParamBounds,
    pub weighting: Weighting,
    pub rng_seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 300,
            convergence_tol: 1e-14,
            n_starts: 8,
            bounds: ParamBounds::default(),
            weighting: Weighting::Relative,
            rng_seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::InvalidParams("max_iterations must be >= 1".into()));
        }
        if self.n_starts < 1 {
            return Err(Error::InvalidParams("n_starts must be >= 1".into()));
        }
        self.bounds.validate()
    }
}

/// Outcome of a multi-start fit.
#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub params: ColeColeParams,
    /// Weighted sum of squared complex residuals.
    pub objective: f64,
    /// RMS of `(model - measured) eps'` relative to `|eps_meas|` per point.
    pub rms_rel_error_dc: f64,
    /// Same for `eps''`.
    pub rms_rel_error_lf: f64,
    pub converged: bool,
    /// Accepted iterations of the winning start.
    pub iterations: usize,
    /// Unweighted complex residuals `model - measured` per frequency.
    pub residuals: Vec<Complex64>,
    /// Objective after each accepted step of the winning start,
    /// non-increasing by construction.
    pub objective_trace: Vec<f64>,
    /// Which start won (0 = first candidate).
    pub start_index: usize,
}

/// Least-squares fit of an `m_poles` Cole-Cole model to a spectrum.
///
/// Damped least-squares iterations with box bounds, run from `n_starts`
/// deterministic starting points (a canonical tissue-like seed plus
/// randomized ones drawn from `rng_seed`); the lowest objective wins, ties
/// broken by start index. Never errors on non-convergence: the best effort
/// comes back with `converged = false`.
pub fn fit(
    spectrum: &PermittivitySpectrum,
    m_poles: usize,
    config: &FitConfig,
) -> Result<FitResult> {
    fit::fit_with_extra_starts(spectrum, m_poles, config, &[])
}

/// One row of [`compare_pole_counts`].
#[derive(Clone, Debug, PartialEq)]
pub struct PoleCountRow {
    pub m_poles: usize,
    pub objective: f64,
    pub rms_rel_error_dc: f64,
    pub rms_rel_error_lf: f64,
    pub converged: bool,
}

/// Fit every pole count `1..=m_max` and tabulate the objectives.
///
/// Each fit for `M+1` poles is additionally seeded with the best `M`-pole
/// result plus a zero pole, so the best objective is non-increasing in `M`.
pub fn compare_pole_counts(
    spectrum: &PermittivitySpectrum,
    m_max: usize,
    config: &FitConfig,
) -> Result<Vec<PoleCountRow>> {
    if m_max < 1 {
        return Err(Error::InvalidParams("m_max must be >= 1".into()));
    }
    let mut rows = Vec::with_capacity(m_max);
    let mut previous_best: Option<ColeColeParams> = None;
    for m in 1..=m_max {
        let extras: Vec<ColeColeParams> = match &previous_best {
            Some(p) => {
                let mut warm = p.clone();
                warm.poles.push(ColeColePole {
                    delta_eps: 0.0,
                    tau_s: fit::zero_pole_tau(&config.bounds),
                    alpha: config.bounds.alpha.0,
                });
                vec![warm]
            }
            None => Vec::new(),
        };
        let result = fit::fit_with_extra_starts(spectrum, m, config, &extras)?;
        rows.push(PoleCountRow {
            m_poles: m,
            objective: result.objective,
            rms_rel_error_dc: result.rms_rel_error_dc,
            rms_rel_error_lf: result.rms_rel_error_lf,
            converged: result.converged,
        });
        previous_best = Some(result.params);
    }
    Ok(rows)
}
