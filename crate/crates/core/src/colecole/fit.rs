//! Damped least-squares engine behind [`fit`](super::fit).
//!
//! Parameters are optimized in an internal vector
//! `[eps_inf, (delta_eps, ln(tau), alpha) x M, sigma_s]`; the log transform on
//! tau keeps picosecond-to-nanosecond relaxation times well conditioned.
//! Steps that do not decrease the objective are rejected and retried with a
//! larger damping factor, so the accepted-objective trace is non-increasing
//! by construction. Box bounds are enforced by projection after each step.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ColeColeParams, ColeColePole, FitConfig, FitResult, ParamBounds, Weighting};
use crate::spectra::{PermittivitySpectrum, EPSILON_0};
use crate::{Error, Result};

/// Weight floor protecting relative weighting against near-zero data.
const WEIGHT_FLOOR: f64 = 1e-12;

/// Objective below this counts as an exact fit.
const OBJECTIVE_FLOOR: f64 = 1e-28;

const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_UP: f64 = 4.0;
const LAMBDA_DOWN: f64 = 3.0;
const LAMBDA_MAX: f64 = 1e14;

pub(super) fn zero_pole_tau(bounds: &ParamBounds) -> f64 {
    (bounds.tau_s.0 * bounds.tau_s.1).sqrt()
}

struct Problem {
    omega: Vec<f64>,
    meas: Vec<Complex64>,
    weight: Vec<f64>,
    m_poles: usize,
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl Problem {
    fn new(
        spectrum: &PermittivitySpectrum,
        m_poles: usize,
        weighting: Weighting,
        bounds: &ParamBounds,
    ) -> Self {
        let n = spectrum.grid().len();
        let omega: Vec<f64> = spectrum
            .grid()
            .points_hz()
            .iter()
            .map(|f| 2.0 * std::f64::consts::PI * f)
            .collect();
        let meas: Vec<Complex64> = (0..n).map(|i| spectrum.complex_at(i)).collect();
        let weight: Vec<f64> = meas
            .iter()
            .map(|m| match weighting {
                Weighting::Absolute => 1.0,
                Weighting::Relative => 1.0 / m.norm_sqr().max(WEIGHT_FLOOR),
            })
            .collect();
        let p = 2 + 3 * m_poles;
        let mut lo = DVector::zeros(p);
        let mut hi = DVector::zeros(p);
        lo[0] = bounds.eps_inf.0;
        hi[0] = bounds.eps_inf.1;
        for m in 0..m_poles {
            lo[1 + 3 * m] = bounds.delta_eps.0;
            hi[1 + 3 * m] = bounds.delta_eps.1;
            lo[2 + 3 * m] = bounds.tau_s.0.ln();
            hi[2 + 3 * m] = bounds.tau_s.1.ln();
            lo[3 + 3 * m] = bounds.alpha.0;
            hi[3 + 3 * m] = bounds.alpha.1;
        }
        lo[p - 1] = bounds.sigma_s.0;
        hi[p - 1] = bounds.sigma_s.1;
        Problem {
            omega,
            meas,
            weight,
            m_poles,
            lo,
            hi,
        }
    }

    fn dim(&self) -> usize {
        2 + 3 * self.m_poles
    }

    fn pack(&self, params: &ColeColeParams) -> DVector<f64> {
        let mut x = DVector::zeros(self.dim());
        x[0] = params.eps_inf;
        for (m, pole) in params.poles.iter().enumerate().take(self.m_poles) {
            x[1 + 3 * m] = pole.delta_eps;
            x[2 + 3 * m] = pole.tau_s.ln();
            x[3 + 3 * m] = pole.alpha;
        }
        // missing poles (params shorter than m_poles) stay at a neutral zero pole
        for m in params.poles.len()..self.m_poles {
            x[1 + 3 * m] = 0.0;
            x[2 + 3 * m] = (self.lo[2 + 3 * m] + self.hi[2 + 3 * m]) / 2.0;
            x[3 + 3 * m] = self.lo[3 + 3 * m];
        }
        let p = self.dim();
        x[p - 1] = params.sigma_s;
        x
    }

    fn unpack(&self, x: &DVector<f64>) -> ColeColeParams {
        let poles = (0..self.m_poles)
            .map(|m| ColeColePole {
                delta_eps: x[1 + 3 * m],
                tau_s: x[2 + 3 * m].exp(),
                alpha: x[3 + 3 * m],
            })
            .collect();
        ColeColeParams {
            eps_inf: x[0],
            poles,
            sigma_s: x[self.dim() - 1],
        }
    }

    fn clamp(&self, x: &mut DVector<f64>) {
        for j in 0..self.dim() {
            x[j] = x[j].clamp(self.lo[j], self.hi[j]);
        }
    }

    /// Model value at point `i` for internal parameters `x`.
    fn model_at(&self, x: &DVector<f64>, i: usize) -> Complex64 {
        let w = self.omega[i];
        let mut eps = Complex64::new(x[0], 0.0);
        for m in 0..self.m_poles {
            let delta = x[1 + 3 * m];
            let tau = x[2 + 3 * m].exp();
            let q = 1.0 - x[3 + 3 * m];
            let z = Complex64::from_polar((w * tau).powf(q), q * std::f64::consts::FRAC_PI_2);
            eps += Complex64::new(delta, 0.0) / (Complex64::new(1.0, 0.0) + z);
        }
        eps += Complex64::new(0.0, -x[self.dim() - 1] / (w * EPSILON_0));
        eps
    }

    /// Complex residual `model - meas` at point `i` (unweighted).
    fn residual_at(&self, x: &DVector<f64>, i: usize) -> Complex64 {
        self.model_at(x, i) - self.meas[i]
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        (0..self.meas.len())
            .map(|i| self.weight[i] * self.residual_at(x, i).norm_sqr())
            .sum()
    }

    /// Complex derivatives of the model w.r.t. every internal parameter at
    /// point `i`.
    fn derivatives_at(&self, x: &DVector<f64>, i: usize, out: &mut [Complex64]) {
        let w = self.omega[i];
        out[0] = Complex64::new(1.0, 0.0); // d/d eps_inf
        for m in 0..self.m_poles {
            let delta = x[1 + 3 * m];
            let tau = x[2 + 3 * m].exp();
            let q = 1.0 - x[3 + 3 * m];
            let wt = w * tau;
            let z = Complex64::from_polar(wt.powf(q), q * std::f64::consts::FRAC_PI_2);
            let denom = Complex64::new(1.0, 0.0) + z;
            let pole = Complex64::new(1.0, 0.0) / denom; // D = 1/(1+z)
            let dsq = pole * pole;
            // d model / d delta_eps = D
            out[1 + 3 * m] = pole;
            // d model / d ln(tau) = -delta * D^2 * q * z
            out[2 + 3 * m] = -Complex64::new(delta * q, 0.0) * dsq * z;
            // d model / d alpha = delta * D^2 * ln(j*w*tau) * z
            let log_jwt = Complex64::new(wt.ln(), std::f64::consts::FRAC_PI_2);
            out[3 + 3 * m] = Complex64::new(delta, 0.0) * dsq * log_jwt * z;
        }
        // d model / d sigma_s = 1/(j*w*eps0) = -j/(w*eps0)
        out[self.dim() - 1] = Complex64::new(0.0, -1.0 / (w * EPSILON_0));
    }

    /// Accumulate the normal equations `H = J^T J`, `g = J^T r` and the
    /// objective in one pass, treating each complex residual as two real rows.
    fn normal_equations(&self, x: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>, f64) {
        let p = self.dim();
        let mut h = DMatrix::zeros(p, p);
        let mut g = DVector::zeros(p);
        let mut obj = 0.0;
        let mut deriv = vec![Complex64::new(0.0, 0.0); p];
        for i in 0..self.meas.len() {
            let wi = self.weight[i];
            let r = self.residual_at(x, i);
            obj += wi * r.norm_sqr();
            self.derivatives_at(x, i, &mut deriv);
            for a in 0..p {
                let da = deriv[a];
                g[a] += wi * (da.re * r.re + da.im * r.im);
                for b in a..p {
                    let db = deriv[b];
                    h[(a, b)] += wi * (da.re * db.re + da.im * db.im);
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        (h, g, obj)
    }
}

struct LmOutcome {
    x: DVector<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn levenberg_marquardt(problem: &Problem, start: DVector<f64>, config: &FitConfig) -> LmOutcome {
    let p = problem.dim();
    let mut x = start;
    problem.clamp(&mut x);
    let mut objective = problem.objective(&x);
    let mut trace = vec![objective];
    let mut lambda = LAMBDA_INIT;
    let mut converged = objective <= OBJECTIVE_FLOOR;
    let mut iterations = 0;

    while iterations < config.max_iterations && !converged {
        let (h, g, _) = problem.normal_equations(&x);
        let max_diag = (0..p).map(|j| h[(j, j)]).fold(0.0, f64::max);
        if max_diag == 0.0 {
            // flat model: nothing left to move
            converged = true;
            break;
        }

        let mut accepted = false;
        while lambda <= LAMBDA_MAX {
            let mut damped = h.clone();
            for j in 0..p {
                let d = h[(j, j)].max(1e-12 * max_diag);
                damped[(j, j)] += lambda * d;
            }
            let delta = match damped.lu().solve(&(-&g)) {
                Some(d) => d,
                None => {
                    lambda *= LAMBDA_UP;
                    continue;
                }
            };
            let mut trial = &x + delta;
            problem.clamp(&mut trial);
            let trial_obj = problem.objective(&trial);
            if trial_obj.is_finite() && trial_obj < objective {
                let previous = objective;
                x = trial;
                objective = trial_obj;
                trace.push(objective);
                lambda = (lambda / LAMBDA_DOWN).max(1e-12);
                accepted = true;
                if objective <= OBJECTIVE_FLOOR
                    || previous - objective <= config.convergence_tol * previous
                {
                    converged = true;
                }
                break;
            }
            lambda *= LAMBDA_UP;
        }
        iterations += 1;
        if !accepted {
            // damping exhausted without any downhill step: a numerical
            // stationary point under the bounds
            converged = true;
            break;
        }
    }

    LmOutcome {
        x,
        objective,
        iterations,
        converged,
        trace,
    }
}

fn canonical_start(m_poles: usize, bounds: &ParamBounds) -> ColeColeParams {
    let canon = ColeColeParams::canonical_init();
    let mut poles: Vec<ColeColePole> = canon.poles.into_iter().take(m_poles).collect();
    while poles.len() < m_poles {
        poles.push(ColeColePole {
            delta_eps: 0.0,
            tau_s: zero_pole_tau(bounds),
            alpha: bounds.alpha.0,
        });
    }
    ColeColeParams {
        eps_inf: canon.eps_inf,
        poles,
        sigma_s: canon.sigma_s,
    }
}

fn random_start(m_poles: usize, bounds: &ParamBounds, rng: &mut ChaCha8Rng) -> ColeColeParams {
    // tau log-uniform in [0.1 ps, 10 ns], delta_eps uniform in [1, 80]
    let (ln_tau_lo, ln_tau_hi) = (1e-13f64.ln(), 1e-8f64.ln());
    let poles = (0..m_poles)
        .map(|_| ColeColePole {
            delta_eps: 1.0 + 79.0 * rng.random::<f64>(),
            tau_s: (ln_tau_lo + (ln_tau_hi - ln_tau_lo) * rng.random::<f64>()).exp(),
            alpha: bounds.alpha.0 + (bounds.alpha.1 - bounds.alpha.0) * rng.random::<f64>(),
        })
        .collect();
    ColeColeParams {
        eps_inf: 1.0 + 9.0 * rng.random::<f64>(),
        poles,
        sigma_s: 2.0 * rng.random::<f64>(),
    }
}

pub(super) fn fit_with_extra_starts(
    spectrum: &PermittivitySpectrum,
    m_poles: usize,
    config: &FitConfig,
    extra_starts: &[ColeColeParams],
) -> Result<FitResult> {
    config.validate()?;
    let needed = 4 + 3 * m_poles;
    let n = spectrum.grid().len();
    if n < needed {
        return Err(Error::TooFewPoints { needed, got: n });
    }

    let problem = Problem::new(spectrum, m_poles, config.weighting, &config.bounds);

    let mut starts: Vec<DVector<f64>> = Vec::with_capacity(extra_starts.len() + config.n_starts);
    for extra in extra_starts {
        starts.push(problem.pack(extra));
    }
    starts.push(problem.pack(&canonical_start(m_poles, &config.bounds)));
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    for _ in 1..config.n_starts {
        starts.push(problem.pack(&random_start(m_poles, &config.bounds, &mut rng)));
    }

    let mut best: Option<(usize, LmOutcome)> = None;
    for (index, start) in starts.into_iter().enumerate() {
        let outcome = levenberg_marquardt(&problem, start, config);
        let better = match &best {
            None => true,
            Some((_, b)) => outcome.objective < b.objective,
        };
        if better {
            best = Some((index, outcome));
        }
    }
    let (start_index, outcome) = best.expect("at least one start");

    let params = problem.unpack(&outcome.x);
    let residuals: Vec<Complex64> = (0..n).map(|i| problem.residual_at(&outcome.x, i)).collect();
    let mut sum_dc = 0.0;
    let mut sum_lf = 0.0;
    for (i, r) in residuals.iter().enumerate() {
        let scale = problem.meas[i].norm_sqr().max(WEIGHT_FLOOR);
        sum_dc += r.re * r.re / scale;
        sum_lf += r.im * r.im / scale;
    }

    Ok(FitResult {
        params,
        objective: outcome.objective,
        rms_rel_error_dc: (sum_dc / n as f64).sqrt(),
        rms_rel_error_lf: (sum_lf / n as f64).sqrt(),
        converged: outcome.converged,
        iterations: outcome.iterations,
        residuals,
        objective_trace: outcome.trace,
        start_index,
    })
}

/// Largest elementwise relative deviation between the optimizer's analytic
/// Jacobian and a central-finite-difference Jacobian at `params`.
///
/// Both Jacobians are taken in the optimizer's internal parameterization,
/// rows being the weighted real and imaginary residual parts per frequency.
pub fn jacobian_max_relative_deviation(
    spectrum: &PermittivitySpectrum,
    params: &ColeColeParams,
    weighting: Weighting,
) -> Result<f64> {
    params.validate()?;
    let bounds = ParamBounds {
        // wide-open bounds: this probe is about derivatives, not the fit
        eps_inf: (1.0, 1e6),
        delta_eps: (0.0, 1e6),
        tau_s: (1e-18, 1.0),
        alpha: (0.0, 0.999),
        sigma_s: (0.0, 1e6),
    };
    let problem = Problem::new(spectrum, params.poles.len(), weighting, &bounds);
    let x = problem.pack(params);
    let p = problem.dim();
    let n = problem.meas.len();

    let mut deriv = vec![Complex64::new(0.0, 0.0); p];
    let mut analytic = DMatrix::<f64>::zeros(2 * n, p);
    for i in 0..n {
        let sw = problem.weight[i].sqrt();
        problem.derivatives_at(&x, i, &mut deriv);
        for (j, d) in deriv.iter().enumerate() {
            analytic[(2 * i, j)] = sw * d.re;
            analytic[(2 * i + 1, j)] = sw * d.im;
        }
    }

    let fd_scale = f64::EPSILON.cbrt();
    let mut worst: f64 = 0.0;
    for j in 0..p {
        let h = fd_scale * x[j].abs().max(1.0);
        let mut plus = x.clone();
        plus[j] += h;
        let mut minus = x.clone();
        minus[j] -= h;
        let two_h = plus[j] - minus[j];
        for i in 0..n {
            let sw = problem.weight[i].sqrt();
            let rp = problem.residual_at(&plus, i);
            let rm = problem.residual_at(&minus, i);
            let fd_re = sw * (rp.re - rm.re) / two_h;
            let fd_im = sw * (rp.im - rm.im) / two_h;
            for (a, b) in [
                (analytic[(2 * i, j)], fd_re),
                (analytic[(2 * i + 1, j)], fd_im),
            ] {
                let denom = a.abs().max(b.abs()).max(1e-6);
                worst = worst.max((a - b).abs() / denom);
            }
        }
    }
    Ok(worst)
}
