//! Synthetic-campaign generator: ground-truth tissues, a known probe model,
//! standards, and noisy sweeps, so every pipeline stage can be verified
//! round-trip at desk scale.
//!
//! All randomness flows from `GroundTruth::rng_seed`. Patients draw from
//! per-patient derived RNG streams, so a campaign is reproducible bitwise and
//! patients could be generated independently without changing the result.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::campaign::{MeasurementPoint, PointData, Session};
use crate::colecole::{ColeColeParams, ColeColePole};
use crate::contrast::{DifferenceCurve, Scenario, TissueStatus, TumorStage};
use crate::probe_cal::{ReferenceLiquids, StandardKind, StandardMeasurement};
use crate::spectra::{AcquisitionConfig, FrequencyGrid, ReflectionSweep};
use crate::{Error, Result};

pub const GROUND_TRUTH_SCHEMA_VERSION: u32 = 1;

/// Measurement points generated per tissue per patient.
pub const DEFAULT_POINTS_PER_TISSUE: usize = 2;

/// RNG stream reserved for standards; patients use streams `1..`.
const STREAM_STANDARDS: u64 = 0;

/// Capacitive-aperture probe model with a closed-form bilinear inverse.
///
/// `gamma = (1 - y)/(1 + y)` with `y = j*omega*z0*(c0*eps + cf)`. Passive
/// materials keep `Re(y) >= 0`, so `|gamma| <= 1` always, and the equivalent
/// inverse map `eps = (A*gamma + B)/(1 + C*gamma)` has `C = 1`, putting the
/// pole exactly on the ideal short.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub z0_ohm: f64,
    pub c0_pf: f64,
    pub cf_pf: f64,
}

impl ProbeModel {
    fn y_coeffs(&self, f_hz: f64) -> (Complex64, Complex64) {
        let omega = 2.0 * std::f64::consts::PI * f_hz;
        let g = Complex64::new(0.0, omega * self.z0_ohm * self.c0_pf * 1e-12);
        let h = Complex64::new(0.0, omega * self.z0_ohm * self.cf_pf * 1e-12);
        (g, h)
    }

    /// True bilinear coefficients `(A, B, C)` of the inverse map at `f_hz`.
    pub fn bilinear_at(&self, f_hz: f64) -> (Complex64, Complex64, Complex64) {
        let (g, h) = self.y_coeffs(f_hz);
        let one = Complex64::new(1.0, 0.0);
        ((-(one + h)) / g, (one - h) / g, one)
    }

    /// Reflection of a material with permittivity `eps` at `f_hz`.
    pub fn forward(&self, f_hz: f64, eps: Complex64) -> Complex64 {
        let (g, h) = self.y_coeffs(f_hz);
        let y = g * eps + h;
        let one = Complex64::new(1.0, 0.0);
        (one - y) / (one + y)
    }

    pub fn validate(&self) -> Result<()> {
        if self.z0_ohm > 0.0 && self.c0_pf > 0.0 && self.cf_pf >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParams(
                "probe model needs z0 > 0, c0 > 0, cf >= 0".into(),
            ))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TissueEntry {
    scenario: Scenario,
    stage: TumorStage,
    status: TissueStatus,
    eps_inf: f64,
    sigma_s: f64,
    poles: Vec<ColeColePole>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct StandardsSpec {
    water_temperature_c: f64,
    methanol_temperature_c: f64,
}

/// Ground truth of a synthetic campaign: per-tissue dispersion models, the
/// probe, the noise level, and the master seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    schema_version: u32,
    pub rng_seed: u64,
    /// Mean squared magnitude (power) of the additive complex Gaussian
    /// perturbation applied to each sweep's reflection coefficient; the
    /// per-quadrature standard deviation is `sqrt(noise_sigma_gamma / 2)`.
    pub noise_sigma_gamma: f64,
    pub probe: ProbeModel,
    standards: StandardsSpec,
    tissues: Vec<TissueEntry>,
}

impl GroundTruth {
    /// Ground truth shipped with the crate: zero noise, all twelve
    /// scenario/stage/status combinations populated.
    pub fn builtin() -> Self {
        GroundTruth::from_toml_str(include_str!("../data/ground_truth_default.toml"))
            .expect("builtin ground truth file is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let truth: GroundTruth = toml::from_str(text)
            .map_err(|e| Error::InvalidParams(format!("ground truth parse failure: {e}")))?;
        truth.validate()?;
        Ok(truth)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        GroundTruth::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != GROUND_TRUTH_SCHEMA_VERSION {
            return Err(Error::VersionMismatch {
                path: "<ground truth>".into(),
                found: self.schema_version,
                expected: GROUND_TRUTH_SCHEMA_VERSION,
            });
        }
        if !(self.noise_sigma_gamma >= 0.0 && self.noise_sigma_gamma.is_finite()) {
            return Err(Error::InvalidParams(
                "noise_sigma_gamma must be finite and >= 0".into(),
            ));
        }
        self.probe.validate()?;
        for t in &self.tissues {
            self.entry_params(t).validate()?;
        }
        Ok(())
    }

    fn entry_params(&self, entry: &TissueEntry) -> ColeColeParams {
        ColeColeParams {
            eps_inf: entry.eps_inf,
            poles: entry.poles.clone(),
            sigma_s: entry.sigma_s,
        }
    }

    /// Dispersion parameters of one tissue.
    pub fn tissue(
        &self,
        scenario: Scenario,
        stage: TumorStage,
        status: TissueStatus,
    ) -> Result<ColeColeParams> {
        self.tissues
            .iter()
            .find(|t| t.scenario == scenario && t.stage == stage && t.status == status)
            .map(|t| self.entry_params(t))
            .ok_or_else(|| {
                Error::InvalidParams(format!(
                    "ground truth has no tissue for {}/{}/{}",
                    scenario.label(),
                    stage.label(),
                    status.label()
                ))
            })
    }

    /// Replace one tissue's parameters (used to construct contrasts in
    /// tests and examples).
    pub fn set_tissue(
        &mut self,
        scenario: Scenario,
        stage: TumorStage,
        status: TissueStatus,
        params: ColeColeParams,
    ) -> Result<()> {
        params.validate()?;
        let entry = self
            .tissues
            .iter_mut()
            .find(|t| t.scenario == scenario && t.stage == stage && t.status == status)
            .ok_or_else(|| {
                Error::InvalidParams(format!(
                    "ground truth has no tissue for {}/{}/{}",
                    scenario.label(),
                    stage.label(),
                    status.label()
                ))
            })?;
        entry.eps_inf = params.eps_inf;
        entry.sigma_s = params.sigma_s;
        entry.poles = params.poles;
        Ok(())
    }

    pub fn water_temperature_c(&self) -> f64 {
        self.standards.water_temperature_c
    }

    pub fn methanol_temperature_c(&self) -> f64 {
        self.standards.methanol_temperature_c
    }

    fn rng_for_stream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        rng.set_stream(stream);
        rng
    }
}

fn gamma_noise(power: f64, rng: &mut ChaCha8Rng) -> Complex64 {
    if power == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let std = (power / 2.0).sqrt();
    let normal = rand_distr::Normal::new(0.0, std).expect("valid std");
    Complex64::new(rng.sample(normal), rng.sample(normal))
}

/// Forward-model the four calibration standards on `grid`.
///
/// Finite-permittivity standards solve the probe's bilinear map for their
/// reference permittivity; the short emits `gamma = -1`. Noise per
/// `truth.noise_sigma_gamma` lands on every point.
pub fn synth_standards(
    truth: &GroundTruth,
    liquids: &ReferenceLiquids,
    grid: &FrequencyGrid,
) -> Result<Vec<StandardMeasurement>> {
    truth.validate()?;
    let mut rng = truth.rng_for_stream(STREAM_STANDARDS);
    let kinds = [
        StandardKind::Air,
        StandardKind::Short,
        StandardKind::Water {
            temperature_c: truth.water_temperature_c(),
        },
        StandardKind::Methanol {
            temperature_c: truth.methanol_temperature_c(),
        },
    ];
    let mut out = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let mut gamma = Vec::with_capacity(grid.len());
        for &f in grid.points_hz() {
            let clean = if kind.is_short() {
                Complex64::new(-1.0, 0.0)
            } else {
                let eps = liquids.reference_permittivity(&kind, f)?;
                truth.probe.forward(f, eps)
            };
            gamma.push(clean + gamma_noise(truth.noise_sigma_gamma, &mut rng));
        }
        out.push(StandardMeasurement {
            kind,
            sweep: ReflectionSweep::new(grid.clone(), gamma)?,
        });
    }
    Ok(out)
}

fn synth_sweeps(
    truth: &GroundTruth,
    params: &ColeColeParams,
    grid: &FrequencyGrid,
    n_sweeps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ReflectionSweep>> {
    let clean: Vec<Complex64> = grid
        .points_hz()
        .iter()
        .map(|&f| truth.probe.forward(f, params.complex_at(f)))
        .collect();
    (0..n_sweeps)
        .map(|_| {
            let gamma: Vec<Complex64> = clean
                .iter()
                .map(|g| g + gamma_noise(truth.noise_sigma_gamma, rng))
                .collect();
            ReflectionSweep::new(grid.clone(), gamma)
        })
        .collect()
}

/// Generate one patient's measurement points (tumor and healthy tissue,
/// `n_points_per_tissue` locations each, `n_sweeps` sweeps per point).
///
/// `stream` selects the patient's private noise stream; campaigns assign
/// streams in plan order so any patient regenerates identically on its own.
#[allow(clippy::too_many_arguments)]
pub fn synth_patient(
    truth: &GroundTruth,
    patient_id: &str,
    scenario: Scenario,
    stage: TumorStage,
    n_points_per_tissue: usize,
    n_sweeps: usize,
    grid: &FrequencyGrid,
    stream: u64,
) -> Result<Vec<MeasurementPoint>> {
    if n_points_per_tissue == 0 || n_sweeps == 0 {
        return Err(Error::InvalidArgument(
            "n_points_per_tissue and n_sweeps must be >= 1".into(),
        ));
    }
    let mut rng = truth.rng_for_stream(stream);
    let mut points = Vec::with_capacity(2 * n_points_per_tissue);
    for status in [TissueStatus::Tumor, TissueStatus::Healthy] {
        let params = truth.tissue(scenario, stage, status)?;
        for k in 0..n_points_per_tissue {
            let sweeps = synth_sweeps(truth, &params, grid, n_sweeps, &mut rng)?;
            points.push(MeasurementPoint {
                patient_id: patient_id.to_string(),
                status,
                scenario,
                stage: Some(stage),
                location_label: format!("loc{}", k + 1),
                data: PointData::RawReflection(sweeps),
            });
        }
    }
    Ok(points)
}

/// How many patients of each stage to generate per scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanEntry {
    pub scenario: Scenario,
    pub stage: TumorStage,
    pub n_patients: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatientPlan {
    pub entries: Vec<PlanEntry>,
    pub points_per_tissue: usize,
}

impl PatientPlan {
    /// Default campaign scale: 8 ex vivo patients (5 T3, 2 T4a, 1 T4b) and
    /// 7 in vivo patients (4 T3, 2 T4a, 1 T4b).
    pub fn paper_default() -> Self {
        let mut entries = Vec::new();
        for (scenario, t3) in [(Scenario::ExVivo, 5), (Scenario::InVivo, 4)] {
            entries.push(PlanEntry {
                scenario,
                stage: TumorStage::T3,
                n_patients: t3,
            });
            entries.push(PlanEntry {
                scenario,
                stage: TumorStage::T4a,
                n_patients: 2,
            });
            entries.push(PlanEntry {
                scenario,
                stage: TumorStage::T4b,
                n_patients: 1,
            });
        }
        PatientPlan {
            entries,
            points_per_tissue: DEFAULT_POINTS_PER_TISSUE,
        }
    }

    pub fn total_patients(&self) -> usize {
        self.entries.iter().map(|e| e.n_patients).sum()
    }
}

/// Generate a complete session from a plan.
///
/// Patient ids are `ev01..` / `iv01..` in plan order; every patient draws
/// from its own derived noise stream.
pub fn synth_campaign(
    truth: &GroundTruth,
    plan: &PatientPlan,
    acquisition: &AcquisitionConfig,
) -> Result<Session> {
    if plan.entries.is_empty() {
        return Err(Error::EmptyInput("synth_campaign plan"));
    }
    truth.validate()?;
    let grid = acquisition.grid()?;
    let mut points = Vec::new();
    let mut stream = STREAM_STANDARDS + 1;
    let mut counters = [0usize; 2];
    for entry in &plan.entries {
        for _ in 0..entry.n_patients {
            let (prefix, slot) = match entry.scenario {
                Scenario::ExVivo => ("ev", 0),
                Scenario::InVivo => ("iv", 1),
            };
            counters[slot] += 1;
            let patient_id = format!("{prefix}{:02}", counters[slot]);
            points.extend(synth_patient(
                truth,
                &patient_id,
                entry.scenario,
                entry.stage,
                plan.points_per_tissue,
                acquisition.n_sweeps,
                &grid,
                stream,
            )?);
            stream += 1;
        }
    }
    Session::new(
        format!("synth-{}", truth.rng_seed),
        acquisition.clone(),
        Some(format!("synth-{}-cal", truth.rng_seed)),
        points,
    )
}

/// Closed-form tumor-minus-healthy difference of the ground truth itself.
pub fn truth_difference(
    truth: &GroundTruth,
    scenario: Scenario,
    stage: TumorStage,
    grid: &FrequencyGrid,
) -> Result<DifferenceCurve> {
    let tumor = truth.tissue(scenario, stage, TissueStatus::Tumor)?;
    let healthy = truth.tissue(scenario, stage, TissueStatus::Healthy)?;
    let mut delta_dc = Vec::with_capacity(grid.len());
    let mut delta_lf = Vec::with_capacity(grid.len());
    for &f in grid.points_hz() {
        let t = tumor.complex_at(f);
        let h = healthy.complex_at(f);
        delta_dc.push(t.re - h.re);
        delta_lf.push(-t.im - (-h.im));
    }
    DifferenceCurve::new(grid.clone(), delta_dc, delta_lf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::campaign::{generate_report, ReportConfig};
    use crate::colecole::FitConfig;
    use crate::contrast::patient_difference;
    use crate::probe_cal::{invert_reflection, solve_calibration};
    use crate::spectra::{average_sweeps, mean_spectra};
    use approx::assert_relative_eq;

    fn grid(n: usize) -> FrequencyGrid {
        FrequencyGrid::linspace(0.5e9, 26.5e9, n).unwrap()
    }

    #[test]
    fn builtin_truth_is_complete() {
        let truth = GroundTruth::builtin();
        for scenario in Scenario::ALL {
            for stage in TumorStage::ALL {
                for status in [TissueStatus::Healthy, TissueStatus::Tumor] {
                    truth.tissue(scenario, stage, status).unwrap();
                }
            }
        }
    }

    #[test]
    fn standards_solve_back_to_true_coefficients() {
        let truth = GroundTruth::builtin();
        let liquids = ReferenceLiquids::builtin();
        let g = grid(101);
        let standards = synth_standards(&truth, &liquids, &g).unwrap();
        let cal = solve_calibration(&standards, &liquids).unwrap();
        for (i, &f) in g.points_hz().iter().enumerate() {
            let (a, b, c) = truth.probe.bilinear_at(f);
            assert_relative_eq!(cal.coeff_a()[i].re, a.re, max_relative = 1e-9);
            assert_relative_eq!(cal.coeff_a()[i].im, a.im, max_relative = 1e-9);
            assert_relative_eq!(cal.coeff_b()[i].re, b.re, max_relative = 1e-9);
            assert_relative_eq!(cal.coeff_b()[i].im, b.im, max_relative = 1e-9);
            assert_relative_eq!(cal.coeff_c()[i].re, c.re, max_relative = 1e-9);
            assert!(cal.coeff_c()[i].im.abs() <= 1e-9);
        }
    }

    #[test]
    fn air_standard_round_trips_to_unity() {
        let truth = GroundTruth::builtin();
        let liquids = ReferenceLiquids::builtin();
        let g = grid(31);
        let standards = synth_standards(&truth, &liquids, &g).unwrap();
        let cal = solve_calibration(&standards, &liquids).unwrap();
        let air = standards
            .iter()
            .find(|s| s.kind == StandardKind::Air)
            .unwrap();
        let inv = invert_reflection(&cal, &air.sweep).unwrap();
        for i in 0..g.len() {
            assert!((inv.dielectric_constant()[i] - 1.0).abs() <= 1e-9);
            assert!(inv.loss_factor()[i].abs() <= 1e-9);
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let mut truth = GroundTruth::builtin();
        truth.noise_sigma_gamma = 1e-6;
        let liquids = ReferenceLiquids::builtin();
        let g = grid(11);
        let a = synth_standards(&truth, &liquids, &g).unwrap();
        let b = synth_standards(&truth, &liquids, &g).unwrap();
        assert_eq!(a, b);
        let pa = synth_patient(&truth, "p", Scenario::ExVivo, TumorStage::T3, 2, 3, &g, 5).unwrap();
        let pb = synth_patient(&truth, "p", Scenario::ExVivo, TumorStage::T3, 2, 3, &g, 5).unwrap();
        assert_eq!(pa, pb);
    }

    #[test]
    fn different_seeds_differ_but_share_shape() {
        let mut truth = GroundTruth::builtin();
        truth.noise_sigma_gamma = 1e-6;
        let g = grid(11);
        let a = synth_patient(&truth, "p", Scenario::ExVivo, TumorStage::T3, 2, 3, &g, 1).unwrap();
        truth.rng_seed = 43;
        let b = synth_patient(&truth, "p", Scenario::ExVivo, TumorStage::T3, 2, 3, &g, 1).unwrap();
        assert_eq!(a.len(), b.len());
        assert_ne!(a, b);
        for (pa, pb) in a.iter().zip(b.iter()) {
            match (&pa.data, &pb.data) {
                (PointData::RawReflection(sa), PointData::RawReflection(sb)) => {
                    assert_eq!(sa[0].grid(), sb[0].grid());
                }
                _ => panic!("expected raw points"),
            }
        }
    }

    #[test]
    fn zero_noise_patient_recovers_tissue_exactly() {
        let truth = GroundTruth::builtin();
        let liquids = ReferenceLiquids::builtin();
        let g = grid(101);
        let standards = synth_standards(&truth, &liquids, &g).unwrap();
        let cal = solve_calibration(&standards, &liquids).unwrap();
        let points =
            synth_patient(&truth, "p", Scenario::InVivo, TumorStage::T4a, 2, 3, &g, 1).unwrap();
        for point in &points {
            let expected = truth
                .tissue(Scenario::InVivo, TumorStage::T4a, point.status)
                .unwrap();
            let sweeps = match &point.data {
                PointData::RawReflection(s) => s,
                _ => unreachable!(),
            };
            let inv = invert_reflection(&cal, &average_sweeps(sweeps).unwrap()).unwrap();
            for (i, &f) in g.points_hz().iter().enumerate() {
                let eps = expected.complex_at(f);
                let rel = (inv.complex_at(i) - eps).norm() / eps.norm();
                assert!(rel <= 1e-9, "rel {rel} at {f} Hz");
            }
        }
    }

    #[test]
    fn equal_truths_give_zero_difference() {
        let mut truth = GroundTruth::builtin();
        let healthy = truth
            .tissue(Scenario::ExVivo, TumorStage::T3, TissueStatus::Healthy)
            .unwrap();
        truth
            .set_tissue(Scenario::ExVivo, TumorStage::T3, TissueStatus::Tumor, healthy)
            .unwrap();
        let liquids = ReferenceLiquids::builtin();
        let g = grid(31);
        let standards = synth_standards(&truth, &liquids, &g).unwrap();
        let cal = solve_calibration(&standards, &liquids).unwrap();
        let points =
            synth_patient(&truth, "p", Scenario::ExVivo, TumorStage::T3, 2, 3, &g, 1).unwrap();
        let mut tumor = Vec::new();
        let mut healthy_spectra = Vec::new();
        for point in &points {
            let sweeps = match &point.data {
                PointData::RawReflection(s) => s,
                _ => unreachable!(),
            };
            let inv = invert_reflection(&cal, &average_sweeps(sweeps).unwrap()).unwrap();
            match point.status {
                TissueStatus::Tumor => tumor.push(inv),
                TissueStatus::Healthy => healthy_spectra.push(inv),
            }
        }
        let diff = patient_difference(&tumor, &healthy_spectra).unwrap();
        for i in 0..g.len() {
            assert!(diff.delta_dc[i].abs() <= 1e-12);
            assert!(diff.delta_lf[i].abs() <= 1e-12);
        }
    }

    #[test]
    fn default_plan_matches_campaign_scale() {
        let plan = PatientPlan::paper_default();
        assert_eq!(plan.total_patients(), 15);
        let truth = GroundTruth::builtin();
        let acq = AcquisitionConfig {
            n_points: 21,
            ..AcquisitionConfig::in_vivo_default()
        };
        let session = synth_campaign(&truth, &plan, &acq).unwrap();
        let mut ex = std::collections::BTreeSet::new();
        let mut iv = std::collections::BTreeSet::new();
        for p in &session.points {
            match p.scenario {
                Scenario::ExVivo => ex.insert(p.patient_id.clone()),
                Scenario::InVivo => iv.insert(p.patient_id.clone()),
            };
        }
        assert_eq!(ex.len(), 8);
        assert_eq!(iv.len(), 7);
        // 2 tissues x 2 locations per patient
        assert_eq!(session.points.len(), 15 * 4);
    }

    #[test]
    fn constructed_offset_appears_only_in_t4b() {
        let mut truth = GroundTruth::builtin();
        // same base tissue everywhere, then +5 on eps_inf for T4b tumor only
        let base = truth
            .tissue(Scenario::ExVivo, TumorStage::T3, TissueStatus::Healthy)
            .unwrap();
        for scenario in Scenario::ALL {
            for stage in TumorStage::ALL {
                for status in [TissueStatus::Healthy, TissueStatus::Tumor] {
                    truth.set_tissue(scenario, stage, status, base.clone()).unwrap();
                }
            }
        }
        let mut offset = base.clone();
        offset.eps_inf += 5.0;
        for scenario in Scenario::ALL {
            truth
                .set_tissue(scenario, TumorStage::T4b, TissueStatus::Tumor, offset.clone())
                .unwrap();
        }

        let liquids = ReferenceLiquids::builtin();
        let acq = AcquisitionConfig {
            n_points: 41,
            ..AcquisitionConfig::ex_vivo_default()
        };
        let g = acq.grid().unwrap();
        let standards = synth_standards(&truth, &liquids, &g).unwrap();
        let cal = solve_calibration(&standards, &liquids).unwrap();
        let session = synth_campaign(&truth, &PatientPlan::paper_default(), &acq).unwrap();
        let config = ReportConfig {
            fit: FitConfig {
                n_starts: 2,
                ..FitConfig::default()
            },
            ..ReportConfig::default()
        };
        let report = generate_report(&session, Some(&cal), &config).unwrap();
        for row in &report.rows {
            let expected = if row.stage == Some(TumorStage::T4b) { 5.0 } else { 0.0 };
            if row.stage.is_none() {
                continue;
            }
            for spot in &row.spots {
                assert!(
                    (spot.delta_dc - expected).abs() <= 0.01,
                    "{:?}/{:?}: delta_dc {} vs {}",
                    row.scenario,
                    row.stage,
                    spot.delta_dc,
                    expected
                );
                assert!(spot.delta_lf.abs() <= 0.01);
            }
        }
    }

    #[test]
    fn single_patient_session_matches_closed_form() {
        let truth = GroundTruth::builtin();
        let liquids = ReferenceLiquids::builtin();
        let acq = AcquisitionConfig {
            n_points: 41,
            ..AcquisitionConfig::ex_vivo_default()
        };
        let g = acq.grid().unwrap();
        let standards = synth_standards(&truth, &liquids, &g).unwrap();
        let cal = solve_calibration(&standards, &liquids).unwrap();
        let plan = PatientPlan {
            entries: vec![PlanEntry {
                scenario: Scenario::ExVivo,
                stage: TumorStage::T4b,
                n_patients: 1,
            }],
            points_per_tissue: 2,
        };
        let session = synth_campaign(&truth, &plan, &acq).unwrap();
        let config = ReportConfig {
            fit: FitConfig {
                n_starts: 2,
                ..FitConfig::default()
            },
            ..ReportConfig::default()
        };
        let report = generate_report(&session, Some(&cal), &config).unwrap();
        let closed_form = truth_difference(&truth, Scenario::ExVivo, TumorStage::T4b, &g).unwrap();
        let group = report
            .groups
            .iter()
            .find(|g| g.stage == Some(TumorStage::T4b))
            .unwrap();
        for i in 0..g.len() {
            assert!((group.mean_curve.delta_dc[i] - closed_form.delta_dc[i]).abs() <= 1e-9);
            assert!((group.mean_curve.delta_lf[i] - closed_form.delta_lf[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn noise_power_quadrupling_doubles_recovered_error() {
        // Monte Carlo sanity band over 64 trials with paired seeds
        let liquids = ReferenceLiquids::builtin();
        let g = grid(31);
        let params = GroundTruth::builtin()
            .tissue(Scenario::ExVivo, TumorStage::T3, TissueStatus::Healthy)
            .unwrap();
        let truth_eps: Vec<Complex64> = g.points_hz().iter().map(|&f| params.complex_at(f)).collect();

        let rms_for = |power: f64, seed: u64| -> f64 {
            let mut truth = GroundTruth::builtin();
            truth.noise_sigma_gamma = power;
            truth.rng_seed = seed;
            let standards = synth_standards(&GroundTruth::builtin(), &liquids, &g).unwrap();
            let cal = solve_calibration(&standards, &liquids).unwrap();
            let points =
                synth_patient(&truth, "p", Scenario::ExVivo, TumorStage::T3, 1, 3, &g, 1).unwrap();
            let healthy = points
                .iter()
                .find(|p| p.status == TissueStatus::Healthy)
                .unwrap();
            let sweeps = match &healthy.data {
                PointData::RawReflection(s) => s,
                _ => unreachable!(),
            };
            let inv = invert_reflection(&cal, &average_sweeps(sweeps).unwrap()).unwrap();
            let mut sum = 0.0;
            for i in 0..g.len() {
                let d = inv.dielectric_constant()[i] - truth_eps[i].re;
                sum += d * d;
            }
            (sum / g.len() as f64).sqrt()
        };

        let base_power = 1e-7;
        let mut ratios = Vec::with_capacity(64);
        for trial in 0..64u64 {
            let low = rms_for(base_power, 1000 + trial);
            let high = rms_for(4.0 * base_power, 1000 + trial);
            ratios.push(high / low);
        }
        let mean_ratio: f64 = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!(
            (1.5..=3.0).contains(&mean_ratio),
            "mean error ratio {mean_ratio}"
        );
    }

    #[test]
    fn campaign_report_smoke_with_mean_spectra() {
        // tiny end-to-end pass over the builtin truth to keep the session
        // plumbing honest
        let truth = GroundTruth::builtin();
        let liquids = ReferenceLiquids::builtin();
        let acq = AcquisitionConfig {
            n_points: 21,
            ..AcquisitionConfig::ex_vivo_default()
        };
        let g = acq.grid().unwrap();
        let standards = synth_standards(&truth, &liquids, &g).unwrap();
        let cal = solve_calibration(&standards, &liquids).unwrap();
        let plan = PatientPlan {
            entries: vec![PlanEntry {
                scenario: Scenario::InVivo,
                stage: TumorStage::T3,
                n_patients: 2,
            }],
            points_per_tissue: 2,
        };
        let session = synth_campaign(&truth, &plan, &acq).unwrap();
        let config = ReportConfig {
            fit: FitConfig {
                n_starts: 2,
                ..FitConfig::default()
            },
            ..ReportConfig::default()
        };
        let report = generate_report(&session, Some(&cal), &config).unwrap();
        assert_eq!(report.rows.len(), 2); // all + t3
        assert!(!report.group_spectra.is_empty());
        // group mean must equal the mean of the two patients' tissue spectra
        let gs = report
            .group_spectra
            .iter()
            .find(|s| s.stage.is_none() && s.status == TissueStatus::Healthy)
            .unwrap();
        let expected = truth
            .tissue(Scenario::InVivo, TumorStage::T3, TissueStatus::Healthy)
            .unwrap();
        let direct = crate::colecole::evaluate(&expected, &g).unwrap();
        let diff = mean_spectra(&[gs.mean.clone(), direct.clone()]).unwrap();
        for i in 0..g.len() {
            assert_relative_eq!(
                diff.dielectric_constant()[i],
                direct.dielectric_constant()[i],
                max_relative = 1e-9
            );
        }
    }
}
