//! Full-pipeline report generation: invert raw points, average per tissue,
//! form per-patient differences, aggregate groups with equal patient weight,
//! fit cubics, extract spot values, and fit group-mean dispersion models for
//! plot output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::colecole::{self, ColeColeParams, FitConfig};
use crate::contrast::{
    fit_cubic, group_mean_difference, patient_difference, spot_values, CubicFit, DifferenceCurve,
    GroupSummary, Scenario, SpotRow, TissueStatus, TumorStage, DEFAULT_SPOT_FREQS_GHZ,
};
use crate::probe_cal::{invert_reflection, CalibrationModel};
use crate::spectra::{average_sweeps, mean_spectra, PermittivitySpectrum};
use crate::{Error, Result};

use super::{MeasurementPoint, PointData, Session};

/// Settings for report and plot-data generation.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportConfig {
    /// Frequencies (GHz) reported in the table.
    pub spot_freqs_ghz: Vec<f64>,
    /// Pole count of the group-mean dispersion fits.
    pub m_poles: usize,
    pub fit: FitConfig,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            spot_freqs_ghz: DEFAULT_SPOT_FREQS_GHZ.to_vec(),
            m_poles: 2,
            fit: FitConfig::default(),
        }
    }
}

/// Group-mean measured spectrum and its fitted dispersion model.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupSpectra {
    pub scenario: Scenario,
    /// `None` means all stages pooled.
    pub stage: Option<TumorStage>,
    pub status: TissueStatus,
    pub n_patients: usize,
    pub mean: PermittivitySpectrum,
    pub model_params: ColeColeParams,
    pub model: PermittivitySpectrum,
    pub fit_objective: f64,
    pub fit_converged: bool,
}

/// Per-patient difference curve with its diagnostic cubic fit.
#[derive(Clone, Debug, PartialEq)]
pub struct PatientCurve {
    pub scenario: Scenario,
    pub patient_id: String,
    pub stage: Option<TumorStage>,
    pub curve: DifferenceCurve,
    pub fit: CubicFit,
}

/// One line of the rendered table.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub scenario: Scenario,
    pub stage: Option<TumorStage>,
    pub n_patients: usize,
    /// Empty when the group had to be skipped.
    pub spots: Vec<SpotRow>,
    pub small_sample: bool,
}

/// Everything the pipeline produces for one session.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub spot_freqs_ghz: Vec<f64>,
    pub rows: Vec<ReportRow>,
    pub groups: Vec<GroupSummary>,
    pub group_spectra: Vec<GroupSpectra>,
    pub patient_curves: Vec<PatientCurve>,
    pub warnings: Vec<String>,
}

fn scenario_rank(s: Scenario) -> u8 {
    match s {
        Scenario::ExVivo => 0,
        Scenario::InVivo => 1,
    }
}

#[derive(Default)]
struct PatientData {
    stage: Option<TumorStage>,
    scenario: Option<Scenario>,
    tumor: Vec<(String, PermittivitySpectrum)>,
    healthy: Vec<(String, PermittivitySpectrum)>,
}

fn point_spectrum(
    point: &MeasurementPoint,
    cal: Option<&CalibrationModel>,
) -> Result<PermittivitySpectrum> {
    match &point.data {
        PointData::RawReflection(sweeps) => {
            let cal = cal.ok_or_else(|| {
                Error::InvalidSession(format!(
                    "point {}/{} holds raw reflections but no calibration was supplied",
                    point.patient_id, point.location_label
                ))
            })?;
            let avg = average_sweeps(sweeps)?;
            invert_reflection(cal, &avg)
        }
        PointData::ExternalPermittivity(spectra) => mean_spectra(spectra),
    }
}

/// Run the full processing chain over a session.
///
/// `cal` is required whenever the session contains raw reflection points;
/// drift correction, if any, is assumed to already live inside the model.
pub fn generate_report(
    session: &Session,
    cal: Option<&CalibrationModel>,
    config: &ReportConfig,
) -> Result<Report> {
    session.validate()?;
    config.fit.validate()?;

    // group point spectra per patient; sort sides by location label so the
    // result is independent of point order in the session
    let mut patients: BTreeMap<(u8, String), PatientData> = BTreeMap::new();
    for point in &session.points {
        let spectrum = point_spectrum(point, cal)?;
        let key = (scenario_rank(point.scenario), point.patient_id.clone());
        let entry = patients.entry(key).or_default();
        entry.scenario = Some(point.scenario);
        if entry.stage.is_none() {
            entry.stage = point.stage;
        }
        let side = match point.status {
            TissueStatus::Tumor => &mut entry.tumor,
            TissueStatus::Healthy => &mut entry.healthy,
        };
        side.push((point.location_label.clone(), spectrum));
    }
    for data in patients.values_mut() {
        data.tumor.sort_by(|a, b| a.0.cmp(&b.0));
        data.healthy.sort_by(|a, b| a.0.cmp(&b.0));
    }

    let mut warnings = Vec::new();
    let mut patient_curves: Vec<PatientCurve> = Vec::new();
    for ((_, patient_id), data) in &patients {
        let scenario = data.scenario.expect("set when inserted");
        if data.tumor.is_empty() || data.healthy.is_empty() {
            warnings.push(format!(
                "patient {patient_id} skipped: needs both tumor and healthy tissue"
            ));
            continue;
        }
        let tumor: Vec<PermittivitySpectrum> = data.tumor.iter().map(|(_, s)| s.clone()).collect();
        let healthy: Vec<PermittivitySpectrum> =
            data.healthy.iter().map(|(_, s)| s.clone()).collect();
        let curve = patient_difference(&tumor, &healthy)?;
        let fit = fit_cubic(&curve)?;
        patient_curves.push(PatientCurve {
            scenario,
            patient_id: patient_id.clone(),
            stage: data.stage,
            curve,
            fit,
        });
    }

    let mut rows = Vec::new();
    let mut groups = Vec::new();
    let mut group_spectra = Vec::new();

    for scenario in Scenario::ALL {
        let scenario_patients: Vec<(&String, &PatientData)> = patients
            .iter()
            .filter(|((rank, _), _)| *rank == scenario_rank(scenario))
            .map(|((_, id), data)| (id, data))
            .collect();
        if scenario_patients.is_empty() {
            continue;
        }
        let mut stage_groups: Vec<Option<TumorStage>> = vec![None];
        for stage in TumorStage::ALL {
            if scenario_patients.iter().any(|(_, d)| d.stage == Some(stage)) {
                stage_groups.push(Some(stage));
            }
        }

        for stage in &stage_groups {
            let member_curves: Vec<DifferenceCurve> = patient_curves
                .iter()
                .filter(|c| c.scenario == scenario && (stage.is_none() || c.stage == *stage))
                .map(|c| c.curve.clone())
                .collect();
            if member_curves.is_empty() {
                warnings.push(format!(
                    "group {}/{}: no patient has both tumor and healthy tissue",
                    scenario.label(),
                    stage.map_or("all", |s| s.label())
                ));
                rows.push(ReportRow {
                    scenario,
                    stage: *stage,
                    n_patients: 0,
                    spots: Vec::new(),
                    small_sample: false,
                });
                continue;
            }
            let n_patients = member_curves.len();
            let (mean_curve, mean_fit) = group_mean_difference(&member_curves)?;
            let spots = spot_values(&mean_fit, &config.spot_freqs_ghz)?;
            rows.push(ReportRow {
                scenario,
                stage: *stage,
                n_patients,
                spots: spots.clone(),
                small_sample: n_patients == 1,
            });
            groups.push(GroupSummary {
                scenario,
                stage: *stage,
                n_patients,
                mean_curve,
                mean_fit,
                spot_rows: spots,
                small_sample: n_patients == 1,
            });

            // group-mean measured spectra plus dispersion fits, per status
            for status in [TissueStatus::Healthy, TissueStatus::Tumor] {
                let contributors: Vec<PermittivitySpectrum> = scenario_patients
                    .iter()
                    .filter(|(_, d)| stage.is_none() || d.stage == *stage)
                    .filter_map(|(_, d)| {
                        let side = match status {
                            TissueStatus::Tumor => &d.tumor,
                            TissueStatus::Healthy => &d.healthy,
                        };
                        if side.is_empty() {
                            None
                        } else {
                            let spectra: Vec<PermittivitySpectrum> =
                                side.iter().map(|(_, s)| s.clone()).collect();
                            Some(mean_spectra(&spectra))
                        }
                    })
                    .collect::<Result<_>>()?;
                if contributors.is_empty() {
                    continue;
                }
                let mean = mean_spectra(&contributors)?;
                match colecole::fit(&mean, config.m_poles, &config.fit) {
                    Ok(fitted) => {
                        let model = colecole::evaluate(&fitted.params, mean.grid())?;
                        group_spectra.push(GroupSpectra {
                            scenario,
                            stage: *stage,
                            status,
                            n_patients: contributors.len(),
                            mean,
                            model_params: fitted.params,
                            model,
                            fit_objective: fitted.objective,
                            fit_converged: fitted.converged,
                        });
                    }
                    Err(Error::TooFewPoints { needed, got }) => warnings.push(format!(
                        "group {}/{}/{}: grid too short for a {}-pole fit ({got} < {needed})",
                        scenario.label(),
                        stage.map_or("all", |s| s.label()),
                        status.label(),
                        config.m_poles
                    )),
                    Err(e) => return Err(e),
                }
            }
        }
    }

    Ok(Report {
        spot_freqs_ghz: config.spot_freqs_ghz.clone(),
        rows,
        groups,
        group_spectra,
        patient_curves,
        warnings,
    })
}

/// Round half away from zero at `decimals` places.
pub fn round_half_away(x: f64, decimals: u32) -> f64 {
    let p = 10f64.powi(decimals as i32);
    (x * p).round() / p
}

fn format_cell(x: f64) -> String {
    format!("{:.2}", round_half_away(x, 2))
}

/// Comma-separated table; two-decimal cells, half-away-from-zero.
pub fn render_csv(report: &Report) -> String {
    let mut out = String::from("scenario,stage,n_patients");
    for f in &report.spot_freqs_ghz {
        out.push_str(&format!(",delta_dc_{f}ghz,delta_lf_{f}ghz"));
    }
    out.push('\n');
    for row in &report.rows {
        out.push_str(row.scenario.label());
        out.push(',');
        out.push_str(row.stage.map_or("all", |s| s.label()));
        out.push_str(&format!(",{}", row.n_patients));
        if row.spots.is_empty() {
            for _ in &report.spot_freqs_ghz {
                out.push_str(",,");
            }
        } else {
            for spot in &row.spots {
                out.push_str(&format!(
                    ",{},{}",
                    format_cell(spot.delta_dc),
                    format_cell(spot.delta_lf)
                ));
            }
        }
        out.push('\n');
    }
    out
}

/// Fixed-width human-readable table.
pub fn render_table(report: &Report) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<9} {:<6} {:>3}", "scenario", "stage", "n"));
    for f in &report.spot_freqs_ghz {
        out.push_str(&format!("  {:>16}", format!("{f} GHz (dc/lf)")));
    }
    out.push('\n');
    for row in &report.rows {
        out.push_str(&format!(
            "{:<9} {:<6} {:>3}",
            row.scenario.label(),
            row.stage.map_or("all", |s| s.label()),
            row.n_patients
        ));
        if row.spots.is_empty() {
            for _ in &report.spot_freqs_ghz {
                out.push_str(&format!("  {:>16}", "skipped"));
            }
        } else {
            for spot in &row.spots {
                out.push_str(&format!(
                    "  {:>16}",
                    format!("{}/{}", format_cell(spot.delta_dc), format_cell(spot.delta_lf))
                ));
            }
        }
        if row.small_sample {
            out.push_str("  [n=1]");
        }
        out.push('\n');
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write one five-column file per group-mean spectrum:
/// `f_hz,mean_dc,mean_lf,model_dc,model_lf`.
pub fn write_plot_files(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for gs in &report.group_spectra {
        let name = format!(
            "{}_{}_{}.csv",
            gs.scenario.label(),
            gs.stage.map_or("all", |s| s.label()),
            gs.status.label()
        );
        let path = dir.join(name);
        let mut text = String::from("f_hz,mean_dc,mean_lf,model_dc,model_lf\n");
        for (i, &f) in gs.mean.grid().points_hz().iter().enumerate() {
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                f,
                gs.mean.dielectric_constant()[i],
                gs.mean.loss_factor()[i],
                gs.model.dielectric_constant()[i],
                gs.model.loss_factor()[i]
            ));
        }
        write_text(&path, &text)?;
        written.push(path);
    }
    written.sort();
    Ok(written)
}

/// Full pipeline straight to plot-ready files.
pub fn emit_plot_data(
    session: &Session,
    cal: Option<&CalibrationModel>,
    config: &ReportConfig,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let report = generate_report(session, cal, config)?;
    write_plot_files(&report, dir)
}

/// Write per-patient and per-group difference curves plus a cubic-fit
/// summary table.
pub fn write_difference_data(report: &Report, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let curve_text = |curve: &DifferenceCurve| {
        let mut text = String::from("f_hz,delta_dc,delta_lf\n");
        for (i, &f) in curve.grid.points_hz().iter().enumerate() {
            text.push_str(&format!("{},{},{}\n", f, curve.delta_dc[i], curve.delta_lf[i]));
        }
        text
    };

    for pc in &report.patient_curves {
        let path = dir.join(format!("patient_{}_{}.csv", pc.scenario.label(), pc.patient_id));
        write_text(&path, &curve_text(&pc.curve))?;
        written.push(path);
    }
    for g in &report.groups {
        let path = dir.join(format!(
            "group_{}_{}.csv",
            g.scenario.label(),
            g.stage.map_or("all", |s| s.label())
        ));
        write_text(&path, &curve_text(&g.mean_curve))?;
        written.push(path);
    }

    let mut fits = String::from(
        "scope,scenario,label,c0_dc,c1_dc,c2_dc,c3_dc,rms_dc,c0_lf,c1_lf,c2_lf,c3_lf,rms_lf\n",
    );
    let fit_cells = |fit: &CubicFit| {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            fit.coeffs_dc[0],
            fit.coeffs_dc[1],
            fit.coeffs_dc[2],
            fit.coeffs_dc[3],
            fit.rms_residual_dc,
            fit.coeffs_lf[0],
            fit.coeffs_lf[1],
            fit.coeffs_lf[2],
            fit.coeffs_lf[3],
            fit.rms_residual_lf
        )
    };
    for pc in &report.patient_curves {
        fits.push_str(&format!(
            "patient,{},{},{}\n",
            pc.scenario.label(),
            pc.patient_id,
            fit_cells(&pc.fit)
        ));
    }
    for g in &report.groups {
        fits.push_str(&format!(
            "group,{},{},{}\n",
            g.scenario.label(),
            g.stage.map_or("all", |s| s.label()),
            fit_cells(&g.mean_fit)
        ));
    }
    let fits_path = dir.join("cubic_fits.csv");
    write_text(&fits_path, &fits)?;
    written.push(fits_path);
    written.sort();
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{AcquisitionConfig, FrequencyGrid};

    /// Quadratic through three (x, y) anchors, evaluated at `x`.
    fn lagrange3(anchors: [(f64, f64); 3], x: f64) -> f64 {
        let [(x0, y0), (x1, y1), (x2, y2)] = anchors;
        y0 * (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2))
            + y1 * (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2))
            + y2 * (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1))
    }

    fn fixture_grid() -> FrequencyGrid {
        FrequencyGrid::linspace(0.5e9, 26.5e9, 41).unwrap()
    }

    fn fixture_point(
        patient: &str,
        status: TissueStatus,
        stage: TumorStage,
        offsets: Option<([f64; 3], [f64; 3])>,
    ) -> MeasurementPoint {
        let g = fixture_grid();
        let (dc, lf): (Vec<f64>, Vec<f64>) = g
            .points_hz()
            .iter()
            .map(|&f| {
                let x = f / 1e9;
                match offsets {
                    Some((dc_spots, lf_spots)) => (
                        40.0 + lagrange3(
                            [(2.45, dc_spots[0]), (12.5, dc_spots[1]), (18.0, dc_spots[2])],
                            x,
                        ),
                        10.0 + lagrange3(
                            [(2.45, lf_spots[0]), (12.5, lf_spots[1]), (18.0, lf_spots[2])],
                            x,
                        ),
                    ),
                    None => (40.0, 10.0),
                }
            })
            .unzip();
        let spectrum = PermittivitySpectrum::new(g, dc, lf).unwrap();
        MeasurementPoint {
            patient_id: patient.into(),
            status,
            scenario: Scenario::ExVivo,
            stage: Some(stage),
            location_label: format!("{}-loc", status.label()),
            data: PointData::ExternalPermittivity(vec![spectrum]),
        }
    }

    /// Eight ex vivo patients (5 T3, 2 T4a, 1 T4b) whose per-patient
    /// differences land exactly on the published stage rows.
    fn fixture_session() -> Session {
        let t3 = ([-2.61, -1.84, -1.47], [-0.44, -1.14, -1.28]);
        let t4a = ([-0.40, 0.06, 0.22], [-0.67, -0.88, -1.12]);
        let t4b = ([6.10, 7.25, 7.38], [0.53, 0.82, 1.75]);
        let mut points = Vec::new();
        let mut add_patient = |id: &str, stage: TumorStage, off: ([f64; 3], [f64; 3])| {
            points.push(fixture_point(id, TissueStatus::Tumor, stage, Some(off)));
            points.push(fixture_point(id, TissueStatus::Healthy, stage, None));
        };
        for i in 1..=5 {
            add_patient(&format!("ev0{i}"), TumorStage::T3, t3);
        }
        add_patient("ev06", TumorStage::T4a, t4a);
        add_patient("ev07", TumorStage::T4a, t4a);
        add_patient("ev08", TumorStage::T4b, t4b);
        Session::new(
            "fixture",
            AcquisitionConfig {
                n_points: 41,
                ..AcquisitionConfig::ex_vivo_default()
            },
            None,
            points,
        )
        .unwrap()
    }

    fn quick_config() -> ReportConfig {
        ReportConfig {
            fit: FitConfig {
                n_starts: 2,
                max_iterations: 120,
                ..FitConfig::default()
            },
            ..ReportConfig::default()
        }
    }

    #[test]
    fn fixture_replays_published_rows() {
        let session = fixture_session();
        let report = generate_report(&session, None, &quick_config()).unwrap();
        let csv = render_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "scenario,stage,n_patients,delta_dc_2.45ghz,delta_lf_2.45ghz,\
             delta_dc_12.5ghz,delta_lf_12.5ghz,delta_dc_18ghz,delta_lf_18ghz"
        );
        assert!(
            lines.contains(&"ex_vivo,all,8,-0.97,-0.38,-0.23,-0.83,0.06,-0.86"),
            "all-stage row missing or wrong in:\n{csv}"
        );
        assert!(
            lines.contains(&"ex_vivo,t4b,1,6.10,0.53,7.25,0.82,7.38,1.75"),
            "t4b row missing or wrong in:\n{csv}"
        );
        assert!(lines.contains(&"ex_vivo,t3,5,-2.61,-0.44,-1.84,-1.14,-1.47,-1.28"));
        assert!(lines.contains(&"ex_vivo,t4a,2,-0.40,-0.67,0.06,-0.88,0.22,-1.12"));
    }

    #[test]
    fn single_patient_group_is_flagged_small() {
        let session = fixture_session();
        let report = generate_report(&session, None, &quick_config()).unwrap();
        let t4b = report
            .rows
            .iter()
            .find(|r| r.stage == Some(TumorStage::T4b))
            .unwrap();
        assert_eq!(t4b.n_patients, 1);
        assert!(t4b.small_sample);
        let table = render_table(&report);
        assert!(table.contains("[n=1]"));
    }

    #[test]
    fn zero_contrast_renders_zero_cells() {
        let g = fixture_grid();
        let spectrum = PermittivitySpectrum::new(g, vec![40.0; 41], vec![10.0; 41]).unwrap();
        let mut points = Vec::new();
        for (status, label) in [(TissueStatus::Tumor, "t"), (TissueStatus::Healthy, "h")] {
            points.push(MeasurementPoint {
                patient_id: "p1".into(),
                status,
                scenario: Scenario::InVivo,
                stage: Some(TumorStage::T3),
                location_label: label.into(),
                data: PointData::ExternalPermittivity(vec![spectrum.clone()]),
            });
        }
        let session = Session::new(
            "zero",
            AcquisitionConfig {
                n_points: 41,
                ..AcquisitionConfig::in_vivo_default()
            },
            None,
            points,
        )
        .unwrap();
        let report = generate_report(&session, None, &quick_config()).unwrap();
        let csv = render_csv(&report);
        assert!(csv.lines().any(|l| l == "in_vivo,all,1,0.00,0.00,0.00,0.00,0.00,0.00"));
    }

    #[test]
    fn patient_without_tumor_side_is_skipped_with_warning() {
        let g = fixture_grid();
        let spectrum = PermittivitySpectrum::new(g, vec![40.0; 41], vec![10.0; 41]).unwrap();
        let points = vec![MeasurementPoint {
            patient_id: "p1".into(),
            status: TissueStatus::Healthy,
            scenario: Scenario::ExVivo,
            stage: None,
            location_label: "h".into(),
            data: PointData::ExternalPermittivity(vec![spectrum]),
        }];
        let session = Session::new(
            "lonely",
            AcquisitionConfig {
                n_points: 41,
                ..AcquisitionConfig::ex_vivo_default()
            },
            None,
            points,
        )
        .unwrap();
        let report = generate_report(&session, None, &quick_config()).unwrap();
        assert!(!report.warnings.is_empty());
        let all_row = report.rows.iter().find(|r| r.stage.is_none()).unwrap();
        assert_eq!(all_row.n_patients, 0);
        assert!(all_row.spots.is_empty());
        let csv = render_csv(&report);
        assert!(csv.lines().any(|l| l.starts_with("ex_vivo,all,0,,")));
    }

    #[test]
    fn report_is_invariant_to_point_order() {
        let session = fixture_session();
        let base = generate_report(&session, None, &quick_config()).unwrap();
        let mut reversed = session.clone();
        reversed.points.reverse();
        let other = generate_report(&reversed, None, &quick_config()).unwrap();
        assert_eq!(render_csv(&base), render_csv(&other));
        assert_eq!(base.rows, other.rows);
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(format_cell(0.005), "0.01");
        assert_eq!(format_cell(-0.005), "-0.01");
        assert_eq!(format_cell(0.054999), "0.05");
        assert_eq!(format_cell(-0.96875), "-0.97");
        assert_eq!(format_cell(0.05875), "0.06");
        assert_eq!(format_cell(2.675), "2.68");
        assert_eq!(format_cell(-0.0001), "-0.00");
        assert_eq!(format_cell(0.0), "0.00");
    }

    #[test]
    fn plot_files_have_five_columns_and_exact_model() {
        let session = fixture_session();
        let report = generate_report(&session, None, &quick_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_plot_files(&report, dir.path()).unwrap();
        assert!(!files.is_empty());
        for file in &files {
            let text = std::fs::read_to_string(file).unwrap();
            let mut lines = text.lines();
            assert_eq!(lines.next().unwrap(), "f_hz,mean_dc,mean_lf,model_dc,model_lf");
            for line in lines {
                assert_eq!(line.split(',').count(), 5);
            }
        }
        // model columns must reproduce evaluate(fit(mean)) bitwise
        let gs = &report.group_spectra[0];
        let name = format!(
            "{}_{}_{}.csv",
            gs.scenario.label(),
            gs.stage.map_or("all", |s| s.label()),
            gs.status.label()
        );
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let expected = colecole::evaluate(&gs.model_params, gs.mean.grid()).unwrap();
        for (i, line) in text.lines().skip(1).enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            let model_dc: f64 = cells[3].parse().unwrap();
            let model_lf: f64 = cells[4].parse().unwrap();
            assert_eq!(model_dc.to_bits(), expected.dielectric_constant()[i].to_bits());
            assert_eq!(model_lf.to_bits(), expected.loss_factor()[i].to_bits());
        }
    }

    #[test]
    fn difference_files_cover_patients_and_groups() {
        let session = fixture_session();
        let report = generate_report(&session, None, &quick_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_difference_data(&report, dir.path()).unwrap();
        let names: Vec<String> = files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().to_string())
            .collect();
        assert!(names.contains(&"patient_ex_vivo_ev01.csv".to_string()));
        assert!(names.contains(&"group_ex_vivo_all.csv".to_string()));
        assert!(names.contains(&"group_ex_vivo_t4b.csv".to_string()));
        assert!(names.contains(&"cubic_fits.csv".to_string()));
    }
}
