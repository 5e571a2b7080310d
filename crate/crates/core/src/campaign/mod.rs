//! Campaign data model, file ingestion, persistence, and reporting.
//!
//! A [`Session`] collects measurement points tagged by patient, tissue
//! status, scenario, and tumor stage. Points carry either raw reflection
//! sweeps (inverted through a calibration at report time) or externally
//! inverted permittivity spectra. Sessions and calibrations persist as
//! versioned human-readable JSON documents; sweep and spectrum interchange
//! uses one-port Touchstone and a small CSV format.

mod csvio;
mod report;
mod touchstone;

pub use csvio::{export_csv_spectrum, import_csv_spectrum};
pub use report::{
    emit_plot_data, generate_report, render_csv, render_table, round_half_away,
    write_difference_data, write_plot_files, GroupSpectra, PatientCurve, Report, ReportConfig,
    ReportRow,
};
pub use touchstone::{import_touchstone, parse_touchstone, TouchstoneData};

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::contrast::{Scenario, TissueStatus, TumorStage};
use crate::probe_cal::CalibrationModel;
use crate::spectra::{AcquisitionConfig, PermittivitySpectrum, ReflectionSweep};
use crate::{Error, Result};

/// Version written into session documents.
pub const SESSION_SCHEMA_VERSION: u32 = 1;

/// Version written into calibration documents.
pub const CALIBRATION_SCHEMA_VERSION: u32 = 1;

/// Where a point's spectra came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    RawReflection,
    ExternalPermittivity,
}

/// Payload of one measurement point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "provenance", content = "data")]
pub enum PointData {
    /// Raw sweeps straight off the instrument; inverted at processing time.
    RawReflection(Vec<ReflectionSweep>),
    /// Already-inverted spectra from an external processing chain.
    ExternalPermittivity(Vec<PermittivitySpectrum>),
}

impl PointData {
    pub fn provenance(&self) -> Provenance {
        match self {
            PointData::RawReflection(_) => Provenance::RawReflection,
            PointData::ExternalPermittivity(_) => Provenance::ExternalPermittivity,
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            PointData::RawReflection(v) => v.is_empty(),
            PointData::ExternalPermittivity(v) => v.is_empty(),
        }
    }
}

/// One probe contact on one tissue location.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPoint {
    pub patient_id: String,
    pub status: TissueStatus,
    pub scenario: Scenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<TumorStage>,
    pub location_label: String,
    #[serde(flatten)]
    pub data: PointData,
}

impl MeasurementPoint {
    pub fn provenance(&self) -> Provenance {
        self.data.provenance()
    }

    fn validate(&self) -> Result<()> {
        if self.data.is_empty() {
            return Err(Error::InvalidSession(format!(
                "point {}/{}/{} has no sweeps or spectra",
                self.patient_id,
                self.location_label,
                self.status.label()
            )));
        }
        if self.status == TissueStatus::Tumor && self.stage.is_none() {
            return Err(Error::InvalidSession(format!(
                "tumor point {}/{} is missing its stage",
                self.patient_id, self.location_label
            )));
        }
        Ok(())
    }
}

/// A measurement campaign session: configuration plus all points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub acquisition: AcquisitionConfig,
    /// Label of the calibration document this session was or will be
    /// processed with; the model itself is stored separately.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_id: Option<String>,
    pub points: Vec<MeasurementPoint>,
}

impl Session {
    pub fn new(
        session_id: impl Into<String>,
        acquisition: AcquisitionConfig,
        calibration_id: Option<String>,
        points: Vec<MeasurementPoint>,
    ) -> Result<Self> {
        let session = Session {
            session_id: session_id.into(),
            acquisition,
            calibration_id,
            points,
        };
        session.validate()?;
        Ok(session)
    }

    pub fn validate(&self) -> Result<()> {
        self.acquisition.validate()?;
        let mut seen: Vec<(&str, &str, TissueStatus)> = Vec::with_capacity(self.points.len());
        for p in &self.points {
            p.validate()?;
            let key = (p.patient_id.as_str(), p.location_label.as_str(), p.status);
            if seen.contains(&key) {
                return Err(Error::InvalidSession(format!(
                    "duplicate point {}/{}/{}",
                    key.0,
                    key.1,
                    key.2.label()
                )));
            }
            seen.push(key);
        }
        // a patient's points must agree on stage and scenario
        for p in &self.points {
            for q in &self.points {
                if p.patient_id == q.patient_id {
                    if let (Some(a), Some(b)) = (p.stage, q.stage) {
                        if a != b {
                            return Err(Error::InvalidSession(format!(
                                "patient {} tagged with conflicting stages",
                                p.patient_id
                            )));
                        }
                    }
                    if p.scenario != q.scenario {
                        return Err(Error::InvalidSession(format!(
                            "patient {} appears in both scenarios",
                            p.patient_id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Count of points in the given scenario.
    pub fn point_count(&self, scenario: Scenario) -> usize {
        self.points.iter().filter(|p| p.scenario == scenario).count()
    }
}

#[derive(Serialize, Deserialize)]
struct SessionDoc {
    schema_version: u32,
    #[serde(flatten)]
    session: Session,
}

#[derive(Serialize, Deserialize)]
struct CalibrationDoc {
    schema_version: u32,
    calibration: CalibrationModel,
}

fn check_schema_version(path: &Path, text: &str, expected: u32) -> Result<()> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::parse(path, format!("not valid JSON: {e}")))?;
    let found = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::parse(path, "missing schema_version"))?;
    if found != u64::from(expected) {
        return Err(Error::VersionMismatch {
            path: path.display().to_string(),
            found: found.min(u64::from(u32::MAX)) as u32,
            expected,
        });
    }
    Ok(())
}

/// Persist a session as a versioned pretty-printed JSON document.
pub fn save_session(session: &Session, path: &Path) -> Result<()> {
    session.validate()?;
    let doc = SessionDoc {
        schema_version: SESSION_SCHEMA_VERSION,
        session: session.clone(),
    };
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::parse(path, format!("serialize failure: {e}")))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Load a session document, refusing any schema version this build does not
/// write.
pub fn load_session(path: &Path) -> Result<Session> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    check_schema_version(path, &text, SESSION_SCHEMA_VERSION)?;
    let doc: SessionDoc =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, format!("{e}")))?;
    doc.session.validate()?;
    Ok(doc.session)
}

/// Persist a calibration model as a versioned JSON document.
pub fn save_calibration(cal: &CalibrationModel, path: &Path) -> Result<()> {
    let doc = CalibrationDoc {
        schema_version: CALIBRATION_SCHEMA_VERSION,
        calibration: cal.clone(),
    };
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::parse(path, format!("serialize failure: {e}")))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Load a calibration document.
pub fn load_calibration(path: &Path) -> Result<CalibrationModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    check_schema_version(path, &text, CALIBRATION_SCHEMA_VERSION)?;
    let doc: CalibrationDoc =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, format!("{e}")))?;
    Ok(doc.calibration)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::FrequencyGrid;
    use num_complex::Complex64;

    fn grid() -> FrequencyGrid {
        FrequencyGrid::linspace(0.5e9, 26.5e9, 5).unwrap()
    }

    fn external_point(
        patient: &str,
        status: TissueStatus,
        scenario: Scenario,
        stage: Option<TumorStage>,
        location: &str,
    ) -> MeasurementPoint {
        let g = grid();
        let s = PermittivitySpectrum::new(g.clone(), vec![40.0; 5], vec![10.0; 5]).unwrap();
        MeasurementPoint {
            patient_id: patient.into(),
            status,
            scenario,
            stage,
            location_label: location.into(),
            data: PointData::ExternalPermittivity(vec![s]),
        }
    }

    fn raw_point(patient: &str, location: &str) -> MeasurementPoint {
        let g = grid();
        let sweep = ReflectionSweep::new(g, vec![Complex64::new(0.4, -0.2); 5]).unwrap();
        MeasurementPoint {
            patient_id: patient.into(),
            status: TissueStatus::Healthy,
            scenario: Scenario::ExVivo,
            stage: Some(TumorStage::T3),
            location_label: location.into(),
            data: PointData::RawReflection(vec![sweep.clone(), sweep]),
        }
    }

    fn acquisition() -> AcquisitionConfig {
        AcquisitionConfig {
            n_points: 5,
            ..AcquisitionConfig::ex_vivo_default()
        }
    }

    #[test]
    fn empty_session_round_trips() {
        let session = Session::new("s0", acquisition(), None, vec![]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("session.json");
        save_session(&session, &path).unwrap();
        let loaded = load_session(&path).unwrap();
        assert_eq!(loaded, session);
    }

    #[test]
    fn populated_session_round_trips_with_counts() {
        // 27 in vivo and 37 ex vivo points, mirroring a full campaign's scale
        let mut points = Vec::new();
        for i in 0..27 {
            let mut p = external_point(
                &format!("iv{i:02}"),
                TissueStatus::Tumor,
                Scenario::InVivo,
                Some(TumorStage::T3),
                "loc1",
            );
            p.location_label = format!("loc{i}");
            points.push(p);
        }
        for i in 0..36 {
            let mut p = external_point(
                &format!("ev{i:02}"),
                TissueStatus::Healthy,
                Scenario::ExVivo,
                None,
                "loc1",
            );
            p.location_label = format!("loc{i}");
            points.push(p);
        }
        points.push(raw_point("ev99", "loc-raw"));
        let session = Session::new("campaign", acquisition(), Some("cal-1".into()), points).unwrap();
        assert_eq!(session.point_count(Scenario::InVivo), 27);
        assert_eq!(session.point_count(Scenario::ExVivo), 37);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("session.json");
        save_session(&session, &path).unwrap();
        let loaded = load_session(&path).unwrap();
        assert_eq!(loaded, session);
        assert_eq!(loaded.point_count(Scenario::InVivo), 27);
        assert_eq!(loaded.point_count(Scenario::ExVivo), 37);
    }

    #[test]
    fn tampered_version_is_rejected() {
        let session = Session::new("s0", acquisition(), None, vec![]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("session.json");
        save_session(&session, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let tampered = text.replace("\"schema_version\": 1", "\"schema_version\": 99");
        std::fs::write(&path, tampered).unwrap();
        assert!(matches!(
            load_session(&path),
            Err(Error::VersionMismatch { found: 99, expected: 1, .. })
        ));
    }

    #[test]
    fn corrupt_document_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("session.json");
        std::fs::write(&path, "{ not json").unwrap();
        assert!(matches!(load_session(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn duplicate_point_tuple_is_rejected() {
        let a = external_point("p1", TissueStatus::Healthy, Scenario::ExVivo, None, "loc1");
        let b = a.clone();
        assert!(matches!(
            Session::new("s", acquisition(), None, vec![a, b]),
            Err(Error::InvalidSession(_))
        ));
    }

    #[test]
    fn tumor_point_requires_stage() {
        let p = external_point("p1", TissueStatus::Tumor, Scenario::ExVivo, None, "loc1");
        assert!(matches!(
            Session::new("s", acquisition(), None, vec![p]),
            Err(Error::InvalidSession(_))
        ));
    }

    #[test]
    fn conflicting_stages_are_rejected() {
        let a = external_point(
            "p1",
            TissueStatus::Tumor,
            Scenario::ExVivo,
            Some(TumorStage::T3),
            "loc1",
        );
        let b = external_point(
            "p1",
            TissueStatus::Tumor,
            Scenario::ExVivo,
            Some(TumorStage::T4a),
            "loc2",
        );
        assert!(matches!(
            Session::new("s", acquisition(), None, vec![a, b]),
            Err(Error::InvalidSession(_))
        ));
    }

    #[test]
    fn calibration_document_round_trips() {
        use crate::probe_cal::{solve_calibration, ReferenceLiquids, StandardKind, StandardMeasurement};
        let liquids = ReferenceLiquids::builtin();
        let g = FrequencyGrid::linspace(0.5e9, 26.5e9, 11).unwrap();
        let mk = |kind: StandardKind, eps_shift: f64| {
            let gamma: Vec<Complex64> = g
                .points_hz()
                .iter()
                .map(|&f| {
                    let x = f / 1e9;
                    Complex64::new(0.3 + eps_shift + 0.001 * x, -0.4 + eps_shift / 2.0)
                })
                .collect();
            StandardMeasurement {
                kind,
                sweep: ReflectionSweep::new(g.clone(), gamma).unwrap(),
            }
        };
        let standards = vec![
            mk(StandardKind::Air, 0.0),
            mk(StandardKind::Short, 0.3),
            mk(StandardKind::Water { temperature_c: 25.0 }, -0.9),
            mk(StandardKind::Methanol { temperature_c: 25.0 }, -0.5),
        ];
        let cal = solve_calibration(&standards, &liquids).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cal.json");
        save_calibration(&cal, &path).unwrap();
        let loaded = load_calibration(&path).unwrap();
        assert_eq!(loaded, cal);
    }
}
