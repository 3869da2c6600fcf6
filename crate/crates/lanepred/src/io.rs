//! File formats: scene/label/feature CSVs, model and prototype JSON, and
//! hash manifests for reproducibility tracking.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::{CalibrationRecord, Classifier};
use crate::cluster::PrototypeLibrary;
use crate::error::{Error, Result};
use crate::predict::{LongitudinalPrediction, MixturePrediction};
use crate::traj::{Dataset, FrenetState, ManeuverKind, ManeuverLabel, Trajectory};

/// Schema version stamped into every JSON artifact and manifest.
pub const SCHEMA_VERSION: &str = "1";

// ---------------------------------------------------------------------------
// Trajectory + label CSV
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct TrajRow {
    vehicle_id: u64,
    t: f64,
    s: f64,
    s_dot: f64,
    d: f64,
    d_dot: f64,
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for st in &traj.states {
        w.serialize(TrajRow {
            vehicle_id: traj.vehicle_id,
            t: st.t,
            s: st.s,
            s_dot: st.s_dot,
            d: st.d,
            d_dot: st.d_dot,
        })?;
    }
    w.flush().map_err(Error::from)?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> Result<Trajectory> {
    let mut r = csv::Reader::from_path(path)?;
    let mut vehicle_id = 0;
    let mut states = Vec::new();
    for row in r.deserialize() {
        let row: TrajRow = row?;
        vehicle_id = row.vehicle_id;
        states.push(FrenetState {
            t: row.t,
            s: row.s,
            s_dot: row.s_dot,
            d: row.d,
            d_dot: row.d_dot,
        });
    }
    if states.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    Ok(Trajectory {
        vehicle_id,
        states,
        labels: Vec::new(),
    })
}

/// Writes one `scene_<id>.csv` per trajectory.
pub fn write_scenes(dir: &Path, dataset: &Dataset) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for traj in &dataset.trajectories {
        let path = dir.join(format!("scene_{:05}.csv", traj.vehicle_id));
        write_trajectory_csv(&path, traj)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Reads every `scene_*.csv` in the directory, sorted by file name.
pub fn read_scenes(dir: &Path, sample_rate: f64) -> Result<Dataset> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "csv")
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("scene_"))
        })
        .collect();
    paths.sort();
    let trajectories = paths
        .iter()
        .map(|p| read_trajectory_csv(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        trajectories,
        sample_rate,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct LabelRow {
    vehicle_id: u64,
    kind: ManeuverKind,
    t_start: f64,
    t_end: f64,
}

pub fn write_labels_csv(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for traj in &dataset.trajectories {
        for l in &traj.labels {
            w.serialize(LabelRow {
                vehicle_id: traj.vehicle_id,
                kind: l.kind,
                t_start: l.t_start,
                t_end: l.t_end,
            })?;
        }
    }
    w.flush().map_err(Error::from)?;
    Ok(())
}

pub fn read_labels_csv(path: &Path) -> Result<Vec<(u64, ManeuverLabel)>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: LabelRow = row?;
        out.push((
            row.vehicle_id,
            ManeuverLabel {
                kind: row.kind,
                t_start: row.t_start,
                t_end: row.t_end,
            },
        ));
    }
    Ok(out)
}

/// Attaches labels (read from a label CSV) to the matching trajectories.
pub fn apply_labels(dataset: &mut Dataset, labels: &[(u64, ManeuverLabel)]) {
    for traj in &mut dataset.trajectories {
        traj.labels = labels
            .iter()
            .filter(|(id, _)| *id == traj.vehicle_id)
            .map(|(_, l)| *l)
            .collect();
    }
}

// ---------------------------------------------------------------------------
// Feature CSV
// ---------------------------------------------------------------------------

/// One classifier training/evaluation frame.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FeatureRow {
    pub vehicle_id: u64,
    pub t: f64,
    pub label: ManeuverKind,
    pub d: f64,
    pub d_dot: f64,
    pub dp_lcr: f64,
    pub dp_lcl: f64,
    pub dv_lcr: f64,
    pub dv_lcl: f64,
}

pub fn write_features_csv(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(Error::from)?;
    Ok(())
}

pub fn read_features_csv(path: &Path) -> Result<Vec<FeatureRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

// ---------------------------------------------------------------------------
// JSON artifacts
// ---------------------------------------------------------------------------

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut buf = serde_json::to_vec_pretty(value)?;
    buf.push(b'\n');
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let data = fs::read(path)?;
    Ok(serde_json::from_slice(&data)?)
}

/// Trained classifier with its calibration record and provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: String,
    pub classifier: Classifier,
    pub calibration: Option<CalibrationRecord>,
    pub seed: u64,
}

pub fn write_model(path: &Path, model: &ModelFile) -> Result<()> {
    write_json(path, model)
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    read_json(path)
}

/// Prototype library with schema tag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtoFile {
    pub schema_version: String,
    pub library: PrototypeLibrary,
}

pub fn write_protos(path: &Path, library: &PrototypeLibrary) -> Result<()> {
    write_json(
        path,
        &ProtoFile {
            schema_version: SCHEMA_VERSION.into(),
            library: library.clone(),
        },
    )
}

pub fn read_protos(path: &Path) -> Result<PrototypeLibrary> {
    Ok(read_json::<ProtoFile>(path)?.library)
}

/// Prediction issued for one vehicle at one frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub vehicle_id: u64,
    /// Frame time the prediction was issued at.
    pub t: f64,
    pub maneuver: ManeuverKind,
    pub lateral: MixturePrediction,
    pub longitudinal: LongitudinalPrediction,
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestInput {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written next to each artifact. Deliberately contains no
/// timestamps so repeated runs stay byte-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    pub stage: String,
    pub inputs: Vec<ManifestInput>,
    pub params: serde_json::Value,
    pub seed: u64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn write_manifest(
    artifact: &Path,
    stage: &str,
    inputs: &[&Path],
    params: serde_json::Value,
    seed: u64,
) -> Result<()> {
    let inputs = inputs
        .iter()
        .map(|p| {
            Ok(ManifestInput {
                path: p.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION.into(),
        stage: stage.into(),
        inputs,
        params,
        seed,
    };
    let mut path = artifact.as_os_str().to_owned();
    path.push(".manifest.json");
    write_json(Path::new(&path), &manifest)
}
