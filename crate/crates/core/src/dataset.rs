//! On-disk dataset layout: `manifest.json` plus one directory per
//! trajectory holding `frames.bin` (raw u8 RGB, frame-major) and
//! `labels.csv`.

use crate::expert::{Trajectory, TrajectoryMeta, TrajectorySample};
use crate::scene::PackedImage;
use crate::simcore::ControlCommand;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MANIFEST_VERSION: u32 = 1;
pub const LABELS_HEADER: [&str; 6] = ["idx", "dt_s", "vx", "vy", "vz", "yaw_rate"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("labels.csv: {0}")]
    Labels(String),
    #[error("frames.bin: expected {expected} bytes, found {found}")]
    Frames { expected: usize, found: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub meta: TrajectoryMeta,
    pub length: usize,
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub width: usize,
    pub height: usize,
    pub trajectories: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn parse(bytes: &[u8]) -> Result<Self, DatasetError> {
        let m: Manifest = serde_json::from_slice(bytes).map_err(|e| DatasetError::Manifest(e.to_string()))?;
        if m.version != MANIFEST_VERSION {
            return Err(DatasetError::Manifest(format!("unsupported version {}", m.version)));
        }
        if m.width == 0 || m.height == 0 {
            return Err(DatasetError::Manifest("zero image size".into()));
        }
        for e in &m.trajectories {
            if e.dir.is_empty() || e.dir.contains("..") || e.dir.contains('/') || e.dir.contains('\\') {
                return Err(DatasetError::Manifest(format!("bad trajectory dir {:?}", e.dir)));
            }
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises")
    }
}

pub fn write_labels_csv(samples: &[TrajectorySample]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(LABELS_HEADER).expect("in-memory write");
    for (i, s) in samples.iter().enumerate() {
        let l = s.label;
        w.write_record([
            i.to_string(),
            s.dt.to_string(),
            l.vx.to_string(),
            l.vy.to_string(),
            l.vz.to_string(),
            l.yaw_rate.to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Parses `labels.csv` into (δt, label) rows; indices must run 0,1,2,...
pub fn parse_labels_csv(bytes: &[u8]) -> Result<Vec<(f64, ControlCommand)>, DatasetError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = r.headers().map_err(|e| DatasetError::Labels(e.to_string()))?;
    if header.iter().ne(LABELS_HEADER) {
        return Err(DatasetError::Labels(format!("bad header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| DatasetError::Labels(e.to_string()))?;
        if rec.len() != 6 {
            return Err(DatasetError::Labels(format!("row {i}: {} fields", rec.len())));
        }
        let idx: usize = rec[0].parse().map_err(|_| DatasetError::Labels(format!("row {i}: bad idx {:?}", &rec[0])))?;
        if idx != i {
            return Err(DatasetError::Labels(format!("row {i}: idx {idx} out of sequence")));
        }
        let mut v = [0.0; 5];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = rec[k + 1]
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| DatasetError::Labels(format!("row {i}: bad {} {:?}", LABELS_HEADER[k + 1], &rec[k + 1])))?;
        }
        if v[0] <= 0.0 {
            return Err(DatasetError::Labels(format!("row {i}: dt must be > 0")));
        }
        out.push((v[0], ControlCommand::new(v[1], v[2], v[3], v[4])));
    }
    Ok(out)
}

pub fn encode_frames(samples: &[TrajectorySample]) -> Vec<u8> {
    samples.iter().flat_map(|s| s.image.data.iter().copied()).collect()
}

/// Splits a `frames.bin` payload into `n` frames of `width`×`height`.
pub fn decode_frames(bytes: &[u8], width: usize, height: usize, n: usize) -> Result<Vec<PackedImage>, DatasetError> {
    let frame = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(3))
        .ok_or(DatasetError::Frames { expected: usize::MAX, found: bytes.len() })?;
    let expected = frame.checked_mul(n).ok_or(DatasetError::Frames { expected: usize::MAX, found: bytes.len() })?;
    if bytes.len() != expected || frame == 0 {
        return Err(DatasetError::Frames { expected, found: bytes.len() });
    }
    Ok(bytes
        .chunks_exact(frame)
        .map(|c| PackedImage { width, height, data: c.to_vec() })
        .collect())
}

fn traj_dir_name(id: usize) -> String {
    format!("traj_{id:05}")
}

pub fn write_dataset(dir: &Path, trajectories: &[Trajectory]) -> Result<Manifest, DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let (width, height) = trajectories
        .first()
        .and_then(|t| t.samples.first())
        .map(|s| (s.image.width, s.image.height))
        .unwrap_or((1, 1));
    let mut entries = Vec::with_capacity(trajectories.len());
    for t in trajectories {
        let name = traj_dir_name(t.meta.id);
        let tdir = dir.join(&name);
        fs::create_dir_all(&tdir).map_err(io_err(&tdir))?;
        let fp = tdir.join("frames.bin");
        fs::write(&fp, encode_frames(&t.samples)).map_err(io_err(&fp))?;
        let lp = tdir.join("labels.csv");
        fs::write(&lp, write_labels_csv(&t.samples)).map_err(io_err(&lp))?;
        entries.push(ManifestEntry {
            meta: t.meta.clone(),
            length: t.samples.len(),
            dir: name,
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        width,
        height,
        trajectories: entries,
    };
    let mp = dir.join("manifest.json");
    fs::write(&mp, manifest.to_json()).map_err(io_err(&mp))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, DatasetError> {
    let mp = dir.join("manifest.json");
    Manifest::parse(&fs::read(&mp).map_err(io_err(&mp))?)
}

/// Loads every trajectory listed in the manifest. Poses are not stored on
/// disk, so `states` comes back empty.
pub fn read_dataset(dir: &Path) -> Result<(Manifest, Vec<Trajectory>), DatasetError> {
    let manifest = read_manifest(dir)?;
    let mut out = Vec::with_capacity(manifest.trajectories.len());
    for e in &manifest.trajectories {
        let tdir = dir.join(&e.dir);
        let lp = tdir.join("labels.csv");
        let labels = parse_labels_csv(&fs::read(&lp).map_err(io_err(&lp))?)?;
        if labels.len() != e.length {
            return Err(DatasetError::Manifest(format!(
                "{}: manifest says {} samples, labels.csv has {}",
                e.dir,
                e.length,
                labels.len()
            )));
        }
        let fp = tdir.join("frames.bin");
        let frames = decode_frames(&fs::read(&fp).map_err(io_err(&fp))?, manifest.width, manifest.height, e.length)?;
        let samples = frames
            .into_iter()
            .zip(labels)
            .map(|(image, (dt, label))| TrajectorySample { image, label, dt })
            .collect();
        out.push(Trajectory {
            meta: e.meta.clone(),
            samples,
            states: Vec::new(),
        });
    }
    Ok((manifest, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(dt: f64, v: f64) -> TrajectorySample {
        TrajectorySample {
            image: PackedImage { width: 2, height: 1, data: vec![1, 2, 3, 4, 5, 6] },
            label: ControlCommand::new(v, -v, 0.1 * v, 0.01),
            dt,
        }
    }

    #[test]
    fn labels_round_trip_exactly() {
        let s = vec![sample(27.0 / 240.0, 0.123456789), sample(0.1, -1.9999999)];
        let parsed = parse_labels_csv(&write_labels_csv(&s)).unwrap();
        for (a, b) in s.iter().zip(&parsed) {
            assert_eq!(a.dt, b.0);
            assert_eq!(a.label, b.1);
        }
    }

    #[test]
    fn labels_reject_bad_input() {
        assert!(parse_labels_csv(b"a,b\n1,2\n").is_err());
        assert!(parse_labels_csv(b"idx,dt_s,vx,vy,vz,yaw_rate\n1,0.1,0,0,0,0\n").is_err());
        assert!(parse_labels_csv(b"idx,dt_s,vx,vy,vz,yaw_rate\n0,0,0,0,0,0\n").is_err());
        assert!(parse_labels_csv(b"idx,dt_s,vx,vy,vz,yaw_rate\n0,0.1,NaN,0,0,0\n").is_err());
        assert_eq!(parse_labels_csv(b"idx,dt_s,vx,vy,vz,yaw_rate\n").unwrap().len(), 0);
    }

    #[test]
    fn frames_length_checked() {
        assert_eq!(decode_frames(&[0; 12], 2, 1, 2).unwrap().len(), 2);
        assert!(decode_frames(&[0; 11], 2, 1, 2).is_err());
        assert!(decode_frames(&[], 0, 1, 2).is_err());
    }
}
