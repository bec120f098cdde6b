//! Dataset manifests: grids, calibration, class table and per-frame files.
//!
//! Manifests are JSON. Relative paths are resolved against the manifest's
//! directory and stored verbatim, so load → save → load is lossless.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bigrid::{CartesianGridSpec, PolarGridSpec};
use crate::camera::View;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassInfo {
    pub id: usize,
    pub name: String,
    /// Share of training voxels with this label, used for CE weights.
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRef {
    pub view: View,
    pub scale: u32,
    pub path: PathBuf,
}

/// Logits at one decoder stride, with optional stride-specific labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitRef {
    pub stride: u32,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub panorama: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub features: Vec<FeatureRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt: Option<PathBuf>,
    /// Voxel validity from lifting visibility.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub logits: Vec<LogitRef>,
}

impl Frame {
    fn paths(&self) -> impl Iterator<Item = &PathBuf> {
        self.panorama
            .iter()
            .chain(self.features.iter().map(|f| &f.path))
            .chain(self.gt.iter())
            .chain(self.mask.iter())
            .chain(self.prediction.iter())
            .chain(self.logits.iter().flat_map(|l| std::iter::once(&l.path).chain(l.gt.iter()).chain(l.mask.iter())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    #[serde(default)]
    pub split: String,
    pub cartesian: CartesianGridSpec,
    pub polar: PolarGridSpec,
    pub calibration: PathBuf,
    pub classes: Vec<ClassInfo>,
    pub frames: Vec<Frame>,
    /// Directory relative paths are resolved against; not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    /// Parses and validates a manifest, checking that every referenced file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Manifest = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate().map_err(|e| match e {
            Error::Io { .. } => e,
            other => Error::format(path, other.to_string()),
        })?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn class_frequencies(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.frequency).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.cartesian.validate()?;
        self.polar.validate()?;
        if self.classes.len() < 2 {
            return Err(Error::InvalidArgument("class table needs at least 2 classes".into()));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.id != i {
                return Err(Error::InvalidArgument(format!(
                    "class ids must be dense from 0; entry {i} has id {}",
                    c.id
                )));
            }
            if !(c.frequency >= 0.0 && c.frequency.is_finite()) {
                return Err(Error::InvalidArgument(format!("class {i} has invalid frequency {}", c.frequency)));
            }
        }
        let referenced = std::iter::once(&self.calibration).chain(self.frames.iter().flat_map(Frame::paths));
        for p in referenced {
            let full = self.resolve(p);
            if !full.is_file() {
                return Err(Error::io(
                    &full,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file not found"),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(dir: &Path) -> Manifest {
        for f in ["calib.json", "gt.ptns", "pred.ptns", "equi.ptns"] {
            std::fs::write(dir.join(f), b"x").unwrap();
        }
        let ca = CartesianGridSpec::quadocc();
        Manifest {
            name: "demo".into(),
            split: "day".into(),
            cartesian: ca,
            polar: ca.default_polar(),
            calibration: "calib.json".into(),
            classes: vec![
                ClassInfo {
                    id: 0,
                    name: "empty".into(),
                    frequency: 0.9,
                },
                ClassInfo {
                    id: 1,
                    name: "car".into(),
                    frequency: 0.1,
                },
            ],
            frames: vec![Frame {
                id: "000".into(),
                panorama: None,
                features: vec![FeatureRef {
                    view: View::Equi,
                    scale: 4,
                    path: "equi.ptns".into(),
                }],
                gt: Some("gt.ptns".into()),
                mask: None,
                prediction: Some("pred.ptns".into()),
                logits: vec![],
            }],
            base_dir: dir.to_path_buf(),
        }
    }

    #[test]
    fn load_save_load_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let m = sample(dir.path());
        let p = dir.path().join("m.json");
        m.save(&p).unwrap();
        let a = Manifest::load(&p).unwrap();
        a.save(&p).unwrap();
        let b = Manifest::load(&p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, m);
    }

    #[test]
    fn missing_files_and_sparse_ids_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = sample(dir.path());
        m.frames[0].gt = Some("nope.ptns".into());
        let p = dir.path().join("m.json");
        m.save(&p).unwrap();
        let err = Manifest::load(&p).unwrap_err();
        assert!(err.is_input_error());
        assert!(err.to_string().contains("nope.ptns"));

        let mut m = sample(dir.path());
        m.classes[1].id = 5;
        m.save(&p).unwrap();
        assert!(Manifest::load(&p).is_err());
    }
}
