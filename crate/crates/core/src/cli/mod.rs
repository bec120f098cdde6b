//! Argument definitions and shared file helpers for the subcommands.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use panocc::bigrid::{CartesianGridSpec, GridSpec, PolarGridSpec};
use panocc::camera::{CameraModel, Pose, View};
use panocc::ptns::{self, Tensor};
use panocc::unwrap::ImagePlane;
use panocc::{Error, Result};

pub mod bench;
pub mod eval;
pub mod fixtures;
pub mod fuse;
pub mod lift;
pub mod unwrap;
pub mod voxelize;

#[derive(Debug, Parser)]
#[command(name = "panocc", version, about = "Panoramic occupancy geometry and fusion tools")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "PANOCC_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Unwrap raw annulus images to equirectangular planes.
    Unwrap(unwrap::UnwrapArgs),
    /// Build the Cartesian-to-polar cross-index table of a grid pair.
    Voxelize(voxelize::VoxelizeArgs),
    /// Lift feature planes onto a voxel grid and fuse the scales.
    Lift(lift::LiftArgs),
    /// Inject polar features into a Cartesian volume and run the fusion block.
    Fuse(fuse::FuseArgs),
    /// Evaluate predictions (and optional logits) listed in manifests.
    Eval(eval::EvalArgs),
    /// Time the main kernels.
    Bench(bench::BenchArgs),
    /// Write a synthetic scene with its rendered planes and a manifest.
    Fixtures(fixtures::FixtureArgs),
}

/// Grid pair file; manifests are accepted too since they carry the same keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridFile {
    pub cartesian: CartesianGridSpec,
    pub polar: PolarGridSpec,
}

impl GridFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let g: GridFile = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        g.cartesian
            .validate()
            .and_then(|_| g.polar.validate())
            .map_err(|e| Error::format(path, e.to_string()))?;
        Ok(g)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GridKind {
    Cartesian,
    Polar,
}

impl GridKind {
    pub fn pick(self, g: &GridFile, level: u32) -> GridSpec {
        match self {
            GridKind::Cartesian => GridSpec::Cartesian(g.cartesian.at_level(level)),
            GridKind::Polar => GridSpec::Polar(g.polar.at_level(level)),
        }
    }
}

/// Camera placement shared by commands that project voxels.
#[derive(Debug, Clone, Args)]
pub struct PoseArgs {
    /// Rotation of the grid frame about +z into the camera frame (radians).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub yaw: f64,
    /// Translation applied after the rotation, `x,y,z` in meters.
    #[arg(long, value_delimiter = ',', num_args = 3, allow_negative_numbers = true, default_values_t = [0.0, 0.0, 0.0])]
    pub translation: Vec<f64>,
}

impl PoseArgs {
    pub fn pose(&self) -> Pose {
        Pose::from_yaw(self.yaw, [self.translation[0], self.translation[1], self.translation[2]])
    }
}

pub fn load_camera(path: &Path) -> Result<CameraModel> {
    CameraModel::load(path).map_err(|e| match e {
        Error::InvalidModel(msg) => Error::format(path, msg),
        other => other,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Reads a `[H, W, C]` (or `[H, W]`) f32/u8 tensor as an image plane.
pub fn load_plane(path: &Path, mask: Option<&Path>) -> Result<ImagePlane> {
    let t = Tensor::load(path)?;
    let (h, w, c) = match t.dims[..] {
        [h, w] => (h, w, 1),
        [h, w, c] => (h, w, c),
        _ => return Err(Error::format(path, format!("image must be [H, W, C], got {:?}", t.dims))),
    };
    let data: Vec<f32> = match (t.as_f32(), t.to_u32()) {
        (Some(v), _) => v.to_vec(),
        (None, Some(v)) => v.into_iter().map(|x| x as f32).collect(),
        _ => unreachable!("tensor is either float or integer"),
    };
    if w == 0 || h == 0 || c == 0 {
        return Err(Error::format(path, "image has an empty dimension"));
    }
    let mut img = ImagePlane::new(w, h, c, data).map_err(|e| Error::format(path, e.to_string()))?;
    if let Some(mp) = mask {
        let m = Tensor::load(mp)?;
        if m.dims != [h, w] {
            return Err(Error::format(mp, format!("mask must be [{h}, {w}], got {:?}", m.dims)));
        }
        let v = m.to_u32().ok_or_else(|| Error::format(mp, "mask must be an integer tensor"))?;
        img.mask = Some(v.into_iter().map(|x| x != 0).collect());
    }
    Ok(img)
}

pub fn save_plane(img: &ImagePlane, path: &Path, mask: Option<&Path>) -> Result<()> {
    Tensor::f32(vec![img.height, img.width, img.channels], img.data.clone())?.save(path)?;
    if let Some(mp) = mask {
        let m = img.mask.clone().unwrap_or_else(|| vec![true; img.width * img.height]);
        Tensor::u8(vec![img.height, img.width], ptns::mask_to_u8(&m))?.save(mp)?;
    }
    Ok(())
}

/// `VIEW:SCALE:PATH` feature plane reference.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneRef {
    pub view: View,
    pub scale: u32,
    pub path: PathBuf,
}

pub fn parse_plane_ref(s: &str) -> std::result::Result<PlaneRef, String> {
    let mut parts = s.splitn(3, ':');
    let (Some(view), Some(scale), Some(path)) = (parts.next(), parts.next(), parts.next()) else {
        return Err(format!("expected VIEW:SCALE:PATH, got `{s}`"));
    };
    Ok(PlaneRef {
        view: view.parse().map_err(|e: Error| e.to_string())?,
        scale: scale.parse().map_err(|_| format!("bad scale `{scale}`"))?,
        path: path.into(),
    })
}

/// Attributes a shape or content error to the file it came from, so it is
/// reported as bad input.
pub fn in_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io { .. } | Error::Format { .. } => e,
        other => Error::format(path, other.to_string()),
    })
}
