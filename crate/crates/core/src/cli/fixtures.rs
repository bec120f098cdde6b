use std::path::{Path, PathBuf};

use clap::Args;

use panocc::amoe3d::{FusionParams, DEFAULT_EXPERTS, DEFAULT_GATE_KERNEL};
use panocc::camera::View;
use panocc::manifest::{ClassInfo, FeatureRef, Frame, LogitRef, Manifest};
use panocc::ssc::LogitVolume;
use panocc::synth::{self, Preset, NUM_CLASSES};
use panocc::{Error, Result};

use super::{save_plane, GridFile};

const CLASS_NAMES: [&str; NUM_CLASSES] = ["empty", "object", "furniture", "floor", "wall", "clutter"];

#[derive(Debug, Args)]
pub struct FixtureArgs {
    /// `corridor`, `ring` or `clutter`.
    #[arg(long)]
    pub preset: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Equirectangular render width (height is half).
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    /// Skip the raw annulus render.
    #[arg(long)]
    pub no_raw: bool,
}

fn path_in(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

pub fn run(a: FixtureArgs) -> Result<()> {
    let preset: Preset = a.preset.parse()?;
    if a.width < 2 || a.width % 2 != 0 {
        return Err(Error::InvalidArgument(format!("--width must be even and at least 2, got {}", a.width)));
    }
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let dir = &a.out_dir;
    let scene = synth::make_fixture(a.seed, preset);
    let model = synth::default_camera();

    synth::default_calibration().save(path_in(dir, "calibration.json"))?;
    let grids = GridFile {
        cartesian: scene.grid,
        polar: scene.grid.default_polar(),
    };
    grids.save(&path_in(dir, "grid.json"))?;
    scene.occupancy.to_tensor().save(path_in(dir, "gt.ptns"))?;
    scene.occupancy.to_tensor().save(path_in(dir, "pred.ptns"))?;

    let plane = synth::render_equi(&scene, &model, a.width, a.width / 2);
    save_plane(&plane.image, &path_in(dir, "equi.ptns"), None)?;
    let panorama = if a.no_raw {
        None
    } else {
        let raw = synth::render_raw(&scene, &model);
        save_plane(&raw, &path_in(dir, "raw.ptns"), Some(&path_in(dir, "raw_mask.ptns")))?;
        Some(PathBuf::from("raw.ptns"))
    };

    // Confident logits for the ground truth, so eval exercises the loss path.
    let n = scene.occupancy.voxel_count();
    let mut data = vec![0.0; n * NUM_CLASSES];
    for (v, &l) in scene.occupancy.labels.iter().enumerate() {
        data[v * NUM_CLASSES + l as usize] = 8.0;
    }
    let z = LogitVolume::new(scene.occupancy.dims, NUM_CLASSES, data, vec![true; n])?;
    z.to_tensor().save(path_in(dir, "logits.ptns"))?;

    let c = scene.channels();
    FusionParams::random(a.seed, c, c, DEFAULT_EXPERTS, DEFAULT_GATE_KERNEL).save_bundle(path_in(dir, "params"))?;

    let mut counts = [0usize; NUM_CLASSES];
    for &l in &scene.occupancy.labels {
        counts[l as usize] += 1;
    }
    let manifest = Manifest {
        name: format!("{}{}", preset.name(), a.seed),
        split: "synthetic".into(),
        cartesian: grids.cartesian,
        polar: grids.polar,
        calibration: "calibration.json".into(),
        classes: CLASS_NAMES
            .iter()
            .enumerate()
            .map(|(id, name)| ClassInfo {
                id,
                name: (*name).into(),
                frequency: counts[id] as f64 / n as f64,
            })
            .collect(),
        frames: vec![Frame {
            id: "0".into(),
            panorama,
            features: vec![FeatureRef {
                view: View::Equi,
                scale: 1,
                path: "equi.ptns".into(),
            }],
            gt: Some("gt.ptns".into()),
            mask: None,
            prediction: Some("pred.ptns".into()),
            logits: vec![LogitRef {
                stride: 1,
                path: "logits.ptns".into(),
                gt: None,
                mask: None,
            }],
        }],
        base_dir: dir.clone(),
    };
    manifest.save(path_in(dir, "manifest.json"))?;
    println!(
        "{}: {} fixture, seed {}, {} occupied voxels",
        dir.display(),
        preset.name(),
        a.seed,
        scene.occupied_count()
    );
    Ok(())
}
