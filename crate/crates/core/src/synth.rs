//! Synthetic voxel worlds and an ideal equirectangular renderer.
//!
//! Each occupied voxel shows its class's palette vector, so a rendered
//! plane is a stand-in for encoder features with known ground truth.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bigrid::CartesianGridSpec;
use crate::camera::{Calibration, CameraModel, Pose, SphericalAngles, View};
use crate::lifting::FeaturePlane;
use crate::ssc::{OccupancyGrid, IGNORE};
use crate::unwrap::ImagePlane;
use crate::{Error, Result};

/// Classes in fixtures, including class 0 (empty).
pub const NUM_CLASSES: usize = 6;
/// Feature channels of the palette.
pub const FEATURE_CHANNELS: usize = 4;

pub const FLOOR: u8 = 3;
pub const WALL: u8 = 4;

/// Palette rows: zeros for empty, one-hot for classes 1–4, flat 0.5 for class 5.
pub fn default_palette() -> Vec<Vec<f32>> {
    (0..NUM_CLASSES)
        .map(|c| match c {
            0 => vec![0.0; FEATURE_CHANNELS],
            1..=4 => (0..FEATURE_CHANNELS).map(|i| if i == c - 1 { 1.0 } else { 0.0 }).collect(),
            _ => vec![0.5; FEATURE_CHANNELS],
        })
        .collect()
}

/// 32×32×8 grid of 0.4 m voxels centered horizontally on the camera, from
/// 1.2 m below to 2.0 m above it.
pub fn fixture_grid() -> CartesianGridSpec {
    CartesianGridSpec {
        nx: 32,
        ny: 32,
        nz: 8,
        x0: -6.4,
        y0: -6.4,
        z0: -1.2,
        dx: 0.4,
        dy: 0.4,
        dz: 0.4,
    }
}

/// PAL-like camera used with fixtures: cubic radial profile, 512² raw image,
/// incidence range `[0.35, 1.92]` rad.
pub fn default_camera() -> CameraModel {
    CameraModel::new(default_calibration()).expect("fixture calibration is valid")
}

pub fn default_calibration() -> Calibration {
    Calibration {
        a: vec![0.0, 250.0, -8.0, 1.5],
        u0: 256.0,
        v0: 256.0,
        affine: [0.45, 0.0, 0.0, 0.45],
        theta_min: 0.35,
        theta_max: 1.92,
        w_raw: 512,
        h_raw: 512,
        v_flip: false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub grid: CartesianGridSpec,
    pub occupancy: OccupancyGrid,
    /// Row `c` is the feature vector of class `c`.
    pub palette: Vec<Vec<f32>>,
    /// Grid frame to camera frame.
    pub pose: Pose,
}

impl SynthScene {
    pub fn empty(grid: CartesianGridSpec) -> Self {
        Self {
            grid,
            occupancy: OccupancyGrid::filled(grid.dims(), 0),
            palette: default_palette(),
            pose: Pose::identity(),
        }
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, class: u8) {
        let v = self.grid.index(i, j, k);
        self.occupancy.labels[v] = class;
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.labels.iter().filter(|&&l| is_occupied(l)).count()
    }

    pub fn channels(&self) -> usize {
        self.palette.first().map_or(0, Vec::len)
    }

    /// First occupied voxel along the grid-frame ray `origin + t·dir`,
    /// marching at a quarter of the smallest voxel edge up to `t_max`.
    pub fn first_hit(&self, origin: [f64; 3], dir: [f64; 3], t_max: f64) -> Option<usize> {
        let g = &self.grid;
        let step = g.dx.min(g.dy).min(g.dz) / 4.0;
        let n = (t_max / step).ceil() as usize;
        for s in 0..=n {
            let t = s as f64 * step;
            let p = [origin[0] + t * dir[0], origin[1] + t * dir[1], origin[2] + t * dir[2]];
            if let Some((i, j, k)) = g.locate(p) {
                let v = g.index(i, j, k);
                if is_occupied(self.occupancy.labels[v]) {
                    return Some(v);
                }
            }
        }
        None
    }

    /// Distance from the camera to the farthest grid corner.
    fn max_range(&self) -> f64 {
        let g = &self.grid;
        let c = self.pose.camera_center();
        let e = g.extent();
        let mut best = 0.0f64;
        for cx in [g.x0, g.x0 + e[0]] {
            for cy in [g.y0, g.y0 + e[1]] {
                for cz in [g.z0, g.z0 + e[2]] {
                    best = best.max(((cx - c[0]).powi(2) + (cy - c[1]).powi(2) + (cz - c[2]).powi(2)).sqrt());
                }
            }
        }
        best
    }

    /// Occupied voxels that are the first hit along the ray from the camera
    /// to their own centroid and lie inside the lens's field of view.
    pub fn visible_surface_voxels(&self, model: &CameraModel) -> Vec<usize> {
        let origin = self.pose.camera_center();
        let g = &self.grid;
        let centroids = g.centroids();
        (0..g.voxel_count())
            .into_par_iter()
            .filter(|&v| is_occupied(self.occupancy.labels[v]))
            .filter(|&v| {
                let c = centroids[v];
                let d = [c[0] - origin[0], c[1] - origin[1], c[2] - origin[2]];
                let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                if len < 1e-9 {
                    return false;
                }
                let Some(angles) = SphericalAngles::of_point(self.pose.apply(c)) else {
                    return false;
                };
                if !model.in_range(angles.incidence()) {
                    return false;
                }
                let dir = [d[0] / len, d[1] / len, d[2] / len];
                self.first_hit(origin, dir, len) == Some(v)
            })
            .collect()
    }
}

fn is_occupied(label: u8) -> bool {
    label != 0 && label != IGNORE
}

/// Renders the palette of the first occupied voxel along each pixel's ray
/// (zeros where the ray escapes). Rays follow the model's equirectangular
/// row orientation; every pixel is valid.
pub fn render_equi(scene: &SynthScene, model: &CameraModel, width: usize, height: usize) -> FeaturePlane {
    let c = scene.channels();
    let origin = scene.pose.camera_center();
    let t_max = scene.max_range() + scene.grid.dx;
    let mut data = vec![0.0f32; width * height * c];
    data.par_chunks_mut(width * c).enumerate().for_each(|(y, row)| {
        for x in 0..width {
            let a = model.equi_angles(x as f64, y as f64, width, height);
            let (sp, cp) = a.phi.sin_cos();
            let (st, ct) = a.theta.sin_cos();
            let dir = scene.pose.rotate_inverse([ct * cp, ct * sp, st]);
            if let Some(v) = scene.first_hit(origin, dir, t_max) {
                let class = scene.occupancy.labels[v] as usize;
                row[x * c..(x + 1) * c].copy_from_slice(&scene.palette[class]);
            }
        }
    });
    let image = ImagePlane::new(width, height, c, data).expect("plane dims are consistent");
    FeaturePlane::new(1, View::Equi, image).expect("non-empty plane")
}

/// Renders the raw annulus image at the model's raw size: each pixel is
/// inverted to its ray and marched like [`render_equi`]. Pixels outside the
/// field of view are zero and masked out.
pub fn render_raw(scene: &SynthScene, model: &CameraModel) -> ImagePlane {
    let (width, height) = model.raw_size();
    let c = scene.channels();
    let origin = scene.pose.camera_center();
    let t_max = scene.max_range() + scene.grid.dx;
    let mut data = vec![0.0f32; width * height * c];
    let mut mask = vec![false; width * height];
    data.par_chunks_mut(width * c)
        .zip(mask.par_chunks_mut(width))
        .enumerate()
        .for_each(|(y, (row, ok))| {
            for x in 0..width {
                let Ok(a) = model.raw_to_angles(x as f64, y as f64) else {
                    continue;
                };
                if !model.in_range(a.incidence()) {
                    continue;
                }
                ok[x] = true;
                let (sp, cp) = a.phi.sin_cos();
                let (st, ct) = a.theta.sin_cos();
                let dir = scene.pose.rotate_inverse([ct * cp, ct * sp, st]);
                if let Some(v) = scene.first_hit(origin, dir, t_max) {
                    let class = scene.occupancy.labels[v] as usize;
                    row[x * c..(x + 1) * c].copy_from_slice(&scene.palette[class]);
                }
            }
        });
    let mut img = ImagePlane::new(width, height, c, data).expect("plane dims are consistent");
    img.mask = Some(mask);
    img
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Corridor,
    Ring,
    Clutter,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corridor" => Ok(Preset::Corridor),
            "ring" => Ok(Preset::Ring),
            "clutter" => Ok(Preset::Clutter),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Corridor => "corridor",
            Preset::Ring => "ring",
            Preset::Clutter => "clutter",
        }
    }
}

/// Wall height of the corridor preset for `seed`.
pub fn corridor_height(seed: u64) -> usize {
    4 + (seed % 4) as usize
}

/// Builds a deterministic scene on [`fixture_grid`] with an identity pose.
///
/// - `corridor`: walls (class 4) along rows `j = 10` and `j = 21`, all `i`,
///   `k < 4 + seed % 4`; floor (class 3) at `k = 0` for `j` in `11..=20`.
/// - `ring`: voxels whose centroid lies at horizontal radius in
///   `[R, R + 0.8)` m, `R = 3.0 + 0.4·(seed % 3)`, for `k < 3 + seed % 4`,
///   class `1 + k % 5`. Invariant under 90° rotations of the grid.
/// - `clutter`: floor (class 3) at `k = 0` plus `6 + seed % 5` random boxes
///   (classes 1, 2, 4, 5) drawn from a ChaCha8 stream, kept clear of the
///   camera column.
pub fn make_fixture(seed: u64, preset: Preset) -> SynthScene {
    let grid = fixture_grid();
    let mut s = SynthScene::empty(grid);
    match preset {
        Preset::Corridor => {
            let h = corridor_height(seed);
            for i in 0..grid.nx {
                for k in 0..h {
                    s.set(i, 10, k, WALL);
                    s.set(i, 21, k, WALL);
                }
                for j in 11..=20 {
                    s.set(i, j, 0, FLOOR);
                }
            }
        }
        Preset::Ring => {
            let r0 = 3.0 + 0.4 * (seed % 3) as f64;
            let h = 3 + (seed % 4) as usize;
            for k in 0..h {
                for j in 0..grid.ny {
                    for i in 0..grid.nx {
                        let c = grid.centroid(i, j, k);
                        let r = c[0].hypot(c[1]);
                        if r >= r0 && r < r0 + 0.8 {
                            s.set(i, j, k, 1 + (k % 5) as u8);
                        }
                    }
                }
            }
        }
        Preset::Clutter => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    s.set(i, j, 0, FLOOR);
                }
            }
            let boxes = 6 + (seed % 5) as usize;
            let classes = [1u8, 2, 4, 5];
            let mut placed = 0;
            while placed < boxes {
                let (w, d, h) = (rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=4));
                let i0 = rng.gen_range(0..grid.nx - w);
                let j0 = rng.gen_range(0..grid.ny - d);
                let class = classes[rng.gen_range(0..classes.len())];
                // keep the 4×4 column around the camera free
                let clear = |a: usize, n: usize| a + n <= 14 || a >= 18;
                if !clear(i0, w) && !clear(j0, d) {
                    continue;
                }
                for k in 1..=h {
                    for j in j0..j0 + d {
                        for i in i0..i0 + w {
                            s.set(i, j, k, class);
                        }
                    }
                }
                placed += 1;
            }
        }
    }
    s
}
