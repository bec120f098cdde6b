//! View-to-volume feature lifting.
//!
//! Every voxel centroid is projected into a feature plane, optionally shifted
//! by a global gait displacement offset, and bilinearly sampled. Per-scale
//! volumes are then merged with per-voxel softmax weights.

use rayon::prelude::*;

use crate::bigrid::GridSpec;
use crate::camera::{CameraModel, Pose, SphericalAngles, View};
use crate::ptns::{self, Tensor};
use crate::reduce;
use crate::sampling::{self, Wrap};
use crate::unwrap::ImagePlane;
use crate::{Error, Result};

/// Feature map of one view at stride `scale` relative to the base image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePlane {
    pub scale: u32,
    pub view: View,
    pub image: ImagePlane,
}

impl FeaturePlane {
    pub fn new(scale: u32, view: View, image: ImagePlane) -> Result<Self> {
        if scale == 0 {
            return Err(Error::InvalidArgument("feature scale must be >= 1".into()));
        }
        if image.width == 0 || image.height == 0 || image.channels == 0 {
            return Err(Error::DimMismatch("feature plane must be non-empty".into()));
        }
        Ok(Self { scale, view, image })
    }

    pub fn channels(&self) -> usize {
        self.image.channels
    }

    fn wrap(&self) -> Wrap {
        match self.view {
            View::Equi => Wrap::Horizontal,
            View::Raw => Wrap::None,
        }
    }
}

/// Per-voxel features on a grid. `data[v * channels + c]`, with `v` the
/// grid's flat voxel index. Invalid voxels hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVolume {
    pub grid: GridSpec,
    pub channels: usize,
    pub data: Vec<f64>,
    pub valid: Vec<bool>,
}

impl FeatureVolume {
    pub fn zeros(grid: GridSpec, channels: usize) -> Self {
        let n = grid.voxel_count();
        Self {
            grid,
            channels,
            data: vec![0.0; n * channels],
            valid: vec![false; n],
        }
    }

    pub fn new(grid: GridSpec, channels: usize, data: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        let n = grid.voxel_count();
        if data.len() != n * channels || valid.len() != n {
            return Err(Error::DimMismatch(format!(
                "volume of {n} voxels x {channels} channels got {} values and {} flags",
                data.len(),
                valid.len()
            )));
        }
        Ok(Self {
            grid,
            channels,
            data,
            valid,
        })
    }

    pub fn voxel_count(&self) -> usize {
        self.valid.len()
    }

    pub fn voxel(&self, v: usize) -> &[f64] {
        &self.data[v * self.channels..(v + 1) * self.channels]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Shape of the PTNS form: slowest axis first, channels last.
    pub fn tensor_dims(&self) -> Vec<usize> {
        let [n0, n1, n2] = self.grid.dims();
        vec![n2, n1, n0, self.channels]
    }

    pub fn to_tensor(&self) -> Tensor {
        let data = self.data.iter().map(|&v| v as f32).collect();
        Tensor::f32(self.tensor_dims(), data).expect("volume dims are consistent")
    }

    pub fn mask_tensor(&self) -> Tensor {
        let [n0, n1, n2] = self.grid.dims();
        Tensor::u8(vec![n2, n1, n0], ptns::mask_to_u8(&self.valid)).expect("mask dims are consistent")
    }

    /// Rebuilds a volume from its PTNS form. Without a mask every voxel is valid.
    pub fn from_tensors(grid: GridSpec, data: &Tensor, mask: Option<&Tensor>) -> Result<Self> {
        let [n0, n1, n2] = grid.dims();
        if data.rank() != 4 || data.dims[..3] != [n2, n1, n0] {
            return Err(Error::GridMismatch(format!(
                "volume tensor {:?} does not fit grid {:?}",
                data.dims,
                [n2, n1, n0]
            )));
        }
        let values = data
            .as_f32()
            .ok_or_else(|| Error::InvalidArgument("volume tensor must be f32".into()))?;
        let valid = match mask {
            Some(m) => {
                if m.dims != [n2, n1, n0] {
                    return Err(Error::GridMismatch(format!("mask tensor {:?} does not fit grid", m.dims)));
                }
                let v = m
                    .to_u32()
                    .ok_or_else(|| Error::InvalidArgument("mask tensor must be integer".into()))?;
                v.into_iter().map(|x| x != 0).collect()
            }
            None => vec![true; n0 * n1 * n2],
        };
        Self::new(grid, data.dims[3], values.iter().map(|&v| v as f64).collect(), valid)
    }
}

/// Linear head predicting a global pixel offset from pooled features.
#[derive(Debug, Clone, PartialEq)]
pub struct GdcHead {
    /// `channels × 2` weights, row `c` = `(w_x, w_y)` for channel `c`.
    pub weights: Vec<[f64; 2]>,
    pub bias: [f64; 2],
}

impl GdcHead {
    pub fn zero_init(channels: usize) -> Self {
        Self {
            weights: vec![[0.0; 2]; channels],
            bias: [0.0; 2],
        }
    }

    pub fn channels(&self) -> usize {
        self.weights.len()
    }

    /// From a PTNS pair: weights `[C, 2]` and bias `[2]`.
    pub fn from_tensors(weights: &Tensor, bias: &Tensor) -> Result<Self> {
        let w = weights
            .as_f32()
            .filter(|_| weights.rank() == 2 && weights.dims[1] == 2)
            .ok_or_else(|| Error::InvalidArgument(format!("GDC weights must be f32 [C, 2], got {:?}", weights.dims)))?;
        let b = bias
            .as_f32()
            .filter(|b| b.len() == 2)
            .ok_or_else(|| Error::InvalidArgument(format!("GDC bias must be f32 [2], got {:?}", bias.dims)))?;
        Ok(Self {
            weights: w.chunks_exact(2).map(|r| [r[0] as f64, r[1] as f64]).collect(),
            bias: [b[0] as f64, b[1] as f64],
        })
    }
}

/// Per-channel mean over the plane's valid pixels.
pub fn global_average_pool(plane: &FeaturePlane) -> Result<Vec<f64>> {
    let img = &plane.image;
    let c = img.channels;
    let valid: Vec<usize> = (0..img.width * img.height)
        .filter(|&i| img.mask.as_ref().is_none_or(|m| m[i]))
        .collect();
    if valid.is_empty() {
        return Err(Error::EmptyValidRegion);
    }
    Ok((0..c)
        .map(|ch| {
            let vals: Vec<f64> = valid.iter().map(|&i| img.data[i * c + ch] as f64).collect();
            reduce::pairwise_mean(&vals)
        })
        .collect())
}

/// Global pixel offset `(dx, dy)` for one plane: head weights applied to the
/// plane's global average pool, plus bias.
pub fn gdc_offset(plane: &FeaturePlane, head: &GdcHead) -> Result<(f64, f64)> {
    if head.channels() != plane.channels() {
        return Err(Error::DimMismatch(format!(
            "GDC head has {} channels, plane has {}",
            head.channels(),
            plane.channels()
        )));
    }
    let gap = global_average_pool(plane)?;
    let mut d = head.bias;
    for (g, w) in gap.iter().zip(&head.weights) {
        d[0] += w[0] * g;
        d[1] += w[1] * g;
    }
    Ok((d[0], d[1]))
}

/// A projected sample location on a feature plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneCoord {
    pub u: f64,
    pub v: f64,
    pub valid: bool,
}

/// Adds `delta` to every coordinate and re-checks that the bilinear
/// footprint still lies on a `width × height` plane. Out-of-bounds samples
/// become invalid; they are never clamped.
pub fn apply_gdc(coords: &[PlaneCoord], delta: (f64, f64), width: usize, height: usize, wrap: Wrap) -> Vec<PlaneCoord> {
    coords
        .iter()
        .map(|c| {
            let (u, v) = (c.u + delta.0, c.v + delta.1);
            PlaneCoord {
                u,
                v,
                valid: c.valid && sampling::footprint(u, v, width, height, wrap).is_some(),
            }
        })
        .collect()
}

/// Plane coordinates of every voxel centroid of `grid`, before any offset.
///
/// Equirectangular planes are addressed directly at their own resolution;
/// raw planes are projected at the calibrated raw size and scaled down.
/// A polar grid seen from a camera on its axis uses the closed form
/// `u = (q + ½)·W/nphi`, which keeps azimuth bins locked to plane columns.
pub fn project_centroids(grid: &GridSpec, plane: &FeaturePlane, model: &CameraModel, pose: &Pose) -> Vec<PlaneCoord> {
    let (w, h) = (plane.image.width, plane.image.height);
    let invalid = PlaneCoord {
        u: f64::NAN,
        v: f64::NAN,
        valid: false,
    };
    if let (GridSpec::Polar(po), View::Equi) = (grid, plane.view) {
        if pose.is_axis_aligned() {
            let tz = pose.translation[2];
            let mut out = Vec::with_capacity(po.voxel_count());
            for k in 0..po.nz {
                let z = po.z_center(k) + tz;
                for q in 0..po.nphi {
                    let u = (q as f64 + 0.5) * w as f64 / po.nphi as f64;
                    let phi = po.azimuth_center(q);
                    for p in 0..po.nr {
                        let theta = z.atan2(po.radius_center(p));
                        let angles = SphericalAngles { phi, theta };
                        if !model.in_range(angles.incidence()) {
                            out.push(invalid);
                            continue;
                        }
                        let (_, v) = model.equi_pixel(angles, w, h);
                        out.push(PlaneCoord { u, v, valid: true });
                    }
                }
            }
            return out;
        }
    }
    let (raw_w, raw_h) = model.raw_size();
    grid.centroids()
        .par_iter()
        .map(|&c| {
            let p = pose.apply(c);
            let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            if !(norm >= 1e-9) {
                return invalid;
            }
            let angles = SphericalAngles::of_point(p).expect("nonzero point");
            if !model.in_range(angles.incidence()) {
                return invalid;
            }
            match plane.view {
                View::Equi => {
                    let (u, v) = model.equi_pixel(angles, w, h);
                    PlaneCoord { u, v, valid: true }
                }
                View::Raw => {
                    let pr = model.project_angles(angles, View::Raw, raw_w, raw_h);
                    PlaneCoord {
                        u: pr.u * w as f64 / raw_w as f64,
                        v: pr.v * h as f64 / raw_h as f64,
                        valid: true,
                    }
                }
            }
        })
        .collect()
}

/// Lifts `plane` onto every voxel of `grid`.
///
/// `delta` is the plane's gait displacement offset; `None` samples at the
/// projected coordinates as they are. A voxel is valid when its centroid is
/// inside the lens's field of view and the (shifted) bilinear footprint lies
/// on valid plane pixels. Equirectangular planes wrap horizontally.
pub fn lift_volume(
    grid: &GridSpec,
    view: View,
    model: &CameraModel,
    pose: &Pose,
    plane: &FeaturePlane,
    delta: Option<(f64, f64)>,
) -> Result<FeatureVolume> {
    if plane.view != view {
        return Err(Error::DimMismatch(format!(
            "lifting the {view:?} view from a {:?} feature plane",
            plane.view
        )));
    }
    grid.validate()?;
    let img = &plane.image;
    let wrap = plane.wrap();
    let mut coords = project_centroids(grid, plane, model, pose);
    if let Some(d) = delta {
        coords = apply_gdc(&coords, d, img.width, img.height, wrap);
    }
    let c = img.channels;
    let mut vol = FeatureVolume::zeros(*grid, c);
    vol.data
        .par_chunks_mut(c)
        .zip(vol.valid.par_iter_mut())
        .zip(coords.par_iter())
        .for_each(|((out, ok), pc)| {
            if !pc.valid || !footprint_on_valid_pixels(img, pc.u, pc.v, wrap) {
                return;
            }
            *ok = sampling::sample_into(&img.data, img.width, img.height, c, pc.u, pc.v, wrap, out);
        });
    Ok(vol)
}

fn footprint_on_valid_pixels(img: &ImagePlane, u: f64, v: f64, wrap: Wrap) -> bool {
    let Some(fp) = sampling::footprint(u, v, img.width, img.height, wrap) else {
        return false;
    };
    match &img.mask {
        None => true,
        Some(m) => [(fp.x0, fp.y0), (fp.x1, fp.y0), (fp.x0, fp.y1), (fp.x1, fp.y1)]
            .iter()
            .all(|&(x, y)| m[y * img.width + x]),
    }
}

/// Per-voxel scale logits, `logits[v * scales + s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleWeights {
    pub scales: usize,
    pub logits: Vec<f64>,
}

impl ScaleWeights {
    pub fn uniform(voxels: usize, scales: usize) -> Self {
        Self {
            scales,
            logits: vec![0.0; voxels * scales],
        }
    }
}

/// Softmax of `logits` restricted to the entries with `valid` set; the
/// others get weight 0. Returns all zeros when nothing is valid.
pub fn convex_weights(logits: &[f64], valid: &[bool]) -> Vec<f64> {
    let m = logits
        .iter()
        .zip(valid)
        .filter(|(_, &ok)| ok)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return vec![0.0; logits.len()];
    }
    let e: Vec<f64> = logits
        .iter()
        .zip(valid)
        .map(|(&l, &ok)| if ok { (l - m).exp() } else { 0.0 })
        .collect();
    let denom = reduce::order_invariant_sum(&mut e.clone());
    e.iter().map(|x| x / denom).collect()
}

/// Convex per-voxel combination of same-grid volumes. Weights are
/// renormalized over the scales valid at each voxel; the output is valid
/// where any input is. Rounding is clamped to the inputs' per-channel range.
pub fn fuse_scales(volumes: &[FeatureVolume], weights: &ScaleWeights) -> Result<FeatureVolume> {
    let first = volumes
        .first()
        .ok_or_else(|| Error::GridMismatch("no volumes to fuse".into()))?;
    let (grid, c, n) = (first.grid, first.channels, first.voxel_count());
    if let Some(bad) = volumes.iter().find(|v| v.grid != grid || v.channels != c) {
        return Err(Error::GridMismatch(format!(
            "volume grid/channels {:?}/{} differ from {:?}/{c}",
            bad.grid.dims(),
            bad.channels,
            grid.dims()
        )));
    }
    let s = volumes.len();
    if weights.scales != s || weights.logits.len() != n * s {
        return Err(Error::GridMismatch(format!(
            "scale weights hold {} logits for {} scales, need {n} voxels x {s}",
            weights.logits.len(),
            weights.scales
        )));
    }
    let mut out = FeatureVolume::zeros(grid, c);
    out.data
        .par_chunks_mut(c)
        .zip(out.valid.par_iter_mut())
        .enumerate()
        .for_each(|(v, (dst, ok))| {
            let valid: Vec<bool> = volumes.iter().map(|vol| vol.valid[v]).collect();
            if !valid.iter().any(|&b| b) {
                return;
            }
            *ok = true;
            let alpha = convex_weights(&weights.logits[v * s..(v + 1) * s], &valid);
            for (ch, d) in dst.iter_mut().enumerate() {
                let (mut acc, mut lo, mut hi) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
                for (k, vol) in volumes.iter().enumerate() {
                    if valid[k] {
                        let x = vol.data[v * c + ch];
                        acc += alpha[k] * x;
                        lo = lo.min(x);
                        hi = hi.max(x);
                    }
                }
                *d = acc.clamp(lo, hi);
            }
        });
    Ok(out)
}
