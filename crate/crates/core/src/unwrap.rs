//! Annulus to equirectangular unwrapping.
//!
//! [`build_remap`] evaluates the calibrated inverse mapping once per output
//! pixel; [`apply_remap`] then resamples any number of images or feature
//! planes through the table.

use rayon::prelude::*;

use crate::camera::CameraModel;
use crate::sampling::{self, Wrap};
use crate::{Error, Result};

/// Interleaved multi-channel float image with an optional validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Row-major, channel-last samples: `data[(y * width + x) * channels + c]`.
    pub data: Vec<f32>,
    /// Value written to invalid pixels.
    pub fill_value: f32,
    /// Per-pixel validity, `None` meaning every pixel is valid.
    pub mask: Option<Vec<bool>>,
}

impl ImagePlane {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::DimMismatch(format!(
                "image data has {} samples, expected {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
            fill_value: 0.0,
            mask: None,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
            fill_value: 0.0,
            mask: None,
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[y * self.width + x])
    }

    pub fn valid_count(&self) -> usize {
        match &self.mask {
            Some(m) => m.iter().filter(|&&v| v).count(),
            None => self.width * self.height,
        }
    }

    /// Cyclic column shift: output column `x` takes input column `x − shift`.
    /// On an equirectangular plane this is a rotation about the vertical axis.
    pub fn roll_columns(&self, shift: isize) -> Self {
        let w = self.width as isize;
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                let src = (x as isize - shift).rem_euclid(w) as usize;
                out.pixel_mut(x, y).copy_from_slice(self.pixel(src, y));
                if let (Some(dst), Some(m)) = (out.mask.as_mut(), self.mask.as_ref()) {
                    dst[y * self.width + x] = m[y * self.width + src];
                }
            }
        }
        out
    }
}

/// Source coordinates on the raw annulus for every equirectangular pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct RemapTable {
    pub width: usize,
    pub height: usize,
    pub raw_width: usize,
    pub raw_height: usize,
    pub src_u: Vec<f64>,
    pub src_v: Vec<f64>,
    pub valid: Vec<bool>,
}

impl RemapTable {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Raw coordinate sampled by equirectangular pixel `(x, y)`, or `None` when
/// the ray is outside the lens's field of view or its bilinear footprint
/// leaves the raw image.
pub fn remap_source(x: usize, y: usize, width: usize, height: usize, model: &CameraModel) -> Option<(f64, f64)> {
    let angles = model.equi_angles(x as f64, y as f64, width, height);
    let (su, sv) = model.forward_project_raw(angles).ok()?;
    let (w_raw, h_raw) = model.raw_size();
    sampling::footprint(su, sv, w_raw, h_raw, Wrap::None).map(|_| (su, sv))
}

pub fn build_remap(width: usize, height: usize, model: &CameraModel) -> Result<RemapTable> {
    if width < 2 || height < 2 {
        return Err(Error::InvalidArgument(format!(
            "remap output must be at least 2x2, got {width}x{height}"
        )));
    }
    let n = width * height;
    let mut src_u = vec![f64::NAN; n];
    let mut src_v = vec![f64::NAN; n];
    let mut valid = vec![false; n];
    src_u
        .par_chunks_mut(width)
        .zip(src_v.par_chunks_mut(width))
        .zip(valid.par_chunks_mut(width))
        .enumerate()
        .for_each(|(y, ((us, vs), ok))| {
            for x in 0..width {
                if let Some((su, sv)) = remap_source(x, y, width, height, model) {
                    us[x] = su;
                    vs[x] = sv;
                    ok[x] = true;
                }
            }
        });
    let (raw_width, raw_height) = model.raw_size();
    Ok(RemapTable {
        width,
        height,
        raw_width,
        raw_height,
        src_u,
        src_v,
        valid,
    })
}

/// Resamples `img` (a raw annulus image) into the table's equirectangular
/// layout. Invalid pixels receive `img.fill_value` and the output mask
/// records validity. Source pixels masked out in `img` invalidate any output
/// whose footprint touches them.
pub fn apply_remap(img: &ImagePlane, table: &RemapTable) -> Result<ImagePlane> {
    if img.width != table.raw_width || img.height != table.raw_height {
        return Err(Error::DimMismatch(format!(
            "image is {}x{}, remap table expects raw {}x{}",
            img.width, img.height, table.raw_width, table.raw_height
        )));
    }
    let c = img.channels;
    let w = table.width;
    let mut data = vec![img.fill_value; w * table.height * c];
    let mut mask = vec![false; w * table.height];
    data.par_chunks_mut(w * c)
        .zip(mask.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (row, ok))| {
            let mut px = vec![0.0f64; c];
            for x in 0..w {
                let i = y * w + x;
                if !table.valid[i] {
                    continue;
                }
                let (su, sv) = (table.src_u[i], table.src_v[i]);
                if img.mask.is_some() && !footprint_valid(img, su, sv) {
                    continue;
                }
                if sampling::sample_into(&img.data, img.width, img.height, c, su, sv, Wrap::None, &mut px) {
                    for (dst, &v) in row[x * c..(x + 1) * c].iter_mut().zip(&px) {
                        *dst = v as f32;
                    }
                    ok[x] = true;
                }
            }
        });
    Ok(ImagePlane {
        width: w,
        height: table.height,
        channels: c,
        data,
        fill_value: img.fill_value,
        mask: Some(mask),
    })
}

fn footprint_valid(img: &ImagePlane, x: f64, y: f64) -> bool {
    let Some(fp) = sampling::footprint(x, y, img.width, img.height, Wrap::None) else {
        return false;
    };
    [(fp.x0, fp.y0), (fp.x1, fp.y0), (fp.x0, fp.y1), (fp.x1, fp.y1)]
        .iter()
        .all(|&(px, py)| img.is_valid(px, py))
}
