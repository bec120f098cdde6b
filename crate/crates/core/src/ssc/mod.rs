//! Semantic scene completion outputs: logits, label grids, losses and metrics.
//!
//! Voxel `(x, y, z)` has flat index `(z·Y + y)·X + x`; logits are channel-last.

mod loss;
mod metrics;

pub use loss::{
    ce_loss, fp_loss, inverse_log_weights, scal_loss, supervised_mask, total_loss, LossBreakdown, LossConfig,
    ScalMode, DEFAULT_FP_SECTORS,
};
pub use metrics::{ssc_metrics, ClassIou, ConfusionCounts, SscReport};

use crate::ptns::Tensor;
use crate::{Error, Result};

/// Label for voxels excluded from supervision and evaluation.
pub const IGNORE: u8 = 255;

/// Per-voxel class scores, `data[v * classes + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVolume {
    /// `[X, Y, Z]`, fastest axis first.
    pub dims: [usize; 3],
    pub classes: usize,
    pub data: Vec<f64>,
    pub valid: Vec<bool>,
}

impl LogitVolume {
    pub fn new(dims: [usize; 3], classes: usize, data: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if classes < 2 {
            return Err(Error::ShapeMismatch(format!("need at least 2 classes, got {classes}")));
        }
        if data.len() != n * classes || valid.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "logits for {dims:?} x {classes} got {} values and {} flags",
                data.len(),
                valid.len()
            )));
        }
        Ok(Self {
            dims,
            classes,
            data,
            valid,
        })
    }

    pub fn voxel_count(&self) -> usize {
        self.valid.len()
    }

    pub fn voxel(&self, v: usize) -> &[f64] {
        &self.data[v * self.classes..(v + 1) * self.classes]
    }

    /// Softmax probabilities of voxel `v`.
    pub fn probs(&self, v: usize) -> Vec<f64> {
        let z = self.voxel(v);
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|x| x / s).collect()
    }

    /// From a rank-4 `[Z, Y, X, C]` f32 tensor and optional rank-3 mask.
    pub fn from_tensors(t: &Tensor, mask: Option<&Tensor>) -> Result<Self> {
        let values = t
            .as_f32()
            .filter(|_| t.rank() == 4)
            .ok_or_else(|| Error::InvalidArgument(format!("logits must be f32 [Z, Y, X, C], got {:?}", t.dims)))?;
        let dims = [t.dims[2], t.dims[1], t.dims[0]];
        let n: usize = dims.iter().product();
        let valid = match mask {
            None => vec![true; n],
            Some(m) => {
                if m.dims != t.dims[..3] {
                    return Err(Error::InvalidArgument(format!(
                        "mask dims {:?} do not match logits {:?}",
                        m.dims, t.dims
                    )));
                }
                m.to_u32()
                    .ok_or_else(|| Error::InvalidArgument("mask must be an integer tensor".into()))?
                    .into_iter()
                    .map(|x| x != 0)
                    .collect()
            }
        };
        Self::new(dims, t.dims[3], values.iter().map(|&x| x as f64).collect(), valid)
    }

    pub fn to_tensor(&self) -> Tensor {
        let [x, y, z] = self.dims;
        Tensor::f32(vec![z, y, x, self.classes], self.data.iter().map(|&v| v as f32).collect())
            .expect("logit dims are consistent")
    }
}

/// Per-voxel labels in `0..C` or [`IGNORE`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyGrid {
    /// `[X, Y, Z]`, fastest axis first.
    pub dims: [usize; 3],
    pub labels: Vec<u8>,
}

impl OccupancyGrid {
    pub fn new(dims: [usize; 3], labels: Vec<u8>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if labels.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "label grid {dims:?} needs {n} labels, got {}",
                labels.len()
            )));
        }
        Ok(Self { dims, labels })
    }

    pub fn filled(dims: [usize; 3], label: u8) -> Self {
        Self {
            dims,
            labels: vec![label; dims.iter().product()],
        }
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.labels[self.index(x, y, z)]
    }

    pub fn voxel_count(&self) -> usize {
        self.labels.len()
    }

    /// Checks every label is below `classes` or [`IGNORE`].
    pub fn check_labels(&self, classes: usize) -> Result<()> {
        match self.labels.iter().find(|&&l| l != IGNORE && l as usize >= classes) {
            Some(l) => Err(Error::InvalidArgument(format!(
                "label {l} outside 0..{classes} (and not {IGNORE})"
            ))),
            None => Ok(()),
        }
    }

    /// From a rank-3 `[Z, Y, X]` integer tensor.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.rank() != 3 {
            return Err(Error::InvalidArgument(format!("label grid must be rank 3, got {:?}", t.dims)));
        }
        let raw = t
            .to_u32()
            .ok_or_else(|| Error::InvalidArgument("label grid must be an integer tensor".into()))?;
        let labels = raw
            .into_iter()
            .map(|l| u8::try_from(l).map_err(|_| Error::InvalidArgument(format!("label {l} does not fit u8"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new([t.dims[2], t.dims[1], t.dims[0]], labels)
    }

    pub fn to_tensor(&self) -> Tensor {
        let [x, y, z] = self.dims;
        Tensor::u8(vec![z, y, x], self.labels.clone()).expect("grid dims are consistent")
    }
}

/// Per-voxel argmax, ties to the lowest class; invalid voxels become [`IGNORE`].
pub fn argmax_labels(z: &LogitVolume) -> OccupancyGrid {
    let labels = (0..z.voxel_count())
        .map(|v| {
            if !z.valid[v] {
                return IGNORE;
            }
            let row = z.voxel(v);
            let mut best = 0;
            for (c, &x) in row.iter().enumerate().skip(1) {
                if x > row[best] {
                    best = c;
                }
            }
            best as u8
        })
        .collect();
    OccupancyGrid {
        dims: z.dims,
        labels,
    }
}
