//! Confusion counts and IoU-style metrics.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::{OccupancyGrid, IGNORE};

/// Class confusion matrix, `counts[gt * classes + pred]`, accumulated over
/// voxels where neither grid is [`IGNORE`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionCounts {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn add(&mut self, pred: &OccupancyGrid, gt: &OccupancyGrid) -> Result<()> {
        if pred.dims != gt.dims {
            return Err(Error::ShapeMismatch(format!(
                "prediction {:?} vs ground truth {:?}",
                pred.dims, gt.dims
            )));
        }
        pred.check_labels(self.classes)?;
        gt.check_labels(self.classes)?;
        for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
            if p != IGNORE && g != IGNORE {
                self.counts[g as usize * self.classes + p as usize] += 1;
            }
        }
        Ok(())
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn report(&self) -> SscReport {
        let c = self.classes;
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for g in 0..c {
            for p in 0..c {
                let n = self.get(g, p);
                match (g > 0, p > 0) {
                    (true, true) => tp += n,
                    (false, true) => fp += n,
                    (true, false) => fn_ += n,
                    (false, false) => {}
                }
            }
        }
        let per_class: Vec<ClassIou> = (1..c)
            .map(|k| {
                let hit = self.get(k, k);
                let gt_k: u64 = (0..c).map(|p| self.get(k, p)).sum();
                let pred_k: u64 = (0..c).map(|g| self.get(g, k)).sum();
                ClassIou {
                    class: k,
                    iou: ratio(hit, gt_k + pred_k - hit),
                    present: gt_k > 0,
                }
            })
            .collect();
        let present: Vec<f64> = per_class.iter().filter(|c| c.present).map(|c| c.iou).collect();
        let miou = if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        };
        SscReport {
            miou,
            iou_geo: ratio(tp, tp + fp + fn_),
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            per_class,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassIou {
    pub class: usize,
    pub iou: f64,
    /// Whether the class occurs in the evaluated ground truth.
    pub present: bool,
}

/// Evaluation summary. Zero denominators yield 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SscReport {
    /// Mean IoU over semantic classes present in the ground truth.
    pub miou: f64,
    /// Occupied-vs-empty IoU.
    pub iou_geo: f64,
    pub precision: f64,
    pub recall: f64,
    /// Classes `1..C`.
    pub per_class: Vec<ClassIou>,
}

impl SscReport {
    /// Plain-text table; `names[c]` labels class `c` when given.
    pub fn to_text(&self, names: Option<&[String]>) -> String {
        let mut s = String::from("class            iou     present\n");
        for c in &self.per_class {
            let name = names
                .and_then(|n| n.get(c.class))
                .cloned()
                .unwrap_or_else(|| format!("class{}", c.class));
            s += &format!("{name:<16} {:>6.2}  {}\n", 100.0 * c.iou, if c.present { "yes" } else { "no" });
        }
        s += &format!(
            "mIoU {:.2}  IoU {:.2}  P {:.2}  R {:.2}\n",
            100.0 * self.miou,
            100.0 * self.iou_geo,
            100.0 * self.precision,
            100.0 * self.recall
        );
        s
    }
}

/// Metrics of a single prediction against its ground truth.
pub fn ssc_metrics(pred: &OccupancyGrid, gt: &OccupancyGrid, classes: usize) -> Result<SscReport> {
    let mut acc = ConfusionCounts::new(classes);
    acc.add(pred, gt)?;
    Ok(acc.report())
}
