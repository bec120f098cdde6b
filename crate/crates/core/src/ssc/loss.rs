//! Training losses over masked voxels: weighted cross-entropy, scene-class
//! affinity (semantic and geometric) and frustum proportion matching.

use std::f64::consts::PI;

use crate::reduce::pairwise_sum;
use crate::{Error, Result};

use super::{LogitVolume, OccupancyGrid, IGNORE};

pub const DEFAULT_FP_SECTORS: usize = 8;

/// Voxels that are valid in the logits and labeled in the ground truth.
pub fn supervised_mask(z: &LogitVolume, gt: &OccupancyGrid) -> Result<Vec<bool>> {
    if z.dims != gt.dims {
        return Err(Error::ShapeMismatch(format!(
            "logits {:?} vs ground truth {:?}",
            z.dims, gt.dims
        )));
    }
    gt.check_labels(z.classes)?;
    let mask: Vec<bool> = z.valid.iter().zip(&gt.labels).map(|(&ok, &l)| ok && l != IGNORE).collect();
    if !mask.iter().any(|&m| m) {
        return Err(Error::NoSupervisedVoxels);
    }
    Ok(mask)
}

/// `w_c = 1 / ln(1.02 + f_c)`.
pub fn inverse_log_weights(frequencies: &[f64]) -> Vec<f64> {
    frequencies.iter().map(|f| 1.0 / (1.02 + f).ln()).collect()
}

fn log_softmax_at(row: &[f64], c: usize) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = row.iter().map(|x| (x - m).exp()).sum();
    row[c] - m - s.ln()
}

/// Weighted mean negative log-likelihood of the ground-truth class over
/// supervised voxels. `weights = None` means unit weights.
pub fn ce_loss(z: &LogitVolume, gt: &OccupancyGrid, weights: Option<&[f64]>) -> Result<f64> {
    let mask = supervised_mask(z, gt)?;
    if let Some(w) = weights {
        if w.len() != z.classes {
            return Err(Error::ShapeMismatch(format!(
                "{} class weights for {} classes",
                w.len(),
                z.classes
            )));
        }
    }
    let mut num = Vec::new();
    let mut den = Vec::new();
    for v in (0..mask.len()).filter(|&v| mask[v]) {
        let c = gt.labels[v] as usize;
        let w = weights.map_or(1.0, |w| w[c]);
        num.push(-w * log_softmax_at(z.voxel(v), c));
        den.push(w);
    }
    Ok(pairwise_sum(&num) / pairwise_sum(&den))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalMode {
    /// One term per class.
    Sem,
    /// Two terms: empty (class 0) and occupied (any other class).
    Geo,
}

/// Scene-class affinity loss.
///
/// For each class present in the ground truth, soft precision, recall and
/// specificity are formed from softmax probabilities; the class loss is the
/// negative sum of their logs, skipping ratios whose denominator is zero.
/// The result is the mean over present classes.
pub fn scal_loss(z: &LogitVolume, gt: &OccupancyGrid, mode: ScalMode) -> Result<f64> {
    let mask = supervised_mask(z, gt)?;
    let voxels: Vec<usize> = (0..mask.len()).filter(|&v| mask[v]).collect();
    let probs: Vec<Vec<f64>> = voxels.iter().map(|&v| z.probs(v)).collect();
    let labels: Vec<usize> = voxels.iter().map(|&v| gt.labels[v] as usize).collect();
    let groups = match mode {
        ScalMode::Sem => z.classes,
        ScalMode::Geo => 2,
    };
    let group_of = |c: usize| match mode {
        ScalMode::Sem => c,
        ScalMode::Geo => (c > 0) as usize,
    };
    let prob_of = |p: &[f64], g: usize| match mode {
        ScalMode::Sem => p[g],
        ScalMode::Geo if g == 0 => p[0],
        ScalMode::Geo => 1.0 - p[0],
    };
    let mut per_class = Vec::new();
    for g in 0..groups {
        let is_g: Vec<bool> = labels.iter().map(|&l| group_of(l) == g).collect();
        let p: Vec<f64> = probs.iter().map(|row| prob_of(row, g)).collect();
        let n_pos = is_g.iter().filter(|&&b| b).count();
        if n_pos == 0 {
            continue;
        }
        let n_neg = is_g.len() - n_pos;
        let tp: Vec<f64> = p.iter().zip(&is_g).map(|(&x, &b)| if b { x } else { 0.0 }).collect();
        let tp = pairwise_sum(&tp);
        let p_sum = pairwise_sum(&p);
        let mut loss = 0.0;
        if p_sum > 0.0 {
            loss -= (tp / p_sum).ln();
        }
        loss -= (tp / n_pos as f64).ln();
        if n_neg > 0 {
            let tn: Vec<f64> = p.iter().zip(&is_g).map(|(&x, &b)| if b { 0.0 } else { 1.0 - x }).collect();
            loss -= (pairwise_sum(&tn) / n_neg as f64).ln();
        }
        per_class.push(loss);
    }
    Ok(pairwise_sum(&per_class) / per_class.len() as f64)
}

/// Azimuthal sector of grid column `(x, y)` about the grid center.
fn sector_of(x: usize, y: usize, dims: [usize; 3], sectors: usize) -> usize {
    let dx = x as f64 + 0.5 - dims[0] as f64 / 2.0;
    let dy = y as f64 + 0.5 - dims[1] as f64 / 2.0;
    let t = (dy.atan2(dx) + PI) / (2.0 * PI) * sectors as f64;
    (t.floor() as usize).min(sectors - 1)
}

/// Mean over non-empty azimuthal sectors of `KL(q ‖ p)`, with `q` the
/// ground-truth class proportions and `p` the mean predicted distribution.
pub fn fp_loss(z: &LogitVolume, gt: &OccupancyGrid, sectors: usize) -> Result<f64> {
    if sectors == 0 {
        return Err(Error::InvalidArgument("frustum sector count must be >= 1".into()));
    }
    let mask = supervised_mask(z, gt)?;
    let [nx, ny, nz] = z.dims;
    let c = z.classes;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); sectors];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let v = (k * ny + j) * nx + i;
                if mask[v] {
                    members[sector_of(i, j, z.dims, sectors)].push(v);
                }
            }
        }
    }
    let mut kls = Vec::new();
    for vox in members.iter().filter(|m| !m.is_empty()) {
        let n = vox.len() as f64;
        let probs: Vec<Vec<f64>> = vox.iter().map(|&v| z.probs(v)).collect();
        let mut kl = Vec::new();
        for class in 0..c {
            let count = vox.iter().filter(|&&v| gt.labels[v] as usize == class).count();
            if count == 0 {
                continue;
            }
            let q = count as f64 / n;
            let col: Vec<f64> = probs.iter().map(|p| p[class]).collect();
            let p = pairwise_sum(&col) / n;
            kl.push(q * (q / p).ln());
        }
        kls.push(pairwise_sum(&kl));
    }
    Ok(pairwise_sum(&kls) / kls.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub class_weights: Option<Vec<f64>>,
    pub fp_sectors: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            class_weights: None,
            fp_sectors: DEFAULT_FP_SECTORS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub scal_sem: f64,
    pub scal_geo: f64,
    pub fp: f64,
    pub total: f64,
}

/// Unit-weight sum of cross-entropy, both affinity terms and the frustum term.
pub fn total_loss(z: &LogitVolume, gt: &OccupancyGrid, config: &LossConfig) -> Result<LossBreakdown> {
    let ce = ce_loss(z, gt, config.class_weights.as_deref())?;
    let scal_sem = scal_loss(z, gt, ScalMode::Sem)?;
    let scal_geo = scal_loss(z, gt, ScalMode::Geo)?;
    let fp = fp_loss(z, gt, config.fp_sectors)?;
    Ok(LossBreakdown {
        ce,
        scal_sem,
        scal_geo,
        fp,
        total: ce + scal_sem + scal_geo + fp,
    })
}
