use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use panocc::manifest::{Frame, Manifest};
use panocc::ptns::Tensor;
use panocc::ssc::{
    argmax_labels, inverse_log_weights, total_loss, ConfusionCounts, LogitVolume, LossBreakdown, LossConfig,
    OccupancyGrid, IGNORE,
};
use panocc::{Error, Result};

use super::{in_file, write_json};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset manifest; repeat to evaluate several splits.
    #[arg(long = "manifest", required = true)]
    pub manifests: Vec<PathBuf>,
    /// Directory for `<name>_<split>.json` and `.txt` reports.
    #[arg(long, default_value = ".")]
    pub output_dir: PathBuf,
    /// Angular sectors of the frustum term.
    #[arg(long, default_value_t = panocc::ssc::DEFAULT_FP_SECTORS)]
    pub fp_sectors: usize,
}

#[derive(Debug, Serialize)]
struct NamedIou {
    class: usize,
    name: String,
    iou: f64,
    present: bool,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    name: String,
    split: String,
    frames: usize,
    miou: f64,
    iou_geo: f64,
    precision: f64,
    recall: f64,
    per_class: Vec<NamedIou>,
    /// Mean loss terms over frames, keyed by decoder stride.
    losses: BTreeMap<u32, LossBreakdown>,
}

fn load_grid(m: &Manifest, p: &Path) -> Result<OccupancyGrid> {
    let full = m.resolve(p);
    let t = Tensor::load(&full)?;
    let g = in_file(&full, OccupancyGrid::from_tensor(&t))?;
    in_file(&full, g.check_labels(m.classes.len()))?;
    Ok(g)
}

fn load_mask(m: &Manifest, p: &Path, dims: [usize; 3]) -> Result<Vec<bool>> {
    let full = m.resolve(p);
    let t = Tensor::load(&full)?;
    if t.dims != [dims[2], dims[1], dims[0]] {
        return Err(Error::format(&full, format!("mask {:?} does not match labels {:?}", t.dims, dims)));
    }
    let v = t.to_u32().ok_or_else(|| Error::format(&full, "mask must be an integer tensor"))?;
    Ok(v.into_iter().map(|x| x != 0).collect())
}

fn load_logits(m: &Manifest, p: &Path, mask: Option<&Path>) -> Result<LogitVolume> {
    let full = m.resolve(p);
    let t = Tensor::load(&full)?;
    let mt = mask.map(|mp| Tensor::load(m.resolve(mp))).transpose()?;
    let z = in_file(&full, LogitVolume::from_tensors(&t, mt.as_ref()))?;
    if z.classes != m.classes.len() {
        return Err(Error::format(
            &full,
            format!("logits have {} classes, manifest lists {}", z.classes, m.classes.len()),
        ));
    }
    Ok(z)
}

fn check_dims(path: &Path, got: [usize; 3], want: [usize; 3]) -> Result<()> {
    if got != want {
        return Err(Error::format(path, format!("grid dims {got:?} differ from ground truth {want:?}")));
    }
    Ok(())
}

struct FrameResult {
    losses: Vec<(u32, LossBreakdown)>,
}

fn eval_frame(m: &Manifest, f: &Frame, acc: &mut ConfusionCounts, cfg: &LossConfig) -> Result<FrameResult> {
    let gt_path = f
        .gt
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("frame `{}` has no ground truth", f.id)))?;
    let mut gt = load_grid(m, gt_path)?;
    if let Some(mp) = &f.mask {
        let mask = load_mask(m, mp, gt.dims)?;
        for (l, ok) in gt.labels.iter_mut().zip(mask) {
            if !ok {
                *l = IGNORE;
            }
        }
    }

    let mut losses = Vec::new();
    let mut stride1: Option<LogitVolume> = None;
    for lr in &f.logits {
        let z = load_logits(m, &lr.path, lr.mask.as_deref())?;
        let target = match &lr.gt {
            Some(p) => load_grid(m, p)?,
            None if lr.stride == 1 => gt.clone(),
            None => {
                return Err(Error::InvalidArgument(format!(
                    "frame `{}`: stride-{} logits need their own gt",
                    f.id, lr.stride
                )))
            }
        };
        check_dims(&m.resolve(&lr.path), z.dims, target.dims)?;
        losses.push((lr.stride, total_loss(&z, &target, cfg)?));
        if lr.stride == 1 {
            stride1 = Some(z);
        }
    }

    let pred = match (&f.prediction, stride1) {
        (Some(p), _) => load_grid(m, p)?,
        (None, Some(z)) => argmax_labels(&z),
        (None, None) => {
            return Err(Error::InvalidArgument(format!(
                "frame `{}` has neither a prediction nor stride-1 logits",
                f.id
            )))
        }
    };
    let pred_path = f.prediction.as_ref().map(|p| m.resolve(p)).unwrap_or_else(|| m.resolve(gt_path));
    check_dims(&pred_path, pred.dims, gt.dims)?;
    acc.add(&pred, &gt)?;
    Ok(FrameResult { losses })
}

fn eval_manifest(path: &Path, args: &EvalArgs) -> Result<EvalReport> {
    let m = Manifest::load(path)?;
    let classes = m.classes.len();
    let cfg = LossConfig {
        class_weights: Some(inverse_log_weights(&m.class_frequencies())),
        fp_sectors: args.fp_sectors,
    };
    let mut acc = ConfusionCounts::new(classes);
    let mut sums: BTreeMap<u32, (Vec<LossBreakdown>, usize)> = BTreeMap::new();
    for f in &m.frames {
        let r = eval_frame(&m, f, &mut acc, &cfg)?;
        for (stride, l) in r.losses {
            let e = sums.entry(stride).or_default();
            e.0.push(l);
            e.1 += 1;
        }
    }
    let losses = sums
        .into_iter()
        .map(|(s, (ls, n))| {
            let mean = |g: fn(&LossBreakdown) -> f64| panocc::reduce::pairwise_sum(&ls.iter().map(g).collect::<Vec<_>>()) / n as f64;
            (
                s,
                LossBreakdown {
                    ce: mean(|l| l.ce),
                    scal_sem: mean(|l| l.scal_sem),
                    scal_geo: mean(|l| l.scal_geo),
                    fp: mean(|l| l.fp),
                    total: mean(|l| l.total),
                },
            )
        })
        .collect();
    let r = acc.report();
    let names = m.class_names();
    Ok(EvalReport {
        name: m.name.clone(),
        split: m.split.clone(),
        frames: m.frames.len(),
        miou: r.miou,
        iou_geo: r.iou_geo,
        precision: r.precision,
        recall: r.recall,
        per_class: r
            .per_class
            .iter()
            .map(|c| NamedIou {
                class: c.class,
                name: names[c.class].clone(),
                iou: c.iou,
                present: c.present,
            })
            .collect(),
        losses,
    })
}

fn report_text(r: &EvalReport) -> String {
    let mut s = format!("{} / {} ({} frames)\n", r.name, r.split, r.frames);
    s += "class            iou     present\n";
    for c in &r.per_class {
        s += &format!("{:<16} {:>6.2}  {}\n", c.name, 100.0 * c.iou, if c.present { "yes" } else { "no" });
    }
    s += &format!(
        "mIoU {:.2}  IoU {:.2}  P {:.2}  R {:.2}\n",
        100.0 * r.miou,
        100.0 * r.iou_geo,
        100.0 * r.precision,
        100.0 * r.recall
    );
    for (stride, l) in &r.losses {
        s += &format!(
            "loss@{stride}: ce {:.4}  scal_sem {:.4}  scal_geo {:.4}  fp {:.4}  total {:.4}\n",
            l.ce, l.scal_sem, l.scal_geo, l.fp, l.total
        );
    }
    s
}

pub fn run(a: EvalArgs) -> Result<()> {
    std::fs::create_dir_all(&a.output_dir).map_err(|e| Error::io(&a.output_dir, e))?;
    let mut rows = Vec::new();
    for mp in &a.manifests {
        let r = eval_manifest(mp, &a)?;
        let stem = if r.split.is_empty() { r.name.clone() } else { format!("{}_{}", r.name, r.split) };
        write_json(&a.output_dir.join(format!("{stem}.json")), &r)?;
        let txt = a.output_dir.join(format!("{stem}.txt"));
        std::fs::write(&txt, report_text(&r)).map_err(|e| Error::io(&txt, e))?;
        rows.push(r);
    }
    println!("{:<24} {:>7} {:>7} {:>7} {:>7}", "dataset", "mIoU", "IoU", "P", "R");
    for r in &rows {
        println!(
            "{:<24} {:>7.2} {:>7.2} {:>7.2} {:>7.2}",
            format!("{}/{}", r.name, r.split),
            100.0 * r.miou,
            100.0 * r.iou_geo,
            100.0 * r.precision,
            100.0 * r.recall
        );
    }
    Ok(())
}
