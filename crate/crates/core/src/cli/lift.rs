use std::path::PathBuf;

use clap::Args;

use panocc::lifting::{fuse_scales, gdc_offset, lift_volume, FeaturePlane, GdcHead, ScaleWeights};
use panocc::ptns::Tensor;
use panocc::{Error, Result};

use super::{in_file, load_camera, load_plane, parse_plane_ref, GridFile, GridKind, PlaneRef, PoseArgs};

#[derive(Debug, Args)]
pub struct LiftArgs {
    /// Calibration JSON.
    #[arg(long)]
    pub calib: PathBuf,
    /// Grid pair JSON (`cartesian` + `polar`); a manifest also works.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long, value_enum, default_value = "cartesian")]
    pub kind: GridKind,
    #[arg(long, default_value_t = 1)]
    pub level: u32,
    /// Feature plane `VIEW:SCALE:PATH` (view is `equi` or `raw`); repeat per scale.
    #[arg(long = "plane", required = true, value_parser = parse_plane_ref)]
    pub planes: Vec<PlaneRef>,
    /// Offset head `SCALE:WEIGHTS:BIAS` (PTNS `[C, 2]` and `[2]`); repeat per scale.
    #[arg(long = "gdc")]
    pub gdc: Vec<String>,
    /// Scale logits, PTNS f32 `[n2, n1, n0, S]`; uniform when absent.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[command(flatten)]
    pub pose: PoseArgs,
    /// Fused volume, PTNS f32 `[n2, n1, n0, C]`.
    #[arg(long)]
    pub output: PathBuf,
    /// Validity mask, PTNS u8 `[n2, n1, n0]`.
    #[arg(long)]
    pub mask_out: Option<PathBuf>,
}

fn load_gdc(spec: &str) -> Result<(u32, GdcHead)> {
    let parts: Vec<&str> = spec.splitn(3, ':').collect();
    let [scale, w, b] = parts[..] else {
        return Err(Error::InvalidArgument(format!("--gdc expects SCALE:WEIGHTS:BIAS, got `{spec}`")));
    };
    let scale = scale
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad --gdc scale `{scale}`")))?;
    let (wp, bp) = (PathBuf::from(w), PathBuf::from(b));
    let head = in_file(&wp, GdcHead::from_tensors(&Tensor::load(&wp)?, &Tensor::load(&bp)?))?;
    Ok((scale, head))
}

pub fn run(a: LiftArgs) -> Result<()> {
    let model = load_camera(&a.calib)?;
    let grids = GridFile::load(&a.grid)?;
    let grid = a.kind.pick(&grids, a.level);
    let heads = a.gdc.iter().map(|s| load_gdc(s)).collect::<Result<Vec<_>>>()?;
    let pose = a.pose.pose();

    let mut volumes = Vec::with_capacity(a.planes.len());
    for pr in &a.planes {
        let image = load_plane(&pr.path, None)?;
        let plane = in_file(&pr.path, FeaturePlane::new(pr.scale, pr.view, image))?;
        let delta = match heads.iter().find(|(s, _)| *s == pr.scale) {
            Some((_, head)) => Some(in_file(&pr.path, gdc_offset(&plane, head))?),
            None => None,
        };
        volumes.push(lift_volume(&grid, pr.view, &model, &pose, &plane, delta)?);
    }

    let n = grid.voxel_count();
    let weights = match &a.weights {
        None => ScaleWeights::uniform(n, volumes.len()),
        Some(p) => {
            let t = Tensor::load(p)?;
            let [n0, n1, n2] = grid.dims();
            if t.dims != [n2, n1, n0, volumes.len()] {
                return Err(Error::format(
                    p,
                    format!("scale logits must be {:?}, got {:?}", [n2, n1, n0, volumes.len()], t.dims),
                ));
            }
            let v = t.as_f32().ok_or_else(|| Error::format(p, "scale logits must be f32"))?;
            ScaleWeights {
                scales: volumes.len(),
                logits: v.iter().map(|&x| x as f64).collect(),
            }
        }
    };
    let fused = fuse_scales(&volumes, &weights)?;
    fused.to_tensor().save(&a.output)?;
    if let Some(p) = &a.mask_out {
        fused.mask_tensor().save(p)?;
    }
    println!(
        "{}: {:?} x {} channels, {}/{} voxels valid",
        a.output.display(),
        grid.dims(),
        fused.channels,
        fused.valid_count(),
        n
    );
    Ok(())
}
