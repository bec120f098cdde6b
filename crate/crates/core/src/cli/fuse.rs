use std::path::PathBuf;

use clap::Args;

use panocc::amoe3d::{amoe3d_forward, inject_polar, FusionParams};
use panocc::bigrid::{build_cross_indices, GridSpec};
use panocc::lifting::FeatureVolume;
use panocc::ptns::Tensor;
use panocc::Result;

use super::{in_file, GridFile};

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Grid pair JSON (`cartesian` + `polar`); a manifest also works.
    #[arg(long)]
    pub grid: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub level: u32,
    /// Polar volume, PTNS f32 `[nz, nphi, nr, C_po]`.
    #[arg(long)]
    pub polar: PathBuf,
    #[arg(long)]
    pub polar_mask: Option<PathBuf>,
    /// Cartesian volume, PTNS f32 `[Z, Y, X, C_ca]`.
    #[arg(long)]
    pub cartesian: PathBuf,
    #[arg(long)]
    pub cartesian_mask: Option<PathBuf>,
    /// Parameter bundle directory (holds `bundle.json`).
    #[arg(long)]
    pub params: PathBuf,
    /// Fused volume, PTNS f32 `[Z, Y, X, 2·C_ca]`.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub mask_out: Option<PathBuf>,
}

fn load_volume(grid: GridSpec, data: &PathBuf, mask: Option<&PathBuf>) -> Result<FeatureVolume> {
    let t = Tensor::load(data)?;
    let m = mask.map(Tensor::load).transpose()?;
    in_file(data, FeatureVolume::from_tensors(grid, &t, m.as_ref()))
}

pub fn run(a: FuseArgs) -> Result<()> {
    let grids = GridFile::load(&a.grid)?;
    let ca_grid = grids.cartesian.at_level(a.level);
    let po_grid = grids.polar.at_level(a.level);
    let v_po = load_volume(po_grid.into(), &a.polar, a.polar_mask.as_ref())?;
    let v_ca = load_volume(ca_grid.into(), &a.cartesian, a.cartesian_mask.as_ref())?;
    let params = FusionParams::load_bundle(&a.params)?;
    let table = build_cross_indices(&grids.cartesian, &grids.polar, a.level)?;
    let x = in_file(&a.params, inject_polar(&v_po, &table, &v_ca, &params.align))?;
    let out = in_file(&a.params, amoe3d_forward(&x, &params.saliency, &params.moe))?;
    out.to_tensor().save(&a.output)?;
    if let Some(p) = &a.mask_out {
        out.mask_tensor().save(p)?;
    }
    println!(
        "{}: {:?} x {} channels, {} valid voxels",
        a.output.display(),
        ca_grid.dims(),
        out.channels,
        out.valid_count()
    );
    Ok(())
}
