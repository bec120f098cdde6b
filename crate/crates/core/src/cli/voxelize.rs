use std::path::PathBuf;

use clap::Args;

use panocc::bigrid::{build_cross_indices, CartesianGridSpec};
use panocc::ptns::Tensor;
use panocc::{Error, Result};

use super::GridFile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GridPreset {
    /// 64×64×8 at 0.4 m.
    Quadocc,
    /// 128×128×16 at 0.2 m.
    H3o,
}

#[derive(Debug, Args)]
pub struct VoxelizeArgs {
    /// Grid pair JSON (`cartesian` + `polar`); a manifest also works.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub grid: Option<PathBuf>,
    /// Built-in Cartesian grid with its default polar companion.
    #[arg(long, value_enum)]
    pub preset: Option<GridPreset>,
    /// Voxel stride: 1, 2 or 4.
    #[arg(long, default_value_t = 1)]
    pub level: u32,
    /// Index table, PTNS u32 `[N_cartesian]`.
    #[arg(long)]
    pub output: PathBuf,
    /// Also write the grid pair used.
    #[arg(long)]
    pub grid_out: Option<PathBuf>,
}

pub fn run(a: VoxelizeArgs) -> Result<()> {
    let grids = match (&a.grid, a.preset) {
        (Some(p), _) => GridFile::load(p)?,
        (None, Some(preset)) => {
            let cartesian = match preset {
                GridPreset::Quadocc => CartesianGridSpec::quadocc(),
                GridPreset::H3o => CartesianGridSpec::h3o_fine(),
            };
            GridFile {
                cartesian,
                polar: cartesian.default_polar(),
            }
        }
        (None, None) => return Err(Error::InvalidArgument("need --grid or --preset".into())),
    };
    let table = build_cross_indices(&grids.cartesian, &grids.polar, a.level)?;
    Tensor::u32(vec![table.indices.len()], table.indices.clone())?.save(&a.output)?;
    if let Some(p) = &a.grid_out {
        grids.save(p)?;
    }
    println!(
        "level {}: cartesian {:?} -> polar {:?}, {} entries",
        table.level,
        table.cartesian_dims,
        table.polar_dims,
        table.indices.len()
    );
    Ok(())
}
