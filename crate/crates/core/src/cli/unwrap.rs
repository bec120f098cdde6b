use std::path::PathBuf;

use clap::Args;

use panocc::unwrap::{apply_remap, build_remap};
use panocc::Result;

use super::{load_camera, load_plane, save_plane};

#[derive(Debug, Args)]
pub struct UnwrapArgs {
    /// Calibration JSON.
    #[arg(long)]
    pub calib: PathBuf,
    /// Raw annulus image, PTNS `[H_raw, W_raw, C]`.
    #[arg(long)]
    pub input: PathBuf,
    /// Optional raw validity mask, PTNS `[H_raw, W_raw]`.
    #[arg(long)]
    pub input_mask: Option<PathBuf>,
    /// Equirectangular output, PTNS f32 `[H, W, C]`.
    #[arg(long)]
    pub output: PathBuf,
    /// Output validity mask, PTNS u8 `[H, W]`.
    #[arg(long)]
    pub mask_out: Option<PathBuf>,
    #[arg(long, default_value_t = 1024)]
    pub width: usize,
    #[arg(long, default_value_t = 512)]
    pub height: usize,
    /// Value written to pixels outside the field of view.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub fill: f32,
}

pub fn run(a: UnwrapArgs) -> Result<()> {
    let model = load_camera(&a.calib)?;
    let mut img = load_plane(&a.input, a.input_mask.as_deref())?;
    img.fill_value = a.fill;
    let table = build_remap(a.width, a.height, &model)?;
    let out = apply_remap(&img, &table).map_err(|e| panocc::Error::format(&a.input, e.to_string()))?;
    save_plane(&out, &a.output, a.mask_out.as_deref())?;
    println!(
        "{}: {}x{}x{} ({} valid pixels)",
        a.output.display(),
        out.width,
        out.height,
        out.channels,
        out.valid_count()
    );
    Ok(())
}
