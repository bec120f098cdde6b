use std::collections::BTreeMap;
use std::time::Instant;

use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use panocc::amoe3d::{amoe3d_forward, inject_polar, FusionParams, DEFAULT_EXPERTS, DEFAULT_GATE_KERNEL};
use panocc::bigrid::{build_cross_indices, GridSpec};
use panocc::camera::View;
use panocc::lifting::{lift_volume, FeatureVolume};
use panocc::synth::{self, Preset};
use panocc::unwrap::{apply_remap, build_remap, ImagePlane};
use panocc::{Error, Result};

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Repetitions per kernel.
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    /// Equirectangular width.
    #[arg(long, default_value_t = 1216)]
    pub width: usize,
    /// Equirectangular height.
    #[arg(long, default_value_t = 608)]
    pub height: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Serialize)]
struct Stats {
    reps: usize,
    mean_ms: f64,
    median_ms: f64,
    min_ms: f64,
    max_ms: f64,
}

fn time<T>(reps: usize, mut f: impl FnMut() -> Result<T>) -> Result<Stats> {
    let mut ms = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        std::hint::black_box(f()?);
        ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    ms.sort_by(f64::total_cmp);
    let median = if reps % 2 == 1 {
        ms[reps / 2]
    } else {
        0.5 * (ms[reps / 2 - 1] + ms[reps / 2])
    };
    Ok(Stats {
        reps,
        mean_ms: ms.iter().sum::<f64>() / reps as f64,
        median_ms: median,
        min_ms: ms[0],
        max_ms: ms[reps - 1],
    })
}

pub fn run(a: BenchArgs) -> Result<()> {
    if a.reps == 0 {
        return Err(Error::InvalidArgument("--reps must be at least 1".into()));
    }
    if a.width == 0 || a.height == 0 {
        return Err(Error::InvalidArgument("--width and --height must be positive".into()));
    }
    let model = synth::default_camera();
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let (rw, rh) = model.raw_size();
    let raw = ImagePlane::new(rw, rh, 3, (0..rw * rh * 3).map(|_| rng.gen::<f32>()).collect())?;

    let mut out = BTreeMap::new();
    out.insert("build_remap", time(a.reps, || build_remap(a.width, a.height, &model))?);
    let table = build_remap(a.width, a.height, &model)?;
    out.insert("apply_remap", time(a.reps, || apply_remap(&raw, &table))?);

    let scene = synth::make_fixture(a.seed, Preset::Clutter);
    let plane = synth::render_equi(&scene, &model, a.width, a.height);
    let ca = scene.grid;
    let po = ca.default_polar();
    let pose = scene.pose;
    out.insert(
        "lift",
        time(a.reps, || lift_volume(&GridSpec::Cartesian(ca), View::Equi, &model, &pose, &plane, None))?,
    );

    let v_ca = lift_volume(&GridSpec::Cartesian(ca), View::Equi, &model, &pose, &plane, None)?;
    let v_po: FeatureVolume = lift_volume(&GridSpec::Polar(po), View::Equi, &model, &pose, &plane, None)?;
    let c = scene.channels();
    let params = FusionParams::random(a.seed, c, c, DEFAULT_EXPERTS, DEFAULT_GATE_KERNEL);
    let cross = build_cross_indices(&ca, &po, 1)?;
    out.insert(
        "fuse",
        time(a.reps, || {
            let x = inject_polar(&v_po, &cross, &v_ca, &params.align)?;
            amoe3d_forward(&x, &params.saliency, &params.moe)
        })?,
    );
    println!("{}", serde_json::to_string_pretty(&out).expect("stats serialize"));
    Ok(())
}
