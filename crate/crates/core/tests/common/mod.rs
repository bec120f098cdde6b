//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use panocc::camera::Calibration;
use panocc::ptns::Tensor;
use serde_json::json;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_panocc")
}

/// Runs the CLI with an explicit thread count (or none) and no inherited
/// `PANOCC_THREADS`.
pub fn run(threads: Option<usize>, args: &[&str]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.env_remove("PANOCC_THREADS");
    if let Some(n) = threads {
        cmd.arg("--threads").arg(n.to_string());
    }
    cmd.args(args).output().expect("binary runs")
}

pub fn run_ok(threads: Option<usize>, args: &[&str]) -> Output {
    let out = run(threads, args);
    assert!(
        out.status.success(),
        "panocc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

/// Compares `bytes` with the committed golden `name`. With `PANOCC_BLESS=1`
/// the golden is (re)written instead.
pub fn check_golden(name: &str, bytes: &[u8]) {
    let path = golden_dir().join(name);
    if std::env::var("PANOCC_BLESS").is_ok_and(|v| v == "1") {
        std::fs::create_dir_all(golden_dir()).unwrap();
        std::fs::write(&path, bytes).unwrap();
        return;
    }
    let want = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e} (bless with PANOCC_BLESS=1)", path.display()));
    assert!(want == bytes, "{name} differs from the committed golden");
}

/// Writes a fixture scene with the CLI and returns its directory.
pub fn fixture(dir: &Path, preset: &str, seed: u64, width: usize, raw: bool) -> PathBuf {
    let out = dir.join(format!("{preset}{seed}"));
    let seed = seed.to_string();
    let width = width.to_string();
    let mut args = vec!["fixtures", "--preset", preset, "--seed", &seed, "--width", &width, "--out-dir", s(&out)];
    if !raw {
        args.push("--no-raw");
    }
    run_ok(Some(1), &args);
    out
}

/// Independent camera used by the scalar oracles: polynomial in the
/// incidence angle, affine on the annulus, equirectangular rows from the
/// zenith down.
pub struct OracleCamera {
    pub cal: Calibration,
}

impl OracleCamera {
    pub fn poly(&self, t: f64) -> f64 {
        self.cal.a.iter().enumerate().map(|(i, c)| c * t.powi(i as i32)).sum()
    }

    pub fn fov(&self, incidence: f64) -> bool {
        incidence >= self.cal.theta_min && incidence <= self.cal.theta_max
    }

    /// Raw pixel of the ray with azimuth `phi` and incidence `t`.
    pub fn raw_pixel(&self, phi: f64, t: f64) -> (f64, f64) {
        let r = self.poly(t);
        let (x, y) = (r * phi.cos(), r * phi.sin());
        let m = self.cal.affine;
        (self.cal.u0 + m[0] * x + m[1] * y, self.cal.v0 + m[2] * x + m[3] * y)
    }

    /// `(phi, elevation)` of equirectangular pixel `(x, y)`.
    pub fn equi_ray(x: f64, y: f64, w: usize, h: usize) -> (f64, f64) {
        (x / w as f64 * TAU - PI, FRAC_PI_2 - y / h as f64 * PI)
    }

    pub fn equi_pixel(phi: f64, elev: f64, w: usize, h: usize) -> (f64, f64) {
        ((phi + PI) * w as f64 / TAU, (FRAC_PI_2 - elev) * h as f64 / PI)
    }
}

/// Plain bilinear sample at `(x, y)`; `None` when any tap is outside or
/// masked. Columns wrap when `wrap` is set.
pub fn bilinear(
    data: &[f32],
    mask: Option<&[bool]>,
    w: usize,
    h: usize,
    c: usize,
    x: f64,
    y: f64,
    wrap: bool,
) -> Option<Vec<f64>> {
    if y < 0.0 || y > (h - 1) as f64 {
        return None;
    }
    let x = if wrap { x.rem_euclid(w as f64) } else { x };
    if !wrap && (x < 0.0 || x > (w - 1) as f64) {
        return None;
    }
    let (xf, yf) = (x.floor(), y.floor());
    let (fx, fy) = (x - xf, y - yf);
    let x0 = xf as usize;
    let x1 = if wrap { (x0 + 1) % w } else { (x0 + 1).min(w - 1) };
    let y0 = yf as usize;
    let y1 = (y0 + 1).min(h - 1);
    let taps = [(x0, y0), (x1, y0), (x0, y1), (x1, y1)];
    if let Some(m) = mask {
        if taps.iter().any(|&(a, b)| !m[b * w + a]) {
            return None;
        }
    }
    let px = |a: usize, b: usize, ch: usize| data[(b * w + a) * c + ch] as f64;
    Some(
        (0..c)
            .map(|ch| {
                let top = px(x0, y0, ch) * (1.0 - fx) + px(x1, y0, ch) * fx;
                let bot = px(x0, y1, ch) * (1.0 - fx) + px(x1, y1, ch) * fx;
                top * (1.0 - fy) + bot * fy
            })
            .collect(),
    )
}

pub fn lift_cartesian(threads: Option<usize>, fx: &Path, out: &Path) {
    run_ok(
        threads,
        &[
            "lift",
            "--calib",
            s(&fx.join("calibration.json")),
            "--grid",
            s(&fx.join("grid.json")),
            "--plane",
            &format!("equi:1:{}", s(&fx.join("equi.ptns"))),
            "--output",
            s(&out.join("lift.ptns")),
            "--mask-out",
            s(&out.join("lift_mask.ptns")),
        ],
    );
}

pub fn fuse_run(threads: Option<usize>, fx: &Path, dir: &Path) -> Vec<u8> {
    let grid = s(&fx.join("grid.json")).to_string();
    let plane = format!("equi:1:{}", s(&fx.join("equi.ptns")));
    let calib = s(&fx.join("calibration.json")).to_string();
    for (kind, level) in [("polar", "2"), ("cartesian", "2")] {
        run_ok(
            threads,
            &[
                "lift",
                "--calib",
                &calib,
                "--grid",
                &grid,
                "--kind",
                kind,
                "--level",
                level,
                "--plane",
                &plane,
                "--output",
                s(&dir.join(format!("{kind}.ptns"))),
                "--mask-out",
                s(&dir.join(format!("{kind}_mask.ptns"))),
            ],
        );
    }
    let out = dir.join("fused.ptns");
    run_ok(
        threads,
        &[
            "fuse",
            "--grid",
            &grid,
            "--level",
            "2",
            "--polar",
            s(&dir.join("polar.ptns")),
            "--polar-mask",
            s(&dir.join("polar_mask.ptns")),
            "--cartesian",
            s(&dir.join("cartesian.ptns")),
            "--cartesian-mask",
            s(&dir.join("cartesian_mask.ptns")),
            "--params",
            s(&fx.join("params")),
            "--output",
            s(&out),
        ],
    );
    read_file(&out)
}

pub fn write_labels(path: &Path, dims_zyx: [usize; 3], labels: &[u8]) {
    Tensor::u8(dims_zyx.to_vec(), labels.to_vec()).unwrap().save(path).unwrap();
}

pub fn hand_manifest(dir: &Path, pred_dims: [usize; 3], pred: &[u8]) -> std::path::PathBuf {
    std::fs::copy(golden_dir().join("calibration.json"), dir.join("calibration.json")).unwrap();
    // x-major 2x2x1 grid: gt [0, 1, 2, 1].
    write_labels(&dir.join("gt.ptns"), [1, 2, 2], &[0, 1, 2, 1]);
    write_labels(&dir.join("pred.ptns"), pred_dims, pred);
    let m = json!({
        "name": "hand",
        "split": "day",
        "cartesian": {"nx": 2, "ny": 2, "nz": 1, "x0": -0.4, "y0": -0.4, "z0": 0.0, "dx": 0.4, "dy": 0.4, "dz": 0.4},
        "polar": {"nr": 1, "nphi": 4, "nz": 1, "r0": 0.0, "r1": 0.6, "z0": 0.0, "dz": 0.4},
        "calibration": "calibration.json",
        "classes": [
            {"id": 0, "name": "empty", "frequency": 0.25},
            {"id": 1, "name": "chair", "frequency": 0.5},
            {"id": 2, "name": "table", "frequency": 0.25}
        ],
        "frames": [{"id": "a", "gt": "gt.ptns", "prediction": "pred.ptns"}]
    });
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&m).unwrap()).unwrap();
    path
}

pub fn read_file(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

pub fn unwrap_run(threads: Option<usize>, fx: &Path, dir: &Path, w: usize, h: usize) -> Vec<u8> {
    let out = dir.join("unwrapped.ptns");
    run_ok(
        threads,
        &[
            "unwrap",
            "--calib",
            s(&fx.join("calibration.json")),
            "--input",
            s(&fx.join("raw.ptns")),
            "--input-mask",
            s(&fx.join("raw_mask.ptns")),
            "--output",
            s(&out),
            "--mask-out",
            s(&dir.join("unwrapped_mask.ptns")),
            "--width",
            &w.to_string(),
            "--height",
            &h.to_string(),
        ],
    );
    read_file(&out)
}

pub fn voxelize_run(threads: Option<usize>, dir: &Path) -> Vec<u8> {
    let out = dir.join("cross.ptns");
    run_ok(threads, &["voxelize", "--preset", "quadocc", "--level", "2", "--output", s(&out)]);
    read_file(&out)
}

pub fn eval_hand_run(threads: Option<usize>, dir: &Path) -> Vec<u8> {
    let manifest = hand_manifest(dir, [1, 2, 2], &[0, 1, 1, 2]);
    let out_dir = dir.join("reports");
    run_ok(threads, &["eval", "--manifest", s(&manifest), "--output-dir", s(&out_dir)]);
    read_file(&out_dir.join("hand_day.json"))
}

/// Reproduces every committed golden through the CLI, as `(golden name, bytes)`.
pub fn golden_outputs(threads: Option<usize>, root: &Path) -> Vec<(&'static str, Vec<u8>)> {
    let sub = |name: &str| {
        let d = root.join(name);
        std::fs::create_dir_all(&d).unwrap();
        d
    };
    let mut out = Vec::new();
    let d = sub("lift");
    let fx = fixture(&d, "ring", 0, 128, false);
    lift_cartesian(threads, &fx, &d);
    out.push(("lift_ring0.ptns", read_file(&d.join("lift.ptns"))));
    out.push(("lift_ring0_mask.ptns", read_file(&d.join("lift_mask.ptns"))));
    let d = sub("unwrap");
    let fx = fixture(&d, "clutter", 2, 64, true);
    out.push(("unwrap_clutter2.ptns", unwrap_run(threads, &fx, &d, 128, 64)));
    out.push(("voxelize_quadocc_l2.ptns", voxelize_run(threads, &sub("voxelize"))));
    let d = sub("fuse");
    let fx = fixture(&d, "corridor", 1, 64, false);
    out.push(("fuse_corridor1.ptns", fuse_run(threads, &fx, &d)));
    out.push(("eval_hand_day.json", eval_hand_run(threads, &sub("eval"))));
    out
}
