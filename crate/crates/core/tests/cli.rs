mod common;

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use panocc::camera::Calibration;
use panocc::ptns::Tensor;
use serde_json::Value;

use common::*;

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn lift_matches_golden_and_scalar_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixture(tmp.path(), "ring", 0, 128, false);
    lift_cartesian(None, &fx, tmp.path());
    check_golden("lift_ring0.ptns", &read(&tmp.path().join("lift.ptns")));
    check_golden("lift_ring0_mask.ptns", &read(&tmp.path().join("lift_mask.ptns")));

    let cal = Calibration::load(fx.join("calibration.json")).unwrap();
    let cam = OracleCamera { cal };
    let grid: Value = serde_json::from_slice(&read(&fx.join("grid.json"))).unwrap();
    let g = &grid["cartesian"];
    let n = |k: &str| g[k].as_u64().unwrap() as usize;
    let f = |k: &str| g[k].as_f64().unwrap();
    let (nx, ny, nz) = (n("nx"), n("ny"), n("nz"));
    let plane = Tensor::load(fx.join("equi.ptns")).unwrap();
    let (h, w, c) = (plane.dims[0], plane.dims[1], plane.dims[2]);
    let img = plane.as_f32().unwrap();
    let vol = Tensor::load(tmp.path().join("lift.ptns")).unwrap();
    let mask = Tensor::load(tmp.path().join("lift_mask.ptns")).unwrap().to_u32().unwrap();
    let got = vol.as_f32().unwrap();
    assert_eq!(vol.dims, vec![nz, ny, nx, c]);

    let mut checked = 0;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let v = (k * ny + j) * nx + i;
                let p = [
                    f("x0") + (i as f64 + 0.5) * f("dx"),
                    f("y0") + (j as f64 + 0.5) * f("dy"),
                    f("z0") + (k as f64 + 0.5) * f("dz"),
                ];
                let elev = p[2].atan2(p[0].hypot(p[1]));
                let phi = p[1].atan2(p[0]);
                let want = if cam.fov(FRAC_PI_2 - elev) {
                    let (u, vv) = OracleCamera::equi_pixel(phi, elev, w, h);
                    bilinear(img, None, w, h, c, u, vv, true)
                } else {
                    None
                };
                assert_eq!(mask[v] != 0, want.is_some(), "validity of voxel ({i},{j},{k})");
                if let Some(want) = want {
                    for ch in 0..c {
                        assert!((got[v * c + ch] as f64 - want[ch]).abs() < 1e-5);
                    }
                    checked += 1;
                }
            }
        }
    }
    assert!(checked > nx * ny * nz / 2);
}

#[test]
fn unwrap_matches_golden_and_scalar_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixture(tmp.path(), "clutter", 2, 64, true);
    let (w, h) = (128usize, 64usize);
    run_ok(
        None,
        &[
            "unwrap",
            "--calib",
            s(&fx.join("calibration.json")),
            "--input",
            s(&fx.join("raw.ptns")),
            "--input-mask",
            s(&fx.join("raw_mask.ptns")),
            "--output",
            s(&tmp.path().join("equi.ptns")),
            "--mask-out",
            s(&tmp.path().join("equi_mask.ptns")),
            "--width",
            &w.to_string(),
            "--height",
            &h.to_string(),
        ],
    );
    let out = read(&tmp.path().join("equi.ptns"));
    check_golden("unwrap_clutter2.ptns", &out);

    let cam = OracleCamera {
        cal: Calibration::load(fx.join("calibration.json")).unwrap(),
    };
    let raw = Tensor::load(fx.join("raw.ptns")).unwrap();
    let (rh, rw, c) = (raw.dims[0], raw.dims[1], raw.dims[2]);
    let raw_mask: Vec<bool> = Tensor::load(fx.join("raw_mask.ptns"))
        .unwrap()
        .to_u32()
        .unwrap()
        .into_iter()
        .map(|m| m != 0)
        .collect();
    let got = Tensor::load(tmp.path().join("equi.ptns")).unwrap();
    let got = got.as_f32().unwrap();
    let got_mask = Tensor::load(tmp.path().join("equi_mask.ptns")).unwrap().to_u32().unwrap();
    let mut valid = 0;
    for y in 0..h {
        for x in 0..w {
            let (phi, elev) = OracleCamera::equi_ray(x as f64, y as f64, w, h);
            let t = FRAC_PI_2 - elev;
            let want = if cam.fov(t) {
                let (u, v) = cam.raw_pixel(phi, t);
                bilinear(raw.as_f32().unwrap(), Some(&raw_mask), rw, rh, c, u, v, false)
            } else {
                None
            };
            let i = y * w + x;
            assert_eq!(got_mask[i] != 0, want.is_some(), "validity of pixel ({x},{y})");
            match want {
                Some(px) => {
                    valid += 1;
                    for ch in 0..c {
                        assert!((got[i * c + ch] as f64 - px[ch]).abs() < 1e-5);
                    }
                }
                None => assert!(got[i * c..(i + 1) * c].iter().all(|&v| v == 0.0)),
            }
        }
    }
    assert!(valid > w * h / 3);
}

#[test]
fn voxelize_matches_golden_and_scalar_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cross.ptns");
    let grid_out = tmp.path().join("grid.json");
    run_ok(
        None,
        &["voxelize", "--preset", "quadocc", "--level", "2", "--output", s(&out), "--grid-out", s(&grid_out)],
    );
    check_golden("voxelize_quadocc_l2.ptns", &read(&out));

    // Level 2 of the 64x64x8 @ 0.4 m grid centered on the origin, with its
    // 32 x 128 x 8 polar companion reaching the corner at 12.8·√2 m.
    let (n, d) = (32usize, 0.8);
    let (nr, nphi) = (16usize, 64usize);
    let r1 = 12.8 * 2f64.sqrt();
    let (z0, nz_ca, nz_po) = (-1.6, 4usize, 4usize);
    let t = Tensor::load(&out).unwrap();
    assert_eq!(t.dims, vec![n * n * nz_ca]);
    let got = t.to_u32().unwrap();
    // Bins an exact edge may fall into, given rounding in the angle.
    let bins = |t: f64, n: usize, wrap: bool| -> Vec<usize> {
        let mut out = vec![t.floor()];
        if (t - t.round()).abs() < 1e-9 {
            out = vec![t.round() - 1.0, t.round()];
        }
        out.into_iter()
            .map(|b| {
                if wrap {
                    (b as i64).rem_euclid(n as i64) as usize
                } else {
                    (b.max(0.0) as usize).min(n - 1)
                }
            })
            .collect()
    };
    let mut ties = 0;
    for k in 0..nz_ca {
        for j in 0..n {
            for i in 0..n {
                let x = -12.8 + (i as f64 + 0.5) * d;
                let y = -12.8 + (j as f64 + 0.5) * d;
                let z = z0 + (k as f64 + 0.5) * d;
                let ps = bins(x.hypot(y) / (r1 / nr as f64), nr, false);
                let qs = bins((y.atan2(x) + PI) / (2.0 * PI / nphi as f64), nphi, true);
                let ks = bins((z - z0) / (3.2 / nz_po as f64), nz_po, false);
                if ps.len() * qs.len() * ks.len() > 1 {
                    ties += 1;
                }
                let g = got[(k * n + j) * n + i] as usize;
                let (p, q, kk) = (g % nr, (g / nr) % nphi, g / (nr * nphi));
                assert!(
                    ps.contains(&p) && qs.contains(&q) && ks.contains(&kk),
                    "voxel ({i},{j},{k}) -> {g}, oracle bins {ps:?} {qs:?} {ks:?}"
                );
            }
        }
    }
    assert!(ties < n * n * nz_ca / 5, "{ties} voxels on bin edges");
}

#[test]
fn fuse_matches_golden_and_library_pipeline() {
    use panocc::amoe3d::{amoe3d_forward, inject_polar, FusionParams};
    use panocc::bigrid::{build_cross_indices, GridSpec};
    use panocc::lifting::FeatureVolume;

    let tmp = tempfile::tempdir().unwrap();
    let fx = fixture(tmp.path(), "corridor", 1, 64, false);
    let bytes = fuse_run(None, &fx, tmp.path());
    check_golden("fuse_corridor1.ptns", &bytes);

    let grid: Value = serde_json::from_slice(&read(&fx.join("grid.json"))).unwrap();
    let ca: panocc::bigrid::CartesianGridSpec = serde_json::from_value(grid["cartesian"].clone()).unwrap();
    let po: panocc::bigrid::PolarGridSpec = serde_json::from_value(grid["polar"].clone()).unwrap();
    let load = |g: GridSpec, name: &str| {
        let t = Tensor::load(tmp.path().join(format!("{name}.ptns"))).unwrap();
        let m = Tensor::load(tmp.path().join(format!("{name}_mask.ptns"))).unwrap();
        FeatureVolume::from_tensors(g, &t, Some(&m)).unwrap()
    };
    let v_po = load(GridSpec::Polar(po.at_level(2)), "polar");
    let v_ca = load(GridSpec::Cartesian(ca.at_level(2)), "cartesian");
    let params = FusionParams::load_bundle(fx.join("params")).unwrap();
    let table = build_cross_indices(&ca, &po, 2).unwrap();
    let x = inject_polar(&v_po, &table, &v_ca, &params.align).unwrap();
    let y = amoe3d_forward(&x, &params.saliency, &params.moe).unwrap();
    assert_eq!(y.to_tensor().encode(), bytes);
}

#[test]
fn eval_hand_tally_matches_committed_report() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = hand_manifest(tmp.path(), [1, 2, 2], &[0, 1, 1, 2]);
    let out_dir = tmp.path().join("reports");
    run_ok(None, &["eval", "--manifest", s(&manifest), "--output-dir", s(&out_dir)]);
    let text = read(&out_dir.join("hand_day.json"));
    check_golden("eval_hand_day.json", &text);

    // chair: TP 1, FP 1, FN 1 -> 1/3; table: TP 0 -> 0; occupancy agrees everywhere.
    let r: Value = serde_json::from_slice(&text).unwrap();
    assert_eq!(r["per_class"][0]["iou"].as_f64().unwrap(), 1.0 / 3.0);
    assert_eq!(r["per_class"][1]["iou"].as_f64().unwrap(), 0.0);
    assert_eq!(r["miou"].as_f64().unwrap(), 1.0 / 6.0);
    assert_eq!(r["iou_geo"].as_f64().unwrap(), 1.0);
    assert_eq!(r["precision"].as_f64().unwrap(), 1.0);
    assert_eq!(r["recall"].as_f64().unwrap(), 1.0);
    assert!(out_dir.join("hand_day.txt").exists());
}

#[test]
fn eval_perfect_prediction_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixture(tmp.path(), "clutter", 3, 64, false);
    let out_dir = tmp.path().join("reports");
    run_ok(None, &["eval", "--manifest", s(&fx.join("manifest.json")), "--output-dir", s(&out_dir)]);
    let r: Value = serde_json::from_slice(&read(&out_dir.join("clutter3_synthetic.json"))).unwrap();
    assert_eq!(r["miou"].as_f64().unwrap(), 1.0);
    assert_eq!(r["iou_geo"].as_f64().unwrap(), 1.0);
    assert!(r["losses"]["1"]["total"].as_f64().unwrap().is_finite());
}

#[test]
fn eval_accepts_several_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let a = fixture(tmp.path(), "ring", 0, 64, false);
    let b = fixture(tmp.path(), "corridor", 2, 64, false);
    let out_dir = tmp.path().join("reports");
    let out = run_ok(
        None,
        &[
            "eval",
            "--manifest",
            s(&a.join("manifest.json")),
            "--manifest",
            s(&b.join("manifest.json")),
            "--output-dir",
            s(&out_dir),
        ],
    );
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("ring0/synthetic") && table.contains("corridor2/synthetic"));
    assert!(out_dir.join("ring0_synthetic.json").exists());
    assert!(out_dir.join("corridor2_synthetic.json").exists());
}

#[test]
fn eval_rejects_malformed_grid_dims() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = hand_manifest(tmp.path(), [1, 1, 3], &[0, 1, 1]);
    let out = run(None, &["eval", "--manifest", s(&manifest), "--output-dir", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pred.ptns"));

    write_labels(&tmp.path().join("gt.ptns"), [1, 4, 1], &[0, 1, 2, 1]);
    Tensor::u8(vec![4], vec![0, 1, 2, 1]).unwrap().save(tmp.path().join("pred.ptns")).unwrap();
    let out = run(None, &["eval", "--manifest", s(&manifest), "--output-dir", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_calibration_exits_2_naming_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("no_such_calibration.json");
    let out = run(
        None,
        &["unwrap", "--calib", s(&missing), "--input", "x.ptns", "--output", s(&tmp.path().join("o.ptns"))],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_calibration.json"));
}

#[test]
fn bench_with_zero_reps_is_a_usage_error() {
    let out = run(None, &["bench", "--reps", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_reports_timings() {
    let out = run_ok(Some(2), &["bench", "--reps", "1", "--width", "128", "--height", "64"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    for k in ["build_remap", "apply_remap", "lift", "fuse"] {
        assert!(v[k]["mean_ms"].as_f64().unwrap() >= 0.0, "{k}");
        assert_eq!(v[k]["reps"], 1);
    }
}

#[test]
fn unknown_preset_and_bad_usage_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(None, &["fixtures", "--preset", "atrium", "--out-dir", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("atrium"));
    assert_eq!(run(None, &["lift"]).status.code(), Some(2));
    assert_eq!(run(None, &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn threads_env_var_is_a_fallback() {
    let tmp = tempfile::tempdir().unwrap();
    let out = std::process::Command::new(bin())
        .env("PANOCC_THREADS", "3")
        .args(["voxelize", "--preset", "quadocc", "--level", "4", "--output", s(&tmp.path().join("x.ptns"))])
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn outputs_are_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = fixture(tmp.path(), "clutter", 5, 64, true);
    let mut outputs = Vec::new();
    for threads in [1, 8] {
        let dir = tmp.path().join(format!("t{threads}"));
        std::fs::create_dir_all(&dir).unwrap();
        lift_cartesian(Some(threads), &fx, &dir);
        let fused = fuse_run(Some(threads), &fx, &dir);
        run_ok(
            Some(threads),
            &[
                "unwrap",
                "--calib",
                s(&fx.join("calibration.json")),
                "--input",
                s(&fx.join("raw.ptns")),
                "--output",
                s(&dir.join("u.ptns")),
                "--width",
                "96",
                "--height",
                "48",
            ],
        );
        run_ok(
            Some(threads),
            &["eval", "--manifest", s(&fx.join("manifest.json")), "--output-dir", s(&dir)],
        );
        outputs.push([
            read(&dir.join("lift.ptns")),
            fused,
            read(&dir.join("u.ptns")),
            read(&dir.join("clutter5_synthetic.json")),
        ]);
    }
    assert!(outputs[0] == outputs[1]);
}
