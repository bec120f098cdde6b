//! Calibrated panoramic annular lens (PAL) camera.
//!
//! The lens is described by a Taylor radial polynomial `r(t) = Σ aᵢ tⁱ`
//! mapping an incidence angle to a radius on the raw annulus, a principal
//! point `(u0, v0)` and a 2×2 affine matrix `A` for scale and skew:
//!
//! ```text
//! [u_raw, v_raw] = [u0, v0] + A · r(t) · [cos φ, sin φ]
//! ```
//!
//! Angle conventions. [`SphericalAngles::theta`] is the elevation above the
//! horizontal plane, the quantity carried by equirectangular rows
//! (`θ = π/2` on row 0). The polynomial argument is the incidence angle
//! measured from the zenith (`+z`, the lens axis), `t = π/2 − θ`, which lives
//! in `[0, π]`. `theta_min`/`theta_max` bound that incidence angle. Every
//! function taking a bare `theta: f64` below takes the incidence angle;
//! every function taking [`SphericalAngles`] converts.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of samples used to validate monotonicity of `r(t)`.
const MONOTONE_SAMPLES: usize = 4096;
const MAX_NEWTON_ITERS: usize = 100;

/// Azimuth and elevation of a viewing ray, in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalAngles {
    /// Azimuth in `[-π, π)`.
    pub phi: f64,
    /// Elevation above the horizontal plane, `π/2` straight up.
    pub theta: f64,
}

impl SphericalAngles {
    pub fn new(phi: f64, theta: f64) -> Self {
        Self {
            phi: wrap_azimuth(phi),
            theta,
        }
    }

    /// Incidence angle from the lens axis, the radial polynomial's argument.
    pub fn incidence(&self) -> f64 {
        FRAC_PI_2 - self.theta
    }

    /// Angles of the ray through `p`. `None` for the origin.
    pub fn of_point(p: [f64; 3]) -> Option<Self> {
        let rho = p[0].hypot(p[1]);
        if rho == 0.0 && p[2] == 0.0 {
            return None;
        }
        Some(Self::new(p[1].atan2(p[0]), p[2].atan2(rho)))
    }
}

/// Wraps an azimuth into `[-π, π)`.
pub fn wrap_azimuth(phi: f64) -> f64 {
    if (-PI..PI).contains(&phi) {
        phi
    } else {
        let w = (phi + PI).rem_euclid(TAU) - PI;
        // rem_euclid can round up to TAU for tiny negative inputs
        if w >= PI {
            -PI
        } else {
            w
        }
    }
}

/// On-disk calibration record. Keys are order-insensitive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub a: Vec<f64>,
    pub u0: f64,
    pub v0: f64,
    #[serde(rename = "A")]
    pub affine: [f64; 4],
    pub theta_min: f64,
    pub theta_max: f64,
    pub w_raw: usize,
    pub h_raw: usize,
    /// Equirectangular rows run bottom-up when set.
    #[serde(default)]
    pub v_flip: bool,
}

impl Calibration {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("calibration serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Which image a point is projected into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Equi,
    Raw,
}

impl std::str::FromStr for View {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equi" => Ok(View::Equi),
            "raw" => Ok(View::Raw),
            other => Err(Error::InvalidArgument(format!("unknown view `{other}` (expected equi or raw)"))),
        }
    }
}

/// A projected pixel location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub valid: bool,
}

/// Rigid transform taking grid-frame points into the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub const fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// Rotation about `+z` by `yaw` followed by a translation.
    pub fn from_yaw(yaw: f64, translation: [f64; 3]) -> Self {
        let (s, c) = yaw.sin_cos();
        Self {
            rotation: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
            translation,
        }
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + t[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + t[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + t[2],
        ]
    }

    /// Applies the inverse rotation only (camera-frame direction to grid frame).
    pub fn rotate_inverse(&self, d: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        [
            r[0][0] * d[0] + r[1][0] * d[1] + r[2][0] * d[2],
            r[0][1] * d[0] + r[1][1] * d[1] + r[2][1] * d[2],
            r[0][2] * d[0] + r[1][2] * d[1] + r[2][2] * d[2],
        ]
    }

    /// Camera center expressed in the grid frame.
    pub fn camera_center(&self) -> [f64; 3] {
        let t = self.translation;
        let c = self.rotate_inverse(t);
        [-c[0], -c[1], -c[2]]
    }

    /// True when the rotation is exactly the identity and the camera sits on
    /// the grid's vertical axis, so azimuths agree between the two frames.
    pub fn is_axis_aligned(&self) -> bool {
        self.rotation == Self::identity().rotation && self.translation[0] == 0.0 && self.translation[1] == 0.0
    }
}

/// Taylor-polynomial PAL camera. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    coeffs: Vec<f64>,
    u0: f64,
    v0: f64,
    affine: [f64; 4],
    theta_min: f64,
    theta_max: f64,
    w_raw: usize,
    h_raw: usize,
    v_flip: bool,
    increasing: bool,
}

impl CameraModel {
    pub fn new(cal: Calibration) -> Result<Self> {
        let Calibration {
            a,
            u0,
            v0,
            affine,
            theta_min,
            theta_max,
            w_raw,
            h_raw,
            v_flip,
        } = cal;
        if a.is_empty() {
            return Err(Error::InvalidModel("empty coefficient list".into()));
        }
        if a.iter().chain(&affine).chain(&[u0, v0, theta_min, theta_max]).any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel("non-finite parameter".into()));
        }
        if !(0.0 <= theta_min && theta_min < theta_max && theta_max <= PI) {
            return Err(Error::InvalidModel(format!(
                "theta range [{theta_min}, {theta_max}] must satisfy 0 <= min < max <= pi"
            )));
        }
        let det = affine[0] * affine[3] - affine[1] * affine[2];
        if det.abs() <= 1e-12 {
            return Err(Error::InvalidModel(format!("affine matrix is singular (det = {det:e})")));
        }
        if w_raw == 0 || h_raw == 0 {
            return Err(Error::InvalidModel("raw image dimensions must be positive".into()));
        }

        let step = (theta_max - theta_min) / (MONOTONE_SAMPLES - 1) as f64;
        let mut prev = horner(&a, theta_min);
        let mut sign = 0.0f64;
        for i in 1..MONOTONE_SAMPLES {
            let t = if i == MONOTONE_SAMPLES - 1 {
                theta_max
            } else {
                theta_min + step * i as f64
            };
            let r = horner(&a, t);
            let d = r - prev;
            if d == 0.0 || (sign != 0.0 && d.signum() != sign) {
                return Err(Error::InvalidModel(format!(
                    "radial polynomial is not strictly monotone near theta = {t}"
                )));
            }
            sign = d.signum();
            prev = r;
        }

        Ok(Self {
            coeffs: a,
            u0,
            v0,
            affine,
            theta_min,
            theta_max,
            w_raw,
            h_raw,
            v_flip,
            increasing: sign > 0.0,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(Calibration::load(path)?)
    }

    pub fn calibration(&self) -> Calibration {
        Calibration {
            a: self.coeffs.clone(),
            u0: self.u0,
            v0: self.v0,
            affine: self.affine,
            theta_min: self.theta_min,
            theta_max: self.theta_max,
            w_raw: self.w_raw,
            h_raw: self.h_raw,
            v_flip: self.v_flip,
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (self.u0, self.v0)
    }

    pub fn affine(&self) -> [f64; 4] {
        self.affine
    }

    pub fn theta_range(&self) -> (f64, f64) {
        (self.theta_min, self.theta_max)
    }

    pub fn raw_size(&self) -> (usize, usize) {
        (self.w_raw, self.h_raw)
    }

    pub fn v_flip(&self) -> bool {
        self.v_flip
    }

    pub fn in_range(&self, theta: f64) -> bool {
        theta >= self.theta_min && theta <= self.theta_max
    }

    fn check_range(&self, theta: f64) -> Result<()> {
        if self.in_range(theta) {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                value: theta,
                min: self.theta_min,
                max: self.theta_max,
            })
        }
    }

    /// `r(θ) = Σ aᵢ θⁱ` for an incidence angle `theta`.
    pub fn radial_distance(&self, theta: f64) -> Result<f64> {
        self.check_range(theta)?;
        Ok(horner(&self.coeffs, theta))
    }

    fn radial_derivative(&self, theta: f64) -> f64 {
        let n = self.coeffs.len();
        let mut acc = 0.0;
        for i in (1..n).rev() {
            acc = acc * theta + i as f64 * self.coeffs[i];
        }
        acc
    }

    /// Raw annulus pixel of a ray.
    pub fn forward_project_raw(&self, angles: SphericalAngles) -> Result<(f64, f64)> {
        let t = angles.incidence();
        let r = self.radial_distance(t)?;
        Ok(self.annulus_pixel(r, angles.phi))
    }

    fn annulus_pixel(&self, r: f64, phi: f64) -> (f64, f64) {
        let (s, c) = phi.sin_cos();
        let x = r * c;
        let y = r * s;
        let a = &self.affine;
        (self.u0 + (a[0] * x + a[1] * y), self.v0 + (a[2] * x + a[3] * y))
    }

    /// Radius interval reachable on `[theta_min, theta_max]`, ordered.
    pub fn radius_range(&self) -> (f64, f64) {
        let a = horner(&self.coeffs, self.theta_min);
        let b = horner(&self.coeffs, self.theta_max);
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    /// Incidence angle whose radius is `r_target`.
    ///
    /// Newton iteration safeguarded by bisection on the monotone bracket.
    pub fn invert_radial(&self, r_target: f64) -> Result<f64> {
        let (lo_r, hi_r) = self.radius_range();
        if !(r_target >= lo_r && r_target <= hi_r) {
            return Err(Error::OutOfRange {
                value: r_target,
                min: lo_r,
                max: hi_r,
            });
        }
        let f = |t: f64| horner(&self.coeffs, t) - r_target;
        let f_min = f(self.theta_min);
        if f_min == 0.0 {
            return Ok(self.theta_min);
        }
        let f_max = f(self.theta_max);
        if f_max == 0.0 {
            return Ok(self.theta_max);
        }

        // g(t) = ±f(t) is increasing, g(lo) < 0 < g(hi)
        let orient = if self.increasing { 1.0 } else { -1.0 };
        let mut lo = self.theta_min;
        let mut hi = self.theta_max;
        let mut t = lo + (hi - lo) * (-f_min / (f_max - f_min));
        if !(t > lo && t < hi) {
            t = 0.5 * (lo + hi);
        }

        let loose = 1e-9 * r_target.abs().max(1.0);
        let tight = 4.0 * f64::EPSILON * r_target.abs().max(1.0);
        let mut best = (f64::INFINITY, t);
        for _ in 0..MAX_NEWTON_ITERS {
            let ft = f(t);
            if ft.abs() < best.0 {
                best = (ft.abs(), t);
            }
            if ft.abs() <= tight || hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
                return Ok(best.1);
            }
            if orient * ft < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let d = self.radial_derivative(t);
            let newton = if d != 0.0 { t - ft / d } else { f64::NAN };
            t = if newton > lo && newton < hi && newton != t {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        if best.0 <= loose {
            Ok(best.1)
        } else {
            Err(Error::NoConvergence {
                iterations: MAX_NEWTON_ITERS,
            })
        }
    }

    /// Ray angles of a raw annulus pixel: inverts the affine map and the radial polynomial.
    pub fn raw_to_angles(&self, u: f64, v: f64) -> Result<SphericalAngles> {
        let a = &self.affine;
        let det = a[0] * a[3] - a[1] * a[2];
        let du = u - self.u0;
        let dv = v - self.v0;
        let x = (a[3] * du - a[1] * dv) / det;
        let y = (-a[2] * du + a[0] * dv) / det;
        let r = x.hypot(y);
        let t = self.invert_radial(r)?;
        Ok(SphericalAngles::new(y.atan2(x), FRAC_PI_2 - t))
    }

    /// Equirectangular angles honoring the calibration's row orientation.
    pub fn equi_angles(&self, u: f64, v: f64, width: usize, height: usize) -> SphericalAngles {
        let angles = equi_to_angles(u, v, width, height);
        if self.v_flip {
            SphericalAngles::new(angles.phi, -angles.theta)
        } else {
            angles
        }
    }

    /// Equirectangular pixel of a ray, honoring the row orientation.
    pub fn equi_pixel(&self, angles: SphericalAngles, width: usize, height: usize) -> (f64, f64) {
        let theta = if self.v_flip { -angles.theta } else { angles.theta };
        angles_to_equi(SphericalAngles { phi: angles.phi, theta }, width, height)
    }

    /// Projects a camera-frame point into the raw or equirectangular image of size `width × height`.
    ///
    /// The point is marked invalid when its incidence angle is outside the
    /// calibrated range or the pixel lands outside `[0, width) × [0, height)`.
    pub fn project_point(&self, p: [f64; 3], view: View, width: usize, height: usize) -> Result<Projection> {
        let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        if !(norm >= 1e-9) {
            return Err(Error::DegeneratePoint { norm });
        }
        let angles = SphericalAngles::of_point(p).expect("nonzero point");
        Ok(self.project_angles(angles, view, width, height))
    }

    /// Same as [`CameraModel::project_point`] for a ray given by its angles.
    pub fn project_angles(&self, angles: SphericalAngles, view: View, width: usize, height: usize) -> Projection {
        let t = angles.incidence();
        let in_range = self.in_range(t);
        let (u, v) = match view {
            View::Raw => {
                if !in_range {
                    return Projection {
                        u: f64::NAN,
                        v: f64::NAN,
                        valid: false,
                    };
                }
                self.annulus_pixel(horner(&self.coeffs, t), angles.phi)
            }
            View::Equi => self.equi_pixel(angles, width, height),
        };
        let inside = u >= 0.0 && u < width as f64 && v >= 0.0 && v < height as f64;
        Projection {
            u,
            v,
            valid: in_range && inside,
        }
    }
}

/// Horner evaluation of `Σ aᵢ tⁱ`.
pub(crate) fn horner(a: &[f64], t: f64) -> f64 {
    let mut acc = 0.0;
    for &c in a.iter().rev() {
        acc = acc * t + c;
    }
    acc
}

/// Angles of a continuous equirectangular coordinate.
///
/// `φ = 2π·u/W − π`, `θ = π/2 − π·v/H`. Pixel `(i, j)` has its center at
/// `(i, j)`. `u` wraps modulo `W`, so columns `u` and `u + W` give
/// identical angles.
pub fn equi_to_angles(u: f64, v: f64, width: usize, height: usize) -> SphericalAngles {
    let w = width as f64;
    let u = if (0.0..w).contains(&u) { u } else { u.rem_euclid(w) };
    let phi = TAU * (u / w) - PI;
    let theta = FRAC_PI_2 - PI * (v / height as f64);
    SphericalAngles::new(phi, theta)
}

/// Inverse of [`equi_to_angles`].
pub fn angles_to_equi(angles: SphericalAngles, width: usize, height: usize) -> (f64, f64) {
    let u = (angles.phi + PI) / TAU * width as f64;
    let v = (FRAC_PI_2 - angles.theta) / PI * height as f64;
    (u, v)
}
