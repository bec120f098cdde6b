//! Bi-grid voxelization: a Cartesian grid and a cylindrical-polar grid over
//! the same space, plus precomputed Cartesian→polar cell lookups per level.
//!
//! Flat index conventions:
//! - Cartesian `(i, j, k)` → `(k·ny + j)·nx + i`
//! - Polar `(p, q, k)` → `(k·nphi + q)·nr + p`
//!
//! so in both grids the first axis varies fastest.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Voxel-stride levels for which cross-grid tables are built.
pub const LEVELS: [u32; 3] = [1, 2, 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartesianGridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub x0: f64,
    pub y0: f64,
    pub z0: f64,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl CartesianGridSpec {
    /// Grid of cubic voxels centered on the origin.
    pub fn centered(nx: usize, ny: usize, nz: usize, edge: f64) -> Self {
        Self {
            nx,
            ny,
            nz,
            x0: -(nx as f64) * edge / 2.0,
            y0: -(ny as f64) * edge / 2.0,
            z0: -(nz as f64) * edge / 2.0,
            dx: edge,
            dy: edge,
            dz: edge,
        }
    }

    /// 64×64×8 grid of 0.4 m voxels (quadruped benchmark layout).
    pub fn quadocc() -> Self {
        Self::centered(64, 64, 8, 0.4)
    }

    /// 128×128×16 grid (humanoid benchmark, fine resolution). The voxel edge
    /// is not published; 0.2 m keeps the 25.6 m footprint of the coarse grid.
    pub fn h3o_fine() -> Self {
        Self::centered(128, 128, 16, 0.2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(Error::InvalidGrid("cartesian counts must be >= 1".into()));
        }
        let edges = [self.dx, self.dy, self.dz];
        if edges.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidGrid("cartesian voxel edges must be positive".into()));
        }
        if ![self.x0, self.y0, self.z0].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidGrid("cartesian origin must be finite".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn voxel_count(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.ny + j) * self.nx + i
    }

    pub fn centroid(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.x0 + (i as f64 + 0.5) * self.dx,
            self.y0 + (j as f64 + 0.5) * self.dy,
            self.z0 + (k as f64 + 0.5) * self.dz,
        ]
    }

    pub fn centroids(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.voxel_count());
        for k in 0..self.nz {
            for j in 0..self.ny {
                for i in 0..self.nx {
                    out.push(self.centroid(i, j, k));
                }
            }
        }
        out
    }

    /// Voxel containing `p`, or `None` outside the grid.
    pub fn locate(&self, p: [f64; 3]) -> Option<(usize, usize, usize)> {
        let cell = |v: f64, o: f64, d: f64, n: usize| {
            let t = ((v - o) / d).floor();
            (t >= 0.0 && t < n as f64).then_some(t as usize)
        };
        Some((
            cell(p[0], self.x0, self.dx, self.nx)?,
            cell(p[1], self.y0, self.dy, self.ny)?,
            cell(p[2], self.z0, self.dz, self.nz)?,
        ))
    }

    pub fn extent(&self) -> [f64; 3] {
        [
            self.nx as f64 * self.dx,
            self.ny as f64 * self.dy,
            self.nz as f64 * self.dz,
        ]
    }

    /// Grid at voxel stride `level`: counts divided by `level` (rounded up),
    /// same spatial extent.
    pub fn at_level(&self, level: u32) -> Self {
        let l = level as usize;
        let (nx, ny, nz) = (self.nx.div_ceil(l), self.ny.div_ceil(l), self.nz.div_ceil(l));
        Self {
            nx,
            ny,
            nz,
            x0: self.x0,
            y0: self.y0,
            z0: self.z0,
            dx: self.dx * self.nx as f64 / nx as f64,
            dy: self.dy * self.ny as f64 / ny as f64,
            dz: self.dz * self.nz as f64 / nz as f64,
        }
    }

    /// Default companion polar grid: `nr = nx/2`, `nphi = 2·nx`, same vertical
    /// layout, radius reaching the grid's farthest corner from the `z` axis.
    pub fn default_polar(&self) -> PolarGridSpec {
        let [ex, ey, _] = self.extent();
        let r1 = [self.x0, self.x0 + ex]
            .iter()
            .flat_map(|&x| [self.y0, self.y0 + ey].map(move |y| x.hypot(y)))
            .fold(0.0f64, f64::max);
        PolarGridSpec {
            nr: (self.nx / 2).max(1),
            nphi: 2 * self.nx,
            nz: self.nz,
            r0: 0.0,
            r1,
            z0: self.z0,
            dz: self.dz,
            spacing: RadialSpacing::Linear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadialSpacing {
    #[default]
    Linear,
    /// Geometric ring widths; requires `r0 > 0`.
    Log,
}

/// Cylindrical grid centered on the `z` axis. Azimuth bins are uniform over `[-π, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarGridSpec {
    pub nr: usize,
    pub nphi: usize,
    pub nz: usize,
    pub r0: f64,
    pub r1: f64,
    pub z0: f64,
    pub dz: f64,
    #[serde(default)]
    pub spacing: RadialSpacing,
}

impl PolarGridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.nr == 0 || self.nphi == 0 || self.nz == 0 {
            return Err(Error::InvalidGrid("polar counts must be >= 1".into()));
        }
        if !(self.r0 >= 0.0 && self.r1 > self.r0 && self.r1.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "polar radii must satisfy r1 > r0 >= 0, got [{}, {}]",
                self.r0, self.r1
            )));
        }
        if self.spacing == RadialSpacing::Log && self.r0 <= 0.0 {
            return Err(Error::InvalidGrid("log radial spacing needs r0 > 0".into()));
        }
        if !(self.dz > 0.0 && self.dz.is_finite() && self.z0.is_finite()) {
            return Err(Error::InvalidGrid("polar vertical step must be positive".into()));
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nr, self.nphi, self.nz]
    }

    pub fn voxel_count(&self) -> usize {
        self.nr * self.nphi * self.nz
    }

    pub fn index(&self, p: usize, q: usize, k: usize) -> usize {
        (k * self.nphi + q) * self.nr + p
    }

    pub fn azimuth_step(&self) -> f64 {
        TAU / self.nphi as f64
    }

    /// Continuous radial bin coordinate: ring `p` spans `[p, p+1)`.
    pub fn radial_coord(&self, r: f64) -> f64 {
        match self.spacing {
            RadialSpacing::Linear => (r - self.r0) / (self.r1 - self.r0) * self.nr as f64,
            RadialSpacing::Log => (r / self.r0).ln() / (self.r1 / self.r0).ln() * self.nr as f64,
        }
    }

    pub fn radius_center(&self, p: usize) -> f64 {
        let t = (p as f64 + 0.5) / self.nr as f64;
        match self.spacing {
            RadialSpacing::Linear => self.r0 + (p as f64 + 0.5) * (self.r1 - self.r0) / self.nr as f64,
            RadialSpacing::Log => self.r0 * (self.r1 / self.r0).powf(t),
        }
    }

    pub fn azimuth_center(&self, q: usize) -> f64 {
        -PI + (q as f64 + 0.5) * self.azimuth_step()
    }

    pub fn z_center(&self, k: usize) -> f64 {
        self.z0 + (k as f64 + 0.5) * self.dz
    }

    pub fn centroid(&self, p: usize, q: usize, k: usize) -> [f64; 3] {
        let r = self.radius_center(p);
        let phi = self.azimuth_center(q);
        [r * phi.cos(), r * phi.sin(), self.z_center(k)]
    }

    pub fn centroids(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.voxel_count());
        for k in 0..self.nz {
            for q in 0..self.nphi {
                for p in 0..self.nr {
                    out.push(self.centroid(p, q, k));
                }
            }
        }
        out
    }

    /// Cell containing `p` by analytic binning of `(r, φ, z)`. Points outside
    /// the radial or vertical extent clamp to the nearest boundary cell; at
    /// exact bin edges the lower index wins; `r = 0` maps to azimuth bin 0.
    pub fn locate(&self, p: [f64; 3]) -> (usize, usize, usize) {
        let r = p[0].hypot(p[1]);
        let pr = bin(self.radial_coord(r), self.nr);
        let q = if r == 0.0 {
            0
        } else {
            let phi = crate::camera::wrap_azimuth(p[1].atan2(p[0]));
            bin((phi + PI) / self.azimuth_step(), self.nphi)
        };
        let k = bin((p[2] - self.z0) / self.dz, self.nz);
        (pr, q, k)
    }

    /// Grid at voxel stride `level`: counts divided by `level` (rounded up),
    /// same radial and vertical extent.
    pub fn at_level(&self, level: u32) -> Self {
        let l = level as usize;
        let nz = self.nz.div_ceil(l);
        Self {
            nr: self.nr.div_ceil(l),
            nphi: self.nphi.div_ceil(l),
            nz,
            dz: self.dz * self.nz as f64 / nz as f64,
            ..*self
        }
    }
}

/// Bin index of continuous coordinate `t` among `n` unit bins. Exact
/// interior edges go to the lower bin; values outside `[0, n]` clamp.
fn bin(t: f64, n: usize) -> usize {
    if !(t > 0.0) {
        return 0;
    }
    let f = t.floor();
    let b = if f == t { f - 1.0 } else { f };
    if b >= n as f64 {
        n - 1
    } else {
        b as usize
    }
}

/// Either grid flavor, as attached to feature volumes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GridSpec {
    Cartesian(CartesianGridSpec),
    Polar(PolarGridSpec),
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            GridSpec::Cartesian(g) => g.validate(),
            GridSpec::Polar(g) => g.validate(),
        }
    }

    /// Axis sizes, fastest axis first.
    pub fn dims(&self) -> [usize; 3] {
        match self {
            GridSpec::Cartesian(g) => g.dims(),
            GridSpec::Polar(g) => g.dims(),
        }
    }

    pub fn voxel_count(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn centroids(&self) -> Vec<[f64; 3]> {
        match self {
            GridSpec::Cartesian(g) => g.centroids(),
            GridSpec::Polar(g) => g.centroids(),
        }
    }
}

impl From<CartesianGridSpec> for GridSpec {
    fn from(g: CartesianGridSpec) -> Self {
        GridSpec::Cartesian(g)
    }
}

impl From<PolarGridSpec> for GridSpec {
    fn from(g: PolarGridSpec) -> Self {
        GridSpec::Polar(g)
    }
}

/// For each Cartesian voxel at one level, the flat index of the polar cell
/// containing its centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossIndexTable {
    pub level: u32,
    pub cartesian_dims: [usize; 3],
    pub polar_dims: [usize; 3],
    pub indices: Vec<u32>,
}

impl CrossIndexTable {
    pub fn polar_len(&self) -> usize {
        self.polar_dims.iter().product()
    }
}

pub fn build_cross_indices(ca: &CartesianGridSpec, po: &PolarGridSpec, level: u32) -> Result<CrossIndexTable> {
    if !LEVELS.contains(&level) {
        return Err(Error::InvalidArgument(format!("level must be one of 1, 2, 4 (got {level})")));
    }
    ca.validate()?;
    po.validate()?;
    let ca_l = ca.at_level(level);
    let po_l = po.at_level(level);
    if po_l.voxel_count() > u32::MAX as usize {
        return Err(Error::InvalidGrid("polar grid too large for u32 indices".into()));
    }
    let indices: Vec<u32> = (0..ca_l.voxel_count())
        .into_par_iter()
        .map(|flat| {
            let i = flat % ca_l.nx;
            let j = (flat / ca_l.nx) % ca_l.ny;
            let k = flat / (ca_l.nx * ca_l.ny);
            let (p, q, kz) = po_l.locate(ca_l.centroid(i, j, k));
            po_l.index(p, q, kz) as u32
        })
        .collect();
    Ok(CrossIndexTable {
        level,
        cartesian_dims: ca_l.dims(),
        polar_dims: po_l.dims(),
        indices,
    })
}
