//! Bi-grid volumetric fusion: polar-to-Cartesian injection, channel and
//! spatial saliency gates, and a mixture of pointwise experts gated by local
//! gradient energy.
//!
//! All volumes are channel-last (`data[v * C + c]`). Operators compute over
//! every voxel; outputs keep the input's validity mask and zero the invalid
//! voxels.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bigrid::CrossIndexTable;
use crate::lifting::FeatureVolume;
use crate::ptns::Tensor;
use crate::reduce;
use crate::{Error, Result};

/// Side of the spatial saliency kernel.
pub const SPATIAL_KERNEL: usize = 7;
/// Channel reduction of the saliency MLP.
pub const DEFAULT_REDUCTION: usize = 16;
pub const DEFAULT_EXPERTS: usize = 4;
pub const DEFAULT_GATE_KERNEL: usize = 3;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Exact (erf-based) GELU.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// `y = W x + b` applied per voxel (a 1×1×1 convolution).
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseAffine {
    pub c_in: usize,
    pub c_out: usize,
    /// Row-major `c_out × c_in`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl PointwiseAffine {
    pub fn zeros(c_in: usize, c_out: usize) -> Self {
        Self {
            c_in,
            c_out,
            weights: vec![0.0; c_in * c_out],
            bias: vec![0.0; c_out],
        }
    }

    pub fn identity(c: usize) -> Self {
        let mut a = Self::zeros(c, c);
        for i in 0..c {
            a.weights[i * c + i] = 1.0;
        }
        a
    }

    fn check(&self) -> Result<()> {
        if self.weights.len() != self.c_in * self.c_out || self.bias.len() != self.c_out {
            return Err(Error::ShapeMismatch(format!(
                "affine {}->{} has {} weights and {} biases",
                self.c_in,
                self.c_out,
                self.weights.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, dst) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.c_in..(o + 1) * self.c_in];
            let mut acc = self.bias[o];
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            *dst = acc;
        }
    }
}

/// Dense 3D convolution (cross-correlation) with cubic kernel of odd side
/// `k`, stride 1 and zero padding `k/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv3d {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    /// `[c_out][c_in][kz][ky][kx]`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv3d {
    pub fn zeros(c_in: usize, c_out: usize, k: usize) -> Self {
        Self {
            c_in,
            c_out,
            k,
            weights: vec![0.0; c_out * c_in * k * k * k],
            bias: vec![0.0; c_out],
        }
    }

    fn check(&self) -> Result<()> {
        if self.k % 2 == 0 {
            return Err(Error::ShapeMismatch(format!("kernel side must be odd, got {}", self.k)));
        }
        if self.weights.len() != self.c_out * self.c_in * self.k.pow(3) || self.bias.len() != self.c_out {
            return Err(Error::ShapeMismatch(format!(
                "conv {}->{} k={} has {} weights and {} biases",
                self.c_in,
                self.c_out,
                self.k,
                self.weights.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }

    pub fn weight(&self, co: usize, ci: usize, dz: usize, dy: usize, dx: usize) -> f64 {
        let k = self.k;
        self.weights[(((co * self.c_in + ci) * k + dz) * k + dy) * k + dx]
    }

    /// Convolves a channel-last volume of size `dims` (fastest axis first).
    pub fn forward(&self, input: &[f64], dims: [usize; 3]) -> Vec<f64> {
        let [n0, n1, n2] = dims;
        let (k, half, ci_n) = (self.k, (self.k / 2) as isize, self.c_in);
        let mut out = vec![0.0; n0 * n1 * n2 * self.c_out];
        out.par_chunks_mut(self.c_out).enumerate().for_each(|(v, dst)| {
            let i = (v % n0) as isize;
            let j = ((v / n0) % n1) as isize;
            let kk = (v / (n0 * n1)) as isize;
            for (co, d) in dst.iter_mut().enumerate() {
                let mut acc = self.bias[co];
                for ci in 0..ci_n {
                    for dz in 0..k {
                        let z = kk + dz as isize - half;
                        if z < 0 || z >= n2 as isize {
                            continue;
                        }
                        for dy in 0..k {
                            let y = j + dy as isize - half;
                            if y < 0 || y >= n1 as isize {
                                continue;
                            }
                            for dx in 0..k {
                                let x = i + dx as isize - half;
                                if x < 0 || x >= n0 as isize {
                                    continue;
                                }
                                let src = ((z as usize * n1 + y as usize) * n0 + x as usize) * ci_n + ci;
                                acc += self.weight(co, ci, dz, dy, dx) * input[src];
                            }
                        }
                    }
                }
                *d = acc;
            }
        });
        out
    }
}

fn masked(mut data: Vec<f64>, valid: &[bool], c: usize) -> Vec<f64> {
    for (v, &ok) in valid.iter().enumerate() {
        if !ok {
            data[v * c..(v + 1) * c].iter_mut().for_each(|x| *x = 0.0);
        }
    }
    data
}

/// Gathers polar features through `table`, aligns their channels with
/// `align` and concatenates them in front of the Cartesian channels.
///
/// A voxel is valid where either source is valid; the aligned half is zero
/// where the gathered polar cell is invalid.
pub fn inject_polar(
    v_po: &FeatureVolume,
    table: &CrossIndexTable,
    v_ca: &FeatureVolume,
    align: &PointwiseAffine,
) -> Result<FeatureVolume> {
    if table.polar_dims != v_po.grid.dims() || table.cartesian_dims != v_ca.grid.dims() {
        return Err(Error::LevelMismatch(format!(
            "level-{} table maps {:?} -> {:?}, volumes are {:?} and {:?}",
            table.level,
            table.cartesian_dims,
            table.polar_dims,
            v_ca.grid.dims(),
            v_po.grid.dims()
        )));
    }
    align.check()?;
    if align.c_in != v_po.channels || align.c_out != v_ca.channels {
        return Err(Error::ShapeMismatch(format!(
            "align maps {}->{}, volumes have {} polar and {} Cartesian channels",
            align.c_in, align.c_out, v_po.channels, v_ca.channels
        )));
    }
    let n_po = v_po.voxel_count();
    if let Some(&bad) = table.indices.iter().find(|&&i| i as usize >= n_po) {
        return Err(Error::IndexOutOfRange {
            index: bad as usize,
            len: n_po,
        });
    }
    let c_ca = v_ca.channels;
    let c = 2 * c_ca;
    let mut out = FeatureVolume::zeros(v_ca.grid, c);
    out.data
        .par_chunks_mut(c)
        .zip(out.valid.par_iter_mut())
        .enumerate()
        .for_each(|(v, (dst, ok))| {
            let j = table.indices[v] as usize;
            let (po_half, ca_half) = dst.split_at_mut(c_ca);
            if v_po.valid[j] {
                align.apply(v_po.voxel(j), po_half);
            }
            ca_half.copy_from_slice(v_ca.voxel(v));
            *ok = v_po.valid[j] || v_ca.valid[v];
        });
    Ok(out)
}

/// Channel MLP (shared by average and max pooling) and spatial kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyParams {
    pub mlp1: PointwiseAffine,
    pub mlp2: PointwiseAffine,
    /// `2 → 1` channels, inputs ordered `[mean, max]`.
    pub spatial: Conv3d,
}

impl SaliencyParams {
    pub fn hidden_size(channels: usize, reduction: usize) -> usize {
        channels.div_ceil(reduction.max(1)).max(1)
    }

    pub fn zeros(channels: usize, reduction: usize) -> Self {
        let h = Self::hidden_size(channels, reduction);
        Self {
            mlp1: PointwiseAffine::zeros(channels, h),
            mlp2: PointwiseAffine::zeros(h, channels),
            spatial: Conv3d::zeros(2, 1, SPATIAL_KERNEL),
        }
    }

    pub fn channels(&self) -> usize {
        self.mlp1.c_in
    }

    fn check(&self, channels: usize) -> Result<()> {
        self.mlp1.check()?;
        self.mlp2.check()?;
        self.spatial.check()?;
        if self.mlp1.c_in != channels || self.mlp2.c_out != channels || self.mlp1.c_out != self.mlp2.c_in {
            return Err(Error::ShapeMismatch(format!(
                "saliency MLP {}->{}->{} does not fit {channels} channels",
                self.mlp1.c_in, self.mlp1.c_out, self.mlp2.c_out
            )));
        }
        if self.spatial.c_in != 2 || self.spatial.c_out != 1 {
            return Err(Error::ShapeMismatch("spatial kernel must map 2 channels to 1".into()));
        }
        Ok(())
    }

    /// `W₂·relu(W₁·z + b₁) + b₂`.
    pub fn mlp(&self, z: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.mlp1.c_out];
        self.mlp1.apply(z, &mut h);
        h.iter_mut().for_each(|x| *x = x.max(0.0));
        let mut out = vec![0.0; self.mlp2.c_out];
        self.mlp2.apply(&h, &mut out);
        out
    }
}

/// Per-channel gate `σ(MLP(avg) + MLP(max))`, pooling over all voxels.
pub fn channel_gate(x: &FeatureVolume, params: &SaliencyParams) -> Result<Vec<f64>> {
    params.check(x.channels)?;
    let c = x.channels;
    let n = x.voxel_count();
    let mut avg = Vec::with_capacity(c);
    let mut max = Vec::with_capacity(c);
    for ch in 0..c {
        let vals: Vec<f64> = (0..n).map(|v| x.data[v * c + ch]).collect();
        avg.push(reduce::pairwise_mean(&vals));
        max.push(vals.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    let a = params.mlp(&avg);
    let m = params.mlp(&max);
    Ok(a.iter().zip(&m).map(|(p, q)| sigmoid(p + q)).collect())
}

/// Per-voxel gate: `σ(conv([mean_c X, max_c X]))`.
pub fn spatial_gate(x: &FeatureVolume, params: &SaliencyParams) -> Result<Vec<f64>> {
    params.check(x.channels)?;
    let c = x.channels;
    let pooled: Vec<f64> = x
        .data
        .chunks_exact(c)
        .flat_map(|px| {
            let mean = px.iter().sum::<f64>() / c as f64;
            let max = px.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            [mean, max]
        })
        .collect();
    let logits = params.spatial.forward(&pooled, x.grid.dims());
    Ok(logits.into_iter().map(sigmoid).collect())
}

/// `Y = (X ⊙ a_c) ⊙ a_s`, `a_c` broadcast over voxels and `a_s` over channels.
pub fn apply_saliency(x: &FeatureVolume, a_c: &[f64], a_s: &[f64]) -> Result<FeatureVolume> {
    if a_c.len() != x.channels || a_s.len() != x.voxel_count() {
        return Err(Error::ShapeMismatch(format!(
            "gates of {} channels / {} voxels applied to {} / {}",
            a_c.len(),
            a_s.len(),
            x.channels,
            x.voxel_count()
        )));
    }
    let c = x.channels;
    let mut out = x.clone();
    out.data.par_chunks_mut(c).zip(a_s.par_iter()).for_each(|(px, &s)| {
        for (v, &g) in px.iter_mut().zip(a_c) {
            *v = (*v * g) * s;
        }
    });
    out.data = masked(out.data, &out.valid, c);
    Ok(out)
}

/// Per-voxel sum over axes and channels of squared forward differences; the
/// difference past the last slice of an axis is zero.
pub fn grad_energy3d(y: &FeatureVolume) -> Vec<f64> {
    let [n0, n1, n2] = y.grid.dims();
    let c = y.channels;
    let strides = [1, n0, n0 * n1];
    (0..y.voxel_count())
        .into_par_iter()
        .map(|v| {
            let pos = [v % n0, (v / n0) % n1, v / (n0 * n1)];
            let mut e = 0.0;
            for ch in 0..c {
                for a in 0..3 {
                    if pos[a] + 1 < [n0, n1, n2][a] {
                        let d = y.data[(v + strides[a]) * c + ch] - y.data[v * c + ch];
                        e += d * d;
                    }
                }
            }
            e
        })
        .collect()
}

/// `Σ_v GradEnergy3D(Y)(v)`.
pub fn total_grad_energy(y: &FeatureVolume) -> f64 {
    reduce::pairwise_sum(&grad_energy3d(y))
}

/// Closed-form derivative of [`total_grad_energy`] with respect to every
/// entry of `y.data`.
pub fn grad_energy_gradient(y: &FeatureVolume) -> Vec<f64> {
    let [n0, n1, n2] = y.grid.dims();
    let c = y.channels;
    let n = [n0, n1, n2];
    let strides = [1, n0, n0 * n1];
    let mut g = vec![0.0; y.data.len()];
    g.par_chunks_mut(c).enumerate().for_each(|(v, gv)| {
        let pos = [v % n0, (v / n0) % n1, v / (n0 * n1)];
        for (ch, out) in gv.iter_mut().enumerate() {
            let here = y.data[v * c + ch];
            let mut acc = 0.0;
            for a in 0..3 {
                if pos[a] + 1 < n[a] {
                    acc -= 2.0 * (y.data[(v + strides[a]) * c + ch] - here);
                }
                if pos[a] > 0 {
                    acc += 2.0 * (here - y.data[(v - strides[a]) * c + ch]);
                }
            }
            *out = acc;
        }
    });
    g
}

/// Pointwise `C → C → C` expert with GELU in between.
#[derive(Debug, Clone, PartialEq)]
pub struct Expert {
    pub fc1: PointwiseAffine,
    pub fc2: PointwiseAffine,
}

impl Expert {
    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        let mut h = vec![0.0; self.fc1.c_out];
        self.fc1.apply(x, &mut h);
        h.iter_mut().for_each(|v| *v = gelu(*v));
        self.fc2.apply(&h, out);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoeParams {
    pub experts: Vec<Expert>,
    /// `1 → K` gating convolution over the gradient-energy map.
    pub gate: Conv3d,
}

impl MoeParams {
    pub fn zeros(channels: usize, experts: usize, gate_kernel: usize) -> Self {
        let expert = Expert {
            fc1: PointwiseAffine::zeros(channels, channels),
            fc2: PointwiseAffine::zeros(channels, channels),
        };
        Self {
            experts: vec![expert; experts],
            gate: Conv3d::zeros(1, experts, gate_kernel),
        }
    }

    pub fn channels(&self) -> usize {
        self.experts.first().map_or(0, |e| e.fc1.c_in)
    }

    fn check(&self, channels: usize) -> Result<()> {
        if self.experts.is_empty() {
            return Err(Error::ShapeMismatch("mixture needs at least one expert".into()));
        }
        self.gate.check()?;
        if self.gate.c_in != 1 || self.gate.c_out != self.experts.len() {
            return Err(Error::ShapeMismatch(format!(
                "gate maps {}->{}, expected 1->{}",
                self.gate.c_in,
                self.gate.c_out,
                self.experts.len()
            )));
        }
        for e in &self.experts {
            e.fc1.check()?;
            e.fc2.check()?;
            if e.fc1.c_in != channels || e.fc2.c_out != channels || e.fc1.c_out != e.fc2.c_in {
                return Err(Error::ShapeMismatch(format!(
                    "expert {}->{}->{} does not fit {channels} channels",
                    e.fc1.c_in, e.fc1.c_out, e.fc2.c_out
                )));
            }
        }
        Ok(())
    }
}

/// Softmax over `logits`; denominators are summed order-independently.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let denom = reduce::order_invariant_sum(&mut e.clone());
    e.iter().map(|x| x / denom).collect()
}

/// Per-voxel expert weights `softmax(W_g ∗ GradEnergy3D(Y))`, `[v * K + k]`.
pub fn moe_gates(y: &FeatureVolume, params: &MoeParams) -> Result<Vec<f64>> {
    params.check(y.channels)?;
    let energy = grad_energy3d(y);
    let logits = params.gate.forward(&energy, y.grid.dims());
    let k = params.experts.len();
    Ok(logits.chunks_exact(k).flat_map(softmax).collect())
}

/// `Ỹ = Y + Σ_k α_k E_k(Y)` with one scalar `α_k` per voxel.
pub fn moe_fuse(y: &FeatureVolume, params: &MoeParams) -> Result<FeatureVolume> {
    let alpha = moe_gates(y, params)?;
    let (c, k) = (y.channels, params.experts.len());
    let mut out = y.clone();
    out.data
        .par_chunks_mut(c)
        .zip(alpha.par_chunks(k))
        .for_each(|(px, a)| {
            let x = px.to_vec();
            let mut terms = vec![vec![0.0; k]; c];
            let mut e = vec![0.0; c];
            for (ki, expert) in params.experts.iter().enumerate() {
                expert.forward(&x, &mut e);
                for ch in 0..c {
                    terms[ch][ki] = a[ki] * e[ch];
                }
            }
            for ch in 0..c {
                px[ch] = x[ch] + reduce::order_invariant_sum(&mut terms[ch]);
            }
        });
    out.data = masked(out.data, &out.valid, c);
    Ok(out)
}

/// Gates, saliency product, then the expert mixture.
pub fn amoe3d_forward(x: &FeatureVolume, saliency: &SaliencyParams, moe: &MoeParams) -> Result<FeatureVolume> {
    let a_c = channel_gate(x, saliency)?;
    let a_s = spatial_gate(x, saliency)?;
    let y = apply_saliency(x, &a_c, &a_s)?;
    moe_fuse(&y, moe)
}

/// Every parameter of one fusion level.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub align: PointwiseAffine,
    pub saliency: SaliencyParams,
    pub moe: MoeParams,
}

#[derive(Debug, Serialize, Deserialize)]
struct BundleIndex {
    tensors: BTreeMap<String, String>,
}

const BUNDLE_INDEX: &str = "bundle.json";

impl FusionParams {
    /// Seeded random parameters, for fixtures and benchmarks. `c_ca` is the
    /// Cartesian channel count; the fused volume has `2·c_ca` channels.
    pub fn random(seed: u64, c_po: usize, c_ca: usize, experts: usize, gate_kernel: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |v: &mut Vec<f64>, scale: f64| v.iter_mut().for_each(|x| *x = rng.gen_range(-scale..scale));
        let c = 2 * c_ca;
        let mut align = PointwiseAffine::zeros(c_po, c_ca);
        fill(&mut align.weights, 1.0);
        fill(&mut align.bias, 0.1);
        let mut saliency = SaliencyParams::zeros(c, DEFAULT_REDUCTION);
        fill(&mut saliency.mlp1.weights, 0.5);
        fill(&mut saliency.mlp1.bias, 0.1);
        fill(&mut saliency.mlp2.weights, 0.5);
        fill(&mut saliency.mlp2.bias, 0.1);
        fill(&mut saliency.spatial.weights, 0.05);
        fill(&mut saliency.spatial.bias, 0.1);
        let mut moe = MoeParams::zeros(c, experts, gate_kernel);
        for e in &mut moe.experts {
            fill(&mut e.fc1.weights, 0.5);
            fill(&mut e.fc1.bias, 0.1);
            fill(&mut e.fc2.weights, 0.5);
            fill(&mut e.fc2.bias, 0.1);
        }
        fill(&mut moe.gate.weights, 0.2);
        fill(&mut moe.gate.bias, 0.1);
        Self { align, saliency, moe }
    }

    fn tensors(&self) -> Vec<(String, Tensor)> {
        let aff = |a: &PointwiseAffine| {
            (
                Tensor::f32(vec![a.c_out, a.c_in], to_f32(&a.weights)).expect("affine shape"),
                Tensor::f32(vec![a.c_out], to_f32(&a.bias)).expect("affine shape"),
            )
        };
        let conv = |c: &Conv3d| {
            (
                Tensor::f32(vec![c.c_out, c.c_in, c.k, c.k, c.k], to_f32(&c.weights)).expect("conv shape"),
                Tensor::f32(vec![c.c_out], to_f32(&c.bias)).expect("conv shape"),
            )
        };
        let mut out = Vec::new();
        let mut push = |name: String, (w, b): (Tensor, Tensor)| {
            out.push((format!("{name}.weight"), w));
            out.push((format!("{name}.bias"), b));
        };
        push("align".into(), aff(&self.align));
        push("saliency.mlp1".into(), aff(&self.saliency.mlp1));
        push("saliency.mlp2".into(), aff(&self.saliency.mlp2));
        push("saliency.spatial".into(), conv(&self.saliency.spatial));
        push("moe.gate".into(), conv(&self.moe.gate));
        for (i, e) in self.moe.experts.iter().enumerate() {
            push(format!("moe.expert{i}.fc1"), aff(&e.fc1));
            push(format!("moe.expert{i}.fc2"), aff(&e.fc2));
        }
        out
    }

    /// Writes one PTNS file per tensor plus a `bundle.json` role index.
    pub fn save_bundle(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut index = BundleIndex {
            tensors: BTreeMap::new(),
        };
        for (role, t) in self.tensors() {
            let file = format!("{role}.ptns");
            t.save(dir.join(&file))?;
            index.tensors.insert(role, file);
        }
        let path = dir.join(BUNDLE_INDEX);
        let text = serde_json::to_string_pretty(&index).expect("bundle index serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load_bundle(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let index_path = dir.join(BUNDLE_INDEX);
        let text = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
        let index: BundleIndex =
            serde_json::from_str(&text).map_err(|e| Error::format(&index_path, e.to_string()))?;
        let load = |role: &str| -> Result<Tensor> {
            let file = index
                .tensors
                .get(role)
                .ok_or_else(|| Error::format(&index_path, format!("missing tensor role `{role}`")))?;
            Tensor::load(dir.join(file))
        };
        let aff = |name: &str| -> Result<PointwiseAffine> {
            let w = load(&format!("{name}.weight"))?;
            let b = load(&format!("{name}.bias"))?;
            let (wv, bv) = (f32_payload(&w, name)?, f32_payload(&b, name)?);
            if w.rank() != 2 || b.dims != [w.dims[0]] {
                return Err(Error::format(&index_path, format!("`{name}` must be [out, in] + [out]")));
            }
            Ok(PointwiseAffine {
                c_in: w.dims[1],
                c_out: w.dims[0],
                weights: wv,
                bias: bv,
            })
        };
        let conv = |name: &str| -> Result<Conv3d> {
            let w = load(&format!("{name}.weight"))?;
            let b = load(&format!("{name}.bias"))?;
            let (wv, bv) = (f32_payload(&w, name)?, f32_payload(&b, name)?);
            let d = &w.dims;
            if d.len() != 5 || d[2] != d[3] || d[3] != d[4] || b.dims != [d[0]] {
                return Err(Error::format(&index_path, format!("`{name}` must be [out, in, k, k, k] + [out]")));
            }
            Ok(Conv3d {
                c_in: d[1],
                c_out: d[0],
                k: d[2],
                weights: wv,
                bias: bv,
            })
        };
        let align = aff("align")?;
        let saliency = SaliencyParams {
            mlp1: aff("saliency.mlp1")?,
            mlp2: aff("saliency.mlp2")?,
            spatial: conv("saliency.spatial")?,
        };
        let gate = conv("moe.gate")?;
        let experts = (0..gate.c_out)
            .map(|i| {
                Ok(Expert {
                    fc1: aff(&format!("moe.expert{i}.fc1"))?,
                    fc2: aff(&format!("moe.expert{i}.fc2"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let params = Self {
            align,
            saliency,
            moe: MoeParams { experts, gate },
        };
        let c = params.saliency.channels();
        params
            .saliency
            .check(c)
            .and_then(|_| params.moe.check(c))
            .and_then(|_| params.align.check())
            .map_err(|e| Error::format(&index_path, e.to_string()))?;
        if params.align.c_out * 2 != c {
            return Err(Error::format(
                &index_path,
                format!("align outputs {} channels, fusion expects {}", params.align.c_out, c / 2),
            ));
        }
        Ok(params)
    }
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

fn f32_payload(t: &Tensor, name: &str) -> Result<Vec<f64>> {
    t.as_f32()
        .map(|v| v.iter().map(|&x| x as f64).collect())
        .ok_or_else(|| Error::InvalidArgument(format!("`{name}` tensors must be f32")))
}
