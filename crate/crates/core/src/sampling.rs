//! Bilinear sampling on interleaved (row-major, channel-last) planes.
//!
//! Pixel `(i, j)` is centered at continuous coordinate `(i, j)`. A sample at
//! `(x, y)` blends pixels `⌊x⌋, ⌊x⌋+1` and `⌊y⌋, ⌊y⌋+1`. The footprint must
//! lie inside the plane (`0 ≤ y ≤ h−1`, and `0 ≤ x ≤ w−1` unless the
//! horizontal axis wraps); samples touching the outside are rejected rather
//! than blended with padding.

/// Convex interpolation clamped to the endpoint interval, so constant inputs
/// stay exact and results never leave `[min(a, b), max(a, b)]`.
#[inline]
pub fn lerp(a: f64, b: f64, t: f64) -> f64 {
    let v = a + t * (b - a);
    if a <= b {
        v.clamp(a, b)
    } else {
        v.clamp(b, a)
    }
}

/// Horizontal handling at the plane edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wrap {
    None,
    Horizontal,
}

/// Integer footprint and fractional weights of a bilinear sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
    pub fx: f64,
    pub fy: f64,
}

pub fn footprint(x: f64, y: f64, width: usize, height: usize, wrap: Wrap) -> Option<Footprint> {
    if !(x.is_finite() && y.is_finite()) || width == 0 || height == 0 {
        return None;
    }
    let h_max = (height - 1) as f64;
    if y < 0.0 || y > h_max {
        return None;
    }
    let (x0, x1, fx) = match wrap {
        Wrap::None => {
            let w_max = (width - 1) as f64;
            if x < 0.0 || x > w_max {
                return None;
            }
            let fl = x.floor();
            let x0 = fl as usize;
            (x0, (x0 + 1).min(width - 1), x - fl)
        }
        Wrap::Horizontal => {
            let w = width as f64;
            let xw = if (0.0..w).contains(&x) { x } else { x.rem_euclid(w) };
            let fl = xw.floor();
            let x0 = (fl as usize).min(width - 1);
            (x0, (x0 + 1) % width, xw - fl)
        }
    };
    let fl = y.floor();
    let y0 = fl as usize;
    let y1 = (y0 + 1).min(height - 1);
    Some(Footprint {
        x0,
        x1,
        y0,
        y1,
        fx,
        fy: y - fl,
    })
}

/// Samples every channel at `(x, y)` into `out`. Returns false (leaving `out`
/// untouched) when the footprint is rejected.
pub fn sample_into(
    data: &[f32],
    width: usize,
    height: usize,
    channels: usize,
    x: f64,
    y: f64,
    wrap: Wrap,
    out: &mut [f64],
) -> bool {
    let Some(fp) = footprint(x, y, width, height, wrap) else {
        return false;
    };
    let row0 = fp.y0 * width;
    let row1 = fp.y1 * width;
    let i00 = (row0 + fp.x0) * channels;
    let i01 = (row0 + fp.x1) * channels;
    let i10 = (row1 + fp.x0) * channels;
    let i11 = (row1 + fp.x1) * channels;
    for c in 0..channels {
        let top = lerp(data[i00 + c] as f64, data[i01 + c] as f64, fp.fx);
        let bot = lerp(data[i10 + c] as f64, data[i11 + c] as f64, fp.fx);
        out[c] = lerp(top, bot, fp.fy);
    }
    true
}
