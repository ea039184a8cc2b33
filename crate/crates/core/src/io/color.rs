//! Middlebury color-wheel rendering of correspondence fields.

use crate::field::{CorrField, Image};

const SEGMENTS: [usize; 6] = [15, 6, 4, 11, 13, 6];

/// The 55-entry hue wheel, RGB in `[0, 255]`.
pub fn color_wheel() -> Vec<[f64; 3]> {
    let [ry, yg, gc, cb, bm, mr] = SEGMENTS;
    let ramp = |i: usize, n: usize| (255 * i / n) as f64;
    let mut wheel = Vec::with_capacity(SEGMENTS.iter().sum());
    wheel.extend((0..ry).map(|i| [255.0, ramp(i, ry), 0.0]));
    wheel.extend((0..yg).map(|i| [255.0 - ramp(i, yg), 255.0, 0.0]));
    wheel.extend((0..gc).map(|i| [0.0, 255.0, ramp(i, gc)]));
    wheel.extend((0..cb).map(|i| [0.0, 255.0 - ramp(i, cb), 255.0]));
    wheel.extend((0..bm).map(|i| [ramp(i, bm), 0.0, 255.0]));
    wheel.extend((0..mr).map(|i| [255.0, 0.0, 255.0 - ramp(i, mr)]));
    wheel
}

/// 99th-percentile displacement magnitude, or 1 for an all-zero field.
pub fn default_max_magnitude(f: &CorrField) -> f64 {
    let mut mags: Vec<f64> = f.u().iter().zip(f.v()).map(|(u, v)| u.hypot(*v)).collect();
    if mags.is_empty() {
        return 1.0;
    }
    mags.sort_by(f64::total_cmp);
    let idx = ((mags.len() - 1) as f64 * 0.99).round() as usize;
    let m = mags[idx];
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// 8-bit RGB colour of displacement `(u, v)` already divided by the maximum.
pub fn encode_pixel(wheel: &[[f64; 3]], u: f64, v: f64) -> [u8; 3] {
    let n = wheel.len();
    let rad = (u * u + v * v).sqrt();
    let a = (-v).atan2(-u) / std::f64::consts::PI;
    let fk = (a + 1.0) / 2.0 * (n - 1) as f64;
    let k0 = fk.floor() as usize;
    let k1 = if k0 + 1 == n { 0 } else { k0 + 1 };
    let f = fk - k0 as f64;
    let mut rgb = [0u8; 3];
    for c in 0..3 {
        let col = (1.0 - f) * (wheel[k0][c] / 255.0) + f * (wheel[k1][c] / 255.0);
        let col = if rad <= 1.0 {
            1.0 - rad * (1.0 - col)
        } else {
            col * 0.75
        };
        rgb[c] = (255.0 * col).floor() as u8;
    }
    rgb
}

/// Hue encodes direction and saturation encodes magnitude relative to
/// `max_magnitude` (default: [`default_max_magnitude`]). Magnitudes beyond
/// the maximum are darkened.
pub fn flow_to_color(f: &CorrField, max_magnitude: Option<f64>) -> Image {
    let max = max_magnitude
        .filter(|m| m.is_finite() && *m > 0.0)
        .unwrap_or_else(|| default_max_magnitude(f));
    let wheel = color_wheel();
    let (h, w) = (f.height(), f.width());
    let mut px = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = f.at(y, x);
            px.push(encode_pixel(&wheel, u / max, v / max));
        }
    }
    Image::from_fn(h, w, 3, |c, y, x| px[y * w + x][c] as f64 / 255.0)
        .expect("colours lie in [0, 1]")
}
