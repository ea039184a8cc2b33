//! Forward kernels and their adjoints.
//!
//! Every linear kernel here has an `*_adjoint` twin used by the tape's
//! backward pass. Borders are handled by clamping (edge replication) unless
//! noted otherwise.

use super::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    First,
    Second,
}

/// Finite differences along one axis.
///
/// First order is the forward difference `a[i+1] - a[i]`, second order the
/// central stencil `a[i+1] - 2a[i] + a[i-1]`. Positions where the stencil
/// leaves the field are zero, so an axis too short for the stencil yields an
/// all-zero result.
pub fn spatial_gradient(a: &Field, axis: Axis, order: Order) -> Field {
    let (h, w) = (a.height(), a.width());
    let mut out = Field::zeros(h, w, a.channels());
    for c in 0..a.channels() {
        let src = a.channel(c);
        let dst = out.channel_mut(c);
        for y in 0..h {
            for x in 0..w {
                let (i, n) = match axis {
                    Axis::X => (x, w),
                    Axis::Y => (y, h),
                };
                let stride = match axis {
                    Axis::X => 1,
                    Axis::Y => w,
                };
                let p = y * w + x;
                dst[p] = match order {
                    Order::First if i + 1 < n => src[p + stride] - src[p],
                    Order::Second if i >= 1 && i + 1 < n => {
                        src[p + stride] - 2.0 * src[p] + src[p - stride]
                    }
                    _ => 0.0,
                };
            }
        }
    }
    out
}

pub fn spatial_gradient_adjoint(g: &Field, axis: Axis, order: Order) -> Field {
    let (h, w) = (g.height(), g.width());
    let mut out = Field::zeros(h, w, g.channels());
    for c in 0..g.channels() {
        let gs = g.channel(c);
        let dst = out.channel_mut(c);
        for y in 0..h {
            for x in 0..w {
                let (i, n, stride) = match axis {
                    Axis::X => (x, w, 1),
                    Axis::Y => (y, h, w),
                };
                let p = y * w + x;
                let gv = gs[p];
                match order {
                    Order::First if i + 1 < n => {
                        dst[p + stride] += gv;
                        dst[p] -= gv;
                    }
                    Order::Second if i >= 1 && i + 1 < n => {
                        dst[p + stride] += gv;
                        dst[p] -= 2.0 * gv;
                        dst[p - stride] += gv;
                    }
                    _ => {}
                }
            }
        }
    }
    out
}

fn clamped_taps(n: usize, radius: usize) -> Vec<Vec<usize>> {
    (0..n)
        .map(|i| {
            (0..=2 * radius)
                .map(|k| (i + k).saturating_sub(radius).min(n - 1))
                .collect()
        })
        .collect()
}

/// Mean over a `(2r+1)²` window with edge replication.
pub fn box_filter(a: &Field, radius: usize) -> Field {
    let (h, w) = (a.height(), a.width());
    let k = (2 * radius + 1) as f64;
    let xs = clamped_taps(w, radius);
    let ys = clamped_taps(h, radius);
    let mut out = Field::zeros(h, w, a.channels());
    let mut row_pass = vec![0.0; h * w];
    for c in 0..a.channels() {
        let src = a.channel(c);
        for y in 0..h {
            for x in 0..w {
                row_pass[y * w + x] = xs[x].iter().map(|&xx| src[y * w + xx]).sum::<f64>();
            }
        }
        let dst = out.channel_mut(c);
        for y in 0..h {
            for x in 0..w {
                let s: f64 = ys[y].iter().map(|&yy| row_pass[yy * w + x]).sum();
                dst[y * w + x] = s / (k * k);
            }
        }
    }
    out
}

pub fn box_filter_adjoint(g: &Field, radius: usize) -> Field {
    let (h, w) = (g.height(), g.width());
    let k = (2 * radius + 1) as f64;
    let xs = clamped_taps(w, radius);
    let ys = clamped_taps(h, radius);
    let mut out = Field::zeros(h, w, g.channels());
    let mut col_pass = vec![0.0; h * w];
    for c in 0..g.channels() {
        col_pass.iter_mut().for_each(|v| *v = 0.0);
        let gs = g.channel(c);
        for y in 0..h {
            for x in 0..w {
                let gv = gs[y * w + x] / (k * k);
                for &yy in &ys[y] {
                    col_pass[yy * w + x] += gv;
                }
            }
        }
        let dst = out.channel_mut(c);
        for y in 0..h {
            for x in 0..w {
                let gv = col_pass[y * w + x];
                for &xx in &xs[x] {
                    dst[y * w + xx] += gv;
                }
            }
        }
    }
    out
}

/// 2×2 average pooling, output `ceil(h/2) × ceil(w/2)`; an odd trailing
/// row/column is replicated. Every output value is multiplied by `scale`.
pub fn downsample2(a: &Field, scale: f64) -> Field {
    let (h, w) = (a.height(), a.width());
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Field::zeros(oh, ow, a.channels());
    for c in 0..a.channels() {
        let src = a.channel(c);
        let dst = out.channel_mut(c);
        for y in 0..oh {
            let (y0, y1) = (2 * y, (2 * y + 1).min(h - 1));
            for x in 0..ow {
                let (x0, x1) = (2 * x, (2 * x + 1).min(w - 1));
                let s = src[y0 * w + x0] + src[y0 * w + x1] + src[y1 * w + x0] + src[y1 * w + x1];
                dst[y * ow + x] = 0.25 * s * scale;
            }
        }
    }
    out
}

pub fn downsample2_adjoint(g: &Field, height: usize, width: usize, scale: f64) -> Field {
    let (oh, ow) = (g.height(), g.width());
    let mut out = Field::zeros(height, width, g.channels());
    for c in 0..g.channels() {
        let gs = g.channel(c);
        let dst = out.channel_mut(c);
        for y in 0..oh {
            let (y0, y1) = (2 * y, (2 * y + 1).min(height - 1));
            for x in 0..ow {
                let (x0, x1) = (2 * x, (2 * x + 1).min(width - 1));
                let gv = 0.25 * scale * gs[y * ow + x];
                dst[y0 * width + x0] += gv;
                dst[y0 * width + x1] += gv;
                dst[y1 * width + x0] += gv;
                dst[y1 * width + x1] += gv;
            }
        }
    }
    out
}

/// Per-channel scale factors that keep a displacement field in pixel units
/// when resized from `(sh, sw)` to `(th, tw)`.
pub fn displacement_scales(sh: usize, sw: usize, th: usize, tw: usize) -> [f64; 2] {
    [tw as f64 / sw as f64, th as f64 / sh as f64]
}

#[derive(Clone, Copy)]
struct Lerp {
    i0: usize,
    i1: usize,
    f: f64,
}

fn align_corners_taps(source: usize, target: usize) -> Vec<Lerp> {
    (0..target)
        .map(|t| {
            let s = if target > 1 {
                t as f64 * (source - 1) as f64 / (target - 1) as f64
            } else {
                0.0
            };
            let i0 = (s.floor() as usize).min(source - 1);
            let i1 = (i0 + 1).min(source - 1);
            Lerp {
                i0,
                i1,
                f: s - i0 as f64,
            }
        })
        .collect()
}

/// Align-corners bilinear resize. Channel `c` is multiplied by
/// `channel_scales[c]` when present (1 otherwise).
pub fn upsample_bilinear(a: &Field, height: usize, width: usize, channel_scales: &[f64]) -> Field {
    let (h, w) = (a.height(), a.width());
    let ys = align_corners_taps(h, height);
    let xs = align_corners_taps(w, width);
    let mut out = Field::zeros(height, width, a.channels());
    for c in 0..a.channels() {
        let scale = channel_scales.get(c).copied().unwrap_or(1.0);
        let src = a.channel(c);
        let dst = out.channel_mut(c);
        for (ty, ly) in ys.iter().enumerate() {
            for (tx, lx) in xs.iter().enumerate() {
                let top = (1.0 - lx.f) * src[ly.i0 * w + lx.i0] + lx.f * src[ly.i0 * w + lx.i1];
                let bot = (1.0 - lx.f) * src[ly.i1 * w + lx.i0] + lx.f * src[ly.i1 * w + lx.i1];
                dst[ty * width + tx] = scale * ((1.0 - ly.f) * top + ly.f * bot);
            }
        }
    }
    out
}

pub fn upsample_bilinear_adjoint(
    g: &Field,
    height: usize,
    width: usize,
    channel_scales: &[f64],
) -> Field {
    let (th, tw) = (g.height(), g.width());
    let ys = align_corners_taps(height, th);
    let xs = align_corners_taps(width, tw);
    let mut out = Field::zeros(height, width, g.channels());
    for c in 0..g.channels() {
        let scale = channel_scales.get(c).copied().unwrap_or(1.0);
        let gs = g.channel(c);
        let dst = out.channel_mut(c);
        for (ty, ly) in ys.iter().enumerate() {
            for (tx, lx) in xs.iter().enumerate() {
                let gv = scale * gs[ty * tw + tx];
                dst[ly.i0 * width + lx.i0] += gv * (1.0 - ly.f) * (1.0 - lx.f);
                dst[ly.i0 * width + lx.i1] += gv * (1.0 - ly.f) * lx.f;
                dst[ly.i1 * width + lx.i0] += gv * ly.f * (1.0 - lx.f);
                dst[ly.i1 * width + lx.i1] += gv * ly.f * lx.f;
            }
        }
    }
    out
}

/// Bilinear sampling footprint of one axis at a (possibly clamped) location.
#[derive(Clone, Copy)]
struct AxisSample {
    i0: usize,
    i1: usize,
    f: f64,
    /// False when the coordinate was clamped to the border.
    free: bool,
}

fn axis_sample(pos: f64, n: usize) -> AxisSample {
    let max = (n - 1) as f64;
    let (s, free) = if pos < 0.0 {
        (0.0, false)
    } else if pos > max {
        (max, false)
    } else {
        (pos, true)
    };
    let i0 = if n >= 2 {
        (s.floor() as usize).min(n - 2)
    } else {
        0
    };
    let i1 = (i0 + 1).min(n - 1);
    AxisSample {
        i0,
        i1,
        f: s - i0 as f64,
        free: free && n >= 2,
    }
}

fn warp_samples(corr: &Field) -> Vec<(AxisSample, AxisSample)> {
    let (h, w) = (corr.height(), corr.width());
    let u = corr.channel(0);
    let v = corr.channel(1);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            out.push((
                axis_sample(x as f64 + u[p], w),
                axis_sample(y as f64 + v[p], h),
            ));
        }
    }
    out
}

/// Backward warp: `out(p) = source(p + corr(p))` with bilinear sampling and
/// border-clamped coordinates. Extents must match (checked by callers).
pub fn warp(source: &Field, corr: &Field) -> Field {
    let (h, w) = (source.height(), source.width());
    let samples = warp_samples(corr);
    let mut out = Field::zeros(h, w, source.channels());
    for c in 0..source.channels() {
        let src = source.channel(c);
        let dst = out.channel_mut(c);
        for (p, (sx, sy)) in samples.iter().enumerate() {
            let top = (1.0 - sx.f) * src[sy.i0 * w + sx.i0] + sx.f * src[sy.i0 * w + sx.i1];
            let bot = (1.0 - sx.f) * src[sy.i1 * w + sx.i0] + sx.f * src[sy.i1 * w + sx.i1];
            dst[p] = (1.0 - sy.f) * top + sy.f * bot;
        }
    }
    out
}

/// Adjoint of [`warp`]: returns `(d/d source, d/d corr)` for output gradient `g`.
/// Clamped axes contribute no displacement gradient.
pub fn warp_backward(source: &Field, corr: &Field, g: &Field) -> (Field, Field) {
    let (h, w) = (source.height(), source.width());
    let samples = warp_samples(corr);
    let mut g_src = Field::zeros(h, w, source.channels());
    let mut g_corr = Field::zeros(h, w, 2);
    for c in 0..source.channels() {
        let src = source.channel(c);
        let gs = g.channel(c);
        {
            let dst = g_src.channel_mut(c);
            for (p, (sx, sy)) in samples.iter().enumerate() {
                let gv = gs[p];
                dst[sy.i0 * w + sx.i0] += gv * (1.0 - sy.f) * (1.0 - sx.f);
                dst[sy.i0 * w + sx.i1] += gv * (1.0 - sy.f) * sx.f;
                dst[sy.i1 * w + sx.i0] += gv * sy.f * (1.0 - sx.f);
                dst[sy.i1 * w + sx.i1] += gv * sy.f * sx.f;
            }
        }
        for (p, (sx, sy)) in samples.iter().enumerate() {
            let gv = gs[p];
            let i00 = src[sy.i0 * w + sx.i0];
            let i01 = src[sy.i0 * w + sx.i1];
            let i10 = src[sy.i1 * w + sx.i0];
            let i11 = src[sy.i1 * w + sx.i1];
            if sx.free {
                let d = (1.0 - sy.f) * (i01 - i00) + sy.f * (i11 - i10);
                g_corr.channel_mut(0)[p] += gv * d;
            }
            if sy.free {
                let d = (1.0 - sx.f) * (i10 - i00) + sx.f * (i11 - i01);
                g_corr.channel_mut(1)[p] += gv * d;
            }
        }
    }
    (g_src, g_corr)
}

/// 1 where `p + corr(p)` lies inside `[0, W-1] × [0, H-1]`, else 0.
pub fn validity_mask(corr: &Field) -> Field {
    let (h, w) = (corr.height(), corr.width());
    let u = corr.channel(0);
    let v = corr.channel(1);
    let (xmax, ymax) = ((w - 1) as f64, (h - 1) as f64);
    Field::from_fn(h, w, 1, |_, y, x| {
        let p = y * w + x;
        let sx = x as f64 + u[p];
        let sy = y as f64 + v[p];
        if (0.0..=xmax).contains(&sx) && (0.0..=ymax).contains(&sy) {
            1.0
        } else {
            0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(h: usize, w: usize, c: usize, seed: u64) -> Field {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::from_fn(h, w, c, |_, _, _| rng.random_range(-1.0..1.0))
    }

    fn dot(a: &Field, b: &Field) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn constant_first_order_is_zero() {
        let f = Field::filled(4, 5, 1, 3.0);
        for axis in [Axis::X, Axis::Y] {
            assert!(spatial_gradient(&f, axis, Order::First)
                .data()
                .iter()
                .all(|&v| v == 0.0));
        }
    }

    #[test]
    fn ramp_second_order_is_zero() {
        let f = Field::from_fn(5, 6, 1, |_, _, x| x as f64);
        let g = spatial_gradient(&f, Axis::X, Order::Second);
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn squares_second_order() {
        let f = Field::from_vec(1, 4, 1, vec![1.0, 4.0, 9.0, 16.0]).unwrap();
        let g = spatial_gradient(&f, Axis::X, Order::Second);
        assert_eq!(g.data(), &[0.0, 2.0, 2.0, 0.0]);
        let g1 = spatial_gradient(&f, Axis::X, Order::First);
        assert_eq!(g1.data(), &[3.0, 5.0, 7.0, 0.0]);
    }

    // <A x, y> == <x, A^T y> for every linear kernel.
    #[test]
    fn adjoints_satisfy_dot_product_identity() {
        let x = random_field(5, 7, 2, 1);
        for axis in [Axis::X, Axis::Y] {
            for order in [Order::First, Order::Second] {
                let y = random_field(5, 7, 2, 2);
                let lhs = dot(&spatial_gradient(&x, axis, order), &y);
                let rhs = dot(&x, &spatial_gradient_adjoint(&y, axis, order));
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
        for r in [1, 2] {
            let y = random_field(5, 7, 2, 3);
            let lhs = dot(&box_filter(&x, r), &y);
            let rhs = dot(&x, &box_filter_adjoint(&y, r));
            assert!((lhs - rhs).abs() < 1e-12);
        }
        let y = random_field(3, 4, 2, 4);
        let lhs = dot(&downsample2(&x, 0.5), &y);
        let rhs = dot(&x, &downsample2_adjoint(&y, 5, 7, 0.5));
        assert!((lhs - rhs).abs() < 1e-12);

        let y = random_field(9, 12, 2, 5);
        let s = [2.0, 3.0];
        let lhs = dot(&upsample_bilinear(&x, 9, 12, &s), &y);
        let rhs = dot(&x, &upsample_bilinear_adjoint(&y, 5, 7, &s));
        assert!((lhs - rhs).abs() < 1e-12);

        let corr = random_field(5, 7, 2, 6).map(|v| 2.5 * v);
        let y = random_field(5, 7, 2, 7);
        let lhs = dot(&warp(&x, &corr), &y);
        let (gs, _) = warp_backward(&x, &corr, &y);
        assert!((lhs - dot(&x, &gs)).abs() < 1e-12);
    }

    #[test]
    fn downsample_pools_and_replicates() {
        let f = Field::from_vec(2, 2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(downsample2(&f, 1.0).data(), &[0.5]);
        let odd = Field::from_vec(1, 3, 1, vec![1.0, 3.0, 5.0]).unwrap();
        assert_eq!(downsample2(&odd, 1.0).data(), &[2.0, 5.0]);
    }

    #[test]
    fn ramp_downsample_matches_block_means() {
        let f = Field::from_fn(4, 4, 1, |_, y, x| (4 * y + x) as f64);
        let d = downsample2(&f, 1.0);
        // Oracle: explicit block sums.
        for by in 0..2 {
            for bx in 0..2 {
                let mut s = 0.0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        s += f.get(0, 2 * by + dy, 2 * bx + dx);
                    }
                }
                assert_eq!(d.get(0, by, bx), s / 4.0);
            }
        }
    }

    #[test]
    fn upsample_midpoint_is_corner_mean() {
        let f = Field::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        let u = upsample_bilinear(&f, 3, 3, &[]);
        assert!((u.get(0, 1, 1) - 3.0).abs() < 1e-15);
        assert_eq!(u.get(0, 0, 0), 1.0);
        assert_eq!(u.get(0, 2, 2), 6.0);
    }

    #[test]
    fn box_filter_of_constant_is_constant() {
        let f = Field::filled(4, 3, 1, 0.7);
        assert!(box_filter(&f, 1)
            .data()
            .iter()
            .all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn validity_mask_shift_two_on_width_eight() {
        let mut c = Field::zeros(3, 8, 2);
        c.channel_mut(0).iter_mut().for_each(|v| *v = 2.0);
        let m = validity_mask(&c);
        for y in 0..3 {
            for x in 0..8 {
                assert_eq!(m.get(0, y, x), if x <= 5 { 1.0 } else { 0.0 });
            }
        }
    }
}
