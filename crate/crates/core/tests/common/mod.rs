#![allow(dead_code)]

pub mod gradients;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stcorr::cycle::{MapId, MapKind, MapSet};
use stcorr::field::{CorrField, Field, Image, Tape, Var};
use stcorr::Result;

pub const FD_STEP: f64 = 1e-3;
pub const GRAD_TOLERANCE: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_field(rng: &mut impl Rng, h: usize, w: usize, c: usize, lo: f64, hi: f64) -> Field {
    Field::from_fn(h, w, c, |_, _, _| rng.random_range(lo..hi))
}

pub fn random_image(rng: &mut impl Rng, h: usize, w: usize, c: usize) -> Image {
    Image::new(random_field(rng, h, w, c, 0.05, 0.95)).unwrap()
}

/// A field whose every sample `p + corr(p)` lands strictly inside the image
/// with fractional parts in `[0.1, 0.9]`, at most `max` px from `p`. Small
/// perturbations then cross neither the bilinear lattice nor the border.
pub fn off_lattice_corr(rng: &mut impl Rng, h: usize, w: usize, max: usize) -> CorrField {
    let mut axis = |p: usize, n: usize| {
        let lo = p.saturating_sub(max);
        let hi = (p + max).min(n - 2);
        let cell = rng.random_range(lo..=hi);
        cell as f64 + rng.random_range(0.1..0.9) - p as f64
    };
    let mut data = vec![(0.0, 0.0); h * w];
    for y in 0..h {
        for x in 0..w {
            let u = axis(x, w);
            let v = axis(y, h);
            data[y * w + x] = (u, v);
        }
    }
    CorrField::from_fn(h, w, |y, x| data[y * w + x])
}

/// Distance kept between every kink argument and its kink in
/// [`kink_free_maps`]; a central-difference stencil moves any of them by
/// at most a few [`FD_STEP`]s.
pub const KINK_MARGIN: f64 = 0.01;

fn second_differences_clear(data: &[(f64, f64)], w: usize, y: usize, x: usize) -> bool {
    let ok = |a: (f64, f64), b: (f64, f64), c: (f64, f64)| {
        (a.0 - 2.0 * b.0 + c.0).abs() >= KINK_MARGIN && (a.1 - 2.0 * b.1 + c.1).abs() >= KINK_MARGIN
    };
    let at = |yy: usize, xx: usize| data[yy * w + xx];
    (x < 2 || ok(at(y, x - 2), at(y, x - 1), at(y, x)))
        && (y < 2 || ok(at(y - 2, x), at(y - 1, x), at(y, x)))
}

/// Like [`off_lattice_corr`], with every interior second difference at
/// least [`KINK_MARGIN`] from zero so `|∂²corr|` stays differentiable.
fn curved_off_lattice_corr(rng: &mut impl Rng, h: usize, w: usize, max: usize) -> CorrField {
    let axis = |p: usize, n: usize, rng: &mut dyn rand::RngCore| {
        let lo = p.saturating_sub(max);
        let hi = (p + max).min(n - 2);
        let cell = rng.random_range(lo..=hi);
        cell as f64 + rng.random_range(0.1..0.9) - p as f64
    };
    let mut data = vec![(0.0, 0.0); h * w];
    for y in 0..h {
        for x in 0..w {
            loop {
                data[y * w + x] = (axis(x, w, rng), axis(y, h, rng));
                if second_differences_clear(&data, w, y, x) {
                    break;
                }
            }
        }
    }
    CorrField::from_fn(h, w, |y, x| data[y * w + x])
}

fn distance_to_lattice(s: f64) -> f64 {
    (s - s.round()).abs()
}

/// Checks that no kink argument of the full objective lies within
/// [`KINK_MARGIN`] of its kink at any of `scales` pyramid levels: sample
/// positions versus the bilinear lattice and the border, second
/// differences, and left-right residuals.
pub fn kink_free(maps: &MapSet<CorrField>, scales: usize) -> bool {
    let mut level = maps.clone();
    for s in 0..scales {
        if s > 0 {
            level = level.map(|_, c| c.downsample());
        }
        for (_, c) in level.iter() {
            let (h, w) = (c.height(), c.width());
            for y in 0..h {
                for x in 0..w {
                    let (u, v) = c.at(y, x);
                    let (sx, sy) = (x as f64 + u, y as f64 + v);
                    if distance_to_lattice(sx) < KINK_MARGIN
                        || distance_to_lattice(sy) < KINK_MARGIN
                    {
                        return false;
                    }
                    if !(sx > KINK_MARGIN && sx < (w - 1) as f64 - KINK_MARGIN)
                        || !(sy > KINK_MARGIN && sy < (h - 1) as f64 - KINK_MARGIN)
                    {
                        return false;
                    }
                }
            }
            for ch in 0..2 {
                let f = c.as_field();
                for y in 0..h {
                    for x in 0..w {
                        let d2x = (x >= 1 && x + 1 < w).then(|| {
                            f.get(ch, y, x + 1) - 2.0 * f.get(ch, y, x) + f.get(ch, y, x - 1)
                        });
                        let d2y = (y >= 1 && y + 1 < h).then(|| {
                            f.get(ch, y + 1, x) - 2.0 * f.get(ch, y, x) + f.get(ch, y - 1, x)
                        });
                        if [d2x, d2y]
                            .into_iter()
                            .flatten()
                            .any(|d| d.abs() < KINK_MARGIN)
                        {
                            return false;
                        }
                    }
                }
            }
        }
        for id in MapId::ALL {
            if id.kind() != MapKind::Stereo {
                continue;
            }
            let (d_lr, d_rl) = (
                level.require(id).unwrap(),
                level.require(id.reverse()).unwrap(),
            );
            let back = stcorr::warp::warp(d_rl.as_field(), d_lr).unwrap();
            if d_lr
                .as_field()
                .data()
                .iter()
                .zip(back.data())
                .any(|(a, b)| (a + b).abs() < KINK_MARGIN)
            {
                return false;
            }
        }
    }
    true
}

/// Eight maps on which the objective is differentiable in a neighbourhood
/// of every element at `scales` pyramid levels; deterministic per seed.
pub fn kink_free_maps(
    seed: u64,
    h: usize,
    w: usize,
    max: usize,
    scales: usize,
) -> MapSet<CorrField> {
    for attempt in 0.. {
        let mut r = rng(seed.wrapping_mul(1_000_003).wrapping_add(attempt));
        let mut maps = MapSet::new();
        for id in MapId::ALL {
            maps.insert(id, curved_off_lattice_corr(&mut r, h, w, max));
        }
        if kink_free(&maps, scales) {
            return maps;
        }
    }
    unreachable!()
}

/// Collapses a field-valued node to a scalar with fixed random weights so
/// every output element influences the checked gradient.
pub fn project(tape: &mut Tape, out: Var, seed: u64) -> Result<Var> {
    let f = tape.value(out);
    let (h, w, c) = (f.height(), f.width(), f.channels());
    let weights = random_field(&mut rng(seed), h, w, c, -1.0, 1.0);
    let wv = tape.constant(weights);
    let prod = tape.mul(out, wv)?;
    tape.reduce_mean(prod, None)
}

/// Norm-wise relative difference `‖a − b‖ / max(‖a‖, ‖b‖)`; zero when both
/// vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Compares reverse-mode gradients of `build` against central differences
/// with step [`FD_STEP`] for every element of every input. Returns the worst
/// per-input relative error.
pub fn gradient_error(inputs: &[Field], build: impl Fn(&mut Tape, &[Var]) -> Result<Var>) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|f| tape.param(f.clone())).collect();
    let loss = build(&mut tape, &vars).unwrap();
    let grads = tape.backward(loss);
    let analytic: Vec<Field> = vars.iter().map(|&v| grads.wrt(&tape, v)).collect();

    let eval = |fields: &[Field]| -> f64 {
        let mut t = Tape::new();
        let vs: Vec<Var> = fields.iter().map(|f| t.constant(f.clone())).collect();
        let l = build(&mut t, &vs).unwrap();
        t.scalar(l)
    };

    let mut worst = 0.0f64;
    let mut work = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; input.len()];
        for (j, slot) in numeric.iter_mut().enumerate() {
            let x = input.data()[j];
            work[i].data_mut()[j] = x + FD_STEP;
            let plus = eval(&work);
            work[i].data_mut()[j] = x - FD_STEP;
            let minus = eval(&work);
            work[i].data_mut()[j] = x;
            *slot = (plus - minus) / (2.0 * FD_STEP);
        }
        worst = worst.max(relative_error(analytic[i].data(), &numeric));
    }
    worst
}

/// Scalar bilinear sample of channel `c` at `(sx, sy)`, coordinates clamped
/// to the image.
pub fn bilinear_oracle(source: &Field, c: usize, sx: f64, sy: f64) -> f64 {
    let (h, w) = (source.height(), source.width());
    let sx = sx.clamp(0.0, (w - 1) as f64);
    let sy = sy.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
    let corners = [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x1, y0, fx * (1.0 - fy)),
        (x0, y1, (1.0 - fx) * fy),
        (x1, y1, fx * fy),
    ];
    corners
        .iter()
        .map(|&(x, y, wt)| wt * source.get(c, y, x))
        .sum()
}

/// Channel-averaged SSIM map from explicit window loops. Out-of-image taps
/// repeat the nearest border pixel.
pub fn ssim_oracle(a: &Field, b: &Field, c1: f64, c2: f64, radius: usize) -> Field {
    let (h, w) = (a.height(), a.width());
    let per_channel: Vec<Field> = (0..a.channels())
        .map(|c| ssim_channel(&a.extract_channel(c), &b.extract_channel(c), c1, c2, radius))
        .collect();
    Field::from_fn(h, w, 1, |_, y, x| {
        per_channel.iter().map(|f| f.get(0, y, x)).sum::<f64>() / per_channel.len() as f64
    })
}

fn ssim_channel(a: &Field, b: &Field, c1: f64, c2: f64, radius: usize) -> Field {
    let (h, w) = (a.height(), a.width());
    let r = radius as isize;
    let n = ((2 * radius + 1) * (2 * radius + 1)) as f64;
    Field::from_fn(h, w, 1, |c, y, x| {
        let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for dy in -r..=r {
            for dx in -r..=r {
                let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                let (va, vb) = (a.get(c, yy, xx), b.get(c, yy, xx));
                sa += va;
                sb += vb;
                saa += va * va;
                sbb += vb * vb;
                sab += va * vb;
            }
        }
        let (ma, mb) = (sa / n, sb / n);
        let var_a = saa / n - ma * ma;
        let var_b = sbb / n - mb * mb;
        let cov = sab / n - ma * mb;
        ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2))
    })
}

/// Largest deviation of [`stcorr::warp::warp`] from [`bilinear_oracle`] over
/// `cases` random fields and displacements, out-of-image samples included.
pub fn warp_oracle_error(cases: u64) -> f64 {
    let mut worst = 0.0f64;
    for case in 0..cases {
        let mut r = rng(1000 + case);
        let (h, w) = (r.random_range(2..14), r.random_range(2..14));
        let c = r.random_range(1..4);
        let source = random_field(&mut r, h, w, c, -2.0, 2.0);
        let reach = w.max(h) as f64 * 0.75;
        let corr = CorrField::new(random_field(&mut r, h, w, 2, -reach, reach)).unwrap();
        let out = stcorr::warp::warp(&source, &corr).unwrap();
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let (u, v) = corr.at(y, x);
                    let expect = bilinear_oracle(&source, ch, x as f64 + u, y as f64 + v);
                    worst = worst.max((out.get(ch, y, x) - expect).abs());
                }
            }
        }
    }
    worst
}

pub fn mean_epe(a: &CorrField, b: &CorrField) -> f64 {
    let n = (a.height() * a.width()) as f64;
    a.u()
        .iter()
        .zip(a.v())
        .zip(b.u().iter().zip(b.v()))
        .map(|((au, av), (bu, bv))| (au - bu).hypot(av - bv))
        .sum::<f64>()
        / n
}
