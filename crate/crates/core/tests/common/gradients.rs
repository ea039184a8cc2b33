//! Finite-difference checks of every tape operation and composed loss term
//! on 8×8 inputs.

use stcorr::cycle::{Frame, MapId, MapSet};
use stcorr::field::{Axis, Field, Image, OcclusionMap, Order, Tape, Var};
use stcorr::loss::{
    lr_consistency_var, photometric_var, reconstruction_var, smoothness_var, ssim_var,
    total_loss_var, two_warp_photometric_var, EdgeWeights, LossWeights, Objective,
    OcclusionCarrier, ScaleImages, ScaleTerms, TwoWarpVariant,
};
use stcorr::Result;

use super::{
    gradient_error, kink_free_maps, off_lattice_corr, project, random_field, random_image, rng,
};

const N: usize = 8;

pub struct GradCase {
    pub name: String,
    pub error: f64,
}

fn case(
    name: impl Into<String>,
    inputs: &[Field],
    build: impl Fn(&mut Tape, &[Var]) -> Result<Var>,
) -> GradCase {
    GradCase {
        name: name.into(),
        error: gradient_error(inputs, build),
    }
}

/// Values in `±[0.1, 1]`, away from the kinks of `abs` and `clamp_min(·, 0)`.
fn signed_away_from_zero(seed: u64, c: usize) -> Field {
    let magnitudes = random_field(&mut rng(seed), N, N, c, 0.1, 1.0);
    let signs = random_field(&mut rng(seed + 1), N, N, c, -1.0, 1.0);
    magnitudes.zip_map(&signs, |m, s| if s < 0.0 { -m } else { m })
}

fn random_mask(seed: u64) -> Field {
    let r = random_field(&mut rng(seed), N, N, 1, 0.0, 1.0);
    r.map(|v| if v < 0.25 { 0.0 } else { 1.0 })
}

pub fn elementwise_cases() -> Vec<GradCase> {
    let a = random_field(&mut rng(1), N, N, 3, -1.0, 1.0);
    let b = random_field(&mut rng(2), N, N, 3, -1.0, 1.0);
    let pos = random_field(&mut rng(3), N, N, 3, 0.5, 1.5);
    let kinked = signed_away_from_zero(4, 3);
    let ab = [a.clone(), b.clone()];
    vec![
        case("add", &ab, |t, v| {
            let o = t.add(v[0], v[1])?;
            project(t, o, 10)
        }),
        case("sub", &ab, |t, v| {
            let o = t.sub(v[0], v[1])?;
            project(t, o, 11)
        }),
        case("mul", &ab, |t, v| {
            let o = t.mul(v[0], v[1])?;
            project(t, o, 12)
        }),
        case("div", &[a.clone(), pos], |t, v| {
            let o = t.div(v[0], v[1])?;
            project(t, o, 13)
        }),
        case("abs", std::slice::from_ref(&kinked), |t, v| {
            let o = t.abs(v[0]);
            project(t, o, 14)
        }),
        case("square", std::slice::from_ref(&a), |t, v| {
            let o = t.square(v[0]);
            project(t, o, 15)
        }),
        case("exp", std::slice::from_ref(&a), |t, v| {
            let o = t.exp(v[0]);
            project(t, o, 16)
        }),
        case("clamp_min", std::slice::from_ref(&kinked), |t, v| {
            let o = t.clamp_min(v[0], 0.0);
            project(t, o, 17)
        }),
        case("scale", std::slice::from_ref(&a), |t, v| {
            let o = t.scale(v[0], -2.5);
            project(t, o, 18)
        }),
        case("offset", std::slice::from_ref(&a), |t, v| {
            let o = t.offset(v[0], 0.75);
            project(t, o, 19)
        }),
    ]
}

pub fn structural_cases() -> Vec<GradCase> {
    let a = random_field(&mut rng(21), N, N, 3, -1.0, 1.0);
    let corr = random_field(&mut rng(22), N, N, 2, -2.0, 2.0);
    let coarse = random_field(&mut rng(23), N / 2, N / 2, 2, -2.0, 2.0);
    let mask = random_mask(24);
    let mut out = vec![
        case("sum_channels", std::slice::from_ref(&a), |t, v| {
            let o = t.sum_channels(v[0]);
            project(t, o, 30)
        }),
        case("mean_channels", std::slice::from_ref(&a), |t, v| {
            let o = t.mean_channels(v[0]);
            project(t, o, 31)
        }),
    ];
    for r in [1, 2] {
        out.push(case(
            format!("box_filter r={r}"),
            std::slice::from_ref(&a),
            move |t, v| {
                let o = t.box_filter(v[0], r);
                project(t, o, 32)
            },
        ));
    }
    for axis in [Axis::X, Axis::Y] {
        for order in [Order::First, Order::Second] {
            out.push(case(
                format!("spatial_gradient {axis:?} {order:?}"),
                std::slice::from_ref(&a),
                move |t, v| {
                    let o = t.spatial_gradient(v[0], axis, order);
                    project(t, o, 33)
                },
            ));
        }
    }
    for displacement in [false, true] {
        out.push(case(
            format!("downsample displacement={displacement}"),
            std::slice::from_ref(&corr),
            move |t, v| {
                let o = t.downsample(v[0], displacement)?;
                project(t, o, 34)
            },
        ));
        out.push(case(
            format!("upsample displacement={displacement}"),
            std::slice::from_ref(&coarse),
            move |t, v| {
                let o = t.upsample(v[0], N, N, displacement)?;
                project(t, o, 35)
            },
        ));
    }
    let src = random_image(&mut rng(25), N, N, 3).into_field();
    let flow = off_lattice_corr(&mut rng(26), N, N, 3).into_field();
    out.push(case("warp", &[src, flow], |t, v| {
        let o = t.warp(v[0], v[1])?;
        project(t, o, 36)
    }));
    out.push(case("reduce_mean", std::slice::from_ref(&a), |t, v| {
        t.reduce_mean(v[0], None)
    }));
    let m1 = a.extract_channel(0);
    out.push(case(
        "reduce_mean masked",
        std::slice::from_ref(&m1),
        move |t, v| {
            let w = t.constant(random_field(&mut rng(37), N, N, 1, -1.0, 1.0));
            let p = t.mul(v[0], w)?;
            t.reduce_mean(p, Some(&mask))
        },
    ));
    out.push(case(
        "add_all",
        &[m1.clone(), m1.map(|x| 2.0 - x)],
        |t, v| {
            let s0 = project(t, v[0], 38)?;
            let s1 = project(t, v[1], 39)?;
            let sq = t.square(v[0]);
            let s2 = project(t, sq, 40)?;
            t.add_all(&[s0, s1, s2])
        },
    ));
    out
}

pub fn loss_term_cases() -> Vec<GradCase> {
    let weights = LossWeights::default();
    let img_a = random_image(&mut rng(51), N, N, 3);
    // offset keeps |a − b| away from the L1 kink
    let img_b =
        img_a
            .as_field()
            .zip_map(&random_field(&mut rng(52), N, N, 3, -1.0, 1.0), |x, s| {
                if (s < 0.0 && x > 0.4) || x > 0.75 {
                    x - 0.2
                } else {
                    x + 0.2
                }
            });
    let (a, b) = (img_a.as_field().clone(), img_b);
    let mask = random_mask(53);
    let edges = EdgeWeights::new(&random_image(&mut rng(54), N, N, 3), weights.beta);
    let field = random_field(&mut rng(55), N, N, 2, -2.0, 2.0);
    let d_lr = off_lattice_corr(&mut rng(56), N, N, 3).into_field();
    let d_rl = random_field(&mut rng(57), N, N, 2, -3.0, 3.0);

    let mut out = vec![
        case("ssim", &[a.clone(), b.clone()], move |t, v| {
            let o = ssim_var(t, v[0], v[1], &weights)?;
            project(t, o, 60)
        }),
        case("photometric", &[a.clone(), b.clone()], move |t, v| {
            let o = photometric_var(t, v[0], v[1], &weights)?;
            project(t, o, 61)
        }),
        case("reconstruction", &[a, b], move |t, v| {
            reconstruction_var(t, v[0], v[1], &mask, &weights)
        }),
        case("smoothness", &[field], move |t, v| {
            smoothness_var(t, v[0], &edges)
        }),
        case("lr_consistency", &[d_lr, d_rl], |t, v| {
            lr_consistency_var(t, v[0], v[1])
        }),
    ];

    // Every reconstruction compares frames from opposite sides of the
    // bipartite cycle {lt, rt1} | {rt, lt1}; disjoint brightness ranges keep
    // all L1 arguments at least 0.1 from zero.
    let images = ScaleImages::new(
        std::array::from_fn(|i| {
            let bright = Frame::ALL[i] == Frame::LT || Frame::ALL[i] == Frame::RT1;
            let (lo, hi) = if bright { (0.55, 0.95) } else { (0.05, 0.45) };
            Some(Image::new(random_field(&mut rng(70 + i as u64), N, N, 1, lo, hi)).unwrap())
        }),
        weights.beta,
    );
    let maps = kink_free_maps(75, N, N, 2, 2);
    let map_fields: Vec<Field> = MapId::ALL
        .iter()
        .map(|&id| maps.require(id).unwrap().as_field().clone())
        .collect();
    for variant in TwoWarpVariant::ALL {
        for path in variant.paths(OcclusionCarrier::default()) {
            let images = images.clone();
            out.push(case(
                format!("two_warp variant {} target {}", variant.id(), path.target),
                &map_fields,
                move |t, v| {
                    let mut set = MapSet::new();
                    for (id, &var) in MapId::ALL.iter().zip(v) {
                        set.insert(*id, var);
                    }
                    let o = two_warp_photometric_var(t, &images, &set, &path, &weights)?;
                    project(t, o, 80)
                },
            ));
        }
    }

    let occlusion: MapSet<OcclusionMap> =
        MapSet::from_fn(|id| OcclusionMap::new(random_mask(90 + id.index() as u64)).unwrap());
    for scales in [1usize, 2] {
        let images = images.clone();
        let occlusion = occlusion.clone();
        out.push(case(
            format!("total_loss scales={scales}"),
            &map_fields,
            move |t, v| {
                let pyramid = images.clone().pyramid(scales, weights.beta);
                let mut per_scale = vec![MapSet::new()];
                for (id, &var) in MapId::ALL.iter().zip(v) {
                    per_scale[0].insert(*id, var);
                }
                for s in 1..scales {
                    let mut next = MapSet::new();
                    for (id, var) in per_scale[s - 1].iter() {
                        next.insert(id, t.downsample(*var, true)?);
                    }
                    per_scale.push(next);
                }
                let occ_pyramid: Vec<MapSet<OcclusionMap>> = (0..scales)
                    .map(|s| {
                        occlusion.map(|_, m| {
                            let mut f = m.as_field().clone();
                            for _ in 0..s {
                                f = downsample_mask(&f);
                            }
                            OcclusionMap::new(f).unwrap()
                        })
                    })
                    .collect();
                let terms: Vec<ScaleTerms<'_>> = (0..scales)
                    .map(|s| ScaleTerms {
                        images: &pyramid[s],
                        maps: &per_scale[s],
                        occlusion: &occ_pyramid[s],
                    })
                    .collect();
                let objective = Objective::full_cycle(Some(TwoWarpVariant::FlowThenStereo));
                Ok(total_loss_var(t, &terms, &objective, &weights)?.0)
            },
        ));
    }
    out
}

fn downsample_mask(f: &Field) -> Field {
    let (h, w) = (f.height().div_ceil(2), f.width().div_ceil(2));
    Field::from_fn(h, w, 1, |_, y, x| f.get(0, 2 * y, 2 * x))
}

pub fn all_cases() -> Vec<GradCase> {
    let mut out = elementwise_cases();
    out.extend(structural_cases());
    out.extend(loss_term_cases());
    out
}
