//! File-format round trips and decoding against fixtures written by an
//! independent encoder (Pillow/NumPy, see `fixtures/make_fixtures.py`).

mod common;

use std::path::PathBuf;

use common::{random_field, rng};
use proptest::prelude::*;
use stcorr::field::{CorrField, Field, OcclusionMap};
use stcorr::io::disparity::{
    decode_kitti_disparity, decode_pfm, encode_kitti_disparity, encode_pfm,
};
use stcorr::io::flow::{decode_flo, decode_kitti_flow, encode_flo, encode_kitti_flow};
use stcorr::io::image::{decode_pnm, encode_png, RawImage};
use stcorr::io::{
    flow_to_color, read_disparity, read_flow, read_image, write_disparity, write_flow, write_image,
    DisparityMap, FlowFile,
};
use stcorr::Error;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn numbers(name: &str) -> Vec<u32> {
    std::fs::read_to_string(fixture(name))
        .unwrap()
        .split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect()
}

#[test]
fn pgm_fixture_matches_reference_values() {
    let img = read_image(fixture("gray4x4.pgm")).unwrap();
    assert_eq!((img.height(), img.width(), img.channels()), (4, 4, 1));
    for (i, v) in numbers("gray4x4.txt").into_iter().enumerate() {
        assert_eq!(img.get(0, i / 4, i % 4), v as f64 / 255.0);
    }
}

#[test]
fn rgb_png_fixture_matches_reference_values() {
    let img = read_image(fixture("rgb3x5.png")).unwrap();
    assert_eq!((img.height(), img.width(), img.channels()), (3, 5, 3));
    for (i, v) in numbers("rgb3x5.txt").into_iter().enumerate() {
        let (p, c) = (i / 3, i % 3);
        assert_eq!(img.get(c, p / 5, p % 5), v as f64 / 255.0);
    }
}

#[test]
fn sixteen_bit_png_normalizes_to_unit_range() {
    let img = read_image(fixture("gray16_2x3.png")).unwrap();
    for (i, v) in numbers("gray16_2x3.txt").into_iter().enumerate() {
        assert_eq!(img.get(0, i / 3, i % 3), v as f64 / 65535.0);
    }
    assert_eq!(img.get(0, 1, 2), 1.0);
}

#[test]
fn eight_bit_images_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(5);
    for (name, c) in [("a.png", 3), ("b.png", 1), ("c.pgm", 1), ("d.ppm", 3)] {
        let q = random_field(&mut r, 6, 7, c, 0.0, 1.0).map(|v| (v * 255.0).round() / 255.0);
        let img = stcorr::field::Image::new(q).unwrap();
        let path = dir.path().join(name);
        write_image(&img, &path).unwrap();
        assert_eq!(read_image(&path).unwrap(), img, "{name}");
    }
}

#[test]
fn malformed_headers_are_rejected() {
    assert!(decode_pnm(b"P7\n2 2\n255\n0000").is_err());
    assert!(decode_pnm(b"P5\n2 2\n255\n00").is_err());
    assert!(decode_flo(&[0u8; 12]).is_err());
    let mut bad_magic = encode_flo(&FlowFile::dense(CorrField::zeros(2, 2)));
    bad_magic[0] ^= 1;
    assert!(matches!(
        decode_flo(&bad_magic),
        Err(Error::UnsupportedFormat(_))
    ));
    let mut truncated = encode_flo(&FlowFile::dense(CorrField::zeros(2, 2)));
    truncated.pop();
    assert!(decode_flo(&truncated).is_err());
    assert!(decode_pfm(b"Pf\n2 2\n-1.0\n").is_err());
    assert!(decode_pfm(b"PX\n1 1\n-1.0\n0000").is_err());
}

fn kitti_flow_png(samples: Vec<u16>, width: usize, height: usize) -> Vec<u8> {
    encode_png(&RawImage {
        width,
        height,
        channels: 3,
        max_value: 65535,
        samples,
    })
    .unwrap()
}

#[test]
fn kitti_flow_channel_encoding() {
    let bytes = kitti_flow_png(
        vec![32768, 32768, 1, 32832, 32704, 1, 40000, 20000, 0],
        3,
        1,
    );
    let f = decode_kitti_flow(&bytes).unwrap();
    assert_eq!(f.flow.at(0, 0), (0.0, 0.0));
    assert_eq!(f.flow.at(0, 1), (1.0, -1.0));
    assert!(f.valid.is_visible(0, 0) && f.valid.is_visible(0, 1));
    assert!(!f.valid.is_visible(0, 2));
    assert_eq!(f.flow.at(0, 2), (0.0, 0.0));
}

#[test]
fn kitti_disparity_encoding() {
    let bytes = encode_png(&RawImage {
        width: 3,
        height: 1,
        channels: 1,
        max_value: 65535,
        samples: vec![256, 0, 1000],
    })
    .unwrap();
    let d = decode_kitti_disparity(&bytes).unwrap();
    assert_eq!(d.disparity.get(0, 0, 0), 1.0);
    assert!(!d.valid.is_visible(0, 1));
    assert_eq!(d.disparity.get(0, 0, 2), 1000.0 / 256.0);
}

#[test]
fn flo_unknown_values_decode_as_invalid() {
    let mut flow = FlowFile::dense(CorrField::constant(2, 2, 1.5, -0.5));
    flow.valid = OcclusionMap::from_fn(2, 2, |y, x| !(y == 1 && x == 0));
    let bytes = encode_flo(&flow);
    let back = decode_flo(&bytes).unwrap();
    assert!(!back.valid.is_visible(1, 0));
    assert_eq!(back.flow.at(1, 0), (0.0, 0.0));
    assert_eq!(encode_flo(&back), bytes);
}

#[test]
fn pfm_big_endian_and_bottom_up_rows() {
    let mut bytes = b"PF\n2 2\n1.0\n".to_vec();
    // PF is three-channel; the first channel is the disparity
    for v in [
        1.0f32,
        0.0,
        0.0,
        2.0,
        0.0,
        0.0,
        3.0,
        0.0,
        0.0,
        f32::INFINITY,
        0.0,
        0.0,
    ] {
        bytes.extend(v.to_be_bytes());
    }
    let d = decode_pfm(&bytes).unwrap();
    assert_eq!(d.disparity.get(0, 1, 0), 1.0);
    assert_eq!(d.disparity.get(0, 1, 1), 2.0);
    assert_eq!(d.disparity.get(0, 0, 0), 3.0);
    assert!(!d.valid.is_visible(0, 1));
}

#[test]
fn file_round_trips_dispatch_on_extension() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(8);
    let flow = FlowFile::dense(CorrField::new(random_field(&mut r, 5, 6, 2, -20.0, 20.0)).unwrap());
    let flo = dir.path().join("f.flo");
    write_flow(&flow, &flo).unwrap();
    let back = read_flow(&flo).unwrap();
    for (a, b) in back
        .flow
        .as_field()
        .data()
        .iter()
        .zip(flow.flow.as_field().data())
    {
        assert_eq!(*a, *b as f32 as f64);
    }
    let bytes = std::fs::read(&flo).unwrap();
    write_flow(&back, &flo).unwrap();
    assert_eq!(std::fs::read(&flo).unwrap(), bytes);

    let png = dir.path().join("f.png");
    write_flow(&flow, &png).unwrap();
    let q = read_flow(&png).unwrap();
    assert!(
        q.flow
            .as_field()
            .zip_map(flow.flow.as_field(), |a, b| (a - b).abs())
            .max_abs()
            <= 1.0 / 128.0
    );

    let disp = DisparityMap::new(
        random_field(&mut r, 5, 6, 1, 0.0, 100.0),
        OcclusionMap::all_visible(5, 6),
    )
    .unwrap();
    for name in ["d.pfm", "d.png"] {
        let path = dir.path().join(name);
        write_disparity(&disp, &path).unwrap();
        let back = read_disparity(&path).unwrap();
        let err = back
            .disparity
            .zip_map(&disp.disparity, |a, b| (a - b).abs())
            .max_abs();
        assert!(err <= 1.0 / 256.0, "{name}: {err}");
    }
    assert!(write_flow(&flow, dir.path().join("f.txt")).is_err());
}

#[test]
fn color_wheel_sweep_matches_reference_image() {
    let flow = read_flow(fixture("wheel_sweep.flo")).unwrap();
    let reference = read_image(fixture("wheel_sweep.ppm")).unwrap();
    let got = flow_to_color(&flow.flow, Some(1.0));
    assert_eq!(
        (got.height(), got.width()),
        (reference.height(), reference.width())
    );
    let mut worst = 0.0f64;
    for c in 0..3 {
        for y in 0..got.height() {
            for x in 0..got.width() {
                worst = worst.max((got.get(c, y, x) - reference.get(c, y, x)).abs() * 255.0);
            }
        }
    }
    assert!(worst < 0.5, "max deviation {worst} levels");
}

fn quantized_flow() -> impl Strategy<Value = FlowFile> {
    (1usize..6, 1usize..6).prop_flat_map(|(h, w)| {
        (
            prop::collection::vec(-500i32 * 64..500 * 64, h * w * 2),
            prop::collection::vec(any::<bool>(), h * w),
        )
            .prop_map(move |(q, valid)| {
                let flow =
                    Field::from_vec(h, w, 2, q.iter().map(|&v| v as f64 / 64.0).collect()).unwrap();
                let valid = OcclusionMap::from_fn(h, w, |y, x| valid[y * w + x]);
                let flow = CorrField::from_fn(h, w, |y, x| {
                    if valid.is_visible(y, x) {
                        (flow.get(0, y, x), flow.get(1, y, x))
                    } else {
                        (0.0, 0.0)
                    }
                });
                FlowFile { flow, valid }
            })
    })
}

proptest! {
    #[test]
    fn flo_round_trip_is_bitwise(h in 1usize..8, w in 1usize..8, seed in any::<u64>()) {
        let f = random_field(&mut rng(seed), h, w, 2, -1e3, 1e3).map(|v| v as f32 as f64);
        let file = FlowFile::dense(CorrField::new(f).unwrap());
        let bytes = encode_flo(&file);
        let back = decode_flo(&bytes).unwrap();
        prop_assert_eq!(&back, &file);
        prop_assert_eq!(encode_flo(&back), bytes);
    }

    #[test]
    fn pfm_round_trip_is_bitwise(h in 1usize..8, w in 1usize..8, seed in any::<u64>()) {
        let d = random_field(&mut rng(seed), h, w, 1, 0.0, 300.0).map(|v| v as f32 as f64);
        let valid = OcclusionMap::threshold(&random_field(&mut rng(seed ^ 1), h, w, 1, 0.0, 1.0), 0.2).unwrap();
        let map = DisparityMap::new(d, valid).unwrap();
        let bytes = encode_pfm(&map);
        let back = decode_pfm(&bytes).unwrap();
        prop_assert_eq!(&back, &map);
        prop_assert_eq!(encode_pfm(&back), bytes);
    }

    #[test]
    fn kitti_flow_is_exact_on_the_64th_grid(file in quantized_flow()) {
        let bytes = encode_kitti_flow(&file).unwrap();
        let back = decode_kitti_flow(&bytes).unwrap();
        prop_assert_eq!(&back, &file);
        prop_assert_eq!(encode_kitti_flow(&back).unwrap(), bytes);
    }

    #[test]
    fn kitti_quantization_is_bounded(h in 1usize..6, w in 1usize..6, seed in any::<u64>()) {
        let f = CorrField::new(random_field(&mut rng(seed), h, w, 2, -400.0, 400.0)).unwrap();
        let back = decode_kitti_flow(&encode_kitti_flow(&FlowFile::dense(f.clone())).unwrap()).unwrap();
        let err = back.flow.as_field().zip_map(f.as_field(), |a, b| (a - b).abs()).max_abs();
        prop_assert!(err <= 1.0 / 128.0 + 1e-12);

        let d = DisparityMap::new(random_field(&mut rng(seed ^ 2), h, w, 1, 0.01, 250.0), OcclusionMap::all_visible(h, w)).unwrap();
        let back = decode_kitti_disparity(&encode_kitti_disparity(&d).unwrap()).unwrap();
        let err = back.disparity.zip_map(&d.disparity, |a, b| (a - b).abs()).max_abs();
        prop_assert!(err <= 1.0 / 512.0 + 1e-12);
    }
}
