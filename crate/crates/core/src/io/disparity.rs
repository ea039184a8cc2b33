//! KITTI 16-bit disparity PNG and PFM.
//!
//! Disparities are stored as non-negative magnitudes; the left-to-right
//! stereo field they describe is `(-d, 0)`.

use std::path::Path;

use super::image::{decode_png, encode_png, RawImage};
use super::{extension, read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::field::{CorrField, Field, OcclusionMap};

const KITTI_SCALE: f64 = 256.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisparityFormat {
    KittiPng,
    Pfm,
}

impl DisparityFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match extension(path).as_str() {
            "png" => Ok(DisparityFormat::KittiPng),
            "pfm" => Ok(DisparityFormat::Pfm),
            other => Err(Error::UnsupportedFormat(format!(
                "disparity extension `{other}`"
            ))),
        }
    }
}

/// Single-channel disparity with validity. Invalid pixels hold zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    pub disparity: Field,
    pub valid: OcclusionMap,
}

impl DisparityMap {
    pub fn new(disparity: Field, valid: OcclusionMap) -> Result<Self> {
        if disparity.channels() != 1 {
            return Err(Error::InvalidField(format!(
                "disparity must have 1 channel, got {}",
                disparity.channels()
            )));
        }
        disparity.check_same_extent(valid.as_field(), "DisparityMap::new")?;
        let disparity = Field::from_fn(disparity.height(), disparity.width(), 1, |_, y, x| {
            if valid.is_visible(y, x) {
                disparity.get(0, y, x)
            } else {
                0.0
            }
        });
        if !disparity.all_finite() {
            return Err(Error::InvalidField(
                "disparity has non-finite values".into(),
            ));
        }
        Ok(DisparityMap { disparity, valid })
    }

    /// Disparity magnitude `-u` of a left-to-right stereo field.
    pub fn from_corr(corr: &CorrField) -> Self {
        let (h, w) = (corr.height(), corr.width());
        DisparityMap {
            disparity: Field::from_fn(h, w, 1, |_, y, x| -corr.at(y, x).0),
            valid: OcclusionMap::all_visible(h, w),
        }
    }

    pub fn to_corr(&self) -> CorrField {
        CorrField::from_fn(self.disparity.height(), self.disparity.width(), |y, x| {
            (-self.disparity.get(0, y, x), 0.0)
        })
    }
}

/// Disparity is `value / 256`; zero marks invalid pixels.
pub fn decode_kitti_disparity(bytes: &[u8]) -> Result<DisparityMap> {
    let raw = decode_png(bytes)?;
    if raw.channels != 1 || raw.max_value != u16::MAX {
        return Err(Error::UnsupportedFormat(
            "KITTI disparity must be 16-bit grayscale".into(),
        ));
    }
    let (h, w) = (raw.height, raw.width);
    let disparity = Field::from_fn(h, w, 1, |_, y, x| {
        raw.samples[y * w + x] as f64 / KITTI_SCALE
    });
    let valid = OcclusionMap::from_fn(h, w, |y, x| raw.samples[y * w + x] != 0);
    Ok(DisparityMap { disparity, valid })
}

pub fn encode_kitti_disparity(map: &DisparityMap) -> Result<Vec<u8>> {
    let (h, w) = (map.disparity.height(), map.disparity.width());
    let mut samples = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            if !map.valid.is_visible(y, x) {
                samples.push(0);
                continue;
            }
            let d = map.disparity.get(0, y, x);
            let q = (d * KITTI_SCALE).round();
            if !(1.0..=65535.0).contains(&q) {
                return Err(Error::InvalidArgument(format!(
                    "disparity {d} not representable in KITTI format"
                )));
            }
            samples.push(q as u16);
        }
    }
    encode_png(&RawImage {
        width: w,
        height: h,
        channels: 1,
        max_value: u16::MAX,
        samples,
    })
}

fn pfm_header(bytes: &[u8]) -> Result<(Vec<&str>, usize)> {
    // three whitespace-separated lines: magic, "w h", scale
    let mut tokens = Vec::with_capacity(4);
    let mut pos = 0;
    let mut lines = 0;
    while lines < 3 {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Malformed("truncated PFM header".into()))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| Error::Malformed("PFM header is not text".into()))?;
        tokens.extend(line.split_whitespace());
        pos += end + 1;
        lines += 1;
    }
    Ok((tokens, pos))
}

/// `Pf` (gray) or `PF` (colour, first channel kept). Rows run bottom to top;
/// a negative scale means little-endian. Non-finite values are invalid.
pub fn decode_pfm(bytes: &[u8]) -> Result<DisparityMap> {
    let (tokens, start) = pfm_header(bytes)?;
    let channels = match tokens.first().copied() {
        Some("Pf") => 1,
        Some("PF") => 3,
        _ => return Err(Error::UnsupportedFormat("not a PFM file".into())),
    };
    if tokens.len() != 4 {
        return Err(Error::Malformed(
            "PFM header needs width, height and scale".into(),
        ));
    }
    let parse_dim = |t: &str| -> Result<usize> {
        t.parse::<usize>()
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::Malformed(format!("PFM dimension `{t}`")))
    };
    let (w, h) = (parse_dim(tokens[1])?, parse_dim(tokens[2])?);
    let scale: f64 = tokens[3]
        .parse()
        .ok()
        .filter(|s: &f64| s.is_finite() && *s != 0.0)
        .ok_or_else(|| Error::Malformed(format!("PFM scale `{}`", tokens[3])))?;
    let little = scale < 0.0;
    let need = w
        .checked_mul(h)
        .and_then(|p| p.checked_mul(4 * channels))
        .ok_or_else(|| Error::Malformed("PFM dimensions overflow".into()))?;
    let data = &bytes[start..];
    if data.len() < need {
        return Err(Error::Malformed(format!(
            "PFM raster has {} of {need} bytes",
            data.len()
        )));
    }
    let value = |y: usize, x: usize| {
        let row = h - 1 - y;
        let i = 4 * channels * (row * w + x);
        let b = [data[i], data[i + 1], data[i + 2], data[i + 3]];
        if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        }
    };
    let valid = OcclusionMap::from_fn(h, w, |y, x| value(y, x).is_finite());
    let disparity = Field::from_fn(h, w, 1, |_, y, x| {
        let v = value(y, x);
        if v.is_finite() {
            v as f64
        } else {
            0.0
        }
    });
    Ok(DisparityMap { disparity, valid })
}

/// Little-endian `Pf` with invalid pixels written as infinity.
pub fn encode_pfm(map: &DisparityMap) -> Vec<u8> {
    let (h, w) = (map.disparity.height(), map.disparity.width());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    for y in (0..h).rev() {
        for x in 0..w {
            let v = if map.valid.is_visible(y, x) {
                map.disparity.get(0, y, x) as f32
            } else {
                f32::INFINITY
            };
            out.extend(v.to_le_bytes());
        }
    }
    out
}

pub fn read_disparity(path: impl AsRef<Path>) -> Result<DisparityMap> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    match DisparityFormat::from_path(path)? {
        DisparityFormat::KittiPng => decode_kitti_disparity(&bytes),
        DisparityFormat::Pfm => decode_pfm(&bytes),
    }
}

pub fn write_disparity(map: &DisparityMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match DisparityFormat::from_path(path)? {
        DisparityFormat::KittiPng => encode_kitti_disparity(map)?,
        DisparityFormat::Pfm => encode_pfm(map),
    };
    write_bytes(path, &bytes)
}
