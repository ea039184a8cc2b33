//! Middlebury `.flo` and KITTI 16-bit flow PNG.

use std::path::Path;

use super::image::{decode_png, encode_png, RawImage};
use super::{extension, read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::field::{CorrField, OcclusionMap};

pub const FLO_MAGIC: f32 = 202021.25;

/// `.flo` components with magnitude above this mark unknown flow.
pub const FLO_UNKNOWN_THRESHOLD: f32 = 1e9;

const KITTI_OFFSET: f64 = 32768.0;
const KITTI_SCALE: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowFormat {
    Flo,
    KittiPng,
}

impl FlowFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match extension(path).as_str() {
            "flo" => Ok(FlowFormat::Flo),
            "png" => Ok(FlowFormat::KittiPng),
            other => Err(Error::UnsupportedFormat(format!(
                "flow extension `{other}`"
            ))),
        }
    }
}

/// A flow field with its per-pixel validity. Invalid pixels hold zero flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowFile {
    pub flow: CorrField,
    pub valid: OcclusionMap,
}

impl FlowFile {
    pub fn dense(flow: CorrField) -> Self {
        let valid = OcclusionMap::all_visible(flow.height(), flow.width());
        FlowFile { flow, valid }
    }
}

pub fn decode_flo(bytes: &[u8]) -> Result<FlowFile> {
    let word = |i: usize| -> Result<[u8; 4]> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| [b[0], b[1], b[2], b[3]])
            .ok_or_else(|| Error::Malformed("truncated .flo file".into()))
    };
    let magic = f32::from_le_bytes(word(0)?);
    if magic != FLO_MAGIC {
        return Err(Error::UnsupportedFormat(format!(".flo magic {magic}")));
    }
    let w = i32::from_le_bytes(word(1)?);
    let h = i32::from_le_bytes(word(2)?);
    if w <= 0 || h <= 0 {
        return Err(Error::Malformed(format!(".flo extent {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let need = w
        .checked_mul(h)
        .and_then(|p| p.checked_mul(8))
        .and_then(|b| b.checked_add(12))
        .ok_or_else(|| Error::Malformed(".flo dimensions overflow".into()))?;
    if bytes.len() < need {
        return Err(Error::Malformed(format!(
            ".flo has {} of {need} bytes",
            bytes.len()
        )));
    }
    let sample = |i: usize| f32::from_le_bytes(word(3 + i).expect("length checked"));
    let mut valid = vec![true; w * h];
    let flow = CorrField::from_fn(h, w, |y, x| {
        let i = y * w + x;
        let (u, v) = (sample(2 * i), sample(2 * i + 1));
        let known = u.is_finite()
            && v.is_finite()
            && u.abs() <= FLO_UNKNOWN_THRESHOLD
            && v.abs() <= FLO_UNKNOWN_THRESHOLD;
        if known {
            (u as f64, v as f64)
        } else {
            valid[i] = false;
            (0.0, 0.0)
        }
    });
    let valid = OcclusionMap::from_fn(h, w, |y, x| valid[y * w + x]);
    Ok(FlowFile { flow, valid })
}

/// Invalid pixels are written as unknown flow.
pub fn encode_flo(file: &FlowFile) -> Vec<u8> {
    let (h, w) = (file.flow.height(), file.flow.width());
    let mut out = Vec::with_capacity(12 + 8 * w * h);
    out.extend(FLO_MAGIC.to_le_bytes());
    out.extend((w as i32).to_le_bytes());
    out.extend((h as i32).to_le_bytes());
    for y in 0..h {
        for x in 0..w {
            let (u, v) = if file.valid.is_visible(y, x) {
                let (u, v) = file.flow.at(y, x);
                (u as f32, v as f32)
            } else {
                (1e10, 1e10)
            };
            out.extend(u.to_le_bytes());
            out.extend(v.to_le_bytes());
        }
    }
    out
}

/// KITTI layout: 16-bit RGB with `u = (R - 2^15) / 64`, `v = (G - 2^15) / 64`
/// and `B` nonzero where the flow is valid.
pub fn decode_kitti_flow(bytes: &[u8]) -> Result<FlowFile> {
    let raw = decode_png(bytes)?;
    if raw.channels != 3 || raw.max_value != u16::MAX {
        return Err(Error::UnsupportedFormat(
            "KITTI flow must be 16-bit RGB".into(),
        ));
    }
    let (h, w) = (raw.height, raw.width);
    let px = |y: usize, x: usize, c: usize| raw.samples[(y * w + x) * 3 + c];
    let flow = CorrField::from_fn(h, w, |y, x| {
        if px(y, x, 2) == 0 {
            (0.0, 0.0)
        } else {
            (
                (px(y, x, 0) as f64 - KITTI_OFFSET) / KITTI_SCALE,
                (px(y, x, 1) as f64 - KITTI_OFFSET) / KITTI_SCALE,
            )
        }
    });
    let valid = OcclusionMap::from_fn(h, w, |y, x| px(y, x, 2) != 0);
    Ok(FlowFile { flow, valid })
}

/// Flow is quantized to 1/64 px and must fit the 16-bit range.
pub fn encode_kitti_flow(file: &FlowFile) -> Result<Vec<u8>> {
    let (h, w) = (file.flow.height(), file.flow.width());
    let quantize = |d: f64| -> Result<u16> {
        let q = (d * KITTI_SCALE + KITTI_OFFSET).round();
        if !(0.0..=65535.0).contains(&q) {
            return Err(Error::InvalidArgument(format!(
                "flow {d} outside the KITTI range"
            )));
        }
        Ok(q as u16)
    };
    let mut samples = Vec::with_capacity(3 * h * w);
    for y in 0..h {
        for x in 0..w {
            if file.valid.is_visible(y, x) {
                let (u, v) = file.flow.at(y, x);
                samples.extend([quantize(u)?, quantize(v)?, 1]);
            } else {
                samples.extend([0, 0, 0]);
            }
        }
    }
    encode_png(&RawImage {
        width: w,
        height: h,
        channels: 3,
        max_value: u16::MAX,
        samples,
    })
}

pub fn read_flow(path: impl AsRef<Path>) -> Result<FlowFile> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    match FlowFormat::from_path(path)? {
        FlowFormat::Flo => decode_flo(&bytes),
        FlowFormat::KittiPng => decode_kitti_flow(&bytes),
    }
}

pub fn write_flow(file: &FlowFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match FlowFormat::from_path(path)? {
        FlowFormat::Flo => encode_flo(file),
        FlowFormat::KittiPng => encode_kitti_flow(file)?,
    };
    write_bytes(path, &bytes)
}
