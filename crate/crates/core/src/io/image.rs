//! PNG (8/16-bit gray or RGB, non-interlaced) and binary PGM/PPM images.

use std::io::Cursor;
use std::path::Path;

use png::{BitDepth, ColorType, Decoder, Encoder};

use super::{extension, read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::field::{Field, Image};

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

/// Undecoded samples of a PNG or PNM file, row-major and interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// 255 or 65535 for PNG; the header maxval for PNM.
    pub max_value: u16,
    pub samples: Vec<u16>,
}

impl RawImage {
    fn to_image(&self) -> Result<Image> {
        let (w, h, c) = (self.width, self.height, self.channels);
        let scale = self.max_value as f64;
        let field = Field::from_fn(h, w, c, |ch, y, x| {
            self.samples[(y * w + x) * c + ch] as f64 / scale
        });
        Image::new(field)
    }

    fn from_image(image: &Image, max_value: u16) -> Self {
        let (h, w, c) = (image.height(), image.width(), image.channels());
        let scale = max_value as f64;
        let mut samples = Vec::with_capacity(h * w * c);
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    samples.push((image.get(ch, y, x) * scale).round() as u16);
                }
            }
        }
        RawImage {
            width: w,
            height: h,
            channels: c,
            max_value,
            samples,
        }
    }
}

pub fn decode_png(bytes: &[u8]) -> Result<RawImage> {
    if !bytes.starts_with(&PNG_SIGNATURE) {
        return Err(Error::UnsupportedFormat("missing PNG signature".into()));
    }
    let mut reader = Decoder::new(Cursor::new(bytes)).read_info()?;
    let info = reader.info();
    if info.interlaced {
        return Err(Error::UnsupportedFormat("interlaced PNG".into()));
    }
    let channels = match info.color_type {
        ColorType::Grayscale => 1,
        ColorType::Rgb => 3,
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "PNG color type {other:?}"
            )))
        }
    };
    let depth = info.bit_depth;
    if depth != BitDepth::Eight && depth != BitDepth::Sixteen {
        return Err(Error::UnsupportedFormat(format!("PNG bit depth {depth:?}")));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Malformed("PNG too large".into()))?;
    let mut buf = vec![0u8; size];
    let out = reader.next_frame(&mut buf)?;
    let (w, h) = (out.width as usize, out.height as usize);
    let n = w * h * channels;
    let (samples, max_value) = if depth == BitDepth::Sixteen {
        let mut s = Vec::with_capacity(n);
        for y in 0..h {
            let row = &buf[y * out.line_size..y * out.line_size + 2 * w * channels];
            s.extend(
                row.chunks_exact(2)
                    .map(|b| u16::from_be_bytes([b[0], b[1]])),
            );
        }
        (s, u16::MAX)
    } else {
        let mut s = Vec::with_capacity(n);
        for y in 0..h {
            let row = &buf[y * out.line_size..y * out.line_size + w * channels];
            s.extend(row.iter().map(|&b| b as u16));
        }
        (s, 255)
    };
    Ok(RawImage {
        width: w,
        height: h,
        channels,
        max_value,
        samples,
    })
}

/// Encodes 8-bit (`max_value` 255) or 16-bit (`max_value` 65535) PNG.
pub fn encode_png(raw: &RawImage) -> Result<Vec<u8>> {
    let color = match raw.channels {
        1 => ColorType::Grayscale,
        3 => ColorType::Rgb,
        c => return Err(Error::UnsupportedFormat(format!("{c}-channel PNG"))),
    };
    let depth = match raw.max_value {
        255 => BitDepth::Eight,
        u16::MAX => BitDepth::Sixteen,
        m => return Err(Error::UnsupportedFormat(format!("PNG max value {m}"))),
    };
    let mut out = Vec::new();
    {
        let mut enc = Encoder::new(&mut out, raw.width as u32, raw.height as u32);
        enc.set_color(color);
        enc.set_depth(depth);
        let mut writer = enc.write_header()?;
        let data: Vec<u8> = if depth == BitDepth::Sixteen {
            raw.samples.iter().flat_map(|s| s.to_be_bytes()).collect()
        } else {
            raw.samples.iter().map(|&s| s as u8).collect()
        };
        writer.write_image_data(&data)?;
        writer.finish()?;
    }
    Ok(out)
}

fn pnm_tokens(bytes: &[u8], count: usize) -> Result<(Vec<u32>, usize)> {
    let mut pos = 2;
    let mut values = Vec::with_capacity(count);
    while values.len() < count {
        match bytes.get(pos) {
            None => return Err(Error::Malformed("truncated PNM header".into())),
            Some(b'#') => {
                while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                    pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            Some(b) if b.is_ascii_digit() => {
                let start = pos;
                while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
                    pos += 1;
                }
                let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
                let v = text.parse().map_err(|_| {
                    Error::Malformed(format!("PNM header value `{text}` out of range"))
                })?;
                values.push(v);
            }
            Some(b) => {
                return Err(Error::Malformed(format!(
                    "unexpected byte {b:#04x} in PNM header"
                )))
            }
        }
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => Ok((values, pos + 1)),
        _ => Err(Error::Malformed(
            "PNM header not followed by whitespace".into(),
        )),
    }
}

/// Binary PGM (`P5`) or PPM (`P6`).
pub fn decode_pnm(bytes: &[u8]) -> Result<RawImage> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(Error::UnsupportedFormat("not a binary PGM/PPM file".into())),
    };
    let (header, start) = pnm_tokens(bytes, 3)?;
    let (w, h, maxval) = (header[0] as usize, header[1] as usize, header[2]);
    if w == 0 || h == 0 {
        return Err(Error::Malformed(format!("PNM extent {w}x{h}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Malformed(format!("PNM maxval {maxval}")));
    }
    let n = w
        .checked_mul(h)
        .and_then(|p| p.checked_mul(channels))
        .ok_or_else(|| Error::Malformed("PNM dimensions overflow".into()))?;
    let wide = maxval > 255;
    let need = if wide { 2 * n } else { n };
    let data = &bytes[start..];
    if data.len() < need {
        return Err(Error::Malformed(format!(
            "PNM raster has {} of {need} bytes",
            data.len()
        )));
    }
    let samples: Vec<u16> = if wide {
        data[..need]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]))
            .collect()
    } else {
        data[..need].iter().map(|&b| b as u16).collect()
    };
    if let Some(s) = samples.iter().find(|&&s| s as u32 > maxval) {
        return Err(Error::Malformed(format!(
            "PNM sample {s} exceeds maxval {maxval}"
        )));
    }
    Ok(RawImage {
        width: w,
        height: h,
        channels,
        max_value: maxval as u16,
        samples,
    })
}

pub fn encode_pnm(raw: &RawImage) -> Result<Vec<u8>> {
    let magic = match raw.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::UnsupportedFormat(format!("{c}-channel PNM"))),
    };
    let mut out =
        format!("{magic}\n{} {}\n{}\n", raw.width, raw.height, raw.max_value).into_bytes();
    if raw.max_value > 255 {
        out.extend(raw.samples.iter().flat_map(|s| s.to_be_bytes()));
    } else {
        out.extend(raw.samples.iter().map(|&s| s as u8));
    }
    Ok(out)
}

pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    let raw = if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)?
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(bytes)?
    } else {
        return Err(Error::UnsupportedFormat(
            "expected PNG or binary PGM/PPM".into(),
        ));
    };
    raw.to_image()
}

/// Reads a PNG or binary PGM/PPM, detected by content, into `[0, 1]`.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    decode_image(&read_bytes(path.as_ref())?)
}

/// Writes 8-bit samples; the format follows the extension (`png`, `pgm`,
/// `ppm`, or `pnm`).
pub fn write_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw = RawImage::from_image(image, 255);
    let bytes = match extension(path).as_str() {
        "png" => encode_png(&raw)?,
        "pgm" | "ppm" | "pnm" => encode_pnm(&raw)?,
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "image extension `{other}`"
            )))
        }
    };
    write_bytes(path, &bytes)
}

/// Writes a 16-bit PNG.
pub fn write_image_16(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let raw = RawImage::from_image(image, u16::MAX);
    write_bytes(path.as_ref(), &encode_png(&raw)?)
}
