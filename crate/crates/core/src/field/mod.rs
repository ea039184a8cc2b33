//! Dense 2-D fields and the containers built on them.
//!
//! A [`Field`] is a planar `channels × height × width` array of `f64`.
//! Images, correspondence fields and occlusion masks are thin newtypes
//! over it that enforce their own invariants; the differentiation tape in
//! [`tape`] works on plain fields.

pub mod ops;
pub mod tape;

use std::fmt;

use crate::error::{Error, Result};

pub use ops::{Axis, Order};
pub use tape::{Gradients, Tape, Var};

#[derive(Clone, PartialEq)]
pub struct Field {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Field({}x{}x{}", self.channels, self.height, self.width)?;
        if self.data.len() <= 16 {
            write!(f, ", {:?}", self.data)?;
        }
        write!(f, ")")
    }
}

/// Spatial size and channel count, used in error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

impl Field {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Field {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    /// A 1×1×1 field, the representation of scalars on the tape.
    pub fn scalar(value: f64) -> Self {
        Self::filled(1, 1, 1, value)
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::InvalidField(format!(
                "data length {} does not match {}x{}x{}",
                data.len(),
                channels,
                height,
                width
            )));
        }
        Ok(Field {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds a field from `f(channel, y, x)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Field {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> Shape {
        Shape {
            channels: self.channels,
            height: self.height,
            width: self.width,
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f64) {
        let i = self.index(c, y, x);
        self.data[i] = value;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.pixels();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.pixels();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Copies one channel out as a single-channel field.
    pub fn extract_channel(&self, c: usize) -> Field {
        Field {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.channel(c).to_vec(),
        }
    }

    pub fn same_extent(&self, other: &Field) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn same_shape(&self, other: &Field) -> bool {
        self.same_extent(other) && self.channels == other.channels
    }

    pub(crate) fn check_same_shape(&self, other: &Field, op: &'static str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(op, self.shape(), other.shape()))
        }
    }

    pub(crate) fn check_same_extent(&self, other: &Field, op: &'static str) -> Result<()> {
        if self.same_extent(other) {
            Ok(())
        } else {
            Err(Error::shape(op, self.shape(), other.shape()))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination; callers check shapes.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert!(self.same_shape(other));
        Field {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub(crate) fn add_assign(&mut self, other: &Field) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.sum() / self.data.len() as f64
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Value of a 1×1×1 field.
    pub fn as_scalar(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }
}

/// Image intensities in `[0, 1]`, one or three channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image(Field);

impl Image {
    pub fn new(field: Field) -> Result<Self> {
        if field.channels != 1 && field.channels != 3 {
            return Err(Error::InvalidField(format!(
                "image must have 1 or 3 channels, got {}",
                field.channels
            )));
        }
        if let Some(v) = field
            .data
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::InvalidField(format!(
                "image intensity {v} outside [0, 1]"
            )));
        }
        Ok(Image(field))
    }

    /// Builds an image from `f(channel, y, x)`, clamping values into `[0, 1]`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let field = Field::from_fn(height, width, channels, f).map(|v| v.clamp(0.0, 1.0));
        Image::new(field)
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Image::new(Field::filled(height, width, channels, value))
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn channels(&self) -> usize {
        self.0.channels
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.0.get(c, y, x)
    }

    pub fn as_field(&self) -> &Field {
        &self.0
    }

    pub fn into_field(self) -> Field {
        self.0
    }

    /// Half-resolution copy by 2×2 averaging.
    pub fn downsample(&self) -> Image {
        Image(ops::downsample2(&self.0, 1.0))
    }
}

/// Dense displacement field: channel 0 is `u` (rightward), channel 1 is `v` (downward),
/// both in pixels at the field's own resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrField(Field);

impl CorrField {
    pub fn new(field: Field) -> Result<Self> {
        if field.channels != 2 {
            return Err(Error::InvalidField(format!(
                "correspondence field must have 2 channels, got {}",
                field.channels
            )));
        }
        if !field.all_finite() {
            return Err(Error::InvalidField(
                "correspondence field has non-finite values".into(),
            ));
        }
        Ok(CorrField(field))
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        CorrField(Field::zeros(height, width, 2))
    }

    pub fn constant(height: usize, width: usize, u: f64, v: f64) -> Self {
        CorrField::from_fn(height, width, |_, _| (u, v))
    }

    /// Builds a field from `f(y, x) -> (u, v)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> (f64, f64),
    ) -> Self {
        let mut field = Field::zeros(height, width, 2);
        for y in 0..height {
            for x in 0..width {
                let (u, v) = f(y, x);
                field.set(0, y, x, u);
                field.set(1, y, x, v);
            }
        }
        CorrField(field)
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn u(&self) -> &[f64] {
        self.0.channel(0)
    }

    pub fn v(&self) -> &[f64] {
        self.0.channel(1)
    }

    pub fn at(&self, y: usize, x: usize) -> (f64, f64) {
        (self.0.get(0, y, x), self.0.get(1, y, x))
    }

    pub fn as_field(&self) -> &Field {
        &self.0
    }

    pub fn into_field(self) -> Field {
        self.0
    }

    /// Half-resolution copy; displacements are halved to stay in pixel units.
    pub fn downsample(&self) -> CorrField {
        CorrField(ops::downsample2(&self.0, 0.5))
    }

    /// Bilinear (align-corners) resize with displacements rescaled by the size ratio.
    pub fn upsample(&self, height: usize, width: usize) -> CorrField {
        CorrField(ops::upsample_bilinear(
            &self.0,
            height,
            width,
            &ops::displacement_scales(self.0.height, self.0.width, height, width),
        ))
    }
}

/// Binary visibility mask: 1 = visible, 0 = occluded.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionMap(Field);

impl OcclusionMap {
    pub fn new(field: Field) -> Result<Self> {
        if field.channels != 1 {
            return Err(Error::InvalidField(format!(
                "occlusion map must have 1 channel, got {}",
                field.channels
            )));
        }
        if field.data.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidField(
                "occlusion map values must be 0 or 1".into(),
            ));
        }
        Ok(OcclusionMap(field))
    }

    pub fn all_visible(height: usize, width: usize) -> Self {
        OcclusionMap(Field::filled(height, width, 1, 1.0))
    }

    /// Binarizes a single-channel field: visible iff value ≥ `threshold`.
    pub fn threshold(field: &Field, threshold: f64) -> Result<Self> {
        if field.channels != 1 {
            return Err(Error::InvalidField(format!(
                "cannot binarize a {}-channel field",
                field.channels
            )));
        }
        Ok(OcclusionMap(field.map(|v| {
            if v >= threshold {
                1.0
            } else {
                0.0
            }
        })))
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        OcclusionMap(Field::from_fn(height, width, 1, |_, y, x| {
            if f(y, x) {
                1.0
            } else {
                0.0
            }
        }))
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn is_visible(&self, y: usize, x: usize) -> bool {
        self.0.get(0, y, x) == 1.0
    }

    pub fn count_visible(&self) -> usize {
        self.0.data.iter().filter(|&&v| v == 1.0).count()
    }

    pub fn count_occluded(&self) -> usize {
        self.0.pixels() - self.count_visible()
    }

    /// Pixelwise product (logical and).
    pub fn and(&self, other: &OcclusionMap) -> Result<OcclusionMap> {
        self.0.check_same_shape(&other.0, "occlusion and")?;
        Ok(OcclusionMap(self.0.zip_map(&other.0, |a, b| a * b)))
    }

    pub fn as_field(&self) -> &Field {
        &self.0
    }

    pub fn into_field(self) -> Field {
        self.0
    }
}

/// Intersection-over-union of the occluded (zero) regions of two masks.
/// Returns 1 when neither mask has occluded pixels.
pub fn occluded_iou(a: &OcclusionMap, b: &OcclusionMap) -> Result<f64> {
    a.0.check_same_shape(&b.0, "occluded_iou")?;
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.0.data.iter().zip(&b.0.data) {
        let oa = x == 0.0;
        let ob = y == 0.0;
        if oa && ob {
            inter += 1;
        }
        if oa || ob {
            union += 1;
        }
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}
