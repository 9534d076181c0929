//! Pixel containers shared by every stage of the pipeline.

use ndarray::Array3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColorSpace {
    Rgb,
    YCbCr,
}

/// Declared value range of the samples in an [`ImageTensor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PixelRange {
    /// Integer-valued samples in `[0, 255]`.
    Byte,
    /// Real-valued samples in `[-1, 1]` (model range).
    Signed,
}

impl PixelRange {
    pub fn bounds(self) -> (f32, f32) {
        match self {
            PixelRange::Byte => (0.0, 255.0),
            PixelRange::Signed => (-1.0, 1.0),
        }
    }
}

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("expected {expected:?} input, got {got:?}")]
    WrongColorSpace { expected: ColorSpace, got: ColorSpace },
    #[error("expected samples in {expected:?} range, got {got:?}")]
    WrongRange { expected: PixelRange, got: PixelRange },
    #[error("expected dimensions {expected_h}x{expected_w}x{expected_c}, got {h}x{w}x{c}")]
    WrongShape {
        expected_h: usize,
        expected_w: usize,
        expected_c: usize,
        h: usize,
        w: usize,
        c: usize,
    },
    #[error("image dimensions {h}x{w} must be even (pad the input before encoding)")]
    OddDimensions { h: usize, w: usize },
    #[error("image dimensions {h}x{w} too small, need at least 8x8")]
    TooSmall { h: usize, w: usize },
    #[error("sample {value} at ({row}, {col}, {chan}) outside declared range {range:?}")]
    OutOfRange {
        value: f32,
        row: usize,
        col: usize,
        chan: usize,
        range: PixelRange,
    },
}

/// H×W×C pixel array with a declared value range and color space.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pub data: Array3<f32>,
    pub range: PixelRange,
    pub colorspace: ColorSpace,
}

impl ImageTensor {
    pub fn new(data: Array3<f32>, range: PixelRange, colorspace: ColorSpace) -> Self {
        Self { data, range, colorspace }
    }

    /// All-`value` image of the given shape, byte range.
    pub fn constant(h: usize, w: usize, c: usize, value: f32, colorspace: ColorSpace) -> Self {
        Self::new(Array3::from_elem((h, w, c), value), PixelRange::Byte, colorspace)
    }

    pub fn height(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn expect_colorspace(&self, expected: ColorSpace) -> Result<(), ImageError> {
        if self.colorspace != expected {
            return Err(ImageError::WrongColorSpace { expected, got: self.colorspace });
        }
        Ok(())
    }

    pub fn expect_range(&self, expected: PixelRange) -> Result<(), ImageError> {
        if self.range != expected {
            return Err(ImageError::WrongRange { expected, got: self.range });
        }
        Ok(())
    }

    /// Checks the declared-range invariant over every sample.
    pub fn validate_range(&self) -> Result<(), ImageError> {
        let (lo, hi) = self.range.bounds();
        for ((row, col, chan), &v) in self.data.indexed_iter() {
            if !(lo..=hi).contains(&v) || !v.is_finite() {
                return Err(ImageError::OutOfRange { value: v, row, col, chan, range: self.range });
            }
        }
        Ok(())
    }
}
