//! ITU-R BT.601 full-range color conversion.

use crate::image::{ColorSpace, ImageError, ImageTensor, PixelRange};
use ndarray::Array3;

#[inline]
fn to_byte(v: f32) -> f32 {
    v.round().clamp(0.0, 255.0)
}

/// RGB → YCbCr, BT.601 full range, rounded to integer sample values.
pub fn rgb_to_ycbcr(img: &ImageTensor) -> Result<ImageTensor, ImageError> {
    img.expect_colorspace(ColorSpace::Rgb)?;
    img.expect_range(PixelRange::Byte)?;
    let (h, w) = (img.height(), img.width());
    let mut out = Array3::zeros((h, w, 3));
    for r in 0..h {
        for c in 0..w {
            let red = img.data[[r, c, 0]];
            let green = img.data[[r, c, 1]];
            let blue = img.data[[r, c, 2]];
            let y = 0.299 * red + 0.587 * green + 0.114 * blue;
            let cb = 128.0 - 0.168_735_9 * red - 0.331_264_1 * green + 0.5 * blue;
            let cr = 128.0 + 0.5 * red - 0.418_687_6 * green - 0.081_312_4 * blue;
            out[[r, c, 0]] = to_byte(y);
            out[[r, c, 1]] = to_byte(cb);
            out[[r, c, 2]] = to_byte(cr);
        }
    }
    Ok(ImageTensor::new(out, PixelRange::Byte, ColorSpace::YCbCr))
}

/// YCbCr → RGB, inverse of [`rgb_to_ycbcr`].
pub fn ycbcr_to_rgb(img: &ImageTensor) -> Result<ImageTensor, ImageError> {
    img.expect_colorspace(ColorSpace::YCbCr)?;
    img.expect_range(PixelRange::Byte)?;
    let (h, w) = (img.height(), img.width());
    let mut out = Array3::zeros((h, w, 3));
    for r in 0..h {
        for c in 0..w {
            let y = img.data[[r, c, 0]];
            let cb = img.data[[r, c, 1]] - 128.0;
            let cr = img.data[[r, c, 2]] - 128.0;
            out[[r, c, 0]] = to_byte(y + 1.402 * cr);
            out[[r, c, 1]] = to_byte(y - 0.344_136_3 * cb - 0.714_136_6 * cr);
            out[[r, c, 2]] = to_byte(y + 1.772 * cb);
        }
    }
    Ok(ImageTensor::new(out, PixelRange::Byte, ColorSpace::Rgb))
}
