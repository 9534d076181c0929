//! Deterministic synthetic test images.
//!
//! Smooth random fields with blob structure and mild pixel noise, loosely
//! imitating the statistics of downscaled photographs. Used by the test
//! suites and the `gen-corpus` CLI helper so the pipeline can be exercised
//! without an external dataset.

use crate::image::{ColorSpace, ImageTensor, PixelRange};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One random RGB image of the given size, byte range.
pub fn synth_image(seed: u64, h: usize, w: usize) -> ImageTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Array3::zeros((h, w, 3));

    // coarse 8x8 lattice per channel, bilinearly interpolated
    let lattice: Vec<[[f32; 8]; 8]> = (0..3)
        .map(|_| std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(30.0..225.0))))
        .collect();
    for r in 0..h {
        for c in 0..w {
            let fy = r as f32 / h as f32 * 7.0;
            let fx = c as f32 / w as f32 * 7.0;
            let (y0, x0) = (fy as usize, fx as usize);
            let (y1, x1) = ((y0 + 1).min(7), (x0 + 1).min(7));
            let (ty, tx) = (fy - y0 as f32, fx - x0 as f32);
            for ch in 0..3 {
                let l = &lattice[ch];
                let v = l[y0][x0] * (1.0 - ty) * (1.0 - tx)
                    + l[y0][x1] * (1.0 - ty) * tx
                    + l[y1][x0] * ty * (1.0 - tx)
                    + l[y1][x1] * ty * tx;
                data[[r, c, ch]] = v;
            }
        }
    }

    // a few soft elliptical blobs
    for _ in 0..rng.gen_range(2..6) {
        let cy = rng.gen_range(0.0..h as f32);
        let cx = rng.gen_range(0.0..w as f32);
        let ry = rng.gen_range(h as f32 / 10.0..h as f32 / 3.0);
        let rx = rng.gen_range(w as f32 / 10.0..w as f32 / 3.0);
        let amp: [f32; 3] = std::array::from_fn(|_| rng.gen_range(-60.0..60.0));
        for r in 0..h {
            for c in 0..w {
                let d = ((r as f32 - cy) / ry).powi(2) + ((c as f32 - cx) / rx).powi(2);
                if d < 1.0 {
                    let falloff = (1.0 - d).powi(2);
                    for ch in 0..3 {
                        data[[r, c, ch]] += amp[ch] * falloff;
                    }
                }
            }
        }
    }

    // sensor-style pixel noise keeps PNG from compressing unrealistically well
    for v in data.iter_mut() {
        *v = (*v + rng.gen_range(-9.0..9.0)).round().clamp(0.0, 255.0);
    }
    ImageTensor::new(data, PixelRange::Byte, ColorSpace::Rgb)
}

/// `n` images with seeds `base_seed..base_seed + n`.
pub fn synth_corpus(base_seed: u64, n: usize, h: usize, w: usize) -> Vec<ImageTensor> {
    (0..n).map(|i| synth_image(base_seed + i as u64, h, w)).collect()
}

/// A noise-free smooth random image: a bilinearly interpolated coarse
/// random lattice (one control point every 16 pixels). Chroma varies slowly,
/// like photographic content after downscaling; useful where per-pixel
/// noise would dominate an error budget (4:2:0 subsampling, resize
/// round-trips).
pub fn synth_smooth_image(seed: u64, h: usize, w: usize) -> ImageTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x536d6f6f7468);
    let (gh, gw) = (h.div_ceil(16) + 1, w.div_ceil(16) + 1);
    let lattice = Array3::from_shape_fn((gh, gw, 3), |_| rng.gen_range(0.0f32..=255.0));
    let data = Array3::from_shape_fn((h, w, 3), |(r, c, ch)| {
        let fy = r as f32 / 16.0;
        let fx = c as f32 / 16.0;
        let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(gh - 1), (x0 + 1).min(gw - 1));
        let (dy, dx) = (fy - y0 as f32, fx - x0 as f32);
        let v = lattice[[y0, x0, ch]] * (1.0 - dy) * (1.0 - dx)
            + lattice[[y0, x1, ch]] * (1.0 - dy) * dx
            + lattice[[y1, x0, ch]] * dy * (1.0 - dx)
            + lattice[[y1, x1, ch]] * dy * dx;
        v.round().clamp(0.0, 255.0)
    });
    ImageTensor::new(data, PixelRange::Byte, ColorSpace::Rgb)
}
