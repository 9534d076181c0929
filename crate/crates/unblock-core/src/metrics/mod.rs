//! Full-reference image quality metrics: PSNR, SSIM, and pixel-domain VIF,
//! plus the [`EvalReport`] aggregation used by the evaluation CLI.
//!
//! Conventions (pinned for comparability):
//! * PSNR is computed over all RGB samples jointly, `MAX = 255`, with a
//!   100 dB sentinel for identical images so aggregates stay finite.
//! * SSIM is single-scale on the BT.601 luma plane with an 11×11 Gaussian
//!   window (σ = 1.5), `k1 = 0.01`, `k2 = 0.03`, `L = 255`.
//! * VIF is the pixel-domain multi-scale variant (4 scales, Gaussian
//!   pyramid, scalar GSM model, stabilizing noise variance σ_N² = 2) — not
//!   the steerable-pyramid wavelet VIF, so absolute values differ from
//!   wavelet-domain implementations.
//!
//! All internal arithmetic is `f64`.

use crate::image::{ColorSpace, ImageTensor, PixelRange};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("image dimensions differ: {0:?} vs {1:?}")]
    DimMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("image of size {h}x{w} is too small for an {need}x{need} window")]
    TooSmall { h: usize, w: usize, need: usize },
    #[error(transparent)]
    Image(#[from] crate::image::ImageError),
}

/// SSIM window and stabilization constants (see module docs).
#[derive(Debug, Clone, Copy)]
pub struct SsimConstants {
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
    pub window: usize,
    pub sigma: f64,
}

impl Default for SsimConstants {
    fn default() -> Self {
        Self { k1: 0.01, k2: 0.03, dynamic_range: 255.0, window: 11, sigma: 1.5 }
    }
}

impl SsimConstants {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }
    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }
}

/// Stabilizing GSM noise variance for VIF (σ_N²).
pub const VIF_SIGMA_N_SQ: f64 = 2.0;
/// Number of pyramid scales for VIF.
pub const VIF_SCALES: usize = 4;
/// Sentinel PSNR for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

fn check_dims(x: &ImageTensor, y: &ImageTensor) -> Result<(), MetricsError> {
    if x.data.dim() != y.data.dim() {
        return Err(MetricsError::DimMismatch(x.data.dim(), y.data.dim()));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB over all samples jointly; identical
/// images return the 100 dB cap.
pub fn psnr(x: &ImageTensor, y: &ImageTensor) -> Result<f64, MetricsError> {
    check_dims(x, y)?;
    x.expect_range(PixelRange::Byte)?;
    y.expect_range(PixelRange::Byte)?;
    let mse: f64 = x
        .data
        .iter()
        .zip(y.data.iter())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum::<f64>()
        / x.data.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// BT.601 luma plane of a byte-range RGB image, kept real-valued.
fn luma_plane(img: &ImageTensor) -> Result<Array2<f64>, MetricsError> {
    img.expect_colorspace(ColorSpace::Rgb)?;
    img.expect_range(PixelRange::Byte)?;
    let (h, w, _) = img.data.dim();
    Ok(Array2::from_shape_fn((h, w), |(r, c)| {
        0.299 * img.data[[r, c, 0]] as f64
            + 0.587 * img.data[[r, c, 1]] as f64
            + 0.114 * img.data[[r, c, 2]] as f64
    }))
}

/// Normalized 1-D Gaussian kernel of length `n` and standard deviation
/// `sigma`, sampled at integer offsets from the center.
fn gaussian_kernel(n: usize, sigma: f64) -> Vec<f64> {
    let c = (n as f64 - 1.0) / 2.0;
    let mut k: Vec<f64> = (0..n)
        .map(|i| {
            let d = i as f64 - c;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    k
}

/// Separable valid-mode correlation of `img` with `kernel` in both axes.
/// Output shape is `(h - n + 1, w - n + 1)`.
fn filter_valid(img: &Array2<f64>, kernel: &[f64]) -> Array2<f64> {
    let (h, w) = img.dim();
    let n = kernel.len();
    let mut rows = Array2::zeros((h, w - n + 1));
    for r in 0..h {
        for c in 0..w - n + 1 {
            let mut s = 0.0;
            for (i, &k) in kernel.iter().enumerate() {
                s += k * img[[r, c + i]];
            }
            rows[[r, c]] = s;
        }
    }
    let mut out = Array2::zeros((h - n + 1, w - n + 1));
    for r in 0..h - n + 1 {
        for c in 0..w - n + 1 {
            let mut s = 0.0;
            for (i, &k) in kernel.iter().enumerate() {
                s += k * rows[[r + i, c]];
            }
            out[[r, c]] = s;
        }
    }
    out
}

/// Mean single-scale SSIM of the local map (default constants).
pub fn ssim(x: &ImageTensor, y: &ImageTensor) -> Result<f64, MetricsError> {
    ssim_with(x, y, &SsimConstants::default())
}

/// SSIM with explicit constants; see [`SsimConstants`].
pub fn ssim_with(
    x: &ImageTensor,
    y: &ImageTensor,
    k: &SsimConstants,
) -> Result<f64, MetricsError> {
    check_dims(x, y)?;
    let lx = luma_plane(x)?;
    let ly = luma_plane(y)?;
    let (h, w) = lx.dim();
    if h < k.window || w < k.window {
        return Err(MetricsError::TooSmall { h, w, need: k.window });
    }
    let win = gaussian_kernel(k.window, k.sigma);
    let mu_x = filter_valid(&lx, &win);
    let mu_y = filter_valid(&ly, &win);
    let xx = filter_valid(&(&lx * &lx), &win);
    let yy = filter_valid(&(&ly * &ly), &win);
    let xy = filter_valid(&(&lx * &ly), &win);
    let (c1, c2) = (k.c1(), k.c2());
    let mut acc = 0.0;
    for ((&mx, &my), ((&sxx, &syy), &sxy)) in mu_x
        .iter()
        .zip(mu_y.iter())
        .zip(xx.iter().zip(yy.iter()).zip(xy.iter()))
    {
        let var_x = sxx - mx * mx;
        let var_y = syy - my * my;
        let cov = sxy - mx * my;
        acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
            / ((mx * mx + my * my + c1) * (var_x + var_y + c2));
    }
    Ok(acc / mu_x.len() as f64)
}

/// Pixel-domain visual information fidelity over up to [`VIF_SCALES`]
/// scales. Scales that would leave no valid window are skipped with a
/// warning. `vif(x, x) = 1` exactly.
pub fn vif(x: &ImageTensor, y: &ImageTensor) -> Result<f64, MetricsError> {
    check_dims(x, y)?;
    let mut ref_p = luma_plane(x)?;
    let mut dist_p = luma_plane(y)?;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut used = 0;
    for scale in 1..=VIF_SCALES {
        let n = (1usize << (VIF_SCALES - scale + 1)) + 1; // 17, 9, 5, 3
        let win = gaussian_kernel(n, n as f64 / 5.0);
        if scale > 1 {
            // Smooth and decimate by 2 to move down the pyramid.
            if ref_p.dim().0 < n || ref_p.dim().1 < n {
                break;
            }
            ref_p = decimate2(&filter_valid(&ref_p, &win));
            dist_p = decimate2(&filter_valid(&dist_p, &win));
        }
        let (h, w) = ref_p.dim();
        if h < n || w < n {
            break;
        }
        used = scale;
        let mu_x = filter_valid(&ref_p, &win);
        let mu_y = filter_valid(&dist_p, &win);
        let xx = filter_valid(&(&ref_p * &ref_p), &win);
        let yy = filter_valid(&(&dist_p * &dist_p), &win);
        let xy = filter_valid(&(&ref_p * &dist_p), &win);
        for ((&mx, &my), ((&sxx, &syy), &sxy)) in mu_x
            .iter()
            .zip(mu_y.iter())
            .zip(xx.iter().zip(yy.iter()).zip(xy.iter()))
        {
            let var_x = (sxx - mx * mx).max(0.0);
            let var_y = (syy - my * my).max(0.0);
            let cov = sxy - mx * my;
            // Scalar GSM: g = cov/var_x, residual sv² = var_y - g·cov.
            // Guards keep g and sv² non-negative while preserving the
            // exact identity case (x == y → g = 1, sv² = 0).
            let (g, sv_sq) = if var_x > 0.0 {
                let g = cov / var_x;
                if g < 0.0 {
                    (0.0, var_y)
                } else {
                    (g, (var_y - g * cov).max(0.0))
                }
            } else {
                (0.0, var_y)
            };
            num += (1.0 + g * g * var_x / (sv_sq + VIF_SIGMA_N_SQ)).log10();
            den += (1.0 + var_x / VIF_SIGMA_N_SQ).log10();
        }
    }
    if used < VIF_SCALES {
        log::warn!(
            "vif: image too small for {VIF_SCALES} scales, used {used}"
        );
    }
    if den == 0.0 {
        // Both images constant at every usable scale: no information to
        // lose, treat as perfect fidelity.
        return Ok(1.0);
    }
    Ok(num / den)
}

/// Drop every other row and column (top-left phase).
fn decimate2(img: &Array2<f64>) -> Array2<f64> {
    let (h, w) = img.dim();
    Array2::from_shape_fn((h.div_ceil(2), w.div_ceil(2)), |(r, c)| img[[2 * r, 2 * c]])
}

/// One evaluated image pair.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalRow {
    pub source_id: String,
    pub psnr_db: f64,
    pub ssim: f64,
    pub vif: f64,
}

/// Aggregate metric means.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalAggregate {
    pub psnr_db: f64,
    pub ssim: f64,
    pub vif: f64,
}

/// Per-image metrics plus aggregate means and a config echo.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub per_image: Vec<EvalRow>,
    pub aggregate: EvalAggregate,
    /// Free-form configuration echo (quality setting, checkpoint id, …).
    pub config: String,
}

impl EvalReport {
    /// Serializes as line-delimited JSON: one line per image, then one
    /// aggregate line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for row in &self.per_image {
            out.push_str(&serde_json::to_string(row).expect("row serializes"));
            out.push('\n');
        }
        out.push_str(
            &serde_json::json!({
                "aggregate": self.aggregate,
                "config": self.config,
            })
            .to_string(),
        );
        out.push('\n');
        out
    }

    pub fn from_jsonl(s: &str) -> Result<Self, serde_json::Error> {
        let mut per_image = Vec::new();
        let mut aggregate = None;
        let mut config = String::new();
        for line in s.lines().filter(|l| !l.trim().is_empty()) {
            let v: serde_json::Value = serde_json::from_str(line)?;
            if v.get("aggregate").is_some() {
                aggregate = Some(serde_json::from_value(v["aggregate"].clone())?);
                config = v["config"].as_str().unwrap_or_default().to_string();
            } else {
                per_image.push(serde_json::from_value(v)?);
            }
        }
        let aggregate = aggregate.unwrap_or(EvalAggregate {
            psnr_db: f64::NAN,
            ssim: f64::NAN,
            vif: f64::NAN,
        });
        Ok(Self { per_image, aggregate, config })
    }

    /// Human-readable aligned table with one row per image plus a mean row.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let idw = self
            .per_image
            .iter()
            .map(|r| r.source_id.len())
            .chain(["image".len(), "mean".len()])
            .max()
            .unwrap_or(5);
        out.push_str(&format!(
            "{:idw$}  {:>9}  {:>7}  {:>7}\n",
            "image", "PSNR(dB)", "SSIM", "VIF"
        ));
        for r in &self.per_image {
            out.push_str(&format!(
                "{:idw$}  {:>9.3}  {:>7.4}  {:>7.4}\n",
                r.source_id, r.psnr_db, r.ssim, r.vif
            ));
        }
        out.push_str(&format!(
            "{:idw$}  {:>9.3}  {:>7.4}  {:>7.4}\n",
            "mean", self.aggregate.psnr_db, self.aggregate.ssim, self.aggregate.vif
        ));
        if !self.config.is_empty() {
            out.push_str(&format!("config: {}\n", self.config));
        }
        out
    }
}

/// Direct per-window SSIM evaluation, written independently of the
/// separable-filtering implementation: every 11×11 window is gathered and
/// its statistics computed from scratch. Serves as the test oracle.
pub fn ssim_bruteforce(x: &ImageTensor, y: &ImageTensor) -> Result<f64, MetricsError> {
    let k = SsimConstants::default();
    let lx = luma_plane(x)?;
    let ly = luma_plane(y)?;
    let (h, w) = lx.dim();
    if h < k.window || w < k.window {
        return Err(MetricsError::TooSmall { h, w, need: k.window });
    }
    let win = gaussian_kernel(k.window, k.sigma);
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=h - k.window {
        for c0 in 0..=w - k.window {
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..k.window {
                for j in 0..k.window {
                    let wgt = win[i] * win[j];
                    mx += wgt * lx[[r0 + i, c0 + j]];
                    my += wgt * ly[[r0 + i, c0 + j]];
                }
            }
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..k.window {
                for j in 0..k.window {
                    let wgt = win[i] * win[j];
                    let dx = lx[[r0 + i, c0 + j]];
                    let dy = ly[[r0 + i, c0 + j]];
                    vx += wgt * dx * dx;
                    vy += wgt * dy * dy;
                    cov += wgt * dx * dy;
                }
            }
            vx -= mx * mx;
            vy -= my * my;
            cov -= mx * my;
            total += ((2.0 * mx * my + k.c1()) * (2.0 * cov + k.c2()))
                / ((mx * mx + my * my + k.c1()) * (vx + vy + k.c2()));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Computes all three metrics for every `(reference, candidate)` pair and
/// aggregates the column means.
pub fn evaluate(
    pairs: &[(ImageTensor, ImageTensor)],
    ids: &[String],
    config: &str,
) -> Result<EvalReport, MetricsError> {
    let mut per_image = Vec::with_capacity(pairs.len());
    for (i, (x, y)) in pairs.iter().enumerate() {
        per_image.push(EvalRow {
            source_id: ids.get(i).cloned().unwrap_or_else(|| format!("img{i}")),
            psnr_db: psnr(x, y)?,
            ssim: ssim(x, y)?,
            vif: vif(x, y)?,
        });
    }
    let n = per_image.len().max(1) as f64;
    let aggregate = EvalAggregate {
        psnr_db: per_image.iter().map(|r| r.psnr_db).sum::<f64>() / n,
        ssim: per_image.iter().map(|r| r.ssim).sum::<f64>() / n,
        vif: per_image.iter().map(|r| r.vif).sum::<f64>() / n,
    };
    Ok(EvalReport { per_image, aggregate, config: config.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::synth_image;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn rgb(h: usize, w: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> ImageTensor {
        ImageTensor::new(
            Array3::from_shape_fn((h, w, 3), |(r, c, ch)| f(r, c, ch)),
            PixelRange::Byte,
            ColorSpace::Rgb,
        )
    }

    fn random_img(seed: u64, h: usize, w: usize) -> ImageTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rgb(h, w, |_, _, _| rng.gen_range(0..=255u32) as f32)
    }

    fn noisy(img: &ImageTensor, sigma: f64, seed: u64) -> ImageTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, sigma).unwrap();
        ImageTensor::new(
            img.data.mapv(|v| (v as f64 + n.sample(&mut rng)).round().clamp(0.0, 255.0) as f32),
            PixelRange::Byte,
            ColorSpace::Rgb,
        )
    }

    #[test]
    fn psnr_identity_is_capped() {
        let x = random_img(1, 32, 32);
        assert_eq!(psnr(&x, &x).unwrap(), 100.0);
    }

    #[test]
    fn psnr_constant_offset_closed_form() {
        let x = rgb(16, 16, |_, _, _| 100.0);
        let y = rgb(16, 16, |_, _, _| 116.0);
        let expected = 20.0 * (255.0f64 / 16.0).log10();
        assert!((psnr(&x, &y).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn psnr_symmetry_and_monotonicity() {
        let x = synth_image(7, 64, 64);
        let mut last = f64::INFINITY;
        for (i, sigma) in [5.0, 10.0, 25.0, 50.0].into_iter().enumerate() {
            let y = noisy(&x, sigma, 100 + i as u64);
            let p = psnr(&x, &y).unwrap();
            let q = psnr(&y, &x).unwrap();
            assert_eq!(p, q);
            assert!(p < last, "psnr should drop with noise: {p} !< {last}");
            last = p;
        }
    }

    #[test]
    fn psnr_dim_mismatch_errors() {
        let x = random_img(1, 16, 16);
        let y = random_img(1, 16, 17);
        assert!(matches!(psnr(&x, &y), Err(MetricsError::DimMismatch(_, _))));
    }

    #[test]
    fn ssim_identity() {
        let x = random_img(2, 24, 24);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_symmetry() {
        let x = random_img(3, 24, 24);
        let y = random_img(4, 24, 24);
        assert!((ssim(&x, &y).unwrap() - ssim(&y, &x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ssim_small_constant_shift_stays_high() {
        let x = synth_image(11, 64, 64);
        let y = ImageTensor::new(
            x.data.mapv(|v| (v + 1.0).min(255.0)),
            PixelRange::Byte,
            ColorSpace::Rgb,
        );
        assert!(ssim(&x, &y).unwrap() > 0.99);
    }

    #[test]
    fn ssim_too_small_errors() {
        let x = random_img(5, 8, 8);
        assert!(matches!(ssim(&x, &x), Err(MetricsError::TooSmall { .. })));
    }


    #[test]
    fn ssim_matches_bruteforce_oracle() {
        for seed in 0..4 {
            let x = random_img(50 + seed, 16, 16);
            let y = random_img(60 + seed, 16, 16);
            let fast = ssim(&x, &y).unwrap();
            let slow = ssim_bruteforce(&x, &y).unwrap();
            assert!((fast - slow).abs() < 1e-6, "seed {seed}: {fast} vs {slow}");
        }
    }

    #[test]
    fn vif_identity_is_exactly_one() {
        for seed in [0u64, 9, 42] {
            let x = synth_image(seed, 64, 64);
            assert_eq!(vif(&x, &x).unwrap(), 1.0);
        }
    }

    #[test]
    fn vif_noise_strictly_between_zero_and_one() {
        let x = synth_image(13, 128, 128);
        let y = noisy(&x, 25.0, 77);
        let v = vif(&x, &y).unwrap();
        assert!(v > 0.0 && v < 1.0, "vif = {v}");
    }

    #[test]
    fn vif_small_image_uses_feasible_scales() {
        // 20×20 supports the 17-window first scale but not four scales.
        let x = synth_image(21, 20, 20);
        let y = noisy(&x, 10.0, 5);
        let v = vif(&x, &y).unwrap();
        assert!(v.is_finite() && v >= 0.0);
    }

    #[test]
    fn evaluate_identity_aggregate() {
        let imgs: Vec<_> = (0..3).map(|s| synth_image(s, 32, 32)).collect();
        let pairs: Vec<_> = imgs.iter().map(|i| (i.clone(), i.clone())).collect();
        let ids: Vec<_> = (0..3).map(|i| format!("im{i}")).collect();
        let rep = evaluate(&pairs, &ids, "identity").unwrap();
        assert_eq!(rep.aggregate.psnr_db, 100.0);
        assert_eq!(rep.aggregate.ssim, 1.0);
        assert_eq!(rep.aggregate.vif, 1.0);
        // aggregate equals column means within 1e-9
        let mean_ssim: f64 =
            rep.per_image.iter().map(|r| r.ssim).sum::<f64>() / rep.per_image.len() as f64;
        assert!((rep.aggregate.ssim - mean_ssim).abs() < 1e-9);
    }

    #[test]
    fn evaluate_single_pair_aggregate() {
        let x = synth_image(1, 32, 32);
        let y = noisy(&x, 10.0, 3);
        let rep = evaluate(&[(x, y)], &["a".into()], "").unwrap();
        assert_eq!(rep.aggregate.psnr_db, rep.per_image[0].psnr_db);
        assert_eq!(rep.aggregate.ssim, rep.per_image[0].ssim);
        assert_eq!(rep.aggregate.vif, rep.per_image[0].vif);
    }

    #[test]
    fn report_jsonl_roundtrip() {
        let x = synth_image(1, 32, 32);
        let y = noisy(&x, 10.0, 3);
        let rep = evaluate(&[(x, y)], &["a".into()], "q=1 ckpt=best").unwrap();
        let parsed = EvalReport::from_jsonl(&rep.to_jsonl()).unwrap();
        assert_eq!(rep, parsed);
        let table = rep.to_table();
        assert!(table.contains("PSNR(dB)") && table.contains("mean"));
    }
}
