//! Paired training corpus: original images and their
//! compressed-then-decoded counterparts, the 8:2 split, resolution
//! adapters (128 ↔ 512 bilinear), and model-range normalization.
//!
//! The dataset is materialized to disk (original PNG + compressed PNG +
//! line-delimited manifest) rather than compressed on the fly, so training
//! runs are deterministic and inspectable.

use crate::codec;
use crate::image::{ColorSpace, ImageTensor, PixelRange};
use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("failed to decode image {path}: {source}")]
    Decode { path: PathBuf, source: image::ImageError },
    #[error("failed to write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("failed to encode image {path}: {source}")]
    Encode { path: PathBuf, source: image::ImageError },
    #[error("no usable 128x128 PNG images found in {0}")]
    EmptyCorpus(PathBuf),
    #[error("manifest parse error: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Codec(#[from] codec::CodecError),
    #[error(transparent)]
    Image(#[from] crate::image::ImageError),
}

/// One element of the paired corpus: an original and its
/// compress-then-decode counterpart, with size evidence.
#[derive(Debug, Clone)]
pub struct PairedSample {
    pub original: ImageTensor,
    pub compressed: ImageTensor,
    pub source_id: String,
    pub png_bytes: usize,
    pub jpeg_bytes: usize,
}

/// Deterministic train/test partition.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<PairedSample>,
    pub test: Vec<PairedSample>,
    pub seed: u64,
}

/// Result of scanning a source directory: built pairs plus the paths that
/// were skipped for having the wrong dimensions.
#[derive(Debug)]
pub struct BuildOutcome {
    pub pairs: Vec<PairedSample>,
    pub skipped: Vec<PathBuf>,
}

/// One manifest record, serialized as a JSON line.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ManifestRecord {
    pub source_id: String,
    pub original_path: String,
    pub compressed_path: String,
    pub png_bytes: usize,
    pub jpeg_bytes: usize,
    pub quality: u8,
}

/// Side length of corpus images.
pub const SAMPLE_SIZE: usize = 128;
/// Side length at which the generator operates.
pub const MODEL_SIZE: usize = 512;

/// Reads a PNG (or any format the `image` crate detects) as a byte-range
/// RGB tensor.
pub fn load_png(path: &Path) -> Result<ImageTensor, DatasetError> {
    let bytes = std::fs::read(path)
        .map_err(|source| DatasetError::Read { path: path.into(), source })?;
    let img = image::load_from_memory(&bytes)
        .map_err(|source| DatasetError::Decode { path: path.into(), source })?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = Array3::from_shape_fn((h, w, 3), |(r, c, ch)| {
        img.get_pixel(c as u32, r as u32).0[ch] as f32
    });
    Ok(ImageTensor::new(data, PixelRange::Byte, ColorSpace::Rgb))
}

/// Writes a byte-range RGB tensor as a PNG file.
pub fn save_png(img: &ImageTensor, path: &Path) -> Result<(), DatasetError> {
    img.expect_colorspace(ColorSpace::Rgb)?;
    img.expect_range(PixelRange::Byte)?;
    let (h, w, _) = img.data.dim();
    let mut out = image::RgbImage::new(w as u32, h as u32);
    for r in 0..h {
        for c in 0..w {
            out.put_pixel(
                c as u32,
                r as u32,
                image::Rgb([
                    img.data[[r, c, 0]] as u8,
                    img.data[[r, c, 1]] as u8,
                    img.data[[r, c, 2]] as u8,
                ]),
            );
        }
    }
    out.save(path)
        .map_err(|source| DatasetError::Encode { path: path.into(), source })
}

/// PNG-encoded size of an image in bytes (in memory, no file written).
pub fn png_encoded_size(img: &ImageTensor) -> Result<usize, DatasetError> {
    let (h, w, _) = img.data.dim();
    let mut rgb = image::RgbImage::new(w as u32, h as u32);
    for r in 0..h {
        for c in 0..w {
            rgb.put_pixel(
                c as u32,
                r as u32,
                image::Rgb([
                    img.data[[r, c, 0]] as u8,
                    img.data[[r, c, 1]] as u8,
                    img.data[[r, c, 2]] as u8,
                ]),
            );
        }
    }
    let mut buf = std::io::Cursor::new(Vec::new());
    rgb.write_to(&mut buf, image::ImageFormat::Png)
        .map_err(|source| DatasetError::Encode { path: PathBuf::new(), source })?;
    Ok(buf.into_inner().len())
}

/// Builds one pair from an in-memory original.
pub fn make_pair(
    original: &ImageTensor,
    source_id: &str,
    quality: u8,
) -> Result<PairedSample, DatasetError> {
    let bitstream = codec::compress(original, quality)?;
    let compressed = codec::decompress(&bitstream)?;
    Ok(PairedSample {
        png_bytes: png_encoded_size(original)?,
        jpeg_bytes: bitstream.encoded_size(),
        original: original.clone(),
        compressed,
        source_id: source_id.to_string(),
    })
}

/// Scans `png_dir` for 128×128 PNGs and builds one pair per image.
/// Files with other dimensions are skipped with a warning; unreadable
/// files are an error. Pairs are ordered by file name for determinism.
pub fn build_pairs(png_dir: &Path, quality: u8) -> Result<BuildOutcome, DatasetError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(png_dir)
        .map_err(|source| DatasetError::Read { path: png_dir.into(), source })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .map(|e| e.eq_ignore_ascii_case("png"))
                .unwrap_or(false)
        })
        .collect();
    entries.sort();
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for path in entries {
        let img = load_png(&path)?;
        let (h, w, _) = img.data.dim();
        if h != SAMPLE_SIZE || w != SAMPLE_SIZE {
            log::warn!("skipping {}: {h}x{w}, expected {SAMPLE_SIZE}x{SAMPLE_SIZE}", path.display());
            skipped.push(path);
            continue;
        }
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        pairs.push(make_pair(&img, &id, quality)?);
    }
    if pairs.is_empty() {
        return Err(DatasetError::EmptyCorpus(png_dir.into()));
    }
    Ok(BuildOutcome { pairs, skipped })
}

/// Deterministic shuffled split; `ratio` is the train fraction.
pub fn split(mut pairs: Vec<PairedSample>, ratio: f64, seed: u64) -> DatasetSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs.shuffle(&mut rng);
    let n_train = (pairs.len() as f64 * ratio).round() as usize;
    let test = pairs.split_off(n_train.min(pairs.len()));
    DatasetSplit { train: pairs, test, seed }
}

/// Shuffled index order for one training epoch, deterministic in
/// `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// General bilinear resize, align-corners = false: source coordinate of
/// destination pixel `d` is `(d + 0.5) · src/dst − 0.5`, edge-clamped.
pub fn resize_bilinear(img: &ImageTensor, out_h: usize, out_w: usize) -> ImageTensor {
    let (h, w, ch) = img.data.dim();
    let sy = h as f32 / out_h as f32;
    let sx = w as f32 / out_w as f32;
    let data = Array3::from_shape_fn((out_h, out_w, ch), |(r, c, k)| {
        let fy = ((r as f32 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f32);
        let fx = ((c as f32 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f32);
        let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
        let (dy, dx) = (fy - y0 as f32, fx - x0 as f32);
        img.data[[y0, x0, k]] * (1.0 - dy) * (1.0 - dx)
            + img.data[[y0, x1, k]] * (1.0 - dy) * dx
            + img.data[[y1, x0, k]] * dy * (1.0 - dx)
            + img.data[[y1, x1, k]] * dy * dx
    });
    ImageTensor::new(data, img.range, img.colorspace)
}

/// 128×128 → 512×512 bilinear upsampling.
pub fn upsample_bilinear(img: &ImageTensor) -> ImageTensor {
    resize_bilinear(img, MODEL_SIZE, MODEL_SIZE)
}

/// 512×512 → 128×128 bilinear reduction.
pub fn downsample_to_original(img: &ImageTensor) -> ImageTensor {
    resize_bilinear(img, SAMPLE_SIZE, SAMPLE_SIZE)
}

/// Affine map `[0,255] → [-1,1]`: `v / 127.5 − 1`.
pub fn to_model_range(img: &ImageTensor) -> ImageTensor {
    ImageTensor::new(
        img.data.mapv(|v| v / 127.5 - 1.0),
        PixelRange::Signed,
        img.colorspace,
    )
}

/// Inverse of [`to_model_range`], rounded and clamped to `[0,255]`.
pub fn from_model_range(img: &ImageTensor) -> ImageTensor {
    ImageTensor::new(
        img.data.mapv(|v| ((v + 1.0) * 127.5).round().clamp(0.0, 255.0)),
        PixelRange::Byte,
        img.colorspace,
    )
}

/// Materializes pairs to `out_dir`: `orig/<id>.png`, `comp/<id>.png`, and
/// a `manifest.jsonl` with one record per pair (sorted by source id so the
/// manifest bytes are deterministic).
pub fn materialize(
    pairs: &[PairedSample],
    quality: u8,
    out_dir: &Path,
) -> Result<PathBuf, DatasetError> {
    let orig_dir = out_dir.join("orig");
    let comp_dir = out_dir.join("comp");
    for d in [&orig_dir, &comp_dir] {
        std::fs::create_dir_all(d)
            .map_err(|source| DatasetError::Write { path: d.clone(), source })?;
    }
    let mut records: Vec<ManifestRecord> = Vec::with_capacity(pairs.len());
    for p in pairs {
        let o = orig_dir.join(format!("{}.png", p.source_id));
        let c = comp_dir.join(format!("{}.png", p.source_id));
        save_png(&p.original, &o)?;
        save_png(&p.compressed, &c)?;
        records.push(ManifestRecord {
            source_id: p.source_id.clone(),
            original_path: format!("orig/{}.png", p.source_id),
            compressed_path: format!("comp/{}.png", p.source_id),
            png_bytes: p.png_bytes,
            jpeg_bytes: p.jpeg_bytes,
            quality,
        });
    }
    records.sort_by(|a, b| a.source_id.cmp(&b.source_id));
    let mut manifest = String::new();
    for r in &records {
        manifest.push_str(&serde_json::to_string(r)?);
        manifest.push('\n');
    }
    let manifest_path = out_dir.join("manifest.jsonl");
    std::fs::write(&manifest_path, manifest)
        .map_err(|source| DatasetError::Write { path: manifest_path.clone(), source })?;
    Ok(manifest_path)
}

/// Loads a materialized dataset back into memory from its manifest.
pub fn load_materialized(out_dir: &Path) -> Result<Vec<PairedSample>, DatasetError> {
    let manifest_path = out_dir.join("manifest.jsonl");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|source| DatasetError::Read { path: manifest_path, source })?;
    let mut pairs = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let r: ManifestRecord = serde_json::from_str(line)?;
        pairs.push(PairedSample {
            original: load_png(&out_dir.join(&r.original_path))?,
            compressed: load_png(&out_dir.join(&r.compressed_path))?,
            source_id: r.source_id,
            png_bytes: r.png_bytes,
            jpeg_bytes: r.jpeg_bytes,
        });
    }
    Ok(pairs)
}
