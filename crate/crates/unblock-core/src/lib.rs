//! Restoration of maximally lossy-compressed JPEG images.
//!
//! The crate is organized around the processing pipeline:
//!
//! * [`codec`] — a from-scratch baseline JPEG (JFIF) encoder/decoder used to
//!   produce heavily compressed training inputs and to measure compression ratio.
//! * [`dataset`] — builds and serves the paired corpus of originals and their
//!   compress-then-decompress counterparts.
//! * [`autograd`] + [`nn`] — a small reverse-mode tape and the generator
//!   (U-Net with hourglass bottleneck blocks) and PatchGAN discriminator.
//! * [`losses`] — logless adversarial loss plus the LF (pixel L1) and
//!   HF (feature L2) terms.
//! * [`trainer`] — the adversarial training loop with the discriminator
//!   early-stop schedule, Adam, and checkpointing.
//! * [`metrics`] — PSNR / SSIM / VIF and evaluation reports.
//! * [`ablate`] — the ablation harness over loss weights, discriminator
//!   schedule, hourglass blocks and the feature loss.

pub mod ablate;
pub mod autograd;
pub mod codec;
pub mod dataset;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod synth;
pub mod trainer;

pub use crate::image::{ColorSpace, ImageTensor, PixelRange};
pub use codec::{compress, decompress, JpegBitstream, QuantTableSet};
pub use metrics::EvalReport;
