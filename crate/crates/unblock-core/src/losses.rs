//! Adversarial, low-frequency (L1), high-frequency (perceptual feature)
//! and total losses.
//!
//! The adversarial losses default to the *logless* form: the discriminator
//! patch map is reduced by its arithmetic mean and used directly —
//! `adv_d = mean(D_fake) − mean(D_real)`, `adv_g = mean(1 − D_fake)` —
//! which keeps every loss finite for all valid inputs (no log
//! singularities). The conventional log form is available behind
//! [`AdvVariant::Log`] for comparison runs.
//!
//! The HF loss compares post-ReLU features from a frozen convolutional
//! extractor (VGG-16 up to and including conv4_1 at full scale; a tiny
//! random stand-in is provided for offline tests). Extractor weights enter
//! the graph as constants, so no gradient ever reaches them.

use crate::autograd::{Graph, NodeId};
use ndarray::ArrayD;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("failed to load feature extractor from {path}: {reason}")]
    ExtractorLoad { path: String, reason: String },
    #[error("failed to save feature extractor to {path}: {source}")]
    ExtractorSave { path: String, source: std::io::Error },
}

/// Which adversarial formulation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AdvVariant {
    /// Mean-score difference without logs (primary form).
    #[default]
    Logless,
    /// Conventional `-E[log D(real)] - E[log(1-D(fake))]` form.
    Log,
}

/// Weights of the total generator objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_adv: f32,
    pub lambda_lf: f32,
    pub lambda_hf: f32,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_adv: 1.0, lambda_lf: 20.0, lambda_hf: 0.1 }
    }
}

/// Discriminator objective. Logless: `mean(d_fake) − mean(d_real)`,
/// bounded in (−1, 1); minimized when real scores → 1 and fake → 0.
pub fn adv_loss_d(
    g: &mut Graph,
    d_real: NodeId,
    d_fake: NodeId,
    variant: AdvVariant,
) -> NodeId {
    match variant {
        AdvVariant::Logless => {
            let mf = g.mean(d_fake);
            let mr = g.mean(d_real);
            g.weighted_sum(&[(mf, 1.0), (mr, -1.0)])
        }
        AdvVariant::Log => {
            let lr = g.ln(d_real);
            let mlr = g.mean(lr);
            let one_minus_fake = g.affine(d_fake, -1.0, 1.0);
            let lf = g.ln(one_minus_fake);
            let mlf = g.mean(lf);
            g.weighted_sum(&[(mlr, -1.0), (mlf, -1.0)])
        }
    }
}

/// Generator adversarial objective. Logless: `mean(1 − d_fake)`.
pub fn adv_loss_g(g: &mut Graph, d_fake: NodeId, variant: AdvVariant) -> NodeId {
    match variant {
        AdvVariant::Logless => {
            let one_minus = g.affine(d_fake, -1.0, 1.0);
            g.mean(one_minus)
        }
        AdvVariant::Log => {
            let l = g.ln(d_fake);
            let m = g.mean(l);
            g.weighted_sum(&[(m, -1.0)])
        }
    }
}

/// Low-frequency loss: mean absolute difference of two model-range images.
pub fn lf_loss(g: &mut Graph, x: NodeId, gen: NodeId) -> NodeId {
    g.l1(x, gen)
}

/// Weighted total: `λ_adv·adv + λ_lf·lf + λ_hf·hf`.
pub fn total_loss(
    g: &mut Graph,
    w: &LossWeights,
    adv_g: NodeId,
    lf: NodeId,
    hf: NodeId,
) -> NodeId {
    g.weighted_sum(&[(adv_g, w.lambda_adv), (lf, w.lambda_lf), (hf, w.lambda_hf)])
}

/// One extractor layer.
#[derive(Debug, Clone)]
enum FeLayer {
    /// 3×3 stride-1 pad-1 convolution followed by ReLU.
    ConvRelu { w: ArrayD<f32>, b: Vec<f32> },
    /// 2×2 stride-2 max pool.
    Pool,
}

/// Frozen convolutional feature extractor for the HF loss.
///
/// Preprocessing: model-range input `v ∈ [-1,1]` maps per channel to
/// `((v+1)/2 − mean_c) / std_c` (the ImageNet normalization convention of
/// the exported weights).
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    layers: Vec<FeLayer>,
    mean: [f32; 3],
    std: [f32; 3],
}

const FEX_MAGIC: &[u8; 4] = b"FEX1";

impl FeatureExtractor {
    /// Loads weights from the custom binary format written by
    /// [`FeatureExtractor::save`] (and the weight-export script).
    pub fn load(path: &Path) -> Result<Self, LossError> {
        let err = |reason: String| LossError::ExtractorLoad {
            path: path.display().to_string(),
            reason,
        };
        let mut f = std::fs::File::open(path).map_err(|e| err(e.to_string()))?;
        let mut buf = Vec::new();
        f.read_to_end(&mut buf).map_err(|e| err(e.to_string()))?;
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8], LossError> {
            if *pos + n > buf.len() {
                return Err(err("unexpected end of file".into()));
            }
            let s = &buf[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        if take(&mut pos, 4)? != FEX_MAGIC {
            return Err(err("bad magic, not a feature-extractor file".into()));
        }
        let f32_at = |pos: &mut usize| -> Result<f32, LossError> {
            Ok(f32::from_le_bytes(take(pos, 4)?.try_into().unwrap()))
        };
        let mut mean = [0.0f32; 3];
        let mut std = [0.0f32; 3];
        for m in &mut mean {
            *m = f32_at(&mut pos)?;
        }
        for s in &mut std {
            *s = f32_at(&mut pos)?;
        }
        let n_layers =
            u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let tag = take(&mut pos, 1)?[0];
            match tag {
                0 => {
                    let mut dim = [0usize; 4];
                    for d in &mut dim {
                        *d = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap())
                            as usize;
                    }
                    let n = dim.iter().product::<usize>();
                    let wbytes = take(&mut pos, n * 4)?;
                    let w: Vec<f32> = wbytes
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    let bbytes = take(&mut pos, dim[0] * 4)?;
                    let b: Vec<f32> = bbytes
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    let w = ArrayD::from_shape_vec(ndarray::IxDyn(&dim), w)
                        .map_err(|e| err(e.to_string()))?;
                    layers.push(FeLayer::ConvRelu { w, b });
                }
                1 => layers.push(FeLayer::Pool),
                t => return Err(err(format!("unknown layer tag {t}"))),
            }
        }
        if layers.is_empty() {
            return Err(err("no layers".into()));
        }
        Ok(Self { layers, mean, std })
    }

    /// Writes the binary format read by [`FeatureExtractor::load`].
    pub fn save(&self, path: &Path) -> Result<(), LossError> {
        let mut out: Vec<u8> = Vec::new();
        out.extend_from_slice(FEX_MAGIC);
        for v in self.mean.iter().chain(self.std.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            match l {
                FeLayer::ConvRelu { w, b } => {
                    out.push(0);
                    for &d in w.shape() {
                        out.extend_from_slice(&(d as u32).to_le_bytes());
                    }
                    for &v in w.iter() {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                    for &v in b {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
                FeLayer::Pool => out.push(1),
            }
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&out))
            .map_err(|source| LossError::ExtractorSave {
                path: path.display().to_string(),
                source,
            })
    }

    /// Tiny random stand-in with the same spatial contract as the VGG
    /// extractor (three pool stages: 512 input → 64×64 features) for
    /// offline tests; deterministic under `seed`.
    pub fn tiny_random(seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let conv = |rng: &mut rand_chacha::ChaCha8Rng, oc: usize, ic: usize| {
            FeLayer::ConvRelu {
                w: crate::autograd::normal_init(rng, &[oc, ic, 3, 3], 0.2),
                b: vec![0.0; oc],
            }
        };
        let layers = vec![
            conv(&mut rng, 4, 3),
            FeLayer::Pool,
            conv(&mut rng, 4, 4),
            FeLayer::Pool,
            conv(&mut rng, 8, 4),
            FeLayer::Pool,
            conv(&mut rng, 8, 8),
        ];
        Self { layers, mean: [0.485, 0.456, 0.406], std: [0.229, 0.224, 0.225] }
    }

    /// Builds a VGG-16-through-conv4_1 extractor from the 8 conv layers'
    /// tensors in order (conv1_1 … conv4_1), each `(OC, IC, 3, 3)` plus
    /// bias. Used by the weight-export path.
    pub fn vgg16_conv4_1(convs: Vec<(ArrayD<f32>, Vec<f32>)>) -> Self {
        assert_eq!(convs.len(), 8, "expected 8 conv layers up to conv4_1");
        let mut it = convs.into_iter();
        let mut layers = Vec::new();
        let mut next = |layers: &mut Vec<FeLayer>| {
            let (w, b) = it.next().unwrap();
            layers.push(FeLayer::ConvRelu { w, b });
        };
        next(&mut layers); // conv1_1
        next(&mut layers); // conv1_2
        layers.push(FeLayer::Pool);
        next(&mut layers); // conv2_1
        next(&mut layers); // conv2_2
        layers.push(FeLayer::Pool);
        next(&mut layers); // conv3_1
        next(&mut layers); // conv3_2
        next(&mut layers); // conv3_3
        layers.push(FeLayer::Pool);
        next(&mut layers); // conv4_1
        Self { layers, mean: [0.485, 0.456, 0.406], std: [0.229, 0.224, 0.225] }
    }

    /// Forward pass; returns the post-ReLU conv4_1 (or stand-in) feature
    /// node. Weights enter as graph constants so they receive no
    /// gradients.
    pub fn forward(&self, g: &mut Graph, x: NodeId) -> NodeId {
        let k: Vec<f32> = self.std.iter().map(|s| 0.5 / s).collect();
        let c: Vec<f32> = self
            .mean
            .iter()
            .zip(self.std.iter())
            .map(|(m, s)| (0.5 - m) / s)
            .collect();
        let mut cur = g.channel_affine(x, &k, &c);
        for l in &self.layers {
            cur = match l {
                FeLayer::ConvRelu { w, b } => {
                    let wn = g.input(w.clone());
                    let bn = g.input(ArrayD::from_shape_vec(
                        ndarray::IxDyn(&[b.len()]),
                        b.clone(),
                    )
                    .unwrap());
                    let conv = g.conv2d(cur, wn, Some(bn), 1, 1);
                    g.leaky_relu(conv, 0.0) // plain ReLU
                }
                FeLayer::Pool => g.max_pool2(cur),
            };
        }
        cur
    }
}

/// High-frequency loss: mean squared difference of frozen extractor
/// features of the two images.
pub fn hf_loss(fe: &FeatureExtractor, g: &mut Graph, x: NodeId, gen: NodeId) -> NodeId {
    let fx = fe.forward(g, x);
    let fg = fe.forward(g, gen);
    g.mse(fx, fg)
}
