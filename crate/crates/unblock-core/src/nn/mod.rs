//! Generator (U-Net with hourglass bottleneck blocks) and PatchGAN
//! discriminator.
//!
//! The generator is a depth-6 encoder (4×4 convs, stride 2, channel plan
//! `[w, 2w, 4w, 8w, 16w, 16w]`, `w = 64` at full scale), four hourglass
//! blocks operating on the bottleneck map (each dips one stride-2 level
//! down and back up with an additive residual), and a mirrored
//! transposed-conv decoder with U-Net skip concatenations. Hidden
//! activations are LeakyReLU(0.2); the output is tanh. Dropout (rate 0.7)
//! applies inside the hourglass blocks only.
//!
//! The discriminator consumes the channel concatenation of two
//! 512×512×3 images (6 input channels) through five 4×4 conv stages with
//! strides 2,2,2,1,1 and padding 1, giving spatial sizes
//! 256→128→64→63→62 and a sigmoid patch map of (62, 62, 1) at full scale.
//!
//! `width` and `input_size` are configurable so tests can run reduced
//! copies of the same topology.

use crate::autograd::{normal_init, Graph, NodeId, ParamId, Params};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// LeakyReLU negative slope used throughout.
pub const LEAKY_SLOPE: f32 = 0.2;
/// Initialization standard deviation.
pub const INIT_STD: f32 = 0.02;
/// Number of chained hourglass blocks.
pub const HOURGLASS_BLOCKS: usize = 4;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("expected input of shape (N, {expect_c}, {expect_s}, {expect_s}), got {got:?}")]
    BadShape { expect_c: usize, expect_s: usize, got: Vec<usize> },
    #[error("discriminator inputs differ in shape: {0:?} vs {1:?}")]
    InputMismatch(Vec<usize>, Vec<usize>),
}

/// Architecture knobs shared by generator and discriminator.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct NetConfig {
    /// Channel width of the first encoder stage (64 at paper scale).
    pub width: usize,
    /// Square input side (512 at paper scale; must be divisible by 64).
    pub input_size: usize,
    /// Whether the hourglass bottleneck blocks are present (ablation).
    pub hourglass: bool,
    /// Dropout rate inside hourglass blocks.
    pub dropout_rate: f32,
}

impl NetConfig {
    pub fn paper_scale() -> Self {
        Self { width: 64, input_size: 512, hourglass: true, dropout_rate: 0.7 }
    }

    /// Reduced copy for tests: same topology, tiny widths.
    pub fn test_scale() -> Self {
        Self { width: 2, input_size: 128, hourglass: true, dropout_rate: 0.7 }
    }

    /// Encoder channel plan `[w, 2w, 4w, 8w, 16w, 16w]`.
    pub fn encoder_channels(&self) -> [usize; 6] {
        let w = self.width;
        [w, 2 * w, 4 * w, 8 * w, 16 * w, 16 * w]
    }
}

struct ConvIds {
    w: ParamId,
    b: ParamId,
}

fn add_conv(
    params: &mut Params,
    rng: &mut ChaCha8Rng,
    name: &str,
    shape: [usize; 4],
) -> ConvIds {
    let w = params.add(format!("{name}.w"), normal_init(rng, &shape, INIT_STD));
    let b = params.add(
        format!("{name}.b"),
        ndarray::ArrayD::zeros(ndarray::IxDyn(&[shape_bias(&shape, name)])),
    );
    ConvIds { w, b }
}

/// Bias length: output channels — axis 0 for conv `(OC, IC, K, K)`,
/// axis 1 for transposed conv `(IC, OC, K, K)`.
fn shape_bias(shape: &[usize; 4], name: &str) -> usize {
    if name.contains(".up") || name.contains("dec") {
        shape[1]
    } else {
        shape[0]
    }
}

struct HourglassIds {
    down: ConvIds,
    up: ConvIds,
}

/// Generator parameter handles. Owns only indices; tensors live in
/// [`Params`].
pub struct Generator {
    pub cfg: NetConfig,
    enc: Vec<ConvIds>,
    hourglass: Vec<HourglassIds>,
    dec: Vec<ConvIds>,
}

impl Generator {
    /// Registers all generator parameters (weights `N(0, 0.02)`, biases 0).
    pub fn init(cfg: NetConfig, params: &mut Params, rng: &mut ChaCha8Rng) -> Self {
        let ch = cfg.encoder_channels();
        let mut enc = Vec::new();
        let mut in_c = 3;
        for (i, &out_c) in ch.iter().enumerate() {
            enc.push(add_conv(params, rng, &format!("g.enc{}", i + 1), [out_c, in_c, 4, 4]));
            in_c = out_c;
        }
        let bott = ch[5];
        let mut hourglass = Vec::new();
        for i in 0..HOURGLASS_BLOCKS {
            hourglass.push(HourglassIds {
                down: add_conv(params, rng, &format!("g.hg{}.down", i + 1), [bott, bott, 4, 4]),
                up: add_conv(params, rng, &format!("g.hg{}.up", i + 1), [bott, bott, 4, 4]),
            });
        }
        // Decoder inputs: bottleneck, then concat(skip) doubles channels.
        // Output channels mirror the encoder; the last stage emits RGB.
        let dec_in = [ch[5], 2 * ch[4], 2 * ch[3], 2 * ch[2], 2 * ch[1], 2 * ch[0]];
        let dec_out = [ch[4], ch[3], ch[2], ch[1], ch[0], 3];
        let mut dec = Vec::new();
        for i in 0..6 {
            dec.push(add_conv(
                params,
                rng,
                &format!("g.dec{}", i + 1),
                [dec_in[i], dec_out[i], 4, 4], // (IC, OC, K, K) for conv_transpose
            ));
        }
        Self { cfg, enc, hourglass, dec }
    }

    fn check_input(&self, shape: &[usize]) -> Result<(), NetError> {
        let s = self.cfg.input_size;
        if shape.len() != 4 || shape[1] != 3 || shape[2] != s || shape[3] != s {
            return Err(NetError::BadShape { expect_c: 3, expect_s: s, got: shape.to_vec() });
        }
        Ok(())
    }

    /// One hourglass block: stride-2 down conv, stride-2 up transposed
    /// conv (each followed by LeakyReLU and, when enabled, dropout), plus
    /// an additive residual from the block input.
    fn hourglass_block(
        &self,
        g: &mut Graph,
        x: NodeId,
        ids: &HourglassIds,
        dropout_on: bool,
        rng: &mut ChaCha8Rng,
    ) -> NodeId {
        let rate = if dropout_on { self.cfg.dropout_rate } else { 0.0 };
        let wd = g.param(ids.down.w);
        let bd = g.param(ids.down.b);
        let down = g.conv2d(x, wd, Some(bd), 2, 1);
        let down = g.leaky_relu(down, LEAKY_SLOPE);
        let down = g.dropout(down, rate, rng);
        let wu = g.param(ids.up.w);
        let bu = g.param(ids.up.b);
        let up = g.conv_transpose2d(down, wu, Some(bu), 2, 1);
        let up = g.leaky_relu(up, LEAKY_SLOPE);
        let up = g.dropout(up, rate, rng);
        g.add(up, x)
    }

    /// Full forward pass; returns the tanh output node. `rng` drives the
    /// dropout masks and is only consulted when `dropout_on`.
    pub fn forward(
        &self,
        g: &mut Graph,
        x: NodeId,
        dropout_on: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<NodeId, NetError> {
        let skips = self.encoder_features(g, x)?;
        let mut cur = *skips.last().unwrap();
        if self.cfg.hourglass {
            for ids in &self.hourglass {
                cur = self.hourglass_block(g, cur, ids, dropout_on, rng);
            }
        }
        for (i, ids) in self.dec.iter().enumerate() {
            let w = g.param(ids.w);
            let b = g.param(ids.b);
            let t = g.conv_transpose2d(cur, w, Some(b), 2, 1);
            if i < 5 {
                let act = g.leaky_relu(t, LEAKY_SLOPE);
                // Skip from the mirrored encoder stage (enc 5−i).
                cur = g.concat_channels(act, skips[4 - i]);
            } else {
                cur = g.tanh(t);
            }
        }
        Ok(cur)
    }

    /// Runs only the encoder, returning the six post-activation stage
    /// feature nodes (the skip connections; the last is the bottleneck).
    pub fn encoder_features(
        &self,
        g: &mut Graph,
        x: NodeId,
    ) -> Result<Vec<NodeId>, NetError> {
        self.check_input(g.value(x).shape())?;
        let mut skips = Vec::new();
        let mut cur = x;
        for ids in &self.enc {
            let w = g.param(ids.w);
            let b = g.param(ids.b);
            let c = g.conv2d(cur, w, Some(b), 2, 1);
            cur = g.leaky_relu(c, LEAKY_SLOPE);
            skips.push(cur);
        }
        Ok(skips)
    }

    /// Per-stage parameter ids, used by the gradient-flow check.
    pub fn stage_param_ids(&self) -> Vec<(String, Vec<ParamId>)> {
        let mut out = Vec::new();
        for (i, c) in self.enc.iter().enumerate() {
            out.push((format!("enc{}", i + 1), vec![c.w, c.b]));
        }
        for (i, h) in self.hourglass.iter().enumerate() {
            out.push((format!("hg{}", i + 1), vec![h.down.w, h.down.b, h.up.w, h.up.b]));
        }
        for (i, c) in self.dec.iter().enumerate() {
            out.push((format!("dec{}", i + 1), vec![c.w, c.b]));
        }
        out
    }
}

/// PatchGAN discriminator parameter handles.
pub struct Discriminator {
    pub cfg: NetConfig,
    stages: Vec<ConvIds>,
}

impl Discriminator {
    pub fn init(cfg: NetConfig, params: &mut Params, rng: &mut ChaCha8Rng) -> Self {
        let w = cfg.width;
        let plan = [w, 2 * w, 4 * w, 8 * w, 1];
        let mut stages = Vec::new();
        let mut in_c = 6;
        for (i, &out_c) in plan.iter().enumerate() {
            stages.push(add_conv(params, rng, &format!("d.s{}", i + 1), [out_c, in_c, 4, 4]));
            in_c = out_c;
        }
        Self { cfg, stages }
    }

    /// Forward on the concatenation of two 3-channel images; produces the
    /// sigmoid patch map node.
    pub fn forward(
        &self,
        g: &mut Graph,
        x: NodeId,
        y: NodeId,
    ) -> Result<NodeId, NetError> {
        let (sx, sy) = (g.value(x).shape().to_vec(), g.value(y).shape().to_vec());
        if sx != sy {
            return Err(NetError::InputMismatch(sx, sy));
        }
        let cat = g.concat_channels(x, y);
        let mut cur = cat;
        for (i, ids) in self.stages.iter().enumerate() {
            let stride = if i < 3 { 2 } else { 1 };
            let w = g.param(ids.w);
            let b = g.param(ids.b);
            let c = g.conv2d(cur, w, Some(b), stride, 1);
            cur = if i < 4 { g.leaky_relu(c, LEAKY_SLOPE) } else { g.sigmoid(c) };
        }
        Ok(cur)
    }
}

/// Builds generator and discriminator with a shared seeded RNG; returns
/// the parameter stores separately so the optimizers stay independent.
pub fn init_params(
    cfg: NetConfig,
    seed: u64,
) -> (Params, Generator, Params, Discriminator) {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gp = Params::default();
    let gen = Generator::init(cfg, &mut gp, &mut rng);
    let mut dp = Params::default();
    let disc = Discriminator::init(cfg, &mut dp, &mut rng);
    (gp, gen, dp, disc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Graph;
    use ndarray::ArrayD;
    use rand::{Rng, SeedableRng};

    fn randn(seed: u64, shape: &[usize]) -> ArrayD<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ArrayD::from_shape_fn(ndarray::IxDyn(shape), |_| rng.gen_range(-1.0f32..1.0))
    }

    #[test]
    fn generator_shape_and_range() {
        let cfg = NetConfig::test_scale();
        let (gp, gen, _, _) = init_params(cfg, 1);
        let mut g = Graph::new(&gp);
        let x = g.input(randn(2, &[1, 3, 128, 128]));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = gen.forward(&mut g, x, false, &mut rng).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 3, 128, 128]);
        assert!(g.value(y).iter().all(|&v| v > -1.0 && v < 1.0));
    }

    #[test]
    fn generator_deterministic_without_dropout() {
        let cfg = NetConfig::test_scale();
        let (gp, gen, _, _) = init_params(cfg, 1);
        let input = randn(2, &[1, 3, 128, 128]);
        let run = || {
            let mut g = Graph::new(&gp);
            let x = g.input(input.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let y = gen.forward(&mut g, x, false, &mut rng).unwrap();
            g.value(y).clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn generator_rejects_wrong_shape() {
        let cfg = NetConfig::test_scale();
        let (gp, gen, _, _) = init_params(cfg, 1);
        let mut g = Graph::new(&gp);
        let x = g.input(randn(2, &[1, 3, 64, 64]));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            gen.forward(&mut g, x, false, &mut rng),
            Err(NetError::BadShape { .. })
        ));
    }

    #[test]
    fn encoder_bottleneck_shape_is_size_over_64_at_16w() {
        // At input 128, six halvings give 2×2; channels 16w.
        let cfg = NetConfig::test_scale();
        let (gp, gen, _, _) = init_params(cfg, 1);
        let mut g = Graph::new(&gp);
        let x = g.input(randn(2, &[1, 3, 128, 128]));
        // replicate encoder only
        let mut cur = x;
        for ids in &gen.enc {
            let w = g.param(ids.w);
            let b = g.param(ids.b);
            let c = g.conv2d(cur, w, Some(b), 2, 1);
            cur = g.leaky_relu(c, LEAKY_SLOPE);
        }
        assert_eq!(g.value(cur).shape(), &[1, 16 * cfg.width, 2, 2]);
    }

    #[test]
    fn hourglass_preserves_shape_and_zero_weights_pass_residual() {
        let cfg = NetConfig::test_scale();
        let (mut gp, gen, _, _) = init_params(cfg, 1);
        let bott = 16 * cfg.width;
        let input = randn(5, &[1, bott, 2, 2]);
        // zero all hourglass params: block output == activation-path 0 + x
        for (name, t) in gp.names.clone().iter().zip(gp.tensors.iter_mut()) {
            if name.starts_with("g.hg") {
                t.fill(0.0);
            }
        }
        let mut g = Graph::new(&gp);
        let x = g.input(input.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut cur = x;
        for ids in &gen.hourglass {
            cur = gen.hourglass_block(&mut g, cur, ids, false, &mut rng);
        }
        assert_eq!(g.value(cur).shape(), input.shape());
        for (a, b) in g.value(cur).iter().zip(input.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn discriminator_shape_range_and_sensitivity() {
        let cfg = NetConfig { width: 4, input_size: 512, hourglass: true, dropout_rate: 0.0 };
        let (_, _, dp, disc) = init_params(cfg, 2);
        let mut g = Graph::new(&dp);
        let x = g.input(randn(1, &[1, 3, 512, 512]));
        let y = g.input(randn(2, &[1, 3, 512, 512]));
        let m = disc.forward(&mut g, x, y).unwrap();
        assert_eq!(g.value(m).shape(), &[1, 1, 62, 62]);
        assert!(g.value(m).iter().all(|&v| v > 0.0 && v < 1.0));
        // swapping the pair changes the map
        let m2 = disc.forward(&mut g, y, x).unwrap();
        let diff: f32 = g
            .value(m)
            .iter()
            .zip(g.value(m2).iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max);
        assert!(diff > 0.0);
    }

    #[test]
    fn discriminator_stage_sizes() {
        // 512 → 256 → 128 → 64 → 63 → 62 under strides 2,2,2,1,1 pad 1.
        let cfg = NetConfig { width: 2, input_size: 512, hourglass: true, dropout_rate: 0.0 };
        let (_, _, dp, disc) = init_params(cfg, 3);
        let mut g = Graph::new(&dp);
        let x = g.input(randn(1, &[1, 3, 512, 512]));
        let y = g.input(randn(2, &[1, 3, 512, 512]));
        let cat = g.concat_channels(x, y);
        let mut cur = cat;
        let mut sizes = Vec::new();
        for (i, ids) in disc.stages.iter().enumerate() {
            let stride = if i < 3 { 2 } else { 1 };
            let w = g.param(ids.w);
            let b = g.param(ids.b);
            let c = g.conv2d(cur, w, Some(b), stride, 1);
            cur = if i < 4 { g.leaky_relu(c, LEAKY_SLOPE) } else { g.sigmoid(c) };
            sizes.push(g.value(cur).shape()[2]);
        }
        assert_eq!(sizes, vec![256, 128, 64, 63, 62]);
    }

    #[test]
    fn discriminator_rejects_mismatched_inputs() {
        let cfg = NetConfig::test_scale();
        let (_, _, dp, disc) = init_params(cfg, 2);
        let mut g = Graph::new(&dp);
        let x = g.input(randn(1, &[1, 3, 128, 128]));
        let y = g.input(randn(2, &[1, 3, 64, 64]));
        assert!(matches!(disc.forward(&mut g, x, y), Err(NetError::InputMismatch(_, _))));
    }

    #[test]
    fn init_is_deterministic_with_correct_statistics() {
        let cfg = NetConfig { width: 16, input_size: 128, hourglass: true, dropout_rate: 0.7 };
        let (gp1, _, dp1, _) = init_params(cfg, 42);
        let (gp2, _, dp2, _) = init_params(cfg, 42);
        for (a, b) in gp1.tensors.iter().zip(gp2.tensors.iter()) {
            assert_eq!(a, b);
        }
        for (a, b) in dp1.tensors.iter().zip(dp2.tensors.iter()) {
            assert_eq!(a, b);
        }
        // weight std in [0.018, 0.022] over ≥1e5 samples; biases exactly 0
        let mut weights = Vec::new();
        for (name, t) in gp1.names.iter().zip(gp1.tensors.iter()) {
            if name.ends_with(".w") {
                weights.extend(t.iter().copied());
            } else {
                assert!(t.iter().all(|&v| v == 0.0), "bias {name} nonzero");
            }
        }
        assert!(weights.len() >= 100_000, "only {} weights", weights.len());
        let mean: f32 = weights.iter().sum::<f32>() / weights.len() as f32;
        let std: f32 = (weights.iter().map(|v| (v - mean).powi(2)).sum::<f32>()
            / weights.len() as f32)
            .sqrt();
        assert!((0.018..=0.022).contains(&std), "std {std}");
    }

    #[test]
    fn generator_gradients_match_finite_difference() {
        let cfg = NetConfig { width: 2, input_size: 128, hourglass: true, dropout_rate: 0.0 };
        let (mut gp, gen, _, _) = init_params(cfg, 11);
        let input = randn(12, &[1, 3, 128, 128]);
        let target = randn(13, &[1, 3, 128, 128]);
        let run = |ps: &Params| -> (f32, crate::autograd::Gradients) {
            let mut g = Graph::new(ps);
            let x = g.input(input.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(14);
            let y = gen.forward(&mut g, x, false, &mut rng).unwrap();
            let t = g.input(target.clone());
            let loss = g.mse(y, t);
            let grads = g.backward(loss);
            (g.scalar(loss), grads)
        };
        let (_, grads) = run(&gp);
        // 10 weights spread across stages
        let mut checked = 0;
        let mut pick = ChaCha8Rng::seed_from_u64(15);
        'outer: for (pid, grad) in grads.iter().enumerate() {
            let Some(grad) = grad else { continue };
            if !gp.names[pid].ends_with(".w") {
                continue;
            }
            let flat: Vec<_> = grad.indexed_iter().map(|(i, _)| i).collect();
            let idx = flat[pick.gen_range(0..flat.len())].clone();
            let eps = 1e-2;
            let orig = gp.tensors[pid][&idx];
            gp.tensors[pid][&idx] = orig + eps;
            let lp = run(&gp).0;
            gp.tensors[pid][&idx] = orig - eps;
            let lm = run(&gp).0;
            gp.tensors[pid][&idx] = orig;
            let fd = (lp - lm) / (2.0 * eps) as f32;
            let an = grad[&idx];
            let denom = an.abs().max(fd.abs()).max(1e-4);
            assert!(
                ((fd - an).abs() / denom) < 1e-1 || (fd - an).abs() < 1e-5,
                "{}: fd {fd} vs analytic {an}",
                gp.names[pid]
            );
            checked += 1;
            if checked >= 10 {
                break 'outer;
            }
        }
        assert!(checked >= 10);
    }

    #[test]
    fn discriminator_patch_locality() {
        // Perturbing one input pixel changes only a bounded region of the map.
        let cfg = NetConfig { width: 2, input_size: 256, hourglass: true, dropout_rate: 0.0 };
        let (_, _, mut dp, disc) = init_params(cfg, 9);
        // Init-scale weights attenuate a single-pixel perturbation below
        // f32 resolution after five layers; boost them so the signal is
        // representable while the receptive-field geometry is unchanged.
        for (name, t) in dp.names.clone().iter().zip(dp.tensors.iter_mut()) {
            if name.ends_with(".w") {
                t.mapv_inplace(|v| v * 20.0);
            }
        }
        let base = randn(1, &[1, 3, 256, 256]);
        let other = randn(2, &[1, 3, 256, 256]);
        let run = |img: &ArrayD<f32>| {
            let mut g = Graph::new(&dp);
            let x = g.input(img.clone());
            let y = g.input(other.clone());
            let m = disc.forward(&mut g, x, y).unwrap();
            g.value(m).clone()
        };
        let m0 = run(&base);
        let mut pert = base.clone();
        pert[ndarray::IxDyn(&[0, 0, 0, 0])] += 1.0; // corner pixel
        let m1 = run(&pert);
        let changed: Vec<_> = m0
            .iter()
            .zip(m1.iter())
            .enumerate()
            .filter(|(_, (a, b))| *a != *b)
            .map(|(i, _)| i)
            .collect();
        assert!(!changed.is_empty());
        // receptive field of the corner pixel covers only low-index patches
        let side = m0.shape()[3];
        let max_rc = changed
            .iter()
            .map(|&i| (i / side).max(i % side))
            .max()
            .unwrap();
        assert!(max_rc < side / 2, "corner perturbation reached patch {max_rc} of {side}");
    }
}
