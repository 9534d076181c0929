//! Adversarial training loop with the discriminator-early-stop schedule,
//! checkpointing, and inference (restoration).
//!
//! Each step updates the discriminator first (only through
//! `d_stop_epoch`), then the generator on the weighted total loss. The
//! discriminator keeps producing forward scores for the generator's
//! adversarial term after the freeze; it just receives no updates.
//! Checkpoints are written atomically (temp file + rename) under
//! `ckpt/epoch_NNN.ckpt`, with the best-test-PSNR state mirrored to
//! `ckpt/best.ckpt`.

use crate::autograd::{Gradients, Params};
use crate::dataset::{
    epoch_order, resize_bilinear, to_model_range, DatasetSplit, PairedSample,
};
use crate::losses::{
    adv_loss_d, adv_loss_g, hf_loss, lf_loss, total_loss, AdvVariant, FeatureExtractor,
    LossWeights,
};
use crate::nn::{Discriminator, Generator, NetConfig, NetError};
use crate::{ColorSpace, ImageTensor, PixelRange};
use ndarray::{Array4, ArrayD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Checkpoint format version; bumped on any layout change.
pub const CKPT_VERSION: u32 = 1;
const CKPT_MAGIC: &[u8; 4] = b"UBCK";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("network error: {0}")]
    Net(#[from] NetError),
    #[error("non-finite loss at epoch {} iteration {}: adv_d={} adv_g={} lf={} hf={} total={}",
        .metrics.epoch, .metrics.iteration, .metrics.adv_d, .metrics.adv_g,
        .metrics.lf, .metrics.hf, .metrics.total)]
    NonFinite { metrics: StepMetrics },
    #[error("λ_hf > 0 but no feature extractor was provided")]
    MissingExtractor,
    #[error("checkpoint error at {path}: {reason}")]
    Checkpoint { path: String, reason: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("metrics error during eval: {0}")]
    Metrics(#[from] crate::metrics::MetricsError),
}

/// Training hyperparameters. Defaults follow the reference setup: 30
/// epochs, batch 10 (consistent with 3200 train pairs × 30 epochs = 9600
/// iterations), Adam at 1e-5 with betas (0.5, 0.999), discriminator
/// frozen after epoch 10, loss weights (1, 20, 0.1), dropout 0.7.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub adam_betas: (f32, f32),
    /// Last 1-based epoch in which the discriminator is updated.
    pub d_stop_epoch: usize,
    pub weights: LossWeights,
    pub dropout_rate: f32,
    pub seed: u64,
    /// JPEG quality the compressed inputs were produced with (echoed into
    /// reports; the trainer itself consumes prepared pairs).
    pub quality: u8,
    pub adv_loss_variant: AdvVariant,
    /// Keep λ_adv active against the frozen discriminator after
    /// `d_stop_epoch` (default), or zero it from then on.
    pub adv_after_stop: bool,
    pub net: NetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 10,
            lr: 1e-5,
            adam_betas: (0.5, 0.999),
            d_stop_epoch: 10,
            weights: LossWeights::default(),
            dropout_rate: 0.7,
            seed: 0,
            quality: 1,
            adv_loss_variant: AdvVariant::Logless,
            adv_after_stop: true,
            net: NetConfig::paper_scale(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.d_stop_epoch > self.epochs {
            return Err(TrainError::Config(format!(
                "d_stop_epoch {} exceeds epochs {}",
                self.d_stop_epoch, self.epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(TrainError::Config("dropout_rate must be in [0,1)".into()));
        }
        Ok(())
    }

    /// Total iteration count: `epochs × ⌈n_train / batch_size⌉`.
    pub fn expected_iterations(&self, n_train: usize) -> usize {
        self.epochs * n_train.div_ceil(self.batch_size)
    }
}

/// Per-step loss components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub epoch: usize,
    pub iteration: u64,
    pub adv_d: f32,
    pub adv_g: f32,
    pub lf: f32,
    pub hf: f32,
    pub total: f32,
}

/// Adam optimizer over a subset of a parameter store; moments are kept
/// only for the listed ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub t: u64,
    ids: Vec<usize>,
    m: Vec<ArrayD<f32>>,
    v: Vec<ArrayD<f32>>,
}

impl Adam {
    pub fn new(lr: f32, betas: (f32, f32), params: &Params, ids: Vec<usize>) -> Self {
        let zeros: Vec<ArrayD<f32>> = ids
            .iter()
            .map(|&i| ArrayD::zeros(params.tensors[i].raw_dim()))
            .collect();
        Self {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps: 1e-8,
            t: 0,
            ids,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One Adam update with bias correction; parameters without gradients
    /// are left untouched (their moments still decay only on use, per the
    /// standard sparse convention of skipping absent grads).
    pub fn step(&mut self, params: &mut Params, grads: &Gradients) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, &id) in self.ids.iter().enumerate() {
            let Some(grad) = grads.get(id).and_then(|g| g.as_ref()) else {
                continue;
            };
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            let p = &mut params.tensors[id];
            ndarray::Zip::from(p)
                .and(m)
                .and(v)
                .and(grad)
                .for_each(|p, m, v, &g| {
                    *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                    *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
                });
        }
    }
}

/// Everything needed to resume training exactly: parameters, optimizer
/// moments, RNG state, and the loss history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub version: u32,
    pub cfg: TrainConfig,
    /// Combined store: generator parameters first, then discriminator.
    pub params: Params,
    pub gen_param_count: usize,
    pub gen_opt: Adam,
    pub disc_opt: Adam,
    /// Number of fully completed epochs.
    pub epoch: usize,
    pub iteration: u64,
    pub rng: ChaCha8Rng,
    pub loss_history: Vec<StepMetrics>,
    pub best_psnr: f64,
}

/// Runtime handle: the serializable state plus the (cheaply rebuilt)
/// network index structures.
pub struct Trainer {
    pub state: TrainState,
    gen: Generator,
    disc: Discriminator,
}

fn build_nets(cfg: &TrainConfig) -> (Params, Generator, Discriminator, usize) {
    let mut net = cfg.net;
    net.dropout_rate = cfg.dropout_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = Params::default();
    let gen = Generator::init(net, &mut params, &mut rng);
    let gen_count = params.len();
    let disc = Discriminator::init(net, &mut params, &mut rng);
    (params, gen, disc, gen_count)
}

/// NCHW batch of model-range images resized to the network input size.
fn batch_tensor(images: &[&ImageTensor], n: usize) -> ArrayD<f32> {
    let b = images.len();
    let mut out = Array4::<f32>::zeros((b, 3, n, n));
    for (i, img) in images.iter().enumerate() {
        let m = to_model_range(&resize_bilinear(img, n, n));
        for y in 0..n {
            for x in 0..n {
                for c in 0..3 {
                    out[[i, c, y, x]] = m.data[[y, x, c]];
                }
            }
        }
    }
    out.into_dyn()
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        let (params, _, _, gen_count) = build_nets(&cfg);
        let gen_ids: Vec<usize> = (0..gen_count).collect();
        let disc_ids: Vec<usize> = (gen_count..params.len()).collect();
        let gen_opt = Adam::new(cfg.lr, cfg.adam_betas, &params, gen_ids);
        let disc_opt = Adam::new(cfg.lr, cfg.adam_betas, &params, disc_ids);
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x7261_696e));
        let state = TrainState {
            version: CKPT_VERSION,
            cfg,
            params,
            gen_param_count: gen_count,
            gen_opt,
            disc_opt,
            epoch: 0,
            iteration: 0,
            rng,
            loss_history: Vec::new(),
            best_psnr: f64::NEG_INFINITY,
        };
        Ok(Self::from_state(state))
    }

    /// Rebuilds the runtime nets around a restored state.
    pub fn from_state(state: TrainState) -> Self {
        let (_, gen, disc, gen_count) = build_nets(&state.cfg);
        debug_assert_eq!(gen_count, state.gen_param_count);
        Self { state, gen, disc }
    }

    /// Loads the highest-epoch checkpoint under `ckpt_dir` if one exists,
    /// otherwise starts fresh.
    pub fn resume_or_new(cfg: TrainConfig, ckpt_dir: &Path) -> Result<Self, TrainError> {
        if let Some(path) = latest_checkpoint(ckpt_dir)? {
            log::info!("resuming from {}", path.display());
            Ok(Self::from_state(load_checkpoint(&path)?))
        } else {
            Self::new(cfg)
        }
    }

    pub fn generator(&self) -> &Generator {
        &self.gen
    }

    /// One training step on a batch: discriminator update first (only
    /// while `epoch ≤ d_stop_epoch`), then a generator update on the
    /// weighted total loss. `epoch` is 1-based.
    pub fn train_step(
        &mut self,
        batch: &[&PairedSample],
        fe: Option<&FeatureExtractor>,
        epoch: usize,
    ) -> Result<StepMetrics, TrainError> {
        let cfg = self.state.cfg;
        if cfg.weights.lambda_hf != 0.0 && fe.is_none() {
            return Err(TrainError::MissingExtractor);
        }
        let n = cfg.net.input_size;
        let comp_imgs: Vec<&ImageTensor> = batch.iter().map(|p| &p.compressed).collect();
        let orig_imgs: Vec<&ImageTensor> = batch.iter().map(|p| &p.original).collect();
        let comp = batch_tensor(&comp_imgs, n);
        let orig = batch_tensor(&orig_imgs, n);
        let train_d = epoch <= cfg.d_stop_epoch;
        let state = &mut self.state;

        // Discriminator phase: score a detached generator sample.
        let (adv_d_val, d_grads) = {
            let mut g = crate::autograd::Graph::new(&state.params);
            let x_c = g.input(comp.clone());
            let x_o = g.input(orig.clone());
            let gen_out = self.gen.forward(&mut g, x_c, true, &mut state.rng)?;
            let fake = g.input(g.value(gen_out).clone()); // detach
            let d_real = self.disc.forward(&mut g, x_c, x_o)?;
            let d_fake = self.disc.forward(&mut g, x_c, fake)?;
            let loss_d = adv_loss_d(&mut g, d_real, d_fake, cfg.adv_loss_variant);
            let val = g.scalar(loss_d);
            let grads = if train_d { Some(g.backward(loss_d)) } else { None };
            (val, grads)
        };
        if let Some(grads) = d_grads {
            state.disc_opt.step(&mut state.params, &grads);
        }

        // Generator phase against the (possibly just-updated) critic.
        let lambda_adv =
            if train_d || cfg.adv_after_stop { cfg.weights.lambda_adv } else { 0.0 };
        let weights = LossWeights { lambda_adv, ..cfg.weights };
        let (metrics, g_grads) = {
            let mut g = crate::autograd::Graph::new(&state.params);
            let x_c = g.input(comp);
            let x_o = g.input(orig);
            let gen_out = self.gen.forward(&mut g, x_c, true, &mut state.rng)?;
            let d_fake = self.disc.forward(&mut g, x_c, gen_out)?;
            let adv = adv_loss_g(&mut g, d_fake, cfg.adv_loss_variant);
            let lf = lf_loss(&mut g, x_o, gen_out);
            let hf = match fe {
                Some(fe) if cfg.weights.lambda_hf != 0.0 => {
                    hf_loss(fe, &mut g, x_o, gen_out)
                }
                _ => g.input(ndarray::arr0(0.0f32).into_dyn()),
            };
            let total = total_loss(&mut g, &weights, adv, lf, hf);
            let metrics = StepMetrics {
                epoch,
                iteration: state.iteration + 1,
                adv_d: adv_d_val,
                adv_g: g.scalar(adv),
                lf: g.scalar(lf),
                hf: g.scalar(hf),
                total: g.scalar(total),
            };
            (metrics, g.backward(total))
        };
        if !(metrics.adv_d.is_finite()
            && metrics.adv_g.is_finite()
            && metrics.lf.is_finite()
            && metrics.hf.is_finite()
            && metrics.total.is_finite())
        {
            return Err(TrainError::NonFinite { metrics });
        }
        state.gen_opt.step(&mut state.params, &g_grads);
        state.iteration += 1;
        state.loss_history.push(metrics);
        Ok(metrics)
    }

    /// Full loop: shuffled batches per epoch, per-epoch checkpoint and
    /// test-split evaluation; the best-PSNR state is kept as
    /// `ckpt/best.ckpt`. Resumes from `state.epoch`.
    pub fn train(
        &mut self,
        split: &DatasetSplit,
        fe: Option<&FeatureExtractor>,
        out_dir: &Path,
    ) -> Result<(), TrainError> {
        let cfg = self.state.cfg;
        cfg.validate()?;
        let ckpt_dir = out_dir.join("ckpt");
        std::fs::create_dir_all(&ckpt_dir)?;
        let n_train = split.train.len();
        for epoch in (self.state.epoch + 1)..=cfg.epochs {
            let order = epoch_order(n_train, cfg.seed, epoch);
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<&PairedSample> =
                    chunk.iter().map(|&i| &split.train[i]).collect();
                let m = self.train_step(&batch, fe, epoch)?;
                log::info!(
                    "iteration={} epoch={} adv_d={:.6} adv_g={:.6} lf={:.6} hf={:.6} total={:.6}",
                    m.iteration, m.epoch, m.adv_d, m.adv_g, m.lf, m.hf, m.total
                );
            }
            self.state.epoch = epoch;
            if !split.test.is_empty() {
                let (psnr, ssim) = self.eval_on(&split.test)?;
                log::info!("epoch={epoch} test_psnr={psnr:.4} test_ssim={ssim:.6}");
                if psnr > self.state.best_psnr {
                    self.state.best_psnr = psnr;
                    save_checkpoint(&self.state, &ckpt_dir.join("best.ckpt"))?;
                }
            }
            save_checkpoint(&self.state, &ckpt_dir.join(format!("epoch_{epoch:03}.ckpt")))?;
        }
        Ok(())
    }

    /// Mean (PSNR, SSIM) of restored vs original over a pair list.
    pub fn eval_on(&self, pairs: &[PairedSample]) -> Result<(f64, f64), TrainError> {
        let mut psnr_sum = 0.0;
        let mut ssim_sum = 0.0;
        for p in pairs {
            let restored = self.restore(&p.compressed)?;
            psnr_sum += crate::metrics::psnr(&p.original, &restored)?;
            ssim_sum += crate::metrics::ssim(&p.original, &restored)?;
        }
        let n = pairs.len() as f64;
        Ok((psnr_sum / n, ssim_sum / n))
    }

    /// Inference: upsample the 128×128 compressed image to the model
    /// size, run the generator with dropout off, downsample back, and
    /// de-normalize to bytes.
    pub fn restore(&self, compressed: &ImageTensor) -> Result<ImageTensor, TrainError> {
        restore(&self.state.params, &self.gen, compressed)
    }
}

/// Standalone restoration with a given parameter store + generator.
pub fn restore(
    params: &Params,
    gen: &Generator,
    compressed: &ImageTensor,
) -> Result<ImageTensor, TrainError> {
    let n = gen.cfg.input_size;
    let input = batch_tensor(&[compressed], n);
    let mut g = crate::autograd::Graph::new(params);
    let x = g.input(input);
    let mut rng = ChaCha8Rng::seed_from_u64(0); // unused: dropout off
    let out = gen.forward(&mut g, x, false, &mut rng)?;
    let v = g.value(out);
    let mut model = ImageTensor::new(
        ndarray::Array3::from_shape_fn((n, n, 3), |(y, x, c)| v[[0, c, y, x]]),
        PixelRange::Signed,
        ColorSpace::Rgb,
    );
    // Downsample in model range, then quantize to bytes.
    model = resize_bilinear(&model, crate::dataset::SAMPLE_SIZE, crate::dataset::SAMPLE_SIZE);
    Ok(crate::dataset::from_model_range(&model))
}

/// Serializes the full state atomically: write to a temp file in the same
/// directory, then rename over the target.
pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<(), TrainError> {
    let err = |reason: String| TrainError::Checkpoint {
        path: path.display().to_string(),
        reason,
    };
    let body = bincode::serialize(state).map_err(|e| err(e.to_string()))?;
    let mut buf = Vec::with_capacity(body.len() + 8);
    buf.extend_from_slice(CKPT_MAGIC);
    buf.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    buf.extend_from_slice(&body);
    let tmp = path.with_extension("ckpt.tmp");
    std::fs::write(&tmp, &buf).map_err(|e| err(e.to_string()))?;
    std::fs::rename(&tmp, path).map_err(|e| err(e.to_string()))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState, TrainError> {
    let err = |reason: String| TrainError::Checkpoint {
        path: path.display().to_string(),
        reason,
    };
    let buf = std::fs::read(path).map_err(|e| err(e.to_string()))?;
    if buf.len() < 8 || &buf[..4] != CKPT_MAGIC {
        return Err(err("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != CKPT_VERSION {
        return Err(err(format!(
            "unsupported checkpoint version {version} (expected {CKPT_VERSION})"
        )));
    }
    let state: TrainState =
        bincode::deserialize(&buf[8..]).map_err(|e| err(e.to_string()))?;
    if state.version != CKPT_VERSION {
        return Err(err("version tag mismatch inside state".into()));
    }
    Ok(state)
}

/// Highest-numbered `epoch_NNN.ckpt` under `dir`, if any.
pub fn latest_checkpoint(dir: &Path) -> Result<Option<std::path::PathBuf>, TrainError> {
    if !dir.exists() {
        return Ok(None);
    }
    let mut best: Option<(usize, std::path::PathBuf)> = None;
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if let Some(num) = name
            .strip_prefix("epoch_")
            .and_then(|s| s.strip_suffix(".ckpt"))
            .and_then(|s| s.parse::<usize>().ok())
        {
            if best.as_ref().is_none_or(|(b, _)| num > *b) {
                best = Some((num, path));
            }
        }
    }
    Ok(best.map(|(_, p)| p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_pair;

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 2,
            d_stop_epoch: 1,
            weights: LossWeights { lambda_adv: 1.0, lambda_lf: 20.0, lambda_hf: 0.0 },
            seed: 7,
            net: NetConfig::test_scale(),
            ..TrainConfig::default()
        }
    }

    fn tiny_pairs(n: usize, quality: u8) -> Vec<PairedSample> {
        (0..n)
            .map(|i| {
                let img = crate::synth::synth_image(9000 + i as u64, 128, 128);
                make_pair(&img, &format!("t{i:03}"), quality).unwrap()
            })
            .collect()
    }

    #[test]
    fn config_defaults_match_reference_setup() {
        let c = TrainConfig::default();
        assert_eq!(c.epochs, 30);
        assert_eq!(c.batch_size, 10);
        assert_eq!(c.lr, 1e-5);
        assert_eq!(c.adam_betas, (0.5, 0.999));
        assert_eq!(c.d_stop_epoch, 10);
        assert_eq!(
            c.weights,
            LossWeights { lambda_adv: 1.0, lambda_lf: 20.0, lambda_hf: 0.1 }
        );
        assert_eq!(c.dropout_rate, 0.7);
        assert_eq!(c.adv_loss_variant, AdvVariant::Logless);
        // 3200 train pairs × 30 epochs / batch 10 = 9600 iterations
        assert_eq!(c.expected_iterations(3200), 9600);
        // 8 pairs, batch 2, 3 epochs → 12
        let small = TrainConfig { epochs: 3, batch_size: 2, ..c };
        assert_eq!(small.expected_iterations(8), 12);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut c = TrainConfig::default();
        c.d_stop_epoch = 31;
        assert!(matches!(c.validate(), Err(TrainError::Config(_))));
        let mut c = TrainConfig::default();
        c.batch_size = 0;
        assert!(c.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn adam_matches_closed_form_update() {
        // Quadratic objective f(p) = (p - 3)² on a scalar parameter:
        // grad = 2(p - 3). Compare one step against the hand-computed
        // Adam formula.
        let mut params = Params::default();
        let p0 = 1.0f32;
        let id = params.add("p", ndarray::arr0(p0).into_dyn());
        let (lr, betas, eps) = (0.01f32, (0.5f32, 0.999f32), 1e-8f32);
        let mut opt = Adam::new(lr, betas, &params, vec![id.0]);
        let grad = 2.0 * (p0 - 3.0);
        let grads: Gradients = vec![Some(ndarray::arr0(grad).into_dyn())];
        opt.step(&mut params, &grads);
        // closed form at t=1
        let m = (1.0 - betas.0) * grad;
        let v = (1.0 - betas.1) * grad * grad;
        let mhat = m / (1.0 - betas.0);
        let vhat = v / (1.0 - betas.1);
        let expect = p0 - lr * mhat / (vhat.sqrt() + eps);
        let got = params.tensors[id.0].iter().next().copied().unwrap();
        assert!((got as f64 - expect as f64).abs() < 1e-10);
        // second step with a fresh gradient
        let p1 = got;
        let g2 = 2.0 * (p1 - 3.0);
        let grads2: Gradients = vec![Some(ndarray::arr0(g2).into_dyn())];
        opt.step(&mut params, &grads2);
        let m2 = betas.0 * m + (1.0 - betas.0) * g2;
        let v2 = betas.1 * v + (1.0 - betas.1) * g2 * g2;
        let mhat2 = m2 / (1.0 - betas.0 * betas.0);
        let vhat2 = v2 / (1.0 - betas.1 * betas.1);
        let expect2 = p1 - lr * mhat2 / (vhat2.sqrt() + eps);
        let got2 = params.tensors[id.0].iter().next().copied().unwrap();
        assert!((got2 as f64 - expect2 as f64).abs() < 1e-10);
    }

    #[test]
    fn step_returns_finite_components() {
        let cfg = tiny_cfg();
        let mut tr = Trainer::new(cfg).unwrap();
        let pairs = tiny_pairs(2, 1);
        let batch: Vec<&PairedSample> = pairs.iter().collect();
        let m = tr.train_step(&batch, None, 1).unwrap();
        for v in [m.adv_d, m.adv_g, m.lf, m.hf, m.total] {
            assert!(v.is_finite());
        }
        assert_eq!(m.iteration, 1);
        assert_eq!(tr.state.loss_history.len(), 1);
    }

    #[test]
    fn overfit_lf_only_halves_l1() {
        // λ_adv = λ_hf = 0, 200 steps on a single pair: LF loss must drop
        // by at least 50% from its initial value.
        let cfg = TrainConfig {
            weights: LossWeights { lambda_adv: 0.0, lambda_lf: 20.0, lambda_hf: 0.0 },
            d_stop_epoch: 0,
            epochs: 1,
            batch_size: 1,
            lr: 1e-3,
            seed: 11,
            net: NetConfig::test_scale(),
            ..TrainConfig::default()
        };
        let mut tr = Trainer::new(cfg).unwrap();
        let pairs = tiny_pairs(1, 1);
        let batch: Vec<&PairedSample> = pairs.iter().collect();
        let first = tr.train_step(&batch, None, 1).unwrap().lf;
        let mut last = first;
        for _ in 1..200 {
            last = tr.train_step(&batch, None, 1).unwrap().lf;
        }
        assert!(
            last <= 0.5 * first,
            "lf went {first} → {last}, less than 50% reduction"
        );
    }

    #[test]
    fn discriminator_frozen_after_stop_epoch() {
        let cfg = tiny_cfg(); // d_stop_epoch = 1
        let mut tr = Trainer::new(cfg).unwrap();
        let pairs = tiny_pairs(2, 1);
        let batch: Vec<&PairedSample> = pairs.iter().collect();
        let disc_range = tr.state.gen_param_count..tr.state.params.len();
        // epoch 1: D trains → params change
        let before: Vec<ArrayD<f32>> =
            tr.state.params.tensors[disc_range.clone()].to_vec();
        tr.train_step(&batch, None, 1).unwrap();
        let after: Vec<ArrayD<f32>> =
            tr.state.params.tensors[disc_range.clone()].to_vec();
        assert_ne!(before, after, "discriminator should update during epoch 1");
        // epoch 2 (> d_stop): bit-identical D params, but adv terms still scored
        let before: Vec<ArrayD<f32>> =
            tr.state.params.tensors[disc_range.clone()].to_vec();
        let m = tr.train_step(&batch, None, 2).unwrap();
        let after: Vec<ArrayD<f32>> = tr.state.params.tensors[disc_range].to_vec();
        assert_eq!(before, after, "discriminator must be frozen after d_stop_epoch");
        assert!(m.adv_d.is_finite() && m.adv_g.is_finite());
    }

    #[test]
    fn generator_gradients_reach_every_stage() {
        let cfg = tiny_cfg();
        let mut tr = Trainer::new(cfg).unwrap();
        let pairs = tiny_pairs(2, 1);
        let batch: Vec<&PairedSample> = pairs.iter().collect();
        let before = tr.state.params.clone();
        tr.train_step(&batch, None, 1).unwrap();
        for (stage, ids) in tr.gen.stage_param_ids() {
            let moved = ids.iter().any(|id| {
                before.tensors[id.0] != tr.state.params.tensors[id.0]
            });
            assert!(moved, "no parameter moved in generator stage {stage}");
        }
    }

    #[test]
    fn restore_shape_range_determinism() {
        let cfg = tiny_cfg();
        let tr = Trainer::new(cfg).unwrap();
        let img = crate::synth::synth_image(42, 128, 128);
        let out = tr.restore(&img).unwrap();
        assert_eq!(out.data.dim(), (128, 128, 3));
        assert!(out.data.iter().all(|&v| (0.0..=255.0).contains(&v) && v.fract() == 0.0));
        let out2 = tr.restore(&img).unwrap();
        assert_eq!(out.data, out2.data);
    }

    #[test]
    fn checkpoint_roundtrip_version_and_corruption() {
        let cfg = tiny_cfg();
        let mut tr = Trainer::new(cfg).unwrap();
        let pairs = tiny_pairs(2, 1);
        let batch: Vec<&PairedSample> = pairs.iter().collect();
        tr.train_step(&batch, None, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("epoch_001.ckpt");
        save_checkpoint(&tr.state, &path).unwrap();
        assert!(!path.with_extension("ckpt.tmp").exists(), "temp file left behind");
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, tr.state, "checkpoint must round-trip field-for-field");
        assert_eq!(loaded.version, CKPT_VERSION);
        // corrupted magic
        std::fs::write(dir.path().join("bad.ckpt"), b"garbage").unwrap();
        assert!(matches!(
            load_checkpoint(&dir.path().join("bad.ckpt")),
            Err(TrainError::Checkpoint { .. })
        ));
        // truncated body
        let full = std::fs::read(&path).unwrap();
        std::fs::write(dir.path().join("trunc.ckpt"), &full[..full.len() / 2]).unwrap();
        assert!(load_checkpoint(&dir.path().join("trunc.ckpt")).is_err());
        // latest_checkpoint picks the highest epoch
        save_checkpoint(&tr.state, &dir.path().join("epoch_002.ckpt")).unwrap();
        let latest = latest_checkpoint(dir.path()).unwrap().unwrap();
        assert!(latest.ends_with("epoch_002.ckpt"));
    }

    #[test]
    fn train_loop_counts_checkpoints_and_resumes_deterministically() {
        let base = tiny_cfg(); // 2 epochs, batch 2
        let pairs = tiny_pairs(4, 1);
        let split = DatasetSplit {
            train: pairs.clone(),
            test: vec![pairs[0].clone()],
            seed: base.seed,
        };
        // Uninterrupted 2-epoch run.
        let dir_a = tempfile::tempdir().unwrap();
        let mut a = Trainer::new(base).unwrap();
        a.train(&split, None, dir_a.path()).unwrap();
        // 4 pairs / batch 2 = 2 iterations per epoch, 2 epochs → 4 total.
        assert_eq!(a.state.loss_history.len(), 4);
        assert_eq!(a.state.iteration, 4);
        let ckpt = dir_a.path().join("ckpt");
        assert!(ckpt.join("epoch_001.ckpt").exists());
        assert!(ckpt.join("epoch_002.ckpt").exists());
        assert!(ckpt.join("best.ckpt").exists());

        // Seeded determinism: a fresh identical run reproduces the loss
        // history bit-for-bit.
        let dir_c = tempfile::tempdir().unwrap();
        let mut c = Trainer::new(base).unwrap();
        c.train(&split, None, dir_c.path()).unwrap();
        assert_eq!(a.state.loss_history, c.state.loss_history);

        // Resume: load the epoch-1 checkpoint and finish; epoch-2 losses
        // match the uninterrupted run exactly.
        let dir_b = tempfile::tempdir().unwrap();
        let state = load_checkpoint(&ckpt.join("epoch_001.ckpt")).unwrap();
        assert_eq!(state.epoch, 1);
        let mut b = Trainer::from_state(state);
        b.train(&split, None, dir_b.path()).unwrap();
        let epoch2 = |h: &[StepMetrics]| -> Vec<StepMetrics> {
            h.iter().copied().filter(|m| m.epoch == 2).collect()
        };
        assert_eq!(epoch2(&a.state.loss_history), epoch2(&b.state.loss_history));
        assert_eq!(a.state.params, b.state.params);

        // resume_or_new picks up the latest checkpoint in a ckpt dir.
        let resumed = Trainer::resume_or_new(base, &ckpt).unwrap();
        assert_eq!(resumed.state.epoch, 2);
    }
}
