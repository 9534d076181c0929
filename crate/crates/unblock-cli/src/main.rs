//! `unblock` — command-line front end for the compression/restoration
//! pipeline: synthetic corpus generation, the from-scratch JPEG codec,
//! dataset construction, GAN training, restoration, evaluation, and the
//! ablation harness.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use unblock_core::ablate::{format_table, run_grid, AblationSpec};
use unblock_core::dataset::{
    build_pairs, load_materialized, load_png, materialize, save_png, split,
};
use unblock_core::losses::{AdvVariant, FeatureExtractor};
use unblock_core::nn::NetConfig;
use unblock_core::trainer::{load_checkpoint, TrainConfig, Trainer};
use unblock_core::{codec, dataset::DatasetSplit, metrics, synth};

/// Environment variable naming the feature-extractor (VGG-16) weights
/// file used by the HF loss. Without it, a small random extractor is
/// substituted with a warning (fine for desk-scale runs, not for
/// comparable full-scale numbers).
const VGG_WEIGHTS_ENV: &str = "UNBLOCK_VGG_WEIGHTS";

#[derive(Parser)]
#[command(
    name = "unblock",
    version,
    about = "Maximally-compressed JPEG restoration: from-scratch baseline codec, \
             GAN restorer, and PSNR/SSIM/VIF evaluation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a deterministic synthetic PNG corpus.
    GenCorpus {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        count: usize,
        #[arg(long, default_value_t = 128)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_clobber: bool,
    },
    /// Encode a directory of PNGs to baseline JPEG and report sizes.
    Compress {
        #[arg(long, value_name = "DIR")]
        r#in: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=100), default_value_t = 1)]
        quality: u8,
        #[arg(long)]
        no_clobber: bool,
    },
    /// Encode + decode each PNG through the codec and write the decoded PNGs.
    Roundtrip {
        #[arg(long, value_name = "DIR")]
        r#in: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=100), default_value_t = 1)]
        quality: u8,
        #[arg(long)]
        no_clobber: bool,
    },
    /// Build train/test paired datasets (original + compressed) from PNGs.
    BuildDataset {
        #[arg(long, value_name = "DIR")]
        r#in: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=100), default_value_t = 1)]
        quality: u8,
        /// Fraction of pairs assigned to the training split.
        #[arg(long, default_value_t = 0.8)]
        train_ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        no_clobber: bool,
    },
    /// Train the restoration GAN on a built dataset.
    Train {
        /// Dataset root produced by `build-dataset` (contains train/, test/).
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Resume from this checkpoint instead of the latest in OUT/ckpt.
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        hp: HyperFlags,
    },
    /// Restore a directory of compressed 128×128 PNGs with a trained model.
    Restore {
        #[arg(long, value_name = "DIR")]
        r#in: PathBuf,
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long)]
        no_clobber: bool,
    },
    /// Compute PSNR/SSIM/VIF of candidates against originals.
    Evaluate {
        /// Directory of reference PNGs.
        #[arg(long, value_name = "DIR")]
        originals: PathBuf,
        /// Directory of candidate PNGs with matching file names.
        #[arg(long, value_name = "DIR")]
        candidates: PathBuf,
        /// Where to write the line-delimited report (stdout gets the table).
        #[arg(long, value_name = "FILE")]
        report: Option<PathBuf>,
        /// Free-form label echoed into the report.
        #[arg(long, default_value = "")]
        label: String,
    },
    /// Run (or plan with --dry-run) the two ablation grids.
    Ablate {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Print the planned grid cells without training.
        #[arg(long)]
        dry_run: bool,
        #[command(flatten)]
        hp: HyperFlags,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AdvLossFlag {
    Log,
    Logless,
}

/// Training hyperparameters; unset flags fall back to the config file
/// (if given) and then to the built-in defaults.
#[derive(Args)]
struct HyperFlags {
    /// JSON file with a full TrainConfig (same keys as the flags).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f32>,
    #[arg(long)]
    lambda_adv: Option<f32>,
    #[arg(long)]
    lambda_lf: Option<f32>,
    #[arg(long)]
    lambda_hf: Option<f32>,
    /// Last epoch with discriminator updates (clamped to --epochs).
    #[arg(long)]
    d_stop_epoch: Option<usize>,
    #[arg(long)]
    dropout: Option<f32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=100))]
    quality: Option<u8>,
    #[arg(long, value_enum)]
    adv_loss: Option<AdvLossFlag>,
    /// Remove the hourglass bottleneck blocks.
    #[arg(long)]
    no_hourglass: bool,
    /// Disable the HF (feature) loss term.
    #[arg(long)]
    no_hf_loss: bool,
    /// Full-size networks (512×512, width 64) instead of desk scale.
    #[arg(long)]
    paper_scale: bool,
}

impl HyperFlags {
    fn to_config(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config file {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config file {}", path.display()))?
            }
            None => TrainConfig {
                net: NetConfig::test_scale(),
                ..TrainConfig::default()
            },
        };
        if self.paper_scale {
            cfg.net = NetConfig::paper_scale();
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.lambda_adv {
            cfg.weights.lambda_adv = v;
        }
        if let Some(v) = self.lambda_lf {
            cfg.weights.lambda_lf = v;
        }
        if let Some(v) = self.lambda_hf {
            cfg.weights.lambda_hf = v;
        }
        if let Some(v) = self.d_stop_epoch {
            cfg.d_stop_epoch = v;
        }
        if let Some(v) = self.dropout {
            cfg.dropout_rate = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.quality {
            cfg.quality = v;
        }
        if let Some(v) = self.adv_loss {
            cfg.adv_loss_variant = match v {
                AdvLossFlag::Log => AdvVariant::Log,
                AdvLossFlag::Logless => AdvVariant::Logless,
            };
        }
        if self.no_hf_loss {
            cfg.weights.lambda_hf = 0.0;
        }
        if self.no_hourglass {
            cfg.net.hourglass = false;
        }
        // A shorter run than the default freeze point means the
        // discriminator simply trains throughout.
        cfg.d_stop_epoch = cfg.d_stop_epoch.min(cfg.epochs);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        log::error!("{e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenCorpus { out, count, size, seed, no_clobber } => {
            ensure_out(&out, no_clobber)?;
            for i in 0..count {
                let img = synth::synth_image(seed.wrapping_add(i as u64), size, size);
                save_png(&img, &out.join(format!("img_{i:03}.png")))?;
            }
            println!("wrote {count} images to {}", out.display());
            Ok(())
        }
        Cmd::Compress { r#in, out, quality, no_clobber } => {
            let inputs = list_pngs(&r#in)?;
            ensure_out(&out, no_clobber)?;
            let mut png_total = 0u64;
            let mut jpg_total = 0u64;
            let mut report = String::new();
            for p in &inputs {
                let img = load_png(p)?;
                let bs = codec::compress(&img, quality)?;
                let name = p.file_stem().unwrap().to_string_lossy();
                let jpg_path = out.join(format!("{name}.jpg"));
                std::fs::write(&jpg_path, &bs.bytes)?;
                let png_size = std::fs::metadata(p)?.len();
                let jpg_size = bs.bytes.len() as u64;
                png_total += png_size;
                jpg_total += jpg_size;
                report.push_str(&format!(
                    "{name}.png {png_size} -> {name}.jpg {jpg_size} reduction {:.4}\n",
                    1.0 - jpg_size as f64 / png_size as f64
                ));
            }
            let aggregate = 1.0 - jpg_total as f64 / png_total as f64;
            report.push_str(&format!(
                "aggregate {png_total} -> {jpg_total} reduction {aggregate:.4}\n"
            ));
            std::fs::write(out.join("size_report.txt"), &report)?;
            print!("{report}");
            Ok(())
        }
        Cmd::Roundtrip { r#in, out, quality, no_clobber } => {
            let inputs = list_pngs(&r#in)?;
            ensure_out(&out, no_clobber)?;
            for p in &inputs {
                let img = load_png(p)?;
                let decoded = codec::decompress(&codec::compress(&img, quality)?)?;
                save_png(&decoded, &out.join(p.file_name().unwrap()))?;
            }
            println!("roundtripped {} images at quality {quality}", inputs.len());
            Ok(())
        }
        Cmd::BuildDataset { r#in, out, quality, train_ratio, seed, no_clobber } => {
            if !r#in.is_dir() {
                bail!("input directory {} does not exist", r#in.display());
            }
            ensure_out(&out, no_clobber)?;
            let outcome = build_pairs(&r#in, quality)?;
            let ds = split(outcome.pairs, train_ratio, seed);
            materialize(&ds.train, quality, &out.join("train"))?;
            materialize(&ds.test, quality, &out.join("test"))?;
            std::fs::write(out.join("seed"), format!("{seed}\n"))?;
            println!(
                "built {} train / {} test pairs at quality {quality} ({} skipped)",
                ds.train.len(),
                ds.test.len(),
                outcome.skipped.len()
            );
            Ok(())
        }
        Cmd::Train { data, out, checkpoint, hp } => {
            let cfg = hp.to_config()?;
            let ds = load_split(&data, cfg.seed)?;
            std::fs::create_dir_all(&out)?;
            let fe = extractor_for(&cfg)?;
            let mut tr = match checkpoint {
                Some(path) => Trainer::from_state(load_checkpoint(&path)?),
                None => Trainer::resume_or_new(cfg, &out.join("ckpt"))?,
            };
            tr.train(&ds, fe.as_ref(), &out)?;
            println!(
                "trained {} epochs ({} iterations); checkpoints in {}",
                tr.state.epoch,
                tr.state.iteration,
                out.join("ckpt").display()
            );
            Ok(())
        }
        Cmd::Restore { r#in, checkpoint, out, no_clobber } => {
            let inputs = list_pngs(&r#in)?;
            ensure_out(&out, no_clobber)?;
            let tr = Trainer::from_state(load_checkpoint(&checkpoint)?);
            for p in &inputs {
                let img = load_png(p)?;
                let restored = tr.restore(&img)?;
                save_png(&restored, &out.join(p.file_name().unwrap()))?;
            }
            println!("restored {} images to {}", inputs.len(), out.display());
            Ok(())
        }
        Cmd::Evaluate { originals, candidates, report, label } => {
            let refs = list_pngs(&originals)?;
            let mut pairs = Vec::new();
            let mut ids = Vec::new();
            for p in &refs {
                let name = p.file_name().unwrap();
                let cand = candidates.join(name);
                if !cand.exists() {
                    bail!("candidate {} is missing", cand.display());
                }
                pairs.push((load_png(p)?, load_png(&cand)?));
                ids.push(name.to_string_lossy().trim_end_matches(".png").to_string());
            }
            let rep = metrics::evaluate(&pairs, &ids, &label)?;
            print!("{}", rep.to_table());
            if let Some(path) = report {
                std::fs::write(&path, rep.to_jsonl())?;
                println!("report written to {}", path.display());
            }
            Ok(())
        }
        Cmd::Ablate { data, out, dry_run, hp } => {
            let cfg = hp.to_config()?;
            let spec = AblationSpec::new(cfg);
            let grid_a = spec.lambda_stop_grid();
            let grid_b = spec.hourglass_hf_grid();
            if dry_run {
                println!("planned ablation grids (no training performed):");
                println!("study 1: lambda_lf x d_stop ({} cells)", grid_a.len());
                for c in &grid_a {
                    println!(
                        "  {}  epochs={} lambda_lf={} d_stop_epoch={}",
                        c.name, c.cfg.epochs, c.cfg.weights.lambda_lf, c.cfg.d_stop_epoch
                    );
                }
                println!("study 2: hourglass x hf_loss ({} cells)", grid_b.len());
                for c in &grid_b {
                    println!(
                        "  {}  hourglass={} lambda_hf={}",
                        c.name, c.cfg.net.hourglass, c.cfg.weights.lambda_hf
                    );
                }
                return Ok(());
            }
            let ds = load_split(&data, cfg.seed)?;
            std::fs::create_dir_all(&out)?;
            let fe = extractor_for_grid(grid_b.iter().any(|c| c.needs_extractor))?;
            let res_a = run_grid(&grid_a, &ds, fe.as_ref(), &out.join("lambda_stop"));
            let res_b = run_grid(&grid_b, &ds, fe.as_ref(), &out.join("hourglass_hf"));
            let table_a = format_table("study 1: lambda_lf x d_stop", &res_a);
            let table_b = format_table("study 2: hourglass x hf_loss", &res_b);
            print!("{table_a}\n{table_b}");
            std::fs::write(out.join("tables.txt"), format!("{table_a}\n{table_b}"))?;
            let jsonl: String = res_a
                .iter()
                .chain(&res_b)
                .map(|r| serde_json::to_string(r).unwrap() + "\n")
                .collect();
            std::fs::write(out.join("results.jsonl"), jsonl)?;
            if res_a.iter().chain(&res_b).any(|r| !r.ok()) {
                bail!("one or more ablation cells failed (see results.jsonl)");
            }
            Ok(())
        }
    }
}

/// Creates `dir`; refuses to reuse a non-empty one under `--no-clobber`.
fn ensure_out(dir: &Path, no_clobber: bool) -> Result<()> {
    if no_clobber && dir.is_dir() && dir.read_dir()?.next().is_some() {
        bail!(
            "output directory {} is not empty (remove it or drop --no-clobber)",
            dir.display()
        );
    }
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Sorted PNG paths in `dir`; the error names the path when missing/empty.
fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        bail!("input directory {} does not exist", dir.display());
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no PNG files found in {}", dir.display());
    }
    Ok(files)
}

/// Loads the train/ and test/ datasets materialized by `build-dataset`.
fn load_split(root: &Path, seed: u64) -> Result<DatasetSplit> {
    let train = load_materialized(&root.join("train"))
        .with_context(|| format!("loading dataset from {}", root.display()))?;
    let test = match load_materialized(&root.join("test")) {
        Ok(t) => t,
        Err(_) => Vec::new(), // a test split is optional
    };
    Ok(DatasetSplit { train, test, seed })
}

fn extractor_for(cfg: &TrainConfig) -> Result<Option<FeatureExtractor>> {
    extractor_for_grid(cfg.weights.lambda_hf != 0.0)
}

/// HF-loss extractor: real weights from `UNBLOCK_VGG_WEIGHTS` when set,
/// otherwise a seeded random stand-in (with a warning).
fn extractor_for_grid(needed: bool) -> Result<Option<FeatureExtractor>> {
    if !needed {
        return Ok(None);
    }
    match std::env::var_os(VGG_WEIGHTS_ENV) {
        Some(path) => {
            let path = PathBuf::from(path);
            Ok(Some(FeatureExtractor::load(&path)?))
        }
        None => {
            log::warn!(
                "{VGG_WEIGHTS_ENV} not set; using a random stand-in feature \
                 extractor (HF loss values are not comparable to full-scale runs)"
            );
            Ok(Some(FeatureExtractor::tiny_random(0)))
        }
    }
}
