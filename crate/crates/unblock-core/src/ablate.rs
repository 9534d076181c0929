//! Ablation grids and result tables.
//!
//! Two studies: (a) LF-loss weight λ_LF ∈ {5, 10, 20} crossed with
//! whether discriminator training is stopped early ("stop") or runs for
//! all epochs ("nonstop"); (b) presence of the hourglass bottleneck
//! crossed with the HF (feature) loss, in the three columns off/off,
//! on/off, on/on. Every cell is a complete, independently runnable
//! [`TrainConfig`].

use crate::dataset::DatasetSplit;
use crate::losses::{FeatureExtractor, LossWeights};
use crate::trainer::{TrainConfig, Trainer};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// λ_LF values of the first study.
pub const LAMBDA_LF_GRID: [f32; 3] = [5.0, 10.0, 20.0];

/// One runnable grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    /// Short column label, e.g. `lf5/stop` or `hg_on/hf_off`.
    pub name: String,
    pub cfg: TrainConfig,
    /// Whether the cell's HF term needs a feature extractor.
    pub needs_extractor: bool,
}

/// Both grids derived from a base configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub base: TrainConfig,
}

impl AblationSpec {
    pub fn new(base: TrainConfig) -> Self {
        Self { base }
    }

    /// 3×2 grid: λ_LF × {nonstop, stop}. "Nonstop" trains the
    /// discriminator for all epochs; "stop" freezes it after the base
    /// `d_stop_epoch` (clamped to the epoch count).
    pub fn lambda_stop_grid(&self) -> Vec<AblationCell> {
        let mut cells = Vec::new();
        for lf in LAMBDA_LF_GRID {
            for stop in [false, true] {
                let mut cfg = self.base;
                cfg.weights = LossWeights { lambda_lf: lf, ..cfg.weights };
                cfg.d_stop_epoch = if stop {
                    self.base.d_stop_epoch.min(cfg.epochs)
                } else {
                    cfg.epochs
                };
                cells.push(AblationCell {
                    name: format!("lf{}/{}", lf, if stop { "stop" } else { "nonstop" }),
                    cfg,
                    needs_extractor: cfg.weights.lambda_hf != 0.0,
                });
            }
        }
        cells
    }

    /// Hourglass × HF-loss study in the three reported columns:
    /// off/off, on/off, on/on.
    pub fn hourglass_hf_grid(&self) -> Vec<AblationCell> {
        [(false, false), (true, false), (true, true)]
            .into_iter()
            .map(|(hourglass, hf)| {
                let mut cfg = self.base;
                cfg.net.hourglass = hourglass;
                if !hf {
                    cfg.weights.lambda_hf = 0.0;
                } else if cfg.weights.lambda_hf == 0.0 {
                    cfg.weights.lambda_hf = LossWeights::default().lambda_hf;
                }
                AblationCell {
                    name: format!(
                        "hg_{}/hf_{}",
                        if hourglass { "on" } else { "off" },
                        if hf { "on" } else { "off" }
                    ),
                    cfg,
                    needs_extractor: hf,
                }
            })
            .collect()
    }
}

/// Outcome of one trained grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub name: String,
    /// Mean metrics of restored vs original; `None` if the cell failed.
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub error: Option<String>,
}

impl CellResult {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Trains every cell on the split and evaluates on the *training* pairs
/// (the directional comparisons are about fitting capacity, not
/// generalization). Failed cells are recorded and skipped.
pub fn run_grid(
    cells: &[AblationCell],
    split: &DatasetSplit,
    fe: Option<&FeatureExtractor>,
    out_dir: &Path,
) -> Vec<CellResult> {
    cells
        .iter()
        .map(|cell| {
            let dir = out_dir.join(cell.name.replace('/', "_"));
            match run_cell(cell, split, fe, &dir) {
                Ok((psnr, ssim)) => CellResult {
                    name: cell.name.clone(),
                    psnr: Some(psnr),
                    ssim: Some(ssim),
                    error: None,
                },
                Err(e) => {
                    log::error!("ablation cell {} failed: {e}", cell.name);
                    CellResult {
                        name: cell.name.clone(),
                        psnr: None,
                        ssim: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect()
}

fn run_cell(
    cell: &AblationCell,
    split: &DatasetSplit,
    fe: Option<&FeatureExtractor>,
    dir: &Path,
) -> Result<(f64, f64), crate::trainer::TrainError> {
    std::fs::create_dir_all(dir)?;
    let mut tr = Trainer::new(cell.cfg)?;
    let fe = if cell.needs_extractor { fe } else { None };
    tr.train(split, fe, dir)?;
    tr.eval_on(&split.train)
}

/// Aligned text table: one column per configuration, one row per metric.
pub fn format_table(title: &str, results: &[CellResult]) -> String {
    let headers: Vec<String> = results.iter().map(|r| r.name.clone()).collect();
    let fmt = |v: &Option<f64>| match v {
        Some(x) => format!("{x:.4}"),
        None => "failed".to_string(),
    };
    let psnr_row: Vec<String> = results.iter().map(|r| fmt(&r.psnr)).collect();
    let ssim_row: Vec<String> = results.iter().map(|r| fmt(&r.ssim)).collect();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in [&psnr_row, &ssim_row] {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let label_w = "metric".len().max(4);
    let mut out = format!("{title}\n");
    let line = |label: &str, cells: &[String], out: &mut String| {
        out.push_str(&format!("{label:<label_w$}"));
        for (c, w) in cells.iter().zip(&widths) {
            out.push_str(&format!("  {c:>w$}"));
        }
        out.push('\n');
    };
    line("metric", &headers, &mut out);
    line("PSNR", &psnr_row, &mut out);
    line("SSIM", &ssim_row, &mut out);
    out
}
