//! Component ablation grid: cross attention on/off, temporal attention
//! on/off, prototype embedding on/off, and the reference-frame count sweep.

use rayon::prelude::*;

use super::{infer_video, train, DpaModel, ModelConfig, TrainConfig};
use crate::data::VideoSample;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricReport};

#[derive(Debug, Clone)]
pub struct AblationCell {
    pub label: String,
    pub use_ima: bool,
    pub use_ifa: bool,
    pub ima_prototypes: bool,
    pub ifa_prototypes: bool,
    pub n_refs: usize,
}

impl AblationCell {
    fn new(
        label: &str,
        use_ima: bool,
        use_ifa: bool,
        ima_prototypes: bool,
        ifa_prototypes: bool,
        n_refs: usize,
    ) -> AblationCell {
        AblationCell {
            label: label.to_string(),
            use_ima,
            use_ifa,
            ima_prototypes,
            ifa_prototypes,
            n_refs,
        }
    }
}

/// The full eleven-row grid: baseline, each block alone, both together, the
/// reference-count sweep, and the prototype-embedding toggles.
pub fn standard_grid() -> Vec<AblationCell> {
    vec![
        AblationCell::new("I", false, false, true, true, 4),
        AblationCell::new("II", true, false, true, true, 4),
        AblationCell::new("III", false, true, true, true, 4),
        AblationCell::new("IV", true, true, true, true, 4),
        AblationCell::new("V", true, true, true, true, 1),
        AblationCell::new("VI", true, true, true, true, 2),
        AblationCell::new("VII", true, true, true, true, 3),
        AblationCell::new("VIII", true, true, true, true, 5),
        AblationCell::new("IX", true, true, false, true, 4),
        AblationCell::new("X", true, true, true, false, 4),
        AblationCell::new("XI", true, true, false, false, 4),
    ]
}

/// Selects grid rows by comma-separated labels, or the whole grid for "all".
pub fn grid_rows(spec: &str) -> Result<Vec<AblationCell>> {
    let grid = standard_grid();
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(grid);
    }
    let mut out = Vec::new();
    for token in spec.split(',') {
        let token = token.trim();
        let cell = grid
            .iter()
            .find(|c| c.label.eq_ignore_ascii_case(token))
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown grid row {token:?}; valid rows are I..XI or `all`"
                ))
            })?;
        out.push(cell.clone());
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("empty grid specification".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct SeedResult {
    pub seed: u64,
    pub j: f64,
    pub f: f64,
    pub g: f64,
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub cell: AblationCell,
    pub j: f64,
    pub f: f64,
    pub g: f64,
    pub per_seed: Vec<SeedResult>,
}

#[derive(Debug, Clone)]
pub struct AblationOptions {
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
}

impl Default for AblationOptions {
    fn default() -> Self {
        AblationOptions {
            seeds: vec![0, 1, 2],
            steps: 200,
            batch_size: 1,
            lr_max: 1e-4,
            lr_min: 1e-5,
        }
    }
}

/// Trains one model per (cell, seed), evaluates on the test split, and
/// averages over seeds. Runs are independent and execute in parallel.
pub fn run_ablation(
    train_videos: &[VideoSample],
    test_videos: &[VideoSample],
    cells: &[AblationCell],
    opts: &AblationOptions,
) -> Result<Vec<AblationRow>> {
    if train_videos.is_empty() || test_videos.is_empty() {
        return Err(Error::InvalidArgument("ablation needs train and test videos".into()));
    }
    if opts.seeds.is_empty() {
        return Err(Error::InvalidArgument("ablation needs at least one seed".into()));
    }
    let (h, w) = (train_videos[0].height(), train_videos[0].width());

    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| opts.seeds.iter().map(move |&s| (c, s)))
        .collect();

    let results: Vec<(usize, SeedResult)> = jobs
        .par_iter()
        .map(|&(cell_idx, seed)| -> Result<(usize, SeedResult)> {
            let cell = &cells[cell_idx];
            let report = run_single(train_videos, test_videos, cell, seed, h, w, opts)?;
            Ok((
                cell_idx,
                SeedResult {
                    seed,
                    j: report.global.j,
                    f: report.global.f,
                    g: report.global.g,
                },
            ))
        })
        .collect::<Result<_>>()?;

    let mut rows: Vec<AblationRow> = cells
        .iter()
        .map(|cell| AblationRow {
            cell: cell.clone(),
            j: 0.0,
            f: 0.0,
            g: 0.0,
            per_seed: Vec::new(),
        })
        .collect();
    for (idx, sr) in results {
        rows[idx].per_seed.push(sr);
    }
    for row in &mut rows {
        row.per_seed.sort_by_key(|s| s.seed);
        let n = row.per_seed.len() as f64;
        row.j = row.per_seed.iter().map(|s| s.j).sum::<f64>() / n;
        row.f = row.per_seed.iter().map(|s| s.f).sum::<f64>() / n;
        row.g = row.per_seed.iter().map(|s| s.g).sum::<f64>() / n;
    }
    Ok(rows)
}

fn run_single(
    train_videos: &[VideoSample],
    test_videos: &[VideoSample],
    cell: &AblationCell,
    seed: u64,
    height: usize,
    width: usize,
    opts: &AblationOptions,
) -> Result<MetricReport> {
    let mut cfg = ModelConfig::new(height, width);
    cfg.use_ima = cell.use_ima;
    cfg.use_ifa = cell.use_ifa;
    cfg.ima_prototypes = cell.ima_prototypes;
    cfg.ifa_prototypes = cell.ifa_prototypes;
    cfg.n_refs = cell.n_refs;
    cfg.seed = seed;
    let mut model = DpaModel::new(cfg)?;

    let tc = TrainConfig {
        total_steps: opts.steps,
        batch_size: opts.batch_size,
        lr_max: opts.lr_max,
        lr_min: opts.lr_min,
        seed,
        n_refs: cell.n_refs,
        ..TrainConfig::default()
    };
    train(&mut model, train_videos, &tc)?;

    let sequences: Vec<(String, Vec<crate::data::Mask>, Vec<crate::data::Mask>)> = test_videos
        .iter()
        .map(|v| -> Result<_> {
            let n = cell.n_refs.min(v.len());
            let preds = infer_video(&model, v, n)?;
            Ok((v.id.clone(), preds, v.masks.clone()))
        })
        .collect::<Result<_>>()?;
    evaluate(&sequences)
}

pub fn rows_to_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("row,ima,ifa,ima_proto,ifa_proto,n_refs,j,f,g,seeds\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{}\n",
            r.cell.label,
            r.cell.use_ima as u8,
            r.cell.use_ifa as u8,
            r.cell.ima_prototypes as u8,
            r.cell.ifa_prototypes as u8,
            r.cell.n_refs,
            r.j,
            r.f,
            r.g,
            r.per_seed.len()
        ));
    }
    out
}

pub fn rows_to_text(rows: &[AblationRow]) -> String {
    let mut out = format!(
        "{:<5} {:>4} {:>4} {:>7} {:>7} {:>3}  {:>7} {:>7} {:>7}\n",
        "row", "IMA", "IFA", "IMA-P", "IFA-P", "N", "J", "F", "G"
    );
    let onoff = |b: bool| if b { "on" } else { "off" };
    for r in rows {
        out.push_str(&format!(
            "{:<5} {:>4} {:>4} {:>7} {:>7} {:>3}  {:>7.4} {:>7.4} {:>7.4}\n",
            r.cell.label,
            onoff(r.cell.use_ima),
            onoff(r.cell.use_ifa),
            onoff(r.cell.ima_prototypes),
            onoff(r.cell.ifa_prototypes),
            r.cell.n_refs,
            r.j,
            r.f,
            r.g
        ));
    }
    out
}
