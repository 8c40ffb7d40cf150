//! Command-line front end.
//!
//! Subcommands: `gen-data`, `train`, `infer`, `eval`, `ablate`, `bench`,
//! `sample-frames`. Flags are long-form only; precedence is CLI flag over
//! `--config` file entry over built-in default. Logs go to standard error,
//! results to standard output or `--out`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::data;
use crate::error::{Error, Result};
use crate::ifa::sample_reference_indices;
use crate::metrics;
use crate::network::{
    bench_model, grid_rows, infer_video, rows_to_csv, rows_to_text, run_ablation, train,
    AblationOptions, DpaModel, ModelConfig, TrainConfig,
};

const USAGE: &str = "\
usage: dpat <subcommand> [--flag value ...]

subcommands:
  gen-data       render a synthetic dataset
                 --out DIR [--seed N] [--videos N] [--len N]
                 [--height N] [--width N] [--difficulty F] [--jobs N]
  train          train a model on a dataset
                 --data DIR --out CKPT [--loss-csv FILE] [--steps N]
                 [--batch N] [--seed N] [--lr-max F] [--lr-min F]
                 [--n-refs N] [model flags]
  infer          predict masks for every video in a dataset
                 --data DIR --checkpoint CKPT --out DIR [--n-refs N]
                 [--jobs N] [model flags]
  eval           score predicted masks against ground truth
                 --pred DIR --gt DIR [--out CSV]
  ablate         train/evaluate the component grid
                 --train DIR --test DIR [--grid ROWS] [--seeds N|LIST]
                 [--steps N] [--batch N] [--lr-max F] [--lr-min F]
                 [--out CSV] [--jobs N]
  bench          parameter count and per-frame timing
                 [--height N] [--width N] [--repeats N] [--n-refs N]
                 [--checkpoint CKPT] [--out CSV] [model flags]
  sample-frames  print uniformly sampled reference indices
                 --len N --n N

model flags (must match between train and infer):
  --ima on|off --ifa on|off --ima-protos on|off --ifa-protos on|off
  --channel-softmax on|off --channel-fc on|off --fuse-relu on|off

common: --config FILE (key = value lines, same keys as flags)
";

const MODEL_KEYS: &[&str] = &[
    "ima",
    "ifa",
    "ima-protos",
    "ifa-protos",
    "channel-softmax",
    "channel-fc",
    "fuse-relu",
];

struct Opts {
    map: BTreeMap<String, String>,
}

impl Opts {
    /// Parses `--key value` / `--key=value` pairs, folds in the config file,
    /// and rejects keys outside `allowed`.
    fn parse(args: &[String], allowed: &[&str]) -> Result<Opts> {
        let mut cli: BTreeMap<String, String> = BTreeMap::new();
        let mut i = 0;
        while i < args.len() {
            let arg = &args[i];
            let Some(stripped) = arg.strip_prefix("--") else {
                return Err(Error::InvalidArgument(format!(
                    "expected a --flag, got {arg:?}"
                )));
            };
            let (key, value) = match stripped.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let Some(value) = args.get(i + 1) else {
                        return Err(Error::InvalidArgument(format!("--{stripped} needs a value")));
                    };
                    i += 1;
                    (stripped.to_string(), value.clone())
                }
            };
            cli.insert(key, value);
            i += 1;
        }

        let mut map: BTreeMap<String, String> = BTreeMap::new();
        if let Some(path) = cli.get("config") {
            for (k, v) in parse_config_file(Path::new(path))? {
                map.insert(k, v);
            }
        }
        map.extend(cli);

        for key in map.keys() {
            if key != "config" && !allowed.contains(&key.as_str()) {
                return Err(Error::InvalidArgument(format!("unknown flag --{key}")));
            }
        }
        Ok(Opts { map })
    }

    fn req(&self, key: &str) -> Result<String> {
        self.map
            .get(key)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("missing required flag --{key}")))
    }

    fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.map.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("--{key}: cannot parse {v:?}"))),
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.map.get(key).map(|s| s.as_str()) {
            None => Ok(default),
            Some("on") | Some("true") | Some("1") => Ok(true),
            Some("off") | Some("false") | Some("0") => Ok(false),
            Some(other) => Err(Error::InvalidArgument(format!(
                "--{key}: expected on|off, got {other:?}"
            ))),
        }
    }

    fn log_resolved(&self, subcommand: &str) {
        let mut line = format!("dpat {subcommand}:");
        for (k, v) in &self.map {
            let _ = write!(line, " {k}={v}");
        }
        eprintln!("{line}");
    }
}

fn parse_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Validation(format!(
                "{}:{}: expected `key = value`, got {line:?}",
                path.display(),
                ln + 1
            )));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn model_config_from(opts: &Opts, height: usize, width: usize, seed: u64) -> Result<ModelConfig> {
    let mut cfg = ModelConfig::new(height, width);
    cfg.use_ima = opts.bool_or("ima", true)?;
    cfg.use_ifa = opts.bool_or("ifa", true)?;
    cfg.ima_prototypes = opts.bool_or("ima-protos", true)?;
    cfg.ifa_prototypes = opts.bool_or("ifa-protos", true)?;
    cfg.channel_softmax = opts.bool_or("channel-softmax", false)?;
    cfg.ima_channel_fc = opts.bool_or("channel-fc", false)?;
    cfg.fuse_relu = opts.bool_or("fuse-relu", true)?;
    cfg.n_refs = opts.parse_or("n-refs", 4)?;
    cfg.seed = seed;
    Ok(cfg)
}

fn init_jobs(opts: &Opts) -> Result<()> {
    if let Some(jobs) = opts.map.get("jobs") {
        let n: usize = jobs
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("--jobs: cannot parse {jobs:?}")))?;
        if n == 0 {
            return Err(Error::InvalidArgument("--jobs must be positive".into()));
        }
        // The pool can only be sized once per process; later calls keep the
        // first size, which is fine for a CLI run.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn cmd_gen_data(args: &[String]) -> Result<()> {
    let opts = Opts::parse(
        args,
        &["out", "seed", "videos", "len", "height", "width", "difficulty", "jobs"],
    )?;
    opts.log_resolved("gen-data");
    init_jobs(&opts)?;
    let cfg = data::GenConfig {
        seed: opts.parse_or("seed", 0u64)?,
        n_videos: opts.parse_or("videos", 10usize)?,
        len: opts.parse_or("len", 16usize)?,
        height: opts.parse_or("height", 64usize)?,
        width: opts.parse_or("width", 64usize)?,
        difficulty: opts.parse_or("difficulty", 1.0f64)?,
    };
    let out = opts.req("out")?;
    let videos = data::gen_synthetic(&cfg)?;
    data::save_dataset(&videos, &out)?;
    eprintln!(
        "gen-data: wrote {} videos ({} frames each) to {}",
        videos.len(),
        cfg.len,
        out
    );
    Ok(())
}

fn cmd_train(args: &[String]) -> Result<()> {
    let mut allowed = vec![
        "data", "out", "loss-csv", "steps", "batch", "seed", "lr-max", "lr-min", "n-refs",
    ];
    allowed.extend_from_slice(MODEL_KEYS);
    let opts = Opts::parse(args, &allowed)?;
    opts.log_resolved("train");
    let data_root = opts.req("data")?;
    let out = opts.req("out")?;
    let videos = data::load_dataset(&data_root)?;
    let seed = opts.parse_or("seed", 0u64)?;
    let cfg = model_config_from(&opts, videos[0].height(), videos[0].width(), seed)?;

    let tc = TrainConfig {
        total_steps: opts.parse_or("steps", 200usize)?,
        batch_size: opts.parse_or("batch", 1usize)?,
        lr_max: opts.parse_or("lr-max", 1e-4f64)?,
        lr_min: opts.parse_or("lr-min", 1e-5f64)?,
        seed,
        n_refs: cfg.n_refs,
        ..TrainConfig::default()
    };

    let mut model = DpaModel::new(cfg)?;
    let curve = train(&mut model, &videos, &tc)?;
    model.save(&out)?;

    let loss_csv = opts
        .map
        .get("loss-csv")
        .cloned()
        .unwrap_or_else(|| format!("{out}.loss.csv"));
    std::fs::write(&loss_csv, crate::network::records_to_csv(&curve))
        .map_err(|e| Error::io(&loss_csv, e))?;
    eprintln!(
        "train: {} steps, final loss {:.6}, checkpoint {}, curve {}",
        curve.len(),
        curve.last().map(|r| r.loss).unwrap_or(f64::NAN),
        out,
        loss_csv
    );
    Ok(())
}

fn cmd_infer(args: &[String]) -> Result<()> {
    let mut allowed = vec!["data", "checkpoint", "out", "n-refs", "jobs", "seed"];
    allowed.extend_from_slice(MODEL_KEYS);
    let opts = Opts::parse(args, &allowed)?;
    opts.log_resolved("infer");
    init_jobs(&opts)?;
    let data_root = opts.req("data")?;
    let ckpt = opts.req("checkpoint")?;
    let out = opts.req("out")?;
    let videos = data::load_dataset(&data_root)?;
    let cfg = model_config_from(&opts, videos[0].height(), videos[0].width(), 0)?;
    let n_refs = cfg.n_refs;
    let mut model = DpaModel::new(cfg)?;
    model.load(&ckpt)?;

    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    videos.par_iter().try_for_each(|v| -> Result<()> {
        let masks = infer_video(&model, v, n_refs.min(v.len()))?;
        data::save_masks(&out, &v.id, &masks)
    })?;
    eprintln!("infer: wrote masks for {} videos to {}", videos.len(), out);
    Ok(())
}

fn cmd_eval(args: &[String]) -> Result<()> {
    let opts = Opts::parse(args, &["pred", "gt", "out", "jobs"])?;
    opts.log_resolved("eval");
    init_jobs(&opts)?;
    let pred_root = opts.req("pred")?;
    let gt_root = opts.req("gt")?;
    let gt_videos = data::load_dataset(&gt_root)?;
    let sequences: Vec<(String, Vec<data::Mask>, Vec<data::Mask>)> = gt_videos
        .par_iter()
        .map(|v| -> Result<_> {
            let preds = data::load_masks(&pred_root, &v.id, v.len())?;
            Ok((v.id.clone(), preds, v.masks.clone()))
        })
        .collect::<Result<_>>()?;
    let report = metrics::evaluate(&sequences)?;
    println!(
        "J_M={:.3} F_M={:.3} G_M={:.3}",
        report.global.j, report.global.f, report.global.g
    );
    print!("{}", report.to_text());
    if let Some(out) = opts.map.get("out") {
        std::fs::write(out, report.to_csv()).map_err(|e| Error::io(out, e))?;
    }
    Ok(())
}

fn cmd_ablate(args: &[String]) -> Result<()> {
    let opts = Opts::parse(
        args,
        &["train", "test", "grid", "seeds", "steps", "batch", "lr-max", "lr-min", "out", "jobs"],
    )?;
    opts.log_resolved("ablate");
    init_jobs(&opts)?;
    let train_videos = data::load_dataset(opts.req("train")?)?;
    let test_videos = data::load_dataset(opts.req("test")?)?;
    let cells = grid_rows(&opts.parse_or("grid", "all".to_string())?)?;

    let seeds_spec = opts.parse_or("seeds", "3".to_string())?;
    let seeds: Vec<u64> = if seeds_spec.contains(',') {
        seeds_spec
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("--seeds: bad entry {s:?}")))
            })
            .collect::<Result<_>>()?
    } else {
        let n: u64 = seeds_spec
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("--seeds: cannot parse {seeds_spec:?}")))?;
        (0..n).collect()
    };

    let ab_opts = AblationOptions {
        seeds,
        steps: opts.parse_or("steps", 200usize)?,
        batch_size: opts.parse_or("batch", 1usize)?,
        lr_max: opts.parse_or("lr-max", 1e-4f64)?,
        lr_min: opts.parse_or("lr-min", 1e-5f64)?,
    };
    let rows = run_ablation(&train_videos, &test_videos, &cells, &ab_opts)?;
    print!("{}", rows_to_text(&rows));
    if let Some(out) = opts.map.get("out") {
        std::fs::write(out, rows_to_csv(&rows)).map_err(|e| Error::io(out, e))?;
    }
    Ok(())
}

fn cmd_bench(args: &[String]) -> Result<()> {
    let mut allowed = vec!["height", "width", "repeats", "n-refs", "checkpoint", "out", "seed"];
    allowed.extend_from_slice(MODEL_KEYS);
    let opts = Opts::parse(args, &allowed)?;
    opts.log_resolved("bench");
    let height = opts.parse_or("height", 64usize)?;
    let width = opts.parse_or("width", 64usize)?;
    let seed = opts.parse_or("seed", 0u64)?;
    let cfg = model_config_from(&opts, height, width, seed)?;
    let n_refs = cfg.n_refs;
    let mut model = DpaModel::new(cfg)?;
    if let Some(ckpt) = opts.map.get("checkpoint") {
        model.load(ckpt)?;
    }
    let report = bench_model(&model, n_refs, opts.parse_or("repeats", 50usize)?)?;
    print!("{}", report.to_text());
    if let Some(out) = opts.map.get("out") {
        std::fs::write(out, report.to_csv()).map_err(|e| Error::io(out, e))?;
    }
    Ok(())
}

fn cmd_sample_frames(args: &[String]) -> Result<()> {
    let opts = Opts::parse(args, &["len", "n"])?;
    opts.log_resolved("sample-frames");
    let len: usize = opts.req("len")?.parse().map_err(|_| {
        Error::InvalidArgument("--len: expected a positive integer".into())
    })?;
    let n: usize = opts.req("n")?.parse().map_err(|_| {
        Error::InvalidArgument("--n: expected a positive integer".into())
    })?;
    let indices = sample_reference_indices(len, n)?;
    let line: Vec<String> = indices.iter().map(|i| i.to_string()).collect();
    println!("{}", line.join(" "));
    Ok(())
}

/// Dispatches a full argv (without the executable name) and maps errors to
/// exit codes: 0 success, 1 validation, 2 I/O.
pub fn run(args: &[String]) -> i32 {
    let Some(subcommand) = args.first() else {
        eprint!("{USAGE}");
        return 1;
    };
    let rest = &args[1..];
    let result = match subcommand.as_str() {
        "gen-data" => cmd_gen_data(rest),
        "train" => cmd_train(rest),
        "infer" => cmd_infer(rest),
        "eval" => cmd_eval(rest),
        "ablate" => cmd_ablate(rest),
        "bench" => cmd_bench(rest),
        "sample-frames" => cmd_sample_frames(rest),
        "help" | "--help" | "-h" => {
            print!("{USAGE}");
            return 0;
        }
        other => {
            eprintln!("unknown subcommand {other:?}");
            eprint!("{USAGE}");
            return 1;
        }
    };
    match result {
        Ok(()) => 0,
        Err(e @ Error::Io { .. }) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            eprint!("{USAGE}");
            1
        }
    }
}
