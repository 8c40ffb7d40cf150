//! Synthetic video generation, on-disk dataset layout, and snippet sampling.
//!
//! Disk layout: `root/manifest.txt` with one `id L H W` line per video,
//! then per video `root/<id>/frame_%04d.ppm`, `root/<id>/flow_%04d.ppm`
//! (both binary P6) and `root/<id>/mask_%04d.pgm` (binary P5, 0 or 255).

pub mod flow;
pub mod netpbm;
pub mod synth;

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Binary segmentation mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn empty(height: usize, width: usize) -> Mask {
        Mask {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    /// Wraps raw 0/1 data; anything else is rejected.
    pub fn from_data(height: usize, width: usize, data: Vec<u8>) -> Result<Mask> {
        if data.len() != height * width {
            return Err(Error::shape("Mask::from_data", &[height, width], &[data.len()]));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::Validation("mask values must be 0 or 1".into()));
        }
        Ok(Mask { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: u8) {
        self.data[y * self.width + x] = if v != 0 { 1 } else { 0 };
    }

    /// Foreground pixel count.
    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }
}

/// One video: aligned RGB frames, color-coded flow maps, and binary masks,
/// all length L at a shared resolution. Values live in [0,1].
#[derive(Debug, Clone)]
pub struct VideoSample {
    pub id: String,
    pub frames: Vec<Tensor>,
    pub flows: Vec<Tensor>,
    pub masks: Vec<Mask>,
}

impl VideoSample {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn height(&self) -> usize {
        self.frames[0].shape()[1]
    }

    pub fn width(&self) -> usize {
        self.frames[0].shape()[2]
    }
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub seed: u64,
    pub n_videos: usize,
    pub len: usize,
    pub height: usize,
    pub width: usize,
    /// 0 disables occluders and noise; 1 hides the object for 25% of frames.
    pub difficulty: f64,
}

/// Renders `n_videos` synthetic clips. Each video derives its own RNG stream
/// from (seed, index), so generation is deterministic and parallel-safe.
pub fn gen_synthetic(cfg: &GenConfig) -> Result<Vec<VideoSample>> {
    if cfg.len < 4 {
        return Err(Error::InvalidArgument(format!(
            "gen_synthetic: video length {} is below the 4-frame snippet length",
            cfg.len
        )));
    }
    if cfg.height % 16 != 0 || cfg.width % 16 != 0 {
        return Err(Error::InvalidArgument(format!(
            "gen_synthetic: resolution {}x{} must be divisible by 16",
            cfg.height, cfg.width
        )));
    }
    if cfg.n_videos == 0 {
        return Err(Error::InvalidArgument("gen_synthetic: zero videos requested".into()));
    }
    if !(0.0..=1.0).contains(&cfg.difficulty) {
        return Err(Error::InvalidArgument(format!(
            "gen_synthetic: difficulty {} outside [0,1]",
            cfg.difficulty
        )));
    }
    let videos: Vec<VideoSample> = (0..cfg.n_videos)
        .into_par_iter()
        .map(|i| {
            let stream = cfg.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut rng = ChaCha12Rng::seed_from_u64(stream);
            let spec = synth::sample_scene(
                &mut rng,
                cfg.len,
                cfg.height,
                cfg.width,
                cfg.difficulty,
                stream ^ 0x5DEE_CE66,
            );
            let scene = synth::render_scene(&spec);
            VideoSample {
                id: format!("vid{i:04}"),
                frames: scene.frames,
                flows: scene.flows,
                masks: scene.masks,
            }
        })
        .collect();
    Ok(videos)
}

fn tensor_to_rgb_bytes(t: &Tensor) -> Vec<u8> {
    let (h, w) = (t.shape()[1], t.shape()[2]);
    let d = t.data();
    let mut out = Vec::with_capacity(3 * h * w);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                out.push((d[ch * h * w + y * w + x] * 255.0).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    out
}

fn rgb_bytes_to_tensor(h: usize, w: usize, bytes: &[u8]) -> Tensor {
    let mut data = vec![0.0; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..3 {
                data[ch * h * w + y * w + x] = bytes[(y * w + x) * 3 + ch] as f64 / 255.0;
            }
        }
    }
    Tensor::from_vec(data, &[3, h, w]).expect("rgb shape")
}

pub fn save_dataset(videos: &[VideoSample], root: impl AsRef<Path>) -> Result<()> {
    let root = root.as_ref();
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut manifest = String::new();
    for v in videos {
        manifest.push_str(&format!("{} {} {} {}\n", v.id, v.len(), v.height(), v.width()));
    }
    let manifest_path = root.join("manifest.txt");
    fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;

    videos.par_iter().try_for_each(|v| -> Result<()> {
        let dir = root.join(&v.id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let (h, w) = (v.height(), v.width());
        for (t, frame) in v.frames.iter().enumerate() {
            netpbm::write_ppm(dir.join(format!("frame_{t:04}.ppm")), w, h, &tensor_to_rgb_bytes(frame))?;
        }
        for (t, flow) in v.flows.iter().enumerate() {
            netpbm::write_ppm(dir.join(format!("flow_{t:04}.ppm")), w, h, &tensor_to_rgb_bytes(flow))?;
        }
        for (t, mask) in v.masks.iter().enumerate() {
            let bytes: Vec<u8> = mask.data().iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
            netpbm::write_pgm(dir.join(format!("mask_{t:04}.pgm")), w, h, &bytes)?;
        }
        Ok(())
    })
}

fn parse_manifest(root: &Path) -> Result<Vec<(String, usize, usize, usize)>> {
    let path = root.join("manifest.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut entries = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Validation(format!(
                "{}:{}: expected `id L H W`, got {line:?}",
                path.display(),
                ln + 1
            )));
        }
        let parse = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| {
                Error::Validation(format!("{}:{}: bad number {s:?}", path.display(), ln + 1))
            })
        };
        entries.push((fields[0].to_string(), parse(fields[1])?, parse(fields[2])?, parse(fields[3])?));
    }
    if entries.is_empty() {
        return Err(Error::Validation(format!("{}: empty manifest", path.display())));
    }
    Ok(entries)
}

/// Manifest rows as (id, length, height, width).
pub fn dataset_index(root: impl AsRef<Path>) -> Result<Vec<(String, usize, usize, usize)>> {
    parse_manifest(root.as_ref())
}

/// Loads one manifest-listed video by id.
pub fn load_video(root: impl AsRef<Path>, id: &str) -> Result<VideoSample> {
    let root = root.as_ref();
    let entries = parse_manifest(root)?;
    let entry = entries
        .iter()
        .find(|(vid, ..)| vid == id)
        .ok_or_else(|| Error::Validation(format!("video {id:?} not in manifest")))?;
    load_video_entry(root, &entry.0, entry.1, entry.2, entry.3)
}

pub fn load_dataset(root: impl AsRef<Path>) -> Result<Vec<VideoSample>> {
    let root = root.as_ref();
    let entries = parse_manifest(root)?;
    entries
        .par_iter()
        .map(|(id, l, h, w)| load_video_entry(root, id, *l, *h, *w))
        .collect()
}

fn load_video_entry(root: &Path, id: &str, l: usize, h: usize, w: usize) -> Result<VideoSample> {
    let dir = root.join(id);
    let mut frames = Vec::with_capacity(l);
    let mut flows = Vec::with_capacity(l);
    let mut masks = Vec::with_capacity(l);
    for t in 0..l {
        let fp = dir.join(format!("frame_{t:04}.ppm"));
        let (fw, fh, bytes) = netpbm::read_ppm(&fp)?;
        if fw != w || fh != h {
            return Err(Error::Validation(format!(
                "{}: {}x{} disagrees with manifest {}x{}",
                fp.display(),
                fw,
                fh,
                w,
                h
            )));
        }
        frames.push(rgb_bytes_to_tensor(h, w, &bytes));

        let fp = dir.join(format!("flow_{t:04}.ppm"));
        let (fw, fh, bytes) = netpbm::read_ppm(&fp)?;
        if fw != w || fh != h {
            return Err(Error::Validation(format!(
                "{}: {}x{} disagrees with manifest {}x{}",
                fp.display(),
                fw,
                fh,
                w,
                h
            )));
        }
        flows.push(rgb_bytes_to_tensor(h, w, &bytes));

        let fp = dir.join(format!("mask_{t:04}.pgm"));
        let (mw, mh, bytes) = netpbm::read_pgm(&fp)?;
        if mw != w || mh != h {
            return Err(Error::Validation(format!(
                "{}: {}x{} disagrees with manifest {}x{}",
                fp.display(),
                mw,
                mh,
                w,
                h
            )));
        }
        let mut bits = Vec::with_capacity(bytes.len());
        for &b in &bytes {
            match b {
                0 => bits.push(0),
                255 => bits.push(1),
                other => {
                    return Err(Error::Validation(format!(
                        "{}: mask value {other} is neither 0 nor 255",
                        fp.display()
                    )))
                }
            }
        }
        masks.push(Mask::from_data(h, w, bits)?);
    }
    Ok(VideoSample {
        id: id.to_string(),
        frames,
        flows,
        masks,
    })
}

/// A 4-frame consecutive training clip.
pub const SNIPPET_LEN: usize = 4;

#[derive(Debug, Clone, Copy)]
pub struct Snippet<'a> {
    pub video: &'a VideoSample,
    pub start: usize,
}

impl<'a> Snippet<'a> {
    pub fn frames(&self) -> &'a [Tensor] {
        &self.video.frames[self.start..self.start + SNIPPET_LEN]
    }

    pub fn flows(&self) -> &'a [Tensor] {
        &self.video.flows[self.start..self.start + SNIPPET_LEN]
    }

    pub fn masks(&self) -> &'a [Mask] {
        &self.video.masks[self.start..self.start + SNIPPET_LEN]
    }
}

/// Uniform video choice, uniform start within the video.
pub fn sample_snippet<'a>(videos: &'a [VideoSample], rng: &mut impl Rng) -> Result<Snippet<'a>> {
    if videos.is_empty() {
        return Err(Error::InvalidArgument("sample_snippet: empty dataset".into()));
    }
    let video = &videos[rng.random_range(0..videos.len())];
    if video.len() < SNIPPET_LEN {
        return Err(Error::InvalidArgument(format!(
            "sample_snippet: video {} has {} frames, need {SNIPPET_LEN}",
            video.id,
            video.len()
        )));
    }
    let start = rng.random_range(0..=video.len() - SNIPPET_LEN);
    Ok(Snippet { video, start })
}

/// Writes per-video predicted masks under `root/<id>/mask_%04d.pgm`,
/// mirroring the dataset layout so `eval` can read either side.
pub fn save_masks(root: impl AsRef<Path>, id: &str, masks: &[Mask]) -> Result<()> {
    let dir = root.as_ref().join(id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for (t, mask) in masks.iter().enumerate() {
        let bytes: Vec<u8> = mask.data().iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
        netpbm::write_pgm(
            dir.join(format!("mask_{t:04}.pgm")),
            mask.width(),
            mask.height(),
            &bytes,
        )?;
    }
    Ok(())
}

/// Loads `count` masks for one video from a prediction or dataset directory.
pub fn load_masks(root: impl AsRef<Path>, id: &str, count: usize) -> Result<Vec<Mask>> {
    let dir = root.as_ref().join(id);
    let mut out = Vec::with_capacity(count);
    for t in 0..count {
        let path = dir.join(format!("mask_{t:04}.pgm"));
        let (w, h, bytes) = netpbm::read_pgm(&path)?;
        let mut bits = Vec::with_capacity(bytes.len());
        for &b in &bytes {
            match b {
                0 => bits.push(0),
                255 => bits.push(1),
                other => {
                    return Err(Error::Validation(format!(
                        "{}: mask value {other} is neither 0 nor 255",
                        path.display()
                    )))
                }
            }
        }
        out.push(Mask::from_data(h, w, bits)?);
    }
    Ok(out)
}

/// Recursively collects (relative path, bytes) for tree comparisons.
pub fn dir_digest(root: impl AsRef<Path>) -> Result<Vec<(PathBuf, Vec<u8>)>> {
    fn walk(dir: &Path, base: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) -> Result<()> {
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io(dir, e))?;
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(&path, base, out)?;
            } else {
                let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
                out.push((path.strip_prefix(base).unwrap().to_path_buf(), bytes));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root.as_ref(), root.as_ref(), &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(seed: u64) -> GenConfig {
        GenConfig {
            seed,
            n_videos: 2,
            len: 5,
            height: 32,
            width: 32,
            difficulty: 0.5,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_synthetic(&small_cfg(7)).unwrap();
        let b = gen_synthetic(&small_cfg(7)).unwrap();
        for (va, vb) in a.iter().zip(&b) {
            assert_eq!(va.id, vb.id);
            for (fa, fb) in va.frames.iter().zip(&vb.frames) {
                assert_eq!(fa.data(), fb.data());
            }
            for (ma, mb) in va.masks.iter().zip(&vb.masks) {
                assert_eq!(ma.data(), mb.data());
            }
        }
        let c = gen_synthetic(&small_cfg(8)).unwrap();
        assert_ne!(a[0].frames[0].data(), c[0].frames[0].data());
    }

    #[test]
    fn generation_validates_arguments() {
        let mut cfg = small_cfg(1);
        cfg.len = 3;
        assert!(gen_synthetic(&cfg).is_err());
        let mut cfg = small_cfg(1);
        cfg.height = 33;
        assert!(gen_synthetic(&cfg).is_err());
        let mut cfg = small_cfg(1);
        cfg.difficulty = 1.5;
        assert!(gen_synthetic(&cfg).is_err());
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let videos = gen_synthetic(&small_cfg(3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let root1 = dir.path().join("one");
        let root2 = dir.path().join("two");
        save_dataset(&videos, &root1).unwrap();
        let loaded = load_dataset(&root1).unwrap();
        save_dataset(&loaded, &root2).unwrap();
        let d1 = dir_digest(&root1).unwrap();
        let d2 = dir_digest(&root2).unwrap();
        assert_eq!(d1.len(), d2.len());
        for ((p1, b1), (p2, b2)) in d1.iter().zip(&d2) {
            assert_eq!(p1, p2);
            assert_eq!(b1, b2, "file {} differs", p1.display());
        }
    }

    #[test]
    fn load_reports_missing_frame_as_io_error() {
        let videos = gen_synthetic(&small_cfg(4)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&videos, dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("vid0000/frame_0002.ppm")).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }), "{err}");
        assert!(err.to_string().contains("frame_0002.ppm"));
    }

    #[test]
    fn load_reports_dimension_disagreement_as_validation() {
        let videos = gen_synthetic(&small_cfg(5)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&videos, dir.path()).unwrap();
        // Rewrite the manifest with a wrong width.
        let manifest = dir.path().join("manifest.txt");
        let text = std::fs::read_to_string(&manifest).unwrap();
        let patched = text.replace(" 32 32", " 32 16");
        std::fs::write(&manifest, patched).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Validation(_))));
    }

    #[test]
    fn load_recovers_dimensions_exactly() {
        let cfg = GenConfig {
            seed: 9,
            n_videos: 1,
            len: 6,
            height: 48,
            width: 32,
            difficulty: 0.0,
        };
        let videos = gen_synthetic(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&videos, dir.path()).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded.len(), 1);
        assert_eq!(loaded[0].len(), 6);
        assert_eq!(loaded[0].height(), 48);
        assert_eq!(loaded[0].width(), 32);
    }

    #[test]
    fn pixel_round_trip_is_lossless_after_first_quantization() {
        let videos = gen_synthetic(&small_cfg(6)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&videos, dir.path()).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        // Quantized values reload exactly: round(v*255)/255 re-rounds to the
        // same byte.
        let b1 = tensor_to_rgb_bytes(&videos[0].frames[0]);
        let b2 = tensor_to_rgb_bytes(&loaded[0].frames[0]);
        assert_eq!(b1, b2);
    }

    #[test]
    fn snippet_from_minimal_video_starts_at_zero() {
        let cfg = GenConfig {
            seed: 2,
            n_videos: 1,
            len: 4,
            height: 32,
            width: 32,
            difficulty: 0.0,
        };
        let videos = gen_synthetic(&cfg).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        for _ in 0..20 {
            let s = sample_snippet(&videos, &mut rng).unwrap();
            assert_eq!(s.start, 0);
            assert_eq!(s.frames().len(), SNIPPET_LEN);
        }
    }

    #[test]
    fn snippet_frames_are_consecutive() {
        let videos = gen_synthetic(&GenConfig {
            seed: 3,
            n_videos: 2,
            len: 9,
            height: 32,
            width: 32,
            difficulty: 0.0,
        })
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..50 {
            let s = sample_snippet(&videos, &mut rng).unwrap();
            for (offset, frame) in s.frames().iter().enumerate() {
                assert_eq!(
                    frame.data(),
                    s.video.frames[s.start + offset].data(),
                    "snippet must alias frames {}..{}",
                    s.start,
                    s.start + SNIPPET_LEN
                );
            }
        }
    }

    #[test]
    fn snippet_start_distribution_is_uniform() {
        // One video, L = 10: starts 0..=6. χ² over 10k draws must stay below
        // the df=6, p=0.01 critical value of 16.812.
        let videos = gen_synthetic(&GenConfig {
            seed: 4,
            n_videos: 1,
            len: 10,
            height: 32,
            width: 32,
            difficulty: 0.0,
        })
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let mut counts = [0usize; 7];
        let draws = 10_000;
        for _ in 0..draws {
            let s = sample_snippet(&videos, &mut rng).unwrap();
            counts[s.start] += 1;
        }
        let expected = draws as f64 / 7.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 16.812, "chi2 {chi2}, counts {counts:?}");
    }
}
