//! Synthetic scene construction: one salient shape with distinctive motion
//! over a drifting textured background, optional lookalike distractors that
//! move with the background, and an occluder that hides the object for part
//! of the video.
//!
//! All velocities are integer pixels per frame, so rasterized shapes
//! translate exactly and the emitted flow field is the exact per-pixel
//! displacement between consecutive frames.

use rand::Rng;

use super::flow::flow_to_rgb;
use super::Mask;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub enum ShapeKind {
    Ellipse { rx: f64, ry: f64, angle: f64 },
    Rect { halfw: f64, halfh: f64, angle: f64 },
    /// Convex polygon, vertices relative to the center, counter-clockwise.
    Polygon { verts: Vec<(f64, f64)> },
}

impl ShapeKind {
    /// Point-in-shape test for an offset from the shape center.
    fn contains(&self, dx: f64, dy: f64) -> bool {
        match self {
            ShapeKind::Ellipse { rx, ry, angle } => {
                let (s, c) = angle.sin_cos();
                let u = dx * c + dy * s;
                let v = -dx * s + dy * c;
                (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
            }
            ShapeKind::Rect { halfw, halfh, angle } => {
                let (s, c) = angle.sin_cos();
                let u = dx * c + dy * s;
                let v = -dx * s + dy * c;
                u.abs() <= *halfw && v.abs() <= *halfh
            }
            ShapeKind::Polygon { verts } => {
                let n = verts.len();
                for i in 0..n {
                    let (x1, y1) = verts[i];
                    let (x2, y2) = verts[(i + 1) % n];
                    if (x2 - x1) * (dy - y1) - (y2 - y1) * (dx - x1) < 0.0 {
                        return false;
                    }
                }
                true
            }
        }
    }

    /// Bounding radius.
    pub fn extent(&self) -> f64 {
        match self {
            ShapeKind::Ellipse { rx, ry, .. } => rx.max(*ry),
            ShapeKind::Rect { halfw, halfh, .. } => (halfw * halfw + halfh * halfh).sqrt(),
            ShapeKind::Polygon { verts } => verts
                .iter()
                .map(|(x, y)| (x * x + y * y).sqrt())
                .fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MovingShape {
    pub kind: ShapeKind,
    /// Center at frame 0 (x, y).
    pub start: (i64, i64),
    /// Pixels per frame (x, y).
    pub velocity: (i64, i64),
    pub color: [f64; 3],
}

impl MovingShape {
    fn center(&self, t: usize) -> (i64, i64) {
        (
            self.start.0 + self.velocity.0 * t as i64,
            self.start.1 + self.velocity.1 * t as i64,
        )
    }

    fn contains(&self, t: usize, x: usize, y: usize) -> bool {
        let (cx, cy) = self.center(t);
        self.kind
            .contains(x as f64 - cx as f64, y as f64 - cy as f64)
    }
}

/// Background-textured rectangle that covers the object during a frame
/// window, hiding both its appearance and its motion there.
#[derive(Debug, Clone)]
pub struct Occluder {
    pub halfw: f64,
    pub halfh: f64,
    /// Center at the first window frame (x, y).
    pub anchor: (i64, i64),
    pub velocity: (i64, i64),
    /// (first frame, frame count)
    pub window: (usize, usize),
    /// Texture phase shift that distinguishes it from the real background.
    pub texture_offset: (i64, i64),
}

impl Occluder {
    fn active(&self, t: usize) -> bool {
        t >= self.window.0 && t < self.window.0 + self.window.1
    }

    fn contains(&self, t: usize, x: usize, y: usize) -> bool {
        if !self.active(t) {
            return false;
        }
        let dt = (t - self.window.0) as i64;
        let cx = self.anchor.0 + self.velocity.0 * dt;
        let cy = self.anchor.1 + self.velocity.1 * dt;
        (x as f64 - cx as f64).abs() <= self.halfw && (y as f64 - cy as f64).abs() <= self.halfh
    }
}

/// Two-sinusoid texture channel; values stay well inside (0, 1).
#[derive(Debug, Clone, Copy)]
pub struct TextureChannel {
    pub base: f64,
    pub amp1: f64,
    pub fx1: f64,
    pub fy1: f64,
    pub ph1: f64,
    pub amp2: f64,
    pub fx2: f64,
    pub fy2: f64,
    pub ph2: f64,
}

impl TextureChannel {
    fn sample(&self, x: f64, y: f64) -> f64 {
        self.base
            + self.amp1 * (self.fx1 * x + self.fy1 * y + self.ph1).sin()
            + self.amp2 * (self.fx2 * x + self.fy2 * y + self.ph2).sin()
    }
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub len: usize,
    pub height: usize,
    pub width: usize,
    pub texture: [TextureChannel; 3],
    pub bg_velocity: (i64, i64),
    pub object: MovingShape,
    pub distractors: Vec<MovingShape>,
    pub occluder: Option<Occluder>,
    pub noise_amp: f64,
    pub noise_seed: u64,
}

/// Frames, color-coded flow maps, masks, and the raw integer flow fields
/// (length L−1; entry t maps frame t onto frame t+1).
pub struct RenderedScene {
    pub frames: Vec<Tensor>,
    pub flows: Vec<Tensor>,
    pub masks: Vec<Mask>,
    pub raw_flows: Vec<Vec<(i64, i64)>>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-pixel noise in [−amp, amp].
fn pixel_noise(seed: u64, t: usize, y: usize, x: usize, ch: usize, amp: f64) -> f64 {
    if amp == 0.0 {
        return 0.0;
    }
    let key = seed
        ^ (t as u64).wrapping_mul(0x9E37_79B9)
        ^ (y as u64).wrapping_mul(0x85EB_CA6B)
        ^ (x as u64).wrapping_mul(0xC2B2_AE35)
        ^ (ch as u64).wrapping_mul(0x27D4_EB2F);
    let u = splitmix64(key) as f64 / u64::MAX as f64;
    (2.0 * u - 1.0) * amp
}

/// Topmost layer at a pixel, in priority order.
enum Layer<'a> {
    Occluder(&'a Occluder),
    Object,
    Distractor(usize),
    Background,
}

fn layer_at<'a>(spec: &'a SceneSpec, t: usize, x: usize, y: usize) -> Layer<'a> {
    if let Some(occ) = &spec.occluder {
        if occ.contains(t, x, y) {
            return Layer::Occluder(occ);
        }
    }
    if spec.object.contains(t, x, y) {
        return Layer::Object;
    }
    for (i, d) in spec.distractors.iter().enumerate() {
        if d.contains(t, x, y) {
            return Layer::Distractor(i);
        }
    }
    Layer::Background
}

pub fn render_scene(spec: &SceneSpec) -> RenderedScene {
    let (l, h, w) = (spec.len, spec.height, spec.width);
    let mut frames = Vec::with_capacity(l);
    let mut masks = Vec::with_capacity(l);
    let mut raw_flows = Vec::with_capacity(l.saturating_sub(1));

    for t in 0..l {
        let mut rgb = vec![0.0; 3 * h * w];
        let mut mask = Mask::empty(h, w);
        for y in 0..h {
            for x in 0..w {
                let color = match layer_at(spec, t, x, y) {
                    Layer::Occluder(occ) => {
                        let sx = (x as i64 - spec.bg_velocity.0 * t as i64 + occ.texture_offset.0)
                            as f64;
                        let sy = (y as i64 - spec.bg_velocity.1 * t as i64 + occ.texture_offset.1)
                            as f64;
                        [
                            spec.texture[0].sample(sx, sy),
                            spec.texture[1].sample(sx, sy),
                            spec.texture[2].sample(sx, sy),
                        ]
                    }
                    Layer::Object => spec.object.color,
                    Layer::Distractor(i) => spec.distractors[i].color,
                    Layer::Background => {
                        let sx = (x as i64 - spec.bg_velocity.0 * t as i64) as f64;
                        let sy = (y as i64 - spec.bg_velocity.1 * t as i64) as f64;
                        [
                            spec.texture[0].sample(sx, sy),
                            spec.texture[1].sample(sx, sy),
                            spec.texture[2].sample(sx, sy),
                        ]
                    }
                };
                for (ch, base) in color.iter().enumerate() {
                    let v = base + pixel_noise(spec.noise_seed, t, y, x, ch, spec.noise_amp);
                    rgb[ch * h * w + y * w + x] = v.clamp(0.0, 1.0);
                }
                // Ground truth is the full object region, occluded or not.
                if spec.object.contains(t, x, y) {
                    mask.set(y, x, 1);
                }
            }
        }
        frames.push(Tensor::from_vec(rgb, &[3, h, w]).expect("frame shape"));
        masks.push(mask);

        if t + 1 < l {
            let mut field = Vec::with_capacity(h * w);
            for y in 0..h {
                for x in 0..w {
                    let v = match layer_at(spec, t, x, y) {
                        Layer::Occluder(occ) => occ.velocity,
                        Layer::Object => spec.object.velocity,
                        Layer::Distractor(i) => spec.distractors[i].velocity,
                        Layer::Background => spec.bg_velocity,
                    };
                    field.push(v);
                }
            }
            raw_flows.push(field);
        }
    }

    // Color-code; the last frame reuses the previous field (zero for L = 1).
    let mut flows = Vec::with_capacity(l);
    for t in 0..l {
        let field = if t < raw_flows.len() {
            Some(&raw_flows[t])
        } else {
            raw_flows.last()
        };
        let mut rgb = vec![0.0; 3 * h * w];
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = field.map_or((0, 0), |f| f[y * w + x]);
                let c = flow_to_rgb(dx as f64, dy as f64);
                for ch in 0..3 {
                    rgb[ch * h * w + y * w + x] = c[ch];
                }
            }
        }
        flows.push(Tensor::from_vec(rgb, &[3, h, w]).expect("flow shape"));
    }

    RenderedScene {
        frames,
        flows,
        masks,
        raw_flows,
    }
}

fn sample_shape_kind(rng: &mut impl Rng, scale: f64) -> ShapeKind {
    match rng.random_range(0..3u32) {
        0 => ShapeKind::Ellipse {
            rx: rng.random_range(0.65 * scale..scale),
            ry: rng.random_range(0.65 * scale..scale),
            angle: rng.random_range(0.0..std::f64::consts::PI),
        },
        1 => ShapeKind::Rect {
            halfw: rng.random_range(0.55 * scale..0.85 * scale),
            halfh: rng.random_range(0.55 * scale..0.85 * scale),
            angle: rng.random_range(0.0..std::f64::consts::PI),
        },
        _ => {
            let n = rng.random_range(5..8usize);
            let rx = rng.random_range(0.7 * scale..scale);
            let ry = rng.random_range(0.7 * scale..scale);
            let mut angles: Vec<f64> = (0..n)
                .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                .collect();
            angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let verts = angles
                .iter()
                .map(|a| (rx * a.cos(), ry * a.sin()))
                .collect();
            ShapeKind::Polygon { verts }
        }
    }
}

/// Start range on one axis so the whole trajectory keeps `margin` clearance.
fn start_range(dim: usize, extent: f64, vel: i64, len: usize, margin: i64) -> Option<(i64, i64)> {
    let ext = extent.ceil() as i64 + margin;
    let travel = vel * (len as i64 - 1);
    let lo = ext + (-travel).max(0);
    let hi = dim as i64 - 1 - ext - travel.max(0);
    if lo <= hi {
        Some((lo, hi))
    } else {
        None
    }
}

/// Draws a random scene. `difficulty` in [0,1] scales occlusion length and
/// coverage plus pixel noise; distractors are always possible.
pub fn sample_scene(
    rng: &mut impl Rng,
    len: usize,
    height: usize,
    width: usize,
    difficulty: f64,
    noise_seed: u64,
) -> SceneSpec {
    let texture = std::array::from_fn(|_| TextureChannel {
        base: rng.random_range(0.42..0.58),
        amp1: rng.random_range(0.08..0.18),
        fx1: rng.random_range(0.15..0.9),
        fy1: rng.random_range(0.15..0.9),
        ph1: rng.random_range(0.0..std::f64::consts::TAU),
        amp2: rng.random_range(0.04..0.10),
        fx2: rng.random_range(0.9..2.2),
        fy2: rng.random_range(0.9..2.2),
        ph2: rng.random_range(0.0..std::f64::consts::TAU),
    });

    let scale = (height.min(width) as f64 / 64.0) * rng.random_range(9.0..13.0);
    let margin = 2i64;

    // Velocities: background and object must differ clearly.
    let mut bg_velocity;
    let mut obj_velocity;
    let mut kind;
    let start;
    let mut attempts = 0;
    loop {
        attempts += 1;
        let speed_cap: i64 = if attempts > 40 { 1 } else { 2 };
        bg_velocity = (
            rng.random_range(-speed_cap..=speed_cap),
            rng.random_range(-speed_cap..=speed_cap),
        );
        obj_velocity = (
            rng.random_range(-speed_cap..=speed_cap),
            rng.random_range(-speed_cap..=speed_cap),
        );
        let diff =
            (obj_velocity.0 - bg_velocity.0).abs() + (obj_velocity.1 - bg_velocity.1).abs();
        if diff < 2 {
            continue;
        }
        kind = sample_shape_kind(rng, scale);
        let ext = kind.extent();
        let rx = start_range(width, ext, obj_velocity.0, len, margin);
        let ry = start_range(height, ext, obj_velocity.1, len, margin);
        if let (Some((x0, x1)), Some((y0, y1))) = (rx, ry) {
            start = (rng.random_range(x0..=x1), rng.random_range(y0..=y1));
            break;
        }
    }

    // Object color clearly off the texture means; distractors reuse it with
    // a small jitter so appearance alone cannot separate them.
    let object_color: [f64; 3] = std::array::from_fn(|ch| {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        (texture[ch].base + sign * rng.random_range(0.28..0.42)).clamp(0.04, 0.96)
    });
    let object = MovingShape {
        kind,
        start,
        velocity: obj_velocity,
        color: object_color,
    };

    let n_distractors = rng.random_range(0..=2usize);
    let mut distractors = Vec::with_capacity(n_distractors);
    for _ in 0..n_distractors {
        let dist_scale = scale * rng.random_range(0.7..1.1);
        let kind = sample_shape_kind(rng, dist_scale);
        let ext = kind.extent();
        let (Some((x0, x1)), Some((y0, y1))) = (
            start_range(width, ext, bg_velocity.0, len, margin),
            start_range(height, ext, bg_velocity.1, len, margin),
        ) else {
            continue;
        };
        let color: [f64; 3] =
            std::array::from_fn(|ch| (object_color[ch] + rng.random_range(-0.08..0.08)).clamp(0.0, 1.0));
        distractors.push(MovingShape {
            kind,
            start: (rng.random_range(x0..=x1), rng.random_range(y0..=y1)),
            velocity: bg_velocity,
            color,
        });
    }

    let occluder = {
        let window_len = (0.25 * difficulty * len as f64).round() as usize;
        if window_len == 0 || len < 3 {
            None
        } else {
            let window_len = window_len.min(len / 2);
            let window_start = rng.random_range(1..=(len - window_len));
            let mid = window_start + window_len / 2;
            let (cx, cy) = object.center(mid);
            let coverage = 0.45 + 0.4 * difficulty;
            let drift_x = ((obj_velocity.0 - bg_velocity.0).abs() * window_len as i64 / 2) as f64;
            let drift_y = ((obj_velocity.1 - bg_velocity.1).abs() * window_len as i64 / 2) as f64;
            let ext = object.kind.extent();
            let anchor_dt = (mid - window_start) as i64;
            Some(Occluder {
                halfw: coverage * ext + drift_x,
                halfh: coverage * ext + drift_y,
                anchor: (
                    cx - bg_velocity.0 * anchor_dt,
                    cy - bg_velocity.1 * anchor_dt,
                ),
                velocity: bg_velocity,
                window: (window_start, window_len),
                texture_offset: (rng.random_range(23..91), rng.random_range(23..91)),
            })
        }
    };

    SceneSpec {
        len,
        height,
        width,
        texture,
        bg_velocity,
        object,
        distractors,
        occluder,
        noise_amp: 0.03 * difficulty,
        noise_seed,
    }
}
