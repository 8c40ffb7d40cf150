//! Region similarity J, boundary accuracy F, and their mean G.

use crate::data::Mask;
use crate::error::{Error, Result};

/// Boundary matching tolerance in pixels: `max(1, round(0.0075·diag))`.
pub fn boundary_tolerance(height: usize, width: usize) -> usize {
    let diag = ((height * height + width * width) as f64).sqrt();
    ((0.0075 * diag).round() as usize).max(1)
}

/// Intersection-over-union of two binary masks. Two empty masks score 1.
pub fn region_similarity(pred: &Mask, gt: &Mask) -> Result<f64> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::shape(
            "region_similarity",
            &[pred.height(), pred.width()],
            &[gt.height(), gt.width()],
        ));
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (p, g) in pred.data().iter().zip(gt.data()) {
        let (p, g) = (*p != 0, *g != 0);
        inter += (p && g) as usize;
        union += (p || g) as usize;
    }
    if union == 0 {
        Ok(1.0)
    } else {
        Ok(inter as f64 / union as f64)
    }
}

/// Foreground pixels 4-adjacent to background or to the image edge.
fn boundary_pixels(mask: &Mask) -> Vec<(usize, usize)> {
    let (h, w) = (mask.height(), mask.width());
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if mask.get(y, x) == 0 {
                continue;
            }
            let on_edge = y == 0 || y == h - 1 || x == 0 || x == w - 1;
            let touches_bg = (y > 0 && mask.get(y - 1, x) == 0)
                || (y + 1 < h && mask.get(y + 1, x) == 0)
                || (x > 0 && mask.get(y, x - 1) == 0)
                || (x + 1 < w && mask.get(y, x + 1) == 0);
            if on_edge || touches_bg {
                out.push((y, x));
            }
        }
    }
    out
}

/// Marks every pixel within Euclidean distance `r` of a listed pixel.
fn dilate(points: &[(usize, usize)], h: usize, w: usize, r: usize) -> Vec<bool> {
    let mut hit = vec![false; h * w];
    let ri = r as isize;
    let r2 = (r * r) as isize;
    for &(y, x) in points {
        for dy in -ri..=ri {
            for dx in -ri..=ri {
                if dy * dy + dx * dx > r2 {
                    continue;
                }
                let ny = y as isize + dy;
                let nx = x as isize + dx;
                if ny >= 0 && ny < h as isize && nx >= 0 && nx < w as isize {
                    hit[ny as usize * w + nx as usize] = true;
                }
            }
        }
    }
    hit
}

/// Boundary F-measure: precision and recall of boundary pixels matched
/// within the [`boundary_tolerance`] radius, combined as `2PR/(P+R)`.
/// Both boundaries empty scores 1; exactly one empty scores 0.
pub fn boundary_accuracy(pred: &Mask, gt: &Mask) -> Result<f64> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::shape(
            "boundary_accuracy",
            &[pred.height(), pred.width()],
            &[gt.height(), gt.width()],
        ));
    }
    let (h, w) = (gt.height(), gt.width());
    let bp = boundary_pixels(pred);
    let bg = boundary_pixels(gt);
    match (bp.is_empty(), bg.is_empty()) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let r = boundary_tolerance(h, w);
    let gt_zone = dilate(&bg, h, w, r);
    let pred_zone = dilate(&bp, h, w, r);
    let matched_p = bp.iter().filter(|&&(y, x)| gt_zone[y * w + x]).count();
    let matched_g = bg.iter().filter(|&&(y, x)| pred_zone[y * w + x]).count();
    let precision = matched_p as f64 / bp.len() as f64;
    let recall = matched_g as f64 / bg.len() as f64;
    if precision + recall == 0.0 {
        Ok(0.0)
    } else {
        Ok(2.0 * precision * recall / (precision + recall))
    }
}

/// Per-sequence metric means.
#[derive(Debug, Clone)]
pub struct SequenceMetrics {
    pub id: String,
    pub j: f64,
    pub f: f64,
    pub g: f64,
}

/// Dataset-level means over sequences.
#[derive(Debug, Clone, Copy)]
pub struct GlobalMetrics {
    pub j: f64,
    pub f: f64,
    pub g: f64,
}

/// Per-sequence and global J/F/G values; G = (J+F)/2 at every level.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub per_sequence: Vec<SequenceMetrics>,
    pub global: GlobalMetrics,
}

impl MetricReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,j,f,g\n");
        for s in &self.per_sequence {
            out.push_str(&format!("{},{:.6},{:.6},{:.6}\n", s.id, s.j, s.f, s.g));
        }
        out.push_str(&format!(
            "GLOBAL,{:.6},{:.6},{:.6}\n",
            self.global.j, self.global.f, self.global.g
        ));
        out
    }

    pub fn to_text(&self) -> String {
        let id_w = self
            .per_sequence
            .iter()
            .map(|s| s.id.len())
            .chain(std::iter::once("sequence".len()))
            .max()
            .unwrap_or(8);
        let mut out = format!("{:<id_w$}  {:>7}  {:>7}  {:>7}\n", "sequence", "J", "F", "G");
        for s in &self.per_sequence {
            out.push_str(&format!(
                "{:<id_w$}  {:>7.4}  {:>7.4}  {:>7.4}\n",
                s.id, s.j, s.f, s.g
            ));
        }
        out.push_str(&format!(
            "{:<id_w$}  {:>7.4}  {:>7.4}  {:>7.4}\n",
            "GLOBAL", self.global.j, self.global.f, self.global.g
        ));
        out
    }
}

/// Frame-level J/F for one sequence, averaged.
pub fn evaluate_sequence(pred: &[Mask], gt: &[Mask]) -> Result<(f64, f64)> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidArgument(format!(
            "evaluate_sequence: {} predictions vs {} ground-truth frames",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("evaluate_sequence: empty sequence".into()));
    }
    let mut j_sum = 0.0;
    let mut f_sum = 0.0;
    for (p, g) in pred.iter().zip(gt) {
        j_sum += region_similarity(p, g)?;
        f_sum += boundary_accuracy(p, g)?;
    }
    let n = pred.len() as f64;
    Ok((j_sum / n, f_sum / n))
}

/// Evaluates many sequences: per-frame J/F averaged per sequence, sequence
/// means averaged for the global row.
pub fn evaluate(sequences: &[(String, Vec<Mask>, Vec<Mask>)]) -> Result<MetricReport> {
    if sequences.is_empty() {
        return Err(Error::InvalidArgument("evaluate: no sequences".into()));
    }
    let mut per_sequence = Vec::with_capacity(sequences.len());
    for (id, pred, gt) in sequences {
        let (j, f) = evaluate_sequence(pred, gt)?;
        per_sequence.push(SequenceMetrics {
            id: id.clone(),
            j,
            f,
            g: 0.5 * (j + f),
        });
    }
    let n = per_sequence.len() as f64;
    let j = per_sequence.iter().map(|s| s.j).sum::<f64>() / n;
    let f = per_sequence.iter().map(|s| s.f).sum::<f64>() / n;
    Ok(MetricReport {
        per_sequence,
        global: GlobalMetrics { j, f, g: 0.5 * (j + f) },
    })
}
