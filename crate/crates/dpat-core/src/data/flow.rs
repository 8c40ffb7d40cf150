//! Flow-to-color encoding: angle maps to hue, magnitude to saturation.

/// Largest displacement the color wheel resolves; larger magnitudes saturate.
pub const FLOW_MAX_MAGNITUDE: f64 = 4.0;

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(360.0);
    let c = v * s;
    let x = c * (1.0 - ((h / 60.0) % 2.0 - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match (h / 60.0) as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r + m, g + m, b + m]
}

/// RGB in [0,1] for a displacement vector. Zero flow renders white.
pub fn flow_to_rgb(dx: f64, dy: f64) -> [f64; 3] {
    let mag = (dx * dx + dy * dy).sqrt();
    let hue = dy.atan2(dx).to_degrees();
    let sat = (mag / FLOW_MAX_MAGNITUDE).min(1.0);
    hsv_to_rgb(hue, sat, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_flow_is_white() {
        assert_eq!(flow_to_rgb(0.0, 0.0), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn values_stay_in_unit_range() {
        for dy in -5..=5 {
            for dx in -5..=5 {
                let rgb = flow_to_rgb(dx as f64, dy as f64);
                for v in rgb {
                    assert!((0.0..=1.0).contains(&v), "({dx},{dy}) -> {rgb:?}");
                }
            }
        }
    }

    #[test]
    fn opposite_directions_get_distinct_colors() {
        let a = flow_to_rgb(2.0, 0.0);
        let b = flow_to_rgb(-2.0, 0.0);
        let dist: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        assert!(dist > 0.5, "{a:?} vs {b:?}");
    }

    #[test]
    fn magnitude_controls_saturation() {
        let weak = flow_to_rgb(0.5, 0.0);
        let strong = flow_to_rgb(4.0, 0.0);
        // stronger flow is further from white
        let white_dist = |c: [f64; 3]| c.iter().map(|v| (1.0 - v).abs()).sum::<f64>();
        assert!(white_dist(strong) > white_dist(weak));
    }
}
