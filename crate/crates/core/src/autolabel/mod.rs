//! Automatic brightness and squareness scores for extracted squares.
//! Cracking, contamination and overall scores come from the label manifest.

pub mod canny;

use ndarray::ArrayView2;

pub use canny::CannyParams;

use crate::extract::SquareImage;
use crate::score::{ScoreVector, MAX_SCORE};

/// `4 × mean` of the strictly positive pixels; 0 for an all-zero image.
pub fn brightness_score(sq: &SquareImage) -> f32 {
    brightness_of(sq.pixels.view())
}

pub fn brightness_of(pixels: ArrayView2<f32>) -> f32 {
    let (sum, n) = pixels.iter().filter(|&&v| v > 0.0).fold((0.0f64, 0usize), |(s, n), &v| (s + v as f64, n + 1));
    if n == 0 {
        return 0.0;
    }
    (MAX_SCORE as f64 * sum / n as f64) as f32
}

pub fn squareness_score(sq: &SquareImage) -> f32 {
    squareness_of(sq.pixels.view(), &CannyParams::default())
}

/// Filled edge region over its minimum-area enclosing square, scaled to
/// [0,4]. Edges are closed (3×3) and hole-filled; only the largest
/// connected region is scored.
pub fn squareness_of(pixels: ArrayView2<f32>, params: &CannyParams) -> f32 {
    let edges = canny::canny(pixels, params);
    let filled = canny::fill_holes(&canny::close(&edges));
    let region = canny::largest_component(&filled);
    if region.is_empty() {
        return 0.0;
    }
    let side = min_enclosing_square_side(&region);
    (MAX_SCORE as f64 * region.len() as f64 / (side * side)).min(MAX_SCORE as f64) as f32
}

/// Side of the smallest square, at any rotation, that contains every pixel
/// of `pixels` (each pixel a unit square centered on its index).
pub fn min_enclosing_square_side(pixels: &[(usize, usize)]) -> f64 {
    let mut corners = Vec::with_capacity(pixels.len() * 4);
    for &(r, c) in pixels {
        let (y, x) = (r as f64, c as f64);
        for (dy, dx) in [(-0.5, -0.5), (-0.5, 0.5), (0.5, -0.5), (0.5, 0.5)] {
            corners.push((x + dx, y + dy));
        }
    }
    let hull = convex_hull(corners);

    let side_at = |theta: f64| {
        let (s, c) = theta.sin_cos();
        let (mut umin, mut umax, mut vmin, mut vmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in &hull {
            let u = x * c + y * s;
            let v = -x * s + y * c;
            umin = umin.min(u);
            umax = umax.max(u);
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
        (umax - umin).max(vmax - vmin)
    };

    // side(θ) has period π/2; coarse sweep, then golden-section refinement.
    const STEPS: usize = 360;
    let step = std::f64::consts::FRAC_PI_2 / STEPS as f64;
    let (mut best_theta, mut best) = (0.0, side_at(0.0));
    for k in 1..STEPS {
        let theta = k as f64 * step;
        let s = side_at(theta);
        if s < best {
            best = s;
            best_theta = theta;
        }
    }
    let (mut a, mut b) = (best_theta - step, best_theta + step);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..40 {
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if side_at(x1) < side_at(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    best.min(side_at(0.5 * (a + b)))
}

fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Auto-computed brightness and squareness; other entries absent.
pub fn auto_scores(sq: &SquareImage, params: &CannyParams) -> ScoreVector {
    let mut v = ScoreVector::unlabeled();
    v.0[0] = Some(brightness_of(sq.pixels.view()));
    v.0[1] = Some(squareness_of(sq.pixels.view(), params));
    v
}
