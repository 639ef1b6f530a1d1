//! Canny edge detection and the binary morphology used by squareness
//! scoring.

use std::collections::VecDeque;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CannyParams {
    pub sigma: f32,
    /// Hysteresis thresholds on gradient magnitude. Sobel responses are
    /// divided by 4, so an unsmoothed unit step reads 1.
    pub low: f32,
    pub high: f32,
}

impl Default for CannyParams {
    fn default() -> Self {
        CannyParams { sigma: 1.4, low: 0.1, high: 0.3 }
    }
}

fn at(img: &ArrayView2<f32>, r: isize, c: isize) -> f32 {
    let (h, w) = img.dim();
    img[[r.clamp(0, h as isize - 1) as usize, c.clamp(0, w as isize - 1) as usize]]
}

pub fn gaussian_blur(img: ArrayView2<f32>, sigma: f32) -> Array2<f32> {
    if sigma <= 0.0 {
        return img.to_owned();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f32> = (-radius..=radius).map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f32 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let (h, w) = img.dim();
    let horiz = Array2::from_shape_fn((h, w), |(r, c)| {
        kernel.iter().enumerate().map(|(k, &wt)| wt * at(&img, r as isize, c as isize + k as isize - radius)).sum()
    });
    let hv = horiz.view();
    Array2::from_shape_fn((h, w), |(r, c)| {
        kernel.iter().enumerate().map(|(k, &wt)| wt * at(&hv, r as isize + k as isize - radius, c as isize)).sum()
    })
}

const NMS_TOLERANCE: f32 = 1e-5;

/// Binary edge map.
pub fn canny(img: ArrayView2<f32>, params: &CannyParams) -> Array2<bool> {
    let smooth = gaussian_blur(img, params.sigma);
    let sv = smooth.view();
    let (h, w) = smooth.dim();

    let mut gx = Array2::<f32>::zeros((h, w));
    let mut gy = Array2::<f32>::zeros((h, w));
    for r in 0..h as isize {
        for c in 0..w as isize {
            let p = |dr: isize, dc: isize| at(&sv, r + dr, c + dc);
            let x = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let y = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            gx[[r as usize, c as usize]] = x / 4.0;
            gy[[r as usize, c as usize]] = y / 4.0;
        }
    }
    let mag = Array2::from_shape_fn((h, w), |i| gx[i].hypot(gy[i]));

    // Non-maximum suppression along the quantized gradient direction.
    let mut thin = Array2::<f32>::zeros((h, w));
    let get = |r: isize, c: isize| {
        if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
            0.0
        } else {
            mag[[r as usize, c as usize]]
        }
    };
    for r in 0..h {
        for c in 0..w {
            let m = mag[[r, c]];
            if m == 0.0 {
                continue;
            }
            let mut angle = gy[[r, c]].atan2(gx[[r, c]]).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            let (dr, dc) = if !(22.5..157.5).contains(&angle) {
                (0, 1)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (1, 0)
            } else {
                (1, -1)
            };
            let (ri, ci) = (r as isize, c as isize);
            // Summation order differs between an image and its rotation, so
            // plateau ties are compared with a small tolerance.
            if m + NMS_TOLERANCE >= get(ri + dr, ci + dc) && m + NMS_TOLERANCE >= get(ri - dr, ci - dc) {
                thin[[r, c]] = m;
            }
        }
    }

    // Hysteresis: weak pixels survive only if 8-connected to a strong one.
    let mut edges = Array2::from_elem((h, w), false);
    let mut queue = VecDeque::new();
    for ((r, c), &m) in thin.indexed_iter() {
        if m >= params.high {
            edges[[r, c]] = true;
            queue.push_back((r, c));
        }
    }
    while let Some((r, c)) = queue.pop_front() {
        for (nr, nc) in neighbors8(r, c, h, w) {
            if !edges[[nr, nc]] && thin[[nr, nc]] >= params.low {
                edges[[nr, nc]] = true;
                queue.push_back((nr, nc));
            }
        }
    }
    edges
}

fn neighbors8(r: usize, c: usize, h: usize, w: usize) -> impl Iterator<Item = (usize, usize)> {
    (-1isize..=1)
        .flat_map(move |dr| (-1isize..=1).map(move |dc| (dr, dc)))
        .filter(|&d| d != (0, 0))
        .filter_map(move |(dr, dc)| {
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            (nr >= 0 && nc >= 0 && nr < h as isize && nc < w as isize).then_some((nr as usize, nc as usize))
        })
}

fn neighbors4(r: usize, c: usize, h: usize, w: usize) -> impl Iterator<Item = (usize, usize)> {
    [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)].into_iter().filter_map(move |(dr, dc)| {
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        (nr >= 0 && nc >= 0 && nr < h as isize && nc < w as isize).then_some((nr as usize, nc as usize))
    })
}

/// 3×3 max filter; out-of-image neighbors are ignored.
pub fn dilate(mask: &Array2<bool>) -> Array2<bool> {
    let (h, w) = mask.dim();
    Array2::from_shape_fn((h, w), |(r, c)| mask[[r, c]] || neighbors8(r, c, h, w).any(|p| mask[p]))
}

/// 3×3 min filter; out-of-image neighbors are ignored.
pub fn erode(mask: &Array2<bool>) -> Array2<bool> {
    let (h, w) = mask.dim();
    Array2::from_shape_fn((h, w), |(r, c)| mask[[r, c]] && neighbors8(r, c, h, w).all(|p| mask[p]))
}

pub fn close(mask: &Array2<bool>) -> Array2<bool> {
    erode(&dilate(mask))
}

/// Foreground plus every background pixel not 4-connected to the border.
pub fn fill_holes(mask: &Array2<bool>) -> Array2<bool> {
    let (h, w) = mask.dim();
    let mut outside = Array2::from_elem((h, w), false);
    let mut queue = VecDeque::new();
    for r in 0..h {
        for c in 0..w {
            if (r == 0 || c == 0 || r + 1 == h || c + 1 == w) && !mask[[r, c]] && !outside[[r, c]] {
                outside[[r, c]] = true;
                queue.push_back((r, c));
            }
        }
    }
    while let Some((r, c)) = queue.pop_front() {
        for p in neighbors4(r, c, h, w) {
            if !mask[p] && !outside[p] {
                outside[p] = true;
                queue.push_back(p);
            }
        }
    }
    outside.mapv(|o| !o)
}

/// The largest 8-connected component (first in row-major order on ties).
pub fn largest_component(mask: &Array2<bool>) -> Vec<(usize, usize)> {
    let (h, w) = mask.dim();
    let mut seen = Array2::from_elem((h, w), false);
    let mut best: Vec<(usize, usize)> = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if !mask[[r, c]] || seen[[r, c]] {
                continue;
            }
            let mut comp = vec![(r, c)];
            seen[[r, c]] = true;
            let mut i = 0;
            while i < comp.len() {
                let (pr, pc) = comp[i];
                for p in neighbors8(pr, pc, h, w) {
                    if mask[p] && !seen[p] {
                        seen[p] = true;
                        comp.push(p);
                    }
                }
                i += 1;
            }
            if comp.len() > best.len() {
                best = comp;
            }
        }
    }
    best
}
