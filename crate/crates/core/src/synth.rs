//! Procedural grid-square images with known scores.
//!
//! A bright quadrilateral on a zero background, with zero-valued crack
//! polylines and contamination discs cut into it. Cracked and contaminated
//! fractions are measured over the quadrilateral's area.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::SquareImage;
use crate::imageio;
use crate::score::{write_labels, LabelError, LabelRecord, ScoreVector};

/// Cracked fraction that saturates the cracking score.
pub const CRACK_SATURATION: f64 = 0.25;
/// Contamination coverage that saturates the contamination score.
pub const COVERAGE_SATURATION: f64 = 0.5;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthesis parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Image(#[from] imageio::ImageError),
    #[error(transparent)]
    Labels(#[from] LabelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub size: usize,
    pub brightness_level: f64,
    pub squareness_distortion: f64,
    pub crack_count: usize,
    pub crack_width_px: usize,
    pub contamination_coverage: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            size: 64,
            brightness_level: 1.0,
            squareness_distortion: 0.0,
            crack_count: 0,
            crack_width_px: 1,
            contamination_coverage: 0.0,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SynthError::InvalidParams(format!("{name} = {v} outside [0,1]")))
            }
        };
        if self.size < 16 {
            return Err(SynthError::InvalidParams(format!("size {} < 16", self.size)));
        }
        unit("brightness_level", self.brightness_level)?;
        unit("squareness_distortion", self.squareness_distortion)?;
        unit("contamination_coverage", self.contamination_coverage)?;
        if self.crack_count > 0 && self.crack_width_px == 0 {
            return Err(SynthError::InvalidParams("crack_width_px must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(SynthError::InvalidParams(format!("noise_sigma = {}", self.noise_sigma)));
        }
        Ok(())
    }
}

/// A rendered square with the masks it was built from.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub image: Array2<f32>,
    pub square_mask: Array2<bool>,
    pub crack_mask: Array2<bool>,
    pub blob_mask: Array2<bool>,
    pub blob_count: usize,
    pub cracked_fraction: f64,
    pub covered_fraction: f64,
    pub truth: ScoreVector,
}

fn score(v: f64) -> f32 {
    (4.0 * v.clamp(0.0, 1.0)).round() as f32
}

/// Ground-truth scores; overall is the mean of the four attributes with
/// cracking and contamination inverted.
pub fn truth_scores(brightness: f64, distortion: f64, cracked_fraction: f64, coverage: f64) -> ScoreVector {
    let y_b = score(brightness);
    let y_s = score(1.0 - distortion);
    let y_cr = score(cracked_fraction / CRACK_SATURATION);
    let y_co = score(coverage / COVERAGE_SATURATION);
    let y_o = ((y_b + y_s + (4.0 - y_cr) + (4.0 - y_co)) / 4.0).round();
    ScoreVector::full([y_b, y_s, y_cr, y_co, y_o])
}

fn inside_polygon(poly: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

pub fn render(params: &SynthParams) -> Result<Rendered, SynthError> {
    params.validate()?;
    let n = params.size;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let center = n as f64 / 2.0;
    let half = 0.35 * n as f64;

    let corners: Vec<(f64, f64)> = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
        .iter()
        .map(|&(sx, sy)| {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let r = params.squareness_distortion * 0.6 * half * rng.random_range(0.5..1.0);
            (center + sx * half + r * angle.cos(), center + sy * half + r * angle.sin())
        })
        .collect();
    let square_mask = Array2::from_shape_fn((n, n), |(r, c)| inside_polygon(&corners, c as f64 + 0.5, r as f64 + 0.5));
    let area = square_mask.iter().filter(|&&m| m).count().max(1);
    let square_px: Vec<(usize, usize)> = square_mask.indexed_iter().filter(|(_, &m)| m).map(|(i, _)| i).collect();

    let mut crack_mask = Array2::from_elem((n, n), false);
    let radius = params.crack_width_px as f64 / 2.0;
    for _ in 0..params.crack_count {
        let Some(&(r0, c0)) = square_px.choose(&mut rng) else { break };
        let mut p = (c0 as f64 + 0.5, r0 as f64 + 0.5);
        let mut heading = rng.random_range(0.0..std::f64::consts::TAU);
        let segments = rng.random_range(3..6);
        let seg_len = 0.6 * 2.0 * half / segments as f64;
        for _ in 0..segments {
            heading += rng.random_range(-0.6..0.6);
            let q = (p.0 + seg_len * heading.cos(), p.1 + seg_len * heading.sin());
            let (lo_c, hi_c) = (p.0.min(q.0) - radius - 1.0, p.0.max(q.0) + radius + 1.0);
            let (lo_r, hi_r) = (p.1.min(q.1) - radius - 1.0, p.1.max(q.1) + radius + 1.0);
            for r in (lo_r.max(0.0) as usize)..(hi_r.max(0.0) as usize).min(n) {
                for c in (lo_c.max(0.0) as usize)..(hi_c.max(0.0) as usize).min(n) {
                    if square_mask[[r, c]] && segment_distance((c as f64 + 0.5, r as f64 + 0.5), p, q) <= radius {
                        crack_mask[[r, c]] = true;
                    }
                }
            }
            p = q;
        }
    }
    let cracked_fraction = crack_mask.iter().filter(|&&m| m).count() as f64 / area as f64;

    // Discs are added until the requested coverage is reached; a disc that
    // would overshoot is shrunk to fit.
    let mut blob_mask = Array2::from_elem((n, n), false);
    let target = (params.contamination_coverage * area as f64).round() as usize;
    let mut covered = 0usize;
    let mut blob_count = 0;
    let r_max = 0.1 * n as f64;
    let mut attempts = 0;
    while covered < target && attempts < 10_000 {
        attempts += 1;
        let Some(&(cr, cc)) = square_px.choose(&mut rng) else { break };
        if blob_mask[[cr, cc]] {
            continue;
        }
        let disc = |radius: f64| -> Vec<(usize, usize)> {
            let lo_r = (cr as f64 - radius).floor().max(0.0) as usize;
            let lo_c = (cc as f64 - radius).floor().max(0.0) as usize;
            let hi_r = ((cr as f64 + radius).ceil() as usize + 1).min(n);
            let hi_c = ((cc as f64 + radius).ceil() as usize + 1).min(n);
            let mut px = Vec::new();
            for r in lo_r..hi_r {
                for c in lo_c..hi_c {
                    let d2 = (r as f64 - cr as f64).powi(2) + (c as f64 - cc as f64).powi(2);
                    if d2 <= radius * radius && square_mask[[r, c]] && !blob_mask[[r, c]] {
                        px.push((r, c));
                    }
                }
            }
            px
        };
        let mut radius = r_max * rng.random_range(0.6..1.0);
        let mut px = disc(radius);
        while covered + px.len() > target && radius > 0.5 {
            radius -= 0.25;
            px = disc(radius);
        }
        if px.is_empty() || covered + px.len() > target {
            continue;
        }
        covered += px.len();
        px.into_iter().for_each(|p| blob_mask[p] = true);
        blob_count += 1;
    }
    let covered_fraction = covered as f64 / area as f64;

    let level = params.brightness_level as f32;
    let noise = Normal::new(0.0, params.noise_sigma).expect("validated sigma");
    let image = Array2::from_shape_fn((n, n), |(r, c)| {
        let clean = if square_mask[[r, c]] && !crack_mask[[r, c]] && !blob_mask[[r, c]] { level } else { 0.0 };
        if params.noise_sigma > 0.0 {
            (clean + noise.sample(&mut rng) as f32).clamp(0.0, 1.0)
        } else {
            clean
        }
    });

    let truth = truth_scores(
        params.brightness_level,
        params.squareness_distortion,
        cracked_fraction,
        params.contamination_coverage,
    );
    Ok(Rendered { image, square_mask, crack_mask, blob_mask, blob_count, cracked_fraction, covered_fraction, truth })
}

pub fn generate(params: &SynthParams) -> Result<(SquareImage, ScoreVector), SynthError> {
    let r = render(params)?;
    Ok((SquareImage::from_pixels(r.image), r.truth))
}

/// Ranges the corpus generator draws parameters from, uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusRanges {
    pub max_crack_count: usize,
    pub max_crack_width_px: usize,
    pub max_coverage: f64,
    pub max_noise_sigma: f64,
}

impl Default for CorpusRanges {
    fn default() -> Self {
        CorpusRanges { max_crack_count: 8, max_crack_width_px: 3, max_coverage: 0.6, max_noise_sigma: 0.05 }
    }
}

#[derive(Debug, Clone)]
pub struct SynthSample {
    pub id: String,
    pub image: Array2<f32>,
    pub truth: ScoreVector,
    /// `truth` for the labeled subset, all-absent otherwise.
    pub label: ScoreVector,
}

/// `n` squares with uniformly drawn parameters; exactly
/// `round(label_fraction · n)` of them, chosen at random, keep their labels.
pub fn generate_corpus(n: usize, size: usize, seed: u64, label_fraction: f64, ranges: &CorpusRanges) -> Result<Vec<SynthSample>, SynthError> {
    if !(0.0..=1.0).contains(&label_fraction) {
        return Err(SynthError::InvalidParams(format!("label_fraction = {label_fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let params = SynthParams {
            size,
            brightness_level: rng.random_range(0.0..=1.0),
            squareness_distortion: rng.random_range(0.0..=1.0),
            crack_count: rng.random_range(0..=ranges.max_crack_count),
            crack_width_px: rng.random_range(1..=ranges.max_crack_width_px.max(1)),
            contamination_coverage: rng.random_range(0.0..=ranges.max_coverage),
            noise_sigma: rng.random_range(0.0..=ranges.max_noise_sigma),
            seed: rng.next_u64(),
        };
        let r = render(&params)?;
        samples.push(SynthSample { id: format!("sq{i:05}"), image: r.image, truth: r.truth, label: ScoreVector::unlabeled() });
    }
    let labeled = (label_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for &i in &order[..labeled] {
        samples[i].label = samples[i].truth;
    }
    Ok(samples)
}

/// Writes `<id>.png` per sample, `labels.csv` (the visible labels) and
/// `truth.csv` (every ground truth). Returns the label manifest path.
pub fn write_corpus(dir: &Path, samples: &[SynthSample]) -> Result<PathBuf, SynthError> {
    std::fs::create_dir_all(dir)?;
    for s in samples {
        imageio::save_gray16(dir.join(format!("{}.png", s.id)), s.image.view())?;
    }
    let records = |f: fn(&SynthSample) -> ScoreVector| -> Vec<LabelRecord> {
        samples.iter().map(|s| LabelRecord { id: s.id.clone(), scores: f(s) }).collect()
    };
    let manifest = dir.join("labels.csv");
    write_labels(&manifest, &records(|s| s.label))?;
    write_labels(dir.join("truth.csv"), &records(|s| s.truth))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extreme_case_scores() {
        let (_, y) = generate(&SynthParams::default()).unwrap();
        assert_eq!(y, ScoreVector::full([4.0, 4.0, 0.0, 0.0, 4.0]));
    }

    #[test]
    fn dark_square_is_all_zero() {
        let (sq, y) = generate(&SynthParams { brightness_level: 0.0, ..SynthParams::default() }).unwrap();
        assert!(sq.pixels.iter().all(|&v| v == 0.0));
        assert_eq!(y.0[0], Some(0.0));
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(generate(&SynthParams { brightness_level: 1.5, ..SynthParams::default() }).is_err());
        assert!(generate(&SynthParams { noise_sigma: -1.0, ..SynthParams::default() }).is_err());
    }
}
