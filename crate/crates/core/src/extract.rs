//! Grid-square localization by normalized cross-correlation against a
//! synthetic bright-square template, and cropping of the matched squares.

use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mrc::normalize_min_max;

#[derive(Debug, Error, PartialEq)]
pub enum ExtractError {
    #[error("montage is constant; no intensity distribution to build a template from")]
    DegenerateMontage,
    #[error("template side {side} does not fit a {height}x{width} image")]
    TemplateTooLarge { side: usize, height: usize, width: usize },
    #[error("template is constant")]
    ConstantTemplate,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Fraction of the template side covered by the bright inner square.
pub const INNER_FRACTION: f64 = 0.7;
pub const FG_PERCENTILE: f64 = 75.0;
pub const BG_PERCENTILE: f64 = 25.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub image: Array2<f32>,
    pub fg_level: f32,
    pub bg_level: f32,
}

impl Template {
    pub fn side(&self) -> usize {
        self.image.nrows()
    }

    /// Centered square of `INNER_FRACTION * side` at `fg_level` on `bg_level`.
    pub fn square(side: usize, fg_level: f32, bg_level: f32) -> Self {
        let inner = ((side as f64 * INNER_FRACTION).round() as usize).clamp(1, side);
        let start = (side - inner) / 2;
        let mut image = Array2::from_elem((side, side), bg_level);
        image.slice_mut(s![start..start + inner, start..start + inner]).fill(fg_level);
        Template { image, fg_level, bg_level }
    }
}

/// One extracted grid square with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareImage {
    pub pixels: Array2<f32>,
    pub source_grid: String,
    /// `(row, col)` in montage coordinates.
    pub center: (usize, usize),
    pub ncc_score: f32,
}

impl SquareImage {
    /// Wraps an already-normalized square image without montage provenance.
    pub fn from_pixels(pixels: Array2<f32>) -> Self {
        SquareImage { pixels, source_grid: String::new(), center: (0, 0), ncc_score: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub row: usize,
    pub col: usize,
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    /// Crop side in pixels (even).
    pub side: usize,
    /// Template side; defaults to `side` when absent.
    pub template_side: Option<usize>,
    pub threshold: f32,
    /// Chebyshev suppression radius; defaults to `side / 2` when absent.
    pub min_separation: Option<usize>,
    pub max_count: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig { side: 640, template_side: None, threshold: 0.3, min_separation: None, max_count: 250 }
    }
}

/// Nearest-rank percentile.
pub fn percentile(values: &[f32], p: f64) -> f32 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    let rank = ((p / 100.0 * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    let (_, nth, _) = v.select_nth_unstable_by(rank, |a, b| a.total_cmp(b));
    *nth
}

pub fn build_template(montage: ArrayView2<f32>, side: usize) -> Result<Template, ExtractError> {
    let (h, w) = montage.dim();
    if side == 0 || side > h.min(w) {
        return Err(ExtractError::TemplateTooLarge { side, height: h, width: w });
    }
    let values: Vec<f32> = montage.iter().copied().collect();
    let mut fg = percentile(&values, FG_PERCENTILE);
    let mut bg = percentile(&values, BG_PERCENTILE);
    if fg <= bg {
        // Mass concentrated at one level: fall back to the extremes.
        let (lo, hi) = values.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        if hi <= lo {
            return Err(ExtractError::DegenerateMontage);
        }
        fg = hi;
        bg = lo;
    }
    Ok(Template::square(side, fg, bg))
}

/// Zero-mean normalized cross-correlation of `template` at every placement
/// fully inside `image`. Entry `(r, c)` scores the window whose top-left
/// corner is `(r, c)`. Constant windows score 0.
pub fn ncc_map(image: ArrayView2<f32>, template: ArrayView2<f32>) -> Result<Array2<f32>, ExtractError> {
    let (th, tw) = template.dim();
    if th * tw <= 256 {
        ncc_with(image, template, correlate_direct)
    } else {
        ncc_with(image, template, correlate_fft)
    }
}

type Correlator = fn(ArrayView2<f32>, &Array2<f64>) -> Array2<f64>;

pub(crate) fn ncc_with(
    image: ArrayView2<f32>,
    template: ArrayView2<f32>,
    correlate: Correlator,
) -> Result<Array2<f32>, ExtractError> {
    let (h, w) = image.dim();
    let (th, tw) = template.dim();
    if th == 0 || tw == 0 || th > h || tw > w {
        return Err(ExtractError::TemplateTooLarge { side: th.max(tw), height: h, width: w });
    }
    let n = (th * tw) as f64;
    let t_mean = template.iter().map(|&v| v as f64).sum::<f64>() / n;
    let centered = template.mapv(|v| v as f64 - t_mean);
    let t_norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
    let t_scale = template.iter().fold(0.0f64, |m, &v| m.max((v as f64).abs()));
    if !(t_norm > 1e-12 * t_scale.max(1e-30) * n.sqrt()) {
        return Err(ExtractError::ConstantTemplate);
    }

    let numer = correlate(image, &centered);
    let (sum, sum_sq) = integral_images(image);
    let window = |ii: &Array2<f64>, r: usize, c: usize| {
        ii[[r + th, c + tw]] - ii[[r, c + tw]] - ii[[r + th, c]] + ii[[r, c]]
    };

    let (oh, ow) = (h - th + 1, w - tw + 1);
    Ok(Array2::from_shape_fn((oh, ow), |(r, c)| {
        let s1 = window(&sum, r, c);
        let s2 = window(&sum_sq, r, c);
        let var = s2 - s1 * s1 / n;
        if !(var > 1e-10 * s2.abs().max(1e-300)) {
            return 0.0;
        }
        (numer[[r, c]] / (var.sqrt() * t_norm)).clamp(-1.0, 1.0) as f32
    }))
}

/// Summed-area tables of values and squares, with a zero first row/column.
fn integral_images(image: ArrayView2<f32>) -> (Array2<f64>, Array2<f64>) {
    let (h, w) = image.dim();
    let mut sum = Array2::<f64>::zeros((h + 1, w + 1));
    let mut sum_sq = Array2::<f64>::zeros((h + 1, w + 1));
    for r in 0..h {
        let (mut row, mut row_sq) = (0.0, 0.0);
        for c in 0..w {
            let v = image[[r, c]] as f64;
            row += v;
            row_sq += v * v;
            sum[[r + 1, c + 1]] = sum[[r, c + 1]] + row;
            sum_sq[[r + 1, c + 1]] = sum_sq[[r, c + 1]] + row_sq;
        }
    }
    (sum, sum_sq)
}

pub(crate) fn correlate_direct(image: ArrayView2<f32>, kernel: &Array2<f64>) -> Array2<f64> {
    let (h, w) = image.dim();
    let (th, tw) = kernel.dim();
    Array2::from_shape_fn((h - th + 1, w - tw + 1), |(r, c)| {
        let mut acc = 0.0;
        for i in 0..th {
            for j in 0..tw {
                acc += image[[r + i, c + j]] as f64 * kernel[[i, j]];
            }
        }
        acc
    })
}

/// Circular cross-correlation over the image's own extent; valid placements
/// never wrap, so no padding is needed.
pub(crate) fn correlate_fft(image: ArrayView2<f32>, kernel: &Array2<f64>) -> Array2<f64> {
    let (h, w) = image.dim();
    let (th, tw) = kernel.dim();
    let mut planner = FftPlanner::<f64>::new();
    let row_fwd = planner.plan_fft_forward(w);
    let col_fwd = planner.plan_fft_forward(h);
    let row_inv = planner.plan_fft_inverse(w);
    let col_inv = planner.plan_fft_inverse(h);

    let mut a: Vec<Complex<f64>> = image.iter().map(|&v| Complex::new(v as f64, 0.0)).collect();
    let mut b = vec![Complex::new(0.0, 0.0); h * w];
    for i in 0..th {
        for j in 0..tw {
            b[i * w + j] = Complex::new(kernel[[i, j]], 0.0);
        }
    }
    fft2(&mut a, h, w, &row_fwd, &col_fwd);
    fft2(&mut b, h, w, &row_fwd, &col_fwd);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y.conj();
    }
    fft2(&mut a, h, w, &row_inv, &col_inv);
    let scale = 1.0 / (h * w) as f64;
    Array2::from_shape_fn((h - th + 1, w - tw + 1), |(r, c)| a[r * w + c].re * scale)
}

fn fft2(data: &mut [Complex<f64>], h: usize, w: usize, rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
    rows.process(data);
    let mut column = vec![Complex::new(0.0, 0.0); h];
    for c in 0..w {
        for r in 0..h {
            column[r] = data[r * w + c];
        }
        cols.process(&mut column);
        for r in 0..h {
            data[r * w + c] = column[r];
        }
    }
}

/// Greedy non-maximum suppression: candidates at or above `threshold` in
/// descending score (row-major on ties), each kept only if its Chebyshev
/// distance to every kept peak is at least `min_separation`.
pub fn pick_peaks(
    ncc: ArrayView2<f32>,
    threshold: f32,
    min_separation: usize,
    max_count: usize,
) -> Result<Vec<Peak>, ExtractError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ExtractError::InvalidParameter(format!("threshold {threshold} outside (0,1)")));
    }
    if min_separation == 0 {
        return Err(ExtractError::InvalidParameter("min_separation must be >= 1".into()));
    }
    let w = ncc.ncols();
    let mut candidates: Vec<(usize, f32)> = ncc
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v >= threshold)
        .map(|(i, &v)| (i, v))
        .collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut peaks: Vec<Peak> = Vec::new();
    for (i, score) in candidates {
        if peaks.len() >= max_count {
            break;
        }
        let (row, col) = (i / w, i % w);
        let clear = peaks.iter().all(|p| p.row.abs_diff(row).max(p.col.abs_diff(col)) >= min_separation);
        if clear {
            peaks.push(Peak { row, col, score });
        }
    }
    Ok(peaks)
}

/// `side`×`side` crops centered on each peak, zero-padded outside the
/// montage, then min-max normalized.
pub fn crop_squares(montage: ArrayView2<f32>, centers: &[Peak], side: usize, source_grid: &str) -> Vec<SquareImage> {
    assert!(side > 0 && side % 2 == 0, "crop side must be even");
    let (h, w) = montage.dim();
    let half = (side / 2) as isize;
    centers
        .iter()
        .map(|p| {
            let mut crop = Array2::<f32>::zeros((side, side));
            let (r0, c0) = (p.row as isize - half, p.col as isize - half);
            let (sr0, sr1) = (r0.max(0), (r0 + side as isize).min(h as isize));
            let (sc0, sc1) = (c0.max(0), (c0 + side as isize).min(w as isize));
            if sr0 < sr1 && sc0 < sc1 {
                crop.slice_mut(s![(sr0 - r0)..(sr1 - r0), (sc0 - c0)..(sc1 - c0)])
                    .assign(&montage.slice(s![sr0..sr1, sc0..sc1]));
            }
            SquareImage {
                pixels: normalize_min_max(crop.view()),
                source_grid: source_grid.to_string(),
                center: (p.row, p.col),
                ncc_score: p.score,
            }
        })
        .collect()
}

/// Template matching end to end: returns square centers (montage
/// coordinates) with their NCC scores. A constant montage yields no squares.
pub fn locate_squares(montage: ArrayView2<f32>, cfg: &ExtractConfig) -> Result<Vec<Peak>, ExtractError> {
    let side = cfg.template_side.unwrap_or(cfg.side);
    let template = match build_template(montage, side) {
        Ok(t) => t,
        Err(ExtractError::DegenerateMontage) => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let ncc = ncc_map(montage, template.image.view())?;
    let sep = cfg.min_separation.unwrap_or((cfg.side / 2).max(1));
    let offset = side / 2;
    Ok(pick_peaks(ncc.view(), cfg.threshold, sep, cfg.max_count)?
        .into_iter()
        .map(|p| Peak { row: p.row + offset, col: p.col + offset, score: p.score })
        .collect())
}

/// Locates and crops all squares of one montage.
pub fn extract_squares(
    montage: ArrayView2<f32>,
    cfg: &ExtractConfig,
    source_grid: &str,
) -> Result<Vec<SquareImage>, ExtractError> {
    if cfg.side == 0 || cfg.side % 2 != 0 {
        return Err(ExtractError::InvalidParameter(format!("crop side {} must be even and positive", cfg.side)));
    }
    let centers = locate_squares(montage, cfg)?;
    Ok(crop_squares(montage, &centers, cfg.side, source_grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn template_levels_for_binary_montage() {
        let m = Array2::from_shape_fn((10, 10), |(i, _)| if i < 5 { 1.0f32 } else { 0.0 });
        let t = build_template(m.view(), 6).unwrap();
        assert_eq!((t.fg_level, t.bg_level), (1.0, 0.0));
        assert_eq!(t.image.dim(), (6, 6));
        // round(0.7 * 6) = 4, centered at offset 1
        assert_eq!(t.image.iter().filter(|&&v| v == 1.0).count(), 16);
        assert_eq!(t.image[[1, 1]], 1.0);
        assert_eq!(t.image[[0, 0]], 0.0);
    }

    #[test]
    fn constant_montage_is_degenerate() {
        let m = Array2::from_elem((8, 8), 3.0f32);
        assert_eq!(build_template(m.view(), 4), Err(ExtractError::DegenerateMontage));
        assert_eq!(locate_squares(m.view(), &ExtractConfig { side: 4, ..Default::default() }).unwrap(), vec![]);
    }

    #[test]
    fn self_and_anti_correlation() {
        let t = array![[0.0f32, 1.0, 2.0], [3.0, 5.0, 1.0], [2.0, 2.0, 9.0]];
        let m = ncc_map(t.view(), t.view()).unwrap();
        assert!((m[[0, 0]] - 1.0).abs() < 1e-6);
        let neg = t.mapv(|v| -v);
        let m = ncc_map(neg.view(), t.view()).unwrap();
        assert!((m[[0, 0]] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_window_and_template() {
        let img = Array2::from_elem((5, 5), 2.0f32);
        let t = array![[0.0f32, 1.0], [1.0, 0.0]];
        assert!(ncc_map(img.view(), t.view()).unwrap().iter().all(|&v| v == 0.0));
        let flat = Array2::from_elem((2, 2), 1.0f32);
        assert_eq!(ncc_map(img.view(), flat.view()), Err(ExtractError::ConstantTemplate));
        let big = Array2::from_elem((6, 6), 1.0f32);
        assert!(matches!(ncc_map(img.view(), big.view()), Err(ExtractError::TemplateTooLarge { .. })));
    }

    #[test]
    fn fft_and_direct_paths_agree() {
        let img = Array2::from_shape_fn((23, 19), |(i, j)| ((i * 31 + j * 17) % 13) as f32 * 0.1);
        let t = Array2::from_shape_fn((7, 5), |(i, j)| ((i * 5 + j * 3) % 7) as f32);
        let a = ncc_with(img.view(), t.view(), correlate_direct).unwrap();
        let b = ncc_with(img.view(), t.view(), correlate_fft).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn single_peak() {
        let mut m = Array2::<f32>::zeros((9, 9));
        m[[4, 6]] = 0.9;
        m[[1, 1]] = 0.2;
        let p = pick_peaks(m.view(), 0.3, 2, 10).unwrap();
        assert_eq!(p, vec![Peak { row: 4, col: 6, score: 0.9 }]);
    }

    #[test]
    fn equal_peaks_tie_broken_row_major() {
        let mut m = Array2::<f32>::zeros((9, 9));
        m[[3, 4]] = 0.8;
        m[[3, 5]] = 0.8;
        let p = pick_peaks(m.view(), 0.5, 5, 10).unwrap();
        assert_eq!(p, vec![Peak { row: 3, col: 4, score: 0.8 }]);
    }

    #[test]
    fn peak_parameters_validated() {
        let m = Array2::<f32>::zeros((3, 3));
        assert!(pick_peaks(m.view(), 0.0, 1, 1).is_err());
        assert!(pick_peaks(m.view(), 0.5, 0, 1).is_err());
        assert!(pick_peaks(m.view(), 0.5, 1, 1).unwrap().is_empty());
    }

    #[test]
    fn center_crop_and_border_crop() {
        let m = Array2::from_shape_fn((10, 10), |(i, j)| (i * 10 + j) as f32 + 1.0);
        let c = crop_squares(m.view(), &[Peak { row: 5, col: 5, score: 0.5 }], 4, "g");
        assert_eq!(c[0].pixels, normalize_min_max(m.slice(s![3..7, 3..7])));
        assert_eq!(c[0].center, (5, 5));

        let c = crop_squares(m.view(), &[Peak { row: 0, col: 0, score: 0.5 }], 4, "g");
        let px = &c[0].pixels;
        assert!(px.slice(s![0..2, ..]).iter().all(|&v| v == 0.0));
        assert!(px.slice(s![.., 0..2]).iter().all(|&v| v == 0.0));
        assert_eq!(px[[3, 3]], 1.0);
        assert!(px[[2, 2]] > 0.0);
    }
}
