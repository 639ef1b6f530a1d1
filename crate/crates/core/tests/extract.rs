mod common;

use common::{lattice_montage, ncc_oracle};
use gridscreen::extract::{build_template, crop_squares, extract_squares, ncc_map, percentile, pick_peaks, Peak};
use gridscreen::ExtractConfig;
use ndarray::{s, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(h: usize, w: usize, seed: u64) -> Array2<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((h, w), |_| rng.random_range(0.0..1.0))
}

fn max_abs_diff(a: &Array2<f32>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(&x, &y)| (x as f64 - y).abs()).fold(0.0, f64::max)
}

#[test]
fn ncc_matches_sliding_window_oracle() {
    let image = random_image(16, 16, 1);
    let template = random_image(5, 5, 2);
    let got = ncc_map(image.view(), template.view()).unwrap();
    assert!(max_abs_diff(&got, &ncc_oracle(&image, &template)) <= 1e-6);

    // Large templates take the FFT path.
    let image = random_image(48, 40, 3);
    let template = random_image(20, 18, 4);
    let got = ncc_map(image.view(), template.view()).unwrap();
    assert!(max_abs_diff(&got, &ncc_oracle(&image, &template)) <= 1e-6);
}

#[test]
fn template_straddles_two_level_montage() {
    let mut montage = Array2::from_elem((40, 40), 0.2f32);
    montage.slice_mut(s![5..30, 5..30]).fill(0.9);
    let t = build_template(montage.view(), 20).unwrap();
    let values: Vec<f32> = montage.iter().copied().collect();
    assert_eq!((t.fg_level, t.bg_level), (percentile(&values, 75.0), percentile(&values, 25.0)));
    assert!(t.fg_level > t.bg_level);
}

#[test]
fn single_square_and_blank_montage() {
    let mut montage = Array2::from_elem((120, 120), 0.1f32);
    montage.slice_mut(s![40..62, 50..72]).fill(0.8);
    let cfg = ExtractConfig { side: 32, threshold: 0.5, ..ExtractConfig::default() };
    let squares = extract_squares(montage.view(), &cfg, "g").unwrap();
    assert_eq!(squares.len(), 1);
    assert_eq!(squares[0].center, (51, 61));
    assert!(squares[0].pixels.iter().all(|&v| (0.0..=1.0).contains(&v)));

    let blank = Array2::from_elem((120, 120), 0.3f32);
    assert!(extract_squares(blank.view(), &cfg, "g").unwrap().is_empty());
}

#[test]
fn lattice_squares_recovered() {
    let (montage, truth) = lattice_montage(5, 22, 48);
    let cfg = ExtractConfig { side: 32, threshold: 0.5, ..ExtractConfig::default() };
    let squares = extract_squares(montage.view(), &cfg, "g").unwrap();
    assert_eq!(squares.len(), 25);
    for (r, c) in truth {
        assert!(squares.iter().any(|sq| sq.center.0.abs_diff(r) <= 2 && sq.center.1.abs_diff(c) <= 2), "({r},{c})");
    }
}

#[test]
fn interior_crop_matches_submatrix() {
    let montage = random_image(50, 60, 6);
    let crops = crop_squares(montage.view(), &[Peak { row: 20, col: 33, score: 0.9 }], 10, "g");
    let sub = montage.slice(s![15..25, 28..38]);
    let (lo, hi) = sub.iter().fold((f32::MAX, f32::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    for (a, b) in crops[0].pixels.iter().zip(sub.iter()) {
        assert!((a - (b - lo) / (hi - lo)).abs() < 1e-6);
    }
}

/// Local maxima of a 3×3 neighbourhood, found by exhaustive scan.
fn local_maxima(map: &Array2<f32>, threshold: f32) -> Vec<(usize, usize)> {
    let (h, w) = map.dim();
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let v = map[[r, c]];
            let neighbours = (r.saturating_sub(1)..(r + 2).min(h)).flat_map(|i| (c.saturating_sub(1)..(c + 2).min(w)).map(move |j| (i, j)));
            if v >= threshold && neighbours.into_iter().all(|(i, j)| map[[i, j]] <= v) {
                out.push((r, c));
            }
        }
    }
    out
}

#[test]
fn lattice_of_peaks_matches_local_maxima() {
    let mut map = Array2::from_elem((100, 100), 0.0f32);
    for i in 0..5 {
        for j in 0..5 {
            let (r, c) = (10 + 20 * i, 10 + 20 * j);
            map[[r, c]] = 0.9 - 0.01 * (i * 5 + j) as f32;
            map[[r, c + 1]] = 0.5;
        }
    }
    let peaks = pick_peaks(map.view(), 0.6, 5, 250).unwrap();
    let mut got: Vec<(usize, usize)> = peaks.iter().map(|p| (p.row, p.col)).collect();
    got.sort();
    assert_eq!(got, local_maxima(&map, 0.6));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ncc_is_affine_invariant(seed in any::<u64>(), a in 0.1f32..10.0, b in -5.0f32..5.0) {
        let image = random_image(20, 24, seed);
        let template = random_image(6, 7, seed ^ 9);
        let base = ncc_map(image.view(), template.view()).unwrap();
        let shifted = ncc_map(image.mapv(|v| a * v + b).view(), template.view()).unwrap();
        for (x, y) in base.iter().zip(shifted.iter()) {
            prop_assert!((x - y).abs() <= 1e-5, "{} vs {}", x, y);
        }
    }

    #[test]
    fn peaks_respect_policy(seed in any::<u64>(), sep in 1usize..8, max_count in 1usize..30, threshold in 0.1f32..0.9) {
        let map = random_image(30, 30, seed);
        let peaks = pick_peaks(map.view(), threshold, sep, max_count).unwrap();
        prop_assert!(peaks.len() <= max_count);
        prop_assert!(peaks.windows(2).all(|w| w[0].score >= w[1].score));
        for (i, p) in peaks.iter().enumerate() {
            prop_assert!(p.score >= threshold);
            for q in &peaks[..i] {
                prop_assert!(p.row.abs_diff(q.row).max(p.col.abs_diff(q.col)) >= sep);
            }
        }
        prop_assert_eq!(peaks, pick_peaks(map.view(), threshold, sep, max_count).unwrap());
    }
}
