use std::path::PathBuf;

use gridscreen::montage::{assign_grid_cells, stitch, stitch_tiles, Cell, MontageError, StagePosition};
use gridscreen::mrc::{write_mrc, Mode};
use gridscreen::MrcVolume;
use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SPACING: f64 = 100.0;

fn jittered_lattice(seed: u64, jitter: f64) -> Vec<StagePosition> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<StagePosition> = (0..25)
        .map(|i| StagePosition {
            tile: PathBuf::from(format!("tile{i:02}.mrc")),
            x_um: (i % 5) as f64 * SPACING + rng.random_range(-jitter..jitter),
            y_um: (i / 5) as f64 * SPACING + rng.random_range(-jitter..jitter),
        })
        .collect();
    out.shuffle(&mut rng);
    out
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

/// Bands of five by y, then the column permutation of each band with the
/// least total displacement from the lattice columns.
fn assignment_oracle(positions: &[StagePosition]) -> Vec<Cell> {
    let mut by_y: Vec<usize> = (0..positions.len()).collect();
    by_y.sort_by(|&a, &b| positions[a].y_um.total_cmp(&positions[b].y_um));
    let perms = permutations(5);
    let mut cells = vec![Cell { row: 0, col: 0 }; positions.len()];
    for (row, band) in by_y.chunks(5).enumerate() {
        let cost = |p: &Vec<usize>| -> f64 {
            band.iter().zip(p).map(|(&i, &col)| (positions[i].x_um - col as f64 * SPACING).abs()).sum()
        };
        let best = perms.iter().min_by(|a, b| cost(a).total_cmp(&cost(b))).unwrap();
        for (&i, &col) in band.iter().zip(best) {
            cells[i] = Cell { row, col };
        }
    }
    cells
}

fn constant_tiles(n: usize) -> Vec<Array2<f32>> {
    (0..n).map(|i| Array2::from_elem((6, 4), i as f32 + 1.0)).collect()
}

#[test]
fn jittered_lattice_matches_exhaustive_assignment() {
    for seed in 0..20 {
        let positions = jittered_lattice(seed, 0.24 * SPACING);
        assert_eq!(assign_grid_cells(&positions, 5, 5).unwrap(), assignment_oracle(&positions), "seed {seed}");
    }
}

#[test]
fn cell_means_equal_tile_constants() {
    let positions = jittered_lattice(3, 20.0);
    let tiles = constant_tiles(25);
    let m = stitch_tiles(&positions, &tiles, 5, 5).unwrap();
    assert_eq!(m.image.dim(), (30, 20));
    let cells = assignment_oracle(&positions);
    for (i, cell) in cells.iter().enumerate() {
        let block = m.image.slice(ndarray::s![cell.row * 6..cell.row * 6 + 6, cell.col * 4..cell.col * 4 + 4]);
        assert_eq!(block.mean().unwrap(), i as f32 + 1.0);
    }
    assert!(m.empty_cells.is_empty());
}

#[test]
fn too_many_and_duplicate_positions() {
    let mut positions = jittered_lattice(4, 10.0);
    assert!(matches!(assign_grid_cells(&positions, 4, 5), Err(MontageError::TooManyTiles { .. })));
    positions[1].x_um = positions[0].x_um;
    positions[1].y_um = positions[0].y_um;
    assert!(matches!(assign_grid_cells(&positions, 5, 5), Err(MontageError::DuplicatePosition { .. })));
}

#[test]
fn stitch_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let positions: Vec<StagePosition> = (0..4)
        .map(|i| {
            let tile = dir.path().join(format!("t{i}.mrc"));
            write_mrc(&MrcVolume::from_plane(Array2::from_elem((3, 3), i as f32 * 10.0).view(), Mode::Int16), &tile, Mode::Int16).unwrap();
            StagePosition { tile, x_um: (i % 2) as f64, y_um: (i / 2) as f64 }
        })
        .collect();
    let m = stitch(&positions, 2, 2).unwrap();
    assert_eq!(m.image[[0, 3]], 10.0);
    assert_eq!(m.image[[5, 5]], 30.0);
    let json: serde_json::Value = serde_json::from_str(&m.placements_json()).unwrap();
    assert_eq!(json["placements"].as_array().unwrap().len(), 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stitching_is_permutation_invariant(seed in any::<u64>(), count in 1usize..=25) {
        let positions: Vec<StagePosition> = jittered_lattice(seed, 20.0).into_iter().take(count).collect();
        let tiles = constant_tiles(count);
        let a = stitch_tiles(&positions, &tiles, 5, 5).unwrap();

        let mut order: Vec<usize> = (0..count).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let p2: Vec<StagePosition> = order.iter().map(|&i| positions[i].clone()).collect();
        let t2: Vec<Array2<f32>> = order.iter().map(|&i| tiles[i].clone()).collect();
        let b = stitch_tiles(&p2, &t2, 5, 5).unwrap();
        prop_assert_eq!(&a, &b);

        let montage_sum: f64 = a.image.iter().map(|&v| v as f64).sum();
        let tile_sum: f64 = tiles.iter().flat_map(|t| t.iter()).map(|&v| v as f64).sum();
        prop_assert_eq!(montage_sum, tile_sum);
        prop_assert_eq!(a.placements.len() + a.empty_cells.len(), 25);
    }
}
