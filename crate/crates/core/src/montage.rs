//! Assembling low-magnification tiles into a grid montage from stage
//! coordinates.
//!
//! Tiles are placed edge to edge in a `rows`×`cols` lattice. Lattice rows are
//! found by splitting the stage y coordinates at their `rows - 1` widest gaps,
//! columns likewise from x. Unoccupied cells stay zero.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mrc::{self, MrcError};

#[derive(Debug, Error)]
pub enum MontageError {
    #[error("{tiles} tiles do not fit a {rows}x{cols} grid")]
    TooManyTiles { tiles: usize, rows: usize, cols: usize },
    #[error("tiles {first} and {second} share stage position ({x_um}, {y_um})")]
    DuplicatePosition { first: usize, second: usize, x_um: f64, y_um: f64 },
    #[error("tile {0} has a non-finite stage coordinate")]
    NonFiniteCoordinate(usize),
    #[error("tiles {first} and {second} both map to cell ({row}, {col})")]
    AmbiguousLayout { first: usize, second: usize, row: usize, col: usize },
    #[error("grid must have 1..=5 rows and columns, got {rows}x{cols}")]
    BadGridShape { rows: usize, cols: usize },
    #[error("tile {index} is {found:?}, expected {expected:?}")]
    MixedTileSizes { index: usize, expected: (usize, usize), found: (usize, usize) },
    #[error("no tiles given")]
    NoTiles,
    #[error("missing tile file {0}")]
    MissingTileFile(PathBuf),
    #[error("tile {path}: {source}")]
    Tile { path: PathBuf, source: MrcError },
    #[error("manifest: {0}")]
    Manifest(String),
}

pub const MAX_GRID: usize = 5;

/// One manifest record: a tile file and its stage position in micrometres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePosition {
    pub tile: PathBuf,
    pub x_um: f64,
    pub y_um: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub tile: PathBuf,
    pub row: usize,
    pub col: usize,
    /// Top-left corner of the tile in montage pixels, `(y, x)`.
    pub pixel_offset: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Montage {
    pub image: Array2<f32>,
    pub rows: usize,
    pub cols: usize,
    pub tile_height: usize,
    pub tile_width: usize,
    /// Sorted by `(row, col)`.
    pub placements: Vec<Placement>,
    pub empty_cells: Vec<Cell>,
}

#[derive(Serialize)]
struct PlacementIndex<'a> {
    rows: usize,
    cols: usize,
    tile_height: usize,
    tile_width: usize,
    placements: &'a [Placement],
    empty_cells: &'a [Cell],
}

impl Montage {
    pub fn placements_json(&self) -> String {
        serde_json::to_string_pretty(&PlacementIndex {
            rows: self.rows,
            cols: self.cols,
            tile_height: self.tile_height,
            tile_width: self.tile_width,
            placements: &self.placements,
            empty_cells: &self.empty_cells,
        })
        .expect("placement index serializes")
    }
}

/// Reads a JSON array of `{"tile", "x_um", "y_um"}` records. Relative tile
/// paths are resolved against the manifest's directory.
pub fn load_stage_manifest(path: impl AsRef<Path>) -> Result<Vec<StagePosition>, MontageError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| MontageError::Manifest(format!("{}: {e}", path.display())))?;
    let mut positions: Vec<StagePosition> =
        serde_json::from_str(&text).map_err(|e| MontageError::Manifest(e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    for p in &mut positions {
        if p.tile.is_relative() {
            p.tile = base.join(&p.tile);
        }
    }
    Ok(positions)
}

/// Maps each position (by input index) to its lattice cell.
pub fn assign_grid_cells(positions: &[StagePosition], rows: usize, cols: usize) -> Result<Vec<Cell>, MontageError> {
    if !(1..=MAX_GRID).contains(&rows) || !(1..=MAX_GRID).contains(&cols) {
        return Err(MontageError::BadGridShape { rows, cols });
    }
    if positions.len() > rows * cols {
        return Err(MontageError::TooManyTiles { tiles: positions.len(), rows, cols });
    }
    for (i, p) in positions.iter().enumerate() {
        if !p.x_um.is_finite() || !p.y_um.is_finite() {
            return Err(MontageError::NonFiniteCoordinate(i));
        }
    }
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            if positions[i].x_um == positions[j].x_um && positions[i].y_um == positions[j].y_um {
                return Err(MontageError::DuplicatePosition {
                    first: i,
                    second: j,
                    x_um: positions[i].x_um,
                    y_um: positions[i].y_um,
                });
            }
        }
    }

    let ys: Vec<f64> = positions.iter().map(|p| p.y_um).collect();
    let xs: Vec<f64> = positions.iter().map(|p| p.x_um).collect();
    let row_of = split_at_widest_gaps(&ys, rows);
    let col_of = split_at_widest_gaps(&xs, cols);

    let cells: Vec<Cell> = row_of.iter().zip(&col_of).map(|(&row, &col)| Cell { row, col }).collect();
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by_key(|&i| (cells[i], i));
    for w in order.windows(2) {
        if cells[w[0]] == cells[w[1]] {
            let (first, second) = (w[0].min(w[1]), w[0].max(w[1]));
            return Err(MontageError::AmbiguousLayout { first, second, row: cells[first].row, col: cells[first].col });
        }
    }
    Ok(cells)
}

/// Band index for each value after cutting the sorted values at the
/// `bands - 1` widest strictly positive gaps.
fn split_at_widest_gaps(values: &[f64], bands: usize) -> Vec<usize> {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));

    let mut gaps: Vec<(f64, usize)> =
        sorted.windows(2).enumerate().map(|(i, w)| (w[1] - w[0], i)).filter(|&(g, _)| g > 0.0).collect();
    gaps.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
    let mut cuts: Vec<f64> = gaps
        .iter()
        .take(bands.saturating_sub(1))
        .map(|&(_, i)| 0.5 * (sorted[i] + sorted[i + 1]))
        .collect();
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));

    values.iter().map(|&v| cuts.iter().filter(|&&c| v > c).count()).collect()
}

/// Places in-memory tiles (parallel to `positions`) into a montage.
pub fn stitch_tiles(
    positions: &[StagePosition],
    tiles: &[Array2<f32>],
    rows: usize,
    cols: usize,
) -> Result<Montage, MontageError> {
    assert_eq!(positions.len(), tiles.len(), "one tile per position");
    let first = tiles.first().ok_or(MontageError::NoTiles)?;
    let (th, tw) = first.dim();
    for (index, t) in tiles.iter().enumerate() {
        if t.dim() != (th, tw) {
            return Err(MontageError::MixedTileSizes { index, expected: (th, tw), found: t.dim() });
        }
    }
    let cells = assign_grid_cells(positions, rows, cols)?;

    let mut image = Array2::<f32>::zeros((rows * th, cols * tw));
    let mut placements = Vec::with_capacity(tiles.len());
    for ((pos, tile), cell) in positions.iter().zip(tiles).zip(&cells) {
        let (y0, x0) = (cell.row * th, cell.col * tw);
        image.slice_mut(s![y0..y0 + th, x0..x0 + tw]).assign(tile);
        placements.push(Placement { tile: pos.tile.clone(), row: cell.row, col: cell.col, pixel_offset: (y0, x0) });
    }
    placements.sort_by_key(|p| (p.row, p.col));

    let empty_cells = (0..rows)
        .flat_map(|row| (0..cols).map(move |col| Cell { row, col }))
        .filter(|c| !cells.contains(c))
        .collect();

    Ok(Montage { image, rows, cols, tile_height: th, tile_width: tw, placements, empty_cells })
}

/// Loads plane 0 of every tile file (raw intensities) and stitches them.
pub fn stitch(positions: &[StagePosition], rows: usize, cols: usize) -> Result<Montage, MontageError> {
    let tiles = positions
        .iter()
        .map(|p| {
            if !p.tile.exists() {
                return Err(MontageError::MissingTileFile(p.tile.clone()));
            }
            let vol = mrc::read_mrc(&p.tile).map_err(|source| MontageError::Tile { path: p.tile.clone(), source })?;
            Ok(vol.plane(0).expect("nz >= 1").to_owned())
        })
        .collect::<Result<Vec<_>, _>>()?;
    stitch_tiles(positions, &tiles, rows, cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pos(x: f64, y: f64) -> StagePosition {
        StagePosition { tile: PathBuf::from(format!("t_{x}_{y}.mrc")), x_um: x, y_um: y }
    }

    #[test]
    fn single_tile() {
        assert_eq!(assign_grid_cells(&[pos(3.0, -2.0)], 1, 1).unwrap(), vec![Cell { row: 0, col: 0 }]);
    }

    #[test]
    fn corners_of_square() {
        let p = [pos(10.0, 10.0), pos(0.0, 0.0), pos(0.0, 10.0), pos(10.0, 0.0)];
        let cells = assign_grid_cells(&p, 2, 2).unwrap();
        assert_eq!(
            cells,
            vec![Cell { row: 1, col: 1 }, Cell { row: 0, col: 0 }, Cell { row: 1, col: 0 }, Cell { row: 0, col: 1 }]
        );
    }

    #[test]
    fn partial_grid_keeps_lattice_columns() {
        // Missing corners, as on a circular grid.
        let mut p = Vec::new();
        for r in 0..3 {
            for c in 0..3 {
                if (r, c) != (0, 0) && (r, c) != (2, 2) {
                    p.push(pos(c as f64 * 100.0, r as f64 * 100.0));
                }
            }
        }
        let cells = assign_grid_cells(&p, 3, 3).unwrap();
        for (q, cell) in p.iter().zip(&cells) {
            assert_eq!(cell.row, (q.y_um / 100.0) as usize);
            assert_eq!(cell.col, (q.x_um / 100.0) as usize);
        }
    }

    #[test]
    fn errors() {
        let p = vec![pos(0.0, 0.0), pos(1.0, 0.0)];
        assert!(matches!(assign_grid_cells(&p, 1, 1), Err(MontageError::TooManyTiles { .. })));
        let d = vec![pos(0.0, 0.0), pos(0.0, 0.0)];
        assert!(matches!(assign_grid_cells(&d, 2, 2), Err(MontageError::DuplicatePosition { .. })));
        assert!(matches!(assign_grid_cells(&p, 6, 1), Err(MontageError::BadGridShape { .. })));
        assert!(matches!(assign_grid_cells(&[pos(f64::NAN, 0.0)], 1, 1), Err(MontageError::NonFiniteCoordinate(0))));
    }

    #[test]
    fn stitch_identity_and_side_by_side() {
        let a = Array2::from_shape_fn((4, 4), |(i, j)| (i * 4 + j) as f32);
        let m = stitch_tiles(&[pos(0.0, 0.0)], &[a.clone()], 1, 1).unwrap();
        assert_eq!(m.image, a);

        let b = Array2::from_elem((4, 4), -1.0f32);
        let m = stitch_tiles(&[pos(50.0, 0.0), pos(0.0, 0.0)], &[b.clone(), a.clone()], 1, 2).unwrap();
        assert_eq!(m.image.dim(), (4, 8));
        assert_eq!(m.image.slice(s![.., 0..4]), a);
        assert_eq!(m.image.slice(s![.., 4..8]), b);
        assert!(m.empty_cells.is_empty());
    }

    #[test]
    fn empty_cells_zero_and_flagged() {
        let a = Array2::from_elem((2, 2), 5.0f32);
        let m = stitch_tiles(&[pos(0.0, 0.0), pos(9.0, 9.0)], &[a.clone(), a], 2, 2).unwrap();
        assert_eq!(m.empty_cells, vec![Cell { row: 0, col: 1 }, Cell { row: 1, col: 0 }]);
        assert!(m.image.slice(s![0..2, 2..4]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mixed_sizes_rejected() {
        let r = stitch_tiles(&[pos(0.0, 0.0), pos(1.0, 0.0)], &[Array2::zeros((2, 2)), Array2::zeros((2, 3))], 1, 2);
        assert!(matches!(r, Err(MontageError::MixedTileSizes { index: 1, .. })));
    }

    #[test]
    fn missing_file_reported() {
        let p = [StagePosition { tile: PathBuf::from("/nonexistent/tile.mrc"), x_um: 0.0, y_um: 0.0 }];
        assert!(matches!(stitch(&p, 1, 1), Err(MontageError::MissingTileFile(_))));
    }
}
