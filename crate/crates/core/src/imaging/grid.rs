use serde::{Deserialize, Serialize};

use super::{DiffMap, ImagingError};

/// Coarse grid rows; the fine grid has ten times as many in each direction.
pub const COARSE_ROWS: u32 = 10;
pub const FINE_FACTOR: u32 = 10;

/// Row-major grid of changed-pixel fractions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub cols: u32,
    pub rows: u32,
    pub values: Vec<f32>,
}

impl Grid {
    pub fn zeros(cols: u32, rows: u32) -> Self {
        Self {
            cols,
            rows,
            values: vec![0.0; (cols * rows) as usize],
        }
    }

    pub fn get(&self, col: u32, row: u32) -> f32 {
        self.values[(row * self.cols + col) as usize]
    }

    pub fn set(&mut self, col: u32, row: u32, v: f32) {
        self.values[(row * self.cols + col) as usize] = v;
    }

    /// Cells whose fraction exceeds `tolerance`, as `(col, row)`.
    pub fn cells_above(&self, tolerance: f32) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(move |(_, &v)| v > tolerance)
            .map(|(i, _)| (i as u32 % self.cols, i as u32 / self.cols))
    }

    pub fn count_above(&self, tolerance: f32) -> usize {
        self.values.iter().filter(|&&v| v > tolerance).count()
    }

    pub fn is_well_formed(&self) -> bool {
        self.values.len() == (self.cols * self.rows) as usize
            && self.values.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

/// Change localisation for one capture: an `X x 10` coarse grid and a
/// `10X x 100` fine grid of square cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionGridSet {
    pub coarse: Grid,
    pub fine: Grid,
}

impl RegionGridSet {
    pub fn empty(columns: u32) -> Self {
        Self {
            coarse: Grid::zeros(columns, COARSE_ROWS),
            fine: Grid::zeros(columns * FINE_FACTOR, COARSE_ROWS * FINE_FACTOR),
        }
    }

    pub fn columns(&self) -> u32 {
        self.coarse.cols
    }

    pub fn is_well_formed(&self) -> bool {
        self.coarse.is_well_formed()
            && self.fine.is_well_formed()
            && self.coarse.rows == COARSE_ROWS
            && self.fine.cols == self.coarse.cols * FINE_FACTOR
            && self.fine.rows == COARSE_ROWS * FINE_FACTOR
    }
}

/// Number of coarse columns for a board of the given aspect ratio.
pub fn grid_columns(aspect_ratio: f64) -> u32 {
    ((aspect_ratio * COARSE_ROWS as f64).round() as u32).max(1)
}

/// Index of the cell containing pixel `i` when `extent` pixels are split into `cells`.
#[inline]
pub fn cell_of(i: u32, cells: u32, extent: u32) -> u32 {
    (i as u64 * cells as u64 / extent as u64) as u32
}

/// First pixel of cell `c` under [`cell_of`] (so cell `c` spans
/// `cell_start(c)..cell_start(c + 1)`).
#[inline]
pub fn cell_start(c: u32, cells: u32, extent: u32) -> u32 {
    (c as u64 * extent as u64).div_ceil(cells as u64) as u32
}

pub fn region_grids(diff: &DiffMap, aspect_ratio: f64, tolerance: u8) -> Result<RegionGridSet, ImagingError> {
    let cols = grid_columns(aspect_ratio);
    let (w, h) = (diff.width(), diff.height());
    let fine_cols = cols * FINE_FACTOR;
    let fine_rows = COARSE_ROWS * FINE_FACTOR;
    let untileable = || ImagingError::Untileable {
        width: w,
        height: h,
        cols,
        rows: COARSE_ROWS,
    };
    if w < fine_cols || h < fine_rows {
        return Err(untileable());
    }
    // within one coarse cell of the expected width
    let expected_w = h as f64 * cols as f64 / COARSE_ROWS as f64;
    if (w as f64 - expected_w).abs() > h as f64 / COARSE_ROWS as f64 {
        return Err(untileable());
    }

    let mut coarse_hits = vec![0u32; (cols * COARSE_ROWS) as usize];
    let mut coarse_total = vec![0u32; coarse_hits.len()];
    let mut fine_hits = vec![0u32; (fine_cols * fine_rows) as usize];
    let mut fine_total = vec![0u32; fine_hits.len()];
    let fine_x: Vec<u32> = (0..w).map(|x| cell_of(x, fine_cols, w)).collect();
    for y in 0..h {
        let fy = cell_of(y, fine_rows, h);
        let cy = fy / FINE_FACTOR;
        for (x, &fx) in fine_x.iter().enumerate() {
            let cx = fx / FINE_FACTOR;
            let changed = (diff.get(x as u32, y) > tolerance) as u32;
            let fi = (fy * fine_cols + fx) as usize;
            let ci = (cy * cols + cx) as usize;
            fine_hits[fi] += changed;
            fine_total[fi] += 1;
            coarse_hits[ci] += changed;
            coarse_total[ci] += 1;
        }
    }
    let to_grid = |c: u32, r: u32, hits: &[u32], total: &[u32]| Grid {
        cols: c,
        rows: r,
        values: hits.iter().zip(total).map(|(&n, &t)| n as f32 / t as f32).collect(),
    };
    Ok(RegionGridSet {
        coarse: to_grid(cols, COARSE_ROWS, &coarse_hits, &coarse_total),
        fine: to_grid(fine_cols, fine_rows, &fine_hits, &fine_total),
    })
}
