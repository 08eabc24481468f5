//! Default share region: the largest connected patch of changed coarse cells.

use reboard_core::imaging::{cell_start, Grid};

use crate::model::CropRect;

/// Inclusive coarse-cell rectangle `(c0, r0, c1, r1)`.
pub type CellRect = (u32, u32, u32, u32);

/// Bounding cell rectangle of the largest 4-connected component of cells
/// above `tolerance`. Ties go to the component whose first cell comes first
/// in row-major order. `None` when no cell changed.
pub fn largest_cluster(grid: &Grid, tolerance: f32) -> Option<CellRect> {
    let (cols, rows) = (grid.cols as usize, grid.rows as usize);
    let on = |i: usize| grid.values[i] > tolerance;
    let mut seen = vec![false; cols * rows];
    let mut best: Option<(usize, CellRect)> = None;
    let mut stack = Vec::new();
    for start in 0..cols * rows {
        if seen[start] || !on(start) {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut size, mut rect) = (0usize, (u32::MAX, u32::MAX, 0u32, 0u32));
        while let Some(i) = stack.pop() {
            size += 1;
            let (c, r) = ((i % cols) as u32, (i / cols) as u32);
            rect = (rect.0.min(c), rect.1.min(r), rect.2.max(c), rect.3.max(r));
            let mut visit = |j: usize| {
                if !seen[j] && on(j) {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if c > 0 {
                visit(i - 1);
            }
            if (c as usize) + 1 < cols {
                visit(i + 1);
            }
            if r > 0 {
                visit(i - cols);
            }
            if (r as usize) + 1 < rows {
                visit(i + cols);
            }
        }
        if best.is_none_or(|(s, _)| size > s) {
            best = Some((size, rect));
        }
    }
    best.map(|(_, rect)| rect)
}

/// Pixel rectangle covered by an inclusive cell rectangle.
pub fn cells_to_pixels(cells: CellRect, cols: u32, rows: u32, width: u32, height: u32) -> CropRect {
    let (c0, r0, c1, r1) = cells;
    let (x0, x1) = (cell_start(c0, cols, width), cell_start(c1 + 1, cols, width));
    let (y0, y1) = (cell_start(r0, rows, height), cell_start(r1 + 1, rows, height));
    CropRect {
        x: x0,
        y: y0,
        width: x1 - x0,
        height: y1 - y0,
    }
}

pub fn default_share_region(coarse: &Grid, tolerance: f32, width: u32, height: u32) -> Option<CropRect> {
    largest_cluster(coarse, tolerance).map(|cells| cells_to_pixels(cells, coarse.cols, coarse.rows, width, height))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: &[&str]) -> Grid {
        Grid {
            cols: rows[0].len() as u32,
            rows: rows.len() as u32,
            values: rows.iter().flat_map(|r| r.chars().map(|c| if c == '#' { 1.0 } else { 0.0 })).collect(),
        }
    }

    #[test]
    fn picks_the_bigger_blob() {
        let g = grid(&["#...", "..##", "..#.", "#..."]);
        assert_eq!(largest_cluster(&g, 0.05), Some((2, 1, 3, 2)));
    }

    #[test]
    fn diagonal_cells_are_separate() {
        let g = grid(&["#.", ".#"]);
        assert_eq!(largest_cluster(&g, 0.05), Some((0, 0, 0, 0)));
        assert_eq!(largest_cluster(&grid(&["..", ".."]), 0.05), None);
    }

    #[test]
    fn cells_scale_to_pixels() {
        let r = cells_to_pixels((2, 1, 3, 2), 16, 10, 320, 200);
        assert_eq!(r, CropRect { x: 40, y: 20, width: 40, height: 40 });
        let odd = cells_to_pixels((0, 0, 15, 9), 16, 10, 333, 201);
        assert_eq!(odd, CropRect::full(333, 201));
    }
}
