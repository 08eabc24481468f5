//! Connected-component labelling over boolean masks.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

/// Bounding box (inclusive) and pixel count of one connected component.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Component {
    pub min_x: u32,
    pub min_y: u32,
    pub max_x: u32,
    pub max_y: u32,
    pub area: u32,
}

impl Component {
    pub fn width(&self) -> u32 {
        self.max_x - self.min_x + 1
    }

    pub fn height(&self) -> u32 {
        self.max_y - self.min_y + 1
    }

    pub fn box_area(&self) -> u32 {
        self.width() * self.height()
    }

    /// Fraction of the bounding box covered by the component's pixels.
    pub fn fill_ratio(&self) -> f64 {
        self.area as f64 / self.box_area() as f64
    }
}

/// Components in raster order of their first pixel.
///
/// # Panics
/// If `mask.len() != width * height`.
pub fn label_components(width: u32, height: u32, mask: &[bool], connectivity: Connectivity) -> Vec<Component> {
    let (w, h) = (width as usize, height as usize);
    assert_eq!(mask.len(), w * h, "mask size does not match dimensions");
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut comp = Component {
            min_x: u32::MAX,
            min_y: u32::MAX,
            max_x: 0,
            max_y: 0,
            area: 0,
        };
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            comp.area += 1;
            comp.min_x = comp.min_x.min(x as u32);
            comp.max_x = comp.max_x.max(x as u32);
            comp.min_y = comp.min_y.min(y as u32);
            comp.max_y = comp.max_y.max(y as u32);
            let mut visit = |nx: usize, ny: usize| {
                let j = ny * w + nx;
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            let (x0, x1) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (y0, y1) = (y.saturating_sub(1), (y + 1).min(h - 1));
            for ny in y0..=y1 {
                for nx in x0..=x1 {
                    let diagonal = nx != x && ny != y;
                    if (nx, ny) == (x, y) || (diagonal && connectivity == Connectivity::Four) {
                        continue;
                    }
                    visit(nx, ny);
                }
            }
        }
        out.push(comp);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(rows: &[&str]) -> (u32, u32, Vec<bool>) {
        let h = rows.len() as u32;
        let w = rows[0].len() as u32;
        let m = rows.iter().flat_map(|r| r.chars().map(|c| c == '#')).collect();
        (w, h, m)
    }

    #[test]
    fn diagonal_touch_depends_on_connectivity() {
        let (w, h, m) = mask_from(&["#..", ".#.", "..#"]);
        assert_eq!(label_components(w, h, &m, Connectivity::Eight).len(), 1);
        assert_eq!(label_components(w, h, &m, Connectivity::Four).len(), 3);
    }

    #[test]
    fn boxes_and_areas() {
        let (w, h, m) = mask_from(&["##....", "##..#.", "....##", "......"]);
        let comps = label_components(w, h, &m, Connectivity::Four);
        assert_eq!(comps.len(), 2);
        assert_eq!(
            comps[0],
            Component {
                min_x: 0,
                min_y: 0,
                max_x: 1,
                max_y: 1,
                area: 4
            }
        );
        assert_eq!((comps[1].min_x, comps[1].min_y, comps[1].max_x, comps[1].max_y), (4, 1, 5, 2));
        assert_eq!(comps[1].area, 3);
        assert!((comps[1].fill_ratio() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn empty_mask() {
        assert!(label_components(3, 2, &[false; 6], Connectivity::Eight).is_empty());
    }
}
