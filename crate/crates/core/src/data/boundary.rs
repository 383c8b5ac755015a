use ndarray::Array2;

use crate::image_ops::{dilate, edge_map, square_offsets};
use crate::map::Mask;

/// Ground truth split into a thin boundary band and the remaining interior.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundaryLabel {
    pub boundary: Mask,
    pub content: Mask,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryParams {
    /// Hysteresis thresholds on the 0–255 scale.
    pub low: f32,
    pub high: f32,
    pub dilate_radius: usize,
}

impl Default for BoundaryParams {
    fn default() -> Self {
        Self {
            low: 100.0,
            high: 200.0,
            dilate_radius: 2,
        }
    }
}

/// Edge-detects `gt`, grows the edges by a square of `dilate_radius` and keeps
/// the part inside the foreground; the rest of the foreground is content.
pub fn decouple_boundary(gt: &Mask, params: BoundaryParams) -> BoundaryLabel {
    let gray: Array2<f32> = gt.as_array().mapv(|b| if b { 255.0 } else { 0.0 });
    let edges = edge_map(&gray, params.low, params.high);
    let band = Mask::new(dilate(&edges, &square_offsets(params.dilate_radius)));
    let boundary = band.and(gt);
    let content = gt.and_not(&boundary);
    BoundaryLabel { boundary, content }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: usize, y0: usize, x0: usize, side: usize) -> Mask {
        Mask::new(Array2::from_shape_fn((n, n), |(y, x)| {
            (y0..y0 + side).contains(&y) && (x0..x0 + side).contains(&x)
        }))
    }

    #[test]
    fn empty_gt_gives_empty_labels() {
        let gt = Mask::zeros(16, 16);
        let label = decouple_boundary(&gt, BoundaryParams::default());
        assert!(label.boundary.is_empty());
        assert!(label.content.is_empty());
    }

    #[test]
    fn square_boundary_is_grown_perimeter_ring() {
        let gt = square(32, 11, 9, 10);
        let params = BoundaryParams {
            dilate_radius: 1,
            ..Default::default()
        };
        let label = decouple_boundary(&gt, params);

        // Oracle: perimeter ring = foreground pixels with a background
        // 8-neighbour; grow by one pixel in the Chebyshev sense; clip to gt.
        let g = gt.as_array();
        let fg = |y: isize, x: isize| {
            y >= 0 && x >= 0 && y < 32 && x < 32 && g[[y as usize, x as usize]]
        };
        let mut ring = Array2::from_elem((32, 32), false);
        for y in 0..32isize {
            for x in 0..32isize {
                if !fg(y, x) {
                    continue;
                }
                let mut edge = false;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        if !fg(y + dy, x + dx) {
                            edge = true;
                        }
                    }
                }
                ring[[y as usize, x as usize]] = edge;
            }
        }
        let mut expected = Array2::from_elem((32, 32), false);
        for y in 0..32isize {
            for x in 0..32isize {
                let mut hit = false;
                for dy in -1..=1isize {
                    for dx in -1..=1isize {
                        let (yy, xx) = (y + dy, x + dx);
                        if yy >= 0
                            && xx >= 0
                            && yy < 32
                            && xx < 32
                            && ring[[yy as usize, xx as usize]]
                        {
                            hit = true;
                        }
                    }
                }
                expected[[y as usize, x as usize]] = hit && fg(y, x);
            }
        }
        assert_eq!(label.boundary.as_array(), &expected);
        // A 10×10 square keeps a 6×6 core.
        assert_eq!(label.content.count(), 36);
    }
}
