use std::collections::VecDeque;

use image::RgbImage;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{Mask, SaliencyMap};

/// Inclusive pixel box `(x0, y0)`–`(x1, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxPrompt {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BoxPrompt {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }

    pub fn area(&self) -> usize {
        (self.x1 - self.x0 + 1) * (self.y1 - self.y0 + 1)
    }
}

/// One 8-connected foreground component.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub bbox: BoxPrompt,
    pub area: usize,
    /// `(x, y)` mean pixel position.
    pub centroid: (f64, f64),
}

/// `[coarse > threshold]`.
pub fn binarize(coarse: &SaliencyMap, threshold: f32) -> Mask {
    coarse.threshold(threshold)
}

/// All 8-connected components in raster order of their first pixel.
pub fn connected_components(mask: &Mask) -> Vec<Component> {
    let m = mask.as_array();
    let (h, w) = m.dim();
    let mut seen = Array2::from_elem((h, w), false);
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for ((y, x), &fg) in m.indexed_iter() {
        if !fg || seen[[y, x]] {
            continue;
        }
        seen[[y, x]] = true;
        queue.push_back((y, x));
        let mut bbox = BoxPrompt {
            x0: x,
            y0: y,
            x1: x,
            y1: y,
        };
        let (mut area, mut sx, mut sy) = (0usize, 0.0, 0.0);
        while let Some((cy, cx)) = queue.pop_front() {
            area += 1;
            sx += cx as f64;
            sy += cy as f64;
            bbox.x0 = bbox.x0.min(cx);
            bbox.x1 = bbox.x1.max(cx);
            bbox.y0 = bbox.y0.min(cy);
            bbox.y1 = bbox.y1.max(cy);
            for ny in cy.saturating_sub(1)..=(cy + 1).min(h - 1) {
                for nx in cx.saturating_sub(1)..=(cx + 1).min(w - 1) {
                    if m[[ny, nx]] && !seen[[ny, nx]] {
                        seen[[ny, nx]] = true;
                        queue.push_back((ny, nx));
                    }
                }
            }
        }
        out.push(Component {
            bbox,
            area,
            centroid: (sx / area as f64, sy / area as f64),
        });
    }
    out
}

/// Components of at least `min_area` pixels, largest first (ties keep raster order).
fn kept_components(mask: &Mask, min_area: usize) -> Vec<Component> {
    let mut comps: Vec<Component> = connected_components(mask)
        .into_iter()
        .filter(|c| c.area >= min_area)
        .collect();
    comps.sort_by(|a, b| b.area.cmp(&a.area));
    comps
}

/// Tight boxes around components of at least `min_area` pixels, largest first.
pub fn extract_boxes(mask: &Mask, min_area: usize) -> Vec<BoxPrompt> {
    kept_components(mask, min_area)
        .into_iter()
        .map(|c| c.bbox)
        .collect()
}

/// Pixel count corresponding to a fraction of a `dim`-sized map, at least 1.
pub fn min_area_for(dim: (usize, usize), frac: f64) -> usize {
    ((dim.0 * dim.1) as f64 * frac).ceil().max(1.0) as usize
}

/// Mask, box and point prompts in coarse-map coordinates, plus the image the
/// segmenter should look at.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridPrompt {
    pub mask: Mask,
    pub boxes: Vec<BoxPrompt>,
    /// Component centroids `(x, y)`, in the same order as `boxes`.
    pub points: Vec<(f64, f64)>,
    pub image: RgbImage,
}

pub fn build_prompts(
    coarse: &SaliencyMap,
    image: &RgbImage,
    threshold: f32,
    min_area: usize,
) -> Result<HybridPrompt> {
    let mask = binarize(coarse, threshold);
    let comps = kept_components(&mask, min_area);
    if comps.is_empty() {
        return Err(Error::EmptyPrompt);
    }
    Ok(HybridPrompt {
        boxes: comps.iter().map(|c| c.bbox).collect(),
        points: comps.iter().map(|c| c.centroid).collect(),
        mask,
        image: image.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solid_block_box() {
        let mask = Mask::new(Array2::from_shape_fn((10, 10), |(y, x)| {
            (2..=5).contains(&y) && (3..=7).contains(&x)
        }));
        assert_eq!(
            extract_boxes(&mask, 1),
            vec![BoxPrompt {
                x0: 3,
                y0: 2,
                x1: 7,
                y1: 5
            }]
        );
        assert!(extract_boxes(&Mask::zeros(5, 5), 1).is_empty());
    }

    #[test]
    fn diagonal_pixels_are_connected() {
        let mut m = Array2::from_elem((4, 4), false);
        m[[0, 0]] = true;
        m[[1, 1]] = true;
        m[[3, 3]] = true;
        let comps = connected_components(&Mask::new(m));
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].area, 2);
    }

    #[test]
    fn uniform_low_map_is_empty_prompt() {
        let coarse = SaliencyMap::filled(8, 8, 0.3);
        let img = RgbImage::new(8, 8);
        assert!(matches!(
            build_prompts(&coarse, &img, 0.5, 1),
            Err(Error::EmptyPrompt)
        ));
    }
}
