//! Low-level raster operations: resampling, morphology, edge detection and the
//! Euclidean distance transform.

use std::collections::VecDeque;

use image::RgbImage;
use ndarray::{Array2, Array3};

/// Two-tap linear interpolation weights for one output coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearTaps {
    pub i0: usize,
    pub i1: usize,
    pub w0: f32,
    pub w1: f32,
}

/// Interpolation taps mapping `in_len` samples onto `out_len` samples with
/// half-pixel centers and no corner alignment (source coordinates below zero
/// are clamped to zero, the last sample is replicated at the far edge).
pub fn bilinear_taps(in_len: usize, out_len: usize) -> Vec<LinearTaps> {
    assert!(in_len > 0 && out_len > 0, "resampling needs non-empty axes");
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|dst| {
            let src = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = if i0 + 1 < in_len { i0 + 1 } else { i0 };
            let w1 = (src - i0 as f64) as f32;
            let w1 = if i1 == i0 { 0.0 } else { w1 };
            LinearTaps {
                i0,
                i1,
                w0: 1.0 - w1,
                w1,
            }
        })
        .collect()
}

/// Dense `out_len × in_len` interpolation matrix built from [`bilinear_taps`].
pub fn bilinear_matrix(in_len: usize, out_len: usize) -> Array2<f32> {
    let mut m = Array2::zeros((out_len, in_len));
    for (row, t) in bilinear_taps(in_len, out_len).into_iter().enumerate() {
        m[[row, t.i0]] += t.w0;
        m[[row, t.i1]] += t.w1;
    }
    m
}

pub fn resize_bilinear(src: &Array2<f32>, height: usize, width: usize) -> Array2<f32> {
    let (h, w) = src.dim();
    let ty = bilinear_taps(h, height);
    let tx = bilinear_taps(w, width);
    Array2::from_shape_fn((height, width), |(y, x)| {
        let (a, b) = (ty[y], tx[x]);
        a.w0 * (b.w0 * src[[a.i0, b.i0]] + b.w1 * src[[a.i0, b.i1]])
            + a.w1 * (b.w0 * src[[a.i1, b.i0]] + b.w1 * src[[a.i1, b.i1]])
    })
}

/// Bilinear resize of an RGB image into a channels-first float array on the
/// original 0–255 scale.
pub fn resize_rgb_bilinear(img: &RgbImage, height: usize, width: usize) -> Array3<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let ty = bilinear_taps(h, height);
    let tx = bilinear_taps(w, width);
    let px = |y: usize, x: usize, c: usize| img.get_pixel(x as u32, y as u32)[c] as f32;
    Array3::from_shape_fn((3, height, width), |(c, y, x)| {
        let (a, b) = (ty[y], tx[x]);
        a.w0 * (b.w0 * px(a.i0, b.i0, c) + b.w1 * px(a.i0, b.i1, c))
            + a.w1 * (b.w0 * px(a.i1, b.i0, c) + b.w1 * px(a.i1, b.i1, c))
    })
}

/// Nearest-neighbour resize using `floor(dst * in / out)` source indices.
pub fn resize_nearest<T: Clone>(src: &Array2<T>, height: usize, width: usize) -> Array2<T> {
    let (h, w) = src.dim();
    Array2::from_shape_fn((height, width), |(y, x)| {
        let sy = ((y * h) / height).min(h - 1);
        let sx = ((x * w) / width).min(w - 1);
        src[[sy, sx]].clone()
    })
}

/// Offsets of a `(2r+1)²` square structuring element.
pub fn square_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dy, dx)))
        .collect()
}

/// Offsets of a Euclidean disk, `dy² + dx² ≤ r²`.
pub fn disk_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    square_offsets(radius)
        .into_iter()
        .filter(|(dy, dx)| dy * dy + dx * dx <= r * r)
        .collect()
}

fn neighbourhood_fold<T: Copy>(
    src: &Array2<T>,
    offsets: &[(isize, isize)],
    init: T,
    fold: impl Fn(T, T) -> T,
) -> Array2<T> {
    let (h, w) = src.dim();
    Array2::from_shape_fn((h, w), |(y, x)| {
        offsets.iter().fold(init, |acc, &(dy, dx)| {
            let (yy, xx) = (y as isize + dy, x as isize + dx);
            if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                acc
            } else {
                fold(acc, src[[yy as usize, xx as usize]])
            }
        })
    })
}

/// Binary dilation; pixels outside the raster never contribute.
pub fn dilate(mask: &Array2<bool>, offsets: &[(isize, isize)]) -> Array2<bool> {
    neighbourhood_fold(mask, offsets, false, |a, b| a || b)
}

/// Gray-level dilation (max filter).
pub fn max_filter(map: &Array2<f32>, offsets: &[(isize, isize)]) -> Array2<f32> {
    neighbourhood_fold(map, offsets, f32::NEG_INFINITY, f32::max)
}

/// Gray-level erosion (min filter).
pub fn min_filter(map: &Array2<f32>, offsets: &[(isize, isize)]) -> Array2<f32> {
    neighbourhood_fold(map, offsets, f32::INFINITY, f32::min)
}

/// Gray-level closing: dilation followed by erosion with the same element.
pub fn closing(map: &Array2<f32>, offsets: &[(isize, isize)]) -> Array2<f32> {
    min_filter(&max_filter(map, offsets), offsets)
}

/// Gradient-based edge detector on a 0–255 gray raster: 3×3 Sobel gradients
/// with replicated borders, L1 magnitude, non-maximum suppression along the
/// quantized gradient direction and hysteresis between `low` and `high`.
///
/// Suppression is non-strict, so both pixels flanking a sharp binary step
/// survive.
pub fn edge_map(gray: &Array2<f32>, low: f32, high: f32) -> Array2<bool> {
    let (h, w) = gray.dim();
    if h == 0 || w == 0 {
        return Array2::from_elem((h, w), false);
    }
    let at = |y: isize, x: isize| {
        let yy = y.clamp(0, h as isize - 1) as usize;
        let xx = x.clamp(0, w as isize - 1) as usize;
        gray[[yy, xx]]
    };
    let mut gx = Array2::<f32>::zeros((h, w));
    let mut gy = Array2::<f32>::zeros((h, w));
    for y in 0..h as isize {
        for x in 0..w as isize {
            gx[[y as usize, x as usize]] =
                (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1))
                    - (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
            gy[[y as usize, x as usize]] =
                (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1))
                    - (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
        }
    }
    let mag = Array2::from_shape_fn((h, w), |i| gx[i].abs() + gy[i].abs());
    let mag_at = |y: isize, x: isize| {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            mag[[y as usize, x as usize]]
        }
    };

    // tan(22.5°) and tan(67.5°)
    const TAN_LO: f32 = 0.414_213_57;
    const TAN_HI: f32 = 2.414_213_6;
    let mut kept = Array2::<f32>::zeros((h, w));
    for y in 0..h {
        for x in 0..w {
            let m = mag[[y, x]];
            if m <= low {
                continue;
            }
            let (dx, dy) = (gx[[y, x]], gy[[y, x]]);
            let (ax, ay) = (dx.abs(), dy.abs());
            let (oy, ox) = if ay <= TAN_LO * ax {
                (0, 1)
            } else if ay >= TAN_HI * ax {
                (1, 0)
            } else if dx * dy > 0.0 {
                (1, 1)
            } else {
                (1, -1)
            };
            let (yi, xi) = (y as isize, x as isize);
            if m >= mag_at(yi + oy, xi + ox) && m >= mag_at(yi - oy, xi - ox) {
                kept[[y, x]] = m;
            }
        }
    }

    let mut edges = Array2::from_elem((h, w), false);
    let mut queue = VecDeque::new();
    for ((y, x), &m) in kept.indexed_iter() {
        if m > high {
            edges[[y, x]] = true;
            queue.push_back((y, x));
        }
    }
    while let Some((y, x)) = queue.pop_front() {
        for (dy, dx) in square_offsets(1) {
            let (yy, xx) = (y as isize + dy, x as isize + dx);
            if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                continue;
            }
            let (yy, xx) = (yy as usize, xx as usize);
            if !edges[[yy, xx]] && kept[[yy, xx]] > low {
                edges[[yy, xx]] = true;
                queue.push_back((yy, xx));
            }
        }
    }
    edges
}

/// Exact Euclidean distance from every pixel to the nearest foreground pixel,
/// together with the coordinates of that pixel.
#[derive(Clone, Debug)]
pub struct DistanceTransform {
    pub distance: Array2<f64>,
    pub nearest: Array2<(usize, usize)>,
}

/// Two-pass lower-envelope distance transform. Returns `None` when the mask
/// has no foreground.
pub fn distance_transform(fg: &Array2<bool>) -> Option<DistanceTransform> {
    let (h, w) = fg.dim();
    if !fg.iter().any(|&b| b) {
        return None;
    }

    // Column pass: nearest foreground row within each column.
    let mut col_near: Array2<Option<usize>> = Array2::from_elem((h, w), None);
    for x in 0..w {
        let mut last = None;
        for y in 0..h {
            if fg[[y, x]] {
                last = Some(y);
            }
            col_near[[y, x]] = last;
        }
        let mut next = None;
        for y in (0..h).rev() {
            if fg[[y, x]] {
                next = Some(y);
            }
            col_near[[y, x]] = match (col_near[[y, x]], next) {
                (Some(a), Some(b)) => Some(if y - a <= b - y { a } else { b }),
                (a, b) => a.or(b),
            };
        }
    }

    let mut distance = Array2::zeros((h, w));
    let mut nearest = Array2::from_elem((h, w), (0, 0));
    let mut sites: Vec<usize> = Vec::with_capacity(w);
    let mut bounds: Vec<f64> = Vec::with_capacity(w + 1);
    for y in 0..h {
        let height = |x: usize| -> f64 {
            let r = col_near[[y, x]].expect("site column has a foreground row");
            let d = y as f64 - r as f64;
            d * d
        };
        sites.clear();
        bounds.clear();
        for q in (0..w).filter(|&x| col_near[[y, x]].is_some()) {
            let fq = height(q) + (q * q) as f64;
            loop {
                match sites.last() {
                    None => {
                        sites.push(q);
                        bounds.push(f64::NEG_INFINITY);
                        break;
                    }
                    Some(&v) => {
                        let s = (fq - (height(v) + (v * v) as f64)) / (2.0 * (q as f64 - v as f64));
                        if s <= *bounds.last().expect("bounds track sites") {
                            sites.pop();
                            bounds.pop();
                        } else {
                            sites.push(q);
                            bounds.push(s);
                            break;
                        }
                    }
                }
            }
        }
        let mut k = 0;
        for x in 0..w {
            while k + 1 < sites.len() && bounds[k + 1] < x as f64 {
                k += 1;
            }
            let v = sites[k];
            let dx = x as f64 - v as f64;
            distance[[y, x]] = (dx * dx + height(v)).sqrt();
            nearest[[y, x]] = (col_near[[y, v]].expect("site"), v);
        }
    }
    Some(DistanceTransform { distance, nearest })
}

/// Normalized `size × size` Gaussian kernel.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Array2<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let mut k = Array2::from_shape_fn((size, size), |(y, x)| {
        let (dy, dx) = (y as f64 - c, x as f64 - c);
        (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
    });
    let total = k.sum();
    k.mapv_inplace(|v| v / total);
    k
}

/// Same-size correlation with zero padding.
pub fn correlate_zero_pad(src: &Array2<f64>, kernel: &Array2<f64>) -> Array2<f64> {
    let (h, w) = src.dim();
    let (kh, kw) = kernel.dim();
    let (cy, cx) = ((kh / 2) as isize, (kw / 2) as isize);
    Array2::from_shape_fn((h, w), |(y, x)| {
        let mut acc = 0.0;
        for ky in 0..kh {
            let yy = y as isize + ky as isize - cy;
            if yy < 0 || yy >= h as isize {
                continue;
            }
            for kx in 0..kw {
                let xx = x as isize + kx as isize - cx;
                if xx < 0 || xx >= w as isize {
                    continue;
                }
                acc += kernel[[ky, kx]] * src[[yy as usize, xx as usize]];
            }
        }
        acc
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn taps_reproduce_half_pixel_upsampling() {
        let taps = bilinear_taps(2, 4);
        let w1: Vec<f32> = taps.iter().map(|t| t.w1).collect();
        assert_eq!(taps[0].i0, 0);
        assert_eq!(taps[3].i0, 1);
        assert_eq!(w1, vec![0.0, 0.25, 0.75, 0.0]);
    }

    #[test]
    fn identity_resize_is_exact() {
        let src = array![[0.1f32, 0.2, 0.3], [0.4, 0.5, 0.6]];
        assert_eq!(resize_bilinear(&src, 2, 3), src);
    }

    #[test]
    fn matrix_rows_sum_to_one() {
        let m = bilinear_matrix(7, 19);
        for row in m.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let mut fg = Array2::from_elem((9, 11), false);
        fg[[1, 2]] = true;
        fg[[7, 9]] = true;
        fg[[4, 5]] = true;
        let dt = distance_transform(&fg).unwrap();
        for ((y, x), &d) in dt.distance.indexed_iter() {
            let brute = fg
                .indexed_iter()
                .filter(|(_, &b)| b)
                .map(|((py, px), _)| {
                    ((py as f64 - y as f64).powi(2) + (px as f64 - x as f64).powi(2)).sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            assert!((d - brute).abs() < 1e-12, "({y},{x}): {d} vs {brute}");
            let (ny, nx) = dt.nearest[[y, x]];
            assert!(fg[[ny, nx]]);
            let dn = ((ny as f64 - y as f64).powi(2) + (nx as f64 - x as f64).powi(2)).sqrt();
            assert!((dn - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_mask_has_no_distance_transform() {
        assert!(distance_transform(&Array2::from_elem((3, 3), false)).is_none());
    }

    #[test]
    fn gaussian_kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(7, 5.0);
        assert!((k.sum() - 1.0).abs() < 1e-12);
        assert_eq!(k[[0, 0]], k[[6, 6]]);
        assert!(k[[3, 3]] > k[[0, 3]]);
    }

    #[test]
    fn closing_fills_small_holes() {
        let mut map = Array2::from_elem((7, 7), 1.0f32);
        map[[3, 3]] = 0.0;
        let closed = closing(&map, &disk_offsets(1));
        assert_eq!(closed[[3, 3]], 1.0);
    }

    #[test]
    fn edges_of_a_step_flank_both_sides() {
        let gray = Array2::from_shape_fn((5, 6), |(_, x)| if x >= 3 { 255.0 } else { 0.0 });
        let e = edge_map(&gray, 100.0, 200.0);
        for y in 0..5 {
            let row: Vec<bool> = (0..6).map(|x| e[[y, x]]).collect();
            assert_eq!(row, vec![false, false, true, true, false, false]);
        }
    }
}
