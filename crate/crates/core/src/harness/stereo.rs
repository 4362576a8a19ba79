//! Random-dot stereogram generator.
//!
//! A scene is a stack of fronto-parallel layers: a textured background at
//! disparity `d_bg` and `n_objects` rectangular or elliptical patches at
//! distinct larger integer disparities. Every layer carries its own dot
//! texture in layer coordinates, so a surface point visible in both views
//! has identical colour in both. Pixels of the right view that the left
//! view never saw show texture drawn independently of anything visible on
//! the left.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Side length of the square texture dots, in pixels.
pub const DOT_SIZE: usize = 2;

/// Spatial dims must be multiples of this.
pub const SAMPLE_MULTIPLE: usize = 64;

#[derive(Clone, Debug)]
pub struct MatchSample {
    pub height: usize,
    pub width: usize,
    /// `(1,3,H,W)`, values in `[0,1]`.
    pub left: Tensor<f32>,
    pub right: Tensor<f32>,
    /// Left-view disparity in pixels, row-major `H*W`.
    pub gt_disparity: Vec<f32>,
    /// Pixels where a foreground object is visible in the left view.
    pub object_mask: Vec<bool>,
    /// Pixels whose match is visible in the right view.
    pub valid_mask: Vec<bool>,
    pub background_disparity: usize,
}

#[derive(Clone, Copy, Debug)]
enum Patch {
    Rect { y0: f64, x0: f64, y1: f64, x1: f64 },
    Ellipse { cy: f64, cx: f64, ry: f64, rx: f64 },
}

impl Patch {
    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Patch::Rect { y0, x0, y1, x1 } => y >= y0 && y < y1 && x >= x0 && x < x1,
            Patch::Ellipse { cy, cx, ry, rx } => {
                let (dy, dx) = ((y - cy) / ry, (x - cx) / rx);
                dy * dy + dx * dx <= 1.0
            }
        }
    }
}

struct Layer {
    disparity: usize,
    patch: Option<Patch>,
    /// Dot colours, `3 x rows x cols` in dot units.
    dots: Vec<f32>,
    rows: usize,
    cols: usize,
}

impl Layer {
    /// Colour of channel `c` at left-view coordinates `(y, u)`.
    fn colour(&self, c: usize, y: usize, u: usize) -> f32 {
        let (r, q) = (y / DOT_SIZE, u / DOT_SIZE);
        self.dots[(c * self.rows + r) * self.cols + q]
    }

    fn covers(&self, y: usize, u: usize) -> bool {
        self.patch.is_none_or(|p| p.contains(y as f64 + 0.5, u as f64 + 0.5))
    }
}

pub fn check_sample_params(h: usize, w: usize, n_objects: usize, d_max: usize) -> Result<()> {
    if h == 0 || w == 0 || !h.is_multiple_of(SAMPLE_MULTIPLE) || !w.is_multiple_of(SAMPLE_MULTIPLE) {
        return Err(Error::InvalidShape(format!(
            "sample size {h}x{w} must be a positive multiple of {SAMPLE_MULTIPLE}"
        )));
    }
    if d_max == 0 || d_max > w / 4 {
        return Err(Error::config(
            "d_max",
            format!("need 1 <= d_max <= w/4 = {}, got {d_max}", w / 4),
        ));
    }
    if n_objects >= d_max {
        return Err(Error::config(
            "n_objects",
            format!(
                "{n_objects} objects need {} distinct disparities below d_max = {d_max}",
                n_objects + 1
            ),
        ));
    }
    Ok(())
}

/// Draws one stereo pair with ground truth. Deterministic per `seed`.
pub fn generate_sample(h: usize, w: usize, n_objects: usize, d_max: usize, seed: u64) -> Result<MatchSample> {
    check_sample_params(h, w, n_objects, d_max)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Background leaves room for n_objects larger disparities below d_max.
    let d_bg = rng.random_range(0..d_max - n_objects);
    let mut pool: Vec<usize> = (d_bg + 1..d_max).collect();
    let mut disparities = Vec::with_capacity(n_objects);
    for _ in 0..n_objects {
        disparities.push(pool.swap_remove(rng.random_range(0..pool.len())));
    }
    disparities.sort_unstable();

    let rows = h.div_ceil(DOT_SIZE);
    let cols = (w + d_max).div_ceil(DOT_SIZE);
    let texture = |rng: &mut ChaCha8Rng| -> Vec<f32> { (0..3 * rows * cols).map(|_| rng.random::<f32>()).collect() };
    let mut layers = vec![Layer {
        disparity: d_bg,
        patch: None,
        dots: texture(&mut rng),
        rows,
        cols,
    }];
    let (hf, wf) = (h as f64, w as f64);
    for &disparity in &disparities {
        let ry = rng.random_range(hf / 8.0..hf / 3.0);
        let rx = rng.random_range(wf / 16.0..wf / 5.0);
        let cy = rng.random_range(0.0..hf);
        let cx = rng.random_range(0.0..wf);
        let patch = if rng.random_bool(0.5) {
            Patch::Rect {
                y0: cy - ry,
                x0: cx - rx,
                y1: cy + ry,
                x1: cx + rx,
            }
        } else {
            Patch::Ellipse { cy, cx, ry, rx }
        };
        layers.push(Layer {
            disparity,
            patch: Some(patch),
            dots: texture(&mut rng),
            rows,
            cols,
        });
    }

    let plane = h * w;
    let mut left = vec![0f32; 3 * plane];
    let mut right = vec![0f32; 3 * plane];
    let mut gt = vec![0f32; plane];
    let mut object_mask = vec![false; plane];
    let mut valid_mask = vec![false; plane];
    // Frontmost layer covering a pixel of the left or right view.
    let top = |y: usize, x: usize, right_view: bool| -> usize {
        (0..layers.len())
            .rev()
            .find(|&k| {
                let u = if right_view { x + layers[k].disparity } else { x };
                layers[k].covers(y, u)
            })
            .expect("background covers everything")
    };
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let k = top(y, x, false);
            let d = layers[k].disparity;
            gt[p] = d as f32;
            object_mask[p] = k > 0;
            valid_mask[p] = x >= d && top(y, x - d, true) == k;
            let kr = top(y, x, true);
            let ur = x + layers[kr].disparity;
            for c in 0..3 {
                left[c * plane + p] = layers[k].colour(c, y, x);
                right[c * plane + p] = layers[kr].colour(c, y, ur);
            }
        }
    }
    let shape = Shape::new(1, 3, h, w)?;
    Ok(MatchSample {
        height: h,
        width: w,
        left: Tensor::from_vec(shape, left)?,
        right: Tensor::from_vec(shape, right)?,
        gt_disparity: gt,
        object_mask,
        valid_mask,
        background_disparity: d_bg,
    })
}

/// Pixels where the object mask differs from a 4-neighbour.
pub fn boundary_pixels(mask: &[bool], h: usize, w: usize) -> Vec<bool> {
    let mut out = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let m = mask[y * w + x];
            out[y * w + x] = (y > 0 && mask[(y - 1) * w + x] != m)
                || (y + 1 < h && mask[(y + 1) * w + x] != m)
                || (x > 0 && mask[y * w + x - 1] != m)
                || (x + 1 < w && mask[y * w + x + 1] != m);
        }
    }
    out
}

/// Chebyshev distance of every pixel to the nearest boundary pixel, `None`
/// when the mask has no boundary.
pub fn boundary_distance(mask: &[bool], h: usize, w: usize) -> Vec<Option<usize>> {
    let boundary = boundary_pixels(mask, h, w);
    let mut dist: Vec<Option<usize>> = boundary.iter().map(|&b| b.then_some(0)).collect();
    let mut frontier: Vec<usize> = (0..h * w).filter(|&p| boundary[p]).collect();
    let mut level = 0;
    // 8-connected breadth-first search measures Chebyshev distance.
    while !frontier.is_empty() {
        level += 1;
        let mut next = Vec::new();
        for p in frontier {
            let (y, x) = ((p / w) as isize, (p % w) as isize);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (ny, nx) = (y + dy, x + dx);
                    if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                        continue;
                    }
                    let q = ny as usize * w + nx as usize;
                    if dist[q].is_none() {
                        dist[q] = Some(level);
                        next.push(q);
                    }
                }
            }
        }
        frontier = next;
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn background_only_is_flat() {
        let s = generate_sample(64, 128, 0, 24, 3).unwrap();
        assert!(s.gt_disparity.iter().all(|&d| d == s.background_disparity as f32));
        assert!(s.object_mask.iter().all(|&m| !m));
    }

    #[test]
    fn deterministic() {
        let a = generate_sample(64, 128, 3, 24, 11).unwrap();
        let b = generate_sample(64, 128, 3, 24, 11).unwrap();
        assert_eq!(a.left.data(), b.left.data());
        assert_eq!(a.right.data(), b.right.data());
        assert_eq!(a.gt_disparity, b.gt_disparity);
        let c = generate_sample(64, 128, 3, 24, 12).unwrap();
        assert_ne!(a.left.data(), c.left.data());
    }

    #[test]
    fn warp_reproduces_right_view() {
        for seed in 0..5 {
            let s = generate_sample(64, 128, 4, 24, seed).unwrap();
            let plane = 64 * 128;
            let mut checked = 0;
            for p in 0..plane {
                if !s.valid_mask[p] {
                    continue;
                }
                let q = p - s.gt_disparity[p] as usize;
                for c in 0..3 {
                    assert_eq!(s.left.data()[c * plane + p], s.right.data()[c * plane + q]);
                }
                checked += 1;
            }
            assert!(checked > plane / 2);
            assert!(s.gt_disparity.iter().all(|&d| d < 24.0));
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(matches!(generate_sample(64, 128, 1, 40, 0), Err(Error::Config { .. })));
        assert!(matches!(generate_sample(60, 128, 1, 8, 0), Err(Error::InvalidShape(_))));
        assert!(matches!(generate_sample(64, 128, 8, 8, 0), Err(Error::Config { .. })));
    }

    #[test]
    fn chebyshev_distances() {
        let (h, w) = (7, 7);
        let mut mask = vec![false; h * w];
        mask[3 * w + 3] = true;
        let d = boundary_distance(&mask, h, w);
        // Centre and its 4-neighbours are boundary pixels.
        assert_eq!(d[3 * w + 3], Some(0));
        assert_eq!(d[2 * w + 3], Some(0));
        assert_eq!(d[2 * w + 2], Some(1));
        assert_eq!(d[0], Some(3));
        assert!(boundary_distance(&[true; 9], 3, 3).iter().all(Option::is_none));
    }
}
