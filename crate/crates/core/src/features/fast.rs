//! FAST-9 segment-test corners.

use super::Keypoint;
use crate::imaging::GrayImage;

/// Radius-3 Bresenham circle, clockwise from 12 o'clock (y grows downward).
pub const FAST_CIRCLE: [(isize, isize); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

const ARC: usize = 9;

/// Segment test at (x, y). Returns the corner response, the sum of absolute
/// differences over the qualifying contiguous arc, or `None`.
///
/// (x, y) must be at least 3 pixels away from every border.
pub fn segment_test(img: &GrayImage, x: usize, y: usize, threshold: u8) -> Option<f32> {
    let p = img.get(x, y) as i32;
    let t = threshold as i32;
    let ring = |i: usize| {
        let (dx, dy) = FAST_CIRCLE[i];
        img.get((x as isize + dx) as usize, (y as isize + dy) as usize) as i32
    };

    // Any 9-arc covers at least two of the four compass points.
    let compass = [ring(0), ring(4), ring(8), ring(12)];
    let bright = compass.iter().filter(|&&v| v > p + t).count();
    let dark = compass.iter().filter(|&&v| v < p - t).count();
    if bright < 2 && dark < 2 {
        return None;
    }

    let values: [i32; 16] = std::array::from_fn(ring);
    // +1 brighter, -1 darker, 0 similar
    let state: [i8; 16] = std::array::from_fn(|i| {
        if values[i] > p + t {
            1
        } else if values[i] < p - t {
            -1
        } else {
            0
        }
    });

    for sign in [1i8, -1] {
        if state.iter().all(|&s| s == sign) {
            return Some(values.iter().map(|v| (v - p).abs()).sum::<i32>() as f32);
        }
        // Start right after a non-matching position so runs never wrap mid-way.
        let Some(start) = (0..16).find(|&i| state[i] != sign) else {
            continue;
        };
        let mut run = 0usize;
        let mut sum = 0i32;
        for step in 1..=16 {
            let i = (start + step) % 16;
            if state[i] == sign {
                run += 1;
                sum += (values[i] - p).abs();
            } else {
                if run >= ARC {
                    return Some(sum as f32);
                }
                run = 0;
                sum = 0;
            }
        }
    }
    None
}

/// FAST-9 corners at level 0. With `nms`, a corner survives only if no
/// 8-neighbour has a higher response (equal responses go to the earlier
/// pixel in raster order). Images smaller than 7x7 yield nothing.
pub fn detect_fast(img: &GrayImage, threshold: u8, nms: bool) -> Vec<Keypoint> {
    let (w, h) = (img.width(), img.height());
    if w < 7 || h < 7 {
        return Vec::new();
    }
    let threshold = threshold.max(1);
    let mut scores = vec![0f32; w * h];
    let mut corners = Vec::new();
    for y in 3..h - 3 {
        for x in 3..w - 3 {
            if let Some(r) = segment_test(img, x, y, threshold) {
                scores[y * w + x] = r;
                corners.push((x, y, r));
            }
        }
    }
    corners
        .into_iter()
        .filter(|&(x, y, r)| {
            if !nms {
                return true;
            }
            for ny in y - 1..=y + 1 {
                for nx in x - 1..=x + 1 {
                    if (nx, ny) == (x, y) {
                        continue;
                    }
                    let other = scores[ny * w + nx];
                    let earlier = (ny, nx) < (y, x);
                    if other > r || (other == r && other > 0.0 && earlier) {
                        return false;
                    }
                }
            }
            true
        })
        .map(|(x, y, r)| Keypoint {
            x: x as f32,
            y: y as f32,
            level: 0,
            orientation: 0.0,
            response: r,
            size: 3.0,
        })
        .collect()
}
