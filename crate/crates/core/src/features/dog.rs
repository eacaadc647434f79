//! Difference-of-Gaussians scale space and extremum detection.

use super::Keypoint;
use crate::error::{Error, Result};
use crate::imaging::{GrayImage, Plane};

/// Blur already present in a camera image.
const ASSUMED_BLUR: f32 = 0.5;
/// Octaves stop once the smaller side would fall below this.
const MIN_OCTAVE_SIDE: usize = 16;
/// Extrema closer than this to the octave border are ignored.
const DETECT_BORDER: usize = 5;

pub(crate) struct Octave {
    /// `intervals + 3` Gaussian images.
    pub gauss: Vec<Plane>,
    /// `intervals + 2` differences of consecutive Gaussians.
    pub dog: Vec<Plane>,
}

/// Per-octave Gaussian scale space on a [0, 1] intensity scale.
pub struct ScaleSpace {
    pub(crate) octaves: Vec<Octave>,
    pub intervals: usize,
    pub sigma0: f32,
}

impl ScaleSpace {
    pub fn n_octaves(&self) -> usize {
        self.octaves.len()
    }

    /// Blur of layer `layer` relative to its octave's pixel grid.
    pub fn layer_sigma(&self, layer: f32) -> f32 {
        self.sigma0 * 2f32.powf(layer / self.intervals as f32)
    }
}

pub fn build_scale_space(
    img: &GrayImage,
    intervals: usize,
    sigma0: f32,
    max_octaves: usize,
) -> Result<ScaleSpace> {
    if intervals == 0 || sigma0.is_nan() || sigma0 <= ASSUMED_BLUR || max_octaves == 0 {
        return Err(Error::InvalidParameter(format!(
            "scale space needs intervals >= 1, sigma0 > {ASSUMED_BLUR}, max_octaves >= 1"
        )));
    }
    let k = 2f32.powf(1.0 / intervals as f32);
    // incremental blur taking layer i-1 to layer i
    let steps: Vec<f32> = (1..intervals + 3)
        .map(|i| {
            let prev = sigma0 * k.powi(i as i32 - 1);
            let next = prev * k;
            (next * next - prev * prev).sqrt()
        })
        .collect();

    let mut octaves = Vec::new();
    let mut base = Plane::from_gray(img, 1.0 / 255.0)
        .gaussian_blur((sigma0 * sigma0 - ASSUMED_BLUR * ASSUMED_BLUR).sqrt());
    while octaves.len() < max_octaves && base.width.min(base.height) >= MIN_OCTAVE_SIDE {
        let mut gauss = Vec::with_capacity(intervals + 3);
        gauss.push(base);
        for s in &steps {
            let next = gauss.last().unwrap().gaussian_blur(*s);
            gauss.push(next);
        }
        let dog = gauss
            .windows(2)
            .map(|pair| Plane {
                width: pair[0].width,
                height: pair[0].height,
                data: pair[1]
                    .data
                    .iter()
                    .zip(&pair[0].data)
                    .map(|(b, a)| b - a)
                    .collect(),
            })
            .collect();
        // layer `intervals` has twice the base blur
        base = gauss[intervals].decimate();
        octaves.push(Octave { gauss, dog });
    }
    Ok(ScaleSpace {
        octaves,
        intervals,
        sigma0,
    })
}

fn is_extremum(dog: &[Plane], layer: usize, x: usize, y: usize) -> bool {
    let v = dog[layer].at(x, y);
    let (mut greater, mut smaller) = (true, true);
    for plane in &dog[layer - 1..=layer + 1] {
        for ny in y - 1..=y + 1 {
            for nx in x - 1..=x + 1 {
                if std::ptr::eq(plane, &dog[layer]) && (nx, ny) == (x, y) {
                    continue;
                }
                let o = plane.at(nx, ny);
                greater &= v > o;
                smaller &= v < o;
                if !greater && !smaller {
                    return false;
                }
            }
        }
    }
    greater || smaller
}

/// Local extrema of the difference of Gaussians over 3x3x3 neighbourhoods.
///
/// Points with `|D| < contrast_threshold` or with a principal-curvature ratio
/// above `edge_ratio` are dropped; survivors get one quadratic refinement step
/// in (x, y, scale). Keypoint coordinates are in octave pixels with
/// `level` set to the octave index.
pub fn detect_dog(space: &ScaleSpace, contrast_threshold: f32, edge_ratio: f32) -> Vec<Keypoint> {
    let edge_limit = (edge_ratio + 1.0) * (edge_ratio + 1.0) / edge_ratio;
    let mut out = Vec::new();
    for (o, octave) in space.octaves.iter().enumerate() {
        let dog = &octave.dog;
        let (w, h) = (dog[0].width, dog[0].height);
        if w <= 2 * DETECT_BORDER || h <= 2 * DETECT_BORDER {
            continue;
        }
        for layer in 1..=space.intervals {
            let d = &dog[layer];
            for y in DETECT_BORDER..h - DETECT_BORDER {
                for x in DETECT_BORDER..w - DETECT_BORDER {
                    let v = d.at(x, y);
                    if v.abs() < contrast_threshold || !is_extremum(dog, layer, x, y) {
                        continue;
                    }
                    let dxx = d.at(x + 1, y) + d.at(x - 1, y) - 2.0 * v;
                    let dyy = d.at(x, y + 1) + d.at(x, y - 1) - 2.0 * v;
                    let dxy = (d.at(x + 1, y + 1) - d.at(x + 1, y - 1) - d.at(x - 1, y + 1)
                        + d.at(x - 1, y - 1))
                        / 4.0;
                    let tr = dxx + dyy;
                    let det = dxx * dyy - dxy * dxy;
                    if det <= 0.0 || tr * tr / det > edge_limit {
                        continue;
                    }
                    let (offset, refined) = refine(dog, layer, x, y);
                    let s = layer as f32 + offset[2];
                    out.push(Keypoint {
                        x: x as f32 + offset[0],
                        y: y as f32 + offset[1],
                        level: o,
                        orientation: 0.0,
                        response: refined.abs(),
                        size: space.layer_sigma(s),
                    });
                }
            }
        }
    }
    out
}

/// One Newton step on the quadratic model of D around a sample. Offsets are
/// clamped to half a sample; a singular Hessian keeps the sample position.
fn refine(dog: &[Plane], layer: usize, x: usize, y: usize) -> ([f32; 3], f32) {
    let at = |l: usize, dx: isize, dy: isize| {
        dog[l].at((x as isize + dx) as usize, (y as isize + dy) as usize) as f64
    };
    let v = at(layer, 0, 0);
    let g = [
        (at(layer, 1, 0) - at(layer, -1, 0)) / 2.0,
        (at(layer, 0, 1) - at(layer, 0, -1)) / 2.0,
        (at(layer + 1, 0, 0) - at(layer - 1, 0, 0)) / 2.0,
    ];
    let dxx = at(layer, 1, 0) + at(layer, -1, 0) - 2.0 * v;
    let dyy = at(layer, 0, 1) + at(layer, 0, -1) - 2.0 * v;
    let dss = at(layer + 1, 0, 0) + at(layer - 1, 0, 0) - 2.0 * v;
    let dxy = (at(layer, 1, 1) - at(layer, 1, -1) - at(layer, -1, 1) + at(layer, -1, -1)) / 4.0;
    let dxs = (at(layer + 1, 1, 0) - at(layer + 1, -1, 0) - at(layer - 1, 1, 0)
        + at(layer - 1, -1, 0))
        / 4.0;
    let dys = (at(layer + 1, 0, 1) - at(layer + 1, 0, -1) - at(layer - 1, 0, 1)
        + at(layer - 1, 0, -1))
        / 4.0;
    let hess = [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]];
    let Some(inv) = invert3(&hess) else {
        return ([0.0; 3], v as f32);
    };
    let mut offset = [0f64; 3];
    for (r, slot) in offset.iter_mut().enumerate() {
        *slot = -(inv[r][0] * g[0] + inv[r][1] * g[1] + inv[r][2] * g[2]);
        *slot = slot.clamp(-0.5, 0.5);
    }
    let refined = v + 0.5 * (g[0] * offset[0] + g[1] * offset[1] + g[2] * offset[2]);
    (offset.map(|o| o as f32), refined as f32)
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    if det.abs() < 1e-18 {
        return None;
    }
    let inv_det = 1.0 / det;
    Some([
        [
            c00 * inv_det,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det,
        ],
        [
            c01 * inv_det,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det,
        ],
        [
            c02 * inv_det,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det,
        ],
    ])
}
