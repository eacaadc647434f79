//! Float family: DoG keypoints described by 4x4 spatial cells of 8-bin
//! gradient orientation histograms.

use std::f32::consts::TAU;

use super::dog::{build_scale_space, detect_dog};
use super::{
    normalize_angle, strongest, DescriptorKind, DescriptorSet, Extractor, FeatureSet, FloatParams,
    Keypoint,
};
use crate::error::{Error, Result};
use crate::imaging::{GrayImage, Plane};

pub const FLOAT_DIM: usize = 128;

const GRID: usize = 4;
const ORI_BINS: usize = 8;
const WINDOW: usize = 16;
const CLAMP: f32 = 0.2;
const HIST_BINS: usize = 36;
const HIST_RADIUS: isize = 8;
const HIST_SIGMA: f32 = 4.0;

/// Minimum distance from a keypoint to the level border: the rotated 16x16
/// window reaches 7.5 * sqrt(2) pixels, plus one for the gradient stencil
/// and one for bilinear interpolation.
pub const FLOAT_MARGIN: usize = 14;

/// 128 gradient-histogram components. The all-zero vector marks a degenerate
/// patch without gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloatDescriptor(pub [f32; FLOAT_DIM]);

impl FloatDescriptor {
    pub fn is_degenerate(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt()
    }
}

fn fits(plane: &Plane, x: f32, y: f32) -> bool {
    let m = FLOAT_MARGIN as f32;
    x >= m && y >= m && x <= (plane.width - 1) as f32 - m && y <= (plane.height - 1) as f32 - m
}

/// Peak of a magnitude-weighted 36-bin gradient orientation histogram over a
/// radius-8 disc, refined by a parabola through the peak and its neighbours.
/// Returns `None` when the neighbourhood has no gradient.
pub fn dominant_orientation(img: &GrayImage, kp: &Keypoint) -> Option<f32> {
    dominant_orientation_plane(&Plane::from_gray(img, 1.0), kp.x, kp.y)
}

pub(crate) fn dominant_orientation_plane(plane: &Plane, x: f32, y: f32) -> Option<f32> {
    let (cx, cy) = (x.round() as isize, y.round() as isize);
    let mut hist = [0f32; HIST_BINS];
    for dy in -HIST_RADIUS..=HIST_RADIUS {
        for dx in -HIST_RADIUS..=HIST_RADIUS {
            let r2 = (dx * dx + dy * dy) as f32;
            if r2 > (HIST_RADIUS * HIST_RADIUS) as f32 {
                continue;
            }
            let (px, py) = ((cx + dx) as usize, (cy + dy) as usize);
            let gx = plane.at(px + 1, py) - plane.at(px - 1, py);
            let gy = plane.at(px, py + 1) - plane.at(px, py - 1);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let weight = (-r2 / (2.0 * HIST_SIGMA * HIST_SIGMA)).exp();
            let angle = normalize_angle(gy.atan2(gx));
            let bin = ((angle / TAU * HIST_BINS as f32) as usize).min(HIST_BINS - 1);
            hist[bin] += weight * mag;
        }
    }
    // two passes of [1 1 1] / 3 circular smoothing
    for _ in 0..2 {
        let prev = hist;
        for i in 0..HIST_BINS {
            hist[i] = (prev[(i + HIST_BINS - 1) % HIST_BINS] + prev[i] + prev[(i + 1) % HIST_BINS])
                / 3.0;
        }
    }
    let (peak, &top) = hist
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))?;
    if top <= 0.0 {
        return None;
    }
    let left = hist[(peak + HIST_BINS - 1) % HIST_BINS];
    let right = hist[(peak + 1) % HIST_BINS];
    let denom = left - 2.0 * top + right;
    let shift = if denom < 0.0 {
        (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    Some(normalize_angle(
        (peak as f32 + 0.5 + shift) * TAU / HIST_BINS as f32,
    ))
}

/// Unit-normalizes, clamps every component at 0.2 and renormalizes. Returns
/// (clamped, final); a zero input is returned unchanged in both slots.
pub fn normalize_float_descriptor(raw: &[f32; FLOAT_DIM]) -> ([f32; FLOAT_DIM], [f32; FLOAT_DIM]) {
    let unit = |v: &[f32; FLOAT_DIM]| {
        let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
        if norm == 0.0 {
            *v
        } else {
            v.map(|x| (x as f64 / norm) as f32)
        }
    };
    let clamped = unit(raw).map(|x| x.min(CLAMP));
    (clamped, unit(&clamped))
}

/// Describes `kp` on an 8-bit image, with its orientation taken as given.
pub fn describe_float(img: &GrayImage, kp: &Keypoint) -> Result<FloatDescriptor> {
    let plane = Plane::from_gray(img, 1.0);
    if !fits(&plane, kp.x, kp.y) {
        return Err(Error::InvalidParameter(format!(
            "float patch at ({}, {}) leaves the {}x{} image",
            kp.x,
            kp.y,
            img.width(),
            img.height()
        )));
    }
    Ok(describe_plane(&plane, kp.x, kp.y, kp.orientation))
}

pub(crate) fn describe_plane(plane: &Plane, x: f32, y: f32, orientation: f32) -> FloatDescriptor {
    let (sin, cos) = orientation.sin_cos();
    let mut hist = [0f32; FLOAT_DIM];
    let half = WINDOW as f32 / 2.0;
    let sigma = half;
    for i in 0..WINDOW {
        for j in 0..WINDOW {
            // sample offset in the keypoint frame
            let u = j as f32 - (half - 0.5);
            let v = i as f32 - (half - 0.5);
            let sx = x + u * cos - v * sin;
            let sy = y + u * sin + v * cos;
            let gx = (plane.bilinear(sx + 1.0, sy) - plane.bilinear(sx - 1.0, sy)) * 0.5;
            let gy = (plane.bilinear(sx, sy + 1.0) - plane.bilinear(sx, sy - 1.0)) * 0.5;
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let weight = (-(u * u + v * v) / (2.0 * sigma * sigma)).exp();
            let rel = normalize_angle(gy.atan2(gx) - orientation);

            // continuous bin coordinates, cell centres at integers
            let bx = (u + half) / (WINDOW / GRID) as f32 - 0.5;
            let by = (v + half) / (WINDOW / GRID) as f32 - 0.5;
            let bo = rel / TAU * ORI_BINS as f32;
            let (x0, y0, o0) = (bx.floor(), by.floor(), bo.floor());
            let (fx, fy, fo) = (bx - x0, by - y0, bo - o0);
            for (cy, wy) in [(y0 as isize, 1.0 - fy), (y0 as isize + 1, fy)] {
                if !(0..GRID as isize).contains(&cy) {
                    continue;
                }
                for (cx, wx) in [(x0 as isize, 1.0 - fx), (x0 as isize + 1, fx)] {
                    if !(0..GRID as isize).contains(&cx) {
                        continue;
                    }
                    for (co, wo) in [(o0 as usize, 1.0 - fo), (o0 as usize + 1, fo)] {
                        let bin = (cy as usize * GRID + cx as usize) * ORI_BINS + co % ORI_BINS;
                        hist[bin] += weight * mag * wx * wy * wo;
                    }
                }
            }
        }
    }
    let (_, normalized) = normalize_float_descriptor(&hist);
    FloatDescriptor(normalized)
}

/// Float reference extractor.
#[derive(Debug, Clone)]
pub struct FloatExtractor {
    params: FloatParams,
}

impl FloatExtractor {
    pub fn new(params: FloatParams) -> Result<Self> {
        if params.max_features == 0 {
            return Err(Error::InvalidParameter("max_features must be >= 1".into()));
        }
        if params.edge_ratio.is_nan() || params.edge_ratio <= 0.0 || params.contrast_threshold.is_nan() || params.contrast_threshold < 0.0 {
            return Err(Error::InvalidParameter(
                "edge_ratio must be > 0 and contrast_threshold >= 0".into(),
            ));
        }
        build_scale_space(
            &GrayImage::filled(1, 1, 0)?,
            params.intervals,
            params.sigma0,
            params.max_octaves,
        )?;
        Ok(FloatExtractor { params })
    }
}

impl Extractor for FloatExtractor {
    fn descriptor_kind(&self) -> DescriptorKind {
        DescriptorKind::Float
    }

    fn extract(&self, image_id: &str, img: &GrayImage) -> Result<FeatureSet> {
        let p = &self.params;
        let space = build_scale_space(img, p.intervals, p.sigma0, p.max_octaves)?;
        let detected: Vec<Keypoint> = detect_dog(&space, p.contrast_threshold, p.edge_ratio)
            .into_iter()
            .filter(|kp| fits(&space.octaves[kp.level].gauss[0], kp.x, kp.y))
            .collect();
        let keep = strongest(&detected, p.max_features);

        let mut keypoints = Vec::with_capacity(keep.len());
        let mut descriptors = Vec::with_capacity(keep.len());
        for i in keep {
            let mut kp = detected[i];
            let octave = &space.octaves[kp.level];
            // Gaussian layer closest to the keypoint scale
            let layer = ((kp.size / p.sigma0).log2() * p.intervals as f32)
                .round()
                .clamp(0.0, (octave.gauss.len() - 1) as f32) as usize;
            let plane = &octave.gauss[layer];
            let Some(theta) = dominant_orientation_plane(plane, kp.x, kp.y) else {
                continue;
            };
            kp.orientation = theta;
            let d = describe_plane(plane, kp.x, kp.y, theta);
            if d.is_degenerate() {
                continue;
            }
            keypoints.push(kp);
            descriptors.push(d);
        }
        FeatureSet::new(image_id, keypoints, DescriptorSet::from_float(&descriptors))
    }
}
