//! Binary family: FAST corners on a box pyramid, intensity-centroid
//! orientation and 256 steered pair tests on a box-smoothed patch.

use super::pattern::BINARY_PATTERN;
use super::{
    detect_fast, normalize_angle, strongest, BinaryParams, DescriptorKind, DescriptorSet,
    Extractor, FeatureSet, Keypoint,
};
use crate::error::{Error, Result};
use crate::imaging::{build_pyramid, GrayImage, IntegralImage};

pub const BINARY_BITS: usize = 256;

/// Pattern points lie in the radius-15 disc and are smoothed with a 5x5 box.
const PATTERN_RADIUS: usize = 15;
const SMOOTH_RADIUS: usize = 2;

/// Minimum distance from a keypoint to the level border.
pub const BINARY_MARGIN: usize = PATTERN_RADIUS + SMOOTH_RADIUS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BinaryDescriptor(pub [u8; 32]);

impl BinaryDescriptor {
    pub fn bit(&self, i: usize) -> bool {
        (self.0[i / 8] >> (i % 8)) & 1 == 1
    }

    pub fn hamming(&self, other: &BinaryDescriptor) -> u32 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

/// Whether a binary patch centred on integer pixel (x, y) stays in bounds.
pub fn binary_patch_fits(width: usize, height: usize, x: usize, y: usize) -> bool {
    x >= BINARY_MARGIN
        && y >= BINARY_MARGIN
        && x + BINARY_MARGIN < width
        && y + BINARY_MARGIN < height
}

/// Intensity-centroid angle `atan2(m01, m10)` over the disc of `radius`
/// around the keypoint, in image coordinates (y down). Degenerate moments
/// give 0.
pub fn compute_orientation(img: &GrayImage, kp: &Keypoint, radius: usize) -> Result<f32> {
    let cx = kp.x.round() as isize;
    let cy = kp.y.round() as isize;
    let r = radius as isize;
    if cx < r || cy < r || cx + r >= img.width() as isize || cy + r >= img.height() as isize {
        return Err(Error::InvalidParameter(format!(
            "orientation patch of radius {radius} at ({cx}, {cy}) leaves the {}x{} image",
            img.width(),
            img.height()
        )));
    }
    Ok(orientation_unchecked(img, cx as usize, cy as usize, radius))
}

fn orientation_unchecked(img: &GrayImage, cx: usize, cy: usize, radius: usize) -> f32 {
    let r = radius as i64;
    let (mut m10, mut m01) = (0i64, 0i64);
    for dy in -r..=r {
        let row = img.row((cy as i64 + dy) as usize);
        // half-width of the disc on this row
        let span = ((r * r - dy * dy) as f64).sqrt().floor() as i64;
        for dx in -span..=span {
            let v = row[(cx as i64 + dx) as usize] as i64;
            m10 += dx * v;
            m01 += dy * v;
        }
    }
    if m10 == 0 && m01 == 0 {
        return 0.0;
    }
    normalize_angle((m01 as f64).atan2(m10 as f64) as f32)
}

/// Steered pair tests around `kp` on a 5x5 box-smoothed image. Bit `i` is
/// set iff the smoothed intensity at the rotated first point is strictly
/// less than at the rotated second point.
pub fn describe_binary(img: &GrayImage, kp: &Keypoint) -> Result<BinaryDescriptor> {
    let (cx, cy) = (kp.x.round(), kp.y.round());
    if cx < 0.0
        || cy < 0.0
        || !binary_patch_fits(img.width(), img.height(), cx as usize, cy as usize)
    {
        return Err(Error::InvalidParameter(format!(
            "binary patch at ({cx}, {cy}) leaves the {}x{} image",
            img.width(),
            img.height()
        )));
    }
    let integral = IntegralImage::new(img);
    Ok(describe_with_integral(&integral, cx as usize, cy as usize, kp.orientation))
}

fn describe_with_integral(
    integral: &IntegralImage,
    cx: usize,
    cy: usize,
    orientation: f32,
) -> BinaryDescriptor {
    let (sin, cos) = (orientation as f64).sin_cos();
    let steer = |px: i8, py: i8| -> (usize, usize) {
        let (px, py) = (px as f64, py as f64);
        let rx = (px * cos - py * sin).round() as isize;
        let ry = (px * sin + py * cos).round() as isize;
        ((cx as isize + rx) as usize, (cy as isize + ry) as usize)
    };
    let mut bits = [0u8; 32];
    for (i, &[ax, ay, bx, by]) in BINARY_PATTERN.iter().enumerate() {
        let (x1, y1) = steer(ax, ay);
        let (x2, y2) = steer(bx, by);
        let a = integral.box_sum(x1, y1, SMOOTH_RADIUS);
        let b = integral.box_sum(x2, y2, SMOOTH_RADIUS);
        if a < b {
            bits[i / 8] |= 1 << (i % 8);
        }
    }
    BinaryDescriptor(bits)
}

/// Binary reference extractor.
#[derive(Debug, Clone)]
pub struct BinaryExtractor {
    params: BinaryParams,
}

impl BinaryExtractor {
    pub fn new(params: BinaryParams) -> Result<Self> {
        if params.fast_threshold == 0 {
            return Err(Error::InvalidParameter("fast_threshold must be >= 1".into()));
        }
        if params.orientation_radius > PATTERN_RADIUS {
            return Err(Error::InvalidParameter(format!(
                "orientation_radius must be <= {PATTERN_RADIUS}"
            )));
        }
        if params.max_features == 0 {
            return Err(Error::InvalidParameter("max_features must be >= 1".into()));
        }
        // surface pyramid parameter errors at construction time
        build_pyramid(&GrayImage::filled(1, 1, 0)?, params.n_levels, params.scale_factor)?;
        Ok(BinaryExtractor { params })
    }
}

impl Extractor for BinaryExtractor {
    fn descriptor_kind(&self) -> DescriptorKind {
        DescriptorKind::Binary
    }

    fn extract(&self, image_id: &str, img: &GrayImage) -> Result<FeatureSet> {
        let p = &self.params;
        let pyramid = build_pyramid(img, p.n_levels, p.scale_factor)?;
        let mut candidates = Vec::new();
        for (level, layer) in pyramid.levels.iter().enumerate() {
            let (w, h) = (layer.width(), layer.height());
            for mut kp in detect_fast(layer, p.fast_threshold, p.nms) {
                if !binary_patch_fits(w, h, kp.x as usize, kp.y as usize) {
                    continue;
                }
                kp.level = level;
                kp.size = PATTERN_RADIUS as f32;
                candidates.push(kp);
            }
        }
        let keep = strongest(&candidates, p.max_features);

        let integrals: Vec<Option<IntegralImage>> = {
            let mut used = vec![false; pyramid.levels.len()];
            for &i in &keep {
                used[candidates[i].level] = true;
            }
            pyramid
                .levels
                .iter()
                .zip(used)
                .map(|(l, u)| u.then(|| IntegralImage::new(l)))
                .collect()
        };

        let mut keypoints = Vec::with_capacity(keep.len());
        let mut descriptors = Vec::with_capacity(keep.len());
        for i in keep {
            let mut kp = candidates[i];
            let layer = &pyramid.levels[kp.level];
            let (x, y) = (kp.x as usize, kp.y as usize);
            kp.orientation = orientation_unchecked(layer, x, y, p.orientation_radius);
            let integral = integrals[kp.level].as_ref().expect("integral built for used level");
            descriptors.push(describe_with_integral(integral, x, y, kp.orientation));
            keypoints.push(kp);
        }
        FeatureSet::new(image_id, keypoints, DescriptorSet::from_binary(&descriptors))
    }
}
