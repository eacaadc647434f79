//! Keypoint detection and local descriptors.
//!
//! Two reference families ship with the crate: a binary one (FAST corners on a
//! box pyramid, intensity-centroid orientation, steered 256-bit pair tests) and
//! a float one (difference-of-Gaussians extrema, 4x4x8 gradient histograms).
//! A passthrough extractor loads descriptors computed by external tools.

mod dog;
mod fast;
mod float;
mod orb;
mod passthrough;
mod pattern;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::GrayImage;

pub use dog::{build_scale_space, detect_dog, ScaleSpace};
pub use fast::{detect_fast, segment_test, FAST_CIRCLE};
pub use float::{
    describe_float, dominant_orientation, normalize_float_descriptor, FloatDescriptor,
    FloatExtractor, FLOAT_DIM, FLOAT_MARGIN,
};
pub use orb::{
    binary_patch_fits, compute_orientation, describe_binary, BinaryDescriptor, BinaryExtractor,
    BINARY_BITS, BINARY_MARGIN,
};
pub use passthrough::{read_feature_file, write_feature_file, PassthroughExtractor};

/// A detected interest point in the coordinates of its pyramid level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    pub level: usize,
    /// Radians in [0, 2pi).
    pub orientation: f32,
    pub response: f32,
    /// Detector scale in level pixels (blob sigma, or patch radius for corners).
    pub size: f32,
}

impl Keypoint {
    pub fn new(x: f32, y: f32, level: usize) -> Self {
        Keypoint {
            x,
            y,
            level,
            orientation: 0.0,
            response: 0.0,
            size: 0.0,
        }
    }
}

pub(crate) fn normalize_angle(theta: f32) -> f32 {
    let tau = std::f32::consts::TAU;
    let mut t = theta % tau;
    if t < 0.0 {
        t += tau;
    }
    // -0.0 % tau and rounding can land exactly on tau
    if t >= tau {
        t -= tau;
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorKind {
    Binary,
    Float,
}

impl DescriptorKind {
    pub(crate) fn code(self) -> u8 {
        match self {
            DescriptorKind::Binary => 0,
            DescriptorKind::Float => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DescriptorKind::Binary),
            1 => Some(DescriptorKind::Float),
            _ => None,
        }
    }
}

impl fmt::Display for DescriptorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DescriptorKind::Binary => "binary",
            DescriptorKind::Float => "float",
        })
    }
}

/// Homogeneous, row-major storage for the descriptors of one image.
///
/// Binary rows are packed bit strings (bit `i` is bit `i % 8` of byte
/// `i / 8`). `dim` counts bits for binary rows and components for float rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DescriptorSet {
    Binary { bits: usize, data: Vec<u8> },
    Float { dim: usize, data: Vec<f32> },
}

impl DescriptorSet {
    pub fn empty(kind: DescriptorKind, dim: usize) -> Self {
        match kind {
            DescriptorKind::Binary => DescriptorSet::Binary {
                bits: dim,
                data: Vec::new(),
            },
            DescriptorKind::Float => DescriptorSet::Float {
                dim,
                data: Vec::new(),
            },
        }
    }

    pub fn from_binary(rows: &[BinaryDescriptor]) -> Self {
        DescriptorSet::Binary {
            bits: BINARY_BITS,
            data: rows.iter().flat_map(|r| r.0).collect(),
        }
    }

    pub fn from_float(rows: &[FloatDescriptor]) -> Self {
        DescriptorSet::Float {
            dim: FLOAT_DIM,
            data: rows.iter().flat_map(|r| r.0).collect(),
        }
    }

    /// Float rows of any dimensionality; `data.len()` must be a multiple of `dim`.
    pub fn from_float_rows(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter(format!(
                "{} values do not form rows of {dim}",
                data.len()
            )));
        }
        Ok(DescriptorSet::Float { dim, data })
    }

    pub fn kind(&self) -> DescriptorKind {
        match self {
            DescriptorSet::Binary { .. } => DescriptorKind::Binary,
            DescriptorSet::Float { .. } => DescriptorKind::Float,
        }
    }

    /// Dimensionality of the lifted real vectors.
    pub fn dim(&self) -> usize {
        match self {
            DescriptorSet::Binary { bits, .. } => *bits,
            DescriptorSet::Float { dim, .. } => *dim,
        }
    }

    pub(crate) fn row_bytes(bits: usize) -> usize {
        bits.div_ceil(8)
    }

    pub fn len(&self) -> usize {
        match self {
            DescriptorSet::Binary { bits, data } => data.len() / Self::row_bytes(*bits).max(1),
            DescriptorSet::Float { dim, data } => data.len() / (*dim).max(1),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn binary_row(&self, i: usize) -> Option<&[u8]> {
        match self {
            DescriptorSet::Binary { bits, data } => {
                let n = Self::row_bytes(*bits);
                Some(&data[i * n..(i + 1) * n])
            }
            DescriptorSet::Float { .. } => None,
        }
    }

    pub fn float_row(&self, i: usize) -> Option<&[f32]> {
        match self {
            DescriptorSet::Float { dim, data } => Some(&data[i * dim..(i + 1) * dim]),
            DescriptorSet::Binary { .. } => None,
        }
    }

    /// Writes row `i` as a real vector: floats verbatim, bits as {0, 1}.
    pub fn lift_into(&self, i: usize, out: &mut [f32]) {
        match self {
            DescriptorSet::Binary { bits, data } => {
                let n = Self::row_bytes(*bits);
                let row = &data[i * n..(i + 1) * n];
                for (b, slot) in out.iter_mut().enumerate().take(*bits) {
                    *slot = ((row[b / 8] >> (b % 8)) & 1) as f32;
                }
            }
            DescriptorSet::Float { dim, data } => {
                out[..*dim].copy_from_slice(&data[i * dim..(i + 1) * dim]);
            }
        }
    }

    pub fn lifted(&self, i: usize) -> Vec<f32> {
        let mut out = vec![0f32; self.dim()];
        self.lift_into(i, &mut out);
        out
    }

    /// All rows lifted into one row-major buffer.
    pub fn lifted_all(&self) -> Vec<f32> {
        match self {
            DescriptorSet::Float { data, .. } => data.clone(),
            DescriptorSet::Binary { .. } => {
                let dim = self.dim();
                let mut out = vec![0f32; dim * self.len()];
                for (i, chunk) in out.chunks_exact_mut(dim).enumerate() {
                    self.lift_into(i, chunk);
                }
                out
            }
        }
    }

    /// Keeps the rows at `order`, in that order.
    pub fn select(&self, order: &[usize]) -> Self {
        match self {
            DescriptorSet::Binary { bits, data } => {
                let n = Self::row_bytes(*bits);
                DescriptorSet::Binary {
                    bits: *bits,
                    data: order
                        .iter()
                        .flat_map(|&i| data[i * n..(i + 1) * n].iter().copied())
                        .collect(),
                }
            }
            DescriptorSet::Float { dim, data } => DescriptorSet::Float {
                dim: *dim,
                data: order
                    .iter()
                    .flat_map(|&i| data[i * dim..(i + 1) * dim].iter().copied())
                    .collect(),
            },
        }
    }
}

/// Descriptors of one image with their keypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub image_id: String,
    pub keypoints: Vec<Keypoint>,
    pub descriptors: DescriptorSet,
}

impl FeatureSet {
    pub fn new(
        image_id: impl Into<String>,
        keypoints: Vec<Keypoint>,
        descriptors: DescriptorSet,
    ) -> Result<Self> {
        if keypoints.len() != descriptors.len() {
            return Err(Error::InvalidParameter(format!(
                "{} keypoints but {} descriptors",
                keypoints.len(),
                descriptors.len()
            )));
        }
        Ok(FeatureSet {
            image_id: image_id.into(),
            keypoints,
            descriptors,
        })
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn kind(&self) -> DescriptorKind {
        self.descriptors.kind()
    }
}

/// Parameters of the binary family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinaryParams {
    pub fast_threshold: u8,
    pub nms: bool,
    pub n_levels: usize,
    pub scale_factor: f64,
    pub orientation_radius: usize,
    pub max_features: usize,
}

impl Default for BinaryParams {
    fn default() -> Self {
        BinaryParams {
            fast_threshold: 20,
            nms: true,
            n_levels: 8,
            scale_factor: 1.2,
            orientation_radius: 15,
            max_features: 1000,
        }
    }
}

/// Parameters of the float family. Intensities are on a [0, 1] scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FloatParams {
    pub contrast_threshold: f32,
    pub edge_ratio: f32,
    pub intervals: usize,
    pub sigma0: f32,
    pub max_octaves: usize,
    pub max_features: usize,
}

impl Default for FloatParams {
    fn default() -> Self {
        FloatParams {
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
            intervals: 3,
            sigma0: 1.6,
            max_octaves: 6,
            max_features: 1000,
        }
    }
}

/// Descriptor files computed by an external tool, one `<image_id>.vprf` per image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalParams {
    pub dir: PathBuf,
    pub descriptor_kind: DescriptorKind,
}

/// Extractor kind plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExtractorConfig {
    Binary(BinaryParams),
    Float(FloatParams),
    External(ExternalParams),
}

impl ExtractorConfig {
    /// Registered kinds with default parameters. `external` needs a directory
    /// and is therefore only available through a full config.
    pub fn from_kind(name: &str) -> Result<Self> {
        match name {
            "binary" => Ok(ExtractorConfig::Binary(BinaryParams::default())),
            "float" => Ok(ExtractorConfig::Float(FloatParams::default())),
            other => Err(Error::UnknownExtractor(other.to_string())),
        }
    }

    pub fn descriptor_kind(&self) -> DescriptorKind {
        match self {
            ExtractorConfig::Binary(_) => DescriptorKind::Binary,
            ExtractorConfig::Float(_) => DescriptorKind::Float,
            ExtractorConfig::External(p) => p.descriptor_kind,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExtractorConfig::Binary(_) => "binary",
            ExtractorConfig::Float(_) => "float",
            ExtractorConfig::External(_) => "external",
        }
    }

    pub fn build(&self) -> Result<Box<dyn Extractor>> {
        Ok(match self {
            ExtractorConfig::Binary(p) => Box::new(BinaryExtractor::new(p.clone())?),
            ExtractorConfig::Float(p) => Box::new(FloatExtractor::new(p.clone())?),
            ExtractorConfig::External(p) => Box::new(PassthroughExtractor::new(p.clone())),
        })
    }
}

/// Turns an image into a [`FeatureSet`]. Implementations are pure functions
/// of their parameters and the image.
pub trait Extractor: Send + Sync {
    fn descriptor_kind(&self) -> DescriptorKind;
    fn extract(&self, image_id: &str, img: &GrayImage) -> Result<FeatureSet>;
}

/// One-shot extraction with the given configuration.
pub fn extract(image_id: &str, img: &GrayImage, config: &ExtractorConfig) -> Result<FeatureSet> {
    config.build()?.extract(image_id, img)
}

/// Indices of the `cap` strongest keypoints, strongest first. Equal responses
/// fall back to (level, y, x) so the order never depends on detection order.
pub(crate) fn strongest(keypoints: &[Keypoint], cap: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..keypoints.len()).collect();
    order.sort_by(|&a, &b| {
        let (ka, kb) = (&keypoints[a], &keypoints[b]);
        kb.response
            .total_cmp(&ka.response)
            .then(ka.level.cmp(&kb.level))
            .then(ka.y.total_cmp(&kb.y))
            .then(ka.x.total_cmp(&kb.x))
    });
    order.truncate(cap);
    order
}
