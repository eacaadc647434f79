//! Externally computed descriptors.
//!
//! File layout, little-endian: `b"VPRF"`, kind `u8` (0 binary, 1 float),
//! count `u32`, dim `u16` (bits for binary, components for float), then
//! `count` keypoints as `(x, y, orientation, response)` f32 quadruples, then
//! `count` descriptor rows (`ceil(dim / 8)` bytes or `dim` f32 values each).

use std::path::Path;

use super::{
    normalize_angle, DescriptorKind, DescriptorSet, ExternalParams, Extractor, FeatureSet,
    Keypoint,
};
use crate::error::{Error, Result};
use crate::imaging::GrayImage;
use crate::util::{put_f32s, read_file, ByteReader};

const MAGIC: &[u8; 4] = b"VPRF";

pub fn write_feature_file(path: impl AsRef<Path>, fs: &FeatureSet) -> Result<()> {
    let dim = u16::try_from(fs.descriptors.dim())
        .map_err(|_| Error::InvalidParameter("descriptor dim exceeds u16".into()))?;
    let count = u32::try_from(fs.len())
        .map_err(|_| Error::InvalidParameter("too many descriptors".into()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(fs.kind().code());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    for kp in &fs.keypoints {
        put_f32s(&mut out, &[kp.x, kp.y, kp.orientation, kp.response]);
    }
    match &fs.descriptors {
        DescriptorSet::Binary { data, .. } => out.extend_from_slice(data),
        DescriptorSet::Float { data, .. } => put_f32s(&mut out, data),
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_feature_file(path: impl AsRef<Path>, image_id: &str) -> Result<FeatureSet> {
    let bytes = read_file(path.as_ref())?;
    let mut r = ByteReader::new(&bytes, "feature");
    r.expect_magic(MAGIC)?;
    let code = r.u8()?;
    let kind = DescriptorKind::from_code(code)
        .ok_or_else(|| Error::format("feature", format!("unknown kind byte {code}")))?;
    let count = r.u32()? as usize;
    let dim = r.u16()? as usize;
    if dim == 0 {
        return Err(Error::format("feature", "zero descriptor dimension"));
    }
    let mut keypoints = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let (x, y, o, response) = (r.f32()?, r.f32()?, r.f32()?, r.f32()?);
        keypoints.push(Keypoint {
            x,
            y,
            level: 0,
            orientation: normalize_angle(o),
            response,
            size: 0.0,
        });
    }
    let descriptors = match kind {
        DescriptorKind::Binary => DescriptorSet::Binary {
            bits: dim,
            data: r.take(count * DescriptorSet::row_bytes(dim))?.to_vec(),
        },
        DescriptorKind::Float => DescriptorSet::Float {
            dim,
            data: r.f32_vec(count * dim)?,
        },
    };
    r.finish()?;
    FeatureSet::new(image_id, keypoints, descriptors)
}

/// Loads `<dir>/<image_id>.vprf` instead of computing features.
#[derive(Debug, Clone)]
pub struct PassthroughExtractor {
    params: ExternalParams,
}

impl PassthroughExtractor {
    pub fn new(params: ExternalParams) -> Self {
        PassthroughExtractor { params }
    }
}

impl Extractor for PassthroughExtractor {
    fn descriptor_kind(&self) -> DescriptorKind {
        self.params.descriptor_kind
    }

    fn extract(&self, image_id: &str, _img: &GrayImage) -> Result<FeatureSet> {
        let fs = read_feature_file(self.params.dir.join(format!("{image_id}.vprf")), image_id)?;
        if fs.kind() != self.params.descriptor_kind {
            return Err(Error::KindMismatch {
                expected: self.params.descriptor_kind,
                found: fs.kind(),
            });
        }
        Ok(fs)
    }
}
