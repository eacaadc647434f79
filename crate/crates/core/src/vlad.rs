//! VLAD aggregation: per-word residual sums, intra-normalization, signed
//! square root and a final L2 normalization.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::util::{put_f32s, read_file, sq_dist_f64, ByteReader};
use crate::vocab::VisualDictionary;

const MAGIC: &[u8; 4] = b"VPRV";

/// Optional stages of the normalization chain. The global L2 step always runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VladNormalization {
    pub intra: bool,
    pub signed_sqrt: bool,
}

impl Default for VladNormalization {
    fn default() -> Self {
        VladNormalization {
            intra: true,
            signed_sqrt: true,
        }
    }
}

impl VladNormalization {
    pub fn describe(&self) -> String {
        let mut parts = vec!["residual-sum"];
        if self.intra {
            parts.push("intra-l2");
        }
        if self.signed_sqrt {
            parts.push("signed-sqrt");
        }
        parts.push("global-l2");
        parts.join(" > ")
    }
}

/// Aggregated image descriptor: `k` blocks of `dim` values.
#[derive(Debug, Clone, PartialEq)]
pub struct VladDescriptor {
    pub k: usize,
    pub dim: usize,
    pub values: Arc<[f32]>,
    /// Set when the image contributed no residual mass; values are all zero.
    pub degenerate: bool,
}

impl VladDescriptor {
    pub fn zeros(k: usize, dim: usize) -> Self {
        VladDescriptor {
            k,
            dim,
            values: vec![0f32; k * dim].into(),
            degenerate: true,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }
}

/// Intermediate vectors of the chain, exposed for inspection.
#[derive(Debug, Clone)]
pub struct VladStages {
    pub raw: Vec<f64>,
    pub intra: Vec<f64>,
    pub signed_sqrt: Vec<f64>,
    pub output: VladDescriptor,
}

pub fn compute_vlad(
    fs: &FeatureSet,
    dict: &VisualDictionary,
    norm: VladNormalization,
) -> Result<VladDescriptor> {
    compute_vlad_stages(fs, dict, norm).map(|s| s.output)
}

pub fn compute_vlad_stages(
    fs: &FeatureSet,
    dict: &VisualDictionary,
    norm: VladNormalization,
) -> Result<VladStages> {
    let (k, dim) = (dict.k(), dict.dim());
    if !fs.is_empty() {
        dict.check_compatible(fs.kind(), fs.descriptors.dim())?;
    } else if fs.kind() != dict.kind() {
        return Err(Error::KindMismatch {
            expected: dict.kind(),
            found: fs.kind(),
        });
    }

    let lifted = fs.descriptors.lifted_all();
    let rows: Vec<&[f32]> = lifted.chunks_exact(dim).collect();
    let mut order: Vec<(usize, usize)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (dict.nearest(r), i))
        .collect();
    // Sum in (word, descriptor value) order so the result does not depend on
    // the order of the input descriptors.
    order.sort_by(|a, b| {
        a.0.cmp(&b.0).then_with(|| {
            rows[a.1]
                .iter()
                .zip(rows[b.1])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let mut raw = vec![0f64; k * dim];
    for &(word, i) in &order {
        let block = &mut raw[word * dim..(word + 1) * dim];
        for ((acc, &x), &c) in block.iter_mut().zip(rows[i]).zip(dict.centroid(word)) {
            *acc += x as f64 - c as f64;
        }
    }

    let mut intra = raw.clone();
    if norm.intra {
        for block in intra.chunks_exact_mut(dim) {
            let n = block.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                block.iter_mut().for_each(|v| *v /= n);
            }
        }
    }
    let mut ssr = intra.clone();
    if norm.signed_sqrt {
        ssr.iter_mut().for_each(|v| *v = v.signum() * v.abs().sqrt());
    }
    let total = ssr.iter().map(|v| v * v).sum::<f64>().sqrt();
    let output = if total > 0.0 {
        VladDescriptor {
            k,
            dim,
            values: ssr.iter().map(|v| (v / total) as f32).collect::<Vec<_>>().into(),
            degenerate: false,
        }
    } else {
        VladDescriptor::zeros(k, dim)
    };
    Ok(VladStages {
        raw,
        intra,
        signed_sqrt: ssr,
        output,
    })
}

/// Euclidean distance between two VLAD descriptors of the same shape.
pub fn vlad_distance(a: &VladDescriptor, b: &VladDescriptor) -> Result<f64> {
    if (a.k, a.dim) != (b.k, b.dim) || a.values.len() != b.values.len() {
        return Err(Error::DimensionMismatch {
            expected: a.values.len(),
            found: b.values.len(),
        });
    }
    Ok(sq_dist_f64(&a.values, &b.values).sqrt())
}

/// Reported similarity for a distance.
#[inline]
pub fn similarity(distance: f64) -> f64 {
    1.0 / (1.0 + distance)
}

/// VLAD descriptors of a dataset, keyed by image id in dataset order.
///
/// File layout, little-endian: `b"VPRV"`, k `u32`, dim `u32`, count `u32`,
/// then per image an id length `u32`, the UTF-8 id bytes and `k * dim` f32
/// values. Degenerate entries are stored as zero vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct VladStore {
    pub k: usize,
    pub dim: usize,
    pub entries: Vec<(String, VladDescriptor)>,
}

impl VladStore {
    pub fn new(k: usize, dim: usize) -> Self {
        VladStore {
            k,
            dim,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, id: impl Into<String>, vlad: VladDescriptor) -> Result<()> {
        if (vlad.k, vlad.dim) != (self.k, self.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.k * self.dim,
                found: vlad.len(),
            });
        }
        self.entries.push((id.into(), vlad));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for v in [self.k, self.dim, self.entries.len()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for (id, vlad) in &self.entries {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            put_f32s(&mut out, &vlad.values);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "VLAD store");
        r.expect_magic(MAGIC)?;
        let k = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let count = r.u32()? as usize;
        let len = k
            .checked_mul(dim)
            .ok_or_else(|| Error::format("VLAD store", "size overflow"))?;
        let mut store = VladStore::new(k, dim);
        for _ in 0..count {
            let id_len = r.u32()? as usize;
            let id = std::str::from_utf8(r.take(id_len)?)
                .map_err(|_| Error::format("VLAD store", "image id is not UTF-8"))?
                .to_string();
            let values = r.f32_vec(len)?;
            let degenerate = values.iter().all(|&v| v == 0.0);
            store.entries.push((
                id,
                VladDescriptor {
                    k,
                    dim,
                    values: values.into(),
                    degenerate,
                },
            ));
        }
        r.finish()?;
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&read_file(path.as_ref())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{DescriptorKind, DescriptorSet, Keypoint};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dict2() -> VisualDictionary {
        VisualDictionary::from_centroids(DescriptorKind::Float, 2, vec![0.0, 0.0, 10.0, 10.0], [0; 32])
            .unwrap()
    }

    fn fset(dim: usize, data: Vec<f32>) -> FeatureSet {
        let n = data.len() / dim;
        FeatureSet::new(
            "q",
            vec![Keypoint::new(0.0, 0.0, 0); n],
            DescriptorSet::from_float_rows(dim, data).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn worked_two_word_example() {
        let fs = fset(2, vec![1.0, 0.0, 0.0, 1.0, 11.0, 10.0]);
        let s = compute_vlad_stages(&fs, &dict2(), VladNormalization::default()).unwrap();
        assert_eq!(s.raw, vec![1.0, 1.0, 1.0, 0.0]);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (got, want) in s.intra.iter().zip([h, h, 1.0, 0.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        let r = h.sqrt(); // 0.8409
        for (got, want) in s.signed_sqrt.iter().zip([r, r, 1.0, 0.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        // independent evaluation of the final stage
        let n = (2.0 * r * r + 1.0f64).sqrt();
        let expect = [r / n, r / n, 1.0 / n, 0.0];
        let hand = [0.5412, 0.5412, 0.6436, 0.0];
        for ((got, want), hand) in s.output.values.iter().zip(expect).zip(hand) {
            assert!((*got as f64 - want).abs() < 1e-6);
            assert!((*got as f64 - hand).abs() < 1e-3);
        }
        assert!((s.output.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn descriptors_on_centroids_are_degenerate() {
        let fs = fset(2, vec![0.0, 0.0, 10.0, 10.0, 10.0, 10.0]);
        let v = compute_vlad(&fs, &dict2(), VladNormalization::default()).unwrap();
        assert!(v.degenerate);
        assert!(v.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn empty_feature_set_is_degenerate() {
        let fs = FeatureSet::new("e", vec![], DescriptorSet::empty(DescriptorKind::Float, 2)).unwrap();
        let v = compute_vlad(&fs, &dict2(), VladNormalization::default()).unwrap();
        assert!(v.degenerate);
        assert_eq!(v.len(), 4);
    }

    #[test]
    fn kind_mismatch_is_an_error() {
        let fs = FeatureSet::new(
            "b",
            vec![Keypoint::new(0.0, 0.0, 0)],
            DescriptorSet::Binary { bits: 2, data: vec![1] },
        )
        .unwrap();
        assert!(matches!(
            compute_vlad(&fs, &dict2(), VladNormalization::default()),
            Err(Error::KindMismatch { .. })
        ));
    }

    #[test]
    fn signs_survive_signed_sqrt() {
        let fs = fset(2, vec![-3.0, 0.5, 12.0, 4.0]);
        let s = compute_vlad_stages(&fs, &dict2(), VladNormalization::default()).unwrap();
        for (a, b) in s.intra.iter().zip(&s.signed_sqrt) {
            assert_eq!(a.signum(), b.signum());
        }
        for block in s.intra.chunks(2) {
            let n = block.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn distances() {
        let a = VladDescriptor { k: 1, dim: 3, values: vec![1.0, 0.0, 0.0].into(), degenerate: false };
        let b = VladDescriptor { k: 1, dim: 3, values: vec![0.0, 1.0, 0.0].into(), degenerate: false };
        assert_eq!(vlad_distance(&a, &a).unwrap(), 0.0);
        assert!((vlad_distance(&a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-9);
        let c = VladDescriptor::zeros(2, 3);
        assert!(vlad_distance(&a, &c).is_err());
        assert_eq!(similarity(0.0), 1.0);
    }

    #[test]
    fn store_round_trip() {
        let mut store = VladStore::new(1, 2);
        store
            .push("a", VladDescriptor { k: 1, dim: 2, values: vec![0.6, 0.8].into(), degenerate: false })
            .unwrap();
        store.push("blank", VladDescriptor::zeros(1, 2)).unwrap();
        assert!(store.push("bad", VladDescriptor::zeros(2, 2)).is_err());
        let back = VladStore::from_bytes(&store.to_bytes()).unwrap();
        assert_eq!(back, store);
        assert!(back.entries[1].1.degenerate);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn order_of_descriptors_does_not_matter(seed in any::<u64>(), n in 1usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dim = 8;
            let cents: Vec<f32> = (0..4 * dim).map(|_| rng.gen()).collect();
            let dict = VisualDictionary::from_centroids(DescriptorKind::Float, dim, cents, [0; 32]).unwrap();
            let rows: Vec<Vec<f32>> = (0..n).map(|_| (0..dim).map(|_| rng.gen()).collect()).collect();
            let mut shuffled = rows.clone();
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.gen_range(0..=i));
            }
            let a = compute_vlad(&fset(dim, rows.concat()), &dict, VladNormalization::default()).unwrap();
            let b = compute_vlad(&fset(dim, shuffled.concat()), &dict, VladNormalization::default()).unwrap();
            prop_assert_eq!(&a.values, &b.values);
            prop_assert!(a.degenerate || (a.norm() - 1.0).abs() < 1e-6);
        }

        #[test]
        fn distance_matches_direct_sum(seed in any::<u64>(), len in 1usize..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<f32> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f32> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let direct: f64 = a.iter().zip(&b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum::<f64>().sqrt();
            let va = VladDescriptor { k: 1, dim: len, values: a.into(), degenerate: false };
            let vb = VladDescriptor { k: 1, dim: len, values: b.into(), degenerate: false };
            prop_assert!((vlad_distance(&va, &vb).unwrap() - direct).abs() < 1e-9);
        }
    }
}
