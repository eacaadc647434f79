//! Visual dictionary: k-means++ seeded Lloyd iterations over lifted
//! descriptors.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{DescriptorKind, DescriptorSet, FeatureSet};
use crate::util::{put_f32s, read_file, sq_dist_f32, ByteReader};

const MAGIC: &[u8; 4] = b"VPRD";

/// Dictionary sizes giving the best retrieval accuracy per descriptor family
/// in the reference study: 2048 words for the float descriptors, 1024 for
/// the heavier binary ones and 256 for the lightweight binary one.
pub const PRESET_FLOAT_HIGH: usize = 2048;
pub const PRESET_BINARY_HIGH: usize = 1024;
pub const PRESET_BINARY_LOW: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            k: PRESET_BINARY_LOW,
            seed: 0,
            max_iters: 100,
            tol: 1e-4,
        }
    }
}

/// `k` centroids quantizing a descriptor space.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualDictionary {
    k: usize,
    dim: usize,
    kind: DescriptorKind,
    centroids: Vec<f32>,
    fingerprint: [u8; 32],
}

/// What happened during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub params: KMeansParams,
    pub descriptor_kind: DescriptorKind,
    pub dim: usize,
    pub descriptor_count: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Mean squared distance after each assignment step.
    pub distortion_history: Vec<f64>,
    pub reseeded_clusters: usize,
    pub fingerprint: String,
}

impl TrainingReport {
    pub fn final_distortion(&self) -> f64 {
        self.distortion_history.last().copied().unwrap_or(0.0)
    }
}

impl VisualDictionary {
    pub fn from_centroids(
        kind: DescriptorKind,
        dim: usize,
        centroids: Vec<f32>,
        fingerprint: [u8; 32],
    ) -> Result<Self> {
        if dim == 0 || !centroids.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter(format!(
                "{} centroid values do not form rows of {dim}",
                centroids.len()
            )));
        }
        let k = centroids.len() / dim;
        if k < 2 {
            return Err(Error::InvalidParameter("a dictionary needs k >= 2".into()));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite centroid".into()));
        }
        Ok(VisualDictionary {
            k,
            dim,
            kind,
            centroids,
            fingerprint,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> DescriptorKind {
        self.kind
    }

    pub fn centroid(&self, j: usize) -> &[f32] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    pub fn fingerprint(&self) -> &[u8; 32] {
        &self.fingerprint
    }

    pub fn fingerprint_hex(&self) -> String {
        hex::encode(self.fingerprint)
    }

    /// Nearest centroid of an already lifted vector; ties go to the lower index.
    pub fn nearest(&self, v: &[f32]) -> usize {
        let mut best = (0, f32::INFINITY);
        for (j, c) in self.centroids.chunks_exact(self.dim).enumerate() {
            let d = sq_dist_f32(v, c);
            if d < best.1 {
                best = (j, d);
            }
        }
        best.0
    }

    pub(crate) fn check_compatible(&self, kind: DescriptorKind, dim: usize) -> Result<()> {
        if kind != self.kind {
            return Err(Error::KindMismatch {
                expected: self.kind,
                found: kind,
            });
        }
        if dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: dim,
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + self.centroids.len() * 4 + 32);
        out.extend_from_slice(MAGIC);
        out.push(self.kind.code());
        out.extend_from_slice(&(self.k as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        put_f32s(&mut out, &self.centroids);
        out.extend_from_slice(&self.fingerprint);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "dictionary");
        r.expect_magic(MAGIC)?;
        let code = r.u8()?;
        let kind = DescriptorKind::from_code(code)
            .ok_or_else(|| Error::format("dictionary", format!("unknown kind byte {code}")))?;
        let k = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let centroids = r.f32_vec(k.checked_mul(dim).ok_or_else(|| {
            Error::format("dictionary", "size overflow")
        })?)?;
        let fingerprint: [u8; 32] = r.take(32)?.try_into().unwrap();
        r.finish()?;
        Self::from_centroids(kind, dim, centroids, fingerprint)
    }

    /// Writes the binary dictionary file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&read_file(path.as_ref())?)
    }
}

/// Path of the JSON sidecar written next to a dictionary file.
pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    path.with_file_name(name)
}

/// Writes the dictionary and its JSON training sidecar.
pub fn save_with_report(
    dict: &VisualDictionary,
    report: &TrainingReport,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    dict.save(path)?;
    std::fs::write(sidecar_path(path), serde_json::to_vec_pretty(report)?)?;
    Ok(())
}

/// Index of the nearest centroid to descriptor `index` of `descriptors`.
pub fn assign(descriptors: &DescriptorSet, index: usize, dict: &VisualDictionary) -> Result<usize> {
    dict.check_compatible(descriptors.kind(), descriptors.dim())?;
    if index >= descriptors.len() {
        return Err(Error::InvalidParameter(format!(
            "descriptor {index} out of range ({} rows)",
            descriptors.len()
        )));
    }
    Ok(dict.nearest(&descriptors.lifted(index)))
}

pub fn train_dictionary(features: &[FeatureSet], params: &KMeansParams) -> Result<VisualDictionary> {
    train_dictionary_with_report(features, params).map(|(d, _)| d)
}

pub fn train_dictionary_with_report(
    features: &[FeatureSet],
    params: &KMeansParams,
) -> Result<(VisualDictionary, TrainingReport)> {
    if params.k < 2 {
        return Err(Error::InvalidParameter("k must be at least 2".into()));
    }
    if params.tol.is_nan() || params.tol < 0.0 {
        return Err(Error::InvalidParameter("tol must be >= 0".into()));
    }
    let first = features
        .iter()
        .find(|f| !f.is_empty())
        .or(features.first())
        .ok_or(Error::Empty("training feature sets"))?;
    let (kind, dim) = (first.kind(), first.descriptors.dim());
    for fs in features {
        if fs.kind() != kind {
            return Err(Error::KindMismatch {
                expected: kind,
                found: fs.kind(),
            });
        }
        if !fs.is_empty() && fs.descriptors.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: fs.descriptors.dim(),
            });
        }
    }
    let mut lifted: Vec<f32> = Vec::new();
    for fs in features {
        lifted.extend(fs.descriptors.lifted_all());
    }
    let n = lifted.len() / dim.max(1);
    if n < params.k {
        return Err(Error::TooFewDescriptors {
            k: params.k,
            available: n,
        });
    }
    let fingerprint = training_fingerprint(kind, dim, params, &lifted);
    let points: Vec<f64> = lifted.iter().map(|&v| v as f64).collect();
    drop(lifted);

    let kmeans = lloyd(&points, dim, params)?;
    let centroids: Vec<f32> = kmeans.centroids.iter().map(|&v| v as f32).collect();
    let dict = VisualDictionary::from_centroids(kind, dim, centroids, fingerprint)?;
    let report = TrainingReport {
        params: params.clone(),
        descriptor_kind: kind,
        dim,
        descriptor_count: n,
        iterations: kmeans.iterations,
        converged: kmeans.converged,
        distortion_history: kmeans.history,
        reseeded_clusters: kmeans.reseeded,
        fingerprint: hex::encode(fingerprint),
    };
    Ok((dict, report))
}

fn training_fingerprint(
    kind: DescriptorKind,
    dim: usize,
    params: &KMeansParams,
    lifted: &[f32],
) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update([kind.code()]);
    h.update((dim as u64).to_le_bytes());
    h.update((params.k as u64).to_le_bytes());
    h.update(params.seed.to_le_bytes());
    h.update((params.max_iters as u64).to_le_bytes());
    h.update(params.tol.to_le_bytes());
    let mut buf = Vec::with_capacity(lifted.len() * 4);
    put_f32s(&mut buf, lifted);
    h.update(&buf);
    h.finalize().into()
}

pub(crate) struct KMeansOutcome {
    pub centroids: Vec<f64>,
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub reseeded: usize,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid and squared distance for every point.
fn assign_all(points: &[f64], centroids: &[f64], dim: usize) -> Vec<(usize, f64)> {
    points
        .par_chunks_exact(dim)
        .map(|p| {
            let mut best = (0usize, f64::INFINITY);
            for (j, c) in centroids.chunks_exact(dim).enumerate() {
                let d = sq_dist(p, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .collect()
}

fn kmeans_plus_plus(points: &[f64], dim: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.gen_range(0..n);
    centroids.extend_from_slice(row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(row(i), row(first))).collect();
    for chosen in 1..k {
        let total: f64 = d2.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::TooFewDistinct {
                k,
                distinct: chosen,
            });
        }
        let target = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            acc += d;
            pick = Some(i);
            if acc > target {
                break;
            }
        }
        let pick = pick.expect("positive total implies a positive weight");
        centroids.extend_from_slice(row(pick));
        let c = row(pick);
        for (i, slot) in d2.iter_mut().enumerate() {
            let d = sq_dist(row(i), c);
            if d < *slot {
                *slot = d;
            }
        }
    }
    Ok(centroids)
}

pub(crate) fn lloyd(points: &[f64], dim: usize, params: &KMeansParams) -> Result<KMeansOutcome> {
    let k = params.k;
    let n = points.len() / dim;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = kmeans_plus_plus(points, dim, k, &mut rng)?;
    let mut history = Vec::new();
    let mut reseeded = 0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iters {
        iterations += 1;
        let mut assignment = assign_all(points, &centroids, dim);
        history.push(assignment.iter().map(|a| a.1).sum::<f64>() / n as f64);

        let mut sums = vec![0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &(j, _)) in assignment.iter().enumerate() {
            counts[j] += 1;
            for (s, p) in sums[j * dim..(j + 1) * dim]
                .iter_mut()
                .zip(&points[i * dim..(i + 1) * dim])
            {
                *s += p;
            }
        }
        let mut next = vec![0f64; k * dim];
        for j in 0..k {
            let slot = &mut next[j * dim..(j + 1) * dim];
            if counts[j] > 0 {
                for (c, s) in slot.iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
                    *c = s / counts[j] as f64;
                }
                continue;
            }
            // Empty cluster: move it onto the point farthest from its centroid.
            let (far, far_d) = assignment
                .iter()
                .enumerate()
                .fold((0, -1.0), |best, (i, a)| if a.1 > best.1 { (i, a.1) } else { best });
            if far_d <= 0.0 {
                slot.copy_from_slice(&centroids[j * dim..(j + 1) * dim]);
                continue;
            }
            slot.copy_from_slice(&points[far * dim..(far + 1) * dim]);
            assignment[far].1 = 0.0;
            reseeded += 1;
        }
        let shift = next
            .chunks_exact(dim)
            .zip(centroids.chunks_exact(dim))
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0f64, f64::max);
        centroids = next;
        if shift < params.tol {
            converged = true;
            break;
        }
    }
    // distortion of the returned centroids
    let final_d = assign_all(points, &centroids, dim)
        .iter()
        .map(|a| a.1)
        .sum::<f64>()
        / n as f64;
    history.push(final_d);
    Ok(KMeansOutcome {
        centroids,
        history,
        iterations,
        converged,
        reseeded,
    })
}
