//! Mapping and localization.
//!
//! A map is built from a reference dataset: every image is turned into a VLAD
//! descriptor with a fixed extractor and dictionary, and the non-degenerate
//! descriptors are indexed in a ball tree. Localizing a query frame repeats
//! the descriptor computation and ranks the references by distance.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Extractor, ExtractorConfig, FeatureSet};
use crate::imaging::{load_image, GrayImage};
use crate::index::{BallTree, QueryStats, DEFAULT_LEAF_SIZE};
use crate::util::sha256_hex;
use crate::vlad::{compute_vlad, similarity, VladDescriptor, VladNormalization, VladStore};
use crate::vocab::VisualDictionary;

pub const DEFAULT_RANKING_LENGTH: usize = 20;

pub const DICTIONARY_FILE: &str = "dictionary.vprd";
pub const VLAD_FILE: &str = "vlads.vprv";
pub const PROVENANCE_FILE: &str = "provenance.json";

/// Map construction settings beyond the extractor and dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapOptions {
    pub normalization: VladNormalization,
    pub leaf_size: usize,
    pub dataset: String,
}

impl Default for MapOptions {
    fn default() -> Self {
        MapOptions {
            normalization: VladNormalization::default(),
            leaf_size: DEFAULT_LEAF_SIZE,
            dataset: String::new(),
        }
    }
}

/// Everything needed to decide whether a map can answer a query, written to
/// `provenance.json` in a map directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset: String,
    pub image_count: usize,
    pub extractor: ExtractorConfig,
    pub normalization: VladNormalization,
    pub normalization_chain: String,
    pub similarity: String,
    pub leaf_size: usize,
    pub dictionary_fingerprint: String,
    pub dictionary_k: usize,
    pub vlad_store_sha256: String,
    pub degenerate: Vec<String>,
}

/// Timing of one query, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    /// Feature extraction plus VLAD aggregation of the query.
    pub t_descriptor: f64,
    /// Tree search and assembly of the ranking.
    pub t_search: f64,
    pub t_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedReference {
    pub id: String,
    pub distance: f64,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub query_id: String,
    pub ranking: Vec<RankedReference>,
    pub timing: TimingRecord,
    /// The query produced a degenerate VLAD; the ranking is empty.
    pub degenerate: bool,
}

impl LocalizationResult {
    pub fn best(&self) -> Option<&RankedReference> {
        self.ranking.first()
    }
}

pub struct EnvironmentMap {
    dictionary: VisualDictionary,
    vlads: VladStore,
    /// `None` when every reference is degenerate.
    tree: Option<BallTree>,
    extractor: Arc<dyn Extractor>,
    provenance: Provenance,
}

impl fmt::Debug for EnvironmentMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnvironmentMap")
            .field("dataset", &self.provenance.dataset)
            .field("images", &self.vlads.len())
            .field("indexed", &self.indexed_len())
            .field("extractor", &self.provenance.extractor)
            .field("dictionary", &self.provenance.dictionary_fingerprint)
            .finish()
    }
}

impl EnvironmentMap {
    /// Assembles a map from an existing VLAD store and indexes it.
    pub fn from_parts(
        dictionary: VisualDictionary,
        vlads: VladStore,
        extractor: ExtractorConfig,
        options: &MapOptions,
    ) -> Result<Self> {
        if vlads.is_empty() {
            return Err(Error::Empty("reference dataset"));
        }
        check_kind(&dictionary, &extractor)?;
        if (vlads.k, vlads.dim) != (dictionary.k(), dictionary.dim()) {
            return Err(Error::MapMismatch(format!(
                "VLAD store has {}x{} blocks but the dictionary has {}x{}",
                vlads.k,
                vlads.dim,
                dictionary.k(),
                dictionary.dim()
            )));
        }
        let points: Vec<(usize, Arc<[f32]>)> = vlads
            .entries
            .iter()
            .enumerate()
            .filter(|(_, (_, v))| !v.degenerate)
            .map(|(i, (_, v))| (i, v.values.clone()))
            .collect();
        let tree = if points.is_empty() {
            None
        } else {
            Some(BallTree::build(points, options.leaf_size)?)
        };
        let provenance = Provenance {
            dataset: options.dataset.clone(),
            image_count: vlads.len(),
            extractor: extractor.clone(),
            normalization: options.normalization,
            normalization_chain: options.normalization.describe(),
            similarity: "1 / (1 + euclidean distance)".into(),
            leaf_size: options.leaf_size,
            dictionary_fingerprint: dictionary.fingerprint_hex(),
            dictionary_k: dictionary.k(),
            vlad_store_sha256: sha256_hex(&vlads.to_bytes()),
            degenerate: vlads
                .entries
                .iter()
                .filter(|(_, v)| v.degenerate)
                .map(|(id, _)| id.clone())
                .collect(),
        };
        Ok(EnvironmentMap {
            extractor: Arc::from(extractor.build()?),
            dictionary,
            vlads,
            tree,
            provenance,
        })
    }

    pub fn dictionary(&self) -> &VisualDictionary {
        &self.dictionary
    }

    pub fn vlads(&self) -> &VladStore {
        &self.vlads
    }

    pub fn tree(&self) -> Option<&BallTree> {
        self.tree.as_ref()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn extractor_config(&self) -> &ExtractorConfig {
        &self.provenance.extractor
    }

    pub fn normalization(&self) -> VladNormalization {
        self.provenance.normalization
    }

    /// Number of reference images, degenerate ones included.
    pub fn len(&self) -> usize {
        self.vlads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vlads.is_empty()
    }

    pub fn indexed_len(&self) -> usize {
        self.tree.as_ref().map_or(0, BallTree::len)
    }

    /// Fails unless queries described with `extractor` (and, when given, the
    /// dictionary with fingerprint `dictionary_fingerprint`) can be answered.
    pub fn check_compatible(
        &self,
        extractor: &ExtractorConfig,
        dictionary_fingerprint: Option<&str>,
    ) -> Result<()> {
        if extractor != &self.provenance.extractor {
            return Err(Error::MapMismatch(format!(
                "map was built with extractor {} ({}), run uses {} ({})",
                self.provenance.extractor.name(),
                serde_json::to_string(&self.provenance.extractor)?,
                extractor.name(),
                serde_json::to_string(extractor)?,
            )));
        }
        if let Some(fp) = dictionary_fingerprint {
            if fp != self.provenance.dictionary_fingerprint {
                return Err(Error::MapMismatch(format!(
                    "map dictionary {} differs from {fp}",
                    self.provenance.dictionary_fingerprint
                )));
            }
        }
        Ok(())
    }

    /// Writes the dictionary, the VLAD store and the provenance record.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.dictionary.save(dir.join(DICTIONARY_FILE))?;
        self.vlads.save(dir.join(VLAD_FILE))?;
        std::fs::write(
            dir.join(PROVENANCE_FILE),
            serde_json::to_vec_pretty(&self.provenance)?,
        )?;
        Ok(())
    }

    /// Loads a map directory and rebuilds the tree.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let provenance: Provenance = {
            let path = dir.join(PROVENANCE_FILE);
            let bytes = crate::util::read_file(&path)?;
            serde_json::from_slice(&bytes)?
        };
        let dictionary = VisualDictionary::load(dir.join(DICTIONARY_FILE))?;
        let vlads = VladStore::load(dir.join(VLAD_FILE))?;
        if dictionary.fingerprint_hex() != provenance.dictionary_fingerprint {
            return Err(Error::MapMismatch(format!(
                "{} has fingerprint {} but provenance records {}",
                DICTIONARY_FILE,
                dictionary.fingerprint_hex(),
                provenance.dictionary_fingerprint
            )));
        }
        let store_hash = sha256_hex(&vlads.to_bytes());
        if store_hash != provenance.vlad_store_sha256 {
            return Err(Error::MapMismatch(format!(
                "{VLAD_FILE} hash {store_hash} does not match provenance"
            )));
        }
        let options = MapOptions {
            normalization: provenance.normalization,
            leaf_size: provenance.leaf_size,
            dataset: provenance.dataset.clone(),
        };
        Self::from_parts(dictionary, vlads, provenance.extractor, &options)
    }

    /// Ranks the references for an already aggregated query descriptor.
    pub fn rank(&self, query: &VladDescriptor, n: usize) -> Result<(Vec<RankedReference>, QueryStats)> {
        if n == 0 {
            return Err(Error::InvalidParameter("n must be >= 1".into()));
        }
        if query.degenerate {
            return Ok((Vec::new(), QueryStats::default()));
        }
        let mut ranking = Vec::with_capacity(n.min(self.len()));
        let mut stats = QueryStats::default();
        if let Some(tree) = &self.tree {
            let (hits, s) = tree.query_knn_with_stats(&query.values, n)?;
            stats = s;
            ranking.extend(hits.into_iter().map(|h| RankedReference {
                id: self.vlads.entries[h.id].0.clone(),
                distance: h.distance,
                similarity: similarity(h.distance),
            }));
        }
        // Degenerate references are not indexed; they fill the tail of the
        // ranking with zero similarity.
        let missing = n.min(self.len()).saturating_sub(ranking.len());
        ranking.extend(
            self.vlads
                .entries
                .iter()
                .filter(|(_, v)| v.degenerate)
                .take(missing)
                .map(|(id, _)| RankedReference {
                    id: id.clone(),
                    distance: f64::INFINITY,
                    similarity: 0.0,
                }),
        );
        Ok((ranking, stats))
    }

    /// VLAD of a feature set against this map's dictionary.
    pub fn describe(&self, features: &FeatureSet) -> Result<VladDescriptor> {
        compute_vlad(features, &self.dictionary, self.provenance.normalization)
    }
}

fn check_kind(dictionary: &VisualDictionary, extractor: &ExtractorConfig) -> Result<()> {
    if dictionary.kind() != extractor.descriptor_kind() {
        return Err(Error::KindMismatch {
            expected: dictionary.kind(),
            found: extractor.descriptor_kind(),
        });
    }
    Ok(())
}

/// Builds a map from in-memory reference images.
pub fn build_map(
    refs: &[(String, GrayImage)],
    dictionary: &VisualDictionary,
    extractor: &ExtractorConfig,
    options: &MapOptions,
) -> Result<EnvironmentMap> {
    build_map_with(refs.len(), |i| Ok((refs[i].0.clone(), refs[i].1.clone())), dictionary, extractor, options)
}

/// Builds a map from image files, loading them on demand.
pub fn build_map_from_paths(
    refs: &[(String, PathBuf)],
    dictionary: &VisualDictionary,
    extractor: &ExtractorConfig,
    options: &MapOptions,
) -> Result<EnvironmentMap> {
    build_map_with(
        refs.len(),
        |i| Ok((refs[i].0.clone(), load_image(&refs[i].1)?)),
        dictionary,
        extractor,
        options,
    )
}

fn build_map_with<F>(
    count: usize,
    load: F,
    dictionary: &VisualDictionary,
    extractor: &ExtractorConfig,
    options: &MapOptions,
) -> Result<EnvironmentMap>
where
    F: Fn(usize) -> Result<(String, GrayImage)> + Sync,
{
    if count == 0 {
        return Err(Error::Empty("reference dataset"));
    }
    check_kind(dictionary, extractor)?;
    let ex = extractor.build()?;
    let vlads: Vec<(String, VladDescriptor)> = (0..count)
        .into_par_iter()
        .map(|i| {
            let (id, img) = load(i)?;
            let fs = ex.extract(&id, &img)?;
            let v = compute_vlad(&fs, dictionary, options.normalization)?;
            Ok((id, v))
        })
        .collect::<Result<_>>()?;
    let mut store = VladStore::new(dictionary.k(), dictionary.dim());
    for (id, v) in vlads {
        store.push(id, v)?;
    }
    EnvironmentMap::from_parts(dictionary.clone(), store, extractor.clone(), options)
}

/// Localizes one query frame, returning up to `n` references.
pub fn localize(
    query_id: &str,
    query: &GrayImage,
    map: &EnvironmentMap,
    n: usize,
) -> Result<LocalizationResult> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    let start = Instant::now();
    let features = map.extractor.extract(query_id, query)?;
    let vlad = map.describe(&features)?;
    let described = Instant::now();
    let (ranking, _) = map.rank(&vlad, n)?;
    let done = Instant::now();
    Ok(LocalizationResult {
        query_id: query_id.to_string(),
        ranking,
        timing: TimingRecord {
            t_descriptor: (described - start).as_secs_f64(),
            t_search: (done - described).as_secs_f64(),
            t_total: (done - start).as_secs_f64(),
        },
        degenerate: vlad.degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{BinaryParams, DescriptorKind};
    use crate::synthetic::texture;
    use crate::vocab::{train_dictionary, KMeansParams};

    fn binary_config() -> ExtractorConfig {
        ExtractorConfig::Binary(BinaryParams {
            max_features: 200,
            ..BinaryParams::default()
        })
    }

    fn fixture(n: usize) -> (Vec<(String, GrayImage)>, VisualDictionary) {
        let imgs: Vec<(String, GrayImage)> = (0..n)
            .map(|i| (format!("img{i:02}"), texture(160, 120, 100 + i as u64)))
            .collect();
        let cfg = binary_config();
        let feats: Vec<FeatureSet> = imgs
            .iter()
            .map(|(id, img)| crate::features::extract(id, img, &cfg).unwrap())
            .collect();
        let dict = train_dictionary(
            &feats,
            &KMeansParams {
                k: 8,
                ..KMeansParams::default()
            },
        )
        .unwrap();
        (imgs, dict)
    }

    #[test]
    fn single_image_map_returns_itself() {
        let (imgs, dict) = fixture(1);
        let map = build_map(&imgs, &dict, &binary_config(), &MapOptions::default()).unwrap();
        assert_eq!(map.len(), 1);
        let res = localize("img00", &imgs[0].1, &map, 5).unwrap();
        assert_eq!(res.ranking.len(), 1);
        assert_eq!(res.ranking[0].id, "img00");
        assert_eq!(res.ranking[0].similarity, 1.0);
    }

    #[test]
    fn blank_frames_are_degenerate() {
        let (mut imgs, dict) = fixture(4);
        imgs.push(("blank".into(), GrayImage::filled(160, 120, 128).unwrap()));
        let map = build_map(&imgs, &dict, &binary_config(), &MapOptions::default()).unwrap();
        assert_eq!(map.len(), 5);
        assert_eq!(map.indexed_len(), 4);
        assert_eq!(map.provenance().degenerate, vec!["blank".to_string()]);

        let res = localize("q", &imgs[4].1, &map, 3).unwrap();
        assert!(res.degenerate);
        assert!(res.ranking.is_empty());

        let res = localize("q", &imgs[2].1, &map, 10).unwrap();
        assert_eq!(res.ranking.len(), 5);
        assert_eq!(res.ranking[0].id, "img02");
        assert_eq!(res.ranking[4].id, "blank");
        assert!(res.ranking.windows(2).all(|w| w[0].similarity >= w[1].similarity));
    }

    #[test]
    fn self_retrieval_and_timing() {
        let (imgs, dict) = fixture(6);
        let map = build_map(&imgs, &dict, &binary_config(), &MapOptions::default()).unwrap();
        for (id, img) in &imgs {
            let res = localize(id, img, &map, 3).unwrap();
            assert_eq!(&res.ranking[0].id, id);
            assert!(res.ranking[0].distance <= 1e-9);
            let t = res.timing;
            assert!((t.t_total - t.t_descriptor - t.t_search).abs() < 1e-6);
        }
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let (imgs, dict) = fixture(2);
        let float = ExtractorConfig::from_kind("float").unwrap();
        let err = build_map(&imgs, &dict, &float, &MapOptions::default()).unwrap_err();
        assert!(matches!(
            err,
            Error::KindMismatch {
                expected: DescriptorKind::Binary,
                found: DescriptorKind::Float
            }
        ));
        assert!(build_map(&[], &dict, &binary_config(), &MapOptions::default()).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let (imgs, dict) = fixture(3);
        let map = build_map(&imgs, &dict, &binary_config(), &MapOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        map.save(dir.path()).unwrap();
        let back = EnvironmentMap::load(dir.path()).unwrap();
        assert_eq!(back.provenance(), map.provenance());
        assert_eq!(back.vlads(), map.vlads());
        back.check_compatible(&binary_config(), Some(&dict.fingerprint_hex())).unwrap();
        let other = ExtractorConfig::Binary(BinaryParams::default());
        assert!(matches!(back.check_compatible(&other, None), Err(Error::MapMismatch(_))));

        // tampering with the store is detected
        let mut bytes = std::fs::read(dir.path().join(VLAD_FILE)).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        std::fs::write(dir.path().join(VLAD_FILE), bytes).unwrap();
        assert!(matches!(EnvironmentMap::load(dir.path()), Err(Error::MapMismatch(_))));
    }

    #[test]
    fn build_is_deterministic() {
        let (imgs, dict) = fixture(5);
        let a = build_map(&imgs, &dict, &binary_config(), &MapOptions::default()).unwrap();
        let b = build_map(&imgs, &dict, &binary_config(), &MapOptions::default()).unwrap();
        assert_eq!(a.vlads().to_bytes(), b.vlads().to_bytes());
    }
}
