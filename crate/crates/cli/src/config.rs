//! Run configuration, read from a TOML file.
//!
//! ```toml
//! seed = 0
//!
//! [extractor]
//! kind = "binary"          # binary | float | external
//! fast_threshold = 20
//! max_features = 1000
//!
//! [dictionary]
//! k = 256
//! max_iters = 100
//! tol = 1e-4
//!
//! [vlad]
//! intra = true
//! signed_sqrt = true
//!
//! [index]
//! leaf_size = 16
//!
//! [localize]
//! n = 20
//! parallel = false
//!
//! [correlation]
//! pairs = 10000
//!
//! [[bench.families]]
//! label = "binary"
//! k = 256
//! extractor = { kind = "binary" }
//! ```
//!
//! Every section is optional; missing keys take the defaults shown.

use std::path::Path;

use serde::{Deserialize, Serialize};
use vpr_core::features::{BinaryParams, FloatParams};
use vpr_core::pipeline::MapOptions;
use vpr_core::synthetic::SyntheticConfig;
use vpr_core::vocab::{PRESET_BINARY_LOW, PRESET_FLOAT_HIGH};
use vpr_core::{DescriptorKind, ExtractorConfig, KMeansParams, VladNormalization};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DictionaryConfig {
    pub k: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        let p = KMeansParams::default();
        DictionaryConfig {
            k: p.k,
            max_iters: p.max_iters,
            tol: p.tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexConfig {
    pub leaf_size: usize,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            leaf_size: vpr_core::index::DEFAULT_LEAF_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizeConfig {
    /// Length of each ranking.
    pub n: usize,
    /// Localize queries concurrently. Timings then measure throughput rather
    /// than single-query latency.
    pub parallel: bool,
}

impl Default for LocalizeConfig {
    fn default() -> Self {
        LocalizeConfig {
            n: vpr_core::pipeline::DEFAULT_RANKING_LENGTH,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelationConfig {
    pub pairs: usize,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        CorrelationConfig {
            pairs: vpr_core::eval::DEFAULT_CORRELATION_PAIRS,
        }
    }
}

/// One descriptor family of a benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchFamily {
    pub label: String,
    pub extractor: ExtractorConfig,
    /// Dictionary size; defaults to the preset of the descriptor kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

impl BenchFamily {
    pub fn k(&self) -> usize {
        self.k.unwrap_or_else(|| preset_k(self.extractor.descriptor_kind()))
    }
}

/// Dictionary size used for a descriptor kind when none is configured.
pub fn preset_k(kind: DescriptorKind) -> usize {
    match kind {
        DescriptorKind::Binary => PRESET_BINARY_LOW,
        DescriptorKind::Float => PRESET_FLOAT_HIGH,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub families: Vec<BenchFamily>,
    /// Localization passes per split; accuracy is taken from the first,
    /// timing is reported for every pass.
    pub runs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            families: vec![
                BenchFamily {
                    label: "binary".into(),
                    extractor: ExtractorConfig::Binary(BinaryParams::default()),
                    k: None,
                },
                BenchFamily {
                    label: "float".into(),
                    extractor: ExtractorConfig::Float(FloatParams::default()),
                    k: None,
                },
            ],
            runs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub extractor: ExtractorConfig,
    pub dictionary: DictionaryConfig,
    pub vlad: VladNormalization,
    pub index: IndexConfig,
    pub localize: LocalizeConfig,
    pub correlation: CorrelationConfig,
    pub bench: BenchConfig,
    pub synthetic: SyntheticConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            extractor: ExtractorConfig::Binary(BinaryParams::default()),
            dictionary: DictionaryConfig::default(),
            vlad: VladNormalization::default(),
            index: IndexConfig::default(),
            localize: LocalizeConfig::default(),
            correlation: CorrelationConfig::default(),
            bench: BenchConfig::default(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::validation(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::at(path, e))?;
        Self::from_toml(&text).map_err(|e| CliError::at(path, e))
    }

    /// Loads `path` if given, otherwise the defaults; `seed` overrides the
    /// configured seed.
    pub fn resolve(path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(s) = seed {
            cfg.seed = s;
            cfg.synthetic.seed = s;
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config is serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(CliError::validation(msg.to_string()));
        if self.dictionary.k < 2 {
            return bad("dictionary.k must be >= 2");
        }
        if self.dictionary.max_iters == 0 {
            return bad("dictionary.max_iters must be >= 1");
        }
        if self.dictionary.tol.is_nan() || self.dictionary.tol < 0.0 {
            return bad("dictionary.tol must be >= 0");
        }
        if self.index.leaf_size == 0 {
            return bad("index.leaf_size must be >= 1");
        }
        if self.localize.n == 0 {
            return bad("localize.n must be >= 1");
        }
        if self.correlation.pairs == 0 {
            return bad("correlation.pairs must be >= 1");
        }
        if self.bench.runs == 0 {
            return bad("bench.runs must be >= 1");
        }
        if self.synthetic.places == 0 {
            return bad("synthetic.places must be >= 1");
        }
        let mut labels = std::collections::HashSet::new();
        for fam in &self.bench.families {
            if !labels.insert(fam.label.as_str()) {
                return Err(CliError::validation(format!("duplicate bench family `{}`", fam.label)));
            }
            if fam.k() < 2 {
                return Err(CliError::validation(format!("bench family `{}` needs k >= 2", fam.label)));
            }
            fam.extractor.build()?;
        }
        self.extractor.build()?;
        Ok(())
    }

    pub fn kmeans(&self) -> KMeansParams {
        KMeansParams {
            k: self.dictionary.k,
            seed: self.seed,
            max_iters: self.dictionary.max_iters,
            tol: self.dictionary.tol,
        }
    }

    pub fn map_options(&self, dataset: &str) -> MapOptions {
        MapOptions {
            normalization: self.vlad,
            leaf_size: self.index.leaf_size,
            dataset: dataset.to_string(),
        }
    }
}
