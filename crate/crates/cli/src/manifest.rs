//! Dataset manifests and benchmark bundles.
//!
//! A manifest is a TOML file naming an ordered list of images:
//!
//! ```toml
//! name = "loop-00"
//! role = "reference"        # training | reference | query
//! image_dir = "images"      # relative to the manifest file
//! images = ["f0000.pgm", "f0001.pgm"]
//! ground_truth = "gt.csv"   # optional, query manifests only
//! ```
//!
//! The image id is the file name without its extension.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Training,
    Reference,
    Query,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::Training => "training",
            Role::Reference => "reference",
            Role::Query => "query",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    pub name: String,
    pub role: Role,
    #[serde(default)]
    pub image_dir: PathBuf,
    pub images: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
}

/// A validated manifest with resolved paths.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub role: Role,
    pub source: PathBuf,
    /// `(id, path)` in manifest order.
    pub images: Vec<(String, PathBuf)>,
    pub ground_truth: Option<PathBuf>,
}

fn image_id(file: &str) -> String {
    Path::new(file)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::at(path, e))?;
        let file: ManifestFile = toml::from_str(&text)
            .map_err(|e| CliError::at(path, CliError::validation(format!("invalid manifest: {e}"))))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_file(file, base, path).map_err(|e| CliError::at(path, e))
    }

    fn from_file(file: ManifestFile, base: &Path, source: &Path) -> Result<Self> {
        let dir = base.join(&file.image_dir);
        let mut seen = HashSet::new();
        let mut missing = Vec::new();
        let mut images = Vec::with_capacity(file.images.len());
        for name in &file.images {
            let id = image_id(name);
            if id.is_empty() {
                return Err(CliError::validation(format!("image entry `{name}` has no file name")));
            }
            if !seen.insert(id.clone()) {
                return Err(CliError::validation(format!("duplicate image id `{id}`")));
            }
            let p = dir.join(name);
            if !p.is_file() {
                missing.push(p.display().to_string());
            }
            images.push((id, p));
        }
        if !missing.is_empty() {
            return Err(CliError::validation(format!("missing images: {}", missing.join(", "))));
        }
        let ground_truth = file.ground_truth.map(|g| base.join(g));
        if let Some(g) = &ground_truth {
            if !g.is_file() {
                return Err(CliError::validation(format!("missing ground truth {}", g.display())));
            }
        }
        Ok(DatasetManifest {
            name: file.name,
            role: file.role,
            source: source.to_path_buf(),
            images,
            ground_truth,
        })
    }

    pub fn expect_role(&self, role: Role) -> Result<()> {
        if self.role != role {
            return Err(CliError::validation(format!(
                "{} is a {} manifest, expected {role}",
                self.source.display(),
                self.role
            )));
        }
        Ok(())
    }

    pub fn expect_non_empty(&self) -> Result<()> {
        if self.images.is_empty() {
            return Err(CliError::validation(format!("{} lists no images", self.source.display())));
        }
        Ok(())
    }

    pub fn ids(&self) -> Vec<String> {
        self.images.iter().map(|(id, _)| id.clone()).collect()
    }

    /// SHA-256 over the ids and image file contents, in order.
    pub fn fingerprint(&self) -> Result<String> {
        let mut h = Sha256::new();
        for (id, path) in &self.images {
            h.update((id.len() as u64).to_le_bytes());
            h.update(id.as_bytes());
            let bytes = std::fs::read(path).map_err(|e| CliError::at(path, e))?;
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
        Ok(hex::encode(h.finalize()))
    }
}

/// Writes a manifest file for images that live in `image_dir` (relative to
/// the manifest).
pub fn write_manifest(
    path: &Path,
    name: &str,
    role: Role,
    image_dir: &Path,
    images: &[String],
    ground_truth: Option<&Path>,
) -> Result<()> {
    let file = ManifestFile {
        name: name.to_string(),
        role,
        image_dir: image_dir.to_path_buf(),
        images: images.to_vec(),
        ground_truth: ground_truth.map(Path::to_path_buf),
    };
    let text = toml::to_string(&file).map_err(|e| CliError::validation(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| CliError::at(path, e))?;
    Ok(())
}

/// A complete benchmark: training, reference and query manifests.
///
/// ```toml
/// name = "synthetic"
/// training = "training.toml"
/// reference = "reference.toml"
/// queries = ["query_tilt15.toml"]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleFile {
    pub name: String,
    pub training: PathBuf,
    pub reference: PathBuf,
    pub queries: Vec<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub name: String,
    pub training: DatasetManifest,
    pub reference: DatasetManifest,
    pub queries: Vec<DatasetManifest>,
}

impl Bundle {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::at(path, e))?;
        let file: BundleFile = toml::from_str(&text)
            .map_err(|e| CliError::at(path, CliError::validation(format!("invalid bundle: {e}"))))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let training = DatasetManifest::load(&base.join(&file.training))?;
        training.expect_role(Role::Training)?;
        let reference = DatasetManifest::load(&base.join(&file.reference))?;
        reference.expect_role(Role::Reference)?;
        let mut queries = Vec::new();
        for q in &file.queries {
            let m = DatasetManifest::load(&base.join(q))?;
            m.expect_role(Role::Query)?;
            if m.ground_truth.is_none() {
                return Err(CliError::validation(format!(
                    "query manifest {} has no ground truth",
                    m.source.display()
                )));
            }
            queries.push(m);
        }
        if queries.is_empty() {
            return Err(CliError::at(path, CliError::validation("bundle lists no query sets")));
        }
        Ok(Bundle {
            name: file.name,
            training,
            reference,
            queries,
        })
    }
}
