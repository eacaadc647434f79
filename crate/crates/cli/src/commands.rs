//! Subcommand implementations. Each `cmd_*` function writes its artifacts
//! and returns a summary for the caller to print.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vpr_core::eval::{pr_svg, write_pr_csv, write_results_csv, write_timing_csv, CorrelationReport};
use vpr_core::pipeline::{build_map_from_paths, EnvironmentMap};
use vpr_core::synthetic::{self, SyntheticBundle};
use vpr_core::vocab::{sidecar_path, train_dictionary_with_report, TrainingReport};
use vpr_core::{
    aggregate_timing, compute_pr, correlation_coefficient, load_image, localize, ExtractorConfig,
    FeatureSet, GrayImage, GroundTruth, KMeansParams, LocalizationResult, PrCurve, TimingSummary,
    VisualDictionary,
};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::manifest::{write_manifest, Bundle, BundleFile, DatasetManifest, Role};

pub const TOOL: &str = concat!("vpr ", env!("CARGO_PKG_VERSION"));

/// Identity of one input artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFingerprint {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// Metadata embedded in (or written next to) every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub tool: String,
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    pub inputs: Vec<InputFingerprint>,
}

impl ArtifactMeta {
    fn new(command: &str, cfg: &RunConfig) -> Self {
        ArtifactMeta {
            tool: TOOL.into(),
            command: command.into(),
            seed: cfg.seed,
            config: cfg.clone(),
            inputs: Vec::new(),
        }
    }

    fn manifest(mut self, role: &str, m: &DatasetManifest) -> Result<Self> {
        self.inputs.push(InputFingerprint {
            role: role.into(),
            path: m.source.display().to_string(),
            sha256: m.fingerprint()?,
        });
        Ok(self)
    }

    fn file(mut self, role: &str, path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::at(path, e))?;
        self.inputs.push(InputFingerprint {
            role: role.into(),
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(self)
    }
}

/// `<path>.meta.json`
pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| CliError::at(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::at(dir, e))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::at(path, e))
}

fn load(path: &Path) -> Result<GrayImage> {
    load_image(path).map_err(|e| CliError::at(path, e))
}

/// Extracts features from every image of a manifest, in parallel.
pub fn extract_manifest(m: &DatasetManifest, extractor: &ExtractorConfig) -> Result<Vec<FeatureSet>> {
    let ex = extractor.build()?;
    m.images
        .par_iter()
        .map(|(id, path)| {
            let img = load(path)?;
            ex.extract(id, &img).map_err(|e| CliError::at(path, e))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub words: usize,
    pub descriptors: usize,
    pub final_distortion: f64,
    pub iterations: usize,
    pub converged: bool,
    pub fingerprint: String,
}

#[derive(Serialize)]
struct DictionarySidecar<'a> {
    training: &'a TrainingReport,
    meta: &'a ArtifactMeta,
}

fn train(
    cfg: &RunConfig,
    extractor: &ExtractorConfig,
    params: &KMeansParams,
    training: &DatasetManifest,
    out: &Path,
    meta: ArtifactMeta,
) -> Result<(VisualDictionary, TrainSummary)> {
    training.expect_role(Role::Training)?;
    training.expect_non_empty()?;
    let features = extract_manifest(training, extractor)?;
    let (dict, report) = train_dictionary_with_report(&features, params)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    dict.save(out).map_err(|e| CliError::at(out, e))?;
    let mut meta = meta.manifest("training", training)?;
    meta.config = cfg.clone();
    write_json(&sidecar_path(out), &DictionarySidecar { training: &report, meta: &meta })?;
    let summary = TrainSummary {
        words: dict.k(),
        descriptors: report.descriptor_count,
        final_distortion: report.final_distortion(),
        iterations: report.iterations,
        converged: report.converged,
        fingerprint: dict.fingerprint_hex(),
    };
    Ok((dict, summary))
}

/// Trains a dictionary on a training manifest and writes it with its JSON
/// sidecar.
pub fn cmd_train_dict(cfg: &RunConfig, training: &DatasetManifest, out: &Path) -> Result<TrainSummary> {
    train(
        cfg,
        &cfg.extractor,
        &cfg.kmeans(),
        training,
        out,
        ArtifactMeta::new("train-dict", cfg),
    )
    .map(|(_, s)| s)
}

#[derive(Debug, Clone, Serialize)]
pub struct MapSummary {
    pub images: usize,
    pub indexed: usize,
    pub degenerate: Vec<String>,
    pub vlad_store_sha256: String,
}

/// Metadata file written into a map directory next to the provenance record.
pub const MAP_META_FILE: &str = "meta.json";

fn build_map_dir(
    cfg: &RunConfig,
    extractor: &ExtractorConfig,
    reference: &DatasetManifest,
    dict: &VisualDictionary,
    out_dir: &Path,
    meta: ArtifactMeta,
) -> Result<MapSummary> {
    reference.expect_non_empty()?;
    let map = build_map_from_paths(&reference.images, dict, extractor, &cfg.map_options(&reference.name))?;
    map.save(out_dir).map_err(|e| CliError::at(out_dir, e))?;
    write_json(&out_dir.join(MAP_META_FILE), &meta.manifest("reference", reference)?)?;
    let p = map.provenance();
    Ok(MapSummary {
        images: map.len(),
        indexed: map.indexed_len(),
        degenerate: p.degenerate.clone(),
        vlad_store_sha256: p.vlad_store_sha256.clone(),
    })
}

/// Builds the map of a reference manifest with a trained dictionary.
pub fn cmd_build_map(
    cfg: &RunConfig,
    reference: &DatasetManifest,
    dictionary: &Path,
    out_dir: &Path,
) -> Result<MapSummary> {
    reference.expect_role(Role::Reference)?;
    let dict = VisualDictionary::load(dictionary).map_err(|e| CliError::at(dictionary, e))?;
    let meta = ArtifactMeta::new("build-map", cfg).file("dictionary", dictionary)?;
    build_map_dir(cfg, &cfg.extractor, reference, &dict, out_dir, meta)
}

/// Localizes every image of `queries`. Sequential unless `parallel`.
pub fn localize_manifest(
    map: &EnvironmentMap,
    queries: &DatasetManifest,
    n: usize,
    parallel: bool,
) -> Result<Vec<LocalizationResult>> {
    let one = |(id, path): &(String, PathBuf)| -> Result<LocalizationResult> {
        let img = load(path)?;
        localize(id, &img, map, n).map_err(|e| CliError::at(path, e))
    };
    if parallel {
        queries.images.par_iter().map(one).collect()
    } else {
        queries.images.iter().map(one).collect()
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}{suffix}"))
}

#[derive(Debug, Clone, Serialize)]
pub struct LocalizeSummary {
    pub queries: usize,
    pub degenerate: usize,
    pub timing: TimingSummary,
    pub mode: &'static str,
}

#[derive(Serialize)]
struct TimingReport<'a> {
    mode: &'static str,
    summary: &'a TimingSummary,
    meta: &'a ArtifactMeta,
}

fn mode_name(parallel: bool) -> &'static str {
    if parallel {
        "throughput"
    } else {
        "latency"
    }
}

/// Localizes a query manifest against a map directory. Writes the results
/// CSV, a per-query timing CSV, a timing summary and a metadata sidecar.
pub fn cmd_localize(
    cfg: &RunConfig,
    queries: &DatasetManifest,
    map_dir: &Path,
    out: &Path,
) -> Result<LocalizeSummary> {
    queries.expect_non_empty()?;
    let map = EnvironmentMap::load(map_dir).map_err(|e| CliError::at(map_dir, e))?;
    map.check_compatible(&cfg.extractor, None)?;
    if map.normalization() != cfg.vlad {
        return Err(vpr_core::Error::MapMismatch(format!(
            "map uses VLAD normalization `{}`, run config `{}`",
            map.normalization().describe(),
            cfg.vlad.describe()
        ))
        .into());
    }
    let parallel = cfg.localize.parallel;
    let results = localize_manifest(&map, queries, cfg.localize.n, parallel)?;
    let meta = ArtifactMeta::new("localize", cfg)
        .manifest("query", queries)?
        .file("map-provenance", &map_dir.join(vpr_core::pipeline::PROVENANCE_FILE))?;
    write_outputs(out, &results, parallel, &meta)?;
    Ok(LocalizeSummary {
        queries: results.len(),
        degenerate: results.iter().filter(|r| r.degenerate).count(),
        timing: aggregate_timing(&results)?,
        mode: mode_name(parallel),
    })
}

fn write_outputs(out: &Path, results: &[LocalizationResult], parallel: bool, meta: &ArtifactMeta) -> Result<TimingSummary> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let mut buf = Vec::new();
    write_results_csv(&mut buf, results)?;
    write_file(out, buf)?;
    write_json(&meta_path(out), meta)?;
    let mut buf = Vec::new();
    write_timing_csv(&mut buf, results)?;
    write_file(&with_suffix(out, ".timing.csv"), buf)?;
    let summary = aggregate_timing(results)?;
    write_json(
        &with_suffix(out, ".timing.json"),
        &TimingReport {
            mode: mode_name(parallel),
            summary: &summary,
            meta,
        },
    )?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveSummary {
    pub label: String,
    pub auc: f64,
    pub max_recall: f64,
    pub correct_at_rank1: usize,
    pub queries: usize,
}

impl CurveSummary {
    fn of(label: &str, c: &PrCurve) -> Self {
        CurveSummary {
            label: label.into(),
            auc: c.auc,
            max_recall: c.max_recall(),
            correct_at_rank1: c.correct_at_rank1,
            queries: c.queries,
        }
    }
}

#[derive(Serialize)]
struct EvaluationReport<'a> {
    curves: &'a [CurveSummary],
    inputs: &'a [InputFingerprint],
    tool: &'static str,
}

fn read_results(path: &Path) -> Result<Vec<LocalizationResult>> {
    let bytes = std::fs::read(path).map_err(|e| CliError::at(path, e))?;
    vpr_core::eval::read_results_csv(bytes.as_slice()).map_err(|e| CliError::at(path, e))
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Scores one or more results files against a ground truth. Writes one PR
/// CSV per results file, an SVG overlay and `evaluation.json`.
pub fn cmd_evaluate(results: &[(String, PathBuf)], ground_truth: &Path, out_dir: &Path) -> Result<Vec<CurveSummary>> {
    if results.is_empty() {
        return Err(CliError::validation("no results files given"));
    }
    let gt = GroundTruth::load(ground_truth).map_err(|e| CliError::at(ground_truth, e))?;
    create_dir(out_dir)?;
    let mut curves = Vec::new();
    let mut inputs = vec![fingerprint_file("ground-truth", ground_truth)?];
    for (label, path) in results {
        let res = read_results(path)?;
        let curve = compute_pr(&res, &gt).map_err(|e| CliError::at(path, e))?;
        let mut buf = Vec::new();
        write_pr_csv(&mut buf, &curve)?;
        write_file(&out_dir.join(format!("pr_{}.csv", sanitize(label))), buf)?;
        inputs.push(fingerprint_file("results", path)?);
        curves.push((label.clone(), curve));
    }
    write_file(&out_dir.join("pr.svg"), pr_svg(&curves))?;
    let summaries: Vec<CurveSummary> = curves.iter().map(|(l, c)| CurveSummary::of(l, c)).collect();
    write_json(
        &out_dir.join("evaluation.json"),
        &EvaluationReport {
            curves: &summaries,
            inputs: &inputs,
            tool: TOOL,
        },
    )?;
    Ok(summaries)
}

fn fingerprint_file(role: &str, path: &Path) -> Result<InputFingerprint> {
    let bytes = std::fs::read(path).map_err(|e| CliError::at(path, e))?;
    Ok(InputFingerprint {
        role: role.into(),
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

#[derive(Serialize)]
struct CorrelationOutput<'a> {
    value: f64,
    pairs_used: usize,
    pairs_skipped: usize,
    seed: u64,
    dataset_a: &'a str,
    dataset_b: &'a str,
    extractor: &'static str,
    meta: &'a ArtifactMeta,
}

/// Mean descriptor correlation between two datasets.
pub fn cmd_correlate(
    cfg: &RunConfig,
    a: &DatasetManifest,
    b: &DatasetManifest,
    out: &Path,
) -> Result<CorrelationReport> {
    a.expect_non_empty()?;
    b.expect_non_empty()?;
    let fa = extract_manifest(a, &cfg.extractor)?;
    let fb = extract_manifest(b, &cfg.extractor)?;
    let report = correlation_coefficient(&fa, &fb, cfg.correlation.pairs, cfg.seed)?;
    let meta = ArtifactMeta::new("correlate", cfg).manifest("a", a)?.manifest("b", b)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_json(
        out,
        &CorrelationOutput {
            value: report.value,
            pairs_used: report.pairs_used,
            pairs_skipped: report.pairs_skipped,
            seed: report.seed,
            dataset_a: &a.name,
            dataset_b: &b.name,
            extractor: cfg.extractor.name(),
            meta: &meta,
        },
    )?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitAccuracy {
    pub split: String,
    pub auc: f64,
    pub max_recall: f64,
    pub correct_at_rank1: usize,
    pub queries: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitTiming {
    pub split: String,
    pub runs: Vec<TimingSummary>,
    /// Mean over all runs of the per-run mean `t_total`.
    pub mean_t_total: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyReport {
    pub label: String,
    pub descriptor_kind: String,
    pub k: usize,
    pub dictionary_fingerprint: String,
    pub vlad_store_sha256: String,
    pub degenerate_references: usize,
    pub accuracy: Vec<SplitAccuracy>,
    pub timing: Vec<SplitTiming>,
}

impl FamilyReport {
    pub fn split_accuracy(&self, split: &str) -> Option<&SplitAccuracy> {
        self.accuracy.iter().find(|a| a.split == split)
    }

    pub fn split_timing(&self, split: &str) -> Option<&SplitTiming> {
        self.timing.iter().find(|t| t.split == split)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub bundle: String,
    pub families: Vec<FamilyReport>,
    pub meta: ArtifactMeta,
}

/// Non-timing part of a benchmark report; byte-identical across re-runs.
#[derive(Serialize)]
struct AccuracyReport<'a> {
    bundle: &'a str,
    families: Vec<AccuracyFamily<'a>>,
    meta: &'a ArtifactMeta,
}

#[derive(Serialize)]
struct AccuracyFamily<'a> {
    label: &'a str,
    k: usize,
    dictionary_fingerprint: &'a str,
    vlad_store_sha256: &'a str,
    accuracy: &'a [SplitAccuracy],
}

fn stage<T>(name: impl Into<String>, r: Result<T>) -> Result<T> {
    r.map_err(|e| CliError::stage(name, e))
}

/// Train, map, localize and evaluate every configured family on a bundle.
pub fn cmd_bench(cfg: &RunConfig, bundle: &Bundle, bundle_path: &Path, out_dir: &Path) -> Result<BenchReport> {
    if cfg.bench.families.is_empty() {
        return Err(CliError::validation("bench.families is empty"));
    }
    create_dir(out_dir)?;
    let mut meta = ArtifactMeta::new("bench", cfg).file("bundle", bundle_path)?;
    meta = meta.manifest("training", &bundle.training)?;
    meta = meta.manifest("reference", &bundle.reference)?;
    for q in &bundle.queries {
        meta = meta.manifest("query", q)?;
    }

    let mut families = Vec::new();
    let mut curves: Vec<Vec<(String, PrCurve)>> = vec![Vec::new(); bundle.queries.len()];
    let mut timing_rows = Vec::new();
    for fam in &cfg.bench.families {
        let label = &fam.label;
        let dir = out_dir.join(sanitize(label));
        create_dir(&dir)?;
        let params = KMeansParams {
            k: fam.k(),
            ..cfg.kmeans()
        };
        let mut fam_cfg = cfg.clone();
        fam_cfg.extractor = fam.extractor.clone();
        fam_cfg.dictionary.k = fam.k();

        let dict_path = dir.join("dictionary.vprd");
        let (dict, _) = stage(
            format!("train:{label}"),
            train(&fam_cfg, &fam.extractor, &params, &bundle.training, &dict_path, ArtifactMeta::new("bench", &fam_cfg)),
        )?;
        let map_dir = dir.join("map");
        let map_meta = ArtifactMeta::new("bench", &fam_cfg).file("dictionary", &dict_path)?;
        let map_summary = stage(
            format!("map:{label}"),
            build_map_dir(&fam_cfg, &fam.extractor, &bundle.reference, &dict, &map_dir, map_meta),
        )?;
        let map = stage(
            format!("map:{label}"),
            EnvironmentMap::load(&map_dir).map_err(|e| CliError::at(&map_dir, e)),
        )?;

        let mut accuracy = Vec::new();
        let mut timing = Vec::new();
        for (qi, q) in bundle.queries.iter().enumerate() {
            let split = q.name.clone();
            let gt_path = q.ground_truth.as_ref().expect("bundle queries carry ground truth");
            let gt = stage(
                format!("evaluate:{label}:{split}"),
                GroundTruth::load(gt_path).map_err(|e| CliError::at(gt_path, e)),
            )?;
            let mut runs = Vec::new();
            let mut first = None;
            for run in 0..cfg.bench.runs {
                let results = stage(
                    format!("localize:{label}:{split}"),
                    localize_manifest(&map, q, cfg.localize.n, cfg.localize.parallel),
                )?;
                let out = dir.join(format!("{}_run{}.csv", sanitize(&split), run + 1));
                let summary = write_outputs(&out, &results, cfg.localize.parallel, &meta)?;
                timing_rows.push((label.clone(), split.clone(), run + 1, summary));
                runs.push(summary);
                first.get_or_insert(results);
            }
            let results = first.expect("at least one run");
            let curve = stage(
                format!("evaluate:{label}:{split}"),
                compute_pr(&results, &gt).map_err(CliError::from),
            )?;
            let mut buf = Vec::new();
            write_pr_csv(&mut buf, &curve)?;
            write_file(&dir.join(format!("pr_{}.csv", sanitize(&split))), buf)?;
            accuracy.push(SplitAccuracy {
                split: split.clone(),
                auc: curve.auc,
                max_recall: curve.max_recall(),
                correct_at_rank1: curve.correct_at_rank1,
                queries: curve.queries,
            });
            let mean_t_total = runs.iter().map(|r| r.t_total.mean).sum::<f64>() / runs.len() as f64;
            timing.push(SplitTiming {
                split,
                runs,
                mean_t_total,
            });
            curves[qi].push((label.clone(), curve));
        }
        families.push(FamilyReport {
            label: label.clone(),
            descriptor_kind: fam.extractor.descriptor_kind().to_string(),
            k: dict.k(),
            dictionary_fingerprint: dict.fingerprint_hex(),
            vlad_store_sha256: map_summary.vlad_store_sha256,
            degenerate_references: map_summary.degenerate.len(),
            accuracy,
            timing,
        });
    }

    for (q, c) in bundle.queries.iter().zip(&curves) {
        write_file(&out_dir.join(format!("pr_{}.svg", sanitize(&q.name))), pr_svg(c))?;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["family", "split", "run", "mean_t_descriptor", "mean_t_search", "mean_t_total"])?;
    for (label, split, run, s) in &timing_rows {
        w.write_record([
            label.clone(),
            split.clone(),
            run.to_string(),
            s.t_descriptor.mean.to_string(),
            s.t_search.mean.to_string(),
            s.t_total.mean.to_string(),
        ])?;
    }
    write_file(&out_dir.join("timing.csv"), w.into_inner().map_err(|e| CliError::Io(e.into_error()))?)?;

    let report = BenchReport {
        bundle: bundle.name.clone(),
        families,
        meta,
    };
    write_json(
        &out_dir.join("accuracy.json"),
        &AccuracyReport {
            bundle: &report.bundle,
            families: report
                .families
                .iter()
                .map(|f| AccuracyFamily {
                    label: &f.label,
                    k: f.k,
                    dictionary_fingerprint: &f.dictionary_fingerprint,
                    vlad_store_sha256: &f.vlad_store_sha256,
                    accuracy: &f.accuracy,
                })
                .collect(),
            meta: &report.meta,
        },
    )?;
    write_json(&out_dir.join("report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SyntheticSummary {
    pub training: usize,
    pub reference: usize,
    pub query_splits: Vec<String>,
    pub bundle: PathBuf,
}

fn write_images(dir: &Path, images: &[(String, GrayImage)]) -> Result<Vec<String>> {
    create_dir(dir)?;
    images
        .par_iter()
        .map(|(id, img)| {
            let name = format!("{id}.pgm");
            let path = dir.join(&name);
            img.save_pgm(&path).map_err(|e| CliError::at(&path, e))?;
            Ok(name)
        })
        .collect()
}

/// Writes a generated bundle: PGM images, one manifest per dataset, ground
/// truth per query split and `bundle.toml`.
pub fn write_synthetic_bundle(b: &SyntheticBundle, out_dir: &Path) -> Result<SyntheticSummary> {
    create_dir(out_dir)?;
    let images = out_dir.join("images");
    let name = format!("synthetic-{}", b.config.seed);

    let files = write_images(&images.join("training"), &b.training)?;
    write_manifest(
        &out_dir.join("training.toml"),
        &format!("{name}-training"),
        Role::Training,
        Path::new("images/training"),
        &files,
        None,
    )?;
    let files = write_images(&images.join("reference"), &b.reference)?;
    write_manifest(
        &out_dir.join("reference.toml"),
        &format!("{name}-reference"),
        Role::Reference,
        Path::new("images/reference"),
        &files,
        None,
    )?;
    let mut queries = Vec::new();
    for split in &b.queries {
        let files = write_images(&images.join(&split.name), &split.images)?;
        let mut gt = GroundTruth::new();
        for (q, refs) in &split.ground_truth {
            gt.insert(q.clone(), refs.clone())?;
        }
        let gt_name = format!("gt_{}.csv", split.name);
        gt.save(out_dir.join(&gt_name))?;
        let manifest = format!("query_{}.toml", split.name);
        write_manifest(
            &out_dir.join(&manifest),
            &split.name,
            Role::Query,
            &Path::new("images").join(&split.name),
            &files,
            Some(Path::new(&gt_name)),
        )?;
        queries.push(manifest);
    }
    let bundle = BundleFile {
        name,
        training: "training.toml".into(),
        reference: "reference.toml".into(),
        queries: queries.iter().map(PathBuf::from).collect(),
    };
    let bundle_path = out_dir.join("bundle.toml");
    write_file(
        &bundle_path,
        toml::to_string(&bundle).map_err(|e| CliError::validation(e.to_string()))?,
    )?;
    Ok(SyntheticSummary {
        training: b.training.len(),
        reference: b.reference.len(),
        query_splits: b.queries.iter().map(|q| q.name.clone()).collect(),
        bundle: bundle_path,
    })
}

pub fn cmd_gen_synthetic(cfg: &RunConfig, out_dir: &Path) -> Result<SyntheticSummary> {
    let bundle = synthetic::generate(&cfg.synthetic)?;
    write_synthetic_bundle(&bundle, out_dir)
}

/// How query ids map to reference ids in generated ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GtMode {
    /// Each query matches the reference with the same id.
    SameId,
    /// Query `i` matches references `i - tolerance ..= i + tolerance`.
    Position { tolerance: usize },
}

pub fn cmd_gen_gt(queries: &DatasetManifest, reference: &DatasetManifest, mode: GtMode, out: &Path) -> Result<usize> {
    queries.expect_non_empty()?;
    reference.expect_non_empty()?;
    let ref_ids = reference.ids();
    let mut gt = GroundTruth::new();
    match mode {
        GtMode::SameId => {
            let known: std::collections::HashSet<&str> = ref_ids.iter().map(String::as_str).collect();
            let missing: Vec<String> = queries
                .ids()
                .into_iter()
                .filter(|q| !known.contains(q.as_str()))
                .collect();
            if !missing.is_empty() {
                return Err(vpr_core::Error::UnknownGroundTruthIds(missing).into());
            }
            for q in queries.ids() {
                gt.insert(q.clone(), [q])?;
            }
        }
        GtMode::Position { tolerance } => {
            if queries.images.len() > ref_ids.len() {
                return Err(CliError::validation(format!(
                    "{} queries but only {} references",
                    queries.images.len(),
                    ref_ids.len()
                )));
            }
            for (i, q) in queries.ids().into_iter().enumerate() {
                let lo = i.saturating_sub(tolerance);
                let hi = (i + tolerance).min(ref_ids.len() - 1);
                gt.insert(q, ref_ids[lo..=hi].iter().cloned())?;
            }
        }
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    gt.save(out).map_err(|e| CliError::at(out, e))?;
    Ok(gt.len())
}
