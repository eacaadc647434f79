//! Precision-recall evaluation, timing aggregation and the cross-dataset
//! descriptor correlation measure, plus the file formats that carry them.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{DescriptorKind, FeatureSet};
use crate::pipeline::{LocalizationResult, RankedReference, TimingRecord};

pub const DEFAULT_CORRELATION_PAIRS: usize = 10_000;

/// Query id to the set of reference ids that show the same place.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    order: Vec<String>,
    entries: HashMap<String, BTreeSet<String>>,
}

impl GroundTruth {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces an entry. The reference set must not be empty.
    pub fn insert<I, S>(&mut self, query: impl Into<String>, refs: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let query = query.into();
        let refs: BTreeSet<String> = refs.into_iter().map(Into::into).collect();
        if refs.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "ground truth for {query} has no reference ids"
            )));
        }
        if self.entries.insert(query.clone(), refs).is_none() {
            self.order.push(query);
        }
        Ok(())
    }

    pub fn get(&self, query: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(query)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Entries in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.order.iter().map(|q| (q.as_str(), &self.entries[q]))
    }

    /// Lists every query or reference id that does not exist in the datasets.
    pub fn validate(&self, query_ids: &[String], reference_ids: &[String]) -> Result<()> {
        let queries: HashSet<&str> = query_ids.iter().map(String::as_str).collect();
        let refs: HashSet<&str> = reference_ids.iter().map(String::as_str).collect();
        let mut unknown = Vec::new();
        for (q, rs) in self.iter() {
            if !queries.contains(q) {
                unknown.push(format!("query {q}"));
            }
            for r in rs {
                if !refs.contains(r.as_str()) {
                    unknown.push(format!("reference {r} (for query {q})"));
                }
            }
        }
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::UnknownGroundTruthIds(unknown))
        }
    }

    /// Reads `query_id,reference_ids` rows; reference ids are separated by
    /// semicolons. A header row is optional.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut gt = GroundTruth::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != 2 {
                return Err(Error::format(
                    "ground truth",
                    format!("row {} has {} fields, expected 2", line + 1, record.len()),
                ));
            }
            if line == 0 && &record[0] == "query_id" {
                continue;
            }
            let refs: Vec<&str> = record[1].split(';').map(str::trim).filter(|s| !s.is_empty()).collect();
            gt.insert(&record[0], refs).map_err(|_| {
                Error::format("ground truth", format!("row {} has no reference ids", line + 1))
            })?;
        }
        Ok(gt)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = crate::util::read_file(path.as_ref())?;
        Self::from_csv(bytes.as_slice())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["query_id", "reference_ids"])?;
        for (q, rs) in self.iter() {
            let joined = rs.iter().map(String::as_str).collect::<Vec<_>>().join(";");
            w.write_record([q, joined.as_str()])?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Precision-recall curve of rank-1 matches. Points are ordered by
/// decreasing threshold, so recall is non-decreasing along the list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    /// Area under the curve divided by the largest recall reached, i.e. the
    /// mean precision over the attainable recall range. 0 when no rank-1
    /// match is correct.
    pub auc: f64,
    pub queries: usize,
    pub correct_at_rank1: usize,
}

impl PrCurve {
    pub fn max_recall(&self) -> f64 {
        self.points.iter().map(|p| p.recall).fold(0.0, f64::max)
    }
}

/// Single-best-match precision-recall curve.
///
/// Every query contributes its rank-1 reference and similarity. At threshold
/// `t` the predictions are the queries whose rank-1 similarity is at least
/// `t`; thresholds run over the distinct observed similarities. Queries with
/// an empty ranking never predict.
pub fn compute_pr(results: &[LocalizationResult], gt: &GroundTruth) -> Result<PrCurve> {
    if results.is_empty() {
        return Err(Error::Empty("localization results"));
    }
    let missing: Vec<String> = results
        .iter()
        .filter(|r| gt.get(&r.query_id).is_none())
        .map(|r| r.query_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingGroundTruth(missing));
    }
    let mut scored: Vec<(f64, bool)> = results
        .iter()
        .filter_map(|r| {
            let best = r.ranking.first()?;
            Some((best.similarity, gt.get(&r.query_id)?.contains(&best.id)))
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let total = results.len() as f64;
    let mut points = Vec::new();
    let (mut predicted, mut correct) = (0usize, 0usize);
    let mut i = 0;
    while i < scored.len() {
        let t = scored[i].0;
        while i < scored.len() && scored[i].0 == t {
            predicted += 1;
            correct += scored[i].1 as usize;
            i += 1;
        }
        points.push(PrPoint {
            threshold: t,
            precision: correct as f64 / predicted as f64,
            recall: correct as f64 / total,
        });
    }
    Ok(PrCurve {
        auc: normalized_auc(&points),
        points,
        queries: results.len(),
        correct_at_rank1: correct,
    })
}

fn normalized_auc(points: &[PrPoint]) -> f64 {
    let Some(first) = points.first() else {
        return 0.0;
    };
    let max_recall = points.iter().map(|p| p.recall).fold(0.0, f64::max);
    if max_recall == 0.0 {
        return 0.0;
    }
    let (mut prev_r, mut prev_p) = (0.0, first.precision);
    let mut area = 0.0;
    for p in points {
        area += (p.recall - prev_r) * (p.precision + prev_p) / 2.0;
        prev_r = p.recall;
        prev_p = p.precision;
    }
    area / max_recall
}

/// Order statistics of one timing component, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    /// Lower of the two central values for even counts.
    pub median: f64,
    /// Nearest-rank 95th percentile.
    pub p95: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("timing values"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let rank = (0.95 * n as f64).ceil() as usize;
        Ok(Stats {
            mean: sorted.iter().sum::<f64>() / n as f64,
            median: sorted[(n - 1) / 2],
            p95: sorted[rank.clamp(1, n) - 1],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub count: usize,
    pub t_descriptor: Stats,
    pub t_search: Stats,
    pub t_total: Stats,
}

pub fn aggregate_timing(results: &[LocalizationResult]) -> Result<TimingSummary> {
    if results.is_empty() {
        return Err(Error::Empty("localization results"));
    }
    let pick = |f: fn(&TimingRecord) -> f64| results.iter().map(|r| f(&r.timing)).collect::<Vec<_>>();
    Ok(TimingSummary {
        count: results.len(),
        t_descriptor: Stats::of(&pick(|t| t.t_descriptor))?,
        t_search: Stats::of(&pick(|t| t.t_search))?,
        t_total: Stats::of(&pick(|t| t.t_total))?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub value: f64,
    pub pairs_used: usize,
    pub pairs_skipped: usize,
    pub seed: u64,
}

/// Pearson correlation of two equally long vectors, `None` if either is
/// constant.
pub fn pearson(x: &[f32], y: &[f32]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().map(|&v| v as f64).sum::<f64>() / n;
    let my = y.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a as f64 - mx, b as f64 - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Kind and dimension shared by the non-empty feature sets of one side.
fn side_shape(side: &[FeatureSet]) -> Result<(DescriptorKind, usize)> {
    let mut shape = None;
    for fs in side.iter().filter(|fs| !fs.is_empty()) {
        let this = (fs.kind(), fs.descriptors.dim());
        match shape {
            None => shape = Some(this),
            Some((kind, _)) if kind != this.0 => {
                return Err(Error::KindMismatch { expected: kind, found: this.0 })
            }
            Some((_, dim)) if dim != this.1 => {
                return Err(Error::DimensionMismatch { expected: dim, found: this.1 })
            }
            Some(_) => {}
        }
    }
    shape.ok_or(Error::Empty("descriptor set for correlation"))
}

fn side_digest(side: &[FeatureSet]) -> [u8; 32] {
    let mut h = Sha256::new();
    for fs in side {
        h.update((fs.len() as u64).to_le_bytes());
        for i in 0..fs.len() {
            for v in fs.descriptors.lifted(i) {
                h.update(v.to_le_bytes());
            }
        }
    }
    h.finalize().into()
}

/// Mean Pearson correlation over `sample_n` random descriptor pairs, one
/// descriptor from each side (binary descriptors lifted to 0/1 components).
///
/// The sides are put in a canonical order before sampling, so swapping the
/// arguments gives the same value.
pub fn correlation_coefficient(
    a: &[FeatureSet],
    b: &[FeatureSet],
    sample_n: usize,
    seed: u64,
) -> Result<CorrelationReport> {
    if sample_n == 0 {
        return Err(Error::InvalidParameter("sample_n must be >= 1".into()));
    }
    let rows = |side: &[FeatureSet]| -> Vec<(usize, usize)> {
        side.iter()
            .enumerate()
            .flat_map(|(s, fs)| (0..fs.len()).map(move |i| (s, i)))
            .collect()
    };
    let (ra, rb) = (rows(a), rows(b));
    if ra.is_empty() || rb.is_empty() {
        return Err(Error::Empty("descriptor set for correlation"));
    }
    let (ka, da) = side_shape(a)?;
    let (kb, db) = side_shape(b)?;
    if ka != kb {
        return Err(Error::KindMismatch { expected: ka, found: kb });
    }
    if da != db {
        return Err(Error::DimensionMismatch { expected: da, found: db });
    }

    let (x, rx, y, ry) = if side_digest(a) <= side_digest(b) {
        (a, &ra, b, &rb)
    } else {
        (b, &rb, a, &ra)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<((usize, usize), (usize, usize))> = (0..sample_n)
        .map(|_| (rx[rng.gen_range(0..rx.len())], ry[rng.gen_range(0..ry.len())]))
        .collect();
    let values: Vec<Option<f64>> = pairs
        .par_iter()
        .map(|&((sa, ia), (sb, ib))| {
            pearson(&x[sa].descriptors.lifted(ia), &y[sb].descriptors.lifted(ib))
        })
        .collect();
    let used: Vec<f64> = values.iter().flatten().copied().collect();
    let skipped = values.len() - used.len();
    if used.is_empty() {
        return Err(Error::AllPairsSkipped { skipped });
    }
    Ok(CorrelationReport {
        value: (used.iter().sum::<f64>() / used.len() as f64).clamp(-1.0, 1.0),
        pairs_used: used.len(),
        pairs_skipped: skipped,
        seed,
    })
}

/// Writes localization results as CSV, one row per ranked reference. A query
/// with an empty ranking gets a single row with rank 0.
pub fn write_results_csv<W: Write>(writer: W, results: &[LocalizationResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "query_id",
        "rank",
        "reference_id",
        "distance",
        "similarity",
        "t_descriptor",
        "t_search",
        "t_total",
        "degenerate",
    ])?;
    for r in results {
        let t = r.timing;
        let timing = [t.t_descriptor.to_string(), t.t_search.to_string(), t.t_total.to_string()];
        if r.ranking.is_empty() {
            w.write_record(
                [r.query_id.clone(), "0".into(), String::new(), String::new(), String::new()]
                    .into_iter()
                    .chain(timing.clone())
                    .chain([r.degenerate.to_string()]),
            )?;
        }
        for (rank, hit) in r.ranking.iter().enumerate() {
            w.write_record(
                [
                    r.query_id.clone(),
                    (rank + 1).to_string(),
                    hit.id.clone(),
                    hit.distance.to_string(),
                    hit.similarity.to_string(),
                ]
                .into_iter()
                .chain(timing.clone())
                .chain([r.degenerate.to_string()]),
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct ResultRow {
    query_id: String,
    rank: usize,
    reference_id: String,
    distance: Option<f64>,
    similarity: Option<f64>,
    t_descriptor: f64,
    t_search: f64,
    t_total: f64,
    degenerate: bool,
}

/// Reads a file written by [`write_results_csv`].
pub fn read_results_csv<R: Read>(reader: R) -> Result<Vec<LocalizationResult>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out: Vec<LocalizationResult> = Vec::new();
    for row in rdr.deserialize() {
        let row: ResultRow = row?;
        let continues = out.last().is_some_and(|r| r.query_id == row.query_id) && row.rank > 1;
        if !continues {
            out.push(LocalizationResult {
                query_id: row.query_id.clone(),
                ranking: Vec::new(),
                timing: TimingRecord {
                    t_descriptor: row.t_descriptor,
                    t_search: row.t_search,
                    t_total: row.t_total,
                },
                degenerate: row.degenerate,
            });
        }
        if row.rank == 0 {
            continue;
        }
        let current = out.last_mut().expect("pushed above");
        if row.rank != current.ranking.len() + 1 {
            return Err(Error::format(
                "results",
                format!("query {} jumps to rank {}", row.query_id, row.rank),
            ));
        }
        let (Some(distance), Some(similarity)) = (row.distance, row.similarity) else {
            return Err(Error::format(
                "results",
                format!("query {} rank {} lacks a score", row.query_id, row.rank),
            ));
        };
        current.ranking.push(RankedReference {
            id: row.reference_id,
            distance,
            similarity,
        });
    }
    Ok(out)
}

pub fn write_pr_csv<W: Write>(writer: W, curve: &PrCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["threshold", "precision", "recall"])?;
    for p in &curve.points {
        w.write_record([p.threshold.to_string(), p.precision.to_string(), p.recall.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-query timing rows.
pub fn write_timing_csv<W: Write>(writer: W, results: &[LocalizationResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["query_id", "t_descriptor", "t_search", "t_total"])?;
    for r in results {
        let t = r.timing;
        w.write_record([
            r.query_id.clone(),
            t.t_descriptor.to_string(),
            t.t_search.to_string(),
            t.t_total.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// SVG 1.1 plot with one precision-recall polyline per labelled curve.
pub fn pr_svg(curves: &[(String, PrCurve)]) -> String {
    let (w, h, m) = (640.0, 480.0, 60.0);
    let (pw, ph) = (w - 2.0 * m, h - 2.0 * m);
    let px = |r: f64| m + r * pw;
    let py = |p: f64| h - m - p * ph;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{m}" y="{m}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=10 {
        let v = i as f64 / 10.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{v:.1}</text>"#,
            px(v),
            h - m + 15.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{v:.1}</text>"#,
            m - 5.0,
            py(v) + 3.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">Recall</text>"#,
        w / 2.0,
        h - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 15 {:.1})">Precision</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (i, (label, curve)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.recall), py(p.precision)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = m + 15.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            w - m - 150.0,
            w - m - 130.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11">{} (AUC {:.3})</text>"#,
            w - m - 125.0,
            ly + 4.0,
            xml_escape(label),
            curve.auc
        );
    }
    s.push_str("</svg>\n");
    s
}
