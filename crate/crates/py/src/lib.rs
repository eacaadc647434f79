//! Python bindings. Structured results (curves, timing summaries,
//! provenance) are returned as plain dicts and lists.

use std::collections::HashMap;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use serde::Serialize;
use vpr_core::pipeline::MapOptions;
use vpr_core::{Error as CoreError, VladNormalization};

fn err(e: CoreError) -> PyErr {
    match e {
        CoreError::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// 8-bit grayscale image.
#[pyclass(module = "pyvpr", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Image {
    inner: vpr_core::GrayImage,
}

#[pymethods]
impl Image {
    #[new]
    fn new(width: usize, height: usize, data: &[u8]) -> PyResult<Self> {
        let inner = vpr_core::GrayImage::new(width, height, data.to_vec()).map_err(err)?;
        Ok(Image { inner })
    }

    /// Reads a PGM or PNG file; colour images are converted to luma.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Image {
            inner: vpr_core::load_image(path).map_err(err)?,
        })
    }

    /// Seeded synthetic texture.
    #[staticmethod]
    #[pyo3(signature = (width, height, seed=0))]
    fn texture(width: usize, height: usize, seed: u64) -> Self {
        Image {
            inner: vpr_core::synthetic::texture(width, height, seed),
        }
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.inner.data())
    }

    fn save_pgm(&self, path: &str) -> PyResult<()> {
        self.inner.save_pgm(path).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{})", self.inner.width(), self.inner.height())
    }
}

/// Local features of one image.
#[pyclass(module = "pyvpr", frozen, skip_from_py_object)]
#[derive(Clone)]
struct FeatureSet {
    inner: vpr_core::FeatureSet,
}

#[pymethods]
impl FeatureSet {
    /// Builds a float feature set from descriptor rows, e.g. computed by
    /// another library. Keypoint positions are set to the origin.
    #[staticmethod]
    #[pyo3(signature = (image_id, rows))]
    fn from_rows(image_id: &str, rows: Vec<Vec<f32>>) -> PyResult<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(PyValueError::new_err("descriptor rows differ in length"));
        }
        let n = rows.len();
        let data = rows.into_iter().flatten().collect();
        let descriptors = vpr_core::DescriptorSet::from_float_rows(dim, data).map_err(err)?;
        let keypoints = vec![vpr_core::Keypoint::new(0.0, 0.0, 0); n];
        Ok(FeatureSet {
            inner: vpr_core::FeatureSet::new(image_id, keypoints, descriptors).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str, image_id: &str) -> PyResult<Self> {
        Ok(FeatureSet {
            inner: vpr_core::features::read_feature_file(path, image_id).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        vpr_core::features::write_feature_file(path, &self.inner).map_err(err)
    }

    #[getter]
    fn image_id(&self) -> &str {
        &self.inner.image_id
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind().to_string()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.descriptors.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// `(x, y, level)` per keypoint, in level-0 pixel coordinates.
    fn keypoints(&self) -> Vec<(f32, f32, usize)> {
        self.inner.keypoints.iter().map(|k| (k.x, k.y, k.level)).collect()
    }

    /// Descriptor rows as floats; binary descriptors are expanded to one
    /// 0/1 value per bit.
    fn descriptors(&self) -> Vec<Vec<f32>> {
        (0..self.inner.len()).map(|i| self.inner.descriptors.lifted(i)).collect()
    }

    fn __repr__(&self) -> String {
        format!("FeatureSet({:?}, {} {} features)", self.inner.image_id, self.inner.len(), self.kind())
    }
}

/// Feature extractor: `binary`, `float`, or any kind with a JSON parameter
/// object such as `{"max_features": 300}`.
#[pyclass(module = "pyvpr", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Extractor {
    config: vpr_core::ExtractorConfig,
}

#[pymethods]
impl Extractor {
    #[new]
    #[pyo3(signature = (kind="binary", params=None))]
    fn new(kind: &str, params: Option<&str>) -> PyResult<Self> {
        let config = match params {
            None => vpr_core::ExtractorConfig::from_kind(kind).map_err(err)?,
            Some(p) => {
                let mut obj: serde_json::Value =
                    serde_json::from_str(p).map_err(|e| PyValueError::new_err(e.to_string()))?;
                let map = obj
                    .as_object_mut()
                    .ok_or_else(|| PyValueError::new_err("params must be a JSON object"))?;
                map.insert("kind".into(), kind.into());
                serde_json::from_value(obj).map_err(|e| PyValueError::new_err(e.to_string()))?
            }
        };
        Ok(Extractor { config })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.config.name()
    }

    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.config)
    }

    fn extract(&self, py: Python<'_>, image_id: &str, image: &Image) -> PyResult<FeatureSet> {
        let inner = py
            .detach(|| vpr_core::extract(image_id, &image.inner, &self.config))
            .map_err(err)?;
        Ok(FeatureSet { inner })
    }

    fn __repr__(&self) -> String {
        format!("Extractor({:?})", self.config.name())
    }
}

/// k-means visual dictionary.
#[pyclass(module = "pyvpr", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Dictionary {
    inner: vpr_core::VisualDictionary,
}

#[pymethods]
impl Dictionary {
    #[staticmethod]
    #[pyo3(signature = (features, k, seed=0, max_iters=100, tol=1e-4))]
    fn train(
        py: Python<'_>,
        features: Vec<PyRef<'_, FeatureSet>>,
        k: usize,
        seed: u64,
        max_iters: usize,
        tol: f64,
    ) -> PyResult<Self> {
        let sets: Vec<vpr_core::FeatureSet> = features.iter().map(|f| f.inner.clone()).collect();
        let params = vpr_core::KMeansParams {
            k,
            seed,
            max_iters,
            tol,
        };
        let inner = py.detach(|| vpr_core::train_dictionary(&sets, &params)).map_err(err)?;
        Ok(Dictionary { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Dictionary {
            inner: vpr_core::VisualDictionary::load(path).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind().to_string()
    }

    #[getter]
    fn fingerprint(&self) -> String {
        self.inner.fingerprint_hex()
    }

    fn centroid(&self, j: usize) -> PyResult<Vec<f32>> {
        if j >= self.inner.k() {
            return Err(PyValueError::new_err(format!("centroid {j} out of range")));
        }
        Ok(self.inner.centroid(j).to_vec())
    }

    /// Normalized VLAD descriptor of a feature set; all zeros when the set is
    /// empty or its residuals cancel.
    #[pyo3(signature = (features, intra=true, signed_sqrt=true))]
    fn vlad(&self, features: &FeatureSet, intra: bool, signed_sqrt: bool) -> PyResult<Vec<f32>> {
        let norm = VladNormalization { intra, signed_sqrt };
        let v = vpr_core::compute_vlad(&features.inner, &self.inner, norm).map_err(err)?;
        Ok(v.values.to_vec())
    }

    fn __repr__(&self) -> String {
        format!("Dictionary(k={}, dim={}, kind={:?})", self.inner.k(), self.inner.dim(), self.kind())
    }
}

/// Ranked references for one query.
#[pyclass(module = "pyvpr", frozen, skip_from_py_object)]
#[derive(Clone)]
struct LocalizationResult {
    inner: vpr_core::LocalizationResult,
}

#[pymethods]
impl LocalizationResult {
    #[getter]
    fn query_id(&self) -> &str {
        &self.inner.query_id
    }

    /// `(reference_id, distance, similarity)` by increasing distance.
    #[getter]
    fn ranking(&self) -> Vec<(String, f64, f64)> {
        self.inner
            .ranking
            .iter()
            .map(|r| (r.id.clone(), r.distance, r.similarity))
            .collect()
    }

    #[getter]
    fn best(&self) -> Option<String> {
        self.inner.best().map(|r| r.id.clone())
    }

    #[getter]
    fn degenerate(&self) -> bool {
        self.inner.degenerate
    }

    #[getter]
    fn t_descriptor(&self) -> f64 {
        self.inner.timing.t_descriptor
    }

    #[getter]
    fn t_search(&self) -> f64 {
        self.inner.timing.t_search
    }

    #[getter]
    fn t_total(&self) -> f64 {
        self.inner.timing.t_total
    }

    fn __repr__(&self) -> String {
        format!("LocalizationResult({:?}, best={:?})", self.inner.query_id, self.best())
    }
}

/// Indexed VLAD descriptors of a set of reference images.
#[pyclass(module = "pyvpr", frozen, skip_from_py_object)]
struct EnvironmentMap {
    inner: vpr_core::EnvironmentMap,
}

#[pymethods]
impl EnvironmentMap {
    /// Builds a map from `(image_id, Image)` pairs.
    #[staticmethod]
    #[pyo3(signature = (images, dictionary, extractor, leaf_size=16, dataset="", intra=true, signed_sqrt=true))]
    #[allow(clippy::too_many_arguments)]
    fn build(
        py: Python<'_>,
        images: Vec<(String, PyRef<'_, Image>)>,
        dictionary: &Dictionary,
        extractor: &Extractor,
        leaf_size: usize,
        dataset: &str,
        intra: bool,
        signed_sqrt: bool,
    ) -> PyResult<Self> {
        let images: Vec<(String, vpr_core::GrayImage)> =
            images.into_iter().map(|(id, img)| (id, img.inner.clone())).collect();
        let opts = MapOptions {
            normalization: VladNormalization { intra, signed_sqrt },
            leaf_size,
            dataset: dataset.to_string(),
        };
        let inner = py
            .detach(|| vpr_core::build_map(&images, &dictionary.inner, &extractor.config, &opts))
            .map_err(err)?;
        Ok(EnvironmentMap { inner })
    }

    #[staticmethod]
    fn load(dir: &str) -> PyResult<Self> {
        Ok(EnvironmentMap {
            inner: vpr_core::EnvironmentMap::load(dir).map_err(err)?,
        })
    }

    fn save(&self, dir: &str) -> PyResult<()> {
        self.inner.save(dir).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Number of references with a usable (non-zero) descriptor.
    #[getter]
    fn indexed_len(&self) -> usize {
        self.inner.indexed_len()
    }

    #[getter]
    fn dictionary(&self) -> Dictionary {
        Dictionary {
            inner: self.inner.dictionary().clone(),
        }
    }

    fn provenance<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.inner.provenance())
    }

    #[pyo3(signature = (query_id, image, n=20))]
    fn localize(&self, py: Python<'_>, query_id: &str, image: &Image, n: usize) -> PyResult<LocalizationResult> {
        let inner = py
            .detach(|| vpr_core::localize(query_id, &image.inner, &self.inner, n))
            .map_err(err)?;
        Ok(LocalizationResult { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "EnvironmentMap({} references, {} extractor)",
            self.inner.len(),
            self.inner.extractor_config().name()
        )
    }
}

fn ground_truth(mapping: HashMap<String, Vec<String>>) -> PyResult<vpr_core::GroundTruth> {
    let mut entries: Vec<_> = mapping.into_iter().collect();
    entries.sort();
    let mut gt = vpr_core::GroundTruth::new();
    for (q, refs) in entries {
        gt.insert(q, refs).map_err(err)?;
    }
    Ok(gt)
}

fn unwrap_results(results: &[PyRef<'_, LocalizationResult>]) -> Vec<vpr_core::LocalizationResult> {
    results.iter().map(|r| r.inner.clone()).collect()
}

/// Precision-recall curve of rank-1 matches against `ground_truth`, a dict
/// from query id to the list of correct reference ids.
#[pyfunction]
fn compute_pr<'py>(
    py: Python<'py>,
    results: Vec<PyRef<'py, LocalizationResult>>,
    ground_truth_map: HashMap<String, Vec<String>>,
) -> PyResult<Bound<'py, PyAny>> {
    let gt = ground_truth(ground_truth_map)?;
    let curve = vpr_core::compute_pr(&unwrap_results(&results), &gt).map_err(err)?;
    to_py(py, &curve)
}

/// Reads a ground-truth CSV into a dict.
#[pyfunction]
fn load_ground_truth(path: &str) -> PyResult<HashMap<String, Vec<String>>> {
    let gt = vpr_core::GroundTruth::load(path).map_err(err)?;
    Ok(gt.iter().map(|(q, refs)| (q.to_string(), refs.iter().cloned().collect())).collect())
}

/// Mean, median and 95th percentile of each timing component.
#[pyfunction]
fn aggregate_timing<'py>(py: Python<'py>, results: Vec<PyRef<'py, LocalizationResult>>) -> PyResult<Bound<'py, PyAny>> {
    let summary = vpr_core::aggregate_timing(&unwrap_results(&results)).map_err(err)?;
    to_py(py, &summary)
}

/// Mean Pearson correlation between randomly paired descriptors of two
/// feature collections.
#[pyfunction]
#[pyo3(signature = (a, b, pairs=10000, seed=0))]
fn correlation<'py>(
    py: Python<'py>,
    a: Vec<PyRef<'py, FeatureSet>>,
    b: Vec<PyRef<'py, FeatureSet>>,
    pairs: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let a: Vec<_> = a.iter().map(|f| f.inner.clone()).collect();
    let b: Vec<_> = b.iter().map(|f| f.inner.clone()).collect();
    let report = vpr_core::correlation_coefficient(&a, &b, pairs, seed).map_err(err)?;
    to_py(py, &report)
}

/// Exact k nearest neighbours of `query` among `points` using a ball tree.
/// Returns `(index, distance)` pairs; ties are broken by index.
#[pyfunction]
#[pyo3(signature = (points, query, k, leaf_size=16))]
fn knn(points: Vec<Vec<f32>>, query: Vec<f32>, k: usize, leaf_size: usize) -> PyResult<Vec<(usize, f64)>> {
    let pts = points.into_iter().enumerate().map(|(i, p)| (i, p.into())).collect();
    let tree = vpr_core::BallTree::build(pts, leaf_size).map_err(err)?;
    let found = tree.query_knn(&query, k).map_err(err)?;
    Ok(found.into_iter().map(|n| (n.id, n.distance)).collect())
}

#[pymodule]
fn pyvpr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Image>()?;
    m.add_class::<FeatureSet>()?;
    m.add_class::<Extractor>()?;
    m.add_class::<Dictionary>()?;
    m.add_class::<EnvironmentMap>()?;
    m.add_class::<LocalizationResult>()?;
    m.add_function(wrap_pyfunction!(compute_pr, m)?)?;
    m.add_function(wrap_pyfunction!(load_ground_truth, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_timing, m)?)?;
    m.add_function(wrap_pyfunction!(correlation, m)?)?;
    m.add_function(wrap_pyfunction!(knn, m)?)?;
    Ok(())
}
