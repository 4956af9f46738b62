//! Python bindings for `mbpool`.

use std::fs::File;
use std::io::{BufReader, BufWriter};

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use mbpool::cca::{fit_cca, DataMatrix, View};
use mbpool::lstm::EmbeddedLstm;
use mbpool::pooling::{self, FeatureVector, PoolMode};
use mbpool::proposals::{self, ScoredBox};
use mbpool::selection;
use mbpool::Error;

type BoxTuple = (f64, f64, f64, f64, f64);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(format!("[{}] {other}", other.kind())),
    }
}

fn boxes(raw: Vec<BoxTuple>) -> PyResult<Vec<ScoredBox>> {
    raw.into_iter()
        .map(|(x, y, w, h, s)| ScoredBox::new(x, y, w, h, s).map_err(to_py))
        .collect()
}

fn tuples(boxes: &[ScoredBox]) -> Vec<BoxTuple> {
    boxes
        .iter()
        .map(|b| (b.x, b.y, b.w, b.h, b.score))
        .collect()
}

fn vector(v: Vec<f64>) -> PyResult<FeatureVector> {
    FeatureVector::new(v).map_err(to_py)
}

fn vectors(vs: Vec<Vec<f64>>) -> PyResult<Vec<FeatureVector>> {
    vs.into_iter().map(vector).collect()
}

fn view(name: &str) -> PyResult<View> {
    name.parse().map_err(to_py)
}

/// Intersection over union of two `(x, y, w, h, score)` boxes.
#[pyfunction]
fn iou(a: BoxTuple, b: BoxTuple) -> PyResult<f64> {
    let v = boxes(vec![a, b])?;
    proposals::iou(&v[0], &v[1]).map_err(to_py)
}

/// Indices kept by greedy non-maximum suppression, in score order.
#[pyfunction]
fn greedy_nms(boxes_in: Vec<BoxTuple>, beta: f64) -> PyResult<Vec<usize>> {
    proposals::greedy_nms_indices(&boxes(boxes_in)?, beta).map_err(to_py)
}

/// The `k` highest-scoring boxes.
#[pyfunction]
fn select_top_k(boxes_in: Vec<BoxTuple>, k: usize) -> PyResult<Vec<BoxTuple>> {
    Ok(tuples(&proposals::select_top_k(&boxes(boxes_in)?, k)))
}

#[pyfunction]
#[pyo3(signature = (global_vector, proposals, mode = "mean"))]
fn build_image_representation(
    global_vector: Vec<f64>,
    proposals: Vec<Vec<f64>>,
    mode: &str,
) -> PyResult<Vec<f64>> {
    let mode: PoolMode = mode.parse().map_err(to_py)?;
    pooling::build_image_representation(&vector(global_vector)?, &vectors(proposals)?, mode)
        .map(FeatureVector::into_vec)
        .map_err(to_py)
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    pooling::tokenize(text)
}

#[pyfunction]
fn cosine_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    selection::cosine_similarity(&a, &b).map_err(to_py)
}

/// Index of the most cosine-similar candidate; `None` marks an
/// unencodable candidate.
#[pyfunction]
fn choose_completion(query: Vec<f64>, candidates: Vec<Option<Vec<f64>>>) -> PyResult<usize> {
    let cands = candidates
        .into_iter()
        .map(|c| c.map(vector).transpose())
        .collect::<PyResult<Vec<_>>>()?;
    selection::choose_completion(&query, &cands).map_err(to_py)
}

/// Runs the command-line pipeline and returns its exit status.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    let argv = std::iter::once("mbpool".to_string()).chain(args);
    mbpool::io::cli::run(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

#[pyclass(name = "EmbeddingTable", module = "mbpool")]
struct PyEmbeddingTable {
    inner: pooling::EmbeddingTable,
}

#[pymethods]
impl PyEmbeddingTable {
    #[new]
    fn new(dim: usize) -> PyResult<Self> {
        Ok(PyEmbeddingTable {
            inner: pooling::EmbeddingTable::new(dim).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let f = File::open(path).map_err(|e| to_py(e.into()))?;
        Ok(PyEmbeddingTable {
            inner: pooling::EmbeddingTable::read_word2vec(BufReader::new(f)).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        let f = File::create(path).map_err(|e| to_py(e.into()))?;
        self.inner.write_word2vec(BufWriter::new(f)).map_err(to_py)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn insert(&mut self, token: String, values: Vec<f64>) -> PyResult<()> {
        self.inner.insert(token, vector(values)?).map_err(to_py)
    }

    fn get(&self, token: &str) -> Option<Vec<f64>> {
        self.inner.get(token).map(|v| v.to_vec())
    }

    /// Mean word vector of an answer string, skipping unknown words.
    fn encode_answer(&self, text: &str) -> PyResult<Vec<f64>> {
        pooling::encode_answer(&pooling::tokenize(text), &self.inner)
            .map(FeatureVector::into_vec)
            .map_err(to_py)
    }
}

#[pyclass(name = "CcaModel", module = "mbpool")]
struct PyCcaModel {
    inner: mbpool::CcaModel,
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DataMatrix> {
    DataMatrix::from_rows(&vectors(rows)?).map_err(to_py)
}

#[pymethods]
impl PyCcaModel {
    /// Fits nCCA on paired rows of `x` (image) and `y` (text).
    #[staticmethod]
    #[pyo3(signature = (x, y, ridge = mbpool::cca::DEFAULT_RIDGE, embed_dim = None, power = mbpool::cca::DEFAULT_POWER))]
    fn fit(
        x: Vec<Vec<f64>>,
        y: Vec<Vec<f64>>,
        ridge: f64,
        embed_dim: Option<usize>,
        power: f64,
    ) -> PyResult<Self> {
        let (x, y) = (matrix(x)?, matrix(y)?);
        let d = embed_dim.unwrap_or(x.cols().min(y.cols()));
        Ok(PyCcaModel {
            inner: fit_cca(&x, &y, ridge, d, power).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyCcaModel {
            inner: mbpool::io::load_cca(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        mbpool::io::save_cca(&self.inner, path).map_err(to_py)
    }

    #[getter]
    fn correlations(&self) -> Vec<f64> {
        self.inner.correlations().to_vec()
    }

    #[getter]
    fn embed_dim(&self) -> usize {
        self.inner.embed_dim()
    }

    /// Projects one vector of the `"image"` or `"text"` view.
    #[pyo3(signature = (v, view_name = "image"))]
    fn project(&self, v: Vec<f64>, view_name: &str) -> PyResult<Vec<f64>> {
        self.inner
            .project(&v, view(view_name)?)
            .map(FeatureVector::into_vec)
            .map_err(to_py)
    }

    fn canonical_trace(&self, x: Vec<Vec<f64>>, y: Vec<Vec<f64>>) -> PyResult<f64> {
        self.inner
            .canonical_trace(&matrix(x)?, &matrix(y)?)
            .map_err(to_py)
    }
}

#[pyclass(name = "EmbeddedLstm", module = "mbpool")]
struct PyEmbeddedLstm {
    inner: EmbeddedLstm,
}

#[pymethods]
impl PyEmbeddedLstm {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyEmbeddedLstm {
            inner: mbpool::io::load_lstm(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        mbpool::io::save_lstm(&self.inner, path).map_err(to_py)
    }

    /// Network output for an image feature and a prompt string.
    fn forward(&self, image: Vec<f64>, prompt: &str) -> PyResult<Vec<f64>> {
        let ids = self.inner.vocab.encode(&pooling::tokenize(prompt));
        mbpool::lstm::forward(&self.inner.params, &image, &ids).map_err(to_py)
    }

    fn predict(
        &self,
        image: Vec<f64>,
        prompt: &str,
        candidates: Vec<String>,
        table: &PyEmbeddingTable,
    ) -> PyResult<usize> {
        let ids = self.inner.vocab.encode(&pooling::tokenize(prompt));
        let cands: Vec<Vec<String>> = candidates.iter().map(|c| pooling::tokenize(c)).collect();
        mbpool::lstm::predict(&self.inner.params, &image, &ids, &cands, &table.inner).map_err(to_py)
    }
}

#[pymodule]
#[pyo3(name = "mbpool")]
fn mbpool_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_nms, m)?)?;
    m.add_function(wrap_pyfunction!(select_top_k, m)?)?;
    m.add_function(wrap_pyfunction!(build_image_representation, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(choose_completion, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add_class::<PyEmbeddingTable>()?;
    m.add_class::<PyCcaModel>()?;
    m.add_class::<PyEmbeddedLstm>()?;
    Ok(())
}
