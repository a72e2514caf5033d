//! Python bindings: embedding spaces, synthetic pairs, the alignment
//! pipeline, CSLS, dictionary induction and CPD registration.
//!
//! Matrices cross the boundary as lists of rows. Configuration is JSON;
//! keys that are left out keep their defaults.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde_json::Value;

use wordreg::embeddings::{self, GoldDictionary, NormalizeOptions, SynthKind};
use wordreg::metrics::{induce_and_score, map_views, Csls, CslsParams, Views};
use wordreg::numerics::{LinearMap, Mat};
use wordreg::pipeline::{self, Initialization, OutputOptions, PipelineConfig};
use wordreg::transform::{run_cpd, CpdConfig};
use wordreg::Error;

fn py_err(err: Error) -> PyErr {
    match err {
        Error::Config(_) => PyValueError::new_err(err.to_string()),
        Error::Io(_) | Error::Parse { .. } => PyOSError::new_err(err.to_string()),
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn to_mat(rows: &[Vec<f64>]) -> PyResult<Mat> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(Mat::from_fn(n, d, |i, j| rows[i][j]))
}

fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Overlays `patch` onto `base`, recursing into objects.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

fn with_defaults<T>(default: &T, json: Option<&str>) -> PyResult<T>
where
    T: serde::Serialize + serde::de::DeserializeOwned,
{
    let mut value = serde_json::to_value(default).map_err(|e| py_err(e.into()))?;
    if let Some(text) = json {
        let patch: Value =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        merge(&mut value, patch);
    }
    serde_json::from_value(value).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Vocabulary in frequency order with one embedding row per token.
#[pyclass(name = "EmbeddingSpace", module = "wordreg_py", skip_from_py_object)]
#[derive(Clone)]
struct PyEmbeddingSpace(embeddings::EmbeddingSpace);

#[pymethods]
impl PyEmbeddingSpace {
    #[new]
    fn new(vocab: Vec<String>, rows: Vec<Vec<f64>>) -> PyResult<Self> {
        embeddings::EmbeddingSpace::new(vocab, to_mat(&rows)?)
            .map(Self)
            .map_err(py_err)
    }

    /// Reads a `.vec` file, keeping the first `max_vocab` words.
    #[staticmethod]
    #[pyo3(signature = (path, max_vocab = 200_000))]
    fn load(path: PathBuf, max_vocab: usize) -> PyResult<Self> {
        let loaded = embeddings::load_vec(path, max_vocab).map_err(py_err)?;
        Ok(Self(loaded.space))
    }

    #[pyo3(signature = (path, precision = 6))]
    fn save(&self, path: PathBuf, precision: usize) -> PyResult<()> {
        embeddings::save_vec(&self.0, path, precision).map_err(py_err)
    }

    /// Copy with unit-length rows, then zero-mean columns.
    fn normalized(&self) -> PyResult<Self> {
        embeddings::normalize(&self.0, NormalizeOptions::default())
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn vocab(&self) -> Vec<String> {
        self.0.vocab().to_vec()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        to_rows(self.0.matrix())
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("EmbeddingSpace(len={}, dim={})", self.0.len(), self.0.dim())
    }
}

/// Synthetic pair: `(source, target, gold)` with `gold` a list of
/// `(source_word, target_word)`.
#[pyfunction]
#[pyo3(signature = (n = 2000, dim = 50, noise = 0.01, seed = 0, kind = "orthogonal", clusters = 10))]
fn synth(
    n: usize,
    dim: usize,
    noise: f64,
    seed: u64,
    kind: &str,
    clusters: usize,
) -> PyResult<(PyEmbeddingSpace, PyEmbeddingSpace, Vec<(String, String)>)> {
    let kind: SynthKind = kind.parse().map_err(py_err)?;
    let pair = embeddings::synth_pair(n, dim, noise, seed, kind, clusters).map_err(py_err)?;
    let gold = pair
        .gold
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            (
                pair.source.vocab()[i].clone(),
                pair.target.vocab()[j].clone(),
            )
        })
        .collect();
    Ok((PyEmbeddingSpace(pair.source), PyEmbeddingSpace(pair.target), gold))
}

/// Default pipeline configuration as JSON.
#[pyfunction]
fn default_config() -> PyResult<String> {
    serde_json::to_string_pretty(&PipelineConfig::default()).map_err(|e| py_err(e.into()))
}

/// Outcome of [`align`].
#[pyclass(name = "AlignResult", module = "wordreg_py", get_all)]
struct PyAlignResult {
    /// Source rows in the shared frame.
    x_final: Vec<Vec<f64>>,
    y_final: Vec<Vec<f64>>,
    /// `(source_word, target_word, score)`, best first.
    dictionary: Vec<(String, String, f64)>,
    report_json: String,
    p_at_1: Option<f64>,
    p_at_5: Option<f64>,
}

/// Runs the full pipeline on normalized spaces. `forward`/`backward`
/// provide initial maps (applied as `x @ W`); `out_dir` also writes the
/// usual artifacts.
#[pyfunction]
#[pyo3(signature = (src, tgt, config = None, forward = None, backward = None, gold = None, out_dir = None))]
fn align(
    py: Python<'_>,
    src: &PyEmbeddingSpace,
    tgt: &PyEmbeddingSpace,
    config: Option<&str>,
    forward: Option<Vec<Vec<f64>>>,
    backward: Option<Vec<Vec<f64>>>,
    gold: Option<Vec<(String, String)>>,
    out_dir: Option<PathBuf>,
) -> PyResult<PyAlignResult> {
    let mut config: PipelineConfig = with_defaults(&PipelineConfig::default(), config)?;
    let provided = match (forward, backward) {
        (Some(f), Some(g)) => {
            config.init = Initialization::Provided;
            Some((LinearMap(to_mat(&f)?), LinearMap(to_mat(&g)?)))
        }
        (None, None) => None,
        _ => return Err(PyValueError::new_err("forward and backward must be given together")),
    };
    let gold = gold.map(GoldDictionary::from_pairs);
    let (src, tgt) = (&src.0, &tgt.0);
    let (out, report) = py
        .detach(|| -> wordreg::Result<_> {
            let out = pipeline::run_actg(src, tgt, &config, provided)?;
            let report = match &out_dir {
                Some(dir) => {
                    pipeline::generate_output(&out, src, tgt, gold.as_ref(), dir, OutputOptions::default())?
                }
                None => {
                    let mut report = out.report.clone();
                    if let Some(gold) = &gold {
                        let eval = pipeline::evaluate_output(&out, src, tgt, gold)?;
                        report.p_at_1 = Some(eval.p_at_1);
                        report.p_at_5 = Some(eval.p_at_5);
                        report.oov_count = Some(eval.oov);
                    }
                    report
                }
            };
            Ok((out, report))
        })
        .map_err(py_err)?;
    let dictionary = out
        .dictionary
        .pairs()
        .iter()
        .map(|p| (src.vocab()[p.src].clone(), tgt.vocab()[p.tgt].clone(), p.score))
        .collect();
    Ok(PyAlignResult {
        x_final: to_rows(&out.x_final),
        y_final: to_rows(&out.y_final),
        dictionary,
        report_json: serde_json::to_string_pretty(&report).map_err(|e| py_err(e.into()))?,
        p_at_1: report.p_at_1,
        p_at_5: report.p_at_5,
    })
}

/// CSLS score matrix between query and target rows.
#[pyfunction]
#[pyo3(signature = (queries, targets, k = 10))]
fn csls(queries: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, k: usize) -> PyResult<Vec<Vec<f64>>> {
    let csls = Csls::new(&to_mat(&queries)?, &to_mat(&targets)?, k).map_err(py_err)?;
    Ok(to_rows(&csls.scores()))
}

/// Mutual-nearest-neighbour dictionary under bidirectional CSLS. Returns
/// `([(src_row, tgt_row, score)], criterion)`.
#[pyfunction]
#[pyo3(signature = (x, y, forward, backward, k = 10, limit = 25_000))]
fn induce(
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    forward: Vec<Vec<f64>>,
    backward: Vec<Vec<f64>>,
    k: usize,
    limit: usize,
) -> PyResult<(Vec<(usize, usize, f64)>, f64)> {
    let (x, y) = (to_mat(&x)?, to_mat(&y)?);
    let (f, g) = (LinearMap(to_mat(&forward)?), LinearMap(to_mat(&backward)?));
    let (fx, gy) = map_views(&x, &y, &f, &g);
    let views = Views::new(&x, &y, &fx, &gy).map_err(py_err)?;
    let params = CslsParams {
        k,
        candidate_limit: limit,
    };
    let (induction, criterion) = induce_and_score(&views, &params).map_err(py_err)?;
    let pairs = induction
        .dictionary
        .pairs()
        .iter()
        .map(|p| (p.src, p.tgt, p.score))
        .collect();
    Ok((pairs, criterion))
}

/// Fitted CPD registration; `linear`, `scale` and `translation` map data
/// points into the centroid frame (`x @ linear.T * scale + translation`).
#[pyclass(name = "CpdResult", module = "wordreg_py", get_all)]
struct PyCpdResult {
    linear: Vec<Vec<f64>>,
    scale: f64,
    translation: Vec<f64>,
    sigma2: f64,
    iterations: usize,
    converged: bool,
    objective_trace: Vec<f64>,
}

/// Registers `data` against `centroids`. `config` is a JSON patch over the
/// default CPD settings (`outlier_weight`, `max_iter`, `tol`, `mode`, ...).
#[pyfunction]
#[pyo3(signature = (data, centroids, config = None))]
fn cpd(
    py: Python<'_>,
    data: Vec<Vec<f64>>,
    centroids: Vec<Vec<f64>>,
    config: Option<&str>,
) -> PyResult<PyCpdResult> {
    let config: CpdConfig = with_defaults(&CpdConfig::default(), config)?;
    let (data, centroids) = (to_mat(&data)?, to_mat(&centroids)?);
    let fit = py
        .detach(|| run_cpd(&data, &centroids, &config))
        .map_err(py_err)?;
    Ok(PyCpdResult {
        linear: to_rows(&fit.transform.linear),
        scale: fit.transform.scale,
        translation: fit.transform.translation.iter().copied().collect(),
        sigma2: fit.state.sigma2,
        iterations: fit.state.iterations,
        converged: fit.state.converged,
        objective_trace: fit.state.objective_trace,
    })
}

#[pymodule]
fn wordreg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEmbeddingSpace>()?;
    m.add_class::<PyAlignResult>()?;
    m.add_class::<PyCpdResult>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(align, m)?)?;
    m.add_function(wrap_pyfunction!(csls, m)?)?;
    m.add_function(wrap_pyfunction!(induce, m)?)?;
    m.add_function(wrap_pyfunction!(cpd, m)?)?;
    Ok(())
}
