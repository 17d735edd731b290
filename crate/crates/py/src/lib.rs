//! Python bindings. Reports and sweep rows come back as JSON strings so the
//! Python side sees exactly what the CLI writes.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use sourcebias::debias::{alpha_sweep, shortcut_dataset, ShortcutConfig, TrainConfig};
use sourcebias::eval::{self, Metric};
use sourcebias::retrieval::{self, Bm25Params, Lexical, LexicalModel};
use sourcebias::spectrum::{self, Matrix};
use sourcebias::store::{self, QrelSet, Query, RunList, Source};
use sourcebias::theorem::{random_instances, InstanceReport, KlMode, Sampler};
use sourcebias::error::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Numerical(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn source(name: &str) -> PyResult<Source> {
    match name {
        "human" => Ok(Source::Human),
        "generated" => Ok(Source::Generated),
        other => Err(PyValueError::new_err(format!("unknown source `{other}`"))),
    }
}

fn metric(name: &str) -> PyResult<Metric> {
    match name.to_ascii_lowercase().as_str() {
        "ndcg" => Ok(Metric::Ndcg),
        "map" => Ok(Metric::Map),
        other => Err(PyValueError::new_err(format!("unknown metric `{other}`"))),
    }
}

#[pyclass(name = "Corpus", frozen)]
struct PyCorpus {
    inner: store::Corpus,
}

#[pymethods]
impl PyCorpus {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: store::load_corpus(path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        store::write_corpus(&self.inner, path).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn count(&self, source_name: &str) -> PyResult<usize> {
        Ok(self.inner.count(source(source_name)?))
    }

    fn ids(&self) -> Vec<String> {
        self.inner.iter().map(|d| d.id.clone()).collect()
    }

    fn source_of(&self, doc_id: &str) -> Option<&'static str> {
        self.inner.get(doc_id).map(|d| d.source.as_str())
    }
}

type Hits = Vec<(String, f64)>;

#[pyclass(name = "LexicalIndex", frozen)]
struct PyLexicalIndex {
    inner: retrieval::LexicalIndex,
}

fn lexical_model(name: &str, k1: f64, b: f64) -> PyResult<LexicalModel> {
    match name {
        "bm25" => {
            let p = Bm25Params { k1, b };
            p.validate().map_err(py_err)?;
            Ok(LexicalModel::Bm25(p))
        }
        "tfidf" => Ok(LexicalModel::TfIdf),
        other => Err(PyValueError::new_err(format!("unknown lexical model `{other}`"))),
    }
}

#[pymethods]
impl PyLexicalIndex {
    #[staticmethod]
    fn build(corpus: &PyCorpus) -> PyResult<Self> {
        Ok(Self {
            inner: retrieval::LexicalIndex::build(&corpus.inner).map_err(py_err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.doc_count()
    }

    /// `queries` is a list of `(query_id, text)`; returns `(query_id, [(doc_id, score)])`.
    #[pyo3(signature = (queries, model = "bm25", top_k = 100, k1 = 1.2, b = 0.75))]
    fn search(
        &self,
        py: Python<'_>,
        queries: Vec<(String, String)>,
        model: &str,
        top_k: usize,
        k1: f64,
        b: f64,
    ) -> PyResult<Vec<(String, Hits)>> {
        let model = lexical_model(model, k1, b)?;
        let queries: Vec<Query> = queries.into_iter().map(|(id, text)| Query { id, text }).collect();
        let runs = py
            .detach(|| retrieval::search(&Lexical { index: &self.inner, model }, &queries, top_k))
            .map_err(py_err)?;
        Ok(runs
            .into_iter()
            .map(|r| (r.query_id, r.entries.into_iter().map(|e| (e.doc_id, e.score)).collect()))
            .collect())
    }
}

#[pyfunction]
fn relative_delta(human: f64, generated: f64) -> PyResult<f64> {
    eval::relative_delta(human, generated).map_err(py_err)
}

/// Masked metric of one ranking. `sources` maps doc id to "human"/"generated".
#[pyfunction]
fn masked_metric(
    ranking: Vec<String>,
    grades: HashMap<String, u32>,
    sources: HashMap<String, String>,
    target: &str,
    metric_name: &str,
    k: usize,
) -> PyResult<f64> {
    let n = ranking.len();
    let run = RunList::from_scored("q", ranking.into_iter().enumerate().map(|(i, d)| (d, (n - i) as f64)).collect())
        .map_err(py_err)?;
    let mut qrels = QrelSet::new();
    for (d, g) in grades {
        qrels.insert("q", d, g).map_err(py_err)?;
    }
    let sources = sources
        .into_iter()
        .map(|(d, s)| Ok((d, source(&s)?)))
        .collect::<PyResult<HashMap<_, _>>>()?;
    eval::masked_metric(&run, &qrels, &sources, source(target)?, metric(metric_name)?, k).map_err(py_err)
}

/// Bias report JSON for a TREC run file.
#[pyfunction]
#[pyo3(signature = (run, qrels, corpus, cutoffs = vec![1, 3, 5]))]
fn evaluate_files(run: PathBuf, qrels: PathBuf, corpus: &PyCorpus, cutoffs: Vec<usize>) -> PyResult<String> {
    let runs = store::load_run(run).map_err(py_err)?;
    let qrels = store::load_qrels(qrels).map_err(py_err)?;
    eval::evaluate_runs(&runs, &qrels, &corpus.inner, &cutoffs)
        .and_then(|r| r.to_json())
        .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (rows, center = false))]
fn singular_values(rows: Vec<Vec<f64>>, center: bool) -> PyResult<Vec<f64>> {
    let mut m = Matrix::from_rows(&rows).map_err(py_err)?;
    if center {
        m = m.centered();
    }
    Ok(spectrum::singular_values(&m).map_err(py_err)?.singular_values)
}

#[pyfunction]
fn perplexity(logprobs: Vec<f64>) -> PyResult<f64> {
    let doc = store::TokenLogProbs::new("doc", logprobs).map_err(py_err)?;
    sourcebias::perplexity::perplexity(&doc).map_err(py_err)
}

/// α sweep on the synthetic shortcut data; JSON list of rows.
#[pyfunction]
#[pyo3(signature = (alphas, seed = 42, epochs = 50))]
fn synthetic_sweep(py: Python<'_>, alphas: Vec<f64>, seed: u64, epochs: usize) -> PyResult<String> {
    let rows = py
        .detach(|| {
            let data = shortcut_dataset(&ShortcutConfig {
                seed,
                ..ShortcutConfig::default()
            })?;
            let cfg = TrainConfig {
                seed,
                epochs,
                ..TrainConfig::default()
            };
            alpha_sweep(&data.train, &data.test, &cfg, &alphas)
        })
        .map_err(py_err)?;
    serde_json::to_string(&rows).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Samples and checks `count` instances; returns (passed, total, largest expectation).
#[pyfunction]
#[pyo3(signature = (count = 100, seed = 42))]
fn verify_theorem(py: Python<'_>, count: usize, seed: u64) -> PyResult<(usize, usize, f64)> {
    py.detach(|| {
        let insts = random_instances(seed, count, &[2, 3, 4], &[1, 2, 3, 4, 5], Sampler::Structured, KlMode::PerPrefix)?;
        let mut passed = 0;
        let mut worst = f64::NEG_INFINITY;
        for inst in &insts {
            let r = InstanceReport::build(inst, KlMode::PerPrefix)?;
            passed += usize::from(r.all_ok());
            worst = worst.max(r.verdict.expectation);
        }
        Ok((passed, insts.len(), worst))
    })
    .map_err(py_err)
}

#[pymodule(name = "sourcebias")]
fn init_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyLexicalIndex>()?;
    m.add_function(wrap_pyfunction!(relative_delta, m)?)?;
    m.add_function(wrap_pyfunction!(masked_metric, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_files, m)?)?;
    m.add_function(wrap_pyfunction!(singular_values, m)?)?;
    m.add_function(wrap_pyfunction!(perplexity, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(verify_theorem, m)?)?;
    Ok(())
}
