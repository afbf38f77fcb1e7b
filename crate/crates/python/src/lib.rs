//! Python bindings: dependency and discourse parsers, corpus generators and
//! scorers. Corpora cross the boundary as CoNLL-U or bracket text.

use std::path::PathBuf;

use hptr::checkpoint::{self, Model};
use hptr::config::{RunConfig, Task};
use hptr::corpus::{format_conllu, format_rst_bracket, format_rst_tree, parse_conllu, parse_rst_bracket};
use hptr::dep::{evaluate_dep, train_dep, DepParser, DepTree, Sentence, Token};
use hptr::metrics::{score_dep_corpus, score_parseval, DepScore, ParsevalScore, PunctPolicy};
use hptr::rst::{evaluate_rst, train_rst, RstParser};
use hptr::train::EpochLog;
use hptr::Error;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Numeric { .. } | Error::Diverged { .. } => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

/// Task defaults with `seed` and every keyword option applied as a config
/// key (`encoder_size=64`, `variant="PST"`, ...).
fn run_config(task: Task, seed: u64, options: Option<&Bound<'_, PyDict>>) -> PyResult<RunConfig> {
    let mut cfg = RunConfig::defaults(task);
    cfg.seed = seed;
    if let Some(opts) = options {
        for (k, v) in opts.iter() {
            let key: String = k.extract()?;
            let value = match v.extract::<bool>() {
                Ok(b) => b.to_string(),
                Err(_) => v.str()?.to_string(),
            };
            cfg.set(&key, &value).map_err(to_py)?;
        }
    }
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

fn log_dicts<'py>(py: Python<'py>, logs: &[EpochLog]) -> PyResult<Vec<Bound<'py, PyDict>>> {
    logs.iter()
        .map(|l| {
            let d = PyDict::new(py);
            d.set_item("epoch", l.epoch)?;
            d.set_item("loss", l.loss)?;
            d.set_item("lr", l.lr)?;
            for (k, v) in &l.metrics {
                d.set_item(k, v)?;
            }
            Ok(d)
        })
        .collect()
}

fn dep_dict<'py>(py: Python<'py>, s: &DepScore) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("uas", s.uas())?;
    d.set_item("las", s.las())?;
    d.set_item("tokens", s.total)?;
    Ok(d)
}

fn parseval_dict<'py>(py: Python<'py>, s: &ParsevalScore) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (name, f) in [("span", &s.span), ("nuclearity", &s.nuclearity), ("relation", &s.relation)] {
        d.set_item(format!("{name}_precision"), f.precision())?;
        d.set_item(format!("{name}_recall"), f.recall())?;
        d.set_item(format!("{name}_f1"), f.f1())?;
    }
    Ok(d)
}

fn punct(exclude: bool) -> PunctPolicy {
    if exclude {
        PunctPolicy::standard()
    } else {
        PunctPolicy::none()
    }
}

/// Dependency parser over CoNLL-U corpora.
#[pyclass(name = "DependencyParser")]
pub struct PyDepParser {
    inner: DepParser,
    config: RunConfig,
}

#[pymethods]
impl PyDepParser {
    /// Builds vocabularies and fresh parameters from a CoNLL-U training corpus.
    #[new]
    #[pyo3(signature = (train, seed = 1, **options))]
    fn new(train: &str, seed: u64, options: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let config = run_config(Task::Dep, seed, options)?;
        let corpus = parse_conllu(train).map_err(to_py)?;
        let inner = DepParser::from_corpus(config.dep.clone(), &corpus, seed).map_err(to_py)?;
        Ok(PyDepParser { inner, config })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        match checkpoint::load(&path, None).map_err(to_py)? {
            Model::Dep(inner) => {
                let mut config = RunConfig::defaults(Task::Dep);
                config.dep = inner.config.clone();
                Ok(PyDepParser { inner, config })
            }
            Model::Rst(_) => Err(PyValueError::new_err("checkpoint holds a discourse parser")),
        }
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save(&path, &Model::Dep(self.inner.clone())).map_err(to_py)
    }

    /// Trains in place and returns one dict per epoch. Keyword options
    /// override training keys such as `epochs`, `batch_size` or `lr`.
    #[pyo3(signature = (train, dev = None, **options))]
    fn train<'py>(
        &mut self,
        py: Python<'py>,
        train: &str,
        dev: Option<&str>,
        options: Option<&Bound<'py, PyDict>>,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let mut cfg = self.config.clone();
        if let Some(opts) = options {
            for (k, v) in opts.iter() {
                cfg.set(&k.extract::<String>()?, &v.str()?.to_string()).map_err(to_py)?;
            }
        }
        cfg.validate().map_err(to_py)?;
        let train = parse_conllu(train).map_err(to_py)?;
        let dev = dev.map(parse_conllu).transpose().map_err(to_py)?.unwrap_or_default();
        let mut training = cfg.training.clone();
        training.seed = cfg.seed;
        let report = train_dep(&mut self.inner, &train, &dev, &training, &punct(cfg.exclude_punct), |_| {})
            .map_err(to_py)?;
        log_dicts(py, &report.logs)
    }

    /// Parses one sentence; returns `(heads, labels)` with heads 1-based and
    /// 0 for the root.
    #[pyo3(signature = (words, tags = None, beam = 1))]
    fn parse(&self, words: Vec<String>, tags: Option<Vec<String>>, beam: usize) -> PyResult<(Vec<usize>, Vec<String>)> {
        let tags = tags.unwrap_or_else(|| vec!["_".to_string(); words.len()]);
        if tags.len() != words.len() {
            return Err(PyValueError::new_err("words and tags differ in length"));
        }
        let sentence = Sentence::new(words.iter().zip(&tags).map(|(w, t)| Token::new(w, t)).collect());
        let (tree, _) = self.inner.parse(&sentence, beam).map_err(to_py)?;
        Ok((tree.heads, tree.labels))
    }

    /// Re-parses every sentence of a CoNLL-U document.
    #[pyo3(signature = (text, beam = 1))]
    fn parse_conllu(&self, text: &str, beam: usize) -> PyResult<String> {
        let corpus = parse_conllu(text).map_err(to_py)?;
        let sentences: Vec<Sentence> = corpus.into_iter().map(|(s, _)| s).collect();
        let trees = self.inner.parse_all(&sentences, beam).map_err(to_py)?;
        Ok(format_conllu(sentences.iter().zip(trees.iter().map(Some))))
    }

    #[pyo3(signature = (gold, beam = 1, exclude_punct = false))]
    fn evaluate<'py>(&self, py: Python<'py>, gold: &str, beam: usize, exclude_punct: bool) -> PyResult<Bound<'py, PyDict>> {
        let gold = parse_conllu(gold).map_err(to_py)?;
        let score = evaluate_dep(&self.inner, &gold, &punct(exclude_punct), beam).map_err(to_py)?;
        dep_dict(py, &score)
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.store.num_values()
    }
}

/// Sentence-level discourse parser over bracketed trees.
#[pyclass(name = "DiscourseParser")]
pub struct PyRstParser {
    inner: RstParser,
    config: RunConfig,
}

#[pymethods]
impl PyRstParser {
    #[new]
    #[pyo3(signature = (train, seed = 1, **options))]
    fn new(train: &str, seed: u64, options: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let config = run_config(Task::Rst, seed, options)?;
        let trees = parse_rst_bracket(train).map_err(to_py)?;
        let labels = config.labels.resolve(&trees).map_err(to_py)?;
        let inner = RstParser::from_corpus(config.rst.clone(), &trees, labels, seed).map_err(to_py)?;
        Ok(PyRstParser { inner, config })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        match checkpoint::load(&path, None).map_err(to_py)? {
            Model::Rst(inner) => {
                let mut config = RunConfig::defaults(Task::Rst);
                config.rst = inner.config.clone();
                Ok(PyRstParser { inner, config })
            }
            Model::Dep(_) => Err(PyValueError::new_err("checkpoint holds a dependency parser")),
        }
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save(&path, &Model::Rst(self.inner.clone())).map_err(to_py)
    }

    /// Trains in place, keeping the final parameters, and returns one dict
    /// per epoch.
    #[pyo3(signature = (train, dev = None, **options))]
    fn train<'py>(
        &mut self,
        py: Python<'py>,
        train: &str,
        dev: Option<&str>,
        options: Option<&Bound<'py, PyDict>>,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let mut cfg = self.config.clone();
        if let Some(opts) = options {
            for (k, v) in opts.iter() {
                cfg.set(&k.extract::<String>()?, &v.str()?.to_string()).map_err(to_py)?;
            }
        }
        cfg.validate().map_err(to_py)?;
        let train = parse_rst_bracket(train).map_err(to_py)?;
        let dev = dev.map(parse_rst_bracket).transpose().map_err(to_py)?.unwrap_or_default();
        let mut training = cfg.training.clone();
        training.seed = cfg.seed;
        let report = train_rst(&mut self.inner, &train, &dev, &training, |_| {}).map_err(to_py)?;
        log_dicts(py, &report.logs)
    }

    /// Parses a sentence given as a list of EDU strings into a bracketed tree.
    fn parse(&self, edus: Vec<String>) -> PyResult<String> {
        let p = self.inner.parse(&edus).map_err(to_py)?;
        Ok(format_rst_tree(&p.tree))
    }

    #[pyo3(signature = (gold, include_root = false))]
    fn evaluate<'py>(&self, py: Python<'py>, gold: &str, include_root: bool) -> PyResult<Bound<'py, PyDict>> {
        let gold = parse_rst_bracket(gold).map_err(to_py)?;
        let score = evaluate_rst(&self.inner, &gold, include_root).map_err(to_py)?;
        parseval_dict(py, &score)
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels.names().to_vec()
    }
}

/// Synthetic projective dependency corpus as CoNLL-U text.
#[pyfunction]
#[pyo3(signature = (seed, count, max_len = 12, vocab = 200, labels = 8))]
fn gen_synthetic_dep(seed: u64, count: usize, max_len: usize, vocab: usize, labels: usize) -> PyResult<String> {
    let corpus = hptr::corpus::gen_synthetic_dep(seed, count, max_len, vocab, labels).map_err(to_py)?;
    Ok(format_conllu(corpus.iter().map(|(s, t)| (s, Some(t)))))
}

/// Synthetic discourse trees as bracket text.
#[pyfunction]
#[pyo3(signature = (seed, count, max_edus = 8, labels = 8))]
fn gen_synthetic_rst(seed: u64, count: usize, max_edus: usize, labels: usize) -> PyResult<String> {
    let trees = hptr::corpus::gen_synthetic_rst(seed, count, max_edus, labels).map_err(to_py)?;
    Ok(format_rst_bracket(&trees))
}

/// Attachment scores of predicted against gold CoNLL-U.
#[pyfunction]
#[pyo3(signature = (gold, pred, exclude_punct = false))]
fn score_dependencies<'py>(py: Python<'py>, gold: &str, pred: &str, exclude_punct: bool) -> PyResult<Bound<'py, PyDict>> {
    let gold = parse_conllu(gold).map_err(to_py)?;
    let pred = parse_conllu(pred).map_err(to_py)?;
    if gold.len() != pred.len() {
        return Err(PyValueError::new_err("gold and predicted corpora differ in sentence count"));
    }
    let items = gold.iter().zip(&pred).map(|((s, g), (_, p))| (s, g, p));
    let score = score_dep_corpus(items, &punct(exclude_punct)).map_err(to_py)?;
    dep_dict(py, &score)
}

/// Parseval scores of predicted against gold bracketed trees.
#[pyfunction]
#[pyo3(signature = (gold, pred, include_root = false))]
fn score_discourse<'py>(py: Python<'py>, gold: &str, pred: &str, include_root: bool) -> PyResult<Bound<'py, PyDict>> {
    let gold = parse_rst_bracket(gold).map_err(to_py)?;
    let pred = parse_rst_bracket(pred).map_err(to_py)?;
    if gold.len() != pred.len() {
        return Err(PyValueError::new_err("gold and predicted corpora differ in tree count"));
    }
    let mut total = ParsevalScore::default();
    for (g, p) in gold.iter().zip(&pred) {
        total.merge(&score_parseval(g, p, include_root).map_err(to_py)?);
    }
    parseval_dict(py, &total)
}

/// Checks a head vector for a well-formed single-rooted tree.
#[pyfunction]
fn is_valid_tree(heads: Vec<usize>) -> bool {
    let n = heads.len();
    DepTree::new(heads, vec!["_".to_string(); n]).and_then(|t| t.validate(false)).is_ok()
}

#[pymodule]
fn hptr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDepParser>()?;
    m.add_class::<PyRstParser>()?;
    m.add_function(wrap_pyfunction!(gen_synthetic_dep, m)?)?;
    m.add_function(wrap_pyfunction!(gen_synthetic_rst, m)?)?;
    m.add_function(wrap_pyfunction!(score_dependencies, m)?)?;
    m.add_function(wrap_pyfunction!(score_discourse, m)?)?;
    m.add_function(wrap_pyfunction!(is_valid_tree, m)?)?;
    Ok(())
}
