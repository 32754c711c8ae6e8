//! Python bindings: samples, scorers, recognizers, candidate pools, and the
//! construction and metric entry points.

use std::collections::BTreeMap;
use std::sync::Arc;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use factadapt_core::adapters::{
    table_scorer_from_config, HashScorer, NerConfig, RegexNer, TableScorerConfig, WordPunctTokenizer,
};
use factadapt_core::augmentation::filter_dataset;
use factadapt_core::construction::{self, BuildOptions, ThresholdSearch, Toolkit};
use factadapt_core::metrics;
use factadapt_core::model::{
    self, Dataset, EntityMention, Group, GroupSpec, PoolRecord, Scenario, Split, Stats,
    ValidationConfig,
};
use factadapt_core::pool::{self, default_excluded_categories, PoolFields, PoolOptions};
use factadapt_core::replacement::{self, ReplacementOptions};
use factadapt_core::text::find_standalone;
use factadapt_core::{EntityRecognizer, Error, LikelihoodScorer, Tokenizer};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(py_err)
}

// =============================================================================
// Samples
// =============================================================================

#[pyclass(name = "Sample", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PySample {
    inner: model::Sample,
}

#[pymethods]
impl PySample {
    #[new]
    #[pyo3(signature = (id, document, summary, split = "test"))]
    fn new(id: String, document: String, summary: String, split: &str) -> PyResult<Self> {
        let inner = model::Sample::new(id, document, summary, parse::<Split>(split)?).map_err(py_err)?;
        Ok(PySample { inner })
    }

    #[getter]
    fn id(&self) -> &str {
        &self.inner.id
    }

    #[getter]
    fn document(&self) -> &str {
        &self.inner.document
    }

    #[getter]
    fn summary(&self) -> &str {
        &self.inner.summary
    }

    fn __repr__(&self) -> String {
        format!("Sample(id={:?})", self.inner.id)
    }
}

#[pyclass(name = "CounterfactualSample", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyCounterfactual {
    inner: model::CounterfactualSample,
}

#[pymethods]
impl PyCounterfactual {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyCounterfactual { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("counterfactual serializes")
    }

    #[getter]
    fn source_id(&self) -> &str {
        &self.inner.source_id
    }

    #[getter]
    fn document(&self) -> &str {
        &self.inner.counterfactual_document
    }

    #[getter]
    fn summary(&self) -> &str {
        &self.inner.counterfactual_summary
    }

    #[getter]
    fn original_entity(&self) -> &str {
        &self.inner.original_entity.surface
    }

    #[getter]
    fn counterfactual_entity(&self) -> &str {
        &self.inner.counterfactual_surface
    }

    #[getter]
    fn group(&self) -> String {
        self.inner.group.to_string()
    }

    #[getter]
    fn scenario(&self) -> String {
        self.inner.scenario.to_string()
    }

    #[getter]
    fn validation_score(&self) -> f64 {
        self.inner.validation_score
    }

    fn __repr__(&self) -> String {
        format!(
            "CounterfactualSample({:?}: {:?} -> {:?})",
            self.inner.source_id, self.inner.original_entity.surface, self.inner.counterfactual_surface
        )
    }
}

// =============================================================================
// Adapters
// =============================================================================

/// A likelihood scorer: a lookup table or the deterministic hash scorer.
#[pyclass(name = "Scorer", frozen)]
pub struct PyScorer {
    inner: Arc<dyn LikelihoodScorer>,
}

#[pymethods]
impl PyScorer {
    /// From a table config in JSON: `{"id", "default_prob", "entries": [...]}`.
    #[staticmethod]
    fn table(config_json: &str) -> PyResult<Self> {
        let config: TableScorerConfig =
            serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyScorer {
            inner: Arc::new(table_scorer_from_config(&config).map_err(py_err)?),
        })
    }

    #[staticmethod]
    #[pyo3(signature = (id = "hash".to_string(), seed = 0))]
    fn hashed(id: String, seed: u64) -> Self {
        PyScorer {
            inner: Arc::new(HashScorer::new(id, seed)),
        }
    }

    #[getter]
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn likelihood(&self, document: &str, prefix: Vec<String>, token: &str) -> PyResult<f64> {
        self.inner.first_token_likelihood(document, &prefix, token).map_err(py_err)
    }
}

/// Regex/gazetteer entity recognizer.
#[pyclass(name = "Ner", frozen)]
pub struct PyNer {
    inner: RegexNer,
}

#[pymethods]
impl PyNer {
    #[new]
    #[pyo3(signature = (gazetteer = BTreeMap::new(), patterns = BTreeMap::new()))]
    fn new(gazetteer: BTreeMap<String, Vec<String>>, patterns: BTreeMap<String, Vec<String>>) -> PyResult<Self> {
        let inner = RegexNer::from_config(&NerConfig { patterns, gazetteer }).map_err(py_err)?;
        Ok(PyNer { inner })
    }

    /// `(surface, category, start, end)` per entity, byte offsets.
    fn extract(&self, text: &str) -> Vec<(String, String, usize, usize)> {
        self.inner
            .extract(text)
            .into_iter()
            .map(|e| (e.surface, e.category, e.span.start, e.span.end))
            .collect()
    }
}

#[pyclass(name = "CandidatePool", frozen)]
pub struct PyPool {
    inner: model::CandidatePool,
}

#[pymethods]
impl PyPool {
    /// From `(surface, category, frequency)` records.
    #[new]
    fn new(records: Vec<(String, String, u64)>) -> PyResult<Self> {
        let inner = model::CandidatePool::from_records(records.into_iter().map(|(surface, category, frequency)| {
            PoolRecord {
                surface,
                category,
                frequency,
            }
        }))
        .map_err(py_err)?;
        Ok(PyPool { inner })
    }

    /// `(surface, frequency)` pairs, most frequent first.
    fn bucket(&self, category: &str) -> Vec<(String, u64)> {
        self.inner
            .bucket(category)
            .iter()
            .map(|e| (e.surface.clone(), e.frequency))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

// =============================================================================
// Functions
// =============================================================================

fn dataset(samples: &[PyRef<'_, PySample>]) -> PyResult<Dataset> {
    Dataset::new("python", samples.iter().map(|s| s.inner.clone()).collect()).map_err(py_err)
}

#[pyfunction]
fn word_map(original: &str, counterfactual: &str) -> PyResult<Vec<(String, String)>> {
    replacement::word_map(original, counterfactual).map_err(py_err)
}

/// Replaces `original` by `counterfactual` in a sample. Returns the new
/// document, the new summary and the counterfactual's first token index.
#[pyfunction]
fn apply_replacement(
    sample: PyRef<'_, PySample>,
    original: &str,
    counterfactual: &str,
) -> PyResult<(String, String, usize)> {
    let s = &sample.inner;
    let tok = WordPunctTokenizer;
    let summary_spans = find_standalone(&s.summary, original);
    let pos = summary_spans
        .first()
        .map(|sp| tok.char_to_token(&s.summary, sp.start))
        .unwrap_or(0);
    let mention = EntityMention::new(original, "", find_standalone(&s.document, original), summary_spans, pos)
        .map_err(py_err)?;
    let r = replacement::apply_replacement(s, &mention, counterfactual, &tok, &ReplacementOptions::default())
        .map_err(py_err)?;
    Ok((r.document, r.summary, r.first_token_pos))
}

#[pyfunction]
#[pyo3(signature = (samples, ner, fields = "both", min_frequency = 1))]
fn build_pool(samples: Vec<PyRef<'_, PySample>>, ner: &PyNer, fields: &str, min_frequency: u64) -> PyResult<PyPool> {
    let corpus: Vec<model::Sample> = samples.iter().map(|s| s.inner.clone()).collect();
    let options = PoolOptions {
        fields: parse::<PoolFields>(fields)?,
        min_frequency,
    };
    let inner = pool::build_pool(&corpus, &ner.inner, &default_excluded_categories(), &options).map_err(py_err)?;
    Ok(PyPool { inner })
}

fn build_options(scenario: &str, group: &str, threshold: f64, seed: u64, workers: usize) -> PyResult<BuildOptions> {
    Ok(BuildOptions {
        workers,
        ..BuildOptions::new(
            ValidationConfig::new(parse::<Scenario>(scenario)?, threshold).map_err(py_err)?,
            GroupSpec::new(parse::<Group>(group)?),
            seed,
        )
    })
}

/// Returns the counterfactuals and `(sample_id, reason_code)` skip records.
#[pyfunction]
#[pyo3(signature = (samples, pool, scorer, ner, scenario = "s1", group = "top", threshold = 0.0, seed = 0, workers = 1))]
#[allow(clippy::too_many_arguments)]
fn build_eval_set(
    py: Python<'_>,
    samples: Vec<PyRef<'_, PySample>>,
    pool: &PyPool,
    scorer: &PyScorer,
    ner: &PyNer,
    scenario: &str,
    group: &str,
    threshold: f64,
    seed: u64,
    workers: usize,
) -> PyResult<(Vec<PyCounterfactual>, Vec<(String, String)>)> {
    let ds = dataset(&samples)?;
    let options = build_options(scenario, group, threshold, seed, workers)?;
    let tok = WordPunctTokenizer;
    let built = py
        .detach(|| {
            let tools = Toolkit {
                scorer: scorer.inner.as_ref(),
                tokenizer: &tok,
                ner: &ner.inner,
            };
            construction::build_eval_set(&ds, &pool.inner, &tools, &options)
        })
        .map_err(py_err)?;
    let skipped = built
        .skipped
        .into_iter()
        .map(|r| {
            let code = serde_json::to_value(r.code).expect("reason code serializes");
            (r.sample_id, code.as_str().unwrap_or_default().to_string())
        })
        .collect();
    Ok((
        built.samples.into_iter().map(|inner| PyCounterfactual { inner }).collect(),
        skipped,
    ))
}

/// Returns `(threshold, fraction)`.
#[pyfunction]
#[pyo3(signature = (samples, pool, scorer, ner, scenario = "s1", group = "top", target = 0.10, tolerance = 0.01, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn search_threshold(
    samples: Vec<PyRef<'_, PySample>>,
    pool: &PyPool,
    scorer: &PyScorer,
    ner: &PyNer,
    scenario: &str,
    group: &str,
    target: f64,
    tolerance: f64,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let ds = dataset(&samples)?;
    let options = build_options(scenario, group, 0.0, seed, 1)?;
    let search = ThresholdSearch::new(target, tolerance).map_err(py_err)?;
    let tok = WordPunctTokenizer;
    let tools = Toolkit {
        scorer: scorer.inner.as_ref(),
        tokenizer: &tok,
        ner: &ner.inner,
    };
    let r = construction::search_threshold(&ds, &pool.inner, &tools, &options, &search).map_err(py_err)?;
    Ok((r.threshold, r.fraction))
}

#[pyfunction]
fn m_cl(scorer: &PyScorer, original: PyRef<'_, PySample>, cf: PyRef<'_, PyCounterfactual>) -> PyResult<f64> {
    metrics::m_cl(scorer.inner.as_ref(), &original.inner, &cf.inner, &WordPunctTokenizer).map_err(py_err)
}

/// Share of `(counterfactual, generated summary)` pairs that adopt the
/// counterfactual entity.
#[pyfunction]
#[pyo3(signature = (pairs, partial_leakage = true))]
fn replacement_rate(pairs: Vec<(PyRef<'_, PyCounterfactual>, String)>, partial_leakage: bool) -> PyResult<f64> {
    let pairs: Vec<_> = pairs.into_iter().map(|(c, g)| (c.inner.clone(), g)).collect();
    let options = metrics::RateOptions {
        partial_leakage,
        ..Default::default()
    };
    metrics::replacement_rate(&pairs, &options).map_err(py_err)
}

/// Mean and sample standard deviation.
#[pyfunction]
fn mean_std(values: Vec<f64>) -> PyResult<(f64, f64)> {
    Stats::from_values(&values)
        .map(|s| (s.mean, s.std))
        .ok_or_else(|| py_err(Error::EmptyInput))
}

/// Returns the kept samples and the ids of the dropped ones.
#[pyfunction]
fn filter_samples(samples: Vec<PyRef<'_, PySample>>, ner: &PyNer) -> PyResult<(Vec<PySample>, Vec<String>)> {
    let ds = dataset(&samples)?;
    let excluded = default_excluded_categories().into_iter().collect();
    let out = filter_dataset(&ds, &ner.inner, &excluded);
    Ok((
        out.kept.into_iter().map(|inner| PySample { inner }).collect(),
        out.dropped.into_iter().map(|d| d.sample.id).collect(),
    ))
}

#[pymodule]
fn factadapt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySample>()?;
    m.add_class::<PyCounterfactual>()?;
    m.add_class::<PyScorer>()?;
    m.add_class::<PyNer>()?;
    m.add_class::<PyPool>()?;
    m.add_function(wrap_pyfunction!(word_map, m)?)?;
    m.add_function(wrap_pyfunction!(apply_replacement, m)?)?;
    m.add_function(wrap_pyfunction!(build_pool, m)?)?;
    m.add_function(wrap_pyfunction!(build_eval_set, m)?)?;
    m.add_function(wrap_pyfunction!(search_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(m_cl, m)?)?;
    m.add_function(wrap_pyfunction!(replacement_rate, m)?)?;
    m.add_function(wrap_pyfunction!(mean_std, m)?)?;
    m.add_function(wrap_pyfunction!(filter_samples, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
