//! Python bindings: datasets, scorers, selection strategies, the multi-round
//! loop over in-memory pools, correlation analysis and the simulator.

use std::path::PathBuf;

use demux_core::io::{self, parse_plan, plan_to_string};
use demux_core::orchestrator::StaticProvider;
use demux_core::selection::{self, SelectionPlan};
use demux_core::sim::{self, ExperimentConfig};
use demux_core::uncertainty as unc;
use demux_core::{
    fnv1a64, run_loop, ALConfig, Dataset, Example, Exclusions, Role, Scorer, Strategy, TaskKind,
    UncertaintyPayload,
};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

create_exception!(demux, DemuxError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    DemuxError::new_err(e.to_string())
}

fn parse_task(s: &str) -> PyResult<TaskKind> {
    TaskKind::parse(s).ok_or_else(|| PyValueError::new_err(format!("unknown task kind {s:?}")))
}

fn parse_role(s: &str) -> PyResult<Role> {
    match s {
        "source" => Ok(Role::Source),
        "target" => Ok(Role::Target),
        _ => Err(PyValueError::new_err(format!("unknown role {s:?}"))),
    }
}

fn parse_strategy(s: &str) -> PyResult<Strategy> {
    Strategy::parse(s).ok_or_else(|| PyValueError::new_err(format!("unknown strategy {s:?}")))
}

fn parse_scorer(s: Option<&str>) -> PyResult<Option<Scorer>> {
    s.map(|s| {
        Scorer::parse(s).ok_or_else(|| PyValueError::new_err(format!("unknown scorer {s:?}")))
    })
    .transpose()
}

fn exclusions(ids: Option<Vec<String>>) -> Exclusions {
    let mut ex = Exclusions::new();
    ex.extend(ids.unwrap_or_default());
    ex
}

fn payload_from_py(task: TaskKind, obj: &Bound<'_, PyAny>) -> PyResult<UncertaintyPayload> {
    Ok(match task {
        TaskKind::SequenceLevel => UncertaintyPayload::SeqProbs(obj.extract()?),
        TaskKind::TokenLevel => UncertaintyPayload::TokenProbs(obj.extract()?),
        TaskKind::SpanQa => {
            let (start, end): (Vec<f64>, Vec<f64>) = match obj.cast::<PyDict>() {
                Ok(d) => (
                    d.get_item("start")?
                        .ok_or_else(|| PyValueError::new_err("missing 'start'"))?
                        .extract()?,
                    d.get_item("end")?
                        .ok_or_else(|| PyValueError::new_err("missing 'end'"))?
                        .extract()?,
                ),
                Err(_) => obj.extract()?,
            };
            UncertaintyPayload::SpanLogProbs { start, end }
        }
    })
}

fn payload_to_py<'py>(py: Python<'py>, p: &UncertaintyPayload) -> PyResult<Bound<'py, PyAny>> {
    Ok(match p {
        UncertaintyPayload::SeqProbs(v) => PyList::new(py, v)?.into_any(),
        UncertaintyPayload::TokenProbs(rows) => PyList::new(py, rows)?.into_any(),
        UncertaintyPayload::SpanLogProbs { start, end } => {
            let d = PyDict::new(py);
            d.set_item("start", start)?;
            d.set_item("end", end)?;
            d.into_any()
        }
    })
}

/// Validated pool of examples with pooled representations and model outputs.
#[pyclass(name = "Dataset", module = "demux", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    /// Builds a dataset from parallel lists. `payloads` holds class
    /// probabilities (sequence), per-token probability rows (token) or
    /// `{"start": [...], "end": [...]}` log-probabilities (qa). Text hashes
    /// default to the FNV-1a hash of the id.
    #[new]
    #[pyo3(signature = (task, role, ids, languages, representations, payloads, text_hashes=None))]
    fn new(
        task: &str,
        role: &str,
        ids: Vec<String>,
        languages: Vec<String>,
        representations: Vec<Vec<f64>>,
        payloads: &Bound<'_, PyList>,
        text_hashes: Option<Vec<u64>>,
    ) -> PyResult<Self> {
        let task = parse_task(task)?;
        let role = parse_role(role)?;
        let n = ids.len();
        if languages.len() != n || representations.len() != n || payloads.len() != n {
            return Err(PyValueError::new_err(
                "ids, languages, representations and payloads differ in length",
            ));
        }
        if text_hashes.as_ref().is_some_and(|h| h.len() != n) {
            return Err(PyValueError::new_err("text_hashes differs in length"));
        }
        let dim = representations.first().map_or(0, Vec::len);
        let mut examples = Vec::with_capacity(n);
        for (i, ((id, lang), rep)) in ids
            .into_iter()
            .zip(languages)
            .zip(representations)
            .enumerate()
        {
            let payload = payload_from_py(task, &payloads.get_item(i)?)?;
            let hash = text_hashes.as_ref().map_or_else(|| fnv1a64(&id), |h| h[i]);
            examples.push(Example::new(id, lang, hash, rep, payload).map_err(err)?);
        }
        Ok(PyDataset {
            inner: Dataset::new(task, role, dim, examples).map_err(err)?,
        })
    }

    /// Loads a dataset directory; `role` overrides the manifest role.
    #[staticmethod]
    #[pyo3(signature = (path, role=None))]
    fn read(path: PathBuf, role: Option<&str>) -> PyResult<Self> {
        let inner = match role {
            Some(r) => io::read_dataset_as(&path, parse_role(r)?),
            None => io::read_dataset(&path),
        }
        .map_err(err)?;
        Ok(PyDataset { inner })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        io::write_dataset(&self.inner, &path).map_err(err)
    }

    #[getter]
    fn task(&self) -> &'static str {
        self.inner.task().name()
    }

    #[getter]
    fn role(&self) -> String {
        self.inner.role().to_string()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn ids(&self) -> Vec<String> {
        self.inner
            .examples()
            .iter()
            .map(|e| e.id().to_string())
            .collect()
    }

    #[getter]
    fn languages(&self) -> Vec<String> {
        self.inner
            .examples()
            .iter()
            .map(|e| e.language().to_string())
            .collect()
    }

    #[getter]
    fn representations(&self) -> Vec<Vec<f64>> {
        self.inner
            .examples()
            .iter()
            .map(|e| e.representation().to_vec())
            .collect()
    }

    fn payload<'py>(&self, py: Python<'py>, i: usize) -> PyResult<Bound<'py, PyAny>> {
        let e = self
            .inner
            .examples()
            .get(i)
            .ok_or_else(|| pyo3::exceptions::PyIndexError::new_err(i))?;
        payload_to_py(py, e.payload())
    }

    /// Copy with duplicate text hashes removed, first occurrence kept.
    fn dedup(&self) -> Self {
        PyDataset {
            inner: demux_core::dedup(&self.inner),
        }
    }

    /// Uncertainty value of every example (higher is more uncertain).
    #[pyo3(signature = (scorer=None))]
    fn uncertainty(&self, scorer: Option<&str>) -> PyResult<Vec<f64>> {
        let scorer = parse_scorer(scorer)?.unwrap_or(Scorer::default_for(self.inner.task()));
        let scores = demux_core::score_dataset(&self.inner, scorer).map_err(err)?;
        Ok(scores.into_iter().map(|s| s.value()).collect())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(task={}, role={}, n={}, dim={})",
            self.inner.task(),
            self.inner.role(),
            self.inner.len(),
            self.inner.dim()
        )
    }
}

/// Result of one selection round.
#[pyclass(name = "Plan", module = "demux", frozen, from_py_object)]
#[derive(Clone)]
struct PyPlan {
    inner: SelectionPlan,
}

#[pymethods]
impl PyPlan {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = parse_plan(text, std::path::Path::new("<string>")).map_err(err)?;
        Ok(PyPlan { inner })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(PyPlan {
            inner: io::read_plan(&path).map_err(err)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        io::write_plan(&self.inner, &path).map_err(err)
    }

    /// Canonical JSON, identical to the on-disk plan file.
    fn to_json(&self) -> PyResult<String> {
        plan_to_string(&self.inner).map_err(err)
    }

    #[getter]
    fn round(&self) -> u32 {
        self.inner.round
    }

    #[getter]
    fn strategy(&self) -> &'static str {
        self.inner.strategy.name()
    }

    #[getter]
    fn chosen(&self) -> Vec<String> {
        self.inner.chosen.clone()
    }

    #[getter]
    fn scores(&self) -> std::collections::BTreeMap<String, f64> {
        self.inner.scores.clone()
    }

    #[getter]
    fn lang_counts(&self) -> std::collections::BTreeMap<String, usize> {
        self.inner.lang_counts.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn requested(&self) -> usize {
        self.inner.requested
    }

    #[getter]
    fn shortfall(&self) -> bool {
        self.inner.shortfall
    }

    #[getter]
    fn k(&self) -> Option<usize> {
        self.inner.k
    }

    #[getter]
    fn scorer(&self) -> Option<&'static str> {
        self.inner.scorer.map(Scorer::name)
    }

    /// Fraction of the chosen examples per language.
    fn language_distribution(&self) -> PyResult<std::collections::BTreeMap<String, f64>> {
        sim::language_distribution(&self.inner).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "Plan(strategy={}, round={}, chosen={}, requested={})",
            self.inner.strategy,
            self.inner.round,
            self.inner.len(),
            self.inner.requested
        )
    }
}

fn plan(p: Result<SelectionPlan, selection::SelectError>) -> PyResult<PyPlan> {
    p.map(|inner| PyPlan { inner }).map_err(err)
}

#[pyfunction]
fn margin_sequence(probs: Vec<f64>) -> PyResult<f64> {
    unc::margin_sequence(&probs).map(|s| s.raw()).map_err(err)
}

#[pyfunction]
fn margin_min_token(rows: Vec<Vec<f64>>) -> PyResult<f64> {
    unc::margin_min_token(&rows).map(|s| s.raw()).map_err(err)
}

#[pyfunction]
fn sum_prob_qa(start_logp: Vec<f64>, end_logp: Vec<f64>) -> PyResult<f64> {
    unc::sum_prob_qa(&start_logp, &end_logp)
        .map(|s| s.raw())
        .map_err(err)
}

#[pyfunction]
fn mnlp_token(top_class_probs: Vec<f64>) -> PyResult<f64> {
    unc::mnlp_token(&top_class_probs)
        .map(|s| s.raw())
        .map_err(err)
}

/// Mean L2 distance from `x` to every target representation.
#[pyfunction]
fn target_distance(x: Vec<f64>, targets: &PyDataset) -> PyResult<f64> {
    demux_core::target_distance(&x, &targets.inner).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (source, targets, budget, exclude=None))]
fn select_average_dist(
    source: &PyDataset,
    targets: &PyDataset,
    budget: usize,
    exclude: Option<Vec<String>>,
) -> PyResult<PyPlan> {
    plan(selection::select_average_dist(
        &source.inner,
        &targets.inner,
        budget,
        &exclusions(exclude),
    ))
}

#[pyfunction]
#[pyo3(signature = (source, budget, scorer=None, exclude=None))]
fn select_uncertainty(
    source: &PyDataset,
    budget: usize,
    scorer: Option<&str>,
    exclude: Option<Vec<String>>,
) -> PyResult<PyPlan> {
    let scorer = parse_scorer(scorer)?.unwrap_or(Scorer::default_for(source.inner.task()));
    plan(selection::select_uncertainty(
        &source.inner,
        budget,
        scorer,
        &exclusions(exclude),
    ))
}

#[pyfunction]
#[pyo3(signature = (source, targets, budget, k, scorer=None, exclude=None))]
fn select_knn_uncertainty(
    source: &PyDataset,
    targets: &PyDataset,
    budget: usize,
    k: usize,
    scorer: Option<&str>,
    exclude: Option<Vec<String>>,
) -> PyResult<PyPlan> {
    let scorer = parse_scorer(scorer)?.unwrap_or(Scorer::default_for(source.inner.task()));
    plan(selection::select_knn_uncertainty(
        &source.inner,
        &targets.inner,
        budget,
        k,
        scorer,
        &exclusions(exclude),
    ))
}

#[pyfunction]
#[pyo3(signature = (source, budget, seed=0, exclude=None))]
fn select_random(
    source: &PyDataset,
    budget: usize,
    seed: u64,
    exclude: Option<Vec<String>>,
) -> PyResult<PyPlan> {
    plan(selection::select_random(
        &source.inner,
        budget,
        seed,
        &exclusions(exclude),
    ))
}

#[pyfunction]
#[pyo3(signature = (source, budget, seed=0, exclude=None))]
fn select_egalitarian(
    source: &PyDataset,
    budget: usize,
    seed: u64,
    exclude: Option<Vec<String>>,
) -> PyResult<PyPlan> {
    plan(selection::select_egalitarian(
        &source.inner,
        budget,
        seed,
        &exclusions(exclude),
    ))
}

/// Random sample from a labeled target-language pool.
#[pyfunction]
#[pyo3(signature = (target_language_pool, budget, seed=0, exclude=None))]
fn select_gold(
    target_language_pool: &PyDataset,
    budget: usize,
    seed: u64,
    exclude: Option<Vec<String>>,
) -> PyResult<PyPlan> {
    plan(selection::select_gold(
        &target_language_pool.inner,
        budget,
        seed,
        &exclusions(exclude),
    ))
}

/// Random sample reproducing the per-language counts of `reference`.
#[pyfunction]
#[pyo3(signature = (reference, source, seed=0, exclude=None))]
fn same_ratio_random(
    reference: &PyPlan,
    source: &PyDataset,
    seed: u64,
    exclude: Option<Vec<String>>,
) -> PyResult<PyPlan> {
    plan(selection::same_ratio_random(
        &reference.inner,
        &source.inner,
        seed,
        &exclusions(exclude),
    ))
}

/// Runs the multi-round loop on fixed pools, returning one plan per round.
#[pyfunction]
#[pyo3(signature = (strategy, source, budget, rounds=1, targets=None, k=None, scorer=None, seed=0, reference=None))]
#[allow(clippy::too_many_arguments)]
fn run_rounds(
    py: Python<'_>,
    strategy: &str,
    source: &PyDataset,
    budget: usize,
    rounds: usize,
    targets: Option<&PyDataset>,
    k: Option<usize>,
    scorer: Option<&str>,
    seed: u64,
    reference: Option<Vec<PyPlan>>,
) -> PyResult<Vec<PyPlan>> {
    let mut cfg = ALConfig::new(
        budget,
        rounds,
        parse_strategy(strategy)?,
        source.inner.task(),
    );
    cfg.k = k;
    cfg.scorer = parse_scorer(scorer)?;
    cfg.seed = seed;
    cfg.reference = reference
        .unwrap_or_default()
        .into_iter()
        .map(|p| p.inner)
        .collect();
    let mut provider = StaticProvider {
        source: source.inner.clone(),
        targets: targets.map(|t| t.inner.clone()),
    };
    let plans = py.detach(|| run_loop(&cfg, &mut provider)).map_err(err)?;
    Ok(plans.into_iter().map(|inner| PyPlan { inner }).collect())
}

/// Pearson correlation between target uncertainty and the mean uncertainty
/// of each target's k nearest source neighbors.
#[pyfunction]
#[pyo3(signature = (source, targets, k=10, scorer=None))]
fn neighborhood_uncertainty_correlation(
    source: &PyDataset,
    targets: &PyDataset,
    k: usize,
    scorer: Option<&str>,
) -> PyResult<f64> {
    let scorer = parse_scorer(scorer)?.unwrap_or(Scorer::default_for(source.inner.task()));
    sim::neighborhood_uncertainty_correlation(&source.inner, &targets.inner, k, scorer).map_err(err)
}

/// Validates a dataset directory. Returns `(ok, checks)` where each check is
/// `(name, passed, detail)`.
#[pyfunction]
fn validate(path: PathBuf) -> (bool, Vec<(String, bool, String)>) {
    let report = io::validate_dataset(&path);
    let ok = report.ok();
    (
        ok,
        report
            .checks
            .into_iter()
            .map(|c| (c.name, c.passed, c.detail))
            .collect(),
    )
}

/// Runs the simulator. `config` is a JSON object with the same keys as the
/// TOML experiment config. Returns `(results_csv, summary_json)`.
#[pyfunction]
#[pyo3(signature = (arms, seeds=25, config=None))]
fn simulate(
    py: Python<'_>,
    arms: Vec<String>,
    seeds: usize,
    config: Option<&str>,
) -> PyResult<(String, String)> {
    let cfg: ExperimentConfig = match config {
        Some(text) => {
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?
        }
        None => ExperimentConfig::default(),
    };
    let arms = arms
        .iter()
        .map(|a| parse_strategy(a))
        .collect::<PyResult<Vec<_>>>()?;
    let table = py.detach(|| cfg.run(&arms, seeds)).map_err(err)?;
    let summary = table.summary(cfg.baseline.name(), cfg.permutations);
    Ok((
        table.to_csv().map_err(err)?,
        io::to_canonical_json(&summary).map_err(err)?,
    ))
}

#[pymodule]
fn demux(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DemuxError", m.py().get_type::<DemuxError>())?;
    m.add(
        "TASKS",
        TaskKind::ALL.iter().map(|t| t.name()).collect::<Vec<_>>(),
    )?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyPlan>()?;
    m.add_function(wrap_pyfunction!(margin_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(margin_min_token, m)?)?;
    m.add_function(wrap_pyfunction!(sum_prob_qa, m)?)?;
    m.add_function(wrap_pyfunction!(mnlp_token, m)?)?;
    m.add_function(wrap_pyfunction!(target_distance, m)?)?;
    m.add_function(wrap_pyfunction!(select_average_dist, m)?)?;
    m.add_function(wrap_pyfunction!(select_uncertainty, m)?)?;
    m.add_function(wrap_pyfunction!(select_knn_uncertainty, m)?)?;
    m.add_function(wrap_pyfunction!(select_random, m)?)?;
    m.add_function(wrap_pyfunction!(select_egalitarian, m)?)?;
    m.add_function(wrap_pyfunction!(select_gold, m)?)?;
    m.add_function(wrap_pyfunction!(same_ratio_random, m)?)?;
    m.add_function(wrap_pyfunction!(run_rounds, m)?)?;
    m.add_function(wrap_pyfunction!(neighborhood_uncertainty_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
