//! Python bindings: template rendering, response parsing, metric
//! aggregation, dataset handling, and full mock-or-live pipeline runs.
//!
//! Values cross the boundary as plain dicts/lists mirroring the crate's
//! serde layouts, so Python sees the same shapes the JSONL files carry.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyFloat, PyInt, PyList, PyString};

use argus_core::audit::AuditTrail;
use argus_core::config::AppConfig;
use argus_core::eval;
use argus_core::parsing;
use argus_core::prompts::{Bindings, PromptRegistry, TemplateId};
use argus_core::task::{ImageRef, VqaTask};

fn json_to_py(py: Python<'_>, value: &serde_json::Value) -> PyResult<Py<PyAny>> {
    Ok(match value {
        serde_json::Value::Null => py.None(),
        serde_json::Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any().unbind(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any().unbind()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind()
            }
        }
        serde_json::Value::String(s) => PyString::new(py, s).into_any().unbind(),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any().unbind()
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.into_any().unbind()
        }
    })
}

fn py_to_json(value: &Bound<'_, PyAny>) -> PyResult<serde_json::Value> {
    if value.is_none() {
        return Ok(serde_json::Value::Null);
    }
    if let Ok(b) = value.cast::<PyBool>() {
        return Ok(serde_json::Value::Bool(b.is_true()));
    }
    if let Ok(i) = value.cast::<PyInt>() {
        return Ok(serde_json::Value::from(i.extract::<i64>()?));
    }
    if let Ok(f) = value.cast::<PyFloat>() {
        return Ok(serde_json::Value::from(f.value()));
    }
    if let Ok(s) = value.cast::<PyString>() {
        return Ok(serde_json::Value::from(s.to_str()?));
    }
    if let Ok(list) = value.cast::<PyList>() {
        let mut items = Vec::with_capacity(list.len());
        for item in list.iter() {
            items.push(py_to_json(&item)?);
        }
        return Ok(serde_json::Value::Array(items));
    }
    if let Ok(dict) = value.cast::<PyDict>() {
        let mut map = serde_json::Map::new();
        for (k, v) in dict.iter() {
            map.insert(k.extract::<String>()?, py_to_json(&v)?);
        }
        return Ok(serde_json::Value::Object(map));
    }
    Err(PyValueError::new_err(format!(
        "unsupported value type: {}",
        value.get_type().name()?
    )))
}

fn to_py_via_serde<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let json = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &json)
}

fn from_py_via_serde<T: serde::de::DeserializeOwned>(value: &Bound<'_, PyAny>) -> PyResult<T> {
    let json = py_to_json(value)?;
    serde_json::from_value(json).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn load_registry(template_dir: Option<&str>) -> PyResult<PromptRegistry> {
    match template_dir {
        Some(dir) => PromptRegistry::load_dir(PathBuf::from(dir)),
        None => PromptRegistry::load_default(),
    }
    .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Renders one template. `bindings` maps placeholder names to strings;
/// include `"image"` (any value) to mark an image attachment.
#[pyfunction]
#[pyo3(signature = (id, bindings, template_dir=None))]
fn render_template(
    py: Python<'_>,
    id: &str,
    bindings: HashMap<String, String>,
    template_dir: Option<&str>,
) -> PyResult<Py<PyAny>> {
    let registry = load_registry(template_dir)?;
    let id = TemplateId::parse(id).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let mut b = Bindings::new();
    for (name, value) in &bindings {
        b.set(name, value)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
    }
    let pair = registry
        .render(id, &b)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let dict = PyDict::new(py);
    dict.set_item("system_text", pair.system_text)?;
    dict.set_item("user_text", pair.user_text)?;
    dict.set_item("image_slot", pair.image_slot)?;
    Ok(dict.into_any().unbind())
}

/// `[(template_id, [placeholder, ...]), ...]` for every template.
#[pyfunction]
#[pyo3(signature = (template_dir=None))]
fn validate_registry(py: Python<'_>, template_dir: Option<&str>) -> PyResult<Py<PyAny>> {
    let registry = load_registry(template_dir)?;
    let scanned = registry
        .validate_registry()
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let list = PyList::empty(py);
    for (id, placeholders) in scanned {
        let names: Vec<String> = placeholders.into_iter().collect();
        list.append((id.as_str(), names))?;
    }
    Ok(list.into_any().unbind())
}

/// The last question sentence of `text`. Raises ValueError when none exists.
#[pyfunction]
fn extract_question(text: &str) -> PyResult<String> {
    parsing::extract_question(text).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn parse_draft(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    let triple = parsing::parse_draft(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py_via_serde(py, &triple)
}

#[pyfunction]
fn parse_revision(py: Python<'_>, text: &str) -> PyResult<Py<PyAny>> {
    to_py_via_serde(py, &parsing::parse_revision(text))
}

/// `"match"` or `"no_match"`. Raises ValueError when no standalone 0/1
/// token exists.
#[pyfunction]
fn parse_judge_verdict(text: &str) -> PyResult<&'static str> {
    match parsing::parse_judge_verdict(text) {
        Ok(parsing::Verdict::Match) => Ok("match"),
        Ok(parsing::Verdict::NoMatch) => Ok("no_match"),
        Err(e) => Err(PyValueError::new_err(e.to_string())),
    }
}

#[pyfunction]
fn count_words(text: &str) -> usize {
    parsing::count_words(text)
}

/// Aggregates scored items (dicts with record_id/question_type/verdict/
/// unparseable) plus per-record runtimes in minutes into a report dict.
#[pyfunction]
#[pyo3(signature = (items, runtimes_min=None, label="run"))]
fn aggregate(
    py: Python<'_>,
    items: &Bound<'_, PyAny>,
    runtimes_min: Option<HashMap<String, f64>>,
    label: &str,
) -> PyResult<Py<PyAny>> {
    let items: Vec<eval::ScoredItem> = from_py_via_serde(items)?;
    let runtimes = runtimes_min.unwrap_or_default();
    let report = eval::aggregate(&items, &runtimes, label)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py_via_serde(py, &report)
}

/// Cell-wise unweighted mean of report dicts.
#[pyfunction]
fn baseline_average(py: Python<'_>, reports: &Bound<'_, PyAny>) -> PyResult<Py<PyAny>> {
    let reports: Vec<eval::RunReport> = from_py_via_serde(reports)?;
    let avg = eval::baseline_average(&reports).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py_via_serde(py, &avg)
}

/// Cell-wise accuracy delta `b − a` (includes `overall`).
#[pyfunction]
fn improvement(
    py: Python<'_>,
    a: &Bound<'_, PyAny>,
    b: &Bound<'_, PyAny>,
) -> PyResult<Py<PyAny>> {
    let a: eval::RunReport = from_py_via_serde(a)?;
    let b: eval::RunReport = from_py_via_serde(b)?;
    let deltas = eval::improvement(&a, &b).map_err(|e| PyValueError::new_err(e.to_string()))?;
    to_py_via_serde(py, &deltas)
}

/// Renders a report dict as `"table_text"`, `"csv"`, or `"structured"`.
#[pyfunction]
fn render_report(report: &Bound<'_, PyAny>, format: &str) -> PyResult<String> {
    let report: eval::RunReport = from_py_via_serde(report)?;
    let format = match format {
        "table_text" => eval::ReportFormat::TableText,
        "csv" => eval::ReportFormat::Csv,
        "structured" => eval::ReportFormat::Structured,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown format {other:?} (expected table_text, csv or structured)"
            )))
        }
    };
    Ok(eval::render_report(&report, format))
}

#[pyfunction]
fn load_dataset(py: Python<'_>, path: &str) -> PyResult<Py<PyAny>> {
    let records =
        eval::load_dataset(Path::new(path)).map_err(|e| PyIOError::new_err(e.to_string()))?;
    to_py_via_serde(py, &records)
}

/// Seeded per-type sampling of records previously loaded with
/// `load_dataset`.
#[pyfunction]
fn sample_per_type(
    py: Python<'_>,
    records: &Bound<'_, PyAny>,
    n: usize,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let records: Vec<eval::EvalRecord> = from_py_via_serde(records)?;
    to_py_via_serde(py, &eval::sample_per_type(&records, n, seed))
}

/// Runs the full pipeline for one image/question pair using the backends
/// in `config_path`. Returns `{final_answer, total_latency_s, turns}`,
/// where `turns` are audit records.
#[pyfunction]
fn run_task(
    py: Python<'_>,
    config_path: &str,
    image_path: &str,
    question: &str,
) -> PyResult<Py<PyAny>> {
    let config = AppConfig::load(Path::new(config_path))
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let parts = config
        .build()
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let image = ImageRef::from_path(image_path).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let task_id = format!("py-{}", std::process::id());
    let task = VqaTask::new(task_id, image, question)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let result = py
        .detach(|| parts.pipeline.run_task(task))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let trail = AuditTrail::from_memory(&result.memory, &result.final_answer)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;

    let dict = PyDict::new(py);
    dict.set_item("final_answer", &result.final_answer)?;
    dict.set_item("total_latency_s", trail.total_latency_s)?;
    dict.set_item("iterations_run", result.iterations_run)?;
    dict.set_item("turns", to_py_via_serde(py, &trail.turns)?)?;
    dict.set_item(
        "per_phase_latency",
        to_py_via_serde(py, &result.per_phase_latency)?,
    )?;
    Ok(dict.into_any().unbind())
}

#[pymodule]
fn argus_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(render_template, m)?)?;
    m.add_function(wrap_pyfunction!(validate_registry, m)?)?;
    m.add_function(wrap_pyfunction!(extract_question, m)?)?;
    m.add_function(wrap_pyfunction!(parse_draft, m)?)?;
    m.add_function(wrap_pyfunction!(parse_revision, m)?)?;
    m.add_function(wrap_pyfunction!(parse_judge_verdict, m)?)?;
    m.add_function(wrap_pyfunction!(count_words, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(baseline_average, m)?)?;
    m.add_function(wrap_pyfunction!(improvement, m)?)?;
    m.add_function(wrap_pyfunction!(render_report, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(sample_per_type, m)?)?;
    m.add_function(wrap_pyfunction!(run_task, m)?)?;
    Ok(())
}
