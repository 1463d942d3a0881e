//! Python bindings: the Cahn-Hilliard solver, lookup tables, the
//! time-average objective, manifest validation, markdown rendering and
//! whole-workflow execution.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use cseflow_core::cahn_hilliard::{self as ch, CHParams, Field};
use cseflow_core::data::{self, LookupTable, TimeSeries};
use cseflow_core::description::{self, MarkdownDoc};
use cseflow_core::engine::{self, ComponentRegistry, DEFAULT_PREFERENCE};
use cseflow_core::model::{self, ComponentManifest, InputsObject, PortSpec, WorkflowDefinition};
use cseflow_core::{cli, config, provenance};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Cahn-Hilliard parameters; every field is readable and writable.
#[pyclass(name = "CahnHilliardParams", from_py_object)]
#[derive(Clone)]
struct PyParams {
    inner: CHParams,
}

macro_rules! param_accessors {
    ($($field:ident : $ty:ty => $get:ident, $set:ident;)*) => {
        #[pymethods]
        impl PyParams {
            #[new]
            #[pyo3(signature = (**kwargs))]
            fn new(kwargs: Option<&Bound<'_, pyo3::types::PyDict>>) -> PyResult<Self> {
                let mut p = PyParams { inner: CHParams::default() };
                if let Some(kwargs) = kwargs {
                    for (key, value) in kwargs.iter() {
                        let key: String = key.extract()?;
                        match key.as_str() {
                            $(stringify!($field) => p.inner.$field = value.extract()?,)*
                            other => return Err(value_err(format!("unknown parameter {other:?}"))),
                        }
                    }
                }
                Ok(p)
            }

            $(
                #[getter]
                fn $get(&self) -> $ty {
                    self.inner.$field
                }

                #[setter]
                fn $set(&mut self, v: $ty) {
                    self.inner.$field = v;
                }
            )*

            fn validate(&self) -> PyResult<()> {
                self.inner.validate().map_err(value_err)
            }

            fn stable_dt_bound(&self) -> f64 {
                self.inner.stable_dt_bound()
            }

            fn __repr__(&self) -> String {
                format!("{:?}", self.inner)
            }
        }
    };
}

param_accessors! {
    nx: usize => nx, set_nx;
    ny: usize => ny, set_ny;
    dx: f64 => dx, set_dx;
    dt: f64 => dt, set_dt;
    n_steps: usize => n_steps, set_n_steps;
    snapshot_interval: usize => snapshot_interval, set_snapshot_interval;
    c0: f64 => c0, set_c0;
    noise_amplitude: f64 => noise_amplitude, set_noise_amplitude;
    seed: u64 => seed, set_seed;
    rt: f64 => rt, set_rt;
    l: f64 => l, set_l;
    a_c: f64 => a_c, set_a_c;
    d_a: f64 => d_a, set_d_a;
    d_b: f64 => d_b, set_d_b;
}

/// Row-major 2D concentration field.
#[pyclass(name = "Field", from_py_object)]
#[derive(Clone)]
struct PyField {
    inner: Field,
}

#[pymethods]
impl PyField {
    #[new]
    fn new(nx: usize, ny: usize, values: Vec<f64>) -> PyResult<Self> {
        if values.len() != nx * ny {
            return Err(value_err(format!("expected {} values, got {}", nx * ny, values.len())));
        }
        Ok(PyField {
            inner: Field { nx, ny, values },
        })
    }

    #[staticmethod]
    fn uniform(nx: usize, ny: usize, c: f64) -> Self {
        PyField {
            inner: Field::uniform(nx, ny, c),
        }
    }

    #[getter]
    fn nx(&self) -> usize {
        self.inner.nx
    }

    #[getter]
    fn ny(&self) -> usize {
        self.inner.ny
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values.clone()
    }

    fn at(&self, i: usize, j: usize) -> PyResult<f64> {
        if i >= self.inner.nx || j >= self.inner.ny {
            return Err(pyo3::exceptions::PyIndexError::new_err("cell index out of range"));
        }
        Ok(self.inner.at(i, j))
    }

    fn sum(&self) -> f64 {
        self.inner.sum()
    }

    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    fn variance(&self) -> f64 {
        self.inner.variance()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn to_pgm<'py>(&self, py: Python<'py>) -> Bound<'py, pyo3::types::PyBytes> {
        pyo3::types::PyBytes::new(py, &self.inner.to_pgm())
    }

    fn __len__(&self) -> usize {
        self.inner.values.len()
    }
}

#[pyfunction]
fn hash_artifact(data: &[u8]) -> String {
    provenance::hash_artifact(data).to_string()
}

#[pyfunction]
fn g_chem(c: f64, params: &PyParams) -> PyResult<f64> {
    ch::g_chem(c, &params.inner).map_err(value_err)
}

#[pyfunction]
fn mobility(c: f64, params: &PyParams) -> f64 {
    ch::mobility(c, &params.inner)
}

#[pyfunction]
fn ch_init(params: &PyParams) -> PyResult<PyField> {
    Ok(PyField {
        inner: ch::ch_init(&params.inner).map_err(value_err)?,
    })
}

#[pyfunction]
fn ch_step(field: &PyField, params: &PyParams) -> PyResult<PyField> {
    Ok(PyField {
        inner: ch::ch_step(&field.inner, &params.inner).map_err(value_err)?,
    })
}

#[pyfunction]
fn mu_field(field: &PyField, params: &PyParams) -> PyResult<PyField> {
    Ok(PyField {
        inner: ch::mu_field(&field.inner, &params.inner).map_err(value_err)?,
    })
}

#[pyfunction]
fn total_free_energy(field: &PyField, params: &PyParams) -> PyResult<f64> {
    ch::total_free_energy(&field.inner, &params.inner).map_err(value_err)
}

/// `(step, t, energy, mean_concentration)`
type Sample = (usize, f64, f64, f64);

/// Run a full simulation without writing files. Returns
/// `(samples, final_field)` with samples as `(step, t, energy, mean)` tuples.
#[pyfunction]
fn run_simulation(py: Python<'_>, params: &PyParams) -> PyResult<(Vec<Sample>, PyField)> {
    let p = params.inner.clone();
    let out = py
        .detach(move || ch::run_simulation(&p, &mut ch::NoSnapshots))
        .map_err(value_err)?;
    let samples = out
        .series
        .samples
        .iter()
        .map(|s| (s.step, s.t, s.energy, s.mean_concentration))
        .collect();
    Ok((samples, PyField { inner: out.final_field }))
}

/// Piecewise-linear lookup table.
#[pyclass(name = "LookupTable", from_py_object)]
#[derive(Clone)]
struct PyLookupTable {
    inner: LookupTable,
}

#[pymethods]
impl PyLookupTable {
    #[new]
    fn new(knots: Vec<(f64, f64)>) -> PyResult<Self> {
        Ok(PyLookupTable {
            inner: LookupTable::new(knots).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(PyLookupTable {
            inner: LookupTable::from_csv(text.as_bytes()).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyLookupTable {
            inner: data::load_table(&path).map_err(value_err)?,
        })
    }

    #[getter]
    fn knots(&self) -> Vec<(f64, f64)> {
        self.inner.knots().to_vec()
    }

    fn interpolate(&self, x: f64) -> PyResult<f64> {
        data::interpolate(&self.inner, x).map_err(value_err)
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }
}

/// `(1 / t_e) * integral_0^t_e X(t) dt` with the trapezoidal rule.
#[pyfunction]
fn time_average_objective(samples: Vec<(f64, f64)>, t_e: f64) -> PyResult<f64> {
    let series = TimeSeries::new(samples).map_err(value_err)?;
    data::time_average_objective(&series, t_e).map_err(value_err)
}

/// Findings of a manifest given as JSON text, as `(path, message)` pairs.
#[pyfunction]
fn validate_manifest(manifest_json: &str) -> PyResult<Vec<(String, String)>> {
    let m = ComponentManifest::from_json(manifest_json).map_err(value_err)?;
    Ok(model::validate_manifest(&m)
        .findings
        .into_iter()
        .map(|f| (f.path, f.message))
        .collect())
}

/// Whether an output port can feed an input port. Ports are JSON objects.
#[pyfunction]
fn ports_compatible(output_json: &str, input_json: &str) -> PyResult<bool> {
    let out: PortSpec = serde_json::from_str(output_json).map_err(value_err)?;
    let input: PortSpec = serde_json::from_str(input_json).map_err(value_err)?;
    Ok(model::ports_compatible(&out, &input))
}

#[pyfunction]
#[pyo3(signature = (source, title = config::DEFAULT_WORKFLOW_TITLE))]
fn render_markdown(source: &str, title: &str) -> String {
    description::render_markdown(&MarkdownDoc::new(source), title)
}

/// Compose the components named in `stages` (in order, no bindings) from
/// `components_dir`, execute them into `out_dir` and return the run record
/// as JSON text.
#[pyfunction]
#[pyo3(signature = (components_dir, stages, inputs_json = "{}", out_dir = PathBuf::from("Output"), title = config::DEFAULT_WORKFLOW_TITLE))]
fn run_workflow(
    py: Python<'_>,
    components_dir: PathBuf,
    stages: Vec<String>,
    inputs_json: &str,
    out_dir: PathBuf,
    title: &str,
) -> PyResult<String> {
    let registry = ComponentRegistry::load_dir(&components_dir).map_err(|e| PyIOError::new_err(e.to_string()))?;
    let inputs: InputsObject = config::parse_inputs(inputs_json.as_bytes()).map_err(value_err)?;
    let def = stages
        .iter()
        .fold(WorkflowDefinition::new(title), |d, id| d.stage(id, None));
    let plan = engine::compose(&def, &registry, &inputs, &DEFAULT_PREFERENCE).map_err(value_err)?;
    let (_, record) = py
        .detach(move || engine::execute(&plan, &out_dir))
        .map_err(|e| PyIOError::new_err(e.to_string()))?;
    String::from_utf8(record.to_json_bytes()).map_err(value_err)
}

/// Run the command-line tool with `args`; returns the exit code.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    cli::run(&args, &mut std::io::stdout(), &mut std::io::stderr()).code()
}

#[pymodule]
fn cseflow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("DEFAULT_WORKFLOW_TITLE", config::DEFAULT_WORKFLOW_TITLE)?;
    m.add_class::<PyParams>()?;
    m.add_class::<PyField>()?;
    m.add_class::<PyLookupTable>()?;
    m.add_function(wrap_pyfunction!(hash_artifact, m)?)?;
    m.add_function(wrap_pyfunction!(g_chem, m)?)?;
    m.add_function(wrap_pyfunction!(mobility, m)?)?;
    m.add_function(wrap_pyfunction!(ch_init, m)?)?;
    m.add_function(wrap_pyfunction!(ch_step, m)?)?;
    m.add_function(wrap_pyfunction!(mu_field, m)?)?;
    m.add_function(wrap_pyfunction!(total_free_energy, m)?)?;
    m.add_function(wrap_pyfunction!(run_simulation, m)?)?;
    m.add_function(wrap_pyfunction!(time_average_objective, m)?)?;
    m.add_function(wrap_pyfunction!(validate_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(ports_compatible, m)?)?;
    m.add_function(wrap_pyfunction!(render_markdown, m)?)?;
    m.add_function(wrap_pyfunction!(run_workflow, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
