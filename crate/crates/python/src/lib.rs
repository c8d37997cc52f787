use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use slarm_core as core_;
use core_::coverage::{init_coverage, run_coverage};
use core_::experiment::{self, ExperimentConfig, Mode};
use core_::grid::{self, CellClass, GridIndex};
use core_::radio::{self, HeightModel, RicianParams};

fn err(e: core_::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn loads<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// Room, boxes, access point and sensor settings.
#[pyclass(name = "Scenario", module = "slarm", skip_from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: core_::Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn fig2() -> Self {
        Self { inner: core_::Scenario::fig2() }
    }

    #[staticmethod]
    fn fig2_padded() -> Self {
        Self {
            inner: core_::Scenario::fig2_padded(),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: core_::Scenario::from_json_str(text).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_path(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: core_::Scenario::from_path(&path).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json().to_string()
    }

    /// Ground-truth tri-state grid at resolution `delta`.
    fn ground_truth(&self, delta: f64) -> PyResult<PyGrid> {
        let t = experiment::TruthMaps::build(&self.inner, delta).map_err(err)?;
        Ok(PyGrid { inner: t.classes })
    }

    #[getter]
    fn size(&self) -> (f64, f64, f64) {
        (2.0 * self.inner.x_max, 2.0 * self.inner.y_max, self.inner.ceiling_height)
    }
}

/// Tri-state map: 0 unexplored, 0.5 free, 1 occupied.
#[pyclass(name = "Grid", module = "slarm", skip_from_py_object)]
#[derive(Clone)]
struct PyGrid {
    inner: grid::ClassGrid,
}

#[pymethods]
impl PyGrid {
    #[staticmethod]
    fn from_pgm(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: grid::parse_pgm(text, "pgm").map_err(err)?,
        })
    }

    fn to_pgm(&self) -> String {
        grid::pgm_string(&self.inner)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.geometry().width
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.geometry().height
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.geometry().delta
    }

    /// Cell value at 1-based index `(a, b)`.
    fn value(&self, a: usize, b: usize) -> PyResult<f64> {
        self.inner
            .get(GridIndex::new(a, b))
            .map(CellClass::value)
            .ok_or_else(|| PyValueError::new_err(format!("({a}, {b}) is outside the grid")))
    }

    /// Row-major values, row `b = 1` first.
    fn values(&self) -> Vec<f64> {
        self.inner.cells().iter().map(|c| c.value()).collect()
    }

    /// Metric center of cell `(a, b)`.
    fn center(&self, a: usize, b: usize) -> PyResult<(f64, f64)> {
        let p = self.inner.geometry().center(GridIndex::new(a, b)).map_err(err)?;
        Ok((p.x, p.y))
    }

    fn count(&self, value: f64) -> usize {
        self.inner.cells().iter().filter(|c| c.value() == value).count()
    }

    /// Runs coverage exploration on this map and returns its report as a dict.
    #[pyo3(signature = (r_e=0.2, seed=1, mse=0.0))]
    fn explore<'py>(&self, py: Python<'py>, r_e: f64, seed: u64, mse: f64) -> PyResult<Bound<'py, PyAny>> {
        let mut st = init_coverage(&self.inner, mse, r_e, seed).map_err(err)?;
        let budget = 50 * self.inner.cells().len();
        let rep = run_coverage(&mut st, |_, _, _, _| Ok(()), budget).map_err(err)?;
        let text = format!(
            "{{\"covered_cells\": {}, \"reachable_cells\": {}, \"coverage_rate\": {}, \"steps\": {}, \"relocations\": {}, \"truncated\": {}}}",
            rep.covered_cells, rep.reachable_cells, rep.coverage_rate, rep.steps, rep.relocations, rep.truncated
        );
        loads(py, &text)
    }
}

/// Expected channel power gain per free cell.
#[pyclass(name = "RadioMap", module = "slarm", skip_from_py_object)]
#[derive(Clone)]
struct PyRadioMap {
    inner: radio::RadioMap,
}

#[pymethods]
impl PyRadioMap {
    /// Gain in dB at cell `(a, b)`, `None` where there is no data.
    fn gain_db(&self, a: usize, b: usize) -> Option<f64> {
        self.inner.gain_db(GridIndex::new(a, b))
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn to_grid_csv(&self) -> String {
        self.inner.to_grid_csv()
    }

    fn __len__(&self) -> usize {
        self.inner.data_count()
    }
}

#[pyfunction]
fn build_radio_map(grid: &PyGrid, scenario: &PyScenario) -> PyResult<PyRadioMap> {
    let s = &scenario.inner;
    Ok(PyRadioMap {
        inner: radio::build_radio_map(&grid.inner, &HeightModel::from_scenario(s), s).map_err(err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (est_grid, est_radio, truth_grid, truth_radio, epsilon_db=1.0))]
fn radio_map_accuracy(
    est_grid: &PyGrid,
    est_radio: &PyRadioMap,
    truth_grid: &PyGrid,
    truth_radio: &PyRadioMap,
    epsilon_db: f64,
) -> PyResult<f64> {
    experiment::radio_map_accuracy(
        &est_grid.inner,
        &est_radio.inner,
        &truth_grid.inner,
        &truth_radio.inner,
        epsilon_db,
    )
    .map_err(err)
}

/// InF-SH path loss in dB.
#[pyfunction]
#[pyo3(signature = (d, fc_ghz=3.5, los=true))]
fn path_loss(d: f64, fc_ghz: f64, los: bool) -> PyResult<f64> {
    radio::path_loss(d, fc_ghz, los).map_err(err)
}

/// Expected gain in dB at a receiver above `(x, y)`.
#[pyfunction]
fn expected_gain(scenario: &PyScenario, x: f64, y: f64) -> PyResult<f64> {
    radio::expected_gain(&scenario.inner, core_::Point2::new(x, y)).map_err(err)
}

/// Monte-Carlo estimate of E[|h|^2] for Rician factor `alpha_bar`.
#[pyfunction]
#[pyo3(signature = (alpha_bar, n=100_000, seed=1, blocked=false))]
fn mean_channel_power(alpha_bar: f64, n: usize, seed: u64, blocked: bool) -> PyResult<f64> {
    let p = RicianParams::new(alpha_bar).map_err(err)?;
    if n == 0 {
        return Err(PyValueError::new_err("n must be positive"));
    }
    let s = radio::sample_channels(&p, blocked, n, seed);
    Ok(s.iter().map(|c| c.power()).sum::<f64>() / n as f64)
}

#[pyfunction]
fn bresenham_trace(start: (usize, usize), end: (usize, usize)) -> PyResult<Vec<(usize, usize)>> {
    if start.0 == 0 || start.1 == 0 || end.0 == 0 || end.1 == 0 {
        return Err(PyValueError::new_err("grid indices are 1-based"));
    }
    Ok(grid::bresenham_trace(GridIndex::new(start.0, start.1), GridIndex::new(end.0, end.1))
        .into_iter()
        .map(|g| (g.a, g.b))
        .collect())
}

/// Runs a sweep and returns the metric rows as a list of dicts.
#[pyfunction]
#[pyo3(signature = (scenario, resolutions, speeds=vec![0.6], particles=30, seeds=vec![1], mode="both", epsilon_db=1.0, out_dir=None))]
#[allow(clippy::too_many_arguments)]
fn run_experiment<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    resolutions: Vec<f64>,
    speeds: Vec<f64>,
    particles: usize,
    seeds: Vec<u64>,
    mode: &str,
    epsilon_db: f64,
    out_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = ExperimentConfig::new(scenario.inner.clone());
    cfg.resolutions = resolutions;
    cfg.speeds = speeds;
    cfg.particles = particles;
    cfg.seeds = seeds;
    cfg.mode = mode.parse::<Mode>().map_err(err)?;
    cfg.epsilon_db = epsilon_db;
    cfg.out_dir = out_dir;
    let report = py.detach(|| experiment::run_experiment(&cfg)).map_err(err)?;
    loads(py, &report.metrics_json().map_err(err)?)
}

#[pymodule]
fn slarm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyRadioMap>()?;
    m.add_function(wrap_pyfunction!(build_radio_map, m)?)?;
    m.add_function(wrap_pyfunction!(radio_map_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(path_loss, m)?)?;
    m.add_function(wrap_pyfunction!(expected_gain, m)?)?;
    m.add_function(wrap_pyfunction!(mean_channel_power, m)?)?;
    m.add_function(wrap_pyfunction!(bresenham_trace, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
