//! Python bindings. Structured results cross the boundary as plain dicts
//! and lists built from the core crate's serde representations.

use burgerlab::burgers::{self, LagrangianSolution, ParticleSystem};
use burgerlab::envelopes;
use burgerlab::fractal;
use burgerlab::paths::{self, FastSampler, ExactSampler};
use burgerlab::persistence::{self as persist, EventProcess, McEstimate};
use burgerlab::rkhs;
use burgerlab::{GridPath, HurstIndex, LabError, PathKind, RandomnessSpec, SampleGrid};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn err(e: LabError) -> PyErr {
    match e {
        LabError::Io(e) => PyOSError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn hurst(h: f64) -> PyResult<HurstIndex> {
    HurstIndex::new(h).map_err(err)
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Uniform grid `left + i * spacing`, `i < count`.
#[pyclass(name = "Grid", frozen, from_py_object)]
#[derive(Clone)]
struct PyGrid(SampleGrid);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(left: f64, spacing: f64, count: usize) -> PyResult<Self> {
        SampleGrid::new(left, spacing, count).map(PyGrid).map_err(err)
    }

    /// `below` points left of 0 and `above` points right of it.
    #[staticmethod]
    fn anchored(below: usize, above: usize, spacing: f64) -> PyResult<Self> {
        SampleGrid::anchored(below, above, spacing).map(PyGrid).map_err(err)
    }

    #[staticmethod]
    fn symmetric(half_width: f64, spacing: f64) -> PyResult<Self> {
        SampleGrid::symmetric(half_width, spacing).map(PyGrid).map_err(err)
    }

    #[getter]
    fn left(&self) -> f64 {
        self.0.left()
    }

    #[getter]
    fn right(&self) -> f64 {
        self.0.right()
    }

    #[getter]
    fn spacing(&self) -> f64 {
        self.0.spacing()
    }

    #[getter]
    fn count(&self) -> usize {
        self.0.count()
    }

    fn coordinates(&self) -> Vec<f64> {
        self.0.coordinates()
    }

    fn __len__(&self) -> usize {
        self.0.count()
    }

    fn __repr__(&self) -> String {
        format!("Grid(left={}, spacing={}, count={})", self.0.left(), self.0.spacing(), self.0.count())
    }
}

#[pyfunction]
fn fbm_covariance(h: f64, x: f64, y: f64) -> PyResult<f64> {
    Ok(paths::fbm_covariance(hurst(h)?, x, y))
}

#[pyfunction]
fn ifbm_covariance(h: f64, s: f64, t: f64) -> PyResult<f64> {
    Ok(paths::ifbm_covariance(hurst(h)?, s, t))
}

#[pyfunction]
fn fbm_ifbm_covariance(h: f64, x: f64, t: f64) -> PyResult<f64> {
    Ok(paths::fbm_ifbm_covariance(hurst(h)?, x, t))
}

/// One fBm path on `grid`, zero at coordinate 0.
#[pyfunction]
#[pyo3(signature = (h, grid, seed = 1, replica = 0, exact = false))]
fn sample_fbm(py: Python<'_>, h: f64, grid: PyGrid, seed: u64, replica: u64, exact: bool) -> PyResult<Vec<f64>> {
    let h = hurst(h)?;
    let rand = RandomnessSpec::new(seed, replica);
    py.detach(|| {
        let path = if exact {
            ExactSampler::new(h, grid.0)?.sample(rand)
        } else {
            FastSampler::new(h, grid.0)?.sample(rand)
        };
        Ok(path.into_values())
    })
    .map_err(err)
}

/// Running trapezoid integral, zero at index `anchor`.
#[pyfunction]
fn integrate(values: Vec<f64>, spacing: f64, anchor: usize) -> PyResult<Vec<f64>> {
    if anchor >= values.len() {
        return Err(PyValueError::new_err(format!("anchor {anchor} outside {} values", values.len())));
    }
    Ok(paths::cumulative_trapezoid(&values, spacing, anchor))
}

#[pyfunction]
fn upper_envelope<'py>(py: Python<'py>, values: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &envelopes::upper_envelope(&values).map_err(err)?)
}

#[pyfunction]
fn lower_envelope<'py>(py: Python<'py>, values: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &envelopes::lower_envelope(&values).map_err(err)?)
}

/// Extreme one-sided difference quotients at index `k`; `left >= right`
/// exactly when `k` is a node of the concave majorant.
#[pyfunction]
fn slope_pair(values: Vec<f64>, k: usize) -> PyResult<(f64, f64)> {
    let s = envelopes::slope_pair(&values, k).map_err(err)?;
    Ok((s.left, s.right))
}

#[pyfunction]
fn slope_functional(values: Vec<f64>) -> f64 {
    envelopes::functional_f(&values)
}

fn velocity(grid: PyGrid, values: Vec<f64>) -> PyResult<GridPath> {
    GridPath::new(grid.0, values, PathKind::Velocity, None).map_err(err)
}

/// Burgers solution at one time, from the convex minorant of the potential.
#[pyclass(name = "Solution", frozen)]
struct PySolution(LagrangianSolution);

#[pymethods]
impl PySolution {
    #[getter]
    fn time(&self) -> f64 {
        self.0.time
    }

    #[getter]
    fn contact_indices(&self) -> Vec<usize> {
        self.0.contact_indices.clone()
    }

    fn contact_coordinates(&self) -> Vec<f64> {
        self.0.contact_coordinates()
    }

    fn potential(&self) -> Vec<f64> {
        self.0.potential.values().to_vec()
    }

    fn minorant(&self) -> Vec<f64> {
        self.0.minorant.evaluate_all()
    }

    /// Lagrangian velocity at the contact indices.
    fn velocity(&self) -> Vec<f64> {
        self.0.lagrangian_velocity.clone()
    }

    /// Shocks as Lagrangian intervals `{left, right, mass, momentum}`.
    fn clusters<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.cluster_reports())
    }

    fn holder_constant(&self, gamma: f64, left: f64, right: f64) -> f64 {
        burgers::holder_check(&self.0, gamma, (left, right))
    }

    fn write_csv(&self, path: std::path::PathBuf) -> PyResult<()> {
        let f = std::fs::File::create(path)?;
        self.0.write_csv(std::io::BufWriter::new(f)).map_err(err)
    }
}

#[pyfunction]
fn solve(grid: PyGrid, velocity_values: Vec<f64>, t: f64) -> PyResult<PySolution> {
    let u0 = velocity(grid, velocity_values)?;
    burgers::solve(&u0, t).map(PySolution).map_err(err)
}

/// Completely inelastic particles started at the cell midpoints of the grid.
#[pyfunction]
fn sticky_clusters<'py>(py: Python<'py>, grid: PyGrid, velocity_values: Vec<f64>, t: f64) -> PyResult<Bound<'py, PyAny>> {
    let u0 = velocity(grid, velocity_values)?;
    let system = ParticleSystem::from_cells(&u0).map_err(err)?;
    to_py(py, &burgers::sticky_clusters(&system, t).map_err(err)?)
}

/// Whether the sticky clusters coincide with the minorant's shocks.
#[pyfunction]
#[pyo3(signature = (grid, velocity_values, t, tolerance = 1))]
fn sticky_agrees(grid: PyGrid, velocity_values: Vec<f64>, t: f64, tolerance: usize) -> PyResult<bool> {
    let u0 = velocity(grid, velocity_values)?;
    let solution = burgers::solve(&u0, t).map_err(err)?;
    let system = ParticleSystem::from_cells(&u0).map_err(err)?;
    let clusters = burgers::sticky_clusters(&system, t).map_err(err)?;
    Ok(burgers::compare_clusters(&solution, &clusters, tolerance).agrees())
}

#[pyfunction]
fn box_count(points: Vec<f64>, scale: f64, left: f64, right: f64) -> PyResult<usize> {
    fractal::box_count(&points, scale, (left, right)).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (points, left, right, ladder = None))]
fn dimension_estimate<'py>(
    py: Python<'py>,
    points: Vec<f64>,
    left: f64,
    right: f64,
    ladder: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let window = (left, right);
    let ladder = ladder.unwrap_or_else(|| fractal::default_ladder(&points, window));
    to_py(py, &fractal::dimension_estimate(&points, window, &ladder).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (h, points = 65536, half_width = 1.0, time = 1.0, replicas = 50, seed = 1))]
fn contact_dimension<'py>(
    py: Python<'py>,
    h: f64,
    points: usize,
    half_width: f64,
    time: f64,
    replicas: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let h = hurst(h)?;
    let study = py
        .detach(|| burgers::contact_dimension(h, points, half_width, time, replicas, seed))
        .map_err(err)?;
    to_py(py, &study)
}

/// Persistence probabilities over `horizons` from common paths.
#[pyfunction]
#[pyo3(signature = (event, h, level, horizons, spacing = 1.0, replicas = 10000, seed = 1))]
#[allow(clippy::too_many_arguments)]
fn persistence<'py>(
    py: Python<'py>,
    event: &str,
    h: f64,
    level: f64,
    horizons: Vec<f64>,
    spacing: f64,
    replicas: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let process = EventProcess::parse(event)
        .ok_or_else(|| PyValueError::new_err(format!("unknown event `{event}`")))?;
    let h = hurst(h)?;
    let estimates = py
        .detach(|| persist::estimate_persistence_ladder(process, level, &horizons, h, spacing, replicas, seed))
        .map_err(err)?;
    to_py(py, &estimates)
}

/// Fitted exponent of a list returned by `persistence`.
#[pyfunction]
fn persistence_exponent<'py>(py: Python<'py>, estimates: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let estimates: Vec<McEstimate> = from_py(estimates)?;
    to_py(py, &persist::exponent_fit(&estimates).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (h, n = 64, replicas = 10000, seed = 1))]
fn verify_chain<'py>(py: Python<'py>, h: f64, n: usize, replicas: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let h = hurst(h)?;
    let report = py.detach(|| persist::verify_chain(h, n, replicas, seed)).map_err(err)?;
    to_py(py, &report.to_json())
}

/// The fixed trend `2x^2` inside `[-1, 1]`, `2|x| - 1` outside.
#[pyfunction]
fn psi(x: f64) -> f64 {
    rkhs::psi(x)
}

/// Kernel space of integrated fBm restricted to a finite grid.
#[pyclass(name = "KernelSpace", frozen)]
struct PyKernelSpace(rkhs::KernelSpace);

#[pymethods]
impl PyKernelSpace {
    #[new]
    fn new(py: Python<'_>, h: f64, grid: PyGrid) -> PyResult<Self> {
        let h = hurst(h)?;
        py.detach(|| rkhs::build_space(grid.0, h)).map(PyKernelSpace).map_err(err)
    }

    #[getter]
    fn count(&self) -> usize {
        self.0.count()
    }

    #[getter]
    fn hurst(&self) -> f64 {
        self.0.hurst().value()
    }

    #[getter]
    fn regularized(&self) -> bool {
        self.0.regularized()
    }

    #[getter]
    fn min_eigenvalue(&self) -> f64 {
        self.0.min_eigenvalue()
    }

    fn coordinates(&self) -> Vec<f64> {
        self.0.grid().coordinates()
    }

    fn covariance(&self, i: usize, j: usize) -> PyResult<f64> {
        let n = self.0.count();
        if i >= n || j >= n {
            return Err(PyValueError::new_err(format!("index outside 0..{n}")));
        }
        Ok(self.0.covariance(i, j))
    }

    fn column(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.0.count() {
            return Err(PyValueError::new_err(format!("index outside 0..{}", self.0.count())));
        }
        Ok(self.0.column(i))
    }

    /// Coefficients `c` with `Sigma c = phi`.
    fn solve(&self, phi: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.solve(&phi).map_err(err)
    }

    fn norm(&self, trend: Vec<f64>) -> PyResult<f64> {
        rkhs::rkhs_norm(&self.0, &trend).map_err(err)
    }

    #[pyo3(signature = (seed = 1, replica = 0))]
    fn sample(&self, seed: u64, replica: u64) -> Vec<f64> {
        self.0.sample(RandomnessSpec::new(seed, replica))
    }

    fn psi_trend<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &rkhs::psi_trend(*self.0.grid()))
    }

    /// The two localizing trends, vanishing on one side of the unit interval.
    fn localizers<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &rkhs::localizer_trends(&self.0).map_err(err)?)
    }

    #[pyo3(signature = (offset = 0.0))]
    fn combined_trend<'py>(&self, py: Python<'py>, offset: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &rkhs::combined_trend(&self.0, offset).map_err(err)?)
    }

    #[pyo3(signature = (trend, level, replicas = 1000000, seed = 1))]
    fn verify_shift<'py>(
        &self,
        py: Python<'py>,
        trend: Vec<f64>,
        level: f64,
        replicas: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let space = &self.0;
        let report = py
            .detach(|| rkhs::verify_shift_inequality(space, &trend, level, replicas, seed))
            .map_err(err)?;
        to_py(py, &report)
    }
}

#[pymodule(name = "burgerlab")]
fn burgerlab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PySolution>()?;
    m.add_class::<PyKernelSpace>()?;
    m.add_function(wrap_pyfunction!(fbm_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(ifbm_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(fbm_ifbm_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(sample_fbm, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(upper_envelope, m)?)?;
    m.add_function(wrap_pyfunction!(lower_envelope, m)?)?;
    m.add_function(wrap_pyfunction!(slope_pair, m)?)?;
    m.add_function(wrap_pyfunction!(slope_functional, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(sticky_clusters, m)?)?;
    m.add_function(wrap_pyfunction!(sticky_agrees, m)?)?;
    m.add_function(wrap_pyfunction!(box_count, m)?)?;
    m.add_function(wrap_pyfunction!(dimension_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(contact_dimension, m)?)?;
    m.add_function(wrap_pyfunction!(persistence, m)?)?;
    m.add_function(wrap_pyfunction!(persistence_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(verify_chain, m)?)?;
    m.add_function(wrap_pyfunction!(psi, m)?)?;
    Ok(())
}
