//! Python bindings for the `lumafuse` toolkit.
//!
//! Rasters cross the boundary as flat row-major RGB lists of floats.

use std::collections::BTreeMap;

use lumafuse::enhancers::{self, DegradeSpec, EnhancerKind, EnhancerSpec};
use lumafuse::fusion::{self, MethodOutputs, WeightVector};
use lumafuse::image::{self, BitDepth};
use lumafuse::metrics;
use lumafuse::ranking::{self, Direction, RankInput, RankTable};
use lumafuse::Error;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io { .. } => PyOSError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// A 3-channel floating-point image.
#[pyclass(name = "Raster", module = "lumafuse", frozen, from_py_object)]
#[derive(Clone)]
struct PyRaster {
    inner: lumafuse::Raster,
}

impl From<lumafuse::Raster> for PyRaster {
    fn from(inner: lumafuse::Raster) -> Self {
        Self { inner }
    }
}

#[pymethods]
impl PyRaster {
    #[new]
    fn new(width: usize, height: usize, data: Vec<f64>) -> PyResult<Self> {
        lumafuse::Raster::new(width, height, data)
            .map(Self::from)
            .map_err(to_py)
    }

    #[staticmethod]
    fn filled(width: usize, height: usize, value: f64) -> Self {
        lumafuse::Raster::filled(width, height, value).into()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn to_list(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn sample(&self, x: usize, y: usize, channel: usize) -> PyResult<f64> {
        if x >= self.inner.width() || y >= self.inner.height() || channel >= image::CHANNELS {
            return Err(PyValueError::new_err("sample index out of range"));
        }
        Ok(self.inner.sample(x, y, channel))
    }

    fn clamped(&self) -> Self {
        self.inner.clamped().into()
    }

    fn mean_luminance(&self) -> f64 {
        image::mean_luminance(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("Raster(width={}, height={})", self.inner.width(), self.inner.height())
    }
}

#[pyfunction]
fn load_raster(path: &str) -> PyResult<PyRaster> {
    image::load_raster(path).map(PyRaster::from).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (raster, path, bit_depth = 8))]
fn save_raster(raster: &PyRaster, path: &str, bit_depth: u8) -> PyResult<()> {
    let depth = BitDepth::try_from(bit_depth).map_err(to_py)?;
    image::save_raster(&raster.inner, path, depth).map_err(to_py)
}

#[pyfunction]
fn mse(a: &PyRaster, b: &PyRaster) -> PyResult<f64> {
    metrics::mse(&a.inner, &b.inner).map_err(to_py)
}

/// PSNR in dB for peak 1; `inf` for identical images.
#[pyfunction]
fn psnr(a: &PyRaster, b: &PyRaster) -> PyResult<f64> {
    metrics::psnr(&a.inner, &b.inner).map_err(to_py)
}

#[pyfunction]
fn ssim(a: &PyRaster, b: &PyRaster) -> PyResult<f64> {
    metrics::ssim(&a.inner, &b.inner).map_err(to_py)
}

fn parse_kind(kind: &str) -> PyResult<EnhancerKind> {
    serde_json::from_value(serde_json::Value::String(kind.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown enhancer kind {kind:?}")))
}

/// Applies one classical enhancer, e.g. `apply_enhancer("gamma", img, {"gamma": 0.5})`.
#[pyfunction]
#[pyo3(signature = (kind, raster, params = None))]
fn apply_enhancer(kind: &str, raster: &PyRaster, params: Option<BTreeMap<String, f64>>) -> PyResult<PyRaster> {
    let spec = EnhancerSpec {
        kind: parse_kind(kind)?,
        params: params.unwrap_or_default(),
    };
    enhancers::apply_enhancer(&spec, &raster.inner)
        .map(PyRaster::from)
        .map_err(to_py)
}

/// Returns `(augmented, gamma)` with gamma drawn uniformly from `[lo, hi]`.
#[pyfunction]
#[pyo3(signature = (raster, seed, lo = enhancers::DEFAULT_GAMMA_LO, hi = enhancers::DEFAULT_GAMMA_HI))]
fn random_gamma_augment(raster: &PyRaster, seed: u64, lo: f64, hi: f64) -> PyResult<(PyRaster, f64)> {
    enhancers::random_gamma_augment(&raster.inner, seed, lo, hi)
        .map(|(img, g)| (img.into(), g))
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (raster, gamma_d = 2.0, scale = 0.4, noise_sigma = 0.01, seed = 0))]
fn degrade(raster: &PyRaster, gamma_d: f64, scale: f64, noise_sigma: f64, seed: u64) -> PyResult<PyRaster> {
    let spec = DegradeSpec {
        gamma_d,
        scale,
        noise_sigma,
        seed,
    };
    enhancers::degrade(&raster.inner, &spec)
        .map(PyRaster::from)
        .map_err(to_py)
}

/// Weighted sum of the rasters; weights must sum to `weight_sum`.
#[pyfunction]
#[pyo3(signature = (rasters, weights, weight_sum = 1.0))]
fn fuse(rasters: Vec<PyRaster>, weights: Vec<f64>, weight_sum: f64) -> PyResult<PyRaster> {
    let weights = WeightVector::new(weights, weight_sum).map_err(to_py)?;
    let rasters: Vec<&lumafuse::Raster> = rasters.iter().map(|r| &r.inner).collect();
    fusion::fuse(&rasters, &weights).map(PyRaster::from).map_err(to_py)
}

fn unwrap_outputs(outputs: BTreeMap<String, BTreeMap<String, PyRaster>>) -> MethodOutputs {
    outputs
        .into_iter()
        .map(|(m, outs)| (m, outs.into_iter().map(|(id, r)| (id, r.inner)).collect()))
        .collect()
}

fn unwrap_gts(gts: BTreeMap<String, PyRaster>) -> BTreeMap<String, lumafuse::Raster> {
    gts.into_iter().map(|(id, r)| (id, r.inner)).collect()
}

/// Closed-form least-squares weights for `outputs[method][id]` against
/// `gts[id]`. Returns a dict with the weights and diagnostics.
#[pyfunction]
#[pyo3(signature = (outputs, gts, weight_sum = 1.0, ridge = 0.0))]
fn solve_weights<'py>(
    py: Python<'py>,
    outputs: BTreeMap<String, BTreeMap<String, PyRaster>>,
    gts: BTreeMap<String, PyRaster>,
    weight_sum: f64,
    ridge: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let problem = fusion::build_problem(&unwrap_outputs(outputs), &unwrap_gts(gts)).map_err(to_py)?;
    let (weights, diag) = fusion::solve_weights_closed_form(&problem, weight_sum, ridge).map_err(to_py)?;
    let dict = PyDict::new(py);
    dict.set_item("method_ids", diag.method_ids)?;
    dict.set_item("weights", weights.weights().to_vec())?;
    dict.set_item("nonnegative", weights.is_nonnegative())?;
    dict.set_item("residual_norm", diag.residual_norm)?;
    dict.set_item("per_method_mse", diag.per_method_mse)?;
    dict.set_item("gram_condition", diag.gram_condition)?;
    dict.set_item("correlations", diag.correlations)?;
    Ok(dict)
}

/// Weight vectors on the scaled simplex at the given spacing.
#[pyfunction]
#[pyo3(signature = (n, step, weight_sum = 1.0))]
fn simplex_grid(n: usize, step: f64, weight_sum: f64) -> PyResult<Vec<Vec<f64>>> {
    let grid = fusion::scaled_simplex_grid(n, step, weight_sum).map_err(to_py)?;
    Ok(grid.into_iter().map(|w| w.weights().to_vec()).collect())
}

/// Dataset-mean PSNR/SSIM at every grid point. Returns a dict with
/// `method_ids`, `rows` as `(weights, mean_psnr, mean_ssim)` tuples and the
/// indices of the best rows.
#[pyfunction]
#[pyo3(signature = (outputs, gts, step = 0.02, weight_sum = 1.0))]
fn sweep_surface<'py>(
    py: Python<'py>,
    outputs: BTreeMap<String, BTreeMap<String, PyRaster>>,
    gts: BTreeMap<String, PyRaster>,
    step: f64,
    weight_sum: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let table = fusion::sweep_surface(&unwrap_outputs(outputs), &unwrap_gts(gts), step, weight_sum).map_err(to_py)?;
    let rows: Vec<(Vec<f64>, f64, f64)> = table
        .rows
        .iter()
        .map(|r| (r.weights.clone(), r.mean_psnr, r.mean_ssim))
        .collect();
    let dict = PyDict::new(py);
    dict.set_item("method_ids", table.method_ids.clone())?;
    dict.set_item("rows", rows)?;
    dict.set_item("best_psnr", table.best_psnr)?;
    dict.set_item("best_ssim", table.best_ssim)?;
    Ok(dict)
}

/// Competition ranks (1 is best).
#[pyfunction]
#[pyo3(signature = (values, higher_better = true))]
fn compute_ranks(values: Vec<f64>, higher_better: bool) -> PyResult<Vec<u32>> {
    let direction = if higher_better {
        Direction::HigherBetter
    } else {
        Direction::LowerBetter
    };
    ranking::compute_ranks(&values, direction).map_err(to_py)
}

#[pyfunction]
fn total_score(ranks: BTreeMap<String, u32>, weights: BTreeMap<String, f64>) -> PyResult<f64> {
    ranking::total_score(&ranks, &weights).map_err(to_py)
}

/// Builds a leaderboard from a JSON document with `metrics` and
/// `entrants`; returns `(name, total)` pairs, best first.
#[pyfunction]
fn rank_table(document: &str) -> PyResult<Vec<(String, f64)>> {
    let input: RankInput = serde_json::from_str(document).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let table = RankTable::build(&input).map_err(to_py)?;
    Ok(table.entrants.into_iter().map(|e| (e.name, e.total)).collect())
}

#[pymodule]
#[pyo3(name = "lumafuse")]
fn lumafuse_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRaster>()?;
    m.add_function(wrap_pyfunction!(load_raster, m)?)?;
    m.add_function(wrap_pyfunction!(save_raster, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(apply_enhancer, m)?)?;
    m.add_function(wrap_pyfunction!(random_gamma_augment, m)?)?;
    m.add_function(wrap_pyfunction!(degrade, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(solve_weights, m)?)?;
    m.add_function(wrap_pyfunction!(simplex_grid, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_surface, m)?)?;
    m.add_function(wrap_pyfunction!(compute_ranks, m)?)?;
    m.add_function(wrap_pyfunction!(total_score, m)?)?;
    m.add_function(wrap_pyfunction!(rank_table, m)?)?;
    Ok(())
}
