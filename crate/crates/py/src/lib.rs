//! Python bindings: the fully i.i.d. residual model, its diffusion limit,
//! the edge-of-chaos solver, the KS statistic and the experiment runners.

use std::path::PathBuf;

use depthflow::experiments::{self, ExperimentConfig, ExperimentKind, RunContext, Sampler};
use depthflow::resnet::{eoc_solve as eoc_solve_rs, ForwardOptions};
use depthflow::rng::SeedSpec;
use depthflow::sdelim::{linear_growth_check, radial_grid, SdeCoefficients};
use depthflow::stats::ks_two_sample as ks_rs;
use depthflow::{Activation, Error, FullyIidLaw, ModelConfig, ParamLaw};
use nalgebra::DVector;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    let msg = format!("[{}] {e}", e.category());
    match e.category() {
        "config" | "data" => PyValueError::new_err(msg),
        "io" => PyOSError::new_err(msg),
        _ => PyRuntimeError::new_err(msg),
    }
}

fn activation(name: &str) -> PyResult<Activation> {
    name.parse().map_err(to_py)
}

/// Residual network `x <- x + phi(dW psi(x) + db)` with i.i.d. Gaussian
/// increments of variance `sigma_w2 dt / D` and `sigma_b2 dt`.
#[pyclass(name = "Model", module = "depthflow_py", frozen)]
struct PyModel {
    inner: ModelConfig,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (depth, width, phi="tanh", psi="identity", sigma_w2=1.0, sigma_b2=1.0, horizon=1.0))]
    fn new(depth: usize, width: usize, phi: &str, psi: &str, sigma_w2: f64, sigma_b2: f64, horizon: f64) -> PyResult<Self> {
        let law = FullyIidLaw::from_variances(sigma_w2, sigma_b2).map_err(to_py)?;
        let inner = ModelConfig::new(depth, width, horizon, activation(phi)?, activation(psi)?, ParamLaw::FullyIid(law))
            .map_err(to_py)?;
        Ok(PyModel { inner })
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    /// `x_{T,1}` for every scalar input, one list per draw.
    #[pyo3(signature = (inputs, n_draws, seed=0))]
    fn forward(&self, py: Python<'_>, inputs: Vec<f64>, n_draws: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let s = Sampler::Resnet(self.inner.clone(), ForwardOptions::default());
        py.detach(|| first_coords(&s, &inputs, n_draws, seed)).map_err(to_py)
    }

    /// Same as `forward` for the Euler-Maruyama discretization of the limit.
    #[pyo3(signature = (inputs, n_draws, seed=0, steps=None))]
    fn sde(&self, py: Python<'_>, inputs: Vec<f64>, n_draws: usize, seed: u64, steps: Option<usize>) -> PyResult<Vec<Vec<f64>>> {
        let s = Sampler::Sde {
            coeffs: SdeCoefficients::from_model(&self.inner).map_err(to_py)?,
            width: self.inner.width,
            steps: steps.unwrap_or(self.inner.depth),
            horizon: self.inner.horizon,
            opts: ForwardOptions::default(),
        };
        py.detach(|| first_coords(&s, &inputs, n_draws, seed)).map_err(to_py)
    }

    fn drift(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let c = SdeCoefficients::from_model(&self.inner).map_err(to_py)?;
        self.check_len(&x)?;
        Ok(c.drift(&DVector::from_vec(x)).as_slice().to_vec())
    }

    /// Diffusion matrix as a list of rows.
    fn diffusion(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let c = SdeCoefficients::from_model(&self.inner).map_err(to_py)?;
        self.check_len(&x)?;
        let m = c.diffusion(&DVector::from_vec(x)).map_err(to_py)?;
        Ok(m.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    /// `(satisfied, constant, slope)` of the linear-growth probe.
    fn linear_growth(&self) -> PyResult<(bool, f64, f64)> {
        let c = SdeCoefficients::from_model(&self.inner).map_err(to_py)?;
        let r = linear_growth_check(&c, &radial_grid(self.inner.width)).map_err(to_py)?;
        Ok((r.satisfied, r.constant, r.slope))
    }

    fn __repr__(&self) -> String {
        let m = &self.inner;
        format!(
            "Model(depth={}, width={}, phi='{}', psi='{}', horizon={})",
            m.depth,
            m.width,
            m.phi.name(),
            m.psi.name(),
            m.horizon
        )
    }
}

impl PyModel {
    fn check_len(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.inner.width {
            return Err(PyValueError::new_err(format!("state has length {}, model width is {}", x.len(), self.inner.width)));
        }
        Ok(())
    }
}

fn first_coords(s: &Sampler, inputs: &[f64], n_draws: usize, seed: u64) -> depthflow::Result<Vec<Vec<f64>>> {
    let pts: Vec<Vec<f64>> = inputs.iter().map(|z| vec![*z]).collect();
    let draws = s.draws(&pts, experiments::InputLayer::Copy, n_draws, SeedSpec::new(seed))?;
    Ok(draws.into_iter().map(|d| d.first).collect())
}

/// Weight variance at the edge of chaos for `phi` in {"tanh", "relu"}.
#[pyfunction]
#[pyo3(signature = (phi, sigma_b2=0.05))]
fn eoc_solve(phi: &str, sigma_b2: f64) -> PyResult<f64> {
    eoc_solve_rs(activation(phi)?, sigma_b2).map_err(to_py)
}

/// Two-sample KS statistic and its level-0.001 threshold.
#[pyfunction]
fn ks_two_sample(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = ks_rs(&a, &b).map_err(to_py)?;
    Ok((r.statistic, r.threshold))
}

/// Runs an experiment from TOML text and returns its summary.
#[pyfunction]
#[pyo3(signature = (kind, config, out_dir, seed=None, scale=None))]
fn run_experiment<'py>(
    py: Python<'py>,
    kind: &str,
    config: &str,
    out_dir: PathBuf,
    seed: Option<u64>,
    scale: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let kind: ExperimentKind = match kind.replace('-', "_").as_str() {
        "sanity_check" => ExperimentKind::SanityCheck,
        "function_space" => ExperimentKind::FunctionSpace,
        "corr_heatmap" => ExperimentKind::CorrHeatmap,
        "sgd" => ExperimentKind::Sgd,
        "abc" => ExperimentKind::Abc,
        other => return Err(PyValueError::new_err(format!("unknown experiment `{other}`"))),
    };
    let cfg = ExperimentConfig::from_toml(config).map_err(to_py)?;
    let mut ctx = RunContext::new(&cfg, out_dir);
    if let Some(s) = seed {
        ctx.seed = s;
    }
    if let Some(s) = scale {
        ctx.scale = s.parse().map_err(to_py)?;
    }
    let report = py.detach(|| experiments::run(kind, &cfg, &ctx)).map_err(to_py)?;
    let d = PyDict::new(py);
    for (k, v) in report.summary {
        d.set_item(k, v)?;
    }
    Ok(d)
}

#[pymodule]
fn depthflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(eoc_solve, m)?)?;
    m.add_function(wrap_pyfunction!(ks_two_sample, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
