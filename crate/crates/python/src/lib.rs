//! Python bindings: `import phasekit`.

use std::path::PathBuf;

use nalgebra::DMatrix;
use phasekit_core::experiments::{self, AdaptiveSweep, Crossing, ExperimentVariant, PhaseGridConfig, RunOptions};
use phasekit_core::geometry::{build_family, Objective, Prior, SeparableFamily, SignalVariant, SparseSignal};
use phasekit_core::solvers::{self, AdmmParams, Constraint, RecoveryProblem};
use phasekit_core::statdim::{self, BoundVariant, EstimateMethod, MinimizeOptions, PsiVariant, Uncertainty};
use phasekit_core::{verify, Error};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::CorruptCheckpoint { .. } => PyOSError::new_err(e.to_string()),
        Error::NotConverged { .. } | Error::InnerNotConverged { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn psi_variant(name: &str) -> PyResult<PsiVariant> {
    match name {
        "psi1" => Ok(PsiVariant::Psi1),
        "psi2" => Ok(PsiVariant::Psi2),
        _ => Err(PyValueError::new_err(format!(
            "unknown curve `{name}` (expected psi1 or psi2)"
        ))),
    }
}

fn experiment_variant(name: &str) -> PyResult<ExperimentVariant> {
    name.parse().map_err(to_py)
}

fn bound_variant(name: &str) -> PyResult<BoundVariant> {
    experiment_variant(name).map(ExperimentVariant::bound_variant)
}

/// `(ψ(ρ), τ*)` for `variant` in `{"psi1", "psi2"}`.
#[pyfunction]
#[pyo3(signature = (rho, variant = "psi1"))]
fn psi_value(rho: f64, variant: &str) -> PyResult<(f64, f64)> {
    statdim::psi_value(rho, psi_variant(variant)?).map_err(to_py)
}

/// `(lower, upper)` bracket on the statistical dimension for `s`-sparse recovery.
#[pyfunction]
#[pyo3(signature = (s, n, variant = "l1_plain"))]
fn statdim_bounds(s: usize, n: usize, variant: &str) -> PyResult<(f64, f64)> {
    statdim::statdim_bounds(s, n, bound_variant(variant)?).map_err(to_py)
}

/// `(m_low, m_high)`: the range of `m` outside which the outcome is decided
/// with probability at least `1 − zeta`.
#[pyfunction]
#[pyo3(signature = (delta, n, zeta = 0.5))]
fn transition_window(delta: f64, n: usize, zeta: f64) -> PyResult<(f64, f64)> {
    let w = statdim::transition_window(delta, n, zeta).map_err(to_py)?;
    Ok((w.m_low, w.m_high))
}

#[pyclass(frozen, get_all, name = "StatDimEstimate")]
struct PyEstimate {
    value: f64,
    tau_star: Vec<f64>,
    method: &'static str,
    /// `None` for Monte-Carlo estimates.
    lower: Option<f64>,
    upper: Option<f64>,
    std_error: f64,
    samples: usize,
}

#[pymethods]
impl PyEstimate {
    fn __repr__(&self) -> String {
        format!(
            "StatDimEstimate(value={}, method={:?}, tau_star={:?})",
            self.value, self.method, self.tau_star
        )
    }
}

impl From<statdim::StatDimEstimate> for PyEstimate {
    fn from(e: statdim::StatDimEstimate) -> Self {
        let method = match e.method {
            EstimateMethod::ClosedFormPsi1 | EstimateMethod::ClosedFormPsi2 => "closed_form",
            EstimateMethod::McRecipe => "mc_recipe",
            EstimateMethod::McExact => "mc_exact",
        };
        let (lower, upper, std_error, samples) = match e.uncertainty {
            Uncertainty::Bracket { lower, upper } => (Some(lower), Some(upper), 0.0, 0),
            Uncertainty::StdError { se, samples } => (None, None, se, samples),
        };
        PyEstimate {
            value: e.value,
            tau_star: e.tau_star,
            method,
            lower,
            upper,
            std_error,
            samples,
        }
    }
}

/// `n·ψ(s/n)` with its deterministic bracket.
#[pyfunction]
#[pyo3(signature = (s, n, variant = "l1_plain"))]
fn closed_form_estimate(s: usize, n: usize, variant: &str) -> PyResult<PyEstimate> {
    statdim::closed_form_estimate(s, n, bound_variant(variant)?)
        .map(Into::into)
        .map_err(to_py)
}

/// The sets `S(τ)` whose union is the polar of the descent cone of ℓ1 (plus
/// priors) at a signal.
#[pyclass(frozen)]
struct Family {
    inner: SeparableFamily,
}

#[pymethods]
impl Family {
    /// `priors` is any of `"l2_ball"`, `"nonneg"`; `nonneg=True` declares the
    /// signal nonnegative.
    #[new]
    #[pyo3(signature = (signal, nonneg = false, priors = vec![]))]
    fn new(signal: Vec<f64>, nonneg: bool, priors: Vec<String>) -> PyResult<Self> {
        let variant = if nonneg {
            SignalVariant::Nonnegative
        } else {
            SignalVariant::Signed
        };
        let signal = SparseSignal::new(signal, variant).map_err(to_py)?;
        let priors = priors
            .iter()
            .map(|p| match p.as_str() {
                "l2_ball" => Ok(Prior::L2Ball),
                "nonneg" => Ok(Prior::Nonneg),
                other => Err(PyValueError::new_err(format!(
                    "unknown prior `{other}` (expected l2_ball or nonneg)"
                ))),
            })
            .collect::<PyResult<Vec<_>>>()?;
        let inner = build_family(&signal, Objective::L1, &priors).map_err(to_py)?;
        Ok(Family { inner })
    }

    /// The family an experiment variant uses for a signal with unit entries
    /// on its first `s` coordinates.
    #[staticmethod]
    fn for_variant(n: usize, s: usize, variant: &str) -> PyResult<Self> {
        let variant = experiment_variant(variant)?;
        if s == 0 || s > n {
            return Err(PyValueError::new_err(format!("need 1 <= s <= n, got s = {s}, n = {n}")));
        }
        let mut values = vec![0.0; n];
        values[..s].fill(1.0);
        let signal = SparseSignal::new(values, variant.signal_variant()).map_err(to_py)?;
        let inner = build_family(&signal, Objective::L1, variant.priors()).map_err(to_py)?;
        Ok(Family { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn num_scaled(&self) -> usize {
        self.inner.num_scaled()
    }

    /// `(dist², projection)` of `g` onto `S(τ)`.
    fn project(&self, tau: Vec<f64>, g: Vec<f64>) -> PyResult<(f64, Vec<f64>)> {
        let (d, dec) = self.inner.dist_sq_and_project(&tau, &g).map_err(to_py)?;
        Ok((d, dec.projection))
    }

    fn exact_j(&self, tau: Vec<f64>) -> PyResult<f64> {
        statdim::exact_j(&self.inner, &tau).map_err(to_py)
    }

    /// `(mean, std_error)` of `dist²(g, S(τ))`.
    #[pyo3(signature = (tau, samples = 100_000, seed = 0))]
    fn mc_j(&self, py: Python<'_>, tau: Vec<f64>, samples: usize, seed: u64) -> PyResult<(f64, f64)> {
        let e = py
            .detach(|| statdim::mc_j(&self.inner, &tau, samples, seed))
            .map_err(to_py)?;
        Ok((e.mean, e.std_error))
    }

    /// `(gradient, std_errors)` of `J` at `τ`.
    #[pyo3(signature = (tau, samples = 100_000, seed = 0))]
    fn mc_j_gradient(
        &self,
        py: Python<'_>,
        tau: Vec<f64>,
        samples: usize,
        seed: u64,
    ) -> PyResult<(Vec<f64>, Vec<f64>)> {
        py.detach(|| statdim::mc_j_gradient(&self.inner, &tau, samples, seed))
            .map_err(to_py)
    }

    /// Upper estimate `min_τ J(τ)`.
    #[pyo3(signature = (samples = 100_000, seed = 0, closed_form_single = true))]
    fn minimize_j(&self, py: Python<'_>, samples: usize, seed: u64, closed_form_single: bool) -> PyResult<PyEstimate> {
        let opts = MinimizeOptions {
            closed_form_single,
            ..MinimizeOptions::default()
        };
        py.detach(|| statdim::minimize_j(&self.inner, samples, seed, &opts))
            .map(Into::into)
            .map_err(to_py)
    }

    /// `E min_τ dist²(g, S(τ))`, the statistical dimension itself.
    #[pyo3(signature = (samples = 100_000, seed = 0))]
    fn mc_statdim_exact(&self, py: Python<'_>, samples: usize, seed: u64) -> PyResult<PyEstimate> {
        py.detach(|| statdim::mc_statdim_exact(&self.inner, samples, seed))
            .map(Into::into)
            .map_err(to_py)
    }
}

#[pyclass(frozen, get_all)]
struct RecoveryResult {
    x_hat: Vec<f64>,
    iterations: usize,
    primal_residual: f64,
    dual_residual: f64,
    converged: bool,
    polished: bool,
    objective: f64,
}

#[pymethods]
impl RecoveryResult {
    fn __repr__(&self) -> String {
        format!(
            "RecoveryResult(converged={}, iterations={}, objective={})",
            self.converged, self.iterations, self.objective
        )
    }
}

fn recovery_problem(a: Vec<Vec<f64>>, y: Vec<f64>, nonneg: bool, radius: Option<f64>) -> PyResult<RecoveryProblem> {
    let m = a.len();
    let n = a.first().map_or(0, Vec::len);
    if a.iter().any(|row| row.len() != n) {
        return Err(PyValueError::new_err("rows of A have different lengths"));
    }
    let flat: Vec<f64> = a.into_iter().flatten().collect();
    let mut constraints = vec![];
    if let Some(radius) = radius {
        constraints.push(Constraint::L2Ball { radius });
    }
    if nonneg {
        constraints.push(Constraint::Nonneg);
    }
    RecoveryProblem::new(DMatrix::from_row_slice(m, n, &flat), y, constraints).map_err(to_py)
}

/// Minimizes `‖x‖₁` subject to `Ax = y`, optionally `x ≥ 0` and `‖x‖₂ ≤ radius`.
/// `a` is a list of rows.
#[pyfunction]
#[pyo3(signature = (a, y, nonneg = false, radius = None, rho = 1.0, max_iters = 50_000))]
fn solve(
    py: Python<'_>,
    a: Vec<Vec<f64>>,
    y: Vec<f64>,
    nonneg: bool,
    radius: Option<f64>,
    rho: f64,
    max_iters: usize,
) -> PyResult<RecoveryResult> {
    let problem = recovery_problem(a, y, nonneg, radius)?;
    let params = AdmmParams {
        rho,
        max_iters,
        ..AdmmParams::default()
    };
    let r = py
        .detach(|| solvers::solve_recovery(&problem, &params))
        .map_err(to_py)?;
    Ok(RecoveryResult {
        objective: r.objective(),
        converged: r.converged(),
        x_hat: r.x_hat,
        iterations: r.iterations,
        primal_residual: r.primal_residual,
        dual_residual: r.dual_residual,
        polished: r.polished,
    })
}

/// `(objective, x)` by vertex enumeration; `n ≤ 12` only.
#[pyfunction]
#[pyo3(signature = (a, y, nonneg = false))]
fn lp_oracle_small(a: Vec<Vec<f64>>, y: Vec<f64>, nonneg: bool) -> PyResult<(f64, Vec<f64>)> {
    solvers::lp_oracle_small(&recovery_problem(a, y, nonneg, None)?).map_err(to_py)
}

/// `‖x_hat − x_star‖₂ ≤ 1e−4`.
#[pyfunction]
fn check_success(x_hat: Vec<f64>, x_star: Vec<f64>) -> PyResult<bool> {
    solvers::check_success(&x_hat, &x_star).map_err(to_py)
}

#[pyclass(frozen)]
struct PhaseGrid {
    inner: experiments::PhaseGrid,
}

#[pymethods]
impl PhaseGrid {
    /// `(m, s, successes, trials, non_converged)` for every evaluated cell.
    #[getter]
    fn cells(&self) -> Vec<(usize, usize, usize, usize, usize)> {
        self.inner
            .cells
            .iter()
            .map(|(&(m, s), c)| (m, s, c.successes, c.trials_run, c.non_converged))
            .collect()
    }

    #[getter]
    fn complete(&self) -> bool {
        self.inner.complete
    }

    /// Interpolated 50% crossing in `m`; `-inf` / `inf` when the column
    /// never crosses inside its range.
    fn find_crossing(&self, s: usize) -> PyResult<f64> {
        experiments::find_crossing(&self.inner, s)
            .map(|c: Crossing| c.value())
            .map_err(to_py)
    }

    /// Writes `grid.csv`, `curve.csv` and `heatmap.svg`; returns their paths.
    fn emit_outputs(&self, out_dir: PathBuf) -> PyResult<(PathBuf, PathBuf, PathBuf)> {
        let preds = experiments::theory_predictions(&self.inner.config).map_err(to_py)?;
        let f = experiments::emit_outputs(&self.inner, &preds, &out_dir).map_err(to_py)?;
        Ok((f.grid_csv, f.curve_csv, f.heatmap_svg))
    }
}

/// Runs the success-probability grid. `sweep=True` evaluates only `m` near
/// the predicted transition.
#[pyfunction]
#[pyo3(signature = (
    n, s_values, trials = 20, variant = "l1_plain", seed = 0, m_values = None,
    sweep = false, checkpoint = None, max_new_cells = None,
))]
#[allow(clippy::too_many_arguments)]
fn run_grid(
    py: Python<'_>,
    n: usize,
    s_values: Vec<usize>,
    trials: usize,
    variant: &str,
    seed: u64,
    m_values: Option<Vec<usize>>,
    sweep: bool,
    checkpoint: Option<PathBuf>,
    max_new_cells: Option<usize>,
) -> PyResult<PhaseGrid> {
    let mut config = PhaseGridConfig::new(n, s_values, trials, experiment_variant(variant)?, seed);
    if let Some(ms) = m_values {
        config.m_values = ms;
    }
    if sweep {
        config.sweep = Some(AdaptiveSweep::default());
    }
    let opts = RunOptions {
        checkpoint: checkpoint.as_deref(),
        reset: false,
        max_new_cells,
    };
    let inner = py.detach(|| experiments::run_grid(&config, &opts)).map_err(to_py)?;
    Ok(PhaseGrid { inner })
}

/// `[(name, passed, detail)]` for the built-in cross-checks.
#[pyfunction]
#[pyo3(signature = (fast = true))]
fn run_checks(py: Python<'_>, fast: bool) -> Vec<(String, bool, String)> {
    py.detach(|| verify::run_checks(fast))
        .into_iter()
        .map(|c| (c.name.to_string(), c.passed, c.detail))
        .collect()
}

#[pymodule]
fn phasekit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(psi_value, m)?)?;
    m.add_function(wrap_pyfunction!(statdim_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(transition_window, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(lp_oracle_small, m)?)?;
    m.add_function(wrap_pyfunction!(check_success, m)?)?;
    m.add_function(wrap_pyfunction!(run_grid, m)?)?;
    m.add_function(wrap_pyfunction!(run_checks, m)?)?;
    m.add_class::<PyEstimate>()?;
    m.add_class::<Family>()?;
    m.add_class::<RecoveryResult>()?;
    m.add_class::<PhaseGrid>()?;
    Ok(())
}
