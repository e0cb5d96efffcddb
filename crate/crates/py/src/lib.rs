//! Python module `psi_py`: build or load truss problems, solve them with PSI
//! or Newton-Raphson, and evaluate the constitutive laws.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use psi_core::analysis;
use psi_core::io::{self, ResultsFile};
use psi_core::{
    LinearLaw, LoadRecipe, MaterialLaw, NeuralLaw, NrConfig, PdKind, PowerLaw, PsiError,
    QuadraticPerturbedLaw, SolverConfig,
};

fn err(e: PsiError) -> PyErr {
    match e {
        PsiError::Io(e) => e.into(),
        PsiError::LengthMismatch { .. }
        | PsiError::Geometry(_)
        | PsiError::Modeling(_)
        | PsiError::Input { .. }
        | PsiError::Material(_)
        | PsiError::Weights(_)
        | PsiError::Config(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// A constitutive law `sigma = m(eps)`.
#[pyclass(frozen, skip_from_py_object, module = "psi_py")]
#[derive(Clone)]
struct Material(psi_core::Material);

#[pymethods]
impl Material {
    #[staticmethod]
    #[pyo3(signature = (y0=2e11, p=1e-4))]
    fn power(y0: f64, p: f64) -> PyResult<Self> {
        Ok(Material(PowerLaw::new(y0, p).map_err(err)?.into()))
    }

    #[staticmethod]
    fn linear(y: f64) -> PyResult<Self> {
        Ok(Material(LinearLaw::new(y).map_err(err)?.into()))
    }

    #[staticmethod]
    fn quadratic(y: f64, k: f64) -> PyResult<Self> {
        Ok(Material(
            QuadraticPerturbedLaw::new(y, k).map_err(err)?.into(),
        ))
    }

    /// Network law read from a weight file.
    #[staticmethod]
    fn neural(path: PathBuf) -> PyResult<Self> {
        let spec = psi_core::MaterialSpec::Neural {
            weights_path: path.to_string_lossy().into_owned(),
            y0: None,
        };
        Ok(Material(
            psi_core::Material::from_spec(&spec, None).map_err(err)?,
        ))
    }

    fn eval(&self, strain: f64) -> f64 {
        self.0.eval(strain)
    }

    fn tangent(&self, strain: f64) -> f64 {
        self.0.tangent(strain)
    }

    #[getter]
    fn zero_strain_modulus(&self) -> f64 {
        self.0.zero_strain_modulus()
    }

    fn __repr__(&self) -> String {
        format!("Material({:?})", self.0.spec())
    }
}

/// Iteration history and final state of a solve.
#[pyclass(frozen, module = "psi_py")]
struct Solution(psi_core::Solution);

#[pymethods]
impl Solution {
    #[getter]
    fn converged(&self) -> bool {
        self.0.converged()
    }

    #[getter]
    fn stop_reason(&self) -> String {
        format!("{:?}", self.0.stop_reason)
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.0.iterations
    }

    #[getter]
    fn displacements(&self) -> Vec<f64> {
        self.0.u.clone()
    }

    #[getter]
    fn strains(&self) -> Vec<f64> {
        self.0.strains.clone()
    }

    #[getter]
    fn stresses(&self) -> Vec<f64> {
        self.0.stresses.clone()
    }

    /// `(node, dof, value)` for every prescribed degree of freedom.
    #[getter]
    fn reactions(&self) -> Vec<(usize, usize, f64)> {
        self.0
            .reactions
            .iter()
            .map(|r| (r.node, r.dof, r.value))
            .collect()
    }

    /// Relative force residual after each iteration.
    #[getter]
    fn residuals(&self) -> Vec<f64> {
        self.0.trace.iter().map(|r| r.residual_rel).collect()
    }

    fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ResultsFile::from(&self.0)).expect("results serialize")
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::save_results(&path, &self.0).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution({:?}, iterations={}, stop_reason={:?})",
            self.0.solver, self.0.iterations, self.0.stop_reason
        )
    }
}

/// A pin-jointed truss with material, supports and loads.
#[pyclass(frozen, module = "psi_py")]
struct Truss(psi_core::TrussProblem);

#[pymethods]
impl Truss {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Truss(io::load_problem(&path).map_err(err)?))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Truss(
            io::parse_problem(text, "<string>", None).map_err(err)?,
        ))
    }

    /// Grid truss. `recipe` is "benchmark" or "cantilever".
    #[staticmethod]
    #[pyo3(signature = (rows, cols, material, spacing=1.0, area=1e-4, recipe="benchmark",
                        force_scale=0.1, imposed=1e-3, tip_force=-1000.0))]
    #[allow(clippy::too_many_arguments)]
    fn grid(
        rows: usize,
        cols: usize,
        material: &Material,
        spacing: f64,
        area: f64,
        recipe: &str,
        force_scale: f64,
        imposed: f64,
        tip_force: f64,
    ) -> PyResult<Self> {
        let recipe = match recipe {
            "benchmark" => LoadRecipe::Benchmark {
                force_scale,
                imposed_displacement: imposed,
            },
            "cantilever" => LoadRecipe::Cantilever { tip_force },
            other => return Err(PyValueError::new_err(format!("unknown recipe {other:?}"))),
        };
        let p = psi_core::generate_truss(rows, cols, spacing, area, &recipe, material.0.clone())
            .map_err(err)?;
        Ok(Truss(p))
    }

    /// The 95-bar test truss.
    #[staticmethod]
    #[pyo3(signature = (material=None))]
    fn desk(material: Option<&Material>) -> PyResult<Self> {
        let m = match material {
            Some(m) => m.0.clone(),
            None => PowerLaw::new(2e11, 1e-4).map_err(err)?.into(),
        };
        Ok(Truss(psi_core::desk_truss(m).map_err(err)?))
    }

    /// Bars in series along x, loaded by `force` at the free end.
    #[staticmethod]
    fn serial(lengths: Vec<f64>, area: f64, force: f64, material: &Material) -> PyResult<Self> {
        Ok(Truss(
            psi_core::serial_bars(&lengths, area, force, material.0.clone()).map_err(err)?,
        ))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        io::save_problem(&path, &self.0).map_err(err)
    }

    #[getter]
    fn n_dofs(&self) -> usize {
        self.0.n_dofs()
    }

    #[getter]
    fn n_elements(&self) -> usize {
        self.0.n_elements()
    }

    #[getter]
    fn material(&self) -> Material {
        Material(self.0.material.clone())
    }

    /// Phase-space iterations. Unset options fall back to the problem file.
    #[pyo3(signature = (c_over_y0=None, tol1=None, tol2=None, max_iter=None, pd_method=None, workers=1))]
    fn solve_psi(
        &self,
        py: Python<'_>,
        c_over_y0: Option<f64>,
        tol1: Option<f64>,
        tol2: Option<f64>,
        max_iter: Option<usize>,
        pd_method: Option<&str>,
        workers: usize,
    ) -> PyResult<Solution> {
        let mut cfg = SolverConfig::from_settings(&self.0.solver);
        if let Some(v) = c_over_y0 {
            cfg.c_over_y0 = v;
        }
        if let Some(v) = tol1 {
            cfg.tol1 = v;
        }
        if tol2.is_some() {
            cfg.tol2 = tol2;
        }
        if let Some(v) = max_iter {
            cfg.max_iter = v;
        }
        if let Some(k) = pd_method {
            cfg.pd.kind = k.parse::<PdKind>().map_err(err)?;
        }
        cfg.workers = workers;
        let problem = &self.0;
        let s = py
            .detach(|| psi_core::psi_solve(problem, &cfg))
            .map_err(err)?;
        Ok(Solution(s))
    }

    /// Damped Newton-Raphson reference solver.
    #[pyo3(signature = (damping=0.8, tol=None, max_iter=None))]
    fn solve_nr(
        &self,
        py: Python<'_>,
        damping: f64,
        tol: Option<f64>,
        max_iter: Option<usize>,
    ) -> PyResult<Solution> {
        let defaults = SolverConfig::from_settings(&self.0.solver);
        let cfg = NrConfig {
            damping,
            tol: tol.unwrap_or(defaults.tol1),
            max_iter: max_iter
                .or(self.0.solver.max_iter)
                .unwrap_or(NrConfig::default().max_iter),
        };
        let problem = &self.0;
        let s = py
            .detach(|| psi_core::nr_solve(problem, &cfg))
            .map_err(err)?;
        Ok(Solution(s))
    }

    fn __repr__(&self) -> String {
        format!(
            "Truss(dim={}, nodes={}, elements={})",
            self.0.dim(),
            self.0.n_nodes(),
            self.0.n_elements()
        )
    }
}

/// Closed-form `n`-th iterate `(strain, stress)` for one linear bar.
#[pyfunction]
#[pyo3(signature = (y, c, f_over_a, n, eps0=0.0, sigma0=0.0))]
fn closed_form_iterate(
    y: f64,
    c: f64,
    f_over_a: f64,
    n: u32,
    eps0: f64,
    sigma0: f64,
) -> (f64, f64) {
    let z = analysis::closed_form_iterate(y, c, f_over_a, eps0, sigma0, n);
    (z.strain, z.stress)
}

#[pyfunction]
fn friedrichs_rate(y: f64, c: f64) -> f64 {
    analysis::friedrichs_rate(y, c)
}

/// Validates a weight file and returns a summary dict.
#[pyfunction]
#[pyo3(signature = (path, tol=1e-6))]
fn nn_check(py: Python<'_>, path: PathBuf, tol: f64) -> PyResult<Py<pyo3::types::PyDict>> {
    let law = NeuralLaw::load(&path).map_err(err)?;
    let r = law.check(tol);
    let d = pyo3::types::PyDict::new(py);
    d.set_item("layer_widths", r.layer_widths.clone())?;
    d.set_item("parameter_count", r.parameter_count)?;
    d.set_item("reference_count", r.reference_count)?;
    d.set_item("max_reference_error", r.max_reference_error)?;
    d.set_item("worst_sample", r.worst_sample)?;
    d.set_item("passed", r.passed())?;
    Ok(d.unbind())
}

#[pymodule]
fn psi_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Material>()?;
    m.add_class::<Truss>()?;
    m.add_class::<Solution>()?;
    m.add_function(wrap_pyfunction!(closed_form_iterate, m)?)?;
    m.add_function(wrap_pyfunction!(friedrichs_rate, m)?)?;
    m.add_function(wrap_pyfunction!(nn_check, m)?)?;
    Ok(())
}
