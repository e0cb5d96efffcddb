//! Problem, results and trace files.
//!
//! Problem file (JSON):
//!
//! ```json
//! { "nodes": [[0.0, 0.0], [1.0, 0.0]],
//!   "elements": [[0, 1, 1e-4]],
//!   "material": {"type": "power", "Y0": 2e11, "p": 1e-4},
//!   "bcs": [{"node": 0, "dof": 0, "value": 0.0}],
//!   "forces": [{"node": 1, "dof": 0, "value": 100.0}],
//!   "solver": {"c_over_y0": 0.3, "tol1": 0.05} }
//! ```
//!
//! The spatial dimension is the length of the node coordinate lists. Unknown
//! keys are rejected. `bcs`, `forces` and `solver` may be omitted.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constitutive::{Material, MaterialSpec};
use crate::error::{PsiError, Result};
use crate::mesh::{BarElement, BoundaryConditions, DofValue, Node, SolverSettings, TrussProblem};
use crate::phase_space::PhasePoint;
use crate::psi_solver::{IterationRecord, Reaction, Solution, SolverKind, StopReason};

/// On-disk shape of a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub nodes: Vec<Vec<f64>>,
    pub elements: Vec<(usize, usize, f64)>,
    pub material: MaterialSpec,
    #[serde(default)]
    pub bcs: Vec<DofValue>,
    #[serde(default)]
    pub forces: Vec<DofValue>,
    #[serde(default)]
    pub solver: SolverSettings,
}

fn input_err(path: &str, message: impl Into<String>) -> PsiError {
    PsiError::Input {
        path: path.to_string(),
        message: message.into(),
    }
}

fn dof_entries(
    entries: &[DofValue],
    field: &str,
    dim: usize,
    n_nodes: usize,
    source: &str,
) -> Result<BTreeMap<usize, f64>> {
    let mut out = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        if e.node >= n_nodes {
            return Err(input_err(
                source,
                format!(
                    "{field}[{i}]: node {} out of range ({n_nodes} nodes)",
                    e.node
                ),
            ));
        }
        if e.dof >= dim {
            return Err(input_err(
                source,
                format!(
                    "{field}[{i}]: dof {} out of range for dimension {dim}",
                    e.dof
                ),
            ));
        }
        if !e.value.is_finite() {
            return Err(input_err(
                source,
                format!("{field}[{i}]: value is not finite"),
            ));
        }
        if out.insert(e.node * dim + e.dof, e.value).is_some() {
            return Err(input_err(
                source,
                format!(
                    "{field}[{i}]: duplicate entry for node {} dof {}",
                    e.node, e.dof
                ),
            ));
        }
    }
    Ok(out)
}

impl ProblemFile {
    /// Validates and builds the problem. `source` names the file in errors;
    /// relative weight paths resolve against `base_dir`.
    pub fn into_problem(self, source: &str, base_dir: Option<&Path>) -> Result<TrussProblem> {
        let dim = self.nodes.first().map_or(2, Vec::len);
        if dim != 2 && dim != 3 {
            return Err(input_err(
                source,
                format!("nodes[0]: expected 2 or 3 coordinates, got {dim}"),
            ));
        }
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (i, c) in self.nodes.iter().enumerate() {
            if c.len() != dim {
                return Err(input_err(
                    source,
                    format!("nodes[{i}]: expected {dim} coordinates, got {}", c.len()),
                ));
            }
            nodes.push(if dim == 2 {
                Node::new2(c[0], c[1])
            } else {
                Node::new3(c[0], c[1], c[2])
            });
        }
        let n_nodes = nodes.len();
        let elements = self
            .elements
            .iter()
            .map(|&(a, b, area)| BarElement::new(a, b, area))
            .collect();
        let prescribed = dof_entries(&self.bcs, "bcs", dim, n_nodes, source)?;
        let mut forces = vec![0.0; n_nodes * dim];
        for (d, v) in dof_entries(&self.forces, "forces", dim, n_nodes, source)? {
            forces[d] = v;
        }
        let material = Material::from_spec(&self.material, base_dir)
            .map_err(|e| input_err(source, format!("material: {e}")))?;
        TrussProblem::new(
            dim,
            nodes,
            elements,
            BoundaryConditions { prescribed, forces },
            material,
            self.solver,
        )
        .map_err(|e| input_err(source, e.to_string()))
    }

    pub fn from_problem(problem: &TrussProblem) -> Self {
        let dim = problem.dim();
        let entry = |d: usize, value: f64| DofValue {
            node: d / dim,
            dof: d % dim,
            value,
        };
        ProblemFile {
            nodes: problem
                .nodes()
                .iter()
                .map(|n| n.coords[..dim].to_vec())
                .collect(),
            elements: problem
                .elements()
                .iter()
                .map(|e| (e.node_a, e.node_b, e.area))
                .collect(),
            material: problem.material.spec(),
            bcs: problem
                .bcs()
                .prescribed
                .iter()
                .map(|(&d, &v)| entry(d, v))
                .collect(),
            forces: problem
                .forces()
                .iter()
                .enumerate()
                .filter(|(_, &f)| f != 0.0)
                .map(|(d, &f)| entry(d, f))
                .collect(),
            solver: problem.solver.clone(),
        }
    }
}

/// Parses problem JSON. `source` names the input in error messages.
pub fn parse_problem(text: &str, source: &str, base_dir: Option<&Path>) -> Result<TrussProblem> {
    let file: ProblemFile =
        serde_json::from_str(text).map_err(|e| input_err(source, e.to_string()))?;
    file.into_problem(source, base_dir)
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<TrussProblem> {
    let path = path.as_ref();
    let source = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| input_err(&source, e.to_string()))?;
    parse_problem(&text, &source, path.parent())
}

pub fn save_problem(path: impl AsRef<Path>, problem: &TrussProblem) -> Result<()> {
    write_json(path.as_ref(), &ProblemFile::from_problem(problem))
}

/// On-disk shape of a solution. Timings are left out so that the file depends
/// only on the inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsFile {
    pub solver: SolverKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    pub stop_reason: StopReason,
    pub converged: bool,
    pub iterations: usize,
    pub final_residual: Option<f64>,
    pub displacements: Vec<f64>,
    pub strains: Vec<f64>,
    pub stresses: Vec<f64>,
    pub reactions: Vec<Reaction>,
}

impl From<&Solution> for ResultsFile {
    fn from(s: &Solution) -> Self {
        let r = s.final_residual();
        ResultsFile {
            solver: s.solver,
            c: s.c,
            stop_reason: s.stop_reason,
            converged: s.converged(),
            iterations: s.iterations,
            final_residual: r.is_finite().then_some(r),
            displacements: s.u.clone(),
            strains: s.strains.clone(),
            stresses: s.stresses.clone(),
            reactions: s.reactions.clone(),
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| input_err(&path.display().to_string(), e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn save_results(path: impl AsRef<Path>, solution: &Solution) -> Result<()> {
    write_json(path.as_ref(), &ResultsFile::from(solution))
}

pub fn load_results(path: impl AsRef<Path>) -> Result<ResultsFile> {
    let path = path.as_ref();
    let source = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| input_err(&source, e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| input_err(&source, e.to_string()))
}

pub const TRACE_HEADER: &str = "iter,residual_rel,ps_step_rel,t_pe_ms,t_pd_ms";

pub fn trace_csv(trace: &[IterationRecord]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in trace {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:.6},{:.6}",
            r.iter, r.residual_rel, r.ps_step_rel, r.t_pe_ms, r.t_pd_ms
        );
    }
    out
}

pub fn write_trace_csv(path: impl AsRef<Path>, trace: &[IterationRecord]) -> Result<()> {
    fs::write(path, trace_csv(trace))?;
    Ok(())
}

/// Rows `iter,element,strain,stress` for a sequence of phase-space points.
pub fn trajectory_csv(points: &[PhasePoint]) -> String {
    let mut out = String::from("iter,element,strain,stress\n");
    for (n, z) in points.iter().enumerate() {
        for (e, s) in z.states.iter().enumerate() {
            let _ = writeln!(out, "{n},{e},{:e},{:e}", s.strain, s.stress);
        }
    }
    out
}
