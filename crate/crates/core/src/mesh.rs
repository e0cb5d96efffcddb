//! Truss geometry, DOF numbering, the discrete gradient `B` and its transpose,
//! boundary conditions, and a grid-truss generator.
//!
//! DOF `d` of node `i` has global index `i * dim + d`.
//!
//! # Generated trusses
//!
//! [`generate_truss`] lays out `rows x cols` nodes on a square grid with the
//! given spacing (node `r * cols + c` sits at `(c * spacing, r * spacing)`).
//! It adds every horizontal and vertical edge plus one diagonal per cell, the
//! diagonal orientation alternating in a checkerboard. Counts:
//!
//! ```text
//! nodes    = rows * cols
//! elements = rows (cols - 1) + cols (rows - 1) + (rows - 1)(cols - 1)
//! ```
//!
//! so `2 x 2 -> 5`, `3 x 3 -> 16`, `5 x 8 -> 95`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::constitutive::Material;
use crate::error::{PsiError, Result};
use crate::linalg::{assemble_gram, DofMap, SparseRow, SpdSolver};
use crate::projection_d::PdKind;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    /// Unused trailing components are zero for planar problems.
    pub coords: [f64; 3],
}

impl Node {
    pub fn new2(x: f64, y: f64) -> Self {
        Self {
            coords: [x, y, 0.0],
        }
    }

    pub fn new3(x: f64, y: f64, z: f64) -> Self {
        Self { coords: [x, y, z] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarElement {
    pub node_a: usize,
    pub node_b: usize,
    pub area: f64,
}

impl BarElement {
    pub fn new(node_a: usize, node_b: usize, area: f64) -> Self {
        Self {
            node_a,
            node_b,
            area,
        }
    }
}

/// Quantities derived from a bar's geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarGeometry {
    pub length: f64,
    pub volume: f64,
    pub cosines: [f64; 3],
}

/// One boundary entry: node, component and value (displacement in m or force in N).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DofValue {
    pub node: usize,
    pub dof: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundaryConditions {
    /// Prescribed displacements keyed by global DOF.
    pub prescribed: BTreeMap<usize, f64>,
    /// Dense external force vector.
    pub forces: Vec<f64>,
}

impl BoundaryConditions {
    /// Full-length vector holding the prescribed values and zeros elsewhere.
    pub fn prescribed_vector(&self, n_dofs: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_dofs];
        for (&d, &v) in &self.prescribed {
            out[d] = v;
        }
        out
    }
}

/// Per-problem solver defaults read from the problem file. `None` falls back to
/// the solver's own defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_over_y0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pd_method: Option<PdKind>,
}

/// A validated truss problem. Immutable once built.
#[derive(Debug, Clone)]
pub struct TrussProblem {
    dim: usize,
    nodes: Vec<Node>,
    elements: Vec<BarElement>,
    geometry: Vec<BarGeometry>,
    b_rows: Vec<SparseRow>,
    bcs: BoundaryConditions,
    dofs: DofMap,
    pub material: Material,
    pub solver: SolverSettings,
}

impl TrussProblem {
    /// Validates indices, geometry and boundary conditions, then checks that
    /// the prescribed DOFs remove every rigid-body mode.
    pub fn new(
        dim: usize,
        nodes: Vec<Node>,
        elements: Vec<BarElement>,
        bcs: BoundaryConditions,
        material: Material,
        solver: SolverSettings,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(PsiError::Geometry(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        if elements.is_empty() {
            return Err(PsiError::Geometry("problem has no elements".into()));
        }
        for (i, n) in nodes.iter().enumerate() {
            if !n.coords.iter().all(|c| c.is_finite()) {
                return Err(PsiError::Geometry(format!(
                    "nodes[{i}]: non-finite coordinate"
                )));
            }
        }
        let n_dofs = nodes.len() * dim;
        if bcs.forces.len() != n_dofs {
            return Err(PsiError::LengthMismatch {
                what: "force vector",
                expected: n_dofs,
                got: bcs.forces.len(),
            });
        }
        if let Some(i) = bcs.forces.iter().position(|f| !f.is_finite()) {
            return Err(PsiError::Modeling(format!(
                "force on DOF {i} is not finite"
            )));
        }
        for (&d, &v) in &bcs.prescribed {
            if d >= n_dofs {
                return Err(PsiError::Modeling(format!(
                    "prescribed DOF {d} out of range ({n_dofs} DOFs)"
                )));
            }
            if !v.is_finite() {
                return Err(PsiError::Modeling(format!(
                    "prescribed value on DOF {d} is not finite"
                )));
            }
            if bcs.forces[d] != 0.0 {
                return Err(PsiError::Modeling(format!(
                    "DOF {d} (node {}, component {}) is both prescribed and loaded",
                    d / dim,
                    d % dim
                )));
            }
        }

        let mut geometry = Vec::with_capacity(elements.len());
        let mut b_rows = Vec::with_capacity(elements.len());
        for (e, el) in elements.iter().enumerate() {
            for n in [el.node_a, el.node_b] {
                if n >= nodes.len() {
                    return Err(PsiError::Geometry(format!(
                        "elements[{e}]: node {n} out of range ({} nodes)",
                        nodes.len()
                    )));
                }
            }
            if !(el.area.is_finite() && el.area > 0.0) {
                return Err(PsiError::Geometry(format!(
                    "elements[{e}]: area must be positive, got {}",
                    el.area
                )));
            }
            let (g, row) = bar_operator(dim, &nodes[el.node_a], &nodes[el.node_b], el)
                .map_err(|msg| PsiError::Geometry(format!("elements[{e}]: {msg}")))?;
            geometry.push(g);
            b_rows.push(row);
        }

        let dofs = DofMap::new(n_dofs, bcs.prescribed.keys().copied());
        let problem = Self {
            dim,
            nodes,
            elements,
            geometry,
            b_rows,
            bcs,
            dofs,
            material,
            solver,
        };
        problem.check_rigid_body_modes()?;
        Ok(problem)
    }

    fn check_rigid_body_modes(&self) -> Result<()> {
        // unit modulus; only the geometry and supports matter here
        let coeffs: Vec<f64> = self.geometry.iter().map(|g| g.volume).collect();
        let k = assemble_gram(&self.b_rows, &coeffs, &self.dofs);
        SpdSolver::factor(&k).map(|_| ()).map_err(|e| {
            PsiError::Modeling(format!(
                "condensed stiffness is singular; the supports do not remove all rigid-body modes ({e})"
            ))
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.nodes.len() * self.dim
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn elements(&self) -> &[BarElement] {
        &self.elements
    }

    pub fn geometry(&self) -> &[BarGeometry] {
        &self.geometry
    }

    pub fn b_rows(&self) -> &[SparseRow] {
        &self.b_rows
    }

    pub fn bcs(&self) -> &BoundaryConditions {
        &self.bcs
    }

    pub fn dof_map(&self) -> &DofMap {
        &self.dofs
    }

    pub fn forces(&self) -> &[f64] {
        &self.bcs.forces
    }

    /// Element volumes `w_e = A_e L_e`.
    pub fn volumes(&self) -> Vec<f64> {
        self.geometry.iter().map(|g| g.volume).collect()
    }

    pub fn mean_area(&self) -> f64 {
        self.elements.iter().map(|e| e.area).sum::<f64>() / self.elements.len() as f64
    }

    /// Full-length vector of prescribed displacements (zero on free DOFs).
    pub fn prescribed_displacements(&self) -> Vec<f64> {
        self.bcs.prescribed_vector(self.n_dofs())
    }

    pub fn dof(&self, node: usize, component: usize) -> usize {
        node * self.dim + component
    }

    /// Element strains `B u`.
    pub fn strains(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.n_dofs() {
            return Err(PsiError::LengthMismatch {
                what: "displacement vector",
                expected: self.n_dofs(),
                got: u.len(),
            });
        }
        Ok(self.b_rows.iter().map(|r| r.dot(u)).collect())
    }

    /// Free-DOF part of `F_int(stresses) - F_ext`.
    pub fn free_residual(&self, stresses: &[f64]) -> Result<Vec<f64>> {
        let f_int = assemble_internal_force(self, stresses)?;
        Ok(self
            .dofs
            .free_dofs()
            .iter()
            .map(|&d| f_int[d] - self.bcs.forces[d])
            .collect())
    }
}

/// Geometry and `B` row of one bar, or a message when the bar is degenerate.
fn bar_operator(
    dim: usize,
    a: &Node,
    b: &Node,
    el: &BarElement,
) -> std::result::Result<(BarGeometry, SparseRow), String> {
    let mut delta = [0.0; 3];
    for d in 0..dim {
        delta[d] = b.coords[d] - a.coords[d];
    }
    let length = delta.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(length > 0.0) {
        return Err(format!(
            "zero-length bar between nodes {} and {}",
            el.node_a, el.node_b
        ));
    }
    let cosines = delta.map(|x| x / length);
    let mut entries = Vec::with_capacity(2 * dim);
    for d in 0..dim {
        if cosines[d] != 0.0 {
            entries.push((el.node_a * dim + d, -cosines[d] / length));
        }
    }
    for d in 0..dim {
        if cosines[d] != 0.0 {
            entries.push((el.node_b * dim + d, cosines[d] / length));
        }
    }
    Ok((
        BarGeometry {
            length,
            volume: el.area * length,
            cosines,
        },
        SparseRow { entries },
    ))
}

/// Discrete gradient row of one element, as a sparse row over all DOFs.
pub fn build_b(dim: usize, element: &BarElement, nodes: &[Node]) -> Result<SparseRow> {
    let (a, b) = match (nodes.get(element.node_a), nodes.get(element.node_b)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(PsiError::Geometry(format!(
                "element nodes ({}, {}) out of range ({} nodes)",
                element.node_a,
                element.node_b,
                nodes.len()
            )))
        }
    };
    bar_operator(dim, a, b, element)
        .map(|(_, row)| row)
        .map_err(PsiError::Geometry)
}

/// `F_int = sum_e w_e B_e^T sigma_e`.
pub fn assemble_internal_force(problem: &TrussProblem, stresses: &[f64]) -> Result<Vec<f64>> {
    if stresses.len() != problem.n_elements() {
        return Err(PsiError::LengthMismatch {
            what: "stress vector",
            expected: problem.n_elements(),
            got: stresses.len(),
        });
    }
    let mut f = vec![0.0; problem.n_dofs()];
    for ((row, g), &s) in problem.b_rows.iter().zip(&problem.geometry).zip(stresses) {
        row.axpy_transpose(g.volume * s, &mut f);
    }
    Ok(f)
}

/// Supports and loads applied by [`generate_truss`].
#[derive(Debug, Clone, PartialEq)]
pub enum LoadRecipe {
    /// Left column fully pinned; one vertical force on the top-right node.
    Cantilever { tip_force: f64 },
    /// Bottom-left node pinned, bottom-right node on a vertical roller.
    /// Four vertical forces `scale * (-1000, -1000, -100, +1800)` N act on top-row
    /// nodes at 1/5, 2/5, 3/5 and 4/5 of the span, and two bottom-row nodes at
    /// 1/3 and 2/3 of the span are pushed down by `imposed_displacement` m.
    Benchmark {
        force_scale: f64,
        imposed_displacement: f64,
    },
}

fn span_index(cols: usize, fraction: f64) -> usize {
    (((cols - 1) as f64) * fraction).round() as usize
}

/// Planar grid truss; see the module docs for the layout and counts.
pub fn generate_truss(
    rows: usize,
    cols: usize,
    spacing: f64,
    area: f64,
    recipe: &LoadRecipe,
    material: Material,
) -> Result<TrussProblem> {
    if rows < 2 || cols < 2 {
        return Err(PsiError::Geometry(format!(
            "grid needs at least 2 x 2 nodes, got {rows} x {cols}"
        )));
    }
    let id = |r: usize, c: usize| r * cols + c;
    let mut nodes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            nodes.push(Node::new2(c as f64 * spacing, r as f64 * spacing));
        }
    }
    let mut elements = Vec::new();
    for r in 0..rows {
        for c in 0..cols - 1 {
            elements.push(BarElement::new(id(r, c), id(r, c + 1), area));
        }
    }
    for r in 0..rows - 1 {
        for c in 0..cols {
            elements.push(BarElement::new(id(r, c), id(r + 1, c), area));
        }
    }
    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            if (r + c) % 2 == 0 {
                elements.push(BarElement::new(id(r, c), id(r + 1, c + 1), area));
            } else {
                elements.push(BarElement::new(id(r, c + 1), id(r + 1, c), area));
            }
        }
    }

    let n_dofs = 2 * nodes.len();
    let mut bcs = BoundaryConditions {
        prescribed: BTreeMap::new(),
        forces: vec![0.0; n_dofs],
    };
    match *recipe {
        LoadRecipe::Cantilever { tip_force } => {
            for r in 0..rows {
                bcs.prescribed.insert(2 * id(r, 0), 0.0);
                bcs.prescribed.insert(2 * id(r, 0) + 1, 0.0);
            }
            bcs.forces[2 * id(rows - 1, cols - 1) + 1] = tip_force;
        }
        LoadRecipe::Benchmark {
            force_scale,
            imposed_displacement,
        } => {
            if cols < 4 {
                return Err(PsiError::Geometry(
                    "benchmark recipe needs at least 4 columns".into(),
                ));
            }
            bcs.prescribed.insert(2 * id(0, 0), 0.0);
            bcs.prescribed.insert(2 * id(0, 0) + 1, 0.0);
            bcs.prescribed.insert(2 * id(0, cols - 1) + 1, 0.0);
            for frac in [1.0 / 3.0, 2.0 / 3.0] {
                let c = span_index(cols, frac);
                bcs.prescribed
                    .insert(2 * id(0, c) + 1, -imposed_displacement);
            }
            let loads = [-1000.0, -1000.0, -100.0, 1800.0];
            for (i, f) in loads.iter().enumerate() {
                let c = span_index(cols, (i + 1) as f64 / 5.0);
                bcs.forces[2 * id(rows - 1, c) + 1] += force_scale * f;
            }
        }
    }
    TrussProblem::new(2, nodes, elements, bcs, material, SolverSettings::default())
}

/// The 5 x 8 benchmark truss (95 bars, 1 m bays, 1 cm^2 bars) loaded at a
/// tenth of the nominal forces with 1 mm imposed settlements.
pub fn desk_truss(material: Material) -> Result<TrussProblem> {
    generate_truss(
        5,
        8,
        1.0,
        1e-4,
        &LoadRecipe::Benchmark {
            force_scale: 0.1,
            imposed_displacement: 1e-3,
        },
        material,
    )
}

/// Bars in series along the x axis. Node 0 is pinned, every y DOF is held at
/// zero, and `force` pulls the last node along x.
pub fn serial_bars(
    lengths: &[f64],
    area: f64,
    force: f64,
    material: Material,
) -> Result<TrussProblem> {
    if lengths.is_empty() {
        return Err(PsiError::Geometry("need at least one bar".into()));
    }
    let mut nodes = vec![Node::new2(0.0, 0.0)];
    let mut x = 0.0;
    for &l in lengths {
        x += l;
        nodes.push(Node::new2(x, 0.0));
    }
    let elements: Vec<BarElement> = (0..lengths.len())
        .map(|i| BarElement::new(i, i + 1, area))
        .collect();
    let n_dofs = 2 * nodes.len();
    let mut prescribed = BTreeMap::new();
    prescribed.insert(0, 0.0);
    for n in 0..nodes.len() {
        prescribed.insert(2 * n + 1, 0.0);
    }
    let mut forces = vec![0.0; n_dofs];
    forces[2 * lengths.len()] = force;
    TrussProblem::new(
        2,
        nodes,
        elements,
        BoundaryConditions { prescribed, forces },
        material,
        SolverSettings::default(),
    )
}
