//! Projection onto the physically admissible set (equilibrium and compatibility).
//!
//! With `K = sum_e w_e B_e^T C B_e` condensed to the free DOFs:
//!
//! ```text
//! K eta = F_ext - F_int(sigma')            (eta = 0 on prescribed DOFs)
//! sigma_e = sigma'_e + C B_e eta
//! K u   = sum_e w_e B_e^T C eps'_e         (prescribed u substituted)
//! eps_e = B_e u
//! ```
//!
//! `K` is factorized once and reused for both solves and every iteration.

use nalgebra_sparse::CscMatrix;

use crate::error::{PsiError, Result};
use crate::linalg::{assemble_gram, SpdSolver};
use crate::mesh::{assemble_internal_force, TrussProblem};
use crate::phase_space::{ElementState, PhasePoint};

/// Condensed `K` for a given `C`.
pub fn assemble_k_matrix(problem: &TrussProblem, c: f64) -> CscMatrix<f64> {
    let coeffs: Vec<f64> = problem.geometry().iter().map(|g| g.volume * c).collect();
    assemble_gram(problem.b_rows(), &coeffs, problem.dof_map())
}

/// Factorized condensed `K`.
#[derive(Debug)]
pub struct StiffnessFactorization {
    c: f64,
    solver: SpdSolver,
}

impl StiffnessFactorization {
    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn solver(&self) -> &SpdSolver {
        &self.solver
    }
}

pub fn assemble_k(problem: &TrussProblem, c: f64) -> Result<StiffnessFactorization> {
    if !(c.is_finite() && c > 0.0) {
        return Err(PsiError::Config(format!(
            "distance constant must be positive and finite, got {c}"
        )));
    }
    let k = assemble_k_matrix(problem, c);
    let solver = SpdSolver::factor(&k).map_err(|e| PsiError::Modeling(format!("{e}")))?;
    Ok(StiffnessFactorization { c, solver })
}

/// Imbalance multipliers, full length with zeros on prescribed DOFs.
pub fn solve_eta(
    fact: &StiffnessFactorization,
    problem: &TrussProblem,
    stresses: &[f64],
) -> Result<Vec<f64>> {
    let f_int = assemble_internal_force(problem, stresses)?;
    let dofs = problem.dof_map();
    let rhs: Vec<f64> = dofs
        .free_dofs()
        .iter()
        .map(|&d| problem.forces()[d] - f_int[d])
        .collect();
    let eta_free = fact.solver.solve(&rhs);
    Ok(dofs.expand(&eta_free, &vec![0.0; problem.n_dofs()]))
}

/// `sigma_e = sigma'_e + C B_e eta`.
pub fn update_stress(
    stresses: &[f64],
    eta: &[f64],
    problem: &TrussProblem,
    c: f64,
) -> Result<Vec<f64>> {
    if stresses.len() != problem.n_elements() {
        return Err(PsiError::LengthMismatch {
            what: "stress vector",
            expected: problem.n_elements(),
            got: stresses.len(),
        });
    }
    if eta.len() != problem.n_dofs() {
        return Err(PsiError::LengthMismatch {
            what: "multiplier vector",
            expected: problem.n_dofs(),
            got: eta.len(),
        });
    }
    Ok(stresses
        .iter()
        .zip(problem.b_rows())
        .map(|(&s, row)| s + c * row.dot(eta))
        .collect())
}

/// Displacements compatible with `strains` in the least-distance sense, with
/// prescribed values `u_hat` (full length; only prescribed entries are read).
pub fn solve_u(
    fact: &StiffnessFactorization,
    problem: &TrussProblem,
    strains: &[f64],
    u_hat: &[f64],
) -> Result<Vec<f64>> {
    if strains.len() != problem.n_elements() {
        return Err(PsiError::LengthMismatch {
            what: "strain vector",
            expected: problem.n_elements(),
            got: strains.len(),
        });
    }
    let dofs = problem.dof_map();
    let mut base = vec![0.0; problem.n_dofs()];
    for &d in problem.bcs().prescribed.keys() {
        base[d] = u_hat[d];
    }
    let c = fact.c;
    let mut rhs_full = vec![0.0; problem.n_dofs()];
    for ((row, g), &e) in problem.b_rows().iter().zip(problem.geometry()).zip(strains) {
        // moving the prescribed part to the right-hand side
        let mismatch = e - row.dot(&base);
        row.axpy_transpose(g.volume * c * mismatch, &mut rhs_full);
    }
    let u_free = fact.solver.solve(&dofs.restrict(&rhs_full));
    Ok(dofs.expand(&u_free, &base))
}

/// Result of one projection onto the admissible set.
#[derive(Debug, Clone, PartialEq)]
pub struct EProjection {
    pub point: PhasePoint,
    pub u: Vec<f64>,
    pub eta: Vec<f64>,
}

pub fn project_e(
    z: &PhasePoint,
    fact: &StiffnessFactorization,
    problem: &TrussProblem,
) -> Result<EProjection> {
    if z.len() != problem.n_elements() {
        return Err(PsiError::LengthMismatch {
            what: "phase point",
            expected: problem.n_elements(),
            got: z.len(),
        });
    }
    let eta = solve_eta(fact, problem, &z.stresses())?;
    let stresses = update_stress(&z.stresses(), &eta, problem, fact.c)?;
    let u = solve_u(
        fact,
        problem,
        &z.strains(),
        &problem.prescribed_displacements(),
    )?;
    let strains = problem.strains(&u)?;
    let point = PhasePoint::new(
        strains
            .into_iter()
            .zip(stresses)
            .map(|(e, s)| ElementState::new(e, s))
            .collect(),
    );
    Ok(EProjection { point, u, eta })
}
