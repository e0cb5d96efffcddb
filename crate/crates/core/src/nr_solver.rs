//! Damped Newton-Raphson baseline.
//!
//! Each step solves `[gamma K_T(u) + (1 - gamma) K_0] du = F_ext - F_int(m(B u))`
//! on the free DOFs, where `K_0` is the zero-strain stiffness. `K_T` is
//! reassembled every iteration. Prescribed displacements are applied in full
//! from the start.

use std::time::Instant;

use nalgebra_sparse::CscMatrix;

use crate::constitutive::MaterialLaw;
use crate::error::{PsiError, Result};
use crate::linalg::{assemble_gram, SpdSolver};
use crate::mesh::TrussProblem;
use crate::psi_solver::{
    reactions, relative_residual, IterationRecord, Solution, SolverKind, StopReason,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NrConfig {
    /// Weight of the current tangent in the iteration matrix, in `(0, 1]`.
    pub damping: f64,
    /// Relative force-residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NrConfig {
    fn default() -> Self {
        Self {
            damping: 0.8,
            tol: 5e-2,
            max_iter: 200,
        }
    }
}

impl NrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(PsiError::Config(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if !(self.tol > 0.0) {
            return Err(PsiError::Config("tolerance must be positive".into()));
        }
        if self.max_iter < 1 {
            return Err(PsiError::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

fn tangent_moduli(problem: &TrussProblem, u: &[f64]) -> Result<Vec<f64>> {
    Ok(problem
        .strains(u)?
        .into_iter()
        .map(|e| problem.material.tangent(e))
        .collect())
}

/// Condensed tangent stiffness `sum_e w_e B_e^T m'(B_e u) B_e`.
pub fn assemble_tangent(problem: &TrussProblem, u: &[f64]) -> Result<CscMatrix<f64>> {
    let coeffs: Vec<f64> = tangent_moduli(problem, u)?
        .iter()
        .zip(problem.geometry())
        .map(|(t, g)| g.volume * t)
        .collect();
    Ok(assemble_gram(problem.b_rows(), &coeffs, problem.dof_map()))
}

/// Condensed `gamma K_T(u) + (1 - gamma) K_0`.
pub fn blended_matrix(problem: &TrussProblem, u: &[f64], gamma: f64) -> Result<CscMatrix<f64>> {
    let y0 = problem.material.zero_strain_modulus();
    let coeffs: Vec<f64> = tangent_moduli(problem, u)?
        .iter()
        .zip(problem.geometry())
        .map(|(t, g)| g.volume * (gamma * t + (1.0 - gamma) * y0))
        .collect();
    Ok(assemble_gram(problem.b_rows(), &coeffs, problem.dof_map()))
}

pub fn nr_solve(problem: &TrussProblem, config: &NrConfig) -> Result<Solution> {
    config.validate()?;
    let law = &problem.material;
    let y0 = law.zero_strain_modulus();
    let dofs = problem.dof_map();
    let mut u = problem.prescribed_displacements();
    let mut stresses: Vec<f64> = problem.strains(&u)?.iter().map(|&e| law.eval(e)).collect();
    let mut residual = relative_residual(problem, &stresses, y0)?;
    let mut trace = Vec::new();

    let reason = loop {
        if residual < config.tol {
            break StopReason::ForceResidual;
        }
        if trace.len() >= config.max_iter {
            break StopReason::MaxIter;
        }
        let t0 = Instant::now();
        let k = blended_matrix(problem, &u, config.damping)?;
        let solver = SpdSolver::factor(&k)?;
        let rhs: Vec<f64> = problem
            .free_residual(&stresses)?
            .iter()
            .map(|r| -r)
            .collect();
        let du = solver.solve(&rhs);
        for (&d, dv) in dofs.free_dofs().iter().zip(&du) {
            u[d] += dv;
        }
        let t1 = Instant::now();
        stresses = problem.strains(&u)?.iter().map(|&e| law.eval(e)).collect();
        residual = relative_residual(problem, &stresses, y0)?;
        let t2 = Instant::now();
        if !residual.is_finite() {
            return Err(PsiError::Linear("Newton iteration diverged".into()));
        }
        trace.push(IterationRecord {
            iter: trace.len() + 1,
            residual_rel: residual,
            ps_step_rel: f64::NAN,
            t_pe_ms: (t1 - t0).as_secs_f64() * 1e3,
            t_pd_ms: (t2 - t1).as_secs_f64() * 1e3,
        });
    };

    let strains = problem.strains(&u)?;
    Ok(Solution {
        solver: SolverKind::Nr,
        c: None,
        stop_reason: reason,
        iterations: trace.len(),
        reactions: reactions(problem, &stresses)?,
        u,
        strains,
        stresses,
        trace,
    })
}
