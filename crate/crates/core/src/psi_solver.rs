//! The phase-space iteration loop.
//!
//! Starting from [`init_point`], each iteration projects the current
//! materially admissible point onto the equilibrated set and back onto the law:
//! `z'(n+1) = P_D(P_E(z'(n)))`. The loop stops when
//!
//! * (a) the free-DOF force residual of `sigma'` relative to `||F_ext||` drops below `tol1`, or
//! * (b) the relative phase-space step `||z'(n+1) - z'(n)|| / ||z'(n)||` drops below `tol2`, or
//! * `max_iter` iterations have run.
//!
//! When there are no external forces, (a) compares the absolute residual
//! against `tol1 * C * A_mean` instead.

use std::time::Instant;

use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use crate::constitutive::MaterialLaw;
use crate::error::{PsiError, Result};
use crate::linalg::norm2;
use crate::mesh::{assemble_internal_force, SolverSettings, TrussProblem};
use crate::phase_space::{ps_distance, ps_norm, ElementState, Metric, PhasePoint};
use crate::projection_d::{project_d, PdSettings};
use crate::projection_e::{assemble_k, project_e, StiffnessFactorization};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// `C / Y0`, with `Y0` the law's zero-strain modulus.
    pub c_over_y0: f64,
    /// Relative force-residual tolerance.
    pub tol1: f64,
    /// Relative phase-space step tolerance; `None` means `tol1 / 10`.
    pub tol2: Option<f64>,
    pub max_iter: usize,
    pub pd: PdSettings,
    /// Threads for the per-element projection. `1` runs serially.
    pub workers: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            c_over_y0: 0.3,
            tol1: 5e-2,
            tol2: None,
            max_iter: 1000,
            pd: PdSettings::default(),
            workers: 1,
        }
    }
}

impl SolverConfig {
    /// Defaults overridden by whatever the problem file specifies.
    pub fn from_settings(settings: &SolverSettings) -> Self {
        let mut cfg = Self::default();
        if let Some(v) = settings.c_over_y0 {
            cfg.c_over_y0 = v;
        }
        if let Some(v) = settings.tol1 {
            cfg.tol1 = v;
        }
        cfg.tol2 = settings.tol2;
        if let Some(v) = settings.max_iter {
            cfg.max_iter = v;
        }
        if let Some(k) = settings.pd_method {
            cfg.pd.kind = k;
        }
        cfg
    }

    pub fn tol2(&self) -> f64 {
        self.tol2.unwrap_or(self.tol1 / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_over_y0.is_finite() && self.c_over_y0 > 0.0) {
            return Err(PsiError::Config(format!(
                "c_over_y0 must be positive, got {}",
                self.c_over_y0
            )));
        }
        if !(self.tol1 > 0.0) || !(self.tol2() > 0.0) {
            return Err(PsiError::Config("tolerances must be positive".into()));
        }
        if self.max_iter < 1 {
            return Err(PsiError::Config("max_iter must be at least 1".into()));
        }
        if self.workers < 1 {
            return Err(PsiError::Config("workers must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    ForceResidual,
    PhaseSpaceStep,
    MaxIter,
}

impl StopReason {
    pub fn converged(&self) -> bool {
        !matches!(self, StopReason::MaxIter)
    }
}

/// One row of the iteration trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub residual_rel: f64,
    /// `NaN` for solvers without a phase-space step.
    pub ps_step_rel: f64,
    pub t_pe_ms: f64,
    pub t_pd_ms: f64,
}

/// Force reaction at a prescribed DOF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reaction {
    pub node: usize,
    pub dof: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Psi,
    Nr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub solver: SolverKind,
    /// Distance constant, PSI only.
    pub c: Option<f64>,
    pub stop_reason: StopReason,
    pub iterations: usize,
    /// Full-length displacement vector.
    pub u: Vec<f64>,
    pub strains: Vec<f64>,
    pub stresses: Vec<f64>,
    pub reactions: Vec<Reaction>,
    pub trace: Vec<IterationRecord>,
}

impl Solution {
    pub fn converged(&self) -> bool {
        self.stop_reason.converged()
    }

    pub fn final_residual(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.residual_rel)
    }
}

/// Starting point: `eps' = B u_hat` with `u_hat` the prescribed displacements
/// (zero elsewhere) and `sigma' = m(eps')`.
pub fn init_point(problem: &TrussProblem) -> PhasePoint {
    let u_hat = problem.prescribed_displacements();
    PhasePoint::new(
        problem
            .b_rows()
            .iter()
            .map(|row| {
                let e = row.dot(&u_hat);
                ElementState::new(e, problem.material.eval(e))
            })
            .collect(),
    )
}

/// Free-DOF residual norm scaled as in the stop criterion.
pub(crate) fn relative_residual(
    problem: &TrussProblem,
    stresses: &[f64],
    modulus: f64,
) -> Result<f64> {
    let r = norm2(&problem.free_residual(stresses)?);
    let f = norm2(problem.forces());
    Ok(if f > 0.0 {
        r / f
    } else {
        r / (modulus * problem.mean_area())
    })
}

/// Reactions `F_int - F_ext` at the prescribed DOFs.
pub fn reactions(problem: &TrussProblem, stresses: &[f64]) -> Result<Vec<Reaction>> {
    let f_int = assemble_internal_force(problem, stresses)?;
    let dim = problem.dim();
    Ok(problem
        .bcs()
        .prescribed
        .keys()
        .map(|&d| Reaction {
            node: d / dim,
            dof: d % dim,
            value: f_int[d] - problem.forces()[d],
        })
        .collect())
}

/// Iteration-by-iteration driver. [`psi_solve`] runs it to completion.
pub struct PsiSolver<'a> {
    problem: &'a TrussProblem,
    config: SolverConfig,
    metric: Metric,
    fact: StiffnessFactorization,
    pool: Option<ThreadPool>,
    z: PhasePoint,
    u: Vec<f64>,
    trace: Vec<IterationRecord>,
    stop: Option<StopReason>,
}

impl<'a> PsiSolver<'a> {
    pub fn new(problem: &'a TrussProblem, config: SolverConfig) -> Result<Self> {
        let z = init_point(problem);
        Self::with_start(problem, config, z)
    }

    /// Starts from an arbitrary materially admissible point.
    pub fn with_start(
        problem: &'a TrussProblem,
        config: SolverConfig,
        start: PhasePoint,
    ) -> Result<Self> {
        config.validate()?;
        if start.len() != problem.n_elements() {
            return Err(PsiError::LengthMismatch {
                what: "start point",
                expected: problem.n_elements(),
                got: start.len(),
            });
        }
        let c = config.c_over_y0 * problem.material.zero_strain_modulus();
        let metric = Metric::new(c, problem.volumes())?;
        let fact = assemble_k(problem, c)?;
        let pool = if config.workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.workers)
                    .build()
                    .map_err(|e| PsiError::Config(format!("cannot start worker pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self {
            problem,
            config,
            metric,
            fact,
            pool,
            z: start,
            u: problem.prescribed_displacements(),
            trace: Vec::new(),
            stop: None,
        })
    }

    pub fn c(&self) -> f64 {
        self.metric.c()
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    /// Current materially admissible iterate `z'(n)`.
    pub fn current(&self) -> &PhasePoint {
        &self.z
    }

    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn trace(&self) -> &[IterationRecord] {
        &self.trace
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        self.stop
    }

    /// Runs one iteration. Returns the stop reason once a criterion fires;
    /// further calls keep iterating regardless.
    pub fn step(&mut self) -> Result<Option<StopReason>> {
        let t0 = Instant::now();
        let pe = project_e(&self.z, &self.fact, self.problem)?;
        let t1 = Instant::now();
        let next = project_d(
            &pe.point,
            &self.problem.material,
            self.metric.c(),
            &self.config.pd,
            self.pool.as_ref(),
        )?;
        let t2 = Instant::now();

        let residual_rel = relative_residual(self.problem, &next.stresses(), self.metric.c())?;
        let prev_norm = ps_norm(&self.z, &self.metric)?;
        let ps_step_rel = if prev_norm > 0.0 {
            ps_distance(&next, &self.z, &self.metric)? / prev_norm
        } else {
            f64::INFINITY
        };
        self.z = next;
        self.u = pe.u;
        let iter = self.trace.len() + 1;
        self.trace.push(IterationRecord {
            iter,
            residual_rel,
            ps_step_rel,
            t_pe_ms: (t1 - t0).as_secs_f64() * 1e3,
            t_pd_ms: (t2 - t1).as_secs_f64() * 1e3,
        });

        let stop = if residual_rel < self.config.tol1 {
            Some(StopReason::ForceResidual)
        } else if ps_step_rel < self.config.tol2() {
            Some(StopReason::PhaseSpaceStep)
        } else if iter >= self.config.max_iter {
            Some(StopReason::MaxIter)
        } else {
            None
        };
        if stop.is_some() {
            self.stop = stop;
        }
        Ok(stop)
    }

    /// Iterates until a stop criterion fires and packages the result.
    pub fn run(self) -> Result<Solution> {
        self.run_with(|_| {})
    }

    /// Like [`run`](Self::run), calling `visit` on the start point and after every iteration.
    pub fn run_with(mut self, mut visit: impl FnMut(&PhasePoint)) -> Result<Solution> {
        visit(&self.z);
        let reason = loop {
            let r = self.step()?;
            visit(&self.z);
            if let Some(r) = r {
                break r;
            }
        };
        self.finish(reason)
    }

    fn finish(self, reason: StopReason) -> Result<Solution> {
        let stresses = self.z.stresses();
        Ok(Solution {
            solver: SolverKind::Psi,
            c: Some(self.metric.c()),
            stop_reason: reason,
            iterations: self.trace.len(),
            reactions: reactions(self.problem, &stresses)?,
            u: self.u,
            strains: self.z.strains(),
            stresses,
            trace: self.trace,
        })
    }
}

pub fn psi_solve(problem: &TrussProblem, config: &SolverConfig) -> Result<Solution> {
    PsiSolver::new(problem, config.clone())?.run()
}
