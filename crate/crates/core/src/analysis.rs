//! Closed-form oracles and convergence diagnostics for the 1D bar.
//!
//! For one bar with a linear law `sigma = Y eps`, `alpha = Y / C` and
//! `q = 1 / (1 + alpha^2)`, the iterates are
//!
//! ```text
//! z'_n = q^n [eps_0, Y eps_0] + alpha^2 (q + q^2 + ... + q^n) [F/(A Y), F/A]
//! ```
//!
//! and the error contracts by exactly `q` per iteration.

use crate::constitutive::{LinearLaw, Material, MaterialLaw};
use crate::error::{PsiError, Result};
use crate::mesh::serial_bars;
use crate::phase_space::{ps_distance, ElementState, PhasePoint};
use crate::projection_d::{PdKind, PdSettings};
use crate::psi_solver::{PsiSolver, SolverConfig};

/// Iterate `n` of the 1D linear case, starting from `(eps0, sigma0)`.
pub fn closed_form_iterate(
    y: f64,
    c: f64,
    f_over_a: f64,
    eps0: f64,
    sigma0: f64,
    n: u32,
) -> ElementState {
    if n == 0 {
        return ElementState::new(eps0, sigma0);
    }
    let a2 = (y / c).powi(2);
    let q = 1.0 / (1.0 + a2);
    let qn = q.powi(n as i32);
    // q + ... + q^n = q (1 - q^n) / (1 - q), and 1 - q = a2 q
    let sum = (1.0 - qn) / a2;
    let strain = qn * eps0 + a2 * sum * f_over_a / y;
    let stress = qn * y * eps0 + a2 * sum * f_over_a;
    ElementState::new(strain, stress)
}

/// Per-iteration error contraction `1 / (1 + (Y/C)^2)`.
pub fn friedrichs_rate(y: f64, c: f64) -> f64 {
    let a = y / c;
    if !a.is_finite() {
        return 0.0;
    }
    1.0 / (1.0 + a * a)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub beta_hat: f64,
    /// Root-mean-square residual of the log-linear fit.
    pub fit_residual: f64,
    /// Number of trailing entries used.
    pub tail_len: usize,
}

/// Least-squares slope of `ln(error)` against the iteration index over the
/// trailing half of the sequence, exponentiated.
pub fn estimate_rate(errors: &[f64]) -> Result<RateEstimate> {
    let n = errors.len();
    if n < 6 {
        return Err(PsiError::Estimation(format!(
            "need at least 6 errors, got {n}"
        )));
    }
    if let Some(i) = errors.iter().position(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(PsiError::Estimation(format!(
            "error {i} is not strictly positive"
        )));
    }
    let third = n - n / 3;
    for i in third.max(1)..n {
        if !(errors[i] < errors[i - 1]) {
            return Err(PsiError::Estimation(format!(
                "errors are not strictly decreasing at index {i}"
            )));
        }
    }
    let start = n / 2;
    let tail = &errors[start..];
    let m = tail.len() as f64;
    let xs: Vec<f64> = (start..n).map(|i| i as f64).collect();
    let ys: Vec<f64> = tail.iter().map(|e| e.ln()).collect();
    let xm = xs.iter().sum::<f64>() / m;
    let ym = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let slope = sxy / sxx;
    let fit_residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - ym - slope * (x - xm)).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(RateEstimate {
        beta_hat: slope.exp(),
        fit_residual,
        tail_len: tail.len(),
    })
}

/// Linear-law projection plus the first-order correction in `k` for
/// `m(x) = Y (x - k x^2)`.
pub fn perturbed_projection(eps: f64, sigma: f64, y: f64, c: f64, k: f64) -> f64 {
    let (c2, y2) = (c * c, y * y);
    let linear = (c2 * eps + sigma * y) / (c2 + y2);
    let first = y * (c2 * eps + sigma * y) * (sigma * y2 + c2 * (-2.0 * sigma + 3.0 * eps * y))
        / (c2 + y2).powi(3);
    linear + k * first
}

/// Solves `m(eps) = target` by bisection for a monotone increasing law.
pub fn invert_law(law: &dyn MaterialLaw, target: f64, tol: f64) -> Result<f64> {
    if target == 0.0 {
        return Ok(0.0);
    }
    let mut hi = target.abs() / law.zero_strain_modulus();
    let dir = target.signum();
    let mut grow = 0;
    while (law.eval(dir * hi) - target) * dir < 0.0 {
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(PsiError::Estimation(format!(
                "law never reaches stress {target:e}"
            )));
        }
    }
    let (mut a, mut b) = (0.0f64, dir * hi);
    for _ in 0..400 {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        if (law.eval(mid) - target) * dir < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        if (b - a).abs() <= tol * b.abs() {
            break;
        }
    }
    Ok(0.5 * (a + b))
}

/// Outcome of [`bounding_line_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct BoundingLineReport {
    pub eps_star: f64,
    /// Contraction factor of the iteration on the tangent at the solution.
    pub line_rate: f64,
    /// First consecutive pair whose order the tangent-line map fails to keep.
    pub order_violation: Option<(usize, usize)>,
    /// First index `n` where the nonlinear iterate `n + 1` is farther from the
    /// solution than the tangent-line image of iterate `n`.
    pub domination_violation: Option<usize>,
}

impl BoundingLineReport {
    pub fn passed(&self) -> bool {
        self.order_violation.is_none() && self.domination_violation.is_none()
    }
}

/// Checks a 1D strain trajectory against the line tangent to the law at the
/// solution `eps*` with `m(eps*) = F/A`. One step on that line maps `eps` to
/// `eps* + q* (eps - eps*)`, `q* = friedrichs_rate(m'(eps*), C)`.
pub fn bounding_line_check(
    law: &dyn MaterialLaw,
    c: f64,
    f_over_a: f64,
    trajectory: &[f64],
) -> Result<BoundingLineReport> {
    let eps_star = invert_law(law, f_over_a, 1e-15)?;
    let q = friedrichs_rate(law.tangent(eps_star), c);
    let line = |e: f64| eps_star + q * (e - eps_star);
    let slack = 1e-12 * eps_star.abs().max(f64::MIN_POSITIVE);

    let mut order_violation = None;
    for i in 1..trajectory.len() {
        let (a, b) = (trajectory[i - 1], trajectory[i]);
        if a != b && (line(a) - line(b)) * (a - b) <= 0.0 {
            order_violation = Some((i - 1, i));
            break;
        }
    }
    let mut domination_violation = None;
    for n in 0..trajectory.len().saturating_sub(1) {
        let nonlinear = (trajectory[n + 1] - eps_star).abs();
        let tangent = (line(trajectory[n]) - eps_star).abs();
        if nonlinear > tangent + slack {
            domination_violation = Some(n);
            break;
        }
    }
    Ok(BoundingLineReport {
        eps_star,
        line_rate: q,
        order_violation,
        domination_violation,
    })
}

/// How errors are measured in [`serial_rate_experiment`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorFrame {
    /// Load `F/A = 1`, start at the origin, error `||z* - z'_n||`.
    Raw,
    /// The same affine iteration shifted by `z*`: no load, start at `-z*`,
    /// error `||z'_n||`. Avoids cancellation once the error nears rounding level.
    Translated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateExperiment {
    /// Errors for `n = 0..=iterations`.
    pub errors: Vec<f64>,
    pub estimate: RateEstimate,
    pub friedrichs: f64,
}

/// Bar lengths for `ne` serial bars spread evenly from 1 to `len_ratio`.
pub fn serial_lengths(ne: usize, len_ratio: f64) -> Vec<f64> {
    if ne == 1 {
        return vec![1.0];
    }
    (0..ne)
        .map(|i| 1.0 + (len_ratio - 1.0) * i as f64 / (ne - 1) as f64)
        .collect()
}

/// Runs PSI on `ne` serial linear bars (unit area, `F/A = 1` in the raw frame)
/// and fits the contraction rate of the phase-space error.
pub fn serial_rate_experiment(
    y: f64,
    c: f64,
    ne: usize,
    len_ratio: f64,
    iterations: usize,
    frame: ErrorFrame,
) -> Result<RateExperiment> {
    if ne == 0 || !(len_ratio >= 1.0) {
        return Err(PsiError::Config("need ne >= 1 and len_ratio >= 1".into()));
    }
    let law: Material = LinearLaw::new(y)?.into();
    let exact = PhasePoint::new(vec![ElementState::new(1.0 / y, 1.0); ne]);
    let (force, start, target) = match frame {
        ErrorFrame::Raw => (1.0, PhasePoint::zeros(ne), exact),
        ErrorFrame::Translated => (0.0, exact.scale(-1.0), PhasePoint::zeros(ne)),
    };
    let problem = serial_bars(&serial_lengths(ne, len_ratio), 1.0, force, law)?;
    let config = SolverConfig {
        c_over_y0: c / y,
        tol1: f64::MIN_POSITIVE,
        tol2: Some(f64::MIN_POSITIVE),
        max_iter: usize::MAX,
        pd: PdSettings::with_kind(PdKind::Newton),
        ..SolverConfig::default()
    };
    let mut solver = PsiSolver::with_start(&problem, config, start)?;
    let mut errors = vec![ps_distance(solver.current(), &target, solver.metric())?];
    for _ in 0..iterations {
        solver.step()?;
        errors.push(ps_distance(solver.current(), &target, solver.metric())?);
    }
    // once the error reaches exact zero there is nothing left to fit
    let resolved = errors.iter().take_while(|&&e| e > 0.0).count();
    Ok(RateExperiment {
        estimate: estimate_rate(&errors[..resolved])?,
        errors,
        friedrichs: friedrichs_rate(y, c),
    })
}
