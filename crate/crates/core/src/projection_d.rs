//! Projection onto the constitutive law, one element at a time.
//!
//! For an element state `(eps, sigma)` the closest point on the law minimizes
//!
//! ```text
//! g(x) = C (x - eps)^2 / 2 + (m(x) - sigma)^2 / (2 C)
//! ```
//!
//! whose stationarity condition (divided by `C`) is
//!
//! ```text
//! h(x) = x - eps - (sigma - m(x)) m'(x) / C^2 = 0.
//! ```
//!
//! Since `g(x*) <= g(eps)`, the minimizer satisfies `|x* - eps| <= |m(eps) - sigma| / C`,
//! which makes a rigorous search bracket.
//!
//! Bars carry one strain component, so `C` is a scalar. For multi-component
//! elements the same functional gives a small vector system per element with a
//! matrix-valued `C`; that path is not implemented.

use std::str::FromStr;

use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use crate::constitutive::{Material, MaterialLaw};
use crate::error::{PsiError, Result};
use crate::phase_space::{ElementState, PhasePoint};

/// Which algorithm solves the per-element problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdKind {
    /// Bracketed golden-section search with parabolic steps on `g`.
    #[default]
    #[serde(alias = "derivative_free_min", alias = "brent")]
    DerivativeFree,
    /// Safeguarded Newton on `h`.
    #[serde(alias = "newton_el")]
    Newton,
    /// Safeguarded secant on `h`.
    #[serde(alias = "secant_el")]
    Secant,
}

impl PdKind {
    pub fn name(&self) -> &'static str {
        match self {
            PdKind::DerivativeFree => "derivative_free",
            PdKind::Newton => "newton",
            PdKind::Secant => "secant",
        }
    }
}

impl FromStr for PdKind {
    type Err = PsiError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "derivative_free" | "derivative_free_min" | "brent" => Ok(PdKind::DerivativeFree),
            "newton" | "newton_el" => Ok(PdKind::Newton),
            "secant" | "secant_el" => Ok(PdKind::Secant),
            other => Err(PsiError::Config(format!(
                "unknown projection method '{other}' (expected derivative_free, newton or secant)"
            ))),
        }
    }
}

impl std::fmt::Display for PdKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Method plus tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdSettings {
    pub kind: PdKind,
    /// Strain floor added to the search bracket half-width.
    pub strain_floor: f64,
    /// Iteration cap for the refinement / root-finding loop.
    pub max_iter: usize,
    /// Uniform samples taken over the bracket before refinement (derivative-free only).
    pub scan_points: usize,
}

impl Default for PdSettings {
    fn default() -> Self {
        Self {
            kind: PdKind::DerivativeFree,
            strain_floor: 1e-6,
            max_iter: 200,
            scan_points: 64,
        }
    }
}

impl PdSettings {
    pub fn with_kind(kind: PdKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }
}

/// Objective `g` at strain `x`.
#[inline]
pub fn objective(law: &dyn MaterialLaw, state: &ElementState, c: f64, x: f64) -> f64 {
    let t = x - state.strain;
    let r = law.eval(x) - state.stress;
    0.5 * (c * t * t + r * r / c)
}

/// Euler-Lagrange residual `h` at strain `x`.
#[inline]
pub fn el_residual(law: &dyn MaterialLaw, state: &ElementState, c: f64, x: f64) -> f64 {
    x - state.strain - (state.stress - law.eval(x)) * law.tangent(x) / (c * c)
}

fn el_derivative(law: &dyn MaterialLaw, state: &ElementState, c: f64, x: f64) -> f64 {
    let mt = law.tangent(x);
    1.0 + (mt * mt - (state.stress - law.eval(x)) * law.curvature(x)) / (c * c)
}

/// Half-width of the derivative-free search bracket around `eps`.
pub fn bracket_half_width(law: &dyn MaterialLaw, state: &ElementState, c: f64, floor: f64) -> f64 {
    let y0 = law.zero_strain_modulus();
    let heuristic = state.strain.abs() + state.stress.abs() / y0;
    let rigorous = (law.eval(state.strain) - state.stress).abs() / c;
    heuristic.max(rigorous) + floor
}

/// Projects one element state onto the law.
pub fn project_d_element(
    state: &ElementState,
    law: &dyn MaterialLaw,
    c: f64,
    settings: &PdSettings,
    element: usize,
) -> Result<ElementState> {
    let on_law = law.eval(state.strain);
    if on_law == state.stress {
        return Ok(ElementState::new(state.strain, on_law));
    }
    let x = match settings.kind {
        PdKind::DerivativeFree => derivative_free(state, law, c, settings, element)?,
        PdKind::Newton | PdKind::Secant if !law.is_smooth() => {
            return Err(PsiError::Config(format!(
                "projection method '{}' needs a smooth law; use derivative_free",
                settings.kind
            )))
        }
        PdKind::Newton | PdKind::Secant => {
            let x = if settings.kind == PdKind::Newton {
                newton(state, law, c, settings, element)?
            } else {
                secant(state, law, c, settings, element)?
            };
            // a stationary point in a worse basin than the starting strain
            if objective(law, state, c, x) > objective(law, state, c, state.strain) {
                derivative_free(state, law, c, settings, element)?
            } else {
                x
            }
        }
    };
    Ok(ElementState::new(x, law.eval(x)))
}

fn derivative_free(
    state: &ElementState,
    law: &dyn MaterialLaw,
    c: f64,
    settings: &PdSettings,
    element: usize,
) -> Result<f64> {
    let eps = state.strain;
    let r = bracket_half_width(law, state, c, settings.strain_floor);
    let g = |x: f64| objective(law, state, c, x);

    // coarse scan for the basin of the global minimum
    let n = settings.scan_points.max(3);
    let step = 2.0 * r / (n - 1) as f64;
    let mut best = (0usize, f64::INFINITY);
    for i in 0..n {
        let v = g(eps - r + step * i as f64);
        if v < best.1 {
            best = (i, v);
        }
    }
    // the unperturbed strain is always a candidate
    let mut lo = eps - r + step * best.0.saturating_sub(1) as f64;
    let mut hi = eps - r + step * (best.0 + 1).min(n - 1) as f64;
    if g(eps) < best.1 {
        lo = eps - step;
        hi = eps + step;
    }

    let atol = 1e-2 * f64::EPSILON.sqrt() * settings.strain_floor;
    let x = brent_min(&g, lo, hi, atol, settings.max_iter).ok_or(
        PsiError::ProjectionNonConvergence {
            element,
            last_iterate: 0.5 * (lo + hi),
        },
    )?;
    Ok(parabolic_polish(law, state, c, x, settings.strain_floor))
}

/// Brent's minimizer on `[a, b]` to `sqrt(eps_mach) |x| + atol`; `None` when
/// the iteration cap is hit.
fn brent_min(
    f: &dyn Fn(f64) -> f64,
    mut a: f64,
    mut b: f64,
    atol: f64,
    max_iter: usize,
) -> Option<f64> {
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let tol = f64::EPSILON.sqrt();
    let mut x = a + GOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + atol;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            return Some(x);
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(m - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    None
}

/// Rounding level of `objective` at `x`, including the cancellation in
/// `x - eps` and `m(x) - sigma`.
fn objective_noise(law: &dyn MaterialLaw, state: &ElementState, c: f64, x: f64) -> f64 {
    let m = law.eval(x);
    let (eps, sigma) = (state.strain, state.stress);
    f64::EPSILON
        * (objective(law, state, c, x)
            + c * (x - eps).abs() * (x.abs() + eps.abs())
            + (m - sigma).abs() * (m.abs() + sigma.abs()) / c)
}

/// Symmetric three-point parabolic steps around the Brent result. Comparison
/// searches stall at a relative accuracy of about the square root of machine
/// epsilon because `g` is flat near its minimum; the vertex of a parabola is
/// not limited that way. A stencil of width `h` is biased by `O(h^2)` and
/// amplifies rounding in `g` by `1/h`, so it shrinks only while the step stays
/// well above the rounding-induced shift.
fn parabolic_polish(
    law: &dyn MaterialLaw,
    state: &ElementState,
    c: f64,
    x0: f64,
    floor: f64,
) -> f64 {
    let g = |x: f64| objective(law, state, c, x);
    let eps = state.strain;
    let mut x = x0;
    let mut h = (4.0 * f64::EPSILON.sqrt() * x.abs().max(eps.abs()).max(floor * 1e-2))
        .max(1e-3 * (x - eps).abs());
    for _ in 0..16 {
        let fx = g(x);
        let fm = g(x - h);
        let fp = g(x + h);
        let curv = fm - 2.0 * fx + fp;
        if !(curv > 0.0) {
            break;
        }
        let shift = 0.5 * h * (fm - fp) / curv;
        let noise = 4.0 * objective_noise(law, state, c, x) * h / curv;
        if !(shift.abs() <= 2.0 * h) || shift.abs() <= noise {
            break;
        }
        x += shift;
        if shift.abs() > 10.0 * noise {
            h *= 0.1;
        }
    }
    x
}

/// Bracket `[lo, hi]` with `h(lo) < 0 < h(hi)` on the descent side of `eps`,
/// grown from the rigorous radius.
fn el_bracket(
    state: &ElementState,
    law: &dyn MaterialLaw,
    c: f64,
    settings: &PdSettings,
    element: usize,
) -> Result<(f64, f64)> {
    let eps = state.strain;
    let h_eps = el_residual(law, state, c, eps);
    let mut r = bracket_half_width(law, state, c, settings.strain_floor);
    for _ in 0..64 {
        if h_eps > 0.0 {
            if el_residual(law, state, c, eps - r) < 0.0 {
                return Ok((eps - r, eps));
            }
        } else if el_residual(law, state, c, eps + r) > 0.0 {
            return Ok((eps, eps + r));
        }
        r *= 2.0;
    }
    Err(PsiError::ProjectionNonConvergence {
        element,
        last_iterate: eps,
    })
}

fn converged(step: f64, x: f64, eps: f64) -> bool {
    step.abs() <= 4.0 * f64::EPSILON * x.abs().max(eps.abs()).max(1e-300)
}

fn newton(
    state: &ElementState,
    law: &dyn MaterialLaw,
    c: f64,
    settings: &PdSettings,
    element: usize,
) -> Result<f64> {
    let h = |x: f64| el_residual(law, state, c, x);
    let (mut lo, mut hi) = el_bracket(state, law, c, settings, element)?;
    let mut x = state.strain;
    let mut fx = h(x);
    for _ in 0..settings.max_iter {
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        let dfx = el_derivative(law, state, c, x);
        let mut xn = x - fx / dfx;
        if !(dfx > 0.0) || !(xn > lo && xn < hi) {
            xn = 0.5 * (lo + hi);
        }
        let step = xn - x;
        x = xn;
        fx = h(x);
        if converged(step, x, state.strain) || hi - lo <= 4.0 * f64::EPSILON * x.abs() {
            return Ok(x);
        }
    }
    Err(PsiError::ProjectionNonConvergence {
        element,
        last_iterate: x,
    })
}

fn secant(
    state: &ElementState,
    law: &dyn MaterialLaw,
    c: f64,
    settings: &PdSettings,
    element: usize,
) -> Result<f64> {
    let h = |x: f64| el_residual(law, state, c, x);
    let (mut lo, mut hi) = el_bracket(state, law, c, settings, element)?;
    // second point: projection onto the zero-strain tangent line
    let a2 = (law.zero_strain_modulus() / c).powi(2);
    let mut x0 = state.strain;
    let mut f0 = h(x0);
    if f0 == 0.0 {
        return Ok(x0);
    }
    let mut x1 = x0 - f0 / (1.0 + a2);
    if !(x1 > lo && x1 < hi) {
        x1 = 0.5 * (lo + hi);
    }
    for _ in 0..settings.max_iter {
        let f1 = h(x1);
        if f1 == 0.0 {
            return Ok(x1);
        }
        if f1 < 0.0 {
            lo = lo.max(x1);
        } else {
            hi = hi.min(x1);
        }
        if f0 < 0.0 {
            lo = lo.max(x0);
        } else {
            hi = hi.min(x0);
        }
        let denom = f1 - f0;
        let mut x2 = if denom != 0.0 {
            x1 - f1 * (x1 - x0) / denom
        } else {
            f64::NAN
        };
        if !(x2 > lo && x2 < hi) {
            x2 = 0.5 * (lo + hi);
        }
        let step = x2 - x1;
        x0 = x1;
        f0 = f1;
        x1 = x2;
        if converged(step, x1, state.strain) || hi - lo <= 4.0 * f64::EPSILON * x1.abs() {
            return Ok(x1);
        }
    }
    Err(PsiError::ProjectionNonConvergence {
        element,
        last_iterate: x1,
    })
}

/// Applies [`project_d_element`] to every element. With a pool the map runs in
/// parallel; results are identical bit for bit either way since each element
/// is computed independently and collected in index order.
pub fn project_d(
    z: &PhasePoint,
    law: &Material,
    c: f64,
    settings: &PdSettings,
    pool: Option<&ThreadPool>,
) -> Result<PhasePoint> {
    let one = |(e, s): (usize, &ElementState)| project_d_element(s, law, c, settings, e);
    let results: Vec<Result<ElementState>> = match pool {
        Some(pool) => pool.install(|| z.states.par_iter().enumerate().map(one).collect()),
        None => z.states.iter().enumerate().map(one).collect(),
    };
    results
        .into_iter()
        .collect::<Result<Vec<_>>>()
        .map(PhasePoint::new)
}

/// Coefficients `(a3, a2, a1, a0)` of the cubic stationarity condition for
/// `m(x) = Y (x - k x^2)`.
pub fn el_cubic_coeffs(state: &ElementState, y: f64, k: f64, c: f64) -> [f64; 4] {
    let a2 = (y / c).powi(2);
    let (eps, sigma) = (state.strain, state.stress);
    [
        -2.0 * a2 * k * k,
        3.0 * k * a2,
        -1.0 - 2.0 * k * y * sigma / (c * c) - a2,
        eps + sigma * y / (c * c),
    ]
}

/// Value of the cubic and the sum of the absolute values of its terms.
pub fn cubic_residual(coeffs: &[f64; 4], x: f64) -> (f64, f64) {
    let [a3, a2, a1, a0] = *coeffs;
    let terms = [a3 * x * x * x, a2 * x * x, a1 * x, a0];
    (terms.iter().sum(), terms.iter().map(|t| t.abs()).sum())
}

/// Real roots of `a3 x^3 + a2 x^2 + a1 x + a0`, each polished by Newton.
pub fn real_cubic_roots(coeffs: &[f64; 4]) -> Vec<f64> {
    let [a3, a2, a1, a0] = *coeffs;
    let mut roots = Vec::new();
    if a3 == 0.0 {
        if a2 == 0.0 {
            if a1 != 0.0 {
                roots.push(-a0 / a1);
            }
        } else {
            let disc = a1 * a1 - 4.0 * a2 * a0;
            if disc >= 0.0 {
                let q = -0.5 * (a1 + disc.sqrt().copysign(a1));
                if q != 0.0 {
                    roots.push(q / a2);
                    roots.push(a0 / q);
                } else {
                    roots.push(0.0);
                }
            }
        }
    } else {
        let (b, cc, d) = (a2 / a3, a1 / a3, a0 / a3);
        // depressed cubic t^3 + p t + q with x = t - b/3
        let p = cc - b * b / 3.0;
        let q = 2.0 * b * b * b / 27.0 - b * cc / 3.0 + d;
        let shift = -b / 3.0;
        let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
        if disc > 0.0 {
            let s = disc.sqrt();
            let u = (-q / 2.0 + s).cbrt();
            let v = (-q / 2.0 - s).cbrt();
            roots.push(u + v + shift);
        } else if p == 0.0 {
            roots.push(shift);
        } else {
            let m = 2.0 * (-p / 3.0).sqrt();
            let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
            let theta = arg.acos() / 3.0;
            for k in 0..3 {
                roots.push(m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() + shift);
            }
        }
    }
    for r in roots.iter_mut() {
        for _ in 0..4 {
            let f = ((a3 * *r + a2) * *r + a1) * *r + a0;
            let df = (3.0 * a3 * *r + 2.0 * a2) * *r + a1;
            if df == 0.0 {
                break;
            }
            let next = *r - f / df;
            if !next.is_finite() {
                break;
            }
            *r = next;
        }
    }
    roots
}

/// Root of the cubic followed from the `k = 0` solution: the real root nearest
/// the linear projection, ties toward smaller magnitude.
pub fn cubic_projection(state: &ElementState, y: f64, k: f64, c: f64) -> Result<f64> {
    let a2 = (y / c).powi(2);
    let linear = (state.strain + state.stress * y / (c * c)) / (1.0 + a2);
    let roots = real_cubic_roots(&el_cubic_coeffs(state, y, k, c));
    roots
        .into_iter()
        .filter(|r| r.is_finite())
        .min_by(|a, b| {
            let da = (a - linear).abs();
            let db = (b - linear).abs();
            da.total_cmp(&db).then(a.abs().total_cmp(&b.abs()))
        })
        .ok_or_else(|| PsiError::Estimation("cubic has no real root".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::{LinearLaw, PowerLaw, QuadraticPerturbedLaw};
    use crate::phase_space::local_distance;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const KINDS: [PdKind; 3] = [PdKind::DerivativeFree, PdKind::Newton, PdKind::Secant];

    fn proj(state: ElementState, law: &dyn MaterialLaw, c: f64, kind: PdKind) -> ElementState {
        project_d_element(&state, law, c, &PdSettings::with_kind(kind), 0).unwrap()
    }

    #[test]
    fn point_on_law_is_unchanged() {
        let law = PowerLaw::new(2e11, 1e-4).unwrap();
        let s = ElementState::new(1e-3, law.eval(1e-3));
        for kind in KINDS {
            assert_eq!(proj(s, &law, 6e10, kind), s);
        }
    }

    #[test]
    fn linear_law_example() {
        let law = LinearLaw::new(1.0).unwrap();
        for kind in KINDS {
            let out = proj(ElementState::new(1.0, 0.0), &law, 1.0, kind);
            assert_relative_eq!(out.strain, 0.5, max_relative = 1e-12);
            assert_relative_eq!(out.stress, 0.5, max_relative = 1e-12);
        }
    }

    #[test]
    fn quadratic_with_zero_k_matches_linear() {
        let q = QuadraticPerturbedLaw::new(3.0, 0.0).unwrap();
        let l = LinearLaw::new(3.0).unwrap();
        let s = ElementState::new(0.4, -1.1);
        for kind in KINDS {
            let a = proj(s, &q, 2.0, kind);
            let b = proj(s, &l, 2.0, kind);
            assert_relative_eq!(a.strain, b.strain, max_relative = 1e-12);
        }
        let coeffs = el_cubic_coeffs(&s, 3.0, 0.0, 2.0);
        assert_eq!(coeffs[0], 0.0);
        assert_eq!(coeffs[1], 0.0);
        let want = (0.4 + -1.1 * 3.0 / 4.0) / (1.0 + 9.0 / 4.0);
        assert_relative_eq!(
            cubic_projection(&s, 3.0, 0.0, 2.0).unwrap(),
            want,
            max_relative = 1e-14
        );
    }

    #[test]
    fn cubic_sign_pattern() {
        let c = el_cubic_coeffs(&ElementState::new(0.01, 1e7), 1e9, 0.05, 1e9);
        assert!(
            c[0] < 0.0 && c[1] > 0.0 && c[2] < 0.0 && c[3] > 0.0,
            "{c:?}"
        );
        assert_relative_eq!(c[0], -2.0 * 0.05 * 0.05);
        assert_relative_eq!(c[1], 0.15);
        assert_relative_eq!(c[2], -1.0 - 2.0 * 0.05 * 1e9 * 1e7 / 1e18 - 1.0);
        assert_relative_eq!(c[3], 0.01 + 1e7 * 1e9 / 1e18);
    }

    #[test]
    fn newton_root_satisfies_cubic() {
        let (y, c) = (2.0, 1.5);
        for k in [0.01, 0.05, 0.2] {
            let law = QuadraticPerturbedLaw::new(y, k).unwrap();
            for s in [
                ElementState::new(0.3, 0.9),
                ElementState::new(-0.2, 0.1),
                ElementState::new(1.0, -0.4),
            ] {
                let out = proj(s, &law, c, PdKind::Newton);
                let coeffs = el_cubic_coeffs(&s, y, k, c);
                let (r, scale) = cubic_residual(&coeffs, out.strain);
                assert!(r.abs() <= 1e-10 * scale, "k={k} {s:?} residual {r}");
                let root = cubic_projection(&s, y, k, c).unwrap();
                assert_relative_eq!(root, out.strain, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn cubic_roots_known_polynomial() {
        // (x - 1)(x - 2)(x + 3) = x^3 - 7x + 6
        let mut r = real_cubic_roots(&[1.0, 0.0, -7.0, 6.0]);
        r.sort_by(f64::total_cmp);
        for (a, b) in r.iter().zip([-3.0, 1.0, 2.0]) {
            assert_relative_eq!(*a, b, max_relative = 1e-14);
        }
        assert_eq!(real_cubic_roots(&[0.0, 0.0, 2.0, -1.0]), vec![0.5]);
        assert_eq!(real_cubic_roots(&[1.0, 0.0, 1.0, 0.0]).len(), 1);
    }

    /// Dense-grid oracle: 10^6 samples over the bracket, then golden refinement.
    fn grid_oracle(law: &dyn MaterialLaw, s: &ElementState, c: f64) -> (f64, f64) {
        let r = bracket_half_width(law, s, c, 1e-6);
        let (lo, hi) = (s.strain - r, s.strain + r);
        let n = 1_000_000;
        let dx = (hi - lo) / n as f64;
        let mut best = (0, f64::INFINITY);
        for i in 0..=n {
            let v = objective(law, s, c, lo + dx * i as f64);
            if v < best.1 {
                best = (i, v);
            }
        }
        let (mut a, mut b) = (
            lo + dx * (best.0 as f64 - 1.0),
            lo + dx * (best.0 as f64 + 1.0),
        );
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let x1 = b - phi * (b - a);
            let x2 = a + phi * (b - a);
            if objective(law, s, c, x1) < objective(law, s, c, x2) {
                b = x2;
            } else {
                a = x1;
            }
        }
        (0.5 * (a + b), 2.0 * r)
    }

    #[test]
    fn derivative_free_matches_grid_oracle() {
        let power = PowerLaw::new(2e11, 1e-4).unwrap();
        let quad = QuadraticPerturbedLaw::new(2e11, 5.0).unwrap();
        let cases = [
            ElementState::new(2e-3, 1e8),
            ElementState::new(-1e-3, 3e7),
            ElementState::new(5e-4, -2e8),
            ElementState::new(0.0, 5e7),
        ];
        for law in [&power as &dyn MaterialLaw, &quad] {
            for s in cases {
                for c in [2e10, 6e10, 2e11] {
                    let (want, width) = grid_oracle(law, &s, c);
                    let got = proj(s, law, c, PdKind::DerivativeFree).strain;
                    assert!(
                        (got - want).abs() <= 1e-6 * width,
                        "{s:?} C={c}: {got} vs {want}"
                    );
                }
            }
        }
    }

    #[test]
    fn methods_reject_rough_law_except_derivative_free() {
        use crate::constitutive::{Activation, DenseLayer, NeuralLaw};
        let layer = DenseLayer::new(1, 1, vec![1.0], vec![0.0], Activation::Linear).unwrap();
        let law = NeuralLaw::new(vec![layer], (-1.0, 1.0), (-1.0, 1.0)).unwrap();
        let s = ElementState::new(0.2, 0.6);
        assert!(
            project_d_element(&s, &law, 1.0, &PdSettings::with_kind(PdKind::Newton), 3).is_err()
        );
        let out = project_d_element(&s, &law, 1.0, &PdSettings::default(), 3).unwrap();
        assert_relative_eq!(out.strain, 0.4, max_relative = 1e-8);
    }

    #[test]
    fn parallel_map_is_bitwise_serial() {
        let law: Material = PowerLaw::new(2e11, 1e-4).unwrap().into();
        let z = PhasePoint::new(
            (0..500)
                .map(|i| {
                    ElementState::new(
                        1e-3 * ((i as f64) * 0.7).sin(),
                        2e8 * ((i as f64) * 0.3).cos(),
                    )
                })
                .collect(),
        );
        let settings = PdSettings::default();
        let serial = project_d(&z, &law, 6e10, &settings, None).unwrap();
        for workers in [1, 2, 4] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .unwrap();
            let par = project_d(&z, &law, 6e10, &settings, Some(&pool)).unwrap();
            for (a, b) in serial.states.iter().zip(&par.states) {
                assert_eq!(a.strain.to_bits(), b.strain.to_bits());
                assert_eq!(a.stress.to_bits(), b.stress.to_bits());
            }
        }
        // locality: changing one input changes only that output
        let mut z2 = z.clone();
        z2.states[7].stress *= 1.5;
        let out2 = project_d(&z2, &law, 6e10, &settings, None).unwrap();
        for (i, (a, b)) in serial.states.iter().zip(&out2.states).enumerate() {
            assert_eq!(a == b, i != 7);
        }
    }

    #[test]
    fn pd_kind_parsing() {
        assert_eq!("newton".parse::<PdKind>().unwrap(), PdKind::Newton);
        assert_eq!(
            "SecantEL"
                .to_string()
                .replace("EL", "_el")
                .parse::<PdKind>()
                .unwrap(),
            PdKind::Secant
        );
        assert_eq!(
            "derivative-free".parse::<PdKind>().unwrap(),
            PdKind::DerivativeFree
        );
        assert!("simplex".parse::<PdKind>().is_err());
    }

    fn arb_state() -> impl Strategy<Value = ElementState> {
        (-4e-3..4e-3f64, -8e8..8e8f64).prop_map(|(e, s)| ElementState::new(e, s))
    }

    proptest! {
        #[test]
        fn output_lies_on_law_and_beats_trivial_candidate(
            s in arb_state(), ratio in 0.1..3.0f64, kind_i in 0usize..3
        ) {
            let law = PowerLaw::new(2e11, 1e-4).unwrap();
            let c = ratio * 2e11;
            let out = proj(s, &law, c, KINDS[kind_i]);
            prop_assert_eq!(out.stress, law.eval(out.strain));
            let trivial = ElementState::new(s.strain, law.eval(s.strain));
            prop_assert!(local_distance(&out, &s, c) <= local_distance(&trivial, &s, c) * (1.0 + 1e-12));
        }

        #[test]
        fn methods_agree_on_smooth_laws(
            e in -4e-3..4e-3f64, rel in -0.6..0.6f64, shift in -5e-4..5e-4f64,
            ratio in 0.1..3.0f64, quad in any::<bool>(),
        ) {
            // states near the law, the regime produced by the admissible-set projection
            let power = PowerLaw::new(2e11, 1e-4).unwrap();
            let q = QuadraticPerturbedLaw::new(2e11, 20.0).unwrap();
            let law: &dyn MaterialLaw = if quad { &q } else { &power };
            let s = ElementState::new(e + shift, law.eval(e) * (1.0 + rel));
            let c = ratio * 2e11;
            let a = proj(s, law, c, PdKind::DerivativeFree).strain;
            let b = proj(s, law, c, PdKind::Newton).strain;
            let d = proj(s, law, c, PdKind::Secant).strain;
            let scale = a.abs().max(b.abs()).max(1e-12);
            prop_assert!((a - b).abs() <= 1e-8 * scale, "df {a} newton {b}");
            prop_assert!((d - b).abs() <= 1e-8 * scale, "secant {d} newton {b}");
        }

        #[test]
        fn nonexpansive_on_convex_side(
            e1 in 1e-5..4e-3f64, d1 in 0.0..3e8f64, e2 in 1e-5..4e-3f64, d2 in 0.0..3e8f64,
            neg in any::<bool>(), ratio in 0.1..3.0f64,
        ) {
            // one-signed states outside the hypograph of the concave branch, where
            // the closest-point map coincides with the projection onto a convex set
            let law = PowerLaw::new(2e11, 1e-4).unwrap();
            let sign = if neg { -1.0 } else { 1.0 };
            let c = ratio * 2e11;
            let z1 = ElementState::new(sign * e1, sign * (law.eval(e1) + d1));
            let z2 = ElementState::new(sign * e2, sign * (law.eval(e2) + d2));
            let p1 = proj(z1, &law, c, PdKind::Newton);
            let p2 = proj(z2, &law, c, PdKind::Newton);
            prop_assert!(local_distance(&p1, &p2, c) <= local_distance(&z1, &z2, c) * (1.0 + 1e-8));
        }
    }
}
