//! Phase-space points and the metric induced by the distance constant `C`.
//!
//! Every bar contributes one local phase space with coordinates
//! `(strain, stress)`. The global norm weights each element by its volume:
//!
//! ```text
//! ||z||^2 = sum_e w_e [ C eps_e^2 / 2 + sigma_e^2 / (2 C) ]
//! ```
//!
//! Only raw `(strain, stress)` pairs are stored; the rescaled Euclidean
//! coordinates are produced on demand by [`Metric::rescaled`].

use serde::{Deserialize, Serialize};

use crate::error::{PsiError, Result};

/// State of a single bar: axial strain (dimensionless) and stress (Pa).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ElementState {
    pub strain: f64,
    pub stress: f64,
}

impl ElementState {
    pub const ZERO: ElementState = ElementState {
        strain: 0.0,
        stress: 0.0,
    };

    pub fn new(strain: f64, stress: f64) -> Self {
        Self { strain, stress }
    }

    pub fn is_finite(&self) -> bool {
        self.strain.is_finite() && self.stress.is_finite()
    }
}

/// A point of the global phase space: one [`ElementState`] per element.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PhasePoint {
    pub states: Vec<ElementState>,
}

impl PhasePoint {
    pub fn new(states: Vec<ElementState>) -> Self {
        Self { states }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            states: vec![ElementState::ZERO; n],
        }
    }

    pub fn from_parts(strains: &[f64], stresses: &[f64]) -> Result<Self> {
        if strains.len() != stresses.len() {
            return Err(PsiError::LengthMismatch {
                what: "strain/stress arrays",
                expected: strains.len(),
                got: stresses.len(),
            });
        }
        Ok(Self {
            states: strains
                .iter()
                .zip(stresses)
                .map(|(&e, &s)| ElementState::new(e, s))
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn strains(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.strain).collect()
    }

    pub fn stresses(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.stress).collect()
    }

    /// Element-wise difference `self - other`.
    pub fn sub(&self, other: &PhasePoint) -> Result<PhasePoint> {
        check_len("phase point", self.len(), other.len())?;
        Ok(PhasePoint {
            states: self
                .states
                .iter()
                .zip(&other.states)
                .map(|(a, b)| ElementState::new(a.strain - b.strain, a.stress - b.stress))
                .collect(),
        })
    }

    pub fn scale(&self, t: f64) -> PhasePoint {
        PhasePoint {
            states: self
                .states
                .iter()
                .map(|s| ElementState::new(t * s.strain, t * s.stress))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.states.iter().all(ElementState::is_finite)
    }
}

/// Volume-weighted metric with a scalar distance constant `C` (Pa).
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    c: f64,
    volumes: Vec<f64>,
}

impl Metric {
    /// Fails unless `c > 0` and every volume is strictly positive.
    pub fn new(c: f64, volumes: Vec<f64>) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(PsiError::Config(format!(
                "distance constant must be positive and finite, got {c}"
            )));
        }
        if let Some((i, w)) = volumes
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(PsiError::Geometry(format!(
                "element {i} has non-positive volume {w}"
            )));
        }
        Ok(Self { c, volumes })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    /// Squared local norm of one element state, not yet weighted by volume.
    #[inline]
    pub fn local_sq(&self, s: &ElementState) -> f64 {
        0.5 * (self.c * s.strain * s.strain + s.stress * s.stress / self.c)
    }

    /// Rescaled coordinates `(sqrt(w C / 2) eps, sqrt(w / (2 C)) sigma)` whose
    /// plain Euclidean norm equals the phase-space norm.
    pub fn rescaled(&self, z: &PhasePoint) -> Result<Vec<[f64; 2]>> {
        check_len("phase point", self.volumes.len(), z.len())?;
        Ok(z.states
            .iter()
            .zip(&self.volumes)
            .map(|(s, &w)| {
                [
                    (0.5 * w * self.c).sqrt() * s.strain,
                    (0.5 * w / self.c).sqrt() * s.stress,
                ]
            })
            .collect())
    }
}

/// Phase-space norm of `z`.
pub fn ps_norm(z: &PhasePoint, metric: &Metric) -> Result<f64> {
    check_len("phase point", metric.volumes.len(), z.len())?;
    let sum: f64 = z
        .states
        .iter()
        .zip(&metric.volumes)
        .map(|(s, &w)| w * metric.local_sq(s))
        .sum();
    Ok(sum.sqrt())
}

/// Phase-space distance `||z1 - z2||`.
pub fn ps_distance(z1: &PhasePoint, z2: &PhasePoint, metric: &Metric) -> Result<f64> {
    check_len("phase point", z1.len(), z2.len())?;
    check_len("phase point", metric.volumes.len(), z1.len())?;
    let sum: f64 = z1
        .states
        .iter()
        .zip(&z2.states)
        .zip(&metric.volumes)
        .map(|((a, b), &w)| {
            let d = ElementState::new(a.strain - b.strain, a.stress - b.stress);
            w * metric.local_sq(&d)
        })
        .sum();
    Ok(sum.sqrt())
}

/// Local (unweighted) distance between two element states.
#[inline]
pub fn local_distance(a: &ElementState, b: &ElementState, c: f64) -> f64 {
    let de = a.strain - b.strain;
    let ds = a.stress - b.stress;
    (0.5 * (c * de * de + ds * ds / c)).sqrt()
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(PsiError::LengthMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}
