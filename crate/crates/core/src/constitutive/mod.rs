//! Scalar constitutive laws `sigma = m(eps)`.
//!
//! All laws are immutable after construction and can be evaluated from any
//! number of threads at once.

mod neural;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{PsiError, Result};

pub use neural::{Activation, DenseLayer, NeuralLaw, NnCheckReport, WeightFile, WeightLayer};

/// Uniform interface over the shipped constitutive laws.
pub trait MaterialLaw: Send + Sync {
    /// Stress for a given strain.
    fn eval(&self, strain: f64) -> f64;

    /// `d sigma / d eps` at `strain`.
    fn tangent(&self, strain: f64) -> f64;

    /// `d^2 sigma / d eps^2`, used by Newton on the Euler-Lagrange equation.
    fn curvature(&self, strain: f64) -> f64 {
        let h = 1e-5 * strain.abs().max(1e-6);
        (self.tangent(strain + h) - self.tangent(strain - h)) / (2.0 * h)
    }

    /// Tangent modulus at zero strain.
    fn zero_strain_modulus(&self) -> f64;

    /// Whether the Euler-Lagrange root finders can rely on `tangent`.
    fn is_smooth(&self) -> bool {
        true
    }
}

/// Central finite-difference step used for numerical tangents.
#[inline]
pub fn fd_step(strain: f64) -> f64 {
    1e-7 * strain.abs().max(1.0)
}

/// Power law `Y0 [(|eps| + c)^p - c^p] sign(eps)` with `c = p^(1/(1-p))`.
///
/// The offset `c` makes the tangent at the origin equal `Y0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLaw {
    y0: f64,
    p: f64,
    c: f64,
    c_pow_p: f64,
}

impl PowerLaw {
    pub fn new(y0: f64, p: f64) -> Result<Self> {
        if !(y0.is_finite() && y0 > 0.0) {
            return Err(PsiError::Material(format!(
                "power law: Y0 must be positive, got {y0}"
            )));
        }
        if !(p > 0.0 && p < 1.0) {
            return Err(PsiError::Material(format!(
                "power law: p must lie in (0, 1), got {p}"
            )));
        }
        let c = p.powf(1.0 / (1.0 - p));
        Ok(Self {
            y0,
            p,
            c,
            c_pow_p: c.powf(p),
        })
    }

    pub fn y0(&self) -> f64 {
        self.y0
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn c(&self) -> f64 {
        self.c
    }
}

impl MaterialLaw for PowerLaw {
    fn eval(&self, strain: f64) -> f64 {
        // (|e| + c)^p - c^p = c^p * expm1(p * ln(1 + |e|/c)); avoids cancellation for small p
        let a = strain.abs();
        let mag = self.y0 * self.c_pow_p * (self.p * (a / self.c).ln_1p()).exp_m1();
        mag.copysign(strain)
    }

    fn tangent(&self, strain: f64) -> f64 {
        let a = strain.abs();
        self.y0 * self.p * (a + self.c).powf(self.p - 1.0)
    }

    fn curvature(&self, strain: f64) -> f64 {
        if strain == 0.0 {
            return 0.0;
        }
        let a = strain.abs();
        let mag = self.y0 * self.p * (1.0 - self.p) * (a + self.c).powf(self.p - 2.0);
        -mag * strain.signum()
    }

    fn zero_strain_modulus(&self) -> f64 {
        self.tangent(0.0)
    }
}

/// Linear elasticity `sigma = Y eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearLaw {
    y: f64,
}

impl LinearLaw {
    pub fn new(y: f64) -> Result<Self> {
        if !(y.is_finite() && y > 0.0) {
            return Err(PsiError::Material(format!(
                "linear law: Y must be positive, got {y}"
            )));
        }
        Ok(Self { y })
    }

    pub fn y(&self) -> f64 {
        self.y
    }
}

impl MaterialLaw for LinearLaw {
    fn eval(&self, strain: f64) -> f64 {
        self.y * strain
    }

    fn tangent(&self, _strain: f64) -> f64 {
        self.y
    }

    fn curvature(&self, _strain: f64) -> f64 {
        0.0
    }

    fn zero_strain_modulus(&self) -> f64 {
        self.y
    }
}

/// Quadratically perturbed linear law `sigma = Y (eps - k eps^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticPerturbedLaw {
    y: f64,
    k: f64,
}

impl QuadraticPerturbedLaw {
    pub fn new(y: f64, k: f64) -> Result<Self> {
        if !(y.is_finite() && y > 0.0) {
            return Err(PsiError::Material(format!(
                "quadratic law: Y must be positive, got {y}"
            )));
        }
        if !(k.is_finite() && k >= 0.0) {
            return Err(PsiError::Material(format!(
                "quadratic law: k must be >= 0, got {k}"
            )));
        }
        Ok(Self { y, k })
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn k(&self) -> f64 {
        self.k
    }
}

impl MaterialLaw for QuadraticPerturbedLaw {
    fn eval(&self, strain: f64) -> f64 {
        self.y * (strain - self.k * strain * strain)
    }

    fn tangent(&self, strain: f64) -> f64 {
        self.y * (1.0 - 2.0 * self.k * strain)
    }

    fn curvature(&self, _strain: f64) -> f64 {
        -2.0 * self.y * self.k
    }

    fn zero_strain_modulus(&self) -> f64 {
        self.y
    }
}

/// Material descriptor as it appears in problem files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum MaterialSpec {
    Power {
        #[serde(rename = "Y0")]
        y0: f64,
        p: f64,
    },
    Linear {
        #[serde(rename = "Y0", alias = "Y")]
        y0: f64,
    },
    Quadratic {
        #[serde(rename = "Y0", alias = "Y")]
        y0: f64,
        k: f64,
    },
    Neural {
        weights_path: String,
        /// Overrides the network's numerical zero-strain slope when set.
        #[serde(rename = "Y0", default, skip_serializing_if = "Option::is_none")]
        y0: Option<f64>,
    },
}

/// A constructed law plus the descriptor it came from.
#[derive(Debug, Clone)]
pub enum Material {
    Power(PowerLaw),
    Linear(LinearLaw),
    Quadratic(QuadraticPerturbedLaw),
    Neural {
        law: Arc<NeuralLaw>,
        weights_path: String,
        y0: Option<f64>,
    },
}

impl Material {
    /// Builds the law; relative weight paths resolve against `base_dir`.
    pub fn from_spec(spec: &MaterialSpec, base_dir: Option<&Path>) -> Result<Self> {
        Ok(match spec {
            MaterialSpec::Power { y0, p } => Material::Power(PowerLaw::new(*y0, *p)?),
            MaterialSpec::Linear { y0 } => Material::Linear(LinearLaw::new(*y0)?),
            MaterialSpec::Quadratic { y0, k } => {
                Material::Quadratic(QuadraticPerturbedLaw::new(*y0, *k)?)
            }
            MaterialSpec::Neural { weights_path, y0 } => {
                let path = Path::new(weights_path);
                let resolved = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.to_path_buf(),
                };
                let mut law = NeuralLaw::load(&resolved)?;
                if let Some(y0) = y0 {
                    law.set_zero_strain_modulus(*y0)?;
                }
                Material::Neural {
                    law: Arc::new(law),
                    weights_path: weights_path.clone(),
                    y0: *y0,
                }
            }
        })
    }

    pub fn spec(&self) -> MaterialSpec {
        match self {
            Material::Power(l) => MaterialSpec::Power {
                y0: l.y0(),
                p: l.p(),
            },
            Material::Linear(l) => MaterialSpec::Linear { y0: l.y() },
            Material::Quadratic(l) => MaterialSpec::Quadratic {
                y0: l.y(),
                k: l.k(),
            },
            Material::Neural {
                weights_path, y0, ..
            } => MaterialSpec::Neural {
                weights_path: weights_path.clone(),
                y0: *y0,
            },
        }
    }

    pub fn law(&self) -> &dyn MaterialLaw {
        match self {
            Material::Power(l) => l,
            Material::Linear(l) => l,
            Material::Quadratic(l) => l,
            Material::Neural { law, .. } => law.as_ref(),
        }
    }
}

impl MaterialLaw for Material {
    fn eval(&self, strain: f64) -> f64 {
        self.law().eval(strain)
    }

    fn tangent(&self, strain: f64) -> f64 {
        self.law().tangent(strain)
    }

    fn curvature(&self, strain: f64) -> f64 {
        self.law().curvature(strain)
    }

    fn zero_strain_modulus(&self) -> f64 {
        self.law().zero_strain_modulus()
    }

    fn is_smooth(&self) -> bool {
        self.law().is_smooth()
    }
}

impl From<PowerLaw> for Material {
    fn from(l: PowerLaw) -> Self {
        Material::Power(l)
    }
}

impl From<LinearLaw> for Material {
    fn from(l: LinearLaw) -> Self {
        Material::Linear(l)
    }
}

impl From<QuadraticPerturbedLaw> for Material {
    fn from(l: QuadraticPerturbedLaw) -> Self {
        Material::Quadratic(l)
    }
}
