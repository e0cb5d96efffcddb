//! Feed-forward MLP constitutive law loaded from an exported weight file.
//!
//! The network maps normalized strain in `[0, 1]` to normalized stress in
//! `[0, 1]`; the min/max constants in the file undo both normalizations.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{fd_step, MaterialLaw};
use crate::error::{PsiError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

/// One layer as stored on disk: `w` is row-major with one row per output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightLayer {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub act: Activation,
}

/// On-disk weight file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFile {
    pub layers: Vec<WeightLayer>,
    pub eps_min: f64,
    pub eps_max: f64,
    pub sig_min: f64,
    pub sig_max: f64,
    /// Reference `(strain, stress)` pairs computed by the exporter.
    #[serde(default)]
    pub reference: Vec<[f64; 2]>,
    /// Bound on `|m(0)|` in Pa; the fitted network does not pass through the origin exactly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_floor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(
        rows: usize,
        cols: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(PsiError::Weights("layer with zero width".into()));
        }
        if weights.len() != rows * cols || bias.len() != rows {
            return Err(PsiError::Weights(format!(
                "layer shape {rows}x{cols} does not match {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(PsiError::Weights("non-finite weight or bias".into()));
        }
        Ok(Self {
            rows,
            cols,
            weights,
            bias,
            activation,
        })
    }

    pub fn inputs(&self) -> usize {
        self.cols
    }

    pub fn outputs(&self) -> usize {
        self.rows
    }

    pub fn parameter_count(&self) -> usize {
        self.rows * self.cols + self.rows
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.cols)
                .zip(&self.bias)
                .map(|(row, b)| {
                    let z = row.iter().zip(input).fold(*b, |acc, (w, x)| acc + w * x);
                    match self.activation {
                        Activation::Relu => z.max(0.0),
                        Activation::Linear => z,
                    }
                }),
        );
    }
}

/// Summary produced by [`NeuralLaw::check`].
#[derive(Debug, Clone, PartialEq)]
pub struct NnCheckReport {
    pub layer_widths: Vec<usize>,
    pub parameter_count: usize,
    pub reference_count: usize,
    /// Largest reference mismatch in normalized stress units.
    pub max_reference_error: f64,
    pub worst_sample: Option<usize>,
    pub tolerance: f64,
}

impl NnCheckReport {
    pub fn passed(&self) -> bool {
        self.max_reference_error <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralLaw {
    layers: Vec<DenseLayer>,
    eps_min: f64,
    eps_max: f64,
    sig_min: f64,
    sig_max: f64,
    reference: Vec<[f64; 2]>,
    noise_floor: Option<f64>,
    zero_modulus: f64,
}

impl NeuralLaw {
    pub fn new(
        layers: Vec<DenseLayer>,
        eps_range: (f64, f64),
        sig_range: (f64, f64),
    ) -> Result<Self> {
        let (eps_min, eps_max) = eps_range;
        let (sig_min, sig_max) = sig_range;
        for (name, lo, hi) in [("eps", eps_min, eps_max), ("sig", sig_min, sig_max)] {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(PsiError::Weights(format!(
                    "normalization range {name}_min={lo}, {name}_max={hi} is empty or non-finite"
                )));
            }
        }
        let Some(first) = layers.first() else {
            return Err(PsiError::Weights("no layers".into()));
        };
        if first.inputs() != 1 {
            return Err(PsiError::Weights(format!(
                "first layer takes {} inputs, expected 1",
                first.inputs()
            )));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(PsiError::Weights(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    i,
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        let last = layers.last().expect("non-empty");
        if last.outputs() != 1 {
            return Err(PsiError::Weights(format!(
                "last layer produces {} outputs, expected 1",
                last.outputs()
            )));
        }
        let mut law = Self {
            layers,
            eps_min,
            eps_max,
            sig_min,
            sig_max,
            reference: Vec::new(),
            noise_floor: None,
            zero_modulus: 0.0,
        };
        let h = fd_step(0.0);
        law.zero_modulus = (law.eval(h) - law.eval(-h)) / (2.0 * h);
        Ok(law)
    }

    pub fn from_weight_file(file: WeightFile) -> Result<Self> {
        let mut layers = Vec::with_capacity(file.layers.len());
        for (i, layer) in file.layers.into_iter().enumerate() {
            let rows = layer.w.len();
            let cols = layer.w.first().map_or(0, Vec::len);
            if let Some(r) = layer.w.iter().position(|row| row.len() != cols) {
                return Err(PsiError::Weights(format!(
                    "layer {i}: row {r} has {} entries, expected {cols}",
                    layer.w[r].len()
                )));
            }
            let weights = layer.w.into_iter().flatten().collect();
            layers.push(
                DenseLayer::new(rows, cols, weights, layer.b, layer.act)
                    .map_err(|e| PsiError::Weights(format!("layer {i}: {e}")))?,
            );
        }
        let mut law = Self::new(
            layers,
            (file.eps_min, file.eps_max),
            (file.sig_min, file.sig_max),
        )?;
        law.reference = file.reference;
        law.noise_floor = file.noise_floor;
        Ok(law)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PsiError::Input {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let file: WeightFile = serde_json::from_str(&text).map_err(|e| PsiError::Input {
            path: path.display().to_string(),
            message: format!("line {}, column {}: {e}", e.line(), e.column()),
        })?;
        Self::from_weight_file(file).map_err(|e| PsiError::Input {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn to_weight_file(&self) -> WeightFile {
        WeightFile {
            layers: self
                .layers
                .iter()
                .map(|l| WeightLayer {
                    w: l.weights
                        .chunks_exact(l.cols)
                        .map(<[f64]>::to_vec)
                        .collect(),
                    b: l.bias.clone(),
                    act: l.activation,
                })
                .collect(),
            eps_min: self.eps_min,
            eps_max: self.eps_max,
            sig_min: self.sig_min,
            sig_max: self.sig_max,
            reference: self.reference.clone(),
            noise_floor: self.noise_floor,
        }
    }

    pub fn set_zero_strain_modulus(&mut self, y0: f64) -> Result<()> {
        if !(y0.is_finite() && y0 > 0.0) {
            return Err(PsiError::Material(format!(
                "neural law: Y0 must be positive, got {y0}"
            )));
        }
        self.zero_modulus = y0;
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::parameter_count).sum()
    }

    /// Input width followed by every layer's output width.
    pub fn layer_widths(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs())
            .chain(self.layers.iter().map(DenseLayer::outputs))
            .collect()
    }

    pub fn strain_range(&self) -> (f64, f64) {
        (self.eps_min, self.eps_max)
    }

    pub fn stress_range(&self) -> (f64, f64) {
        (self.sig_min, self.sig_max)
    }

    pub fn reference(&self) -> &[[f64; 2]] {
        &self.reference
    }

    pub fn noise_floor(&self) -> Option<f64> {
        self.noise_floor
    }

    /// Runs the network on an already-normalized input.
    pub fn forward_normalized(&self, x: f64) -> f64 {
        let mut a = vec![x];
        let mut b = Vec::with_capacity(
            self.layers
                .iter()
                .map(DenseLayer::outputs)
                .max()
                .unwrap_or(1),
        );
        for layer in &self.layers {
            layer.apply(&a, &mut b);
            std::mem::swap(&mut a, &mut b);
        }
        a[0]
    }

    /// Normalizes strain, runs the network and maps the output back to Pa.
    pub fn forward(&self, strain: f64) -> f64 {
        let x = (strain - self.eps_min) / (self.eps_max - self.eps_min);
        let y = self.forward_normalized(x);
        self.sig_min + y * (self.sig_max - self.sig_min)
    }

    /// Compares the network against the embedded reference outputs.
    pub fn check(&self, tolerance: f64) -> NnCheckReport {
        let span = self.sig_max - self.sig_min;
        let mut worst = None;
        let mut max_err = 0.0f64;
        for (i, [e, s]) in self.reference.iter().enumerate() {
            let err = ((self.forward(*e) - s) / span).abs();
            if err > max_err || err.is_nan() {
                max_err = if err.is_nan() { f64::INFINITY } else { err };
                worst = Some(i);
            }
        }
        NnCheckReport {
            layer_widths: self.layer_widths(),
            parameter_count: self.parameter_count(),
            reference_count: self.reference.len(),
            max_reference_error: max_err,
            worst_sample: worst,
            tolerance,
        }
    }
}

impl MaterialLaw for NeuralLaw {
    fn eval(&self, strain: f64) -> f64 {
        self.forward(strain)
    }

    /// Central difference of the forward pass; the network is piecewise linear.
    fn tangent(&self, strain: f64) -> f64 {
        let h = fd_step(strain);
        (self.forward(strain + h) - self.forward(strain - h)) / (2.0 * h)
    }

    fn curvature(&self, _strain: f64) -> f64 {
        0.0
    }

    fn zero_strain_modulus(&self) -> f64 {
        self.zero_modulus
    }

    fn is_smooth(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_law() -> NeuralLaw {
        let layer = DenseLayer::new(1, 1, vec![1.0], vec![0.0], Activation::Linear).unwrap();
        NeuralLaw::new(vec![layer], (0.0, 1.0), (0.0, 1.0)).unwrap()
    }

    #[test]
    fn identity_network_returns_input() {
        let law = identity_law();
        for &e in &[0.0, 0.25, 0.7, 1.0] {
            assert_eq!(law.eval(e), e);
        }
        assert!((law.tangent(0.3) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn paper_architecture_parameter_count() {
        let widths = [1usize, 112, 112, 112, 1];
        let layers: Vec<_> = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 2 == widths.len() {
                    Activation::Linear
                } else {
                    Activation::Relu
                };
                DenseLayer::new(w[1], w[0], vec![0.01; w[0] * w[1]], vec![0.0; w[1]], act).unwrap()
            })
            .collect();
        let law = NeuralLaw::new(layers, (-0.0054, 0.0054), (-1e8, 1e8)).unwrap();
        // 224 + 12656 + 12656 + 113
        assert_eq!(law.parameter_count(), 25649);
        assert_eq!(law.layer_widths(), widths);
    }

    #[test]
    fn relu_network_evaluates_by_hand() {
        // y = 2 * relu(x - 0.5) + 1 * relu(-x + 0.25) - 0.1
        let l1 =
            DenseLayer::new(2, 1, vec![1.0, -1.0], vec![-0.5, 0.25], Activation::Relu).unwrap();
        let l2 = DenseLayer::new(1, 2, vec![2.0, 1.0], vec![-0.1], Activation::Linear).unwrap();
        let law = NeuralLaw::new(vec![l1, l2], (0.0, 1.0), (0.0, 10.0)).unwrap();
        let expect = |x: f64| 10.0 * (2.0 * (x - 0.5f64).max(0.0) + (0.25 - x).max(0.0) - 0.1);
        for &x in &[0.0, 0.1, 0.3, 0.6, 0.9] {
            assert!((law.eval(x) - expect(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn broken_chains_are_rejected() {
        let l1 = DenseLayer::new(3, 1, vec![1.0; 3], vec![0.0; 3], Activation::Relu).unwrap();
        let l2 = DenseLayer::new(1, 2, vec![1.0; 2], vec![0.0], Activation::Linear).unwrap();
        assert!(NeuralLaw::new(vec![l1, l2], (0.0, 1.0), (0.0, 1.0)).is_err());
        assert!(DenseLayer::new(2, 2, vec![1.0; 3], vec![0.0; 2], Activation::Relu).is_err());
        let l = DenseLayer::new(1, 1, vec![1.0], vec![0.0], Activation::Linear).unwrap();
        assert!(NeuralLaw::new(vec![l], (1.0, 1.0), (0.0, 1.0)).is_err());
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let file = WeightFile {
            layers: vec![WeightLayer {
                w: vec![vec![1.0], vec![1.0, 2.0]],
                b: vec![0.0, 0.0],
                act: Activation::Relu,
            }],
            eps_min: 0.0,
            eps_max: 1.0,
            sig_min: 0.0,
            sig_max: 1.0,
            reference: vec![],
            noise_floor: None,
        };
        let err = NeuralLaw::from_weight_file(file).unwrap_err().to_string();
        assert!(err.contains("row 1"), "{err}");
    }

    #[test]
    fn check_reports_worst_reference_sample() {
        let mut law = identity_law();
        law.reference = vec![[0.1, 0.1], [0.5, 0.5 + 1e-3], [0.9, 0.9]];
        let report = law.check(1e-6);
        assert!(!report.passed());
        assert_eq!(report.worst_sample, Some(1));
        law.reference[1][1] = 0.5;
        assert!(law.check(1e-6).passed());
    }

    #[test]
    fn weight_file_round_trip() {
        let mut law = identity_law();
        law.reference = vec![[0.2, 0.2]];
        let json = serde_json::to_string(&law.to_weight_file()).unwrap();
        let back = NeuralLaw::from_weight_file(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, law);
    }
}
