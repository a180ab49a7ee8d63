//! Numerical substrate: dense algebra, activations, distances, the LSTM cell,
//! a seeded generator and finite-difference gradient checking.

mod gradcheck;
mod linalg;
mod lstm;
mod rng;

pub use gradcheck::{grad_check, relative_error};
pub use linalg::{add_assign, axpy, dot, l2_norm, Matrix, Vector};
pub use lstm::{
    lstm_cell_backward, lstm_cell_forward, Gate, GateWeights, LstmCache, LstmWeights, StepGrads,
    GATES,
};
pub use rng::SplitMix64;

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("{op}: dimension mismatch (expected {expected}, found {found})")]
    Shape {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{op}: empty input")]
    Empty { op: &'static str },
    #[error("non-finite loss {value} at parameter {index}")]
    NonFiniteLoss { index: usize, value: f64 },
    #[error("backward cache does not match the weights it is applied to")]
    StaleCache,
}

/// Dissimilarity used for translation energies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "UPPERCASE"))]
pub enum Norm {
    L1,
    #[default]
    L2,
}

/// A parameter tensor with its gradient and Adadelta accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    /// Running average of squared gradients, E[g²].
    pub acc_grad_sq: Vec<f64>,
    /// Running average of squared updates, E[Δx²].
    pub acc_delta_sq: Vec<f64>,
}

impl Param {
    pub fn new(value: Vec<f64>) -> Self {
        let n = value.len();
        Param {
            value,
            grad: vec![0.0; n],
            acc_grad_sq: vec![0.0; n],
            acc_delta_sq: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

/// Softmax with max-subtraction.
pub fn softmax(scores: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if scores.is_empty() {
        return Err(NumericsError::Empty { op: "softmax" });
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|s| libm::exp(s - max)).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

/// L1 or L2 distance between equal-length vectors.
pub fn distance(x: &[f64], y: &[f64], norm: Norm) -> Result<f64, NumericsError> {
    if x.len() != y.len() {
        return Err(NumericsError::Shape {
            op: "distance",
            expected: x.len(),
            found: y.len(),
        });
    }
    let diffs = x.iter().zip(y).map(|(a, b)| a - b);
    Ok(match norm {
        Norm::L1 => diffs.map(libm::fabs).sum(),
        Norm::L2 => libm::sqrt(diffs.map(|d| d * d).sum()),
    })
}

/// Gradient of `distance(x, y)` with respect to `x`; the gradient with respect
/// to `y` is its negation. At `x == y` the L2 gradient is the zero vector, and
/// L1 uses `sign(0) = 0` per coordinate.
pub fn distance_grad(x: &[f64], y: &[f64], norm: Norm) -> Result<Vec<f64>, NumericsError> {
    let d = distance(x, y, norm)?;
    let grad = match norm {
        Norm::L1 => x
            .iter()
            .zip(y)
            .map(|(a, b)| {
                let r = a - b;
                if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect(),
        Norm::L2 if d == 0.0 => vec![0.0; x.len()],
        Norm::L2 => x.iter().zip(y).map(|(a, b)| (a - b) / d).collect(),
    };
    Ok(grad)
}
