//! Recurrent multilayer perceptron baseline.
//!
//! Each layer feeds back its own previous output alongside the current
//! output of the layer below:
//!
//! ```text
//! x_1(t) = phi_1(W_1 [x_1(t-1); u(t);     1])
//! x_2(t) = phi_2(W_2 [x_2(t-1); x_1(t);   1])
//! x_o(t) = phi_o(W_o [x_o(t-1); x_2(t);   1])
//! ```
//!
//! with all states zero before the first step. Any number of layers may be
//! stacked; the three-layer form above is the usual configuration.

use serde::{Deserialize, Serialize};

use super::lstm::dot;
use crate::error::{Error, Result};
use crate::linalg::{sigmoid, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Logistic,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Logistic => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Logistic => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmlpLayerParams {
    /// `out x (out + in + 1)`: recurrent block, input block, bias.
    pub weights: Matrix,
    pub activation: Activation,
}

impl RmlpLayerParams {
    pub fn zeros(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        RmlpLayerParams {
            weights: Matrix::zeros(output_dim, output_dim + input_dim + 1),
            activation,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols().saturating_sub(self.weights.rows() + 1)
    }
}

fn check_stack(layers: &[RmlpLayerParams], inputs: &Matrix) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::invalid("RMLP stack is empty"));
    }
    let mut fan = inputs.cols();
    for (k, layer) in layers.iter().enumerate() {
        let out = layer.output_dim();
        if layer.weights.cols() != out + fan + 1 {
            return Err(Error::dims(
                format!("layer {k} with {} columns", out + fan + 1),
                format!("{} columns", layer.weights.cols()),
            ));
        }
        fan = out;
    }
    Ok(())
}

/// Per-layer state sequences, `states[k]` is T x out_k.
fn run(layers: &[RmlpLayerParams], inputs: &Matrix) -> Vec<Matrix> {
    let steps = inputs.rows();
    let mut states: Vec<Matrix> = layers.iter().map(|l| Matrix::zeros(steps, l.output_dim())).collect();
    let mut z = Vec::new();
    for t in 0..steps {
        for (k, layer) in layers.iter().enumerate() {
            let out = layer.output_dim();
            z.clear();
            if t > 0 {
                z.extend_from_slice(states[k].row(t - 1));
            } else {
                z.resize(out, 0.0);
            }
            if k == 0 {
                z.extend_from_slice(inputs.row(t));
            } else {
                z.extend_from_slice(states[k - 1].row(t));
            }
            z.push(1.0);
            let row: Vec<f64> = (0..out)
                .map(|r| layer.activation.apply(dot(layer.weights.row(r), &z)))
                .collect();
            states[k].row_mut(t).copy_from_slice(&row);
        }
    }
    states
}

/// Output-layer states for every step, T x out_last.
pub fn rmlp_forward(layers: &[RmlpLayerParams], inputs: &Matrix) -> Result<Matrix> {
    check_stack(layers, inputs)?;
    Ok(run(layers, inputs).pop().expect("non-empty stack"))
}

/// Weight gradients of the loss whose partials w.r.t. the top-layer outputs
/// are `output_grads`.
pub fn rmlp_backward(layers: &[RmlpLayerParams], inputs: &Matrix, output_grads: &Matrix) -> Result<Vec<Matrix>> {
    check_stack(layers, inputs)?;
    let states = run(layers, inputs);
    let top = layers.len() - 1;
    if output_grads.shape() != states[top].shape() {
        return Err(Error::dims(
            format!("{:?}", states[top].shape()),
            format!("{:?}", output_grads.shape()),
        ));
    }
    let steps = inputs.rows();
    let mut grads: Vec<Matrix> = layers
        .iter()
        .map(|l| Matrix::zeros(l.weights.rows(), l.weights.cols()))
        .collect();
    // Gradient flowing into x_k(t-1) through the recurrent weights.
    let mut carry: Vec<Vec<f64>> = layers.iter().map(|l| vec![0.0; l.output_dim()]).collect();
    let mut z = Vec::new();

    for t in (0..steps).rev() {
        let mut from_above: Vec<f64> = output_grads.row(t).to_vec();
        for k in (0..=top).rev() {
            let layer = &layers[k];
            let out = layer.output_dim();
            let ds: Vec<f64> = (0..out).map(|j| from_above[j] + carry[k][j]).collect();
            let da: Vec<f64> = ds
                .iter()
                .zip(states[k].row(t))
                .map(|(d, &y)| d * layer.activation.derivative_from_output(y))
                .collect();

            z.clear();
            if t > 0 {
                z.extend_from_slice(states[k].row(t - 1));
            } else {
                z.resize(out, 0.0);
            }
            if k == 0 {
                z.extend_from_slice(inputs.row(t));
            } else {
                z.extend_from_slice(states[k - 1].row(t));
            }
            z.push(1.0);

            let fan = z.len() - out - 1;
            let mut next_carry = vec![0.0; out];
            let mut below = vec![0.0; fan];
            for (r, &g) in da.iter().enumerate() {
                for (acc, zi) in grads[k].row_mut(r).iter_mut().zip(&z) {
                    *acc += g * zi;
                }
                let w = layer.weights.row(r);
                for (acc, wi) in next_carry.iter_mut().zip(&w[..out]) {
                    *acc += g * wi;
                }
                for (acc, wi) in below.iter_mut().zip(&w[out..out + fan]) {
                    *acc += g * wi;
                }
            }
            carry[k] = next_carry;
            from_above = below;
        }
    }
    Ok(grads)
}
