//! Single-cell LSTM memory blocks with forget gates and no peepholes.
//!
//! For input `x_t` and previous hidden output `h_{t-1}` the block computes
//! `z = W [x_t; h_{t-1}; 1]` and
//!
//! ```text
//! i = sigmoid(z_i)   f = sigmoid(z_f)   o = sigmoid(z_o)   g = tanh(z_g)
//! c_t = f * c_{t-1} + i * g
//! h_t = o * tanh(c_t)
//! ```
//!
//! with the rows of `W` grouped as input gate, forget gate, output gate,
//! cell input. Cell and hidden state start at zero for every sequence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sigmoid, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    input_dim: usize,
    hidden: usize,
    /// `4H x (D + H + 1)`.
    pub weights: Matrix,
}

impl LstmLayerParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmLayerParams {
            input_dim,
            hidden,
            weights: Matrix::zeros(4 * hidden, input_dim + hidden + 1),
        }
    }

    pub fn from_weights(input_dim: usize, hidden: usize, weights: Matrix) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::invalid("LSTM layer needs at least one block"));
        }
        let expected = (4 * hidden, input_dim + hidden + 1);
        if weights.shape() != expected {
            return Err(Error::dims(format!("{expected:?}"), format!("{:?}", weights.shape())));
        }
        Ok(LstmLayerParams {
            input_dim,
            hidden,
            weights,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn fan_in(&self) -> usize {
        self.input_dim + self.hidden + 1
    }
}

/// Activations recorded by a forward pass, in processing order (already
/// time-reversed for the backward direction).
#[derive(Debug, Clone)]
pub struct LstmTrace {
    direction: Direction,
    /// Per step: `[i, f, o, g]` blocks of H values each.
    gates: Matrix,
    cells: Matrix,
    hidden: Matrix,
    inputs: Matrix,
}

impl LstmTrace {
    /// Hidden outputs in input order.
    pub fn outputs(&self) -> Matrix {
        match self.direction {
            Direction::Forward => self.hidden.clone(),
            Direction::Backward => self.hidden.reversed_rows(),
        }
    }
}

fn check_input(params: &LstmLayerParams, inputs: &Matrix) -> Result<()> {
    if inputs.cols() != params.input_dim {
        return Err(Error::dims(
            format!("{} input columns", params.input_dim),
            format!("{} columns", inputs.cols()),
        ));
    }
    Ok(())
}

/// Runs the layer over `inputs` (T x D). The backward direction reads the
/// sequence from the end and returns outputs re-reversed to input order.
pub fn lstm_forward(params: &LstmLayerParams, inputs: &Matrix, direction: Direction) -> Result<Matrix> {
    Ok(lstm_trace(params, inputs, direction)?.outputs())
}

pub fn lstm_trace(params: &LstmLayerParams, inputs: &Matrix, direction: Direction) -> Result<LstmTrace> {
    check_input(params, inputs)?;
    let inputs = match direction {
        Direction::Forward => inputs.clone(),
        Direction::Backward => inputs.reversed_rows(),
    };
    let (steps, h, d) = (inputs.rows(), params.hidden, params.input_dim);
    let mut gates = Matrix::zeros(steps, 4 * h);
    let mut cells = Matrix::zeros(steps, h);
    let mut hidden = Matrix::zeros(steps, h);
    let mut z = vec![0.0; params.fan_in()];
    let mut pre = vec![0.0; 4 * h];
    let mut c_prev = vec![0.0; h];
    let mut h_prev = vec![0.0; h];

    for t in 0..steps {
        z[..d].copy_from_slice(inputs.row(t));
        z[d..d + h].copy_from_slice(&h_prev);
        z[d + h] = 1.0;
        for (r, slot) in pre.iter_mut().enumerate() {
            *slot = dot(params.weights.row(r), &z);
        }
        let g_row = gates.row_mut(t);
        for j in 0..h {
            g_row[j] = sigmoid(pre[j]);
            g_row[h + j] = sigmoid(pre[h + j]);
            g_row[2 * h + j] = sigmoid(pre[2 * h + j]);
            g_row[3 * h + j] = pre[3 * h + j].tanh();
        }
        for j in 0..h {
            let (i, f, o, g) = (g_row[j], g_row[h + j], g_row[2 * h + j], g_row[3 * h + j]);
            let c = f * c_prev[j] + i * g;
            c_prev[j] = c;
            h_prev[j] = o * c.tanh();
        }
        cells.row_mut(t).copy_from_slice(&c_prev);
        hidden.row_mut(t).copy_from_slice(&h_prev);
    }
    Ok(LstmTrace {
        direction,
        gates,
        cells,
        hidden,
        inputs,
    })
}

/// Gradients of one layer from a recorded forward pass.
#[derive(Debug, Clone)]
pub struct LstmGradients {
    pub weights: Matrix,
    /// Loss gradient w.r.t. the layer inputs, in input order.
    pub inputs: Matrix,
}

/// Backpropagation through time. `output_grads` holds the loss gradient
/// w.r.t. each hidden output, in input order.
pub fn lstm_backward(params: &LstmLayerParams, trace: &LstmTrace, output_grads: &Matrix) -> Result<LstmGradients> {
    let (steps, h, d) = (trace.hidden.rows(), params.hidden, params.input_dim);
    if output_grads.shape() != (steps, h) {
        return Err(Error::dims(
            format!("{:?}", (steps, h)),
            format!("{:?}", output_grads.shape()),
        ));
    }
    let dh_ext = match trace.direction {
        Direction::Forward => output_grads.clone(),
        Direction::Backward => output_grads.reversed_rows(),
    };
    let mut dw = Matrix::zeros(4 * h, params.fan_in());
    let mut dx = Matrix::zeros(steps, d);
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    let mut z = vec![0.0; params.fan_in()];

    for t in (0..steps).rev() {
        let gates = trace.gates.row(t);
        let cells = trace.cells.row(t);
        for j in 0..h {
            let (i, f, o, g) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            let c_prev = if t > 0 { trace.cells.get(t - 1, j) } else { 0.0 };
            let tc = cells[j].tanh();
            let dh = dh_ext.get(t, j) + dh_next[j];
            let d_o = dh * tc;
            let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
            dz[j] = dc * g * i * (1.0 - i);
            dz[h + j] = dc * c_prev * f * (1.0 - f);
            dz[2 * h + j] = d_o * o * (1.0 - o);
            dz[3 * h + j] = dc * i * (1.0 - g * g);
            dc_next[j] = dc * f;
        }

        z[..d].copy_from_slice(trace.inputs.row(t));
        if t > 0 {
            z[d..d + h].copy_from_slice(trace.hidden.row(t - 1));
        } else {
            z[d..d + h].iter_mut().for_each(|v| *v = 0.0);
        }
        z[d + h] = 1.0;

        dh_next.iter_mut().for_each(|v| *v = 0.0);
        let dx_row = dx.row_mut(t);
        for (r, &g) in dz.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let w_row = params.weights.row(r);
            for (acc, zi) in dw.row_mut(r).iter_mut().zip(&z) {
                *acc += g * zi;
            }
            for (acc, w) in dx_row.iter_mut().zip(&w_row[..d]) {
                *acc += g * w;
            }
            for (acc, w) in dh_next.iter_mut().zip(&w_row[d..d + h]) {
                *acc += g * w;
            }
        }
    }

    let inputs = match trace.direction {
        Direction::Forward => dx,
        Direction::Backward => dx.reversed_rows(),
    };
    Ok(LstmGradients { weights: dw, inputs })
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
