//! Recurrent networks: the bidirectional LSTM recognizer and the RMLP
//! baseline.

pub mod io;
pub mod lstm;
pub mod rmlp;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::alphabet::Alphabet;
use crate::error::{Error, Result};
use crate::features::{FeatureSequence, Standardizer};
use crate::linalg::Matrix;
pub use lstm::{lstm_backward, lstm_forward, lstm_trace, Direction, LstmLayerParams, LstmTrace};
pub use rmlp::{rmlp_backward, rmlp_forward, Activation, RmlpLayerParams};

/// Shape of a [`BlstmModel`], echoed into the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_dim: usize,
    /// Memory blocks per direction.
    pub hidden: usize,
    #[serde(default)]
    pub feature_names: Vec<String>,
}

impl NetworkConfig {
    pub fn new(input_dim: usize, hidden: usize) -> Self {
        NetworkConfig {
            input_dim,
            hidden,
            feature_names: Vec::new(),
        }
    }
}

/// Forward and backward LSTM layers feeding a softmax-free output layer of
/// one unit per symbol plus the blank.
#[derive(Debug, Clone, PartialEq)]
pub struct BlstmModel {
    pub config: NetworkConfig,
    pub alphabet: Alphabet,
    pub standardizer: Standardizer,
    pub forward: LstmLayerParams,
    pub backward: LstmLayerParams,
    /// `(N + 1) x (2H + 1)`; columns are forward hidden, backward hidden, bias.
    pub output_weights: Matrix,
}

/// Draws every weight i.i.d. uniform on `[-init_range, init_range]`.
pub fn init_weights(config: &NetworkConfig, alphabet: &Alphabet, init_range: f64, seed: u64) -> Result<BlstmModel> {
    if config.hidden == 0 || config.input_dim == 0 {
        return Err(Error::invalid("network needs positive input and hidden sizes"));
    }
    if !(init_range > 0.0 && init_range.is_finite()) {
        return Err(Error::invalid("init_range must be positive"));
    }
    let (d, h) = (config.input_dim, config.hidden);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-init_range, init_range).map_err(|e| Error::invalid(e.to_string()))?;
    let mut draw = |rows: usize, cols: usize| {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| dist.sample(&mut rng)).collect())
    };
    let forward = LstmLayerParams::from_weights(d, h, draw(4 * h, d + h + 1))?;
    let backward = LstmLayerParams::from_weights(d, h, draw(4 * h, d + h + 1))?;
    let output_weights = draw(alphabet.output_size(), 2 * h + 1);
    Ok(BlstmModel {
        config: config.clone(),
        alphabet: alphabet.clone(),
        standardizer: Standardizer::identity(d),
        forward,
        backward,
        output_weights,
    })
}

/// Activations of one bidirectional pass.
#[derive(Debug, Clone)]
pub struct BlstmTrace {
    forward: LstmTrace,
    backward: LstmTrace,
    /// T x 2H, forward then backward hidden outputs per frame.
    pub hidden: Matrix,
    /// T x (N + 1) unnormalized outputs.
    pub outputs: Matrix,
}

/// Gradients with the same shapes as the model's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BlstmGradients {
    pub forward: Matrix,
    pub backward: Matrix,
    pub output: Matrix,
}

impl BlstmGradients {
    pub fn zeros_like(model: &BlstmModel) -> Self {
        let shape = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        BlstmGradients {
            forward: shape(&model.forward.weights),
            backward: shape(&model.backward.weights),
            output: shape(&model.output_weights),
        }
    }

    pub fn slices(&self) -> [&[f64]; 3] {
        [
            self.forward.as_slice(),
            self.backward.as_slice(),
            self.output.as_slice(),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 3] {
        [
            self.forward.as_mut_slice(),
            self.backward.as_mut_slice(),
            self.output.as_mut_slice(),
        ]
    }

    /// All coordinates in parameter order.
    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn is_finite(&self) -> bool {
        self.forward.is_finite() && self.backward.is_finite() && self.output.is_finite()
    }
}

impl BlstmModel {
    pub fn output_size(&self) -> usize {
        self.output_weights.rows()
    }

    pub fn parameter_count(&self) -> usize {
        self.forward.weights.as_slice().len()
            + self.backward.weights.as_slice().len()
            + self.output_weights.as_slice().len()
    }

    /// Weight slices in the order forward, backward, output.
    pub fn parameters(&self) -> [&[f64]; 3] {
        [
            self.forward.weights.as_slice(),
            self.backward.weights.as_slice(),
            self.output_weights.as_slice(),
        ]
    }

    pub fn parameters_mut(&mut self) -> [&mut [f64]; 3] {
        [
            self.forward.weights.as_mut_slice(),
            self.backward.weights.as_mut_slice(),
            self.output_weights.as_mut_slice(),
        ]
    }

    /// Applies the stored training-set standardizer.
    pub fn standardize(&self, features: &FeatureSequence) -> Result<FeatureSequence> {
        self.standardizer.apply(features)
    }

    fn check(&self) -> Result<()> {
        let h = self.config.hidden;
        if self.output_weights.shape() != (self.alphabet.output_size(), 2 * h + 1)
            || self.forward.hidden() != h
            || self.backward.hidden() != h
        {
            return Err(Error::dims(
                format!("output layer {:?}", (self.alphabet.output_size(), 2 * h + 1)),
                format!("{:?}", self.output_weights.shape()),
            ));
        }
        Ok(())
    }

    pub fn trace(&self, inputs: &Matrix) -> Result<BlstmTrace> {
        self.check()?;
        let forward = lstm_trace(&self.forward, inputs, Direction::Forward)?;
        let backward = lstm_trace(&self.backward, inputs, Direction::Backward)?;
        let (steps, h) = (inputs.rows(), self.config.hidden);
        let fwd = forward.outputs();
        let bwd = backward.outputs();
        let mut hidden = Matrix::zeros(steps, 2 * h);
        for t in 0..steps {
            let row = hidden.row_mut(t);
            row[..h].copy_from_slice(fwd.row(t));
            row[h..].copy_from_slice(bwd.row(t));
        }
        let k = self.output_size();
        let mut outputs = Matrix::zeros(steps, k);
        for t in 0..steps {
            let hrow = hidden.row(t);
            for (r, slot) in outputs.row_mut(t).iter_mut().enumerate() {
                let w = self.output_weights.row(r);
                *slot = lstm::dot(&w[..2 * h], hrow) + w[2 * h];
            }
        }
        Ok(BlstmTrace {
            forward,
            backward,
            hidden,
            outputs,
        })
    }

    /// Exact weight gradients of the loss whose partials w.r.t. the
    /// unnormalized outputs are `output_deltas`.
    pub fn gradients(&self, trace: &BlstmTrace, output_deltas: &Matrix) -> Result<BlstmGradients> {
        if output_deltas.shape() != trace.outputs.shape() {
            return Err(Error::dims(
                format!("{:?}", trace.outputs.shape()),
                format!("{:?}", output_deltas.shape()),
            ));
        }
        let (steps, h) = (trace.outputs.rows(), self.config.hidden);
        let mut grads = BlstmGradients::zeros_like(self);
        let mut d_fwd = Matrix::zeros(steps, h);
        let mut d_bwd = Matrix::zeros(steps, h);
        for t in 0..steps {
            let delta = output_deltas.row(t);
            let hrow = trace.hidden.row(t);
            for (r, &g) in delta.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let grow = grads.output.row_mut(r);
                for (acc, hv) in grow[..2 * h].iter_mut().zip(hrow) {
                    *acc += g * hv;
                }
                grow[2 * h] += g;
                let w = self.output_weights.row(r);
                for (acc, wv) in d_fwd.row_mut(t).iter_mut().zip(&w[..h]) {
                    *acc += g * wv;
                }
                for (acc, wv) in d_bwd.row_mut(t).iter_mut().zip(&w[h..2 * h]) {
                    *acc += g * wv;
                }
            }
        }
        grads.forward = lstm_backward(&self.forward, &trace.forward, &d_fwd)?.weights;
        grads.backward = lstm_backward(&self.backward, &trace.backward, &d_bwd)?.weights;
        Ok(grads)
    }
}

/// Unnormalized T x (N + 1) outputs for standardized inputs.
pub fn blstm_forward(model: &BlstmModel, inputs: &FeatureSequence) -> Result<Matrix> {
    Ok(model.trace(&inputs.values)?.outputs)
}

/// Weight gradients for per-frame output partials `output_deltas`.
pub fn blstm_backward(model: &BlstmModel, inputs: &FeatureSequence, output_deltas: &Matrix) -> Result<BlstmGradients> {
    if !output_deltas.is_finite() {
        return Err(Error::invalid("output deltas must be finite"));
    }
    let trace = model.trace(&inputs.values)?;
    model.gradients(&trace, output_deltas)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(d: usize, h: usize, n: usize, seed: u64) -> BlstmModel {
        let alphabet = Alphabet::with_size(n).unwrap();
        init_weights(&NetworkConfig::new(d, h), &alphabet, 0.5, seed).unwrap()
    }

    fn seq(rows: &[[f64; 3]]) -> FeatureSequence {
        FeatureSequence::unnamed(Matrix::from_rows(rows))
    }

    #[test]
    fn init_within_range_and_deterministic() {
        let a = Alphabet::default();
        let cfg = NetworkConfig::new(14, 50);
        let m1 = init_weights(&cfg, &a, 0.1, 7).unwrap();
        let m2 = init_weights(&cfg, &a, 0.1, 7).unwrap();
        assert_eq!(m1, m2);
        assert!(m1.parameters().iter().flat_map(|s| s.iter()).all(|w| w.abs() <= 0.1));
        assert_eq!(m1.output_weights.shape(), (43, 101));
        assert_ne!(m1, init_weights(&cfg, &a, 0.1, 8).unwrap());
    }

    #[test]
    fn output_shape_and_bias_only_path() {
        let mut m = model(3, 4, 3, 1);
        let x = seq(&[[0.1, 0.2, 0.3], [1.0, -1.0, 0.0], [0.5, 0.5, 0.5]]);
        assert_eq!(blstm_forward(&m, &x).unwrap().shape(), (3, 4));

        m.forward.weights.scale(0.0);
        m.backward.weights.scale(0.0);
        let out = blstm_forward(&m, &x).unwrap();
        for t in 0..3 {
            for r in 0..4 {
                assert_eq!(out.get(t, r), m.output_weights.get(r, 8));
            }
        }
    }

    #[test]
    fn swapping_directions_reverses_hidden_sequence() {
        let m = model(3, 4, 3, 2);
        let x = seq(&[[0.1, 0.2, 0.3], [1.0, -1.0, 0.0], [0.5, 0.5, 0.5], [-0.2, 0.9, 0.4]]);
        let mut swapped = m.clone();
        std::mem::swap(&mut swapped.forward, &mut swapped.backward);
        let h = m.trace(&x.values).unwrap().hidden;
        let hs = swapped.trace(&x.values.reversed_rows()).unwrap().hidden;
        let t_max = x.len();
        for t in 0..t_max {
            let a = h.row(t);
            let b = hs.row(t_max - 1 - t);
            assert_eq!(&a[..4], &b[4..]);
            assert_eq!(&a[4..], &b[..4]);
        }
    }

    #[test]
    fn no_state_leaks_between_sequences() {
        let m = model(3, 4, 3, 3);
        let x = seq(&[[0.1, 0.2, 0.3], [1.0, -1.0, 0.0]]);
        assert_eq!(blstm_forward(&m, &x).unwrap(), blstm_forward(&m, &x).unwrap());
    }

    #[test]
    fn gradients_linear_in_deltas() {
        let m = model(3, 4, 3, 4);
        let x = seq(&[[0.1, 0.2, 0.3], [1.0, -1.0, 0.0], [0.5, 0.5, 0.5]]);
        let zero = blstm_backward(&m, &x, &Matrix::zeros(3, 4)).unwrap();
        assert!(zero.flatten().iter().all(|&g| g == 0.0));

        let d = Matrix::from_rows(&[[0.1, -0.2, 0.3, -0.2], [0.0, 0.5, -0.5, 0.0], [1.0, 0.0, 0.0, -1.0]]);
        let mut d2 = d.clone();
        d2.scale(2.0);
        let g1 = blstm_backward(&m, &x, &d).unwrap().flatten();
        let g2 = blstm_backward(&m, &x, &d2).unwrap().flatten();
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let m = model(3, 4, 3, 5);
        let wrong = FeatureSequence::unnamed(Matrix::zeros(2, 2));
        assert!(blstm_forward(&m, &wrong).is_err());
        let x = seq(&[[0.1, 0.2, 0.3]]);
        assert!(blstm_backward(&m, &x, &Matrix::zeros(1, 3)).is_err());
        let mut nan = Matrix::zeros(1, 4);
        nan.set(0, 0, f64::NAN);
        assert!(blstm_backward(&m, &x, &nan).is_err());
    }
}
