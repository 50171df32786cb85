//! Connectionist temporal classification.
//!
//! The network emits, per frame, a distribution over the N task symbols
//! plus a blank (last column). A labeling's probability is the sum over all
//! frame-level paths that collapse to it (merge repeats, then drop blanks),
//! computed here by forward-backward recursions over the blank-augmented
//! target `(blank, l1, blank, l2, ..., lL, blank)` entirely in log space.
//!
//! Both `alpha[t][s]` and `beta[t][s]` include the emission at frame `t`,
//! so for every frame
//!
//! ```text
//! p(target | input) = sum_s alpha[t][s] * beta[t][s] / y[t][z'_s]
//! ```

use crate::alphabet::Label;
use crate::error::{Error, Result};
use crate::linalg::{log_add, log_sum_exp, Matrix};

const NEG_INF: f64 = f64::NEG_INFINITY;

/// T x (N + 1) per-frame log probabilities; the blank is the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbMatrix(Matrix);

impl LogProbMatrix {
    /// Wraps log probabilities, checking that every row normalizes.
    pub fn new(values: Matrix) -> Result<Self> {
        if values.cols() < 2 {
            return Err(Error::invalid("need at least one symbol column plus the blank"));
        }
        for (t, row) in values.iter_rows().enumerate() {
            if row.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
                return Err(Error::invalid(format!("frame {t} holds NaN or +inf")));
            }
            let total = log_sum_exp(row);
            if !(total.abs() <= 1e-9) {
                return Err(Error::invalid(format!("frame {t} log-sums to {total}, not 0")));
            }
        }
        Ok(LogProbMatrix(values))
    }

    /// Takes the log of a matrix of probabilities.
    pub fn from_probabilities(probs: &Matrix) -> Result<Self> {
        let logs = probs.as_slice().iter().map(|p| p.ln()).collect();
        Self::new(Matrix::from_vec(probs.rows(), probs.cols(), logs))
    }

    pub fn values(&self) -> &Matrix {
        &self.0
    }

    pub fn frames(&self) -> usize {
        self.0.rows()
    }

    /// Number of task symbols N.
    pub fn symbols(&self) -> usize {
        self.0.cols() - 1
    }

    pub fn blank(&self) -> usize {
        self.0.cols() - 1
    }

    #[inline]
    pub fn get(&self, t: usize, k: usize) -> f64 {
        self.0.get(t, k)
    }
}

/// Row-wise log-softmax with max subtraction.
pub fn softmax_rows(unnormalized: &Matrix) -> Result<LogProbMatrix> {
    if !unnormalized.is_finite() {
        return Err(Error::invalid("softmax input must be finite"));
    }
    let mut out = unnormalized.clone();
    for t in 0..out.rows() {
        let row = out.row_mut(t);
        let max = row.iter().copied().fold(NEG_INF, f64::max);
        let log_z = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.iter_mut().for_each(|v| *v -= log_z);
    }
    LogProbMatrix::new(out)
}

/// Forward and backward variables over the blank-augmented target.
#[derive(Debug, Clone, PartialEq)]
pub struct CtcTables {
    pub log_alpha: Matrix,
    pub log_beta: Matrix,
    pub log_likelihood: f64,
    augmented: Vec<usize>,
}

impl CtcTables {
    /// Symbol at each augmented position.
    pub fn augmented_target(&self) -> &[usize] {
        &self.augmented
    }

    /// `log sum_s alpha[t][s] beta[t][s] / y[t][z'_s]`, equal to the log
    /// likelihood at every frame.
    pub fn frame_log_likelihood(&self, log_probs: &LogProbMatrix, t: usize) -> f64 {
        let terms: Vec<f64> = self
            .augmented
            .iter()
            .enumerate()
            .map(|(s, &k)| occupancy(self.log_alpha.get(t, s), self.log_beta.get(t, s), log_probs.get(t, k)))
            .collect();
        log_sum_exp(&terms)
    }

    /// Gradient of `-ln p` w.r.t. the unnormalized network outputs.
    pub fn gradient(&self, log_probs: &LogProbMatrix) -> Result<Matrix> {
        if !self.log_likelihood.is_finite() {
            return Err(Error::InfeasibleTarget {
                label_len: self.augmented.len() / 2,
                frames: log_probs.frames(),
            });
        }
        let (frames, width) = log_probs.values().shape();
        let mut grad = Matrix::zeros(frames, width);
        let mut per_symbol = vec![NEG_INF; width];
        for t in 0..frames {
            per_symbol.iter_mut().for_each(|v| *v = NEG_INF);
            for (s, &k) in self.augmented.iter().enumerate() {
                let occ = occupancy(self.log_alpha.get(t, s), self.log_beta.get(t, s), log_probs.get(t, k));
                per_symbol[k] = log_add(per_symbol[k], occ);
            }
            for (k, g) in grad.row_mut(t).iter_mut().enumerate() {
                *g = log_probs.get(t, k).exp() - (per_symbol[k] - self.log_likelihood).exp();
            }
        }
        Ok(grad)
    }
}

#[inline]
fn occupancy(alpha: f64, beta: f64, emission: f64) -> f64 {
    if alpha == NEG_INF || beta == NEG_INF || emission == NEG_INF {
        NEG_INF
    } else {
        alpha + beta - emission
    }
}

fn augment(target: &[Label], symbols: usize) -> Result<Vec<usize>> {
    let blank = symbols;
    let mut z = Vec::with_capacity(2 * target.len() + 1);
    z.push(blank);
    for &l in target {
        if l >= symbols {
            return Err(Error::LabelOutOfRange {
                label: l,
                size: symbols,
            });
        }
        z.push(l);
        z.push(blank);
    }
    Ok(z)
}

/// Alpha/beta tables and the log likelihood of `target`.
///
/// A target with no feasible alignment yields a log likelihood of `-inf`
/// rather than an error.
pub fn ctc_forward_backward(log_probs: &LogProbMatrix, target: &[Label]) -> Result<CtcTables> {
    let z = augment(target, log_probs.symbols())?;
    let blank = log_probs.blank();
    let (frames, states) = (log_probs.frames(), z.len());
    let mut alpha = Matrix::filled(frames, states, NEG_INF);
    let mut beta = Matrix::filled(frames, states, NEG_INF);
    if frames == 0 {
        return Ok(CtcTables {
            log_alpha: alpha,
            log_beta: beta,
            log_likelihood: if target.is_empty() { 0.0 } else { NEG_INF },
            augmented: z,
        });
    }
    let can_skip = |s: usize| s >= 2 && z[s] != blank && z[s] != z[s - 2];

    alpha.set(0, 0, log_probs.get(0, blank));
    if states > 1 {
        alpha.set(0, 1, log_probs.get(0, z[1]));
    }
    for t in 1..frames {
        for s in 0..states {
            let mut acc = alpha.get(t - 1, s);
            if s >= 1 {
                acc = log_add(acc, alpha.get(t - 1, s - 1));
            }
            if can_skip(s) {
                acc = log_add(acc, alpha.get(t - 1, s - 2));
            }
            if acc != NEG_INF {
                alpha.set(t, s, acc + log_probs.get(t, z[s]));
            }
        }
    }

    let last = frames - 1;
    beta.set(last, states - 1, log_probs.get(last, blank));
    if states > 1 {
        beta.set(last, states - 2, log_probs.get(last, z[states - 2]));
    }
    for t in (0..last).rev() {
        for s in 0..states {
            let mut acc = beta.get(t + 1, s);
            if s + 1 < states {
                acc = log_add(acc, beta.get(t + 1, s + 1));
            }
            if s + 2 < states && can_skip(s + 2) {
                acc = log_add(acc, beta.get(t + 1, s + 2));
            }
            if acc != NEG_INF {
                beta.set(t, s, acc + log_probs.get(t, z[s]));
            }
        }
    }

    let mut log_likelihood = alpha.get(last, states - 1);
    if states > 1 {
        log_likelihood = log_add(log_likelihood, alpha.get(last, states - 2));
    }
    Ok(CtcTables {
        log_alpha: alpha,
        log_beta: beta,
        log_likelihood,
        augmented: z,
    })
}

/// Gradient of `-ln p(target | input)` w.r.t. the pre-softmax outputs:
/// `y_t(k) - (1/p) sum_{s: z'_s = k} alpha_t(s) beta_t(s) / y_t(k)`.
pub fn ctc_gradient(log_probs: &LogProbMatrix, target: &[Label]) -> Result<Matrix> {
    ctc_forward_backward(log_probs, target)?.gradient(log_probs)
}

/// Summed negative log likelihood of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct CtcLoss {
    /// `+inf` when any pair is infeasible.
    pub total: f64,
    pub per_pair: Vec<f64>,
    /// Positions of pairs whose target cannot be aligned.
    pub infeasible: Vec<usize>,
}

pub fn ctc_loss(batch: &[(&LogProbMatrix, &[Label])]) -> Result<CtcLoss> {
    let mut per_pair = Vec::with_capacity(batch.len());
    let mut infeasible = Vec::new();
    for (i, (log_probs, target)) in batch.iter().enumerate() {
        let ll = ctc_forward_backward(log_probs, target)?.log_likelihood;
        if ll == NEG_INF {
            infeasible.push(i);
            per_pair.push(f64::INFINITY);
        } else {
            per_pair.push((-ll).max(0.0));
        }
    }
    Ok(CtcLoss {
        total: per_pair.iter().sum(),
        per_pair,
        infeasible,
    })
}

/// Minimum number of frames any alignment of `target` needs.
pub fn min_frames(target: &[Label]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}
