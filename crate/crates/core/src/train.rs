//! Online training and evaluation.
//!
//! Weights are updated after every sample by gradient descent with momentum,
//! `v <- mu v - eta grad; w <- w + v`, on the CTC loss. Each presentation
//! sees fresh Gaussian input noise. After every epoch the validation label
//! error rate is measured and the best weights so far are kept; training
//! stops once that rate has not improved for `early_stop_patience` epochs.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::alphabet::LabelSequence;
use crate::ctc::{ctc_forward_backward, min_frames, softmax_rows, LogProbMatrix};
use crate::decode::{best_path_decode, dictionary_rank_weighted, top_k_accuracy, Ranking};
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::lm::{BigramModel, Dictionary};
use crate::network::{BlstmGradients, BlstmModel};

/// Ranks reported by [`evaluate`].
pub const TOP_KS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub input_noise_std: f64,
    pub init_range: f64,
    pub seed: u64,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            momentum: 0.8,
            input_noise_std: 0.55,
            init_range: 0.1,
            seed: 0,
            early_stop_patience: 20,
            max_epochs: 200,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if !(self.input_noise_std >= 0.0 && self.input_noise_std.is_finite()) {
            return Err(Error::invalid("input_noise_std must be non-negative"));
        }
        if !(self.init_range > 0.0 && self.init_range.is_finite()) {
            return Err(Error::invalid("init_range must be positive"));
        }
        if self.early_stop_patience == 0 || self.max_epochs == 0 {
            return Err(Error::invalid("early_stop_patience and max_epochs must be positive"));
        }
        Ok(())
    }
}

/// A standardized feature sequence and its transcription.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub id: String,
    pub features: FeatureSequence,
    pub target: LabelSequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean CTC loss over the samples presented this epoch.
    pub train_loss: f64,
    pub validation_label_error_rate: f64,
    /// Fraction of validation samples whose best path is exactly right.
    pub validation_word_rate: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub config: TrainConfig,
    pub best_epoch: usize,
    pub stopping_epoch: usize,
    pub best_validation_label_error_rate: f64,
    pub skipped_infeasible: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub summary: TrainSummary,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ReportLine {
    Epoch(EpochRecord),
    Summary(TrainSummary),
}

impl TrainReport {
    /// One JSON object per epoch, then a summary line.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(&ReportLine::Epoch(e.clone()))?);
            out.push('\n');
        }
        out.push_str(&serde_json::to_string(&ReportLine::Summary(self.summary.clone()))?);
        out.push('\n');
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut epochs = Vec::new();
        let mut summary = None;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            match serde_json::from_str(line) {
                Ok(ReportLine::Epoch(e)) => epochs.push(e),
                Ok(ReportLine::Summary(s)) => summary = Some(s),
                Err(e) => {
                    return Err(Error::MalformedRecord {
                        line: i + 1,
                        message: e.to_string(),
                    })
                }
            }
        }
        let summary = summary.ok_or_else(|| Error::invalid("report has no summary line"))?;
        Ok(TrainReport { epochs, summary })
    }

    /// Copy with every wall-clock field zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.epochs.iter_mut().for_each(|e| e.seconds = 0.0);
        r
    }
}

/// Per-frame log probabilities for standardized inputs.
pub fn log_probs(model: &BlstmModel, features: &FeatureSequence) -> Result<LogProbMatrix> {
    softmax_rows(&model.trace(&features.values)?.outputs)
}

/// Loss and weight gradients for one sample; `None` when the target has no
/// alignment.
pub fn sample_gradient(
    model: &BlstmModel,
    features: &FeatureSequence,
    target: &[usize],
) -> Result<Option<(f64, BlstmGradients)>> {
    let trace = model.trace(&features.values)?;
    let lp = softmax_rows(&trace.outputs)?;
    let tables = ctc_forward_backward(&lp, target)?;
    if tables.log_likelihood == f64::NEG_INFINITY {
        return Ok(None);
    }
    let deltas = tables.gradient(&lp)?;
    let grads = model.gradients(&trace, &deltas)?;
    Ok(Some((-tables.log_likelihood, grads)))
}

/// Applies `v <- mu v - eta g; w <- w + v`.
pub fn momentum_step(model: &mut BlstmModel, velocity: &mut BlstmGradients, grads: &BlstmGradients, eta: f64, mu: f64) {
    let params = model.parameters_mut();
    let vels = velocity.slices_mut();
    for ((w, v), g) in params.into_iter().zip(vels).zip(grads.slices()) {
        for ((wi, vi), gi) in w.iter_mut().zip(v.iter_mut()).zip(g) {
            *vi = mu * *vi - eta * gi;
            *wi += *vi;
        }
    }
}

pub fn train(
    initial: BlstmModel,
    train_set: &[TrainingExample],
    validation_set: &[TrainingExample],
    config: &TrainConfig,
) -> Result<(BlstmModel, TrainReport)> {
    config.validate()?;
    if train_set.is_empty() || validation_set.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    let mut skipped = Vec::new();
    let mut usable = Vec::new();
    for (i, ex) in train_set.iter().enumerate() {
        if min_frames(&ex.target) > ex.features.len() {
            log::warn!(
                "skipping {}: {} labels need {} frames, have {}",
                ex.id,
                ex.target.len(),
                min_frames(&ex.target),
                ex.features.len()
            );
            skipped.push(ex.id.clone());
        } else {
            usable.push(i);
        }
    }
    if usable.is_empty() {
        return Err(Error::invalid("no training sample has a feasible target"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.input_noise_std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut model = initial;
    let mut velocity = BlstmGradients::zeros_like(&model);
    let mut best_model = model.clone();
    let mut best = (f64::INFINITY, 0);
    let mut epochs = Vec::new();
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        usable.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for &i in &usable {
            let ex = &train_set[i];
            let mut features = ex.features.clone();
            if config.input_noise_std > 0.0 {
                for v in features.values.as_mut_slice() {
                    *v += noise.sample(&mut rng);
                }
            }
            let Some((loss, grads)) = sample_gradient(&model, &features, &ex.target)? else {
                // feasibility was checked up front; only an underflowed path sum lands here
                return Err(Error::Divergence {
                    epoch,
                    sample_id: ex.id.clone(),
                    message: "likelihood underflowed to zero".into(),
                });
            };
            if loss.is_nan() || !grads.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    sample_id: ex.id.clone(),
                    message: format!("loss {loss}, finite gradients: {}", grads.is_finite()),
                });
            }
            loss_sum += loss;
            momentum_step(&mut model, &mut velocity, &grads, config.learning_rate, config.momentum);
        }
        let (ler, word_rate) = best_path_rates(&model, validation_set)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / usable.len() as f64,
            validation_label_error_rate: ler,
            validation_word_rate: word_rate,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.4}, validation label error {:.4}, word rate {:.4}",
            record.train_loss,
            ler,
            word_rate
        );
        epochs.push(record);
        if ler < best.0 {
            best = (ler, epoch);
            best_model = model.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.early_stop_patience {
                break;
            }
        }
    }
    let stopping_epoch = epochs.len();
    Ok((
        best_model,
        TrainReport {
            epochs,
            summary: TrainSummary {
                config: config.clone(),
                best_epoch: best.1,
                stopping_epoch,
                best_validation_label_error_rate: best.0,
                skipped_infeasible: skipped,
            },
        },
    ))
}

/// Levenshtein distance between label sequences.
pub fn edit_distance(a: &[usize], b: &[usize]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Total edit distance divided by total target length.
pub fn label_error_rate(pairs: &[(LabelSequence, LabelSequence)]) -> f64 {
    let errors: usize = pairs.iter().map(|(hyp, truth)| edit_distance(hyp, truth)).sum();
    let total: usize = pairs.iter().map(|(_, truth)| truth.len()).sum();
    if total == 0 {
        if errors == 0 {
            0.0
        } else {
            1.0
        }
    } else {
        errors as f64 / total as f64
    }
}

/// Best-path label error rate and exact-match rate.
fn best_path_rates(model: &BlstmModel, set: &[TrainingExample]) -> Result<(f64, f64)> {
    let mut pairs = Vec::with_capacity(set.len());
    for ex in set {
        pairs.push((best_path_decode(&log_probs(model, &ex.features)?), ex.target.clone()));
    }
    let exact = pairs.iter().filter(|(h, t)| h == t).count() as f64 / set.len() as f64;
    Ok((label_error_rate(&pairs), exact))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Dictionary-constrained top-k rates for k in [`TOP_KS`].
    pub top_k: BTreeMap<usize, f64>,
    pub best_path_exact_match: f64,
    pub label_error_rate: f64,
    pub rankings: Vec<Ranking>,
}

impl Metrics {
    pub fn top(&self, k: usize) -> f64 {
        self.top_k.get(&k).copied().unwrap_or(f64::NAN)
    }
}

/// Dictionary ranking plus best-path rates on a test set. A sample whose
/// transcription is not in the dictionary counts as a miss at every rank.
pub fn evaluate(
    model: &BlstmModel,
    test_set: &[TrainingExample],
    dict: &Dictionary,
    lm: Option<&BigramModel>,
    lm_weight: f64,
) -> Result<Metrics> {
    if test_set.is_empty() {
        return Err(Error::invalid("test set is empty"));
    }
    let depth = *TOP_KS.iter().max().unwrap_or(&1);
    let mut rankings = Vec::with_capacity(test_set.len());
    let mut truths = Vec::with_capacity(test_set.len());
    let mut pairs = Vec::with_capacity(test_set.len());
    for ex in test_set {
        let lp = log_probs(model, &ex.features)?;
        rankings.push(dictionary_rank_weighted(&lp, dict, lm, depth, lm_weight)?);
        truths.push(dict.index_of(&ex.target).map_or_else(Vec::new, |i| vec![i]));
        pairs.push((best_path_decode(&lp), ex.target.clone()));
    }
    let exact = pairs.iter().filter(|(h, t)| h == t).count() as f64 / test_set.len() as f64;
    Ok(Metrics {
        top_k: top_k_accuracy(&rankings, &truths, &TOP_KS)?,
        best_path_exact_match: exact,
        label_error_rate: label_error_rate(&pairs),
        rankings,
    })
}

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    /// "yes" or "no".
    pub lm: String,
    pub top1: f64,
    pub top5: f64,
    pub top10: f64,
    pub label_error_rate: f64,
    pub epoch: usize,
    pub seed: u64,
}

impl MetricsRow {
    pub fn new(method: &str, lm: bool, metrics: &Metrics, epoch: usize, seed: u64) -> Self {
        MetricsRow {
            method: method.to_string(),
            lm: if lm { "yes" } else { "no" }.to_string(),
            top1: metrics.top(1),
            top5: metrics.top(5),
            top10: metrics.top(10),
            label_error_rate: metrics.label_error_rate,
            epoch,
            seed,
        }
    }
}

/// Writes the header and rows.
pub fn write_metrics_csv(out: impl Write, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)
            .map_err(|e| Error::invalid(format!("metrics CSV: {e}")))?;
    }
    w.flush().map_err(|e| Error::invalid(format!("metrics CSV: {e}")))?;
    Ok(())
}

pub fn read_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| Error::MalformedRecord {
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Seeded shuffle, then contiguous train / validation / test parts with
/// sizes `round(f * n)` for the first two and the remainder for the last.
pub fn split_dataset<T: Clone>(samples: &[T], fractions: [f64; 3], seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    if fractions.iter().any(|f| !(*f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("split fractions must be positive and sum to 1"));
    }
    let n = samples.len();
    if n < 3 {
        return Err(Error::invalid(format!("{n} samples cannot fill three parts")));
    }
    let n_train = ((fractions[0] * n as f64).round() as usize).max(1);
    let n_val = ((fractions[1] * n as f64).round() as usize).max(1);
    if n_train + n_val >= n {
        return Err(Error::invalid(format!("{n} samples leave no test part")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
    Ok((
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_val]),
        pick(&order[n_train + n_val..]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::Alphabet;
    use crate::linalg::Matrix;
    use crate::network::{init_weights, NetworkConfig};
    use rand::Rng;

    fn tiny(d: usize, h: usize, symbols: usize, seed: u64) -> BlstmModel {
        init_weights(
            &NetworkConfig::new(d, h),
            &Alphabet::with_size(symbols).unwrap(),
            0.1,
            seed,
        )
        .unwrap()
    }

    fn example(id: &str, frames: usize, d: usize, target: Vec<usize>, seed: u64) -> TrainingExample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..frames * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        TrainingExample {
            id: id.into(),
            features: FeatureSequence::unnamed(Matrix::from_vec(frames, d, values)),
            target,
        }
    }

    #[test]
    fn edit_distances() {
        assert_eq!(edit_distance(&[], &[]), 0);
        assert_eq!(edit_distance(&[1, 2, 3], &[1, 3]), 1);
        assert_eq!(edit_distance(&[1, 2], &[2, 1]), 2);
        assert_eq!(edit_distance(&[], &[4, 4]), 2);
        assert_eq!(label_error_rate(&[(vec![1], vec![1, 2]), (vec![3], vec![3, 4])]), 0.5);
    }

    #[test]
    fn split_sizes_and_partition() {
        let items: Vec<usize> = (0..100).collect();
        let (a, b, c) = split_dataset(&items, [0.75, 0.15, 0.10], 3).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (75, 15, 10));
        let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort();
        assert_eq!(all, items);
        assert_eq!(split_dataset(&items, [0.75, 0.15, 0.10], 3).unwrap(), (a, b, c));
        assert!(split_dataset(&items[..2], [0.75, 0.15, 0.10], 3).is_err());
        assert!(split_dataset(&items, [0.5, 0.5, 0.0], 3).is_err());
    }

    #[test]
    fn first_step_without_momentum() {
        let model = tiny(2, 3, 2, 1);
        let ex = example("a", 6, 2, vec![0, 1], 2);
        let (_, grads) = sample_gradient(&model, &ex.features, &ex.target).unwrap().unwrap();
        let mut stepped = model.clone();
        let mut velocity = BlstmGradients::zeros_like(&model);
        momentum_step(&mut stepped, &mut velocity, &grads, 0.05, 0.0);
        for ((w1, w0), g) in stepped.parameters().iter().zip(model.parameters()).zip(grads.slices()) {
            for ((a, b), c) in w1.iter().zip(w0).zip(g) {
                assert_eq!(*a, b - 0.05 * c);
            }
        }
    }

    #[test]
    fn overfits_one_sample() {
        let mut model = tiny(3, 8, 3, 5);
        let ex = example("one", 12, 3, vec![0, 2, 1], 9);
        let mut velocity = BlstmGradients::zeros_like(&model);
        let initial = sample_gradient(&model, &ex.features, &ex.target).unwrap().unwrap().0;
        let mut last = initial;
        for _ in 0..200 {
            let (loss, g) = sample_gradient(&model, &ex.features, &ex.target).unwrap().unwrap();
            last = loss;
            momentum_step(&mut model, &mut velocity, &g, 0.05, 0.8);
        }
        assert!(last < 0.1 * initial, "loss {initial} -> {last}");
    }

    #[test]
    fn noiseless_training_is_reproducible() {
        let set: Vec<_> = (0..4)
            .map(|i| example(&format!("s{i}"), 8, 2, vec![i % 2], i as u64))
            .collect();
        let config = TrainConfig {
            input_noise_std: 0.0,
            max_epochs: 3,
            seed: 11,
            ..TrainConfig::default()
        };
        let (m1, r1) = train(tiny(2, 3, 2, 0), &set, &set, &config).unwrap();
        let (m2, r2) = train(tiny(2, 3, 2, 0), &set, &set, &config).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(r1.without_timing(), r2.without_timing());
        let best = r1
            .epochs
            .iter()
            .map(|e| e.validation_label_error_rate)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(r1.summary.best_validation_label_error_rate, best);
        let (ler, _) = best_path_rates(&m1, &set).unwrap();
        assert_eq!(ler, best);
        let back = TrainReport::from_jsonl(&r1.to_jsonl().unwrap()).unwrap();
        assert_eq!(back, r1);
    }

    #[test]
    fn infeasible_samples_are_skipped() {
        let mut set = vec![example("ok", 8, 2, vec![0], 1)];
        set.push(example("short", 1, 2, vec![0, 0], 2));
        let config = TrainConfig {
            max_epochs: 1,
            ..TrainConfig::default()
        };
        let (_, report) = train(tiny(2, 2, 2, 0), &set, &set[..1], &config).unwrap();
        assert_eq!(report.summary.skipped_infeasible, vec!["short".to_string()]);
    }

    #[test]
    fn evaluation_leaves_model_untouched() {
        let a = Alphabet::with_size(2).unwrap();
        let dict = Dictionary::new(vec![vec![0], vec![1], vec![0, 1]], &a).unwrap();
        let model = tiny(2, 3, 2, 4);
        let set: Vec<_> = (0..3)
            .map(|i| example("e", 6, 2, dict.word(i).to_vec(), i as u64))
            .collect();
        let before = model.clone();
        let plain = evaluate(&model, &set, &dict, None, 1.0).unwrap();
        let uniform = evaluate(&model, &set, &dict, Some(&BigramModel::uniform(3)), 1.0).unwrap();
        assert_eq!(model, before);
        assert_eq!(plain.top_k, uniform.top_k);
        assert!(plain.top(1) <= plain.top(5) && plain.top(5) <= plain.top(10));
        assert!(evaluate(&model, &[], &dict, None, 1.0).is_err());
    }

    #[test]
    fn metrics_csv_schema() {
        let row = MetricsRow {
            method: "blstm-ctc".into(),
            lm: "yes".into(),
            top1: 0.5,
            top5: 1.0,
            top10: 1.0,
            label_error_rate: 0.25,
            epoch: 7,
            seed: 3,
        };
        let mut out = Vec::new();
        write_metrics_csv(&mut out, std::slice::from_ref(&row)).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "method,lm,top1,top5,top10,label_error_rate,epoch,seed\nblstm-ctc,yes,0.5,1.0,1.0,0.25,7,3\n"
        );
        assert_eq!(read_metrics_csv(&text).unwrap(), vec![row]);
    }
}
