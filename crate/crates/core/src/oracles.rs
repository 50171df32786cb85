//! Slow reference implementations for testing.
//!
//! Nothing here calls the CTC or decoding code it is used to check; only the
//! shared data types are imported.

use std::collections::BTreeMap;

use crate::ctc::LogProbMatrix;
use crate::decode::{RankEntry, Ranking};
use crate::error::{Error, Result};
use crate::lm::{BigramModel, Dictionary};

/// Largest path count the enumerators accept.
pub const MAX_PATHS: u128 = 10_000_000;

/// Largest dictionary [`brute_dictionary_decode`] accepts.
pub const MAX_WORDS: usize = 50;

/// Collapses a path: merge consecutive repeats, then delete blanks.
pub fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut previous = None;
    for &k in path {
        if Some(k) != previous && k != blank {
            out.push(k);
        }
        previous = Some(k);
    }
    out
}

/// Log probability of every labeling reachable in T frames, by visiting all
/// `(N + 1)^T` paths.
pub fn brute_labeling_distribution(log_probs: &LogProbMatrix) -> Result<BTreeMap<Vec<usize>, f64>> {
    let width = log_probs.symbols() + 1;
    let frames = log_probs.frames();
    let count = (width as u128).checked_pow(frames as u32).unwrap_or(u128::MAX);
    if count > MAX_PATHS {
        return Err(Error::OracleTooLarge(format!("{width}^{frames} paths")));
    }
    let mut sums: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    let mut path = vec![0usize; frames];
    for _ in 0..count {
        let log_p: f64 = path.iter().enumerate().map(|(t, &k)| log_probs.get(t, k)).sum();
        let slot = sums.entry(collapse(&path, width - 1)).or_insert(f64::NEG_INFINITY);
        *slot = log_add(*slot, log_p);
        for digit in path.iter_mut() {
            *digit += 1;
            if *digit < width {
                break;
            }
            *digit = 0;
        }
    }
    Ok(sums)
}

/// `log p(target | input)` by direct path enumeration; `-inf` when no path
/// collapses to `target`.
pub fn brute_ctc_likelihood(log_probs: &LogProbMatrix, target: &[usize]) -> Result<f64> {
    Ok(brute_labeling_distribution(log_probs)?
        .get(target)
        .copied()
        .unwrap_or(f64::NEG_INFINITY))
}

/// Scores every word as brute likelihood plus `lm_weight` times its start
/// log probability, then sorts best first (ascending index on ties).
pub fn brute_dictionary_decode(
    log_probs: &LogProbMatrix,
    dict: &Dictionary,
    lm: Option<&BigramModel>,
    lm_weight: f64,
) -> Result<Ranking> {
    if dict.len() > MAX_WORDS {
        return Err(Error::OracleTooLarge(format!("{} dictionary words", dict.len())));
    }
    let table = brute_labeling_distribution(log_probs)?;
    let mut entries: Vec<RankEntry> = dict
        .words()
        .iter()
        .enumerate()
        .map(|(i, word)| {
            let acoustic = table.get(word).copied().unwrap_or(f64::NEG_INFINITY);
            let prior = lm.map_or(0.0, |m| lm_weight * m.start_log_prob[i]);
            RankEntry {
                words: vec![i],
                log_score: acoustic + prior,
            }
        })
        .collect();
    // insertion sort keeps this independent of the decoder's comparator
    for i in 1..entries.len() {
        let mut j = i;
        while j > 0 && better(&entries[j], &entries[j - 1]) {
            entries.swap(j, j - 1);
            j -= 1;
        }
    }
    Ok(Ranking { entries })
}

fn better(a: &RankEntry, b: &RankEntry) -> bool {
    a.log_score > b.log_score || (a.log_score == b.log_score && a.words < b.words)
}

/// Every non-empty word sequence whose concatenation some path yields, with
/// score `lm_weight * log p(words | gram) + log p(concatenation | input)`,
/// sorted best first.
pub fn brute_sequence_scores(
    log_probs: &LogProbMatrix,
    dict: &Dictionary,
    lm: &BigramModel,
    lm_weight: f64,
) -> Result<Vec<(Vec<usize>, f64)>> {
    let table = brute_labeling_distribution(log_probs)?;
    let mut out = Vec::new();
    for (labeling, &acoustic) in &table {
        for words in segmentations(labeling, dict) {
            let mut gram = lm.start_log_prob[words[0]];
            for pair in words.windows(2) {
                gram += lm.transition_log_prob.get(pair[0], pair[1]);
            }
            out.push((words, lm_weight * gram + acoustic));
        }
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

/// Best word sequence by exhaustive enumeration.
pub fn brute_sequence_decode(
    log_probs: &LogProbMatrix,
    dict: &Dictionary,
    lm: &BigramModel,
    lm_weight: f64,
) -> Result<Vec<usize>> {
    brute_sequence_scores(log_probs, dict, lm, lm_weight)?
        .into_iter()
        .find(|(_, s)| *s > f64::NEG_INFINITY)
        .map(|(w, _)| w)
        .ok_or_else(|| Error::invalid("no word sequence is reachable"))
}

/// All ways to split `labels` into one or more dictionary words.
fn segmentations(labels: &[usize], dict: &Dictionary) -> Vec<Vec<usize>> {
    if labels.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (i, word) in dict.words().iter().enumerate() {
        if labels.starts_with(word) {
            let rest = &labels[word.len()..];
            if rest.is_empty() {
                out.push(vec![i]);
            }
            for mut tail in segmentations(rest, dict) {
                tail.insert(0, i);
                out.push(tail);
            }
        }
    }
    out
}

/// Central differences `(f(p + e_i eps) - f(p - e_i eps)) / (2 eps)`.
pub fn finite_difference_gradient(
    mut loss: impl FnMut(&[f64]) -> Result<f64>,
    params: &[f64],
    eps: f64,
) -> Result<Vec<f64>> {
    if !(1e-7..=1e-4).contains(&eps) {
        return Err(Error::invalid(format!("eps {eps} outside [1e-7, 1e-4]")));
    }
    let mut probe = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        probe[i] = params[i] + eps;
        let plus = loss(&probe)?;
        probe[i] = params[i] - eps;
        let minus = loss(&probe)?;
        probe[i] = params[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::invalid(format!("non-finite loss probing coordinate {i}")));
        }
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::Alphabet;
    use crate::linalg::Matrix;

    fn uniform(frames: usize, width: usize) -> LogProbMatrix {
        LogProbMatrix::new(Matrix::filled(frames, width, -(width as f64).ln())).unwrap()
    }

    #[test]
    fn collapse_rule() {
        assert_eq!(collapse(&[0, 0, 2, 1], 2), vec![0, 1]);
        assert_eq!(collapse(&[0, 2, 0], 2), vec![0, 0]);
        assert!(collapse(&[2, 2], 2).is_empty());
    }

    #[test]
    fn uniform_two_frames() {
        let lp = uniform(2, 2);
        assert!((brute_ctc_likelihood(&lp, &[0]).unwrap().exp() - 0.75).abs() < 1e-15);
        assert_eq!(brute_ctc_likelihood(&lp, &[0, 0]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn distribution_sums_to_one() {
        let total = brute_labeling_distribution(&uniform(4, 3))
            .unwrap()
            .values()
            .map(|v| v.exp())
            .sum::<f64>();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn size_guard() {
        assert!(matches!(
            brute_ctc_likelihood(&uniform(12, 5), &[0]),
            Err(Error::OracleTooLarge(_))
        ));
    }

    #[test]
    fn single_word_dictionary() {
        let a = Alphabet::new(["a", "b"]).unwrap();
        let dict = Dictionary::parse("b\n", &a).unwrap();
        let r = brute_dictionary_decode(&uniform(3, 3), &dict, None, 1.0).unwrap();
        assert_eq!(r.entries.len(), 1);
        assert_eq!(r.entries[0].words, vec![0]);
    }

    #[test]
    fn segmentation_counts() {
        let a = Alphabet::new(["a", "b"]).unwrap();
        let dict = Dictionary::parse("a\nb\na b\n", &a).unwrap();
        let mut s = segmentations(&[0, 1], &dict);
        s.sort();
        assert_eq!(s, vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn finite_differences_of_polynomials() {
        let linear = |p: &[f64]| Ok(3.0 * p[0] - 2.0 * p[1] + 1.0);
        let g = finite_difference_gradient(linear, &[0.3, -1.2], 1e-5).unwrap();
        assert!((g[0] - 3.0).abs() < 1e-9 && (g[1] + 2.0).abs() < 1e-9);
        let quadratic = |p: &[f64]| Ok(p[0] * p[0] + 4.0 * p[0] * p[1]);
        let g = finite_difference_gradient(quadratic, &[0.5, 2.0], 1e-5).unwrap();
        assert!((g[0] - 9.0).abs() < 1e-8 && (g[1] - 2.0).abs() < 1e-8);
        assert!(finite_difference_gradient(linear, &[0.0, 0.0], 1e-3).is_err());
        let blows_up = |p: &[f64]| Ok(if p[0] > 0.0 { f64::NAN } else { 0.0 });
        assert!(finite_difference_gradient(blows_up, &[0.0], 1e-5).is_err());
    }
}
