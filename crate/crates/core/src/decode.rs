//! Decoding network outputs into labels and dictionary words.
//!
//! Dictionary-constrained modes score each candidate exactly, summing over
//! every alignment, and combine that with the language model as
//! `log p(words | gram) * lm_weight + log p(words | input)`.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use crate::alphabet::{Alphabet, LabelSequence};
use crate::ctc::{ctc_forward_backward, LogProbMatrix};
use crate::error::{Error, Result};
use crate::linalg::log_add;
use crate::lm::{BigramModel, Dictionary};

/// Hypotheses ordered best first; equal scores keep ascending word order.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub entries: Vec<RankEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    /// Dictionary indices; a single index for isolated-word recognition.
    pub words: Vec<usize>,
    pub log_score: f64,
}

impl Ranking {
    /// Sorts by descending score, then ascending word indices.
    pub fn from_unsorted(mut entries: Vec<RankEntry>) -> Self {
        entries.sort_by(|a, b| b.log_score.total_cmp(&a.log_score).then_with(|| a.words.cmp(&b.words)));
        Ranking { entries }
    }

    pub fn best(&self) -> Option<&RankEntry> {
        self.entries.first()
    }

    /// Zero-based rank of `words`, if present.
    pub fn position(&self, words: &[usize]) -> Option<usize> {
        self.entries.iter().position(|e| e.words == words)
    }
}

/// Framewise argmax (lowest index on ties), merge repeats, drop blanks.
pub fn best_path_decode(log_probs: &LogProbMatrix) -> LabelSequence {
    let blank = log_probs.blank();
    let mut out = Vec::new();
    let mut previous = None;
    for row in log_probs.values().iter_rows() {
        let mut best = 0;
        for (k, v) in row.iter().enumerate() {
            if *v > row[best] {
                best = k;
            }
        }
        if Some(best) != previous && best != blank {
            out.push(best);
        }
        previous = Some(best);
    }
    out
}

/// `log p(word | input)` summed over all alignments; `-inf` if infeasible.
pub fn score_word(log_probs: &LogProbMatrix, word: &[usize]) -> Result<f64> {
    Ok(ctc_forward_backward(log_probs, word)?.log_likelihood)
}

/// Isolated-word recognition with the default LM weight of 1.
pub fn dictionary_rank(
    log_probs: &LogProbMatrix,
    dict: &Dictionary,
    lm: Option<&BigramModel>,
    k: usize,
) -> Result<Ranking> {
    dictionary_rank_weighted(log_probs, dict, lm, k, 1.0)
}

/// Scores every dictionary word as `score_word + lm_weight * start_log_prob`
/// (acoustic score only without a model) and keeps the best `k`.
pub fn dictionary_rank_weighted(
    log_probs: &LogProbMatrix,
    dict: &Dictionary,
    lm: Option<&BigramModel>,
    k: usize,
    lm_weight: f64,
) -> Result<Ranking> {
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    if let Some(lm) = lm {
        if lm.len() != dict.len() {
            return Err(Error::dims(
                format!("{}-word language model", dict.len()),
                format!("{} words", lm.len()),
            ));
        }
    }
    let entries = dict
        .words()
        .iter()
        .enumerate()
        .map(|(i, word)| {
            let acoustic = score_word(log_probs, word)?;
            let prior = lm.map_or(0.0, |m| lm_weight * m.start_log_prob[i]);
            Ok(RankEntry {
                words: vec![i],
                log_score: acoustic + prior,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ranking = Ranking::from_unsorted(entries);
    ranking.entries.truncate(k);
    Ok(ranking)
}

/// Token-passing decode of a dictionary-word sequence with LM weight 1.
pub fn sequence_decode(
    log_probs: &LogProbMatrix,
    dict: &Dictionary,
    lm: &BigramModel,
    beam_width: usize,
) -> Result<Vec<usize>> {
    sequence_decode_weighted(log_probs, dict, lm, beam_width, 1.0)
}

/// Beam search over tokens `(word history, position in the blank-augmented
/// concatenation of the history's words)`.
///
/// Tokens with the same history and position are merged by summing their
/// probabilities, so each surviving history carries its exact alignment
/// sum. A history moves to a longer one on the frame that emits the new
/// word's first label, paying the bigram (or start) log probability. After
/// every frame the `beam_width` best tokens survive; when nothing is pruned
/// the result equals exhaustive search over word sequences.
pub fn sequence_decode_weighted(
    log_probs: &LogProbMatrix,
    dict: &Dictionary,
    lm: &BigramModel,
    beam_width: usize,
    lm_weight: f64,
) -> Result<Vec<usize>> {
    if beam_width == 0 {
        return Err(Error::invalid("beam_width must be at least 1"));
    }
    if lm.len() != dict.len() {
        return Err(Error::dims(
            format!("{}-word language model", dict.len()),
            format!("{} words", lm.len()),
        ));
    }
    for w in dict.words() {
        if let Some(&l) = w.iter().find(|&&l| l >= log_probs.symbols()) {
            return Err(Error::LabelOutOfRange {
                label: l,
                size: log_probs.symbols(),
            });
        }
    }
    let frames = log_probs.frames();
    if frames == 0 {
        return Err(Error::invalid("cannot decode zero frames"));
    }
    let blank = log_probs.blank();
    let mut labels_of: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    let mut concat = |history: &[usize]| -> Vec<usize> {
        labels_of
            .entry(history.to_vec())
            .or_insert_with(|| history.iter().flat_map(|&w| dict.word(w).iter().copied()).collect())
            .clone()
    };
    let symbol_at = |labels: &[usize], s: usize| if s.is_multiple_of(2) { blank } else { labels[s / 2] };

    type Tokens = BTreeMap<(Vec<usize>, usize), f64>;
    let push = |tokens: &mut Tokens, key: (Vec<usize>, usize), score: f64| {
        let slot = tokens.entry(key).or_insert(f64::NEG_INFINITY);
        *slot = log_add(*slot, score);
    };

    let mut tokens: Tokens = BTreeMap::new();
    push(&mut tokens, (Vec::new(), 0), log_probs.get(0, blank));
    for (w, word) in dict.words().iter().enumerate() {
        push(
            &mut tokens,
            (vec![w], 1),
            lm_weight * lm.start_log_prob[w] + log_probs.get(0, word[0]),
        );
    }
    prune(&mut tokens, beam_width);

    for t in 1..frames {
        let mut next: Tokens = BTreeMap::new();
        for ((history, s), &score) in &tokens {
            let labels = concat(history);
            let end = 2 * labels.len();
            let here = symbol_at(&labels, *s);
            let mut moves = vec![*s];
            if *s < end {
                moves.push(s + 1);
            }
            if s + 2 <= end && s % 2 == 1 && symbol_at(&labels, s + 2) != here {
                moves.push(s + 2);
            }
            for m in moves {
                let e = log_probs.get(t, symbol_at(&labels, m));
                push(&mut next, (history.clone(), m), score + e);
            }
            if *s + 1 >= end {
                for (w, word) in dict.words().iter().enumerate() {
                    if *s + 1 == end && labels.last() == Some(&word[0]) {
                        continue;
                    }
                    let prior = match history.last() {
                        Some(&prev) => lm.transition_log_prob.get(prev, w),
                        None => lm.start_log_prob[w],
                    };
                    let mut extended = history.clone();
                    extended.push(w);
                    let e = log_probs.get(t, word[0]);
                    push(&mut next, (extended, end + 1), score + lm_weight * prior + e);
                }
            }
        }
        prune(&mut next, beam_width);
        tokens = next;
    }

    let mut finals: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    for ((history, s), score) in tokens {
        if history.is_empty() {
            continue;
        }
        let end = 2 * concat(&history).len();
        if s + 1 >= end {
            let slot = finals.entry(history).or_insert(f64::NEG_INFINITY);
            *slot = log_add(*slot, score);
        }
    }
    finals
        .into_iter()
        .filter(|(_, s)| *s > f64::NEG_INFINITY)
        .fold(None, |best: Option<(Vec<usize>, f64)>, (h, s)| match best {
            Some((_, bs)) if bs >= s => best,
            _ => Some((h, s)),
        })
        .map(|(h, _)| h)
        .ok_or_else(|| Error::invalid("no dictionary word sequence fits the input"))
}

fn prune(tokens: &mut BTreeMap<(Vec<usize>, usize), f64>, beam_width: usize) {
    if tokens.len() <= beam_width {
        return;
    }
    let mut scored: Vec<(&(Vec<usize>, usize), f64)> = tokens.iter().map(|(k, &v)| (k, v)).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let keep: Vec<(Vec<usize>, usize)> = scored[..beam_width].iter().map(|(k, _)| (*k).clone()).collect();
    let mut kept = BTreeMap::new();
    for k in keep {
        let v = tokens[&k];
        kept.insert(k, v);
    }
    *tokens = kept;
}

/// Fraction of samples whose truth appears among the first `k` entries,
/// for each requested `k`.
pub fn top_k_accuracy(rankings: &[Ranking], truths: &[Vec<usize>], ks: &[usize]) -> Result<BTreeMap<usize, f64>> {
    if rankings.is_empty() {
        return Err(Error::invalid("no rankings to score"));
    }
    if rankings.len() != truths.len() {
        return Err(Error::dims(rankings.len(), truths.len()));
    }
    let n = rankings.len() as f64;
    Ok(ks
        .iter()
        .map(|&k| {
            let hits = rankings
                .iter()
                .zip(truths)
                .filter(|(r, t)| r.position(t).is_some_and(|p| p < k))
                .count();
            (k, hits as f64 / n)
        })
        .collect())
}

/// Header of the recognition CSV.
pub const RECOGNITION_HEADER: &str = "sample_id,rank,word,log_score";

/// Writes one CSV row per ranking entry: `sample_id,rank,word,log_score`
/// with 1-based ranks and the word as space-separated symbols.
pub fn write_recognition_rows(
    out: &mut impl Write,
    sample_id: &str,
    ranking: &Ranking,
    dict: &Dictionary,
    alphabet: &Alphabet,
) -> std::io::Result<()> {
    for (rank, entry) in ranking.entries.iter().enumerate() {
        let word = entry
            .words
            .iter()
            .map(|&w| alphabet.render(dict.word(w)))
            .collect::<Vec<_>>()
            .join(" | ");
        writeln!(out, "{},{},{},{}", sample_id, rank + 1, word, entry.log_score)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn one_hot(frames: &[usize], width: usize) -> LogProbMatrix {
        let mut m = Matrix::filled(frames.len(), width, 0.05 / (width - 1) as f64);
        for (t, &k) in frames.iter().enumerate() {
            m.set(t, k, 0.95);
        }
        LogProbMatrix::from_probabilities(&m).unwrap()
    }

    #[test]
    fn best_path_rules() {
        // alphabet {a=0, b=1}, blank = 2
        assert!(best_path_decode(&one_hot(&[2, 2, 2], 3)).is_empty());
        assert_eq!(best_path_decode(&one_hot(&[0, 0, 2, 1], 3)), vec![0, 1]);
        assert_eq!(best_path_decode(&one_hot(&[0, 2, 0], 3)), vec![0, 0]);
    }

    #[test]
    fn best_path_ties_take_lowest_index() {
        let lp = LogProbMatrix::new(Matrix::filled(2, 3, -(3f64).ln())).unwrap();
        assert_eq!(best_path_decode(&lp), vec![0]);
    }

    #[test]
    fn uniform_two_frames_word_score() {
        let lp = LogProbMatrix::new(Matrix::filled(2, 2, -(2f64).ln())).unwrap();
        assert!((score_word(&lp, &[0]).unwrap() - 0.75f64.ln()).abs() < 1e-15);
        assert_eq!(score_word(&lp, &[0, 0]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn uniform_lm_keeps_acoustic_order() {
        let a = Alphabet::new(["a", "b"]).unwrap();
        let dict = Dictionary::parse("a\nb\n", &a).unwrap();
        let lp = one_hot(&[0, 0, 2], 3);
        let plain = dictionary_rank(&lp, &dict, None, 2).unwrap();
        let lm = BigramModel::uniform(2);
        let with_lm = dictionary_rank(&lp, &dict, Some(&lm), 2).unwrap();
        assert_eq!(plain.entries[0].words, vec![0]);
        let order = |r: &Ranking| r.entries.iter().map(|e| e.words.clone()).collect::<Vec<_>>();
        assert_eq!(order(&plain), order(&with_lm));
    }

    #[test]
    fn strong_lm_overrides_acoustics() {
        let a = Alphabet::new(["a", "b"]).unwrap();
        let dict = Dictionary::parse("a\nb\n", &a).unwrap();
        let lp = one_hot(&[0, 0, 2], 3);
        let gap = score_word(&lp, &[0]).unwrap() - score_word(&lp, &[1]).unwrap();
        assert!(gap > 0.0);
        // start log probs differing by more than the acoustic gap
        let mut lm = BigramModel::uniform(2);
        let pb = 1.0 / (1.0 + (-(gap + 1.0)).exp());
        lm.start_log_prob = vec![(1.0 - pb).ln(), pb.ln()];
        let r = dictionary_rank(&lp, &dict, Some(&lm), 1).unwrap();
        assert_eq!(r.entries.len(), 1);
        assert_eq!(r.entries[0].words, vec![1]);
    }

    #[test]
    fn k_larger_than_dictionary_returns_all() {
        let a = Alphabet::new(["a", "b"]).unwrap();
        let dict = Dictionary::parse("a\nb\na b\n", &a).unwrap();
        let lp = one_hot(&[0, 2, 1], 3);
        assert_eq!(dictionary_rank(&lp, &dict, None, 50).unwrap().entries.len(), 3);
        assert!(dictionary_rank(&lp, &dict, None, 0).is_err());
    }

    #[test]
    fn top_k_rates() {
        let entry = |w: usize| RankEntry {
            words: vec![w],
            log_score: -(w as f64),
        };
        let r = Ranking {
            entries: (0..12).map(entry).collect(),
        };
        let first = top_k_accuracy(&[r.clone(), r.clone()], &[vec![0], vec![0]], &[1, 5, 10]).unwrap();
        assert_eq!(first.values().copied().collect::<Vec<_>>(), vec![1.0, 1.0, 1.0]);
        let third = top_k_accuracy(std::slice::from_ref(&r), &[vec![2]], &[1, 5, 10]).unwrap();
        assert_eq!(third[&1], 0.0);
        assert_eq!(third[&5], 1.0);
        assert_eq!(third[&10], 1.0);
        assert!(top_k_accuracy(&[], &[], &[1]).is_err());
        assert!(top_k_accuracy(&[r], &[], &[1]).is_err());
    }

    #[test]
    fn sequence_decode_clean_single_word() {
        let a = Alphabet::new(["a", "b", "c"]).unwrap();
        let dict = Dictionary::parse("a b\nc\nb a\n", &a).unwrap();
        let lm = BigramModel::uniform(3);
        let lp = one_hot(&[0, 3, 1, 1, 3], 4);
        let best = sequence_decode(&lp, &dict, &lm, 10_000).unwrap();
        assert_eq!(best, vec![0]);
        let top = dictionary_rank(&lp, &dict, Some(&lm), 1).unwrap();
        assert_eq!(top.entries[0].words, best);
        assert!(sequence_decode(&lp, &dict, &lm, 0).is_err());
    }

    #[test]
    fn sequence_decode_two_words() {
        let a = Alphabet::new(["a", "b", "c"]).unwrap();
        let dict = Dictionary::parse("a b\nc\n", &a).unwrap();
        let lm = BigramModel::uniform(2);
        let lp = one_hot(&[0, 1, 3, 2, 2], 4);
        assert_eq!(sequence_decode(&lp, &dict, &lm, 10_000).unwrap(), vec![0, 1]);
    }

    #[test]
    fn recognition_csv_rows() {
        let a = Alphabet::new(["a", "b"]).unwrap();
        let dict = Dictionary::parse("a\nb a\n", &a).unwrap();
        let r = Ranking {
            entries: vec![
                RankEntry {
                    words: vec![1],
                    log_score: -0.5,
                },
                RankEntry {
                    words: vec![0],
                    log_score: f64::NEG_INFINITY,
                },
            ],
        };
        let mut out = Vec::new();
        write_recognition_rows(&mut out, "s7", &r, &dict, &a).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "s7,1,b a,-0.5\ns7,2,a,-inf\n");
    }
}
