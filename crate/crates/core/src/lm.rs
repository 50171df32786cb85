//! Word dictionary and bigram language model.
//!
//! Dictionary files hold one word per line as space-separated symbol
//! identifiers. Corpus files hold one word sequence per line with words
//! separated by `|`, e.g. `g01 g02 | g07 g03 g03`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alphabet::{Alphabet, LabelSequence};
use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, Matrix};

/// Ordered list of distinct, non-empty words.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    words: Vec<LabelSequence>,
    index: HashMap<LabelSequence, usize>,
}

impl Dictionary {
    pub fn new(words: Vec<LabelSequence>, alphabet: &Alphabet) -> Result<Self> {
        if words.is_empty() {
            return Err(Error::invalid("dictionary must hold at least one word"));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if w.is_empty() {
                return Err(Error::invalid(format!("dictionary word {i} is empty")));
            }
            alphabet.check(w)?;
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::invalid(format!(
                    "duplicate dictionary word {:?}",
                    alphabet.render(w)
                )));
            }
        }
        Ok(Dictionary { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[LabelSequence] {
        &self.words
    }

    pub fn word(&self, i: usize) -> &[usize] {
        &self.words[i]
    }

    pub fn index_of(&self, word: &[usize]) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn parse(text: &str, alphabet: &Alphabet) -> Result<Self> {
        let mut words = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let word = alphabet
                .parse(line)
                .map_err(|symbol| Error::UnknownSymbol { line: i + 1, symbol })?;
            words.push(word);
        }
        Self::new(words, alphabet)
    }

    pub fn render(&self, alphabet: &Alphabet) -> String {
        self.words.iter().map(|w| alphabet.render(w) + "\n").collect()
    }

    pub fn read(path: impl AsRef<Path>, alphabet: &Alphabet) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?, alphabet)
    }

    pub fn write(&self, alphabet: &Alphabet, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.render(alphabet)).map_err(|e| Error::io(path, e))
    }
}

/// Parses a corpus: one `|`-separated word sequence per line.
pub fn parse_corpus(text: &str, alphabet: &Alphabet) -> Result<Vec<Vec<LabelSequence>>> {
    let mut corpus = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sentence = line
            .split('|')
            .map(|w| {
                let word = alphabet
                    .parse(w)
                    .map_err(|symbol| Error::UnknownSymbol { line: i + 1, symbol })?;
                if word.is_empty() {
                    return Err(Error::MalformedRecord {
                        line: i + 1,
                        message: "empty word".into(),
                    });
                }
                Ok(word)
            })
            .collect::<Result<Vec<_>>>()?;
        corpus.push(sentence);
    }
    Ok(corpus)
}

pub fn render_corpus(corpus: &[Vec<LabelSequence>], alphabet: &Alphabet) -> String {
    corpus
        .iter()
        .map(|s| s.iter().map(|w| alphabet.render(w)).collect::<Vec<_>>().join(" | ") + "\n")
        .collect()
}

/// Start and word-to-word transition log probabilities over a dictionary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BigramModel {
    pub start_log_prob: Vec<f64>,
    /// Row = predecessor, column = successor.
    pub transition_log_prob: Matrix,
}

impl BigramModel {
    pub fn uniform(words: usize) -> Self {
        let lp = -(words as f64).ln();
        BigramModel {
            start_log_prob: vec![lp; words],
            transition_log_prob: Matrix::filled(words, words, lp),
        }
    }

    pub fn len(&self) -> usize {
        self.start_log_prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.start_log_prob.is_empty()
    }

    /// Largest deviation of any row (or the start vector) from summing to 1,
    /// measured in log space.
    pub fn normalization_error(&self) -> f64 {
        std::iter::once(self.start_log_prob.as_slice())
            .chain(self.transition_log_prob.iter_rows())
            .map(|row| log_sum_exp(row).abs())
            .fold(0.0, f64::max)
    }
}

/// Add-k smoothed relative frequencies:
/// `p(w | v) = (count(v, w) + k) / (count(v) + k W)` where `count(v)` counts
/// transitions leaving `v`; start probabilities use sentence-initial counts
/// the same way. With `k = 0`, a word never seen as a predecessor gets a
/// uniform row.
pub fn train_bigram(corpus: &[Vec<LabelSequence>], dict: &Dictionary, k: f64) -> Result<BigramModel> {
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::invalid("smoothing k must be non-negative"));
    }
    if corpus.is_empty() && k == 0.0 {
        return Err(Error::invalid("an empty corpus needs k > 0"));
    }
    let w = dict.len();
    let mut start = vec![0.0; w];
    let mut counts = Matrix::zeros(w, w);
    let mut sentences = 0.0;
    for sentence in corpus {
        let ids = sentence
            .iter()
            .map(|word| {
                dict.index_of(word)
                    .ok_or_else(|| Error::invalid(format!("corpus word {word:?} is not in the dictionary")))
            })
            .collect::<Result<Vec<_>>>()?;
        let Some(&first) = ids.first() else { continue };
        start[first] += 1.0;
        sentences += 1.0;
        for pair in ids.windows(2) {
            let c = counts.get(pair[0], pair[1]);
            counts.set(pair[0], pair[1], c + 1.0);
        }
    }
    if sentences == 0.0 && k == 0.0 {
        return Err(Error::invalid("corpus has no words and k = 0"));
    }

    let wf = w as f64;
    let smooth = |row: &[f64], total: f64| -> Vec<f64> {
        if total + k * wf == 0.0 {
            vec![-wf.ln(); row.len()]
        } else {
            row.iter().map(|c| ((c + k) / (total + k * wf)).ln()).collect()
        }
    };
    let start_log_prob = smooth(&start, sentences);
    let mut transition_log_prob = Matrix::zeros(w, w);
    for v in 0..w {
        let total: f64 = counts.row(v).iter().sum();
        let row = smooth(counts.row(v), total);
        transition_log_prob.row_mut(v).copy_from_slice(&row);
    }
    Ok(BigramModel {
        start_log_prob,
        transition_log_prob,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceScore {
    pub log_prob: f64,
    /// Set for the empty sequence, whose score is the empty product.
    pub empty: bool,
}

/// `start[w1] + sum_j transition[w_{j-1}, w_j]`.
pub fn sequence_log_prob(model: &BigramModel, words: &[usize]) -> Result<SequenceScore> {
    if let Some(&bad) = words.iter().find(|&&i| i >= model.len()) {
        return Err(Error::invalid(format!(
            "word index {bad} outside a {}-word model",
            model.len()
        )));
    }
    let Some(&first) = words.first() else {
        return Ok(SequenceScore {
            log_prob: 0.0,
            empty: true,
        });
    };
    let log_prob = model.start_log_prob[first]
        + words
            .windows(2)
            .map(|p| model.transition_log_prob.get(p[0], p[1]))
            .sum::<f64>();
    Ok(SequenceScore { log_prob, empty: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Alphabet, Dictionary) {
        let a = Alphabet::new(["a", "b", "c"]).unwrap();
        let d = Dictionary::parse("a b\nc\n", &a).unwrap();
        (a, d)
    }

    #[test]
    fn hand_counted_bigram() {
        let (a, d) = setup();
        let corpus = parse_corpus("a b | c\na b | c\n", &a).unwrap();
        let m = train_bigram(&corpus, &d, 1.0).unwrap();
        assert!((m.transition_log_prob.get(0, 1) - 0.75f64.ln()).abs() < 1e-15);
        // both sentences start with word 0: (2 + 1) / (2 + 2)
        assert!((m.start_log_prob[0] - 0.75f64.ln()).abs() < 1e-15);
        let s = sequence_log_prob(&m, &[0, 1]).unwrap();
        assert!((s.log_prob - (0.75f64.ln() + 0.75f64.ln())).abs() < 1e-15);
        assert!(m.normalization_error() < 1e-12);
    }

    #[test]
    fn empty_corpus() {
        let (_, d) = setup();
        let m = train_bigram(&[], &d, 1.0).unwrap();
        assert_eq!(m, BigramModel::uniform(2));
        assert!(train_bigram(&[], &d, 0.0).is_err());
    }

    #[test]
    fn large_k_tends_to_uniform() {
        let (a, d) = setup();
        let corpus = parse_corpus("a b | c\nc | c\n", &a).unwrap();
        let m = train_bigram(&corpus, &d, 1e9).unwrap();
        let u = BigramModel::uniform(2);
        assert!(m.transition_log_prob.max_abs_diff(&u.transition_log_prob) < 1e-8);
    }

    #[test]
    fn unknown_corpus_word() {
        let (a, d) = setup();
        let corpus = parse_corpus("b a\n", &a).unwrap();
        assert!(train_bigram(&corpus, &d, 1.0).is_err());
    }

    #[test]
    fn sequence_scores() {
        let u = BigramModel::uniform(4);
        let s = sequence_log_prob(&u, &[2]).unwrap();
        assert_eq!(s.log_prob, -(4f64).ln());
        let s = sequence_log_prob(&u, &[2, 3]).unwrap();
        assert!((s.log_prob - 2.0 * (0.25f64).ln()).abs() < 1e-15);
        let e = sequence_log_prob(&u, &[]).unwrap();
        assert!(e.empty && e.log_prob == 0.0);
        assert!(sequence_log_prob(&u, &[4]).is_err());
    }

    #[test]
    fn dictionary_validation() {
        let a = Alphabet::new(["a", "b"]).unwrap();
        assert!(Dictionary::parse("a\na\n", &a).is_err());
        assert!(Dictionary::parse("", &a).is_err());
        assert!(matches!(
            Dictionary::parse("a\nz\n", &a),
            Err(Error::UnknownSymbol { line: 2, .. })
        ));
        let d = Dictionary::parse("a b\nb\n", &a).unwrap();
        assert_eq!(Dictionary::parse(&d.render(&a), &a).unwrap(), d);
        assert_eq!(d.index_of(&[1]), Some(1));
    }

    #[test]
    fn corpus_round_trip() {
        let (a, _) = setup();
        let c = parse_corpus("a b | c\nc\n", &a).unwrap();
        assert_eq!(render_corpus(&c, &a), "a b | c\nc\n");
        assert!(parse_corpus("a | | b\n", &a).is_err());
    }
}
