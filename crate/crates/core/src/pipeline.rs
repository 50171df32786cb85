//! End-to-end plumbing: synthetic corpora, ink to features, and the
//! train-then-evaluate experiment.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alphabet::{Alphabet, LabelSequence};
use crate::error::{Error, Result};
use crate::features::{extract_features, fit_standardizer, FeatureConfig, FeatureSequence, Standardizer};
use crate::lm::{train_bigram, BigramModel, Dictionary};
use crate::network::{init_weights, BlstmModel, NetworkConfig};
use crate::preprocess::{preprocess, PreprocessConfig};
use crate::strokes::synth::{synth_word, SynthStyle};
use crate::strokes::InkSample;
use crate::train::{evaluate, train, Metrics, MetricsRow, TrainConfig, TrainReport, TrainingExample};

/// Method name written to the metrics CSV.
pub const METHOD: &str = "blstm-ctc";

/// Preprocessed, unstandardized features of one sample.
pub fn prepare(sample: &InkSample, pre: &PreprocessConfig, features: &FeatureConfig) -> Result<FeatureSequence> {
    let p = preprocess(sample, pre)?;
    extract_features(&p.sample, &p.band, features)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthCorpusConfig {
    pub dict_size: usize,
    pub samples_per_word: usize,
    pub min_word_len: usize,
    pub max_word_len: usize,
    /// Per-sample slant drawn uniformly from `[-max_slant, max_slant]`.
    pub max_slant: f64,
    /// Per-sample scale drawn uniformly from this range.
    pub scale_range: [f64; 2],
    pub jitter_std: f64,
    pub points_per_glyph: usize,
    /// Sentences in the language-model training corpus.
    pub corpus_sentences: usize,
    pub max_sentence_len: usize,
    /// Probability that a word is followed by its designated successor.
    pub successor_bias: f64,
}

impl Default for SynthCorpusConfig {
    fn default() -> Self {
        SynthCorpusConfig {
            dict_size: 10,
            samples_per_word: 60,
            min_word_len: 3,
            max_word_len: 6,
            max_slant: 0.3,
            scale_range: [0.8, 1.25],
            jitter_std: 0.02,
            points_per_glyph: 40,
            corpus_sentences: 500,
            max_sentence_len: 4,
            successor_bias: 0.6,
        }
    }
}

impl SynthCorpusConfig {
    pub fn validate(&self, alphabet: &Alphabet) -> Result<()> {
        if self.dict_size == 0 {
            return Err(Error::invalid("dict_size must be positive"));
        }
        if self.samples_per_word == 0 {
            return Err(Error::invalid("samples_per_word must be positive"));
        }
        if self.min_word_len == 0 || self.min_word_len > self.max_word_len {
            return Err(Error::invalid("need 1 <= min_word_len <= max_word_len"));
        }
        let [lo, hi] = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::invalid("scale_range must be positive and ordered"));
        }
        if !(self.max_slant >= 0.0 && self.max_slant < std::f64::consts::FRAC_PI_2) {
            return Err(Error::invalid("max_slant must lie in [0, pi/2)"));
        }
        if !(0.0..=1.0).contains(&self.successor_bias) {
            return Err(Error::invalid("successor_bias must lie in [0, 1]"));
        }
        if self.max_sentence_len == 0 {
            return Err(Error::invalid("max_sentence_len must be positive"));
        }
        let available = (self.min_word_len..=self.max_word_len)
            .map(|n| (alphabet.len() as f64).powi(n as i32))
            .sum::<f64>();
        if (self.dict_size as f64) > available {
            return Err(Error::invalid(format!(
                "only {available} distinct words exist for the configured lengths"
            )));
        }
        SynthStyle {
            jitter_std: self.jitter_std,
            points_per_glyph: self.points_per_glyph,
            ..SynthStyle::default()
        }
        .validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub dictionary: Dictionary,
    /// Ordered by word, then instance.
    pub samples: Vec<InkSample>,
    pub corpus: Vec<Vec<LabelSequence>>,
}

/// Random distinct words, styled instances of each, and a word-sequence
/// corpus in which each word prefers one successor.
pub fn synth_corpus(config: &SynthCorpusConfig, alphabet: &Alphabet, seed: u64) -> Result<SynthCorpus> {
    config.validate(alphabet)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words: Vec<LabelSequence> = Vec::with_capacity(config.dict_size);
    while words.len() < config.dict_size {
        let len = rng.random_range(config.min_word_len..=config.max_word_len);
        let word: LabelSequence = (0..len).map(|_| rng.random_range(0..alphabet.len())).collect();
        if !words.contains(&word) {
            words.push(word);
        }
    }
    let dictionary = Dictionary::new(words, alphabet)?;

    let mut samples = Vec::with_capacity(config.dict_size * config.samples_per_word);
    for (w, word) in dictionary.words().iter().enumerate() {
        for i in 0..config.samples_per_word {
            let style = SynthStyle {
                slant_angle: if config.max_slant > 0.0 {
                    rng.random_range(-config.max_slant..=config.max_slant)
                } else {
                    0.0
                },
                scale: rng.random_range(config.scale_range[0]..=config.scale_range[1]),
                jitter_std: config.jitter_std,
                points_per_glyph: config.points_per_glyph,
                rng_seed: rng.random(),
            };
            let mut sample = synth_word(word, &style, alphabet)?;
            sample.sample_id = format!("w{w:03}-{i:03}");
            samples.push(sample);
        }
    }

    let ids: Vec<usize> = (0..dictionary.len()).collect();
    let corpus = (0..config.corpus_sentences)
        .map(|_| {
            let len = rng.random_range(1..=config.max_sentence_len);
            let mut current = *ids.choose(&mut rng).expect("dictionary is non-empty");
            let mut sentence = vec![dictionary.word(current).to_vec()];
            for _ in 1..len {
                current = if rng.random_bool(config.successor_bias) {
                    (current + 1) % dictionary.len()
                } else {
                    *ids.choose(&mut rng).expect("dictionary is non-empty")
                };
                sentence.push(dictionary.word(current).to_vec());
            }
            sentence
        })
        .collect();
    Ok(SynthCorpus {
        dictionary,
        samples,
        corpus,
    })
}

/// Everything the experiment needs besides data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    pub preprocess: PreprocessConfig,
    pub features: FeatureConfig,
    /// LSTM blocks per direction.
    pub hidden: usize,
    pub train: TrainConfig,
    /// Train, validation, test.
    pub split: [f64; 3],
    /// Add-k smoothing of the bigram model.
    pub lm_smoothing: f64,
    pub lm_weight: f64,
    /// Seeds the split and weight initialization.
    pub seed: u64,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            preprocess: PreprocessConfig::default(),
            features: FeatureConfig::default(),
            hidden: 16,
            train: TrainConfig::default(),
            split: [0.75, 0.15, 0.10],
            lm_smoothing: 1.0,
            lm_weight: 1.0,
            seed: 0,
        }
    }
}

/// Raw features of the three parts plus a standardizer fit on training
/// features only.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSplits {
    pub train: Vec<TrainingExample>,
    pub validation: Vec<TrainingExample>,
    pub test: Vec<TrainingExample>,
    pub standardizer: Standardizer,
}

/// Features for labeled samples; unlabeled samples are a data error.
pub fn prepare_examples(
    samples: &[InkSample],
    pre: &PreprocessConfig,
    features: &FeatureConfig,
) -> Result<Vec<TrainingExample>> {
    samples
        .iter()
        .map(|s| {
            let target = s
                .transcription
                .clone()
                .ok_or_else(|| Error::invalid(format!("sample {} has no transcription", s.sample_id)))?;
            Ok(TrainingExample {
                id: s.sample_id.clone(),
                features: prepare(s, pre, features)?,
                target,
            })
        })
        .collect()
}

pub fn prepare_splits(samples: &[InkSample], settings: &ExperimentSettings) -> Result<PreparedSplits> {
    let (train, validation, test) = crate::train::split_dataset(samples, settings.split, settings.seed)?;
    let train = prepare_examples(&train, &settings.preprocess, &settings.features)?;
    let validation = prepare_examples(&validation, &settings.preprocess, &settings.features)?;
    let test = prepare_examples(&test, &settings.preprocess, &settings.features)?;
    let feats: Vec<FeatureSequence> = train.iter().map(|e| e.features.clone()).collect();
    let standardizer = fit_standardizer(&feats)?;
    Ok(PreparedSplits {
        train,
        validation,
        test,
        standardizer,
    })
}

/// Applies `standardizer` to every example.
pub fn standardize_examples(examples: &[TrainingExample], standardizer: &Standardizer) -> Result<Vec<TrainingExample>> {
    examples
        .iter()
        .map(|e| {
            Ok(TrainingExample {
                features: standardizer.apply(&e.features)?,
                ..e.clone()
            })
        })
        .collect()
}

/// A freshly initialized model carrying the split's standardizer.
pub fn initial_model(
    splits: &PreparedSplits,
    alphabet: &Alphabet,
    settings: &ExperimentSettings,
) -> Result<BlstmModel> {
    let mut config = NetworkConfig::new(settings.features.set.dim(), settings.hidden);
    config.feature_names = settings.features.set.names();
    let mut model = init_weights(&config, alphabet, settings.train.init_range, settings.seed)?;
    model.standardizer = splits.standardizer.clone();
    Ok(model)
}

/// Trains from `initial`, standardizing with its stored statistics.
pub fn train_model(
    splits: &PreparedSplits,
    initial: BlstmModel,
    settings: &ExperimentSettings,
) -> Result<(BlstmModel, TrainReport)> {
    if initial.config.input_dim != settings.features.set.dim() {
        return Err(Error::dims(
            format!("{} model inputs", initial.config.input_dim),
            format!("{} features", settings.features.set.dim()),
        ));
    }
    let train_set = standardize_examples(&splits.train, &initial.standardizer)?;
    let validation = standardize_examples(&splits.validation, &initial.standardizer)?;
    train(initial, &train_set, &validation, &settings.train)
}

/// Dictionary decoding without and with the bigram model.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub without_lm: Metrics,
    pub with_lm: Metrics,
    pub rows: Vec<MetricsRow>,
}

pub fn evaluate_model(
    model: &BlstmModel,
    test: &[TrainingExample],
    dict: &Dictionary,
    lm: &BigramModel,
    settings: &ExperimentSettings,
    epoch: usize,
) -> Result<Evaluation> {
    if model.config.input_dim != settings.features.set.dim() {
        return Err(Error::dims(
            format!("{} model inputs", model.config.input_dim),
            format!("{} features", settings.features.set.dim()),
        ));
    }
    let test = standardize_examples(test, &model.standardizer)?;
    let without_lm = evaluate(model, &test, dict, None, settings.lm_weight)?;
    let with_lm = evaluate(model, &test, dict, Some(lm), settings.lm_weight)?;
    let rows = vec![
        MetricsRow::new(METHOD, true, &with_lm, epoch, settings.train.seed),
        MetricsRow::new(METHOD, false, &without_lm, epoch, settings.train.seed),
    ];
    Ok(Evaluation {
        without_lm,
        with_lm,
        rows,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub model: BlstmModel,
    pub report: TrainReport,
    pub lm: BigramModel,
    pub evaluation: Evaluation,
}

/// Split, featurize, train, and evaluate with and without the language
/// model.
pub fn run_experiment(
    samples: &[InkSample],
    dict: &Dictionary,
    corpus: &[Vec<LabelSequence>],
    alphabet: &Alphabet,
    settings: &ExperimentSettings,
) -> Result<ExperimentOutcome> {
    let splits = prepare_splits(samples, settings)?;
    let lm = train_bigram(corpus, dict, settings.lm_smoothing)?;
    let initial = initial_model(&splits, alphabet, settings)?;
    let (model, report) = train_model(&splits, initial, settings)?;
    let evaluation = evaluate_model(&model, &splits.test, dict, &lm, settings, report.summary.best_epoch)?;
    Ok(ExperimentOutcome {
        model,
        report,
        lm,
        evaluation,
    })
}
