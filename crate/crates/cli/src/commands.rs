//! One function per subcommand.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde_json::json;

use scribe::alphabet::Alphabet;
use scribe::decode::{dictionary_rank_weighted, write_recognition_rows, RECOGNITION_HEADER};
use scribe::lm::{parse_corpus, render_corpus, train_bigram, Dictionary};
use scribe::network::io::{load_model, save_model, MAGIC};
use scribe::network::BlstmModel;
use scribe::pipeline::{
    evaluate_model, initial_model, prepare, prepare_examples, prepare_splits, synth_corpus, train_model,
};
use scribe::strokes::ink::{parse_ink_file, write_ink_file, FORMAT_TAG};
use scribe::strokes::InkSample;
use scribe::train::{log_probs, read_metrics_csv, split_dataset, write_metrics_csv, TrainReport};
use scribe::Error;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(io_error(path))?;
    Ok(())
}

/// Samples of an ink file whose header alphabet must equal `alphabet`.
fn load_samples(path: &Path, alphabet: &Alphabet) -> CliResult<Vec<InkSample>> {
    let file = parse_ink_file(path)?;
    if let Some(found) = &file.alphabet {
        if found != alphabet {
            return Err(Error::InvalidArgument(format!(
                "{}: alphabet of {} symbols differs from the expected {}",
                path.display(),
                found.len(),
                alphabet.len()
            ))
            .into());
        }
    }
    Ok(file.samples)
}

fn load_corpus(path: &Path, alphabet: &Alphabet) -> CliResult<Vec<Vec<Vec<usize>>>> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    Ok(parse_corpus(&text, alphabet)?)
}

/// A model is usable with `config` when its inputs are the configured features.
fn check_model(model: &BlstmModel, config: &ExperimentConfig) -> CliResult<()> {
    let names = config.features.set.names();
    if model.config.input_dim != names.len()
        || (!model.config.feature_names.is_empty() && model.config.feature_names != names)
    {
        return Err(Error::DimensionMismatch {
            expected: format!("model inputs [{}]", model.config.feature_names.join(", ")),
            actual: format!("configured features [{}]", names.join(", ")),
        }
        .into());
    }
    Ok(())
}

pub fn synth(config: &ExperimentConfig) -> CliResult<()> {
    let alphabet = config.alphabet().map_err(CliError::config)?;
    let corpus = synth_corpus(&config.synth, &alphabet, config.seed).map_err(CliError::config)?;
    config.echo()?;
    let data = &config.data;
    let ink = data.ink.as_deref().expect("resolved");
    let dictionary = data.dictionary.as_deref().expect("resolved");
    let corpus_path = data.corpus.as_deref().expect("resolved");
    for path in [ink, dictionary, corpus_path] {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_error(dir))?;
        }
    }
    write_ink_file(&corpus.samples, &alphabet, ink)?;
    corpus.dictionary.write(&alphabet, dictionary)?;
    write_file(corpus_path, &render_corpus(&corpus.corpus, &alphabet))?;
    log::info!(
        "wrote {} samples of {} words to {} and {} corpus sentences",
        corpus.samples.len(),
        corpus.dictionary.len(),
        ink.display(),
        corpus.corpus.len()
    );
    Ok(())
}

pub fn train(config: &ExperimentConfig, checkpoint: Option<&Path>) -> CliResult<()> {
    let alphabet = config.alphabet().map_err(CliError::config)?;
    let samples = load_samples(config.existing("ink")?, &alphabet)?;
    let dict = Dictionary::read(config.existing("dictionary")?, &alphabet)?;
    let outside = samples
        .iter()
        .filter(|s| s.transcription.as_ref().is_some_and(|t| dict.index_of(t).is_none()))
        .count();
    if outside > 0 {
        log::warn!("{outside} samples are transcribed with words outside the dictionary");
    }
    config.echo()?;
    let settings = config.settings();
    let splits = prepare_splits(&samples, &settings)?;
    log::info!(
        "split {} samples into {} train, {} validation, {} test",
        samples.len(),
        splits.train.len(),
        splits.validation.len(),
        splits.test.len()
    );
    let initial = match checkpoint {
        Some(path) => {
            let model = load_model(path)?;
            check_model(&model, config)?;
            if model.alphabet != alphabet || model.config.hidden != config.network.hidden {
                return Err(Error::DimensionMismatch {
                    expected: format!("{} symbols, {} hidden", alphabet.len(), config.network.hidden),
                    actual: format!(
                        "checkpoint with {} symbols, {} hidden",
                        model.alphabet.len(),
                        model.config.hidden
                    ),
                }
                .into());
            }
            log::info!("resuming from {}", path.display());
            model
        }
        None => initial_model(&splits, &alphabet, &settings)?,
    };
    let (model, report) = train_model(&splits, initial, &settings)?;
    save_model(&model, config.model_path())?;
    write_file(&config.report_path(), &report.to_jsonl()?)?;
    let s = &report.summary;
    log::info!(
        "best validation label error {:.4} at epoch {}, stopped at epoch {}",
        s.best_validation_label_error_rate,
        s.best_epoch,
        s.stopping_epoch
    );
    Ok(())
}

pub fn evaluate(config: &ExperimentConfig, model_path: Option<&Path>) -> CliResult<()> {
    let model = load_model(model_path.map(Path::to_path_buf).unwrap_or_else(|| config.model_path()))?;
    check_model(&model, config)?;
    let alphabet = model.alphabet.clone();
    let samples = load_samples(config.existing("ink")?, &alphabet)?;
    let dict = Dictionary::read(config.existing("dictionary")?, &alphabet)?;
    let corpus = load_corpus(config.existing("corpus")?, &alphabet)?;

    // The test split is the one training saw, so its seed comes from the
    // training report when there is one.
    let mut settings = config.settings();
    let mut epoch = 0;
    let report_path = config.report_path();
    if report_path.is_file() {
        let report = TrainReport::from_jsonl(&fs::read_to_string(&report_path).map_err(io_error(&report_path))?)?;
        settings.seed = report.summary.config.seed;
        settings.train = report.summary.config.clone();
        epoch = report.summary.best_epoch;
    } else {
        log::warn!("no training report at {}; using the config seed", report_path.display());
    }
    config.echo()?;
    let (_, _, test) = split_dataset(&samples, settings.split, settings.seed)?;
    let test = prepare_examples(&test, &settings.preprocess, &settings.features)?;
    let lm = train_bigram(&corpus, &dict, settings.lm_smoothing)?;
    let evaluation = evaluate_model(&model, &test, &dict, &lm, &settings, epoch)?;
    let path = config.metrics_path();
    let file = fs::File::create(&path).map_err(io_error(&path))?;
    write_metrics_csv(BufWriter::new(file), &evaluation.rows)?;
    for row in &evaluation.rows {
        log::info!(
            "lm {:>3}: top-1 {:.3} top-5 {:.3} top-10 {:.3} on {} test samples",
            row.lm,
            row.top1,
            row.top5,
            row.top10,
            test.len()
        );
    }
    Ok(())
}

pub struct RecognizeArgs<'a> {
    pub model: &'a Path,
    pub ink: &'a Path,
    pub dictionary: Option<&'a Path>,
    pub lm: bool,
    pub k: Option<usize>,
}

pub fn recognize(config: &ExperimentConfig, args: &RecognizeArgs, out: &mut impl Write) -> CliResult<()> {
    let k = args.k.unwrap_or(config.decode.top_k);
    if k == 0 {
        return Err(CliError::Usage("-k must be positive".into()));
    }
    let model = load_model(args.model)?;
    check_model(&model, config)?;
    let alphabet = &model.alphabet;
    let samples = load_samples(args.ink, alphabet)?;
    let dict_path = match args.dictionary {
        Some(p) => p,
        None => config.existing("dictionary")?,
    };
    let dict = Dictionary::read(dict_path, alphabet)?;
    let lm = if args.lm {
        Some(train_bigram(
            &load_corpus(config.existing("corpus")?, alphabet)?,
            &dict,
            config.decode.lm_smoothing,
        )?)
    } else {
        None
    };
    let stdout_error = |e: io::Error| Error::Io {
        path: "<stdout>".into(),
        source: e,
    };
    writeln!(out, "{RECOGNITION_HEADER}").map_err(stdout_error)?;
    for sample in &samples {
        let features = model.standardize(&prepare(sample, &config.preprocess, &config.features)?)?;
        let lp = log_probs(&model, &features)?;
        let ranking = dictionary_rank_weighted(&lp, &dict, lm.as_ref(), k, config.decode.lm_weight)?;
        write_recognition_rows(out, &sample.sample_id, &ranking, &dict, alphabet).map_err(stdout_error)?;
    }
    out.flush().map_err(stdout_error)?;
    Ok(())
}

/// JSON summary of a model, ink, report, metrics or config file.
pub fn inspect(path: &Path) -> CliResult<serde_json::Value> {
    let bytes = fs::read(path).map_err(io_error(path))?;
    if bytes.starts_with(MAGIC) {
        let model = load_model(path)?;
        return Ok(json!({
            "kind": "model",
            "alphabet": model.alphabet.symbols(),
            "input_dim": model.config.input_dim,
            "hidden": model.config.hidden,
            "feature_names": model.config.feature_names,
            "outputs": model.output_size(),
            "parameters": model.parameter_count(),
            "standardizer": {"mean": model.standardizer.mean, "std": model.standardizer.std},
        }));
    }
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::ModelFormat(format!("{}: unrecognized binary file", path.display())))?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let header: serde_json::Value = serde_json::from_str(first).unwrap_or(serde_json::Value::Null);
    if header.get("format").and_then(|f| f.as_str()) == Some(FORMAT_TAG) {
        let file = parse_ink_file(path)?;
        let points: Vec<usize> = file.samples.iter().map(|s| s.points.len()).collect();
        let strokes: usize = file.samples.iter().map(|s| s.stroke_count()).sum();
        return Ok(json!({
            "kind": "ink",
            "alphabet_size": file.alphabet.as_ref().map(Alphabet::len),
            "samples": file.samples.len(),
            "labeled": file.samples.iter().filter(|s| s.transcription.is_some()).count(),
            "strokes": strokes,
            "points": points.iter().sum::<usize>(),
            "min_points": points.iter().min(),
            "max_points": points.iter().max(),
        }));
    }
    if header.get("kind").is_some() {
        let report = TrainReport::from_jsonl(&text)?;
        return Ok(json!({
            "kind": "train_report",
            "epochs": report.epochs.len(),
            "summary": report.summary,
            "last": report.epochs.last(),
        }));
    }
    if first.starts_with("method,") {
        return Ok(json!({"kind": "metrics", "rows": read_metrics_csv(&text)?}));
    }
    if header.is_object() || text.trim_start().starts_with('{') {
        let config: ExperimentConfig = serde_json::from_str(&text).map_err(CliError::config)?;
        config.validate()?;
        return Ok(json!({"kind": "config", "config": config}));
    }
    Err(Error::MalformedRecord {
        line: 1,
        message: format!("{}: not a model, ink, report, metrics or config file", path.display()),
    }
    .into())
}
