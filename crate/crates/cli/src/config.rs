//! The experiment configuration file.
//!
//! Every field has a default, so `{}` is a valid config. Relative paths
//! resolve against the directory holding the config file. The effective
//! config has absolute paths, every data path filled in, and the training
//! seed equal to the top-level seed.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scribe::alphabet::{Alphabet, DEFAULT_SIZE};
use scribe::features::FeatureConfig;
use scribe::pipeline::{ExperimentSettings, SynthCorpusConfig};
use scribe::preprocess::PreprocessConfig;
use scribe::train::TrainConfig;

use crate::error::{CliError, CliResult};

/// File name of the echoed effective config.
pub const ECHO_NAME: &str = "effective-config.json";

/// Either a symbol count (generated names `g00`, `g01`, ...) or explicit symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphabetSpec {
    Size(usize),
    Symbols(Vec<String>),
}

impl AlphabetSpec {
    pub fn build(&self) -> scribe::Result<Alphabet> {
        match self {
            AlphabetSpec::Size(n) => Alphabet::with_size(*n),
            AlphabetSpec::Symbols(s) => Alphabet::new(s.clone()),
        }
    }
}

impl Default for AlphabetSpec {
    fn default() -> Self {
        AlphabetSpec::Size(DEFAULT_SIZE)
    }
}

/// Data files; unset entries default to names inside the output directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub ink: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    /// LSTM blocks per direction.
    pub hidden: usize,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection { hidden: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    /// Rows per sample written by `recognize`.
    pub top_k: usize,
    pub lm_weight: f64,
    /// Add-k smoothing of the bigram model.
    pub lm_smoothing: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            top_k: 10,
            lm_weight: 1.0,
            lm_smoothing: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub alphabet: AlphabetSpec,
    pub data: DataPaths,
    pub synth: SynthCorpusConfig,
    pub preprocess: PreprocessConfig,
    pub features: FeatureConfig,
    pub network: NetworkSection,
    pub train: TrainConfig,
    /// Train, validation, test fractions.
    pub split: [f64; 3],
    pub decode: DecodeConfig,
    pub output: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            alphabet: AlphabetSpec::default(),
            data: DataPaths::default(),
            synth: SynthCorpusConfig::default(),
            preprocess: PreprocessConfig::default(),
            features: FeatureConfig::default(),
            network: NetworkSection::default(),
            train: TrainConfig::default(),
            split: [0.75, 0.15, 0.10],
            decode: DecodeConfig::default(),
            output: PathBuf::from("out"),
            seed: 0,
        }
    }
}

/// Command-line overrides applied after loading.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    /// Reads `path`, or starts from defaults when no file is given, then
    /// applies overrides and resolves paths.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> CliResult<Self> {
        let cwd = std::env::current_dir().map_err(|e| CliError::config(format!("working directory: {e}")))?;
        let (mut config, base) = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
                let config: ExperimentConfig =
                    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
                let dir = absolute(&cwd, p)
                    .parent()
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| cwd.clone());
                (config, dir)
            }
            None => (ExperimentConfig::default(), cwd.clone()),
        };
        config.output = absolute(&base, &config.output);
        for p in [
            &mut config.data.ink,
            &mut config.data.dictionary,
            &mut config.data.corpus,
        ]
        .into_iter()
        .flatten()
        {
            *p = absolute(&base, p);
        }
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(out) = &overrides.output {
            config.output = absolute(&cwd, out);
        }
        config.resolve();
        config.validate()?;
        Ok(config)
    }

    /// Fills unset data paths and propagates the seed.
    fn resolve(&mut self) {
        let out = self.output.clone();
        self.data.ink.get_or_insert_with(|| out.join("samples.ink"));
        self.data.dictionary.get_or_insert_with(|| out.join("dictionary.txt"));
        self.data.corpus.get_or_insert_with(|| out.join("corpus.txt"));
        if self.train.seed != self.seed {
            log::debug!("train.seed {} replaced by seed {}", self.train.seed, self.seed);
            self.train.seed = self.seed;
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let alphabet = self
            .alphabet()
            .map_err(|e| CliError::config(format!("alphabet: {e}")))?;
        self.synth
            .validate(&alphabet)
            .map_err(|e| CliError::config(format!("synth: {e}")))?;
        self.train
            .validate()
            .map_err(|e| CliError::config(format!("train: {e}")))?;
        if self.network.hidden == 0 {
            return Err(CliError::config("network.hidden must be positive"));
        }
        if self.decode.top_k == 0 {
            return Err(CliError::config("decode.top_k must be positive"));
        }
        if !(self.decode.lm_smoothing > 0.0 && self.decode.lm_smoothing.is_finite()) {
            return Err(CliError::config("decode.lm_smoothing must be positive"));
        }
        if !(self.decode.lm_weight >= 0.0 && self.decode.lm_weight.is_finite()) {
            return Err(CliError::config("decode.lm_weight must be non-negative"));
        }
        if self.split.iter().any(|f| !(0.0..=1.0).contains(f)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(CliError::config("split fractions must lie in [0, 1] and sum to 1"));
        }
        if !(self.preprocess.delta > 0.0 && self.preprocess.target_height > 0.0) {
            return Err(CliError::config(
                "preprocess.delta and preprocess.target_height must be positive",
            ));
        }
        Ok(())
    }

    pub fn alphabet(&self) -> scribe::Result<Alphabet> {
        self.alphabet.build()
    }

    /// The resolved data path, which must exist.
    pub fn existing(&self, field: &str) -> CliResult<&Path> {
        let path = match field {
            "ink" => &self.data.ink,
            "dictionary" => &self.data.dictionary,
            "corpus" => &self.data.corpus,
            _ => unreachable!("unknown data field {field}"),
        };
        let path = path.as_deref().expect("paths are resolved at load");
        if !path.is_file() {
            return Err(CliError::config(format!(
                "data.{field}: {} does not exist",
                path.display()
            )));
        }
        Ok(path)
    }

    pub fn settings(&self) -> ExperimentSettings {
        ExperimentSettings {
            preprocess: self.preprocess.clone(),
            features: self.features.clone(),
            hidden: self.network.hidden,
            train: self.train.clone(),
            split: self.split,
            lm_smoothing: self.decode.lm_smoothing,
            lm_weight: self.decode.lm_weight,
            seed: self.seed,
        }
    }

    pub fn model_path(&self) -> PathBuf {
        self.output.join("model.scribe")
    }

    pub fn report_path(&self) -> PathBuf {
        self.output.join("train_report.jsonl")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.output.join("metrics.csv")
    }

    /// Creates the output directory and writes the effective config into it.
    pub fn echo(&self) -> CliResult<()> {
        fs::create_dir_all(&self.output).map_err(|e| scribe::Error::Io {
            path: self.output.clone(),
            source: e,
        })?;
        let path = self.output.join(ECHO_NAME);
        let text = serde_json::to_string_pretty(self).map_err(scribe::Error::from)? + "\n";
        fs::write(&path, text).map_err(|e| scribe::Error::Io { path, source: e })?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        let c: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.alphabet().unwrap().len(), 42);
    }

    #[test]
    fn alphabet_accepts_count_or_symbols() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"alphabet":["a","b"]}"#).unwrap();
        assert_eq!(c.alphabet().unwrap().symbols(), ["a", "b"]);
        let c: ExperimentConfig = serde_json::from_str(r#"{"alphabet":5}"#).unwrap();
        assert_eq!(c.alphabet().unwrap().len(), 5);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sed":1}"#).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"train":{"rate":1}}"#).is_err());
    }

    #[test]
    fn echo_reloads_to_an_equal_config() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.json");
        fs::write(
            &file,
            r#"{"output":"o","seed":9,"data":{"ink":"x.ink"},"network":{"hidden":4}}"#,
        )
        .unwrap();
        let c = ExperimentConfig::load(Some(&file), &Overrides::default()).unwrap();
        assert_eq!(c.output, dir.path().join("o"));
        assert_eq!(c.data.ink.as_deref(), Some(dir.path().join("x.ink").as_path()));
        assert_eq!(
            c.data.corpus.as_deref(),
            Some(dir.path().join("o/corpus.txt").as_path())
        );
        assert_eq!(c.train.seed, 9);
        c.echo().unwrap();
        let again = ExperimentConfig::load(Some(&c.output.join(ECHO_NAME)), &Overrides::default()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn overrides_win() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.json");
        fs::write(&file, r#"{"seed":1}"#).unwrap();
        let o = Overrides {
            seed: Some(5),
            output: Some(dir.path().join("elsewhere")),
        };
        let c = ExperimentConfig::load(Some(&file), &o).unwrap();
        assert_eq!((c.seed, c.train.seed), (5, 5));
        assert_eq!(c.output, dir.path().join("elsewhere"));
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        for body in [
            r#"{"synth":{"dict_size":0}}"#,
            r#"{"split":[0.5,0.5,0.5]}"#,
            r#"{"network":{"hidden":0}}"#,
            r#"{"train":{"learning_rate":-1}}"#,
            r#"{"alphabet":0}"#,
            "not json",
        ] {
            let file = dir.path().join("bad.json");
            fs::write(&file, body).unwrap();
            let err = ExperimentConfig::load(Some(&file), &Overrides::default()).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{body}: {err}");
        }
    }

    #[test]
    fn missing_data_names_the_field() {
        let c = ExperimentConfig::load(
            None,
            &Overrides {
                output: Some(PathBuf::from("/nonexistent/scribe")),
                ..Overrides::default()
            },
        )
        .unwrap();
        let err = c.existing("dictionary").unwrap_err().to_string();
        assert!(err.contains("data.dictionary"), "{err}");
    }
}
