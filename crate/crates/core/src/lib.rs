//! Online handwriting word recognition.
//!
//! The pipeline runs pen strokes through duplicate removal, Gaussian
//! smoothing, slant correction and size normalization, turns every point
//! into a feature vector, and labels the resulting sequence with a
//! bidirectional LSTM trained under the connectionist temporal
//! classification (CTC) objective. Recognition is constrained to a word
//! dictionary, optionally weighted by a bigram language model.
//!
//! ```
//! use scribe::alphabet::Alphabet;
//! use scribe::strokes::synth::{synth_word, SynthStyle};
//!
//! let alphabet = Alphabet::default();
//! let ink = synth_word(&[3, 17, 8], &SynthStyle::default(), &alphabet).unwrap();
//! assert_eq!(ink.transcription.as_deref(), Some(&[3, 17, 8][..]));
//! ```

pub mod alphabet;
pub mod ctc;
pub mod decode;
pub mod error;
pub mod features;
pub mod linalg;
pub mod lm;
pub mod network;
pub mod oracles;
pub mod pipeline;
pub mod preprocess;
pub mod strokes;
pub mod train;

pub use error::{Error, Result};
