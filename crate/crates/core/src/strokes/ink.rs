//! Line-delimited JSON ink files.
//!
//! The first line is a header `{"format":"scribe-ink/1","alphabet":[...]}`;
//! every further line holds one sample
//! `{"id":...,"transcription":[...],"strokes":[[[x,y],...],...]}`.
//! Coordinates are written with shortest round-trip precision, so writing
//! the same samples twice yields identical bytes.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{InkSample, RawPoint, WritingDirection};
use crate::alphabet::Alphabet;
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "scribe-ink/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    alphabet: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transcription: Option<Vec<String>>,
    strokes: Vec<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    direction: Option<WritingDirection>,
}

/// Parsed contents of an ink file. `alphabet` is `None` only for an empty file.
#[derive(Debug, Clone, PartialEq)]
pub struct InkFile {
    pub alphabet: Option<Alphabet>,
    pub samples: Vec<InkSample>,
}

pub fn parse_ink_file(path: impl AsRef<Path>) -> Result<InkFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ink(&text)
}

pub fn parse_ink(text: &str) -> Result<InkFile> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((line, header)) = lines.next() else {
        return Ok(InkFile {
            alphabet: None,
            samples: Vec::new(),
        });
    };
    let header: Header = serde_json::from_str(header).map_err(|e| Error::MalformedRecord {
        line,
        message: format!("bad header: {e}"),
    })?;
    if header.format != FORMAT_TAG {
        return Err(Error::MalformedRecord {
            line,
            message: format!("unsupported format {:?}", header.format),
        });
    }
    let alphabet = Alphabet::new(header.alphabet).map_err(|e| Error::MalformedRecord {
        line,
        message: e.to_string(),
    })?;

    let mut samples = Vec::new();
    for (line, text) in lines {
        let record: Record = serde_json::from_str(text).map_err(|e| Error::MalformedRecord {
            line,
            message: e.to_string(),
        })?;
        samples.push(record_to_sample(record, &alphabet, line)?);
    }
    Ok(InkFile {
        alphabet: Some(alphabet),
        samples,
    })
}

fn record_to_sample(record: Record, alphabet: &Alphabet, line: usize) -> Result<InkSample> {
    let transcription = match record.transcription {
        Some(symbols) => Some(
            symbols
                .iter()
                .map(|s| {
                    alphabet.label(s).ok_or_else(|| Error::UnknownSymbol {
                        line,
                        symbol: s.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let mut points = Vec::new();
    for (s, stroke) in record.strokes.iter().enumerate() {
        if stroke.is_empty() {
            return Err(Error::MalformedRecord {
                line,
                message: format!("stroke {s} is empty"),
            });
        }
        points.extend(stroke.iter().map(|&[x, y]| RawPoint::new(x, y, s)));
    }
    let sample = InkSample {
        sample_id: record.id,
        points,
        transcription,
        direction: record.direction,
    };
    sample.validate().map_err(|e| Error::MalformedRecord {
        line,
        message: e.to_string(),
    })?;
    Ok(sample)
}

/// Serializes samples to the ink format.
pub fn render_ink(samples: &[InkSample], alphabet: &Alphabet) -> Result<String> {
    let header = Header {
        format: FORMAT_TAG.to_string(),
        alphabet: alphabet.symbols().to_vec(),
    };
    let mut out = serde_json::to_string(&header)?;
    out.push('\n');
    for sample in samples {
        sample.validate()?;
        let transcription = match &sample.transcription {
            Some(t) => {
                alphabet.check(t)?;
                Some(t.iter().map(|&l| alphabet.symbols()[l].clone()).collect())
            }
            None => None,
        };
        let record = Record {
            id: sample.sample_id.clone(),
            transcription,
            strokes: sample
                .strokes()
                .iter()
                .map(|s| s.iter().map(|p| [p.x, p.y]).collect())
                .collect(),
            direction: sample.direction,
        };
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_ink_file(samples: &[InkSample], alphabet: &Alphabet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = render_ink(samples, alphabet)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
