//! Ink data model, the on-disk ink format, and the synthetic word generator.

pub mod ink;
pub mod synth;

use serde::{Deserialize, Serialize};

use crate::alphabet::LabelSequence;
use crate::error::{Error, Result};

/// One captured pen position. Point order is the time axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawPoint {
    pub x: f64,
    pub y: f64,
    pub stroke_index: usize,
}

impl RawPoint {
    pub fn new(x: f64, y: f64, stroke_index: usize) -> Self {
        RawPoint { x, y, stroke_index }
    }
}

/// Order in which glyphs were laid out along the x axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WritingDirection {
    Rtl,
    Ltr,
}

/// A (possibly labeled) sequence of pen strokes.
#[derive(Debug, Clone, PartialEq)]
pub struct InkSample {
    pub sample_id: String,
    pub points: Vec<RawPoint>,
    pub transcription: Option<LabelSequence>,
    pub direction: Option<WritingDirection>,
}

impl InkSample {
    /// Builds a sample from per-stroke coordinate lists, numbering strokes
    /// from 0 in the given order.
    pub fn from_strokes(
        sample_id: impl Into<String>,
        strokes: &[Vec<(f64, f64)>],
        transcription: Option<LabelSequence>,
    ) -> Result<Self> {
        let points = strokes
            .iter()
            .enumerate()
            .flat_map(|(s, pts)| pts.iter().map(move |&(x, y)| RawPoint::new(x, y, s)))
            .collect();
        let sample = InkSample {
            sample_id: sample_id.into(),
            points,
            transcription,
            direction: None,
        };
        sample.validate()?;
        Ok(sample)
    }

    /// Copy of `self` with the points replaced.
    pub fn with_points(&self, points: Vec<RawPoint>) -> Self {
        InkSample {
            sample_id: self.sample_id.clone(),
            points,
            transcription: self.transcription.clone(),
            direction: self.direction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut expected = 0;
        for (i, p) in self.points.iter().enumerate() {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(Error::invalid(format!(
                    "sample {}: point {i} is not finite",
                    self.sample_id
                )));
            }
            if i == 0 {
                if p.stroke_index != 0 {
                    return Err(Error::invalid(format!(
                        "sample {}: stroke indices must start at 0",
                        self.sample_id
                    )));
                }
            } else if p.stroke_index == expected + 1 {
                expected += 1;
            } else if p.stroke_index != expected {
                return Err(Error::invalid(format!(
                    "sample {}: stroke indices must form a contiguous run",
                    self.sample_id
                )));
            }
        }
        if self.points.is_empty() && self.transcription.as_ref().is_some_and(|t| !t.is_empty()) {
            return Err(Error::invalid(format!(
                "sample {}: labeled sample has no points",
                self.sample_id
            )));
        }
        Ok(())
    }

    pub fn stroke_count(&self) -> usize {
        self.points.last().map_or(0, |p| p.stroke_index + 1)
    }

    /// Contiguous per-stroke slices of `points`.
    pub fn strokes(&self) -> Vec<&[RawPoint]> {
        split_strokes(&self.points)
    }
}

/// Splits a point list at stroke-index changes.
pub fn split_strokes(points: &[RawPoint]) -> Vec<&[RawPoint]> {
    points.chunk_by(|a, b| a.stroke_index == b.stroke_index).collect()
}
