//! Per-point features.
//!
//! Local features are the preprocessed coordinates and the tangent slope
//! angle. Offline context features describe the ink around each point: how
//! many points lie above and below the corpus band in the point's x
//! neighborhood, and a 3x3 occupancy map of the square neighborhood.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::preprocess::CorpusBand;
use crate::strokes::{split_strokes, InkSample, RawPoint};

/// Floor applied to fitted standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// Number of offline context values per point.
pub const CONTEXT_DIM: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    X,
    Y,
    Theta,
    Above,
    Below,
    /// Cell `row * 3 + col` of the 3x3 map; row 0 is the lowest, col 0 the leftmost.
    Map(u8),
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 14] = [
        FeatureKind::X,
        FeatureKind::Y,
        FeatureKind::Theta,
        FeatureKind::Above,
        FeatureKind::Below,
        FeatureKind::Map(0),
        FeatureKind::Map(1),
        FeatureKind::Map(2),
        FeatureKind::Map(3),
        FeatureKind::Map(4),
        FeatureKind::Map(5),
        FeatureKind::Map(6),
        FeatureKind::Map(7),
        FeatureKind::Map(8),
    ];
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKind::X => f.write_str("x"),
            FeatureKind::Y => f.write_str("y"),
            FeatureKind::Theta => f.write_str("theta"),
            FeatureKind::Above => f.write_str("above"),
            FeatureKind::Below => f.write_str("below"),
            FeatureKind::Map(i) => write!(f, "map{i}"),
        }
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "x" => FeatureKind::X,
            "y" => FeatureKind::Y,
            "theta" => FeatureKind::Theta,
            "above" => FeatureKind::Above,
            "below" => FeatureKind::Below,
            _ => match s.strip_prefix("map").and_then(|i| i.parse::<u8>().ok()) {
                Some(i) if i < 9 => FeatureKind::Map(i),
                _ => return Err(Error::invalid(format!("unknown feature {s:?}"))),
            },
        })
    }
}

/// Ordered selection of feature columns; defaults to all 14.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct FeatureSet(Vec<FeatureKind>);

impl FeatureSet {
    pub fn full() -> Self {
        FeatureSet(FeatureKind::ALL.to_vec())
    }

    pub fn new(kinds: Vec<FeatureKind>) -> Result<Self> {
        if kinds.is_empty() {
            return Err(Error::invalid("feature set must not be empty"));
        }
        for (i, k) in kinds.iter().enumerate() {
            if kinds[..i].contains(k) {
                return Err(Error::invalid(format!("feature {k} selected twice")));
            }
        }
        Ok(FeatureSet(kinds))
    }

    pub fn by_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        Self::new(names.iter().map(|n| n.as_ref().parse()).collect::<Result<_>>()?)
    }

    pub fn kinds(&self) -> &[FeatureKind] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.0.iter().map(ToString::to_string).collect()
    }
}

impl Default for FeatureSet {
    fn default() -> Self {
        Self::full()
    }
}

impl TryFrom<Vec<String>> for FeatureSet {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::by_names(&names)
    }
}

impl From<FeatureSet> for Vec<String> {
    fn from(s: FeatureSet) -> Self {
        s.names()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub set: FeatureSet,
    /// Side of the context neighborhood; the corpus height when unset.
    pub window: Option<f64>,
}

/// A T x D feature matrix with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub values: Matrix,
    pub feature_names: Vec<String>,
}

impl FeatureSequence {
    pub fn new(values: Matrix, feature_names: Vec<String>) -> Result<Self> {
        if values.cols() != feature_names.len() {
            return Err(Error::dims(feature_names.len(), values.cols()));
        }
        Ok(FeatureSequence { values, feature_names })
    }

    /// Unnamed columns `f0, f1, ...`.
    pub fn unnamed(values: Matrix) -> Self {
        let feature_names = (0..values.cols()).map(|i| format!("f{i}")).collect();
        FeatureSequence { values, feature_names }
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }
}

/// Tangent slope angle `arg((x[m+1] - x[m-1]) + i (y[m+1] - y[m-1]))` per
/// point, within each stroke. Stroke ends use one-sided differences and a
/// lone point gets 0. Results lie in `(-pi, pi]`.
pub fn tangent_angles(points: &[RawPoint]) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len());
    for stroke in split_strokes(points) {
        let n = stroke.len();
        for m in 0..n {
            if n == 1 {
                out.push(0.0);
                continue;
            }
            let prev = stroke[m.saturating_sub(1)];
            let next = stroke[(m + 1).min(n - 1)];
            let theta = (next.y - prev.y).atan2(next.x - prev.x);
            out.push(if theta == -std::f64::consts::PI {
                std::f64::consts::PI
            } else {
                theta
            });
        }
    }
    out
}

/// Offline context of every point: `[above, below, map0..map8]`.
///
/// `above`/`below` count ink points with `|x - x_i| <= window / 2` lying
/// strictly above the corpus top or below the baseline. The map splits the
/// square of side `window` centered on the point into 3x3 cells and holds
/// each cell's share of the points inside the square.
pub fn offline_context(points: &[RawPoint], band: &CorpusBand, window: f64) -> Result<Vec<[f64; CONTEXT_DIM]>> {
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::invalid(format!("context window must be positive, got {window}")));
    }
    let half = window / 2.0;
    let cell = window / 3.0;
    let cell_of = |offset: f64| (((offset + half) / cell) as usize).min(2);
    Ok(points
        .iter()
        .map(|p| {
            let mut above = 0usize;
            let mut below = 0usize;
            let mut cells = [0usize; 9];
            for q in points {
                let dx = q.x - p.x;
                if dx.abs() > half {
                    continue;
                }
                if q.y > band.corpus_top_y {
                    above += 1;
                } else if q.y < band.baseline_y {
                    below += 1;
                }
                let dy = q.y - p.y;
                if dy.abs() <= half {
                    cells[cell_of(dy) * 3 + cell_of(dx)] += 1;
                }
            }
            let total: usize = cells.iter().sum();
            let mut v = [0.0; CONTEXT_DIM];
            v[0] = above as f64;
            v[1] = below as f64;
            if total > 0 {
                for (slot, c) in v[2..].iter_mut().zip(cells) {
                    *slot = c as f64 / total as f64;
                }
            }
            v
        })
        .collect())
}

/// Assembles the selected feature columns for a preprocessed sample.
pub fn extract_features(sample: &InkSample, band: &CorpusBand, config: &FeatureConfig) -> Result<FeatureSequence> {
    if sample.points.is_empty() {
        return Err(Error::invalid(format!("sample {} has no points", sample.sample_id)));
    }
    let window = match config.window {
        Some(w) => w,
        None if band.height() > 0.0 => band.height(),
        None => 1.0,
    };
    let kinds = config.set.kinds();
    let needs_context = kinds
        .iter()
        .any(|k| matches!(k, FeatureKind::Above | FeatureKind::Below | FeatureKind::Map(_)));
    let context = if needs_context {
        offline_context(&sample.points, band, window)?
    } else {
        Vec::new()
    };
    let theta = tangent_angles(&sample.points);

    let mut values = Matrix::zeros(sample.points.len(), kinds.len());
    for (t, p) in sample.points.iter().enumerate() {
        let row = values.row_mut(t);
        for (slot, kind) in row.iter_mut().zip(kinds) {
            *slot = match *kind {
                FeatureKind::X => p.x,
                FeatureKind::Y => p.y,
                FeatureKind::Theta => theta[t],
                FeatureKind::Above => context[t][0],
                FeatureKind::Below => context[t][1],
                FeatureKind::Map(i) => context[t][2 + i as usize],
            };
        }
    }
    FeatureSequence::new(values, config.set.names())
}

/// Per-dimension training-set statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Leaves inputs unchanged.
    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, seq: &FeatureSequence) -> Result<FeatureSequence> {
        self.check(seq)?;
        let mut values = seq.values.clone();
        for t in 0..values.rows() {
            for (d, v) in values.row_mut(t).iter_mut().enumerate() {
                *v = (*v - self.mean[d]) / self.std[d];
            }
        }
        Ok(FeatureSequence {
            values,
            feature_names: seq.feature_names.clone(),
        })
    }

    pub fn invert(&self, seq: &FeatureSequence) -> Result<FeatureSequence> {
        self.check(seq)?;
        let mut values = seq.values.clone();
        for t in 0..values.rows() {
            for (d, v) in values.row_mut(t).iter_mut().enumerate() {
                *v = *v * self.std[d] + self.mean[d];
            }
        }
        Ok(FeatureSequence {
            values,
            feature_names: seq.feature_names.clone(),
        })
    }

    fn check(&self, seq: &FeatureSequence) -> Result<()> {
        if seq.dim() != self.dim() {
            return Err(Error::dims(
                format!("{} feature columns", self.dim()),
                format!("{} columns", seq.dim()),
            ));
        }
        Ok(())
    }
}

/// Mean and population standard deviation over every frame of every
/// sequence, with deviations floored at [`STD_FLOOR`].
pub fn fit_standardizer(training: &[FeatureSequence]) -> Result<Standardizer> {
    let Some(first) = training.first() else {
        return Err(Error::invalid("cannot fit a standardizer on an empty training set"));
    };
    let dim = first.dim();
    if let Some(bad) = training.iter().find(|s| s.dim() != dim) {
        return Err(Error::dims(dim, bad.dim()));
    }
    let frames: usize = training.iter().map(FeatureSequence::len).sum();
    if frames == 0 {
        return Err(Error::invalid("training set has no frames"));
    }
    let n = frames as f64;
    let mut mean = vec![0.0; dim];
    for seq in training {
        for row in seq.values.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for seq in training {
        for row in seq.values.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
    }
    let std = var.iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
    Ok(Standardizer { mean, std })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_4, PI};

    use super::*;

    fn line(xy: &[(f64, f64)]) -> Vec<RawPoint> {
        xy.iter().map(|&(x, y)| RawPoint::new(x, y, 0)).collect()
    }

    #[test]
    fn horizontal_line_angles_zero() {
        let a = tangent_angles(&line(&[(0.0, 1.0), (1.0, 1.0), (2.5, 1.0), (4.0, 1.0)]));
        assert_eq!(a, vec![0.0; 4]);
    }

    #[test]
    fn diagonal_angles_quarter_pi() {
        let a = tangent_angles(&line(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]));
        for v in a {
            assert!((v - FRAC_PI_4).abs() < 1e-15);
        }
    }

    #[test]
    fn leftward_line_is_pi_not_minus_pi() {
        let a = tangent_angles(&line(&[(0.0, -0.0), (-1.0, -0.0), (-2.0, 0.0)]));
        assert!(a.iter().all(|&v| v == PI));
    }

    #[test]
    fn lone_point_angle_zero_per_stroke() {
        let pts = vec![
            RawPoint::new(0.0, 0.0, 0),
            RawPoint::new(0.0, 1.0, 0),
            RawPoint::new(5.0, 5.0, 1),
        ];
        let a = tangent_angles(&pts);
        assert!((a[0] - PI / 2.0).abs() < 1e-15);
        assert_eq!(a[2], 0.0);
    }

    #[test]
    fn isolated_point_context() {
        let band = CorpusBand {
            baseline_y: 0.0,
            corpus_top_y: 1.0,
        };
        let c = offline_context(&line(&[(0.5, 0.5)]), &band, 1.0).unwrap();
        assert_eq!(c[0][0], 0.0);
        assert_eq!(c[0][1], 0.0);
        let mut expected = [0.0; 9];
        expected[4] = 1.0;
        assert_eq!(&c[0][2..], &expected);
    }

    #[test]
    fn hand_counted_context_table() {
        // Ten points around the origin with window 3 (cells of width 1):
        // columns split at x = -0.5 / 0.5, rows at y = -0.5 / 0.5.
        let band = CorpusBand {
            baseline_y: -0.5,
            corpus_top_y: 0.5,
        };
        let pts = line(&[
            (0.0, 0.0),   // center cell (4)
            (-1.0, -1.0), // row 0 col 0
            (1.0, -1.0),  // row 0 col 2
            (0.2, 1.2),   // row 2 col 1, above the band
            (-1.2, 1.0),  // row 2 col 0, above
            (0.0, -1.4),  // row 0 col 1, below
            (1.4, 0.3),   // row 1 col 2
            (0.4, 0.4),   // row 1 col 1
            (3.0, 0.0),   // outside the window in x
            (0.0, 2.0),   // in x range, above band, outside the square
        ]);
        let c = offline_context(&pts, &band, 3.0).unwrap();
        let v = c[0];
        // above: (0.2,1.2), (-1.2,1.0), (0.0,2.0); below: (0.0,-1.4), (-1,-1), (1,-1)
        assert_eq!(v[0], 3.0);
        assert_eq!(v[1], 3.0);
        let counts = [1.0, 1.0, 1.0, 0.0, 2.0, 1.0, 1.0, 1.0, 0.0];
        for (got, want) in v[2..].iter().zip(counts) {
            assert_eq!(*got, want / 8.0);
        }
    }

    #[test]
    fn features_shape_and_columns() {
        let s = InkSample::from_strokes(
            "f",
            &[vec![(0.0, 0.0), (1.0, 0.5), (2.0, 0.25)], vec![(0.5, 1.5), (0.5, -0.5)]],
            None,
        )
        .unwrap();
        let band = CorpusBand {
            baseline_y: 0.0,
            corpus_top_y: 1.0,
        };
        let f = extract_features(&s, &band, &FeatureConfig::default()).unwrap();
        assert_eq!(f.values.shape(), (5, 14));
        assert_eq!(f.feature_names[2], "theta");
        let theta = tangent_angles(&s.points);
        for (t, p) in s.points.iter().enumerate() {
            assert_eq!(f.values.get(t, 0), p.x);
            assert_eq!(f.values.get(t, 1), p.y);
            assert_eq!(f.values.get(t, 2), theta[t]);
        }
    }

    #[test]
    fn reduced_feature_set_by_name() {
        let set = FeatureSet::by_names(&["y", "theta", "map4"]).unwrap();
        assert_eq!(set.dim(), 3);
        assert!(FeatureSet::by_names(&["map9"]).is_err());
        assert!(FeatureSet::by_names(&["x", "x"]).is_err());
        let json = serde_json::to_string(&set).unwrap();
        assert_eq!(json, r#"["y","theta","map4"]"#);
    }

    #[test]
    fn empty_sample_rejected() {
        let s = InkSample::from_strokes("e", &[], None).unwrap();
        let band = CorpusBand {
            baseline_y: 0.0,
            corpus_top_y: 1.0,
        };
        assert!(extract_features(&s, &band, &FeatureConfig::default()).is_err());
    }

    #[test]
    fn standardizer_hand_cases() {
        let one = FeatureSequence::unnamed(Matrix::from_rows(&[[3.0, -1.0]]));
        let s = fit_standardizer(&[one]).unwrap();
        assert_eq!(s.mean, vec![3.0, -1.0]);
        assert_eq!(s.std, vec![STD_FLOOR, STD_FLOOR]);

        let two = FeatureSequence::unnamed(Matrix::from_rows(&[[0.0], [2.0]]));
        let s = fit_standardizer(&[two]).unwrap();
        assert_eq!(s.mean, vec![1.0]);
        assert_eq!(s.std, vec![1.0]);

        assert!(fit_standardizer(&[]).is_err());
    }

    #[test]
    fn standardizer_dimension_mismatch() {
        let s = Standardizer::identity(3);
        let seq = FeatureSequence::unnamed(Matrix::zeros(2, 2));
        assert!(s.apply(&seq).is_err());
    }
}
