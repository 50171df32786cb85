//! Online preprocessing: duplicate erasure, Gaussian smoothing, slant
//! correction, corpus-band detection and size normalization, applied in
//! that order by [`preprocess`].

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::strokes::{split_strokes, InkSample, RawPoint};

/// Segments further than this from vertical are ignored by [`estimate_slant`].
pub const SLANT_CONE: f64 = 50.0 * std::f64::consts::PI / 180.0;

/// Half-width of the window around the dominant stroke direction that
/// [`estimate_slant`] averages over.
pub const SLANT_WINDOW: f64 = 10.0 * std::f64::consts::PI / 180.0;

/// Histogram resolution of [`find_corpus_band`].
pub const BAND_BINS: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Gaussian width in sample indices.
    pub delta: f64,
    pub target_height: f64,
    pub slant_correction_enabled: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            delta: 2.0,
            target_height: 1.0,
            slant_correction_enabled: true,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid("preprocess delta must be positive"));
        }
        if !(self.target_height > 0.0 && self.target_height.is_finite()) {
            return Err(Error::invalid("preprocess target_height must be positive"));
        }
        Ok(())
    }
}

/// Horizontal band holding the main body of the writing (y grows upward).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusBand {
    pub baseline_y: f64,
    pub corpus_top_y: f64,
}

impl CorpusBand {
    pub fn height(&self) -> f64 {
        self.corpus_top_y - self.baseline_y
    }
}

/// Collapses each run of identical consecutive positions within a stroke to
/// its first point.
pub fn remove_duplicates(points: &[RawPoint]) -> Vec<RawPoint> {
    let mut out: Vec<RawPoint> = Vec::with_capacity(points.len());
    for &p in points {
        match out.last() {
            Some(q) if q.stroke_index == p.stroke_index && q.x == p.x && q.y == p.y => {}
            _ => out.push(p),
        }
    }
    out
}

/// Unnormalized weights `exp(-m^2 / (2 delta^2))` for `m` in `-r..=r`,
/// `r = ceil(3 delta)`.
pub fn gaussian_weights(delta: f64) -> Vec<f64> {
    let r = (3.0 * delta).ceil() as i64;
    (-r..=r)
        .map(|m| (-((m * m) as f64) / (2.0 * delta * delta)).exp())
        .collect()
}

/// Smooths x and y independently within each stroke.
///
/// Near stroke ends the kernel is cut to the valid indices and renormalized,
/// so constant strokes are preserved everywhere.
pub fn gaussian_smooth(points: &[RawPoint], delta: f64) -> Result<Vec<RawPoint>> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid(format!("gaussian delta must be positive, got {delta}")));
    }
    let weights = gaussian_weights(delta);
    let radius = (weights.len() / 2) as isize;
    let mut out = Vec::with_capacity(points.len());
    for stroke in split_strokes(points) {
        let n = stroke.len() as isize;
        for l in 0..n {
            let lo = (l - radius).max(0);
            let hi = (l + radius).min(n - 1);
            let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
            for i in lo..=hi {
                let w = weights[(i - l + radius) as usize];
                let p = stroke[i as usize];
                sx += w * p.x;
                sy += w * p.y;
                sw += w;
            }
            out.push(RawPoint::new(sx / sw, sy / sw, stroke[l as usize].stroke_index));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlantEstimate {
    /// Deviation from vertical, positive when strokes lean right.
    pub angle: f64,
    /// False when no segment fell inside the acceptance cone; `angle` is 0.
    pub reliable: bool,
}

/// Dominant deviation of near-vertical strokes from vertical.
///
/// Every segment within [`SLANT_CONE`] of vertical votes with its length.
/// The window of half-width [`SLANT_WINDOW`] holding the most length picks
/// the dominant direction, and the estimate is the length-weighted mean
/// deviation of the segments inside that window. Rounded corners and
/// jittered diagonals that stray into the cone therefore cannot drag the
/// estimate away from the upright strokes.
pub fn estimate_slant(sample: &InkSample) -> SlantEstimate {
    let mut votes: Vec<(f64, f64)> = Vec::new();
    for stroke in sample.strokes() {
        for w in stroke.windows(2) {
            let (mut dx, mut dy) = (w[1].x - w[0].x, w[1].y - w[0].y);
            if dy < 0.0 {
                dx = -dx;
                dy = -dy;
            }
            let len = dx.hypot(dy);
            if !(len > 0.0) {
                continue;
            }
            let deviation = dx.atan2(dy);
            if deviation.abs() < SLANT_CONE {
                votes.push((deviation, len));
            }
        }
    }
    if votes.is_empty() {
        log::warn!(
            "sample {}: no near-vertical segments for slant estimation",
            sample.sample_id
        );
        return SlantEstimate {
            angle: 0.0,
            reliable: false,
        };
    }
    votes.sort_by(|a, b| a.0.total_cmp(&b.0));
    // sliding window over sorted deviations: the densest 2 * SLANT_WINDOW span
    let (mut best, mut best_mass) = ((0, 0), f64::NEG_INFINITY);
    let (mut hi, mut mass) = (0, 0.0);
    for lo in 0..votes.len() {
        while hi < votes.len() && votes[hi].0 - votes[lo].0 <= 2.0 * SLANT_WINDOW {
            mass += votes[hi].1;
            hi += 1;
        }
        if mass > best_mass {
            best_mass = mass;
            best = (lo, hi);
        }
        mass -= votes[lo].1;
    }
    let center = {
        let span = &votes[best.0..best.1];
        span.iter().map(|(d, l)| d * l).sum::<f64>() / span.iter().map(|(_, l)| l).sum::<f64>()
    };
    let (num, den) = votes
        .iter()
        .filter(|(d, _)| (d - center).abs() <= SLANT_WINDOW)
        .fold((0.0, 0.0), |(n, s), (d, l)| (n + d * l, s + l));
    SlantEstimate {
        angle: num / den,
        reliable: true,
    }
}

/// `x' = x - (y - baseline_y) tan(angle)`.
pub fn shear_about(sample: &InkSample, angle: f64, baseline_y: f64) -> Result<InkSample> {
    if !(angle.abs() < FRAC_PI_2) {
        return Err(Error::invalid(format!("slant angle {angle} outside (-pi/2, pi/2)")));
    }
    let t = angle.tan();
    let points = sample
        .points
        .iter()
        .map(|p| RawPoint::new(p.x - (p.y - baseline_y) * t, p.y, p.stroke_index))
        .collect();
    Ok(sample.with_points(points))
}

/// Removes a slant of `angle` by shearing about the detected baseline.
pub fn correct_slant(sample: &InkSample, angle: f64) -> Result<InkSample> {
    if !(angle.abs() < FRAC_PI_2) {
        return Err(Error::invalid(format!("slant angle {angle} outside (-pi/2, pi/2)")));
    }
    if sample.points.is_empty() {
        return Ok(sample.clone());
    }
    let band = find_corpus_band(sample)?;
    shear_about(sample, angle, band.baseline_y)
}

/// Locates the corpus band from a y-histogram of all points.
///
/// Bins are `height / 32` wide. Among the contiguous runs of bins whose count
/// exceeds half the peak count, the run with the most points wins (earliest
/// on ties); its lower and upper edges become the baseline and corpus top.
pub fn find_corpus_band(sample: &InkSample) -> Result<CorpusBand> {
    let Some(first) = sample.points.first() else {
        return Err(Error::invalid(format!(
            "sample {}: cannot find the corpus band of empty ink",
            sample.sample_id
        )));
    };
    let (lo, hi) = sample
        .points
        .iter()
        .fold((first.y, first.y), |(lo, hi), p| (lo.min(p.y), hi.max(p.y)));
    let height = hi - lo;
    if !(height > 0.0) {
        return Ok(CorpusBand {
            baseline_y: lo,
            corpus_top_y: lo,
        });
    }
    let bin = height / BAND_BINS as f64;
    let mut counts = [0usize; BAND_BINS];
    for p in &sample.points {
        let b = (((p.y - lo) / bin) as usize).min(BAND_BINS - 1);
        counts[b] += 1;
    }
    let peak = *counts.iter().max().expect("non-empty histogram");

    let mut best: Option<(usize, usize, usize)> = None;
    let mut b = 0;
    while b < BAND_BINS {
        if 2 * counts[b] > peak {
            let start = b;
            let mut total = 0;
            while b < BAND_BINS && 2 * counts[b] > peak {
                total += counts[b];
                b += 1;
            }
            if best.is_none_or(|(_, _, t)| total > t) {
                best = Some((start, b, total));
            }
        } else {
            b += 1;
        }
    }
    let (start, end, _) = best.expect("the peak bin always qualifies");
    Ok(CorpusBand {
        baseline_y: lo + start as f64 * bin,
        corpus_top_y: if end == BAND_BINS { hi } else { lo + end as f64 * bin },
    })
}

/// Scales uniformly so the band is `target_height` tall and moves the
/// baseline to `y = 0`. A zero-thickness band falls back to the total ink
/// height; ink with no height at all is only translated.
pub fn size_normalize(sample: &InkSample, band: &CorpusBand, target_height: f64) -> Result<InkSample> {
    if !(target_height > 0.0 && target_height.is_finite()) {
        return Err(Error::invalid("target_height must be positive"));
    }
    let mut reference = band.height();
    if !(reference > 0.0) {
        let (lo, hi) = sample
            .points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.y), hi.max(p.y))
            });
        reference = hi - lo;
    }
    let factor = if reference > 0.0 {
        target_height / reference
    } else {
        1.0
    };
    let points = sample
        .points
        .iter()
        .map(|p| RawPoint::new(p.x * factor, (p.y - band.baseline_y) * factor, p.stroke_index))
        .collect();
    Ok(sample.with_points(points))
}

/// Result of the full preprocessing chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub sample: InkSample,
    /// Corpus band of `sample`, i.e. after normalization.
    pub band: CorpusBand,
    pub slant: SlantEstimate,
}

/// Duplicate erasure, smoothing, slant correction, size normalization.
pub fn preprocess(sample: &InkSample, config: &PreprocessConfig) -> Result<Preprocessed> {
    config.validate()?;
    if sample.points.is_empty() {
        return Err(Error::invalid(format!("sample {} has no points", sample.sample_id)));
    }
    let deduped = sample.with_points(remove_duplicates(&sample.points));
    let smoothed = deduped.with_points(gaussian_smooth(&deduped.points, config.delta)?);
    let slant = estimate_slant(&smoothed);
    let upright = if config.slant_correction_enabled {
        correct_slant(&smoothed, slant.angle)?
    } else {
        smoothed
    };
    let band = find_corpus_band(&upright)?;
    let normalized = size_normalize(&upright, &band, config.target_height)?;
    let band = find_corpus_band(&normalized)?;
    Ok(Preprocessed {
        sample: normalized,
        band,
        slant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(xy: &[(f64, f64)]) -> Vec<RawPoint> {
        xy.iter().map(|&(x, y)| RawPoint::new(x, y, 0)).collect()
    }

    fn sample(xy: &[(f64, f64)]) -> InkSample {
        InkSample::from_strokes("t", &[xy.to_vec()], None).unwrap()
    }

    #[test]
    fn duplicates_collapse() {
        let got = remove_duplicates(&pts(&[(1.0, 2.0), (1.0, 2.0), (3.0, 4.0)]));
        assert_eq!(got, pts(&[(1.0, 2.0), (3.0, 4.0)]));
        assert!(remove_duplicates(&[]).is_empty());
        let got = remove_duplicates(&pts(&[(5.0, 5.0); 3]));
        assert_eq!(got, pts(&[(5.0, 5.0)]));
    }

    #[test]
    fn duplicates_never_merge_strokes() {
        let p = vec![RawPoint::new(1.0, 1.0, 0), RawPoint::new(1.0, 1.0, 1)];
        assert_eq!(remove_duplicates(&p), p);
    }

    #[test]
    fn smoothing_keeps_constants_and_length() {
        let p = pts(&[(3.5, -2.0); 9]);
        let s = gaussian_smooth(&p, 2.0).unwrap();
        assert_eq!(s.len(), 9);
        for q in &s {
            assert!((q.x - 3.5).abs() < 1e-12 && (q.y + 2.0).abs() < 1e-12);
        }
        assert!(gaussian_smooth(&p, 0.0).is_err());
        assert!(gaussian_smooth(&p, -1.0).is_err());
    }

    #[test]
    fn smoothing_respects_pen_up() {
        let p = vec![
            RawPoint::new(0.0, 0.0, 0),
            RawPoint::new(0.0, 0.0, 0),
            RawPoint::new(10.0, 10.0, 1),
            RawPoint::new(10.0, 10.0, 1),
        ];
        assert_eq!(gaussian_smooth(&p, 1.0).unwrap(), p);
    }

    #[test]
    fn kernel_support() {
        assert_eq!(gaussian_weights(2.0).len(), 13);
        assert_eq!(gaussian_weights(0.5).len(), 5);
        assert_eq!(gaussian_weights(2.0)[6], 1.0);
    }

    #[test]
    fn vertical_ink_has_zero_slant() {
        let s = sample(&[(0.0, 0.0), (0.0, 1.0), (0.0, 3.0), (0.0, 2.0)]);
        let e = estimate_slant(&s);
        assert!(e.reliable);
        assert_eq!(e.angle, 0.0);
    }

    #[test]
    fn horizontal_segment_is_unreliable() {
        let e = estimate_slant(&sample(&[(0.0, 0.0), (1.0, 0.0)]));
        assert!(!e.reliable);
        assert_eq!(e.angle, 0.0);
    }

    #[test]
    fn slanted_segment_measured() {
        // 0.3 rad from vertical, pointing up-right then back down.
        let (dx, dy) = (0.3f64.sin(), 0.3f64.cos());
        let e = estimate_slant(&sample(&[(0.0, 0.0), (dx, dy), (0.0, 0.0)]));
        assert!((e.angle - 0.3).abs() < 1e-12);
    }

    #[test]
    fn stray_segments_do_not_pull_the_estimate() {
        // two upright strokes outweigh one 40 degree segment
        let (dx, dy) = (40f64.to_radians().sin(), 40f64.to_radians().cos());
        let s = InkSample::from_strokes(
            "t",
            &[
                vec![(0.0, 0.0), (0.0, 1.0)],
                vec![(2.0, 0.0), (2.0, 1.0)],
                vec![(4.0, 0.0), (4.0 + dx, dy)],
            ],
            None,
        )
        .unwrap();
        assert_eq!(estimate_slant(&s).angle, 0.0);
    }

    #[test]
    fn correct_slant_zero_is_identity() {
        let s = sample(&[(0.0, 0.0), (1.0, 2.0), (3.0, 1.0)]);
        assert_eq!(correct_slant(&s, 0.0).unwrap(), s);
        assert!(correct_slant(&s, FRAC_PI_2).is_err());
    }

    #[test]
    fn shear_composition() {
        let s = sample(&[(0.0, 0.0), (1.0, 2.0), (3.0, 1.5), (-1.0, 4.0)]);
        let (a, b) = (0.2f64, -0.35f64);
        let twice = shear_about(&shear_about(&s, a, 0.5).unwrap(), b, 0.5).unwrap();
        let once = shear_about(&s, (a.tan() + b.tan()).atan(), 0.5).unwrap();
        for (p, q) in twice.points.iter().zip(&once.points) {
            assert!((p.x - q.x).abs() < 1e-12);
        }
        let back = shear_about(&shear_about(&s, a, 0.5).unwrap(), -a, 0.5).unwrap();
        for (p, q) in back.points.iter().zip(&s.points) {
            assert!((p.x - q.x).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_ink_band_spans_everything() {
        let xy: Vec<(f64, f64)> = (0..=320).map(|i| (0.0, i as f64 / 320.0)).collect();
        let band = find_corpus_band(&sample(&xy)).unwrap();
        assert_eq!(band.baseline_y, 0.0);
        assert_eq!(band.corpus_top_y, 1.0);
    }

    #[test]
    fn dense_middle_band() {
        // 80 points evenly in [0.3, 0.5], 20 sparse points spread over the
        // rest of [0, 1]. Bin width is 1/32, so the dense run covers bins
        // 9..=15 with about 11 points each while sparse bins hold at most 1.
        let mut xy: Vec<(f64, f64)> = (0..80)
            .map(|i| (i as f64, 0.3 + 0.2 * (i as f64 + 0.5) / 80.0))
            .collect();
        for i in 0..10 {
            xy.push((0.0, 0.02 * i as f64));
            xy.push((0.0, 0.6 + 0.04 * i as f64));
        }
        xy.push((0.0, 1.0));
        let band = find_corpus_band(&sample(&xy)).unwrap();
        assert!(band.baseline_y >= 0.25 && band.corpus_top_y <= 0.55, "{band:?}");
        assert!(band.baseline_y <= 0.3 + 1.0 / 32.0 && band.corpus_top_y >= 0.5 - 1.0 / 32.0);
    }

    #[test]
    fn single_point_band_is_degenerate() {
        let band = find_corpus_band(&sample(&[(2.0, 7.0)])).unwrap();
        assert_eq!(band.baseline_y, 7.0);
        assert_eq!(band.corpus_top_y, 7.0);
        let empty = InkSample::from_strokes("e", &[], None).unwrap();
        assert!(find_corpus_band(&empty).is_err());
    }

    #[test]
    fn normalize_scales_and_translates() {
        let s = sample(&[(0.0, 100.0), (50.0, 300.0)]);
        let band = CorpusBand {
            baseline_y: 100.0,
            corpus_top_y: 300.0,
        };
        let n = size_normalize(&s, &band, 100.0).unwrap();
        assert_eq!(n.points[0].y, 0.0);
        assert_eq!(n.points[1].x, 25.0);
        assert_eq!(n.points[1].y, 100.0);
        assert!(size_normalize(&s, &band, 0.0).is_err());
    }

    #[test]
    fn normalize_identity_when_already_normalized() {
        let s = sample(&[(0.3, 0.0), (0.7, 1.0), (0.1, 0.5)]);
        let band = CorpusBand {
            baseline_y: 0.0,
            corpus_top_y: 1.0,
        };
        assert_eq!(size_normalize(&s, &band, 1.0).unwrap(), s);
    }

    #[test]
    fn degenerate_band_falls_back_to_ink_height() {
        let s = sample(&[(0.0, 0.0), (0.0, 4.0)]);
        let band = CorpusBand {
            baseline_y: 0.0,
            corpus_top_y: 0.0,
        };
        let n = size_normalize(&s, &band, 2.0).unwrap();
        assert_eq!(n.points[1].y, 2.0);
    }
}
