//! Seeded synthetic cursive words.
//!
//! Every symbol owns a glyph template: a polyline of control vertices in a
//! unit writing band (baseline `y = 0`, band top `y = 1`) built from exactly
//! vertical strokes and shallow diagonals (|dy/dx| = 1/2), with optional
//! ascender/descender stems and detached dots. Glyphs are laid out right to
//! left and joined by shallow connecting strokes into one continuous pen
//! stroke; dots follow as separate strokes. The word is then sheared by the
//! slant angle, scaled, and jittered.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::{InkSample, RawPoint, WritingDirection};
use crate::alphabet::{Alphabet, Label};
use crate::error::{Error, Result};

/// Interior points on each connecting stroke between two glyphs.
pub const CONNECTOR_POINTS: usize = 3;

const ASCENDER_TOP: f64 = 2.2;
const DESCENDER_BOTTOM: f64 = -1.2;
const DOT_ABOVE: f64 = 1.6;
const DOT_BELOW: f64 = -0.6;
const DOT_HALF_WIDTH: f64 = 0.1;
const CONNECTOR_DX: f64 = 1.0;
/// Height at which every glyph starts; glyphs end on the baseline.
const ENTRY_Y: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthStyle {
    /// Shear applied as `x' = x + y * tan(slant_angle)`.
    pub slant_angle: f64,
    pub scale: f64,
    pub jitter_std: f64,
    pub points_per_glyph: usize,
    pub rng_seed: u64,
}

impl Default for SynthStyle {
    fn default() -> Self {
        SynthStyle {
            slant_angle: 0.0,
            scale: 1.0,
            jitter_std: 0.01,
            points_per_glyph: 40,
            rng_seed: 0,
        }
    }
}

impl SynthStyle {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::invalid("synth scale must be positive"));
        }
        if !(self.jitter_std >= 0.0 && self.jitter_std.is_finite()) {
            return Err(Error::invalid("synth jitter_std must be non-negative"));
        }
        if !(self.slant_angle.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(Error::invalid("synth slant_angle must lie in (-pi/2, pi/2)"));
        }
        if self.points_per_glyph == 0 {
            return Err(Error::invalid("points_per_glyph must be positive"));
        }
        Ok(())
    }
}

/// Control geometry of one glyph in unit band coordinates, origin at the
/// glyph's entry point column.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphTemplate {
    /// Main path from `(0, ENTRY_Y)` to `(-width, 0)`.
    pub path: Vec<(f64, f64)>,
    /// Detached dots, each a two-point dash.
    pub dots: Vec<[(f64, f64); 2]>,
    pub width: f64,
}

impl GlyphTemplate {
    /// Smallest `points_per_glyph` that keeps every control vertex.
    pub fn min_points(&self) -> usize {
        self.path.len() + 2 * self.dots.len()
    }
}

/// Template for symbol `label`. Distinct for the first 105 labels; larger
/// alphabets cycle through widened variants.
pub fn glyph_template(label: Label) -> GlyphTemplate {
    let body = label % 3;
    let stems = (label / 3) % 7;
    let dots = (label / 21) % 5;
    let widen = 1.0 + 0.25 * ((label / 105) % 4) as f64;

    let mut path: Vec<(f64, f64)> = match body {
        0 => vec![(0.0, ENTRY_Y), (0.0, 1.0), (-2.0, 0.0)],
        1 => vec![(0.0, ENTRY_Y), (-1.0, 0.0), (-2.0, 0.5), (-2.0, 1.0), (-2.0, 0.0)],
        _ => vec![(0.0, ENTRY_Y), (0.0, 0.0), (-2.0, 1.0), (-2.0, 0.0)],
    };
    for p in &mut path {
        p.0 *= widen;
    }
    let width = 2.0 * widen;

    let (start_stem, end_stem) = match stems {
        0 => (None, None),
        1 => (Some(ASCENDER_TOP), None),
        2 => (None, Some(ASCENDER_TOP)),
        3 => (Some(DESCENDER_BOTTOM), None),
        4 => (None, Some(DESCENDER_BOTTOM)),
        5 => (Some(ASCENDER_TOP), Some(DESCENDER_BOTTOM)),
        _ => (Some(DESCENDER_BOTTOM), Some(ASCENDER_TOP)),
    };
    if let Some(tip) = start_stem {
        path.splice(1..1, [(0.0, tip), (0.0, ENTRY_Y)]);
    }
    if let Some(tip) = end_stem {
        path.extend([(-width, tip), (-width, 0.0)]);
    }

    let center = -width / 2.0;
    let dash = |cx: f64, y: f64| [(cx + DOT_HALF_WIDTH, y), (cx - DOT_HALF_WIDTH, y)];
    let dots = match dots {
        0 => vec![],
        1 => vec![dash(center, DOT_ABOVE)],
        2 => vec![dash(center, DOT_BELOW)],
        3 => vec![dash(center + 0.4, DOT_ABOVE), dash(center - 0.4, DOT_ABOVE)],
        _ => vec![dash(center + 0.4, DOT_BELOW), dash(center - 0.4, DOT_BELOW)],
    };
    GlyphTemplate { path, dots, width }
}

/// Renders `word` as ink.
///
/// Each glyph contributes exactly `points_per_glyph` points (all control
/// vertices plus points spread over its segments in proportion to length)
/// and each of the `len - 1` connectors contributes [`CONNECTOR_POINTS`].
pub fn synth_word(word: &[Label], style: &SynthStyle, alphabet: &Alphabet) -> Result<InkSample> {
    if word.is_empty() {
        return Err(Error::invalid("cannot synthesize an empty word"));
    }
    alphabet.check(word)?;
    style.validate()?;

    let templates: Vec<GlyphTemplate> = word.iter().map(|&l| glyph_template(l)).collect();
    if let Some(t) = templates.iter().find(|t| t.min_points() > style.points_per_glyph) {
        return Err(Error::invalid(format!(
            "points_per_glyph {} is below the {} control points of a glyph",
            style.points_per_glyph,
            t.min_points()
        )));
    }

    let mut main = Vec::new();
    let mut dots = Vec::new();
    let mut origin = 0.0;
    for (j, t) in templates.iter().enumerate() {
        let shifted: Vec<(f64, f64)> = t.path.iter().map(|&(x, y)| (x + origin, y)).collect();
        let budget = style.points_per_glyph - 2 * t.dots.len();
        main.extend(sample_polyline(&shifted, budget));
        for d in &t.dots {
            dots.push(d.map(|(x, y)| (x + origin, y)));
        }
        let end_x = origin - t.width;
        if j + 1 < templates.len() {
            let next = end_x - CONNECTOR_DX;
            for m in 1..=CONNECTOR_POINTS {
                let f = m as f64 / (CONNECTOR_POINTS + 1) as f64;
                main.push((end_x + f * (next - end_x), f * ENTRY_Y));
            }
            origin = next;
        }
    }

    let shear = style.slant_angle.tan();
    let mut rng = ChaCha8Rng::seed_from_u64(style.rng_seed);
    let noise = Normal::new(0.0, style.jitter_std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut place = |x: f64, y: f64, stroke: usize| {
        let mut px = (x + y * shear) * style.scale;
        let mut py = y * style.scale;
        if style.jitter_std > 0.0 {
            px += rng.sample(noise);
            py += rng.sample(noise);
        }
        RawPoint::new(px, py, stroke)
    };

    let mut points: Vec<RawPoint> = main.iter().map(|&(x, y)| place(x, y, 0)).collect();
    for (s, dot) in dots.iter().enumerate() {
        for &(x, y) in dot {
            points.push(place(x, y, s + 1));
        }
    }

    Ok(InkSample {
        sample_id: format!("synth-{}", style.rng_seed),
        points,
        transcription: Some(word.to_vec()),
        direction: Some(WritingDirection::Rtl),
    })
}

/// Exactly `count` points on the polyline: every vertex plus the remaining
/// points spread over segments by length (largest remainder).
fn sample_polyline(vertices: &[(f64, f64)], count: usize) -> Vec<(f64, f64)> {
    debug_assert!(count >= vertices.len());
    let lengths: Vec<f64> = vertices
        .windows(2)
        .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
        .collect();
    let total: f64 = lengths.iter().sum();
    let extra = count - vertices.len();

    let quotas: Vec<f64> = lengths.iter().map(|l| extra as f64 * l / total).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let missing = extra - alloc.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        alloc[i] += 1;
    }

    let mut out = Vec::with_capacity(count);
    for (i, w) in vertices.windows(2).enumerate() {
        out.push(w[0]);
        let n = alloc[i];
        for m in 1..=n {
            let f = m as f64 / (n + 1) as f64;
            out.push((w[0].0 + f * (w[1].0 - w[0].0), w[0].1 + f * (w[1].1 - w[0].1)));
        }
    }
    out.push(*vertices.last().expect("non-empty polyline"));
    out
}
