//! Beat/downbeat annotations: the two-column text format, inter-beat
//! intervals, meter inference and validation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::diagnostics::Diagnostic;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnotationError {
    #[error("annotation is empty")]
    Empty,
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("non-increasing timestamps at beat {index} ({time})")]
    NonIncreasing { index: usize, time: f64 },
    #[error("invalid timestamp {value} at beat {index}")]
    InvalidTimestamp { index: usize, value: f64 },
    #[error("invalid bar position {position} at beat {index}")]
    InvalidPosition { index: usize, position: u32 },
    #[error("{beats} beats but {positions} positions")]
    LengthMismatch { beats: usize, positions: usize },
    #[error("need at least {needed} beats, found {found}")]
    TooFewBeats { needed: usize, found: usize },
    #[error("no bar transitions found")]
    NoBarTransitions,
    #[error("unsupported meter numerator {0}")]
    UnsupportedMeter(u32),
    #[error("invalid time signature {0:?}")]
    InvalidTimeSignature(String),
}

/// Meter of a track. The beat unit is always a quarter note here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeSignature {
    numerator: u32,
    denominator: u32,
}

impl TimeSignature {
    pub const MAX_NUMERATOR: u32 = 12;

    pub fn new(numerator: u32) -> Result<Self, AnnotationError> {
        if !(1..=Self::MAX_NUMERATOR).contains(&numerator) {
            return Err(AnnotationError::UnsupportedMeter(numerator));
        }
        Ok(Self {
            numerator,
            denominator: 4,
        })
    }

    pub fn numerator(self) -> u32 {
        self.numerator
    }

    pub fn denominator(self) -> u32 {
        self.denominator
    }
}

impl fmt::Display for TimeSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

impl FromStr for TimeSignature {
    type Err = AnnotationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AnnotationError::InvalidTimeSignature(s.to_string());
        let (num, den) = s.trim().split_once('/').ok_or_else(bad)?;
        let num: u32 = num.parse().map_err(|_| bad())?;
        if den != "4" {
            return Err(bad());
        }
        TimeSignature::new(num)
    }
}

/// Beat timestamps (seconds) and, unless the source was beat-only, the bar
/// position of every beat (1 = downbeat).
///
/// Fields are public so callers can hold arbitrary data and run [`validate`]
/// on it; [`BeatAnnotation::new`] and [`parse_beat_file`] enforce the hard
/// invariants (equal lengths, strictly increasing finite non-negative
/// timestamps, positions ≥ 1).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BeatAnnotation {
    pub track_id: String,
    pub beats: Vec<f64>,
    pub positions: Option<Vec<u32>>,
}

impl BeatAnnotation {
    pub fn new(
        track_id: impl Into<String>,
        beats: Vec<f64>,
        positions: Option<Vec<u32>>,
    ) -> Result<Self, AnnotationError> {
        let annotation = Self {
            track_id: track_id.into(),
            beats,
            positions,
        };
        annotation.check()?;
        Ok(annotation)
    }

    pub fn with_track_id(mut self, track_id: impl Into<String>) -> Self {
        self.track_id = track_id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.beats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beats.is_empty()
    }

    pub fn is_beat_only(&self) -> bool {
        self.positions.is_none()
    }

    /// Timestamps of beats at bar position 1. Empty for beat-only annotations.
    pub fn downbeats(&self) -> Vec<f64> {
        match &self.positions {
            Some(positions) => self
                .beats
                .iter()
                .zip(positions)
                .filter(|(_, &p)| p == 1)
                .map(|(&t, _)| t)
                .collect(),
            None => Vec::new(),
        }
    }

    fn check(&self) -> Result<(), AnnotationError> {
        if let Some(positions) = &self.positions {
            if positions.len() != self.beats.len() {
                return Err(AnnotationError::LengthMismatch {
                    beats: self.beats.len(),
                    positions: positions.len(),
                });
            }
            if let Some(index) = positions.iter().position(|&p| p == 0) {
                return Err(AnnotationError::InvalidPosition { index, position: 0 });
            }
        }
        for (index, &t) in self.beats.iter().enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(AnnotationError::InvalidTimestamp { index, value: t });
            }
            if index > 0 && t <= self.beats[index - 1] {
                return Err(AnnotationError::NonIncreasing { index, time: t });
            }
        }
        Ok(())
    }
}

/// Inter-beat intervals with a leading zero, so `values[k]` is the gap that
/// ends at beat `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct IbiSequence(Vec<f64>);

impl IbiSequence {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Parses `<timestamp> <position>` lines (whitespace or tab separated).
///
/// Positions may be omitted, but then they must be omitted on every line, and
/// the result is beat-only. Lines are sorted by timestamp; blank lines and
/// lines starting with `#` are ignored.
pub fn parse_beat_file(text: &str) -> Result<BeatAnnotation, AnnotationError> {
    let mut rows: Vec<(f64, Option<u32>)> = Vec::new();
    let mut has_positions: Option<bool> = None;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |reason: &str| AnnotationError::MalformedLine {
            line: line_no,
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() > 2 {
            return Err(malformed("expected at most two columns"));
        }
        let time: f64 = fields[0]
            .parse()
            .map_err(|_| malformed("timestamp is not a number"))?;
        if !time.is_finite() || time < 0.0 {
            return Err(malformed("timestamp must be finite and non-negative"));
        }
        let position = match fields.get(1) {
            Some(token) => Some(
                parse_position(token)
                    .ok_or_else(|| malformed("bar position must be an integer >= 1"))?,
            ),
            None => None,
        };
        match has_positions {
            None => has_positions = Some(position.is_some()),
            Some(expected) if expected != position.is_some() => {
                return Err(malformed(
                    "bar positions present on some lines but not others",
                ));
            }
            _ => {}
        }
        rows.push((time, position));
    }

    if rows.is_empty() {
        return Err(AnnotationError::Empty);
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));

    let beats: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let positions = if has_positions == Some(true) {
        Some(rows.iter().map(|r| r.1.unwrap_or_default()).collect())
    } else {
        None
    };
    BeatAnnotation::new(String::new(), beats, positions)
}

fn parse_position(token: &str) -> Option<u32> {
    if let Ok(p) = token.parse::<u32>() {
        return (p >= 1).then_some(p);
    }
    // Some corpora write positions as floats ("1.0").
    let f: f64 = token.parse().ok()?;
    (f.fract() == 0.0 && f >= 1.0 && f <= u32::MAX as f64).then_some(f as u32)
}

/// Writes one `"{time:.6} {position}"` line per beat (or just the time for
/// beat-only annotations).
pub fn serialize_beat_file(annotation: &BeatAnnotation) -> Result<String, AnnotationError> {
    if annotation.is_empty() {
        return Err(AnnotationError::Empty);
    }
    annotation.check()?;
    let mut out = String::with_capacity(annotation.len() * 12);
    match &annotation.positions {
        Some(positions) => {
            for (t, p) in annotation.beats.iter().zip(positions) {
                out.push_str(&format!("{t:.6} {p}\n"));
            }
        }
        None => {
            for t in &annotation.beats {
                out.push_str(&format!("{t:.6}\n"));
            }
        }
    }
    Ok(out)
}

pub fn inter_beat_intervals(annotation: &BeatAnnotation) -> Result<IbiSequence, AnnotationError> {
    let beats = &annotation.beats;
    if beats.len() < 2 {
        return Err(AnnotationError::TooFewBeats {
            needed: 2,
            found: beats.len(),
        });
    }
    let mut values = Vec::with_capacity(beats.len());
    values.push(0.0);
    values.extend(beats.windows(2).map(|w| w[1] - w[0]));
    Ok(IbiSequence(values))
}

/// Bar positions after which the next position drops (a bar transition),
/// counted per position. Repeated positions (difference 0) are not transitions.
fn transition_counts(positions: &[u32]) -> BTreeMap<u32, usize> {
    let mut counts = BTreeMap::new();
    for w in positions.windows(2) {
        if w[1] < w[0] {
            *counts.entry(w[0]).or_insert(0) += 1;
        }
    }
    counts
}

/// Dominant meter of a position sequence: the position at which bars most
/// often end. Ties go to the larger numerator.
pub fn infer_meter(positions: &[u32]) -> Result<TimeSignature, AnnotationError> {
    if positions.len() < 2 {
        return Err(AnnotationError::TooFewBeats {
            needed: 2,
            found: positions.len(),
        });
    }
    let counts = transition_counts(positions);
    // BTreeMap iterates in ascending position order; max_by_key keeps the last
    // maximum, which is the larger numerator on ties.
    let (&numerator, _) = counts
        .iter()
        .max_by_key(|(_, &count)| count)
        .ok_or(AnnotationError::NoBarTransitions)?;
    TimeSignature::new(numerator)
}

/// Reports everything questionable about an annotation without failing.
pub fn validate(annotation: &BeatAnnotation) -> Vec<Diagnostic> {
    let id = annotation.track_id.as_str();
    let mut out = Vec::new();

    if annotation.beats.is_empty() {
        out.push(Diagnostic::error(id, "no beats"));
    }
    for (k, &t) in annotation.beats.iter().enumerate() {
        if !t.is_finite() || t < 0.0 {
            out.push(Diagnostic::error(
                id,
                format!("invalid timestamp {t} at index {k}"),
            ));
        } else if k > 0 {
            let prev = annotation.beats[k - 1];
            if t == prev {
                out.push(Diagnostic::error(
                    id,
                    format!("duplicate timestamp {t:.6} at index {k}"),
                ));
            } else if t < prev {
                out.push(Diagnostic::error(
                    id,
                    format!("timestamp decreases at index {k}"),
                ));
            }
        }
    }

    let Some(positions) = &annotation.positions else {
        out.push(Diagnostic::warning(
            id,
            "missing bar positions (beat-only annotation)",
        ));
        return out;
    };
    if positions.len() != annotation.beats.len() {
        out.push(Diagnostic::error(
            id,
            format!(
                "{} beats but {} positions",
                annotation.beats.len(),
                positions.len()
            ),
        ));
    }
    for (k, &p) in positions.iter().enumerate() {
        if p == 0 {
            out.push(Diagnostic::error(
                id,
                format!("invalid bar position 0 at index {k}"),
            ));
        }
    }
    for (k, w) in positions.windows(2).enumerate() {
        let (prev, cur) = (w[0], w[1]);
        if cur != prev + 1 && cur != 1 {
            out.push(Diagnostic::warning(
                id,
                format!("discontinuity at index {} ({prev} -> {cur})", k + 1),
            ));
        }
    }
    let counts = transition_counts(positions);
    if counts.len() > 1 {
        let list: Vec<String> = counts.keys().map(u32::to_string).collect();
        out.push(Diagnostic::warning(
            id,
            format!(
                "internal meter change (bars end after positions {})",
                list.join(",")
            ),
        ));
    }
    out
}
