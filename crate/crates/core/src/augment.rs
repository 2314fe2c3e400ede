//! Beat-removal meter augmentation.
//!
//! A 4/4 track becomes 2/4 or 3/4 by keeping only the bar positions
//! `{1..target}`. Two outputs are produced from the same annotation:
//!
//! * the corrected annotation: kept positions, and timestamps rebuilt by
//!   accumulating the inter-beat interval that ends at each kept beat,
//!   starting from the original time of the first kept beat;
//! * the audio intervals to keep: every removed beat takes the audio from its
//!   own onset up to the next beat (the last beat runs to the end of the
//!   track), e.g. beat 4 up to the next downbeat for 3/4.
//!
//! Audio before the first kept beat is always kept, so the first corrected
//! beat keeps its original timestamp. Under locally constant tempo the
//! corrected timestamps land exactly on the kept beats of the remixed audio;
//! [`AugmentedResult::remixed_time`] gives the exact mapping for audits.

use std::fmt;

use thiserror::Error;

use crate::annotation::{
    infer_meter, inter_beat_intervals, AnnotationError, BeatAnnotation, TimeSignature,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("target meter must be 2/4 or 3/4, got {0}/4")]
    InvalidTarget(u32),
    #[error("annotation has no bar positions")]
    BeatOnly,
    #[error("input is not 4/4 (inferred {0})")]
    NotFourFour(TimeSignature),
    #[error("bar position {position} at beat {index} exceeds 4")]
    PositionOutOfRange { index: usize, position: u32 },
    #[error("need at least 2 kept beats, found {0}")]
    TooFewKeptBeats(usize),
    #[error("track duration {duration} is shorter than the last beat {last_beat}")]
    InvalidDuration { duration: f64, last_beat: f64 },
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
}

/// Which bar positions survive an augmentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentationSpec {
    source_numerator: u32,
    target_numerator: u32,
    kept_positions: Vec<u32>,
    /// Whether the last beat's interval (up to the end of the track) is
    /// removed when that beat is removed. On by default.
    pub remove_trailing: bool,
}

impl AugmentationSpec {
    pub const SOURCE_NUMERATOR: u32 = 4;

    /// 4/4 → `target`/4, keeping positions `1..=target`.
    pub fn new(target: u32) -> Result<Self, AugmentError> {
        if !(2..=3).contains(&target) {
            return Err(AugmentError::InvalidTarget(target));
        }
        Ok(Self::keeping(target))
    }

    /// Keeps every position. Not a real augmentation: it exists as a reference
    /// point (nothing removed, annotation unchanged).
    pub fn identity() -> Self {
        Self::keeping(Self::SOURCE_NUMERATOR)
    }

    fn keeping(target: u32) -> Self {
        Self {
            source_numerator: Self::SOURCE_NUMERATOR,
            target_numerator: target,
            kept_positions: (1..=target).collect(),
            remove_trailing: true,
        }
    }

    pub fn with_trailing_removal(mut self, remove_trailing: bool) -> Self {
        self.remove_trailing = remove_trailing;
        self
    }

    pub fn source_numerator(&self) -> u32 {
        self.source_numerator
    }

    pub fn target_numerator(&self) -> u32 {
        self.target_numerator
    }

    pub fn target(&self) -> TimeSignature {
        TimeSignature::new(self.target_numerator).expect("target numerator is 2..=4")
    }

    pub fn kept_positions(&self) -> &[u32] {
        &self.kept_positions
    }

    pub fn keeps(&self, position: u32) -> bool {
        self.kept_positions.contains(&position)
    }

    /// File-name tag for outputs, e.g. `aug34`.
    pub fn file_tag(&self) -> String {
        format!("aug{}4", self.target_numerator)
    }
}

/// Half-open `[start, end)` span in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeInterval {
    pub start: f64,
    pub end: f64,
}

impl TimeInterval {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

impl fmt::Display for TimeInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6} {:.6}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedResult {
    pub target: TimeSignature,
    /// Corrected beats and positions; `track_id` is carried over.
    pub annotation: BeatAnnotation,
    /// Audio to keep, in the original timeline, ordered and disjoint.
    pub kept_intervals: Vec<TimeInterval>,
    pub removed_duration: f64,
    pub track_duration: f64,
}

impl AugmentedResult {
    pub fn corrected_beats(&self) -> &[f64] {
        &self.annotation.beats
    }

    pub fn corrected_positions(&self) -> &[u32] {
        self.annotation.positions.as_deref().unwrap_or(&[])
    }

    pub fn kept_duration(&self) -> f64 {
        kept_duration(&self.kept_intervals)
    }

    /// Where an original-timeline instant ends up after the kept intervals are
    /// concatenated. `None` if it falls in removed audio.
    pub fn remixed_time(&self, t: f64) -> Option<f64> {
        let mut offset = 0.0;
        for iv in &self.kept_intervals {
            if t >= iv.start && t < iv.end {
                return Some(offset + (t - iv.start));
            }
            offset += iv.duration();
        }
        None
    }

    /// Sidecar listing of the kept intervals, one `start end` pair per line.
    pub fn intervals_text(&self) -> String {
        self.kept_intervals
            .iter()
            .map(|iv| format!("{iv}\n"))
            .collect()
    }
}

/// Parses the `start end` interval sidecar written by
/// [`AugmentedResult::intervals_text`].
pub fn parse_intervals(text: &str) -> Result<Vec<TimeInterval>, AnnotationError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let malformed = || AnnotationError::MalformedLine {
            line: i + 1,
            reason: "expected `start end` in seconds".into(),
        };
        let mut fields = line.split_whitespace();
        let start: f64 = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(malformed)?;
        let end: f64 = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(malformed)?;
        if fields.next().is_some() || start.is_nan() || end.is_nan() || end <= start {
            return Err(malformed());
        }
        out.push(TimeInterval::new(start, end));
    }
    Ok(out)
}

fn kept_duration(intervals: &[TimeInterval]) -> f64 {
    intervals.iter().map(TimeInterval::duration).sum()
}

/// Indices of beats whose bar position is kept, in order.
pub fn select_kept_indices(positions: &[u32], spec: &AugmentationSpec) -> Vec<usize> {
    positions
        .iter()
        .enumerate()
        .filter(|(_, &p)| spec.keeps(p))
        .map(|(i, _)| i)
        .collect()
}

/// Checks the preconditions shared by all augmentation steps and returns the
/// positions and kept indices.
fn checked_input<'a>(
    annotation: &'a BeatAnnotation,
    spec: &AugmentationSpec,
) -> Result<(&'a [u32], Vec<usize>), AugmentError> {
    let positions = annotation
        .positions
        .as_deref()
        .ok_or(AugmentError::BeatOnly)?;
    if let Some((index, &position)) = positions
        .iter()
        .enumerate()
        .find(|(_, &p)| p > spec.source_numerator)
    {
        return Err(AugmentError::PositionOutOfRange { index, position });
    }
    let meter = infer_meter(positions)?;
    if meter.numerator() != spec.source_numerator {
        return Err(AugmentError::NotFourFour(meter));
    }
    let keep = select_kept_indices(positions, spec);
    if keep.len() < 2 {
        return Err(AugmentError::TooFewKeptBeats(keep.len()));
    }
    Ok((positions, keep))
}

/// Corrected beats and positions.
///
/// The first kept beat keeps its original timestamp (it need not be the first
/// beat of the track: pickups are common). Each following kept beat is placed
/// one inter-beat interval after its predecessor, using the interval that
/// ends at that beat in the original annotation.
pub fn corrected_annotations(
    annotation: &BeatAnnotation,
    spec: &AugmentationSpec,
) -> Result<BeatAnnotation, AugmentError> {
    let (positions, keep) = checked_input(annotation, spec)?;
    let ibi = inter_beat_intervals(annotation)?;
    let ibi = ibi.values();

    let mut beats = Vec::with_capacity(keep.len());
    beats.push(annotation.beats[keep[0]]);
    for &k in &keep[1..] {
        let prev = beats[beats.len() - 1];
        beats.push(prev + ibi[k]);
    }
    let kept_positions = keep.iter().map(|&k| positions[k]).collect();
    Ok(BeatAnnotation::new(
        annotation.track_id.clone(),
        beats,
        Some(kept_positions),
    )?)
}

/// Audio to retain in the original timeline.
///
/// Every beat at or after the first kept beat whose position is not kept has
/// its interval `[b_i, b_{i+1})` removed; the last beat's interval ends at
/// `track_duration` (and is only removed when `spec.remove_trailing`). The
/// result is the complement within `[0, track_duration)`, adjacent pieces
/// merged.
pub fn kept_audio_intervals(
    annotation: &BeatAnnotation,
    spec: &AugmentationSpec,
    track_duration: f64,
) -> Result<Vec<TimeInterval>, AugmentError> {
    let (positions, keep) = checked_input(annotation, spec)?;
    let beats = &annotation.beats;
    let last_beat = beats[beats.len() - 1];
    if !track_duration.is_finite() || track_duration < last_beat {
        return Err(AugmentError::InvalidDuration {
            duration: track_duration,
            last_beat,
        });
    }

    let mut kept = Vec::new();
    let mut cursor = 0.0;
    for i in keep[0]..beats.len() {
        if spec.keeps(positions[i]) {
            continue;
        }
        let end = match beats.get(i + 1) {
            Some(&next) => next,
            None if spec.remove_trailing => track_duration,
            None => continue,
        };
        let start = beats[i];
        if end <= start {
            continue;
        }
        if start > cursor {
            kept.push(TimeInterval::new(cursor, start));
        }
        cursor = end;
    }
    if track_duration > cursor {
        kept.push(TimeInterval::new(cursor, track_duration));
    }
    Ok(kept)
}

/// `track_duration - kept`, adjusted by a few ulps if needed so that
/// `kept + removed == track_duration` holds bit-exactly.
fn removed_duration(track_duration: f64, kept: f64) -> f64 {
    let mut removed = track_duration - kept;
    for _ in 0..64 {
        let total = kept + removed;
        if total == track_duration {
            break;
        }
        removed = if total < track_duration {
            removed.next_up()
        } else {
            removed.next_down()
        };
    }
    removed
}

/// Full augmentation of one track: corrected annotation plus kept audio.
pub fn augment_track(
    annotation: &BeatAnnotation,
    spec: &AugmentationSpec,
    track_duration: f64,
) -> Result<AugmentedResult, AugmentError> {
    let corrected = corrected_annotations(annotation, spec)?;
    let kept_intervals = kept_audio_intervals(annotation, spec, track_duration)?;
    let kept = kept_duration(&kept_intervals);
    Ok(AugmentedResult {
        target: spec.target(),
        annotation: corrected,
        removed_duration: removed_duration(track_duration, kept),
        kept_intervals,
        track_duration,
    })
}
