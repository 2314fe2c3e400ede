//! Adaptive-threshold peak picking on beat/downbeat activation curves.

use std::path::Path;

use thiserror::Error;

use crate::diagnostics::Diagnostic;

#[derive(Debug, Error)]
pub enum PeaksError {
    #[error("frame rate must be positive")]
    InvalidFrameRate,
    #[error("activation {value} at frame {frame} outside [0, 1]")]
    OutOfRange { frame: usize, value: f64 },
    #[error("missing `fps=<int>` header")]
    MissingHeader,
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("invalid peak-picking parameters: {0}")]
    InvalidParams(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationCurve {
    values: Vec<f64>,
    frame_rate: f64,
}

impl ActivationCurve {
    pub fn new(values: Vec<f64>, frame_rate: f64) -> Result<Self, PeaksError> {
        if !(frame_rate > 0.0 && frame_rate.is_finite()) {
            return Err(PeaksError::InvalidFrameRate);
        }
        if let Some((frame, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(PeaksError::OutOfRange { frame, value });
        }
        Ok(Self { values, frame_rate })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Window sizes are half-widths in frames; `delta` is in activation units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakPickParams {
    pub median_half_window: usize,
    pub local_max_half_window: usize,
    pub delta: f64,
    pub min_separation: usize,
}

impl Default for PeakPickParams {
    /// Tuned for 100 fps activations.
    fn default() -> Self {
        Self {
            median_half_window: 8,
            local_max_half_window: 3,
            delta: 0.07,
            min_separation: 7,
        }
    }
}

impl PeakPickParams {
    pub fn validate(&self) -> Result<(), PeaksError> {
        if self.local_max_half_window < 1 {
            return Err(PeaksError::InvalidParams(
                "local_max_half_window must be >= 1",
            ));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(PeaksError::InvalidParams(
                "delta must be a non-negative number",
            ));
        }
        Ok(())
    }

    /// One-line description for report headers.
    pub fn describe(&self) -> String {
        format!(
            "median_half_window={} local_max_half_window={} delta={} min_separation={}",
            self.median_half_window, self.local_max_half_window, self.delta, self.min_separation
        )
    }
}

fn window(len: usize, n: usize, half: usize) -> std::ops::Range<usize> {
    n.saturating_sub(half)..(n + half + 1).min(len)
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    }
}

fn is_strict_local_max(values: &[f64], n: usize, half: usize) -> bool {
    window(values.len(), n, half).all(|m| m == n || values[n] > values[m])
}

/// Frames that are peaks of the activation curve.
///
/// A frame is a peak when it is a strict maximum of its centred window
/// (`local_max_half_window`), reaches the median of its centred window
/// (`median_half_window`) plus `delta`, and survives the spacing rule. Windows
/// are truncated at the edges.
///
/// Spacing is resolved among the frames that reach the local median (the
/// threshold with zero offset): in time order, a frame closer than
/// `min_separation` to the previous surviving frame is dropped, the earlier
/// one winning. `delta` is applied afterwards, so raising it can only remove
/// peaks.
pub fn adaptive_threshold_peaks(curve: &ActivationCurve, params: &PeakPickParams) -> Vec<usize> {
    let values = curve.values();
    let len = values.len();
    let mut peaks = Vec::new();
    let mut last_spaced: Option<usize> = None;

    for n in 0..len {
        if !is_strict_local_max(values, n, params.local_max_half_window) {
            continue;
        }
        let threshold = median(&values[window(len, n, params.median_half_window)]);
        if values[n] < threshold {
            continue;
        }
        if let Some(prev) = last_spaced {
            if n - prev < params.min_separation {
                continue;
            }
        }
        last_spaced = Some(n);
        if values[n] >= threshold + params.delta {
            peaks.push(n);
        }
    }
    peaks
}

pub fn frames_to_seconds(frames: &[usize], frame_rate: f64) -> Vec<f64> {
    frames.iter().map(|&f| f as f64 / frame_rate).collect()
}

/// Parses an activation file: an `fps=<int>` header line, then one value per
/// frame. Values outside `[0, 1]` are clamped, each with a diagnostic.
pub fn parse_activations(
    text: &str,
    source: &str,
) -> Result<(ActivationCurve, Vec<Diagnostic>), PeaksError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (header_line, header) = lines.next().ok_or(PeaksError::MissingHeader)?;
    let fps: u32 = header
        .strip_prefix("fps=")
        .ok_or(PeaksError::MissingHeader)?
        .trim()
        .parse()
        .map_err(|_| PeaksError::MalformedLine {
            line: header_line,
            reason: "fps must be a positive integer".into(),
        })?;
    if fps == 0 {
        return Err(PeaksError::InvalidFrameRate);
    }

    let mut values = Vec::new();
    let mut diagnostics = Vec::new();
    for (line, text) in lines {
        let v: f64 = text.parse().map_err(|_| PeaksError::MalformedLine {
            line,
            reason: format!("not a number: {text:?}"),
        })?;
        if !v.is_finite() {
            return Err(PeaksError::MalformedLine {
                line,
                reason: "activation must be finite".into(),
            });
        }
        let clamped = v.clamp(0.0, 1.0);
        if clamped != v {
            diagnostics.push(Diagnostic::warning(
                source,
                format!(
                    "activation {v} at frame {} clamped to {clamped}",
                    values.len()
                ),
            ));
        }
        values.push(clamped);
    }
    Ok((ActivationCurve::new(values, fps as f64)?, diagnostics))
}

pub fn load_activations(
    path: impl AsRef<Path>,
) -> Result<(ActivationCurve, Vec<Diagnostic>), PeaksError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_activations(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(values: &[f64]) -> ActivationCurve {
        ActivationCurve::new(values.to_vec(), 100.0).unwrap()
    }

    #[test]
    fn isolated_spike() {
        let params = PeakPickParams {
            median_half_window: 2,
            local_max_half_window: 2,
            delta: 0.1,
            min_separation: 0,
        };
        assert_eq!(
            adaptive_threshold_peaks(&curve(&[0.0, 0.0, 1.0, 0.0, 0.0]), &params),
            vec![2]
        );
    }

    #[test]
    fn plateau_has_no_peaks() {
        let params = PeakPickParams::default();
        assert!(adaptive_threshold_peaks(&curve(&[0.4; 50]), &params).is_empty());
        assert!(adaptive_threshold_peaks(&curve(&[]), &params).is_empty());
    }

    #[test]
    fn separation_keeps_earlier_peak() {
        let params = PeakPickParams {
            median_half_window: 2,
            local_max_half_window: 1,
            delta: 0.0,
            min_separation: 3,
        };
        let c = curve(&[0.0, 1.0, 0.0, 0.9, 0.0, 1.0, 0.0]);
        assert_eq!(adaptive_threshold_peaks(&c, &params), vec![1, 5]);
    }

    #[test]
    fn raising_delta_never_unblocks_a_later_peak() {
        let c = curve(&[0.0, 0.5, 0.0, 0.9, 0.0, 0.0, 0.0]);
        let mut params = PeakPickParams {
            median_half_window: 3,
            local_max_half_window: 1,
            delta: 0.0,
            min_separation: 3,
        };
        assert_eq!(adaptive_threshold_peaks(&c, &params), vec![1]);
        params.delta = 0.6;
        assert!(adaptive_threshold_peaks(&c, &params).is_empty());
    }

    #[test]
    fn frame_conversion() {
        assert_eq!(frames_to_seconds(&[100], 100.0), vec![1.0]);
        assert!(frames_to_seconds(&[], 100.0).is_empty());
        assert_eq!(frames_to_seconds(&[50, 150], 100.0), vec![0.5, 1.5]);
    }

    #[test]
    fn activation_files() {
        let (c, d) = parse_activations("fps=100\n0.0\n0.9\n", "a").unwrap();
        assert_eq!(c.values(), &[0.0, 0.9]);
        assert_eq!(c.frame_rate(), 100.0);
        assert!(d.is_empty());

        let (c, d) = parse_activations("fps=50\n1.2\n-0.5\n", "a").unwrap();
        assert_eq!(c.values(), &[1.0, 0.0]);
        assert_eq!(d.len(), 2);

        assert!(matches!(
            parse_activations("0.1\n0.2\n", "a"),
            Err(PeaksError::MissingHeader)
        ));
        assert!(matches!(
            parse_activations("", "a"),
            Err(PeaksError::MissingHeader)
        ));
        assert!(matches!(
            parse_activations("fps=100\n0.1\nabc\n", "a"),
            Err(PeaksError::MalformedLine { line: 3, .. })
        ));
        assert!(parse_activations("fps=0\n0.1\n", "a").is_err());
    }

    #[test]
    fn curve_invariants() {
        assert!(ActivationCurve::new(vec![0.5], 0.0).is_err());
        assert!(ActivationCurve::new(vec![1.5], 100.0).is_err());
        let bad = PeakPickParams {
            local_max_half_window: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(PeakPickParams::default().validate().is_ok());
    }
}
