//! Mono PCM buffers, WAV I/O, zero-crossing-aligned remixing and click-track
//! synthesis.

use std::f64::consts::PI;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("sample rate must be positive")]
    InvalidSampleRate,
    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),
    #[error("sample index {index} out of range for {len} samples")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("degenerate interval [{start}, {end})")]
    DegenerateInterval { start: usize, end: usize },
    #[error("invalid time interval ({start} s, {end} s)")]
    InvalidTimeInterval { start: f64, end: f64 },
    #[error("intervals overlap or are out of order at interval {0}")]
    UnorderedIntervals(usize),
    #[error("beat at {time} s lies outside [0, {duration}) s")]
    BeatOutsideDuration { time: f64, duration: f64 },
    #[error("unsupported WAV encoding: {bits}-bit {format}")]
    UnsupportedEncoding { bits: u16, format: &'static str },
    #[error("WAV error: {0}")]
    Wav(#[from] hound::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self, AudioError> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidSampleRate);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFiniteSample(i));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn silence(len: usize, sample_rate: u32) -> Result<Self, AudioError> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Half-open `[start, end)` range of sample indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleInterval {
    pub start: usize,
    pub end: usize,
}

impl SampleInterval {
    pub fn new(start: usize, end: usize) -> Result<Self, AudioError> {
        if start >= end {
            return Err(AudioError::DegenerateInterval { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Seconds to samples: both ends rounded half away from zero and clamped to
/// `len`.
pub fn seconds_to_interval(
    start_s: f64,
    end_s: f64,
    sample_rate: u32,
    len: usize,
) -> Result<SampleInterval, AudioError> {
    if !(start_s >= 0.0 && end_s > start_s && end_s.is_finite()) {
        return Err(AudioError::InvalidTimeInterval {
            start: start_s,
            end: end_s,
        });
    }
    let to_index = |t: f64| ((t * sample_rate as f64).round() as usize).min(len);
    SampleInterval::new(to_index(start_s), to_index(end_s))
}

#[inline]
fn non_negative(x: f32) -> bool {
    x >= 0.0
}

/// Sorted positions where the sign flips: index `i` such that `samples[i-1]`
/// and `samples[i]` fall on different sides of zero, zero counting as
/// non-negative.
#[derive(Debug, Clone)]
pub struct ZeroCrossings(Vec<usize>);

impl ZeroCrossings {
    pub fn find(samples: &[f32]) -> Self {
        Self(
            (1..samples.len())
                .filter(|&i| non_negative(samples[i - 1]) != non_negative(samples[i]))
                .collect(),
        )
    }

    pub fn positions(&self) -> &[usize] {
        &self.0
    }

    /// Closest crossing to `index` (earlier one on ties), or `index` itself
    /// when the signal never crosses zero.
    pub fn nearest(&self, index: usize) -> usize {
        let after = self.0.partition_point(|&c| c < index);
        let next = self.0.get(after).copied();
        let prev = after.checked_sub(1).map(|i| self.0[i]);
        match (prev, next) {
            (Some(p), Some(n)) => {
                if index - p <= n - index {
                    p
                } else {
                    n
                }
            }
            (Some(p), None) => p,
            (None, Some(n)) => n,
            (None, None) => index,
        }
    }
}

pub fn nearest_zero_crossing(buffer: &AudioBuffer, index: usize) -> Result<usize, AudioError> {
    if index > buffer.len() {
        return Err(AudioError::IndexOutOfRange {
            index,
            len: buffer.len(),
        });
    }
    Ok(ZeroCrossings::find(buffer.samples()).nearest(index))
}

/// Concatenates the given slices of `buffer`.
///
/// With `snap`, every interior boundary moves to its nearest zero crossing;
/// boundaries at the very start or end of the buffer stay where they are. A
/// snapped start never moves before the previous snapped end, and intervals
/// that collapse under snapping are dropped.
pub fn remix(
    buffer: &AudioBuffer,
    intervals: &[SampleInterval],
    snap: bool,
) -> Result<AudioBuffer, AudioError> {
    let len = buffer.len();
    for (i, iv) in intervals.iter().enumerate() {
        if iv.start >= iv.end {
            return Err(AudioError::DegenerateInterval {
                start: iv.start,
                end: iv.end,
            });
        }
        if iv.end > len {
            return Err(AudioError::IndexOutOfRange { index: iv.end, len });
        }
        if i > 0 && iv.start < intervals[i - 1].end {
            return Err(AudioError::UnorderedIntervals(i));
        }
    }

    let samples = buffer.samples();
    let mut out = Vec::with_capacity(intervals.iter().map(SampleInterval::len).sum());
    if !snap {
        for iv in intervals {
            out.extend_from_slice(&samples[iv.start..iv.end]);
        }
        return AudioBuffer::new(out, buffer.sample_rate());
    }

    let crossings = ZeroCrossings::find(samples);
    let snap_to = |index: usize| {
        if index == 0 || index == len {
            index
        } else {
            crossings.nearest(index)
        }
    };
    let mut prev_end = 0;
    for iv in intervals {
        let start = snap_to(iv.start).max(prev_end);
        let end = snap_to(iv.end);
        if end > start {
            out.extend_from_slice(&samples[start..end]);
            prev_end = end;
        }
    }
    AudioBuffer::new(out, buffer.sample_rate())
}

/// Largest distance any boundary of `intervals` moves when snapped.
pub fn max_snap_displacement(buffer: &AudioBuffer, intervals: &[SampleInterval]) -> usize {
    let crossings = ZeroCrossings::find(buffer.samples());
    let len = buffer.len();
    intervals
        .iter()
        .flat_map(|iv| [iv.start, iv.end])
        .filter(|&b| b != 0 && b != len)
        .map(|b| crossings.nearest(b).abs_diff(b))
        .max()
        .unwrap_or(0)
}

/// Click shape used by [`synthesize_click_track`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickSound {
    pub beat_hz: f64,
    pub downbeat_hz: f64,
    pub length_s: f64,
    pub decay_s: f64,
    pub gain: f64,
}

impl Default for ClickSound {
    fn default() -> Self {
        Self {
            beat_hz: 1000.0,
            downbeat_hz: 2000.0,
            length_s: 0.02,
            decay_s: 0.003,
            gain: 0.8,
        }
    }
}

/// Silence with a short decaying click at every beat; downbeats (position 1)
/// use the higher pitch.
pub fn synthesize_click_track(
    beats: &[f64],
    positions: &[u32],
    sample_rate: u32,
    duration_s: f64,
) -> Result<AudioBuffer, AudioError> {
    synthesize_clicks_with(
        beats,
        positions,
        sample_rate,
        duration_s,
        ClickSound::default(),
    )
}

pub fn synthesize_clicks_with(
    beats: &[f64],
    positions: &[u32],
    sample_rate: u32,
    duration_s: f64,
    sound: ClickSound,
) -> Result<AudioBuffer, AudioError> {
    if sample_rate == 0 {
        return Err(AudioError::InvalidSampleRate);
    }
    let sr = sample_rate as f64;
    let len = (duration_s * sr).round() as usize;
    let mut samples = vec![0.0f32; len];
    let click_len = (sound.length_s * sr).round() as usize;

    for (i, &t) in beats.iter().enumerate() {
        if !(t >= 0.0 && t < duration_s) {
            return Err(AudioError::BeatOutsideDuration {
                time: t,
                duration: duration_s,
            });
        }
        let freq = if positions.get(i) == Some(&1) {
            sound.downbeat_hz
        } else {
            sound.beat_hz
        };
        let onset = (t * sr).round() as usize;
        // Starts at -gain: the jump out of silence is itself a zero crossing.
        for k in 0..click_len.min(len.saturating_sub(onset)) {
            let tk = k as f64 / sr;
            let v = -sound.gain * (-tk / sound.decay_s).exp() * (2.0 * PI * freq * tk).cos();
            let s = &mut samples[onset + k];
            *s = (*s + v as f32).clamp(-1.0, 1.0);
        }
    }
    AudioBuffer::new(samples, sample_rate)
}

/// On-disk sample format for [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavEncoding {
    Pcm16,
    #[default]
    Float32,
}

/// Reads 16-bit integer or 32-bit float WAV, averaging channels to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, AudioError> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader.samples::<f32>().collect::<Result<_, _>>()?,
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<Result<_, _>>()?,
        (hound::SampleFormat::Float, bits) => {
            return Err(AudioError::UnsupportedEncoding {
                bits,
                format: "float",
            })
        }
        (hound::SampleFormat::Int, bits) => {
            return Err(AudioError::UnsupportedEncoding {
                bits,
                format: "integer",
            })
        }
    };
    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect()
    };
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Number of frames and sample rate from the header, without decoding.
pub fn wav_info(path: impl AsRef<Path>) -> Result<(u32, u32), AudioError> {
    let reader = hound::WavReader::open(path)?;
    Ok((reader.duration(), reader.spec().sample_rate))
}

pub fn write_wav(
    buffer: &AudioBuffer,
    path: impl AsRef<Path>,
    encoding: WavEncoding,
) -> Result<(), AudioError> {
    let (bits_per_sample, sample_format) = match encoding {
        WavEncoding::Pcm16 => (16, hound::SampleFormat::Int),
        WavEncoding::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate(),
        bits_per_sample,
        sample_format,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    match encoding {
        WavEncoding::Float32 => {
            for &s in buffer.samples() {
                writer.write_sample(s)?;
            }
        }
        WavEncoding::Pcm16 => {
            for &s in buffer.samples() {
                let q = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                writer.write_sample(q)?;
            }
        }
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn buf(samples: &[f32]) -> AudioBuffer {
        AudioBuffer::new(samples.to_vec(), 8000).unwrap()
    }

    /// Every crossing by definition, checked against the nearest-search.
    fn brute_nearest(samples: &[f32], index: usize) -> usize {
        let crossings: Vec<usize> = (1..samples.len())
            .filter(|&i| (samples[i - 1] >= 0.0) != (samples[i] >= 0.0))
            .collect();
        crossings
            .iter()
            .copied()
            .min_by_key(|&c| (c.abs_diff(index), c))
            .unwrap_or(index)
    }

    #[test]
    fn zero_crossing_examples() {
        assert_eq!(
            nearest_zero_crossing(&buf(&[0.5, 0.2, -0.1, -0.3]), 1).unwrap(),
            2
        );
        assert_eq!(nearest_zero_crossing(&buf(&[0.3; 10]), 5).unwrap(), 5);
        assert_eq!(
            nearest_zero_crossing(&buf(&[-0.1, 0.1, -0.1]), 1).unwrap(),
            1
        );
        // zero counts as non-negative: no crossing between 0.0 and 0.4
        assert_eq!(
            nearest_zero_crossing(&buf(&[0.0, 0.4, -0.2]), 0).unwrap(),
            2
        );
        // equidistant crossings at 1 and 3: earlier wins
        assert_eq!(
            nearest_zero_crossing(&buf(&[-1.0, 1.0, 1.0, -1.0]), 2).unwrap(),
            1
        );
        assert!(nearest_zero_crossing(&buf(&[0.1, 0.2]), 3).is_err());
        assert_eq!(nearest_zero_crossing(&buf(&[0.1, -0.2]), 2).unwrap(), 1);
    }

    #[test]
    fn seconds_to_interval_rounding() {
        assert_eq!(
            seconds_to_interval(0.5, 1.0, 4, 100).unwrap(),
            SampleInterval { start: 2, end: 4 }
        );
        assert_eq!(
            seconds_to_interval(0.0, 0.1, 8, 100).unwrap(),
            SampleInterval { start: 0, end: 1 }
        );
        assert_eq!(
            seconds_to_interval(0.0, 10.0, 8, 20).unwrap(),
            SampleInterval { start: 0, end: 20 }
        );
        assert!(seconds_to_interval(1.0, 1.0, 8, 100).is_err());
        assert!(matches!(
            seconds_to_interval(5.0, 6.0, 8, 20),
            Err(AudioError::DegenerateInterval { .. })
        ));
    }

    #[test]
    fn remix_concatenates() {
        let b = buf(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        let ivs = [
            SampleInterval::new(0, 2).unwrap(),
            SampleInterval::new(4, 6).unwrap(),
        ];
        assert_eq!(
            remix(&b, &ivs, false).unwrap().samples(),
            &[0.1, 0.2, 0.5, 0.6]
        );
        let whole = [SampleInterval::new(0, 6).unwrap()];
        assert_eq!(remix(&b, &whole, true).unwrap(), b);
        assert_eq!(remix(&b, &whole, false).unwrap(), b);
    }

    #[test]
    fn remix_rejects_bad_intervals() {
        let b = buf(&[0.0; 6]);
        let overlapping = [
            SampleInterval { start: 0, end: 3 },
            SampleInterval { start: 2, end: 4 },
        ];
        assert!(matches!(
            remix(&b, &overlapping, false),
            Err(AudioError::UnorderedIntervals(1))
        ));
        let unordered = [
            SampleInterval { start: 3, end: 4 },
            SampleInterval { start: 0, end: 1 },
        ];
        assert!(remix(&b, &unordered, false).is_err());
        let beyond = [SampleInterval { start: 3, end: 7 }];
        assert!(remix(&b, &beyond, false).is_err());
    }

    #[test]
    fn snapped_junctions_stay_smooth() {
        let sr = 8000u32;
        let freq = 100.0;
        let samples: Vec<f32> = (0..sr)
            .map(|n| (2.0 * PI * freq * n as f64 / sr as f64 + 0.3).sin() as f32)
            .collect();
        let max_step = samples
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0f32, f32::max);
        let b = AudioBuffer::new(samples, sr).unwrap();
        // boundaries deliberately mid-cycle
        let ivs = [
            SampleInterval::new(0, 1017).unwrap(),
            SampleInterval::new(2500, 4021).unwrap(),
            SampleInterval::new(5050, 7777).unwrap(),
        ];
        let plain = remix(&b, &ivs, false).unwrap();
        let worst_plain = plain
            .samples()
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0f32, f32::max);
        assert!(worst_plain > 4.0 * max_step, "unsnapped splice should jump");

        // both sides of a snapped junction sit within one step of zero
        let out = remix(&b, &ivs, true).unwrap();
        for w in out.samples().windows(2) {
            assert!((w[1] - w[0]).abs() <= 2.0 * max_step + 1e-6);
        }
        let disp = max_snap_displacement(&b, &ivs);
        let nominal: usize = ivs.iter().map(SampleInterval::len).sum();
        assert!(out.len().abs_diff(nominal) <= 2 * ivs.len() * disp);
    }

    #[test]
    fn click_track_construction() {
        let silent = synthesize_click_track(&[], &[], 8000, 1.0).unwrap();
        assert_eq!(silent.len(), 8000);
        assert!(silent.samples().iter().all(|&s| s == 0.0));

        let one = synthesize_click_track(&[0.5], &[1], 8000, 1.0).unwrap();
        let argmax = one
            .samples()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap()
            .0;
        assert!(argmax.abs_diff(4000) <= 80);
        assert!(synthesize_click_track(&[1.0], &[1], 8000, 1.0).is_err());
    }

    #[test]
    fn click_onsets_are_zero_crossings() {
        let b = synthesize_click_track(&[0.25, 0.5], &[1, 2], 8000, 1.0).unwrap();
        assert_eq!(nearest_zero_crossing(&b, 2000).unwrap(), 2000);
        assert_eq!(nearest_zero_crossing(&b, 4000).unwrap(), 4000);
    }

    #[test]
    fn wav_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let sr = 44100;
        let sine: Vec<f32> = (0..sr)
            .map(|n| (2.0 * PI * 440.0 * n as f64 / sr as f64).sin() as f32 * 0.9)
            .collect();
        let b = AudioBuffer::new(sine, sr).unwrap();

        let f32_path = dir.path().join("f.wav");
        write_wav(&b, &f32_path, WavEncoding::Float32).unwrap();
        assert_eq!(read_wav(&f32_path).unwrap(), b);
        assert_eq!(wav_info(&f32_path).unwrap(), (sr, sr));

        let i16_path = dir.path().join("i.wav");
        write_wav(&b, &i16_path, WavEncoding::Pcm16).unwrap();
        let back = read_wav(&i16_path).unwrap();
        for (a, b) in back.samples().iter().zip(b.samples()) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }

        let junk = dir.path().join("junk.wav");
        std::fs::write(&junk, b"definitely not RIFF").unwrap();
        assert!(matches!(read_wav(&junk), Err(AudioError::Wav(_))));
    }

    #[test]
    fn wav_truncated_and_stereo() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("st.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for (l, r) in [(16384i16, 0i16), (-8192, 8192), (100, 300)] {
            w.write_sample(l).unwrap();
            w.write_sample(r).unwrap();
        }
        w.finalize().unwrap();
        let mono = read_wav(&path).unwrap();
        assert_eq!(mono.samples(), &[0.25, 0.0, 200.0 / 32768.0]);

        let bytes = std::fs::read(&path).unwrap();
        let cut = dir.path().join("cut.wav");
        std::fs::write(&cut, &bytes[..bytes.len() - 3]).unwrap();
        assert!(read_wav(&cut).is_err());

        let p24 = dir.path().join("p24.wav");
        let spec24 = hound::WavSpec {
            bits_per_sample: 24,
            channels: 1,
            ..spec
        };
        let mut w = hound::WavWriter::create(&p24, spec24).unwrap();
        w.write_sample(5i32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(
            read_wav(&p24),
            Err(AudioError::UnsupportedEncoding { bits: 24, .. })
        ));
    }

    proptest! {
        #[test]
        fn nearest_matches_brute_force(
            samples in prop::collection::vec(-1.0f32..1.0, 1..64),
            frac in 0.0f64..=1.0,
        ) {
            let index = (frac * samples.len() as f64) as usize;
            let b = buf(&samples);
            prop_assert_eq!(nearest_zero_crossing(&b, index).unwrap(), brute_nearest(&samples, index));
        }

        #[test]
        fn remix_only_copies_samples(
            samples in prop::collection::vec(-1.0f32..1.0, 8..200),
            cuts in prop::collection::btree_set(0usize..200, 2..12),
            snap in any::<bool>(),
        ) {
            let len = samples.len();
            let mut points: Vec<usize> = cuts.into_iter().filter(|&c| c <= len).collect();
            points.dedup();
            let ivs: Vec<SampleInterval> = points
                .chunks_exact(2)
                .filter_map(|c| SampleInterval::new(c[0], c[1]).ok())
                .collect();
            let b = buf(&samples);
            let out = remix(&b, &ivs, snap).unwrap();
            for s in out.samples() {
                prop_assert!(samples.contains(s));
            }
            if !snap {
                prop_assert_eq!(out.len(), ivs.iter().map(SampleInterval::len).sum::<usize>());
            }
        }
    }
}
