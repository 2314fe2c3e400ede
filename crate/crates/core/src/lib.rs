//! Meter augmentation for beat/downbeat-annotated audio.
//!
//! Takes 4/4 tracks with beat timestamps and bar positions and derives 2/4 and
//! 3/4 versions by dropping beat intervals: the annotation is corrected and the
//! audio is re-spliced at zero crossings. Around that core sit meter inference,
//! activation peak picking, beat/downbeat evaluation metrics, and corpus tooling
//! (scan, statistics, seeded manifests, batch runs).

pub mod annotation;
pub mod audio;
pub mod augment;
pub mod diagnostics;
pub mod evaluation;
pub mod peaks;
pub mod pipeline;

pub use annotation::{
    infer_meter, inter_beat_intervals, parse_beat_file, serialize_beat_file, validate,
    AnnotationError, BeatAnnotation, IbiSequence, TimeSignature,
};
pub use audio::{
    nearest_zero_crossing, read_wav, remix, seconds_to_interval, synthesize_click_track, write_wav,
    AudioBuffer, AudioError, SampleInterval, WavEncoding,
};
pub use augment::{
    augment_track, corrected_annotations, kept_audio_intervals, select_kept_indices, AugmentError,
    AugmentationSpec, AugmentedResult, TimeInterval,
};
pub use diagnostics::{Diagnostic, Severity};
pub use evaluation::{
    aggregate, continuity, evaluate_track, f_measure, metrical_variants, AggregateReport,
    EvalParams, EvaluationError, EvaluationReport, EventSequence, Level, MetricalLevel,
};
pub use peaks::{
    adaptive_threshold_peaks, frames_to_seconds, load_activations, parse_activations,
    ActivationCurve, PeakPickParams, PeaksError,
};
