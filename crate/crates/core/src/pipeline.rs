//! Corpus-level orchestration: scanning annotated audio, meter statistics,
//! seeded Baseline/AugF/test manifests, batch augmentation and batch
//! evaluation.
//!
//! Per-track work runs on a bounded rayon pool; every file a worker writes
//! belongs to its own track. Manifests and reports are assembled after the
//! parallel phase, in track-id order.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;
use walkdir::WalkDir;

use crate::annotation::{
    infer_meter, parse_beat_file, serialize_beat_file, validate, BeatAnnotation, TimeSignature,
};
use crate::audio::{
    read_wav, remix, seconds_to_interval, wav_info, write_wav, AudioError, WavEncoding,
};
use crate::augment::{augment_track, AugmentationSpec};
use crate::diagnostics::Diagnostic;
use crate::evaluation::{
    aggregate, evaluate_track, AggregateReport, EvalParams, EvaluationError, EvaluationReport,
    EventSequence, Level,
};

pub const ANNOTATION_EXT: &str = "beats";
pub const INTERVALS_EXT: &str = "intervals";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot read dataset root {}: {reason}", path.display())]
    UnreadableRoot { path: PathBuf, reason: String },
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("no original 4/4 tracks to build a training split from")]
    NoFourFourTracks,
    #[error("{0} split would be empty")]
    EmptySplit(&'static str),
    #[error("manifest line {line}: {reason}")]
    MalformedManifest { line: usize, reason: String },
    #[error("augmentation targets must be 2 or 3, got {0}")]
    InvalidTarget(u32),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error("worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    Original,
    /// Augmented from 4/4 to `n`/4.
    Augmented(u32),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Original => f.write_str("original"),
            Origin::Augmented(n) => write!(f, "aug{n}4"),
        }
    }
}

impl Origin {
    fn parse(s: &str) -> Option<Self> {
        if s == "original" {
            return Some(Origin::Original);
        }
        let n: u32 = s.strip_prefix("aug")?.strip_suffix('4')?.parse().ok()?;
        Some(Origin::Augmented(n))
    }

    /// Origin implied by a track id such as `blues.00009.aug34`.
    fn from_track_id(id: &str) -> Self {
        id.rsplit_once('.')
            .and_then(|(_, tag)| Origin::parse(tag))
            .filter(|o| *o != Origin::Original)
            .unwrap_or(Origin::Original)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackRecord {
    pub track_id: String,
    pub audio_path: PathBuf,
    pub annotation_path: PathBuf,
    /// Absent for beat-only annotations.
    pub meter: Option<TimeSignature>,
    /// Known once the audio exists; planned augmentations have none.
    pub duration_s: Option<f64>,
    pub origin: Origin,
}

/// Something left out of a batch, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct Skip {
    pub item: String,
    pub reason: String,
}

impl fmt::Display for Skip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "skipped {}: {}", self.item, self.reason)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScanOutcome {
    pub records: Vec<TrackRecord>,
    pub skipped: Vec<Skip>,
}

fn slash_path(path: &Path) -> String {
    path.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Meter from a parsed annotation; `None` when positions are absent or show no
/// bar transition.
fn annotation_meter(annotation: &BeatAnnotation) -> Option<TimeSignature> {
    annotation
        .positions
        .as_deref()
        .and_then(|p| infer_meter(p).ok())
}

/// Every `*.wav` under `root` with a parseable sibling `*.beats` file.
///
/// Track ids are the path relative to `root` without extension, with `/`
/// separators. Audio without a usable annotation is skipped and logged.
pub fn scan(root: impl AsRef<Path>) -> Result<ScanOutcome, PipelineError> {
    let root = root.as_ref();
    let meta = fs::metadata(root).map_err(|e| PipelineError::UnreadableRoot {
        path: root.to_path_buf(),
        reason: e.to_string(),
    })?;
    if !meta.is_dir() {
        return Err(PipelineError::UnreadableRoot {
            path: root.to_path_buf(),
            reason: "not a directory".into(),
        });
    }

    let mut outcome = ScanOutcome::default();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                warn!("scan: {e}");
                outcome.skipped.push(Skip {
                    item: e
                        .path()
                        .map(|p| p.display().to_string())
                        .unwrap_or_default(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let path = entry.path();
        let is_wav = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if !entry.file_type().is_file() || !is_wav {
            continue;
        }
        let rel = path.strip_prefix(root).unwrap_or(path).with_extension("");
        let track_id = slash_path(&rel);
        match scan_one(path, &track_id) {
            Ok(record) => outcome.records.push(record),
            Err(reason) => {
                warn!("scan: skipping {track_id}: {reason}");
                outcome.skipped.push(Skip {
                    item: track_id,
                    reason,
                });
            }
        }
    }
    outcome.records.sort_by(|a, b| a.track_id.cmp(&b.track_id));
    info!(
        "scan: {} tracks, {} skipped",
        outcome.records.len(),
        outcome.skipped.len()
    );
    Ok(outcome)
}

fn scan_one(audio_path: &Path, track_id: &str) -> Result<TrackRecord, String> {
    let annotation_path = audio_path.with_extension(ANNOTATION_EXT);
    let text = fs::read_to_string(&annotation_path)
        .map_err(|e| format!("annotation {}: {e}", annotation_path.display()))?;
    let annotation = parse_beat_file(&text).map_err(|e| format!("annotation: {e}"))?;
    let (frames, sample_rate) = wav_info(audio_path).map_err(|e| format!("audio: {e}"))?;
    Ok(TrackRecord {
        track_id: track_id.to_string(),
        audio_path: audio_path.to_path_buf(),
        annotation_path,
        meter: annotation_meter(&annotation),
        duration_s: Some(frames as f64 / sample_rate as f64),
        origin: Origin::from_track_id(track_id),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeterCount {
    pub tracks: usize,
    pub seconds: f64,
}

impl MeterCount {
    pub fn hours(&self) -> f64 {
        self.seconds / 3600.0
    }
}

/// Track counts and hours per meter. `None` collects tracks without positions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StatsTable {
    pub by_meter: BTreeMap<Option<TimeSignature>, MeterCount>,
    pub total: MeterCount,
}

pub fn stats(records: &[TrackRecord]) -> StatsTable {
    let mut table = StatsTable::default();
    for r in records {
        let seconds = r.duration_s.unwrap_or(0.0);
        let row = table.by_meter.entry(r.meter).or_default();
        row.tracks += 1;
        row.seconds += seconds;
        table.total.tracks += 1;
        table.total.seconds += seconds;
    }
    table
}

impl fmt::Display for StatsTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let line = |f: &mut fmt::Formatter<'_>, label: &str, c: &MeterCount| {
            let noun = if c.tracks == 1 { "track" } else { "tracks" };
            writeln!(f, "{label}: {} {noun}, {:.4} h", c.tracks, c.hours())
        };
        // known meters first, unknown last
        for (meter, c) in self.by_meter.iter().filter(|(m, _)| m.is_some()) {
            line(f, &meter.expect("filtered").to_string(), c)?;
        }
        if let Some(c) = self.by_meter.get(&None) {
            line(f, "unknown", c)?;
        }
        line(f, "total", &self.total)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub name: String,
    pub split_seed: u64,
    pub records: Vec<TrackRecord>,
}

impl Manifest {
    /// Header line, then `track_id<TAB>audio<TAB>annotation<TAB>meter<TAB>origin`
    /// per track. Missing meters are written as `-`.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# manifest={} seed={} tracks={}\n",
            self.name,
            self.split_seed,
            self.records.len()
        );
        for r in &self.records {
            let meter = r.meter.map_or_else(|| "-".to_string(), |m| m.to_string());
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.track_id,
                slash_path(&r.audio_path),
                slash_path(&r.annotation_path),
                meter,
                r.origin
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let mut name = String::from("custom");
        let mut split_seed = 0;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let bad = |reason: &str| PipelineError::MalformedManifest {
                line: line_no,
                reason: reason.to_string(),
            };
            if let Some(header) = line.strip_prefix('#') {
                for field in header.split_whitespace() {
                    match field.split_once('=') {
                        Some(("manifest", v)) => name = v.to_string(),
                        Some(("seed", v)) => split_seed = v.parse().map_err(|_| bad("bad seed"))?,
                        _ => {}
                    }
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 {
                return Err(bad("expected 5 tab-separated columns"));
            }
            let meter = match cols[3] {
                "-" => None,
                m => Some(m.parse().map_err(|_| bad("bad meter"))?),
            };
            let origin = Origin::parse(cols[4]).ok_or_else(|| bad("bad origin"))?;
            records.push(TrackRecord {
                track_id: cols[0].to_string(),
                audio_path: PathBuf::from(cols[1]),
                annotation_path: PathBuf::from(cols[2]),
                meter,
                duration_s: None,
                origin,
            });
        }
        Ok(Self {
            name,
            split_seed,
            records,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(path, self.to_text()).map_err(io_err(path))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(io_err(path))?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOptions {
    /// Share of the original 4/4 tracks that go to training.
    pub train_fraction: f64,
    pub seed: u64,
    /// Optional share of Baseline listed again as a validation manifest.
    pub validation_fraction: Option<f64>,
    /// Where augmented tracks live (or will be written).
    pub augmented_root: PathBuf,
    pub targets: Vec<u32>,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
            validation_fraction: None,
            augmented_root: PathBuf::from("augmented"),
            targets: vec![2, 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifests {
    pub baseline: Manifest,
    pub augf: Manifest,
    pub test: Manifest,
    pub validation: Option<Manifest>,
}

impl Manifests {
    pub fn all(&self) -> impl Iterator<Item = &Manifest> {
        [&self.baseline, &self.augf, &self.test]
            .into_iter()
            .chain(self.validation.as_ref())
    }
}

/// Output locations for one augmentation of `track_id`:
/// `(audio, annotation, interval sidecar)`.
pub fn augmented_paths(
    output_root: &Path,
    track_id: &str,
    target: u32,
) -> (PathBuf, PathBuf, PathBuf) {
    let base = format!("{track_id}.aug{target}4");
    (
        output_root.join(format!("{base}.wav")),
        output_root.join(format!("{base}.{ANNOTATION_EXT}")),
        output_root.join(format!("{base}.{INTERVALS_EXT}")),
    )
}

fn planned_augmentation(original: &TrackRecord, target: u32, output_root: &Path) -> TrackRecord {
    let (audio_path, annotation_path, _) = augmented_paths(output_root, &original.track_id, target);
    TrackRecord {
        track_id: format!("{}.aug{target}4", original.track_id),
        audio_path,
        annotation_path,
        meter: TimeSignature::new(target).ok(),
        duration_s: None,
        origin: Origin::Augmented(target),
    }
}

fn check_targets(targets: &[u32]) -> Result<(), PipelineError> {
    match targets.iter().find(|t| !(2..=3).contains(*t)) {
        Some(&t) => Err(PipelineError::InvalidTarget(t)),
        None => Ok(()),
    }
}

/// Seeded Baseline / AugF / test split.
///
/// Original 4/4 tracks are sorted by id and shuffled with a ChaCha8 stream
/// seeded from `seed`; the first `round(train_fraction * n)` form Baseline.
/// Test holds every original 2/4 and 3/4 track plus the remaining 4/4 ones.
/// AugF lists each Baseline track followed by its planned augmentations.
pub fn make_manifests(
    records: &[TrackRecord],
    options: &SplitOptions,
) -> Result<Manifests, PipelineError> {
    let fraction = options.train_fraction;
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(PipelineError::InvalidFraction(fraction));
    }
    check_targets(&options.targets)?;
    let numerator = |r: &TrackRecord| r.meter.map(TimeSignature::numerator);
    let originals = || records.iter().filter(|r| r.origin == Origin::Original);

    let mut four: Vec<&TrackRecord> = originals().filter(|r| numerator(r) == Some(4)).collect();
    if four.is_empty() {
        return Err(PipelineError::NoFourFourTracks);
    }
    four.sort_by(|a, b| a.track_id.cmp(&b.track_id));
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    four.shuffle(&mut rng);

    let n_train = (fraction * four.len() as f64).round() as usize;
    if n_train == 0 {
        return Err(PipelineError::EmptySplit("baseline"));
    }
    let (train, rest) = four.split_at(n_train.min(four.len()));

    let validation = match options.validation_fraction {
        Some(vf) if !(vf > 0.0 && vf < 1.0) => return Err(PipelineError::InvalidFraction(vf)),
        Some(vf) => {
            let n_val = (vf * train.len() as f64).round() as usize;
            if n_val == 0 {
                return Err(PipelineError::EmptySplit("validation"));
            }
            let mut val: Vec<TrackRecord> = train[train.len() - n_val..]
                .iter()
                .map(|r| (*r).clone())
                .collect();
            val.sort_by(|a, b| a.track_id.cmp(&b.track_id));
            Some(val)
        }
        None => None,
    };

    let mut baseline: Vec<TrackRecord> = train.iter().map(|r| (*r).clone()).collect();
    baseline.sort_by(|a, b| a.track_id.cmp(&b.track_id));

    let mut test: Vec<TrackRecord> = rest.iter().map(|r| (*r).clone()).collect();
    test.extend(
        originals()
            .filter(|r| matches!(numerator(r), Some(2) | Some(3)))
            .cloned(),
    );
    test.sort_by(|a, b| a.track_id.cmp(&b.track_id));
    if test.is_empty() {
        return Err(PipelineError::EmptySplit("test"));
    }

    let mut augf = Vec::with_capacity(baseline.len() * (1 + options.targets.len()));
    for r in &baseline {
        augf.push(r.clone());
        for &t in &options.targets {
            augf.push(planned_augmentation(r, t, &options.augmented_root));
        }
    }

    let manifest = |name: &str, records: Vec<TrackRecord>| Manifest {
        name: name.to_string(),
        split_seed: options.seed,
        records,
    };
    Ok(Manifests {
        baseline: manifest("baseline", baseline),
        augf: manifest("augf", augf),
        test: manifest("test", test),
        validation: validation.map(|v| manifest("validation", v)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOptions {
    pub targets: Vec<u32>,
    pub output_root: PathBuf,
    /// Snap cut points to zero crossings.
    pub snap: bool,
    /// Remove the last beat's interval up to the end of the track.
    pub remove_trailing: bool,
    pub workers: usize,
    pub encoding: WavEncoding,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            targets: vec![2, 3],
            output_root: PathBuf::from("augmented"),
            snap: true,
            remove_trailing: true,
            workers: 4,
            encoding: WavEncoding::Float32,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AugmentRun {
    pub records: Vec<TrackRecord>,
    pub skipped: Vec<Skip>,
}

fn ensure_writable(root: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(root).map_err(io_err(root))?;
    let probe = root.join(".meteraug-write-probe");
    fs::write(&probe, b"").map_err(io_err(root))?;
    fs::remove_file(&probe).map_err(io_err(root))
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))
}

/// Augments every original track of `manifest` to each target meter, writing
/// `<id>.aug<N>4.wav`, `.beats` and `.intervals` under the output root.
///
/// Tracks that fail validation or augmentation are skipped and logged; only an
/// unusable output root is fatal.
pub fn run_augment(
    manifest: &Manifest,
    options: &AugmentOptions,
) -> Result<AugmentRun, PipelineError> {
    check_targets(&options.targets)?;
    ensure_writable(&options.output_root)?;
    let pool = build_pool(options.workers)?;

    let per_track: Vec<(Vec<TrackRecord>, Vec<Skip>)> = pool.install(|| {
        manifest
            .records
            .par_iter()
            .filter(|r| r.origin == Origin::Original)
            .map(|r| augment_one(r, options))
            .collect()
    });

    let mut run = AugmentRun::default();
    for (records, skips) in per_track {
        run.records.extend(records);
        run.skipped.extend(skips);
    }
    for skip in &run.skipped {
        warn!("augment: {skip}");
    }
    run.records.sort_by(|a, b| a.track_id.cmp(&b.track_id));
    info!(
        "augment: {} outputs, {} skipped",
        run.records.len(),
        run.skipped.len()
    );
    Ok(run)
}

fn augment_one(record: &TrackRecord, options: &AugmentOptions) -> (Vec<TrackRecord>, Vec<Skip>) {
    let id = &record.track_id;
    let skip = |item: &str, reason: String| Skip {
        item: item.to_string(),
        reason,
    };
    let annotation = match fs::read_to_string(&record.annotation_path)
        .map_err(|e| e.to_string())
        .and_then(|t| parse_beat_file(&t).map_err(|e| e.to_string()))
    {
        Ok(a) => a.with_track_id(id.clone()),
        Err(e) => return (vec![], vec![skip(id, format!("annotation: {e}"))]),
    };
    let diagnostics = validate(&annotation);
    if !diagnostics.is_empty() {
        let reasons: Vec<String> = diagnostics.iter().map(|d| d.message.clone()).collect();
        return (vec![], vec![skip(id, reasons.join("; "))]);
    }
    let audio = match read_wav(&record.audio_path) {
        Ok(a) => a,
        Err(e) => return (vec![], vec![skip(id, format!("audio: {e}"))]),
    };

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for &target in &options.targets {
        let item = format!("{id}.aug{target}4");
        match augment_to(&annotation, &audio, target, options) {
            Ok(duration_s) => {
                let mut out = planned_augmentation(record, target, &options.output_root);
                out.duration_s = Some(duration_s);
                records.push(out);
            }
            Err(reason) => skipped.push(skip(&item, reason)),
        }
    }
    (records, skipped)
}

/// Writes one augmentation; returns the output duration in seconds.
fn augment_to(
    annotation: &BeatAnnotation,
    audio: &crate::audio::AudioBuffer,
    target: u32,
    options: &AugmentOptions,
) -> Result<f64, String> {
    let spec = AugmentationSpec::new(target)
        .map_err(|e| e.to_string())?
        .with_trailing_removal(options.remove_trailing);
    let result = augment_track(annotation, &spec, audio.duration()).map_err(|e| e.to_string())?;

    let sr = audio.sample_rate();
    let mut intervals = Vec::with_capacity(result.kept_intervals.len());
    for iv in &result.kept_intervals {
        match seconds_to_interval(iv.start, iv.end, sr, audio.len()) {
            Ok(s) => intervals.push(s),
            // shorter than half a sample
            Err(AudioError::DegenerateInterval { .. }) => {}
            Err(e) => return Err(e.to_string()),
        }
    }
    let remixed = remix(audio, &intervals, options.snap).map_err(|e| e.to_string())?;

    let (wav_path, beats_path, intervals_path) =
        augmented_paths(&options.output_root, &annotation.track_id, target);
    if let Some(parent) = wav_path.parent() {
        fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
    }
    write_wav(&remixed, &wav_path, options.encoding).map_err(|e| e.to_string())?;
    let text = serialize_beat_file(&result.annotation).map_err(|e| e.to_string())?;
    fs::write(&beats_path, text).map_err(|e| format!("{}: {e}", beats_path.display()))?;
    fs::write(&intervals_path, result.intervals_text())
        .map_err(|e| format!("{}: {e}", intervals_path.display()))?;
    Ok(remixed.duration())
}

#[derive(Debug, Clone)]
pub struct EvaluateRun {
    pub aggregate: AggregateReport,
    pub diagnostics: Vec<Diagnostic>,
}

/// Events of `annotation` at the given level. Downbeats need positions; a
/// beat-only file is taken to list downbeats already.
fn level_events(annotation: &BeatAnnotation, level: Level) -> Vec<f64> {
    match (level, annotation.is_beat_only()) {
        (Level::Downbeat, false) => annotation.downbeats(),
        _ => annotation.beats.clone(),
    }
}

fn load_annotation(path: &Path) -> Result<BeatAnnotation, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_beat_file(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Scores `<estimates_root>/<track_id>.beats` against every reference in the
/// manifest. Missing or unreadable estimates score zero with a diagnostic.
pub fn run_evaluate(
    estimates_root: impl AsRef<Path>,
    references: &Manifest,
    level: Level,
    params: &EvalParams,
) -> Result<EvaluateRun, PipelineError> {
    params.validate()?;
    let root = estimates_root.as_ref();
    let results: Vec<(EvaluationReport, Option<Diagnostic>)> = references
        .records
        .par_iter()
        .map(|record| evaluate_one(root, record, level, params))
        .collect();

    let mut reports = Vec::with_capacity(results.len());
    let mut diagnostics = Vec::new();
    for (report, diagnostic) in results {
        reports.push(report);
        diagnostics.extend(diagnostic);
    }
    let meters: BTreeMap<&str, TimeSignature> = references
        .records
        .iter()
        .filter_map(|r| r.meter.map(|m| (r.track_id.as_str(), m)))
        .collect();
    let aggregate = aggregate(reports, |id| meters.get(id).copied())?;
    Ok(EvaluateRun {
        aggregate,
        diagnostics,
    })
}

fn evaluate_one(
    root: &Path,
    record: &TrackRecord,
    level: Level,
    params: &EvalParams,
) -> (EvaluationReport, Option<Diagnostic>) {
    let id = record.track_id.as_str();
    let fail = |note: String| {
        let diagnostic = Diagnostic::warning(id, note.clone());
        (
            EvaluationReport::failed(id, level, *params, note),
            Some(diagnostic),
        )
    };

    let reference = match load_annotation(&record.annotation_path) {
        Ok(a) => a,
        Err(e) => return fail(format!("reference: {e}")),
    };
    if level == Level::Downbeat && reference.is_beat_only() {
        return fail("reference has no bar positions".into());
    }
    let estimate_path = root.join(format!("{id}.{ANNOTATION_EXT}"));
    let estimate = match load_annotation(&estimate_path) {
        Ok(a) => a,
        Err(e) => return fail(format!("estimate: {e}")),
    };
    let (est, refs) = match (
        EventSequence::new(level_events(&estimate, level)),
        EventSequence::new(level_events(&reference, level)),
    ) {
        (Ok(e), Ok(r)) => (e, r),
        (Err(e), _) | (_, Err(e)) => return fail(e.to_string()),
    };
    match evaluate_track(id, &est, &refs, level, params) {
        Ok(report) => {
            let diagnostic = report
                .notes
                .first()
                .map(|n| Diagnostic::new(crate::diagnostics::Severity::Info, id, n.clone()));
            (report, diagnostic)
        }
        Err(e) => fail(e.to_string()),
    }
}
