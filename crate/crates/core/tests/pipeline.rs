use std::fs;
use std::path::Path;

use meteraug::audio::{read_wav, synthesize_click_track, write_wav, WavEncoding};
use meteraug::pipeline::{
    make_manifests, run_augment, run_evaluate, scan, AugmentOptions, Manifest, Origin, SplitOptions,
};
use meteraug::{infer_meter, parse_beat_file, EvalParams, Level, Severity, TimeSignature};

const SR: u32 = 8000;

/// Writes `<root>/<id>.wav` (a click track) and its annotation.
fn write_track(root: &Path, id: &str, beats: &[f64], positions: Option<&[u32]>, duration: f64) {
    let wav = root.join(format!("{id}.wav"));
    fs::create_dir_all(wav.parent().unwrap()).unwrap();
    let clicks = synthesize_click_track(beats, positions.unwrap_or(&[]), SR, duration).unwrap();
    write_wav(&clicks, &wav, WavEncoding::Float32).unwrap();
    let text: String = match positions {
        Some(p) => beats
            .iter()
            .zip(p)
            .map(|(t, p)| format!("{t:.6} {p}\n"))
            .collect(),
        None => beats.iter().map(|t| format!("{t:.6}\n")).collect(),
    };
    fs::write(root.join(format!("{id}.beats")), text).unwrap();
}

fn steady(bars: usize, numerator: u32) -> (Vec<f64>, Vec<u32>) {
    let n = bars * numerator as usize;
    let beats = (0..n).map(|i| 0.25 + 0.5 * i as f64).collect();
    let positions = (0..n).map(|i| i as u32 % numerator + 1).collect();
    (beats, positions)
}

fn write_steady(root: &Path, id: &str, bars: usize, numerator: u32) {
    let (beats, positions) = steady(bars, numerator);
    let duration = beats[beats.len() - 1] + 0.5;
    write_track(root, id, &beats, Some(&positions), duration);
}

#[test]
fn scan_keeps_annotated_audio_only() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write_steady(root, "rock/a", 4, 4);
    write_steady(root, "rock/b", 4, 3);
    write_track(root, "c", &[0.5, 1.0, 1.5], None, 2.0);
    let orphan = synthesize_click_track(&[], &[], SR, 1.0).unwrap();
    write_wav(&orphan, root.join("orphan.wav"), WavEncoding::Float32).unwrap();

    let out = scan(root).unwrap();
    let ids: Vec<&str> = out.records.iter().map(|r| r.track_id.as_str()).collect();
    assert_eq!(ids, ["c", "rock/a", "rock/b"]);
    assert_eq!(out.skipped.len(), 1);
    assert_eq!(out.skipped[0].item, "orphan");
    assert_eq!(out.records[0].meter, None);
    assert_eq!(out.records[1].meter, Some(TimeSignature::new(4).unwrap()));
    assert_eq!(out.records[2].meter, Some(TimeSignature::new(3).unwrap()));
    assert!(out.records.iter().all(|r| r.origin == Origin::Original));

    let empty = tempfile::tempdir().unwrap();
    assert!(scan(empty.path()).unwrap().records.is_empty());
    assert!(scan(root.join("missing")).is_err());
}

#[test]
fn augment_writes_target_meters_and_is_idempotent() {
    let data = tempfile::tempdir().unwrap();
    write_steady(data.path(), "clean", 6, 4);
    // a 3-beat bar inside a 4/4 track
    let beats: Vec<f64> = (0..11).map(|i| 0.5 * i as f64).collect();
    write_track(
        data.path(),
        "changing",
        &beats,
        Some(&[1, 2, 3, 4, 1, 2, 3, 1, 2, 3, 4]),
        6.0,
    );
    let manifest = Manifest {
        name: "baseline".into(),
        split_seed: 0,
        records: scan(data.path()).unwrap().records,
    };

    let out = tempfile::tempdir().unwrap();
    let options = AugmentOptions {
        output_root: out.path().to_path_buf(),
        workers: 2,
        ..AugmentOptions::default()
    };
    let run = run_augment(&manifest, &options).unwrap();
    let ids: Vec<&str> = run.records.iter().map(|r| r.track_id.as_str()).collect();
    assert_eq!(ids, ["clean.aug24", "clean.aug34"]);
    assert_eq!(run.skipped.len(), 1);
    assert_eq!(run.skipped[0].item, "changing");

    for (record, target) in run.records.iter().zip([2u32, 3]) {
        assert_eq!(record.origin, Origin::Augmented(target));
        let annotation =
            parse_beat_file(&fs::read_to_string(&record.annotation_path).unwrap()).unwrap();
        let meter = infer_meter(annotation.positions.as_deref().unwrap()).unwrap();
        assert_eq!(meter.numerator(), target);
        let audio = read_wav(&record.audio_path).unwrap();
        // 24 beats at 0.5 s plus a 0.25 s lead-in; every kept beat keeps its 0.5 s
        let expected = 0.25 + 0.5 * (6 * target) as f64;
        assert!(
            (audio.duration() - expected).abs() < 0.01,
            "{}",
            audio.duration()
        );
        assert_eq!(record.duration_s, Some(audio.duration()));
        assert!(record.annotation_path.with_extension("intervals").exists());
    }

    let snapshot =
        |paths: &[&Path]| -> Vec<Vec<u8>> { paths.iter().map(|p| fs::read(p).unwrap()).collect() };
    let files: Vec<_> = run
        .records
        .iter()
        .flat_map(|r| [r.audio_path.clone(), r.annotation_path.clone()])
        .collect();
    let refs: Vec<&Path> = files.iter().map(|p| p.as_path()).collect();
    let before = snapshot(&refs);
    let again = run_augment(&manifest, &options).unwrap();
    assert_eq!(again.records, run.records);
    assert_eq!(snapshot(&refs), before);
}

#[test]
fn planned_augmentations_match_written_outputs() {
    let data = tempfile::tempdir().unwrap();
    for i in 0..5 {
        write_steady(data.path(), &format!("four/{i}"), 3, 4);
    }
    write_steady(data.path(), "three/0", 3, 3);
    let records = scan(data.path()).unwrap().records;
    let out = tempfile::tempdir().unwrap();
    let split = SplitOptions {
        train_fraction: 0.6,
        seed: 3,
        augmented_root: out.path().to_path_buf(),
        ..SplitOptions::default()
    };
    let manifests = make_manifests(&records, &split).unwrap();
    assert_eq!(manifests.baseline.records.len(), 3);
    assert_eq!(manifests.test.records.len(), 3);

    let run = run_augment(
        &manifests.baseline,
        &AugmentOptions {
            output_root: out.path().to_path_buf(),
            ..AugmentOptions::default()
        },
    )
    .unwrap();
    let mut planned: Vec<_> = manifests
        .augf
        .records
        .iter()
        .filter(|r| r.origin != Origin::Original)
        .map(|r| {
            (
                r.track_id.clone(),
                r.audio_path.clone(),
                r.annotation_path.clone(),
            )
        })
        .collect();
    planned.sort();
    let written: Vec<_> = run
        .records
        .iter()
        .map(|r| {
            (
                r.track_id.clone(),
                r.audio_path.clone(),
                r.annotation_path.clone(),
            )
        })
        .collect();
    assert_eq!(planned, written);
}

#[test]
fn evaluate_identity_missing_and_compare() {
    let data = tempfile::tempdir().unwrap();
    write_steady(data.path(), "a", 8, 4);
    write_steady(data.path(), "b", 8, 3);
    let manifest = Manifest {
        name: "test".into(),
        split_seed: 0,
        records: scan(data.path()).unwrap().records,
    };
    let params = EvalParams::default();

    for level in [Level::Beat, Level::Downbeat] {
        let run = run_evaluate(data.path(), &manifest, level, &params).unwrap();
        assert!(run.diagnostics.is_empty());
        let m = &run.aggregate.overall;
        assert_eq!([m.f_measure, m.cmlt, m.cmlc, m.amlt, m.amlc], [1.0; 5]);
        assert_eq!(run.aggregate.by_meter.len(), 2);
        let delta = run.aggregate.delta_from(&run.aggregate);
        assert_eq!(delta.overall.table_columns(), [0.0; 5]);
    }

    let estimates = tempfile::tempdir().unwrap();
    fs::copy(
        data.path().join("a.beats"),
        estimates.path().join("a.beats"),
    )
    .unwrap();
    let run = run_evaluate(estimates.path(), &manifest, Level::Beat, &params).unwrap();
    assert_eq!(run.aggregate.overall.f_measure, 0.5);
    assert_eq!(run.diagnostics.len(), 1);
    assert_eq!(run.diagnostics[0].track_id, "b");
    assert_eq!(run.diagnostics[0].severity, Severity::Warning);
    let csv = run.aggregate.to_csv();
    assert!(csv.starts_with("# f_tolerance=0.07"));
    assert_eq!(csv.lines().count(), 4);
}
