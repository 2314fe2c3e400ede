//! `meteraug` command line.
//!
//! Exit status: 0 on success, 1 on a fatal error, 2 when the run completed but
//! some tracks were skipped or scored with diagnostics.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::warn;

use meteraug::audio::{synthesize_click_track, write_wav, WavEncoding};
use meteraug::evaluation::EvalParams;
use meteraug::peaks::{
    adaptive_threshold_peaks, frames_to_seconds, load_activations, PeakPickParams,
};
use meteraug::pipeline::{
    make_manifests, run_augment, run_evaluate, scan, stats, AugmentOptions, Manifest, Origin,
    SplitOptions,
};
use meteraug::{parse_beat_file, Level};

#[derive(Parser)]
#[command(
    name = "meteraug",
    version,
    about = "Meter augmentation and evaluation for beat-annotated audio"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List annotated tracks under a directory as a manifest.
    Scan {
        root: PathBuf,
        /// Write the manifest here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Track counts and hours per meter.
    Stats { root: PathBuf },
    /// Build seeded Baseline, AugF and test manifests.
    Manifest(ManifestArgs),
    /// Augment every original track of a manifest to 2/4 and/or 3/4.
    Augment(AugmentArgs),
    /// Pick peaks from an activation file and print their times in seconds.
    Peaks(PeaksArgs),
    /// Score estimates against the references of a manifest.
    Evaluate(EvaluateArgs),
    /// Render a click track for an annotation file.
    Click {
        annotation: PathBuf,
        #[arg(long)]
        duration: f64,
        #[arg(long, default_value_t = 22050)]
        sample_rate: u32,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ManifestArgs {
    root: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    fraction: f64,
    #[arg(long)]
    seed: u64,
    /// Also list this share of Baseline as a validation manifest.
    #[arg(long)]
    validation: Option<f64>,
    /// Directory the augmented tracks are (or will be) written to.
    #[arg(long, default_value = "augmented")]
    augmented_root: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "2,3")]
    targets: Vec<u32>,
    /// Output directory for baseline.tsv, augf.tsv, test.tsv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    manifest: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "2,3")]
    targets: Vec<u32>,
    #[arg(long)]
    out: PathBuf,
    /// Cut at the exact beat samples instead of the nearest zero crossings.
    #[arg(long)]
    no_snap: bool,
    /// Keep the audio after the last beat even when that beat is removed.
    #[arg(long)]
    keep_trailing: bool,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Write 16-bit PCM instead of 32-bit float.
    #[arg(long)]
    pcm16: bool,
}

#[derive(Args)]
struct PeaksArgs {
    activations: PathBuf,
    /// Frame rate for converting frames to seconds (defaults to the file header).
    #[arg(long)]
    fps: Option<f64>,
    #[arg(long, default_value_t = 0.07)]
    delta: f64,
    #[arg(long, default_value_t = 8)]
    median_window: usize,
    #[arg(long, default_value_t = 3)]
    local_window: usize,
    #[arg(long, default_value_t = 7)]
    min_sep: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Directory of `<track_id>.beats` estimate files.
    estimates: PathBuf,
    /// Manifest listing the reference annotations.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "beat")]
    level: Level,
    /// F-measure window, seconds.
    #[arg(long, default_value_t = 0.07)]
    tolerance: f64,
    #[arg(long, default_value_t = 0.175)]
    phase_tolerance: f64,
    #[arg(long, default_value_t = 0.175)]
    period_tolerance: f64,
    /// Ignore events before this many seconds.
    #[arg(long, default_value_t = 0.0)]
    skip_first: f64,
    /// Second estimates directory; deltas are reported relative to it.
    #[arg(long)]
    compare: Option<PathBuf>,
    /// Directory for the CSV outputs.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Whether the command finished without skips.
enum Outcome {
    Clean,
    Partial,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn outcome(partial: bool) -> Outcome {
    if partial {
        Outcome::Partial
    } else {
        Outcome::Clean
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Scan { root, out } => {
            let scanned = scan(&root)?;
            let manifest = Manifest {
                name: "custom".into(),
                split_seed: 0,
                records: scanned.records,
            };
            match out {
                Some(path) => manifest.write(&path)?,
                None => print!("{}", manifest.to_text()),
            }
            Ok(outcome(!scanned.skipped.is_empty()))
        }
        Command::Stats { root } => {
            let scanned = scan(&root)?;
            print!("{}", stats(&scanned.records));
            Ok(outcome(!scanned.skipped.is_empty()))
        }
        Command::Manifest(args) => manifest(args),
        Command::Augment(args) => augment(args),
        Command::Peaks(args) => peaks(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Click {
            annotation,
            duration,
            sample_rate,
            out,
        } => {
            let text = fs::read_to_string(&annotation)
                .with_context(|| format!("reading {}", annotation.display()))?;
            let a = parse_beat_file(&text)?;
            let positions = a.positions.clone().unwrap_or_default();
            let audio = synthesize_click_track(&a.beats, &positions, sample_rate, duration)?;
            write_wav(&audio, &out, WavEncoding::Float32)?;
            Ok(Outcome::Clean)
        }
    }
}

fn manifest(args: ManifestArgs) -> Result<Outcome> {
    let scanned = scan(&args.root)?;
    let options = SplitOptions {
        train_fraction: args.fraction,
        seed: args.seed,
        validation_fraction: args.validation,
        augmented_root: args.augmented_root,
        targets: args.targets,
    };
    let manifests = make_manifests(&scanned.records, &options)?;
    for m in manifests.all() {
        let path = args.out.join(format!("{}.tsv", m.name));
        m.write(&path)?;
        println!(
            "{}: {} tracks -> {}",
            m.name,
            m.records.len(),
            path.display()
        );
    }
    Ok(outcome(!scanned.skipped.is_empty()))
}

fn augment(args: AugmentArgs) -> Result<Outcome> {
    let manifest = Manifest::read(&args.manifest)?;
    let not_four: Vec<&str> = manifest
        .records
        .iter()
        .filter(|r| r.origin == Origin::Original && r.meter.map(|m| m.numerator()) != Some(4))
        .map(|r| r.track_id.as_str())
        .collect();
    if !not_four.is_empty() {
        warn!(
            "{} tracks are not annotated 4/4 and will be skipped",
            not_four.len()
        );
    }
    let options = AugmentOptions {
        targets: args.targets,
        output_root: args.out.clone(),
        snap: !args.no_snap,
        remove_trailing: !args.keep_trailing,
        workers: args.workers,
        encoding: if args.pcm16 {
            WavEncoding::Pcm16
        } else {
            WavEncoding::Float32
        },
    };
    let run = run_augment(&manifest, &options)?;
    for skip in &run.skipped {
        eprintln!("{skip}");
    }
    let produced = Manifest {
        name: "augmented".into(),
        split_seed: manifest.split_seed,
        records: run.records,
    };
    let path = args.out.join("augmented.tsv");
    produced.write(&path)?;
    println!(
        "{} augmented tracks -> {}",
        produced.records.len(),
        path.display()
    );
    Ok(outcome(!run.skipped.is_empty()))
}

fn peaks(args: PeaksArgs) -> Result<Outcome> {
    let (curve, diagnostics) = load_activations(&args.activations)
        .with_context(|| format!("reading {}", args.activations.display()))?;
    for d in &diagnostics {
        eprintln!("{d}");
    }
    let params = PeakPickParams {
        median_half_window: args.median_window,
        local_max_half_window: args.local_window,
        delta: args.delta,
        min_separation: args.min_sep,
    };
    params.validate()?;
    let fps = args.fps.unwrap_or(curve.frame_rate());
    if fps.is_nan() || fps <= 0.0 {
        bail!("--fps must be positive");
    }
    println!("# {}", params.describe());
    for t in frames_to_seconds(&adaptive_threshold_peaks(&curve, &params), fps) {
        println!("{t:.6}");
    }
    Ok(outcome(!diagnostics.is_empty()))
}

fn evaluate(args: EvaluateArgs) -> Result<Outcome> {
    let manifest = Manifest::read(&args.manifest)?;
    let params = EvalParams {
        f_tolerance: args.tolerance,
        phase_tolerance: args.phase_tolerance,
        period_tolerance: args.period_tolerance,
        skip_before: args.skip_first,
    };
    let run = run_evaluate(&args.estimates, &manifest, args.level, &params)?;
    let mut partial = run
        .diagnostics
        .iter()
        .any(|d| d.severity >= meteraug::Severity::Warning);
    for d in &run.diagnostics {
        eprintln!("{d}");
    }
    println!("# level={} {}", args.level, params.describe());
    print!("{}", run.aggregate.table());

    let level = args.level.as_str();
    if let Some(out) = &args.out {
        write_file(
            &out.join(format!("{level}_tracks.csv")),
            &run.aggregate.to_csv(),
        )?;
        write_file(
            &out.join(format!("{level}_summary.csv")),
            &run.aggregate.summary_csv(),
        )?;
    }

    if let Some(other) = &args.compare {
        let baseline = run_evaluate(other, &manifest, args.level, &params)?;
        partial |= baseline
            .diagnostics
            .iter()
            .any(|d| d.severity >= meteraug::Severity::Warning);
        let delta = run.aggregate.delta_from(&baseline.aggregate);
        println!("# delta vs {}", other.display());
        print!("{}", delta.table());
        if let Some(out) = &args.out {
            write_file(&out.join(format!("{level}_delta.csv")), &delta.to_csv())?;
        }
    }
    Ok(outcome(partial))
}
