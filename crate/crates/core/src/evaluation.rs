//! Beat and downbeat evaluation: F-measure and the continuity family
//! (CMLc, CMLt, AMLc, AMLt), per track and aggregated per meter.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::annotation::TimeSignature;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvaluationError {
    #[error("event times must be finite, non-negative and strictly increasing (index {0})")]
    InvalidEvents(usize),
    #[error("need at least {needed} events, found {found}")]
    TooFewEvents { needed: usize, found: usize },
    #[error("invalid tolerance: {0}")]
    InvalidTolerance(&'static str),
    #[error("no reports to aggregate")]
    NoReports,
    #[error("unknown level {0:?} (expected beat or downbeat)")]
    UnknownLevel(String),
}

/// Strictly increasing, non-negative event times in seconds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventSequence(Vec<f64>);

impl EventSequence {
    pub fn new(times: Vec<f64>) -> Result<Self, EvaluationError> {
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() || t < 0.0 || (i > 0 && t <= times[i - 1]) {
                return Err(EvaluationError::InvalidEvents(i));
            }
        }
        Ok(Self(times))
    }

    pub fn times(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Events at or after `t`.
    pub fn from_time(&self, t: f64) -> Self {
        Self(self.0.iter().copied().filter(|&x| x >= t).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Beat,
    Downbeat,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Beat => "beat",
            Level::Downbeat => "downbeat",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = EvaluationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "beat" => Ok(Level::Beat),
            "downbeat" => Ok(Level::Downbeat),
            other => Err(EvaluationError::UnknownLevel(other.to_string())),
        }
    }
}

/// Tolerances used by every metric; recorded in each report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalParams {
    /// Half-width of the F-measure matching window, seconds.
    pub f_tolerance: f64,
    /// Phase tolerance, as a fraction of the local inter-annotation interval.
    pub phase_tolerance: f64,
    /// Period tolerance, as a relative deviation from the annotation interval.
    pub period_tolerance: f64,
    /// Events before this time (seconds) are ignored on both sides.
    pub skip_before: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            f_tolerance: 0.07,
            phase_tolerance: 0.175,
            period_tolerance: 0.175,
            skip_before: 0.0,
        }
    }
}

impl EvalParams {
    pub fn validate(&self) -> Result<(), EvaluationError> {
        if self.f_tolerance.is_nan() || self.f_tolerance <= 0.0 {
            return Err(EvaluationError::InvalidTolerance(
                "f_tolerance must be positive",
            ));
        }
        let unit = |x: f64| x > 0.0 && x < 1.0;
        if !unit(self.phase_tolerance) || !unit(self.period_tolerance) {
            return Err(EvaluationError::InvalidTolerance(
                "phase and period tolerances must lie in (0, 1)",
            ));
        }
        if self.skip_before.is_nan() || self.skip_before < 0.0 {
            return Err(EvaluationError::InvalidTolerance(
                "skip_before must be >= 0",
            ));
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        format!(
            "f_tolerance={} phase_tolerance={} period_tolerance={} skip_before={}",
            self.f_tolerance, self.phase_tolerance, self.period_tolerance, self.skip_before
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FMeasure {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub matches: usize,
}

fn within(a: f64, b: f64, tolerance: f64) -> bool {
    (a - b).abs() <= tolerance
}

/// Number of one-to-one matches with `|e - r| <= tolerance`.
///
/// References are visited in time order; each takes the earliest still
/// unmatched estimate inside its window. On sorted points this greedy choice
/// yields a maximum matching.
pub fn count_matches(estimate: &[f64], reference: &[f64], tolerance: f64) -> usize {
    let mut next = 0;
    let mut matches = 0;
    for &r in reference {
        while next < estimate.len() && estimate[next] < r && !within(estimate[next], r, tolerance) {
            next += 1;
        }
        if next < estimate.len() && within(estimate[next], r, tolerance) {
            matches += 1;
            next += 1;
        }
    }
    matches
}

pub fn f_measure(estimate: &EventSequence, reference: &EventSequence, tolerance: f64) -> FMeasure {
    let matches = count_matches(estimate.times(), reference.times(), tolerance);
    let ratio = |n: usize| {
        if n == 0 {
            0.0
        } else {
            matches as f64 / n as f64
        }
    };
    let precision = ratio(estimate.len());
    let recall = ratio(reference.len());
    let f_measure = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    FMeasure {
        precision,
        recall,
        f_measure,
        matches,
    }
}

/// Metrical interpretations accepted by the AML* scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MetricalLevel {
    Reference,
    Offbeat,
    DoubleTempo,
    HalfTempoEven,
    HalfTempoOdd,
}

impl MetricalLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricalLevel::Reference => "reference",
            MetricalLevel::Offbeat => "offbeat",
            MetricalLevel::DoubleTempo => "double",
            MetricalLevel::HalfTempoEven => "half-even",
            MetricalLevel::HalfTempoOdd => "half-odd",
        }
    }
}

/// The reference and its allowed metrical variants.
///
/// The offbeat variant places an event halfway through every interval and
/// extrapolates one more half-interval after the last reference event, so it
/// has as many events as the reference.
pub fn metrical_variants(
    reference: &EventSequence,
) -> Result<Vec<(MetricalLevel, EventSequence)>, EvaluationError> {
    let r = reference.times();
    if r.len() < 2 {
        return Err(EvaluationError::TooFewEvents {
            needed: 2,
            found: r.len(),
        });
    }
    let midpoints: Vec<f64> = r.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect();

    let mut offbeat = midpoints.clone();
    let n = r.len();
    offbeat.push(r[n - 1] + (r[n - 1] - r[n - 2]) / 2.0);

    let mut double = Vec::with_capacity(2 * n - 1);
    for (i, &t) in r.iter().enumerate() {
        double.push(t);
        if let Some(&m) = midpoints.get(i) {
            double.push(m);
        }
    }

    let half_even = r.iter().copied().step_by(2).collect();
    let half_odd = r.iter().copied().skip(1).step_by(2).collect();

    Ok(vec![
        (MetricalLevel::Reference, reference.clone()),
        (MetricalLevel::Offbeat, EventSequence(offbeat)),
        (MetricalLevel::DoubleTempo, EventSequence(double)),
        (MetricalLevel::HalfTempoEven, EventSequence(half_even)),
        (MetricalLevel::HalfTempoOdd, EventSequence(half_odd)),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContinuityScores {
    pub cmlc: f64,
    pub cmlt: f64,
    pub amlc: f64,
    pub amlt: f64,
}

/// Interval ending at each event; the first event borrows the interval that
/// follows it.
fn backward_intervals(t: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(t.len());
    out.push(t[1] - t[0]);
    out.extend(t.windows(2).map(|w| w[1] - w[0]));
    out
}

fn closest_index(sorted: &[f64], x: f64) -> usize {
    let i = sorted.partition_point(|&v| v < x);
    if i == 0 {
        0
    } else if i == sorted.len() || x - sorted[i - 1] <= sorted[i] - x {
        i - 1
    } else {
        i
    }
}

/// Per-estimate correctness against one annotation sequence: the nearest
/// annotation is within `phase_tol` of its interval, and the estimate's own
/// interval is within `period_tol` of that annotation interval.
fn correct_flags(
    estimate: &[f64],
    annotations: &[f64],
    phase_tol: f64,
    period_tol: f64,
) -> Vec<bool> {
    let det_intervals = backward_intervals(estimate);
    let ann_intervals = backward_intervals(annotations);
    estimate
        .iter()
        .zip(&det_intervals)
        .map(|(&d, &det_interval)| {
            let j = closest_index(annotations, d);
            let ann_interval = ann_intervals[j];
            let phase_ok = (d - annotations[j]).abs() <= ann_interval * phase_tol;
            let period_ok = (1.0 - det_interval / ann_interval).abs() <= period_tol;
            phase_ok && period_ok
        })
        .collect()
}

/// (longest-run fraction, total fraction) against one annotation sequence.
fn continuity_against(
    estimate: &[f64],
    annotations: &[f64],
    phase_tol: f64,
    period_tol: f64,
) -> (f64, f64) {
    if estimate.len() < 2 || annotations.len() < 2 {
        return (0.0, 0.0);
    }
    let flags = correct_flags(estimate, annotations, phase_tol, period_tol);
    let mut longest = 0usize;
    let mut run = 0usize;
    let mut total = 0usize;
    for ok in flags {
        if ok {
            run += 1;
            total += 1;
            longest = longest.max(run);
        } else {
            run = 0;
        }
    }
    let denom = estimate.len().max(annotations.len()) as f64;
    (longest as f64 / denom, total as f64 / denom)
}

/// CML* against the reference, AML* as the best over [`metrical_variants`].
///
/// An estimate counts as correct when it is within `phase_tol` (relative to
/// the local annotation interval) of its nearest annotation and its own
/// inter-beat interval is within `period_tol` of that annotation interval.
/// `*c` is the longest run of consecutive correct estimates, `*t` the total;
/// both are divided by the longer of the two sequences. Fewer than two events
/// on either side gives all zeros and a note.
pub fn continuity(
    estimate: &EventSequence,
    reference: &EventSequence,
    phase_tol: f64,
    period_tol: f64,
) -> (ContinuityScores, Option<String>) {
    if estimate.len() < 2 || reference.len() < 2 {
        let note = format!(
            "continuity needs two events per side (estimate {}, reference {})",
            estimate.len(),
            reference.len()
        );
        return (ContinuityScores::default(), Some(note));
    }
    let est = estimate.times();
    let (cmlc, cmlt) = continuity_against(est, reference.times(), phase_tol, period_tol);
    let variants = metrical_variants(reference).expect("reference has two events");
    let (mut amlc, mut amlt) = (0.0f64, 0.0f64);
    for (_, variant) in &variants {
        let (c, t) = continuity_against(est, variant.times(), phase_tol, period_tol);
        amlc = amlc.max(c);
        amlt = amlt.max(t);
    }
    (
        ContinuityScores {
            cmlc,
            cmlt,
            amlc,
            amlt,
        },
        None,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub track_id: String,
    pub level: Level,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub cmlc: f64,
    pub cmlt: f64,
    pub amlc: f64,
    pub amlt: f64,
    pub params: EvalParams,
    pub notes: Vec<String>,
}

impl EvaluationReport {
    /// All-zero report for a track that could not be evaluated.
    pub fn failed(track_id: &str, level: Level, params: EvalParams, note: String) -> Self {
        Self {
            track_id: track_id.to_string(),
            level,
            precision: 0.0,
            recall: 0.0,
            f_measure: 0.0,
            cmlc: 0.0,
            cmlt: 0.0,
            amlc: 0.0,
            amlt: 0.0,
            params,
            notes: vec![note],
        }
    }
}

pub fn evaluate_track(
    track_id: &str,
    estimate: &EventSequence,
    reference: &EventSequence,
    level: Level,
    params: &EvalParams,
) -> Result<EvaluationReport, EvaluationError> {
    params.validate()?;
    let (estimate, reference) = if params.skip_before > 0.0 {
        (
            estimate.from_time(params.skip_before),
            reference.from_time(params.skip_before),
        )
    } else {
        (estimate.clone(), reference.clone())
    };
    let f = f_measure(&estimate, &reference, params.f_tolerance);
    let (c, note) = continuity(
        &estimate,
        &reference,
        params.phase_tolerance,
        params.period_tolerance,
    );
    Ok(EvaluationReport {
        track_id: track_id.to_string(),
        level,
        precision: f.precision,
        recall: f.recall,
        f_measure: f.f_measure,
        cmlc: c.cmlc,
        cmlt: c.cmlt,
        amlc: c.amlc,
        amlt: c.amlt,
        params: *params,
        notes: note.into_iter().collect(),
    })
}

/// Unweighted means over a group of reports.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricMeans {
    pub tracks: usize,
    pub f_measure: f64,
    pub precision: f64,
    pub recall: f64,
    pub cmlt: f64,
    pub cmlc: f64,
    pub amlt: f64,
    pub amlc: f64,
}

impl MetricMeans {
    fn of<'a>(reports: impl IntoIterator<Item = &'a EvaluationReport>) -> Self {
        let mut m = MetricMeans::default();
        for r in reports {
            m.tracks += 1;
            m.f_measure += r.f_measure;
            m.precision += r.precision;
            m.recall += r.recall;
            m.cmlt += r.cmlt;
            m.cmlc += r.cmlc;
            m.amlt += r.amlt;
            m.amlc += r.amlc;
        }
        if m.tracks > 0 {
            let n = m.tracks as f64;
            for v in m.values_mut() {
                *v /= n;
            }
        }
        m
    }

    fn values_mut(&mut self) -> [&mut f64; 7] {
        [
            &mut self.f_measure,
            &mut self.precision,
            &mut self.recall,
            &mut self.cmlt,
            &mut self.cmlc,
            &mut self.amlt,
            &mut self.amlc,
        ]
    }

    /// `self - baseline`, metric by metric; `tracks` is taken from `self`.
    pub fn minus(&self, baseline: &MetricMeans) -> MetricMeans {
        MetricMeans {
            tracks: self.tracks,
            f_measure: self.f_measure - baseline.f_measure,
            precision: self.precision - baseline.precision,
            recall: self.recall - baseline.recall,
            cmlt: self.cmlt - baseline.cmlt,
            cmlc: self.cmlc - baseline.cmlc,
            amlt: self.amlt - baseline.amlt,
            amlc: self.amlc - baseline.amlc,
        }
    }

    /// Table columns: F1, CMLt, CMLc, AMLt, AMLc.
    pub fn table_columns(&self) -> [f64; 5] {
        [self.f_measure, self.cmlt, self.cmlc, self.amlt, self.amlc]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub reports: Vec<EvaluationReport>,
    pub overall: MetricMeans,
    /// Means per reference meter; tracks of unknown meter only count overall.
    pub by_meter: BTreeMap<TimeSignature, MetricMeans>,
}

/// Differences between two aggregates (this run minus a baseline).
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateDelta {
    pub overall: MetricMeans,
    pub by_meter: BTreeMap<TimeSignature, MetricMeans>,
}

pub fn aggregate(
    reports: Vec<EvaluationReport>,
    meter_lookup: impl Fn(&str) -> Option<TimeSignature>,
) -> Result<AggregateReport, EvaluationError> {
    if reports.is_empty() {
        return Err(EvaluationError::NoReports);
    }
    let overall = MetricMeans::of(&reports);
    let mut groups: BTreeMap<TimeSignature, Vec<&EvaluationReport>> = BTreeMap::new();
    for r in &reports {
        if let Some(meter) = meter_lookup(&r.track_id) {
            groups.entry(meter).or_default().push(r);
        }
    }
    let by_meter = groups
        .into_iter()
        .map(|(meter, rs)| (meter, MetricMeans::of(rs)))
        .collect();
    Ok(AggregateReport {
        reports,
        overall,
        by_meter,
    })
}

const TABLE_HEADER: &str = "group\ttracks\tF1\tCMLt\tCMLc\tAMLt\tAMLc\n";

fn table_row(out: &mut String, group: &str, m: &MetricMeans, signed: bool) {
    let _ = write!(out, "{group}\t{}", m.tracks);
    for v in m.table_columns() {
        if signed {
            let _ = write!(out, "\t{v:+.4}");
        } else {
            let _ = write!(out, "\t{v:.4}");
        }
    }
    out.push('\n');
}

impl AggregateReport {
    pub fn delta_from(&self, baseline: &AggregateReport) -> AggregateDelta {
        let by_meter = self
            .by_meter
            .iter()
            .filter_map(|(meter, m)| baseline.by_meter.get(meter).map(|b| (*meter, m.minus(b))))
            .collect();
        AggregateDelta {
            overall: self.overall.minus(&baseline.overall),
            by_meter,
        }
    }

    /// Tab-separated table, overall first, then one row per meter.
    pub fn table(&self) -> String {
        let mut out = String::from(TABLE_HEADER);
        table_row(&mut out, "all", &self.overall, false);
        for (meter, m) in &self.by_meter {
            table_row(&mut out, &meter.to_string(), m, false);
        }
        out
    }

    /// Per-track CSV preceded by a `#` line recording the tolerances.
    pub fn to_csv(&self) -> String {
        reports_csv(&self.reports)
    }

    /// One CSV row per group (`all`, then each meter).
    pub fn summary_csv(&self) -> String {
        summary_csv(&self.overall, &self.by_meter)
    }
}

fn summary_csv(overall: &MetricMeans, by_meter: &BTreeMap<TimeSignature, MetricMeans>) -> String {
    let mut out = String::from("group,tracks,f1,cmlt,cmlc,amlt,amlc\n");
    let mut row = |group: &str, m: &MetricMeans| {
        let [f, ct, cc, at, ac] = m.table_columns();
        let _ = writeln!(
            out,
            "{group},{},{f:.6},{ct:.6},{cc:.6},{at:.6},{ac:.6}",
            m.tracks
        );
    };
    row("all", overall);
    for (meter, m) in by_meter {
        row(&meter.to_string(), m);
    }
    out
}

impl AggregateDelta {
    pub fn to_csv(&self) -> String {
        summary_csv(&self.overall, &self.by_meter)
    }

    pub fn table(&self) -> String {
        let mut out = String::from(TABLE_HEADER);
        table_row(&mut out, "all", &self.overall, true);
        for (meter, m) in &self.by_meter {
            table_row(&mut out, &meter.to_string(), m, true);
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn reports_csv(reports: &[EvaluationReport]) -> String {
    let params = reports.first().map(|r| r.params).unwrap_or_default();
    let mut out = format!("# {}\n", params.describe());
    out.push_str("track_id,level,f_measure,precision,recall,cmlt,cmlc,amlt,amlc\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            csv_field(&r.track_id),
            r.level,
            r.f_measure,
            r.precision,
            r.recall,
            r.cmlt,
            r.cmlc,
            r.amlt,
            r.amlc
        );
    }
    out
}
