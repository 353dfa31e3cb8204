//! Temporal annotation records and interval-set statistics.
//!
//! Records are parsed from CSV or JSON-lines, merged per recording into
//! canonical [`IntervalSet`]s and compared with duration-weighted IoU and
//! coverage. Intervals are half-open `[start, end)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Endpoints closer than this are treated as identical.
pub const SNAP_EPS: f64 = 1e-9;

/// CSV column order for annotation files.
pub const CSV_HEADER: [&str; 5] = ["participant_id", "recording_id", "class_label", "start_s", "end_s"];

#[derive(Debug, Error, PartialEq)]
pub enum AnnotationError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown annotation format `{0}` (expected `csv` or `jsonl`)")]
    UnknownFormat(String),
}

/// One labelled audio event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub participant_id: String,
    pub recording_id: String,
    pub class_label: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl AnnotationRecord {
    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }

    fn validate(&self) -> Result<(), String> {
        if !self.start_s.is_finite() || !self.end_s.is_finite() {
            return Err("non-finite time value".into());
        }
        if self.start_s < 0.0 {
            return Err(format!("negative start time {}", self.start_s));
        }
        if self.end_s <= self.start_s {
            return Err(format!(
                "end_s ({}) must be greater than start_s ({})",
                self.end_s, self.start_s
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationFormat {
    Csv,
    #[serde(rename = "jsonl")]
    JsonLines,
}

impl FromStr for AnnotationFormat {
    type Err = AnnotationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "jsonl" | "json-lines" | "jsonlines" | "ndjson" => Ok(Self::JsonLines),
            other => Err(AnnotationError::UnknownFormat(other.to_string())),
        }
    }
}

/// Parses annotation records. Rows are returned in file order.
///
/// For CSV a leading header row is skipped when its first field is
/// `participant_id`; otherwise every row is data.
pub fn parse_annotations(
    text: &str,
    format: AnnotationFormat,
) -> Result<Vec<AnnotationRecord>, AnnotationError> {
    match format {
        AnnotationFormat::Csv => parse_csv(text),
        AnnotationFormat::JsonLines => parse_jsonl(text),
    }
}

fn parse_csv(text: &str) -> Result<Vec<AnnotationRecord>, AnnotationError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut out = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let row = row.map_err(|e| AnnotationError::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(idx + 1),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(idx + 1);
        if idx == 0 && row.get(0) == Some(CSV_HEADER[0]) {
            continue;
        }
        if row.len() == 1 && row.get(0) == Some("") {
            continue;
        }
        if row.len() != CSV_HEADER.len() {
            return Err(AnnotationError::Parse {
                line,
                message: format!("expected {} columns, found {}", CSV_HEADER.len(), row.len()),
            });
        }
        let time = |col: usize| -> Result<f64, AnnotationError> {
            let raw = &row[col];
            raw.parse::<f64>().map_err(|_| AnnotationError::Parse {
                line,
                message: format!("column `{}`: `{raw}` is not a number", CSV_HEADER[col]),
            })
        };
        let record = AnnotationRecord {
            participant_id: row[0].to_string(),
            recording_id: row[1].to_string(),
            class_label: row[2].to_string(),
            start_s: time(3)?,
            end_s: time(4)?,
        };
        record
            .validate()
            .map_err(|message| AnnotationError::Parse { line, message })?;
        out.push(record);
    }
    Ok(out)
}

fn parse_jsonl(text: &str) -> Result<Vec<AnnotationRecord>, AnnotationError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let record: AnnotationRecord = serde_json::from_str(raw).map_err(|e| AnnotationError::Parse {
            line,
            message: e.to_string(),
        })?;
        record
            .validate()
            .map_err(|message| AnnotationError::Parse { line, message })?;
        out.push(record);
    }
    Ok(out)
}

/// Keeps records lasting at least `min_s` seconds, preserving order.
pub fn filter_min_duration(records: &[AnnotationRecord], min_s: f64) -> Vec<AnnotationRecord> {
    records
        .iter()
        .filter(|r| r.duration() >= min_s - SNAP_EPS)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }
}

/// Sorted, disjoint, non-touching half-open intervals on one timeline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntervalSet {
    intervals: Vec<Interval>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds the union of arbitrary intervals.
    pub fn from_intervals<I: IntoIterator<Item = Interval>>(intervals: I) -> Self {
        Self::merge_counting(intervals).0
    }

    /// Builds the union and reports how many input intervals overlapped or
    /// touched an earlier one.
    pub fn merge_counting<I: IntoIterator<Item = Interval>>(intervals: I) -> (Self, usize) {
        let mut items: Vec<Interval> = intervals
            .into_iter()
            .filter(|iv| iv.end - iv.start > SNAP_EPS)
            .collect();
        items.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));

        let mut merged: Vec<Interval> = Vec::with_capacity(items.len());
        let mut overlaps = 0;
        for iv in items {
            match merged.last_mut() {
                Some(last) if iv.start <= last.end + SNAP_EPS => {
                    last.end = last.end.max(iv.end);
                    overlaps += 1;
                }
                _ => merged.push(iv),
            }
        }
        (Self { intervals: merged }, overlaps)
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn total_duration(&self) -> f64 {
        self.intervals.iter().map(Interval::len).sum()
    }

    /// Duration of `self ∩ other`.
    pub fn intersection_duration(&self, other: &IntervalSet) -> f64 {
        let (a, b) = (&self.intervals, &other.intervals);
        let (mut i, mut j) = (0, 0);
        let mut total = 0.0;
        while i < a.len() && j < b.len() {
            let lo = a[i].start.max(b[j].start);
            let hi = a[i].end.min(b[j].end);
            if hi > lo {
                total += hi - lo;
            }
            if a[i].end < b[j].end {
                i += 1;
            } else {
                j += 1;
            }
        }
        total
    }

    /// Duration of `self ∩ [start, end)`.
    pub fn overlap_with(&self, start: f64, end: f64) -> f64 {
        self.intervals
            .iter()
            .map(|iv| (iv.end.min(end) - iv.start.max(start)).max(0.0))
            .sum()
    }

    pub fn union_duration(&self, other: &IntervalSet) -> f64 {
        self.total_duration() + other.total_duration() - self.intersection_duration(other)
    }
}

/// Union of `class_label` records inside `(participant_id, recording_id)`.
pub fn merge_to_interval_set(
    records: &[AnnotationRecord],
    class_label: &str,
    participant_id: &str,
    recording_id: &str,
) -> IntervalSet {
    IntervalSet::from_intervals(
        records
            .iter()
            .filter(|r| {
                r.class_label == class_label
                    && r.participant_id == participant_id
                    && r.recording_id == recording_id
            })
            .map(|r| Interval::new(r.start_s, r.end_s)),
    )
}

pub fn total_duration(set: &IntervalSet) -> f64 {
    set.total_duration()
}

/// |a ∩ b| / |a ∪ b|; two empty sets agree perfectly and give 1.0.
pub fn iou(a: &IntervalSet, b: &IntervalSet) -> f64 {
    OverlapTotals::of(a, b).iou()
}

/// Fraction of `a` covered by `b`; `None` when `a` is empty.
pub fn coverage(a: &IntervalSet, b: &IntervalSet) -> Option<f64> {
    OverlapTotals::of(a, b).coverage()
}

/// Duration sums that can be pooled across recordings before dividing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OverlapTotals {
    pub intersection_s: f64,
    pub union_s: f64,
    pub a_s: f64,
    pub b_s: f64,
}

impl OverlapTotals {
    pub fn of(a: &IntervalSet, b: &IntervalSet) -> Self {
        let a_s = a.total_duration();
        let b_s = b.total_duration();
        let intersection_s = a.intersection_duration(b);
        Self {
            intersection_s,
            union_s: a_s + b_s - intersection_s,
            a_s,
            b_s,
        }
    }

    pub fn iou(&self) -> f64 {
        if self.union_s <= SNAP_EPS {
            1.0
        } else {
            (self.intersection_s / self.union_s).clamp(0.0, 1.0)
        }
    }

    pub fn coverage(&self) -> Option<f64> {
        (self.a_s > SNAP_EPS).then(|| (self.intersection_s / self.a_s).clamp(0.0, 1.0))
    }
}

impl std::ops::AddAssign for OverlapTotals {
    fn add_assign(&mut self, rhs: Self) {
        self.intersection_s += rhs.intersection_s;
        self.union_s += rhs.union_s;
        self.a_s += rhs.a_s;
        self.b_s += rhs.b_s;
    }
}

/// Recordings keyed by `(participant_id, recording_id)`.
pub fn recordings(records: &[AnnotationRecord]) -> BTreeSet<(String, String)> {
    records
        .iter()
        .map(|r| (r.participant_id.clone(), r.recording_id.clone()))
        .collect()
}

/// Merged interval set per recording for one class.
pub fn class_sets(records: &[AnnotationRecord], class_label: &str) -> BTreeMap<(String, String), IntervalSet> {
    let mut grouped: BTreeMap<(String, String), Vec<Interval>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.class_label == class_label) {
        grouped
            .entry((r.participant_id.clone(), r.recording_id.clone()))
            .or_default()
            .push(Interval::new(r.start_s, r.end_s));
    }
    grouped
        .into_iter()
        .map(|(k, v)| (k, IntervalSet::from_intervals(v)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    /// Participant id, or `None` for the pooled row.
    pub participant_id: Option<String>,
    pub totals: OverlapTotals,
    pub iou: f64,
    pub coverage: Option<f64>,
}

/// IoU and coverage of class `a` against class `b`, per participant and
/// pooled over everything. Sums are taken over recordings before dividing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapTable {
    pub class_a: String,
    pub class_b: String,
    pub rows: Vec<OverlapRow>,
    pub aggregate: OverlapRow,
}

pub fn overlap_table(records: &[AnnotationRecord], class_a: &str, class_b: &str) -> OverlapTable {
    let a_sets = class_sets(records, class_a);
    let b_sets = class_sets(records, class_b);
    let empty = IntervalSet::empty();

    let mut per_participant: BTreeMap<String, OverlapTotals> = BTreeMap::new();
    for key in a_sets.keys().chain(b_sets.keys()).collect::<BTreeSet<_>>() {
        let a = a_sets.get(key).unwrap_or(&empty);
        let b = b_sets.get(key).unwrap_or(&empty);
        *per_participant.entry(key.0.clone()).or_default() += OverlapTotals::of(a, b);
    }

    let row = |participant_id: Option<String>, totals: OverlapTotals| OverlapRow {
        participant_id,
        iou: totals.iou(),
        coverage: totals.coverage(),
        totals,
    };
    let mut pooled = OverlapTotals::default();
    let rows = per_participant
        .into_iter()
        .map(|(p, t)| {
            pooled += t;
            row(Some(p), t)
        })
        .collect();
    OverlapTable {
        class_a: class_a.to_string(),
        class_b: class_b.to_string(),
        rows,
        aggregate: row(None, pooled),
    }
}

/// Duration and count totals of one class for one participant (or pooled).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassDurations {
    pub total_s: f64,
    pub total_s_at_least_min: f64,
    pub count: usize,
    pub count_at_least_min: usize,
}

impl ClassDurations {
    /// Fraction of labelled time kept by the minimum-duration filter.
    pub fn kept_fraction(&self) -> Option<f64> {
        (self.total_s > 0.0).then(|| self.total_s_at_least_min / self.total_s)
    }

    fn add(&mut self, other: &ClassDurations) {
        self.total_s += other.total_s;
        self.total_s_at_least_min += other.total_s_at_least_min;
        self.count += other.count;
        self.count_at_least_min += other.count_at_least_min;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationRow {
    /// Participant id, or `None` for the aggregate row.
    pub participant_id: Option<String>,
    pub numerator: ClassDurations,
    pub denominator: ClassDurations,
    /// numerator/denominator over all labels; `None` when undefined.
    pub ratio_all: Option<f64>,
    /// numerator/denominator over labels passing the duration filter.
    pub ratio_at_least_min: Option<f64>,
}

/// Per-participant durations of a subclass (`numerator_class`, e.g. tap
/// water) and its parent class (`denominator_class`, e.g. water).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationReport {
    pub numerator_class: String,
    pub denominator_class: String,
    pub min_s: f64,
    pub rows: Vec<DurationRow>,
    pub aggregate: DurationRow,
}

fn class_durations(records: &[AnnotationRecord], class_label: &str, min_s: f64) -> BTreeMap<String, ClassDurations> {
    let selected: Vec<AnnotationRecord> = records
        .iter()
        .filter(|r| r.class_label == class_label)
        .cloned()
        .collect();
    let kept = filter_min_duration(&selected, min_s);

    let mut out: BTreeMap<String, ClassDurations> = BTreeMap::new();
    for ((p, _), set) in class_sets(&selected, class_label) {
        out.entry(p).or_default().total_s += set.total_duration();
    }
    for ((p, _), set) in class_sets(&kept, class_label) {
        out.entry(p).or_default().total_s_at_least_min += set.total_duration();
    }
    for r in &selected {
        out.entry(r.participant_id.clone()).or_default().count += 1;
    }
    for r in &kept {
        out.entry(r.participant_id.clone()).or_default().count_at_least_min += 1;
    }
    out
}

fn ratio(num: f64, den: f64, den_present: bool) -> Option<f64> {
    (den_present && den > 0.0).then(|| num / den)
}

/// Durations per participant and pooled; totals are merged-interval
/// durations, counts are raw record counts.
pub fn duration_report(
    records: &[AnnotationRecord],
    numerator_class: &str,
    denominator_class: &str,
    min_s: f64,
) -> DurationReport {
    let num = class_durations(records, numerator_class, min_s);
    let den = class_durations(records, denominator_class, min_s);
    let participants: BTreeSet<&String> = num.keys().chain(den.keys()).collect();

    let make_row = |participant_id: Option<String>, n: ClassDurations, d: ClassDurations, den_present: bool| DurationRow {
        participant_id,
        ratio_all: ratio(n.total_s, d.total_s, den_present),
        ratio_at_least_min: ratio(n.total_s_at_least_min, d.total_s_at_least_min, den_present),
        numerator: n,
        denominator: d,
    };

    let mut agg_n = ClassDurations::default();
    let mut agg_d = ClassDurations::default();
    let mut rows = Vec::with_capacity(participants.len());
    for p in participants {
        let n = num.get(p).copied().unwrap_or_default();
        let d = den.get(p).copied();
        agg_n.add(&n);
        if let Some(d) = &d {
            agg_d.add(d);
        }
        rows.push(make_row(Some(p.clone()), n, d.unwrap_or_default(), d.is_some()));
    }
    let aggregate = make_row(None, agg_n, agg_d, agg_d.count > 0);
    DurationReport {
        numerator_class: numerator_class.to_string(),
        denominator_class: denominator_class.to_string(),
        min_s,
        rows,
        aggregate,
    }
}

/// Kind of same-class label inconsistency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    Overlap,
    Containment,
    ShortFragment,
}

impl fmt::Display for FindingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FindingKind::Overlap => "overlap",
            FindingKind::Containment => "containment",
            FindingKind::ShortFragment => "short_fragment",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub participant_id: String,
    pub recording_id: String,
    pub class_label: String,
    /// The record(s) involved, as `[start_s, end_s]` pairs.
    pub spans: Vec<[f64; 2]>,
}

/// Reports overlapping and contained same-class labels and labels shorter
/// than `min_s`.
pub fn find_inconsistencies(records: &[AnnotationRecord], min_s: f64) -> Vec<Finding> {
    let mut grouped: BTreeMap<(&str, &str, &str), Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in records {
        grouped
            .entry((&r.participant_id, &r.recording_id, &r.class_label))
            .or_default()
            .push(r);
    }

    let mut findings = Vec::new();
    for ((p, rec, class), mut group) in grouped {
        group.sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then(b.end_s.total_cmp(&a.end_s)));
        let finding = |kind, spans: Vec<[f64; 2]>| Finding {
            kind,
            participant_id: p.to_string(),
            recording_id: rec.to_string(),
            class_label: class.to_string(),
            spans,
        };
        for (i, a) in group.iter().enumerate() {
            for b in &group[i + 1..] {
                if b.start_s >= a.end_s - SNAP_EPS {
                    break;
                }
                let kind = if b.end_s <= a.end_s + SNAP_EPS {
                    FindingKind::Containment
                } else {
                    FindingKind::Overlap
                };
                findings.push(finding(kind, vec![[a.start_s, a.end_s], [b.start_s, b.end_s]]));
            }
            if min_s > 0.0 && a.duration() < min_s {
                findings.push(finding(FindingKind::ShortFragment, vec![[a.start_s, a.end_s]]));
            }
        }
    }
    findings
}
