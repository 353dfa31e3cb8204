//! Binary classification metrics, the uniform dummy baseline, per-fold
//! aggregation and paired significance tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::dataset::{ResolvedFold, SplitKind};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{predictions} predictions but {labels} labels")]
    Length { predictions: usize, labels: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("fold {fold}: {message}")]
    Fold { fold: String, message: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("differences have zero variance")]
    ZeroVariance,
    #[error("all differences are zero")]
    AllZero,
    #[error("unpaired fold {0}")]
    Unpaired(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn prevalence(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.positives() as f64 / n as f64,
        }
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { tp: self.tp + o.tp, fp: self.fp + o.fp, tn: self.tn + o.tn, fn_: self.fn_ + o.fn_ }
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

pub fn confusion(predictions: &[bool], labels: &[bool]) -> Result<ConfusionCounts, EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::Length { predictions: predictions.len(), labels: labels.len() });
    }
    if labels.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut c = ConfusionCounts::default();
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Ratios derived from one confusion table. A metric whose denominator is
/// zero is reported as 0 and flagged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_degenerate: bool,
    pub recall_degenerate: bool,
}

pub fn metrics(c: &ConfusionCounts) -> Metrics {
    let ratio = |num: u64, den: u64| if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) };
    let (precision, precision_degenerate) = ratio(c.tp, c.tp + c.fp);
    let (recall, recall_degenerate) = ratio(c.tp, c.tp + c.fn_);
    let (accuracy, _) = ratio(c.tp + c.tn, c.total());
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Metrics { accuracy, precision, recall, f1, precision_degenerate, recall_degenerate }
}

/// Expected F1 of a predictor that says "positive" with probability 1/2
/// on data with positive rate `p`: precision → p, recall → 1/2.
pub fn uniform_baseline_f1(prevalence: f64) -> f64 {
    if prevalence <= 0.0 {
        0.0
    } else {
        prevalence / (prevalence + 0.5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub prevalence: f64,
    pub closed_form_f1: f64,
    pub trials: usize,
    /// Each metric averaged over the seeded trials.
    pub empirical: Metrics,
}

/// Simulates the uniform dummy `trials` times on `labels`.
pub fn uniform_baseline(labels: &[bool], seed: u64, trials: usize) -> Result<BaselineReport, EvalError> {
    if labels.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = Metrics::default();
    let mut preds = vec![false; labels.len()];
    for _ in 0..trials {
        for p in preds.iter_mut() {
            *p = rng.random_bool(0.5);
        }
        let m = metrics(&confusion(&preds, labels)?);
        sum.accuracy += m.accuracy;
        sum.precision += m.precision;
        sum.recall += m.recall;
        sum.f1 += m.f1;
        sum.precision_degenerate |= m.precision_degenerate;
        sum.recall_degenerate |= m.recall_degenerate;
    }
    let n = trials.max(1) as f64;
    let empirical = Metrics {
        accuracy: sum.accuracy / n,
        precision: sum.precision / n,
        recall: sum.recall / n,
        f1: sum.f1 / n,
        ..sum
    };
    let prevalence = labels.iter().filter(|&&y| y).count() as f64 / labels.len() as f64;
    Ok(BaselineReport { prevalence, closed_form_f1: uniform_baseline_f1(prevalence), trials, empirical })
}

/// `100 · f1 / baseline_f1`, undefined for a zero baseline.
pub fn ratio_to_baseline(f1: f64, baseline_f1: f64) -> Option<f64> {
    (baseline_f1 > 0.0 && baseline_f1.is_finite()).then(|| 100.0 * f1 / baseline_f1)
}

/// One line of a report: a fold, the pooled aggregate or the fold mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    pub counts: ConfusionCounts,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub prevalence: f64,
    /// Closed-form uniform-baseline F1 at this row's test prevalence.
    pub baseline_f1: f64,
    pub baseline_f1_empirical: Option<f64>,
    pub ratio_to_baseline: Option<f64>,
    /// Set on folds with an empty test side; such folds stay out of means.
    pub excluded: bool,
}

impl ReportRow {
    fn from_counts(name: &str, counts: ConfusionCounts, empirical: Option<f64>) -> Self {
        let metrics = metrics(&counts);
        let prevalence = counts.prevalence();
        let baseline_f1 = uniform_baseline_f1(prevalence);
        Self {
            name: name.to_string(),
            counts,
            metrics,
            prevalence,
            baseline_f1,
            baseline_f1_empirical: empirical,
            ratio_to_baseline: ratio_to_baseline(metrics.f1, baseline_f1),
            excluded: counts.total() == 0,
        }
    }
}

/// Predictions for the test side of one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub name: String,
    pub predictions: Vec<bool>,
    pub labels: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub classifier: String,
    pub target_class: String,
    pub task: SplitKind,
    pub folds: Vec<ReportRow>,
    /// Metrics of the confusion counts summed over folds.
    pub pooled: ReportRow,
    /// Unweighted mean over non-excluded folds (LOPO only). Its ratio is
    /// the ratio of the mean F1 to the mean baseline.
    pub mean_of_folds: Option<ReportRow>,
    /// Mean of the per-fold ratios (LOPO only).
    pub mean_fold_ratio: Option<f64>,
    pub baseline_seed: u64,
    pub baseline_trials: usize,
}

pub const CSV_HEADER: &str = "row,f1,acc,precision,recall,ratio_to_baseline";

impl MetricsReport {
    /// Fold rows, then the aggregates.
    pub fn rows(&self) -> Vec<&ReportRow> {
        let mut rows: Vec<&ReportRow> = Vec::new();
        if self.task == SplitKind::Lopo {
            rows.extend(&self.folds);
        }
        rows.push(&self.pooled);
        rows.extend(&self.mean_of_folds);
        rows
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in self.rows() {
            let ratio = r.ratio_to_baseline.map(|v| v.to_string()).unwrap_or_default();
            let m = &r.metrics;
            out.push_str(&format!("{},{},{},{},{},{}\n", r.name, m.f1, m.accuracy, m.precision, m.recall, ratio));
        }
        out
    }
}

/// Builds the report from per-fold predictions. A Task A plan has a single
/// fold whose row is the pooled row.
pub fn aggregate(
    classifier: &str,
    target_class: &str,
    task: SplitKind,
    outcomes: &[FoldOutcome],
    baseline_seed: u64,
    baseline_trials: usize,
) -> Result<MetricsReport, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut folds = Vec::with_capacity(outcomes.len());
    for (i, o) in outcomes.iter().enumerate() {
        if o.labels.is_empty() && o.predictions.is_empty() {
            folds.push(ReportRow::from_counts(&o.name, ConfusionCounts::default(), None));
            continue;
        }
        let counts = confusion(&o.predictions, &o.labels)
            .map_err(|e| EvalError::Fold { fold: o.name.clone(), message: e.to_string() })?;
        let empirical = uniform_baseline(&o.labels, baseline_seed.wrapping_add(i as u64), baseline_trials)?;
        folds.push(ReportRow::from_counts(&o.name, counts, Some(empirical.empirical.f1)));
    }
    let all_labels: Vec<bool> = outcomes.iter().flat_map(|o| o.labels.iter().copied()).collect();
    let pooled_counts: ConfusionCounts = folds.iter().map(|r| r.counts).sum();
    if pooled_counts.total() == 0 {
        return Err(EvalError::Empty);
    }
    let pooled_empirical = uniform_baseline(&all_labels, baseline_seed, baseline_trials)?.empirical.f1;
    let pooled = ReportRow::from_counts("pooled", pooled_counts, Some(pooled_empirical));

    let (mean_of_folds, mean_fold_ratio) = if task == SplitKind::Lopo {
        let used: Vec<&ReportRow> = folds.iter().filter(|r| !r.excluded).collect();
        let n = used.len() as f64;
        let mean = |f: &dyn Fn(&ReportRow) -> f64| used.iter().map(|r| f(r)).sum::<f64>() / n;
        let metrics = Metrics {
            accuracy: mean(&|r| r.metrics.accuracy),
            precision: mean(&|r| r.metrics.precision),
            recall: mean(&|r| r.metrics.recall),
            f1: mean(&|r| r.metrics.f1),
            precision_degenerate: used.iter().any(|r| r.metrics.precision_degenerate),
            recall_degenerate: used.iter().any(|r| r.metrics.recall_degenerate),
        };
        let baseline_f1 = mean(&|r| r.baseline_f1);
        let row = ReportRow {
            name: "mean_of_folds".into(),
            counts: used.iter().map(|r| r.counts).sum(),
            metrics,
            prevalence: mean(&|r| r.prevalence),
            baseline_f1,
            baseline_f1_empirical: Some(mean(&|r| r.baseline_f1_empirical.unwrap_or(0.0))),
            ratio_to_baseline: ratio_to_baseline(metrics.f1, baseline_f1),
            excluded: false,
        };
        let ratios: Vec<f64> = used.iter().filter_map(|r| r.ratio_to_baseline).collect();
        let mean_ratio = (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64);
        (Some(row), mean_ratio)
    } else {
        (None, None)
    };

    Ok(MetricsReport {
        classifier: classifier.to_string(),
        target_class: target_class.to_string(),
        task,
        folds,
        pooled,
        mean_of_folds,
        mean_fold_ratio,
        baseline_seed,
        baseline_trials,
    })
}

/// Runs `predict` on every fold (in parallel, merged in plan order) and
/// aggregates against `labels`. `predict` returns test-side predictions in
/// the order of `fold.test`.
pub fn evaluate_split<F>(
    classifier: &str,
    target_class: &str,
    task: SplitKind,
    folds: &[ResolvedFold],
    labels: &[bool],
    baseline_seed: u64,
    baseline_trials: usize,
    predict: F,
) -> Result<MetricsReport, EvalError>
where
    F: Fn(&ResolvedFold) -> Result<Vec<bool>, String> + Sync,
{
    let outcomes = folds
        .par_iter()
        .map(|fold| {
            let fold_err = |message: String| EvalError::Fold { fold: fold.name.clone(), message };
            if fold.test.is_empty() {
                return Ok(FoldOutcome { name: fold.name.clone(), predictions: vec![], labels: vec![] });
            }
            let predictions = predict(fold).map_err(fold_err)?;
            let truth = fold.test.iter().map(|&i| labels[i]).collect();
            Ok(FoldOutcome { name: fold.name.clone(), predictions, labels: truth })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    aggregate(classifier, target_class, task, &outcomes, baseline_seed, baseline_trials)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub statistic: f64,
    pub df: f64,
    pub two_sided_p: f64,
}

/// One-sample t-test of the differences against zero.
pub fn paired_t_test(differences: &[f64]) -> Result<TTest, StatsError> {
    let n = differences.len();
    if n < 2 {
        return Err(StatsError::TooFew { needed: 2, got: n });
    }
    let nf = n as f64;
    let mean = differences.iter().sum::<f64>() / nf;
    let var = differences.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if var <= 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let t = mean / (var.sqrt() / nf.sqrt());
    let df = nf - 1.0;
    // P(|T| > |t|) = I_{df/(df+t²)}(df/2, 1/2)
    let p = beta_reg(df / 2.0, 0.5, df / (df + t * t));
    Ok(TTest { statistic: t, df, two_sided_p: p.clamp(0.0, 1.0) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wilcoxon {
    /// min(W+, W−) over the nonzero differences.
    pub statistic: f64,
    pub n: usize,
    pub two_sided_p: f64,
    pub exact: bool,
}

pub const WILCOXON_EXACT_MAX_N: usize = 25;

/// Mid-ranks of `|d|` (1-based).
fn abs_ranks(d: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()));
    let mut ranks = vec![0.0; d.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && d[order[j + 1]].abs() == d[order[i]].abs() {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// Number of sign assignments giving each value of `2·W+`, for ranks that
/// are whole or half integers.
fn signed_rank_counts(ranks: &[f64]) -> Vec<f64> {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0.0; max + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] > 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

/// Null probability of each `W+ = 0..=n(n+1)/2` for untied ranks.
pub fn wilcoxon_null_distribution(n: usize) -> Vec<f64> {
    let ranks: Vec<f64> = (1..=n).map(|r| r as f64).collect();
    let total = 2f64.powi(n as i32);
    signed_rank_counts(&ranks).into_iter().step_by(2).map(|c| c / total).collect()
}

/// Signed-rank test with zeros dropped and ties mid-ranked. Exact for up to
/// 25 nonzero differences, normal approximation with tie and continuity
/// corrections beyond.
pub fn wilcoxon_signed_rank(differences: &[f64]) -> Result<Wilcoxon, StatsError> {
    let d: Vec<f64> = differences.iter().copied().filter(|&v| v != 0.0).collect();
    if d.is_empty() {
        return Err(StatsError::AllZero);
    }
    let n = d.len();
    let ranks = abs_ranks(&d);
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w = w_plus.min(total - w_plus);

    if n <= WILCOXON_EXACT_MAX_N {
        let counts = signed_rank_counts(&ranks);
        let limit = (2.0 * w).round() as usize;
        let tail: f64 = counts[..=limit].iter().sum::<f64>() / 2f64.powi(n as i32);
        return Ok(Wilcoxon { statistic: w, n, two_sided_p: (2.0 * tail).min(1.0), exact: true });
    }

    let mean = total / 2.0;
    let mut tie_term = 0.0;
    let mut sorted = ranks.clone();
    sorted.sort_by(f64::total_cmp);
    for group in sorted.chunk_by(|a, b| a == b) {
        let t = group.len() as f64;
        tie_term += t * t * t - t;
    }
    let nf = n as f64;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = ((w - mean).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::standard();
    let p = 2.0 * (1.0 - normal.cdf(z));
    Ok(Wilcoxon { statistic: w, n, two_sided_p: p.min(1.0), exact: false })
}

/// Paired tests on per-fold ratio-to-baseline differences `a − b`, matched
/// by fold name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub folds: Vec<String>,
    pub differences: Vec<f64>,
    pub t_test: Option<TTest>,
    pub wilcoxon: Option<Wilcoxon>,
    pub notes: Vec<String>,
}

pub fn compare_fold_ratios(a: &MetricsReport, b: &MetricsReport) -> Result<Comparison, StatsError> {
    let mut folds = Vec::new();
    let mut differences = Vec::new();
    let mut notes = vec!["normality of the differences is not tested".to_string()];
    for row in a.folds.iter().filter(|r| !r.excluded) {
        let other = b
            .folds
            .iter()
            .find(|r| r.name == row.name)
            .ok_or_else(|| StatsError::Unpaired(row.name.clone()))?;
        match (row.ratio_to_baseline, other.ratio_to_baseline) {
            (Some(x), Some(y)) if !other.excluded => {
                folds.push(row.name.clone());
                differences.push(x - y);
            }
            _ => notes.push(format!("fold {} has no ratio on both sides", row.name)),
        }
    }
    let t_test = paired_t_test(&differences).map_err(|e| notes.push(format!("t-test: {e}"))).ok();
    let wilcoxon = wilcoxon_signed_rank(&differences).map_err(|e| notes.push(format!("wilcoxon: {e}"))).ok();
    Ok(Comparison { folds, differences, t_test, wilcoxon, notes })
}
