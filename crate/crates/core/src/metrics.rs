//! Multi-label classification metrics with bootstrap dispersion and
//! constant-label baselines.
//!
//! Each category is scored as a binary problem (positive iff the
//! category is in the label set). Metrics with a zero denominator are
//! defined as 0 and flagged; flagged categories are skipped in reports.
//! The hard-label ROC-AUC is (TPR + TNR) / 2, which makes any
//! constant-label predictor score exactly 0.5.

use std::collections::BTreeSet;
use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::concern::ConcernLabelSet;

/// Per-category binary confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

/// A prediction/gold pair for one post.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPair {
    pub post_id: String,
    pub predicted: BTreeSet<String>,
    pub gold: BTreeSet<String>,
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("predictions and gold are misaligned: {0}")]
    Misaligned(String),
    #[error("no pairs to evaluate")]
    Empty,
}

/// Joins prediction and gold label sets by post id. Every post must
/// appear in both streams exactly once; anything else is fatal.
pub fn align(
    predictions: &[ConcernLabelSet],
    gold: &[ConcernLabelSet],
) -> Result<Vec<LabeledPair>, MetricsError> {
    if predictions.len() != gold.len() {
        return Err(MetricsError::Misaligned(format!(
            "{} predictions vs {} gold records",
            predictions.len(),
            gold.len()
        )));
    }
    let mut by_id: std::collections::BTreeMap<&str, &ConcernLabelSet> = std::collections::BTreeMap::new();
    for p in predictions {
        if by_id.insert(p.post_id.as_str(), p).is_some() {
            return Err(MetricsError::Misaligned(format!(
                "duplicate prediction for post `{}`",
                p.post_id
            )));
        }
    }
    let mut pairs = Vec::with_capacity(gold.len());
    for g in gold {
        let p = by_id.remove(g.post_id.as_str()).ok_or_else(|| {
            MetricsError::Misaligned(format!("no prediction for post `{}`", g.post_id))
        })?;
        pairs.push(LabeledPair {
            post_id: g.post_id.clone(),
            predicted: p.labels.clone(),
            gold: g.labels.clone(),
        });
    }
    Ok(pairs)
}

/// Binary reduction for one category.
pub fn confusion<'a>(
    pairs: impl IntoIterator<Item = &'a LabeledPair>,
    category: &str,
) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for pair in pairs {
        let predicted = pair.predicted.contains(category);
        let actual = pair.gold.contains(category);
        match (predicted, actual) {
            (true, true) => c.true_pos += 1,
            (true, false) => c.false_pos += 1,
            (false, true) => c.false_neg += 1,
            (false, false) => c.true_neg += 1,
        }
    }
    c
}

/// A metric value; `flagged` marks a zero-denominator or otherwise
/// undefined case (reported value is 0 and the row is skipped).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricValue {
    pub value: f64,
    pub flagged: bool,
}

impl MetricValue {
    fn defined(value: f64) -> Self {
        MetricValue { value, flagged: false }
    }

    fn undefined() -> Self {
        MetricValue { value: 0.0, flagged: true }
    }
}

/// tp / (tp + fp); 0-flagged when nothing was predicted positive.
pub fn precision(c: &ConfusionCounts) -> MetricValue {
    let denom = c.true_pos + c.false_pos;
    if denom == 0 {
        MetricValue::undefined()
    } else {
        MetricValue::defined(c.true_pos as f64 / denom as f64)
    }
}

/// 2tp / (2tp + fp + fn); 0-flagged when the denominator is 0.
pub fn f1(c: &ConfusionCounts) -> MetricValue {
    let denom = 2 * c.true_pos + c.false_pos + c.false_neg;
    if denom == 0 {
        MetricValue::undefined()
    } else {
        MetricValue::defined(2.0 * c.true_pos as f64 / denom as f64)
    }
}

/// Hard-label ROC-AUC: (TPR + TNR) / 2. Undefined (flagged) when the
/// gold stream has a single class.
pub fn roc_auc_hard(c: &ConfusionCounts) -> MetricValue {
    let positives = c.true_pos + c.false_neg;
    let negatives = c.true_neg + c.false_pos;
    if positives == 0 || negatives == 0 {
        return MetricValue::undefined();
    }
    let tpr = c.true_pos as f64 / positives as f64;
    let tnr = c.true_neg as f64 / negatives as f64;
    MetricValue::defined((tpr + tnr) / 2.0)
}

/// Rank-based (Mann-Whitney) ROC-AUC with midrank tie handling, for
/// backends that emit confidence scores. Input: (score, is_positive).
pub fn roc_auc_scored(scored: &[(f64, bool)]) -> MetricValue {
    let positives = scored.iter().filter(|(_, y)| *y).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return MetricValue::undefined();
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        scored[a]
            .0
            .partial_cmp(&scored[b].0)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    // Midranks over ties.
    let mut ranks = vec![0.0f64; scored.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored[order[j + 1]].0 == scored[order[i]].0 {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = midrank;
        }
        i = j + 1;
    }
    let positive_rank_sum: f64 = scored
        .iter()
        .zip(&ranks)
        .filter(|((_, y), _)| *y)
        .map(|(_, r)| *r)
        .sum();
    let np = positives as f64;
    let nn = negatives as f64;
    let auc = (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
    MetricValue::defined(auc)
}

/// Bootstrap mean and sample standard deviation of a metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapStats {
    pub mean: f64,
    pub std: f64,
    /// Fraction of resamples where the metric was undefined.
    pub undefined_fraction: f64,
    /// Set when the metric was undefined in more than half the resamples.
    pub flagged: bool,
}

/// Default bootstrap iteration count.
pub const DEFAULT_BOOTSTRAP_ITERATIONS: u32 = 1000;

/// splitmix64, used to derive independent per-iteration seeds from the
/// master seed so iterations can run in any order (or in parallel) and
/// still reproduce bit-for-bit.
fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9e3779b97f4a7c15)
        .wrapping_add(index.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Resamples the pairs with replacement `iterations` times, recomputes
/// the metric, and reports the mean and sample std over defined
/// resamples. Seed-reproducible; flagged when more than half the
/// resamples were undefined. Resamples are passed by reference so the
/// loop stays allocation-free.
pub fn bootstrap<F>(
    pairs: &[LabeledPair],
    metric: F,
    iterations: u32,
    seed: u64,
) -> Result<BootstrapStats, MetricsError>
where
    F: Fn(&[&LabeledPair]) -> MetricValue,
{
    if pairs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = pairs.len();
    let mut values = Vec::with_capacity(iterations as usize);
    let mut undefined = 0u32;
    let mut resample: Vec<&LabeledPair> = Vec::with_capacity(n);
    for iteration in 0..iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, iteration as u64));
        resample.clear();
        for _ in 0..n {
            resample.push(&pairs[rng.gen_range(0..n)]);
        }
        let value = metric(&resample);
        if value.flagged {
            undefined += 1;
        } else {
            values.push(value.value);
        }
    }
    let undefined_fraction = undefined as f64 / iterations as f64;
    if values.is_empty() {
        return Ok(BootstrapStats {
            mean: 0.0,
            std: 0.0,
            undefined_fraction,
            flagged: true,
        });
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let std = if values.len() < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64;
        var.sqrt()
    };
    Ok(BootstrapStats {
        mean,
        std,
        undefined_fraction,
        flagged: undefined_fraction > 0.5,
    })
}

/// Baseline metric cells for the constant predictor that assigns the
/// category to every post: precision = prevalence, F1 = 2p/(1+p),
/// ROC-AUC = 0.5 (undefined when the gold stream is single-class).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaselineCells {
    pub precision: MetricValue,
    pub f1: MetricValue,
    pub roc_auc: MetricValue,
}

/// Confusion of the constant-positive predictor over the gold stream.
fn constant_positive_confusion<'a>(
    pairs: impl IntoIterator<Item = &'a LabeledPair>,
    category: &str,
) -> ConfusionCounts {
    let mut positives = 0u64;
    let mut total = 0u64;
    for pair in pairs {
        total += 1;
        if pair.gold.contains(category) {
            positives += 1;
        }
    }
    ConfusionCounts {
        true_pos: positives,
        false_pos: total - positives,
        false_neg: 0,
        true_neg: 0,
    }
}

pub fn constant_label_baseline(pairs: &[LabeledPair], category: &str) -> BaselineCells {
    let c = constant_positive_confusion(pairs, category);
    BaselineCells {
        precision: precision(&c),
        f1: f1(&c),
        roc_auc: roc_auc_hard(&c),
    }
}

/// One report row: model metrics with bootstrap stds, baseline metrics
/// with bootstrap stds, and the skip flag.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub category: String,
    pub n: usize,
    pub gold_positives: u64,
    pub precision: MetricValue,
    pub precision_std: f64,
    pub f1: MetricValue,
    pub f1_std: f64,
    pub roc_auc: MetricValue,
    pub roc_auc_std: f64,
    pub baseline_precision: MetricValue,
    pub baseline_precision_std: f64,
    pub baseline_f1: MetricValue,
    pub baseline_f1_std: f64,
    pub baseline_roc_auc: MetricValue,
    /// Categories whose metrics are undefined (e.g. absent from gold)
    /// are emitted with empty cells, like the published tables do.
    pub skipped: bool,
}

/// Scores every category: point metrics, 1000-iteration bootstrap stds,
/// and constant-label baselines.
pub fn metric_report(
    pairs: &[LabeledPair],
    categories: &[String],
    iterations: u32,
    seed: u64,
) -> Result<Vec<MetricRow>, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut rows = Vec::new();
    for (index, category) in categories.iter().enumerate() {
        let c = confusion(pairs, category);
        let point_precision = precision(&c);
        let point_f1 = f1(&c);
        let point_auc = roc_auc_hard(&c);
        let baseline = constant_label_baseline(pairs, category);

        // Stable but distinct seeds per (category, metric) stream.
        let seed_base = derive_seed(seed, index as u64);
        let boot = |offset: u64, f: &dyn Fn(&[&LabeledPair]) -> MetricValue| {
            bootstrap(pairs, f, iterations, derive_seed(seed_base, offset))
        };
        let precision_boot = boot(1, &|s| precision(&confusion(s.iter().copied(), category)))?;
        let f1_boot = boot(2, &|s| f1(&confusion(s.iter().copied(), category)))?;
        let auc_boot = boot(3, &|s| roc_auc_hard(&confusion(s.iter().copied(), category)))?;
        let baseline_precision_boot = boot(4, &|s| {
            precision(&constant_positive_confusion(s.iter().copied(), category))
        })?;
        let baseline_f1_boot = boot(5, &|s| {
            f1(&constant_positive_confusion(s.iter().copied(), category))
        })?;

        let skipped = point_precision.flagged
            || point_f1.flagged
            || point_auc.flagged
            || precision_boot.flagged
            || f1_boot.flagged
            || auc_boot.flagged;
        rows.push(MetricRow {
            category: category.clone(),
            n: pairs.len(),
            gold_positives: c.true_pos + c.false_neg,
            precision: point_precision,
            precision_std: precision_boot.std,
            f1: point_f1,
            f1_std: f1_boot.std,
            roc_auc: point_auc,
            roc_auc_std: auc_boot.std,
            baseline_precision: baseline.precision,
            baseline_precision_std: baseline_precision_boot.std,
            baseline_f1: baseline.f1,
            baseline_f1_std: baseline_f1_boot.std,
            baseline_roc_auc: baseline.roc_auc,
            skipped,
        });
    }
    Ok(rows)
}

/// Writes rows mirroring the published-table layout: each metric as a
/// model column, its std, a baseline column, its std. Skipped rows keep
/// the category and n but leave metric cells empty.
pub fn write_metrics_csv<W: Write>(rows: &[MetricRow], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "category,n,gold_positives,precision,precision_std,baseline_precision,baseline_precision_std,f1,f1_std,baseline_f1,baseline_f1_std,roc_auc,roc_auc_std,baseline_roc_auc,skipped"
    )?;
    for row in rows {
        if row.skipped {
            writeln!(
                w,
                "{},{},{},,,,,,,,,,,,true",
                row.category, row.n, row.gold_positives
            )?;
        } else {
            writeln!(
                w,
                "{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},false",
                row.category,
                row.n,
                row.gold_positives,
                row.precision.value,
                row.precision_std,
                row.baseline_precision.value,
                row.baseline_precision_std,
                row.f1.value,
                row.f1_std,
                row.baseline_f1.value,
                row.baseline_f1_std,
                row.roc_auc.value,
                row.roc_auc_std,
                row.baseline_roc_auc.value,
            )?;
        }
    }
    Ok(())
}
