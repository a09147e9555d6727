//! Fine-grained selection: band event types per criterion from a metric
//! snapshot, then evaluate the relevance filter with set algebra.
//!
//! Per criterion the metric's value vector is tested for normality
//! (one-sample Kolmogorov-Smirnov against a normal fitted by sample mean
//! and standard deviation, asymptotic p-value, alpha 0.05). Normal data is
//! split into five sigma bands around the mean; otherwise quartiles are
//! used: the lower quarter is split at its median into least/less, the
//! upper quarter at its median into more/most, and the interquartile range
//! is the base band.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{Criterion, FilterExpr, Modifier};
use crate::metrics::{MetricKind, MetricSnapshot};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub const NORMALITY_ALPHA: f64 = 0.05;

/// Default K for sigma banding: bands cover (-inf,-2k sd), [-2k,-k), [-k,+k],
/// (+k,+2k], (+2k,inf) around the mean.
pub const DEFAULT_SIGMA_K: f64 = 0.5;

/// Grouping skips the normality test for value vectors smaller than this
/// and bands by quantiles directly. The KS test has essentially no power
/// at such sizes (it performs better with large samples), so a handful of
/// event types would otherwise always read as "normal" by default.
pub const MIN_NORMALITY_SAMPLES: usize = 8;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AnalysisError {
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("metric '{metric}' bound to criterion '{criterion}' has no values in the snapshot")]
    MissingBinding {
        criterion: Criterion,
        metric: MetricKind,
    },
    #[error("duplicate binding for criterion '{0}'")]
    DuplicateBinding(Criterion),
    #[error("no grouping available for criterion '{0}'")]
    MissingCriterionGrouping(Criterion),
}

/// Whether a higher metric value means more or less of the criterion.
/// Changeability is inverted: a higher return-size spread means the
/// results vary, i.e. the event type is less changeable-friendly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherIsMore,
    HigherIsLess,
}

/// Default direction per criterion; overridable in configuration.
pub fn default_direction(criterion: Criterion) -> Direction {
    match criterion {
        Criterion::Changeability => Direction::HigherIsLess,
        _ => Direction::HigherIsMore,
    }
}

/// Binds a filter criterion to the metric that quantifies it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionBinding {
    pub criterion: Criterion,
    pub metric: MetricKind,
    pub direction: Direction,
}

impl CriterionBinding {
    pub fn new(criterion: Criterion, metric: MetricKind) -> Self {
        CriterionBinding {
            criterion,
            direction: default_direction(criterion),
            metric,
        }
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }
}

impl<'de> Deserialize<'de> for CriterionBinding {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            criterion: Criterion,
            metric: MetricKind,
            #[serde(default)]
            direction: Option<Direction>,
        }
        let raw = Raw::deserialize(deserializer)?;
        Ok(CriterionBinding {
            criterion: raw.criterion,
            metric: raw.metric,
            direction: raw
                .direction
                .unwrap_or_else(|| default_direction(raw.criterion)),
        })
    }
}

/// Outcome of the Kolmogorov-Smirnov normality test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityResult {
    /// KS statistic D: the supremum distance between the empirical CDF and
    /// the fitted normal CDF.
    pub statistic: f64,
    /// Asymptotic p-value from the Kolmogorov limit distribution.
    pub p_value: f64,
    pub is_normal: bool,
}

impl NormalityResult {
    fn from_test(statistic: f64, p_value: f64) -> Self {
        NormalityResult {
            statistic,
            p_value,
            is_normal: p_value > NORMALITY_ALPHA,
        }
    }
}

/// Complementary error function, Cody's rational approximations
/// (netlib specfun CALERF), accurate to near machine precision.
/// Coefficients kept verbatim from the reference tables.
#[allow(clippy::excessive_precision)]
fn erfc(x: f64) -> f64 {
    const A: [f64; 5] = [
        3.16112374387056560e0,
        1.13864154151050156e2,
        3.77485237685302021e2,
        3.20937758913846947e3,
        1.85777706184603153e-1,
    ];
    const B: [f64; 4] = [
        2.36012909523441209e1,
        2.44024637934444173e2,
        1.28261652607737228e3,
        2.84423683343917062e3,
    ];
    const C: [f64; 9] = [
        5.64188496988670089e-1,
        8.88314979438837594e0,
        6.61191906371416295e1,
        2.98635138197400131e2,
        8.81952221241769090e2,
        1.71204761263407058e3,
        2.05107837782607147e3,
        1.23033935479799725e3,
        2.15311535474403846e-8,
    ];
    const D: [f64; 8] = [
        1.57449261107098347e1,
        1.17693950891312499e2,
        5.37181101862009858e2,
        1.62138957456669019e3,
        3.29079923573345963e3,
        4.36261909014324716e3,
        3.43936767414372164e3,
        1.23033935480374942e3,
    ];
    const P: [f64; 6] = [
        3.05326634961232344e-1,
        3.60344899949804439e-1,
        1.25781726111229246e-1,
        1.60837851487422766e-2,
        6.58749161529837803e-4,
        1.63153871373020978e-2,
    ];
    const Q: [f64; 5] = [
        2.56852019228982242e0,
        1.87295284992346047e0,
        5.27905102951428412e-1,
        6.05183413124413191e-2,
        2.33520497626869185e-3,
    ];
    const SQRPI: f64 = 5.6418958354775628695e-1;
    const THRESH: f64 = 0.46875;
    const XBIG: f64 = 26.543;

    let y = x.abs();
    let result = if y <= THRESH {
        let ysq = if y > 1e-300 { y * y } else { 0.0 };
        let mut xnum = A[4] * ysq;
        let mut xden = ysq;
        for i in 0..3 {
            xnum = (xnum + A[i]) * ysq;
            xden = (xden + B[i]) * ysq;
        }
        return 1.0 - x * (xnum + A[3]) / (xden + B[3]);
    } else if y <= 4.0 {
        let mut xnum = C[8] * y;
        let mut xden = y;
        for i in 0..7 {
            xnum = (xnum + C[i]) * y;
            xden = (xden + D[i]) * y;
        }
        let r = (xnum + C[7]) / (xden + D[7]);
        let ysq = (y * 16.0).trunc() / 16.0;
        let del = (y - ysq) * (y + ysq);
        (-ysq * ysq).exp() * (-del).exp() * r
    } else if y < XBIG {
        let ysq = 1.0 / (y * y);
        let mut xnum = P[5] * ysq;
        let mut xden = ysq;
        for i in 0..4 {
            xnum = (xnum + P[i]) * ysq;
            xden = (xden + Q[i]) * ysq;
        }
        let mut r = ysq * (xnum + P[4]) / (xden + Q[4]);
        r = (SQRPI - r) / y;
        let ysq = (y * 16.0).trunc() / 16.0;
        let del = (y - ysq) * (y + ysq);
        (-ysq * ysq).exp() * (-del).exp() * r
    } else {
        0.0
    };
    if x < 0.0 {
        2.0 - result
    } else {
        result
    }
}

/// Standard normal CDF.
fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Survival function of the Kolmogorov limit distribution,
/// `Q(t) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 t^2)`, with the
/// theta-function form for small `t` where the alternating series
/// converges slowly.
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 1.0 {
        let f = -(std::f64::consts::PI * std::f64::consts::PI) / (8.0 * t * t);
        let mut sum = 0.0;
        for k in 0..64 {
            let j = (2 * k + 1) as f64;
            let term = (f * j * j).exp();
            sum += term;
            if term < 1e-18 {
                break;
            }
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / t * sum;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for k in 1..=64u32 {
            let term = (-2.0 * (k as f64) * (k as f64) * t * t).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-18 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

fn sample_mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One-sample KS test of the values against a normal distribution fitted
/// by their sample mean and standard deviation. `is_normal` follows the
/// `p > 0.05` rule. Fewer than two values, non-finite values, or zero
/// spread yield `DegenerateSample`; callers fall back to quantile banding.
pub fn ks_normality_test(values: &[f64]) -> Result<NormalityResult, AnalysisError> {
    if values.len() < 2 {
        return Err(AnalysisError::DegenerateSample(format!(
            "need at least 2 values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(AnalysisError::DegenerateSample(
            "non-finite value in sample".into(),
        ));
    }
    let (mean, sd) = sample_mean_sd(values);
    if sd <= 0.0 || sd.is_nan() {
        return Err(AnalysisError::DegenerateSample("zero variance".into()));
    }

    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = normal_cdf((x - mean) / sd);
        let d_plus = (i + 1) as f64 / n - cdf;
        let d_minus = cdf - i as f64 / n;
        d = d.max(d_plus).max(d_minus);
    }
    let p = kolmogorov_sf(n.sqrt() * d);
    Ok(NormalityResult::from_test(d, p))
}

/// Band assignment strategy actually used for a criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandingStrategy {
    SigmaBands,
    Quantiles,
}

/// Type-7 quantile (linear interpolation between order statistics).
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

fn median_sorted(sorted: &[f64]) -> f64 {
    quantile_sorted(sorted, 0.5)
}

#[derive(Debug, Clone, Copy)]
enum Exec {
    Seq,
    #[cfg(feature = "parallel")]
    Par,
}

fn sort_values(values: &mut [f64], exec: Exec) {
    match exec {
        Exec::Seq => values.sort_unstable_by(f64::total_cmp),
        #[cfg(feature = "parallel")]
        Exec::Par => values.par_sort_unstable_by(f64::total_cmp),
    }
}

fn assign_bands<F>(pairs: &[(&str, f64)], classify: F, exec: Exec) -> BTreeMap<String, Modifier>
where
    F: Fn(f64) -> Modifier + Sync,
{
    match exec {
        Exec::Seq => pairs
            .iter()
            .map(|(id, v)| (id.to_string(), classify(*v)))
            .collect(),
        #[cfg(feature = "parallel")]
        Exec::Par => pairs
            .par_iter()
            .map(|(id, v)| (id.to_string(), classify(*v)))
            .collect::<Vec<_>>()
            .into_iter()
            .collect(),
    }
}

/// Sigma banding for normal data: five bands at k and 2k standard
/// deviations around the mean. The inner boundaries are closed toward the
/// base band; the outer boundaries are closed toward the inner bands.
pub fn partition_normal(
    values_by_type: &[(&str, f64)],
    mean: f64,
    sd: f64,
    k: f64,
) -> (BTreeMap<String, Modifier>, [f64; 4]) {
    partition_normal_exec(values_by_type, mean, sd, k, Exec::Seq)
}

fn partition_normal_exec(
    values_by_type: &[(&str, f64)],
    mean: f64,
    sd: f64,
    k: f64,
    exec: Exec,
) -> (BTreeMap<String, Modifier>, [f64; 4]) {
    assert!(sd > 0.0, "partition_normal requires sd > 0");
    assert!(k > 0.0, "partition_normal requires k > 0");
    let cuts = [
        mean - 2.0 * k * sd,
        mean - k * sd,
        mean + k * sd,
        mean + 2.0 * k * sd,
    ];
    let classify = |v: f64| {
        if v < cuts[0] {
            Modifier::Least
        } else if v < cuts[1] {
            Modifier::Less
        } else if v <= cuts[2] {
            Modifier::Base
        } else if v <= cuts[3] {
            Modifier::More
        } else {
            Modifier::Most
        }
    };
    (assign_bands(values_by_type, classify, exec), cuts)
}

/// Quartile banding for non-normal data: the lower quarter (values at or
/// below Q1) splits at its median into least/less, the upper quarter
/// (values at or above Q3) at its median into more/most, and the
/// interquartile range is base. When Q1 equals Q3 the lower branch wins.
/// All-equal or single-value inputs land entirely in base.
pub fn partition_quantile(
    values_by_type: &[(&str, f64)],
) -> (BTreeMap<String, Modifier>, [f64; 4]) {
    partition_quantile_exec(values_by_type, Exec::Seq)
}

fn partition_quantile_exec(
    values_by_type: &[(&str, f64)],
    exec: Exec,
) -> (BTreeMap<String, Modifier>, [f64; 4]) {
    assert!(
        !values_by_type.is_empty(),
        "partition_quantile requires at least one value"
    );
    let mut sorted: Vec<f64> = values_by_type.iter().map(|(_, v)| *v).collect();
    sort_values(&mut sorted, exec);
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    if min == max {
        let bands = assign_bands(values_by_type, |_| Modifier::Base, exec);
        return (bands, [min; 4]);
    }
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let split = sorted.partition_point(|&v| v <= q1);
    let lower = &sorted[..split];
    let upper = &sorted[sorted.partition_point(|&v| v < q3)..];
    let lower_median = median_sorted(lower);
    let upper_median = median_sorted(upper);
    let classify = |v: f64| {
        if v <= q1 {
            if v < lower_median {
                Modifier::Least
            } else {
                Modifier::Less
            }
        } else if v >= q3 {
            if v > upper_median {
                Modifier::Most
            } else {
                Modifier::More
            }
        } else {
            Modifier::Base
        }
    };
    (
        assign_bands(values_by_type, classify, exec),
        [lower_median, q1, q3, upper_median],
    )
}

fn reverse_band(m: Modifier) -> Modifier {
    match m {
        Modifier::Least => Modifier::Most,
        Modifier::Less => Modifier::More,
        Modifier::Base => Modifier::Base,
        Modifier::More => Modifier::Less,
        Modifier::Most => Modifier::Least,
    }
}

/// Band assignments for one criterion, with the diagnostics that produced
/// them. Cut points refer to raw metric values (before any direction
/// reversal of the labels).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionGrouping {
    pub criterion: Criterion,
    pub metric: MetricKind,
    pub direction: Direction,
    pub strategy: BandingStrategy,
    pub normality: Option<NormalityResult>,
    pub cut_points: [f64; 4],
    pub bands: BTreeMap<String, Modifier>,
}

/// Per-criterion assignment of every event type with a defined metric
/// value to one of the five bands.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupingTable {
    per_criterion: BTreeMap<Criterion, CriterionGrouping>,
}

impl GroupingTable {
    pub fn from_groupings(
        groupings: impl IntoIterator<Item = CriterionGrouping>,
    ) -> Result<Self, AnalysisError> {
        let mut per_criterion = BTreeMap::new();
        for g in groupings {
            let criterion = g.criterion;
            if per_criterion.insert(criterion, g).is_some() {
                return Err(AnalysisError::DuplicateBinding(criterion));
            }
        }
        Ok(GroupingTable { per_criterion })
    }

    pub fn criterion(&self, criterion: Criterion) -> Option<&CriterionGrouping> {
        self.per_criterion.get(&criterion)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CriterionGrouping> {
        self.per_criterion.values()
    }

    pub fn criteria(&self) -> impl Iterator<Item = Criterion> + '_ {
        self.per_criterion.keys().copied()
    }

    /// Union of event types banded under any criterion.
    pub fn event_types(&self) -> BTreeSet<&str> {
        self.per_criterion
            .values()
            .flat_map(|g| g.bands.keys().map(String::as_str))
            .collect()
    }
}

fn build_grouping(
    snapshot: &MetricSnapshot,
    binding: &CriterionBinding,
    sigma_k: f64,
    exec: Exec,
) -> Result<CriterionGrouping, AnalysisError> {
    let pairs = snapshot.metric_values(&binding.metric);
    if pairs.is_empty() {
        return Err(AnalysisError::MissingBinding {
            criterion: binding.criterion,
            metric: binding.metric.clone(),
        });
    }
    let values: Vec<f64> = pairs.iter().map(|(_, v)| *v).collect();
    let normality = if values.len() >= MIN_NORMALITY_SAMPLES {
        ks_normality_test(&values).ok()
    } else {
        None
    };
    let (mut bands, cut_points, strategy) = match normality {
        Some(n) if n.is_normal => {
            let (mean, sd) = sample_mean_sd(&values);
            let (bands, cuts) = partition_normal_exec(&pairs, mean, sd, sigma_k, exec);
            (bands, cuts, BandingStrategy::SigmaBands)
        }
        // Non-normal data and degenerate samples both band by quantiles.
        _ => {
            let (bands, cuts) = partition_quantile_exec(&pairs, exec);
            (bands, cuts, BandingStrategy::Quantiles)
        }
    };
    if binding.direction == Direction::HigherIsLess {
        for band in bands.values_mut() {
            *band = reverse_band(*band);
        }
    }
    Ok(CriterionGrouping {
        criterion: binding.criterion,
        metric: binding.metric.clone(),
        direction: binding.direction,
        strategy,
        normality,
        cut_points,
        bands,
    })
}

fn group_impl(
    snapshot: &MetricSnapshot,
    bindings: &[CriterionBinding],
    sigma_k: f64,
    exec: Exec,
) -> Result<GroupingTable, AnalysisError> {
    let groupings: Result<Vec<_>, _> = match exec {
        Exec::Seq => bindings
            .iter()
            .map(|b| build_grouping(snapshot, b, sigma_k, Exec::Seq))
            .collect(),
        #[cfg(feature = "parallel")]
        Exec::Par => bindings
            .par_iter()
            .map(|b| build_grouping(snapshot, b, sigma_k, Exec::Par))
            .collect(),
    };
    GroupingTable::from_groupings(groupings?)
}

/// Band every event type per bound criterion. Uses the data-parallel path
/// when the `parallel` feature is enabled.
pub fn group(
    snapshot: &MetricSnapshot,
    bindings: &[CriterionBinding],
    sigma_k: f64,
) -> Result<GroupingTable, AnalysisError> {
    #[cfg(feature = "parallel")]
    {
        group_impl(snapshot, bindings, sigma_k, Exec::Par)
    }
    #[cfg(not(feature = "parallel"))]
    {
        group_impl(snapshot, bindings, sigma_k, Exec::Seq)
    }
}

/// Always-sequential grouping; the fallback used when the `parallel`
/// feature is disabled, kept callable for benchmarking both paths.
pub fn group_sequential(
    snapshot: &MetricSnapshot,
    bindings: &[CriterionBinding],
    sigma_k: f64,
) -> Result<GroupingTable, AnalysisError> {
    group_impl(snapshot, bindings, sigma_k, Exec::Seq)
}

/// Does a band satisfy a filter leaf? Modified leaves are cumulative
/// toward their extreme (`more` selects the more and most bands, `less`
/// the less and least bands); a bare criterion selects the base band.
pub fn leaf_matches(leaf: Modifier, band: Modifier) -> bool {
    match leaf {
        Modifier::Least => band == Modifier::Least,
        Modifier::Less => band <= Modifier::Less,
        Modifier::Base => band == Modifier::Base,
        Modifier::More => band >= Modifier::More,
        Modifier::Most => band == Modifier::Most,
    }
}

/// Evaluate a filter over a grouping table with exact set operations.
/// Event types without a banding for a leaf's criterion never satisfy
/// that leaf.
pub fn evaluate_filter(
    expr: &FilterExpr,
    table: &GroupingTable,
) -> Result<BTreeSet<String>, AnalysisError> {
    match expr {
        FilterExpr::Leaf {
            modifier,
            criterion,
        } => {
            let grouping = table
                .criterion(*criterion)
                .ok_or(AnalysisError::MissingCriterionGrouping(*criterion))?;
            Ok(grouping
                .bands
                .iter()
                .filter(|(_, band)| leaf_matches(*modifier, **band))
                .map(|(id, _)| id.clone())
                .collect())
        }
        FilterExpr::Op { op, left, right } => {
            let l = evaluate_filter(left, table)?;
            let r = evaluate_filter(right, table)?;
            Ok(match op {
                crate::dsl::SetOp::Union => l.union(&r).cloned().collect(),
                crate::dsl::SetOp::Intersection => l.intersection(&r).cloned().collect(),
                crate::dsl::SetOp::Difference => l.difference(&r).cloned().collect(),
            })
        }
    }
}

/// The selected set for one cycle plus the diff against the previous one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceSet {
    pub cycle_index: u64,
    pub selected: BTreeSet<String>,
    pub added: BTreeSet<String>,
    pub removed: BTreeSet<String>,
}

impl RelevanceSet {
    /// First cycle: everything selected counts as added.
    pub fn initial(cycle_index: u64, selected: BTreeSet<String>) -> Self {
        RelevanceSet {
            cycle_index,
            added: selected.clone(),
            removed: BTreeSet::new(),
            selected,
        }
    }

    /// Subsequent cycle: added = selected \ previous, removed = previous \ selected.
    pub fn next(previous: &RelevanceSet, cycle_index: u64, selected: BTreeSet<String>) -> Self {
        let added = selected.difference(&previous.selected).cloned().collect();
        let removed = previous.selected.difference(&selected).cloned().collect();
        RelevanceSet {
            cycle_index,
            selected,
            added,
            removed,
        }
    }
}
