//! Normalization selection from dataset distance statistics.
//!
//! Cross-project pairs often have wildly different metric scales. This
//! module summarizes each project by the distribution of its pairwise
//! instance distances, grades how similar the two distributions are, and
//! picks one of five normalization strategies by a fixed first-match rule
//! table. The chosen strategy can then be applied to both datasets.

use serde::{Deserialize, Serialize};

use crate::dataset::ProjectDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Summary statistics of the pairwise Euclidean distance distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistStats<T> {
    pub mean: T,
    pub median: T,
    pub min: T,
    pub max: T,
    /// Population standard deviation over all distances.
    pub std: T,
    pub n_instances: usize,
}

impl<T> DistStats<T> {
    /// Number of unordered pairs the statistics were computed over.
    pub fn n_pairs(&self) -> usize {
        self.n_instances * (self.n_instances - 1) / 2
    }
}

/// Distance statistics over all `n * (n - 1) / 2` unordered instance pairs.
pub fn pairwise_dist<T: Scalar>(dataset: &ProjectDataset<T>) -> Result<DistStats<T>> {
    let n = dataset.len();
    if n < 2 {
        return Err(Error::TooFewInstances {
            context: "pairwise distance statistics",
            needed: 2,
            got: n,
        });
    }
    let instances = dataset.instances();
    let mut distances = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = T::zero();
            for (&a, &b) in instances[i].features.iter().zip(&instances[j].features) {
                let d = a - b;
                acc += d * d;
            }
            distances.push(acc.sqrt());
        }
    }

    let count = T::from_f64_lossy(distances.len() as f64);
    let mean = distances.iter().copied().sum::<T>() / count;
    let var = distances
        .iter()
        .map(|&d| (d - mean) * (d - mean))
        .sum::<T>()
        / count;

    let mut sorted = distances;
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / T::from_f64_lossy(2.0)
    };

    Ok(DistStats {
        mean,
        median,
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        std: var.sqrt(),
        n_instances: n,
    })
}

/// How a target-side statistic compares against the source side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityLevel {
    MuchLess,
    Less,
    Same,
    More,
    MuchMore,
}

impl SimilarityLevel {
    fn is_extreme(self) -> bool {
        matches!(self, SimilarityLevel::MuchLess | SimilarityLevel::MuchMore)
    }
}

/// Ratio cut points grading `target / source`.
///
/// With the defaults: below 0.4 is much-less, [0.4, 0.9) less,
/// [0.9, 1.1] same, (1.1, 2.5] more, above 2.5 much-more.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityThresholds {
    pub much_less_below: f64,
    pub less_below: f64,
    pub same_upto: f64,
    pub more_upto: f64,
}

impl Default for SimilarityThresholds {
    fn default() -> Self {
        SimilarityThresholds {
            much_less_below: 0.4,
            less_below: 0.9,
            same_upto: 1.1,
            more_upto: 2.5,
        }
    }
}

impl SimilarityThresholds {
    pub fn validate(&self) -> Result<()> {
        let t = [
            self.much_less_below,
            self.less_below,
            self.same_upto,
            self.more_upto,
        ];
        if t.iter().any(|x| !(x.is_finite() && *x > 0.0)) || t.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(format!(
                "similarity thresholds must be positive and strictly increasing, got {t:?}"
            )));
        }
        Ok(())
    }

    fn grade(&self, source: f64, target: f64) -> SimilarityLevel {
        if source == 0.0 {
            // Degenerate reference: equal-zero is the same scale, anything
            // larger is treated as an extreme blow-up.
            return if target == 0.0 {
                SimilarityLevel::Same
            } else {
                SimilarityLevel::MuchMore
            };
        }
        let r = target / source;
        if r < self.much_less_below {
            SimilarityLevel::MuchLess
        } else if r < self.less_below {
            SimilarityLevel::Less
        } else if r <= self.same_upto {
            SimilarityLevel::Same
        } else if r <= self.more_upto {
            SimilarityLevel::More
        } else {
            SimilarityLevel::MuchMore
        }
    }
}

/// Per-statistic similarity grades of target against source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DistComparison {
    pub mean: SimilarityLevel,
    pub median: SimilarityLevel,
    pub min: SimilarityLevel,
    pub max: SimilarityLevel,
    pub std: SimilarityLevel,
    pub n_instances: SimilarityLevel,
}

/// Grades target distance statistics against source with default cut points.
pub fn compare<T: Scalar>(source: &DistStats<T>, target: &DistStats<T>) -> DistComparison {
    compare_with(source, target, &SimilarityThresholds::default())
}

/// Grades target distance statistics against source with explicit cut points.
pub fn compare_with<T: Scalar>(
    source: &DistStats<T>,
    target: &DistStats<T>,
    thresholds: &SimilarityThresholds,
) -> DistComparison {
    let g = |s: T, t: T| thresholds.grade(s.to_f64_lossy(), t.to_f64_lossy());
    DistComparison {
        mean: g(source.mean, target.mean),
        median: g(source.median, target.median),
        min: g(source.min, target.min),
        max: g(source.max, target.max),
        std: g(source.std, target.std),
        n_instances: thresholds.grade(source.n_instances as f64, target.n_instances as f64),
    }
}

/// Normalization strategies the rule table can pick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationChoice {
    /// Leave both datasets as they are.
    NoNorm,
    /// Per-feature min-max to [0, 1], each dataset by its own extrema.
    MinMax,
    /// Per-feature z-score of both datasets using source statistics.
    ZscoreSourceStats,
    /// Per-feature z-score of both datasets using target statistics.
    ZscoreTargetStats,
    /// Per-feature z-score, each dataset by its own statistics.
    Zscore,
}

/// Which rule fired and what it picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RuleDecision {
    pub rule_id: u8,
    pub choice: NormalizationChoice,
}

/// First-match decision over the five rules.
///
/// 1. mean and std both the same scale: no normalization needed.
/// 2. min, max, and instance count all extreme (much-less or much-more,
///    independently): per-dataset min-max.
/// 3. target distance spread much wider with fewer target instances, or
///    much narrower with more: z-score with source statistics.
/// 4. the mirrored condition of rule 3: z-score with target statistics.
/// 5. otherwise: plain per-dataset z-score.
pub fn select_rule(
    levels: &DistComparison,
    n_source: usize,
    n_target: usize,
) -> RuleDecision {
    use SimilarityLevel::{MuchLess, MuchMore, Same};

    if levels.mean == Same && levels.std == Same {
        return RuleDecision {
            rule_id: 1,
            choice: NormalizationChoice::NoNorm,
        };
    }
    if levels.min.is_extreme() && levels.max.is_extreme() && levels.n_instances.is_extreme() {
        return RuleDecision {
            rule_id: 2,
            choice: NormalizationChoice::MinMax,
        };
    }
    if (levels.std == MuchMore && n_target < n_source)
        || (levels.std == MuchLess && n_target > n_source)
    {
        return RuleDecision {
            rule_id: 3,
            choice: NormalizationChoice::ZscoreSourceStats,
        };
    }
    if (levels.std == MuchMore && n_target > n_source)
        || (levels.std == MuchLess && n_target < n_source)
    {
        return RuleDecision {
            rule_id: 4,
            choice: NormalizationChoice::ZscoreTargetStats,
        };
    }
    RuleDecision {
        rule_id: 5,
        choice: NormalizationChoice::Zscore,
    }
}

fn column_mean_std<T: Scalar>(ds: &ProjectDataset<T>) -> (Vec<T>, Vec<T>) {
    let n = T::from_f64_lossy(ds.len() as f64);
    let mut means = Vec::with_capacity(ds.feature_count());
    let mut stds = Vec::with_capacity(ds.feature_count());
    for j in 0..ds.feature_count() {
        let mean = ds.feature_column(j).sum::<T>() / n;
        let var = ds
            .feature_column(j)
            .map(|x| (x - mean) * (x - mean))
            .sum::<T>()
            / n;
        means.push(mean);
        stds.push(var.sqrt());
    }
    (means, stds)
}

fn column_min_max<T: Scalar>(ds: &ProjectDataset<T>) -> (Vec<T>, Vec<T>) {
    let mut mins = Vec::with_capacity(ds.feature_count());
    let mut maxs = Vec::with_capacity(ds.feature_count());
    for j in 0..ds.feature_count() {
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for x in ds.feature_column(j) {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        mins.push(lo);
        maxs.push(hi);
    }
    (mins, maxs)
}

fn rescale<T: Scalar>(
    ds: &ProjectDataset<T>,
    f: impl Fn(usize, T) -> T,
) -> Result<ProjectDataset<T>> {
    let rows = ds
        .instances()
        .iter()
        .map(|inst| {
            inst.features
                .iter()
                .enumerate()
                .map(|(j, &x)| f(j, x))
                .collect()
        })
        .collect();
    ds.with_features(rows)
}

fn zscore_with<T: Scalar>(
    ds: &ProjectDataset<T>,
    means: &[T],
    stds: &[T],
) -> Result<ProjectDataset<T>> {
    rescale(ds, |j, x| {
        if stds[j] == T::zero() {
            T::zero()
        } else {
            (x - means[j]) / stds[j]
        }
    })
}

fn min_max_own<T: Scalar>(ds: &ProjectDataset<T>) -> Result<ProjectDataset<T>> {
    let (mins, maxs) = column_min_max(ds);
    rescale(ds, |j, x| {
        let range = maxs[j] - mins[j];
        if range == T::zero() {
            T::zero()
        } else {
            (x - mins[j]) / range
        }
    })
}

/// Applies a normalization strategy to a source/target pair.
///
/// Zero-variance (or zero-range) features map to 0 under every rescaling
/// strategy rather than dividing by zero. Labels and instance order are
/// untouched; only feature values change.
pub fn apply_normalization<T: Scalar>(
    choice: NormalizationChoice,
    source: &ProjectDataset<T>,
    target: &ProjectDataset<T>,
) -> Result<(ProjectDataset<T>, ProjectDataset<T>)> {
    if source.feature_count() != target.feature_count() {
        return Err(Error::FeatureWidthMismatch {
            source_width: source.feature_count(),
            target_width: target.feature_count(),
        });
    }
    if source.is_empty() {
        return Err(Error::EmptyDataset(source.name().to_string()));
    }
    if target.is_empty() {
        return Err(Error::EmptyDataset(target.name().to_string()));
    }

    match choice {
        NormalizationChoice::NoNorm => Ok((source.clone(), target.clone())),
        NormalizationChoice::MinMax => Ok((min_max_own(source)?, min_max_own(target)?)),
        NormalizationChoice::ZscoreSourceStats => {
            let (means, stds) = column_mean_std(source);
            Ok((
                zscore_with(source, &means, &stds)?,
                zscore_with(target, &means, &stds)?,
            ))
        }
        NormalizationChoice::ZscoreTargetStats => {
            let (means, stds) = column_mean_std(target);
            Ok((
                zscore_with(source, &means, &stds)?,
                zscore_with(target, &means, &stds)?,
            ))
        }
        NormalizationChoice::Zscore => {
            let (sm, ss) = column_mean_std(source);
            let (tm, ts) = column_mean_std(target);
            Ok((
                zscore_with(source, &sm, &ss)?,
                zscore_with(target, &tm, &ts)?,
            ))
        }
    }
}
