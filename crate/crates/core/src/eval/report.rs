use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::metrics::{nsd, pearson, radar_normalize, relative_improvement, scalability_slope, tuning_gain};
use super::score::{combined_scores, win_scores, ModelKey, TiePrecision};
use super::{Domain, EvalError, MetricFamily, ResultRecord, Strategy};
use crate::Direction;

/// Record selector. Unset fields match everything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub strategy: Option<Strategy>,
    pub domain: Option<Domain>,
    pub model_id: Option<String>,
    pub model_size: Option<u64>,
}

impl Filter {
    pub fn matches(&self, r: &ResultRecord) -> bool {
        self.strategy.is_none_or(|s| s == r.strategy)
            && self.domain.is_none_or(|d| d == r.domain)
            && self.model_id.as_ref().is_none_or(|m| *m == r.model_id)
            && self.model_size.is_none_or(|s| s == ModelKey::of(r).size)
    }
}

fn family_of<'a>(records: impl IntoIterator<Item = &'a ResultRecord>) -> Result<MetricFamily, EvalError> {
    let mut fams = records.into_iter().map(|r| r.metric.family());
    let first = fams.next().ok_or(EvalError::EmptySelection)?;
    if fams.any(|f| f != first) {
        return Err(EvalError::MixedMetricFamilies);
    }
    Ok(first)
}

/// Mean value over the records the filter selects.
pub fn aggregate_performance(records: &[ResultRecord], filter: &Filter) -> Result<f64, EvalError> {
    let sel: Vec<&ResultRecord> = records.iter().filter(|r| filter.matches(r)).collect();
    family_of(sel.iter().copied())?;
    Ok(sel.iter().map(|r| r.value).sum::<f64>() / sel.len() as f64)
}

/// Dimension names in report order.
pub const DIMENSIONS: [&str; 7] = [
    "win_score",
    "avg_performance",
    "feature_quality",
    "tuning_gain",
    "variance_nsd",
    "transferability",
    "scalability_slope",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelDimensions {
    /// Fraction of cells won, ties split.
    pub win_score: Option<f64>,
    pub avg_performance: Option<f64>,
    pub feature_quality: Option<f64>,
    pub tuning_gain: Option<f64>,
    pub variance_nsd: Option<f64>,
    pub transferability: Option<f64>,
    pub scalability_slope: Option<f64>,
}

impl ModelDimensions {
    pub fn values(&self) -> [Option<f64>; 7] {
        [
            self.win_score,
            self.avg_performance,
            self.feature_quality,
            self.tuning_gain,
            self.variance_nsd,
            self.transferability,
            self.scalability_slope,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub family: MetricFamily,
    pub dimensions: Vec<String>,
    pub directions: Vec<Direction>,
    pub models: BTreeMap<String, ModelDimensions>,
    /// Per model, one coordinate in [0, 1] per dimension; `None` where the
    /// raw value could not be computed.
    pub radar: BTreeMap<String, Vec<Option<f64>>>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn optional<T>(r: Result<T, EvalError>) -> Result<Option<T>, EvalError> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(
            EvalError::EmptySelection
            | EvalError::Empty
            | EvalError::InsufficientPoints(_)
            | EvalError::DegenerateSizes
            | EvalError::TooFew { .. },
        ) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Builds the seven dimensions per model family. Records must share one
/// metric family. Per-size quantities are averaged over sizes; scalability
/// fits the per-size average performance against ln(size).
pub fn dimension_report(records: &[ResultRecord], tie: TiePrecision) -> Result<DimensionReport, EvalError> {
    let family = family_of(records)?;
    let direction = records[0].direction;
    if records.iter().any(|r| r.direction != direction) {
        return Err(EvalError::InconsistentDirection {
            task: records[0].task_id.clone(),
        });
    }
    let wins = win_scores(records, tie)?;
    let combined = combined_scores(&wins);
    let mut sizes: BTreeMap<&str, BTreeSet<u64>> = BTreeMap::new();
    for r in records {
        sizes.entry(&r.model_id).or_default().insert(ModelKey::of(r).size);
    }

    let mut models = BTreeMap::new();
    for (model, model_sizes) in &sizes {
        let per_size = |filter: Filter| -> Result<Option<f64>, EvalError> {
            let mut vals = Vec::new();
            for &size in model_sizes {
                let f = Filter {
                    model_id: Some(model.to_string()),
                    model_size: Some(size),
                    ..filter.clone()
                };
                if let Some(v) = optional(aggregate_performance(records, &f))? {
                    vals.push(v);
                }
            }
            Ok(mean(&vals))
        };
        let avg_performance = per_size(Filter::default())?;
        let feature_quality = per_size(Filter {
            strategy: Some(Strategy::Head),
            ..Default::default()
        })?;
        let transferability = per_size(Filter {
            domain: Some(Domain::Out),
            ..Default::default()
        })?;

        let mut gains = Vec::new();
        for &size in model_sizes {
            let key = |s: Strategy| -> BTreeMap<(&str, &str), f64> {
                records
                    .iter()
                    .filter(|r| r.model_id == *model && ModelKey::of(r).size == size && r.strategy == s)
                    .map(|r| ((r.task_id.as_str(), r.dataset_id.as_str()), r.value))
                    .collect()
            };
            let head = key(Strategy::Head);
            let full = key(Strategy::Full);
            let (h, f): (Vec<f64>, Vec<f64>) = head
                .iter()
                .filter_map(|(k, &hv)| full.get(k).map(|&fv| (hv, fv)))
                .unzip();
            if let Some(g) = optional(tuning_gain(&h, &f, direction))? {
                gains.push(g);
            }
        }

        let all: Vec<f64> = records.iter().filter(|r| r.model_id == *model).map(|r| r.value).collect();
        let variance_nsd = match nsd(&all) {
            Ok(v) => Some(v),
            Err(EvalError::ZeroMean | EvalError::TooFew { .. }) => None,
            Err(e) => return Err(e),
        };

        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &size in model_sizes {
            let f = Filter {
                model_id: Some(model.to_string()),
                model_size: Some(size),
                ..Default::default()
            };
            if let Some(v) = optional(aggregate_performance(records, &f))? {
                xs.push(size as f64);
                ys.push(v);
            }
        }
        let scalability_slope = optional(scalability_slope(&xs, &ys))?.map(|(a, _)| a);

        models.insert(
            model.to_string(),
            ModelDimensions {
                win_score: Some(combined.get(*model).copied().unwrap_or(0.0) / wins.tasks as f64),
                avg_performance,
                feature_quality,
                tuning_gain: mean(&gains),
                variance_nsd,
                transferability,
                scalability_slope,
            },
        );
    }

    let directions = vec![
        Direction::Higher,
        direction,
        direction,
        Direction::Higher,
        Direction::Lower,
        direction,
        // A falling error curve is the improving one.
        direction,
    ];
    let radar = radar_with_gaps(&models, &directions)?;
    Ok(DimensionReport {
        family,
        dimensions: DIMENSIONS.iter().map(|s| s.to_string()).collect(),
        directions,
        models,
        radar,
    })
}

/// Normalizes each dimension over the models that have a value for it. A
/// dimension only one model has maps that model to 1.
fn radar_with_gaps(
    models: &BTreeMap<String, ModelDimensions>,
    directions: &[Direction],
) -> Result<BTreeMap<String, Vec<Option<f64>>>, EvalError> {
    let mut out: BTreeMap<String, Vec<Option<f64>>> =
        models.keys().map(|m| (m.clone(), vec![None; directions.len()])).collect();
    for (j, &dir) in directions.iter().enumerate() {
        let present: Vec<(&String, f64)> = models.iter().filter_map(|(m, d)| d.values()[j].map(|v| (m, v))).collect();
        match present.len() {
            0 => {}
            1 => out.get_mut(present[0].0).expect("known model")[j] = Some(1.0),
            _ => {
                let table: Vec<Vec<f64>> = present.iter().map(|&(_, v)| vec![v]).collect();
                let norm = radar_normalize(&table, &[dir])?;
                for ((m, _), row) in present.iter().zip(norm) {
                    out.get_mut(*m).expect("known model")[j] = Some(row[0]);
                }
            }
        }
    }
    Ok(out)
}

/// Downstream data-size band of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SizeBand {
    /// At most 10 h.
    Small,
    /// Between 10 and 100 h.
    Medium,
    /// At least 100 h.
    Large,
}

impl SizeBand {
    pub fn of(hours: f64) -> Self {
        if hours <= 10.0 {
            SizeBand::Small
        } else if hours < 100.0 {
            SizeBand::Medium
        } else {
            SizeBand::Large
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SizeBand::Small => "<=10h",
            SizeBand::Medium => "10-100h",
            SizeBand::Large => ">=100h",
        }
    }
}

/// One task scored by a reference model and a candidate model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimePair {
    pub task_id: String,
    pub dataset_id: String,
    pub domain: Domain,
    pub data_hours: f64,
    pub direction: Direction,
    pub reference: f64,
    pub candidate: f64,
}

impl RegimePair {
    /// Percent improvement of the candidate over the reference; positive
    /// means the candidate is better whatever the metric direction.
    pub fn improvement(&self) -> Result<f64, EvalError> {
        let ri = relative_improvement(self.reference, self.candidate)?;
        Ok(match self.direction {
            Direction::Lower => ri,
            Direction::Higher => -ri,
        })
    }
}

/// Pairs the largest size of each family on every cell both have under the
/// given strategy. Cells without `data_hours` are skipped.
pub fn regime_pairs(
    records: &[ResultRecord],
    reference_model: &str,
    candidate_model: &str,
    strategy: Strategy,
) -> Result<Vec<RegimePair>, EvalError> {
    let largest = |model: &str| {
        records
            .iter()
            .filter(|r| r.model_id == model)
            .map(|r| ModelKey::of(r).size)
            .max()
    };
    let (Some(rs), Some(cs)) = (largest(reference_model), largest(candidate_model)) else {
        return Err(EvalError::EmptySelection);
    };
    let cells = |model: &str, size: u64| -> BTreeMap<(&str, &str), &ResultRecord> {
        records
            .iter()
            .filter(|r| r.model_id == model && ModelKey::of(r).size == size && r.strategy == strategy)
            .map(|r| ((r.task_id.as_str(), r.dataset_id.as_str()), r))
            .collect()
    };
    let reference = cells(reference_model, rs);
    let candidate = cells(candidate_model, cs);
    let mut out = Vec::new();
    for (k, r) in &reference {
        let (Some(c), Some(hours)) = (candidate.get(k), r.data_hours) else {
            continue;
        };
        out.push(RegimePair {
            task_id: r.task_id.clone(),
            dataset_id: r.dataset_id.clone(),
            domain: r.domain,
            data_hours: hours,
            direction: r.direction,
            reference: r.value,
            candidate: c.value,
        });
    }
    if out.is_empty() {
        return Err(EvalError::EmptySelection);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeRow {
    pub domain: Domain,
    pub band: SizeBand,
    pub count: usize,
    pub mean_improvement: f64,
    /// Correlation between hours and improvement; `None` when either is
    /// constant within the regime or there is a single task.
    pub pearson_r: Option<f64>,
}

/// Groups pairs by domain and size band.
pub fn regime_summary(pairs: &[RegimePair]) -> Result<Vec<RegimeRow>, EvalError> {
    let mut groups: BTreeMap<(Domain, SizeBand), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for p in pairs {
        let g = groups.entry((p.domain, SizeBand::of(p.data_hours))).or_default();
        g.0.push(p.data_hours);
        g.1.push(p.improvement()?);
    }
    groups
        .into_iter()
        .map(|((domain, band), (hours, imp))| {
            let pearson_r = match pearson(&hours, &imp) {
                Ok(r) => Some(r),
                Err(EvalError::ConstantInput | EvalError::TooFew { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok(RegimeRow {
                domain,
                band,
                count: imp.len(),
                mean_improvement: imp.iter().sum::<f64>() / imp.len() as f64,
                pearson_r,
            })
        })
        .collect()
}
