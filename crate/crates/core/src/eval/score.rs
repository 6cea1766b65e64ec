use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{EvalError, ResultRecord, Strategy};
use crate::Direction;

/// A model family at one parameter count.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelKey {
    pub model_id: String,
    pub size: u64,
}

impl ModelKey {
    pub fn new(model_id: impl Into<String>, size: f64) -> Self {
        ModelKey {
            model_id: model_id.into(),
            size: size.round() as u64,
        }
    }

    pub fn of(r: &ResultRecord) -> Self {
        ModelKey::new(r.model_id.clone(), r.model_size)
    }
}

impl fmt::Display for ModelKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.size as f64;
        let (v, suffix) = if s >= 1e9 {
            (s / 1e9, "B")
        } else if s >= 1e6 {
            (s / 1e6, "M")
        } else if s >= 1e3 {
            (s / 1e3, "K")
        } else {
            (s, "")
        };
        write!(f, "{}-{}{}", self.model_id, v, suffix)
    }
}

/// How close two values must be to count as a tie for the best value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TiePrecision {
    #[default]
    Exact,
    /// Compare after rounding to this many decimals, as printed in a table.
    Decimals(u32),
}

impl TiePrecision {
    fn key(self, v: f64) -> f64 {
        match self {
            TiePrecision::Exact => v,
            TiePrecision::Decimals(d) => {
                let s = 10f64.powi(d as i32);
                (v * s).round()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinScores {
    /// Number of (strategy, task, dataset) cells scored.
    pub tasks: usize,
    pub per_model: BTreeMap<ModelKey, f64>,
}

impl WinScores {
    pub fn get(&self, model: &ModelKey) -> f64 {
        self.per_model.get(model).copied().unwrap_or(0.0)
    }
}

/// Scores every (strategy, task_id, dataset_id) cell: the k models sharing
/// the best value each get 1/k. Every model that appears anywhere must have a value
/// in every cell.
pub fn win_scores(records: &[ResultRecord], tie: TiePrecision) -> Result<WinScores, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut cells: BTreeMap<(Strategy, &str, &str), (Direction, BTreeMap<ModelKey, f64>)> = BTreeMap::new();
    let mut models: BTreeMap<ModelKey, f64> = BTreeMap::new();
    for r in records {
        let key = ModelKey::of(r);
        models.insert(key.clone(), 0.0);
        let (dir, cell) = cells
            .entry((r.strategy, &r.task_id, &r.dataset_id))
            .or_insert_with(|| (r.direction, BTreeMap::new()));
        if *dir != r.direction {
            return Err(EvalError::InconsistentDirection {
                task: r.task_id.clone(),
            });
        }
        if cell.insert(key.clone(), r.value).is_some() {
            return Err(EvalError::DuplicateCell {
                task: r.task_id.clone(),
                dataset: r.dataset_id.clone(),
                model: key.to_string(),
            });
        }
    }
    for ((_, task, dataset), (dir, cell)) in &cells {
        if let Some(missing) = models.keys().find(|m| !cell.contains_key(*m)) {
            return Err(EvalError::MissingCell {
                task: task.to_string(),
                dataset: dataset.to_string(),
                model: missing.to_string(),
            });
        }
        let keyed: Vec<(&ModelKey, f64)> = cell.iter().map(|(m, &v)| (m, tie.key(v))).collect();
        let best = keyed
            .iter()
            .map(|&(_, v)| v)
            .reduce(|a, b| if dir.better(b, a) { b } else { a })
            .ok_or(EvalError::Empty)?;
        let winners: Vec<&ModelKey> = keyed.iter().filter(|&&(_, v)| v == best).map(|&(m, _)| m).collect();
        let share = 1.0 / winners.len() as f64;
        for m in winners {
            *models.get_mut(m).expect("winner is a known model") += share;
        }
    }
    Ok(WinScores {
        tasks: cells.len(),
        per_model: models,
    })
}

/// Sums the per-size scores of each model family.
pub fn combined_scores(scores: &WinScores) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for (m, s) in &scores.per_model {
        *out.entry(m.model_id.clone()).or_insert(0.0) += s;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{Domain, Metric};

    fn rec(task: &str, model: &str, size: f64, value: f64) -> ResultRecord {
        ResultRecord {
            task_id: task.into(),
            dataset_id: "d".into(),
            model_id: model.into(),
            model_size: size,
            strategy: Strategy::Full,
            metric: Metric::Mae,
            value,
            direction: Direction::Lower,
            domain: Domain::In,
            data_hours: None,
        }
    }

    #[test]
    fn ties_split_equally() {
        let recs = vec![rec("t", "a", 1.0, 2.0), rec("t", "b", 1.0, 2.0), rec("t", "c", 1.0, 3.0)];
        let s = win_scores(&recs, TiePrecision::Exact).unwrap();
        assert_eq!(s.get(&ModelKey::new("a", 1.0)), 0.5);
        assert_eq!(s.get(&ModelKey::new("b", 1.0)), 0.5);
        assert_eq!(s.get(&ModelKey::new("c", 1.0)), 0.0);
    }

    #[test]
    fn precision_controls_ties() {
        let recs = vec![rec("t", "a", 1.0, 2.001), rec("t", "b", 1.0, 2.004)];
        let exact = win_scores(&recs, TiePrecision::Exact).unwrap();
        assert_eq!(exact.get(&ModelKey::new("a", 1.0)), 1.0);
        let rounded = win_scores(&recs, TiePrecision::Decimals(2)).unwrap();
        assert_eq!(rounded.get(&ModelKey::new("a", 1.0)), 0.5);
    }

    #[test]
    fn missing_cell_is_named() {
        let recs = vec![rec("t", "a", 1.0, 2.0), rec("t", "b", 1.0, 2.0), rec("u", "a", 1.0, 1.0)];
        match win_scores(&recs, TiePrecision::Exact) {
            Err(EvalError::MissingCell { task, model, .. }) => {
                assert_eq!(task, "u");
                assert_eq!(model, "b-1");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn combined_sums_family() {
        let recs = vec![rec("t", "a", 1e6, 1.0), rec("t", "a", 2e6, 2.0), rec("t", "b", 1e6, 3.0)];
        let s = win_scores(&recs, TiePrecision::Exact).unwrap();
        let c = combined_scores(&s);
        assert_eq!(c["a"], 1.0);
        assert_eq!(c["b"], 0.0);
        assert_eq!(ModelKey::new("a", 4e7).to_string(), "a-40M");
    }
}
