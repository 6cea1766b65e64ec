use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::dataset::{Analyte, LabEvent};

/// One subject's observations of one analyte, strictly increasing in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabHistory {
    obs: Vec<(f64, f64)>,
}

impl LabHistory {
    pub fn new(obs: Vec<(f64, f64)>) -> Result<Self, BaselineError> {
        for (i, w) in obs.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                return Err(BaselineError::UnsortedHistory { index: i + 1 });
            }
        }
        Ok(Self { obs })
    }

    pub fn observations(&self) -> &[(f64, f64)] {
        &self.obs
    }
}

/// Groups lab events of `analyte` by subject. Same-time duplicates keep the
/// later row, since the history must be strictly increasing.
pub fn histories_by_subject(
    events: &[LabEvent],
    analyte: Analyte,
) -> Result<BTreeMap<String, LabHistory>, BaselineError> {
    let mut grouped: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for e in events.iter().filter(|e| e.analyte == analyte) {
        grouped.entry(e.subject_id.clone()).or_default().push((e.t, e.value));
    }
    grouped
        .into_iter()
        .map(|(s, mut obs)| {
            obs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut dedup: Vec<(f64, f64)> = Vec::with_capacity(obs.len());
            for o in obs {
                match dedup.last_mut() {
                    Some(last) if last.0 == o.0 => *last = o,
                    _ => dedup.push(o),
                }
            }
            Ok((s, LabHistory::new(dedup)?))
        })
        .collect()
}

/// Value of the latest observation strictly before `t`.
pub fn locf_predict(history: &LabHistory, t: f64) -> Result<f64, BaselineError> {
    let k = history.obs.partition_point(|o| o.0 < t);
    if k == 0 {
        return Err(BaselineError::NoHistory { t });
    }
    Ok(history.obs[k - 1].1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn carries_last_value_forward() {
        let h = LabHistory::new(vec![(0.0, 4.0), (100.0, 4.4)]).unwrap();
        assert_eq!(locf_predict(&h, 150.0), Ok(4.4));
        assert_eq!(locf_predict(&h, 50.0), Ok(4.0));
        assert_eq!(locf_predict(&h, 100.0), Ok(4.0));
        assert_eq!(locf_predict(&h, 0.0), Err(BaselineError::NoHistory { t: 0.0 }));
    }

    #[test]
    fn rejects_unsorted() {
        assert_eq!(
            LabHistory::new(vec![(1.0, 1.0), (1.0, 2.0)]),
            Err(BaselineError::UnsortedHistory { index: 1 })
        );
    }
}
