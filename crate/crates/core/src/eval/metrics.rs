use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Binary when the labels and predictions only use {0, 1} (positive class 1),
/// otherwise macro-averaged over every class seen in either vector.
pub fn classification_metrics(preds: &[i64], labels: &[i64]) -> Result<ClassMetrics, EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::LengthMismatch(preds.len(), labels.len()));
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    let accuracy = ratio(correct, preds.len());
    let counts = |c: i64| {
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_ = 0;
        for (&p, &l) in preds.iter().zip(labels) {
            match (p == c, l == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        prf(tp, fp, fn_)
    };
    let mut classes: Vec<i64> = preds.iter().chain(labels).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let (precision, recall, f1) = if classes.iter().all(|&c| c == 0 || c == 1) {
        counts(1)
    } else {
        let k = classes.len() as f64;
        let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
        for &c in &classes {
            let (pc, rc, fc) = counts(c);
            p += pc;
            r += rc;
            f += fc;
        }
        (p / k, r / k, f / k)
    };
    Ok(ClassMetrics {
        precision,
        recall,
        f1,
        accuracy,
    })
}

pub fn mae(preds: &[f64], targets: &[f64]) -> Result<f64, EvalError> {
    if preds.len() != targets.len() {
        return Err(EvalError::LengthMismatch(preds.len(), targets.len()));
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(preds.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum::<f64>() / preds.len() as f64)
}

/// Mean relative improvement of full over head tuning. Lower-better values
/// are inverted first so that a smaller error counts as higher performance.
pub fn tuning_gain(head: &[f64], full: &[f64], direction: Direction) -> Result<f64, EvalError> {
    if head.len() != full.len() {
        return Err(EvalError::LengthMismatch(head.len(), full.len()));
    }
    if head.is_empty() {
        return Err(EvalError::Empty);
    }
    let perf = |v: f64| match direction {
        Direction::Higher => v,
        Direction::Lower => 1.0 / v,
    };
    let mut total = 0.0;
    for (i, (&h, &f)) in head.iter().zip(full).enumerate() {
        let ph = perf(h);
        if ph == 0.0 || !ph.is_finite() {
            return Err(EvalError::ZeroHeadPerformance(i));
        }
        total += (perf(f) - ph) / ph;
    }
    Ok(total / head.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdKind {
    #[default]
    Population,
    Sample,
}

pub fn nsd(values: &[f64]) -> Result<f64, EvalError> {
    nsd_with(values, StdKind::Population)
}

pub fn nsd_with(values: &[f64], kind: StdKind) -> Result<f64, EvalError> {
    let n = values.len();
    if n < 2 {
        return Err(EvalError::TooFew { needed: 2, got: n });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if mean == 0.0 {
        return Err(EvalError::ZeroMean);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let denom = match kind {
        StdKind::Population => n as f64,
        StdKind::Sample => (n - 1) as f64,
    };
    Ok((ss / denom).sqrt() / mean)
}

/// Least-squares fit of `perf = a ln(size) + b`; returns `(a, b)`.
pub fn scalability_slope(sizes: &[f64], perf: &[f64]) -> Result<(f64, f64), EvalError> {
    if sizes.len() != perf.len() {
        return Err(EvalError::LengthMismatch(sizes.len(), perf.len()));
    }
    if sizes.len() < 2 {
        return Err(EvalError::InsufficientPoints(sizes.len()));
    }
    if sizes.iter().any(|&s| !(s > 0.0)) {
        return Err(EvalError::DegenerateSizes);
    }
    let x: Vec<f64> = sizes.iter().map(|s| s.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = perf.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= f64::EPSILON * mx.abs().max(1.0) * n {
        return Err(EvalError::DegenerateSizes);
    }
    let sxy: f64 = x.iter().zip(perf).map(|(a, b)| (a - mx) * (b - my)).sum();
    let a = sxy / sxx;
    Ok((a, my - a * mx))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(EvalError::TooFew { needed: 2, got: x.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ConstantInput);
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Percent improvement of `g` over the reference `m` for an error metric.
pub fn relative_improvement(m: f64, g: f64) -> Result<f64, EvalError> {
    if m == 0.0 {
        return Err(EvalError::ZeroReference);
    }
    Ok((m - g) / m * 100.0)
}

/// `N / (K count(g))` for every record, so each group carries equal total weight.
pub fn inverse_frequency_weights<G: Ord>(groups: &[G]) -> Result<Vec<f64>, EvalError> {
    if groups.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut counts: BTreeMap<&G, usize> = BTreeMap::new();
    for g in groups {
        *counts.entry(g).or_default() += 1;
    }
    let n = groups.len() as f64;
    let k = counts.len() as f64;
    Ok(groups.iter().map(|g| n / (k * counts[g] as f64)).collect())
}

/// Maps each column to [0, 1] with the best model at 1 and the worst at 0.
/// `table[model][dim]`. A column where every model is equal maps to 1.
pub fn radar_normalize(table: &[Vec<f64>], directions: &[Direction]) -> Result<Vec<Vec<f64>>, EvalError> {
    if table.len() < 2 {
        return Err(EvalError::SingleModel);
    }
    for row in table {
        if row.len() != directions.len() {
            return Err(EvalError::LengthMismatch(row.len(), directions.len()));
        }
    }
    let mut out = vec![vec![0.0; directions.len()]; table.len()];
    for (j, dir) in directions.iter().enumerate() {
        let col: Vec<f64> = table
            .iter()
            .map(|r| match dir {
                Direction::Higher => r[j],
                Direction::Lower => -r[j],
            })
            .collect();
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (i, v) in col.iter().enumerate() {
            out[i][j] = if hi > lo { (v - lo) / (hi - lo) } else { 1.0 };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_examples() {
        let m = classification_metrics(&[1, 0, 1, 0], &[1, 0, 1, 0]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.accuracy), (1.0, 1.0, 1.0, 1.0));
        let m = classification_metrics(&[1, 1, 1, 1], &[1, 1, 0, 0]).unwrap();
        assert_eq!((m.precision, m.recall), (0.5, 1.0));
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
        let m = classification_metrics(&[0, 0, 0], &[1, 0, 1]).unwrap();
        assert_eq!((m.precision, m.f1), (0.0, 0.0));
        assert!(matches!(
            classification_metrics(&[0], &[0, 1]),
            Err(EvalError::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn multiclass_is_macro() {
        // class 0: p 1, r 1/2; class 1: p 1/2, r 1; class 2: p 1, r 1.
        let m = classification_metrics(&[0, 1, 1, 2], &[0, 0, 1, 2]).unwrap();
        let f = (2.0 / 3.0 + 2.0 / 3.0 + 1.0) / 3.0;
        assert!((m.f1 - f).abs() < 1e-12);
        assert_eq!(m.accuracy, 0.75);
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[2.0, 3.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(mae(&[], &[]), Err(EvalError::Empty));
    }

    #[test]
    fn radar_examples() {
        let r = radar_normalize(&[vec![1.0, 1.0], vec![3.0, 3.0]], &[Direction::Lower, Direction::Higher]).unwrap();
        assert_eq!(r, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(radar_normalize(&[vec![1.0]], &[Direction::Higher]), Err(EvalError::SingleModel));
        let flat = radar_normalize(&[vec![2.0], vec![2.0]], &[Direction::Higher]).unwrap();
        assert_eq!(flat, vec![vec![1.0], vec![1.0]]);
    }

    #[test]
    fn sample_nsd() {
        let v = nsd_with(&[1.0, 3.0], StdKind::Sample).unwrap();
        assert!((v - 2f64.sqrt() / 2.0).abs() < 1e-12);
    }
}
