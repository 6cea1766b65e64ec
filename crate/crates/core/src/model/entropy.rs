use super::{AttnMaps, ModelError};

const ROW_TOL: f64 = 1e-6;

/// Shannon entropy of one probability row, with `0 · ln 0 = 0`.
pub fn row_entropy(row: &[f64]) -> f64 {
    -row.iter()
        .filter(|&&a| a > 0.0)
        .map(|&a| a * a.ln())
        .sum::<f64>()
}

/// Mean row entropy per `[layer][head]`, averaged over query rows and over
/// the batch of maps. Zero entries (masked keys in causal mode) contribute
/// nothing, so each row is measured over its valid keys.
pub fn attention_entropy(batch: &[AttnMaps]) -> Result<Vec<Vec<f64>>, ModelError> {
    let first = batch.first().ok_or(ModelError::EmptyData)?;
    let mut sums: Vec<Vec<f64>> = first.maps.iter().map(|l| vec![0.0; l.len()]).collect();
    let mut counts: Vec<Vec<usize>> = first.maps.iter().map(|l| vec![0; l.len()]).collect();
    for maps in batch {
        if maps.maps.len() != sums.len() {
            return Err(ModelError::ShapeMismatch("attention maps differ in layer count".into()));
        }
        for (layer, heads) in maps.maps.iter().enumerate() {
            if heads.len() != sums[layer].len() {
                return Err(ModelError::ShapeMismatch("attention maps differ in head count".into()));
            }
            for (head, a) in heads.iter().enumerate() {
                for row in 0..a.rows {
                    let r = a.row(row);
                    let sum: f64 = r.iter().sum();
                    if (sum - 1.0).abs() > ROW_TOL || r.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                        return Err(ModelError::NonStochasticRow { layer, head, row, sum });
                    }
                    sums[layer][head] += row_entropy(r);
                    counts[layer][head] += 1;
                }
            }
        }
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| s.into_iter().zip(c).map(|(s, c)| s / c.max(1) as f64).collect())
        .collect())
}
