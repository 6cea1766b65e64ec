use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::BaselineError;

pub const DEFAULT_LAMBDA: f64 = 1.0;

/// Reciprocal condition number below which the normal equations count as
/// singular.
const RCOND_MIN: f64 = 1e-12;

/// Ridge regression fitted on standardized features. `weights` live in the
/// standardized space; [`RidgeModel::coefficients`] maps them back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl RidgeModel {
    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn predict_one(&self, row: &[f64]) -> Result<f64, BaselineError> {
        if row.len() != self.weights.len() {
            return Err(BaselineError::ShapeMismatch(format!(
                "row has {} features, model expects {}",
                row.len(),
                self.weights.len()
            )));
        }
        Ok(self.intercept
            + row
                .iter()
                .zip(&self.weights)
                .zip(self.means.iter().zip(&self.scales))
                .map(|((x, w), (m, s))| w * (x - m) / s)
                .sum::<f64>())
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>, BaselineError> {
        rows.iter().map(|r| self.predict_one(r)).collect()
    }

    /// Weights and intercept on the original feature scale.
    pub fn coefficients(&self) -> (Vec<f64>, f64) {
        let w: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.scales)
            .map(|(w, s)| w / s)
            .collect();
        let b = self.intercept - w.iter().zip(&self.means).map(|(w, m)| w * m).sum::<f64>();
        (w, b)
    }
}

/// Solves `(ZᵀZ + λI) w = Zᵀ(y - ȳ)` where `Z` is `X` standardized column-wise
/// on the training rows. Constant columns get unit scale and so contribute
/// nothing.
pub fn ridge_fit(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<RidgeModel, BaselineError> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(BaselineError::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
    }
    if x.len() != y.len() {
        return Err(BaselineError::ShapeMismatch(format!(
            "{} rows but {} targets",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(BaselineError::ShapeMismatch("no training rows".into()));
    }
    let p = x[0].len();
    if let Some((i, r)) = x.iter().enumerate().find(|(_, r)| r.len() != p) {
        return Err(BaselineError::ShapeMismatch(format!(
            "row {i} has {} features, row 0 has {p}",
            r.len()
        )));
    }
    let n = x.len();
    let nf = n as f64;
    let means: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    let scales: Vec<f64> = (0..p)
        .map(|j| {
            let var = x.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / nf;
            let s = var.sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let z = DMatrix::from_fn(n, p, |i, j| (x[i][j] - means[j]) / scales[j]);
    let y_mean = y.iter().sum::<f64>() / nf;
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));

    let mut a = z.transpose() * &z;
    for j in 0..p {
        a[(j, j)] += lambda;
    }
    let b = z.transpose() * yc;
    let weights = if p == 0 {
        Vec::new()
    } else {
        let svd = a.svd(true, true);
        let sv = &svd.singular_values;
        let max = sv.max();
        if !(max > 0.0) || sv.min() <= RCOND_MIN * max {
            return Err(BaselineError::SingularSystem { lambda });
        }
        let w = svd
            .solve(&b, 0.0)
            .map_err(|_| BaselineError::SingularSystem { lambda })?;
        w.iter().copied().collect()
    };
    Ok(RidgeModel {
        weights,
        intercept: y_mean,
        lambda,
        means,
        scales,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planted() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64;
                vec![t.sin() * 3.0 + 1.0, (0.7 * t).cos() - 2.0 + 0.1 * t]
            })
            .collect();
        let y = x.iter().map(|r| 2.0 * r[0] - 3.0 * r[1]).collect();
        (x, y)
    }

    #[test]
    fn recovers_planted_weights() {
        let (x, y) = planted();
        let m = ridge_fit(&x, &y, 1e-12).unwrap();
        let (w, b) = m.coefficients();
        assert!((w[0] - 2.0).abs() < 1e-6 && (w[1] + 3.0).abs() < 1e-6, "{w:?}");
        assert!(b.abs() < 1e-6);
    }

    #[test]
    fn huge_lambda_shrinks_to_mean() {
        let (x, y) = planted();
        let m = ridge_fit(&x, &y, 1e12).unwrap();
        let y_mean = y.iter().sum::<f64>() / y.len() as f64;
        for p in m.predict(&x).unwrap() {
            assert!((p - y_mean).abs() < 1e-6);
        }
    }

    #[test]
    fn duplicated_column_needs_penalty() {
        let (x, y) = planted();
        let dup: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0], r[0], r[1]]).collect();
        assert_eq!(
            ridge_fit(&dup, &y, 0.0),
            Err(BaselineError::SingularSystem { lambda: 0.0 })
        );
        let m = ridge_fit(&dup, &y, 1.0).unwrap();
        assert!(m.weights.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(
            ridge_fit(&[vec![1.0]], &[1.0, 2.0], 1.0),
            Err(BaselineError::ShapeMismatch(_))
        ));
        let m = ridge_fit(&[vec![1.0], vec![2.0]], &[1.0, 2.0], 1.0).unwrap();
        assert!(m.predict_one(&[1.0, 2.0]).is_err());
    }
}
