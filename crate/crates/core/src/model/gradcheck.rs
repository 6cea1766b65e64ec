use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{forward_with, grad_with, loss_with, LossSpec};
use super::{ModelError, ModelParams, Objective, PatchSeq, TensorClass};

/// Denominator floor for the relative error, so that coordinates whose true
/// gradient is essentially zero are judged on absolute error instead.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub probes: usize,
    pub max_rel_error: f64,
    pub worst: Option<ProbeResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub per_class: BTreeMap<TensorClass, ClassReport>,
    /// Probes discarded because the perturbation crossed a kink of the
    /// absolute value in the Laplace loss.
    pub resampled: usize,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.per_class
            .values()
            .map(|c| c.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn min_probes(&self) -> usize {
        self.per_class.values().map(|c| c.probes).min().unwrap_or(0)
    }
}

pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Signs of the next-patch residuals, used to spot kink crossings.
fn residual_signs(params: &ModelParams, x: &PatchSeq, spec: &LossSpec) -> Result<Vec<bool>, ModelError> {
    let mask = match spec {
        LossSpec::Pretrain { mask } => mask.as_slice(),
        LossSpec::Task(_) => &[],
    };
    let out = forward_with(params, x, mask, 0)?;
    let xp = &x.patches;
    Ok((0..xp.rows.saturating_sub(1))
        .flat_map(|t| (0..xp.cols).map(move |c| (t, c)))
        .map(|(t, c)| xp.at(t + 1, c) >= out.predictions.at(t, c))
        .collect())
}

/// Compares analytic gradients with central differences on
/// `probes_per_class` random coordinates of every tensor class. Frozen
/// tensors are skipped.
pub fn grad_check(
    params: &ModelParams,
    x: &PatchSeq,
    spec: &LossSpec,
    probes_per_class: usize,
    eps: f64,
    seed: u64,
) -> Result<GradCheckReport, ModelError> {
    let (_, g) = grad_with(params, x, spec)?;
    let laplace = matches!(spec, LossSpec::Pretrain { .. })
        && params.config.objective == Objective::NextPatchLaplace;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        per_class: BTreeMap::new(),
        resampled: 0,
    };
    let names: Vec<(String, usize)> = params
        .weights
        .tensors()
        .into_iter()
        .filter(|(n, _)| !params.is_frozen(n))
        .map(|(n, t)| (n, t.len()))
        .collect();

    for class in TensorClass::ALL {
        let members: Vec<&(String, usize)> =
            names.iter().filter(|(n, _)| TensorClass::of(n) == class).collect();
        let total: usize = members.iter().map(|(_, l)| l).sum();
        if total == 0 {
            continue;
        }
        let target = probes_per_class.min(total);
        let mut seen = BTreeSet::new();
        let mut entry = ClassReport {
            probes: 0,
            max_rel_error: 0.0,
            worst: None,
        };
        let mut attempts = 0;
        while entry.probes < target && attempts < 50 * target {
            attempts += 1;
            let mut flat = rng.random_range(0..total);
            let (name, index) = members
                .iter()
                .find_map(|(n, l)| {
                    if flat < *l {
                        Some((n.clone(), flat))
                    } else {
                        flat -= l;
                        None
                    }
                })
                .expect("flat index within class total");
            if !seen.insert((name.clone(), index)) {
                continue;
            }
            let mut p = params.clone();
            let orig = p.weights.tensor(&name).expect("named tensor").data[index];
            p.weights.tensor_mut(&name).unwrap().data[index] = orig + eps;
            let lp = loss_with(&p, x, spec, 0)?;
            let sp = if laplace { Some(residual_signs(&p, x, spec)?) } else { None };
            p.weights.tensor_mut(&name).unwrap().data[index] = orig - eps;
            let lm = loss_with(&p, x, spec, 0)?;
            if laplace && sp != Some(residual_signs(&p, x, spec)?) {
                report.resampled += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * eps);
            let analytic = g.tensor(&name).unwrap().data[index];
            let err = rel_error(analytic, numeric);
            entry.probes += 1;
            if err >= entry.max_rel_error {
                entry.max_rel_error = err;
                entry.worst = Some(ProbeResult {
                    tensor: name,
                    index,
                    analytic,
                    numeric,
                    rel_error: err,
                });
            }
        }
        report.per_class.insert(class, entry);
    }
    Ok(report)
}
