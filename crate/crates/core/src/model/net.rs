use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ops::{gelu, gelu_grad, rmsnorm, rmsnorm_backward, rope_in_place, sigmoid, softplus};
use super::{ModelError, ModelParams, Objective, PatchSeq, Tensor, Weights};
use crate::model::params::AttentionMode;

/// Attention probabilities, indexed `[layer][head]`, each `T × T` with rows
/// as queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttnMaps {
    pub maps: Vec<Vec<Tensor>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Row t is the reconstruction head applied at position t: the next
    /// patch under next-patch objectives, patch t itself under masking.
    pub predictions: Tensor,
    /// Laplace scales, strictly positive.
    pub scales: Tensor,
    /// Mean over positions of the final normalized hidden states.
    pub embedding: Vec<f64>,
    pub task_output: Vec<f64>,
    pub attn: AttnMaps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskTarget {
    Regression(Vec<f64>),
    Class(usize),
}

/// What the scalar loss measures.
#[derive(Debug, Clone, PartialEq)]
pub enum LossSpec {
    /// The configured self-supervised objective. Masked objectives need the
    /// masked patch positions.
    Pretrain { mask: Vec<usize> },
    Task(TaskTarget),
}

/// `ceil(fraction · T)` distinct positions drawn by `seed`, sorted.
pub fn sample_mask(n_patches: usize, fraction: f64, seed: u64) -> Result<Vec<usize>, ModelError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(ModelError::MaskFractionOutOfRange(fraction));
    }
    let k = ((fraction * n_patches as f64).ceil() as usize).min(n_patches);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, n_patches, k).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

struct LayerCache {
    h_in: Tensor,
    a1: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    attn: Vec<Tensor>,
    ctx: Tensor,
    h_mid: Tensor,
    a2: Tensor,
    u: Tensor,
    gl: Tensor,
}

struct Cache {
    masked: Vec<bool>,
    layers: Vec<LayerCache>,
    h_last: Tensor,
    hf: Tensor,
    scale_z: Tensor,
}

fn norm_rows(x: &Tensor, gain: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(x.rows, x.cols);
    for r in 0..x.rows {
        out.row_mut(r).copy_from_slice(&rmsnorm(x.row(r), &gain.data));
    }
    out
}

fn norm_rows_backward(x: &Tensor, gain: &Tensor, dy: &Tensor, dgain: &mut Tensor) -> Tensor {
    let mut dx = Tensor::zeros(x.rows, x.cols);
    for r in 0..x.rows {
        let g = rmsnorm_backward(x.row(r), &gain.data, dy.row(r), &mut dgain.data);
        dx.row_mut(r).copy_from_slice(&g);
    }
    dx
}

fn rope_rows(m: &mut Tensor, n_heads: usize, offset: f64, sign: f64) {
    let dh = m.cols / n_heads;
    for t in 0..m.rows {
        let row = m.row_mut(t);
        for h in 0..n_heads {
            rope_in_place(&mut row[h * dh..(h + 1) * dh], sign * (t as f64 + offset));
        }
    }
}

fn run(
    params: &ModelParams,
    x: &PatchSeq,
    mask: &[usize],
    offset: f64,
) -> Result<(ForwardOutput, Cache), ModelError> {
    let cfg = &params.config;
    let w = &params.weights;
    let xp = &x.patches;
    if xp.cols != cfg.patch_len || xp.rows == 0 {
        return Err(ModelError::ShapeMismatch(format!(
            "input is {}×{}, model expects T×{}",
            xp.rows, xp.cols, cfg.patch_len
        )));
    }
    let t_len = xp.rows;
    let (nh, dh) = (cfg.n_heads, cfg.head_dim());
    let mut masked = vec![false; t_len];
    for &m in mask {
        if m >= t_len {
            return Err(ModelError::ShapeMismatch(format!(
                "mask position {m} beyond {t_len} patches"
            )));
        }
        masked[m] = true;
    }

    let mut h = xp.matmul(&w.embed_w);
    h.add_row(&w.embed_b);
    for (t, &m) in masked.iter().enumerate() {
        if m {
            h.row_mut(t).copy_from_slice(&w.mask_emb.data);
        }
    }

    let inv_sqrt = 1.0 / (dh as f64).sqrt();
    let causal = cfg.mode == AttentionMode::Causal;
    let mut caches = Vec::with_capacity(w.layers.len());
    let mut maps = Vec::with_capacity(w.layers.len());
    for lw in &w.layers {
        let h_in = h.clone();
        let a1 = norm_rows(&h_in, &lw.attn_gain);
        let mut q = a1.matmul(&lw.wq);
        let mut k = a1.matmul(&lw.wk);
        let v = a1.matmul(&lw.wv);
        rope_rows(&mut q, nh, offset, 1.0);
        rope_rows(&mut k, nh, offset, 1.0);

        let mut ctx = Tensor::zeros(t_len, cfg.d_model);
        let mut attn = Vec::with_capacity(nh);
        for hd in 0..nh {
            let cols = hd * dh..(hd + 1) * dh;
            let mut a = Tensor::zeros(t_len, t_len);
            for i in 0..t_len {
                let last = if causal { i } else { t_len - 1 };
                let qi = &q.row(i)[cols.clone()];
                let scores: Vec<f64> = (0..=last)
                    .map(|j| {
                        qi.iter()
                            .zip(&k.row(j)[cols.clone()])
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                            * inv_sqrt
                    })
                    .collect();
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                for (j, e) in exps.iter().enumerate() {
                    *a.at_mut(i, j) = e / z;
                }
                let crow = &mut ctx.row_mut(i)[cols.clone()];
                for j in 0..=last {
                    let aij = a.at(i, j);
                    for (c, vv) in crow.iter_mut().zip(&v.row(j)[cols.clone()]) {
                        *c += aij * vv;
                    }
                }
            }
            attn.push(a);
        }
        let mut h_mid = ctx.matmul(&lw.wo);
        h_mid.add_assign(&h_in);
        let a2 = norm_rows(&h_mid, &lw.mlp_gain);
        let mut u = a2.matmul(&lw.w1);
        u.add_row(&lw.b1);
        let gl = Tensor::from_vec(u.rows, u.cols, u.data.iter().map(|&v| gelu(v)).collect());
        let mut h_out = gl.matmul(&lw.w2);
        h_out.add_row(&lw.b2);
        h_out.add_assign(&h_mid);
        h = h_out;
        maps.push(attn.clone());
        caches.push(LayerCache {
            h_in,
            a1,
            q,
            k,
            v,
            attn,
            ctx,
            h_mid,
            a2,
            u,
            gl,
        });
    }

    let hf = norm_rows(&h, &w.final_gain);
    let mut predictions = hf.matmul(&w.recon_w);
    predictions.add_row(&w.recon_b);
    let mut scale_z = hf.matmul(&w.scale_w);
    scale_z.add_row(&w.scale_b);
    let scales = Tensor::from_vec(
        scale_z.rows,
        scale_z.cols,
        scale_z
            .data
            .iter()
            .map(|&z| softplus(z) + cfg.laplace_floor)
            .collect(),
    );
    let mut pooled = hf.sum_rows();
    pooled.scale(1.0 / t_len as f64);
    let mut task = pooled.matmul(&w.task_w);
    task.add_row(&w.task_b);

    Ok((
        ForwardOutput {
            predictions,
            scales,
            embedding: pooled.data,
            task_output: task.data,
            attn: AttnMaps { maps },
        },
        Cache {
            masked,
            layers: caches,
            h_last: h,
            hf,
            scale_z,
        },
    ))
}

pub fn forward(params: &ModelParams, x: &PatchSeq) -> Result<ForwardOutput, ModelError> {
    forward_with(params, x, &[], 0)
}

/// Forward pass with masked positions replaced by the mask embedding and
/// all RoPE positions shifted by `position_offset`.
pub fn forward_with(
    params: &ModelParams,
    x: &PatchSeq,
    mask: &[usize],
    position_offset: i64,
) -> Result<ForwardOutput, ModelError> {
    run(params, x, mask, position_offset as f64).map(|(o, _)| o)
}

/// Output-side gradients of a scalar loss.
struct OutputGrads {
    d_pred: Option<Tensor>,
    d_scale_z: Option<Tensor>,
    d_task: Option<Vec<f64>>,
}

fn loss_terms(
    params: &ModelParams,
    x: &PatchSeq,
    out: &ForwardOutput,
    cache: &Cache,
    spec: &LossSpec,
) -> Result<(f64, OutputGrads), ModelError> {
    let cfg = &params.config;
    let xp = &x.patches;
    let (t_len, p) = (xp.rows, xp.cols);
    let none = OutputGrads {
        d_pred: None,
        d_scale_z: None,
        d_task: None,
    };
    match spec {
        LossSpec::Pretrain { mask } => match cfg.objective {
            Objective::NextPatchMse | Objective::NextPatchLaplace => {
                if t_len < 2 {
                    return Err(ModelError::TooFewPatches { needed: 2, got: t_len });
                }
                let n = ((t_len - 1) * p) as f64;
                let mut d_pred = Tensor::zeros(t_len, p);
                let mut loss = 0.0;
                if cfg.objective == Objective::NextPatchMse {
                    for t in 0..t_len - 1 {
                        for c in 0..p {
                            let r = out.predictions.at(t, c) - xp.at(t + 1, c);
                            loss += r * r;
                            *d_pred.at_mut(t, c) = 2.0 * r / n;
                        }
                    }
                    Ok((loss / n, OutputGrads { d_pred: Some(d_pred), ..none }))
                } else {
                    let mut d_z = Tensor::zeros(t_len, p);
                    for t in 0..t_len - 1 {
                        for c in 0..p {
                            let r = xp.at(t + 1, c) - out.predictions.at(t, c);
                            let b = out.scales.at(t, c);
                            loss += r.abs() / b + (2.0 * b).ln();
                            *d_pred.at_mut(t, c) = -r.signum() / b / n;
                            let db = (-r.abs() / (b * b) + 1.0 / b) / n;
                            *d_z.at_mut(t, c) = db * sigmoid(cache.scale_z.at(t, c));
                        }
                    }
                    Ok((
                        loss / n,
                        OutputGrads {
                            d_pred: Some(d_pred),
                            d_scale_z: Some(d_z),
                            d_task: None,
                        },
                    ))
                }
            }
            Objective::MaskedMse => {
                if mask.is_empty() {
                    return Err(ModelError::InvalidObjective(
                        "masked_mse needs at least one masked patch".into(),
                    ));
                }
                let n = (mask.len() * p) as f64;
                let mut d_pred = Tensor::zeros(t_len, p);
                let mut loss = 0.0;
                for t in (0..t_len).filter(|&t| cache.masked[t]) {
                    for c in 0..p {
                        let r = out.predictions.at(t, c) - xp.at(t, c);
                        loss += r * r;
                        *d_pred.at_mut(t, c) = 2.0 * r / n;
                    }
                }
                Ok((loss / n, OutputGrads { d_pred: Some(d_pred), ..none }))
            }
        },
        LossSpec::Task(TaskTarget::Regression(y)) => {
            if y.len() != out.task_output.len() {
                return Err(ModelError::ShapeMismatch(format!(
                    "target has {} values, task head emits {}",
                    y.len(),
                    out.task_output.len()
                )));
            }
            let k = y.len() as f64;
            let mut loss = 0.0;
            let mut d = vec![0.0; y.len()];
            for (i, (o, t)) in out.task_output.iter().zip(y).enumerate() {
                loss += (o - t).powi(2) / k;
                d[i] = 2.0 * (o - t) / k;
            }
            Ok((loss, OutputGrads { d_task: Some(d), ..none }))
        }
        LossSpec::Task(TaskTarget::Class(c)) => {
            let o = &out.task_output;
            if *c >= o.len() {
                return Err(ModelError::ShapeMismatch(format!(
                    "class {c} but task head has {} outputs",
                    o.len()
                )));
            }
            let max = o.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = o.iter().map(|v| (v - max).exp()).sum();
            let loss = -(o[*c] - max - z.ln());
            let d = o
                .iter()
                .enumerate()
                .map(|(i, v)| (v - max).exp() / z - if i == *c { 1.0 } else { 0.0 })
                .collect();
            Ok((loss, OutputGrads { d_task: Some(d), ..none }))
        }
    }
}

fn backward(
    params: &ModelParams,
    x: &PatchSeq,
    cache: &Cache,
    og: OutputGrads,
    offset: f64,
) -> Weights {
    let cfg = &params.config;
    let w = &params.weights;
    let mut g = Weights::zeros_like(w);
    let t_len = x.patches.rows;
    let (nh, hdim) = (cfg.n_heads, cfg.head_dim());
    let inv_sqrt = 1.0 / (hdim as f64).sqrt();

    let mut dhf = Tensor::zeros(t_len, cfg.d_model);
    if let Some(dp) = &og.d_pred {
        g.recon_w = cache.hf.t_matmul(dp);
        g.recon_b = dp.sum_rows();
        dhf.add_assign(&dp.matmul_t(&w.recon_w));
    }
    if let Some(dz) = &og.d_scale_z {
        g.scale_w = cache.hf.t_matmul(dz);
        g.scale_b = dz.sum_rows();
        dhf.add_assign(&dz.matmul_t(&w.scale_w));
    }
    if let Some(dt) = &og.d_task {
        let mut pooled = cache.hf.sum_rows();
        pooled.scale(1.0 / t_len as f64);
        let dt = Tensor::from_vec(1, dt.len(), dt.clone());
        g.task_w = pooled.t_matmul(&dt);
        g.task_b = dt.clone();
        let mut dpooled = dt.matmul_t(&w.task_w);
        dpooled.scale(1.0 / t_len as f64);
        for t in 0..t_len {
            for (a, b) in dhf.row_mut(t).iter_mut().zip(&dpooled.data) {
                *a += b;
            }
        }
    }
    let mut dh = norm_rows_backward(&cache.h_last, &w.final_gain, &dhf, &mut g.final_gain);

    for (li, (lw, lc)) in w.layers.iter().zip(&cache.layers).enumerate().rev() {
        let gl = &mut g.layers[li];
        // MLP branch.
        gl.w2 = lc.gl.t_matmul(&dh);
        gl.b2 = dh.sum_rows();
        let dgl = dh.matmul_t(&lw.w2);
        let du = Tensor::from_vec(
            dgl.rows,
            dgl.cols,
            dgl.data
                .iter()
                .zip(&lc.u.data)
                .map(|(d, u)| d * gelu_grad(*u))
                .collect(),
        );
        gl.w1 = lc.a2.t_matmul(&du);
        gl.b1 = du.sum_rows();
        let da2 = du.matmul_t(&lw.w1);
        let mut dh_mid = norm_rows_backward(&lc.h_mid, &lw.mlp_gain, &da2, &mut gl.mlp_gain);
        dh_mid.add_assign(&dh);

        // Attention branch.
        gl.wo = lc.ctx.t_matmul(&dh_mid);
        let dctx = dh_mid.matmul_t(&lw.wo);
        let mut dq = Tensor::zeros(t_len, cfg.d_model);
        let mut dk = Tensor::zeros(t_len, cfg.d_model);
        let mut dv = Tensor::zeros(t_len, cfg.d_model);
        for hd in 0..nh {
            let cols = hd * hdim..(hd + 1) * hdim;
            let a = &lc.attn[hd];
            for i in 0..t_len {
                let dci = &dctx.row(i)[cols.clone()];
                let da: Vec<f64> = (0..t_len)
                    .map(|j| {
                        dci.iter()
                            .zip(&lc.v.row(j)[cols.clone()])
                            .map(|(x, y)| x * y)
                            .sum()
                    })
                    .collect();
                let dot: f64 = (0..t_len).map(|j| a.at(i, j) * da[j]).sum();
                for j in 0..t_len {
                    let aij = a.at(i, j);
                    if aij == 0.0 {
                        continue;
                    }
                    for (dvv, c) in dv.row_mut(j)[cols.clone()].iter_mut().zip(dci) {
                        *dvv += aij * c;
                    }
                    let ds = aij * (da[j] - dot) * inv_sqrt;
                    let kj: Vec<f64> = lc.k.row(j)[cols.clone()].to_vec();
                    for (dqq, kk) in dq.row_mut(i)[cols.clone()].iter_mut().zip(&kj) {
                        *dqq += ds * kk;
                    }
                    let qi: Vec<f64> = lc.q.row(i)[cols.clone()].to_vec();
                    for (dkk, qq) in dk.row_mut(j)[cols.clone()].iter_mut().zip(&qi) {
                        *dkk += ds * qq;
                    }
                }
            }
        }
        // The rotation is orthogonal, so its adjoint is the inverse rotation.
        rope_rows(&mut dq, nh, offset, -1.0);
        rope_rows(&mut dk, nh, offset, -1.0);
        gl.wq = lc.a1.t_matmul(&dq);
        gl.wk = lc.a1.t_matmul(&dk);
        gl.wv = lc.a1.t_matmul(&dv);
        let mut da1 = dq.matmul_t(&lw.wq);
        da1.add_assign(&dk.matmul_t(&lw.wk));
        da1.add_assign(&dv.matmul_t(&lw.wv));
        let mut dh_in = norm_rows_backward(&lc.h_in, &lw.attn_gain, &da1, &mut gl.attn_gain);
        dh_in.add_assign(&dh_mid);
        dh = dh_in;
    }

    for t in 0..t_len {
        if cache.masked[t] {
            for (a, b) in g.mask_emb.data.iter_mut().zip(dh.row(t)) {
                *a += b;
            }
            dh.row_mut(t).iter_mut().for_each(|v| *v = 0.0);
        }
    }
    g.embed_w = x.patches.t_matmul(&dh);
    g.embed_b = dh.sum_rows();

    for (name, t) in g.tensors_mut() {
        if params.is_frozen(&name) {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    g
}

/// The default loss spec for `params`: its configured objective, with the
/// mask drawn from `config.seed` when masking.
pub fn default_spec(params: &ModelParams, x: &PatchSeq) -> Result<LossSpec, ModelError> {
    let cfg = &params.config;
    let mask = if cfg.objective == Objective::MaskedMse {
        sample_mask(x.n_patches(), cfg.mask_fraction, cfg.seed)?
    } else {
        Vec::new()
    };
    Ok(LossSpec::Pretrain { mask })
}

pub fn loss(params: &ModelParams, x: &PatchSeq) -> Result<f64, ModelError> {
    let spec = default_spec(params, x)?;
    loss_with(params, x, &spec, 0)
}

pub fn loss_with(
    params: &ModelParams,
    x: &PatchSeq,
    spec: &LossSpec,
    position_offset: i64,
) -> Result<f64, ModelError> {
    let (out, cache) = run(params, x, spec_mask(spec), position_offset as f64)?;
    loss_terms(params, x, &out, &cache, spec).map(|(l, _)| l)
}

/// Self-supervised loss with the model reading `input` but scored against
/// `target`, which must have the same shape.
pub fn loss_against(
    params: &ModelParams,
    input: &PatchSeq,
    target: &PatchSeq,
    spec: &LossSpec,
) -> Result<f64, ModelError> {
    if input.patches.rows != target.patches.rows || input.patches.cols != target.patches.cols {
        return Err(ModelError::ShapeMismatch("input and target shapes differ".into()));
    }
    let (out, cache) = run(params, input, spec_mask(spec), 0.0)?;
    loss_terms(params, target, &out, &cache, spec).map(|(l, _)| l)
}

/// Loss and analytic gradients of the configured objective.
pub fn grad(params: &ModelParams, x: &PatchSeq) -> Result<(f64, Weights), ModelError> {
    let spec = default_spec(params, x)?;
    grad_with(params, x, &spec)
}

pub fn grad_with(
    params: &ModelParams,
    x: &PatchSeq,
    spec: &LossSpec,
) -> Result<(f64, Weights), ModelError> {
    let (out, cache) = run(params, x, spec_mask(spec), 0.0)?;
    let (l, og) = loss_terms(params, x, &out, &cache, spec)?;
    Ok((l, backward(params, x, &cache, og, 0.0)))
}

fn spec_mask(spec: &LossSpec) -> &[usize] {
    match spec {
        LossSpec::Pretrain { mask } => mask,
        LossSpec::Task(_) => &[],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ModelParams};

    fn toy(mode: AttentionMode, objective: Objective) -> ModelParams {
        ModelParams::init(ModelConfig {
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            mlp_hidden: 6,
            patch_len: 4,
            mode,
            objective,
            ..Default::default()
        })
        .unwrap()
    }

    fn seq(t: usize) -> PatchSeq {
        let x: Vec<f64> = (0..t * 4).map(|i| (i as f64 * 0.37).sin()).collect();
        crate::model::tokenize(&x, 4).unwrap()
    }

    #[test]
    fn causal_rows_are_stochastic_and_lower_triangular() {
        let p = toy(AttentionMode::Causal, Objective::NextPatchMse);
        let out = forward(&p, &seq(9)).unwrap();
        for a in &out.attn.maps[0] {
            for i in 0..9 {
                let s: f64 = a.row(i).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
                for j in i + 1..9 {
                    assert_eq!(a.at(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn mask_has_ceiling_size() {
        assert_eq!(sample_mask(10, 0.25, 1).unwrap().len(), 3);
        assert_eq!(sample_mask(10, 0.3, 1).unwrap().len(), 3);
        assert!(sample_mask(10, 0.0, 1).is_err());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let p = toy(AttentionMode::Causal, Objective::NextPatchMse);
        let x = crate::model::tokenize(&[0.0; 10], 5).unwrap();
        assert!(matches!(forward(&p, &x), Err(ModelError::ShapeMismatch(_))));
    }

    #[test]
    fn next_patch_needs_two_patches() {
        let p = toy(AttentionMode::Causal, Objective::NextPatchMse);
        assert!(matches!(loss(&p, &seq(1)), Err(ModelError::TooFewPatches { .. })));
    }
}
