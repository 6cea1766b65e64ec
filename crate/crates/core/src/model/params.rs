use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ModelError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    Causal,
    Bidirectional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    NextPatchMse,
    NextPatchLaplace,
    MaskedMse,
}

impl std::str::FromStr for Objective {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "next_patch_mse" => Ok(Objective::NextPatchMse),
            "next_patch_laplace" => Ok(Objective::NextPatchLaplace),
            "masked_mse" => Ok(Objective::MaskedMse),
            other => Err(ModelError::InvalidObjective(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub mlp_hidden: usize,
    pub patch_len: usize,
    pub mode: AttentionMode,
    pub objective: Objective,
    pub mask_fraction: f64,
    /// Width of the task head: class count, or 1 for regression.
    pub task_outputs: usize,
    /// Lower bound added to the softplus Laplace scale.
    pub laplace_floor: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 32,
            n_heads: 4,
            n_layers: 2,
            mlp_hidden: 64,
            patch_len: 40,
            mode: AttentionMode::Causal,
            objective: Objective::NextPatchMse,
            mask_fraction: 0.3,
            task_outputs: 1,
            laplace_floor: 1e-3,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.d_model == 0 || self.n_heads == 0 || self.mlp_hidden == 0 || self.patch_len == 0 {
            return bad("dimensions must be positive".into());
        }
        if self.task_outputs == 0 {
            return bad("task_outputs must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return bad(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.head_dim() % 2 != 0 {
            return Err(ModelError::OddDimension(self.head_dim()));
        }
        if self.objective == Objective::MaskedMse
            && !(self.mask_fraction > 0.0 && self.mask_fraction < 1.0)
        {
            return Err(ModelError::MaskFractionOutOfRange(self.mask_fraction));
        }
        if !(self.laplace_floor >= 0.0) {
            return bad(format!("laplace_floor must be >= 0, got {}", self.laplace_floor));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub attn_gain: Tensor,
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub mlp_gain: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// Every trainable tensor. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub embed_w: Tensor,
    pub embed_b: Tensor,
    pub mask_emb: Tensor,
    pub layers: Vec<LayerWeights>,
    pub final_gain: Tensor,
    pub recon_w: Tensor,
    pub recon_b: Tensor,
    pub scale_w: Tensor,
    pub scale_b: Tensor,
    pub task_w: Tensor,
    pub task_b: Tensor,
}

/// Grouping used when probing gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorClass {
    Embedding,
    Attention,
    Norm,
    Mlp,
    Head,
}

impl TensorClass {
    pub const ALL: [TensorClass; 5] = [
        TensorClass::Embedding,
        TensorClass::Attention,
        TensorClass::Norm,
        TensorClass::Mlp,
        TensorClass::Head,
    ];

    pub fn of(name: &str) -> TensorClass {
        let leaf = name.rsplit('.').next().unwrap_or(name);
        match leaf {
            "embed_w" | "embed_b" | "mask_emb" => TensorClass::Embedding,
            "wq" | "wk" | "wv" | "wo" => TensorClass::Attention,
            "attn_gain" | "mlp_gain" | "final_gain" => TensorClass::Norm,
            "w1" | "b1" | "w2" | "b2" => TensorClass::Mlp,
            _ => TensorClass::Head,
        }
    }

    /// Heads sit on top of the backbone and are the only tensors trained
    /// under head-only tuning.
    pub fn is_head(self) -> bool {
        self == TensorClass::Head
    }
}

impl Weights {
    pub fn init(cfg: &ModelConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut normal = |rows: usize, cols: usize, fan_in: usize| {
            let n = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt()).expect("positive std");
            Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| n.sample(&mut rng)).collect())
        };
        let (d, h, p) = (cfg.d_model, cfg.mlp_hidden, cfg.patch_len);
        let embed_w = normal(p, d, p);
        let mask_emb = normal(1, d, d);
        let layers = (0..cfg.n_layers)
            .map(|_| LayerWeights {
                attn_gain: Tensor::filled(1, d, 1.0),
                wq: normal(d, d, d),
                wk: normal(d, d, d),
                wv: normal(d, d, d),
                wo: normal(d, d, d),
                mlp_gain: Tensor::filled(1, d, 1.0),
                w1: normal(d, h, d),
                b1: Tensor::zeros(1, h),
                w2: normal(h, d, h),
                b2: Tensor::zeros(1, d),
            })
            .collect();
        let recon_w = normal(d, p, d);
        let scale_w = normal(d, p, d);
        let task_w = normal(d, cfg.task_outputs, d);
        Ok(Self {
            embed_w,
            embed_b: Tensor::zeros(1, d),
            mask_emb,
            layers,
            final_gain: Tensor::filled(1, d, 1.0),
            recon_w,
            recon_b: Tensor::zeros(1, p),
            scale_w,
            scale_b: Tensor::zeros(1, p),
            task_w,
            task_b: Tensor::zeros(1, cfg.task_outputs),
        })
    }

    pub fn zeros_like(other: &Weights) -> Self {
        let mut w = other.clone();
        for (_, t) in w.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        w
    }

    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("embed_w".into(), &self.embed_w),
            ("embed_b".into(), &self.embed_b),
            ("mask_emb".into(), &self.mask_emb),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            for (n, t) in [
                ("attn_gain", &l.attn_gain),
                ("wq", &l.wq),
                ("wk", &l.wk),
                ("wv", &l.wv),
                ("wo", &l.wo),
                ("mlp_gain", &l.mlp_gain),
                ("w1", &l.w1),
                ("b1", &l.b1),
                ("w2", &l.w2),
                ("b2", &l.b2),
            ] {
                out.push((format!("layers.{i}.{n}"), t));
            }
        }
        out.extend([
            ("final_gain".into(), &self.final_gain),
            ("recon_w".into(), &self.recon_w),
            ("recon_b".into(), &self.recon_b),
            ("scale_w".into(), &self.scale_w),
            ("scale_b".into(), &self.scale_b),
            ("task_w".into(), &self.task_w),
            ("task_b".into(), &self.task_b),
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = vec![
            ("embed_w".into(), &mut self.embed_w),
            ("embed_b".into(), &mut self.embed_b),
            ("mask_emb".into(), &mut self.mask_emb),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            for (n, t) in [
                ("attn_gain", &mut l.attn_gain),
                ("wq", &mut l.wq),
                ("wk", &mut l.wk),
                ("wv", &mut l.wv),
                ("wo", &mut l.wo),
                ("mlp_gain", &mut l.mlp_gain),
                ("w1", &mut l.w1),
                ("b1", &mut l.b1),
                ("w2", &mut l.w2),
                ("b2", &mut l.b2),
            ] {
                out.push((format!("layers.{i}.{n}"), t));
            }
        }
        out.extend([
            ("final_gain".into(), &mut self.final_gain),
            ("recon_w".into(), &mut self.recon_w),
            ("recon_b".into(), &mut self.recon_b),
            ("scale_w".into(), &mut self.scale_w),
            ("scale_b".into(), &mut self.scale_b),
            ("task_w".into(), &mut self.task_w),
            ("task_b".into(), &mut self.task_b),
        ]);
        out
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors().into_iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors_mut()
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    /// Hash over every non-head tensor.
    pub fn backbone_checksum(&self) -> u64 {
        self.tensors()
            .iter()
            .filter(|(n, _)| !TensorClass::of(n).is_head())
            .fold(0u64, |acc, (_, t)| acc.rotate_left(7) ^ t.checksum())
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezeMode {
    HeadOnly,
    Full,
}

impl std::str::FromStr for FreezeMode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "head_only" | "head" => Ok(FreezeMode::HeadOnly),
            "full" => Ok(FreezeMode::Full),
            other => Err(ModelError::InvalidConfig(format!("unknown freeze mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub weights: Weights,
    /// Names of tensors whose gradient is forced to zero.
    pub frozen: BTreeSet<String>,
}

impl ModelParams {
    pub fn init(config: ModelConfig) -> Result<Self, ModelError> {
        let weights = Weights::init(&config)?;
        Ok(Self {
            config,
            weights,
            frozen: BTreeSet::new(),
        })
    }

    pub fn set_freeze(&mut self, mode: FreezeMode) {
        self.frozen = match mode {
            FreezeMode::Full => BTreeSet::new(),
            FreezeMode::HeadOnly => self
                .weights
                .tensors()
                .into_iter()
                .filter(|(n, _)| !TensorClass::of(n).is_head())
                .map(|(n, _)| n)
                .collect(),
        };
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen.contains(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let p = ModelParams::init(ModelConfig::default()).unwrap();
        assert_eq!(p.weights.layers.len(), 2);
        assert_eq!(p.weights.tensors().len(), 3 + 2 * 10 + 7);
    }

    #[test]
    fn rejects_bad_configs() {
        let c = ModelConfig { n_heads: 5, ..Default::default() };
        assert!(matches!(c.validate(), Err(ModelError::InvalidConfig(_))));
        let c = ModelConfig { d_model: 12, n_heads: 4, ..Default::default() };
        assert!(matches!(c.validate(), Err(ModelError::OddDimension(3))));
        let c = ModelConfig {
            objective: Objective::MaskedMse,
            mask_fraction: 1.0,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(ModelError::MaskFractionOutOfRange(_))));
    }

    #[test]
    fn head_only_freezes_backbone() {
        let mut p = ModelParams::init(ModelConfig::default()).unwrap();
        p.set_freeze(FreezeMode::HeadOnly);
        assert!(p.is_frozen("layers.0.wq"));
        assert!(p.is_frozen("mask_emb"));
        assert!(!p.is_frozen("task_w"));
        p.set_freeze(FreezeMode::Full);
        assert!(p.frozen.is_empty());
    }
}
