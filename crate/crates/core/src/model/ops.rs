use serde::{Deserialize, Serialize};

use super::{ModelError, Tensor};

pub const RMS_EPS: f64 = 1e-6;
const ROPE_BASE: f64 = 10_000.0;

/// `T × P` patches of a single-channel segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSeq {
    pub patches: Tensor,
}

impl PatchSeq {
    pub fn n_patches(&self) -> usize {
        self.patches.rows
    }

    pub fn patch_len(&self) -> usize {
        self.patches.cols
    }
}

/// Splits `samples` into non-overlapping rows of `patch_len`.
pub fn tokenize(samples: &[f64], patch_len: usize) -> Result<PatchSeq, ModelError> {
    if patch_len == 0 || samples.is_empty() || samples.len() % patch_len != 0 {
        return Err(ModelError::LengthNotDivisible {
            len: samples.len(),
            patch_len,
        });
    }
    Ok(PatchSeq {
        patches: Tensor::from_vec(samples.len() / patch_len, patch_len, samples.to_vec()),
    })
}

/// Patch length for one-second patches.
pub fn patch_len_for(fs: f64) -> usize {
    fs.round().max(1.0) as usize
}

pub fn rmsnorm(x: &[f64], gain: &[f64]) -> Vec<f64> {
    let r = rms(x);
    x.iter().zip(gain).map(|(v, g)| v / r * g).collect()
}

pub(crate) fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64 + RMS_EPS).sqrt()
}

/// Backward of `y = x / rms(x) ⊙ g`; returns `dx` and accumulates `dg`.
pub(crate) fn rmsnorm_backward(x: &[f64], gain: &[f64], dy: &[f64], dgain: &mut [f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let r = rms(x);
    let mut gdy_dot_x = 0.0;
    for i in 0..x.len() {
        dgain[i] += dy[i] * x[i] / r;
        gdy_dot_x += gain[i] * dy[i] * x[i];
    }
    let r3 = r * r * r;
    (0..x.len())
        .map(|i| gain[i] * dy[i] / r - x[i] * gdy_dot_x / (n * r3))
        .collect()
}

fn rope_angle(position: f64, pair: usize, dim: usize) -> f64 {
    position * ROPE_BASE.powf(-2.0 * pair as f64 / dim as f64)
}

/// Rotates consecutive coordinate pairs `(2i, 2i+1)` by `position · θ_i`
/// with `θ_i = 10000^(-2i/d)`.
pub fn rope_rotate(v: &[f64], position: i64) -> Result<Vec<f64>, ModelError> {
    if v.len() % 2 != 0 {
        return Err(ModelError::OddDimension(v.len()));
    }
    let mut out = v.to_vec();
    rope_in_place(&mut out, position as f64);
    Ok(out)
}

pub(crate) fn rope_in_place(v: &mut [f64], position: f64) {
    let d = v.len();
    for i in 0..d / 2 {
        let (s, c) = rope_angle(position, i, d).sin_cos();
        let (a, b) = (v[2 * i], v[2 * i + 1]);
        v[2 * i] = a * c - b * s;
        v[2 * i + 1] = a * s + b * c;
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Tanh approximation of the Gaussian error linear unit.
pub fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + 0.044715 * u * u * u)).tanh())
}

pub(crate) fn gelu_grad(u: f64) -> f64 {
    let th = (GELU_C * (u + 0.044715 * u * u * u)).tanh();
    0.5 * (1.0 + th) + 0.5 * u * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * 0.044715 * u * u)
}

pub(crate) fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_shapes() {
        let x: Vec<f64> = (0..1200).map(|i| i as f64).collect();
        let p = tokenize(&x, 40).unwrap();
        assert_eq!((p.n_patches(), p.patch_len()), (30, 40));
        assert_eq!(p.patches.row(1)[0], 40.0);
        assert!(matches!(
            tokenize(&vec![0.0; 1210], 40),
            Err(ModelError::LengthNotDivisible { len: 1210, patch_len: 40 })
        ));
        assert_eq!(tokenize(&x, 1200).unwrap().n_patches(), 1);
    }

    #[test]
    fn rmsnorm_examples() {
        let x = [1.0, -1.0, 1.0, -1.0];
        let y = rmsnorm(&x, &[1.0; 4]);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-5);
        }
        let z = rmsnorm(&[0.0; 4], &[1.0; 4]);
        assert!(z.iter().all(|v| *v == 0.0));
        let w = rmsnorm(&[3.0, 0.5, -7.0], &[1.0; 3]);
        let r = (w.iter().map(|v| v * v).sum::<f64>() / 3.0).sqrt();
        assert!((r - 1.0).abs() < 1e-4);
    }

    #[test]
    fn rope_identity_at_zero_and_odd_rejected() {
        let v = [0.3, -1.2, 2.0, 0.5];
        assert_eq!(rope_rotate(&v, 0).unwrap(), v.to_vec());
        assert!(matches!(rope_rotate(&[1.0, 2.0, 3.0], 1), Err(ModelError::OddDimension(3))));
    }

    #[test]
    fn gelu_grad_matches_difference() {
        for u in [-3.0, -0.7, 0.0, 0.4, 2.5] {
            let fd = (gelu(u + 1e-6) - gelu(u - 1e-6)) / 2e-6;
            assert!((fd - gelu_grad(u)).abs() < 1e-8);
        }
    }
}
