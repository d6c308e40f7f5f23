use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

/// Softmax over the unmasked positions; `masked[i] == true` hides position `i`.
pub fn softmax(scores: &[f64], masked: Option<&[bool]>) -> Result<Vec<f64>> {
    let hidden = |i: usize| masked.is_some_and(|m| m[i]);
    if (0..scores.len()).all(hidden) {
        return Err(Error::EmptyAttentionSupport);
    }
    let max = (0..scores.len())
        .filter(|&i| !hidden(i))
        .map(|i| scores[i])
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Ok(vec![f64::NAN; scores.len()]);
    }
    let mut out: Vec<f64> = (0..scores.len())
        .map(|i| {
            if hidden(i) {
                0.0
            } else {
                (scores[i] - max).exp()
            }
        })
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    Ok(out)
}

/// Gradient of the scores given the softmax output and the gradient of that output.
pub fn softmax_backward(probs: &[f64], dprobs: &[f64]) -> Vec<f64> {
    let inner: f64 = probs.iter().zip(dprobs).map(|(p, g)| p * g).sum();
    probs
        .iter()
        .zip(dprobs)
        .map(|(p, g)| p * (g - inner))
        .collect()
}

/// Values kept from a layer-norm forward pass.
#[derive(Clone, Debug)]
pub struct LayerNormCache {
    pub normalized: Vec<f64>,
    pub inv_std: f64,
}

pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64], eps: f64) -> Vec<f64> {
    layer_norm_cached(x, gain, bias, eps).0
}

pub fn layer_norm_cached(
    x: &[f64],
    gain: &[f64],
    bias: &[f64],
    eps: f64,
) -> (Vec<f64>, LayerNormCache) {
    debug_assert_eq!(x.len(), gain.len());
    debug_assert_eq!(x.len(), bias.len());
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + eps).sqrt();
    let normalized: Vec<f64> = x.iter().map(|v| (v - mean) * inv_std).collect();
    let out = normalized
        .iter()
        .zip(gain.iter().zip(bias))
        .map(|(xh, (g, b))| g * xh + b)
        .collect();
    (out, LayerNormCache { normalized, inv_std })
}

/// Returns the input gradient and accumulates gain/bias gradients.
pub fn layer_norm_backward(
    cache: &LayerNormCache,
    gain: &[f64],
    dy: &[f64],
    dgain: &mut [f64],
    dbias: &mut [f64],
) -> Vec<f64> {
    let n = dy.len() as f64;
    let mut dxhat = Vec::with_capacity(dy.len());
    for i in 0..dy.len() {
        dgain[i] += dy[i] * cache.normalized[i];
        dbias[i] += dy[i];
        dxhat.push(dy[i] * gain[i]);
    }
    let mean_d = dxhat.iter().sum::<f64>() / n;
    let mean_dx = dxhat
        .iter()
        .zip(&cache.normalized)
        .map(|(d, x)| d * x)
        .sum::<f64>()
        / n;
    dxhat
        .iter()
        .zip(&cache.normalized)
        .map(|(d, x)| cache.inv_std * (d - mean_d - x * mean_dx))
        .collect()
}
