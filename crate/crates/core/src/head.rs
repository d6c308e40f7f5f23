//! Baseline-queried attention over the re-encoded features, the risk output
//! and the training loss.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::FeatureMatrix;
use crate::numerics::tensor::{axpy, dot, matvec, matvec_t_acc, outer_acc};
use crate::numerics::{sigmoid, softmax, softmax_backward, Gradients, ParamId, ParamStore, Tensor};
use crate::Result;

pub const PROB_CLAMP: f64 = 1e-7;

/// How keys of the final attention are projected.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKeys {
    /// One key matrix shared by every position, the baseline row included.
    #[default]
    Shared,
    /// A separate key matrix per position.
    PerPosition,
}

#[derive(Clone, Debug)]
pub struct HeadLayout {
    pub hidden: usize,
    pub positions: usize,
    pub keys: HeadKeys,
    pub w_query: ParamId,
    pub w_key: ParamId,
    pub w_out: ParamId,
    pub b_out: ParamId,
}

impl HeadLayout {
    pub fn register(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        hidden: usize,
        positions: usize,
        keys: HeadKeys,
    ) -> Result<Self> {
        let d = hidden;
        let bound = 1.0 / (d as f64).sqrt();
        let mut uniform = |shape: &[usize]| {
            let values = (0..shape.iter().product::<usize>())
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            Tensor::from_vec(shape, values)
        };
        let key_shape: Vec<usize> = match keys {
            HeadKeys::Shared => vec![d, d],
            HeadKeys::PerPosition => vec![positions, d, d],
        };
        Ok(Self {
            hidden,
            positions,
            keys,
            w_query: store.insert("head.w_fin_base", uniform(&[d, d])?)?,
            w_key: store.insert("head.w_fin_key", uniform(&key_shape)?)?,
            w_out: store.insert("head.w_fin", uniform(&[d])?)?,
            b_out: store.insert("head.b_fin", Tensor::zeros(&[1]))?,
        })
    }

    pub fn params<'a>(&self, store: &'a ParamStore) -> HeadParams<'a> {
        HeadParams {
            hidden: self.hidden,
            keys: self.keys,
            w_query: store.value(self.w_query),
            w_key: store.value(self.w_key),
            w_out: store.value(self.w_out),
            b_out: store.value(self.b_out)[0],
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct HeadParams<'a> {
    pub hidden: usize,
    pub keys: HeadKeys,
    pub w_query: &'a [f64],
    pub w_key: &'a [f64],
    pub w_out: &'a [f64],
    pub b_out: f64,
}

impl HeadParams<'_> {
    fn key_matrix(&self, position: usize) -> &[f64] {
        let dd = self.hidden * self.hidden;
        match self.keys {
            HeadKeys::Shared => self.w_key,
            HeadKeys::PerPosition => &self.w_key[position * dd..(position + 1) * dd],
        }
    }
}

#[derive(Clone, Debug)]
pub struct FinalAttention {
    /// Health-status summary `s`.
    pub summary: Vec<f64>,
    /// One weight per row of `F*`, baseline last.
    pub alphas: Vec<f64>,
    pub zeta: Vec<f64>,
    query: Vec<f64>,
    keys: Vec<Vec<f64>>,
}

/// `q = W_base f*_base`, `k_n = W_key f*_n`, `α = softmax(tanh(q·k))`, `s = Σ α_n f*_n`.
pub fn final_attention(encoded: &FeatureMatrix, p: &HeadParams) -> FinalAttention {
    let d = p.hidden;
    let query = matvec(p.w_query, d, d, encoded.baseline());
    let keys: Vec<Vec<f64>> = encoded
        .rows
        .iter()
        .enumerate()
        .map(|(n, f)| matvec(p.key_matrix(n), d, d, f))
        .collect();
    let zeta: Vec<f64> = keys.iter().map(|k| dot(&query, k).tanh()).collect();
    let alphas = softmax(&zeta, None).expect("at least one row");
    let mut summary = vec![0.0; d];
    for (a, f) in alphas.iter().zip(&encoded.rows) {
        axpy(*a, f, &mut summary);
    }
    FinalAttention {
        summary,
        alphas,
        zeta,
        query,
        keys,
    }
}

/// Risk output of one case.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub y_hat: f64,
    pub final_alphas: Vec<f64>,
    pub summary: Vec<f64>,
}

/// Unclamped logit and clamped probability `σ(w·s + b)`.
pub fn predict(summary: &[f64], p: &HeadParams) -> (f64, f64) {
    let logit = dot(p.w_out, summary) + p.b_out;
    (logit, clamp_probability(sigmoid(logit)))
}

pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

pub fn cross_entropy(y_hat: f64, label: u8) -> f64 {
    if label == 1 {
        -y_hat.ln()
    } else {
        -(1.0 - y_hat).ln()
    }
}

/// Mean binary cross-entropy plus `lambda * decorrelation`.
pub fn total_loss(y_hats: &[f64], labels: &[u8], decorrelation: f64, lambda: f64) -> f64 {
    assert!(!y_hats.is_empty(), "loss of an empty batch");
    let ce: f64 = y_hats
        .iter()
        .zip(labels)
        .map(|(&y, &l)| cross_entropy(y, l))
        .sum::<f64>()
        / y_hats.len() as f64;
    ce + lambda * decorrelation
}

/// Gradient of the cross-entropy with respect to the logit; zero where the clamp is active.
pub fn cross_entropy_logit_grad(logit: f64, label: u8) -> f64 {
    let p = sigmoid(logit);
    if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
        return 0.0;
    }
    p - f64::from(label)
}

/// Back-propagates `dlogit` through the output layer and final attention; returns `∂L/∂F*`.
pub fn head_backward(
    encoded: &FeatureMatrix,
    p: &HeadParams,
    layout: &HeadLayout,
    att: &FinalAttention,
    dlogit: f64,
    grads: &mut Gradients,
) -> Vec<Vec<f64>> {
    let d = p.hidden;
    let dd = d * d;
    axpy(dlogit, &att.summary, grads.get_mut(layout.w_out));
    grads.get_mut(layout.b_out)[0] += dlogit;
    let dsummary: Vec<f64> = p.w_out.iter().map(|w| w * dlogit).collect();

    let mut dencoded: Vec<Vec<f64>> = att
        .alphas
        .iter()
        .map(|&a| dsummary.iter().map(|g| a * g).collect())
        .collect();
    let dalphas: Vec<f64> = encoded.rows.iter().map(|f| dot(&dsummary, f)).collect();
    let dzeta = softmax_backward(&att.alphas, &dalphas);
    let mut dquery = vec![0.0; d];
    for (n, f) in encoded.rows.iter().enumerate() {
        let dpre = dzeta[n] * (1.0 - att.zeta[n] * att.zeta[n]);
        axpy(dpre, &att.keys[n], &mut dquery);
        let dkey: Vec<f64> = att.query.iter().map(|q| dpre * q).collect();
        let gk = match layout.keys {
            HeadKeys::Shared => grads.get_mut(layout.w_key),
            HeadKeys::PerPosition => &mut grads.get_mut(layout.w_key)[n * dd..(n + 1) * dd],
        };
        outer_acc(gk, &dkey, f);
        matvec_t_acc(p.key_matrix(n), d, d, &dkey, &mut dencoded[n]);
    }
    let base = encoded.n_rows() - 1;
    outer_acc(grads.get_mut(layout.w_query), &dquery, encoded.baseline());
    matvec_t_acc(p.w_query, d, d, &dquery, &mut dencoded[base]);
    dencoded
}
