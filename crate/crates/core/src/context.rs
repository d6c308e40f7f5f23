//! Feature self-attention encoder.
//!
//! One post-norm layer: multi-head scaled dot-product attention across the
//! N+1 feature positions, residual + layer norm, a position-wise ReLU
//! feed-forward block, residual + layer norm. The concatenated head outputs
//! `u` (before the output projection) feed the cross-head decorrelation loss.

use rand::Rng;

use crate::embedding::FeatureMatrix;
use crate::numerics::tensor::{axpy, dot, matvec, matvec_t_acc, outer_acc};
use crate::numerics::{
    layer_norm_backward, layer_norm_cached, softmax, softmax_backward, Gradients, LayerNormCache,
    ParamId, ParamStore, Tensor, LAYER_NORM_EPS,
};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct EncoderLayout {
    pub hidden: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub ffn: usize,
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub w_o: ParamId,
    pub w_1: ParamId,
    pub b_1: ParamId,
    pub w_2: ParamId,
    pub b_2: ParamId,
    pub ln1_gain: ParamId,
    pub ln1_bias: ParamId,
    pub ln2_gain: ParamId,
    pub ln2_bias: ParamId,
}

fn uniform(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let values = (0..shape.iter().product::<usize>())
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor::from_vec(shape, values).expect("shape matches")
}

impl EncoderLayout {
    pub fn register(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        hidden: usize,
        heads: usize,
        ffn: usize,
    ) -> Result<Self> {
        if heads == 0 || hidden % heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "hidden size {hidden} is not divisible by {heads} heads"
            )));
        }
        let (d, m) = (hidden, heads);
        let dk = d / m;
        Ok(Self {
            hidden,
            heads,
            head_dim: dk,
            ffn,
            w_q: store.insert("encoder.attn.w_q", uniform(rng, &[m, dk, d], d))?,
            w_k: store.insert("encoder.attn.w_k", uniform(rng, &[m, dk, d], d))?,
            w_v: store.insert("encoder.attn.w_v", uniform(rng, &[m, dk, d], d))?,
            w_o: store.insert("encoder.attn.w_o", uniform(rng, &[d, m * dk], m * dk))?,
            w_1: store.insert("encoder.ffn.w_1", uniform(rng, &[ffn, d], d))?,
            b_1: store.insert("encoder.ffn.b_1", Tensor::zeros(&[ffn]))?,
            w_2: store.insert("encoder.ffn.w_2", uniform(rng, &[d, ffn], ffn))?,
            b_2: store.insert("encoder.ffn.b_2", Tensor::zeros(&[d]))?,
            ln1_gain: store.insert("encoder.ln1.gain", Tensor::from_vec(&[d], vec![1.0; d])?)?,
            ln1_bias: store.insert("encoder.ln1.bias", Tensor::zeros(&[d]))?,
            ln2_gain: store.insert("encoder.ln2.gain", Tensor::from_vec(&[d], vec![1.0; d])?)?,
            ln2_bias: store.insert("encoder.ln2.bias", Tensor::zeros(&[d]))?,
        })
    }

    pub fn params<'a>(&self, store: &'a ParamStore) -> EncoderParams<'a> {
        EncoderParams {
            hidden: self.hidden,
            heads: self.heads,
            head_dim: self.head_dim,
            ffn: self.ffn,
            w_q: store.value(self.w_q),
            w_k: store.value(self.w_k),
            w_v: store.value(self.w_v),
            w_o: store.value(self.w_o),
            w_1: store.value(self.w_1),
            b_1: store.value(self.b_1),
            w_2: store.value(self.w_2),
            b_2: store.value(self.b_2),
            ln1_gain: store.value(self.ln1_gain),
            ln1_bias: store.value(self.ln1_bias),
            ln2_gain: store.value(self.ln2_gain),
            ln2_bias: store.value(self.ln2_bias),
        }
    }
}

/// Borrowed encoder weights. Per-head projections are `heads x head_dim x hidden`.
#[derive(Clone, Copy, Debug)]
pub struct EncoderParams<'a> {
    pub hidden: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub ffn: usize,
    pub w_q: &'a [f64],
    pub w_k: &'a [f64],
    pub w_v: &'a [f64],
    pub w_o: &'a [f64],
    pub w_1: &'a [f64],
    pub b_1: &'a [f64],
    pub w_2: &'a [f64],
    pub b_2: &'a [f64],
    pub ln1_gain: &'a [f64],
    pub ln1_bias: &'a [f64],
    pub ln2_gain: &'a [f64],
    pub ln2_bias: &'a [f64],
}

impl EncoderParams<'_> {
    fn head_block<'b>(&self, w: &'b [f64], m: usize) -> &'b [f64] {
        let size = self.head_dim * self.hidden;
        &w[m * size..(m + 1) * size]
    }

    /// Width of the concatenated head vector `u`.
    pub fn concat_dim(&self) -> usize {
        self.heads * self.head_dim
    }
}

/// Per-head projections, attention weights and the concatenated outputs `u`.
#[derive(Clone, Debug)]
pub struct MultiHeadTrace {
    /// `attn[m][i][j]`: weight of position `j` in the output at position `i`, head `m`.
    pub attn: Vec<Vec<Vec<f64>>>,
    /// `u[i]`: concatenation of all head outputs at position `i`.
    pub u: Vec<Vec<f64>>,
    q: Vec<Vec<Vec<f64>>>,
    k: Vec<Vec<Vec<f64>>>,
    v: Vec<Vec<Vec<f64>>>,
}

/// Scaled dot-product attention of every position over all positions, for each head.
pub fn multi_head_attention(features: &FeatureMatrix, p: &EncoderParams) -> MultiHeadTrace {
    let (d, dk) = (p.hidden, p.head_dim);
    let positions = features.n_rows();
    let scale = 1.0 / (dk as f64).sqrt();
    let project = |w: &[f64]| -> Vec<Vec<f64>> {
        features.rows.iter().map(|f| matvec(w, dk, d, f)).collect()
    };
    let mut trace = MultiHeadTrace {
        attn: Vec::with_capacity(p.heads),
        u: vec![Vec::with_capacity(p.concat_dim()); positions],
        q: Vec::with_capacity(p.heads),
        k: Vec::with_capacity(p.heads),
        v: Vec::with_capacity(p.heads),
    };
    for m in 0..p.heads {
        let q = project(p.head_block(p.w_q, m));
        let k = project(p.head_block(p.w_k, m));
        let v = project(p.head_block(p.w_v, m));
        let mut attn = Vec::with_capacity(positions);
        for (i, qi) in q.iter().enumerate() {
            let scores: Vec<f64> = k.iter().map(|kj| dot(qi, kj) * scale).collect();
            let row = softmax(&scores, None).expect("at least one position");
            let mut out = vec![0.0; dk];
            for (a, vj) in row.iter().zip(&v) {
                axpy(*a, vj, &mut out);
            }
            trace.u[i].extend_from_slice(&out);
            attn.push(row);
        }
        trace.attn.push(attn);
        trace.q.push(q);
        trace.k.push(k);
        trace.v.push(v);
    }
    trace
}

/// Back-propagates `du` (one row per position) and returns `∂L/∂F`.
pub fn multi_head_attention_backward(
    features: &FeatureMatrix,
    p: &EncoderParams,
    layout: &EncoderLayout,
    trace: &MultiHeadTrace,
    du: &[Vec<f64>],
    grads: &mut Gradients,
) -> Vec<Vec<f64>> {
    let (d, dk) = (p.hidden, p.head_dim);
    let positions = features.n_rows();
    let scale = 1.0 / (dk as f64).sqrt();
    let block = dk * d;
    let mut dfeatures = vec![vec![0.0; d]; positions];
    for m in 0..p.heads {
        let (q, k, v, attn) = (&trace.q[m], &trace.k[m], &trace.v[m], &trace.attn[m]);
        let mut dq = vec![vec![0.0; dk]; positions];
        let mut dk_ = vec![vec![0.0; dk]; positions];
        let mut dv = vec![vec![0.0; dk]; positions];
        for i in 0..positions {
            let dout = &du[i][m * dk..(m + 1) * dk];
            let dattn: Vec<f64> = v.iter().map(|vj| dot(dout, vj)).collect();
            for (j, a) in attn[i].iter().enumerate() {
                axpy(*a, dout, &mut dv[j]);
            }
            let dscores = softmax_backward(&attn[i], &dattn);
            for (j, ds) in dscores.iter().enumerate() {
                axpy(ds * scale, &k[j], &mut dq[i]);
                axpy(ds * scale, &q[i], &mut dk_[j]);
            }
        }
        for (id, w, dproj) in [
            (layout.w_q, p.w_q, &dq),
            (layout.w_k, p.w_k, &dk_),
            (layout.w_v, p.w_v, &dv),
        ] {
            let wm = p.head_block(w, m);
            let gm = &mut grads.get_mut(id)[m * block..(m + 1) * block];
            for (i, g) in dproj.iter().enumerate() {
                outer_acc(gm, g, &features.rows[i]);
                matvec_t_acc(wm, dk, d, g, &mut dfeatures[i]);
            }
        }
    }
    dfeatures
}

/// `max(0, W_1 x + b_1)` projected by `W_2` plus `b_2`.
pub fn feed_forward(x: &[f64], p: &EncoderParams) -> Vec<f64> {
    feed_forward_cached(x, p).0
}

fn feed_forward_cached(x: &[f64], p: &EncoderParams) -> (Vec<f64>, Vec<f64>) {
    let mut pre = matvec(p.w_1, p.ffn, p.hidden, x);
    for (h, b) in pre.iter_mut().zip(p.b_1) {
        *h += b;
    }
    let hidden: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
    let mut out = matvec(p.w_2, p.hidden, p.ffn, &hidden);
    for (o, b) in out.iter_mut().zip(p.b_2) {
        *o += b;
    }
    (out, hidden)
}

/// Batch-covariance decorrelation loss of one position: `½(‖C‖²_F − ‖diag C‖²)`.
pub fn decorrelation_loss(batch: &[&[f64]]) -> f64 {
    decorrelation_with_grad(batch, false).0
}

/// Loss and `∂loss/∂u^b` for one position.
pub fn decorrelation_loss_grad(batch: &[&[f64]]) -> (f64, Vec<Vec<f64>>) {
    decorrelation_with_grad(batch, true)
}

fn decorrelation_with_grad(batch: &[&[f64]], want_grad: bool) -> (f64, Vec<Vec<f64>>) {
    let b = batch.len();
    let dim = batch.first().map_or(0, |u| u.len());
    if b <= 1 {
        return (0.0, vec![vec![0.0; dim]; b]);
    }
    let bf = b as f64;
    // running mean, exact when every row is identical
    let mut mean = vec![0.0; dim];
    for (k, u) in batch.iter().enumerate() {
        for (m, x) in mean.iter_mut().zip(u.iter()) {
            *m += (x - *m) / (k + 1) as f64;
        }
    }
    let centered: Vec<Vec<f64>> = batch
        .iter()
        .map(|u| u.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    // off-diagonal covariance; the diagonal is excluded from the loss
    let mut cov = vec![0.0; dim * dim];
    for y in &centered {
        outer_acc(&mut cov, y, y);
    }
    let mut loss = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            let c = &mut cov[i * dim + j];
            *c /= bf;
            if i == j {
                *c = 0.0;
            } else {
                loss += *c * *c;
            }
        }
    }
    loss *= 0.5;
    if !want_grad {
        return (loss, Vec::new());
    }
    let mut grads: Vec<Vec<f64>> = centered
        .iter()
        .map(|y| matvec(&cov, dim, dim, y).iter().map(|g| 2.0 * g / bf).collect())
        .collect();
    let mut gmean = vec![0.0; dim];
    for g in &grads {
        axpy(1.0 / bf, g, &mut gmean);
    }
    for g in &mut grads {
        axpy(-1.0, &gmean, g);
    }
    (loss, grads)
}

/// Mean over positions of the per-position decorrelation loss, with gradients
/// indexed `[case][position][activation]`.
pub fn batch_decorrelation(u_per_case: &[&[Vec<f64>]]) -> (f64, Vec<Vec<Vec<f64>>>) {
    let b = u_per_case.len();
    let positions = u_per_case.first().map_or(0, |u| u.len());
    let mut grads: Vec<Vec<Vec<f64>>> = u_per_case
        .iter()
        .map(|u| u.iter().map(|row| vec![0.0; row.len()]).collect())
        .collect();
    if positions == 0 {
        return (0.0, grads);
    }
    let mut total = 0.0;
    for pos in 0..positions {
        let column: Vec<&[f64]> = u_per_case.iter().map(|u| u[pos].as_slice()).collect();
        let (loss, g) = decorrelation_loss_grad(&column);
        total += loss;
        for (case, gc) in g.into_iter().enumerate().take(b) {
            axpy(1.0 / positions as f64, &gc, &mut grads[case][pos]);
        }
    }
    (total / positions as f64, grads)
}

/// Activations kept by [`encode`] for the backward pass.
#[derive(Clone, Debug)]
pub struct EncodeTrace {
    pub output: FeatureMatrix,
    pub attention: MultiHeadTrace,
    ln1: Vec<LayerNormCache>,
    ln2: Vec<LayerNormCache>,
    residual: Vec<Vec<f64>>,
    ffn_hidden: Vec<Vec<f64>>,
}

impl EncodeTrace {
    /// Concatenated head outputs per position, the decorrelation inputs.
    pub fn activations(&self) -> &[Vec<f64>] {
        &self.attention.u
    }
}

/// `a = LN(F + W_O u)`, `F* = LN(a + FFN(a))`, row-wise.
pub fn encode(features: &FeatureMatrix, p: &EncoderParams) -> EncodeTrace {
    let attention = multi_head_attention(features, p);
    let d = p.hidden;
    let mut ln1 = Vec::new();
    let mut ln2 = Vec::new();
    let mut residual = Vec::new();
    let mut ffn_hidden = Vec::new();
    let mut rows = Vec::new();
    for (f, u) in features.rows.iter().zip(&attention.u) {
        let mut x1 = matvec(p.w_o, d, p.concat_dim(), u);
        axpy(1.0, f, &mut x1);
        let (a, c1) = layer_norm_cached(&x1, p.ln1_gain, p.ln1_bias, LAYER_NORM_EPS);
        let (mut x2, hidden) = feed_forward_cached(&a, p);
        axpy(1.0, &a, &mut x2);
        let (out, c2) = layer_norm_cached(&x2, p.ln2_gain, p.ln2_bias, LAYER_NORM_EPS);
        ln1.push(c1);
        ln2.push(c2);
        residual.push(a);
        ffn_hidden.push(hidden);
        rows.push(out);
    }
    EncodeTrace {
        output: FeatureMatrix { rows },
        attention,
        ln1,
        ln2,
        residual,
        ffn_hidden,
    }
}

/// Back-propagates `doutput` (and `du_extra`, the decorrelation gradient on `u`) to `∂L/∂F`.
pub fn encode_backward(
    features: &FeatureMatrix,
    p: &EncoderParams,
    layout: &EncoderLayout,
    trace: &EncodeTrace,
    doutput: &[Vec<f64>],
    du_extra: Option<&[Vec<f64>]>,
    grads: &mut Gradients,
) -> Vec<Vec<f64>> {
    let (d, dcat) = (p.hidden, p.concat_dim());
    let positions = features.n_rows();
    let mut dx1_rows = Vec::with_capacity(positions);
    let mut du = Vec::with_capacity(positions);
    for i in 0..positions {
        let dx2 = {
            let (gg, gb) = grads.get_pair_mut(layout.ln2_gain, layout.ln2_bias);
            layer_norm_backward(&trace.ln2[i], p.ln2_gain, &doutput[i], gg, gb)
        };
        let hidden = &trace.ffn_hidden[i];
        outer_acc(grads.get_mut(layout.w_2), &dx2, hidden);
        axpy(1.0, &dx2, grads.get_mut(layout.b_2));
        let mut dhidden = vec![0.0; p.ffn];
        matvec_t_acc(p.w_2, d, p.ffn, &dx2, &mut dhidden);
        for (g, h) in dhidden.iter_mut().zip(hidden) {
            if *h <= 0.0 {
                *g = 0.0;
            }
        }
        outer_acc(grads.get_mut(layout.w_1), &dhidden, &trace.residual[i]);
        axpy(1.0, &dhidden, grads.get_mut(layout.b_1));
        let mut da = dx2;
        matvec_t_acc(p.w_1, p.ffn, d, &dhidden, &mut da);

        let dx1 = {
            let (gg, gb) = grads.get_pair_mut(layout.ln1_gain, layout.ln1_bias);
            layer_norm_backward(&trace.ln1[i], p.ln1_gain, &da, gg, gb)
        };
        outer_acc(grads.get_mut(layout.w_o), &dx1, &trace.attention.u[i]);
        let mut dui = match du_extra {
            Some(extra) => extra[i].clone(),
            None => vec![0.0; dcat],
        };
        matvec_t_acc(p.w_o, d, dcat, &dx1, &mut dui);
        du.push(dui);
        dx1_rows.push(dx1);
    }
    let dmha = multi_head_attention_backward(features, p, layout, &trace.attention, &du, grads);
    for (row, extra) in dx1_rows.iter_mut().zip(dmha) {
        axpy(1.0, &extra, row);
    }
    dx1_rows
}
