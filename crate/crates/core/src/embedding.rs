//! Multi-channel sequence embedding.
//!
//! Every dynamic feature owns a GRU over its scalar series and a time-aware
//! attention that pools the GRU states into one context vector. The static
//! baseline is linearly embedded into the same space, giving the feature
//! matrix `F = (f_1, ..., f_N, f_base)`.

use rand::Rng;

use crate::data::PatientCase;
use crate::numerics::tensor::{axpy, dot, matvec, matvec_t_acc, outer_acc};
use crate::numerics::{sigmoid, softmax, softmax_backward, softplus, softplus_inv};
use crate::numerics::{Gradients, ParamId, ParamStore, Tensor};
use crate::Result;

/// Floor added to the softplus of the raw decay parameter.
pub const DECAY_FLOOR: f64 = 0.01;

/// Effective decay rate `softplus(raw) + 0.01`.
pub fn decay_rate(beta_raw: f64) -> f64 {
    softplus(beta_raw) + DECAY_FLOOR
}

/// Raw parameter value whose decay rate is `beta`.
pub fn decay_raw_for(beta: f64) -> f64 {
    softplus_inv(beta - DECAY_FLOOR)
}

/// Time-aware alignment score for one visit:
/// `tanh(s / (beta * ln(e + (1 - sigmoid(s)) * gap)))`.
pub fn time_aware_score(score: f64, beta: f64, gap: f64) -> f64 {
    let log_term = (std::f64::consts::E + (1.0 - sigmoid(score)) * gap).ln();
    (score / (beta * log_term)).tanh()
}

/// The (N+1) x d stack of rows `f_1..f_N, f_base`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn baseline(&self) -> &[f64] {
        self.rows.last().expect("feature matrix has a baseline row")
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().flatten().all(|v| v.is_finite())
    }
}

/// Parameter handles for all channels plus the baseline embedding.
///
/// Channel tensors are stacked along a leading feature axis.
#[derive(Clone, Debug)]
pub struct EmbeddingLayout {
    pub n_features: usize,
    pub n_baseline: usize,
    pub hidden: usize,
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub b_r: ParamId,
    pub w_h: ParamId,
    pub u_h: ParamId,
    pub b_h: ParamId,
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub beta_raw: ParamId,
    pub w_base: ParamId,
}

fn uniform(rng: &mut impl Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let len = shape.iter().product();
    let values = (0..len).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::from_vec(shape, values).expect("shape matches")
}

impl EmbeddingLayout {
    pub fn register(
        store: &mut ParamStore,
        rng: &mut impl Rng,
        n_features: usize,
        n_baseline: usize,
        hidden: usize,
    ) -> Result<Self> {
        let (n, d) = (n_features, hidden);
        let mut mat = |store: &mut ParamStore, name: &str, fan_in: usize| {
            store.insert(name, uniform(rng, &[n, d, d], fan_in))
        };
        let u_z = mat(store, "embed.gru.u_z", d)?;
        let u_r = mat(store, "embed.gru.u_r", d)?;
        let u_h = mat(store, "embed.gru.u_h", d)?;
        let w_q = mat(store, "embed.attn.w_q", d)?;
        let w_k = mat(store, "embed.attn.w_k", d)?;
        Ok(Self {
            n_features,
            n_baseline,
            hidden,
            w_z: store.insert("embed.gru.w_z", uniform(rng, &[n, d], 1))?,
            w_r: store.insert("embed.gru.w_r", uniform(rng, &[n, d], 1))?,
            w_h: store.insert("embed.gru.w_h", uniform(rng, &[n, d], 1))?,
            b_z: store.insert("embed.gru.b_z", Tensor::zeros(&[n, d]))?,
            b_r: store.insert("embed.gru.b_r", Tensor::zeros(&[n, d]))?,
            b_h: store.insert("embed.gru.b_h", Tensor::zeros(&[n, d]))?,
            u_z,
            u_r,
            u_h,
            w_q,
            w_k,
            beta_raw: store.insert(
                "embed.attn.beta_raw",
                Tensor::from_vec(&[n], vec![decay_raw_for(1.0); n])?,
            )?,
            w_base: store.insert(
                "embed.base.w_emb",
                uniform(rng, &[d, n_baseline], n_baseline),
            )?,
        })
    }

    pub fn channel<'a>(&self, store: &'a ParamStore, n: usize) -> ChannelParams<'a> {
        let d = self.hidden;
        let vec = |id| &store.value(id)[n * d..(n + 1) * d];
        let mat = |id| &store.value(id)[n * d * d..(n + 1) * d * d];
        ChannelParams {
            hidden: d,
            w_z: vec(self.w_z),
            u_z: mat(self.u_z),
            b_z: vec(self.b_z),
            w_r: vec(self.w_r),
            u_r: mat(self.u_r),
            b_r: vec(self.b_r),
            w_h: vec(self.w_h),
            u_h: mat(self.u_h),
            b_h: vec(self.b_h),
            w_q: mat(self.w_q),
            w_k: mat(self.w_k),
            beta_raw: store.value(self.beta_raw)[n],
        }
    }

    pub fn decay_rates(&self, store: &ParamStore) -> Vec<f64> {
        store
            .value(self.beta_raw)
            .iter()
            .map(|&r| decay_rate(r))
            .collect()
    }

    /// Adds one channel's gradients into the stacked buffers.
    pub fn accumulate_channel(&self, grads: &mut Gradients, n: usize, g: &ChannelGrads) {
        let d = self.hidden;
        let pairs: [(ParamId, &[f64], usize); 11] = [
            (self.w_z, &g.w_z, d),
            (self.u_z, &g.u_z, d * d),
            (self.b_z, &g.b_z, d),
            (self.w_r, &g.w_r, d),
            (self.u_r, &g.u_r, d * d),
            (self.b_r, &g.b_r, d),
            (self.w_h, &g.w_h, d),
            (self.u_h, &g.u_h, d * d),
            (self.b_h, &g.b_h, d),
            (self.w_q, &g.w_q, d * d),
            (self.w_k, &g.w_k, d * d),
        ];
        for (id, src, stride) in pairs {
            axpy(1.0, src, &mut grads.get_mut(id)[n * stride..(n + 1) * stride]);
        }
        grads.get_mut(self.beta_raw)[n] += g.beta_raw;
    }
}

/// Borrowed weights of one feature channel.
#[derive(Clone, Copy, Debug)]
pub struct ChannelParams<'a> {
    pub hidden: usize,
    pub w_z: &'a [f64],
    pub u_z: &'a [f64],
    pub b_z: &'a [f64],
    pub w_r: &'a [f64],
    pub u_r: &'a [f64],
    pub b_r: &'a [f64],
    pub w_h: &'a [f64],
    pub u_h: &'a [f64],
    pub b_h: &'a [f64],
    pub w_q: &'a [f64],
    pub w_k: &'a [f64],
    pub beta_raw: f64,
}

impl ChannelParams<'_> {
    pub fn decay_rate(&self) -> f64 {
        decay_rate(self.beta_raw)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelGrads {
    pub w_z: Vec<f64>,
    pub u_z: Vec<f64>,
    pub b_z: Vec<f64>,
    pub w_r: Vec<f64>,
    pub u_r: Vec<f64>,
    pub b_r: Vec<f64>,
    pub w_h: Vec<f64>,
    pub u_h: Vec<f64>,
    pub b_h: Vec<f64>,
    pub w_q: Vec<f64>,
    pub w_k: Vec<f64>,
    pub beta_raw: f64,
}

impl ChannelGrads {
    pub fn zeros(d: usize) -> Self {
        Self {
            w_z: vec![0.0; d],
            u_z: vec![0.0; d * d],
            b_z: vec![0.0; d],
            w_r: vec![0.0; d],
            u_r: vec![0.0; d * d],
            b_r: vec![0.0; d],
            w_h: vec![0.0; d],
            u_h: vec![0.0; d * d],
            b_h: vec![0.0; d],
            w_q: vec![0.0; d * d],
            w_k: vec![0.0; d * d],
            beta_raw: 0.0,
        }
    }
}

/// GRU states and gate activations for every step.
#[derive(Clone, Debug)]
pub struct GruTrace {
    pub states: Vec<Vec<f64>>,
    update: Vec<Vec<f64>>,
    reset: Vec<Vec<f64>>,
    candidate: Vec<Vec<f64>>,
}

/// Runs the channel GRU from a zero state over a scalar series.
///
/// `z = σ(w_z x + U_z h + b_z)`, `r = σ(w_r x + U_r h + b_r)`,
/// `c = tanh(w_h x + U_h (r ⊙ h) + b_h)`, `h' = (1 - z) ⊙ h + z ⊙ c`.
pub fn gru_forward(series: &[f64], p: &ChannelParams) -> GruTrace {
    let d = p.hidden;
    let mut h = vec![0.0; d];
    let mut trace = GruTrace {
        states: Vec::with_capacity(series.len()),
        update: Vec::with_capacity(series.len()),
        reset: Vec::with_capacity(series.len()),
        candidate: Vec::with_capacity(series.len()),
    };
    for &x in series {
        let uz = matvec(p.u_z, d, d, &h);
        let ur = matvec(p.u_r, d, d, &h);
        let z: Vec<f64> = (0..d).map(|i| sigmoid(p.w_z[i] * x + uz[i] + p.b_z[i])).collect();
        let r: Vec<f64> = (0..d).map(|i| sigmoid(p.w_r[i] * x + ur[i] + p.b_r[i])).collect();
        let rh: Vec<f64> = r.iter().zip(&h).map(|(a, b)| a * b).collect();
        let uh = matvec(p.u_h, d, d, &rh);
        let c: Vec<f64> = (0..d).map(|i| (p.w_h[i] * x + uh[i] + p.b_h[i]).tanh()).collect();
        h = (0..d).map(|i| (1.0 - z[i]) * h[i] + z[i] * c[i]).collect();
        trace.states.push(h.clone());
        trace.update.push(z);
        trace.reset.push(r);
        trace.candidate.push(c);
    }
    trace
}

/// Back-propagates `dstates[t] = ∂L/∂h_t` through time into `grads`.
pub fn gru_backward(
    series: &[f64],
    p: &ChannelParams,
    trace: &GruTrace,
    dstates: &[Vec<f64>],
    grads: &mut ChannelGrads,
) {
    let d = p.hidden;
    let zeros = vec![0.0; d];
    let mut carry = vec![0.0; d];
    for t in (0..series.len()).rev() {
        let x = series[t];
        let h_prev = if t == 0 { &zeros } else { &trace.states[t - 1] };
        let (z, r, c) = (&trace.update[t], &trace.reset[t], &trace.candidate[t]);
        let dh: Vec<f64> = (0..d).map(|i| dstates[t][i] + carry[i]).collect();

        let mut dh_prev: Vec<f64> = (0..d).map(|i| dh[i] * (1.0 - z[i])).collect();
        let da_c: Vec<f64> = (0..d).map(|i| dh[i] * z[i] * (1.0 - c[i] * c[i])).collect();
        let da_z: Vec<f64> = (0..d)
            .map(|i| dh[i] * (c[i] - h_prev[i]) * z[i] * (1.0 - z[i]))
            .collect();

        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        axpy(x, &da_c, &mut grads.w_h);
        axpy(1.0, &da_c, &mut grads.b_h);
        outer_acc(&mut grads.u_h, &da_c, &rh);
        let mut drh = vec![0.0; d];
        matvec_t_acc(p.u_h, d, d, &da_c, &mut drh);
        let da_r: Vec<f64> = (0..d)
            .map(|i| drh[i] * h_prev[i] * r[i] * (1.0 - r[i]))
            .collect();
        for i in 0..d {
            dh_prev[i] += drh[i] * r[i];
        }

        axpy(x, &da_z, &mut grads.w_z);
        axpy(1.0, &da_z, &mut grads.b_z);
        outer_acc(&mut grads.u_z, &da_z, h_prev);
        matvec_t_acc(p.u_z, d, d, &da_z, &mut dh_prev);

        axpy(x, &da_r, &mut grads.w_r);
        axpy(1.0, &da_r, &mut grads.b_r);
        outer_acc(&mut grads.u_r, &da_r, h_prev);
        matvec_t_acc(p.u_r, d, d, &da_r, &mut dh_prev);

        carry = dh_prev;
    }
}

/// Output of the time-aware attention of one channel.
#[derive(Clone, Debug)]
pub struct TimeAttention {
    /// Pooled context `f_n = Σ_t α_t h_t`.
    pub context: Vec<f64>,
    pub alphas: Vec<f64>,
    pub zeta: Vec<f64>,
    /// Elapsed hours to the latest visit (all zero when time is ignored).
    pub gaps: Vec<f64>,
    pub decay_rate: f64,
    query: Vec<f64>,
    keys: Vec<Vec<f64>>,
    scores: Vec<f64>,
    log_terms: Vec<f64>,
}

/// Pools GRU states with weights `softmax(ζ)`; with `time_aware == false` every gap is treated as 0.
pub fn time_aware_attention(
    hidden: &[Vec<f64>],
    timestamps: &[f64],
    p: &ChannelParams,
    time_aware: bool,
) -> TimeAttention {
    let d = p.hidden;
    let last = hidden.len() - 1;
    let beta = p.decay_rate();
    let query = matvec(p.w_q, d, d, &hidden[last]);
    let keys: Vec<Vec<f64>> = hidden.iter().map(|h| matvec(p.w_k, d, d, h)).collect();
    let scores: Vec<f64> = keys.iter().map(|k| dot(&query, k)).collect();
    let gaps: Vec<f64> = timestamps
        .iter()
        .map(|&t| {
            if time_aware {
                timestamps[last] - t
            } else {
                0.0
            }
        })
        .collect();
    let log_terms: Vec<f64> = scores
        .iter()
        .zip(&gaps)
        .map(|(&s, &g)| (std::f64::consts::E + (1.0 - sigmoid(s)) * g).ln())
        .collect();
    let zeta: Vec<f64> = scores
        .iter()
        .zip(&log_terms)
        .map(|(&s, &l)| (s / (beta * l)).tanh())
        .collect();
    let alphas = softmax(&zeta, None).expect("non-empty sequence");
    let mut context = vec![0.0; d];
    for (a, h) in alphas.iter().zip(hidden) {
        axpy(*a, h, &mut context);
    }
    TimeAttention {
        context,
        alphas,
        zeta,
        gaps,
        decay_rate: beta,
        query,
        keys,
        scores,
        log_terms,
    }
}

/// Back-propagates `dcontext` into the channel's attention weights and returns `∂L/∂h_t`.
pub fn time_aware_attention_backward(
    hidden: &[Vec<f64>],
    p: &ChannelParams,
    att: &TimeAttention,
    dcontext: &[f64],
    grads: &mut ChannelGrads,
) -> Vec<Vec<f64>> {
    let d = p.hidden;
    let last = hidden.len() - 1;
    let beta = att.decay_rate;
    let mut dhidden: Vec<Vec<f64>> = att
        .alphas
        .iter()
        .map(|&a| dcontext.iter().map(|g| a * g).collect())
        .collect();
    let dalphas: Vec<f64> = hidden.iter().map(|h| dot(dcontext, h)).collect();
    let dzeta = softmax_backward(&att.alphas, &dalphas);

    let mut dbeta = 0.0;
    let mut dquery = vec![0.0; d];
    for t in 0..hidden.len() {
        let (s, l, g, z) = (att.scores[t], att.log_terms[t], att.gaps[t], att.zeta[t]);
        let denom = beta * l;
        let darg = dzeta[t] * (1.0 - z * z);
        let mut dscore = darg / denom;
        let ddenom = -darg * s / (denom * denom);
        dbeta += ddenom * l;
        let dlog = ddenom * beta;
        if g != 0.0 {
            let sig = sigmoid(s);
            let inner = std::f64::consts::E + (1.0 - sig) * g;
            dscore += dlog * (-sig * (1.0 - sig) * g) / inner;
        }
        axpy(dscore, &att.keys[t], &mut dquery);
        let dkey: Vec<f64> = att.query.iter().map(|q| dscore * q).collect();
        outer_acc(&mut grads.w_k, &dkey, &hidden[t]);
        matvec_t_acc(p.w_k, d, d, &dkey, &mut dhidden[t]);
    }
    outer_acc(&mut grads.w_q, &dquery, &hidden[last]);
    matvec_t_acc(p.w_q, d, d, &dquery, &mut dhidden[last]);
    grads.beta_raw += dbeta * sigmoid(p.beta_raw);
    dhidden
}

/// `f_base = W_base · base` (no bias).
pub fn embed_baseline(baseline: &[f64], w_base: &[f64], hidden: usize) -> Vec<f64> {
    matvec(w_base, hidden, baseline.len(), baseline)
}

/// Everything one case's embedding pass keeps for the backward pass.
#[derive(Clone, Debug)]
pub struct EmbeddingTrace {
    pub features: FeatureMatrix,
    pub channels: Vec<(GruTrace, TimeAttention)>,
}

impl EmbeddingTrace {
    pub fn alphas(&self) -> Vec<Vec<f64>> {
        self.channels.iter().map(|(_, a)| a.alphas.clone()).collect()
    }
}

impl EmbeddingLayout {
    /// Embeds every channel independently and appends the baseline row.
    pub fn build_feature_matrix(
        &self,
        store: &ParamStore,
        case: &PatientCase,
        time_aware: bool,
    ) -> EmbeddingTrace {
        let mut rows = Vec::with_capacity(self.n_features + 1);
        let mut channels = Vec::with_capacity(self.n_features);
        for n in 0..self.n_features {
            let p = self.channel(store, n);
            let gru = gru_forward(&case.records[n], &p);
            let att = time_aware_attention(&gru.states, &case.timestamps, &p, time_aware);
            rows.push(att.context.clone());
            channels.push((gru, att));
        }
        rows.push(embed_baseline(
            &case.baseline,
            store.value(self.w_base),
            self.hidden,
        ));
        EmbeddingTrace {
            features: FeatureMatrix { rows },
            channels,
        }
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        case: &PatientCase,
        trace: &EmbeddingTrace,
        dfeatures: &[Vec<f64>],
        grads: &mut Gradients,
    ) {
        for n in 0..self.n_features {
            let p = self.channel(store, n);
            let (gru, att) = &trace.channels[n];
            let mut g = ChannelGrads::zeros(self.hidden);
            let dstates = time_aware_attention_backward(&gru.states, &p, att, &dfeatures[n], &mut g);
            gru_backward(&case.records[n], &p, gru, &dstates, &mut g);
            self.accumulate_channel(grads, n, &g);
        }
        outer_acc(
            grads.get_mut(self.w_base),
            &dfeatures[self.n_features],
            &case.baseline,
        );
    }
}
