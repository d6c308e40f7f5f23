//! The full network: embedding → context encoder → prediction head.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::{batch_decorrelation, encode, encode_backward, EncodeTrace, EncoderLayout};
use crate::data::{Dataset, Normalization, PatientCase};
use crate::embedding::{EmbeddingLayout, EmbeddingTrace};
use crate::head::{
    cross_entropy, cross_entropy_logit_grad, final_attention, head_backward, predict,
    FinalAttention, HeadKeys, HeadLayout, Prediction,
};
use crate::numerics::{Gradients, ParamStore, SavedParam};
use crate::{Error, Result};

/// Cases per gradient accumulation chunk; fixed so results do not depend on thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_features: usize,
    pub n_baseline: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn: usize,
    /// When false, every elapsed-time gap is treated as zero.
    #[serde(default = "default_true")]
    pub time_aware: bool,
    #[serde(default)]
    pub head_keys: HeadKeys,
}

fn default_true() -> bool {
    true
}

impl ModelConfig {
    pub fn new(n_features: usize, n_baseline: usize) -> Self {
        Self {
            n_features,
            n_baseline,
            hidden: 32,
            heads: 4,
            ffn: 64,
            time_aware: true,
            head_keys: HeadKeys::Shared,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 || self.hidden == 0 || self.ffn == 0 {
            return Err(Error::InvalidArgument(
                "features, hidden size and feed-forward width must be positive".into(),
            ));
        }
        if self.heads == 0 || self.hidden % self.heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        Ok(())
    }
}

/// Parameter layout of the whole network. All weights live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct ConCare {
    pub config: ModelConfig,
    pub embedding: EmbeddingLayout,
    pub encoder: EncoderLayout,
    pub head: HeadLayout,
}

/// Every intermediate of one case's forward pass.
#[derive(Clone, Debug)]
pub struct CaseForward {
    pub embedding: EmbeddingTrace,
    pub encoded: EncodeTrace,
    pub head: FinalAttention,
    pub logit: f64,
    pub y_hat: f64,
}

/// Attention weights and decay rates captured for inspection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    /// `[feature][visit]` time-aware weights.
    pub time_alphas: Vec<Vec<f64>>,
    /// `[head][query position][key position]` self-attention weights.
    pub self_attention: Vec<Vec<Vec<f64>>>,
    /// Final attention over `f*_1..f*_N, f*_base`.
    pub final_alphas: Vec<f64>,
    pub decay_rates: Vec<f64>,
    pub y_hat: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchLoss {
    pub total: f64,
    pub cross_entropy: f64,
    pub decorrelation: f64,
}

impl ConCare {
    /// Builds the layout and freshly initialized parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<(Self, ParamStore)> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let embedding = EmbeddingLayout::register(
            &mut store,
            &mut rng,
            config.n_features,
            config.n_baseline,
            config.hidden,
        )?;
        let encoder =
            EncoderLayout::register(&mut store, &mut rng, config.hidden, config.heads, config.ffn)?;
        let head = HeadLayout::register(
            &mut store,
            &mut rng,
            config.hidden,
            config.n_features + 1,
            config.head_keys,
        )?;
        Ok((
            Self {
                config,
                embedding,
                encoder,
                head,
            },
            store,
        ))
    }

    pub fn forward(&self, store: &ParamStore, case: &PatientCase) -> CaseForward {
        let embedding =
            self.embedding
                .build_feature_matrix(store, case, self.config.time_aware);
        let encoded = encode(&embedding.features, &self.encoder.params(store));
        let head = final_attention(&encoded.output, &self.head.params(store));
        let (logit, y_hat) = predict(&head.summary, &self.head.params(store));
        CaseForward {
            embedding,
            encoded,
            head,
            logit,
            y_hat,
        }
    }

    pub fn predict(&self, store: &ParamStore, case: &PatientCase) -> Prediction {
        let fwd = self.forward(store, case);
        Prediction {
            y_hat: fwd.y_hat,
            final_alphas: fwd.head.alphas,
            summary: fwd.head.summary,
        }
    }

    /// Risk scores for many cases, evaluated in parallel.
    pub fn predict_many(&self, store: &ParamStore, cases: &[&PatientCase]) -> Vec<f64> {
        cases
            .par_iter()
            .map(|c| self.forward(store, c).y_hat)
            .collect()
    }

    pub fn trace(&self, store: &ParamStore, case: &PatientCase) -> AttentionTrace {
        let fwd = self.forward(store, case);
        AttentionTrace {
            time_alphas: fwd.embedding.alphas(),
            self_attention: fwd.encoded.attention.attn.clone(),
            final_alphas: fwd.head.alphas.clone(),
            decay_rates: self.embedding.decay_rates(store),
            y_hat: fwd.y_hat,
        }
    }

    pub fn decay_rates(&self, store: &ParamStore) -> Vec<f64> {
        self.embedding.decay_rates(store)
    }

    /// Mean cross-entropy plus `lambda` times the decorrelation loss of the batch.
    pub fn batch_loss(&self, store: &ParamStore, cases: &[&PatientCase], lambda: f64) -> BatchLoss {
        let forwards: Vec<CaseForward> = cases.par_iter().map(|c| self.forward(store, c)).collect();
        let us: Vec<&[Vec<f64>]> = forwards.iter().map(|f| f.encoded.activations()).collect();
        let (decorrelation, _) = batch_decorrelation(&us);
        self.combine(&forwards, cases, decorrelation, lambda)
    }

    fn combine(
        &self,
        forwards: &[CaseForward],
        cases: &[&PatientCase],
        decorrelation: f64,
        lambda: f64,
    ) -> BatchLoss {
        let ce = forwards
            .iter()
            .zip(cases)
            .map(|(f, c)| cross_entropy(f.y_hat, c.label))
            .sum::<f64>()
            / cases.len() as f64;
        BatchLoss {
            total: ce + lambda * decorrelation,
            cross_entropy: ce,
            decorrelation,
        }
    }

    /// Batch loss and its gradient with respect to every parameter.
    pub fn batch_loss_and_grad(
        &self,
        store: &ParamStore,
        cases: &[&PatientCase],
        lambda: f64,
    ) -> (BatchLoss, Gradients) {
        assert!(!cases.is_empty(), "empty batch");
        let forwards: Vec<CaseForward> = cases.par_iter().map(|c| self.forward(store, c)).collect();
        let us: Vec<&[Vec<f64>]> = forwards.iter().map(|f| f.encoded.activations()).collect();
        let (decorrelation, du) = if lambda != 0.0 {
            batch_decorrelation(&us)
        } else {
            (batch_decorrelation(&us).0, Vec::new())
        };
        let loss = self.combine(&forwards, cases, decorrelation, lambda);
        let inv_b = 1.0 / cases.len() as f64;

        let partials: Vec<Gradients> = (0..cases.len())
            .collect::<Vec<_>>()
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut grads = Gradients::zeros_like(store);
                for &b in chunk {
                    let extra: Option<Vec<Vec<f64>>> = (lambda != 0.0).then(|| {
                        du[b]
                            .iter()
                            .map(|row| row.iter().map(|g| g * lambda).collect())
                            .collect()
                    });
                    self.backward_case(
                        store,
                        cases[b],
                        &forwards[b],
                        inv_b * cross_entropy_logit_grad(forwards[b].logit, cases[b].label),
                        extra.as_deref(),
                        &mut grads,
                    );
                }
                grads
            })
            .collect();
        let mut total = Gradients::zeros_like(store);
        for g in &partials {
            total.add_assign(g);
        }
        (loss, total)
    }

    /// Back-propagates one case given `∂L/∂logit` and the extra gradient on its head activations.
    pub fn backward_case(
        &self,
        store: &ParamStore,
        case: &PatientCase,
        fwd: &CaseForward,
        dlogit: f64,
        du: Option<&[Vec<f64>]>,
        grads: &mut Gradients,
    ) {
        let head = self.head.params(store);
        let dencoded = head_backward(
            &fwd.encoded.output,
            &head,
            &self.head,
            &fwd.head,
            dlogit,
            grads,
        );
        let dfeatures = encode_backward(
            &fwd.embedding.features,
            &self.encoder.params(store),
            &self.encoder,
            &fwd.encoded,
            &dencoded,
            du,
            grads,
        );
        self.embedding
            .backward(store, case, &fwd.embedding, &dfeatures, grads);
    }
}

/// Model file format identifier and version.
pub const MODEL_FORMAT: &str = "concare-model";
pub const MODEL_VERSION: u32 = 1;

/// A network with its parameters and the preprocessing it was trained under.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub net: ConCare,
    pub params: ParamStore,
    pub feature_names: Vec<String>,
    pub baseline_names: Vec<String>,
    pub normalization: Normalization,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    config: ModelConfig,
    feature_names: Vec<String>,
    baseline_names: Vec<String>,
    normalization: Normalization,
    params: Vec<SavedParam>,
}

impl TrainedModel {
    /// Checks that `dataset` lists the features and baseline dimensions this model was trained on.
    pub fn check_compatible(&self, dataset: &Dataset) -> Result<()> {
        dataset.check_schema(&self.feature_names, &self.baseline_names)
    }

    /// Applies the stored normalization to a raw dataset.
    pub fn prepare(&self, dataset: &Dataset) -> Result<Dataset> {
        self.check_compatible(dataset)?;
        if dataset.normalization.is_some() {
            return Err(Error::InvalidArgument(
                "dataset is already normalized; pass raw records".into(),
            ));
        }
        Ok(self.normalization.apply(dataset))
    }

    /// Risk scores for the given cases of an already prepared dataset.
    pub fn scores(&self, prepared: &Dataset, indices: &[usize]) -> Vec<f64> {
        let cases: Vec<&PatientCase> = indices.iter().map(|&i| &prepared.cases[i]).collect();
        self.net.predict_many(&self.params, &cases)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            config: self.net.config.clone(),
            feature_names: self.feature_names.clone(),
            baseline_names: self.baseline_names.clone(),
            normalization: self.normalization.clone(),
            params: self.params.to_saved(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported model file {} v{}",
                file.format, file.version
            )));
        }
        if file.feature_names.len() != file.config.n_features
            || file.baseline_names.len() != file.config.n_baseline
        {
            return Err(Error::Shape(
                "model names disagree with its configured dimensions".into(),
            ));
        }
        let (net, mut params) = ConCare::new(file.config, 0)?;
        params.load_saved(&file.params)?;
        Ok(Self {
            net,
            params,
            feature_names: file.feature_names,
            baseline_names: file.baseline_names,
            normalization: file.normalization,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
