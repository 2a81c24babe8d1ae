//! ECnet and TFAnet assembly, training, prediction and checkpoints.

use std::fmt;
use std::io::{self, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::{LabelVector, NUM_GENRES};
use crate::nn::{
    bce_multilabel, Activation, AdamConfig, AdamState, InputSpec, LayerSpec, Mode, NetInput, Network, NnError,
    Tensor2,
};
use crate::textprep::{build_vocabulary, encode_sequence, TextError, Vocabulary};
use crate::tfidf::{TfidfError, TfidfModel};
use crate::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GFLOWCKP";
pub const CHECKPOINT_VERSION: u16 = 1;
pub const DEFAULT_EVAL_FRACTION: f64 = 0.15;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyInput,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss { epoch: usize, batch: usize, detail: String },
    #[error("input was encoded with feature model {found}, checkpoint expects {expected}")]
    HashMismatch { expected: String, found: String },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error(transparent)]
    Nn(NnError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Tfidf(#[from] TfidfError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

impl From<NnError> for ModelError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::ShapeMismatch(s) => ModelError::ShapeMismatch(s),
            NnError::InvalidConfig(s) => ModelError::InvalidConfig(s),
            other => ModelError::Nn(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ecnet,
    Tfanet,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Ecnet => "ecnet",
            ModelKind::Tfanet => "tfanet",
        })
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ecnet" => Ok(ModelKind::Ecnet),
            "tfanet" => Ok(ModelKind::Tfanet),
            _ => Err(ModelError::InvalidConfig(format!("unknown model kind `{s}`"))),
        }
    }
}

/// Architecture plus training hyperparameters.
///
/// `vocab_size` counts embedding table rows (padding row included);
/// `feature_dim` is the TF-IDF width. Each applies to one kind only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub vocab_size: usize,
    pub max_len: usize,
    pub feature_dim: usize,
    pub embedding_dim: usize,
    pub conv_filters: usize,
    pub kernel_width: usize,
    pub pool: usize,
    pub hidden_units: Vec<usize>,
    pub dropout_rates: Vec<f64>,
    pub output_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub eval_fraction: f64,
}

impl ModelConfig {
    pub fn ecnet(vocab_size: usize, max_len: usize) -> Self {
        ModelConfig {
            kind: ModelKind::Ecnet,
            vocab_size,
            max_len,
            feature_dim: 0,
            embedding_dim: 64,
            conv_filters: 64,
            kernel_width: 3,
            pool: 2,
            hidden_units: vec![32],
            dropout_rates: vec![],
            output_dim: NUM_GENRES,
            learning_rate: 0.001,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            eval_fraction: DEFAULT_EVAL_FRACTION,
        }
    }

    pub fn tfanet(feature_dim: usize) -> Self {
        ModelConfig {
            kind: ModelKind::Tfanet,
            vocab_size: 0,
            max_len: 0,
            feature_dim,
            hidden_units: vec![64, 32],
            dropout_rates: vec![0.4, 0.2],
            ..Self::ecnet(0, 0)
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.output_dim != NUM_GENRES {
            return bad("output_dim must be 5");
        }
        if self.hidden_units.is_empty() || self.hidden_units.contains(&0) {
            return bad("hidden units must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return bad("eval_fraction must lie in [0, 1)");
        }
        match self.kind {
            ModelKind::Ecnet => {
                if self.vocab_size < 1 || self.max_len < 2 {
                    return bad("ecnet needs vocab_size >= 1 and max_len >= 2");
                }
                if self.embedding_dim == 0 || self.conv_filters == 0 || self.pool == 0 {
                    return bad("ecnet dimensions must be positive");
                }
                if self.kernel_width.is_multiple_of(2) {
                    return bad("kernel width must be odd");
                }
                if self.max_len < self.pool {
                    return bad("max_len shorter than the pool size");
                }
            }
            ModelKind::Tfanet => {
                if self.feature_dim < 1 {
                    return bad("tfanet needs feature_dim >= 1");
                }
                if self.dropout_rates.len() != self.hidden_units.len() {
                    return bad("tfanet needs one dropout rate per hidden layer");
                }
                if self.dropout_rates.iter().any(|r| !(0.0..1.0).contains(r)) {
                    return bad("dropout rates must lie in [0, 1)");
                }
            }
        }
        Ok(())
    }

    pub fn input_spec(&self) -> InputSpec {
        match self.kind {
            ModelKind::Ecnet => InputSpec::Indices { len: self.max_len },
            ModelKind::Tfanet => InputSpec::Features { dim: self.feature_dim },
        }
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let head = LayerSpec::Dense {
            units: self.output_dim,
            activation: Activation::Sigmoid,
        };
        let dense = |units| LayerSpec::Dense {
            units,
            activation: Activation::Relu,
        };
        let mut specs = Vec::new();
        match self.kind {
            ModelKind::Ecnet => {
                specs.push(LayerSpec::Embedding {
                    input_dim: self.vocab_size,
                    dim: self.embedding_dim,
                });
                specs.push(LayerSpec::Conv1dSame {
                    filters: self.conv_filters,
                    kernel: self.kernel_width,
                    activation: Activation::Relu,
                });
                specs.push(LayerSpec::Maxpool1d { pool: self.pool });
                specs.push(LayerSpec::Flatten);
                specs.extend(self.hidden_units.iter().map(|&u| dense(u)));
            }
            ModelKind::Tfanet => {
                for (&u, &rate) in self.hidden_units.iter().zip(&self.dropout_rates) {
                    specs.push(dense(u));
                    specs.push(LayerSpec::Dropout { rate });
                }
            }
        }
        specs.push(head);
        specs
    }

    /// Fresh network with weights drawn from `self.seed`.
    pub fn build<T: Scalar>(&self) -> Result<Network<T>, ModelError> {
        self.validate()?;
        Ok(Network::new(self.input_spec(), self.layer_specs(), self.seed)?)
    }
}

/// Embedding → conv1d(64, k=3, relu) → maxpool(2) → flatten → dense(32, relu) → dense(5, sigmoid).
pub fn build_ecnet<T: Scalar>(vocab_size: usize, max_len: usize) -> Result<Network<T>, ModelError> {
    ModelConfig::ecnet(vocab_size, max_len).build()
}

/// Dense(64) → dropout(0.4) → dense(32) → dropout(0.2) → dense(5, sigmoid).
pub fn build_tfanet<T: Scalar>(feature_dim: usize) -> Result<Network<T>, ModelError> {
    ModelConfig::tfanet(feature_dim).build()
}

/// The text-to-input mapping a model was trained with.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureModel {
    Vocabulary { vocab: Vocabulary, max_len: usize },
    Tfidf(TfidfModel),
}

impl FeatureModel {
    /// Vocabulary fit; `max_len` defaults to the longest in-vocabulary
    /// sequence of the training corpus (at least 2).
    pub fn fit_vocabulary<D: AsRef<[String]>>(
        corpora: &[D],
        min_doc_frequency: usize,
        max_len: Option<usize>,
    ) -> Result<Self, ModelError> {
        let vocab = build_vocabulary(corpora, min_doc_frequency)?;
        let max_len = max_len.unwrap_or_else(|| {
            corpora
                .iter()
                .map(|d| d.as_ref().iter().filter(|t| vocab.index_of(t).is_some()).count())
                .max()
                .unwrap_or(0)
                .max(2)
        });
        Ok(FeatureModel::Vocabulary { vocab, max_len })
    }

    pub fn fit_tfidf<D: AsRef<[String]>>(
        corpora: &[D],
        min_doc_frequency: usize,
        max_features: Option<usize>,
    ) -> Result<Self, ModelError> {
        Ok(FeatureModel::Tfidf(TfidfModel::fit(corpora, min_doc_frequency, max_features)?))
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            FeatureModel::Vocabulary { .. } => ModelKind::Ecnet,
            FeatureModel::Tfidf(_) => ModelKind::Tfanet,
        }
    }

    pub fn content_hash(&self) -> String {
        match self {
            FeatureModel::Vocabulary { vocab, .. } => vocab.content_hash(),
            FeatureModel::Tfidf(m) => m.content_hash(),
        }
    }

    /// Default config sized to this feature model.
    pub fn model_config(&self) -> ModelConfig {
        match self {
            FeatureModel::Vocabulary { vocab, max_len } => ModelConfig::ecnet(vocab.table_rows(), *max_len),
            FeatureModel::Tfidf(m) => ModelConfig::tfanet(m.dim()),
        }
    }

    pub fn encode<T: Scalar>(&self, tokens: &[String]) -> EncodedInput<T> {
        let input = match self {
            FeatureModel::Vocabulary { vocab, max_len } => {
                NetInput::Indices(encode_sequence(tokens, vocab, *max_len).indices)
            }
            FeatureModel::Tfidf(m) => NetInput::Features(m.transform(tokens).to_dense()),
        };
        EncodedInput {
            input,
            feature_hash: self.content_hash(),
        }
    }
}

/// A network input tagged with the hash of the feature model that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedInput<T> {
    pub input: NetInput<T>,
    pub feature_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub inputs: Vec<EncodedInput<T>>,
    pub labels: Vec<LabelVector>,
}

impl<T: Scalar> Dataset<T> {
    pub fn encode<D: AsRef<[String]>>(features: &FeatureModel, corpora: &[D], labels: &[LabelVector]) -> Self {
        Dataset {
            inputs: corpora.iter().map(|c| features.encode(c.as_ref())).collect(),
            labels: labels.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// One row of training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean BCE over the training set, measured in inference mode after the epoch.
    pub train_loss: f64,
    /// Exact match of all five labels at threshold 0.5.
    pub train_accuracy: f64,
    pub eval_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel<T> {
    pub config: ModelConfig,
    pub network: Network<T>,
    pub feature_hash: String,
    pub history: Vec<EpochRecord>,
}

fn targets<T: Scalar>(labels: &LabelVector) -> [T; NUM_GENRES] {
    labels.as_f64().map(T::of)
}

/// Mean loss and subset accuracy in inference mode.
fn evaluate_set<T: Scalar>(net: &Network<T>, data: &Dataset<T>) -> Result<(f64, f64), NnError> {
    let (mut loss, mut hits) = (0.0, 0usize);
    for (x, y) in data.inputs.iter().zip(&data.labels) {
        let p = net.predict(&x.input)?;
        let (l, _) = bce_multilabel(p.as_slice(), &targets::<T>(y))?;
        loss += l.to_f64_lossy();
        let half = T::of(0.5);
        hits += usize::from(p.as_slice().iter().zip(y.0).all(|(&s, t)| (s >= half) == t));
    }
    let n = data.len().max(1) as f64;
    Ok((loss / n, hits as f64 / n))
}

fn check_dataset<T: Scalar>(net: &Network<T>, data: &Dataset<T>, hash: &str) -> Result<(), ModelError> {
    if data.inputs.len() != data.labels.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "{} inputs for {} label vectors",
            data.inputs.len(),
            data.labels.len()
        )));
    }
    let want = net.input_spec();
    for x in &data.inputs {
        if x.feature_hash != hash {
            return Err(ModelError::HashMismatch {
                expected: hash.to_string(),
                found: x.feature_hash.clone(),
            });
        }
        let ok = match (&x.input, want) {
            (NetInput::Indices(ix), InputSpec::Indices { len }) => ix.len() == len,
            (NetInput::Features(f), InputSpec::Features { dim }) => f.shape() == (1, dim),
            _ => false,
        };
        if !ok {
            return Err(ModelError::ShapeMismatch(format!("encoded input does not fit {want:?}")));
        }
    }
    Ok(())
}

/// Shuffled mini-batch BCE + Adam for `config.epochs` epochs.
///
/// Batch gradients are averaged over samples. Shuffling and dropout draw
/// from one generator seeded by `config.seed`, so runs are reproducible.
pub fn train<T: Scalar>(
    mut network: Network<T>,
    train_set: &Dataset<T>,
    eval_set: Option<&Dataset<T>>,
    config: &ModelConfig,
) -> Result<TrainedModel<T>, ModelError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    let hash = train_set.inputs[0].feature_hash.clone();
    check_dataset(&network, train_set, &hash)?;
    if let Some(e) = eval_set {
        check_dataset(&network, e, &hash)?;
    }

    let adam = AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(adam, &network.params());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let fail = |detail: String| ModelError::NonFiniteLoss { epoch, batch: b + 1, detail };
            let mut grads = network.zero_gradients();
            for &i in batch {
                let trace = network
                    .forward(&train_set.inputs[i].input, Mode::Train, &mut rng)
                    .map_err(|e| fail(e.to_string()))?;
                let (_, g) = bce_multilabel(trace.output.as_slice(), &targets::<T>(&train_set.labels[i]))
                    .map_err(|e| fail(e.to_string()))?;
                network.backward_into(&trace, &g, &mut grads)?;
            }
            grads.scale(T::one() / T::of_usize(batch.len()));
            network.apply_adam(&mut state, &grads)?;
            if network.params().iter().any(|p| !p.all_finite()) {
                return Err(fail("parameters became non-finite".into()));
            }
        }
        let (train_loss, train_accuracy) = evaluate_set(&network, train_set).map_err(|e| ModelError::NonFiniteLoss {
            epoch,
            batch: 0,
            detail: e.to_string(),
        })?;
        let eval_loss = match eval_set {
            Some(e) if !e.is_empty() => Some(evaluate_set(&network, e)?.0),
            _ => None,
        };
        history.push(EpochRecord {
            epoch,
            train_loss,
            train_accuracy,
            eval_loss,
        });
    }
    Ok(TrainedModel {
        config: config.clone(),
        network,
        feature_hash: hash,
        history,
    })
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: ModelConfig,
    feature_hash: String,
    history: Vec<EpochRecord>,
}

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::CorruptCheckpoint(msg.into())
}

impl<T: Scalar> TrainedModel<T> {
    /// Five sigmoid probabilities; refuses inputs from another feature model.
    pub fn predict(&self, input: &EncodedInput<T>) -> Result<[T; NUM_GENRES], ModelError> {
        if input.feature_hash != self.feature_hash {
            return Err(ModelError::HashMismatch {
                expected: self.feature_hash.clone(),
                found: input.feature_hash.clone(),
            });
        }
        let out = self.network.predict(&input.input)?;
        let mut probs = [T::zero(); NUM_GENRES];
        probs.copy_from_slice(out.as_slice());
        Ok(probs)
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        let header = serde_json::to_vec(&CheckpointHeader {
            config: self.config.clone(),
            feature_hash: self.feature_hash.clone(),
            history: self.history.clone(),
        })
        .map_err(io::Error::other)?;
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header);
        let params = self.network.params();
        buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for (name, p) in self.network.param_names().iter().zip(params) {
            buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(p.rows() as u32).to_le_bytes());
            buf.extend_from_slice(&(p.cols() as u32).to_le_bytes());
            for v in p.as_slice() {
                buf.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self, ModelError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(8)? != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = cur.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let len = cur.u32()? as usize;
        let header: CheckpointHeader =
            serde_json::from_slice(cur.take(len)?).map_err(|e| corrupt(format!("header: {e}")))?;
        let mut network: Network<T> = header
            .config
            .build()
            .map_err(|e| corrupt(format!("config: {e}")))?;
        let names = network.param_names();
        let count = cur.u32()? as usize;
        if count != names.len() {
            return Err(corrupt(format!("{count} tensors, architecture has {}", names.len())));
        }
        let mut values = Vec::with_capacity(count);
        for want in &names {
            let n = cur.u16()? as usize;
            let name = std::str::from_utf8(cur.take(n)?).map_err(|_| corrupt("tensor name is not UTF-8"))?;
            if name != want {
                return Err(corrupt(format!("tensor `{name}` where `{want}` was expected")));
            }
            let (rows, cols) = (cur.u32()? as usize, cur.u32()? as usize);
            let payload = cur.take(rows.checked_mul(cols).and_then(|n| n.checked_mul(4)).ok_or_else(|| corrupt("tensor too large"))?)?;
            let data = payload
                .chunks_exact(4)
                .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
                .collect();
            values.push(Tensor2::from_vec(rows, cols, data).map_err(|e| corrupt(e.to_string()))?);
        }
        if cur.pos != bytes.len() {
            return Err(corrupt("trailing bytes"));
        }
        network.load_params(values).map_err(|e| corrupt(e.to_string()))?;
        Ok(TrainedModel {
            config: header.config,
            network,
            feature_hash: header.feature_hash,
            history: header.history,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut buf = Vec::new();
        self.write_checkpoint(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::read_checkpoint(std::fs::File::open(path)?)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| corrupt("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ecnet_counts_reference_size() {
        let net = build_ecnet::<f32>(10395, 330).unwrap();
        assert_eq!(net.param_counts(), vec![665280, 12352, 0, 0, 337952, 165]);
        assert_eq!(net.total_params(), 1_015_749);
        let shapes: Vec<String> = net.output_shapes().iter().map(|s| s.to_string()).collect();
        assert_eq!(shapes, ["(330, 64)", "(330, 64)", "(165, 64)", "(10560,)", "(32,)", "(5,)"]);
    }

    #[test]
    fn ecnet_fused_config() {
        let specs = ModelConfig::ecnet(14172, 1661).layer_specs();
        let mut shape = InputSpec::Indices { len: 1661 }.shape();
        let mut counts = Vec::new();
        for s in &specs {
            counts.push(s.param_count(&shape));
            shape = s.output_shape(&shape).unwrap();
            if matches!(s, LayerSpec::Flatten) {
                assert_eq!(shape.elements(), 53120);
            }
        }
        assert_eq!(counts[0], 907_008);
        assert_eq!(counts[4], 1_699_872);
    }

    #[test]
    fn tfanet_counts() {
        let net = build_tfanet::<f32>(34684).unwrap();
        assert_eq!(net.param_counts(), vec![2219840, 0, 2080, 0, 165]);
        let tiny = build_tfanet::<f64>(1).unwrap();
        assert_eq!(tiny.param_counts(), vec![128, 0, 2080, 0, 165]);
        // zero input: output depends on biases only, which start at zero
        let out = tiny.predict(&NetInput::Features(Tensor2::zeros(1, 1))).unwrap();
        assert!(out.as_slice().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn minimal_ecnet_and_bad_configs() {
        let net = build_ecnet::<f64>(1, 2).unwrap();
        let out = net.predict(&NetInput::Indices(vec![0, 0])).unwrap();
        assert_eq!(out.len(), 5);
        assert!(out.as_slice().iter().all(|&p| p > 0.0 && p < 1.0));
        assert!(matches!(build_ecnet::<f64>(0, 5), Err(ModelError::InvalidConfig(_))));
        assert!(matches!(build_ecnet::<f64>(5, 1), Err(ModelError::InvalidConfig(_))));
        assert!(matches!(build_tfanet::<f64>(0), Err(ModelError::InvalidConfig(_))));
        let mut c = ModelConfig::ecnet(5, 5);
        c.kernel_width = 4;
        assert!(c.validate().is_err());
        c.kernel_width = 3;
        c.epochs = 0;
        assert!(c.validate().is_err());
    }

    const KEYWORDS: [&str; 5] = ["blast", "giggle", "scream", "kiss", "laser"];

    /// Twenty documents; each genre is signalled by its keyword.
    fn keyword_corpus() -> (Vec<Vec<String>>, Vec<LabelVector>) {
        let mut docs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20usize {
            let bits = [i % 2 == 0, i % 3 == 0, i % 4 == 1, i % 5 == 2, i % 7 == 3];
            let mut doc = vec!["movie".to_string(), "trailer".to_string()];
            for (g, &on) in bits.iter().enumerate() {
                if on {
                    doc.push(KEYWORDS[g].to_string());
                }
            }
            doc.push(["night", "city", "story"][i % 3].to_string());
            docs.push(doc);
            labels.push(LabelVector(bits));
        }
        (docs, labels)
    }

    fn small_ecnet_setup(epochs: usize) -> (ModelConfig, Dataset<f64>) {
        let (docs, labels) = keyword_corpus();
        let fm = FeatureModel::fit_vocabulary(&docs, 1, None).unwrap();
        let mut cfg = fm.model_config();
        cfg.epochs = epochs;
        cfg.batch_size = 4;
        cfg.seed = 11;
        (cfg, Dataset::encode(&fm, &docs, &labels))
    }

    #[test]
    fn overfits_keyword_corpus() {
        let (cfg, data) = small_ecnet_setup(200);
        let model = train(cfg.build().unwrap(), &data, None, &cfg).unwrap();
        let last = model.history.last().unwrap();
        assert_eq!(model.history.len(), 200);
        assert!(last.train_loss < 0.05, "final loss {}", last.train_loss);
        assert_eq!(last.train_accuracy, 1.0);
        let medians: Vec<f64> = model
            .history
            .chunks(20)
            .map(|w| {
                let mut v: Vec<f64> = w.iter().map(|r| r.train_loss).collect();
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                v[v.len() / 2]
            })
            .collect();
        assert!(medians.windows(2).all(|w| w[1] <= w[0]), "{medians:?}");
    }

    #[test]
    fn training_is_deterministic() {
        let (cfg, data) = small_ecnet_setup(3);
        let a = train(cfg.build().unwrap(), &data, Some(&data), &cfg).unwrap();
        let b = train(cfg.build().unwrap(), &data, Some(&data), &cfg).unwrap();
        assert_eq!(a.network.params(), b.network.params());
        assert_eq!(a.history, b.history);
        assert!(a.history[0].eval_loss.is_some());
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        let (cfg, data) = small_ecnet_setup(1);
        let empty = Dataset::<f64> { inputs: vec![], labels: vec![] };
        assert!(matches!(train(cfg.build().unwrap(), &empty, None, &cfg), Err(ModelError::EmptyInput)));
        let mut short = data.clone();
        short.labels.pop();
        assert!(matches!(train(cfg.build().unwrap(), &short, None, &cfg), Err(ModelError::ShapeMismatch(_))));
        let mut wrong = data.clone();
        wrong.inputs[3].input = NetInput::Indices(vec![1]);
        assert!(matches!(train(cfg.build().unwrap(), &wrong, None, &cfg), Err(ModelError::ShapeMismatch(_))));
    }

    #[test]
    fn predict_checks_hash_and_is_stable() {
        let (cfg, data) = small_ecnet_setup(2);
        let model = train(cfg.build().unwrap(), &data, None, &cfg).unwrap();
        let x = &data.inputs[0];
        let p = model.predict(x).unwrap();
        assert_eq!(p, model.predict(x).unwrap());
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        let mut other = x.clone();
        other.feature_hash = "0".repeat(64);
        assert!(matches!(model.predict(&other), Err(ModelError::HashMismatch { .. })));
    }

    #[test]
    fn tfanet_trains_on_tfidf_features() {
        let (docs, labels) = keyword_corpus();
        let fm = FeatureModel::fit_tfidf(&docs, 1, None).unwrap();
        let mut cfg = fm.model_config();
        cfg.epochs = 2;
        let data = Dataset::<f64>::encode(&fm, &docs, &labels);
        let model = train(cfg.build().unwrap(), &data, None, &cfg).unwrap();
        assert_eq!(model.history.len(), 2);
        assert_eq!(fm.kind(), ModelKind::Tfanet);
    }

    #[test]
    fn checkpoint_round_trip() {
        let (cfg, data) = small_ecnet_setup(2);
        let model = train(cfg.build().unwrap(), &data, None, &cfg).unwrap();
        let mut bytes = Vec::new();
        model.write_checkpoint(&mut bytes).unwrap();
        let back = TrainedModel::<f64>::read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(back.config, model.config);
        assert_eq!(back.feature_hash, model.feature_hash);
        assert_eq!(back.history, model.history);
        for x in &data.inputs {
            let (a, b) = (model.predict(x).unwrap(), back.predict(x).unwrap());
            for g in 0..NUM_GENRES {
                assert!((a[g] - b[g]).abs() < 1e-6);
            }
        }
        let mut again = Vec::new();
        back.write_checkpoint(&mut again).unwrap();
        assert_eq!(again, bytes);

        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(
            TrainedModel::<f64>::read_checkpoint(truncated),
            Err(ModelError::CorruptCheckpoint(_))
        ));
        let mut future = bytes.clone();
        future[8] = 9;
        assert!(matches!(
            TrainedModel::<f64>::read_checkpoint(future.as_slice()),
            Err(ModelError::VersionMismatch { found: 9, .. })
        ));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(
            TrainedModel::<f64>::read_checkpoint(magic.as_slice()),
            Err(ModelError::CorruptCheckpoint(_))
        ));
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("ECnet".parse::<ModelKind>().unwrap(), ModelKind::Ecnet);
        assert_eq!(ModelKind::Tfanet.to_string(), "tfanet");
        assert!("lstm".parse::<ModelKind>().is_err());
    }
}
