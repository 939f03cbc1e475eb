//! Text featurization (TF-IDF over a fitted vocabulary) and the latent
//! encoder that maps feature vectors to `z` in `R^d`.

pub mod checkpoint;

use std::collections::{HashMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Dense, Input, Mlp, MlpCache, ParamSet};

/// Splits on every non-alphanumeric character.
pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| if lowercase { t.to_lowercase() } else { t.to_string() })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabConfig {
    /// Zero keeps every token that passes `min_df`.
    pub max_features: usize,
    pub min_df: usize,
    pub lowercase: bool,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig {
            max_features: 5000,
            min_df: 1,
            lowercase: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    df: Vec<usize>,
    index: HashMap<String, usize>,
    n_docs: usize,
    lowercase: bool,
}

impl Vocabulary {
    /// Ranks tokens by document frequency (descending), then lexicographically.
    pub fn fit<S: AsRef<str>>(texts: &[S], config: &VocabConfig) -> Result<Self> {
        if texts.is_empty() {
            return Err(Error::Data("cannot fit a vocabulary on an empty corpus".into()));
        }
        let mut df: HashMap<String, usize> = HashMap::new();
        for text in texts {
            let unique: HashSet<String> = tokenize(text.as_ref(), config.lowercase).into_iter().collect();
            for tok in unique {
                *df.entry(tok).or_default() += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = df.into_iter().filter(|(_, d)| *d >= config.min_df).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        if config.max_features > 0 {
            ranked.truncate(config.max_features);
        }
        let (tokens, df): (Vec<String>, Vec<usize>) = ranked.into_iter().unzip();
        Self::from_parts(tokens, df, texts.len(), config.lowercase)
    }

    pub fn from_parts(tokens: Vec<String>, df: Vec<usize>, n_docs: usize, lowercase: bool) -> Result<Self> {
        if tokens.len() != df.len() {
            return Err(Error::Data("vocabulary tokens and counts differ in length".into()));
        }
        let index: HashMap<String, usize> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if index.len() != tokens.len() {
            return Err(Error::Data("vocabulary contains duplicate tokens".into()));
        }
        Ok(Vocabulary {
            tokens,
            df,
            index,
            n_docs,
            lowercase,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn document_frequencies(&self) -> &[usize] {
        &self.df
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn lowercase(&self) -> bool {
        self.lowercase
    }

    /// Smoothed inverse document frequency `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, index: usize) -> f64 {
        ((1.0 + self.n_docs as f64) / (1.0 + self.df[index] as f64)).ln() + 1.0
    }
}

/// Sparse, L2-normalized TF-IDF vector. Entries are sorted by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
}

impl FeatureVector {
    pub fn zeros(dim: usize) -> Self {
        FeatureVector {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.dim];
        for &(j, v) in &self.entries {
            d[j] = v;
        }
        d
    }
}

pub fn featurize(text: &str, vocab: &Vocabulary) -> FeatureVector {
    let mut counts: HashMap<usize, f64> = HashMap::new();
    for tok in tokenize(text, vocab.lowercase) {
        if let Some(j) = vocab.get(&tok) {
            *counts.entry(j).or_default() += 1.0;
        }
    }
    let mut entries: Vec<(usize, f64)> = counts.into_iter().map(|(j, tf)| (j, tf * vocab.idf(j))).collect();
    entries.sort_unstable_by_key(|&(j, _)| j);
    let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, v) in &mut entries {
            *v /= norm;
        }
    }
    FeatureVector {
        dim: vocab.len(),
        entries,
    }
}

/// A differentiable map from feature vectors to latent vectors.
///
/// Gradients are accumulated into a value of the same type, obtained from
/// [`Encoder::zeros_like`].
pub trait Encoder: Clone + Send + Sync + ParamSet {
    type Cache: Send;

    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn forward(&self, x: &FeatureVector) -> (Vec<f64>, Self::Cache);
    fn backward(&self, x: &FeatureVector, cache: &Self::Cache, grad_z: &[f64], grads: &mut Self);
    fn zeros_like(&self) -> Self;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub max_features: usize,
    pub min_df: usize,
    pub lowercase: bool,
    /// Width of the hidden layer; zero makes the encoder a single affine map.
    pub hidden: usize,
    pub dim: usize,
    pub activation: Activation,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        let v = VocabConfig::default();
        EncoderConfig {
            max_features: v.max_features,
            min_df: v.min_df,
            lowercase: v.lowercase,
            hidden: 256,
            dim: 64,
            activation: Activation::Tanh,
        }
    }
}

impl EncoderConfig {
    pub fn vocab(&self) -> VocabConfig {
        VocabConfig {
            max_features: self.max_features,
            min_df: self.min_df,
            lowercase: self.lowercase,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("encoder.dim must be positive".into()));
        }
        if self.min_df == 0 {
            return Err(Error::Config("encoder.min_df must be at least 1".into()));
        }
        Ok(())
    }
}

/// TF-IDF features through a small MLP: hidden layers use the configured
/// nonlinearity, the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpEncoder {
    net: Mlp,
}

impl MlpEncoder {
    pub fn new<R: Rng>(input_dim: usize, config: &EncoderConfig, rng: &mut R) -> Self {
        let mut dims = vec![input_dim];
        if config.hidden > 0 {
            dims.push(config.hidden);
        }
        dims.push(config.dim);
        MlpEncoder {
            net: Mlp::new(&dims, config.activation, rng),
        }
    }

    pub fn from_mlp(net: Mlp) -> Self {
        MlpEncoder { net }
    }

    /// Single linear layer copying input coordinate `i` to output `i`
    /// (truncating or zero-padding to `d`).
    pub fn identity(input_dim: usize, d: usize) -> Self {
        let mut layer = Dense::zeros(input_dim, d);
        for i in 0..input_dim.min(d) {
            layer.weights[i * input_dim + i] = 1.0;
        }
        MlpEncoder {
            net: Mlp {
                layers: vec![layer],
                activation: Activation::Identity,
            },
        }
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }
}

impl ParamSet for MlpEncoder {
    fn tensors(&self) -> Vec<&[f64]> {
        self.net.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.net.tensors_mut()
    }
}

impl Encoder for MlpEncoder {
    type Cache = MlpCache;

    fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.net.output_dim()
    }

    fn forward(&self, x: &FeatureVector) -> (Vec<f64>, MlpCache) {
        let cache = self.net.forward(Input::Sparse(&x.entries));
        (cache.output().to_vec(), cache)
    }

    fn backward(&self, x: &FeatureVector, cache: &MlpCache, grad_z: &[f64], grads: &mut Self) {
        self.net.backward(Input::Sparse(&x.entries), cache, grad_z, &mut grads.net);
    }

    fn zeros_like(&self) -> Self {
        MlpEncoder {
            net: self.net.zeros_like(),
        }
    }
}

/// `z = h(x)`, rejecting mismatched dimensions and non-finite output.
pub fn encode<E: Encoder>(features: &FeatureVector, params: &E) -> Result<Vec<f64>> {
    if features.dim != params.input_dim() || features.entries.iter().any(|&(j, _)| j >= params.input_dim()) {
        return Err(Error::Data(format!(
            "feature dimension {} does not match encoder input {}",
            features.dim,
            params.input_dim()
        )));
    }
    let (z, _) = params.forward(features);
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("encoder produced a non-finite output".into()));
    }
    Ok(z)
}
