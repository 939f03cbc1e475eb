//! Two-branch model: a task head producing `c` class logits and an LF head
//! producing `m` LF logits, recombined through the LF-to-class mapping
//! `combined = task_logits · Tᵀ + lf_logits` and trained with cross-entropy
//! against the LF distribution. Class predictions read only the task head.

pub mod checkpoint;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::MappingMatrix;
use crate::encoder::{Encoder, FeatureVector, MlpEncoder};
use crate::error::{Error, Result};
use crate::nn::{Activation, Input, Mlp, MlpCache, ParamSet};

/// Lower bound applied to probabilities inside `ln`.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// 1 = affine heads, 2 = one hidden layer per head.
    pub head_layers: usize,
    pub head_hidden: usize,
    pub head_activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            head_layers: 1,
            head_hidden: 64,
            head_activation: Activation::Tanh,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        match self.head_layers {
            1 => Ok(()),
            2 if self.head_hidden > 0 => Ok(()),
            2 => Err(Error::Config("model.head_hidden must be positive for 2-layer heads".into())),
            n => Err(Error::Config(format!("model.head_layers must be 1 or 2, got {n}"))),
        }
    }

    fn dims(&self, d: usize, out: usize) -> Vec<usize> {
        if self.head_layers == 2 {
            vec![d, self.head_hidden, out]
        } else {
            vec![d, out]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SepLLParams<E = MlpEncoder> {
    pub encoder: E,
    /// `R^d -> R^c`
    pub task_head: Mlp,
    /// `R^d -> R^m`
    pub lf_head: Mlp,
    pub mapping: MappingMatrix,
}

impl<E: Encoder> SepLLParams<E> {
    pub fn new<R: Rng>(encoder: E, mapping: MappingMatrix, config: &ModelConfig, rng: &mut R) -> Self {
        let d = encoder.output_dim();
        let task_head = Mlp::new(&config.dims(d, mapping.c()), config.head_activation, rng);
        let lf_head = Mlp::new(&config.dims(d, mapping.m()), config.head_activation, rng);
        SepLLParams {
            encoder,
            task_head,
            lf_head,
            mapping,
        }
    }

    pub fn from_parts(encoder: E, task_head: Mlp, lf_head: Mlp, mapping: MappingMatrix) -> Result<Self> {
        let d = encoder.output_dim();
        if task_head.input_dim() != d || lf_head.input_dim() != d {
            return Err(Error::Data(format!("heads must read the encoder's {d}-dimensional output")));
        }
        if task_head.output_dim() != mapping.c() {
            return Err(Error::Data(format!(
                "task head has {} outputs for {} classes",
                task_head.output_dim(),
                mapping.c()
            )));
        }
        if lf_head.output_dim() != mapping.m() {
            return Err(Error::Data(format!(
                "LF dimension mismatch: LF head has {} outputs, mapping has {} LFs",
                lf_head.output_dim(),
                mapping.m()
            )));
        }
        Ok(SepLLParams {
            encoder,
            task_head,
            lf_head,
            mapping,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.mapping.c()
    }

    pub fn num_lfs(&self) -> usize {
        self.mapping.m()
    }

    pub fn zeros_like(&self) -> Self {
        SepLLParams {
            encoder: self.encoder.zeros_like(),
            task_head: self.task_head.zeros_like(),
            lf_head: self.lf_head.zeros_like(),
            mapping: self.mapping.clone(),
        }
    }
}

impl<E: Encoder> ParamSet for SepLLParams<E> {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.encoder.tensors();
        t.extend(self.task_head.tensors());
        t.extend(self.lf_head.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.encoder.tensors_mut();
        t.extend(self.task_head.tensors_mut());
        t.extend(self.lf_head.tensors_mut());
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardTrace {
    pub z: Vec<f64>,
    pub task_logits: Vec<f64>,
    pub lf_logits: Vec<f64>,
    pub combined_logits: Vec<f64>,
    /// Softmax of `combined_logits`.
    pub q: Vec<f64>,
    /// Softmax of `task_logits`.
    pub task_probs: Vec<f64>,
}

/// Softmax with max subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `task_logits · Tᵀ + lf_logits`: LF `j` receives the logit of its class.
pub fn combine(task_logits: &[f64], lf_logits: &[f64], mapping: &MappingMatrix) -> Vec<f64> {
    mapping
        .class_of()
        .iter()
        .zip(lf_logits)
        .map(|(&k, &l)| task_logits[k] + l)
        .collect()
}

/// `task_logits · Tᵀ` alone, i.e. the task path expressed in LF space.
pub fn map_task_logits(task_logits: &[f64], mapping: &MappingMatrix) -> Vec<f64> {
    mapping.class_of().iter().map(|&k| task_logits[k]).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

struct Cached<C> {
    trace: ForwardTrace,
    encoder: C,
    task: MlpCache,
    lf: MlpCache,
}

fn forward_cached<E: Encoder>(params: &SepLLParams<E>, x: &FeatureVector) -> Result<Cached<E::Cache>> {
    if x.dim != params.encoder.input_dim() {
        return Err(Error::Data(format!(
            "feature dimension {} does not match encoder input {}",
            x.dim,
            params.encoder.input_dim()
        )));
    }
    let (z, enc_cache) = params.encoder.forward(x);
    let task = params.task_head.forward(Input::Dense(&z));
    let lf = params.lf_head.forward(Input::Dense(&z));
    let task_logits = task.output().to_vec();
    let lf_logits = lf.output().to_vec();
    let combined_logits = combine(&task_logits, &lf_logits, &params.mapping);
    if combined_logits.iter().chain(&task_logits).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite logits".into()));
    }
    let q = softmax(&combined_logits);
    let task_probs = softmax(&task_logits);
    Ok(Cached {
        trace: ForwardTrace {
            z,
            task_logits,
            lf_logits,
            combined_logits,
            q,
            task_probs,
        },
        encoder: enc_cache,
        task,
        lf,
    })
}

pub fn forward<E: Encoder>(params: &SepLLParams<E>, features: &FeatureVector) -> Result<ForwardTrace> {
    forward_cached(params, features).map(|c| c.trace)
}

/// Batch-mean cross-entropy `-(1/n) Σ_i Σ_j P_ij ln Q_ij`.
pub fn ce_loss<Q: AsRef<[f64]>, P: AsRef<[f64]>>(q_batch: &[Q], targets: &[P]) -> Result<f64> {
    if q_batch.len() != targets.len() {
        return Err(Error::Data(format!(
            "{} predictions for {} target rows",
            q_batch.len(),
            targets.len()
        )));
    }
    if q_batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let mut total = 0.0;
    for (q, p) in q_batch.iter().zip(targets) {
        let (q, p) = (q.as_ref(), p.as_ref());
        if q.len() != p.len() {
            return Err(Error::Data(format!("prediction width {} vs target width {}", q.len(), p.len())));
        }
        total += row_cross_entropy(p, q);
    }
    Ok(total / q_batch.len() as f64)
}

/// `-Σ_j p_j ln max(q_j, PROB_CLAMP)` for one row.
pub fn row_cross_entropy(p: &[f64], q: &[f64]) -> f64 {
    -p.iter()
        .zip(q)
        .filter(|(&pj, _)| pj != 0.0)
        .map(|(&pj, &qj)| pj * qj.max(PROB_CLAMP).ln())
        .sum::<f64>()
}

pub fn task_predict<E: Encoder>(params: &SepLLParams<E>, features: &FeatureVector) -> Result<usize> {
    let trace = forward(params, features)?;
    Ok(argmax(&trace.task_logits))
}

/// Loss and exact gradients of the batch-mean cross-entropy.
pub fn backward<E: Encoder, P: AsRef<[f64]>>(
    params: &SepLLParams<E>,
    features: &[&FeatureVector],
    targets: &[P],
) -> Result<(f64, SepLLParams<E>)> {
    backward_with(params, features, targets, 0.0)
}

/// Like [`backward`], adding `lf_activation_l2 · mean_i ‖f_L(z_i)‖²` to the loss.
pub fn backward_with<E: Encoder, P: AsRef<[f64]>>(
    params: &SepLLParams<E>,
    features: &[&FeatureVector],
    targets: &[P],
    lf_activation_l2: f64,
) -> Result<(f64, SepLLParams<E>)> {
    if features.len() != targets.len() {
        return Err(Error::Data(format!(
            "{} samples for {} target rows",
            features.len(),
            targets.len()
        )));
    }
    if features.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let m = params.num_lfs();
    let c = params.num_classes();
    let scale = 1.0 / features.len() as f64;
    let class_of = params.mapping.class_of();
    let mut grads = params.zeros_like();
    let mut loss = 0.0;

    for (x, p) in features.iter().zip(targets) {
        let p = p.as_ref();
        if p.len() != m {
            return Err(Error::Data(format!("target width {} vs {m} LFs", p.len())));
        }
        let cached = forward_cached(params, x)?;
        let tr = &cached.trace;
        loss += row_cross_entropy(p, &tr.q) * scale;

        // d loss / d combined = (q - P) / n
        let d_combined: Vec<f64> = tr.q.iter().zip(p).map(|(q, p)| (q - p) * scale).collect();
        let mut d_task = vec![0.0; c];
        for (j, &g) in d_combined.iter().enumerate() {
            d_task[class_of[j]] += g;
        }
        let mut d_lf = d_combined;
        if lf_activation_l2 != 0.0 {
            loss += lf_activation_l2 * scale * tr.lf_logits.iter().map(|v| v * v).sum::<f64>();
            for (g, &v) in d_lf.iter_mut().zip(&tr.lf_logits) {
                *g += 2.0 * lf_activation_l2 * scale * v;
            }
        }

        let z = Input::Dense(&tr.z);
        let mut d_z = params.task_head.backward(z, &cached.task, &d_task, &mut grads.task_head);
        let d_z_lf = params.lf_head.backward(z, &cached.lf, &d_lf, &mut grads.lf_head);
        for (a, b) in d_z.iter_mut().zip(&d_z_lf) {
            *a += b;
        }
        params.encoder.backward(x, &cached.encoder, &d_z, &mut grads.encoder);
    }

    if !loss.is_finite() || !grads.all_finite() {
        return Err(Error::Numerical("non-finite loss or gradient".into()));
    }
    Ok((loss, grads))
}
