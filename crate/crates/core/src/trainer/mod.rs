//! AdamW optimization with warmup, the information-routing strategies
//! (weight decay, LF-path L2, noise injection, unlabeled rows) and
//! early stopping on a dev metric.

pub mod ablation;

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{build_targets, MappingMatrix, MatchMatrix};
use crate::encoder::{Encoder, EncoderConfig, FeatureVector, MlpEncoder};
use crate::error::{Error, Result};
use crate::eval::{metric_value, Metric};
use crate::model::{backward_with, task_predict, ModelConfig, SepLLParams};
use crate::nn::ParamSet;
use crate::rng::{stream_rng, Stream};

pub use ablation::{ablation_csv, run_ablation, AblationReport, AblationRow, Variant};

/// What the LF-path L2 term penalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum L2Target {
    /// `l2_lf · ‖θ_lf_head‖²`, added once per optimizer step.
    #[default]
    Parameters,
    /// `l2_lf · mean_i ‖f_L(z_i)‖²` over the batch.
    Activations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub l2_lf: f64,
    pub l2_lf_target: L2Target,
    pub noise_lambda: f64,
    pub use_unlabeled: bool,
    pub max_epochs: usize,
    /// Epochs without dev improvement before stopping; 0 disables early stopping.
    pub patience: usize,
    pub seed: u64,
    /// Use binary F1 of `positive_class` instead of accuracy on dev.
    pub imbalanced: bool,
    pub positive_class: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 16,
            warmup_steps: 0,
            weight_decay: 0.01,
            l2_lf: 0.1,
            l2_lf_target: L2Target::Parameters,
            noise_lambda: 0.1,
            use_unlabeled: true,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            imbalanced: false,
            positive_class: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("weight_decay", self.weight_decay),
            ("l2_lf", self.l2_lf),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("train.{name} must be a finite value >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.noise_lambda) {
            return Err(Error::Config(format!(
                "train.noise_lambda must lie in [0, 1], got {}",
                self.noise_lambda
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("train.max_epochs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn metric(&self) -> Metric {
        if self.imbalanced {
            Metric::BinaryF1
        } else {
            Metric::Accuracy
        }
    }
}

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// AdamW moment accumulators, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new<P: ParamSet>(params: &P) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        OptimizerState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One AdamW step with bias correction and decoupled weight decay:
/// `θ ← θ − lr·m̂/(√v̂+ε) − lr·wd·θ`.
pub fn adamw_step<P: ParamSet>(
    params: &mut P,
    grads: &P,
    state: &mut OptimizerState,
    weight_decay: f64,
    lr: f64,
) -> Result<()> {
    let g_all = grads.tensors();
    let mut p_all = params.tensors_mut();
    if p_all.len() != g_all.len()
        || p_all.len() != state.m.len()
        || p_all.iter().zip(&g_all).zip(&state.m).any(|((p, g), m)| p.len() != g.len() || p.len() != m.len())
    {
        return Err(Error::Data("optimizer state, parameters and gradients differ in shape".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    let mut finite = true;
    for (((p, g), m), v) in p_all.iter_mut().zip(&g_all).zip(&mut state.m).zip(&mut state.v) {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            let theta = p[i];
            let next = theta - lr * m_hat / (v_hat.sqrt() + EPSILON) - lr * weight_decay * theta;
            finite &= next.is_finite();
            p[i] = next;
        }
    }
    if finite {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite parameter update at step {}", state.step)))
    }
}

/// Linear warmup from 0 to `base_lr` over `warmup_steps`, constant afterwards.
pub fn lr_schedule(step: usize, warmup_steps: usize, base_lr: f64) -> f64 {
    if step >= warmup_steps {
        base_lr
    } else {
        base_lr * step as f64 / warmup_steps as f64
    }
}

/// Adds "hallucinated" matches: for each class a sample already has a match
/// in, every unmatched LF of that class fires with probability `lambda`.
pub fn inject_noise<R: Rng>(l: &MatchMatrix, t: &MappingMatrix, lambda: f64, rng: &mut R) -> Result<MatchMatrix> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("noise lambda must lie in [0, 1], got {lambda}")));
    }
    if l.m() != t.m() {
        return Err(Error::Data(format!("L has {} columns, mapping has {} LFs", l.m(), t.m())));
    }
    if lambda == 0.0 {
        return Ok(l.clone());
    }
    let by_class = t.lfs_by_class();
    let class_of = t.class_of();
    let mut rows = Vec::with_capacity(l.n());
    for row in l.rows() {
        let mut classes: Vec<usize> = row.iter().map(|&j| class_of[j]).collect();
        classes.sort_unstable();
        classes.dedup();
        let mut out = row.to_vec();
        for k in classes {
            for &j in &by_class[k] {
                if row.binary_search(&j).is_err() && rng.random_bool(lambda) {
                    out.push(j);
                }
            }
        }
        out.sort_unstable();
        rows.push(out);
    }
    MatchMatrix::from_rows(l.m(), rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_metric: f64,
    /// Learning rate at the last step of the epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_metric: f64,
}

impl TrainHistory {
    /// CSV with header `epoch,train_loss,dev_metric,lr`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for e in &self.epochs {
            out.serialize(e).map_err(crate::eval::csv_err)?;
        }
        if self.epochs.is_empty() {
            out.write_record(["epoch", "train_loss", "dev_metric", "lr"])
                .map_err(crate::eval::csv_err)?;
        }
        out.flush().map_err(|e| Error::Data(format!("csv: {e}")))
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Data(e.to_string()))
    }
}

/// Everything the optimization loop reads.
#[derive(Debug, Clone)]
pub struct TrainInputs<'a> {
    pub train_features: &'a [FeatureVector],
    pub train_matches: &'a MatchMatrix,
    pub dev_features: &'a [FeatureVector],
    pub dev_gold: Vec<usize>,
    pub mapping: &'a MappingMatrix,
}

impl TrainInputs<'_> {
    fn validate(&self) -> Result<()> {
        if self.dev_features.is_empty() {
            return Err(Error::Data("dev split required for early stopping".into()));
        }
        if self.dev_features.len() != self.dev_gold.len() {
            return Err(Error::Data("dev features and gold labels differ in length".into()));
        }
        if self.train_features.len() != self.train_matches.n() {
            return Err(Error::Data(format!(
                "{} train samples but L has {} rows",
                self.train_features.len(),
                self.train_matches.n()
            )));
        }
        if self.train_matches.m() != self.mapping.m() {
            return Err(Error::Data(format!(
                "LF dimension mismatch: L has {} columns, mapping has {} LFs",
                self.train_matches.m(),
                self.mapping.m()
            )));
        }
        Ok(())
    }
}

/// Fresh parameters drawn from the `init` stream of `seed`.
pub fn init_params(
    input_dim: usize,
    mapping: &MappingMatrix,
    encoder: &EncoderConfig,
    model: &ModelConfig,
    seed: u64,
) -> Result<SepLLParams> {
    encoder.validate()?;
    model.validate()?;
    let mut rng = stream_rng(seed, Stream::Init);
    let enc = MlpEncoder::new(input_dim, encoder, &mut rng);
    Ok(SepLLParams::new(enc, mapping.clone(), model, &mut rng))
}

/// Task-head predictions for every sample, in order.
pub fn predict_all<E: Encoder>(params: &SepLLParams<E>, features: &[FeatureVector]) -> Result<Vec<usize>> {
    features.par_iter().map(|x| task_predict(params, x)).collect()
}

fn dev_metric<E: Encoder>(params: &SepLLParams<E>, inputs: &TrainInputs<'_>, cfg: &TrainConfig) -> Result<f64> {
    let preds = predict_all(params, inputs.dev_features)?;
    metric_value(&preds, &inputs.dev_gold, params.num_classes(), cfg.metric(), cfg.positive_class)
}

fn diverged(epoch: usize, err: Error, history: &TrainHistory) -> Error {
    match err {
        Error::Numerical(message) => Error::Diverged {
            epoch,
            message,
            history: Box::new(history.clone()),
        },
        other => other,
    }
}

/// Trains from `params` and returns the best-dev parameters with the history.
pub fn train<E: Encoder>(
    inputs: &TrainInputs<'_>,
    mut params: SepLLParams<E>,
    cfg: &TrainConfig,
) -> Result<(SepLLParams<E>, TrainHistory)> {
    cfg.validate()?;
    inputs.validate()?;
    if params.mapping != *inputs.mapping {
        return Err(Error::Data("model mapping differs from the training mapping".into()));
    }
    if cfg.imbalanced && params.num_classes() != 2 {
        return Err(Error::Config("train.imbalanced needs a binary task".into()));
    }
    let mut shuffle_rng = stream_rng(cfg.seed, Stream::Shuffle);
    let mut noise_rng = stream_rng(cfg.seed, Stream::Noise);
    let mut state = OptimizerState::new(&params);
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        best_dev_metric: f64::NEG_INFINITY,
    };
    let mut best = params.clone();
    let mut since_best = 0;
    let mut step = 0usize;
    let activation_l2 = match cfg.l2_lf_target {
        L2Target::Activations => cfg.l2_lf,
        L2Target::Parameters => 0.0,
    };

    for epoch in 1..=cfg.max_epochs {
        let noisy = inject_noise(inputs.train_matches, inputs.mapping, cfg.noise_lambda, &mut noise_rng)?;
        let targets = build_targets(&noisy, cfg.use_unlabeled)?;
        let mut order = targets.training_rows.clone();
        if order.is_empty() {
            return Err(Error::Data("no training rows: nothing matched and unlabeled rows are disabled".into()));
        }
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut shuffle_rng);

        let mut loss_sum = 0.0;
        let mut lr = lr_schedule(step, cfg.warmup_steps, cfg.learning_rate);
        for batch in order.chunks(cfg.batch_size) {
            lr = lr_schedule(step, cfg.warmup_steps, cfg.learning_rate);
            let xs: Vec<&FeatureVector> = batch.iter().map(|&i| &inputs.train_features[i]).collect();
            let ps: Vec<&[f64]> = batch.iter().map(|&i| targets.row(i)).collect();
            let (mut loss, mut grads) =
                backward_with(&params, &xs, &ps, activation_l2).map_err(|e| diverged(epoch, e, &history))?;
            if cfg.l2_lf_target == L2Target::Parameters && cfg.l2_lf > 0.0 {
                loss += cfg.l2_lf * params.lf_head.sum_squares();
                for (g, p) in grads.lf_head.tensors_mut().into_iter().zip(params.lf_head.tensors()) {
                    for (gi, pi) in g.iter_mut().zip(p) {
                        *gi += 2.0 * cfg.l2_lf * pi;
                    }
                }
            }
            if !loss.is_finite() {
                return Err(diverged(epoch, Error::Numerical(format!("loss is {loss}")), &history));
            }
            loss_sum += loss * batch.len() as f64;
            adamw_step(&mut params, &grads, &mut state, cfg.weight_decay, lr)
                .map_err(|e| diverged(epoch, e, &history))?;
            step += 1;
        }

        let metric = dev_metric(&params, inputs, cfg).map_err(|e| diverged(epoch, e, &history))?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            dev_metric: metric,
            lr,
        });
        if metric > history.best_dev_metric {
            history.best_dev_metric = metric;
            history.best_epoch = epoch;
            best = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok((best, history))
}
