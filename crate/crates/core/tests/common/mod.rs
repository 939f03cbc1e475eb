//! Helpers shared by the integration suites: small random models,
//! brute-force oracles and a finite-difference gradient checker.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use sepll::data::{synth_dataset, MappingMatrix, MatchMatrix, SynthSpec};
use sepll::encoder::{EncoderConfig, FeatureVector, MlpEncoder};
use sepll::eval::metric_value;
use sepll::lf_engine::majority_vote;
use sepll::model::{backward_with, ModelConfig, SepLLParams};
use sepll::nn::{Activation, ParamSet};
use sepll::pipeline::Prepared;
use sepll::trainer::{init_params, predict_all, train, TrainConfig, TrainHistory};
use sepll::data::SplitName;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random sparse feature vector with at least one non-zero entry.
pub fn random_features<R: Rng>(dim: usize, rng: &mut R) -> FeatureVector {
    let mut entries = Vec::new();
    for j in 0..dim {
        if rng.random_bool(0.6) {
            entries.push((j, rng.random_range(-1.0..1.0)));
        }
    }
    if entries.is_empty() {
        entries.push((rng.random_range(0..dim), 0.5));
    }
    FeatureVector { dim, entries }
}

/// Mapping with every class owning at least one LF.
pub fn random_mapping<R: Rng>(c: usize, m: usize, rng: &mut R) -> MappingMatrix {
    assert!(m >= c);
    let mut class_of: Vec<usize> = (0..m).map(|j| if j < c { j } else { rng.random_range(0..c) }).collect();
    // shuffle so that low indices are not always one per class
    for i in (1..m).rev() {
        let k = rng.random_range(0..=i);
        class_of.swap(i, k);
    }
    MappingMatrix::new(class_of, c).unwrap()
}

pub fn random_matches<R: Rng>(n: usize, m: usize, density: f64, rng: &mut R) -> MatchMatrix {
    let rows = (0..n).map(|_| (0..m).filter(|_| rng.random_bool(density)).collect()).collect();
    MatchMatrix::from_rows(m, rows).unwrap()
}

/// Random probability rows: either a normalized match pattern or uniform.
pub fn random_targets<R: Rng>(n: usize, m: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let l = random_matches(n, m, 0.4, rng);
    sepll::data::build_targets(&l, true).unwrap().rows
}

pub fn small_model<R: Rng>(
    input_dim: usize,
    hidden: usize,
    d: usize,
    mapping: MappingMatrix,
    head_layers: usize,
    rng: &mut R,
) -> SepLLParams {
    let enc = MlpEncoder::new(
        input_dim,
        &EncoderConfig {
            hidden,
            dim: d,
            activation: Activation::Tanh,
            ..Default::default()
        },
        rng,
    );
    let cfg = ModelConfig {
        head_layers,
        head_hidden: hidden,
        head_activation: Activation::Tanh,
    };
    SepLLParams::new(enc, mapping, &cfg, rng)
}

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(analytic, numeric)` per parameter, in `tensors()` order.
    pub pairs: Vec<(f64, f64)>,
}

impl GradCheck {
    /// Largest `|a - n| - (rtol * max(|a|, |n|) + atol)`; non-positive when every entry passes.
    pub fn worst_excess(&self, rtol: f64, atol: f64) -> f64 {
        self.pairs
            .iter()
            .map(|&(a, n)| (a - n).abs() - (rtol * a.abs().max(n.abs()) + atol))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Central finite differences over every parameter against `backward_with`.
/// Relative error is `|a - n| / max(|a|, |n|, floor)`.
pub fn grad_check(
    params: &SepLLParams,
    xs: &[FeatureVector],
    targets: &[Vec<f64>],
    activation_l2: f64,
    step: f64,
    floor: f64,
) -> GradCheck {
    let refs: Vec<&FeatureVector> = xs.iter().collect();
    let (_, grads) = backward_with(params, &refs, targets, activation_l2).unwrap();
    let analytic: Vec<f64> = grads.tensors().iter().flat_map(|t| t.iter().copied()).collect();
    let loss_at = |p: &SepLLParams| backward_with(p, &refs, targets, activation_l2).unwrap().0;
    let mut probe = params.clone();
    let mut max_rel: f64 = 0.0;
    let mut pairs = Vec::with_capacity(analytic.len());
    let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    for (ti, &len) in shapes.iter().enumerate() {
        for i in 0..len {
            let orig = probe.tensors()[ti][i];
            probe.tensors_mut()[ti][i] = orig + step;
            let up = loss_at(&probe);
            probe.tensors_mut()[ti][i] = orig - step;
            let down = loss_at(&probe);
            probe.tensors_mut()[ti][i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[pairs.len()];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            max_rel = max_rel.max(rel);
            pairs.push((a, numeric));
        }
    }
    GradCheck {
        checked: pairs.len(),
        max_rel_error: max_rel,
        pairs,
    }
}

// ---- brute-force oracles -------------------------------------------------

/// Softmax without max subtraction; only for moderate logits.
pub fn naive_softmax(x: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// `-(1/n) Σ_i Σ_j P_ij ln Q_ij` over dense matrices.
pub fn naive_ce(q: &[Vec<f64>], p: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for i in 0..q.len() {
        for j in 0..q[i].len() {
            if p[i][j] > 0.0 {
                total -= p[i][j] * q[i][j].max(1e-12).ln();
            }
        }
    }
    total / q.len() as f64
}

/// `task · Tᵀ + lf` with the dense one-hot `T`.
pub fn naive_combine(task: &[f64], lf: &[f64], t_dense: &[Vec<u8>]) -> Vec<f64> {
    (0..lf.len())
        .map(|j| lf[j] + (0..task.len()).map(|k| task[k] * t_dense[j][k] as f64).sum::<f64>())
        .collect()
}

/// Classes that an exact majority vote may return for one row: the unique
/// winner, every tied class, or every class when nothing matched.
pub fn admissible_votes(row: &[bool], t_dense: &[Vec<u8>], c: usize) -> Vec<usize> {
    let mut votes = vec![0usize; c];
    for (j, &hit) in row.iter().enumerate() {
        if hit {
            for k in 0..c {
                votes[k] += t_dense[j][k] as usize;
            }
        }
    }
    let best = *votes.iter().max().unwrap();
    (0..c).filter(|&k| votes[k] == best).collect()
}

// ---- fixture runs ---------------------------------------------------------

pub struct FixtureRun {
    pub prepared: Prepared,
    pub params: SepLLParams,
    pub history: TrainHistory,
    pub test_accuracy: f64,
    pub mv_test_accuracy: f64,
}

pub fn prepare_fixture(spec: &SynthSpec, seed: u64, encoder: &EncoderConfig) -> Prepared {
    let set = synth_dataset(spec, seed).unwrap();
    Prepared::new(&set, &[], encoder).unwrap()
}

pub fn test_accuracy(prepared: &Prepared, params: &SepLLParams) -> f64 {
    let test = prepared.split(SplitName::Test);
    let gold = test.require_gold(SplitName::Test).unwrap();
    let preds = predict_all(params, &test.features).unwrap();
    metric_value(&preds, &gold, prepared.num_classes(), sepll::eval::Metric::Accuracy, 1).unwrap()
}

pub fn mv_accuracy(prepared: &Prepared, split: SplitName, seed: u64) -> f64 {
    let s = prepared.split(split);
    let gold = s.require_gold(split).unwrap();
    let preds = majority_vote(&s.matches, &prepared.mapping, seed).unwrap();
    metric_value(&preds, &gold, prepared.num_classes(), sepll::eval::Metric::Accuracy, 1).unwrap()
}

pub fn run_fixture(prepared: Prepared, encoder: &EncoderConfig, model: &ModelConfig, cfg: &TrainConfig) -> FixtureRun {
    let init = init_params(prepared.vocab.len(), &prepared.mapping, encoder, model, cfg.seed).unwrap();
    let (params, history) = train(&prepared.train_inputs().unwrap(), init, cfg).unwrap();
    let test_accuracy = test_accuracy(&prepared, &params);
    let mv_test_accuracy = mv_accuracy(&prepared, SplitName::Test, cfg.seed);
    FixtureRun {
        prepared,
        params,
        history,
        test_accuracy,
        mv_test_accuracy,
    }
}
