//! Synthetic weak-supervision datasets with a known ground truth.
//!
//! Each sample gets a uniformly drawn class and a short text mixing
//! class-specific words with shared filler words. Every original LF fires
//! independently with probability `lf_coverage`; when it fires it emits the
//! true class with probability `lf_accuracy` and a uniformly chosen wrong
//! class otherwise. A firing LF also leaves a trigger word `rule{j}v{k}` in
//! the text, so the weak labels are recoverable by keyword rules (see
//! [`synth_lfs`]).

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Sample, Split, SplitSet, ABSTAIN};
use crate::error::{Error, Result};
use crate::lf_engine::{LfSpec, RuleKind};
use crate::rng::{stream_rng, Stream};

const CONTENT_TOKENS: usize = 8;
const CLASS_VOCAB: usize = 30;
const SHARED_VOCAB: usize = 60;
const CLASS_WORD_RATE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub classes: usize,
    pub lfs_per_class: usize,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub lf_accuracy: f64,
    pub lf_coverage: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: 2,
            lfs_per_class: 3,
            n_train: 2000,
            n_dev: 500,
            n_test: 500,
            lf_accuracy: 0.85,
            lf_coverage: 0.5,
        }
    }
}

impl SynthSpec {
    pub fn num_lfs(&self) -> usize {
        self.classes * self.lfs_per_class
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config("synthetic data needs at least 2 classes".into()));
        }
        if self.lfs_per_class < 1 {
            return Err(Error::Config("synthetic data needs at least 1 LF per class".into()));
        }
        for (name, v) in [("lf_accuracy", self.lf_accuracy), ("lf_coverage", self.lf_coverage)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

pub fn synth_dataset(spec: &SynthSpec, seed: u64) -> Result<SplitSet> {
    spec.validate()?;
    let mut rng = stream_rng(seed, Stream::Synth);
    let mut next_id = 0u64;
    let mut make_split = |n: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        let mut split = Split::default();
        for _ in 0..n {
            let (sample, weak) = synth_sample(spec, next_id, rng);
            next_id += 1;
            split.samples.push(sample);
            split.weak_labels.push(weak);
        }
        split
    };
    let train = make_split(spec.n_train, &mut rng);
    let dev = make_split(spec.n_dev, &mut rng);
    let test = make_split(spec.n_test, &mut rng);
    Ok(SplitSet {
        train,
        dev,
        test,
        class_names: (0..spec.classes).map(|k| format!("class{k}")).collect(),
        num_lfs: spec.num_lfs(),
    })
}

fn synth_sample<R: Rng>(spec: &SynthSpec, id: u64, rng: &mut R) -> (Sample, Vec<i64>) {
    let c = spec.classes;
    let label = rng.random_range(0..c);
    let mut tokens: Vec<String> = (0..CONTENT_TOKENS)
        .map(|_| {
            if rng.random::<f64>() < CLASS_WORD_RATE {
                format!("topic{label}w{}", rng.random_range(0..CLASS_VOCAB))
            } else {
                format!("common{}", rng.random_range(0..SHARED_VOCAB))
            }
        })
        .collect();

    let mut weak = vec![ABSTAIN; spec.num_lfs()];
    for (lf, slot) in weak.iter_mut().enumerate() {
        if rng.random::<f64>() >= spec.lf_coverage {
            continue;
        }
        let emitted = if rng.random::<f64>() < spec.lf_accuracy {
            label
        } else {
            // uniform over the c - 1 wrong classes
            let k = rng.random_range(0..c - 1);
            if k >= label {
                k + 1
            } else {
                k
            }
        };
        *slot = emitted as i64;
        tokens.push(trigger_word(lf, emitted));
    }
    tokens.shuffle(rng);

    (
        Sample {
            id,
            text: tokens.join(" "),
            gold_label: Some(label),
        },
        weak,
    )
}

fn trigger_word(lf: usize, class: usize) -> String {
    format!("rule{lf}v{class}")
}

/// Keyword LFs that reproduce the synthetic weak labels as one-class rules,
/// one per (original LF, class) pair in the same column order as
/// [`super::to_one_class_lfs`] before dropping silent columns.
pub fn synth_lfs(spec: &SynthSpec) -> Vec<LfSpec> {
    let mut out = Vec::with_capacity(spec.num_lfs() * spec.classes);
    for lf in 0..spec.num_lfs() {
        for k in 0..spec.classes {
            out.push(LfSpec {
                kind: RuleKind::Keyword,
                terms: vec![trigger_word(lf, k)],
                pattern: None,
                class: format!("class{k}"),
            });
        }
    }
    out
}
