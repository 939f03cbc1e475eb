//! Turns a loaded dataset into model inputs: TF-IDF features fitted on the
//! train split, and match matrices either from LF rules or from the
//! dataset's own weak labels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{to_one_class_lfs, MappingMatrix, MatchMatrix, Provenance, SplitName, SplitSet};
use crate::encoder::{featurize, EncoderConfig, FeatureVector, Vocabulary};
use crate::error::{Error, Result};
use crate::lf_engine::{apply_lfs, compile_lfs, mapping_for, LfSpec};
use crate::trainer::TrainInputs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LfSource {
    /// Keyword/regex rules from the config.
    Rules,
    /// Weak-label columns shipped with the dataset, split per emitted class.
    WeakLabels,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSplit {
    pub features: Vec<FeatureVector>,
    pub matches: MatchMatrix,
    pub gold: Vec<Option<usize>>,
}

impl PreparedSplit {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Gold labels, failing if any sample lacks one.
    pub fn require_gold(&self, split: SplitName) -> Result<Vec<usize>> {
        self.gold
            .iter()
            .enumerate()
            .map(|(i, g)| g.ok_or_else(|| Error::Data(format!("{split} sample {i} has no gold label"))))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub class_names: Vec<String>,
    pub vocab: Vocabulary,
    pub mapping: MappingMatrix,
    /// Filled only for [`LfSource::WeakLabels`].
    pub provenance: Vec<Provenance>,
    pub source: LfSource,
    /// Indexed by `SplitName::index()`.
    pub splits: [PreparedSplit; 3],
}

/// Match matrices for all three splits plus the shared mapping.
pub fn match_matrices(set: &SplitSet, lfs: &[LfSpec]) -> Result<([MatchMatrix; 3], MappingMatrix, Vec<Provenance>)> {
    if lfs.is_empty() {
        let one = to_one_class_lfs(set)?;
        if one.mapping.m() == 0 {
            return Err(Error::Data("no LF rules configured and the dataset's weak labels never fire".into()));
        }
        return Ok((one.matches, one.mapping, one.provenance));
    }
    let compiled = compile_lfs(lfs, &set.class_names)?;
    let mapping = mapping_for(&compiled, set.num_classes())?;
    let l = [
        apply_lfs(&compiled, &set.train.samples)?,
        apply_lfs(&compiled, &set.dev.samples)?,
        apply_lfs(&compiled, &set.test.samples)?,
    ];
    Ok((l, mapping, Vec::new()))
}

impl Prepared {
    pub fn new(set: &SplitSet, lfs: &[LfSpec], encoder: &EncoderConfig) -> Result<Self> {
        encoder.validate()?;
        let vocab = Vocabulary::fit(&set.train.texts(), &encoder.vocab())?;
        Self::with_vocab(set, lfs, vocab)
    }

    /// Reuses an existing vocabulary, e.g. the one stored in a checkpoint.
    pub fn with_vocab(set: &SplitSet, lfs: &[LfSpec], vocab: Vocabulary) -> Result<Self> {
        set.validate()?;
        let (matches, mapping, provenance) = match_matrices(set, lfs)?;
        let [l_train, l_dev, l_test] = matches;
        let make = |name: SplitName, matches: MatchMatrix| {
            let split = set.split(name);
            PreparedSplit {
                features: split.samples.par_iter().map(|s| featurize(&s.text, &vocab)).collect(),
                matches,
                gold: split.gold(),
            }
        };
        let splits = [
            make(SplitName::Train, l_train),
            make(SplitName::Dev, l_dev),
            make(SplitName::Test, l_test),
        ];
        Ok(Prepared {
            class_names: set.class_names.clone(),
            vocab,
            mapping,
            provenance,
            source: if lfs.is_empty() {
                LfSource::WeakLabels
            } else {
                LfSource::Rules
            },
            splits,
        })
    }

    pub fn split(&self, name: SplitName) -> &PreparedSplit {
        &self.splits[name.index()]
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn train_inputs(&self) -> Result<TrainInputs<'_>> {
        let dev = self.split(SplitName::Dev);
        if dev.is_empty() {
            return Err(Error::Data("dev split required for early stopping".into()));
        }
        let train = self.split(SplitName::Train);
        Ok(TrainInputs {
            train_features: &train.features,
            train_matches: &train.matches,
            dev_features: &dev.features,
            dev_gold: dev.require_gold(SplitName::Dev)?,
            mapping: &self.mapping,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, synth_lfs, SynthSpec};

    fn small() -> SynthSpec {
        SynthSpec {
            n_train: 60,
            n_dev: 20,
            n_test: 20,
            ..Default::default()
        }
    }

    #[test]
    fn rules_reproduce_the_weak_labels() {
        let spec = small();
        let set = synth_dataset(&spec, 2).unwrap();
        let from_rules = Prepared::new(&set, &synth_lfs(&spec), &EncoderConfig::default()).unwrap();
        let from_weak = Prepared::new(&set, &[], &EncoderConfig::default()).unwrap();
        assert_eq!(from_rules.source, LfSource::Rules);
        assert_eq!(from_weak.source, LfSource::WeakLabels);
        for name in SplitName::ALL {
            let a = &from_rules.split(name).matches;
            assert_eq!(a.n(), set.split(name).len());
            // every weak label corresponds to a rule hit on the same sample
            for (i, row) in set.split(name).weak_labels.iter().enumerate() {
                let fired = row.iter().filter(|&&v| v >= 0).count();
                assert_eq!(a.row_sum(i), fired);
            }
        }
    }

    #[test]
    fn missing_dev_is_rejected() {
        let mut set = synth_dataset(&small(), 2).unwrap();
        set.dev = Default::default();
        let p = Prepared::new(&set, &[], &EncoderConfig::default()).unwrap();
        let err = p.train_inputs().unwrap_err();
        assert!(err.to_string().contains("dev split required for early stopping"));
    }
}
