//! Dataset representation, weak-label conversion and LF target distributions.

mod io;
mod matrix;
mod synth;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_dataset, save_dataset, DataFormat};
pub use matrix::{MappingMatrix, MatchMatrix};
pub use synth::{synth_dataset, synth_lfs, SynthSpec};

/// Raw weak-label value meaning the LF did not fire.
pub const ABSTAIN: i64 = -1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: u64,
    pub text: String,
    pub gold_label: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Dev,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Dev, SplitName::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Dev => "dev",
            SplitName::Test => "test",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Samples of one split with their raw (possibly multi-class) weak labels.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub samples: Vec<Sample>,
    /// One row per sample; entries are `ABSTAIN` or a class index.
    pub weak_labels: Vec<Vec<i64>>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.samples.iter().map(|s| s.text.as_str()).collect()
    }

    pub fn gold(&self) -> Vec<Option<usize>> {
        self.samples.iter().map(|s| s.gold_label).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSet {
    pub train: Split,
    pub dev: Split,
    pub test: Split,
    pub class_names: Vec<String>,
    /// Number of original LFs (width of every weak-label row).
    pub num_lfs: usize,
}

impl SplitSet {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn split(&self, name: SplitName) -> &Split {
        match name {
            SplitName::Train => &self.train,
            SplitName::Dev => &self.dev,
            SplitName::Test => &self.test,
        }
    }

    pub fn split_mut(&mut self, name: SplitName) -> &mut Split {
        match name {
            SplitName::Train => &mut self.train,
            SplitName::Dev => &mut self.dev,
            SplitName::Test => &mut self.test,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.num_classes();
        if c == 0 {
            return Err(Error::Data("class_names must not be empty".into()));
        }
        for name in SplitName::ALL {
            let split = self.split(name);
            if split.weak_labels.len() != split.samples.len() {
                return Err(Error::Data(format!(
                    "{name}: {} samples but {} weak-label rows",
                    split.samples.len(),
                    split.weak_labels.len()
                )));
            }
            let mut ids = std::collections::HashSet::new();
            for (sample, row) in split.samples.iter().zip(&split.weak_labels) {
                if !ids.insert(sample.id) {
                    return Err(Error::Data(format!("{name}: duplicate sample id {}", sample.id)));
                }
                if let Some(g) = sample.gold_label {
                    if g >= c {
                        return Err(Error::Data(format!(
                            "{name}: sample {}: class index out of range ({g} >= {c})",
                            sample.id
                        )));
                    }
                }
                if row.len() != self.num_lfs {
                    return Err(Error::Data(format!(
                        "{name}: sample {}: inconsistent LF count ({} vs {})",
                        sample.id,
                        row.len(),
                        self.num_lfs
                    )));
                }
                if let Some(&bad) = row.iter().find(|&&v| v != ABSTAIN && (v < 0 || v as usize >= c)) {
                    return Err(Error::Data(format!(
                        "{name}: sample {}: class index out of range ({bad})",
                        sample.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Where a derived one-class LF came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub original_lf: usize,
    /// `None` when the original LF never fired and was dropped.
    pub class: Option<usize>,
    pub derived_lf: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneClassLfs {
    /// Indexed by `SplitName::index()`.
    pub matches: [MatchMatrix; 3],
    pub mapping: MappingMatrix,
    pub provenance: Vec<Provenance>,
}

impl OneClassLfs {
    pub fn matches(&self, split: SplitName) -> &MatchMatrix {
        &self.matches[split.index()]
    }
}

/// Splits every original LF into one derived LF per class it ever emits.
///
/// The class inventory is collected over all splits so that every split
/// shares one column layout. Columns are ordered by original LF, then class.
pub fn to_one_class_lfs(set: &SplitSet) -> Result<OneClassLfs> {
    set.validate()?;
    let c = set.num_classes();
    let mut emitted = vec![vec![false; c]; set.num_lfs];
    for name in SplitName::ALL {
        for row in &set.split(name).weak_labels {
            for (lf, &v) in row.iter().enumerate() {
                if v != ABSTAIN {
                    emitted[lf][v as usize] = true;
                }
            }
        }
    }

    let mut column = vec![vec![None; c]; set.num_lfs];
    let mut class_of = Vec::new();
    let mut provenance = Vec::new();
    for (lf, classes) in emitted.iter().enumerate() {
        let mut any = false;
        for (k, &fired) in classes.iter().enumerate() {
            if fired {
                any = true;
                column[lf][k] = Some(class_of.len());
                provenance.push(Provenance {
                    original_lf: lf,
                    class: Some(k),
                    derived_lf: Some(class_of.len()),
                });
                class_of.push(k);
            }
        }
        if !any {
            provenance.push(Provenance {
                original_lf: lf,
                class: None,
                derived_lf: None,
            });
        }
    }
    let m = class_of.len();

    let convert = |split: &Split| -> Result<MatchMatrix> {
        let rows = split
            .weak_labels
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != ABSTAIN)
                    .map(|(lf, &v)| column[lf][v as usize].expect("inventory covers every emitted class"))
                    .collect()
            })
            .collect();
        MatchMatrix::from_rows(m, rows)
    };

    Ok(OneClassLfs {
        matches: [convert(&set.train)?, convert(&set.dev)?, convert(&set.test)?],
        mapping: MappingMatrix::new(class_of, c)?,
        provenance,
    })
}

/// Row-normalized LF distribution `P`; rows without any match are uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDistribution {
    pub rows: Vec<Vec<f64>>,
    pub unlabeled_mask: Vec<bool>,
    /// Row indices that enter the training stream.
    pub training_rows: Vec<usize>,
}

impl TargetDistribution {
    pub fn m(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }
}

pub fn build_targets(l: &MatchMatrix, include_unlabeled: bool) -> Result<TargetDistribution> {
    let m = l.m();
    if m == 0 {
        return Err(Error::Data("cannot build targets with zero labeling functions".into()));
    }
    let uniform = 1.0 / m as f64;
    let mut rows = Vec::with_capacity(l.n());
    let mut unlabeled_mask = Vec::with_capacity(l.n());
    let mut training_rows = Vec::with_capacity(l.n());
    for (i, matched) in l.rows().enumerate() {
        if matched.is_empty() {
            rows.push(vec![uniform; m]);
            unlabeled_mask.push(true);
            if include_unlabeled {
                training_rows.push(i);
            }
        } else {
            let w = 1.0 / matched.len() as f64;
            let mut row = vec![0.0; m];
            for &j in matched {
                row[j] = w;
            }
            rows.push(row);
            unlabeled_mask.push(false);
            training_rows.push(i);
        }
    }
    Ok(TargetDistribution {
        rows,
        unlabeled_mask,
        training_rows,
    })
}
