//! Labeling-function rules, their application to text, coverage statistics
//! and the majority-vote baseline.

use rand::Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::data::{MappingMatrix, MatchMatrix, Sample};
use crate::encoder::tokenize;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Keyword,
    Regex,
}

/// An LF as written in a config file; the class is given by name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LfSpec {
    #[serde(rename = "type")]
    pub kind: RuleKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    pub class: String,
}

#[derive(Debug, Clone)]
pub enum Rule {
    /// Each term is a token sequence that must appear contiguously.
    Keyword(Vec<Vec<String>>),
    Regex(Regex),
}

#[derive(Debug, Clone)]
pub struct LabelingFunction {
    pub id: usize,
    pub rule: Rule,
    pub class: usize,
}

impl LabelingFunction {
    pub fn keyword<S: AsRef<str>>(id: usize, terms: &[S], class: usize) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Config(format!("LF {id}: keyword list must not be empty")));
        }
        let phrases = terms
            .iter()
            .map(|t| {
                let toks = tokenize(t.as_ref(), true);
                if toks.is_empty() {
                    Err(Error::Config(format!("LF {id}: term {:?} has no word characters", t.as_ref())))
                } else {
                    Ok(toks)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LabelingFunction {
            id,
            rule: Rule::Keyword(phrases),
            class,
        })
    }

    pub fn regex(id: usize, pattern: &str, class: usize) -> Result<Self> {
        let re = Regex::new(pattern).map_err(|e| Error::Config(format!("LF {id}: invalid regex: {e}")))?;
        Ok(LabelingFunction {
            id,
            rule: Rule::Regex(re),
            class,
        })
    }

    /// Whether the rule fires on `text`. `tokens` is the lowercased tokenization of `text`.
    fn fires(&self, text: &str, tokens: &[String]) -> bool {
        match &self.rule {
            Rule::Keyword(phrases) => phrases.iter().any(|p| contains_phrase(tokens, p)),
            Rule::Regex(re) => re.is_match(text),
        }
    }
}

fn contains_phrase(tokens: &[String], phrase: &[String]) -> bool {
    if phrase.len() == 1 {
        return tokens.iter().any(|t| *t == phrase[0]);
    }
    tokens.windows(phrase.len()).any(|w| w == phrase)
}

/// Resolves config-level LF specs against the dataset's class names.
pub fn compile_lfs(specs: &[LfSpec], class_names: &[String]) -> Result<Vec<LabelingFunction>> {
    specs
        .iter()
        .enumerate()
        .map(|(id, spec)| {
            let class = class_names
                .iter()
                .position(|n| *n == spec.class)
                .ok_or_else(|| Error::Config(format!("LF {id}: unknown class {:?}", spec.class)))?;
            match spec.kind {
                RuleKind::Keyword => LabelingFunction::keyword(id, &spec.terms, class),
                RuleKind::Regex => {
                    let pattern = spec
                        .pattern
                        .as_deref()
                        .ok_or_else(|| Error::Config(format!("LF {id}: regex LF needs `pattern`")))?;
                    LabelingFunction::regex(id, pattern, class)
                }
            }
        })
        .collect()
}

pub fn mapping_for(lfs: &[LabelingFunction], num_classes: usize) -> Result<MappingMatrix> {
    MappingMatrix::new(lfs.iter().map(|lf| lf.class).collect(), num_classes)
}

/// Evaluates every LF on every sample. Column `j` of the result is `lfs[j]`.
///
/// The linear-time regex engine cannot fail at match time, so errors only
/// come from shape problems; the `Result` is kept for other rule kinds.
pub fn apply_lfs(lfs: &[LabelingFunction], samples: &[Sample]) -> Result<MatchMatrix> {
    let rows: Vec<Vec<usize>> = samples
        .par_iter()
        .map(|s| {
            let tokens = tokenize(&s.text, true);
            lfs.iter()
                .enumerate()
                .filter(|(_, lf)| lf.fires(&s.text, &tokens))
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    MatchMatrix::from_rows(lfs.len(), rows)
}

/// Majority vote over one-class LFs. Rows without matches and tied votes
/// are resolved by a uniform draw from the `mv-ties` stream of `seed`.
pub fn majority_vote(l: &MatchMatrix, t: &MappingMatrix, seed: u64) -> Result<Vec<usize>> {
    if l.m() != t.m() {
        return Err(Error::Data(format!(
            "LF dimension mismatch: L has {} columns, T has {} rows",
            l.m(),
            t.m()
        )));
    }
    let mut rng = stream_rng(seed, Stream::MvTies);
    let c = t.c();
    let class_of = t.class_of();
    let mut votes = vec![0usize; c];
    let mut tied = Vec::with_capacity(c);
    Ok(l.rows()
        .map(|row| {
            votes.iter_mut().for_each(|v| *v = 0);
            for &j in row {
                votes[class_of[j]] += 1;
            }
            let best = *votes.iter().max().expect("at least one class");
            tied.clear();
            tied.extend(votes.iter().enumerate().filter(|(_, &v)| v == best).map(|(k, _)| k));
            if tied.len() == 1 {
                tied[0]
            } else {
                tied[rng.random_range(0..tied.len())]
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfStat {
    pub hits: usize,
    pub coverage: f64,
    /// Share of hits whose gold label equals the LF's class; `None` without gold hits.
    pub precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfStats {
    pub n: usize,
    pub m: usize,
    pub per_lf: Vec<LfStat>,
    /// Share of samples with at least one match.
    pub coverage: f64,
    pub mean_matches_per_matched: f64,
    /// Share of matched samples whose matching LFs span two or more classes.
    pub conflict_rate: f64,
}

pub fn compute_stats(l: &MatchMatrix, t: &MappingMatrix, gold: Option<&[Option<usize>]>) -> Result<LfStats> {
    if l.m() != t.m() {
        return Err(Error::Data(format!(
            "LF dimension mismatch: L has {} columns, T has {} rows",
            l.m(),
            t.m()
        )));
    }
    if let Some(g) = gold {
        if g.len() != l.n() {
            return Err(Error::Data(format!("{} gold labels for {} samples", g.len(), l.n())));
        }
    }
    let (n, m) = (l.n(), l.m());
    let class_of = t.class_of();
    let mut hits = vec![0usize; m];
    let mut correct = vec![0usize; m];
    let mut judged = vec![0usize; m];
    let (mut matched, mut total_matches, mut conflicted) = (0usize, 0usize, 0usize);

    for (i, row) in l.rows().enumerate() {
        if row.is_empty() {
            continue;
        }
        matched += 1;
        total_matches += row.len();
        let first = class_of[row[0]];
        if row.iter().any(|&j| class_of[j] != first) {
            conflicted += 1;
        }
        for &j in row {
            hits[j] += 1;
            if let Some(Some(g)) = gold.map(|g| g[i]) {
                judged[j] += 1;
                if g == class_of[j] {
                    correct[j] += 1;
                }
            }
        }
    }

    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(LfStats {
        n,
        m,
        per_lf: (0..m)
            .map(|j| LfStat {
                hits: hits[j],
                coverage: frac(hits[j], n),
                precision: (judged[j] > 0).then(|| frac(correct[j], judged[j])),
            })
            .collect(),
        coverage: frac(matched, n),
        mean_matches_per_matched: frac(total_matches, matched),
        conflict_rate: frac(conflicted, matched),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(text: &str) -> Sample {
        Sample {
            id: 0,
            text: text.into(),
            gold_label: None,
        }
    }

    #[test]
    fn keyword_is_case_insensitive_whole_token() {
        let lf = LabelingFunction::keyword(0, &["free", "winner"], 1).unwrap();
        let l = apply_lfs(&[lf], &[sample("You are a WINNER"), sample("freedom rings")]).unwrap();
        assert_eq!(l.row(0), &[0]);
        assert!(l.row(1).is_empty());
    }

    #[test]
    fn keyword_phrase_must_be_contiguous() {
        let lf = LabelingFunction::keyword(0, &["check out"], 1).unwrap();
        let l = apply_lfs(&[lf], &[sample("Check-out my channel"), sample("check my out")]).unwrap();
        assert_eq!(l.row(0), &[0]);
        assert!(l.row(1).is_empty());
    }

    #[test]
    fn regex_searches_anywhere() {
        let lf = LabelingFunction::regex(0, r"\b(subscribe|sub)\b", 1).unwrap();
        let l = apply_lfs(&[lf], &[sample("please subscribe!"), sample("subway")]).unwrap();
        assert_eq!(l.row(0), &[0]);
        assert!(l.row(1).is_empty());
    }

    #[test]
    fn invalid_rules_are_rejected() {
        assert!(LabelingFunction::keyword::<&str>(0, &[], 0).is_err());
        assert!(LabelingFunction::keyword(0, &["!!"], 0).is_err());
        assert!(LabelingFunction::regex(0, "(", 0).is_err());
    }

    #[test]
    fn compile_resolves_class_names() {
        let names = vec!["ham".to_string(), "spam".to_string()];
        let specs = vec![
            LfSpec {
                kind: RuleKind::Keyword,
                terms: vec!["free".into()],
                pattern: None,
                class: "spam".into(),
            },
            LfSpec {
                kind: RuleKind::Regex,
                terms: vec![],
                pattern: Some("^hi".into()),
                class: "ham".into(),
            },
        ];
        let lfs = compile_lfs(&specs, &names).unwrap();
        assert_eq!(mapping_for(&lfs, 2).unwrap().class_of(), &[1, 0]);

        let mut bad = specs.clone();
        bad[0].class = "eggs".into();
        assert!(compile_lfs(&bad, &names).is_err());
        let mut bad = specs;
        bad[1].pattern = None;
        assert!(compile_lfs(&bad, &names).is_err());
    }

    #[test]
    fn strict_majority_wins() {
        let t = MappingMatrix::new(vec![0, 0, 1], 2).unwrap();
        let l = MatchMatrix::from_rows(3, vec![vec![0, 1, 2]]).unwrap();
        assert_eq!(majority_vote(&l, &t, 0).unwrap(), vec![0]);
    }

    #[test]
    fn unmatched_rows_are_seeded_random() {
        let t = MappingMatrix::new(vec![0, 1, 2], 3).unwrap();
        let l = MatchMatrix::empty(200, 3);
        let a = majority_vote(&l, &t, 9).unwrap();
        assert_eq!(a, majority_vote(&l, &t, 9).unwrap());
        for k in 0..3 {
            assert!(a.contains(&k));
        }
    }

    #[test]
    fn two_way_tie_reaches_both_classes_across_seeds() {
        let t = MappingMatrix::new(vec![0, 1], 2).unwrap();
        let l = MatchMatrix::from_rows(2, vec![vec![0, 1]]).unwrap();
        let outcomes: std::collections::BTreeSet<usize> =
            (0..64).map(|s| majority_vote(&l, &t, s).unwrap()[0]).collect();
        assert_eq!(outcomes.into_iter().collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn stats_count_coverage_and_conflicts() {
        let t = MappingMatrix::new(vec![0, 1, 1], 2).unwrap();
        let l = MatchMatrix::from_rows(3, vec![vec![0], vec![0, 1], vec![1, 2], vec![]]).unwrap();
        let gold = vec![Some(0), Some(1), Some(1), None];
        let s = compute_stats(&l, &t, Some(&gold)).unwrap();
        assert_eq!(s.coverage, 0.75);
        assert_eq!(s.conflict_rate, 1.0 / 3.0);
        assert_eq!(s.mean_matches_per_matched, 5.0 / 3.0);
        assert_eq!(s.per_lf[0].hits, 2);
        assert_eq!(s.per_lf[0].precision, Some(0.5));
        assert_eq!(s.per_lf[2].precision, Some(1.0));

        let full = MatchMatrix::from_rows(3, vec![vec![0], vec![2]]).unwrap();
        assert_eq!(compute_stats(&full, &t, None).unwrap().coverage, 1.0);
    }
}
