//! Task metrics and the LF-memorization analyses: how well each latent path
//! predicts LF matches, performance by number of matches, and the gap
//! between train and test reports.

pub mod plot;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{build_targets, MappingMatrix, MatchMatrix};
use crate::encoder::{Encoder, FeatureVector};
use crate::error::{Error, Result};
use crate::model::{forward, map_task_logits, row_cross_entropy, softmax};
use crate::model::{combine, SepLLParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Accuracy,
    BinaryF1,
    MacroF1,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::BinaryF1 => "binary_f1",
            Metric::MacroF1 => "macro_f1",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(Metric::Accuracy),
            "binary_f1" => Ok(Metric::BinaryF1),
            "macro_f1" => Ok(Metric::MacroF1),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub metric: Metric,
    pub value: f64,
    pub accuracy: f64,
    pub per_class: Vec<ClassStats>,
    /// `confusion[gold][pred]`.
    pub confusion: Vec<Vec<usize>>,
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Classification report. Classes without support contribute an F1 of 0.
pub fn task_metrics(
    preds: &[usize],
    gold: &[usize],
    num_classes: usize,
    metric: Metric,
    positive_class: usize,
) -> Result<EvalReport> {
    if preds.len() != gold.len() {
        return Err(Error::Data(format!("{} predictions for {} gold labels", preds.len(), gold.len())));
    }
    if let Some(&bad) = preds.iter().chain(gold).find(|&&k| k >= num_classes) {
        return Err(Error::Data(format!("label {bad} outside {num_classes} classes")));
    }
    if metric == Metric::BinaryF1 {
        if num_classes != 2 {
            return Err(Error::Config(format!("binary_f1 needs exactly 2 classes, got {num_classes}")));
        }
        if positive_class >= 2 {
            return Err(Error::Config(format!("positive class {positive_class} is not 0 or 1")));
        }
    }
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    for (&p, &g) in preds.iter().zip(gold) {
        confusion[g][p] += 1;
    }
    let per_class: Vec<ClassStats> = (0..num_classes)
        .map(|k| {
            let tp = confusion[k][k];
            let support: usize = confusion[k].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[k]).sum();
            ClassStats {
                precision: ratio(tp, predicted),
                recall: ratio(tp, support),
                f1: f1(tp, predicted - tp, support - tp),
                support,
            }
        })
        .collect();
    let correct: usize = (0..num_classes).map(|k| confusion[k][k]).sum();
    let accuracy = ratio(correct, preds.len());
    let value = match metric {
        Metric::Accuracy => accuracy,
        Metric::BinaryF1 => per_class[positive_class].f1,
        Metric::MacroF1 => per_class.iter().map(|s| s.f1).sum::<f64>() / num_classes as f64,
    };
    Ok(EvalReport {
        split: String::new(),
        metric,
        value,
        accuracy,
        per_class,
        confusion,
    })
}

/// Scalar metric value only.
pub fn metric_value(preds: &[usize], gold: &[usize], num_classes: usize, metric: Metric, positive_class: usize) -> Result<f64> {
    task_metrics(preds, gold, num_classes, metric, positive_class).map(|r| r.value)
}

/// Marks `(i, j)` as a predicted match when `probs[i][j] > k / m`.
pub fn lf_match_predict<R: AsRef<[f64]>>(probabilities: &[R], k: usize) -> Result<MatchMatrix> {
    if k == 0 {
        return Err(Error::Config("threshold k must be positive".into()));
    }
    let Some(first) = probabilities.first() else {
        return Ok(MatchMatrix::empty(0, 0));
    };
    let m = first.as_ref().len();
    if m == 0 {
        return Err(Error::Data("probability rows must have at least one column".into()));
    }
    let threshold = k as f64 / m as f64;
    let rows = probabilities
        .iter()
        .map(|row| {
            let row = row.as_ref();
            if row.len() != m {
                return Err(Error::Data("probability rows differ in width".into()));
            }
            Ok(row.iter().enumerate().filter(|(_, &p)| p > threshold).map(|(j, _)| j).collect())
        })
        .collect::<Result<Vec<Vec<usize>>>>()?;
    MatchMatrix::from_rows(m, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathMetrics {
    /// Cell-wise accuracy of predicted vs. true matches over all n x m cells.
    pub accuracy: f64,
    /// Unweighted mean over LF columns of the per-column binary F1.
    pub macro_f1: f64,
    /// Mean `CE(P, prediction)` over rows with at least one true match.
    pub cross_entropy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformBaseline {
    pub cross_entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorizationReport {
    pub threshold_k: usize,
    pub rows: usize,
    pub rows_with_matches: usize,
    /// Softmax of the LF head alone.
    pub lf_latent: PathMetrics,
    /// Softmax of the recombined logits.
    pub full: PathMetrics,
    /// Softmax of the task logits mapped into LF space.
    pub task_mapped: PathMetrics,
    pub uniform: UniformBaseline,
}

fn path_metrics(probs: &[Vec<f64>], truth: &MatchMatrix, targets: &[Vec<f64>], k: usize) -> Result<PathMetrics> {
    let predicted = lf_match_predict(probs, k)?;
    let (n, m) = (truth.n(), truth.m());
    let mut tp = vec![0usize; m];
    let mut fp = vec![0usize; m];
    let mut fn_ = vec![0usize; m];
    for i in 0..n {
        let (t, p) = (truth.row(i), predicted.row(i));
        for &j in p {
            if t.binary_search(&j).is_ok() {
                tp[j] += 1;
            } else {
                fp[j] += 1;
            }
        }
        for &j in t {
            if p.binary_search(&j).is_err() {
                fn_[j] += 1;
            }
        }
    }
    let wrong: usize = fp.iter().chain(&fn_).sum();
    let cells = n * m;
    let accuracy = if cells == 0 { 0.0 } else { 1.0 - wrong as f64 / cells as f64 };
    let macro_f1 = if m == 0 {
        0.0
    } else {
        (0..m).map(|j| f1(tp[j], fp[j], fn_[j])).sum::<f64>() / m as f64
    };
    let matched: Vec<usize> = (0..n).filter(|&i| truth.row_sum(i) > 0).collect();
    let cross_entropy = if matched.is_empty() {
        0.0
    } else {
        matched.iter().map(|&i| row_cross_entropy(&targets[i], &probs[i])).sum::<f64>() / matched.len() as f64
    };
    Ok(PathMetrics {
        accuracy,
        macro_f1,
        cross_entropy,
    })
}

/// Memorization metrics from raw head outputs, one row per sample.
pub fn memorization_from_logits(
    task_logits: &[Vec<f64>],
    lf_logits: &[Vec<f64>],
    mapping: &MappingMatrix,
    l: &MatchMatrix,
    k: usize,
) -> Result<MemorizationReport> {
    let n = l.n();
    if task_logits.len() != n || lf_logits.len() != n {
        return Err(Error::Data(format!(
            "{} / {} logit rows for {n} samples",
            task_logits.len(),
            lf_logits.len()
        )));
    }
    if l.m() != mapping.m() {
        return Err(Error::Data(format!(
            "LF dimension mismatch: L has {} columns, model has {} LFs",
            l.m(),
            mapping.m()
        )));
    }
    let targets = build_targets(l, true)?.rows;
    let lf_probs: Vec<Vec<f64>> = lf_logits.iter().map(|r| softmax(r)).collect();
    let full_probs: Vec<Vec<f64>> = task_logits
        .iter()
        .zip(lf_logits)
        .map(|(t, f)| softmax(&combine(t, f, mapping)))
        .collect();
    let task_probs: Vec<Vec<f64>> = task_logits.iter().map(|t| softmax(&map_task_logits(t, mapping))).collect();

    let uniform_row = vec![1.0 / l.m() as f64; l.m()];
    let matched: Vec<usize> = (0..n).filter(|&i| l.row_sum(i) > 0).collect();
    let uniform_ce = if matched.is_empty() {
        0.0
    } else {
        matched.iter().map(|&i| row_cross_entropy(&targets[i], &uniform_row)).sum::<f64>() / matched.len() as f64
    };

    Ok(MemorizationReport {
        threshold_k: k,
        rows: n,
        rows_with_matches: matched.len(),
        lf_latent: path_metrics(&lf_probs, l, &targets, k)?,
        full: path_metrics(&full_probs, l, &targets, k)?,
        task_mapped: path_metrics(&task_probs, l, &targets, k)?,
        uniform: UniformBaseline {
            cross_entropy: uniform_ce,
        },
    })
}

pub fn memorization_report<E: Encoder>(
    params: &SepLLParams<E>,
    features: &[FeatureVector],
    l: &MatchMatrix,
    k: usize,
) -> Result<MemorizationReport> {
    if features.len() != l.n() {
        return Err(Error::Data(format!("{} samples but L has {} rows", features.len(), l.n())));
    }
    let traces = features
        .par_iter()
        .map(|x| forward(params, x))
        .collect::<Result<Vec<_>>>()?;
    let (task, lf): (Vec<_>, Vec<_>) = traces.into_iter().map(|t| (t.task_logits, t.lf_logits)).unzip();
    memorization_from_logits(&task, &lf, &params.mapping, l, k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchCountRow {
    pub match_count: usize,
    pub value: f64,
    pub support: usize,
}

/// Task metric per group of samples sharing the same number of LF matches.
pub fn match_count_breakdown(
    preds: &[usize],
    gold: &[usize],
    l: &MatchMatrix,
    num_classes: usize,
    metric: Metric,
    positive_class: usize,
) -> Result<Vec<MatchCountRow>> {
    if preds.len() != l.n() || gold.len() != l.n() {
        return Err(Error::Data("predictions, gold labels and L must cover the same samples".into()));
    }
    let mut groups: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for i in 0..l.n() {
        let g = groups.entry(l.row_sum(i)).or_default();
        g.0.push(preds[i]);
        g.1.push(gold[i]);
    }
    groups
        .into_iter()
        .map(|(count, (p, g))| {
            Ok(MatchCountRow {
                match_count: count,
                value: metric_value(&p, &g, num_classes, metric, positive_class)?,
                support: p.len(),
            })
        })
        .collect()
}

/// Flat `name -> value` view of a report, used for gaps and CSV output.
pub trait Cells {
    fn cells(&self) -> BTreeMap<String, f64>;
}

impl Cells for MemorizationReport {
    fn cells(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for (name, p) in [("lf_latent", &self.lf_latent), ("full", &self.full), ("task_mapped", &self.task_mapped)] {
            out.insert(format!("{name}.accuracy"), p.accuracy);
            out.insert(format!("{name}.macro_f1"), p.macro_f1);
            out.insert(format!("{name}.cross_entropy"), p.cross_entropy);
        }
        out.insert("uniform.cross_entropy".into(), self.uniform.cross_entropy);
        out
    }
}

impl Cells for EvalReport {
    fn cells(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        out.insert(self.metric.name().to_string(), self.value);
        out.insert("accuracy".into(), self.accuracy);
        for (k, s) in self.per_class.iter().enumerate() {
            out.insert(format!("class{k}.precision"), s.precision);
            out.insert(format!("class{k}.recall"), s.recall);
            out.insert(format!("class{k}.f1"), s.f1);
        }
        out
    }
}

/// `|train - test|` per cell. Both reports must expose the same cells.
pub fn train_test_gap<R: Cells>(report_train: &R, report_test: &R) -> Result<BTreeMap<String, f64>> {
    let a = report_train.cells();
    let b = report_test.cells();
    if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        return Err(Error::Data("reports have different cells".into()));
    }
    Ok(a.iter().map(|(k, v)| (k.clone(), (v - b[k]).abs())).collect())
}

/// CSV with header `split,cell,value`.
pub fn cells_csv<R: Cells>(reports: &[(&str, &R)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["split", "cell", "value"]).map_err(csv_err)?;
    for (split, r) in reports {
        for (cell, v) in r.cells() {
            w.write_record([*split, cell.as_str(), &v.to_string()]).map_err(csv_err)?;
        }
    }
    finish_csv(w)
}

pub fn match_count_csv(rows: &[MatchCountRow], metric: Metric) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["match_count", metric.name(), "support"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.match_count.to_string(), r.value.to_string(), r.support.to_string()])
            .map_err(csv_err)?;
    }
    finish_csv(w)
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("csv: {e}"))
}

pub(crate) fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Data(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}
