//! Removes each routing strategy individually, plus all of them at once.

use serde::{Deserialize, Serialize};

use crate::encoder::{Encoder, FeatureVector};
use crate::error::{Error, Result};
use crate::eval::{csv_err, finish_csv, metric_value};
use crate::model::SepLLParams;

use super::{predict_all, train, TrainConfig, TrainInputs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Full,
    NoWeightDecay,
    NoL2,
    NoUnlabeled,
    NoNoise,
    Basic,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Full,
        Variant::NoWeightDecay,
        Variant::NoL2,
        Variant::NoUnlabeled,
        Variant::NoNoise,
        Variant::Basic,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "Full",
            Variant::NoWeightDecay => "-WeightDecay",
            Variant::NoL2 => "-L2",
            Variant::NoUnlabeled => "-Unlabeled",
            Variant::NoNoise => "-Noise",
            Variant::Basic => "Basic",
        }
    }

    /// `base` with this variant's strategies switched off.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        let off_wd = matches!(self, Variant::NoWeightDecay | Variant::Basic);
        let off_l2 = matches!(self, Variant::NoL2 | Variant::Basic);
        let off_unl = matches!(self, Variant::NoUnlabeled | Variant::Basic);
        let off_noise = matches!(self, Variant::NoNoise | Variant::Basic);
        if off_wd {
            cfg.weight_decay = 0.0;
        }
        if off_l2 {
            cfg.l2_lf = 0.0;
        }
        if off_unl {
            cfg.use_unlabeled = false;
        }
        if off_noise {
            cfg.noise_lambda = 0.0;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub dev_metric: f64,
    pub test_metric: Option<f64>,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub metric: String,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, variant: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant.label())
    }
}

/// Trains every variant from the same initialization (`init(seed)`).
pub fn run_ablation<E: Encoder>(
    inputs: &TrainInputs<'_>,
    test: Option<(&[FeatureVector], &[usize])>,
    init: impl Fn(u64) -> Result<SepLLParams<E>>,
    base: &TrainConfig,
) -> Result<AblationReport> {
    base.validate()?;
    let mut rows = Vec::with_capacity(Variant::ALL.len());
    for variant in Variant::ALL {
        let cfg = variant.apply(base);
        let params = init(cfg.seed)?;
        let c = params.num_classes();
        let (best, history) = train(inputs, params, &cfg)?;
        let test_metric = match test {
            Some((xs, gold)) if !xs.is_empty() => {
                let preds = predict_all(&best, xs)?;
                Some(metric_value(&preds, gold, c, cfg.metric(), cfg.positive_class)?)
            }
            _ => None,
        };
        rows.push(AblationRow {
            variant: variant.label().to_string(),
            dev_metric: history.best_dev_metric,
            test_metric,
            best_epoch: history.best_epoch,
        });
    }
    Ok(AblationReport {
        metric: base.metric().name().to_string(),
        rows,
    })
}

/// One row per variant, one column per dataset, then the average.
/// Uses test metrics when `use_test` is set, dev metrics otherwise.
pub fn ablation_csv(datasets: &[(String, AblationReport)], use_test: bool) -> Result<String> {
    if datasets.is_empty() {
        return Err(Error::Config("at least one dataset is required".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["variant".to_string()];
    header.extend(datasets.iter().map(|(name, _)| name.clone()));
    header.push("avg".into());
    w.write_record(&header).map_err(csv_err)?;
    for variant in Variant::ALL {
        let mut record = vec![variant.label().to_string()];
        let mut sum = 0.0;
        for (name, report) in datasets {
            let row = report
                .row(variant)
                .ok_or_else(|| Error::Data(format!("{name}: ablation lacks variant {}", variant.label())))?;
            let v = if use_test {
                row.test_metric
                    .ok_or_else(|| Error::Data(format!("{name}: no test metric for {}", variant.label())))?
            } else {
                row.dev_metric
            };
            sum += v;
            record.push(format!("{:.2}", 100.0 * v));
        }
        record.push(format!("{:.2}", 100.0 * sum / datasets.len() as f64));
        w.write_record(&record).map_err(csv_err)?;
    }
    finish_csv(w)
}
