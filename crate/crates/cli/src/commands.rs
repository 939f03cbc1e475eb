use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use sepll::config::RunConfig;
use sepll::data::{
    load_dataset, save_dataset, synth_dataset, to_one_class_lfs, DataFormat, MappingMatrix, MatchMatrix, Provenance,
    SplitName, SynthSpec,
};
use sepll::eval::{
    cells_csv, match_count_breakdown, match_count_csv, memorization_report, plot::bar_chart_svg, task_metrics,
    train_test_gap, EvalReport, MemorizationReport, Metric,
};
use sepll::lf_engine::{compute_stats, majority_vote, LfStats};
use sepll::manifest::RunManifest;
use sepll::model::checkpoint::TrainedModel;
use sepll::pipeline::{match_matrices, Prepared};
use sepll::trainer::{ablation_csv, init_params, predict_all, run_ablation, train as fit, AblationReport};
use sepll::{Error, Result};

use crate::{Analysis, ModelArgs, RunArgs};

const MANIFEST: &str = "manifest.json";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize") + "\n"
}

/// Output directory that records a digest for every file written to it.
struct Outputs {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Outputs {
    fn create(dir: &Path, manifest: RunManifest) -> Result<Self> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(io_err(&path))?;
        self.manifest.add_artifact(&self.dir, name)
    }

    fn finish(self) -> Result<()> {
        self.manifest.write(&self.dir.join(MANIFEST))
    }
}

/// Resolves the run config from the optional file and command-line overrides.
fn resolve_config(args: &RunArgs, base: Option<RunConfig>) -> Result<RunConfig> {
    let mut cfg = match (&args.config, base) {
        (Some(path), _) => RunConfig::from_file(path)?,
        (None, Some(cfg)) => cfg,
        (None, None) => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    if let Some(data) = &args.data {
        cfg.data.path = Some(data.clone());
        cfg.data.synth = None;
    }
    if let Some(format) = args.format {
        cfg.data.format = format.into();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn manifest_for(command: &str, cfg: &RunConfig, config_file: Option<&Path>) -> Result<RunManifest> {
    let mut m = RunManifest::new(command, cfg.train.seed, serde_json::to_value(cfg).expect("config serializes"));
    if let Some(path) = config_file {
        m.add_input(path)?;
    }
    if let Some(path) = &cfg.data.path {
        m.add_input(path)?;
    }
    Ok(m)
}

fn write_lf_files(
    out: &mut Outputs,
    matches: &[MatchMatrix; 3],
    mapping: &MappingMatrix,
    provenance: Option<&[Provenance]>,
) -> Result<()> {
    for name in SplitName::ALL {
        out.write(&format!("L.{name}.triplets"), matches[name.index()].to_triplet_string())?;
    }
    let mut t = Vec::new();
    mapping.write_class_of(&mut t).expect("writing to memory");
    out.write("T.classof", t)?;
    if let Some(prov) = provenance {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Data(format!("csv: {e}"));
        w.write_record(["original_lf", "class", "derived_lf"]).map_err(csv_err)?;
        let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
        for p in prov {
            w.write_record([p.original_lf.to_string(), opt(p.class), opt(p.derived_lf)])
                .map_err(csv_err)?;
        }
        out.write("provenance.csv", w.into_inner().map_err(|e| Error::Data(e.to_string()))?)?;
    }
    Ok(())
}

pub fn convert(data: &Path, format: DataFormat, out: &Path) -> Result<()> {
    let set = load_dataset(data, format)?;
    let one = to_one_class_lfs(&set)?;
    let mut manifest = RunManifest::new("convert", 0, json!({ "data": data, "format": format }));
    manifest.add_input(data)?;
    let mut outputs = Outputs::create(out, manifest)?;
    write_lf_files(&mut outputs, &one.matches, &one.mapping, Some(&one.provenance))?;
    outputs.finish()?;
    println!(
        "{} weak-label columns -> {} one-class LFs over {} classes",
        set.num_lfs,
        one.mapping.m(),
        one.mapping.c()
    );
    Ok(())
}

pub fn apply_lfs(args: &RunArgs, out: &Path) -> Result<()> {
    let cfg = resolve_config(args, None)?;
    if cfg.lfs.is_empty() {
        return Err(Error::Config("config defines no [[lfs]] rules".into()));
    }
    let set = cfg.load_data()?;
    let (matches, mapping, _) = match_matrices(&set, &cfg.lfs)?;
    let mut outputs = Outputs::create(out, manifest_for("apply-lfs", &cfg, args.config.as_deref())?)?;
    write_lf_files(&mut outputs, &matches, &mapping, None)?;
    outputs.finish()?;
    for name in SplitName::ALL {
        println!("{name}: {} samples, {} matches", matches[name.index()].n(), matches[name.index()].nnz());
    }
    Ok(())
}

#[derive(Serialize)]
struct SplitStats {
    #[serde(flatten)]
    lfs: LfStats,
    /// Majority-vote accuracy; absent when gold labels are missing.
    majority_vote_accuracy: Option<f64>,
}

pub fn stats(args: &RunArgs, out: Option<&Path>) -> Result<()> {
    let cfg = resolve_config(args, None)?;
    let set = cfg.load_data()?;
    let (matches, mapping, _) = match_matrices(&set, &cfg.lfs)?;
    let mut report = BTreeMap::new();
    for name in SplitName::ALL {
        let l = &matches[name.index()];
        let gold = set.split(name).gold();
        let lfs = compute_stats(l, &mapping, Some(&gold))?;
        let majority_vote_accuracy = match gold.iter().copied().collect::<Option<Vec<usize>>>() {
            Some(g) if !g.is_empty() => {
                let votes = majority_vote(l, &mapping, cfg.train.seed)?;
                Some(votes.iter().zip(&g).filter(|(a, b)| a == b).count() as f64 / g.len() as f64)
            }
            _ => None,
        };
        report.insert(name.as_str(), SplitStats { lfs, majority_vote_accuracy });
    }
    let text = to_json(&report);
    match out {
        Some(dir) => {
            let mut outputs = Outputs::create(dir, manifest_for("stats", &cfg, args.config.as_deref())?)?;
            outputs.write("stats.json", &text)?;
            outputs.finish()?;
            for (name, s) in &report {
                println!(
                    "{name}: n={} m={} coverage={:.4} conflicts={:.4}",
                    s.lfs.n, s.lfs.m, s.lfs.coverage, s.lfs.conflict_rate
                );
            }
        }
        None => print!("{text}"),
    }
    Ok(())
}

pub fn synth(config: Option<&Path>, seed: u64, format: DataFormat, out: &Path) -> Result<()> {
    let spec = match config {
        Some(path) => RunConfig::from_file(path)?
            .data
            .synth
            .ok_or_else(|| Error::Config(format!("{}: no [data.synth] table", path.display())))?,
        None => SynthSpec::default(),
    };
    spec.validate()?;
    let set = synth_dataset(&spec, seed)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    save_dataset(&set, out, format)?;

    let mut manifest = RunManifest::new("synth", seed, json!({ "synth": spec, "format": format }));
    if let Some(path) = config {
        manifest.add_input(path)?;
    }
    let mut written: Vec<String> = fs::read_dir(out)
        .map_err(io_err(out))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|name| name != MANIFEST)
        .collect();
    written.sort();
    for name in &written {
        manifest.add_artifact(out, name)?;
    }
    manifest.write(&out.join(MANIFEST))?;
    println!(
        "wrote {} / {} / {} samples to {}",
        set.train.len(),
        set.dev.len(),
        set.test.len(),
        out.display()
    );
    Ok(())
}

pub fn train(args: &RunArgs, out: &Path) -> Result<()> {
    let cfg = resolve_config(args, None)?;
    let set = cfg.load_data()?;
    let prepared = Prepared::new(&set, &cfg.lfs, &cfg.encoder)?;
    let inputs = prepared.train_inputs()?;
    let init = init_params(prepared.vocab.len(), &prepared.mapping, &cfg.encoder, &cfg.model, cfg.train.seed)?;

    let mut outputs = Outputs::create(out, manifest_for("train", &cfg, args.config.as_deref())?)?;
    let (params, history) = match fit(&inputs, init, &cfg.train) {
        Ok(r) => r,
        Err(Error::Diverged {
            epoch,
            message,
            history,
        }) => {
            outputs.write("history.csv", history.to_csv_string()?)?;
            outputs.finish()?;
            return Err(Error::Diverged {
                epoch,
                message,
                history,
            });
        }
        Err(e) => return Err(e),
    };

    let model = TrainedModel {
        params,
        vocab: prepared.vocab.clone(),
        class_names: prepared.class_names.clone(),
        config_echo: cfg.echo(),
    };
    let mut ckpt = Vec::new();
    model.write(&mut ckpt).map_err(io_err(&out.join("model.ckpt")))?;
    outputs.write("model.ckpt", ckpt)?;
    outputs.write("history.csv", history.to_csv_string()?)?;
    outputs.finish()?;
    println!(
        "best epoch {} of {}: dev {} {:.4}",
        history.best_epoch,
        history.epochs.len(),
        cfg.train.metric().name(),
        history.best_dev_metric
    );
    Ok(())
}

/// Checkpoint plus the data it is evaluated on, featurized with its vocabulary.
struct Loaded {
    cfg: RunConfig,
    model: TrainedModel,
    prepared: Prepared,
    manifest: RunManifest,
}

fn load_model(args: &ModelArgs, command: &str) -> Result<Loaded> {
    let model = TrainedModel::load(&args.checkpoint)?;
    let echoed: RunConfig = serde_json::from_str(&model.config_echo)
        .map_err(|e| Error::Data(format!("corrupt checkpoint: config echo: {e}")))?;
    let cfg = resolve_config(&args.run, Some(echoed))?;
    let set = cfg.load_data()?;
    let prepared = Prepared::with_vocab(&set, &cfg.lfs, model.vocab.clone())?;
    let p = &model.params;
    if p.num_lfs() != prepared.mapping.m() {
        return Err(Error::Data(format!(
            "LF dimension mismatch: checkpoint has {} LFs, data has {}",
            p.num_lfs(),
            prepared.mapping.m()
        )));
    }
    if p.num_classes() != prepared.num_classes() || model.class_names != prepared.class_names {
        return Err(Error::Data(format!(
            "class mismatch: checkpoint has {:?}, data has {:?}",
            model.class_names, prepared.class_names
        )));
    }
    if p.mapping != prepared.mapping {
        return Err(Error::Data("LF-to-class mapping differs from the checkpoint".into()));
    }
    let mut manifest = manifest_for(command, &cfg, args.run.config.as_deref())?;
    manifest.add_input(&args.checkpoint)?;
    Ok(Loaded {
        cfg,
        model,
        prepared,
        manifest,
    })
}

fn split_report(loaded: &Loaded, name: SplitName) -> Result<EvalReport> {
    let split = loaded.prepared.split(name);
    let gold = split.require_gold(name)?;
    let preds = predict_all(&loaded.model.params, &split.features)?;
    let t = &loaded.cfg.train;
    let mut report = task_metrics(&preds, &gold, loaded.prepared.num_classes(), t.metric(), t.positive_class)?;
    report.split = name.as_str().to_string();
    Ok(report)
}

pub fn eval(args: &ModelArgs, out: Option<&Path>) -> Result<()> {
    let loaded = load_model(args, "eval")?;
    let mut reports = BTreeMap::new();
    for name in [SplitName::Dev, SplitName::Test] {
        if !loaded.prepared.split(name).is_empty() {
            reports.insert(name.as_str(), split_report(&loaded, name)?);
        }
    }
    if reports.is_empty() {
        return Err(Error::Data("neither dev nor test split has samples".into()));
    }
    let text = to_json(&reports);
    match out {
        Some(dir) => {
            let rows: Vec<(&str, &EvalReport)> = reports.iter().map(|(k, v)| (*k, v)).collect();
            let csv = cells_csv(&rows)?;
            let mut outputs = Outputs::create(dir, loaded.manifest)?;
            outputs.write("eval.json", &text)?;
            outputs.write("eval.csv", csv)?;
            outputs.finish()?;
            for (name, r) in &reports {
                match r.metric {
                    Metric::Accuracy => println!("{name}: accuracy {:.4}", r.value),
                    m => println!("{name}: {} {:.4} accuracy {:.4}", m.name(), r.value, r.accuracy),
                }
            }
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn memorization(loaded: &Loaded, name: SplitName, k: usize) -> Result<MemorizationReport> {
    let split = loaded.prepared.split(name);
    if split.is_empty() {
        return Err(Error::Data(format!("{name} split is empty")));
    }
    memorization_report(&loaded.model.params, &split.features, &split.matches, k)
}

pub fn analyze(
    args: &ModelArgs,
    which: Analysis,
    split: SplitName,
    threshold_k: Option<usize>,
    plot: bool,
    out: &Path,
) -> Result<()> {
    let loaded = load_model(args, "analyze")?;
    let k = threshold_k.unwrap_or(loaded.cfg.eval.threshold_k);
    let metric = loaded.cfg.train.metric();
    let mut outputs = Outputs::create(out, loaded.manifest.clone())?;
    match which {
        Analysis::Memorization => {
            let rep = memorization(&loaded, split, k)?;
            outputs.write("memorization.json", to_json(&json!({ split.as_str(): rep })))?;
            outputs.write("memorization.csv", cells_csv(&[(split.as_str(), &rep)])?)?;
            if plot {
                let paths = ["lf_latent", "full", "task_mapped", "uniform"].map(String::from);
                let ce = vec![
                    rep.lf_latent.cross_entropy,
                    rep.full.cross_entropy,
                    rep.task_mapped.cross_entropy,
                    rep.uniform.cross_entropy,
                ];
                let svg = bar_chart_svg(
                    &format!("Cross-entropy against LF targets ({split})"),
                    "cross-entropy",
                    &paths,
                    &[("cross_entropy".into(), ce)],
                );
                outputs.write("memorization.svg", svg)?;
            }
            println!(
                "{split}: CE full {:.4}, task-mapped {:.4}, uniform {:.4}",
                rep.full.cross_entropy, rep.task_mapped.cross_entropy, rep.uniform.cross_entropy
            );
        }
        Analysis::Matches => {
            let s = loaded.prepared.split(split);
            let gold = s.require_gold(split)?;
            let preds = predict_all(&loaded.model.params, &s.features)?;
            let c = loaded.prepared.num_classes();
            let rows = match_count_breakdown(&preds, &gold, &s.matches, c, metric, loaded.cfg.train.positive_class)?;
            outputs.write("matches.json", to_json(&rows))?;
            let csv = match_count_csv(&rows, metric)?;
            outputs.write("matches.csv", &csv)?;
            if plot {
                let cats: Vec<String> = rows.iter().map(|r| r.match_count.to_string()).collect();
                let values = rows.iter().map(|r| r.value).collect();
                let svg = bar_chart_svg(
                    &format!("{} by number of LF matches ({split})", metric.name()),
                    metric.name(),
                    &cats,
                    &[(metric.name().to_string(), values)],
                );
                outputs.write("matches.svg", svg)?;
            }
            print!("{csv}");
        }
        Analysis::Gap => {
            let task = train_test_gap(
                &split_report(&loaded, SplitName::Train)?,
                &split_report(&loaded, SplitName::Test)?,
            )?;
            let mem = train_test_gap(
                &memorization(&loaded, SplitName::Train, k)?,
                &memorization(&loaded, SplitName::Test, k)?,
            )?;
            outputs.write("gap.json", to_json(&json!({ "task": task, "memorization": mem })))?;
            let mut w = csv::Writer::from_writer(Vec::new());
            let csv_err = |e: csv::Error| Error::Data(format!("csv: {e}"));
            w.write_record(["analysis", "cell", "gap"]).map_err(csv_err)?;
            for (analysis, cells) in [("task", &task), ("memorization", &mem)] {
                for (cell, v) in cells {
                    w.write_record([analysis, cell, &v.to_string()]).map_err(csv_err)?;
                }
            }
            outputs.write("gap.csv", w.into_inner().map_err(|e| Error::Data(e.to_string()))?)?;
            println!("train/test gap in {}: {:.4}", metric.name(), task[metric.name()]);
        }
    }
    outputs.finish()
}

fn parse_datasets(list: &str) -> Result<Vec<PathBuf>> {
    let dirs: Vec<PathBuf> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(PathBuf::from).collect();
    if dirs.is_empty() {
        return Err(Error::Config("--datasets needs at least one dataset directory".into()));
    }
    Ok(dirs)
}

fn dataset_name(cfg: &RunConfig) -> String {
    match &cfg.data.path {
        Some(p) => p
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| p.display().to_string()),
        None => "synthetic".into(),
    }
}

#[derive(Serialize)]
struct DatasetAblation<'a> {
    dataset: &'a str,
    #[serde(flatten)]
    report: &'a AblationReport,
}

pub fn ablate(args: &RunArgs, datasets: Option<&str>, out: &Path) -> Result<()> {
    let base = resolve_config(args, None)?;
    let configs: Vec<RunConfig> = match datasets {
        None => vec![base.clone()],
        Some(list) => parse_datasets(list)?
            .into_iter()
            .map(|dir| {
                let mut cfg = base.clone();
                cfg.data.path = Some(dir);
                cfg.data.synth = None;
                cfg
            })
            .collect(),
    };

    let mut manifest = manifest_for("ablate", &base, args.config.as_deref())?;
    let mut reports = Vec::with_capacity(configs.len());
    for cfg in &configs {
        if datasets.is_some() {
            manifest.add_input(cfg.data.path.as_deref().expect("dataset path set"))?;
        }
        let set = cfg.load_data()?;
        let prepared = Prepared::new(&set, &cfg.lfs, &cfg.encoder)?;
        let inputs = prepared.train_inputs()?;
        let test = prepared.split(SplitName::Test);
        let test_gold = test.gold.iter().copied().collect::<Option<Vec<usize>>>();
        let test_pair = match &test_gold {
            Some(g) if !g.is_empty() => Some((test.features.as_slice(), g.as_slice())),
            _ => None,
        };
        let init = |seed| init_params(prepared.vocab.len(), &prepared.mapping, &cfg.encoder, &cfg.model, seed);
        let report = run_ablation(&inputs, test_pair, init, &cfg.train)?;
        reports.push((dataset_name(cfg), report));
    }

    let use_test = reports.iter().all(|(_, r)| r.rows.iter().all(|row| row.test_metric.is_some()));
    let csv = ablation_csv(&reports, use_test)?;
    let json_rows: Vec<DatasetAblation> = reports
        .iter()
        .map(|(dataset, report)| DatasetAblation { dataset, report })
        .collect();
    let mut outputs = Outputs::create(out, manifest)?;
    outputs.write("ablation.csv", &csv)?;
    outputs.write("ablation.json", to_json(&json_rows))?;
    outputs.finish()?;
    println!("{} metric, {}", if use_test { "test" } else { "dev" }, reports[0].1.metric);
    print!("{csv}");
    Ok(())
}
