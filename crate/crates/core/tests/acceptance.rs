//! Acceptance gate. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::path::PathBuf;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::Rng;

use common::*;
use sepll::data::{build_targets, load_dataset, synth_dataset, DataFormat, SplitName, SynthSpec, to_one_class_lfs};
use sepll::encoder::{EncoderConfig, FeatureVector};
use sepll::eval::memorization_report;
use sepll::lf_engine::{compute_stats, majority_vote};
use sepll::model::{argmax, ce_loss, combine, forward, softmax, ModelConfig};
use sepll::pipeline::Prepared;
use sepll::trainer::{inject_noise, TrainConfig, Variant};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

struct Gate {
    failures: usize,
}

impl Gate {
    fn report(&mut self, id: &str, title: &str, started: Instant, outcome: Outcome) {
        let secs = started.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                self.failures += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{id} {tag} {title}: {detail} [{secs:.1}s]");
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn ac1_gradients() -> Outcome {
    let mut rng = rng(11);
    let (input_dim, hidden, d, c, m) = (6, 8, 4, 2, 3);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for head_layers in [1, 2] {
        for activation_l2 in [0.0, 0.3] {
            let mapping = random_mapping(c, m, &mut rng);
            let params = small_model(input_dim, hidden, d, mapping, head_layers, &mut rng);
            let xs: Vec<FeatureVector> = (0..5).map(|_| random_features(input_dim, &mut rng)).collect();
            let targets = random_targets(5, m, &mut rng);
            let r = grad_check(&params, &xs, &targets, activation_l2, 1e-4, 1e-7);
            worst = worst.max(r.max_rel_error);
            checked += r.checked;
        }
    }
    check(
        worst <= 1e-4,
        format!("max relative error {worst:.2e} over {checked} parameter gradients (tol 1e-4)"),
    )
}

fn ac2_oracles() -> Outcome {
    let mut rng = rng(22);
    let mut worst: f64 = 0.0;
    let mut mv_mismatch = 0;
    for _ in 0..1000 {
        let c = rng.random_range(2..5);
        let m = rng.random_range(c..c + 6);
        let n = rng.random_range(1..6);
        let t = random_mapping(c, m, &mut rng);
        let t_dense = t.to_dense();

        let mut q_rows = Vec::with_capacity(n);
        for _ in 0..n {
            let task: Vec<f64> = (0..c).map(|_| rng.random_range(-5.0..5.0)).collect();
            let lf: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
            let combined = combine(&task, &lf, &t);
            let oracle = naive_combine(&task, &lf, &t_dense);
            worst = worst.max(combined.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            let q = softmax(&combined);
            let q_oracle = naive_softmax(&oracle);
            worst = worst.max(q.iter().zip(&q_oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            q_rows.push(q);
        }
        let p = random_targets(n, m, &mut rng);
        let ce = ce_loss(&q_rows, &p).unwrap();
        worst = worst.max((ce - naive_ce(&q_rows, &p)).abs());

        let l = random_matches(n, m, 0.35, &mut rng);
        let votes = majority_vote(&l, &t, rng.random()).unwrap();
        for (i, row) in l.to_dense().iter().enumerate() {
            if !admissible_votes(row, &t_dense, c).contains(&votes[i]) {
                mv_mismatch += 1;
            }
        }
    }
    check(
        worst <= 1e-10 && mv_mismatch == 0,
        format!("max abs deviation {worst:.2e} (tol 1e-10), {mv_mismatch} majority-vote disagreements over 1000 instances"),
    )
}

struct FixtureResults {
    sepll_test: Vec<f64>,
    mv_test: Vec<f64>,
    full_dev: Vec<f64>,
    basic_dev: Vec<f64>,
    ce: Vec<(f64, f64, f64)>,
    /// Wall time of the Full runs and the MV baseline only.
    sepll_seconds: f64,
}

fn fixture_runs() -> FixtureResults {
    let spec = SynthSpec::default();
    let encoder = EncoderConfig::default();
    let model = ModelConfig::default();
    let mut out = FixtureResults {
        sepll_test: Vec::new(),
        mv_test: Vec::new(),
        full_dev: Vec::new(),
        basic_dev: Vec::new(),
        ce: Vec::new(),
        sepll_seconds: 0.0,
    };
    for seed in SEEDS {
        let started = Instant::now();
        let cfg = TrainConfig {
            seed,
            ..Default::default()
        };
        let prepared = prepare_fixture(&spec, seed, &encoder);
        let basic_prepared = prepared.clone();
        let full = run_fixture(prepared, &encoder, &model, &cfg);
        let test = full.prepared.split(SplitName::Test);
        let mem = memorization_report(&full.params, &test.features, &test.matches, 4).unwrap();
        out.ce.push((mem.full.cross_entropy, mem.task_mapped.cross_entropy, mem.uniform.cross_entropy));
        out.sepll_test.push(full.test_accuracy);
        out.mv_test.push(full.mv_test_accuracy);
        out.full_dev.push(full.history.best_dev_metric);
        out.sepll_seconds += started.elapsed().as_secs_f64();

        let basic = run_fixture(basic_prepared, &encoder, &model, &Variant::Basic.apply(&cfg));
        out.basic_dev.push(basic.history.best_dev_metric);
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn ac3_separation(r: &FixtureResults) -> Outcome {
    let wins = r.sepll_test.iter().zip(&r.mv_test).filter(|(s, m)| s > m).count();
    let m = mean(&r.sepll_test);
    check(
        wins >= 4 && m >= 0.85 && r.sepll_seconds < 120.0,
        format!(
            "SepLL beats MV in {wins}/5 seeds, mean SepLL test acc {m:.3} (MV {:.3}); sepll {} mv {}; 5 runs in {:.1}s",
            mean(&r.mv_test),
            fmt(&r.sepll_test),
            fmt(&r.mv_test),
            r.sepll_seconds
        ),
    )
}

fn ac4_ablation(r: &FixtureResults) -> Outcome {
    let (f, b) = (mean(&r.full_dev), mean(&r.basic_dev));
    check(
        f >= b,
        format!("mean dev accuracy Full {f:.4} vs Basic {b:.4}; full {} basic {}", fmt(&r.full_dev), fmt(&r.basic_dev)),
    )
}

fn ac5_memorization(r: &FixtureResults) -> Outcome {
    let ok = r.ce.iter().filter(|(full, task, uni)| full <= task && task <= uni).count();
    let rows: Vec<String> = r
        .ce
        .iter()
        .map(|(f, t, u)| format!("({f:.3} <= {t:.3} <= {u:.3})"))
        .collect();
    check(ok >= 4, format!("ordering holds in {ok}/5 seeds: {}", rows.join(" ")))
}

fn ac6_noise() -> Outcome {
    // classes: 0 -> LFs {0,1,2}, 1 -> LFs {3,4,5,6}, 2 -> LFs {7,8}
    let t = sepll::data::MappingMatrix::new(vec![0, 0, 0, 1, 1, 1, 1, 2, 2], 3).unwrap();
    // one sample matched by LF 0 (2 unmatched siblings) and LFs 3, 5 (2 unmatched siblings)
    let l = sepll::data::MatchMatrix::from_rows(9, vec![vec![0, 3, 5]]).unwrap();
    let draws = 100_000;
    let mut details = Vec::new();
    let mut ok = true;
    for (idx, lambda) in [0.05, 0.1, 0.2, 0.5].into_iter().enumerate() {
        let mut rng = rng(600 + idx as u64);
        let mut added = [0u64; 3];
        let mut foreign = 0u64;
        for _ in 0..draws {
            let noisy = inject_noise(&l, &t, lambda, &mut rng).unwrap();
            for &j in noisy.row(0) {
                if l.get(0, j) {
                    continue;
                }
                match t.class_of()[j] {
                    k @ (0 | 1) => added[k] += 1,
                    _ => foreign += 1,
                }
            }
        }
        for (k, unmatched) in [(0usize, 2.0f64), (1, 2.0)] {
            let expected = lambda * unmatched;
            let sigma = (unmatched * lambda * (1.0 - lambda) / draws as f64).sqrt();
            let got = added[k] as f64 / draws as f64;
            let pass = (got - expected).abs() <= 3.0 * sigma;
            ok &= pass;
            details.push(format!("l={lambda} class{k}: {got:.4} vs {expected:.4} (3s={:.4})", 3.0 * sigma));
        }
        ok &= foreign == 0;
    }
    check(ok, details.join("; "))
}

fn prop<S: Strategy>(runner: &mut TestRunner, name: &str, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn ac7_invariants() -> Outcome {
    let cases = 128;
    let mut runner = TestRunner::new(PropConfig {
        cases,
        failure_persistence: None,
        ..PropConfig::default()
    });
    let mut results = Vec::new();

    results.push(prop(&mut runner, "row-normalization", (1usize..12, 1usize..20, any::<u64>(), any::<bool>()), |(m, n, seed, unl)| {
        let l = random_matches(n, m, 0.3, &mut rng(seed));
        let p = build_targets(&l, unl).unwrap();
        for (i, row) in p.rows.iter().enumerate() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            prop_assert_eq!(p.unlabeled_mask[i], l.row_sum(i) == 0);
            prop_assert_eq!(p.training_rows.contains(&i), unl || l.row_sum(i) > 0);
        }
        Ok(())
    }));

    results.push(prop(&mut runner, "T one-hot", (2usize..5, 0usize..8, any::<u64>()), |(c, extra, seed)| {
        let t = random_mapping(c, c + extra, &mut rng(seed));
        for row in t.to_dense() {
            prop_assert_eq!(row.iter().map(|&v| v as usize).sum::<usize>(), 1);
        }
        let spec = SynthSpec { classes: c, n_train: 20, n_dev: 5, n_test: 5, ..Default::default() };
        let set = synth_dataset(&spec, seed).unwrap();
        let one = to_one_class_lfs(&set).unwrap();
        for row in one.mapping.to_dense() {
            prop_assert_eq!(row.iter().map(|&v| v as usize).sum::<usize>(), 1);
        }
        Ok(())
    }));

    results.push(prop(
        &mut runner,
        "argmax shift-invariance",
        (prop::collection::vec(-50.0f64..50.0, 1..10), -1e3f64..1e3),
        |(x, shift)| {
            let shifted: Vec<f64> = x.iter().map(|v| v + shift).collect();
            let (a, b) = (softmax(&x), softmax(&shifted));
            prop_assert_eq!(argmax(&a), argmax(&b));
            prop_assert_eq!(argmax(&x), argmax(&shifted));
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - q).abs() < 1e-9);
            }
            Ok(())
        },
    ));

    results.push(prop(&mut runner, "LF permutation equivariance", (2usize..4, 0usize..5, any::<u64>()), |(c, extra, seed)| {
        let mut r = rng(seed);
        let m = c + extra;
        let t = random_mapping(c, m, &mut r);
        let params = small_model(5, 4, 3, t.clone(), 1, &mut r);
        let mut perm: Vec<usize> = (0..m).collect();
        for i in (1..m).rev() {
            let k = r.random_range(0..=i);
            perm.swap(i, k);
        }
        let mut permuted = params.clone();
        permuted.mapping = t.permuted(&perm);
        let last = permuted.lf_head.layers.last_mut().unwrap();
        let src = params.lf_head.layers.last().unwrap();
        for (new_row, &old_row) in perm.iter().enumerate() {
            last.bias[new_row] = src.bias[old_row];
            for col in 0..src.in_dim {
                last.weights[new_row * src.in_dim + col] = src.weights[old_row * src.in_dim + col];
            }
        }
        let xs: Vec<FeatureVector> = (0..4).map(|_| random_features(5, &mut r)).collect();
        let l = random_matches(4, m, 0.4, &mut r);
        let lp = l.select_columns(&perm);
        let p = build_targets(&l, true).unwrap().rows;
        let pp = build_targets(&lp, true).unwrap().rows;
        let mut qs = Vec::new();
        let mut qps = Vec::new();
        for x in &xs {
            let a = forward(&params, x).unwrap();
            let b = forward(&permuted, x).unwrap();
            for (new_j, &old_j) in perm.iter().enumerate() {
                prop_assert!((b.combined_logits[new_j] - a.combined_logits[old_j]).abs() < 1e-12);
            }
            prop_assert_eq!(a.task_logits, b.task_logits.clone());
            qs.push(a.q);
            qps.push(b.q);
        }
        let (la, lb) = (ce_loss(&qs, &p).unwrap(), ce_loss(&qps, &pp).unwrap());
        prop_assert!((la - lb).abs() < 1e-12);
        Ok(())
    }));

    results.push(prop(&mut runner, "determinism under seed", (any::<u64>(), 0.0f64..1.0), |(seed, lambda)| {
        let spec = SynthSpec { n_train: 24, n_dev: 8, n_test: 4, ..Default::default() };
        let a = synth_dataset(&spec, seed).unwrap();
        prop_assert_eq!(&a, &synth_dataset(&spec, seed).unwrap());
        let one = to_one_class_lfs(&a).unwrap();
        let l = one.matches(SplitName::Train);
        let n1 = inject_noise(l, &one.mapping, lambda, &mut sepll::rng::stream_rng(seed, sepll::rng::Stream::Noise)).unwrap();
        let n2 = inject_noise(l, &one.mapping, lambda, &mut sepll::rng::stream_rng(seed, sepll::rng::Stream::Noise)).unwrap();
        prop_assert_eq!(n1, n2);
        let enc = EncoderConfig { hidden: 4, dim: 3, ..Default::default() };
        let cfg = TrainConfig { seed, max_epochs: 2, noise_lambda: lambda, batch_size: 5, ..Default::default() };
        let prepared = Prepared::new(&a, &[], &enc).unwrap();
        let r1 = run_fixture(prepared.clone(), &enc, &ModelConfig::default(), &cfg);
        let r2 = run_fixture(prepared, &enc, &ModelConfig::default(), &cfg);
        prop_assert_eq!(r1.history, r2.history);
        prop_assert_eq!(r1.params, r2.params);
        Ok(())
    }));

    let failures: Vec<String> = results.into_iter().filter_map(Result::err).collect();
    if failures.is_empty() {
        Outcome::Pass(format!("5 properties x {cases} cases"))
    } else {
        Outcome::Fail(failures.join("; "))
    }
}

fn youtube_dir() -> Option<PathBuf> {
    if let Ok(p) = std::env::var("SEPLL_YOUTUBE_DIR") {
        return Some(PathBuf::from(p));
    }
    let local = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/youtube");
    local.join("train.json").exists().then_some(local)
}

fn ac8_youtube() -> Outcome {
    let Some(dir) = youtube_dir() else {
        return Outcome::Skip("no Youtube data (set SEPLL_YOUTUBE_DIR or add data/youtube)".into());
    };
    let set = match load_dataset(&dir, DataFormat::WrenchJson) {
        Ok(s) => s,
        Err(e) => return Outcome::Fail(format!("{}: {e}", dir.display())),
    };
    let one = to_one_class_lfs(&set).unwrap();
    let stats = compute_stats(one.matches(SplitName::Train), &one.mapping, None).unwrap();
    let encoder = EncoderConfig::default();
    let prepared = Prepared::new(&set, &[], &encoder).unwrap();
    let mv = mv_accuracy(&prepared, SplitName::Test, 0);
    let run = run_fixture(prepared, &encoder, &ModelConfig::default(), &TrainConfig::default());
    let coverage_ok = (stats.coverage - 0.88).abs() <= 0.01;
    let mv_ok = (mv - 0.84).abs() <= 0.02;
    let beat = run.test_accuracy >= mv;
    check(
        coverage_ok && mv_ok && beat,
        format!(
            "train coverage {:.3} (0.88 +- 0.01), MV test acc {mv:.3} (0.84 +- 0.02), SepLL test acc {:.3}",
            stats.coverage, run.test_accuracy
        ),
    )
}

fn main() {
    let mut gate = Gate { failures: 0 };

    let t = Instant::now();
    gate.report("AC1", "gradient correctness", t, ac1_gradients());
    let t = Instant::now();
    gate.report("AC2", "loss/oracle equivalence", t, ac2_oracles());

    let t = Instant::now();
    let fixture = fixture_runs();
    gate.report("AC3", "separation beats aggregation", t, ac3_separation(&fixture));
    let t = Instant::now();
    gate.report("AC4", "routing ablation direction", t, ac4_ablation(&fixture));
    let t = Instant::now();
    gate.report("AC5", "memorization ordering", t, ac5_memorization(&fixture));

    let t = Instant::now();
    gate.report("AC6", "noise-injection statistics", t, ac6_noise());
    let t = Instant::now();
    gate.report("AC7", "invariant suite", t, ac7_invariants());
    let t = Instant::now();
    gate.report("AC8", "Youtube reproduction", t, ac8_youtube());

    if gate.failures > 0 {
        println!("acceptance: {} criterion(s) failed", gate.failures);
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed or skipped");
}
