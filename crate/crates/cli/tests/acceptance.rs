//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! The MovieLens-100K ratings file is read from `$AEL_MOVIELENS`, falling back
//! to `data/ml-100k/u.data` at the workspace root (see
//! `scripts/fetch-movielens.sh`).

use std::collections::HashMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use ael_cli::config::Config;
use ael_cli::experiment::{RankerChoice, Run};
use ael_core::dataset::{load_interactions, split_train_test, synthetic};
use ael_core::evaluation::{evaluate, Metric};
use ael_core::gating::load_probability;
use ael_core::numerics::finite_difference;
use ael_core::training::{batch_loss, batch_loss_and_grads, fit};
use ael_core::{
    AggregatorKind, AelModel, GatingNetwork, HiddenDims, InteractionMatrix, MetricsReport, Parent, Ranker, Rng,
    SplitDataset, TrainConfig, NUM_EXPERTS,
};

type Outcome = Result<String, String>;

const PUBLISHED_RECALL_AT_5: f64 = 0.1087;
const PUBLISHED_MRR_AT_5: f64 = 0.7554;
const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const ABLATION_SEEDS: [u64; 3] = [0, 1, 2];
const NOISE_RATES: [f64; 4] = [0.0, 0.25, 0.5, 1.0];

fn movielens_path() -> PathBuf {
    std::env::var_os("AEL_MOVIELENS")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/ml-100k/u.data"))
}

fn ael_binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ael"))
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Metrics of one MovieLens training run, for every ranker the criteria use.
struct RunMetrics {
    gate: MetricsReport,
    average: MetricsReport,
    mild: MetricsReport,
}

/// Trains MovieLens runs on demand and keeps their metrics, so criteria 7, 8
/// and 9 share the runs they have in common.
struct Runs {
    data: Option<InteractionMatrix>,
    cfg: Config,
    cache: HashMap<(usize, u64, u64), RunMetrics>,
}

impl Runs {
    fn new() -> Self {
        Runs {
            data: None,
            cfg: Config::default(),
            cache: HashMap::new(),
        }
    }

    fn data(&mut self) -> Result<&InteractionMatrix, String> {
        if self.data.is_none() {
            let path = movielens_path();
            if !path.exists() {
                return Err(format!("MovieLens-100K not found at {} (set AEL_MOVIELENS)", path.display()));
            }
            let (m, _) = load_interactions(&path, None).map_err(|e| e.to_string())?;
            self.data = Some(m);
        }
        Ok(self.data.as_ref().unwrap())
    }

    fn get(&mut self, k: usize, rate: f64, seed: u64) -> Result<&RunMetrics, String> {
        let key = (k, rate.to_bits(), seed);
        if !self.cache.contains_key(&key) {
            let train = TrainConfig { k, ..self.cfg.train.clone() };
            let (spec, cutoffs, temp) = (self.cfg.split_spec(), self.cfg.cutoffs.clone(), self.cfg.bma_temperature);
            let data = self.data()?;
            let run = Run::train(data, &train, seed, spec, rate).map_err(|e| e.to_string())?;
            let eval = |c| run.evaluate(c, &cutoffs, temp).map_err(|e| e.to_string());
            let metrics = RunMetrics {
                gate: eval(RankerChoice::Aggregate(AggregatorKind::SparseGate))?,
                average: eval(RankerChoice::Aggregate(AggregatorKind::Average))?,
                mild: eval(RankerChoice::Expert(Parent::Mild))?,
            };
            self.cache.insert(key, metrics);
        }
        Ok(&self.cache[&key])
    }

    fn mean<F>(&mut self, k: usize, rate: f64, seeds: &[u64], pick: F) -> Result<f64, String>
    where
        F: Fn(&RunMetrics) -> f64,
    {
        let mut sum = 0.0;
        for &seed in seeds {
            sum += pick(self.get(k, rate, seed)?);
        }
        Ok(sum / seeds.len() as f64)
    }
}

fn metric(r: &MetricsReport, m: Metric, n: usize) -> f64 {
    r.get(m, n).expect("cutoff present")
}

fn criterion_1() -> Outcome {
    let out = ael_binary()
        .args(["count-params", "--users", "44784", "--items", "1020"])
        .output()
        .map_err(|e| e.to_string())?;
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text
        .lines()
        .find(|l| l.starts_with("total without gating"))
        .unwrap_or("")
        .to_owned();
    // Independent closed form: each level has encoder W, user table V, bias,
    // decoder W and decoder bias.
    let (u, mut prev) = (44784usize, 1020usize);
    let mut expected = 0;
    for k in [128, 48, 12] {
        expected += prev * k + u * k + k + k * prev + prev;
        prev = k;
    }
    check(
        out.status.success() && line == "total without gating: 8,695,336" && expected == 8_695_336,
        format!("`{line}` (closed form {expected})"),
    )
}

fn criterion_2(runs: &mut Runs) -> Outcome {
    let m = runs.data()?;
    let (u, d, n) = (m.num_users(), m.num_items(), m.num_interactions());
    let oracle = 1.0 - n as f64 / (u as f64 * d as f64);
    let reported = m.sparsity().map_err(|e| e.to_string())?;
    check(
        (u, d, n) == (943, 1682, 100_000) && (reported - 0.93695).abs() <= 5e-6 && (reported - oracle).abs() < 1e-15,
        format!("U={u} D={d} n={n} sparsity {reported:.6}"),
    )
}

fn tiny_problem(seed: u64, k: usize) -> (AelModel, GatingNetwork, InteractionMatrix) {
    let mut rng = Rng::new(seed);
    let mut model = AelModel::new(3, 6, HiddenDims([4, 3, 2]), &mut rng).unwrap();
    for t in model.tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.uniform(-0.3, 0.3);
        }
    }
    let mut gate = GatingNetwork::new(6, NUM_EXPERTS, k).unwrap();
    for w in gate.w_gate.iter_mut() {
        *w = rng.uniform(-1.0, 1.0);
    }
    for w in gate.w_noise.iter_mut() {
        *w = rng.uniform(-0.5, 0.5);
    }
    let rows = vec![vec![0, 2, 3], vec![1, 4], vec![0, 1, 2, 5]];
    (model, gate, InteractionMatrix::from_rows(3, 6, rows).unwrap())
}

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (seed, k) in [(31, 1), (32, 2), (33, 3)] {
        let (model, gate, data) = tiny_problem(seed, k);
        let cfg = TrainConfig {
            k,
            l2_lambda: 1e-3,
            w_importance: 0.5,
            w_load: 0.5,
            ..TrainConfig::default()
        };
        let batch = [0, 2];
        let rng = Rng::new(seed);
        let (_, grads) = batch_loss_and_grads(&model, &gate, &batch, &data, &cfg, &mut rng.clone())
            .map_err(|e| e.to_string())?;
        let analytic: Vec<f64> = grads.tensors().concat();
        let flat: Vec<f64> = model.tensors().into_iter().chain(gate.tensors()).collect::<Vec<_>>().concat();
        let numeric = finite_difference(
            |p| {
                let (mut m, mut g) = (model.clone(), gate.clone());
                let mut it = p.iter();
                for t in m.tensors_mut().into_iter().chain(g.tensors_mut()) {
                    t.iter_mut().for_each(|v| *v = *it.next().unwrap());
                }
                batch_loss(&m, &g, &batch, &data, &cfg, &mut rng.clone()).unwrap().0
            },
            &flat,
            1e-6,
        );
        for (a, n) in analytic.iter().zip(&numeric) {
            worst = worst.max((a - n).abs() / a.abs().max(n.abs()).max(1e-6));
        }
        count += flat.len();
    }
    check(
        worst < 1e-4,
        format!("max relative error {worst:.2e} over {count} parameters, k=1,2,3"),
    )
}

fn random_gate(rng: &mut Rng, d: usize, k: usize) -> GatingNetwork {
    let mut gate = GatingNetwork::new(d, NUM_EXPERTS, k).unwrap();
    gate.w_gate.iter_mut().for_each(|w| *w = rng.uniform(-1.0, 1.0));
    gate.w_noise.iter_mut().for_each(|w| *w = rng.uniform(-1.0, 1.0));
    gate
}

fn random_input(rng: &mut Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| if rng.unit() < 0.3 { 1.0 } else { 0.0 }).collect()
}

fn criterion_4() -> Outcome {
    let d = 20;
    let mut rng = Rng::new(404);
    let mut worst_sum: f64 = 0.0;
    for k in 1..=NUM_EXPERTS {
        for _ in 0..1000 {
            let gate = random_gate(&mut rng, d, k);
            let x = random_input(&mut rng, d);
            let g = gate.forward(&x, Some(&mut rng)).map_err(|e| e.to_string())?;
            worst_sum = worst_sum.max((g.weights.iter().sum::<f64>() - 1.0).abs());
            let nonzero = g.weights.iter().filter(|&&w| w != 0.0).count();
            if nonzero != k {
                return Err(format!("k={k}: {nonzero} nonzero weights"));
            }
        }
    }
    let mut worst_softmax: f64 = 0.0;
    for _ in 0..1000 {
        let gate = random_gate(&mut rng, d, 3);
        let x = random_input(&mut rng, d);
        let g = gate.forward(&x, None).map_err(|e| e.to_string())?;
        let logits: Vec<f64> = (0..NUM_EXPERTS)
            .map(|e| (0..d).map(|i| x[i] * gate.w_gate[i * NUM_EXPERTS + e]).sum())
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        for (w, l) in g.weights.iter().zip(&logits) {
            worst_softmax = worst_softmax.max((w - (l - max).exp() / z).abs());
        }
    }
    let mut worst_mc: f64 = 0.0;
    for instance in 0..20 {
        let k = 1 + instance % 2;
        let gate = random_gate(&mut rng, d, k);
        let x = random_input(&mut rng, d);
        let g = gate.forward(&x, Some(&mut rng)).map_err(|e| e.to_string())?;
        for e in 0..NUM_EXPERTS {
            let draws = 100_000;
            let mut kept = 0;
            for _ in 0..draws {
                let mine = g.clean_scores[e] + g.noise_scales[e] * rng.std_normal();
                let above = (0..NUM_EXPERTS)
                    .filter(|&j| j != e && g.noisy_scores[j] > mine)
                    .count();
                if above < k {
                    kept += 1;
                }
            }
            let mc = kept as f64 / draws as f64;
            worst_mc = worst_mc.max((mc - load_probability(&g, e)).abs());
        }
    }
    check(
        worst_sum <= 1e-9 && worst_softmax <= 1e-12 && worst_mc <= 0.01,
        format!(
            "3000 inputs, max |sum-1| {worst_sum:.1e}; k=3 softmax gap {worst_softmax:.1e}; \
             load_probability vs Monte-Carlo max gap {worst_mc:.4}"
        ),
    )
}

fn criterion_5() -> Outcome {
    let data = synthetic(500, 200, 5).map_err(|e| e.to_string())?;
    let split = split_train_test(&data, 0.8, 5).map_err(|e| e.to_string())?;
    let final_cv = |w: f64| -> Result<f64, String> {
        let cfg = TrainConfig {
            epochs: 20,
            early_stop_patience: 0,
            w_importance: w,
            w_load: w,
            seed: 5,
            ..TrainConfig::default()
        };
        let trained = fit(&split, &cfg).map_err(|e| e.to_string())?;
        Ok(trained.report.epochs.last().ok_or("no epochs ran")?.importance_cv)
    };
    let balanced = final_cv(1e-2)?;
    let unbalanced = final_cv(0.0)?;
    check(
        balanced < unbalanced,
        format!("final importance CV {balanced:.4} with w=1e-2 vs {unbalanced:.4} with w=0"),
    )
}

/// Scores drawn from a handful of values so ties are common.
struct TableRanker(Vec<Vec<f64>>);

impl Ranker for TableRanker {
    fn score(&self, user: usize, _input: &[f64]) -> ael_core::Result<Vec<f64>> {
        Ok(self.0[user].clone())
    }
}

fn criterion_6() -> Outcome {
    let mut rng = Rng::new(606);
    let cutoffs = [1, 3, 5, 10];
    for instance in 0..100 {
        let (users, items) = (2 + rng.below(8), 5 + rng.below(20));
        let mut train = vec![Vec::new(); users];
        let mut test = vec![Vec::new(); users];
        for u in 0..users {
            for i in 0..items {
                match rng.below(5) {
                    0 => train[u].push(i),
                    1 => test[u].push(i),
                    _ => {}
                }
            }
        }
        if test.iter().all(Vec::is_empty) {
            test[0].push(items - 1);
            train[0].retain(|&i| i != items - 1);
        }
        let split = SplitDataset {
            train: InteractionMatrix::from_rows(users, items, train.clone()).unwrap(),
            test: InteractionMatrix::from_rows(users, items, test.clone()).unwrap(),
        };
        let scores: Vec<Vec<f64>> = (0..users).map(|_| (0..items).map(|_| rng.below(4) as f64).collect()).collect();
        let got = evaluate(&TableRanker(scores.clone()), &split, &cutoffs).map_err(|e| e.to_string())?;

        let mut recall = [0.0; 4];
        let mut precision = [0.0; 4];
        let mut mrr = [0.0; 4];
        let mut evaluated = 0;
        for u in 0..users {
            if test[u].is_empty() {
                continue;
            }
            evaluated += 1;
            let s = &scores[u];
            // 1-based position of item i among non-training items.
            let rank = |i: usize| {
                1 + (0..items)
                    .filter(|&j| !train[u].contains(&j) && (s[j] > s[i] || (s[j] == s[i] && j < i)))
                    .count()
            };
            for (c, &n) in cutoffs.iter().enumerate() {
                let hits = test[u].iter().filter(|&&i| rank(i) <= n).count();
                recall[c] += hits as f64 / test[u].len() as f64;
                precision[c] += hits as f64 / n as f64;
                mrr[c] += test[u]
                    .iter()
                    .map(|&i| rank(i))
                    .filter(|&r| r <= n)
                    .min()
                    .map_or(0.0, |r| 1.0 / r as f64);
            }
        }
        for v in recall.iter_mut().chain(&mut precision).chain(&mut mrr) {
            *v /= evaluated as f64;
        }
        if got.recall != recall || got.precision != precision || got.mrr != mrr || got.users_evaluated != evaluated {
            return Err(format!("instance {instance}: {got:?} vs oracle {recall:?} {precision:?} {mrr:?}"));
        }
    }
    Ok("100 instances, cutoffs 1/3/5/10, exact agreement".into())
}

fn criterion_7(runs: &mut Runs) -> Outcome {
    let recall = runs.mean(2, 0.0, &SEEDS, |m| metric(&m.gate, Metric::Recall, 5))?;
    let mrr = runs.mean(2, 0.0, &SEEDS, |m| metric(&m.gate, Metric::Mrr, 5))?;
    check(
        recall >= 0.08 && mrr >= 0.60,
        format!(
            "mean over 5 seeds R@5 {recall:.4} (floor 0.08, published {PUBLISHED_RECALL_AT_5}), \
             MRR@5 {mrr:.4} (floor 0.60, published {PUBLISHED_MRR_AT_5})"
        ),
    )
}

fn criterion_8(runs: &mut Runs) -> Outcome {
    let mut spread: f64 = 0.0;
    let mut r20 = [0.0; 3];
    for m in Metric::ALL {
        for n in [5, 20] {
            let mut means = [0.0; 3];
            for k in 1..=3 {
                means[k - 1] = runs.mean(k, 0.0, &SEEDS, |r| metric(&r.gate, m, n))?;
            }
            let hi = means.iter().cloned().fold(f64::MIN, f64::max);
            let lo = means.iter().cloned().fold(f64::MAX, f64::min);
            spread = spread.max((hi - lo) / hi);
            if (m, n) == (Metric::Recall, 20) {
                r20 = means;
            }
        }
    }
    let k2_not_worst = r20[1] > r20[0].min(r20[2]);
    check(
        spread <= 0.15 && k2_not_worst,
        format!(
            "largest relative spread {:.2}% across six metrics; R@20 k=1 {:.4}, k=2 {:.4}, k=3 {:.4}",
            spread * 100.0,
            r20[0],
            r20[1],
            r20[2]
        ),
    )
}

fn criterion_9(runs: &mut Runs) -> Outcome {
    let mut average = Vec::new();
    let mut mild = Vec::new();
    for rate in NOISE_RATES {
        average.push(runs.mean(2, rate, &ABLATION_SEEDS, |m| metric(&m.average, Metric::Recall, 5))?);
        mild.push(runs.mean(2, rate, &ABLATION_SEEDS, |m| metric(&m.mild, Metric::Recall, 5))?);
    }
    let drop = |v: &[f64]| (v[0] - v[3]) / v[0];
    let (avg_drop, mild_drop) = (drop(&average), drop(&mild));
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join("/");
    check(
        avg_drop < mild_drop,
        format!(
            "R@5 at rates 0/0.25/0.5/1: average {} (drop {:.2}%), mild {} (drop {:.2}%)",
            fmt(&average),
            avg_drop * 100.0,
            fmt(&mild),
            mild_drop * 100.0
        ),
    )
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for attempt in 0..2 {
        let out = dir.path().join(format!("run{attempt}"));
        let base = ["--dataset", "synthetic:50x40", "--seed", "7", "--out", out.to_str().unwrap()];
        let train = ael_binary().arg("train").args(base).output().map_err(|e| e.to_string())?;
        let ckpt = out.join("model.ael");
        let eval = ael_binary()
            .arg("evaluate")
            .args(base)
            .args(["--checkpoint", ckpt.to_str().unwrap()])
            .output()
            .map_err(|e| e.to_string())?;
        if !train.status.success() || !eval.status.success() {
            return Err(format!("run {attempt} failed: {}", String::from_utf8_lossy(&eval.stderr)));
        }
        outputs.push((train.stdout, eval.stdout));
    }
    check(
        outputs[0] == outputs[1] && outputs[0].0 == outputs[0].1,
        format!("train and evaluate JSON identical across two runs ({} bytes)", outputs[0].0.len()),
    )
}

fn main() {
    let mut runs = Runs::new();
    let criteria: [fn(&mut Runs) -> Outcome; 10] = [
        |_| criterion_1(),
        criterion_2,
        |_| criterion_3(),
        |_| criterion_4(),
        |_| criterion_5(),
        |_| criterion_6(),
        criterion_7,
        criterion_8,
        criterion_9,
        |_| criterion_10(),
    ];
    let mut failed = Vec::new();
    for (n, criterion) in (1..).zip(criteria) {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(|| criterion(&mut runs)))
            .unwrap_or_else(|p| Err(format!("panicked: {:?}", p.downcast_ref::<String>().map(String::as_str))));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS | {detail} | {secs:.1}s"),
            Err(detail) => {
                println!("criterion {n}: FAIL | {detail} | {secs:.1}s");
                failed.push(n);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 10 criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
