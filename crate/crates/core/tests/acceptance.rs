//! One PASS/FAIL line per acceptance criterion. The Last.FM criteria need
//! the raw release in `KDAR_LASTFM_DIR` (`interactions.txt`, `kg.txt`) and
//! run with `cargo test --release --test acceptance -- --ignored`.

mod common;

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use common::oracles::{
    brute_auc, brute_ndcg, brute_ranking, brute_recall, dense_cg, instance, kg_layer, neighbor_sets, param, Rows,
};
use common::{fixture_batch, fixture_model, graphs, model_for, random_data, small_hyper};
use kdar::cli::{cmd_prepare, cmd_train, CHECKPOINT_FILE, HISTORY_FILE};
use kdar::config::RunConfig;
use kdar::eval::{auc, ndcg_at_k, rank_all, recall_at_k, RankingReport};
use kdar::graph::{build_kg_adjacency, InverseTripletPolicy};
use kdar::ingest::{load_processed, prepare, write_processed, DatasetStats, PrepareOptions};
use kdar::model::{attention_weights, propagate_cg, propagate_kg, AblationFlags, Hyperparameters, SegmentIndex};
use kdar::numerics::{finite_difference_check, Tape, Tensor};
use kdar::synth::{generate, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, ok: bool, detail: &str) {
    println!("{} criterion {n}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} failed: {detail}");
}

fn max_diff(got: &Tensor<f64>, want: &[Vec<f64>]) -> f64 {
    let mut m: f64 = 0.0;
    for (r, row) in want.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            m = m.max((got.get(r, c) - v).abs());
        }
    }
    m
}

/// Relative error `|a - n| / max(|a|, |n|)`; coordinates whose analytic and
/// numeric gradients both vanish below `1e-9` count as agreeing.
fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-9 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

#[test]
fn criterion_1_gradients_match_finite_differences() {
    let start = Instant::now();
    let (model, mut store) = fixture_model::<f64>(small_hyper(), AblationFlags::NONE, 1);
    let batch = fixture_batch();
    // Tolerance 0 records every coordinate, so the relative error is taken here.
    let report = finite_difference_check(
        |tape| {
            let reps = model.forward(tape)?;
            Ok(model.loss(tape, &reps, &batch)?.total)
        },
        &mut store,
        usize::MAX,
        1e-4,
        0.0,
        0,
    )
    .unwrap();
    let elapsed = start.elapsed();
    let errors: Vec<f64> = report
        .failures
        .iter()
        .map(|f| relative_error(f.analytic, f.numeric))
        .collect();
    let bad = errors.iter().filter(|&&e| e > 1e-3).count();
    let worst = errors.iter().copied().fold(0.0, f64::max);
    let ok = bad == 0 && report.checked == store.num_coords() && elapsed < Duration::from_secs(10);
    verdict(
        1,
        ok,
        &format!(
            "{} coordinates checked, {bad} above rel tol 1e-3 (max rel err {worst:.2e}), {elapsed:.2?}",
            report.checked
        ),
    );
}

#[test]
fn criterion_2_propagation_matches_dense_and_recursive_oracles() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..300u64 {
        let (table, kg) = random_data(seed);
        let (cg, _) = graphs(&table, &kg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = rng.gen_range(1..=3);
        let d = 3;
        let mut random = |n: usize| -> Tensor<f64> {
            Tensor::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
        };

        let (nu, ni) = (table.num_users, table.num_items);
        let users0 = random(nu);
        let items0 = random(ni);
        let mut store = kdar::numerics::ParameterStore::new();
        let pu = store.add("users", users0);
        let pi = store.add("items", items0);
        let ent = store.add("entities", random(kg.num_entities));
        let rel = store.add("relations", random(2 * kg.num_relations));
        let mut tape = Tape::new(&store);
        let (u0, i0) = (tape.param(pu), tape.param(pi));
        let into_users = SegmentIndex::from_edges(&cg.into_users, nu);
        let into_items = SegmentIndex::from_edges(&cg.into_items, ni);
        let (eu, ei) = propagate_cg(&mut tape, u0, i0, &into_users, &into_items, layers).unwrap();
        let x0: Rows = (0..nu)
            .map(|u| store.get(pu).row(u).to_vec())
            .chain((0..ni).map(|i| store.get(pi).row(i).to_vec()))
            .collect();
        let want = dense_cg(&table, &x0, layers);
        worst = worst.max(max_diff(tape.value(eu), &want[..nu]));
        worst = worst.max(max_diff(tape.value(ei), &want[nu..]));

        let kga = build_kg_adjacency(&kg, InverseTripletPolicy::default());
        let edges = SegmentIndex::from_edges(&kga.edges, kg.num_entities);
        let (e0, r0) = (tape.param(ent), tape.param(rel));
        let out = propagate_kg(&mut tape, e0, r0, &edges, &kga.edge_relation, layers).unwrap();
        let nbrs = neighbor_sets(&kg);
        let (ev, rv) = (param(&store, "entities"), param(&store, "relations"));
        for (l, &node) in out.iter().enumerate() {
            let want: Rows = (0..kg.num_entities).map(|h| kg_layer(&nbrs, &ev, &rv, l, h)).collect();
            worst = worst.max(max_diff(tape.value(node), &want));
        }
    }
    let elapsed = start.elapsed();
    verdict(
        2,
        worst <= 1e-6 && elapsed < Duration::from_secs(5),
        &format!("300 random graphs, max abs diff {worst:.3e}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_3_metrics_match_brute_force() {
    let start = Instant::now();
    let mut mismatches = Vec::new();
    let mut worst_auc: f64 = 0.0;
    for seed in 0..200 {
        let (scores, train, test) = instance(seed);
        let ranking = rank_all(&scores, &train);
        if ranking != brute_ranking(&scores, &train) {
            mismatches.push(format!("ranking@{seed}"));
        }
        for k in [1, 5, 10, 20, 50, 100] {
            if recall_at_k(&ranking, &test, k) != brute_recall(&ranking, &test, k) {
                mismatches.push(format!("recall@{k}/{seed}"));
            }
            if ndcg_at_k(&ranking, &test, k) != brute_ndcg(&ranking, &test, k) {
                mismatches.push(format!("ndcg@{k}/{seed}"));
            }
        }
        match (auc(&scores, &train, &test), brute_auc(&scores, &train, &test)) {
            (Some(a), Some(b)) => worst_auc = worst_auc.max((a - b).abs()),
            (a, b) if a != b => mismatches.push(format!("auc/{seed}")),
            _ => {}
        }
    }
    let elapsed = start.elapsed();
    verdict(
        3,
        mismatches.is_empty() && worst_auc <= 1e-9 && elapsed < Duration::from_secs(5),
        &format!(
            "200 instances, {} exact mismatches {:?}, max auc diff {worst_auc:.1e}, {elapsed:.2?}",
            mismatches.len(),
            &mismatches[..mismatches.len().min(3)]
        ),
    );
}

#[test]
fn criterion_4_attention_invariants() {
    let mut worst_sum: f64 = 0.0;
    let mut worst_shift: f64 = 0.0;
    let mut uniform_exact = true;
    for seed in 0..100u64 {
        let (table, kg) = random_data(seed);
        let hyper = Hyperparameters {
            dim: 4,
            ..small_hyper()
        };
        let (model, store) = model_for::<f64>(&table, &kg, hyper, AblationFlags::NONE, seed);
        let attrs = model.attributes().clone();
        let p = model.params;
        let mut tape = Tape::new(&store);
        let (e, r, wk, wq) = (
            tape.param(p.entity),
            tape.param(p.relation),
            tape.param(p.w_k),
            tape.param(p.w_q),
        );

        let att = attention_weights(&mut tape, e, r, wk, wq, &attrs, 4, false).unwrap();
        let alpha = tape.value(att.alpha).as_slice().to_vec();
        let mut sums = vec![0.0; attrs.counts.len()];
        for (k, &i) in attrs.item.iter().enumerate() {
            sums[i as usize] += alpha[k];
        }
        for (i, s) in sums.iter().enumerate() {
            if attrs.counts[i] > 0 {
                worst_sum = worst_sum.max((s - 1.0).abs());
            }
        }

        // Shifting every logit of an item by one constant leaves its weights unchanged.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits: Vec<f64> = (0..attrs.len()).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let shift: Vec<f64> = (0..attrs.counts.len()).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let shifted: Vec<f64> = logits
            .iter()
            .zip(attrs.item.iter())
            .map(|(l, &i)| l + shift[i as usize])
            .collect();
        let segs: Arc<[u32]> = attrs.item.clone();
        let a = tape.constant(Tensor::column(&logits)).unwrap();
        let b = tape.constant(Tensor::column(&shifted)).unwrap();
        let sa = tape.grouped_softmax(a, segs.clone(), attrs.counts.len()).unwrap();
        let sb = tape.grouped_softmax(b, segs, attrs.counts.len()).unwrap();
        worst_shift = worst_shift.max(tape.value(sa).max_abs_diff(tape.value(sb)).unwrap());

        let uni = attention_weights(&mut tape, e, r, wk, wq, &attrs, 4, true).unwrap();
        for (k, &w) in tape.value(uni.alpha).as_slice().iter().enumerate() {
            uniform_exact &= w == 1.0 / attrs.counts[attrs.item[k] as usize] as f64;
        }
    }
    verdict(
        4,
        worst_sum <= 1e-6 && worst_shift <= 1e-6 && uniform_exact,
        &format!(
            "100 graphs, max |sum alpha - 1| {worst_sum:.1e}, max shift diff {worst_shift:.1e}, uniform exact {uniform_exact}"
        ),
    );
}

#[test]
fn criterion_8_training_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let synth = SynthConfig {
        users: 60,
        items: 80,
        clusters: 3,
        ..SynthConfig::default()
    };
    let prepared = prepare(&generate(&synth).raw, &PrepareOptions::default()).unwrap();
    write_processed(dir.path().join("processed"), &prepared, false).unwrap();

    let run = |name: &str| -> PathBuf {
        let mut cfg = RunConfig {
            seed: 17,
            ..RunConfig::default()
        };
        cfg.data.processed = dir.path().join("processed");
        cfg.out = dir.path().join(name);
        cfg.model.dim = 16;
        cfg.train.epochs = 6;
        cfg.train.eval_every = 2;
        cfg.train.batch_size = 128;
        cfg.train.learning_rate = 0.005;
        cmd_train(&cfg, false).unwrap();
        cfg.out
    };
    let (a, b) = (run("a"), run("b"));
    let same = |f: &str| std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap();
    let (history, ckpt) = (same(HISTORY_FILE), same(CHECKPOINT_FILE));
    verdict(
        8,
        history && ckpt,
        &format!("two seeded runs: history identical {history}, checkpoint identical {ckpt}"),
    );
}

const LASTFM_COUNTS: [(&str, usize); 6] = [
    ("users", 1_815),
    ("items", 3_846),
    ("interactions", 20_996),
    ("entities", 9_366),
    ("relations", 60),
    ("triplets", 15_518),
];

fn lastfm_dir(n: u32) -> PathBuf {
    match std::env::var_os("KDAR_LASTFM_DIR") {
        Some(d) => PathBuf::from(d),
        None => {
            verdict(n, false, "KDAR_LASTFM_DIR is not set; the Last.FM release is required");
            unreachable!()
        }
    }
}

/// Default hyperparameters on the Last.FM raw files.
fn lastfm_config(raw: &Path, work: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.data.interactions = raw.join("interactions.txt");
    cfg.data.kg = raw.join("kg.txt");
    cfg.data.format = "ratings".into();
    cfg.data.rating_threshold = 1.0;
    cfg.data.processed = work.join("processed");
    cfg.out = work.join("run");
    cfg
}

struct LastFm {
    _work: tempfile::TempDir,
    cfg: RunConfig,
    full: RankingReport,
}

fn lastfm_full(n: u32) -> &'static LastFm {
    static FULL: OnceLock<LastFm> = OnceLock::new();
    let raw = lastfm_dir(n);
    FULL.get_or_init(|| {
        let work = tempfile::tempdir().unwrap();
        let cfg = lastfm_config(&raw, work.path());
        cmd_prepare(&cfg, true).unwrap();
        let full = cmd_train(&cfg, true).unwrap().report;
        LastFm { _work: work, cfg, full }
    })
}

fn recall20(r: &RankingReport) -> f64 {
    r.recall_at(20).unwrap_or(f64::NAN)
}

fn variant(base: &LastFm, name: &str, edit: impl FnOnce(&mut RunConfig)) -> RankingReport {
    let mut cfg = base.cfg.clone();
    cfg.out = cfg.out.with_file_name(name);
    edit(&mut cfg);
    cmd_train(&cfg, true).unwrap().report
}

#[test]
#[ignore = "needs the Last.FM release in KDAR_LASTFM_DIR"]
fn criterion_5_lastfm_end_to_end() {
    let run = lastfm_full(5);
    let (r, n) = (recall20(&run.full), run.full.ndcg_at(20).unwrap_or(f64::NAN));
    verdict(
        5,
        r >= 0.36 && n >= 0.19,
        &format!("Recall@20 {r:.4} (>= 0.36), NDCG@20 {n:.4} (>= 0.19)"),
    );
}

#[test]
#[ignore = "needs the Last.FM release in KDAR_LASTFM_DIR"]
fn criterion_6_lastfm_ablation_direction() {
    let run = lastfm_full(6);
    let no_cg = variant(run, "no_cg", |c| c.model.no_cg = true);
    let no_enh = variant(run, "no_enhancement", |c| c.model.no_enhancement = true);
    let (f, a, b) = (recall20(&run.full), recall20(&no_cg), recall20(&no_enh));
    verdict(
        6,
        f > a && f > b,
        &format!("Recall@20 full {f:.4}, w/o CG {a:.4}, w/o Enhancement {b:.4}"),
    );
}

#[test]
#[ignore = "needs the Last.FM release in KDAR_LASTFM_DIR"]
fn criterion_7_lastfm_temperature_trend() {
    let run = lastfm_full(7);
    let cold = variant(run, "tau_0.1", |c| c.model.tau = 0.1);
    let (hi, lo) = (recall20(&run.full), recall20(&cold));
    verdict(
        7,
        hi >= lo,
        &format!("Recall@20 at tau 1.0 {hi:.4}, at tau 0.1 {lo:.4}"),
    );
}

#[test]
#[ignore = "needs the Last.FM release in KDAR_LASTFM_DIR"]
fn criterion_9_lastfm_pipeline_counts() {
    let raw = lastfm_dir(9);
    let work = tempfile::tempdir().unwrap();
    let cfg = lastfm_config(&raw, work.path());
    let log = cmd_prepare(&cfg, true).unwrap();
    let stats: DatasetStats = load_processed(&cfg.data.processed).unwrap().stats;
    let got = [
        stats.users,
        stats.items,
        stats.interactions,
        stats.entities,
        stats.relations,
        stats.triplets,
    ];
    let diffs: Vec<String> = LASTFM_COUNTS
        .iter()
        .zip(got)
        .filter(|((_, want), g)| want != g)
        .map(|((k, want), g)| format!("{k} {g} != {want}"))
        .collect();
    if !diffs.is_empty() {
        println!("pipeline stages:\n{log}");
    }
    verdict(9, diffs.is_empty(), &format!("{got:?}; deviations: {diffs:?}"));
}
