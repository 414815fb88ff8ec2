//! Independent reference evaluations shared by the oracle and acceptance
//! targets.

use std::collections::BTreeSet;

use kdar::ingest::{InteractionTable, KnowledgeGraphStore};
use kdar::numerics::{ParameterStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rows = Vec<Vec<f64>>;

pub fn rows(t: &Tensor<f64>) -> Rows {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub fn param(store: &ParameterStore<f64>, name: &str) -> Rows {
    rows(store.get(store.id(name).unwrap()))
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn had(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

pub fn scaled(a: &[f64], c: f64) -> Vec<f64> {
    a.iter().map(|x| x * c).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn assert_close(got: &Tensor<f64>, want: &Rows, tol: f64, what: &str) {
    assert_eq!(got.rows(), want.len(), "{what}: row count");
    for (r, w) in want.iter().enumerate() {
        for (c, &v) in w.iter().enumerate() {
            let g = got.get(r, c);
            assert!((g - v).abs() <= tol, "{what}[{r}][{c}]: {g} vs {v}");
        }
    }
}

/// Dense `sum_{l=0..L} (D^-1/2 A D^-1/2)^l X0` over users then items.
pub fn dense_cg(table: &InteractionTable, x0: &Rows, layers: usize) -> Rows {
    let (nu, n) = (table.num_users, table.num_users + table.num_items);
    let mut a = vec![vec![0.0; n]; n];
    for &(u, i) in &table.train_pairs {
        a[u as usize][nu + i as usize] = 1.0;
        a[nu + i as usize][u as usize] = 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let norm = Tensor::from_vec(
        n,
        n,
        (0..n * n)
            .map(|k| {
                let (r, c) = (k / n, k % n);
                if a[r][c] == 0.0 {
                    0.0
                } else {
                    1.0 / (deg[r] * deg[c]).sqrt()
                }
            })
            .collect(),
    )
    .unwrap();
    let d = x0[0].len();
    let mut x = Tensor::from_vec(n, d, x0.concat()).unwrap();
    let mut acc = rows(&x);
    for _ in 0..layers {
        x = norm.matmul(&x).unwrap();
        acc = acc.iter().zip(rows(&x)).map(|(a, b)| add(a, &b)).collect();
    }
    acc
}

/// `(relation, tail)` sets per head, with inverse relations, built from the
/// raw triplets.
pub fn neighbor_sets(kg: &KnowledgeGraphStore) -> Vec<BTreeSet<(usize, usize)>> {
    let mut n = vec![BTreeSet::new(); kg.num_entities];
    for t in &kg.triplets {
        let (h, r, tl) = (t.head as usize, t.relation as usize, t.tail as usize);
        n[h].insert((r, tl));
        n[tl].insert((r + kg.num_relations, h));
    }
    n
}

pub fn kg_layer(nbrs: &[BTreeSet<(usize, usize)>], e0: &Rows, rel: &Rows, l: usize, h: usize) -> Vec<f64> {
    if l == 0 {
        return e0[h].clone();
    }
    let d = e0[0].len();
    if nbrs[h].is_empty() {
        return vec![0.0; d];
    }
    let mut s = vec![0.0; d];
    for &(r, t) in &nbrs[h] {
        s = add(&s, &had(&rel[r], &kg_layer(nbrs, e0, rel, l - 1, t)));
    }
    scaled(&s, 1.0 / nbrs[h].len() as f64)
}

/// Scores with deliberate ties, a sorted train list and a sorted disjoint
/// test list.
pub fn instance(seed: u64) -> (Vec<f64>, Vec<u32>, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=100);
    let levels = rng.gen_range(1..=n);
    let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 / 7.0).collect();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for i in 0..n as u32 {
        match rng.gen_range(0..10) {
            0..=1 => train.push(i),
            2..=3 => test.push(i),
            _ => {}
        }
    }
    if test.is_empty() {
        let i = (0..n as u32).find(|i| !train.contains(i)).unwrap_or(0);
        train.retain(|&t| t != i);
        test.push(i);
    }
    (scores, train, test)
}

pub fn brute_ranking(scores: &[f64], train: &[u32]) -> Vec<u32> {
    let mut cand: Vec<u32> = (0..scores.len() as u32).filter(|i| !train.contains(i)).collect();
    // insertion sort on (score desc, id asc)
    for a in 1..cand.len() {
        let mut b = a;
        while b > 0 {
            let (x, y) = (cand[b - 1], cand[b]);
            let later = scores[x as usize] < scores[y as usize] || (scores[x as usize] == scores[y as usize] && x > y);
            if !later {
                break;
            }
            cand.swap(b - 1, b);
            b -= 1;
        }
    }
    cand
}

pub fn brute_recall(ranking: &[u32], test: &[u32], k: usize) -> f64 {
    let top: Vec<u32> = ranking.iter().take(k).copied().collect();
    test.iter().filter(|t| top.contains(t)).count() as f64 / test.len() as f64
}

pub fn brute_ndcg(ranking: &[u32], test: &[u32], k: usize) -> f64 {
    let mut dcg = 0.0;
    for (p, i) in ranking.iter().take(k).enumerate() {
        if test.contains(i) {
            dcg += 1.0 / ((p + 2) as f64).log2();
        }
    }
    let idcg: f64 = (0..test.len().min(k)).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
    dcg / idcg
}

pub fn brute_auc(scores: &[f64], train: &[u32], test: &[u32]) -> Option<f64> {
    let negs: Vec<u32> = (0..scores.len() as u32)
        .filter(|i| !train.contains(i) && !test.contains(i))
        .collect();
    if negs.is_empty() || test.is_empty() {
        return None;
    }
    let mut s = 0.0;
    for &p in test {
        for &n in &negs {
            let (a, b) = (scores[p as usize], scores[n as usize]);
            s += if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(s / (test.len() * negs.len()) as f64)
}
