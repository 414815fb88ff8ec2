//! All-ranking evaluation with Recall@K, NDCG@K and AUC, plus tercile
//! breakdowns by user activity and by the popularity of a user's items.

mod metrics;

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::ingest::InteractionTable;
use crate::model::Embeddings;
use crate::numerics::Real;

pub use metrics::{auc, ndcg_at_k, rank_all, recall_at_k};

pub const DEFAULT_KS: [usize; 5] = [5, 10, 20, 50, 100];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("unknown group mode `{0}` (expected cold-start or long-tail)")]
    UnknownMode(String),
    #[error("no test users to evaluate")]
    NoTestUsers,
    #[error("cutoff list is empty or contains 0")]
    BadCutoffs,
}

/// Metrics of one test user.
#[derive(Clone, Debug, PartialEq)]
pub struct UserRecord {
    pub user: u32,
    pub train_degree: usize,
    /// Mean train-set interaction count of the user's train items.
    pub mean_item_popularity: f64,
    /// Aligned with [`RankingReport::ks`].
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankingReport {
    pub ks: Vec<usize>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    /// Mean over users that have at least one negative candidate.
    pub auc: f64,
    pub users: Vec<UserRecord>,
}

impl RankingReport {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    fn k_index(&self, k: usize) -> Option<usize> {
        self.ks.iter().position(|&x| x == k)
    }

    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.k_index(k).map(|j| self.recall[j])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.k_index(k).map(|j| self.ndcg[j])
    }

    /// Aggregates user records (arithmetic means).
    pub fn from_records(ks: Vec<usize>, users: Vec<UserRecord>) -> Self {
        let n = users.len().max(1) as f64;
        let mut recall = vec![0.0; ks.len()];
        let mut ndcg = vec![0.0; ks.len()];
        let (mut auc_sum, mut auc_n) = (0.0, 0usize);
        for r in &users {
            for j in 0..ks.len() {
                recall[j] += r.recall[j];
                ndcg[j] += r.ndcg[j];
            }
            if let Some(a) = r.auc {
                auc_sum += a;
                auc_n += 1;
            }
        }
        recall.iter_mut().chain(ndcg.iter_mut()).for_each(|v| *v /= n);
        let auc = if auc_n == 0 { 0.0 } else { auc_sum / auc_n as f64 };
        Self {
            ks,
            recall,
            ndcg,
            auc,
            users,
        }
    }

    /// `metric@K<TAB>value` lines.
    pub fn to_kv(&self) -> String {
        self.kv_with_prefix("")
    }

    fn kv_with_prefix(&self, prefix: &str) -> String {
        let mut s = String::new();
        for (j, k) in self.ks.iter().enumerate() {
            let _ = writeln!(s, "{prefix}recall@{k}\t{:.6}", self.recall[j]);
        }
        for (j, k) in self.ks.iter().enumerate() {
            let _ = writeln!(s, "{prefix}ndcg@{k}\t{:.6}", self.ndcg[j]);
        }
        let _ = writeln!(s, "{prefix}auc\t{:.6}", self.auc);
        let _ = writeln!(s, "{prefix}users\t{}", self.users.len());
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>6}  {:>9}  {:>9}", "K", "Recall", "NDCG");
        for (j, k) in self.ks.iter().enumerate() {
            let _ = writeln!(s, "{k:>6}  {:>9.4}  {:>9.4}", self.recall[j], self.ndcg[j]);
        }
        let _ = writeln!(s, "AUC {:.4} over {} users", self.auc, self.users.len());
        s
    }
}

fn check_ks(ks: &[usize]) -> Result<(), EvalError> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(EvalError::BadCutoffs);
    }
    Ok(())
}

/// Evaluates an arbitrary scorer (`user -> score per item`) over every user
/// with test items, in parallel. The result does not depend on the thread
/// count.
pub fn evaluate_scores<F>(score: F, table: &InteractionTable, ks: &[usize]) -> Result<RankingReport, EvalError>
where
    F: Fn(u32) -> Vec<f64> + Sync,
{
    check_ks(ks)?;
    let users = table.test_users();
    if users.is_empty() {
        return Err(EvalError::NoTestUsers);
    }
    let max_k = *ks.iter().max().unwrap();
    let records: Vec<UserRecord> = users
        .par_iter()
        .map(|&u| {
            let scores = score(u);
            let train = &table.user_train_items[u as usize];
            let test = &table.user_test_items[u as usize];
            let mut ranking = rank_all(&scores, train);
            ranking.truncate(max_k);
            let pop = if train.is_empty() {
                0.0
            } else {
                train
                    .iter()
                    .map(|&i| table.item_train_users[i as usize].len() as f64)
                    .sum::<f64>()
                    / train.len() as f64
            };
            UserRecord {
                user: u,
                train_degree: train.len(),
                mean_item_popularity: pop,
                recall: ks.iter().map(|&k| recall_at_k(&ranking, test, k)).collect(),
                ndcg: ks.iter().map(|&k| ndcg_at_k(&ranking, test, k)).collect(),
                auc: auc(&scores, train, test),
            }
        })
        .collect();
    Ok(RankingReport::from_records(ks.to_vec(), records))
}

/// Evaluates final model representations.
pub fn evaluate<T: Real>(
    emb: &Embeddings<T>,
    table: &InteractionTable,
    ks: &[usize],
) -> Result<RankingReport, EvalError> {
    evaluate_scores(|u| emb.score_all(u).into_iter().map(Real::as_f64).collect(), table, ks)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupMode {
    /// Train interaction count.
    ColdStart,
    /// Mean popularity of the user's train items.
    LongTail,
}

impl GroupMode {
    pub fn name(self) -> &'static str {
        match self {
            GroupMode::ColdStart => "cold-start",
            GroupMode::LongTail => "long-tail",
        }
    }

    fn key(self, r: &UserRecord) -> f64 {
        match self {
            GroupMode::ColdStart => r.train_degree as f64,
            GroupMode::LongTail => r.mean_item_popularity,
        }
    }
}

impl FromStr for GroupMode {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cold-start" | "interaction-count" => Ok(GroupMode::ColdStart),
            "long-tail" | "item-popularity" => Ok(GroupMode::LongTail),
            other => Err(EvalError::UnknownMode(other.to_string())),
        }
    }
}

/// Three user groups split at the tercile values of the grouping key:
/// group 0 has `key <= b1`, group 1 `b1 < key <= b2`, group 2 `key > b2`,
/// where `b1`, `b2` are the keys at sorted ranks `ceil(n/3)` and
/// `ceil(2n/3)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupReport {
    pub mode: GroupMode,
    pub boundaries: (f64, f64),
    pub groups: Vec<RankingReport>,
}

pub fn tercile_boundaries(keys: &[f64]) -> (f64, f64) {
    let mut sorted = keys.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let at = |rank: usize| sorted[rank.clamp(1, n) - 1];
    (at(n.div_ceil(3)), at((2 * n).div_ceil(3)))
}

pub fn group_report(report: &RankingReport, mode: GroupMode) -> GroupReport {
    let keys: Vec<f64> = report.users.iter().map(|r| mode.key(r)).collect();
    let (b1, b2) = tercile_boundaries(&keys);
    let mut parts: [Vec<UserRecord>; 3] = Default::default();
    for (r, &k) in report.users.iter().zip(&keys) {
        let g = if k <= b1 {
            0
        } else if k <= b2 {
            1
        } else {
            2
        };
        parts[g].push(r.clone());
    }
    GroupReport {
        mode,
        boundaries: (b1, b2),
        groups: parts
            .into_iter()
            .map(|users| RankingReport::from_records(report.ks.clone(), users))
            .collect(),
    }
}

impl GroupReport {
    fn label(&self, g: usize) -> String {
        let (b1, b2) = self.boundaries;
        match g {
            0 => format!("key <= {b1}"),
            1 => format!("{b1} < key <= {b2}"),
            _ => format!("key > {b2}"),
        }
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[{}]", self.mode.name());
        let _ = writeln!(s, "boundaries\t{}\t{}", self.boundaries.0, self.boundaries.1);
        for (g, rep) in self.groups.iter().enumerate() {
            let _ = writeln!(s, "[{}.group{g}]\t{}", self.mode.name(), self.label(g));
            s.push_str(&rep.kv_with_prefix(""));
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{} groups (b1 = {}, b2 = {})\n",
            self.mode.name(),
            self.boundaries.0,
            self.boundaries.1
        );
        for (g, rep) in self.groups.iter().enumerate() {
            let _ = writeln!(s, "group {g} ({}): {} users", self.label(g), rep.num_users());
            s.push_str(&rep.to_table());
        }
        s
    }
}
