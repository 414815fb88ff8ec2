use std::cmp::Ordering;

/// Non-train items ordered by descending score, ties by ascending id.
/// `train_items` must be sorted.
pub fn rank_all(scores: &[f64], train_items: &[u32]) -> Vec<u32> {
    let mut items: Vec<u32> = (0..scores.len() as u32)
        .filter(|i| train_items.binary_search(i).is_err())
        .collect();
    items.sort_unstable_by(|&a, &b| by_score_desc(scores, a, b));
    items
}

fn by_score_desc(scores: &[f64], a: u32, b: u32) -> Ordering {
    scores[b as usize].total_cmp(&scores[a as usize]).then(a.cmp(&b))
}

/// `|top-k ∩ test| / |test|`. `test` must be sorted.
pub fn recall_at_k(ranking: &[u32], test: &[u32], k: usize) -> f64 {
    if test.is_empty() {
        return 0.0;
    }
    hits(ranking, test, k) as f64 / test.len() as f64
}

fn hits(ranking: &[u32], test: &[u32], k: usize) -> usize {
    ranking.iter().take(k).filter(|i| test.binary_search(i).is_ok()).count()
}

/// Binary-relevance NDCG with a `log2(p + 1)` discount and IDCG truncated at
/// `min(|test|, k)`.
pub fn ndcg_at_k(ranking: &[u32], test: &[u32], k: usize) -> f64 {
    let ideal = test.len().min(k);
    if ideal == 0 {
        return 0.0;
    }
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| test.binary_search(i).is_ok())
        .map(|(p, _)| discount(p + 1))
        .sum();
    let idcg: f64 = (1..=ideal).map(discount).sum();
    dcg / idcg
}

#[inline]
fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Pairwise AUC over the non-train items: the fraction of (test, other)
/// pairs where the test item scores higher, ties counting one half. `None`
/// when either side is empty. Both lists must be sorted.
pub fn auc(scores: &[f64], train_items: &[u32], test: &[u32]) -> Option<f64> {
    let mut cand: Vec<(f64, bool)> = (0..scores.len() as u32)
        .filter(|i| train_items.binary_search(i).is_err())
        .map(|i| (scores[i as usize], test.binary_search(&i).is_ok()))
        .collect();
    let n_pos = cand.iter().filter(|c| c.1).count();
    let n_neg = cand.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    cand.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

    // Mann-Whitney U with mid-ranks for ties.
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < cand.len() {
        let mut end = start + 1;
        while end < cand.len() && cand[end].0 == cand[start].0 {
            end += 1;
        }
        let mid_rank = (start + 1 + end) as f64 / 2.0;
        let pos_in_run = cand[start..end].iter().filter(|c| c.1).count();
        rank_sum += mid_rank * pos_in_run as f64;
        start = end;
    }
    let p = n_pos as f64;
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n_neg as f64))
}
