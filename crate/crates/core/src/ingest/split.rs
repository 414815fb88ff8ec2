use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{IngestError, InteractionTable};

/// Per-user random split: `ceil(ratio * deg(u))` pairs of each user go to
/// train, the rest to test. Users are visited in id order with one seeded
/// stream, so the split is a pure function of `(pairs, ratio, seed)`.
pub fn split_train_test(
    pairs: &[(u32, u32)],
    num_users: usize,
    num_items: usize,
    ratio: f64,
    seed: u64,
) -> Result<InteractionTable, IngestError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(IngestError::InvalidArgument(format!(
            "train ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let mut per_user: Vec<Vec<u32>> = vec![Vec::new(); num_users];
    for &(u, i) in pairs {
        per_user
            .get_mut(u as usize)
            .ok_or_else(|| IngestError::InvalidArgument(format!("user {u} >= {num_users}")))?
            .push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(pairs.len());
    let mut test = Vec::with_capacity(pairs.len() / 4);
    for (u, items) in per_user.iter_mut().enumerate() {
        items.sort_unstable();
        items.dedup();
        items.shuffle(&mut rng);
        let n_train = train_count(items.len(), ratio);
        for (k, &i) in items.iter().enumerate() {
            if k < n_train {
                train.push((u as u32, i));
            } else {
                test.push((u as u32, i));
            }
        }
    }
    InteractionTable::from_pairs(num_users, num_items, train, test)
}

/// `ceil(ratio * n)`, robust to the product landing a hair above an integer.
pub(crate) fn train_count(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64) - 1e-9).ceil().max(0.0) as usize
}
