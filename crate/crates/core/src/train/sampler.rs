use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::ingest::InteractionTable;

/// Parallel `(user, positive, negative)` index lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TripletBatch {
    pub users: Arc<[u32]>,
    pub pos: Arc<[u32]>,
    pub neg: Arc<[u32]>,
}

impl TripletBatch {
    pub fn new(users: Vec<u32>, pos: Vec<u32>, neg: Vec<u32>) -> Self {
        assert!(
            users.len() == pos.len() && pos.len() == neg.len(),
            "triplet lists differ in length"
        );
        Self {
            users: users.into(),
            pos: pos.into(),
            neg: neg.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// Distinct users, ascending.
    pub fn unique_users(&self) -> Arc<[u32]> {
        let mut v = self.users.to_vec();
        v.sort_unstable();
        v.dedup();
        v.into()
    }
}

const MAX_REJECTIONS: usize = 64;

/// Uniform item outside `owned` (sorted). Tries rejection sampling first and
/// falls back to indexing the complement directly, so dense users stay
/// uniform. `None` when the user owns every item.
pub fn sample_negative<R: Rng>(owned: &[u32], num_items: usize, rng: &mut R) -> Option<u32> {
    if owned.len() >= num_items {
        return None;
    }
    for _ in 0..MAX_REJECTIONS {
        let j = rng.gen_range(0..num_items as u32);
        if owned.binary_search(&j).is_err() {
            return Some(j);
        }
    }
    // The k-th free item is k plus the number of owned items at or below it.
    let mut k = rng.gen_range(0..(num_items - owned.len()) as u32);
    for &o in owned {
        if o <= k {
            k += 1;
        } else {
            break;
        }
    }
    Some(k)
}

/// One epoch of shuffled training triplets.
#[derive(Clone, Debug)]
pub struct EpochBatches {
    pub batches: Vec<TripletBatch>,
    /// Pairs dropped because their user owns every item.
    pub skipped: usize,
}

/// Every train pair once, in shuffled order, each with one uniform
/// negative, chunked into batches of `batch_size`.
pub fn sample_epoch_batches<R: Rng>(table: &InteractionTable, batch_size: usize, rng: &mut R) -> EpochBatches {
    assert!(batch_size > 0, "batch size must be positive");
    let mut order: Vec<usize> = (0..table.train_pairs.len()).collect();
    order.shuffle(rng);

    let mut skipped = 0;
    let mut batches = Vec::with_capacity(order.len().div_ceil(batch_size));
    for chunk in order.chunks(batch_size) {
        let (mut us, mut ps, mut ns) = (
            Vec::with_capacity(chunk.len()),
            Vec::with_capacity(chunk.len()),
            Vec::with_capacity(chunk.len()),
        );
        for &k in chunk {
            let (u, i) = table.train_pairs[k];
            match sample_negative(&table.user_train_items[u as usize], table.num_items, rng) {
                Some(j) => {
                    us.push(u);
                    ps.push(i);
                    ns.push(j);
                }
                None => skipped += 1,
            }
        }
        if !us.is_empty() {
            batches.push(TripletBatch::new(us, ps, ns));
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} training pairs whose user has interacted with every item");
    }
    EpochBatches { batches, skipped }
}
