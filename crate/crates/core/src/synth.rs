//! Planted synthetic datasets for tests, examples and benchmarks.
//!
//! Users and items are assigned to latent clusters. Users mostly interact
//! with items of their own cluster, with Zipf-like popularity inside each
//! cluster, and items carry cluster-specific KG attributes, so both the
//! collaborative signal and the knowledge graph are informative.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::RawDataset;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub users: usize,
    pub items: usize,
    pub clusters: usize,
    /// Interactions per user are drawn uniformly from this inclusive range.
    pub min_interactions: usize,
    pub max_interactions: usize,
    /// Probability that an interaction ignores the user's cluster.
    pub noise: f64,
    /// Tag entities per cluster.
    pub tags_per_cluster: usize,
    /// Tags attached to each item.
    pub tags_per_item: usize,
    /// Fraction of items left without KG attributes.
    pub items_without_kg: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            users: 200,
            items: 300,
            clusters: 6,
            min_interactions: 8,
            max_interactions: 24,
            noise: 0.15,
            tags_per_cluster: 4,
            tags_per_item: 2,
            items_without_kg: 0.05,
            seed: 7,
        }
    }
}

impl SynthConfig {
    /// A handful of users and items, enough for gradient checks.
    pub fn tiny() -> Self {
        Self {
            users: 6,
            items: 7,
            clusters: 2,
            min_interactions: 2,
            max_interactions: 4,
            noise: 0.2,
            tags_per_cluster: 2,
            tags_per_item: 1,
            items_without_kg: 0.2,
            seed: 11,
        }
    }
}

/// Token-level dataset plus the planted cluster of every user and item.
#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub raw: RawDataset,
    pub user_cluster: Vec<usize>,
    pub item_cluster: Vec<usize>,
}

pub fn generate(cfg: &SynthConfig) -> SynthDataset {
    assert!(
        cfg.clusters >= 1 && cfg.items >= cfg.clusters,
        "need at least one item per cluster"
    );
    assert!(cfg.min_interactions <= cfg.max_interactions);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let c = cfg.clusters;
    let item_cluster: Vec<usize> = (0..cfg.items).map(|i| i % c).collect();
    let user_cluster: Vec<usize> = (0..cfg.users).map(|u| u % c).collect();
    let members: Vec<Vec<usize>> = (0..c)
        .map(|k| (0..cfg.items).filter(|&i| item_cluster[i] == k).collect())
        .collect();
    let zipf = |n: usize| WeightedIndex::new((0..n).map(|r| 1.0 / (r as f64 + 1.0).sqrt())).unwrap();
    let within: Vec<WeightedIndex<f64>> = members.iter().map(|m| zipf(m.len())).collect();
    let global = zipf(cfg.items);

    let mut interactions = Vec::new();
    for (u, &k) in user_cluster.iter().enumerate() {
        let n = rng
            .gen_range(cfg.min_interactions..=cfg.max_interactions)
            .min(cfg.items);
        let mut owned = std::collections::BTreeSet::new();
        let mut attempts = 0;
        while owned.len() < n && attempts < 50 * n {
            attempts += 1;
            let item = if rng.gen_bool(cfg.noise) {
                global.sample(&mut rng)
            } else {
                members[k][within[k].sample(&mut rng)]
            };
            owned.insert(item);
        }
        interactions.extend(owned.into_iter().map(|i| (format!("u{u}"), format!("i{i}"))));
    }

    let mut triplets = Vec::new();
    for (i, &k) in item_cluster.iter().enumerate() {
        if rng.gen_bool(cfg.items_without_kg) {
            continue;
        }
        triplets.push((format!("i{i}"), "genre".to_string(), format!("genre{k}")));
        for _ in 0..cfg.tags_per_item {
            let t = rng.gen_range(0..cfg.tags_per_cluster.max(1));
            let tag = (format!("i{i}"), "tag".to_string(), format!("tag{k}_{t}"));
            if !triplets.contains(&tag) {
                triplets.push(tag);
            }
        }
    }
    for k in 0..c {
        triplets.push((format!("genre{k}"), "broader".to_string(), "music".to_string()));
    }

    SynthDataset {
        raw: RawDataset {
            interactions,
            triplets,
            duplicate_interactions: 0,
            duplicate_triplets: 0,
        },
        user_cluster,
        item_cluster,
    }
}

/// Writes `interactions.txt` (`user item` lines) and `kg.txt`
/// (`head relation tail` lines).
pub fn write_raw(dir: impl AsRef<Path>, raw: &RawDataset) -> io::Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut f = io::BufWriter::new(fs::File::create(dir.join("interactions.txt"))?);
    for (u, i) in &raw.interactions {
        writeln!(f, "{u} {i}")?;
    }
    f.flush()?;
    let mut f = io::BufWriter::new(fs::File::create(dir.join("kg.txt"))?);
    for (h, r, t) in &raw.triplets {
        writeln!(f, "{h} {r} {t}")?;
    }
    f.flush()
}
