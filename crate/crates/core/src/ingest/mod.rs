//! Raw interaction/KG parsing, user-side core filtering, id remapping and
//! the per-user train/test split.

mod processed;
mod raw;
mod split;
mod vocab;

pub use processed::{load_processed, write_processed, ProcessedDataset};
pub use raw::{load_interactions, load_kg, parse_interactions, parse_kg, InteractionFormat, RawDataset, RawKg};
pub use split::split_train_test;
pub use vocab::Vocab;

use std::collections::HashMap;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("{0}: no interactions")]
    EmptyDataset(String),
    #[error("no users left after {k}-core filtering")]
    EmptyAfterFilter { k: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("output directory {0} is not empty (use --force to overwrite)")]
    OutputExists(PathBuf),
    #[error("processed dataset: {0}")]
    Processed(String),
}

/// Dense user-item implicit feedback, split into train and test.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionTable {
    pub num_users: usize,
    pub num_items: usize,
    /// Sorted by `(user, item)`.
    pub train_pairs: Vec<(u32, u32)>,
    /// Sorted by `(user, item)`.
    pub test_pairs: Vec<(u32, u32)>,
    pub user_train_items: Vec<Vec<u32>>,
    pub item_train_users: Vec<Vec<u32>>,
    pub user_test_items: Vec<Vec<u32>>,
}

impl InteractionTable {
    /// Builds the per-user and per-item views. Ids must be in range and
    /// train/test must be disjoint.
    pub fn from_pairs(
        num_users: usize,
        num_items: usize,
        mut train_pairs: Vec<(u32, u32)>,
        mut test_pairs: Vec<(u32, u32)>,
    ) -> Result<Self, IngestError> {
        let check = |pairs: &[(u32, u32)], what: &str| -> Result<(), IngestError> {
            if let Some(&(u, i)) = pairs
                .iter()
                .find(|&&(u, i)| u as usize >= num_users || i as usize >= num_items)
            {
                return Err(IngestError::InvalidArgument(format!(
                    "{what} pair ({u}, {i}) outside {num_users} users x {num_items} items"
                )));
            }
            Ok(())
        };
        check(&train_pairs, "train")?;
        check(&test_pairs, "test")?;
        train_pairs.sort_unstable();
        train_pairs.dedup();
        test_pairs.sort_unstable();
        test_pairs.dedup();
        if let Some(p) = test_pairs.iter().find(|p| train_pairs.binary_search(p).is_ok()) {
            return Err(IngestError::InvalidArgument(format!(
                "pair {p:?} is in both train and test"
            )));
        }

        let mut user_train_items = vec![Vec::new(); num_users];
        let mut item_train_users = vec![Vec::new(); num_items];
        for &(u, i) in &train_pairs {
            user_train_items[u as usize].push(i);
            item_train_users[i as usize].push(u);
        }
        let mut user_test_items = vec![Vec::new(); num_users];
        for &(u, i) in &test_pairs {
            user_test_items[u as usize].push(i);
        }
        // train_pairs is sorted by user then item, so user lists are sorted;
        // item lists are filled in user order and hence sorted too.
        Ok(Self {
            num_users,
            num_items,
            train_pairs,
            test_pairs,
            user_train_items,
            item_train_users,
            user_test_items,
        })
    }

    /// Users with at least one test item, ascending.
    pub fn test_users(&self) -> Vec<u32> {
        (0..self.num_users as u32)
            .filter(|&u| !self.user_test_items[u as usize].is_empty())
            .collect()
    }

    pub fn num_interactions(&self) -> usize {
        self.train_pairs.len() + self.test_pairs.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triplet {
    pub head: u32,
    pub relation: u32,
    pub tail: u32,
}

/// Remapped KG. Items occupy entity ids `0..num_items`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnowledgeGraphStore {
    pub num_entities: usize,
    pub num_relations: usize,
    pub num_items: usize,
    pub triplets: Vec<Triplet>,
}

impl KnowledgeGraphStore {
    pub fn new(
        num_entities: usize,
        num_relations: usize,
        num_items: usize,
        triplets: Vec<Triplet>,
    ) -> Result<Self, IngestError> {
        if num_items > num_entities {
            return Err(IngestError::InvalidArgument(format!(
                "{num_items} items but only {num_entities} entities"
            )));
        }
        if let Some(t) = triplets.iter().find(|t| {
            t.head as usize >= num_entities || t.tail as usize >= num_entities || t.relation as usize >= num_relations
        }) {
            return Err(IngestError::InvalidArgument(format!(
                "triplet {t:?} out of range ({num_entities} entities, {num_relations} relations)"
            )));
        }
        Ok(Self {
            num_entities,
            num_relations,
            num_items,
            triplets,
        })
    }

    /// A KG with no triplets whose entities are exactly the items.
    pub fn empty(num_items: usize) -> Self {
        Self {
            num_entities: num_items,
            num_relations: 0,
            num_items,
            triplets: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub entities: usize,
    pub relations: usize,
    pub triplets: usize,
    pub train_interactions: usize,
    pub test_interactions: usize,
}

impl DatasetStats {
    pub const KEYS: [&'static str; 8] = [
        "users",
        "items",
        "interactions",
        "entities",
        "relations",
        "triplets",
        "train_interactions",
        "test_interactions",
    ];

    fn values(&self) -> [usize; 8] {
        [
            self.users,
            self.items,
            self.interactions,
            self.entities,
            self.relations,
            self.triplets,
            self.train_interactions,
            self.test_interactions,
        ]
    }

    /// `key=value` lines.
    pub fn to_text(&self) -> String {
        Self::KEYS
            .iter()
            .zip(self.values())
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self, IngestError> {
        let mut map = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| IngestError::Parse {
                source_name: "stats.txt".into(),
                line: n + 1,
                message: "expected key=value".into(),
            })?;
            let v: usize = v.trim().parse().map_err(|_| IngestError::Parse {
                source_name: "stats.txt".into(),
                line: n + 1,
                message: format!("`{v}` is not a count"),
            })?;
            map.insert(k.trim().to_string(), v);
        }
        let get = |k: &str| {
            map.get(k)
                .copied()
                .ok_or_else(|| IngestError::Processed(format!("stats.txt lacks `{k}`")))
        };
        Ok(Self {
            users: get("users")?,
            items: get("items")?,
            interactions: get("interactions")?,
            entities: get("entities")?,
            relations: get("relations")?,
            triplets: get("triplets")?,
            train_interactions: get("train_interactions")?,
            test_interactions: get("test_interactions")?,
        })
    }
}

pub fn compute_stats(table: &InteractionTable, kg: &KnowledgeGraphStore) -> DatasetStats {
    DatasetStats {
        users: table.num_users,
        items: table.num_items,
        interactions: table.num_interactions(),
        entities: kg.num_entities,
        relations: kg.num_relations,
        triplets: kg.triplets.len(),
        train_interactions: table.train_pairs.len(),
        test_interactions: table.test_pairs.len(),
    }
}

/// Keeps users with at least `k` interactions. Items are implied by the
/// remaining interactions, so items left without any are dropped with them.
/// Applied once; no joint user/item fixpoint.
pub fn apply_core_filter(raw: &RawDataset, k: usize) -> Result<RawDataset, IngestError> {
    if k == 0 {
        return Err(IngestError::InvalidArgument("core size must be >= 1".into()));
    }
    let mut degree: HashMap<&str, usize> = HashMap::new();
    for (u, _) in &raw.interactions {
        *degree.entry(u.as_str()).or_default() += 1;
    }
    let interactions: Vec<(String, String)> = raw
        .interactions
        .iter()
        .filter(|(u, _)| degree[u.as_str()] >= k)
        .cloned()
        .collect();
    if interactions.is_empty() {
        return Err(IngestError::EmptyAfterFilter { k });
    }
    Ok(RawDataset {
        interactions,
        ..raw.clone()
    })
}

/// Output of [`remap_ids`]: dense ids plus the vocabularies that produced
/// them.
#[derive(Clone, Debug)]
pub struct Remapped {
    pub users: Vocab,
    /// Items first (`0..num_items`), then remaining KG entities.
    pub entities: Vocab,
    pub relations: Vocab,
    pub num_items: usize,
    /// Deduplicated, in input order.
    pub pairs: Vec<(u32, u32)>,
    pub kg: KnowledgeGraphStore,
    /// Interaction items with no occurrence in the KG.
    pub missing_items: Vec<String>,
}

/// Users and items get ids in first-seen order; item ids double as entity
/// ids, and the other KG entities follow.
pub fn remap_ids(raw: &RawDataset) -> Remapped {
    let mut users = Vocab::default();
    let mut entities = Vocab::default();
    let mut pairs = Vec::with_capacity(raw.interactions.len());
    for (u, i) in &raw.interactions {
        pairs.push((users.insert(u), entities.insert(i)));
    }
    let num_items = entities.len();

    let mut in_kg = vec![false; num_items];
    let mut relations = Vocab::default();
    let mut triplets = Vec::with_capacity(raw.triplets.len());
    for (h, r, t) in &raw.triplets {
        let head = entities.insert(h);
        let relation = relations.insert(r);
        let tail = entities.insert(t);
        for e in [head, tail] {
            if (e as usize) < num_items {
                in_kg[e as usize] = true;
            }
        }
        triplets.push(Triplet { head, relation, tail });
    }
    let missing_items: Vec<String> = in_kg
        .iter()
        .enumerate()
        .filter(|(_, &seen)| !seen)
        .map(|(i, _)| entities.token(i as u32).to_string())
        .collect();
    if !missing_items.is_empty() && !raw.triplets.is_empty() {
        log::warn!(
            "{} interaction items do not appear in the KG; kept without attributes",
            missing_items.len()
        );
    }
    let kg = KnowledgeGraphStore {
        num_entities: entities.len(),
        num_relations: relations.len(),
        num_items,
        triplets,
    };
    Remapped {
        users,
        entities,
        relations,
        num_items,
        pairs,
        kg,
        missing_items,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrepareOptions {
    pub core_k: usize,
    pub train_ratio: f64,
    pub seed: u64,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        Self {
            core_k: 5,
            train_ratio: 0.8,
            seed: 2024,
        }
    }
}

/// Counts after each stage, for diagnosing mismatches against expected
/// dataset statistics.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PipelineReport {
    pub loaded_interactions: usize,
    pub duplicate_interactions: usize,
    pub users_before_filter: usize,
    pub items_before_filter: usize,
    pub interactions_after_filter: usize,
    pub users_after_filter: usize,
    pub items_after_filter: usize,
    pub loaded_triplets: usize,
    pub duplicate_triplets: usize,
    pub items_missing_from_kg: usize,
}

impl PipelineReport {
    pub fn to_text(&self) -> String {
        [
            ("loaded_interactions", self.loaded_interactions),
            ("duplicate_interactions", self.duplicate_interactions),
            ("users_before_filter", self.users_before_filter),
            ("items_before_filter", self.items_before_filter),
            ("interactions_after_filter", self.interactions_after_filter),
            ("users_after_filter", self.users_after_filter),
            ("items_after_filter", self.items_after_filter),
            ("loaded_triplets", self.loaded_triplets),
            ("duplicate_triplets", self.duplicate_triplets),
            ("items_missing_from_kg", self.items_missing_from_kg),
        ]
        .iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect()
    }
}

#[derive(Clone, Debug)]
pub struct PreparedDataset {
    pub table: InteractionTable,
    pub kg: KnowledgeGraphStore,
    pub users: Vocab,
    pub entities: Vocab,
    pub relations: Vocab,
    pub stats: DatasetStats,
    pub report: PipelineReport,
}

fn distinct<'a>(it: impl Iterator<Item = &'a str>) -> usize {
    it.collect::<std::collections::HashSet<_>>().len()
}

/// Core filter, remap, split and statistics in one pass.
pub fn prepare(raw: &RawDataset, opts: &PrepareOptions) -> Result<PreparedDataset, IngestError> {
    let filtered = apply_core_filter(raw, opts.core_k)?;
    let remapped = remap_ids(&filtered);
    let table = split_train_test(
        &remapped.pairs,
        remapped.users.len(),
        remapped.num_items,
        opts.train_ratio,
        opts.seed,
    )?;
    let stats = compute_stats(&table, &remapped.kg);
    let report = PipelineReport {
        loaded_interactions: raw.interactions.len(),
        duplicate_interactions: raw.duplicate_interactions,
        users_before_filter: distinct(raw.interactions.iter().map(|(u, _)| u.as_str())),
        items_before_filter: distinct(raw.interactions.iter().map(|(_, i)| i.as_str())),
        interactions_after_filter: filtered.interactions.len(),
        users_after_filter: remapped.users.len(),
        items_after_filter: remapped.num_items,
        loaded_triplets: raw.triplets.len(),
        duplicate_triplets: raw.duplicate_triplets,
        items_missing_from_kg: remapped.missing_items.len(),
    };
    Ok(PreparedDataset {
        table,
        kg: remapped.kg,
        users: remapped.users,
        entities: remapped.entities,
        relations: remapped.relations,
        stats,
        report,
    })
}
