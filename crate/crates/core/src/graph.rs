//! Propagation-ready adjacency for the user-item graph and the knowledge
//! graph.
//!
//! Besides the per-node neighbor lists, each structure keeps flattened
//! edge arrays (`segment`, `source`, `weight`) that feed
//! [`Tape::weighted_segment_sum`](crate::numerics::Tape::weighted_segment_sum)
//! directly. Only train interactions are used.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::ingest::{InteractionTable, KnowledgeGraphStore};

/// Edges aggregated into `segment[k]` from `source[k]` with `weight[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeList {
    pub segment: Arc<[u32]>,
    pub source: Arc<[u32]>,
    pub weight: Arc<[f64]>,
}

impl EdgeList {
    pub fn len(&self) -> usize {
        self.segment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segment.is_empty()
    }
}

/// Symmetric-normalized bipartite adjacency, `1 / sqrt(|N_u| |N_i|)` per edge.
#[derive(Clone, Debug)]
pub struct CollabAdjacency {
    pub user_neighbors: Vec<Vec<u32>>,
    pub item_neighbors: Vec<Vec<u32>>,
    /// Aggregation into items from users.
    pub into_items: EdgeList,
    /// Aggregation into users from items.
    pub into_users: EdgeList,
}

impl CollabAdjacency {
    pub fn num_users(&self) -> usize {
        self.user_neighbors.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_neighbors.len()
    }

    pub fn num_edges(&self) -> usize {
        self.into_users.len()
    }

    /// `1 / sqrt(deg(u) deg(i))`, or `None` when either side is isolated.
    pub fn norm_coeff(&self, user: u32, item: u32) -> Option<f64> {
        let du = self.user_neighbors.get(user as usize)?.len();
        let di = self.item_neighbors.get(item as usize)?.len();
        (du > 0 && di > 0).then(|| 1.0 / ((du * di) as f64).sqrt())
    }
}

pub fn build_collab_adjacency(table: &InteractionTable) -> CollabAdjacency {
    let user_neighbors = table.user_train_items.clone();
    let item_neighbors = table.item_train_users.clone();
    let coeff = |u: u32, i: u32| {
        let du = user_neighbors[u as usize].len() as f64;
        let di = item_neighbors[i as usize].len() as f64;
        1.0 / (du * di).sqrt()
    };

    let mut seg = Vec::with_capacity(table.train_pairs.len());
    let mut src = Vec::with_capacity(table.train_pairs.len());
    let mut w = Vec::with_capacity(table.train_pairs.len());
    for (u, items) in user_neighbors.iter().enumerate() {
        for &i in items {
            seg.push(u as u32);
            src.push(i);
            w.push(coeff(u as u32, i));
        }
    }
    let into_users = EdgeList {
        segment: seg.into(),
        source: src.into(),
        weight: w.into(),
    };

    let mut seg = Vec::with_capacity(table.train_pairs.len());
    let mut src = Vec::with_capacity(table.train_pairs.len());
    let mut w = Vec::with_capacity(table.train_pairs.len());
    for (i, users) in item_neighbors.iter().enumerate() {
        for &u in users {
            seg.push(i as u32);
            src.push(u);
            w.push(coeff(u, i as u32));
        }
    }
    let into_items = EdgeList {
        segment: seg.into(),
        source: src.into(),
        weight: w.into(),
    };

    CollabAdjacency {
        user_neighbors,
        item_neighbors,
        into_items,
        into_users,
    }
}

/// Whether each `(h, r, t)` also induces `(t, r + R, h)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InverseTripletPolicy {
    pub add_inverse: bool,
}

impl Default for InverseTripletPolicy {
    fn default() -> Self {
        Self { add_inverse: true }
    }
}

/// Item attribute triplets flattened for attention: row `k` is
/// `(item[k], relation[k], tail[k])`, grouped by item.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeList {
    pub item: Arc<[u32]>,
    pub relation: Arc<[u32]>,
    pub tail: Arc<[u32]>,
    /// Number of attributes per item.
    pub counts: Vec<u32>,
}

impl AttributeList {
    pub fn len(&self) -> usize {
        self.item.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct KGAdjacency {
    /// Sorted `(relation, tail)` lists per entity.
    pub head_neighbors: Vec<Vec<(u32, u32)>>,
    pub num_items: usize,
    /// Includes inverse relations when enabled.
    pub num_relations: usize,
    /// Mean aggregation into heads: `segment` = head, `source` = tail,
    /// `weight` = `1 / |N_h|`; `relation` aligned with the edges.
    pub edges: EdgeList,
    pub edge_relation: Arc<[u32]>,
    pub attributes: AttributeList,
}

impl KGAdjacency {
    pub fn num_entities(&self) -> usize {
        self.head_neighbors.len()
    }

    /// `N_i^K`, the attributes of item `i`.
    pub fn item_attributes(&self, item: u32) -> &[(u32, u32)] {
        &self.head_neighbors[item as usize]
    }

    /// Triplets reconstructed from the neighbor lists.
    pub fn triplets(&self) -> Vec<(u32, u32, u32)> {
        self.head_neighbors
            .iter()
            .enumerate()
            .flat_map(|(h, ns)| ns.iter().map(move |&(r, t)| (h as u32, r, t)))
            .collect()
    }
}

pub fn build_kg_adjacency(kg: &KnowledgeGraphStore, policy: InverseTripletPolicy) -> KGAdjacency {
    let r_base = kg.num_relations as u32;
    let mut head_neighbors: Vec<Vec<(u32, u32)>> = vec![Vec::new(); kg.num_entities];
    for t in &kg.triplets {
        head_neighbors[t.head as usize].push((t.relation, t.tail));
        if policy.add_inverse {
            head_neighbors[t.tail as usize].push((t.relation + r_base, t.head));
        }
    }
    for ns in &mut head_neighbors {
        ns.sort_unstable();
        ns.dedup();
    }
    let num_relations = if policy.add_inverse {
        2 * kg.num_relations
    } else {
        kg.num_relations
    };

    let total: usize = head_neighbors.iter().map(Vec::len).sum();
    let (mut seg, mut src, mut rel, mut w) = (
        Vec::with_capacity(total),
        Vec::with_capacity(total),
        Vec::with_capacity(total),
        Vec::with_capacity(total),
    );
    for (h, ns) in head_neighbors.iter().enumerate() {
        let inv = 1.0 / ns.len() as f64;
        for &(r, t) in ns {
            seg.push(h as u32);
            src.push(t);
            rel.push(r);
            w.push(inv);
        }
    }

    let (mut ai, mut ar, mut at, mut counts) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, ns) in head_neighbors.iter().take(kg.num_items).enumerate() {
        counts.push(ns.len() as u32);
        for &(r, t) in ns {
            ai.push(i as u32);
            ar.push(r);
            at.push(t);
        }
    }

    KGAdjacency {
        head_neighbors,
        num_items: kg.num_items,
        num_relations,
        edges: EdgeList {
            segment: seg.into(),
            source: src.into(),
            weight: w.into(),
        },
        edge_relation: rel.into(),
        attributes: AttributeList {
            item: ai.into(),
            relation: ar.into(),
            tail: at.into(),
            counts,
        },
    }
}

/// Degree -> number of nodes with that degree.
pub type DegreeHistogram = BTreeMap<usize, usize>;

pub trait NeighborDegrees {
    fn degrees(&self) -> Vec<usize>;

    fn neighbor_degree_histogram(&self) -> DegreeHistogram {
        let mut h = DegreeHistogram::new();
        for d in self.degrees() {
            *h.entry(d).or_default() += 1;
        }
        h
    }
}

impl NeighborDegrees for CollabAdjacency {
    /// Users then items.
    fn degrees(&self) -> Vec<usize> {
        self.user_neighbors
            .iter()
            .chain(&self.item_neighbors)
            .map(Vec::len)
            .collect()
    }
}

impl NeighborDegrees for KGAdjacency {
    /// Out-degree per entity.
    fn degrees(&self) -> Vec<usize> {
        self.head_neighbors.iter().map(Vec::len).collect()
    }
}

/// Plain-text dump for fixtures: `u<TAB>i<TAB>coeff` lines.
pub fn dump_collab(adj: &CollabAdjacency) -> String {
    let mut s = String::new();
    for (u, items) in adj.user_neighbors.iter().enumerate() {
        for &i in items {
            s.push_str(&format!(
                "{u}\t{i}\t{:.6}\n",
                adj.norm_coeff(u as u32, i).unwrap_or(0.0)
            ));
        }
    }
    s
}
