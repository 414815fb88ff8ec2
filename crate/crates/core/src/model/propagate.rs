use std::sync::Arc;

use crate::graph::EdgeList;
use crate::numerics::{NodeId, NumericsError, Real, SegmentWeights, Tape};

/// Edge arrays with weights in the tape's element type.
#[derive(Clone, Debug)]
pub struct SegmentIndex<T> {
    pub segment: Arc<[u32]>,
    pub source: Arc<[u32]>,
    pub weight: Arc<[T]>,
    pub num_segments: usize,
}

impl<T: Real> SegmentIndex<T> {
    pub fn from_edges(edges: &EdgeList, num_segments: usize) -> Self {
        Self {
            segment: edges.segment.clone(),
            source: edges.source.clone(),
            weight: edges.weight.iter().map(|&w| T::from_f64_lossy(w)).collect(),
            num_segments,
        }
    }

    /// `out[s] = sum_k weight[k] * table[source[k]]` over edges into `s`.
    pub fn aggregate(&self, tape: &mut Tape<'_, T>, table: NodeId) -> Result<NodeId, NumericsError> {
        let rows = tape.gather_rows(table, self.source.clone())?;
        tape.weighted_segment_sum(
            rows,
            SegmentWeights::Fixed(self.weight.clone()),
            self.segment.clone(),
            self.num_segments,
        )
    }
}

fn sum_nodes<T: Real>(tape: &mut Tape<'_, T>, nodes: &[NodeId]) -> Result<NodeId, NumericsError> {
    let mut acc = nodes[0];
    for &n in &nodes[1..] {
        acc = tape.add(acc, n)?;
    }
    Ok(acc)
}

/// LightGCN-style propagation on the user-item graph. Returns
/// `(e_u^C, e_i^C)`, the sums of layers `0..=layers`.
pub fn propagate_cg<T: Real>(
    tape: &mut Tape<'_, T>,
    users0: NodeId,
    items0: NodeId,
    into_users: &SegmentIndex<T>,
    into_items: &SegmentIndex<T>,
    layers: usize,
) -> Result<(NodeId, NodeId), NumericsError> {
    let (mut xu, mut xi) = (users0, items0);
    let mut us = vec![users0];
    let mut is = vec![items0];
    for _ in 0..layers {
        let nu = into_users.aggregate(tape, xi)?;
        let ni = into_items.aggregate(tape, xu)?;
        xu = nu;
        xi = ni;
        us.push(xu);
        is.push(xi);
    }
    Ok((sum_nodes(tape, &us)?, sum_nodes(tape, &is)?))
}

/// Relation-aware mean aggregation over the KG:
/// `e_h^(l) = mean_{(r,t) in N_h} e_r * e_t^(l-1)`.
/// Returns every layer `0..=layers`; entities without neighbors are zero at
/// layers >= 1.
pub fn propagate_kg<T: Real>(
    tape: &mut Tape<'_, T>,
    entities0: NodeId,
    relations: NodeId,
    edges: &SegmentIndex<T>,
    edge_relation: &Arc<[u32]>,
    layers: usize,
) -> Result<Vec<NodeId>, NumericsError> {
    let rel_rows = tape.gather_rows(relations, edge_relation.clone())?;
    let mut out = vec![entities0];
    let mut prev = entities0;
    for _ in 0..layers {
        let tails = tape.gather_rows(prev, edges.source.clone())?;
        let msgs = tape.mul(rel_rows, tails)?;
        let next = tape.weighted_segment_sum(
            msgs,
            SegmentWeights::Fixed(edges.weight.clone()),
            edges.segment.clone(),
            edges.num_segments,
        )?;
        out.push(next);
        prev = next;
    }
    Ok(out)
}

/// Sum of a layer list.
pub fn sum_layers<T: Real>(tape: &mut Tape<'_, T>, layers: &[NodeId]) -> Result<NodeId, NumericsError> {
    sum_nodes(tape, layers)
}

/// KG-side user representation: `e_u^(l) = mean_{i in N_u} e_i^(l-1)`,
/// summed over `l = 1..=L`. `history` aggregates into users from items with
/// weight `1 / |N_u|`; `item_layers[l]` holds the item rows of KG layer `l`.
pub fn propagate_user_kg<T: Real>(
    tape: &mut Tape<'_, T>,
    item_layers: &[NodeId],
    history: &SegmentIndex<T>,
) -> Result<NodeId, NumericsError> {
    let layers = item_layers.len().saturating_sub(1);
    let mut parts = Vec::with_capacity(layers);
    for &prev in &item_layers[..layers] {
        parts.push(history.aggregate(tape, prev)?);
    }
    if parts.is_empty() {
        let zeros = crate::numerics::Tensor::zeros(history.num_segments, tape.shape(item_layers[0]).1);
        return tape.constant(zeros);
    }
    sum_nodes(tape, &parts)
}
