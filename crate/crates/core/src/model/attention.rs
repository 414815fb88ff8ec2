use crate::graph::AttributeList;
use crate::numerics::{NodeId, NumericsError, Real, SegmentWeights, Tape, Tensor};

/// Attention weights and attribute messages for every item attribute row.
#[derive(Clone, Copy, Debug)]
pub struct AttributeAttention {
    /// `alpha(i, r, t)`, `n_attr x 1`, summing to 1 within each item.
    pub alpha: NodeId,
    /// `e_r * e_t^(0)`, `n_attr x d`.
    pub messages: NodeId,
}

/// Scaled dot-product attention over each item's attributes, on layer-0
/// embeddings: `omega = (e_i W_K) . ((e_r * e_t) W_Q) / sqrt(d)`, softmax
/// within the item. With `uniform`, every attribute of item `i` gets
/// `1 / |N_i^K|`.
#[allow(clippy::too_many_arguments)]
pub fn attention_weights<T: Real>(
    tape: &mut Tape<'_, T>,
    entities0: NodeId,
    relations: NodeId,
    w_k: NodeId,
    w_q: NodeId,
    attrs: &AttributeList,
    dim: usize,
    uniform: bool,
) -> Result<AttributeAttention, NumericsError> {
    let num_items = attrs.counts.len();
    let rel = tape.gather_rows(relations, attrs.relation.clone())?;
    let tail = tape.gather_rows(entities0, attrs.tail.clone())?;
    let messages = tape.mul(rel, tail)?;

    let alpha = if uniform {
        let w: Vec<T> = attrs
            .item
            .iter()
            .map(|&i| T::one() / T::from_u32(attrs.counts[i as usize]).unwrap())
            .collect();
        tape.constant(Tensor::column(&w))?
    } else {
        let items = tape.row_range(entities0, 0, num_items)?;
        let keys = tape.matmul_rows(items, w_k)?;
        let keys = tape.gather_rows(keys, attrs.item.clone())?;
        let queries = tape.matmul_rows(messages, w_q)?;
        let logits = tape.row_dot(keys, queries)?;
        let logits = tape.scale(logits, T::one() / T::from_usize(dim).unwrap().sqrt())?;
        tape.grouped_softmax(logits, attrs.item.clone(), num_items)?
    };
    Ok(AttributeAttention { alpha, messages })
}

/// `sum_{(r,t) in N_i^K} alpha(i,r,t) e_r * e_t^(0)` for every item
/// (`num_items x d`; zero for items without attributes).
pub fn attribute_sum<T: Real>(
    tape: &mut Tape<'_, T>,
    att: &AttributeAttention,
    attrs: &AttributeList,
) -> Result<NodeId, NumericsError> {
    tape.weighted_segment_sum(
        att.messages,
        SegmentWeights::Node(att.alpha),
        attrs.item.clone(),
        attrs.counts.len(),
    )
}

/// Attribute fusion representation `e_i^A = e_i^(0) + attribute_sum(i)`.
pub fn attribute_fusion<T: Real>(
    tape: &mut Tape<'_, T>,
    entities0: NodeId,
    attr_sum: NodeId,
) -> Result<NodeId, NumericsError> {
    let n = tape.shape(attr_sum).0;
    let items = tape.row_range(entities0, 0, n)?;
    tape.add(items, attr_sum)
}

/// User preference representation: the unnormalized sum of
/// `attribute_sum(i)` over the user's train items. `history_items` and
/// `history_users` list one row per train interaction.
pub fn user_preference<T: Real>(
    tape: &mut Tape<'_, T>,
    attr_sum: NodeId,
    history_users: &std::sync::Arc<[u32]>,
    history_items: &std::sync::Arc<[u32]>,
    num_users: usize,
) -> Result<NodeId, NumericsError> {
    let rows = tape.gather_rows(attr_sum, history_items.clone())?;
    tape.weighted_segment_sum(rows, SegmentWeights::Ones, history_users.clone(), num_users)
}
