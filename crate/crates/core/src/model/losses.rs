use std::sync::Arc;

use crate::numerics::{NodeId, NumericsError, Real, Tape, Tensor};
use crate::train::TripletBatch;

/// `y_ui = e_u . e_i` for each `(users[k], items[k])`, as an `n x 1` column.
pub fn predict<T: Real>(
    tape: &mut Tape<'_, T>,
    user_reps: NodeId,
    item_reps: NodeId,
    users: &Arc<[u32]>,
    items: &Arc<[u32]>,
) -> Result<NodeId, NumericsError> {
    let u = tape.gather_rows(user_reps, users.clone())?;
    let i = tape.gather_rows(item_reps, items.clone())?;
    tape.row_dot(u, i)
}

/// Mean of `-ln sigmoid(y_ui - y_uj)` over the batch.
pub fn loss_bpr<T: Real>(
    tape: &mut Tape<'_, T>,
    user_reps: NodeId,
    item_reps: NodeId,
    batch: &TripletBatch,
) -> Result<NodeId, NumericsError> {
    let pos = predict(tape, user_reps, item_reps, &batch.users, &batch.pos)?;
    let neg = predict(tape, user_reps, item_reps, &batch.users, &batch.neg)?;
    let diff = tape.sub(pos, neg)?;
    let ls = tape.log_sigmoid(diff)?;
    let m = tape.mean(ls)?;
    tape.scale(m, -T::one())
}

/// BPR on the collaborative representations alone.
pub fn loss_bpr_cf<T: Real>(
    tape: &mut Tape<'_, T>,
    e_u_c: NodeId,
    e_i_c: NodeId,
    batch: &TripletBatch,
) -> Result<NodeId, NumericsError> {
    loss_bpr(tape, e_u_c, e_i_c, batch)
}

/// Two-candidate InfoNCE with cosine similarity, averaged over `ids`:
/// `-ln( exp(s(a,p)/tau) / (exp(s(a,p)/tau) + exp(s(a,n)/tau)) )`, which is
/// `-ln sigmoid((s(a,p) - s(a,n)) / tau)`.
pub fn alignment_loss<T: Real>(
    tape: &mut Tape<'_, T>,
    anchor: NodeId,
    positive: NodeId,
    negative: NodeId,
    tau: T,
    ids: &Arc<[u32]>,
) -> Result<NodeId, NumericsError> {
    if ids.is_empty() {
        return tape.constant(Tensor::scalar(T::zero()));
    }
    let a = tape.gather_rows(anchor, ids.clone())?;
    let p = tape.gather_rows(positive, ids.clone())?;
    let n = tape.gather_rows(negative, ids.clone())?;
    let sp = tape.row_cosine(a, p)?;
    let sn = tape.row_cosine(a, n)?;
    let diff = tape.sub(sp, sn)?;
    let diff = tape.scale(diff, T::one() / tau)?;
    let ls = tape.log_sigmoid(diff)?;
    let m = tape.mean(ls)?;
    tape.scale(m, -T::one())
}

/// Global alignment: attribute fusion reps pulled toward CF item reps, KG
/// item reps as negatives.
pub fn loss_gac<T: Real>(
    tape: &mut Tape<'_, T>,
    e_i_a: NodeId,
    e_i_c: NodeId,
    e_i_k: NodeId,
    tau: T,
    items: &Arc<[u32]>,
) -> Result<NodeId, NumericsError> {
    alignment_loss(tape, e_i_a, e_i_c, e_i_k, tau, items)
}

/// Personal alignment: user preference reps pulled toward CF user reps, KG
/// user reps as negatives.
pub fn loss_pac<T: Real>(
    tape: &mut Tape<'_, T>,
    e_u_p: NodeId,
    e_u_c: NodeId,
    e_u_k: NodeId,
    tau: T,
    users: &Arc<[u32]>,
) -> Result<NodeId, NumericsError> {
    alignment_loss(tape, e_u_p, e_u_c, e_u_k, tau, users)
}

/// Sum of squares of the rows in `rows_of` plus every node in `whole`,
/// divided by `batch_size`.
pub fn l2_batch<T: Real>(
    tape: &mut Tape<'_, T>,
    rows_of: &[(NodeId, Arc<[u32]>)],
    whole: &[NodeId],
    batch_size: usize,
) -> Result<NodeId, NumericsError> {
    let mut acc = tape.constant(Tensor::scalar(T::zero()))?;
    for (table, ids) in rows_of {
        let g = tape.gather_rows(*table, ids.clone())?;
        let s = tape.sum_squares(g)?;
        acc = tape.add(acc, s)?;
    }
    for &w in whole {
        let s = tape.sum_squares(w)?;
        acc = tape.add(acc, s)?;
    }
    tape.scale(acc, T::one() / T::from_usize(batch_size.max(1)).unwrap())
}

/// Weighted sum of the five loss terms. `gac` and `pac` are ignored when
/// `use_cl` is false.
#[allow(clippy::too_many_arguments)]
pub fn combine<T: Real>(
    tape: &mut Tape<'_, T>,
    bpr: NodeId,
    bpr_c: NodeId,
    gac: NodeId,
    pac: NodeId,
    reg: NodeId,
    lambdas: [f64; 3],
    use_cl: bool,
) -> Result<NodeId, NumericsError> {
    let [l1, l2, l3] = lambdas.map(T::from_f64_lossy);
    let mut total = bpr;
    let t = tape.scale(bpr_c, l1)?;
    total = tape.add(total, t)?;
    if use_cl {
        let cl = tape.add(gac, pac)?;
        let t = tape.scale(cl, l2)?;
        total = tape.add(total, t)?;
    }
    let t = tape.scale(reg, l3)?;
    tape.add(total, t)
}

/// `(e^C + e^X) / 2`.
pub fn average<T: Real>(tape: &mut Tape<'_, T>, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
    let s = tape.add(a, b)?;
    tape.scale(s, T::from_f64_lossy(0.5))
}
