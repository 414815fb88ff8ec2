//! Mini-batch training: triplet sampling, the epoch loop, early stopping on
//! Recall@20 and checkpointing.

mod sampler;

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eval::{self, EvalError, RankingReport};
use crate::ingest::InteractionTable;
use crate::model::{KdarModel, LossBreakdown};
use crate::numerics::checkpoint::{self, CheckpointError};
use crate::numerics::{AdamState, Gradients, NumericsError, ParameterStore};

pub use sampler::{sample_epoch_batches, sample_negative, EpochBatches, TripletBatch};

/// Metric that drives early stopping.
pub const SELECTION_K: usize = 20;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("numerical failure in epoch {epoch}: {source}")]
    Numerical {
        epoch: usize,
        #[source]
        source: NumericsError,
    },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub eval_every: usize,
    pub patience: usize,
    /// Seed of the sampling stream.
    pub seed: u64,
    /// Where the best checkpoint is written, if anywhere.
    pub checkpoint: Option<PathBuf>,
    pub ks: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            eval_every: 5,
            patience: 10,
            seed: 2024,
            checkpoint: None,
            ks: eval::DEFAULT_KS.to_vec(),
        }
    }
}

/// Runs one optimizer step per batch and returns the batch-size-weighted
/// mean losses.
pub fn train_epoch(
    model: &KdarModel<f32>,
    store: &mut ParameterStore<f32>,
    adam: &mut AdamState<f32>,
    batches: &[TripletBatch],
) -> Result<LossBreakdown, NumericsError> {
    let mut grads = Gradients::zeros_like(store);
    let mut acc = LossBreakdown::default();
    let mut seen = 0usize;
    for batch in batches {
        let losses = model.loss_and_grad(store, batch, &mut grads)?;
        if !grads.all_finite() {
            return Err(NumericsError::NonFinite { op: "gradient" });
        }
        adam.step(store, &mut grads, model.hyper.learning_rate);
        acc = acc + losses.scaled(batch.len() as f64);
        seen += batch.len();
    }
    Ok(if seen == 0 { acc } else { acc.scaled(1.0 / seen as f64) })
}

/// One evaluation in the training history.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub recall20: f64,
    pub ndcg20: f64,
    pub auc: f64,
    pub losses: LossBreakdown,
}

pub fn history_tsv(rows: &[HistoryRow]) -> String {
    let mut s = String::from("epoch\trecall@20\tndcg@20\tauc\tl_bpr\tl_bpr_c\tl_gac\tl_pac\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            r.epoch, r.recall20, r.ndcg20, r.auc, r.losses.l_bpr, r.losses.l_bpr_c, r.losses.l_gac, r.losses.l_pac
        );
    }
    s
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub history: Vec<HistoryRow>,
    pub best_epoch: usize,
    pub best_report: RankingReport,
    /// Parameters at `best_epoch`; the caller's store holds the last ones.
    pub best: ParameterStore<f32>,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// Trains until `config.epochs` or until Recall@20 fails to improve on
/// more than `config.patience` consecutive evaluations. With `epochs == 0`
/// the initial parameters are evaluated once.
pub fn fit(
    config: &TrainConfig,
    model: &KdarModel<f32>,
    store: &mut ParameterStore<f32>,
    table: &InteractionTable,
) -> Result<FitResult, TrainError> {
    let mut ks = config.ks.clone();
    if !ks.contains(&SELECTION_K) {
        ks.push(SELECTION_K);
        ks.sort_unstable();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(store);
    let batch_size = model.hyper.batch_size;
    let eval_every = config.eval_every.max(1);

    let evaluate = |store: &ParameterStore<f32>, epoch: usize| -> Result<RankingReport, TrainError> {
        let emb = model
            .embeddings(store)
            .map_err(|source| TrainError::Numerical { epoch, source })?;
        Ok(eval::evaluate(&emb, table, &ks)?)
    };
    let row = |epoch, rep: &RankingReport, losses| HistoryRow {
        epoch,
        recall20: rep.recall_at(SELECTION_K).unwrap_or(0.0),
        ndcg20: rep.ndcg_at(SELECTION_K).unwrap_or(0.0),
        auc: rep.auc,
        losses,
    };

    if config.epochs == 0 {
        let batches = sample_epoch_batches(table, batch_size, &mut rng).batches;
        let mut acc = LossBreakdown::default();
        let mut n = 0usize;
        for b in &batches {
            let l = model
                .loss_value(store, b)
                .map_err(|source| TrainError::Numerical { epoch: 0, source })?;
            acc = acc + l.scaled(b.len() as f64);
            n += b.len();
        }
        let losses = if n == 0 { acc } else { acc.scaled(1.0 / n as f64) };
        let report = evaluate(store, 0)?;
        if let Some(path) = &config.checkpoint {
            checkpoint::save(path, store, Some(&adam))?;
        }
        return Ok(FitResult {
            history: vec![row(0, &report, losses)],
            best_epoch: 0,
            best_report: report,
            best: store.clone(),
            epochs_run: 0,
            stopped_early: false,
        });
    }

    let mut history = Vec::new();
    let mut best: Option<(usize, RankingReport, ParameterStore<f32>)> = None;
    let mut stale = 0usize;
    let mut stopped_early = false;
    let mut epochs_run = 0;
    for epoch in 1..=config.epochs {
        let batches = sample_epoch_batches(table, batch_size, &mut rng).batches;
        let losses =
            train_epoch(model, store, &mut adam, &batches).map_err(|source| TrainError::Numerical { epoch, source })?;
        epochs_run = epoch;
        log::debug!("epoch {epoch}: total loss {:.6}", losses.total);

        if epoch % eval_every != 0 && epoch != config.epochs {
            continue;
        }
        let report = evaluate(store, epoch)?;
        let r = row(epoch, &report, losses);
        log::info!(
            "epoch {epoch}: recall@20 {:.4} ndcg@20 {:.4} loss {:.4}",
            r.recall20,
            r.ndcg20,
            losses.total
        );
        let improved = best
            .as_ref()
            .is_none_or(|(_, b, _)| r.recall20 > b.recall_at(SELECTION_K).unwrap_or(0.0));
        history.push(r);
        if improved {
            if let Some(path) = &config.checkpoint {
                checkpoint::save(path, store, Some(&adam))?;
            }
            best = Some((epoch, report, store.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale > config.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (best_epoch, best_report, best) = best.expect("at least one evaluation when epochs > 0");
    Ok(FitResult {
        history,
        best_epoch,
        best_report,
        best,
        epochs_run,
        stopped_early,
    })
}
