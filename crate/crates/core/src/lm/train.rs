use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{gradient_with_dropout, TokenBatch};
use super::optim::{AdamW, LrSchedule, TrainConfig};
use super::params::ModelParams;
use super::ModelError;
use crate::rng::stream_rng;
use crate::tokenizer::TokenSequence;
use crate::Scalar;

/// Supplies the training sequences for each epoch.
pub trait EpochCorpus {
    fn epoch(&self, epoch: usize) -> Vec<TokenSequence>;
}

impl EpochCorpus for [TokenSequence] {
    fn epoch(&self, _epoch: usize) -> Vec<TokenSequence> {
        self.to_vec()
    }
}

impl EpochCorpus for Vec<TokenSequence> {
    fn epoch(&self, _epoch: usize) -> Vec<TokenSequence> {
        self.clone()
    }
}

/// Corpus regenerated per epoch by a closure, e.g. with fresh clause orders.
pub struct PerEpoch<G>(pub G);

impl<G: Fn(usize) -> Vec<TokenSequence>> EpochCorpus for PerEpoch<G> {
    fn epoch(&self, epoch: usize) -> Vec<TokenSequence> {
        (self.0)(epoch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

pub struct TrainOutcome<F> {
    pub params: ModelParams<F>,
    pub trace: Vec<TraceRow>,
}

/// Fine-tunes `params` with AdamW on next-token prediction. Batches are
/// right-padded with `pad`, which is excluded from the loss and from
/// attention. The run is deterministic given `tcfg.seed`.
pub fn train<F: Scalar, C: EpochCorpus + ?Sized>(
    mut params: ModelParams<F>,
    corpus: &C,
    tcfg: &TrainConfig,
    pad: u32,
) -> Result<TrainOutcome<F>, ModelError> {
    tcfg.validate().map_err(ModelError::Config)?;
    let first = corpus.epoch(0);
    if first.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let steps_per_epoch = first.len().div_ceil(tcfg.batch_size);
    let schedule = LrSchedule::from_config(tcfg, steps_per_epoch * tcfg.epochs);
    let mut optimizer = AdamW::new(&params, tcfg);
    let mut trace = Vec::with_capacity(schedule.total);
    let mut step = 0;
    let mut sequences = Some(first);
    for epoch in 0..tcfg.epochs {
        let seqs = sequences.take().unwrap_or_else(|| corpus.epoch(epoch));
        if let Some(long) = seqs.iter().find(|s| s.len() > params.config.context_len) {
            return Err(ModelError::SequenceTooLong {
                len: long.len(),
                max: params.config.context_len,
            });
        }
        let mut order: Vec<usize> = (0..seqs.len()).collect();
        order.shuffle(&mut stream_rng(tcfg.seed, 0x5EED_0000 + epoch as u64));
        for chunk in order.chunks(tcfg.batch_size) {
            let rows: Vec<Vec<u32>> = chunk.iter().map(|&i| seqs[i].ids.clone()).collect();
            let batch = TokenBatch::new(&rows, Some(pad))?;
            let mut rng = stream_rng(tcfg.seed, 0xD40_0000_0000 + step as u64);
            let (loss, grads) = match gradient_with_dropout(&params, &batch, tcfg.dropout, &mut rng) {
                Ok(out) => out,
                // Batches of single-token rows carry no targets.
                Err(ModelError::EmptyBatch) => continue,
                Err(e) => return Err(e),
            };
            let lr = schedule.lr(step);
            optimizer.update(&mut params, &grads, lr);
            trace.push(TraceRow { step, lr, loss });
            step += 1;
        }
        log::debug!(
            "epoch {epoch}: last loss {:.4}",
            trace.last().map_or(f64::NAN, |r| r.loss)
        );
    }
    if !params.all_finite() {
        return Err(ModelError::NonFinite);
    }
    Ok(TrainOutcome { params, trace })
}

/// Writes the loss trace as `step,lr,loss` CSV.
pub fn write_trace<W: Write>(mut out: W, trace: &[TraceRow]) -> std::io::Result<()> {
    writeln!(out, "step,lr,loss")?;
    for row in trace {
        writeln!(out, "{},{:e},{}", row.step, row.lr, row.loss)?;
    }
    Ok(())
}
