use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use synthasr_nn::train::batch_gradients;
use synthasr_nn::{derive_seed, rng, LrSchedule, Optimizer, OptimizerConfig};

use crate::{DurationArchive, TtsError, TtsExample, TtsModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub optimizer: OptimizerConfig,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

/// Mean training loss of every epoch.
#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

/// Mini-batch Adam training for `ceil(schedule.total_epochs())` epochs.
/// The learning rate is re-evaluated at every step from the fractional
/// epoch.
pub fn train_tts(
    model: &mut TtsModel,
    data: &[TtsExample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainReport, TtsError> {
    if data.is_empty() {
        return Err(TtsError::Config("no training utterances".into()));
    }
    if cfg.batch_size == 0 {
        return Err(TtsError::Config("batch size must be positive".into()));
    }
    cfg.schedule.validate()?;
    let mut opt = Optimizer::new(cfg.optimizer, &model.store)?;
    let epochs = cfg.schedule.total_epochs().ceil() as usize;
    let batches = data.len().div_ceil(cfg.batch_size);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..epochs {
        order.shuffle(&mut rng(derive_seed(cfg.seed, &format!("shuffle{epoch}"))));
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let step_seed = derive_seed(cfg.seed, &format!("step{epoch}.{b}"));
            let (loss, mut grads) = batch_gradients(&model.store, chunk.len(), step_seed, |g, i| {
                Ok::<_, TtsError>(model.loss(g, &data[chunk[i]])?.total)
            })?;
            if !loss.is_finite() {
                return Err(TtsError::NonFinite(format!("training loss at epoch {epoch}")));
            }
            grads.scale(1.0 / chunk.len() as f32);
            if let Some(c) = cfg.clip_norm {
                grads.clip_global_norm(c);
            }
            let at = (epoch as f64 + b as f64 / batches as f64).min(cfg.schedule.total_epochs());
            let lr = cfg.schedule.lr_at(at)?;
            opt.step(&mut model.store, &grads, lr)?;
            total += loss;
        }
        let mean = total / data.len() as f64;
        log::debug!("tts {} epoch {epoch}: loss {mean:.4}", model.variant());
        on_epoch(epoch, mean);
        report.epoch_losses.push(mean);
    }
    Ok(report)
}

/// Flow alignments of every utterance, keyed by utterance id.
pub fn extract_durations<'a>(
    model: &TtsModel,
    items: impl IntoIterator<Item = (&'a str, &'a TtsExample)>,
    vocab_hash: [u8; 8],
) -> Result<DurationArchive, TtsError> {
    let mut archive = DurationArchive::new(vocab_hash);
    for (id, ex) in items {
        archive.insert(id, model.align(&ex.phonemes, ex.speaker, &ex.mel)?);
    }
    Ok(archive)
}
