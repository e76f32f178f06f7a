use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use synthasr_nn::train::batch_gradients;
use synthasr_nn::{derive_seed, rng, LrSchedule, Optimizer, OptimizerConfig};

use crate::lexicon::{transcribe, G2p};
use crate::{AsrError, AsrExample, AsrModel, FeatureNorm, Lexicon};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsrTrainConfig {
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub optimizer: OptimizerConfig,
    pub clip_norm: Option<f64>,
    /// Apply the model's SpecAugment configuration to training inputs.
    pub augment: bool,
    pub seed: u64,
}

impl AsrTrainConfig {
    /// AdamW with weight decay 1e-3 and the 80-epoch ASR schedule.
    pub fn full(seed: u64) -> Self {
        Self {
            batch_size: 16,
            schedule: LrSchedule::asr(),
            optimizer: OptimizerConfig::adamw(),
            clip_norm: Some(5.0),
            augment: true,
            seed,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct AsrTrainReport {
    /// Mean per-utterance loss of every epoch.
    pub epoch_losses: Vec<f64>,
    /// Mean per-utterance loss of every optimizer step.
    pub step_losses: Vec<f64>,
}

/// Marked label ids of a transcript. Every word that is neither in the
/// lexicon nor convertible by `g2p` is reported.
pub fn labels_for_text<S: AsRef<str>>(
    model: &AsrModel,
    words: &[S],
    lexicon: &Lexicon,
    g2p: Option<&dyn G2p>,
) -> Result<Vec<usize>, AsrError> {
    let phonemes = transcribe(words, lexicon, g2p)?;
    model.vocab().encode(&phonemes)
}

/// Fits the feature normalization on `data`, then trains with CTC.
pub fn train_asr(
    model: &mut AsrModel,
    data: &[AsrExample],
    cfg: &AsrTrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<AsrTrainReport, AsrError> {
    if data.is_empty() {
        return Err(AsrError::Config("no training utterances".into()));
    }
    if cfg.batch_size == 0 {
        return Err(AsrError::Config("batch size must be positive".into()));
    }
    cfg.schedule.validate()?;
    for (i, ex) in data.iter().enumerate() {
        let frames = model.config.encoder_frames(ex.features.rows());
        let required = crate::ctc::min_frames(&ex.labels);
        if frames < required {
            log::warn!("utterance {i} too short for its transcript");
            return Err(AsrError::LabelTooLong {
                labels: ex.labels.len(),
                required,
                frames,
            });
        }
    }
    model.norm = FeatureNorm::fit(data.iter().map(|e| &e.features), model.config.n_mels);
    let mut opt = Optimizer::new(cfg.optimizer, &model.store)?;
    let epochs = cfg.schedule.total_epochs().ceil() as usize;
    let batches = data.len().div_ceil(cfg.batch_size);
    let mut report = AsrTrainReport::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..epochs {
        order.shuffle(&mut rng(derive_seed(cfg.seed, &format!("shuffle{epoch}"))));
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let step_seed = derive_seed(cfg.seed, &format!("step{epoch}.{b}"));
            let m = &*model;
            let (loss, mut grads) = batch_gradients(&m.store, chunk.len(), step_seed, |g, i| {
                let aug = cfg
                    .augment
                    .then(|| derive_seed(step_seed, &format!("specaugment{i}")));
                m.loss(g, &data[chunk[i]], aug)
            })?;
            if !loss.is_finite() {
                return Err(AsrError::NonFinite(format!("training loss at epoch {epoch}")));
            }
            grads.scale(1.0 / chunk.len() as f32);
            if let Some(c) = cfg.clip_norm {
                grads.clip_global_norm(c);
            }
            let at = (epoch as f64 + b as f64 / batches as f64).min(cfg.schedule.total_epochs());
            let lr = cfg.schedule.lr_at(at)?;
            opt.step(&mut model.store, &grads, lr)?;
            report.step_losses.push(loss / chunk.len() as f64);
            total += loss;
        }
        let mean = total / data.len() as f64;
        log::debug!("asr epoch {epoch}: loss {mean:.4}");
        on_epoch(epoch, mean);
        report.epoch_losses.push(mean);
    }
    Ok(report)
}
