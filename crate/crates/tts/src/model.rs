use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use synthasr_nn::checkpoint::{config_hash, load_checkpoint, save_checkpoint};
use synthasr_nn::layers::{Linear, Mask, TransformerConfig};
use synthasr_nn::{rng, Builder, Graph, ParamStore, Tensor, Var};

use crate::decoders::{
    ArLstmDecoder, ArLstmParams, DiffusionDecoder, DiffusionParams, FlowDecoder, FlowParams,
    NarLstmDecoder, TransformerDecoder, UNetParams,
};
use crate::mas::{gaussian_loglik, mas_align};
use crate::trunk::duration_loss;
use crate::upsample::{durations_from_log, upsample};
use crate::{DecoderConfig, MelNorm, PhonemeSequence, SamplingConfig, Trunk, TtsConfig, TtsError, Variant};

#[derive(Clone, Debug)]
enum Decoder {
    Transformer(TransformerDecoder),
    NarLstm(NarLstmDecoder),
    ArLstm(ArLstmDecoder),
    Flow {
        mean: Linear,
        flow: FlowDecoder,
        input_noise: f64,
    },
    Diffusion(Box<DiffusionDecoder>),
}

/// One training utterance. `mel` is already normalized.
#[derive(Clone, Debug)]
pub struct TtsExample {
    pub phonemes: Vec<usize>,
    pub speaker: usize,
    pub mel: Tensor<f32>,
    /// Reference durations; required by every decoder except the flow,
    /// which aligns itself when they are absent.
    pub durations: Option<Vec<u32>>,
}

/// Loss terms of one utterance.
pub struct LossTerms {
    pub total: Var,
    pub decoder: Var,
    pub duration: Var,
}

/// Generated spectrogram (denormalized) with the durations used.
#[derive(Clone, Debug)]
pub struct Synthesis {
    pub mel: Tensor<f32>,
    pub durations: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct Extra {
    config: TtsConfig,
    norm: MelNorm,
}

/// Trunk plus one decoder, with parameters and output normalization.
#[derive(Clone, Debug)]
pub struct TtsModel {
    pub config: TtsConfig,
    pub store: ParamStore<f32>,
    pub norm: MelNorm,
    trunk: Trunk,
    decoder: Decoder,
}

impl TtsModel {
    pub fn new(config: TtsConfig, seed: u64) -> Result<Self, TtsError> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut r = rng(seed);
        let mut vb = Builder::new(&mut store, &mut r);
        let trunk = Trunk::new(&mut vb.sub("trunk"), &config.trunk);
        let decoder = build_decoder(&mut vb.sub("decoder"), &config)?;
        let norm = MelNorm::identity(config.n_mels);
        Ok(Self {
            config,
            store,
            norm,
            trunk,
            decoder,
        })
    }

    pub fn variant(&self) -> Variant {
        self.config.variant()
    }

    pub fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    /// Scalar counts of the trunk and the decoder.
    pub fn param_split(&self) -> (usize, usize) {
        let mut split = (0, 0);
        for (_, p) in self.store.iter() {
            if p.name.starts_with("trunk.") {
                split.0 += p.value.len();
            } else {
                split.1 += p.value.len();
            }
        }
        split
    }

    pub fn trunk(&self) -> &Trunk {
        &self.trunk
    }

    fn check_example(&self, ex: &TtsExample) -> Result<(), TtsError> {
        PhonemeSequence::new(ex.phonemes.clone(), self.config.trunk.vocab_size)?;
        if ex.mel.cols() != self.config.n_mels || ex.mel.rows() == 0 {
            return Err(TtsError::Shape(format!(
                "mel of shape {:?}, expected T×{}",
                ex.mel.shape(),
                self.config.n_mels
            )));
        }
        if let Some(d) = &ex.durations {
            let total: u32 = d.iter().sum();
            if d.len() != ex.phonemes.len() || total as usize != ex.mel.rows() {
                return Err(TtsError::Shape(format!(
                    "{} durations summing to {total} for {} phonemes and {} frames",
                    d.len(),
                    ex.phonemes.len(),
                    ex.mel.rows()
                )));
            }
        }
        Ok(())
    }

    /// Flow-only: durations maximizing the prior likelihood of the latent.
    fn flow_alignment(
        g: &mut Graph<'_, f32>,
        mean: &Linear,
        flow: &FlowDecoder,
        h: Var,
        spk: Var,
        x: Var,
    ) -> Result<Vec<u32>, TtsError> {
        let h = g.detach(h);
        let mu = mean.forward(g, h);
        let frames = g.shape(x).0;
        let out = flow.forward(g, x, spk)?;
        let z = flow.unsqueeze(g, out.z, frames);
        let means = g.value(mu).clone();
        let z = g.value(z).clone();
        mas_align(&gaussian_loglik(&means, &z)?)
    }

    /// Training loss of one utterance.
    pub fn loss(&self, g: &mut Graph<'_, f32>, ex: &TtsExample) -> Result<LossTerms, TtsError> {
        self.check_example(ex)?;
        let n = ex.phonemes.len();
        let mask = Mask::all(n);
        let h = self.trunk.encode(g, &ex.phonemes, &mask)?;
        let spk = self.trunk.speaker(g, ex.speaker)?;
        let x = g.constant(ex.mel.clone());
        let durations = match (&ex.durations, &self.decoder) {
            (Some(d), _) => d.clone(),
            (None, Decoder::Flow { mean, flow, .. }) => Self::flow_alignment(g, mean, flow, h, spk, x)?,
            (None, _) => {
                return Err(TtsError::Config(format!(
                    "{} decoder needs reference durations",
                    self.variant()
                )))
            }
        };
        let log_d = self.trunk.predict_log_durations(g, h, spk, &mask);
        let duration = duration_loss(g, log_d, &durations, &mask)?;
        let decoder = match &self.decoder {
            Decoder::Transformer(d) => {
                let h_t = upsample(g, h, &durations)?;
                d.loss(g, h_t, spk, &ex.mel)?
            }
            Decoder::NarLstm(d) => {
                let h_t = upsample(g, h, &durations)?;
                d.loss(g, h_t, spk, &ex.mel)?
            }
            Decoder::ArLstm(d) => {
                let h_t = upsample(g, h, &durations)?;
                d.loss(g, h_t, spk, &ex.mel)?
            }
            Decoder::Flow {
                mean,
                flow,
                input_noise,
            } => {
                let mu = mean.forward(g, h);
                let mu = upsample(g, mu, &durations)?;
                let x = if g.is_train() && *input_noise > 0.0 {
                    let (t, c) = ex.mel.shape();
                    let noise = Tensor::from_fn(t, c, |_, _| {
                        let e: f64 = StandardNormal.sample(g.rng());
                        (input_noise * e) as f32
                    });
                    let noise = g.constant(noise);
                    g.add(x, noise)
                } else {
                    x
                };
                flow.nll(g, x, mu, spk)?
            }
            Decoder::Diffusion(d) => {
                let h_t = upsample(g, h, &durations)?;
                d.loss(g, h_t, spk, &ex.mel)?
            }
        };
        let total = g.add(decoder, duration);
        Ok(LossTerms {
            total,
            decoder,
            duration,
        })
    }

    /// Flow-only: monotonic alignment of a normalized spectrogram.
    pub fn align(&self, phonemes: &[usize], speaker: usize, mel: &Tensor<f32>) -> Result<Vec<u32>, TtsError> {
        let Decoder::Flow { mean, flow, .. } = &self.decoder else {
            return Err(TtsError::Config(format!(
                "{} decoder cannot align; use the flow",
                self.variant()
            )));
        };
        self.check_example(&TtsExample {
            phonemes: phonemes.to_vec(),
            speaker,
            mel: mel.clone(),
            durations: None,
        })?;
        let mut g = Graph::eval(&self.store);
        let mask = Mask::all(phonemes.len());
        let h = self.trunk.encode(&mut g, phonemes, &mask)?;
        let spk = self.trunk.speaker(&mut g, speaker)?;
        let x = g.constant(mel.clone());
        Self::flow_alignment(&mut g, mean, flow, h, spk, x)
    }

    /// Predicted integer durations.
    pub fn predict_durations(&self, phonemes: &[usize], speaker: usize) -> Result<Vec<u32>, TtsError> {
        let mut g = Graph::eval(&self.store);
        let mask = Mask::all(phonemes.len());
        let h = self.trunk.encode(&mut g, phonemes, &mask)?;
        let spk = self.trunk.speaker(&mut g, speaker)?;
        let log_d = self.trunk.predict_log_durations(&mut g, h, spk, &mask);
        durations_from_log(g.value(log_d).data())
    }

    /// Synthesize with predicted durations. `seed` drives the sampling noise
    /// of the flow and diffusion decoders.
    pub fn synthesize(&self, phonemes: &[usize], speaker: usize, sampling: &SamplingConfig) -> Result<Synthesis, TtsError> {
        sampling.validate()?;
        let durations = self.predict_durations(phonemes, speaker)?;
        self.synthesize_with_durations(phonemes, speaker, &durations, sampling)
    }

    pub fn synthesize_with_durations(
        &self,
        phonemes: &[usize],
        speaker: usize,
        durations: &[u32],
        sampling: &SamplingConfig,
    ) -> Result<Synthesis, TtsError> {
        PhonemeSequence::new(phonemes.to_vec(), self.config.trunk.vocab_size)?;
        let mut g = Graph::eval(&self.store);
        let mask = Mask::all(phonemes.len());
        let h = self.trunk.encode(&mut g, phonemes, &mask)?;
        let spk = self.trunk.speaker(&mut g, speaker)?;
        let mut r = rng(sampling.seed);
        let mel = match &self.decoder {
            Decoder::Transformer(d) => {
                let h_t = upsample(&mut g, h, durations)?;
                let y = d.forward(&mut g, h_t, spk)?;
                g.value(y).clone()
            }
            Decoder::NarLstm(d) => {
                let h_t = upsample(&mut g, h, durations)?;
                let (_, y) = d.forward(&mut g, h_t, spk);
                g.value(y).clone()
            }
            Decoder::ArLstm(d) => {
                let h_t = upsample(&mut g, h, durations)?;
                let y = d.generate(&mut g, h_t, spk);
                g.value(y).clone()
            }
            Decoder::Flow { mean, flow, .. } => {
                let mu = mean.forward(&mut g, h);
                let mu = upsample(&mut g, mu, durations)?;
                let y = flow.sample(&mut g, mu, spk, sampling.temperature, &mut r)?;
                g.value(y).clone()
            }
            Decoder::Diffusion(d) => {
                let h_t = upsample(&mut g, h, durations)?;
                d.generate(&mut g, h_t, spk, sampling.diffusion_steps, sampling.temperature, &mut r)?
            }
        };
        if !mel.is_finite() {
            return Err(TtsError::NonFinite(format!("{} output", self.variant())));
        }
        Ok(Synthesis {
            mel: self.norm.denormalize(&mel),
            durations: durations.to_vec(),
        })
    }

    pub fn config_hash(&self) -> String {
        config_hash(&self.config)
    }

    pub fn save(&self, path: &Path, epoch: u64) -> Result<(), TtsError> {
        let extra = serde_json::to_value(Extra {
            config: self.config.clone(),
            norm: self.norm.clone(),
        })
        .map_err(|e| TtsError::Config(e.to_string()))?;
        save_checkpoint(path, &self.store, &self.config_hash(), epoch, extra)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TtsError> {
        let (header, store) = load_checkpoint::<f32>(path)?;
        let extra: Extra = serde_json::from_value(header.extra)
            .map_err(|e| TtsError::Config(format!("checkpoint metadata: {e}")))?;
        if config_hash(&extra.config) != header.config_hash {
            return Err(TtsError::Config("checkpoint config hash mismatch".into()));
        }
        let mut model = Self::new(extra.config, 0)?;
        model.store.load_from(&store)?;
        model.norm = extra.norm;
        Ok(model)
    }
}

fn build_decoder(vb: &mut Builder<'_, f32>, config: &TtsConfig) -> Result<Decoder, TtsError> {
    let t = &config.trunk;
    let in_dim = t.dim + t.speaker_dim;
    let n_mels = config.n_mels;
    Ok(match &config.decoder {
        DecoderConfig::Transformer {
            layers,
            heads,
            ffn_dim,
            ffn_kernel,
            dropout,
        } => {
            let cfg = TransformerConfig {
                dim: t.dim,
                heads: *heads,
                ffn_dim: *ffn_dim,
                ffn_kernel: *ffn_kernel,
                dropout: *dropout,
            };
            Decoder::Transformer(TransformerDecoder::new(vb, in_dim, t.dim, &cfg, *layers, n_mels))
        }
        DecoderConfig::NarLstm {
            hidden,
            layers,
            dropout,
            postnet,
        } => Decoder::NarLstm(NarLstmDecoder::new(vb, in_dim, *hidden, *layers, *dropout, postnet, n_mels)),
        DecoderConfig::ArLstm {
            hidden,
            layers,
            zoneout,
            prenet_dim,
            prenet_dropout,
            reduction,
            postnet,
        } => Decoder::ArLstm(ArLstmDecoder::new(
            vb,
            &ArLstmParams {
                in_dim,
                hidden: *hidden,
                layers: *layers,
                zoneout: *zoneout,
                prenet_dim: *prenet_dim,
                prenet_dropout: *prenet_dropout,
                reduction: *reduction,
                postnet,
                n_mels,
            },
        )),
        DecoderConfig::Flow {
            blocks,
            hidden,
            wn_layers,
            kernel,
            dilation_rate,
            dropout,
            input_noise,
        } => Decoder::Flow {
            input_noise: *input_noise,
            mean: Linear::new(&mut vb.sub("mean"), t.dim, n_mels),
            flow: FlowDecoder::new(
                &mut vb.sub("flow"),
                &FlowParams {
                    n_mels,
                    cond_dim: t.speaker_dim,
                    blocks: *blocks,
                    hidden: *hidden,
                    wn_layers: *wn_layers,
                    kernel: *kernel,
                    dilation_rate: *dilation_rate,
                    dropout: *dropout,
                    identity_permutation: false,
                },
            ),
        },
        DecoderConfig::Diffusion {
            mean_layers,
            heads,
            ffn_dim,
            unet_channels,
            unet_mults,
            cond_dim,
            schedule,
            crop_frames,
            max_snr_weight,
        } => Decoder::Diffusion(Box::new(DiffusionDecoder::new(
            vb,
            &DiffusionParams {
                in_dim,
                dim: t.dim,
                mean_layers: *mean_layers,
                heads: *heads,
                ffn_dim: *ffn_dim,
                unet: UNetParams {
                    n_mels,
                    channels: *unet_channels,
                    mults: unet_mults.clone(),
                    cond_dim: *cond_dim,
                    speaker_dim: t.speaker_dim,
                },
                schedule: *schedule,
                crop_frames: *crop_frames,
                max_snr_weight: *max_snr_weight,
            },
        ))),
    })
}
