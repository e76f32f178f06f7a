//! The pipeline commands. Each reads its prerequisites from the artifact
//! directory, writes its outputs and a run manifest next to them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use synthasr_asr::{transcribe, AsrExample, AsrModel, LexiconTrie, Lexicon, NgramLm, Vocab};
use synthasr_dsp::specfile::save_mel;
use synthasr_dsp::{
    griffin_lim, read_wav, write_wav, FeatureConfig, GriffinLimConfig, InversionMode, MelExtractor, MelInverter,
    MelSpectrogram,
};
use synthasr_eval::mos::{summarize, HttpBackend, SubprocessBackend};
use synthasr_eval::{
    build_condition, cv_split, render_report, wer, ConditionKind, CorpusManifest, CvSplit, MetricRow, MosBackend,
    MosClient, Report, SynthesisCondition, SynthesisJob, Utterance, WerReport,
};
use synthasr_nn::{derive_seed, LrSchedule, Tensor};
use synthasr_tts::{extract_durations, train_tts as fit_tts, vocab_hash, DurationArchive, MelNorm, TtsExample, TtsModel, Variant};

use crate::artifacts::{require, AsrData, Layout, RunManifest, SynthSet, System, SET_MANIFEST};
use crate::image::write_spectrogram_png;
use crate::{ExperimentConfig, PipelineError};

/// Corpus, lexicon and the training / held-out split of an experiment.
#[derive(Clone, Debug)]
pub struct Corpus {
    /// Every utterance, with audio paths made absolute.
    pub manifest: CorpusManifest,
    pub lexicon: Lexicon,
    pub vocab: Vocab,
    pub split: CvSplit,
    pub new_texts: Option<Vec<String>>,
    inputs: Vec<PathBuf>,
}

fn resolve_audio(manifest: CorpusManifest, dir: &Path) -> Result<CorpusManifest, PipelineError> {
    let speakers = manifest.speakers().to_vec();
    let utts = manifest
        .utterances()
        .iter()
        .map(|u| Utterance {
            audio: u.audio.as_ref().map(|p| dir.join(p)),
            ..u.clone()
        })
        .collect();
    Ok(CorpusManifest::new(utts, speakers)?)
}

impl Corpus {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self, PipelineError> {
        let p = &cfg.paths;
        let dir = p.manifest.parent().unwrap_or(Path::new("."));
        let manifest = resolve_audio(CorpusManifest::load(&p.manifest)?, dir)?;
        let lexicon = Lexicon::load(&p.lexicon)?;
        let phonemes: Vec<String> = lexicon.phonemes().into_iter().collect();
        let vocab = Vocab::from_phonemes(&phonemes)?;
        lexicon.check_vocab(&vocab)?;
        let split = cv_split(&manifest, cfg.data.heldout_per_speaker, derive_seed(cfg.seed, "split"))?;
        let mut inputs = vec![p.manifest.clone(), p.lexicon.clone()];
        let new_texts = match &p.new_texts {
            Some(path) => {
                inputs.push(path.clone());
                let text = std::fs::read_to_string(path)?;
                Some(
                    text.lines()
                        .map(synthasr_eval::normalize_text)
                        .filter(|l| !l.is_empty())
                        .collect(),
                )
            }
            None => None,
        };
        let corpus = Self {
            manifest,
            lexicon,
            vocab,
            split,
            new_texts,
            inputs,
        };
        for u in corpus.manifest.utterances() {
            corpus.phoneme_ids(&u.text)?;
        }
        Ok(corpus)
    }

    pub fn num_speakers(&self) -> usize {
        self.manifest.speakers().len()
    }

    pub fn speaker_index(&self, speaker: &str) -> Result<usize, PipelineError> {
        self.manifest
            .speakers()
            .iter()
            .position(|s| s == speaker)
            .ok_or_else(|| PipelineError::Config(format!("unknown speaker `{speaker}`")))
    }

    /// Marked phoneme ids of a normalized transcript.
    pub fn phoneme_ids(&self, text: &str) -> Result<Vec<usize>, PipelineError> {
        let words: Vec<&str> = text.split_whitespace().collect();
        Ok(self.vocab.encode(&transcribe(&words, &self.lexicon, None)?)?)
    }

    fn record_inputs(&self, layout: &Layout, run: &mut RunManifest) -> Result<(), PipelineError> {
        for p in &self.inputs {
            run.input(layout, p)?;
        }
        Ok(())
    }

    /// Jobs of a synthesis set, in manifest order.
    pub fn jobs(&self, cfg: &ExperimentConfig, set: SynthSet) -> Result<Vec<SynthesisJob>, PipelineError> {
        match set {
            SynthSet::Heldout => Ok(self
                .split
                .cv
                .utterances()
                .iter()
                .map(|u| SynthesisJob {
                    utt_id: u.id.clone(),
                    text: u.text.clone(),
                    speaker: u.speaker.clone(),
                })
                .collect()),
            SynthSet::Condition(kind) => {
                let n = self.split.train.len();
                let new_texts = match (kind, &self.new_texts) {
                    (ConditionKind::NewText, None) => {
                        return Err(PipelineError::Config("condition c needs paths.new_texts".into()))
                    }
                    (ConditionKind::NewText, Some(t)) if t.len() < n => {
                        return Err(PipelineError::Config(format!(
                            "condition c needs {n} new texts, the source has {}",
                            t.len()
                        )))
                    }
                    (_, t) => t.as_ref().map(|t| t[..n.min(t.len())].to_vec()),
                };
                let cond = SynthesisCondition {
                    kind,
                    seed: derive_seed(cfg.seed, "condition"),
                    new_texts,
                };
                Ok(build_condition(&self.split.train, &cond)?)
            }
        }
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Failed(format!("worker pool: {e}")))
}

fn load_audio(path: &Path, features: &FeatureConfig) -> Result<synthasr_dsp::AudioSignal, PipelineError> {
    let signal = read_wav(path)?;
    if signal.sample_rate_hz != features.sample_rate_hz {
        return Err(PipelineError::Config(format!(
            "{} is sampled at {} Hz, features expect {} Hz",
            path.display(),
            signal.sample_rate_hz,
            features.sample_rate_hz
        )));
    }
    Ok(signal)
}

fn audio_path(u: &Utterance) -> Result<&Path, PipelineError> {
    u.audio
        .as_deref()
        .ok_or_else(|| PipelineError::Config(format!("utterance {} has no audio", u.id)))
}

/// Log-Mel frames of every utterance, in manifest order.
pub fn extract_features(
    manifest: &CorpusManifest,
    features: &FeatureConfig,
    workers: usize,
) -> Result<Vec<Tensor<f32>>, PipelineError> {
    let ex = MelExtractor::new(features)?;
    pool(workers)?.install(|| {
        manifest
            .utterances()
            .par_iter()
            .map(|u| Ok(ex.log_mel(&load_audio(audio_path(u)?, features)?)?.frames))
            .collect()
    })
}

fn create_dir(dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn tts_examples(
    corpus: &Corpus,
    mels: &[Tensor<f32>],
    norm: &MelNorm,
    archive: Option<&DurationArchive>,
) -> Result<Vec<TtsExample>, PipelineError> {
    corpus
        .split
        .train
        .utterances()
        .iter()
        .zip(mels)
        .map(|(u, mel)| {
            let durations = match archive {
                None => None,
                Some(a) => Some(
                    a.get(&u.id)
                        .ok_or_else(|| PipelineError::Failed(format!("duration archive lacks {}; rerun `synthasr align`", u.id)))?
                        .to_vec(),
                ),
            };
            Ok(TtsExample {
                phonemes: corpus.phoneme_ids(&u.text)?,
                speaker: corpus.speaker_index(&u.speaker)?,
                mel: norm.normalize(mel),
                durations,
            })
        })
        .collect()
}

/// Equal split of `frames` over `n` segments; the first `frames % n`
/// segments get one extra frame.
pub fn uniform_durations(n: usize, frames: usize) -> Vec<u32> {
    (0..n).map(|i| (frames / n + usize::from(i < frames % n)) as u32).collect()
}

fn write_losses(dir: &Path, losses: &[f64]) -> Result<PathBuf, PipelineError> {
    let path = dir.join("losses.json");
    std::fs::write(&path, serde_json::to_string_pretty(losses)? + "\n")?;
    Ok(path)
}

/// Trains the flow decoder with its own alignment search and stores the
/// resulting durations of every training utterance.
pub fn align(cfg: &ExperimentConfig, layout: &Layout) -> Result<DurationArchive, PipelineError> {
    let corpus = Corpus::load(cfg)?;
    let dir = layout.align_dir();
    create_dir(&dir)?;
    let mels = extract_features(&corpus.split.train, &cfg.features.tts, cfg.workers)?;
    let norm = MelNorm::fit(&mels, cfg.features.tts.n_mels);
    let examples = tts_examples(&corpus, &mels, &norm, None)?;
    let init = derive_seed(cfg.seed, "align/init");
    let train = derive_seed(cfg.seed, "align/train");
    let mut model = TtsModel::new(cfg.tts_config(Variant::Flow, corpus.vocab.len(), corpus.num_speakers())?, init)?;
    model.norm = norm;
    let mut losses = Vec::new();
    if cfg.align.flat_start_epochs > 0.0 {
        let flat: Vec<TtsExample> = examples
            .iter()
            .map(|ex| TtsExample {
                durations: Some(uniform_durations(ex.phonemes.len(), ex.mel.rows())),
                ..ex.clone()
            })
            .collect();
        let mut tc = cfg.align_train_config(derive_seed(train, "flat"));
        tc.schedule = LrSchedule::Constant {
            lr: cfg.align.schedule.lr_at(0.0)?,
            total_epochs: cfg.align.flat_start_epochs,
        };
        losses = fit_tts(&mut model, &flat, &tc, |e, l| log::info!("align flat start epoch {e}: loss {l:.4}"))?.epoch_losses;
    }
    let report = fit_tts(&mut model, &examples, &cfg.align_train_config(train), |e, l| {
        log::info!("align epoch {e}: loss {l:.4}")
    })?;
    losses.extend(report.epoch_losses);
    let ids: Vec<&str> = corpus.split.train.utterances().iter().map(|u| u.id.as_str()).collect();
    let archive = extract_durations(&model, ids.into_iter().zip(&examples), vocab_hash(corpus.vocab.symbols()))?;
    archive.save(&layout.durations())?;
    let ckpt = dir.join("flow.ckpt");
    model.save(&ckpt, losses.len() as u64)?;
    let losses = write_losses(&dir, &losses)?;

    let mut run = RunManifest::new("align", cfg);
    run.seeds.insert("init".into(), init);
    run.seeds.insert("train".into(), train);
    corpus.record_inputs(layout, &mut run)?;
    for u in corpus.split.train.utterances() {
        run.input(layout, audio_path(u)?)?;
    }
    for p in [layout.durations(), ckpt, losses] {
        run.output(layout, &p)?;
    }
    run.write(&dir)?;
    Ok(archive)
}

fn tts_command(system: System) -> String {
    let control = if system.untrained { " --control" } else { "" };
    format!("train-tts --variant {}{control}", system.variant)
}

fn synth_command(system: System, set: SynthSet) -> String {
    let control = if system.untrained { " --control" } else { "" };
    let cond = match set {
        SynthSet::Condition(c) => c,
        SynthSet::Heldout => ConditionKind::SameTextSameSpeaker,
    };
    format!("synthesize --variant {} --condition {cond}{control}", system.variant)
}

fn asr_command(data: AsrData) -> String {
    match data {
        AsrData::Real => "train-asr --data real".into(),
        AsrData::Synthetic(s, c) => {
            let control = if s.untrained { " --control" } else { "" };
            format!("train-asr --variant {} --condition {c}{control}", s.variant)
        }
    }
}

/// Trains one decoder variant on the stored durations. A control system
/// keeps its initial weights; only the output normalization is fitted.
pub fn train_tts(cfg: &ExperimentConfig, layout: &Layout, system: System) -> Result<TtsModel, PipelineError> {
    let corpus = Corpus::load(cfg)?;
    require(&layout.durations(), "align")?;
    let archive = DurationArchive::load(&layout.durations())?;
    if archive.vocab_hash != vocab_hash(corpus.vocab.symbols()) {
        return Err(PipelineError::Config(
            "duration archive was built for a different phoneme inventory; rerun `synthasr align`".into(),
        ));
    }
    let dir = layout.tts_dir(system);
    create_dir(&dir)?;
    let mels = extract_features(&corpus.split.train, &cfg.features.tts, cfg.workers)?;
    let norm = MelNorm::fit(&mels, cfg.features.tts.n_mels);
    let examples = tts_examples(&corpus, &mels, &norm, Some(&archive))?;
    let variant = system.variant;
    let init = derive_seed(cfg.seed, &format!("tts/{variant}/init"));
    let train = derive_seed(cfg.seed, &format!("tts/{variant}/train"));
    let mut model = TtsModel::new(cfg.tts_config(variant, corpus.vocab.len(), corpus.num_speakers())?, init)?;
    model.norm = norm;
    let losses = if system.untrained {
        Vec::new()
    } else {
        fit_tts(&mut model, &examples, &cfg.tts_train_config(variant, train), |e, l| {
            log::info!("{variant} epoch {e}: loss {l:.4}")
        })?
        .epoch_losses
    };
    let ckpt = layout.tts_checkpoint(system);
    model.save(&ckpt, losses.len() as u64)?;
    let losses = write_losses(&dir, &losses)?;

    let mut run = RunManifest::new("train-tts", cfg);
    run.variant = Some(system.to_string());
    run.seeds.insert("init".into(), init);
    if !system.untrained {
        run.seeds.insert("train".into(), train);
    }
    corpus.record_inputs(layout, &mut run)?;
    run.input(layout, &layout.durations())?;
    for u in corpus.split.train.utterances() {
        run.input(layout, audio_path(u)?)?;
    }
    run.output(layout, &ckpt)?;
    run.output(layout, &losses)?;
    run.write(&dir)?;
    Ok(model)
}

/// Mel frames to waveform: pseudo-inverse to linear magnitudes, then
/// Griffin-Lim.
pub struct Vocoder {
    features: FeatureConfig,
    inverter: MelInverter,
    gl: GriffinLimConfig,
}

impl Vocoder {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, PipelineError> {
        let mut inverter = MelInverter::new(&cfg.features.tts)?;
        inverter.nnls_iterations = cfg.vocoder.nnls_iterations;
        Ok(Self {
            features: cfg.features.tts.clone(),
            inverter,
            gl: GriffinLimConfig {
                iterations: cfg.vocoder.iterations,
                momentum: cfg.vocoder.momentum,
                phase_seed: None,
            },
        })
    }

    pub fn vocode(&self, mel: &MelSpectrogram) -> Result<synthasr_dsp::AudioSignal, PipelineError> {
        let lin = self.inverter.invert(mel, InversionMode::PseudoInverse)?;
        Ok(griffin_lim(&lin, &self.features, &self.gl)?)
    }
}

fn synthesize_set(
    cfg: &ExperimentConfig,
    layout: &Layout,
    corpus: &Corpus,
    model: &TtsModel,
    system: System,
    set: SynthSet,
) -> Result<CorpusManifest, PipelineError> {
    let dir = layout.synth_dir(system, set);
    create_dir(&dir)?;
    let jobs = corpus.jobs(cfg, set)?;
    let vocoder = Vocoder::new(cfg)?;
    let results: Vec<Result<(Utterance, u64), PipelineError>> = pool(cfg.workers)?.install(|| {
        jobs.par_iter()
            .map(|job| {
                let mut sampling = cfg.sampling.clone();
                sampling.seed = derive_seed(cfg.seed, &format!("sample/{system}/{set}/{}", job.utt_id));
                let ids = corpus.phoneme_ids(&job.text)?;
                let spk = corpus.speaker_index(&job.speaker)?;
                let out = model.synthesize(&ids, spk, &sampling)?;
                if !out.mel.is_finite() {
                    return Err(PipelineError::Numerical(format!("synthesized spectrogram of {}", job.utt_id)));
                }
                let mel = MelSpectrogram::new(out.mel, cfg.features.tts.clone())?;
                save_mel(&dir.join(format!("{}.mel", job.utt_id)), &mel)?;
                write_spectrogram_png(&dir.join(format!("{}.png", job.utt_id)), &mel.frames)?;
                let signal = vocoder.vocode(&mel)?;
                let wav = format!("{}.wav", job.utt_id);
                write_wav(&dir.join(&wav), &signal)?;
                Ok((
                    Utterance {
                        id: job.utt_id.clone(),
                        speaker: job.speaker.clone(),
                        audio: Some(PathBuf::from(wav)),
                        text: job.text.clone(),
                    },
                    sampling.seed,
                ))
            })
            .collect()
    });
    let mut utts = Vec::new();
    let mut run = RunManifest::new("synthesize", cfg);
    run.variant = Some(system.to_string());
    run.condition = Some(set.to_string());
    for r in results {
        let (u, seed) = r?;
        run.seeds.insert(format!("sample/{}", u.id), seed);
        utts.push(u);
    }
    let manifest = CorpusManifest::new(utts, corpus.manifest.speakers().to_vec())?;
    manifest.save(&dir.join(SET_MANIFEST))?;
    corpus.record_inputs(layout, &mut run)?;
    run.input(layout, &layout.tts_checkpoint(system))?;
    run.output(layout, &dir.join(SET_MANIFEST))?;
    for u in manifest.utterances() {
        for ext in ["mel", "png", "wav"] {
            run.output(layout, &dir.join(format!("{}.{ext}", u.id)))?;
        }
    }
    run.write(&dir)?;
    Ok(manifest)
}

/// Synthesizes the jobs of `condition`, and the held-out utterances if
/// they are not there yet.
pub fn synthesize(
    cfg: &ExperimentConfig,
    layout: &Layout,
    system: System,
    condition: ConditionKind,
) -> Result<CorpusManifest, PipelineError> {
    let corpus = Corpus::load(cfg)?;
    let ckpt = layout.tts_checkpoint(system);
    require(&ckpt, &tts_command(system))?;
    let model = TtsModel::load(&ckpt)?;
    let out = synthesize_set(cfg, layout, &corpus, &model, system, SynthSet::Condition(condition))?;
    if !layout.synth_dir(system, SynthSet::Heldout).join(SET_MANIFEST).exists() {
        synthesize_set(cfg, layout, &corpus, &model, system, SynthSet::Heldout)?;
    }
    Ok(out)
}

fn load_set(layout: &Layout, system: System, set: SynthSet) -> Result<CorpusManifest, PipelineError> {
    let dir = layout.synth_dir(system, set);
    let path = dir.join(SET_MANIFEST);
    require(&path, &synth_command(system, set))?;
    resolve_audio(CorpusManifest::load(&path)?, &dir)
}

fn asr_examples(
    corpus: &Corpus,
    manifest: &CorpusManifest,
    features: &[Tensor<f32>],
) -> Result<Vec<AsrExample>, PipelineError> {
    manifest
        .utterances()
        .iter()
        .zip(features)
        .map(|(u, f)| {
            Ok(AsrExample {
                features: f.clone(),
                labels: corpus.phoneme_ids(&u.text)?,
            })
        })
        .collect()
}

/// Trains a recognizer on real training audio or on a synthesized set.
/// Every recognizer starts from the same initialization and visits its
/// data in the same seeded order.
pub fn train_asr(cfg: &ExperimentConfig, layout: &Layout, data: AsrData) -> Result<AsrModel, PipelineError> {
    let corpus = Corpus::load(cfg)?;
    let manifest = match data {
        AsrData::Real => corpus.split.train.clone(),
        AsrData::Synthetic(system, cond) => load_set(layout, system, SynthSet::Condition(cond))?,
    };
    let dir = layout.asr_dir(data);
    create_dir(&dir)?;
    let feats = extract_features(&manifest, &cfg.features.asr, cfg.workers)?;
    let examples = asr_examples(&corpus, &manifest, &feats)?;
    let init = derive_seed(cfg.seed, "asr/init");
    let train = derive_seed(cfg.seed, "asr/train");
    let mut model = AsrModel::new(cfg.asr_config(corpus.vocab.clone())?, init)?;
    let report = synthasr_asr::train_asr(&mut model, &examples, &cfg.asr_train_config(train), |e, l| {
        log::info!("asr {data} epoch {e}: loss {l:.4}")
    })?;
    let ckpt = layout.asr_checkpoint(data);
    model.save(&ckpt, report.epoch_losses.len() as u64)?;
    let losses = write_losses(&dir, &report.epoch_losses)?;

    let mut run = RunManifest::new("train-asr", cfg);
    if let AsrData::Synthetic(s, c) = data {
        run.variant = Some(s.to_string());
        run.condition = Some(c.to_string());
    }
    run.seeds.insert("init".into(), init);
    run.seeds.insert("train".into(), train);
    corpus.record_inputs(layout, &mut run)?;
    for u in manifest.utterances() {
        run.input(layout, audio_path(u)?)?;
    }
    run.output(layout, &ckpt)?;
    run.output(layout, &losses)?;
    run.write(&dir)?;
    Ok(model)
}

/// Lexicon-constrained decoder with an n-gram model of the training
/// transcripts.
pub struct Decoder {
    trie: LexiconTrie,
    lm: NgramLm,
    beam: synthasr_asr::BeamConfig,
}

impl Decoder {
    pub fn new(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<Self, PipelineError> {
        let sentences: Vec<Vec<&str>> = corpus.split.train.utterances().iter().map(|u| u.words()).collect();
        Ok(Self {
            trie: LexiconTrie::new(&corpus.lexicon, &corpus.vocab)?,
            lm: NgramLm::train(&sentences, cfg.decode.lm_order, cfg.decode.lm_smoothing)?,
            beam: cfg.beam_config(),
        })
    }

    pub fn recognize(&self, model: &AsrModel, features: &Tensor<f32>) -> Result<Vec<String>, PipelineError> {
        Ok(model.recognize(features, &self.trie, Some(&self.lm), &self.beam)?)
    }

    /// Recognizes every utterance of `manifest` and scores it against the
    /// manifest transcripts.
    pub fn score(
        &self,
        model: &AsrModel,
        manifest: &CorpusManifest,
        features: &FeatureConfig,
        workers: usize,
    ) -> Result<(WerReport, BTreeMap<String, Vec<String>>), PipelineError> {
        let feats = extract_features(manifest, features, workers)?;
        let hyps: Vec<Result<Vec<String>, PipelineError>> =
            pool(workers)?.install(|| feats.par_iter().map(|f| self.recognize(model, f)).collect());
        let mut hyp_map = BTreeMap::new();
        let mut refs = BTreeMap::new();
        for (u, h) in manifest.utterances().iter().zip(hyps) {
            hyp_map.insert(u.id.clone(), h?);
            refs.insert(u.id.clone(), u.words().iter().map(|w| w.to_string()).collect());
        }
        Ok((wer(&hyp_map, &refs)?, hyp_map))
    }
}

/// Report name of a recognizer's training data.
pub fn system_name(data: AsrData) -> String {
    match data {
        AsrData::Real => "Real data".into(),
        AsrData::Synthetic(s, _) if s.untrained => format!("{} (untrained)", s.variant.display_name()),
        AsrData::Synthetic(s, _) => s.variant.display_name().into(),
    }
}

fn mos_client(cfg: &ExperimentConfig) -> Option<MosClient> {
    let m = cfg.mos.as_ref()?;
    let backend: Box<dyn MosBackend> = match (&m.command, &m.url) {
        (Some(cmd), _) if !cmd.is_empty() => Box::new(SubprocessBackend {
            program: PathBuf::from(&cmd[0]),
            args: cmd[1..].to_vec(),
            timeout_secs: m.timeout_secs,
        }),
        (_, Some(url)) => Box::new(HttpBackend {
            url: url.clone(),
            timeout_secs: m.timeout_secs,
        }),
        _ => return None,
    };
    Some(MosClient {
        backend,
        retries: m.retries,
        workers: cfg.workers,
    })
}

fn hypothesis_table(manifest: &CorpusManifest, hyps: &BTreeMap<String, Vec<String>>) -> String {
    let mut out = String::from("id\treference\thypothesis\n");
    for u in manifest.utterances() {
        let h = hyps.get(&u.id).map(|h| h.join(" ")).unwrap_or_default();
        writeln!(out, "{}\t{}\t{h}", u.id, u.text).unwrap();
    }
    out
}

/// Word error rate on the held-out real utterances; for synthetic systems
/// also the sWER of the real-data recognizer on the system's held-out
/// syntheses and, when a scorer is configured, their MOS.
pub fn evaluate(cfg: &ExperimentConfig, layout: &Layout, data: AsrData) -> Result<MetricRow, PipelineError> {
    let corpus = Corpus::load(cfg)?;
    let ckpt = layout.asr_checkpoint(data);
    require(&ckpt, &asr_command(data))?;
    let mut run = RunManifest::new("evaluate", cfg);
    run.input(layout, &ckpt)?;
    let model = AsrModel::load(&ckpt)?;
    let decoder = Decoder::new(cfg, &corpus)?;
    let heldout = &corpus.split.cv;
    let (report, hyps) = decoder.score(&model, heldout, &cfg.features.asr, cfg.workers)?;
    let condition = match data {
        AsrData::Real => None,
        AsrData::Synthetic(_, c) => Some(c),
    };
    let mut row = MetricRow::new(system_name(data), condition);
    row.wer.insert(cfg.data.test_set.clone(), report.rate);
    let dir = layout.eval_dir(data);
    create_dir(&dir)?;
    std::fs::write(dir.join("hypotheses.tsv"), hypothesis_table(heldout, &hyps))?;
    std::fs::write(dir.join("wer.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    let mut outputs = vec![dir.join("hypotheses.tsv"), dir.join("wer.json")];

    if let AsrData::Synthetic(system, c) = data {
        run.variant = Some(system.to_string());
        run.condition = Some(c.to_string());
        let scorer_ckpt = layout.asr_checkpoint(AsrData::Real);
        require(&scorer_ckpt, &asr_command(AsrData::Real))?;
        run.input(layout, &scorer_ckpt)?;
        let scorer = AsrModel::load(&scorer_ckpt)?;
        let synth = load_set(layout, system, SynthSet::Heldout)?;
        run.input(layout, &layout.synth_dir(system, SynthSet::Heldout).join(SET_MANIFEST))?;
        let (swer, shyps) = decoder.score(&scorer, &synth, &cfg.features.asr, cfg.workers)?;
        row.swer = Some(swer.rate);
        std::fs::write(dir.join("swer_hypotheses.tsv"), hypothesis_table(&synth, &shyps))?;
        outputs.push(dir.join("swer_hypotheses.tsv"));
        if let Some(client) = mos_client(cfg) {
            let files: Vec<(String, PathBuf)> = synth
                .utterances()
                .iter()
                .map(|u| Ok((u.id.clone(), audio_path(u)?.to_path_buf())))
                .collect::<Result<_, PipelineError>>()?;
            let scores = client.score(&files).map_err(|e| PipelineError::Failed(e.to_string()))?;
            let seed = derive_seed(cfg.seed, &format!("bootstrap/{system}"));
            let s = summarize(&scores, cfg.bootstrap.level, cfg.bootstrap.resamples, seed)?;
            run.seeds.insert("bootstrap".into(), seed);
            row.mos_mean = Some(s.mean);
            row.mos_ci = Some(s.ci);
        }
    }
    row.validate()?;
    let metrics = layout.metrics(data);
    std::fs::write(&metrics, serde_json::to_string_pretty(&row)? + "\n")?;
    outputs.push(metrics);
    corpus.record_inputs(layout, &mut run)?;
    for u in heldout.utterances() {
        run.input(layout, audio_path(u)?)?;
    }
    for p in &outputs {
        run.output(layout, p)?;
    }
    run.write(&dir)?;
    Ok(row)
}

fn row_order(row: &MetricRow) -> (usize, bool, Option<ConditionKind>) {
    let pos = Variant::ALL
        .iter()
        .position(|v| row.system.starts_with(v.display_name()))
        .unwrap_or(Variant::ALL.len());
    (pos, row.system.ends_with("(untrained)"), row.condition)
}

/// Collects every evaluated row into the summary table, the a/b/c grid
/// and a CSV file.
pub fn report(cfg: &ExperimentConfig, layout: &Layout) -> Result<Report, PipelineError> {
    let eval = layout.out.join("eval");
    require(&eval, "evaluate")?;
    let mut run = RunManifest::new("report", cfg);
    let mut entries: Vec<PathBuf> = std::fs::read_dir(&eval)?
        .map(|e| e.map(|e| e.path().join("metrics.json")))
        .collect::<Result<_, _>>()?;
    entries.sort();
    let mut reference = None;
    let mut rows = Vec::new();
    for path in entries.into_iter().filter(|p| p.exists()) {
        run.input(layout, &path)?;
        let row: MetricRow = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
        if row.condition.is_none() {
            reference = Some(row);
        } else {
            rows.push(row);
        }
    }
    if rows.is_empty() && reference.is_none() {
        return Err(PipelineError::MissingArtifact {
            path: eval.join("<system>/metrics.json"),
            producer: "evaluate".into(),
        });
    }
    rows.sort_by_key(row_order);
    let report = render_report(&rows, reference.as_ref());
    let dir = layout.report_dir();
    create_dir(&dir)?;
    for (name, text) in [
        ("summary.txt", &report.summary),
        ("conditions.txt", &report.conditions),
        ("report.csv", &report.csv),
    ] {
        let p = dir.join(name);
        std::fs::write(&p, text)?;
        run.output(layout, &p)?;
    }
    run.write(&dir)?;
    Ok(report)
}
