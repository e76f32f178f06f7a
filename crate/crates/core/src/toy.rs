//! Deterministic toy corpus: harmonic "speakers" reading sentences built
//! from a small phoneme inventory, with exact phoneme segmentations.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use synthasr_asr::Lexicon;
use synthasr_dsp::{write_wav, AudioSignal};
use synthasr_nn::{derive_seed, rng};

use crate::PipelineError;

pub const SAMPLE_RATE: u32 = 16_000;
/// Segment durations are whole multiples of this many samples (12.5 ms).
pub const FRAME_SAMPLES: usize = 200;

#[derive(Clone, Copy, Debug)]
enum Source {
    /// Harmonic source shaped by `(centre Hz, bandwidth Hz, gain)` resonances.
    Voiced(&'static [(f64, f64, f64)]),
    /// Band of noise between two frequencies.
    Noise(f64, f64),
}

const PHONEMES: [(&str, Source); 8] = [
    ("a", Source::Voiced(&[(800.0, 90.0, 1.0), (1250.0, 110.0, 0.7), (2600.0, 160.0, 0.25)])),
    ("e", Source::Voiced(&[(450.0, 80.0, 1.0), (1950.0, 120.0, 0.6), (2650.0, 160.0, 0.3)])),
    ("i", Source::Voiced(&[(280.0, 70.0, 1.0), (2350.0, 120.0, 0.5), (3050.0, 170.0, 0.35)])),
    ("o", Source::Voiced(&[(500.0, 80.0, 1.0), (880.0, 90.0, 0.8), (2500.0, 160.0, 0.2)])),
    ("u", Source::Voiced(&[(310.0, 70.0, 1.0), (700.0, 80.0, 0.5), (2300.0, 160.0, 0.15)])),
    ("m", Source::Voiced(&[(250.0, 60.0, 0.45), (1100.0, 120.0, 0.1), (2200.0, 160.0, 0.05)])),
    ("n", Source::Voiced(&[(250.0, 60.0, 0.45), (1700.0, 120.0, 0.12), (2600.0, 160.0, 0.06)])),
    ("s", Source::Noise(4000.0, 7500.0)),
];

const WORDS: [&str; 8] = ["ami", "eso", "inu", "mona", "sue", "nemo", "osa", "uni"];

/// `(id, f0 Hz, formant scale)`
const SPEAKERS: [(&str, f64, f64); 4] = [
    ("spk1", 100.0, 0.96),
    ("spk2", 130.0, 1.0),
    ("spk3", 170.0, 1.05),
    ("spk4", 210.0, 1.1),
];

const UTTS_PER_SPEAKER: usize = 5;
const WORDS_PER_UTT: usize = 3;
const NEW_TEXTS: usize = 20;
const MIN_FRAMES: u32 = 6;
const MAX_FRAMES: u32 = 10;
const NOISE_PARTIALS: usize = 60;
const CROSSFADE: usize = 160;
const FADE: usize = 80;
const PEAK: f32 = 0.5;

#[derive(Clone, Debug)]
pub struct ToyUtterance {
    pub id: String,
    pub speaker: String,
    pub words: Vec<String>,
    pub phonemes: Vec<String>,
    /// Segment length of every phoneme in units of [`FRAME_SAMPLES`].
    pub durations: Vec<u32>,
    pub samples: Vec<f32>,
}

impl ToyUtterance {
    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}

#[derive(Clone, Debug)]
pub struct ToyCorpus {
    pub utterances: Vec<ToyUtterance>,
    /// Extra sentences over the same words for the new-text condition.
    pub new_texts: Vec<String>,
    pub lexicon: Lexicon,
}

pub fn phoneme_inventory() -> Vec<&'static str> {
    PHONEMES.iter().map(|p| p.0).collect()
}

fn source(phoneme: &str) -> Source {
    PHONEMES.iter().find(|p| p.0 == phoneme).expect("toy phoneme").1
}

fn resonance(f: f64, formants: &[(f64, f64, f64)], scale: f64) -> f64 {
    let tilt = 1.0 / (1.0 + f / 1500.0);
    formants
        .iter()
        .map(|&(c, bw, g)| {
            let x = (f - c * scale) / bw;
            g / (1.0 + x * x)
        })
        .sum::<f64>()
        * tilt
}

struct Partials {
    freqs: Vec<f64>,
    phases: Vec<f64>,
}

fn render(phonemes: &[String], durations: &[u32], f0: f64, scale: f64, seed: u64) -> Vec<f32> {
    let n = durations.iter().sum::<u32>() as usize * FRAME_SAMPLES;
    let sr = SAMPLE_RATE as f64;
    let mut r = rng(seed);
    let noise: Vec<Option<Partials>> = phonemes
        .iter()
        .map(|p| match source(p) {
            Source::Noise(lo, hi) => Some(Partials {
                freqs: (0..NOISE_PARTIALS).map(|_| r.random_range(lo..hi) * scale).collect(),
                phases: (0..NOISE_PARTIALS).map(|_| r.random_range(0.0..2.0 * PI)).collect(),
            }),
            Source::Voiced(_) => None,
        })
        .collect();
    let mut bounds = vec![0usize];
    for &d in durations {
        bounds.push(bounds.last().unwrap() + d as usize * FRAME_SAMPLES);
    }
    // contribution of segment `s` at time `t` with its own amplitude model
    let segment = |s: usize, t: usize, phase: f64, f: f64| -> f64 {
        match source(&phonemes[s]) {
            Source::Voiced(formants) => {
                let mut v = 0.0;
                let mut k = 1.0;
                while k * f < 7600.0 {
                    v += resonance(k * f, formants, scale) * (k * phase).sin();
                    k += 1.0;
                }
                v
            }
            Source::Noise(..) => {
                let p = noise[s].as_ref().unwrap();
                let time = t as f64 / sr;
                0.12 * p
                    .freqs
                    .iter()
                    .zip(&p.phases)
                    .map(|(fr, ph)| (2.0 * PI * fr * time + ph).sin())
                    .sum::<f64>()
            }
        }
    };
    let mut out = vec![0.0f64; n];
    let mut phase = 0.0;
    let mut seg = 0;
    for (t, o) in out.iter_mut().enumerate() {
        while t >= bounds[seg + 1] {
            seg += 1;
        }
        let f = f0 * (1.05 - 0.1 * t as f64 / n as f64);
        phase += 2.0 * PI * f / sr;
        let mut v = segment(seg, t, phase, f);
        // linear crossfade around internal boundaries
        let half = CROSSFADE / 2;
        if seg + 1 < phonemes.len() && t + half > bounds[seg + 1] {
            let w = (t + half - bounds[seg + 1]) as f64 / CROSSFADE as f64;
            v = (1.0 - w) * v + w * segment(seg + 1, t, phase, f);
        } else if seg > 0 && t < bounds[seg] + half {
            let w = (bounds[seg] + half - t) as f64 / CROSSFADE as f64;
            v = (1.0 - w) * v + w * segment(seg - 1, t, phase, f);
        }
        let edge = t.min(n - 1 - t);
        if edge < FADE {
            v *= edge as f64 / FADE as f64;
        }
        *o = v;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-9);
    out.iter().map(|v| (v / peak) as f32 * PEAK).collect()
}

fn sentence(r: &mut synthasr_nn::Rng) -> Vec<String> {
    (0..WORDS_PER_UTT).map(|_| WORDS[r.random_range(0..WORDS.len())].to_string()).collect()
}

impl ToyCorpus {
    pub fn generate(seed: u64) -> Self {
        let mut lexicon = Lexicon::new();
        for w in WORDS {
            let phonemes: Vec<String> = w.chars().map(String::from).collect();
            lexicon.insert_plain(w, &phonemes).expect("toy lexicon");
        }
        let mut r = rng(derive_seed(seed, "texts"));
        let mut utterances = Vec::new();
        for &(spk, f0, scale) in &SPEAKERS {
            for i in 0..UTTS_PER_SPEAKER {
                let id = format!("{spk}-{:02}", i + 1);
                let words = sentence(&mut r);
                let phonemes: Vec<String> = words.iter().flat_map(|w| w.chars().map(String::from)).collect();
                let durations: Vec<u32> = phonemes.iter().map(|_| r.random_range(MIN_FRAMES..=MAX_FRAMES)).collect();
                let samples = render(&phonemes, &durations, f0, scale, derive_seed(seed, &id));
                utterances.push(ToyUtterance {
                    id,
                    speaker: spk.to_string(),
                    words,
                    phonemes,
                    durations,
                    samples,
                });
            }
        }
        let new_texts = (0..NEW_TEXTS).map(|_| sentence(&mut r).join(" ")).collect();
        Self {
            utterances,
            new_texts,
            lexicon,
        }
    }

    /// Writes `manifest.tsv`, `lexicon.txt`, `new_texts.txt`,
    /// `segments.tsv` and `wav/<id>.wav` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), PipelineError> {
        std::fs::create_dir_all(dir.join("wav"))?;
        let mut manifest = String::new();
        let mut segments = String::new();
        for u in &self.utterances {
            let rel = format!("wav/{}.wav", u.id);
            write_wav(&dir.join(&rel), &AudioSignal::new(u.samples.clone(), SAMPLE_RATE)?)?;
            writeln!(manifest, "{}\t{}\t{}\t{}", u.id, u.speaker, rel, u.text()).unwrap();
            let segs: Vec<String> = u.phonemes.iter().zip(&u.durations).map(|(p, d)| format!("{p}:{d}")).collect();
            writeln!(segments, "{}\t{}", u.id, segs.join(" ")).unwrap();
        }
        std::fs::write(dir.join("manifest.tsv"), manifest)?;
        std::fs::write(dir.join("segments.tsv"), segments)?;
        std::fs::write(dir.join("new_texts.txt"), self.new_texts.join("\n") + "\n")?;
        self.lexicon.save(&dir.join("lexicon.txt"))?;
        Ok(())
    }
}

/// `(phoneme, duration in frames)` pairs of one utterance.
pub type Segmentation = Vec<(String, u32)>;

/// Reads `segments.tsv`: utterance id to `(phoneme, duration)` pairs.
pub fn read_segments(path: &Path) -> Result<Vec<(String, Segmentation)>, PipelineError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || PipelineError::Config(format!("{}:{}: malformed segment line", path.display(), i + 1));
        let (id, rest) = line.split_once('\t').ok_or_else(bad)?;
        let segs = rest
            .split_whitespace()
            .map(|s| {
                let (p, d) = s.split_once(':').ok_or_else(bad)?;
                Ok((p.to_string(), d.parse().map_err(|_| bad())?))
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        out.push((id.to_string(), segs));
    }
    Ok(out)
}
