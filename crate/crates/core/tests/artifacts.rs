use std::path::Path;

use proptest::prelude::*;
use synthasr::artifacts::{hash_bytes, hash_file, require};
use synthasr::image::{gray_level, spectrogram_pixels, write_spectrogram_png};
use synthasr::pipeline::uniform_durations;
use synthasr::toy::{phoneme_inventory, read_segments, ToyCorpus};
use synthasr::{AsrData, ExperimentConfig, Layout, PipelineError, RunManifest, SynthSet, System};
use synthasr_eval::ConditionKind;
use synthasr_nn::Tensor;
use synthasr_tts::Variant;

fn repo() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../.."))
}

#[test]
fn shipped_toy_corpus_matches_the_generator() {
    let dir = tempfile::tempdir().unwrap();
    ToyCorpus::generate(0).write(dir.path()).unwrap();
    let shipped = repo().join("data/toy");
    let mut files = 0;
    for sub in ["", "wav"] {
        for e in std::fs::read_dir(dir.path().join(sub)).unwrap() {
            let p = e.unwrap().path();
            if p.is_file() {
                let name = p.strip_prefix(dir.path()).unwrap();
                assert_eq!(
                    hash_file(&p).unwrap(),
                    hash_file(&shipped.join(name)).unwrap(),
                    "{}",
                    name.display()
                );
                files += 1;
            }
        }
    }
    assert!(files > 20);
}

#[test]
fn toy_segments_cover_the_audio() {
    let corpus = ToyCorpus::generate(0);
    let dir = tempfile::tempdir().unwrap();
    corpus.write(dir.path()).unwrap();
    let segs = read_segments(&dir.path().join("segments.tsv")).unwrap();
    let inventory = phoneme_inventory();
    assert_eq!(segs.len(), 20);
    for (id, s) in segs {
        let frames: u32 = s.iter().map(|(_, d)| d).sum();
        let wav = synthasr_dsp::read_wav(&dir.path().join("wav").join(format!("{id}.wav"))).unwrap();
        assert_eq!(wav.len(), frames as usize * synthasr::toy::FRAME_SAMPLES, "{id}");
        assert!(s.iter().all(|(p, d)| inventory.contains(&p.as_str()) && (6..=10).contains(d)));
    }
    assert_ne!(ToyCorpus::generate(1).utterances[0].samples, corpus.utterances[0].samples);
}

#[test]
fn gray_mapping_is_fixed() {
    let ln = |db: f32| db / (10.0 * std::f32::consts::LOG10_E);
    assert_eq!(gray_level(ln(20.0)), 255);
    assert_eq!(gray_level(ln(-80.0)), 0);
    assert_eq!(gray_level(ln(-30.0)), 128);
    assert_eq!(gray_level(ln(100.0)), 255);
    assert_eq!(gray_level(f32::NEG_INFINITY), 0);
}

#[test]
fn spectrogram_orientation() {
    // 3 frames, 2 mel bins: the loud bin is the top row only in frame 1
    let loud = 5.0;
    let quiet = -30.0;
    let frames = Tensor::from_rows(&[vec![quiet, quiet], vec![quiet, loud], vec![loud, quiet]]);
    let (w, h, px) = spectrogram_pixels(&frames);
    assert_eq!((w, h), (3, 2));
    let (hi, lo) = (gray_level(loud), gray_level(quiet));
    assert_eq!(px, vec![lo, hi, lo, lo, lo, hi]);

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.png");
    write_spectrogram_png(&p, &frames).unwrap();
    let decoder = png::Decoder::new(std::io::BufReader::new(std::fs::File::open(&p).unwrap()));
    let mut reader = decoder.read_info().unwrap();
    let mut buf = vec![0; reader.output_buffer_size().unwrap()];
    let info = reader.next_frame(&mut buf).unwrap();
    assert_eq!((info.width, info.height), (3, 2));
    assert_eq!(&buf[..6], &px[..]);
    assert!(write_spectrogram_png(&dir.path().join("e.png"), &Tensor::zeros(0, 2)).is_err());
}

#[test]
fn layout_names() {
    let l = Layout::new("/runs/x");
    let flow = System::trained(Variant::Flow);
    let ctl = System::control(Variant::ArLstm);
    assert_eq!(l.tts_checkpoint(ctl), Path::new("/runs/x/tts/ar_lstm-untrained/model.ckpt"));
    assert_eq!(
        l.synth_dir(flow, SynthSet::Condition(ConditionKind::NewText)),
        Path::new("/runs/x/synth/flow/c")
    );
    assert_eq!(l.synth_dir(flow, SynthSet::Heldout), Path::new("/runs/x/synth/flow/heldout"));
    assert_eq!(
        l.metrics(AsrData::Synthetic(ctl, ConditionKind::SameTextSameSpeaker)),
        Path::new("/runs/x/eval/ar_lstm-untrained-a/metrics.json")
    );
    assert_eq!(l.asr_checkpoint(AsrData::Real), Path::new("/runs/x/asr/real/model.ckpt"));
    assert_eq!(l.relative(&l.durations()), "align/durations.bin");
}

#[test]
fn require_names_the_producer() {
    let e = require(Path::new("/nonexistent/x.bin"), "align").unwrap_err();
    assert_eq!(e.exit_code(), 3);
    assert!(e.to_string().contains("`synthasr align`"));
    assert!(matches!(e, PipelineError::MissingArtifact { .. }));
}

#[test]
fn run_manifest_records_hashes() {
    let cfg = ExperimentConfig::load(&repo().join("configs/toy/base.toml")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let layout = Layout::new(dir.path());
    let f = dir.path().join("a.txt");
    std::fs::write(&f, b"abc").unwrap();
    let mut run = RunManifest::new("align", &cfg);
    run.output(&layout, &f).unwrap();
    run.seeds.insert("init".into(), 3);
    let written = run.write(dir.path()).unwrap();
    let back = RunManifest::read(&written).unwrap();
    assert_eq!(back, run);
    assert_eq!(back.config_hash, cfg.hash());
    // sha256("abc")
    assert_eq!(
        back.outputs["a.txt"],
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    );
    assert_eq!(hash_bytes(b"abc"), back.outputs["a.txt"]);
}

proptest! {
    #[test]
    fn uniform_durations_partition_the_frames(n in 1usize..30, extra in 0usize..200) {
        let frames = n + extra;
        let d = uniform_durations(n, frames);
        prop_assert_eq!(d.len(), n);
        prop_assert_eq!(d.iter().map(|&x| x as usize).sum::<usize>(), frames);
        let (lo, hi) = (*d.iter().min().unwrap(), *d.iter().max().unwrap());
        prop_assert!(lo >= 1 && hi - lo <= 1);
        prop_assert!(d.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn child_scalars_override_and_siblings_survive(seed in 0..=i64::MAX as u64, beam in 1usize..50, workers in 1usize..8) {
        let dir = tempfile::tempdir().unwrap();
        let base_path = repo().join("configs/toy/base.toml").canonicalize().unwrap();
        let base = ExperimentConfig::load(&base_path).unwrap();
        let child = dir.path().join("c.toml");
        std::fs::write(
            &child,
            format!("extends = {:?}\nseed = {seed}\nworkers = {workers}\n[decode]\nbeam = {beam}\n", base_path.display().to_string()),
        ).unwrap();
        let cfg = ExperimentConfig::load(&child).unwrap();
        prop_assert_eq!(cfg.seed, seed);
        prop_assert_eq!(cfg.workers, workers);
        prop_assert_eq!(cfg.decode.beam, beam);
        prop_assert_eq!(cfg.decode.lm_order, base.decode.lm_order);
        prop_assert_eq!(&cfg.decoders, &base.decoders);
    }
}
