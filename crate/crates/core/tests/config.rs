use std::path::{Path, PathBuf};

use synthasr::{ExperimentConfig, PipelineError};
use synthasr_eval::ConditionKind;
use synthasr_tts::Variant;

fn toy_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn extending(dir: &Path, body: &str) -> PathBuf {
    let base = toy_dir().join("base.toml").canonicalize().unwrap();
    write(dir, "child.toml", &format!("extends = {:?}\n{body}", base.display().to_string()))
}

#[test]
fn every_shipped_config_loads() {
    for v in Variant::ALL {
        let cfg = ExperimentConfig::load(&toy_dir().join(format!("{}.toml", v.name()))).unwrap();
        assert_eq!(cfg.variant, v);
        assert!(cfg.decoder(v).is_ok());
        assert_eq!(cfg.features.tts.n_mels, 80);
    }
}

#[test]
fn base_paths_resolve_against_the_base_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::load(&extending(dir.path(), "")).unwrap();
    assert!(cfg.paths.manifest.exists());
    assert!(cfg.paths.manifest.is_absolute());
}

#[test]
fn child_overrides_nested_keys_and_keeps_siblings() {
    let dir = tempfile::tempdir().unwrap();
    let base = ExperimentConfig::load(&toy_dir().join("base.toml")).unwrap();
    let cfg = ExperimentConfig::load(&extending(
        dir.path(),
        "seed = 99\ncondition = \"same_text_shuffled_speaker\"\n[decode]\nbeam = 3\n",
    ))
    .unwrap();
    assert_eq!(cfg.seed, 99);
    assert_eq!(cfg.condition, ConditionKind::SameTextShuffledSpeaker);
    assert_eq!(cfg.decode.beam, 3);
    assert_eq!(cfg.decode.lm_weight, base.decode.lm_weight);
    assert_eq!(cfg.asr, base.asr);
    assert_ne!(cfg.hash(), base.hash());
}

#[test]
fn relative_child_paths_resolve_against_the_child() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "texts.txt", "ami eso\n");
    let cfg = ExperimentConfig::load(&extending(dir.path(), "[paths]\nnew_texts = \"texts.txt\"\n")).unwrap();
    assert_eq!(cfg.paths.new_texts.unwrap(), dir.path().canonicalize().unwrap().join("texts.txt"));
}

fn config_error(path: &Path) -> String {
    match ExperimentConfig::load(path) {
        Err(e @ PipelineError::Config(_)) => {
            assert_eq!(e.exit_code(), 2);
            e.to_string()
        }
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn extends_cycle_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "a.toml", "extends = \"b.toml\"\n");
    let b = write(dir.path(), "b.toml", "extends = \"a.toml\"\n");
    assert!(config_error(&b).contains("cycle"));
}

#[test]
fn missing_paths_and_unknown_keys_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(config_error(&dir.path().join("absent.toml")).contains("absent.toml"));
    let p = extending(dir.path(), "[paths]\nlexicon = \"nowhere.txt\"\n");
    assert!(config_error(&p).contains("lexicon"));
    let p = extending(dir.path(), "colour = 1\n");
    assert!(config_error(&p).contains("colour"));
}

#[test]
fn invalid_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    for body in [
        "workers = 0\n",
        "[decode]\nbeam = 0\n",
        "[bootstrap]\nlevel = 1.0\n",
        "[mos]\ncommand = [\"score\"]\nurl = \"http://localhost\"\ntimeout_secs = 1.0\nretries = 0\n",
        "[decoders.flow]\nvariant = \"transformer\"\nlayers = 1\nheads = 1\nffn_dim = 4\nffn_kernel = 1\ndropout = 0.0\n",
        "[sampling]\ndiffusion_steps = 0\n",
    ] {
        config_error(&extending(dir.path(), body));
    }
}
