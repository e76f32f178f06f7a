use synthasr_asr::lm::{EOS, UNK};
use synthasr_asr::{AsrError, LmScorer, NgramLm};

fn corpus() -> Vec<Vec<&'static str>> {
    vec![
        vec!["the", "cat", "sat"],
        vec!["the", "dog", "sat"],
        vec!["a", "cat", "ran"],
        vec!["the", "cat"],
    ]
}

#[test]
fn conditionals_are_normalized() {
    for order in 1..=4 {
        let lm = NgramLm::train(&corpus(), order, 0.3).unwrap();
        let vocab: Vec<String> = lm.vocab().map(str::to_string).collect();
        let histories: Vec<Vec<&str>> = vec![
            vec![],
            vec!["the"],
            vec!["the", "cat"],
            vec!["zebra"],
            vec!["a", "dog", "sat", "the"],
        ];
        for h in &histories {
            let total: f64 = vocab.iter().map(|w| lm.log_prob(h, w).exp()).sum();
            assert!((total - 1.0).abs() < 1e-12, "order {order} history {h:?}: {total}");
            for w in &vocab {
                assert!(lm.log_prob(h, w) <= 0.0);
            }
        }
    }
}

#[test]
fn counts_drive_probabilities() {
    let lm = NgramLm::train(&corpus(), 2, 0.01).unwrap();
    assert!(lm.log_prob(&["the"], "cat") > lm.log_prob(&["the"], "dog"));
    assert!(lm.log_prob(&["the"], "dog") > lm.log_prob(&["the"], "ran"));
    // "the" is followed by cat twice and dog once; 8 predictable tokens.
    let p = lm.log_prob(&["the"], "cat").exp();
    assert!((p - 2.01 / (3.0 + 8.0 * 0.01)).abs() < 1e-12, "{p}");
    assert!(lm.log_prob(&["ran"], EOS) > lm.log_prob(&["ran"], "cat"));
}

#[test]
fn unknown_words_map_to_unk() {
    let lm = NgramLm::train(&corpus(), 2, 0.5).unwrap();
    assert_eq!(lm.log_prob(&["the"], "zebra"), lm.log_prob(&["the"], UNK));
    assert_eq!(lm.log_prob(&["zebra"], "cat"), lm.log_prob(&[UNK], "cat"));
}

#[test]
fn sentence_score_sums_conditionals() {
    let lm = NgramLm::train(&corpus(), 3, 0.5).unwrap();
    let s = lm.score_sentence(&["the", "cat"]);
    let expect = lm.log_prob(&[], "the") + lm.log_prob(&["the"], "cat") + lm.log_prob(&["the", "cat"], EOS);
    assert!((s - expect).abs() < 1e-12);
}

#[test]
fn rejects_bad_settings() {
    assert!(matches!(NgramLm::train(&corpus(), 0, 1.0), Err(AsrError::Lm(_))));
    assert!(matches!(NgramLm::train(&corpus(), 2, 0.0), Err(AsrError::Lm(_))));
    assert!(matches!(NgramLm::train(&[vec!["</s>"]], 2, 1.0), Err(AsrError::Lm(_))));
}

#[test]
fn save_load_round_trip() {
    let lm = NgramLm::train(&corpus(), 3, 0.5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lm.json");
    lm.save(&path).unwrap();
    assert_eq!(NgramLm::load(&path).unwrap(), lm);
    let bytes = std::fs::read(&path).unwrap();
    lm.save(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
}
