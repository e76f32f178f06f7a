use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::Rng;
use synthasr_eval::{
    build_condition, cv_split, normalize_text, ConditionKind, CorpusManifest, EvalError, SynthesisCondition, Utterance,
};
use synthasr_nn::rng;

fn utt(id: &str, speaker: &str, text: &str) -> Utterance {
    Utterance {
        id: id.into(),
        speaker: speaker.into(),
        audio: None,
        text: text.into(),
    }
}

fn manifest(speakers: usize, per_speaker: usize) -> CorpusManifest {
    let mut utts = Vec::new();
    for s in 0..speakers {
        for u in 0..per_speaker {
            utts.push(utt(&format!("s{s}-u{u}"), &format!("s{s}"), &format!("text {s} {u}")));
        }
    }
    CorpusManifest::from_utterances(utts).unwrap()
}

fn random_manifest(seed: u64) -> CorpusManifest {
    let mut r = rng(seed);
    let n = r.random_range(1..40);
    let speakers = r.random_range(1..6);
    let utts = (0..n)
        .map(|i| {
            let s = r.random_range(0..speakers);
            utt(&format!("u{i}"), &format!("spk{s}"), &format!("w{} w{}", r.random_range(0..9), i))
        })
        .collect();
    CorpusManifest::from_utterances(utts).unwrap()
}

fn pairs(jobs: &[synthasr_eval::SynthesisJob]) -> Vec<(String, String)> {
    jobs.iter().map(|j| (j.text.clone(), j.speaker.clone())).collect()
}

fn multiset(items: impl IntoIterator<Item = String>) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for i in items {
        *m.entry(i).or_default() += 1;
    }
    m
}

fn check_conditions(m: &CorpusManifest, seed: u64) {
    let train_pairs: Vec<(String, String)> = m.utterances().iter().map(|u| (u.text.clone(), u.speaker.clone())).collect();
    let cond = |kind, new_texts| SynthesisCondition {
        kind,
        seed,
        new_texts,
    };
    let a = build_condition(m, &cond(ConditionKind::SameTextSameSpeaker, None)).unwrap();
    assert_eq!(pairs(&a), train_pairs);
    assert!(a.iter().zip(m.utterances()).all(|(j, u)| j.utt_id == u.id));

    let b = build_condition(m, &cond(ConditionKind::SameTextShuffledSpeaker, None)).unwrap();
    assert_eq!(
        b.iter().map(|j| &j.text).collect::<Vec<_>>(),
        m.utterances().iter().map(|u| &u.text).collect::<Vec<_>>()
    );
    assert_eq!(
        multiset(b.iter().map(|j| j.speaker.clone())),
        multiset(m.utterances().iter().map(|u| u.speaker.clone()))
    );
    let distinct = multiset(m.utterances().iter().map(|u| u.speaker.clone())).len();
    if distinct > 1 {
        assert!(b.iter().zip(m.utterances()).any(|(j, u)| j.speaker != u.speaker));
    }
    assert_eq!(b, build_condition(m, &cond(ConditionKind::SameTextShuffledSpeaker, None)).unwrap());

    let texts: Vec<String> = (0..m.len()).map(|i| format!("new text {i}")).collect();
    let c = build_condition(m, &cond(ConditionKind::NewText, Some(texts.clone()))).unwrap();
    assert_eq!(c.len(), m.len());
    assert_eq!(c.iter().map(|j| j.text.clone()).collect::<Vec<_>>(), texts);
    assert_eq!(
        multiset(c.iter().map(|j| j.speaker.clone())),
        multiset(m.utterances().iter().map(|u| u.speaker.clone()))
    );
}

#[test]
fn conditions_hold_on_random_manifests() {
    for seed in 0..1000 {
        check_conditions(&random_manifest(seed), seed);
    }
}

#[test]
fn condition_c_needs_matching_text_count() {
    let m = manifest(2, 3);
    let cond = SynthesisCondition {
        kind: ConditionKind::NewText,
        seed: 0,
        new_texts: Some(vec!["x".into(); 5]),
    };
    assert!(matches!(
        build_condition(&m, &cond),
        Err(EvalError::TextCount { expected: 6, got: 5 })
    ));
    let cond = SynthesisCondition { new_texts: None, ..cond };
    assert!(build_condition(&m, &cond).is_err());
}

#[test]
fn condition_letters_parse() {
    for k in ConditionKind::ALL {
        assert_eq!(k.letter().parse::<ConditionKind>().unwrap(), k);
    }
    assert!("d".parse::<ConditionKind>().is_err());
}

#[test]
fn cv_split_holds_out_k_per_speaker() {
    let m = manifest(251, 6);
    let split = cv_split(&m, 4, 7).unwrap();
    assert_eq!(split.cv.len(), 1004);
    assert_eq!(split.train.len(), 251 * 2);
    let cv_ids = split.cv.ids();
    assert!(split.train.ids().is_disjoint(&cv_ids));
    let per = multiset(split.cv.utterances().iter().map(|u| u.speaker.clone()));
    assert!(per.values().all(|&c| c == 4));
    assert_eq!(split, cv_split(&m, 4, 7).unwrap());
    assert_ne!(split, cv_split(&m, 4, 8).unwrap());
}

#[test]
fn cv_split_k_zero_is_identity() {
    let m = manifest(3, 2);
    let split = cv_split(&m, 0, 1).unwrap();
    assert!(split.cv.is_empty());
    assert_eq!(split.train, m);
}

#[test]
fn cv_split_names_short_speaker() {
    let mut utts = manifest(2, 5).utterances().to_vec();
    utts.push(utt("lonely-1", "lonely", "x"));
    utts.push(utt("lonely-2", "lonely", "y"));
    let m = CorpusManifest::from_utterances(utts).unwrap();
    match cv_split(&m, 2, 0) {
        Err(EvalError::TooFewUtterances { speaker, count: 2, k: 2 }) => assert_eq!(speaker, "lonely"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn manifest_text_round_trip() {
    let text = "u1\tspk1\taudio/u1.wav\tHello, World!\nu2\tspk2\t-\tIt's  a  TEST.\n";
    let m = CorpusManifest::parse(text).unwrap();
    assert_eq!(m.utterances()[0].text, "hello world");
    assert_eq!(m.utterances()[0].audio.as_deref(), Some(std::path::Path::new("audio/u1.wav")));
    assert_eq!(m.utterances()[1].audio, None);
    assert_eq!(m.utterances()[1].words(), ["it's", "a", "test"]);
    assert_eq!(m.speakers(), ["spk1", "spk2"]);
    assert_eq!(CorpusManifest::parse(&m.to_text()).unwrap(), m);
}

#[test]
fn manifest_rejects_bad_input() {
    assert!(matches!(
        CorpusManifest::parse("u1\tspk\tpath\n"),
        Err(EvalError::Manifest { line: 1, .. })
    ));
    assert!(matches!(
        CorpusManifest::parse("u1\ts\t-\ta\nu1\ts\t-\tb\n"),
        Err(EvalError::DuplicateId(_))
    ));
    let err = CorpusManifest::new(vec![utt("u", "ghost", "x")], vec!["real".into()]).unwrap_err();
    assert!(matches!(err, EvalError::UnknownSpeaker { .. }));
}

#[test]
fn text_normalization() {
    assert_eq!(normalize_text("  The QUICK, brown--fox's \"tail\".  "), "the quick brown fox's tail");
    assert_eq!(normalize_text("'quoted'"), "quoted");
    assert_eq!(normalize_text("?!"), "");
}

proptest! {
    #[test]
    fn split_partitions_manifest(seed in 0u64..500, k in 0usize..3) {
        let m = random_manifest(seed);
        match cv_split(&m, k, seed) {
            Ok(s) => {
                prop_assert_eq!(s.train.len() + s.cv.len(), m.len());
                prop_assert!(s.train.ids().is_disjoint(&s.cv.ids()));
                let per = multiset(s.cv.utterances().iter().map(|u| u.speaker.clone()));
                prop_assert!(per.values().all(|&c| c == k));
            }
            Err(EvalError::TooFewUtterances { count, .. }) => prop_assert!(count <= k),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }
}
