use std::collections::BTreeSet;

use synthasr_asr::{transcribe, AsrError, LetterG2p, Lexicon, Vocab};

#[test]
fn parse_and_format_round_trip() {
    let text = "; comment\ncat\tk a t#\n\na\ta#\n";
    let lex = Lexicon::parse(text).unwrap();
    assert_eq!(lex.len(), 2);
    assert_eq!(lex.get("cat").unwrap(), ["k", "a", "t#"]);
    assert_eq!(Lexicon::parse(&lex.to_text()).unwrap(), lex);
    let phonemes: Vec<String> = lex.phonemes().into_iter().collect();
    assert_eq!(phonemes, ["a", "k", "t"]);
}

#[test]
fn malformed_entries_name_the_line() {
    for (text, line) in [
        ("cat k a t#\n", 1),
        ("cat\tk a t\n", 1),
        ("a\ta#\ncat\tk# a t#\n", 2),
        ("cat\t\n", 1),
        ("a\ta#\na\ta#\n", 2),
    ] {
        match Lexicon::parse(text) {
            Err(AsrError::Lexicon { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
}

#[test]
fn insert_plain_marks_final_phoneme() {
    let mut lex = Lexicon::new();
    lex.insert_plain("dog", &["d", "o", "g"]).unwrap();
    assert_eq!(lex.get("dog").unwrap(), ["d", "o", "g#"]);
    assert!(lex.insert_plain::<&str>("x", &[]).is_err());
}

#[test]
fn vocab_layout_and_markers() {
    let v = Vocab::from_phonemes(&["a", "b"]).unwrap();
    assert_eq!(v.symbols(), ["<blank>", "a", "a#", "b", "b#"]);
    assert_eq!(v.blank(), 0);
    assert!(v.is_word_end(2) && !v.is_word_end(1) && !v.is_word_end(0));
    assert_eq!(v.encode(&["b", "a#"]).unwrap(), vec![3, 2]);
    assert_eq!(v.decode(&[3, 2]), ["b", "a#"]);
    assert!(matches!(v.encode(&["c"]), Err(AsrError::UnknownPhoneme(_))));
    let json = serde_json::to_string(&v).unwrap();
    let back: Vocab = serde_json::from_str(&json).unwrap();
    assert_eq!(back, v);
    assert_eq!(back.id("b#"), Some(4));
    assert!(Vocab::from_phonemes(&["a#"]).is_err());
    assert!(Vocab::from_symbols(vec!["a".into()]).is_err());
}

#[test]
fn lexicon_checks_vocab() {
    let v = Vocab::from_phonemes(&["a", "b"]).unwrap();
    assert!(Lexicon::parse("ab\ta b#\n").unwrap().check_vocab(&v).is_ok());
    assert!(Lexicon::parse("ac\ta c#\n").unwrap().check_vocab(&v).is_err());
}

#[test]
fn transcribe_lists_every_missing_word() {
    let lex = Lexicon::parse("cat\tk a t#\n").unwrap();
    let words = ["cat", "dog", "cat", "emu", "dog"];
    match transcribe(&words, &lex, None) {
        Err(AsrError::UnknownWords(w)) => assert_eq!(w, ["dog", "emu"]),
        other => panic!("{other:?}"),
    }
    assert_eq!(transcribe(&["cat", "cat"], &lex, None).unwrap(), ["k", "a", "t#", "k", "a", "t#"]);
}

#[test]
fn letter_fallback_spells_unknown_words() {
    let lex = Lexicon::parse("cat\tk a t#\n").unwrap();
    let g2p = LetterG2p {
        phonemes: ["a", "k", "t", "o"].iter().map(|s| s.to_string()).collect::<BTreeSet<_>>(),
    };
    assert_eq!(
        transcribe(&["cat", "TAKO"], &lex, Some(&g2p)).unwrap(),
        ["k", "a", "t#", "t", "a", "k", "o#"]
    );
    match transcribe(&["dog"], &lex, Some(&g2p)) {
        Err(AsrError::UnknownWords(w)) => assert_eq!(w, ["dog"]),
        other => panic!("{other:?}"),
    }
}
