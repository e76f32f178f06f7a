use std::collections::BTreeMap;

use proptest::prelude::*;
use synthasr_eval::{parse_csv, render_report, swer, to_csv, ConditionKind, CorpusManifest, MetricRow, Recognizer, Utterance};

fn row(system: &str, cond: Option<ConditionKind>, wers: &[(&str, f64)]) -> MetricRow {
    let mut r = MetricRow::new(system, cond);
    r.wer = wers.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    r
}

fn grid() -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for (sys, base) in [("Glow-TTS", 0.1), ("AR-LSTM", 0.2)] {
        for (i, k) in ConditionKind::ALL.into_iter().enumerate() {
            let mut r = row(sys, Some(k), &[("dev-other", base + 0.01 * i as f64), ("test-clean", base / 2.0)]);
            if k == ConditionKind::SameTextSameSpeaker {
                r.swer = Some(0.05);
                r.mos_mean = Some(3.08);
                r.mos_ci = Some((3.03, 3.13));
            }
            rows.push(r);
        }
    }
    rows
}

#[test]
fn condition_grid_has_three_columns_per_test_set() {
    let rep = render_report(&grid(), None);
    let lines: Vec<&str> = rep.conditions.lines().collect();
    let header: Vec<&str> = lines[0].split('|').map(str::trim).collect();
    assert_eq!(
        header,
        ["System", "dev-other a", "dev-other b", "dev-other c", "test-clean a", "test-clean b", "test-clean c"]
    );
    assert_eq!(lines.len(), 4);
    let glow: Vec<&str> = lines[2].split('|').map(str::trim).collect();
    assert_eq!(glow, ["Glow-TTS", "10.0", "11.0", "12.0", "5.0", "5.0", "5.0"]);
}

#[test]
fn summary_shows_reference_and_mos_interval() {
    let mut reference = row("Reference", None, &[("dev-other", 0.05), ("test-clean", 0.03)]);
    reference.swer = Some(0.016);
    let rep = render_report(&grid(), Some(&reference));
    let lines: Vec<&str> = rep.summary.lines().collect();
    assert!(lines[0].starts_with("System"));
    assert!(lines[2].starts_with("Reference"));
    assert!(lines[2].contains("1.6"));
    assert!(lines[3].contains("3.08 ± 0.05"), "{}", lines[3]);
    assert_eq!(lines.len(), 5);
}

#[test]
fn single_row_without_reference() {
    let rep = render_report(&[row("only", None, &[("test", 0.25)])], None);
    let lines: Vec<&str> = rep.summary.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("only") && lines[2].ends_with("25.0"));
    assert!(!rep.summary.contains("Reference"));
}

#[test]
fn csv_round_trip_with_reference() {
    let reference = row("Reference", None, &[("dev", 0.05)]);
    let rows = grid();
    let csv = render_report(&rows, Some(&reference)).csv;
    let (back, r) = parse_csv(&csv).unwrap();
    assert_eq!(back, rows);
    assert_eq!(r, Some(reference));
    assert!(csv.starts_with("row,role,system,condition,swer,mos_mean,mos_lo,mos_hi,test_set,wer\n"));
}

#[test]
fn validation() {
    let mut r = row("x", None, &[("t", 0.1)]);
    r.validate().unwrap();
    r.mos_mean = Some(3.0);
    r.mos_ci = Some((3.1, 3.2));
    assert!(r.validate().is_err());
    let mut r = row("x", None, &[("t", -0.1)]);
    assert!(r.validate().is_err());
    r.wer.clear();
    r.mos_ci = Some((1.0, 2.0));
    assert!(r.validate().is_err());
}

struct Echo;

impl Recognizer<String> for Echo {
    fn recognize(&self, input: &String) -> Result<Vec<String>, String> {
        Ok(input.split_whitespace().map(str::to_string).collect())
    }
}

#[test]
fn swer_of_identical_audio_matches_real() {
    let cv = CorpusManifest::from_utterances(vec![
        Utterance {
            id: "a".into(),
            speaker: "s".into(),
            audio: None,
            text: "one two three".into(),
        },
        Utterance {
            id: "b".into(),
            speaker: "s".into(),
            audio: None,
            text: "four five".into(),
        },
    ])
    .unwrap();
    // The "audio" is a string the echo recognizer reads back.
    let real: BTreeMap<String, String> =
        [("a", "one two tree"), ("b", "four five")].iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    let synth = real.clone();
    let r = swer(&cv, &real, &Echo).unwrap();
    let s = swer(&cv, &synth, &Echo).unwrap();
    assert_eq!(r, s);
    assert!((r.rate - 0.2).abs() < 1e-15);
    let partial: BTreeMap<String, String> = [("a".to_string(), "one two three".to_string())].into();
    let p = swer(&cv, &partial, &Echo).unwrap();
    assert_eq!(p.missing, ["b"]);
    assert!((p.rate - 0.4).abs() < 1e-15);
}

fn arb_row() -> impl Strategy<Value = MetricRow> {
    (
        "[a-zA-Z ,\"'-]{1,12}",
        prop::option::of(0usize..3),
        prop::collection::btree_map("[a-z-]{1,8}", 0.0f64..2.0, 0..4),
        prop::option::of(0.0f64..1.0),
        prop::option::of((1.0f64..5.0, 0.0f64..0.5)),
    )
        .prop_map(|(system, cond, wer, swer, mos)| MetricRow {
            system,
            condition: cond.map(|i| ConditionKind::ALL[i]),
            wer,
            swer,
            mos_mean: mos.map(|m| m.0),
            mos_ci: mos.map(|(m, w)| (m - w, m + w / 3.0)),
        })
}

proptest! {
    #[test]
    fn csv_parses_back_to_identical_rows(rows in prop::collection::vec(arb_row(), 0..6), reference in prop::option::of(arb_row())) {
        let csv = to_csv(&rows, reference.as_ref());
        let (back, r) = parse_csv(&csv).unwrap();
        prop_assert_eq!(back, rows);
        prop_assert_eq!(r, reference);
    }
}
