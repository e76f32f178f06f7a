use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::{ConditionKind, EvalError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub system: String,
    /// Synthesis condition the ASR training data came from; `None` for
    /// systems trained on real data.
    pub condition: Option<ConditionKind>,
    /// Word error rate (fraction) per test set.
    pub wer: BTreeMap<String, f64>,
    pub swer: Option<f64>,
    pub mos_mean: Option<f64>,
    pub mos_ci: Option<(f64, f64)>,
}

impl MetricRow {
    pub fn new(system: impl Into<String>, condition: Option<ConditionKind>) -> Self {
        Self {
            system: system.into(),
            condition,
            wer: BTreeMap::new(),
            swer: None,
            mos_mean: None,
            mos_ci: None,
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::Report(format!("{}: {m}", self.system)));
        if let Some((set, w)) = self.wer.iter().find(|(_, w)| w.is_nan() || **w < 0.0) {
            return bad(format!("wer {w} on {set}"));
        }
        if let Some(s) = self.swer.filter(|s| s.is_nan() || *s < 0.0) {
            return bad(format!("swer {s}"));
        }
        match (self.mos_mean, self.mos_ci) {
            (Some(m), Some((lo, hi))) if !(lo <= m && m <= hi) => bad(format!("mos {m} outside ({lo}, {hi})")),
            (None, Some(_)) => bad("interval without mean".into()),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Report {
    /// Per-system summary: sWER, MOS with interval, WER per test set.
    pub summary: String,
    /// WER grid with one a/b/c column group per test set.
    pub conditions: String,
    /// Machine-readable form of every row.
    pub csv: String,
}

fn pct(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{:.1}", 100.0 * v))
}

fn mos(row: &MetricRow) -> String {
    match (row.mos_mean, row.mos_ci) {
        (Some(m), Some((lo, hi))) => format!("{m:.2} ± {:.2}", (m - lo).max(hi - m)),
        (Some(m), None) => format!("{m:.2}"),
        _ => "-".into(),
    }
}

fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| {
                let pad = w - c.chars().count();
                if i == 0 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect();
        format!("{}\n", parts.join(" | ").trim_end())
    };
    let mut out = line(header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&format!("{}\n", rule.join("-+-")));
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

fn test_sets<'a>(rows: impl IntoIterator<Item = &'a MetricRow>) -> Vec<String> {
    rows.into_iter()
        .flat_map(|r| r.wer.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Summary table (optional reference row first, then each system's
/// condition-a or real-data row) and the a/b/c condition grid. Rates are
/// printed in percent.
pub fn render_report(rows: &[MetricRow], reference: Option<&MetricRow>) -> Report {
    let mut systems: Vec<&str> = Vec::new();
    for r in rows {
        if !systems.contains(&r.system.as_str()) {
            systems.push(&r.system);
        }
    }
    let primary: Vec<&MetricRow> = systems
        .iter()
        .filter_map(|s| {
            let mine = rows.iter().filter(|r| r.system == *s);
            let mut best = None;
            for r in mine {
                match r.condition {
                    None | Some(ConditionKind::SameTextSameSpeaker) => {
                        best = Some(r);
                        break;
                    }
                    _ if best.is_none() => best = Some(r),
                    _ => {}
                }
            }
            best
        })
        .collect();
    let shown: Vec<&MetricRow> = reference.into_iter().chain(primary.iter().copied()).collect();
    let sets = test_sets(shown.iter().copied());
    let mut header: Vec<String> = vec!["System".into(), "sWER [%]".into(), "MOS".into()];
    header.extend(sets.iter().map(|s| format!("WER {s} [%]")));
    let body: Vec<Vec<String>> = shown
        .iter()
        .map(|r| {
            let mut cells = vec![r.system.clone(), pct(r.swer), mos(r)];
            cells.extend(sets.iter().map(|s| pct(r.wer.get(s).copied())));
            cells
        })
        .collect();
    let summary = table(&header, &body);

    let sets = test_sets(rows);
    let mut header: Vec<String> = vec!["System".into()];
    for s in &sets {
        for k in ConditionKind::ALL {
            header.push(format!("{s} {k}"));
        }
    }
    let body: Vec<Vec<String>> = systems
        .iter()
        .map(|sys| {
            let mut cells = vec![sys.to_string()];
            for s in &sets {
                for k in ConditionKind::ALL {
                    let v = rows
                        .iter()
                        .find(|r| r.system == *sys && r.condition == Some(k))
                        .and_then(|r| r.wer.get(s).copied());
                    cells.push(pct(v));
                }
            }
            cells
        })
        .collect();
    let conditions = table(&header, &body);
    Report {
        summary,
        conditions,
        csv: to_csv(rows, reference),
    }
}

const COLUMNS: [&str; 10] = [
    "row", "role", "system", "condition", "swer", "mos_mean", "mos_lo", "mos_hi", "test_set", "wer",
];

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

/// One record per (row, test set); a row without test sets gets a single
/// record with empty test-set fields. Numbers use shortest round-trip
/// formatting.
pub fn to_csv(rows: &[MetricRow], reference: Option<&MetricRow>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COLUMNS).expect("in-memory write");
    let all = reference.map(|r| ("reference", r)).into_iter().chain(rows.iter().map(|r| ("system", r)));
    for (i, (role, r)) in all.enumerate() {
        let cond = r.condition.map_or(String::new(), |c| c.letter().to_string());
        let base = [
            i.to_string(),
            role.to_string(),
            r.system.clone(),
            cond,
            opt(r.swer),
            opt(r.mos_mean),
            opt(r.mos_ci.map(|c| c.0)),
            opt(r.mos_ci.map(|c| c.1)),
        ];
        let sets: Vec<(String, String)> = if r.wer.is_empty() {
            vec![(String::new(), String::new())]
        } else {
            r.wer.iter().map(|(k, v)| (k.clone(), v.to_string())).collect()
        };
        for (set, v) in sets {
            let rec: Vec<&str> = base.iter().map(String::as_str).chain([set.as_str(), v.as_str()]).collect();
            w.write_record(rec).expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Inverse of [`to_csv`]: the system rows and the reference row.
pub fn parse_csv(text: &str) -> Result<(Vec<MetricRow>, Option<MetricRow>), EvalError> {
    let err = |m: String| EvalError::Report(m);
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| err(e.to_string()))?.clone();
    if header.iter().ne(COLUMNS) {
        return Err(err(format!("unexpected columns {header:?}")));
    }
    let num = |s: &str| -> Result<Option<f64>, EvalError> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| err(format!("bad number `{s}`")))
        }
    };
    let mut out: Vec<(String, String, MetricRow)> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        if out.last().is_none_or(|(idx, _, _)| idx != f(0)) {
            let condition = match f(3) {
                "" => None,
                c => Some(c.parse()?),
            };
            let mos_ci = match (num(f(6))?, num(f(7))?) {
                (Some(lo), Some(hi)) => Some((lo, hi)),
                (None, None) => None,
                _ => return Err(err("half-open MOS interval".into())),
            };
            let mut row = MetricRow::new(f(2), condition);
            row.swer = num(f(4))?;
            row.mos_mean = num(f(5))?;
            row.mos_ci = mos_ci;
            out.push((f(0).to_string(), f(1).to_string(), row));
        }
        if !f(8).is_empty() {
            let v = num(f(9))?.ok_or_else(|| err(format!("missing wer for {}", f(8))))?;
            out.last_mut().unwrap().2.wer.insert(f(8).to_string(), v);
        }
    }
    let mut rows = Vec::new();
    let mut reference = None;
    for (_, role, row) in out {
        match role.as_str() {
            "reference" => reference = Some(row),
            "system" => rows.push(row),
            other => return Err(err(format!("unknown role `{other}`"))),
        }
    }
    Ok((rows, reference))
}
