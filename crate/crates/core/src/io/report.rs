//! Plain-text evaluation report.
//!
//! ```text
//! # foldgan tstr report
//! attempted,succeeded,failed
//! 8,8,0
//!
//! [trials]
//! trial,seed,cm_00,cm_01,cm_10,cm_11,precision_0,recall_0,f1_0,precision_1,recall_1,f1_1,macro_precision,macro_recall,macro_f1
//! ...
//! [failed]
//! trial,seed,error
//! [summary]
//! metric,min,lower_hinge,median,upper_hinge,max
//! ...
//! [top5]
//! rank,trial,F1,Prec,Rec
//! ...
//! ```
//!
//! Confusion counts are `cm_<true><predicted>`. Values are written at full
//! precision; [`parse_report`] rebuilds the report from the `[trials]` and
//! `[failed]` blocks alone.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tstr::{class_metrics, macro_average, ConfusionMatrix, EvalReport, FailedTrial, TrialOutcome, TrialResult};

const TITLE: &str = "# foldgan tstr report";
const TRIAL_HEADER: &str = "trial,seed,cm_00,cm_01,cm_10,cm_11,precision_0,recall_0,f1_0,precision_1,recall_1,f1_1,macro_precision,macro_recall,macro_f1";
const FAILED_HEADER: &str = "trial,seed,error";
const SUMMARY_HEADER: &str = "metric,min,lower_hinge,median,upper_hinge,max";
const TOP_HEADER: &str = "rank,trial,F1,Prec,Rec";

fn csv_field(s: &str) -> String {
    let flat = s.replace(['\n', '\r'], " ");
    if flat.contains([',', '"']) {
        format!("\"{}\"", flat.replace('"', "\"\""))
    } else {
        flat
    }
}

pub fn format_report(report: &EvalReport) -> String {
    let mut s = String::new();
    // Writing to a String cannot fail.
    let _ = writeln!(s, "{TITLE}\nattempted,succeeded,failed");
    let _ = writeln!(s, "{},{},{}\n", report.attempted(), report.trials.len(), report.failed.len());
    let _ = writeln!(s, "[trials]\n{TRIAL_HEADER}");
    for t in &report.trials {
        let c = &t.confusion.counts;
        let _ = write!(s, "{},{},{},{},{},{}", t.trial, t.seed, c[0][0], c[0][1], c[1][0], c[1][1]);
        for m in t.per_class.iter().chain([&t.macro_avg]) {
            let _ = write!(s, ",{},{},{}", m.precision, m.recall, m.f1);
        }
        s.push('\n');
    }
    let _ = writeln!(s, "\n[failed]\n{FAILED_HEADER}");
    for f in &report.failed {
        let _ = writeln!(s, "{},{},{}", f.trial, f.seed, csv_field(&f.error));
    }
    let _ = writeln!(s, "\n[summary]\n{SUMMARY_HEADER}");
    for m in &report.boxplot {
        let b = &m.summary;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            m.metric, b.min, b.lower_hinge, b.median, b.upper_hinge, b.max
        );
    }
    let _ = writeln!(s, "\n[top{}]\n{TOP_HEADER}", report.top.len().max(1));
    for (rank, row) in report.top.iter().enumerate() {
        let _ = writeln!(s, "{},{},{},{},{}", rank + 1, row.trial, row.f1, row.precision, row.recall);
    }
    s
}

fn section<'a>(text: &'a str, name: &str) -> Result<Vec<&'a str>> {
    let mut lines = text.lines();
    lines
        .by_ref()
        .find(|l| l.trim() == name)
        .ok_or_else(|| Error::Format(format!("report has no {name} section")))?;
    Ok(lines
        .take_while(|l| !l.trim().starts_with('['))
        .filter(|l| !l.trim().is_empty())
        .collect())
}

fn records(lines: &[&str], header: &str, what: &str) -> Result<Vec<csv::StringRecord>> {
    match lines.first() {
        Some(h) if h.trim() == header => {}
        _ => return Err(Error::Format(format!("{what} header must be '{header}'"))),
    }
    let body = lines[1..].join("\n");
    csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(body.as_bytes())
        .records()
        .map(|r| r.map_err(|e| Error::Format(format!("{what}: {e}"))))
        .collect()
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, what: &str) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.trim()
        .parse()
        .map_err(|_| Error::Format(format!("{what}: bad value '{raw}' in column {i}")))
}

/// Rebuilds a report from its text form, recomputing metrics, summaries
/// and the ranking from the confusion counts.
pub fn parse_report(text: &str, k: usize) -> Result<EvalReport> {
    if !text.starts_with(TITLE) {
        return Err(Error::Format(format!("report must start with '{TITLE}'")));
    }
    let mut outcomes: Vec<TrialOutcome> = Vec::new();
    for rec in records(&section(text, "[trials]")?, TRIAL_HEADER, "trials")? {
        if rec.len() != 15 {
            return Err(Error::Format(format!("trials: row has {} columns, expected 15", rec.len())));
        }
        let mut confusion = ConfusionMatrix::default();
        for (i, slot) in confusion.counts.iter_mut().flatten().enumerate() {
            *slot = field(&rec, 2 + i, "trials")?;
        }
        let per_class = class_metrics(&confusion);
        outcomes.push(Ok(TrialResult {
            trial: field(&rec, 0, "trials")?,
            seed: field(&rec, 1, "trials")?,
            confusion,
            per_class,
            macro_avg: macro_average(&per_class),
        }));
    }
    for rec in records(&section(text, "[failed]")?, FAILED_HEADER, "failed")? {
        outcomes.push(Err(FailedTrial {
            trial: field(&rec, 0, "failed")?,
            seed: field(&rec, 1, "failed")?,
            error: rec.get(2).unwrap_or("").to_string(),
        }));
    }
    EvalReport::from_outcomes(outcomes, k)
}
