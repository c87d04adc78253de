//! Report files: one CSV row per cell and split plus an aggregate row per
//! cell, confusion matrices as CSV blocks, and a JSON summary.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::experiment::{CellResult, EvalReport};
use crate::classifiers::ClassifierKind;
use crate::error::{Error, Result};

pub const REPORT_HEADER: [&str; 12] = [
    "tier",
    "combo",
    "context",
    "classifier",
    "repeat",
    "fold",
    "n_train",
    "n_test",
    "uar",
    "accuracy",
    "absent_classes",
    "error",
];

/// Marks aggregate rows in the `repeat` and `fold` columns.
pub const AGGREGATE: &str = "mean";

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

fn cell_fields(c: &CellResult) -> [String; 4] {
    [
        c.spec.tier.to_string(),
        c.spec.combo.to_string(),
        on_off(c.spec.context).to_string(),
        c.spec.classifier.to_string(),
    ]
}

/// Floats use the shortest round-tripping decimal form, so equal reports
/// render to identical bytes.
pub fn report_csv(report: &EvalReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_HEADER)?;
    for c in &report.cells {
        let [tier, combo, ctx, cls] = cell_fields(c);
        for s in &c.splits {
            let absent = s.absent_classes.iter().map(|a| report.dialects[*a].as_str()).collect::<Vec<_>>().join(" ");
            w.write_record([
                tier.as_str(),
                &combo,
                &ctx,
                &cls,
                &s.repeat.to_string(),
                &s.fold.to_string(),
                &s.n_train.to_string(),
                &s.n_test.to_string(),
                &s.uar.to_string(),
                &s.accuracy.to_string(),
                &absent,
                "",
            ])?;
        }
        let (uar, acc) = match c.error {
            Some(_) => (String::new(), String::new()),
            None => (c.uar.to_string(), c.accuracy.to_string()),
        };
        let n_train: usize = c.splits.iter().map(|s| s.n_train).sum();
        let n_test: usize = c.splits.iter().map(|s| s.n_test).sum();
        w.write_record([
            tier.as_str(),
            &combo,
            &ctx,
            &cls,
            AGGREGATE,
            AGGREGATE,
            &n_train.to_string(),
            &n_test.to_string(),
            &uar,
            &acc,
            "",
            c.error.as_deref().unwrap_or(""),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Summed confusion matrix of every successful cell, rows = reference.
pub fn confusion_csv(report: &EvalReport) -> String {
    let mut out = String::new();
    for c in report.cells.iter().filter(|c| c.error.is_none()) {
        let _ = writeln!(out, "# {}", c.spec);
        let _ = writeln!(out, "reference,{}", report.dialects.join(","));
        for (d, row) in report.dialects.iter().zip(&c.confusion.counts) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(out, "{d},{}", cells.join(","));
        }
        out.push('\n');
    }
    out
}

/// Aggregate score of one cell as read back from the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub tier: String,
    pub combo: String,
    pub context: String,
    pub classifier: String,
    pub uar: f64,
    pub accuracy: f64,
}

impl std::fmt::Display for CellScore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {} over {}s, context {}, UAR {:.4}, accuracy {:.4}",
            self.classifier, self.combo, self.tier, self.context, self.uar, self.accuracy
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells: usize,
    pub splits_per_cell: usize,
    pub best: Option<CellScore>,
    /// Best cell of each classifier, in classifier order.
    pub best_per_classifier: Vec<CellScore>,
    /// `(cell, error)` of every failed cell.
    pub errors: Vec<(String, String)>,
}

impl Summary {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Human-readable best lines.
    pub fn lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(b) = &self.best {
            out.push(format!("best overall {b}"));
        }
        for b in &self.best_per_classifier {
            out.push(format!("best {b}"));
        }
        if !self.errors.is_empty() {
            out.push(format!("{} of {} cells failed", self.errors.len(), self.cells));
        }
        out
    }
}

fn classifier_rank(name: &str) -> usize {
    name.parse::<ClassifierKind>()
        .ok()
        .and_then(|k| ClassifierKind::ALL.iter().position(|c| *c == k))
        .unwrap_or(ClassifierKind::ALL.len())
}

/// Highest UAR wins; ties keep the earlier cell.
fn summarize(scores: Vec<CellScore>, cells: usize, splits_per_cell: usize, errors: Vec<(String, String)>) -> Summary {
    let better = |cand: &CellScore, cur: &Option<&CellScore>| cur.is_none_or(|c| cand.uar > c.uar);
    let mut best: Option<&CellScore> = None;
    let mut per: Vec<(String, &CellScore)> = Vec::new();
    for s in &scores {
        if better(s, &best) {
            best = Some(s);
        }
        match per.iter_mut().find(|(k, _)| *k == s.classifier) {
            Some((_, cur)) => {
                if s.uar > cur.uar {
                    *cur = s;
                }
            }
            None => per.push((s.classifier.clone(), s)),
        }
    }
    per.sort_by_key(|(k, _)| classifier_rank(k));
    Summary {
        cells,
        splits_per_cell,
        best: best.cloned(),
        best_per_classifier: per.into_iter().map(|(_, s)| s.clone()).collect(),
        errors,
    }
}

pub fn summary(report: &EvalReport) -> Summary {
    let mut scores = Vec::new();
    let mut errors = Vec::new();
    for c in &report.cells {
        let [tier, combo, context, classifier] = cell_fields(c);
        match &c.error {
            Some(e) => errors.push((c.spec.to_string(), e.clone())),
            None => scores.push(CellScore {
                tier,
                combo,
                context,
                classifier,
                uar: c.uar,
                accuracy: c.accuracy,
            }),
        }
    }
    summarize(scores, report.cells.len(), report.folds * report.repeats, errors)
}

/// Rebuild the summary from a report CSV written by [`report_csv`].
pub fn summary_from_csv(text: &str) -> Result<Summary> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    if header.iter().ne(REPORT_HEADER.iter().copied()) {
        return Err(Error::InvalidParameter("not a report csv: unexpected header".into()));
    }
    let (mut scores, mut errors) = (Vec::new(), Vec::new());
    let (mut cells, mut split_rows) = (0, 0);
    for rec in r.records() {
        let rec = rec?;
        if &rec[4] != AGGREGATE {
            split_rows += 1;
            continue;
        }
        cells += 1;
        let label = format!("{} {} context={} {}", &rec[0], &rec[1], &rec[2], &rec[3]);
        if !rec[11].is_empty() {
            errors.push((label, rec[11].to_string()));
            continue;
        }
        let num = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("{label}: bad {} {:?}", REPORT_HEADER[i], &rec[i])))
        };
        scores.push(CellScore {
            tier: rec[0].to_string(),
            combo: rec[1].to_string(),
            context: rec[2].to_string(),
            classifier: rec[3].to_string(),
            uar: num(8)?,
            accuracy: num(9)?,
        });
    }
    let ok_cells = scores.len().max(1);
    Ok(summarize(scores, cells, split_rows / ok_cells, errors))
}
