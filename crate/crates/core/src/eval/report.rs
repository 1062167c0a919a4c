use std::fmt::Write as _;
use std::path::Path;

use super::{breakdown_by_nontarget, DcfParams, LowerFraction, ScoreSet, Trial, TrialLabel};
use crate::error::{Error, Result};
use crate::io;

/// One system against one non-target type, in percent units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub nontarget: TrialLabel,
    /// EER in percent.
    pub eer_pct: f64,
    /// MinDCF scaled by 100.
    pub min_dcf_x100: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub system_id: String,
    pub rows: Vec<ReportRow>,
}

const HEADER: &str = "system\tnontarget\teer_pct\tmindcf_x100";

impl Report {
    pub fn from_scores(scores: &ScoreSet, trials: &[Trial], dcf: &DcfParams) -> Result<Self> {
        let rows = breakdown_by_nontarget(scores, trials, dcf)?
            .into_iter()
            .map(|(nontarget, m)| ReportRow {
                nontarget,
                eer_pct: 100.0 * m.eer,
                min_dcf_x100: 100.0 * m.min_dcf,
            })
            .collect();
        Ok(Self {
            system_id: scores.system_id().to_owned(),
            rows,
        })
    }

    pub fn row(&self, nontarget: TrialLabel) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.nontarget == nontarget)
    }

    /// Tab-delimited rows, without header.
    fn rows_delimited(&self, out: &mut String) {
        for r in &self.rows {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", self.system_id, r.nontarget, r.eer_pct, r.min_dcf_x100);
        }
    }

    pub fn to_delimited(&self) -> String {
        reports_to_delimited(std::slice::from_ref(self))
    }

    pub fn to_table(&self) -> String {
        reports_to_table(std::slice::from_ref(self))
    }
}

pub fn reports_to_delimited(reports: &[Report]) -> String {
    let mut s = format!("{HEADER}\n");
    for r in reports {
        r.rows_delimited(&mut s);
    }
    s
}

/// Parse delimited reports; systems keep their first-seen order.
pub fn parse_reports(text: &str) -> Result<Vec<Report>> {
    let mut out: Vec<Report> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line == HEADER {
            continue;
        }
        let bad = |msg: String| Error::Malformed { line: i + 1, msg };
        let f: Vec<&str> = line.split('\t').collect();
        let [sys, label, eer, dcf] = f.as_slice() else {
            return Err(bad(format!("expected 4 tab-separated fields, found {}", f.len())));
        };
        let num = |v: &str| v.parse::<f64>().map_err(|_| bad(format!("bad number '{v}'")));
        let row = ReportRow {
            nontarget: label.parse().map_err(|e: Error| bad(e.to_string()))?,
            eer_pct: num(eer)?,
            min_dcf_x100: num(dcf)?,
        };
        match out.iter_mut().find(|r| r.system_id == *sys) {
            Some(r) => r.rows.push(row),
            None => out.push(Report {
                system_id: sys.to_string(),
                rows: vec![row],
            }),
        }
    }
    Ok(out)
}

pub fn load_reports(path: &Path) -> Result<Vec<Report>> {
    parse_reports(&io::read_text(path)?)
}

fn cell(r: Option<&ReportRow>) -> String {
    r.map_or_else(|| "-".to_owned(), |r| format!("{:.2}/{:.3}", r.eer_pct, r.min_dcf_x100))
}

/// One line per system with a `%EER/(MinDCF x 100)` column per non-target type.
pub fn reports_to_table(reports: &[Report]) -> String {
    let w = reports.iter().map(|r| r.system_id.len()).max().unwrap_or(0).max(6);
    let mut s = format!("{:<w$}", "System");
    for l in TrialLabel::NONTARGET {
        let _ = write!(s, "  {:>18}", l.token());
    }
    let _ = writeln!(s, "\n{:<w$}  [%EER/(MinDCF x 100)]", "");
    for r in reports {
        let _ = write!(s, "{:<w$}", r.system_id);
        for l in TrialLabel::NONTARGET {
            let _ = write!(s, "  {:>18}", cell(r.row(l)));
        }
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub a: Report,
    pub b: Report,
    pub lower: Vec<LowerFraction>,
}

impl Comparison {
    /// `(nontarget, b - a in %EER, b - a in MinDCF x 100)` for types in both.
    pub fn deltas(&self) -> Vec<(TrialLabel, f64, f64)> {
        TrialLabel::NONTARGET
            .into_iter()
            .filter_map(|l| {
                let (x, y) = (self.a.row(l)?, self.b.row(l)?);
                Some((l, y.eer_pct - x.eer_pct, y.min_dcf_x100 - x.min_dcf_x100))
            })
            .collect()
    }

    pub fn to_table(&self) -> String {
        let mut s = reports_to_table(&[self.a.clone(), self.b.clone()]);
        let _ = write!(s, "{:<6}", "delta");
        for l in TrialLabel::NONTARGET {
            let d = self.deltas().into_iter().find(|d| d.0 == l);
            let c = d.map_or_else(|| "-".to_owned(), |d| format!("{:+.2}/{:+.3}", d.1, d.2));
            let _ = write!(s, "  {c:>18}");
        }
        s.push('\n');
        for f in &self.lower {
            let _ = writeln!(
                s,
                "{}: {}/{} trials lower under {} ({:.2}%)",
                f.label,
                f.lower,
                f.trials,
                self.b.system_id,
                100.0 * f.fraction()
            );
        }
        s
    }
}

/// Side by side metrics of two systems plus the strictly-lower fractions
/// of `b` relative to `a`.
pub fn compare_systems(a: &ScoreSet, b: &ScoreSet, trials: &[Trial], dcf: &DcfParams) -> Result<Comparison> {
    Ok(Comparison {
        a: Report::from_scores(a, trials, dcf)?,
        b: Report::from_scores(b, trials, dcf)?,
        lower: super::llr_difference_report(a, b, trials)?,
    })
}
