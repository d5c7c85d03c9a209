use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde_json::{json, Value};

use super::crossval::{CrossvalReport, MetricKind};
use super::{PipelineError, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Tsv,
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv" => Ok(ReportFormat::Tsv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(PipelineError::Config(format!("unknown report format {s:?}"))),
        }
    }
}

impl ReportFormat {
    pub fn render(self, report: &CrossvalReport) -> String {
        match self {
            ReportFormat::Tsv => render_tsv(report),
            ReportFormat::Json => render_json(report),
            ReportFormat::Markdown => render_markdown(report),
        }
    }
}

/// Per-cell rows followed by mean rows (lecture and prompt `ALL`).
pub fn render_tsv(report: &CrossvalReport) -> String {
    let mut out = String::from("course\tlecture\tprompt\tsystem\tmetric\tP\tR\tF\n");
    for cell in report.folds.iter().flat_map(|f| &f.cells) {
        for (metric, s) in &cell.scores {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{:.3}\t{:.3}\t{:.3}",
                report.course_id,
                cell.lecture_id,
                cell.prompt,
                cell.system,
                metric.name(),
                s.p,
                s.r,
                s.f
            );
        }
    }
    for m in &report.means {
        let _ = writeln!(
            out,
            "{}\tALL\tALL\t{}\t{}\t{:.3}\t{:.3}\t{:.3}",
            report.course_id,
            m.system,
            m.metric.name(),
            m.score.p,
            m.score.r,
            m.score.f
        );
    }
    out
}

pub fn render_json(report: &CrossvalReport) -> String {
    let folds: Vec<Value> = report
        .folds
        .iter()
        .map(|f| {
            let cells: Vec<Value> = f
                .cells
                .iter()
                .map(|c| {
                    let scores: BTreeMap<&str, _> = c.scores.iter().map(|(m, s)| (m.name(), s)).collect();
                    json!({
                        "prompt": c.prompt,
                        "system": c.system,
                        "summary": c.summary.to_json(),
                        "scores": scores,
                        "ambiguous_colors": c.ambiguous_colors,
                    })
                })
                .collect();
            json!({
                "lecture_id": f.lecture_id,
                "training_lectures": f.training_lectures,
                "cells": cells,
                "skipped": f.skipped,
            })
        })
        .collect();
    let doc = json!({
        "course_id": report.course_id,
        "folds": folds,
        "means": report.means,
        "ttests": report.ttests,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
    s.push('\n');
    s
}

/// One mean table per metric. An asterisk after F marks a system whose
/// per-cell F differs from the baseline with p < 0.05.
pub fn render_markdown(report: &CrossvalReport) -> String {
    let mut out = format!("# Cross-validation: {}\n", report.course_id);
    for metric in MetricKind::ALL {
        let rows: Vec<_> = report.means.iter().filter(|m| m.metric == metric).collect();
        if rows.is_empty() {
            continue;
        }
        let _ = write!(out, "\n## {}\n\n| system | P | R | F |\n|---|---|---|---|\n", metric.name());
        for m in rows {
            let star = report
                .ttests
                .iter()
                .any(|t| t.system == m.system && t.metric == metric && t.significant());
            let _ = writeln!(
                out,
                "| {} | {:.3} | {:.3} | {:.3}{} |",
                m.system,
                m.score.p,
                m.score.r,
                m.score.f,
                if star { "*" } else { "" }
            );
        }
    }
    if !report.ttests.is_empty() {
        out.push_str("\n## Paired t-tests on F\n\n| system | baseline | metric | n | t | p |\n|---|---|---|---|---|---|\n");
        for t in &report.ttests {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {:.3} | {:.3}{} |",
                t.system,
                t.baseline,
                t.metric.name(),
                t.n,
                t.t,
                t.p,
                if t.flag.is_some() { " (degenerate)" } else { "" }
            );
        }
    }
    let skipped: Vec<_> = report.folds.iter().flat_map(|f| &f.skipped).collect();
    if !skipped.is_empty() {
        out.push_str("\n## Skipped\n\n");
        for s in skipped {
            let _ = writeln!(out, "- {} {} {}: {}", s.lecture_id, s.prompt, s.system, s.reason);
        }
    }
    out
}

/// Read the mean tables back: (metric, system) → [P, R, F].
pub fn parse_markdown_means(text: &str) -> BTreeMap<(MetricKind, Variant), [f64; 3]> {
    let mut out = BTreeMap::new();
    let mut metric = None;
    for line in text.lines() {
        if let Some(h) = line.strip_prefix("## ") {
            metric = MetricKind::parse(h.trim());
            continue;
        }
        let Some(m) = metric else { continue };
        let cells: Vec<&str> = line.trim().trim_matches('|').split('|').map(str::trim).collect();
        if cells.len() != 4 {
            continue;
        }
        let Ok(system) = cells[0].parse::<Variant>() else { continue };
        let num = |s: &str| s.trim_end_matches('*').parse::<f64>().ok();
        if let (Some(p), Some(r), Some(f)) = (num(cells[1]), num(cells[2]), num(cells[3])) {
            out.insert((m, system), [p, r, f]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalmetrics::PrfScore;
    use crate::pipeline::crossval::{MeanRow, TTestRow};
    use crate::evalmetrics::MetricFlag;

    fn report() -> CrossvalReport {
        CrossvalReport {
            course_id: "C".into(),
            folds: Vec::new(),
            means: vec![
                MeanRow {
                    system: Variant::Cdsum,
                    metric: MetricKind::Rouge1,
                    n: 4,
                    score: PrfScore { p: 0.31249, r: 0.5, f: 0.4444 },
                },
                MeanRow {
                    system: Variant::PhrasesumNp,
                    metric: MetricKind::Rouge1,
                    n: 4,
                    score: PrfScore { p: 0.2, r: 0.25, f: 0.2222 },
                },
                MeanRow {
                    system: Variant::Cdsum,
                    metric: MetricKind::ColorMatch,
                    n: 4,
                    score: PrfScore { p: 0.7, r: 0.9, f: 0.8 },
                },
            ],
            ttests: vec![
                TTestRow {
                    system: Variant::Cdsum,
                    baseline: Variant::PhrasesumNp,
                    metric: MetricKind::Rouge1,
                    n: 4,
                    t: 5.0,
                    p: 0.01,
                    flag: None,
                },
                TTestRow {
                    system: Variant::Cdsum,
                    baseline: Variant::PhrasesumNp,
                    metric: MetricKind::ColorMatch,
                    n: 4,
                    t: 0.0,
                    p: 1.0,
                    flag: Some(MetricFlag::DegenerateVariance),
                },
            ],
        }
    }

    #[test]
    fn markdown_round_trips_tsv_means() {
        let r = report();
        let md = render_markdown(&r);
        assert!(md.contains("| cdsum | 0.312 | 0.500 | 0.444* |"));
        assert!(md.contains("| cdsum | 0.700 | 0.900 | 0.800 |"), "degenerate test gives no asterisk");
        let parsed = parse_markdown_means(&md);
        let tsv = render_tsv(&r);
        let mut n = 0;
        for line in tsv.lines().skip(1) {
            let f: Vec<&str> = line.split('\t').collect();
            let key = (MetricKind::parse(f[4]).unwrap(), f[3].parse::<Variant>().unwrap());
            let vals = [f[5], f[6], f[7]].map(|s| s.parse::<f64>().unwrap());
            assert_eq!(parsed[&key], vals);
            n += 1;
        }
        assert_eq!(n, parsed.len());
    }

    #[test]
    fn single_row_table() {
        let mut r = report();
        r.means.truncate(1);
        r.ttests.clear();
        let md = render_markdown(&r);
        assert_eq!(md.lines().filter(|l| l.starts_with("| cdsum")).count(), 1);
        assert_eq!(render_tsv(&r).lines().count(), 2);
        let v: Value = serde_json::from_str(&render_json(&r)).unwrap();
        assert_eq!(v["means"][0]["system"], "cdsum");
    }
}
