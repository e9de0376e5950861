//! Comparison tables over run reports.

use std::collections::BTreeMap;

use ipt_core::losses::SimilarityLoss;
use ipt_core::metrics::RunReport;
use ipt_core::trainer::{CategoryInit, ExampleInit, TrainConfig};
use serde::Serialize;

/// Short method name derived from the settings that distinguish variants.
pub fn method_label(c: &TrainConfig) -> String {
    if c.n_e == 0 {
        return "baseline (n_e=0)".into();
    }
    let mut s = format!("ipt (n_e={}", c.n_e);
    if c.similarity_loss == SimilarityLoss::Asl {
        s.push_str(", asl");
    }
    if !c.enable_cep {
        s.push_str(", no cep");
    }
    if c.freeze_old_categories {
        s.push_str(", frozen categories");
    }
    if c.example_init == ExampleInit::Random {
        s.push_str(", random init");
    }
    if c.category_init == CategoryInit::Provided {
        s.push_str(", provided categories");
    }
    s.push(')');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub source: String,
    pub method: String,
    pub seed: u64,
    pub aia: f64,
    pub final_accuracy: f64,
    pub fr: Option<f64>,
    pub cdr: f64,
}

impl RunRow {
    pub fn new(source: impl Into<String>, r: &RunReport) -> Self {
        Self {
            source: source.into(),
            method: method_label(&r.config),
            seed: r.seed,
            aia: r.aia,
            final_accuracy: r.final_accuracy,
            fr: r.fr,
            cdr: r.cdr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

fn stat(xs: &[f64]) -> Option<Stat> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some(Stat { mean, std: var.sqrt() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: String,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub aia: Stat,
    pub final_accuracy: Stat,
    /// Absent when no run had more than one phase.
    pub fr: Option<Stat>,
    pub cdr: Stat,
}

/// Groups rows by method, keeping first-appearance order.
pub fn summarize(rows: &[RunRow]) -> Vec<MethodSummary> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&RunRow>> = BTreeMap::new();
    for r in rows {
        if !groups.contains_key(&r.method) {
            order.push(r.method.clone());
        }
        groups.entry(r.method.clone()).or_default().push(r);
    }
    order
        .into_iter()
        .map(|m| {
            let g = &groups[&m];
            let col = |f: fn(&RunRow) -> f64| -> Vec<f64> { g.iter().map(|r| f(r)).collect() };
            let fr: Vec<f64> = g.iter().filter_map(|r| r.fr).collect();
            MethodSummary {
                runs: g.len(),
                seeds: g.iter().map(|r| r.seed).collect(),
                aia: stat(&col(|r| r.aia)).expect("group is nonempty"),
                final_accuracy: stat(&col(|r| r.final_accuracy)).expect("group is nonempty"),
                fr: stat(&fr),
                cdr: stat(&col(|r| r.cdr)).expect("group is nonempty"),
                method: m,
            }
        })
        .collect()
}

fn cell(s: Option<Stat>, scale: f64, runs: usize) -> String {
    match s {
        None => "-".into(),
        Some(s) if runs > 1 => format!("{:.2} ± {:.2}", s.mean * scale, s.std * scale),
        Some(s) => format!("{:.2}", s.mean * scale),
    }
}

/// Fixed-width table: method, AIA (%), final accuracy (%), FR (points), CDR (%).
pub fn render(summaries: &[MethodSummary]) -> String {
    let header = ["Method", "Runs", "AIA", "Final", "FR", "CDR"];
    let mut rows: Vec<[String; 6]> = vec![header.map(String::from)];
    for s in summaries {
        rows.push([
            s.method.clone(),
            s.runs.to_string(),
            cell(Some(s.aia), 100.0, s.runs),
            cell(Some(s.final_accuracy), 100.0, s.runs),
            cell(s.fr, 1.0, s.runs),
            cell(Some(s.cdr), 100.0, s.runs),
        ]);
    }
    let widths: Vec<usize> =
        (0..header.len()).map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (n, r) in rows.iter().enumerate() {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if n == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
        }
    }
    out
}
