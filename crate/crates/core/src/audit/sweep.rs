//! Capacity ablation: one full audit per hidden-layer width.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::AuditConfig;
use super::pipeline::{run_audit, AuditResult};
use super::report::{emit_report, ReportFormat};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub width: usize,
    /// Cross-seed medians per group.
    pub accuracy: [Option<f64>; 2],
    pub u_e: [Option<f64>; 2],
    pub u_a: [Option<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Whether `U_a(G0) - U_a(G1)` keeps one strict sign at every width.
    pub aleatoric_order_preserved: bool,
    pub epistemic_order_preserved: bool,
    #[serde(skip)]
    pub audits: Vec<AuditResult>,
}

fn order_preserved(pairs: impl Iterator<Item = [Option<f64>; 2]>) -> bool {
    let signs: Vec<Option<std::cmp::Ordering>> = pairs
        .map(|[a, b]| match (a, b) {
            (Some(a), Some(b)) if a != b => a.partial_cmp(&b),
            _ => None,
        })
        .collect();
    !signs.is_empty() && signs.iter().all(|s| s.is_some() && *s == signs[0])
}

pub fn run_sweep(cfg: &AuditConfig, widths: &[usize]) -> Result<SweepResult> {
    if widths.is_empty() {
        return Err(Error::Config("sweep needs at least one width".into()));
    }
    if let Some(w) = widths.iter().find(|w| **w == 0) {
        return Err(Error::Config(format!("sweep widths must be positive, got {w}")));
    }
    let mut audits = Vec::with_capacity(widths.len());
    for &w in widths {
        let mut c = cfg.clone();
        c.train.hidden_width = Some(w);
        audits.push(run_audit(&c)?);
    }
    let rows: Vec<SweepRow> = widths
        .iter()
        .zip(&audits)
        .map(|(&width, a)| {
            let g = &a.summary.groups;
            SweepRow {
                width,
                accuracy: [g[0].acc.median, g[1].acc.median],
                u_e: [g[0].u_e.median, g[1].u_e.median],
                u_a: [g[0].u_a.median, g[1].u_a.median],
            }
        })
        .collect();
    Ok(SweepResult {
        aleatoric_order_preserved: order_preserved(rows.iter().map(|r| r.u_a)),
        epistemic_order_preserved: order_preserved(rows.iter().map(|r| r.u_e)),
        rows,
        audits,
    })
}

pub fn render_sweep_markdown(s: &SweepResult) -> String {
    let f = |v: Option<f64>| v.map_or("undefined".into(), |x| format!("{x:.4}"));
    let mut md = String::from("# Capacity sweep\n\n| Width | Acc G0 | Acc G1 | U_e G0 | U_e G1 | U_a G0 | U_a G1 |\n|---|---|---|---|---|---|---|\n");
    for r in &s.rows {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} | {} |",
            r.width,
            f(r.accuracy[0]),
            f(r.accuracy[1]),
            f(r.u_e[0]),
            f(r.u_e[1]),
            f(r.u_a[0]),
            f(r.u_a[1])
        );
    }
    let yn = |b: bool| if b { "yes" } else { "no" };
    let _ = writeln!(
        md,
        "\nGroup ordering preserved across widths: U_a {}, U_e {}.",
        yn(s.aleatoric_order_preserved),
        yn(s.epistemic_order_preserved)
    );
    md
}

pub fn render_sweep_csv(s: &SweepResult) -> String {
    let n = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("width,acc_g0,acc_g1,u_e_g0,u_e_g1,u_a_g0,u_a_g1\n");
    for r in &s.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.width,
            n(r.accuracy[0]),
            n(r.accuracy[1]),
            n(r.u_e[0]),
            n(r.u_e[1]),
            n(r.u_a[0]),
            n(r.u_a[1])
        );
    }
    out
}

/// `sweep.{json,csv,md}` in `dir`, plus each width's full audit report in
/// `dir/width-<w>/`.
pub fn emit_sweep(s: &mut SweepResult, formats: &[ReportFormat], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (row, audit) in s.rows.iter().zip(&mut s.audits) {
        written.extend(emit_report(audit, formats, &dir.join(format!("width-{}", row.width)))?);
    }
    for &f in formats {
        let (name, text) = match f {
            ReportFormat::Json => ("sweep.json", serde_json::to_string_pretty(&*s)? + "\n"),
            ReportFormat::Csv => ("sweep.csv", render_sweep_csv(s)),
            ReportFormat::Markdown => ("sweep.md", render_sweep_markdown(s)),
        };
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
