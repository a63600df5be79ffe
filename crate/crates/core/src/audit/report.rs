//! Report files: versioned JSON, long-format CSV and a markdown summary
//! laid out with measures as rows and groups as columns.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::pipeline::{AuditResult, SeedResult, Stat};
use crate::error::{Error, Result};
use crate::fairness::{write_consistency_csv, Ratio, RATIO_NAMES};
use crate::metrics::write_bins_csv;
use crate::uncertainty::write_uncertainty_csv;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Json, ReportFormat::Csv, ReportFormat::Markdown];

    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Json => "report.json",
            ReportFormat::Csv => "report.csv",
            ReportFormat::Markdown => "report.md",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes per-seed sample dumps (when enabled) and then the requested
/// report formats into `dir`. Returns the written paths.
pub fn emit_report(result: &mut AuditResult, formats: &[ReportFormat], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    if result.config.dumps {
        for s in &mut result.seeds {
            written.extend(write_dumps(s, dir)?);
        }
    }
    for &f in formats {
        let path = dir.join(f.file_name());
        let text = match f {
            ReportFormat::Json => serde_json::to_string_pretty(result)? + "\n",
            ReportFormat::Csv => render_csv(result),
            ReportFormat::Markdown => render_markdown(result),
        };
        write_text(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}

/// Dumps only exist right after a run; a result read back from JSON has no
/// per-sample table and gets none.
fn write_dumps(s: &mut SeedResult, dir: &Path) -> Result<Vec<PathBuf>> {
    if s.samples.scalars.is_empty() {
        return Ok(Vec::new());
    }
    let t = &s.samples;
    let mut names = vec![format!("uncertainty_seed{}.csv", s.seed)];
    write_uncertainty_csv(create(&dir.join(&names[0]))?, &t.groups, &t.labels, &t.preds, &t.scalars)?;
    names.push(format!("reliability_seed{}.csv", s.seed));
    write_bins_csv(create(&dir.join(&names[1]))?, &s.reliability)?;
    if !s.consistency.is_empty() {
        names.push(format!("consistency_seed{}.csv", s.seed));
        write_consistency_csv(create(&dir.join(&names[2]))?, &s.consistency, &t.groups, &t.labels)?;
    }
    let paths = names.iter().map(|n| dir.join(n)).collect();
    s.dumps = names;
    Ok(paths)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<AuditResult> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let r: AuditResult = serde_json::from_str(&text)?;
    if r.schema_version != super::pipeline::SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "{}: report schema version {} is not supported",
            path.display(),
            r.schema_version
        )));
    }
    Ok(r)
}

fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Long format `scope,seed,measure,group,value,unfair`. `scope` is `seed`,
/// `median`, `min` or `max`; `group` is 0, 1 or empty for ratios; undefined
/// values are empty.
pub fn render_csv(r: &AuditResult) -> String {
    let mut out = String::from("scope,seed,measure,group,value,unfair\n");
    let mut row = |scope: &str, seed: &str, measure: &str, group: &str, value: Option<f64>, unfair: &str| {
        let _ = writeln!(out, "{scope},{seed},{measure},{group},{},{unfair}", num(value));
    };
    for s in &r.seeds {
        let seed = s.seed.to_string();
        for a in &s.audits {
            let g = a.group.to_string();
            let p = &a.performance;
            let u = &a.uncertainty;
            for (m, v) in [
                ("M_Acc", Some(p.acc)),
                ("M_PPV", p.ppv),
                ("M_NPV", p.npv),
                ("M_FPR", p.fpr),
                ("M_FNR", p.fnr),
                ("U_e", Some(u.epistemic)),
                ("U_a", Some(u.aleatoric)),
                ("U_p", Some(u.predictive)),
            ] {
                row("seed", &seed, m, &g, v, "");
            }
        }
        for (name, ratio) in RATIO_NAMES.iter().zip(s.fairness.ratios()) {
            row("seed", &seed, name, "", ratio.value, &ratio.unfair.to_string());
        }
        row("seed", &seed, "ECE", "", Some(s.reliability.ece), "");
    }
    for g in &r.summary.groups {
        let gs = g.group.to_string();
        for (m, st) in g.measures() {
            row("median", "", m, &gs, st.median, "");
            row("min", "", m, &gs, st.min, "");
            row("max", "", m, &gs, st.max, "");
        }
    }
    for rs in &r.summary.ratios {
        row("median", "", &rs.name, "", rs.median, &rs.unfair.to_string());
        row("min", "", &rs.name, "", rs.min, "");
        row("max", "", &rs.name, "", rs.max, "");
    }
    out
}

fn fmt(v: Option<f64>) -> String {
    match v {
        None => "undefined".into(),
        Some(x) if x != 0.0 && x.abs() < 1e-3 => format!("{x:.2e}"),
        Some(x) => format!("{x:.4}"),
    }
}

fn fmt_stat(s: &Stat, show_range: bool) -> String {
    if show_range && s.min != s.max {
        format!("{} [{}, {}]", fmt(s.median), fmt(s.min), fmt(s.max))
    } else {
        fmt(s.median)
    }
}

fn flag(r: &Ratio) -> String {
    match (&r.value, &r.reason) {
        (None, Some(reason)) => format!("undefined ({reason})"),
        (v, _) if r.unfair => format!("**{}**", fmt(*v)),
        (v, _) => fmt(*v),
    }
}

pub fn render_markdown(r: &AuditResult) -> String {
    let c = &r.config;
    let multi = r.seeds.len() > 1;
    let mut md = String::new();
    let _ = writeln!(md, "# Fairness audit: {}\n", r.source);
    let seeds: Vec<String> = r.seeds.iter().map(|s| s.seed.to_string()).collect();
    let _ = writeln!(
        md,
        "Backend {}, hidden width {}, epochs {}, batch {}, lr {}, lambda {}, seeds {}, tau {}, k {}, bins {}. Schema version {}.\n",
        c.backend.name(),
        c.train.hidden_width.map_or("none".into(), |w| w.to_string()),
        c.train.epochs,
        c.train.batch_size,
        c.train.learning_rate,
        c.train.lambda,
        seeds.join(","),
        c.tau,
        c.k,
        c.bins,
        r.schema_version
    );
    if multi {
        md.push_str("Cross-seed medians, with [min, max] where seeds disagree.\n\n");
    }

    md.push_str("| Measure | G0 | G1 |\n|---|---|---|\n");
    let [g0, g1] = &r.summary.groups;
    let _ = writeln!(md, "| n (test) | {} | {} |", fmt_count(&g0.count), fmt_count(&g1.count));
    for ((name, a), (_, b)) in g0.measures().into_iter().zip(g1.measures()) {
        let _ = writeln!(md, "| {name} | {} | {} |", fmt_stat(a, multi), fmt_stat(b, multi));
    }

    md.push_str("\n| Ratio (G0/G1) | Median | Min | Max | Undefined seeds | Unfair |\n|---|---|---|---|---|---|\n");
    for rs in &r.summary.ratios {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} |",
            rs.name,
            fmt(rs.median),
            fmt(rs.min),
            fmt(rs.max),
            rs.undefined_seeds,
            if rs.unfair { "yes" } else { "no" }
        );
    }

    if multi {
        md.push_str("\n## Per seed\n\n| Seed | Acc |");
        for n in RATIO_NAMES {
            let _ = write!(md, " {n} |");
        }
        md.push_str(" ECE |\n|---|---|");
        md.push_str(&"---|".repeat(RATIO_NAMES.len() + 1));
        md.push('\n');
        for s in &r.seeds {
            let _ = write!(md, "| {} | {:.4} |", s.seed, s.accuracy);
            for ratio in s.fairness.ratios() {
                let _ = write!(md, " {} |", flag(ratio));
            }
            let _ = writeln!(md, " {:.4} |", s.reliability.ece);
        }
    }

    let _ = writeln!(md, "\n## Calibration\n\nECE ({} bins): {}", c.bins, fmt_stat(&r.summary.ece, multi));

    if !r.summary.consistency.is_empty() {
        let _ = writeln!(md, "\n## Individual consistency (k = {})\n", c.k);
        md.push_str("| Value | G0 | G1 |\n|---|---|---|\n");
        for cs in &r.summary.consistency {
            let _ = writeln!(
                md,
                "| {} | {} | {} |",
                cs.kind.as_str(),
                fmt_stat(&cs.group_means[0], multi),
                fmt_stat(&cs.group_means[1], multi)
            );
        }
    }
    md
}

fn fmt_count(s: &Stat) -> String {
    match (s.min, s.max) {
        (Some(a), Some(b)) if a != b => format!("{a}-{b}"),
        _ => s.median.map_or("?".into(), |m| m.to_string()),
    }
}
