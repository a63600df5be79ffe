use std::collections::HashMap;

use uqfair::audit::{
    emit_report, emit_sweep, parse_config_text, read_report, render_markdown, run_audit, run_sweep,
    AuditConfig, ReportFormat,
};
use uqfair::error::Error;

fn config(pairs: &[(&str, &str)]) -> AuditConfig {
    let entries: Vec<(String, String)> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    AuditConfig::from_entries(&entries).unwrap()
}

#[test]
fn two_runs_write_identical_reports() {
    let cfg = config(&[("scenario", "sd1"), ("seeds", "1..3")]);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    emit_report(&mut run_audit(&cfg).unwrap(), &ReportFormat::ALL, a.path()).unwrap();
    emit_report(&mut run_audit(&cfg).unwrap(), &ReportFormat::ALL, b.path()).unwrap();
    for name in ["report.json", "report.csv", "report.md", "uncertainty_seed2.csv", "consistency_seed3.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
}

#[test]
fn missing_csv_fails_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let text = format!(
        "[data]\ncsv = \"nope.csv\"\nschema = \"compas\"\n[output]\nout_dir = \"{}\"\n",
        out.display()
    );
    let entries = parse_config_text(&text, dir.path()).unwrap();
    let err = AuditConfig::from_entries(&entries).unwrap_err();
    assert!(err.to_string().contains("nope.csv"), "{err}");
    assert!(!out.exists());
}

#[test]
fn json_and_csv_agree() {
    let cfg = config(&[("scenario", "sd3"), ("seeds", "4,5")]);
    let dir = tempfile::tempdir().unwrap();
    let mut r = run_audit(&cfg).unwrap();
    emit_report(&mut r, &[ReportFormat::Json, ReportFormat::Csv], dir.path()).unwrap();
    let back = read_report(dir.path().join("report.json")).unwrap();

    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let mut table: HashMap<(String, String, String, String), String> = HashMap::new();
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        table.insert((f[0].into(), f[1].into(), f[2].into(), f[3].into()), f[4].into());
    }
    let get = |scope: &str, seed: &str, m: &str, g: &str| -> Option<f64> {
        let v = &table[&(scope.into(), seed.into(), m.into(), g.into())];
        (!v.is_empty()).then(|| v.parse().unwrap())
    };
    for s in &back.seeds {
        let seed = s.seed.to_string();
        for a in &s.audits {
            let g = a.group.to_string();
            assert_eq!(get("seed", &seed, "M_Acc", &g), Some(a.performance.acc));
            assert_eq!(get("seed", &seed, "M_FNR", &g), a.performance.fnr);
            assert_eq!(get("seed", &seed, "U_a", &g), Some(a.uncertainty.aleatoric));
        }
        assert_eq!(get("seed", &seed, "F_Alea", ""), s.fairness.alea.value);
        assert_eq!(get("seed", &seed, "F_EOdd", ""), s.fairness.eodd.value);
        assert_eq!(get("seed", &seed, "ECE", ""), Some(s.reliability.ece));
    }
    for rs in &back.summary.ratios {
        assert_eq!(get("median", "", &rs.name, ""), rs.median);
    }
}

#[test]
fn markdown_has_every_measure_row() {
    let cfg = config(&[("scenario", "sd1"), ("seeds", "1")]);
    let md = render_markdown(&run_audit(&cfg).unwrap());
    for row in ["M_Acc", "M_PPV", "M_NPV", "M_FPR", "M_FNR", "U_e", "U_a", "U_p"] {
        assert!(md.contains(&format!("| {row} |")), "missing {row}");
    }
    for row in ["F_SP", "F_EOpp", "F_EOdd", "F_EAcc", "F_Epis", "F_Alea", "F_Pred"] {
        assert!(md.contains(&format!("| {row} |")), "missing {row}");
    }
    assert!(md.contains("Individual consistency"));
}

#[test]
fn disabled_knn_omits_consistency() {
    let cfg = config(&[("scenario", "sd1"), ("seeds", "2"), ("k", "0")]);
    let dir = tempfile::tempdir().unwrap();
    let mut r = run_audit(&cfg).unwrap();
    emit_report(&mut r, &ReportFormat::ALL, dir.path()).unwrap();
    let md = std::fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(!md.contains("Individual consistency"));
    assert!(!dir.path().join("consistency_seed2.csv").exists());
    let back = read_report(dir.path().join("report.json")).unwrap();
    assert!(back.summary.consistency.is_empty());
}

#[test]
fn single_width_sweep_matches_audit() {
    let cfg = config(&[("scenario", "sd1"), ("seeds", "1,2"), ("hidden_width", "10")]);
    let audit = run_audit(&cfg).unwrap();
    let sweep = run_sweep(&cfg, &[10]).unwrap();
    assert_eq!(sweep.rows.len(), 1);
    assert_eq!(sweep.audits[0], audit);
    let g = &audit.summary.groups;
    assert_eq!(sweep.rows[0].u_a, [g[0].u_a.median, g[1].u_a.median]);
    let dir = tempfile::tempdir().unwrap();
    let mut s = sweep;
    emit_sweep(&mut s, &[ReportFormat::Csv], dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(dir.path().join("width-10/report.csv").exists());
}

#[test]
fn zero_width_is_rejected() {
    let cfg = config(&[("scenario", "sd1")]);
    assert!(matches!(run_sweep(&cfg, &[0]), Err(Error::Config(_))));
}

#[test]
fn unwritable_output_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let cfg = config(&[("scenario", "sd1"), ("seeds", "1")]);
    let mut r = run_audit(&cfg).unwrap();
    assert!(emit_report(&mut r, &ReportFormat::ALL, &blocker.join("sub")).is_err());
}

#[test]
fn ensemble_backend_runs() {
    let cfg = config(&[("scenario", "sd2"), ("seeds", "1"), ("backend", "ensemble"), ("members", "3")]);
    let r = run_audit(&cfg).unwrap();
    assert!(r.summary.groups.iter().all(|g| g.u_e.median.unwrap() > 0.0));
}

#[test]
fn median_over_seeds_is_reported_with_range() {
    let cfg = config(&[("scenario", "sd1")]);
    let r = run_audit(&cfg).unwrap();
    assert_eq!(r.seeds.len(), 5);
    let alea = r.summary.ratio("F_Alea").unwrap();
    let mut v: Vec<f64> = r.seeds.iter().map(|s| s.fairness.alea.value.unwrap()).collect();
    v.sort_by(f64::total_cmp);
    assert_eq!(alea.median, Some(v[2]));
    assert_eq!((alea.min, alea.max), (Some(v[0]), Some(v[4])));
}
