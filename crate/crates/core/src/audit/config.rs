//! Audit configuration: a TOML file of `[data]`, `[model]`, `[audit]` and
//! `[output]` sections whose keys are unique across sections, so every key
//! can also be given as a `key=value` override (the CLI flag of the same
//! name).
//!
//! Settings resolve in three layers: the recipe implied by the data source
//! (built-in scenario or bundled schema), then the file, then overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bayesnet::TrainConfig;
use crate::error::{Error, Result};
use crate::synthgen::BUILTIN_SCENARIOS;
use crate::tabular::ValueSet;

/// `(section, key, description)` for every accepted key.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("data", "scenario", "built-in synthetic scenario: sd1, sd2, sd3 or sd1-literal"),
    ("data", "components", "custom mixture, components separated by '|' (see docs/config.md)"),
    ("data", "csv", "path of a CSV file to audit"),
    ("data", "schema", "bundled column layout for the CSV: compas or adult"),
    ("data", "columns", "inline column layout, e.g. \"age:continuous,race:group,y:label=1\""),
    ("data", "group_column", "attribute column that defines the groups"),
    ("data", "group0", "values of group_column forming G0, '|'-separated (<25, >=60, !=x allowed)"),
    ("data", "group1", "values of group_column forming G1"),
    ("data", "test_fraction", "held-out fraction per (group, label) cell"),
    ("data", "standardize", "z-score continuous CSV features with train statistics"),
    ("model", "backend", "variational or ensemble"),
    ("model", "hidden_width", "width of the single hidden layer; 0 for none"),
    ("model", "epochs", "training passes over the data"),
    ("model", "batch_size", "minibatch size"),
    ("model", "learning_rate", "Adam step size"),
    ("model", "lambda", "weight of the per-draw negative log-likelihood"),
    ("model", "mc_train_samples", "weight draws per objective evaluation"),
    ("model", "rho_init", "initial rho of every weight (sigma = softplus(rho))"),
    ("model", "prior_pi", "mixture weight of the first prior component"),
    ("model", "prior_neg_log_sigma1", "-ln sigma of the first prior component"),
    ("model", "prior_neg_log_sigma2", "-ln sigma of the second prior component"),
    ("model", "mc_eval_samples", "weight draws per test sample (variational)"),
    ("model", "members", "ensemble size T (ensemble)"),
    ("audit", "seeds", "seed list: \"1..5\", \"1,2,7\" or a single seed"),
    ("audit", "k", "neighbours for individual consistency; 0 disables it"),
    ("audit", "tau", "fairness threshold on |F - 1|"),
    ("audit", "bins", "reliability bins"),
    ("output", "out_dir", "directory for reports and dumps"),
    ("output", "dumps", "write per-sample uncertainty/consistency and bin CSVs"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Variational,
    Ensemble,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Variational => "variational",
            Backend::Ensemble => "ensemble",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub scenario: Option<String>,
    pub components: Option<String>,
    pub csv: Option<PathBuf>,
    pub schema: Option<String>,
    pub columns: Option<String>,
    pub group_column: Option<String>,
    pub group0: Option<String>,
    pub group1: Option<String>,
    pub test_fraction: f64,
    pub standardize: bool,
    pub backend: Backend,
    pub train: TrainConfig,
    pub mc_eval_samples: usize,
    pub members: usize,
    pub seeds: Vec<u64>,
    pub k: usize,
    pub tau: f64,
    pub bins: usize,
    pub out_dir: PathBuf,
    pub dumps: bool,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            components: None,
            csv: None,
            schema: None,
            columns: None,
            group_column: None,
            group0: None,
            group1: None,
            test_fraction: 0.2,
            standardize: true,
            backend: Backend::Variational,
            train: TrainConfig::default(),
            mc_eval_samples: 10,
            members: 5,
            seeds: (1..=5).collect(),
            k: 10,
            tau: 0.2,
            bins: 10,
            out_dir: PathBuf::from("uqfair-out"),
            dumps: true,
        }
    }
}

/// Parses `"1..5"` (inclusive), `"1,2,7"` or `"3"`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("seeds: cannot parse {s:?}"));
    let num = |t: &str| t.trim().parse::<u64>().map_err(|_| bad());
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if b < a {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',').map(num).collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(Error::Config("seed list is empty".into()));
    }
    Ok(seeds)
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn section_of(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(_, k, _)| *k == key).map(|(s, _, _)| *s)
}

impl AuditConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let opt = |v: &str| (!v.is_empty()).then(|| v.to_string());
        match key {
            "scenario" => self.scenario = opt(v),
            "components" => self.components = opt(v),
            "csv" => self.csv = opt(v).map(PathBuf::from),
            "schema" => self.schema = opt(v),
            "columns" => self.columns = opt(v),
            "group_column" => self.group_column = opt(v),
            "group0" => self.group0 = opt(v),
            "group1" => self.group1 = opt(v),
            "test_fraction" => self.test_fraction = parse(key, v)?,
            "standardize" => self.standardize = parse(key, v)?,
            "backend" => {
                self.backend = match v {
                    "variational" => Backend::Variational,
                    "ensemble" => Backend::Ensemble,
                    _ => return Err(Error::Config(format!("backend: expected variational or ensemble, got {v:?}"))),
                }
            }
            "hidden_width" => {
                let w: usize = parse(key, v)?;
                self.train.hidden_width = (w > 0).then_some(w);
            }
            "epochs" => self.train.epochs = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "learning_rate" => self.train.learning_rate = parse(key, v)?,
            "lambda" => self.train.lambda = parse(key, v)?,
            "mc_train_samples" => self.train.mc_train_samples = parse(key, v)?,
            "rho_init" => self.train.rho_init = parse(key, v)?,
            "prior_pi" => self.train.prior.pi = parse(key, v)?,
            "prior_neg_log_sigma1" => self.train.prior.neg_log_sigma1 = parse(key, v)?,
            "prior_neg_log_sigma2" => self.train.prior.neg_log_sigma2 = parse(key, v)?,
            "mc_eval_samples" => self.mc_eval_samples = parse(key, v)?,
            "members" => self.members = parse(key, v)?,
            "seeds" => self.seeds = parse_seeds(v)?,
            "k" => self.k = parse(key, v)?,
            "tau" => self.tau = parse(key, v)?,
            "bins" => self.bins = parse(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "dumps" => self.dumps = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Recipe defaults for the data source named in `entries`, then every
    /// entry in order, then validation.
    pub fn from_entries(entries: &[(String, String)]) -> Result<Self> {
        let last = |k: &str| {
            entries
                .iter()
                .rev()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.trim().to_string())
        };
        let mut cfg = Self::default();
        if let Some(s) = last("scenario").or_else(|| last("components").map(|_| "custom".into())) {
            cfg.apply_synthetic_recipe(&s);
        } else if let Some(s) = last("schema") {
            cfg.apply_schema_recipe(&s);
        }
        for (k, v) in entries {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// No hidden layer, 5 epochs, batch 8.
    fn apply_synthetic_recipe(&mut self, _name: &str) {
        self.train.hidden_width = None;
        self.train.epochs = 5;
        self.train.batch_size = 8;
        self.train.learning_rate = 0.01;
    }

    fn apply_schema_recipe(&mut self, schema: &str) {
        match schema {
            "compas" => {
                self.train.hidden_width = Some(100);
                self.train.epochs = 10;
                self.train.batch_size = 256;
                self.train.learning_rate = 0.01;
                self.group_column = Some("race".into());
                self.group0 = Some("African-American".into());
                self.group1 = Some("Caucasian".into());
            }
            "adult" => {
                self.train.hidden_width = Some(25);
                self.train.epochs = 5;
                self.train.batch_size = 256;
                self.train.learning_rate = 0.01;
                self.group_column = Some("sex".into());
                self.group0 = Some("Female".into());
                self.group1 = Some("Male".into());
            }
            _ => {}
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sources = [
            self.scenario.is_some(),
            self.components.is_some(),
            self.csv.is_some(),
        ];
        match sources.iter().filter(|s| **s).count() {
            0 => return Err(Error::Config("no data source: set scenario, components or csv".into())),
            1 => {}
            _ => return Err(Error::Config("set exactly one of scenario, components, csv".into())),
        }
        if let Some(s) = &self.scenario {
            if !BUILTIN_SCENARIOS.contains(&s.as_str()) {
                return Err(Error::Config(format!(
                    "unknown scenario {s:?}; expected one of {BUILTIN_SCENARIOS:?}"
                )));
            }
        }
        if let Some(path) = &self.csv {
            match (&self.schema, &self.columns) {
                (Some(_), Some(_)) => return Err(Error::Config("set schema or columns, not both".into())),
                (None, None) => return Err(Error::Config("a csv source needs schema or columns".into())),
                (Some(s), None) if !["compas", "adult"].contains(&s.as_str()) => {
                    return Err(Error::Config(format!("unknown bundled schema {s:?}")))
                }
                _ => {}
            }
            if self.group_column.is_none() || self.group0.is_none() || self.group1.is_none() {
                return Err(Error::Config("a csv source needs group_column, group0 and group1".into()));
            }
            for g in [&self.group0, &self.group1].into_iter().flatten() {
                g.parse::<ValueSet>()?;
            }
            if !path.exists() {
                return Err(Error::Config(format!("csv file {} does not exist", path.display())));
            }
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction)));
        }
        if self.train.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        self.train.validate()?;
        if self.mc_eval_samples == 0 {
            return Err(Error::Config("mc_eval_samples must be positive".into()));
        }
        if self.members == 0 {
            return Err(Error::Config("members must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::Config("tau must be non-negative".into()));
        }
        if self.bins == 0 {
            return Err(Error::Config("bins must be positive".into()));
        }
        Ok(())
    }

    /// Short human-readable name of the data source.
    pub fn source_name(&self) -> String {
        if let Some(s) = &self.scenario {
            s.clone()
        } else if self.components.is_some() {
            "custom-mixture".into()
        } else {
            let file = self
                .csv
                .as_deref()
                .and_then(Path::file_name)
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_default();
            format!(
                "{file} [{}: {} vs {}]",
                self.group_column.as_deref().unwrap_or("?"),
                self.group0.as_deref().unwrap_or("?"),
                self.group1.as_deref().unwrap_or("?")
            )
        }
    }
}

/// Reads a config file into ordered `(key, value)` entries. Keys must sit in
/// their documented section; relative `csv` and `out_dir` paths resolve
/// against the file's directory.
pub fn read_config_entries(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_text(&text, base)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn parse_config_text(text: &str, base: &Path) -> Result<Vec<(String, String)>> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    let mut out = Vec::new();
    for (section, body) in &table {
        let toml::Value::Table(body) = body else {
            return Err(Error::Config(format!(
                "top-level key {section:?} must sit inside a [data], [model], [audit] or [output] section"
            )));
        };
        for (key, value) in body {
            match section_of(key) {
                Some(s) if s == section => {}
                Some(s) => {
                    return Err(Error::Config(format!("key {key:?} belongs in [{s}], not [{section}]")))
                }
                None => return Err(Error::Config(format!("unknown key {key:?} in [{section}]"))),
            }
            let mut v = value_text(key, value)?;
            if (key == "csv" || key == "out_dir") && Path::new(&v).is_relative() {
                v = base.join(&v).to_string_lossy().into_owned();
            }
            out.push((key.clone(), v));
        }
    }
    Ok(out)
}

fn value_text(key: &str, v: &toml::Value) -> Result<String> {
    Ok(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        toml::Value::Array(items) => items
            .iter()
            .map(|x| value_text(key, x))
            .collect::<Result<Vec<_>>>()?
            .join(","),
        _ => return Err(Error::Config(format!("{key}: unsupported value type"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn seeds_syntax() {
        assert_eq!(parse_seeds("1..5").unwrap(), vec![1, 2, 3, 4, 5]);
        assert_eq!(parse_seeds("1..=3").unwrap(), vec![1, 2, 3]);
        assert_eq!(parse_seeds("4, 9").unwrap(), vec![4, 9]);
        assert_eq!(parse_seeds("7").unwrap(), vec![7]);
        assert!(parse_seeds("5..1").is_err());
        assert!(parse_seeds("").is_err());
    }

    #[test]
    fn scenario_recipe_then_overrides() {
        let cfg = AuditConfig::from_entries(&entries(&[("scenario", "sd1"), ("epochs", "7")])).unwrap();
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.train.batch_size, 8);
        assert_eq!(cfg.train.hidden_width, None);
        assert_eq!(cfg.train.lambda, 2000.0);
        assert_eq!(cfg.seeds.len(), 5);
    }

    #[test]
    fn rejects_bad_settings() {
        assert!(AuditConfig::from_entries(&[]).is_err());
        assert!(AuditConfig::from_entries(&entries(&[("scenario", "sd9")])).is_err());
        assert!(AuditConfig::from_entries(&entries(&[("scenario", "sd1"), ("nope", "1")])).is_err());
        assert!(AuditConfig::from_entries(&entries(&[("scenario", "sd1"), ("epochs", "0")])).is_err());
        assert!(AuditConfig::from_entries(&entries(&[("scenario", "sd1"), ("backend", "gp")])).is_err());
    }

    #[test]
    fn missing_csv_names_path() {
        let err = AuditConfig::from_entries(&entries(&[
            ("csv", "/nonexistent/compas.csv"),
            ("schema", "compas"),
        ]))
        .unwrap_err()
        .to_string();
        assert!(err.contains("/nonexistent/compas.csv"), "{err}");
    }

    #[test]
    fn toml_sections() {
        let text = "[data]\nscenario = \"sd2\"\n[model]\nhidden_width = 10\nlearning_rate = 0.02\n[audit]\nseeds = [1, 3]\n[output]\nout_dir = \"reports\"\n";
        let e = parse_config_text(text, Path::new("/cfg")).unwrap();
        let cfg = AuditConfig::from_entries(&e).unwrap();
        assert_eq!(cfg.train.hidden_width, Some(10));
        assert_eq!(cfg.seeds, vec![1, 3]);
        assert_eq!(cfg.out_dir, PathBuf::from("/cfg/reports"));
        assert!(parse_config_text("[model]\nscenario = \"sd1\"\n", Path::new(".")).is_err());
        assert!(parse_config_text("scenario = \"sd1\"\n", Path::new(".")).is_err());
    }
}
