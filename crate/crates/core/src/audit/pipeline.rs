//! One audit run: data, training, Monte-Carlo evaluation, fairness,
//! consistency and calibration per seed, then cross-seed summaries.

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AuditConfig, Backend};
use crate::bayesnet::{self, VariationalNet};
use crate::checkpoint::Checkpoint;
use crate::ensemble::{ensemble_predict, train_ensemble, Ensemble};
use crate::error::{Error, Result};
use crate::fairness::{
    consistency_with_neighbors, group_fairness, knn_all, ConsistencyScores, FairnessReport,
    GroupAudit, Ratio, ValueKind, RATIO_NAMES,
};
use crate::metrics::{reliability, ReliabilityBins};
use crate::rng::{self, Stream};
use crate::synthgen::{builtin, generate_scenario, parse_components, ScenarioSpec};
use crate::tabular::{
    apply_standardizer, fit_standardizer, load_csv, select_binary_groups, stratified_split,
    DatasetSchema, TabularDataset, ValueSet,
};
use crate::uncertainty::{decompose, group_aggregate, mc_predict, PredictionSet, UncertaintyScalars};

pub const SCHEMA_VERSION: u32 = 1;

/// Where rows come from, resolved once per run.
pub enum DataSource {
    Scenario(String),
    Components(String),
    Table(TabularDataset),
}

impl DataSource {
    pub fn resolve(cfg: &AuditConfig) -> Result<Self> {
        if let Some(s) = &cfg.scenario {
            return Ok(Self::Scenario(s.clone()));
        }
        if let Some(c) = &cfg.components {
            return Ok(Self::Components(c.clone()));
        }
        let path = cfg
            .csv
            .as_ref()
            .ok_or_else(|| Error::Config("no data source configured".into()))?;
        let schema = match (&cfg.schema, &cfg.columns) {
            (Some(name), _) => DatasetSchema::bundled(name)
                .ok_or_else(|| Error::Config(format!("unknown bundled schema {name:?}")))?,
            (None, Some(cols)) => DatasetSchema::parse_columns("inline", cols)?,
            (None, None) => return Err(Error::Config("a csv source needs schema or columns".into())),
        };
        let table = load_csv(path, &schema)?;
        let need = |v: &Option<String>, k: &str| {
            v.clone()
                .ok_or_else(|| Error::Config(format!("a csv source needs {k}")))
        };
        let column = need(&cfg.group_column, "group_column")?;
        let g0: ValueSet = need(&cfg.group0, "group0")?.parse()?;
        let g1: ValueSet = need(&cfg.group1, "group1")?.parse()?;
        Ok(Self::Table(select_binary_groups(&table, &column, &g0, &g1)?))
    }

    /// Train/test split for `seed`; CSV features are standardized with
    /// train statistics when the config asks for it.
    pub fn split(&self, cfg: &AuditConfig, seed: u64) -> Result<(TabularDataset, TabularDataset)> {
        match self {
            Self::Scenario(name) => {
                let mut spec = builtin(name, seed)?;
                spec.test_fraction = cfg.test_fraction;
                generate_scenario(&spec)
            }
            Self::Components(text) => generate_scenario(&ScenarioSpec {
                name: "custom".into(),
                components: parse_components(text)?,
                test_fraction: cfg.test_fraction,
                seed,
            }),
            Self::Table(ds) => {
                let (train, test) =
                    stratified_split(ds, cfg.test_fraction, &mut rng::stream(seed, Stream::Split))?;
                if !cfg.standardize {
                    return Ok((train, test));
                }
                let st = fit_standardizer(&train)?;
                Ok((apply_standardizer(&st, &train)?, apply_standardizer(&st, &test)?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Variational(VariationalNet),
    Ensemble(Ensemble),
}

impl TrainedModel {
    pub fn train(cfg: &AuditConfig, train: &TabularDataset, seed: u64) -> Result<Self> {
        let tc = bayesnet::TrainConfig {
            seed,
            ..cfg.train.clone()
        };
        Ok(match cfg.backend {
            Backend::Variational => Self::Variational(bayesnet::train(train, &tc)?),
            Backend::Ensemble => Self::Ensemble(train_ensemble(train, &tc, cfg.members)?),
        })
    }

    /// Monte-Carlo draws (variational) or member outputs (ensemble).
    pub fn predict_sets(&self, features: &[f64], draws: usize, seed: u64) -> Result<Vec<PredictionSet>> {
        match self {
            Self::Variational(net) => {
                mc_predict(net, features, draws, &mut rng::stream(seed, Stream::Eval))
            }
            Self::Ensemble(ens) => ensemble_predict(ens, features),
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        match self {
            Self::Variational(n) => Checkpoint::Variational(n.clone()),
            Self::Ensemble(e) => Checkpoint::Ensemble(e.clone()),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        match ck {
            Checkpoint::Variational(n) => Ok(Self::Variational(n)),
            Checkpoint::Ensemble(e) => Ok(Self::Ensemble(e)),
            Checkpoint::Deterministic(d) => Ok(Self::Ensemble(Ensemble::new(vec![d])?)),
        }
    }
}

/// Per-sample values behind a seed's aggregates, kept for CSV dumps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleTable {
    pub groups: Vec<u8>,
    pub labels: Vec<u8>,
    pub preds: Vec<u8>,
    pub scalars: Vec<UncertaintyScalars>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub train_rows: usize,
    pub test_rows: usize,
    pub accuracy: f64,
    pub audits: [GroupAudit; 2],
    pub fairness: FairnessReport,
    /// Empty when k-NN consistency is disabled.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub consistency: Vec<ConsistencyScores>,
    pub reliability: ReliabilityBins,
    /// Dump files relative to the output directory.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dumps: Vec<String>,
    #[serde(skip)]
    pub samples: SampleTable,
}

/// Scores `model` on `test`.
pub fn evaluate(
    cfg: &AuditConfig,
    model: &TrainedModel,
    test: &TabularDataset,
    seed: u64,
) -> Result<SeedResult> {
    let sets = model.predict_sets(test.features(), cfg.mc_eval_samples, seed)?;
    let scalars: Vec<UncertaintyScalars> = sets.iter().map(|s| decompose(s).scalars()).collect();
    let preds: Vec<u8> = sets.iter().map(|s| s.predicted_class() as u8).collect();
    let labels = test.labels();
    let groups = test.groups();

    let gu = group_aggregate(&scalars, groups)?;
    let audits = GroupAudit::pair(&preds, labels, groups, &gu)?;
    let fairness = group_fairness(&audits[0], &audits[1], cfg.tau)?;

    let correct: Vec<bool> = preds.iter().zip(labels).map(|(p, y)| p == y).collect();
    let confidences: Vec<f64> = sets.iter().map(PredictionSet::confidence).collect();
    let reliability = reliability(&confidences, &correct, cfg.bins)?;

    let consistency = if cfg.k == 0 {
        Vec::new()
    } else {
        let neighbors = knn_all(test.features(), test.dim(), cfg.k)?;
        ValueKind::ALL
            .iter()
            .map(|&kind| {
                let values: Vec<f64> = match kind {
                    ValueKind::PointPrediction => preds.iter().map(|&p| p as f64).collect(),
                    ValueKind::Epistemic => scalars.iter().map(|s| s.epistemic).collect(),
                    ValueKind::Aleatoric => scalars.iter().map(|s| s.aleatoric).collect(),
                    ValueKind::Predictive => scalars.iter().map(|s| s.predictive).collect(),
                };
                let scores = consistency_with_neighbors(&values, &neighbors);
                ConsistencyScores::summarize(kind, cfg.k, scores, groups, labels, &preds)
            })
            .collect::<Result<Vec<_>>>()?
    };

    Ok(SeedResult {
        seed,
        train_rows: 0,
        test_rows: test.len(),
        accuracy: correct.iter().filter(|c| **c).count() as f64 / correct.len() as f64,
        audits,
        fairness,
        consistency,
        reliability,
        dumps: Vec::new(),
        samples: SampleTable {
            groups: groups.to_vec(),
            labels: labels.to_vec(),
            preds,
            scalars,
        },
    })
}

pub fn run_seed(cfg: &AuditConfig, source: &DataSource, seed: u64) -> Result<SeedResult> {
    let (train, test) = source.split(cfg, seed)?;
    let model = TrainedModel::train(cfg, &train, seed)?;
    let mut r = evaluate(cfg, &model, &test, seed)?;
    r.train_rows = train.len();
    info!(
        "seed {seed}: accuracy {:.3}, F_Alea {:?}, F_Epis {:?}",
        r.accuracy, r.fairness.alea.value, r.fairness.epis.value
    );
    Ok(r)
}

/// Median with its range over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub median: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl Stat {
    /// Over the defined values only.
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let mut v: Vec<f64> = values.into_iter().flatten().collect();
        v.sort_by(f64::total_cmp);
        Self {
            median: median_sorted(&v),
            min: v.first().copied(),
            max: v.last().copied(),
        }
    }
}

fn median_sorted(v: &[f64]) -> Option<f64> {
    let n = v.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(v[n / 2]),
        _ => Some(0.5 * (v[n / 2 - 1] + v[n / 2])),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub name: String,
    /// Undefined ratios rank above every defined one; a median that lands on
    /// them is undefined.
    pub median: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub undefined_seeds: usize,
    pub unfair: bool,
}

impl RatioSummary {
    pub fn of(name: &str, ratios: &[&Ratio], tau: f64) -> Self {
        let ranked: Vec<f64> = {
            let mut v: Vec<f64> = ratios.iter().map(|r| r.value.unwrap_or(f64::INFINITY)).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let median = median_sorted(&ranked).filter(|m| m.is_finite());
        let defined = Stat::of(ratios.iter().map(|r| r.value));
        Self {
            name: name.to_string(),
            median,
            min: defined.min,
            max: defined.max,
            undefined_seeds: ratios.iter().filter(|r| r.value.is_none()).count(),
            unfair: median.is_none_or(|m| Ratio::defined(m, tau).unfair),
        }
    }
}

/// Cross-seed statistics of one group's measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: u8,
    pub count: Stat,
    pub acc: Stat,
    pub ppv: Stat,
    pub npv: Stat,
    pub fpr: Stat,
    pub fnr: Stat,
    pub u_e: Stat,
    pub u_a: Stat,
    pub u_p: Stat,
}

impl GroupSummary {
    pub fn measures(&self) -> [(&'static str, &Stat); 8] {
        [
            ("M_Acc", &self.acc),
            ("M_PPV", &self.ppv),
            ("M_NPV", &self.npv),
            ("M_FPR", &self.fpr),
            ("M_FNR", &self.fnr),
            ("U_e", &self.u_e),
            ("U_a", &self.u_a),
            ("U_p", &self.u_p),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencySummary {
    pub kind: ValueKind,
    pub group_means: [Stat; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub ratios: Vec<RatioSummary>,
    pub groups: [GroupSummary; 2],
    pub accuracy: Stat,
    pub ece: Stat,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub consistency: Vec<ConsistencySummary>,
}

impl Summary {
    pub fn ratio(&self, name: &str) -> Option<&RatioSummary> {
        self.ratios.iter().find(|r| r.name == name)
    }

    pub fn of(seeds: &[SeedResult], tau: f64) -> Self {
        let ratios = RATIO_NAMES
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let rs: Vec<&Ratio> = seeds.iter().map(|s| s.fairness.ratios()[i]).collect();
                RatioSummary::of(name, &rs, tau)
            })
            .collect();
        let group = |g: usize| {
            let a = || seeds.iter().map(move |s| &s.audits[g]);
            GroupSummary {
                group: g as u8,
                count: Stat::of(a().map(|x| Some(x.count as f64))),
                acc: Stat::of(a().map(|x| Some(x.performance.acc))),
                ppv: Stat::of(a().map(|x| x.performance.ppv)),
                npv: Stat::of(a().map(|x| x.performance.npv)),
                fpr: Stat::of(a().map(|x| x.performance.fpr)),
                fnr: Stat::of(a().map(|x| x.performance.fnr)),
                u_e: Stat::of(a().map(|x| Some(x.uncertainty.epistemic))),
                u_a: Stat::of(a().map(|x| Some(x.uncertainty.aleatoric))),
                u_p: Stat::of(a().map(|x| Some(x.uncertainty.predictive))),
            }
        };
        let consistency = match seeds.first() {
            Some(first) => first
                .consistency
                .iter()
                .enumerate()
                .map(|(i, c)| ConsistencySummary {
                    kind: c.kind,
                    group_means: [0, 1].map(|g| {
                        Stat::of(seeds.iter().map(|s| s.consistency.get(i).and_then(|c| c.group_means[g])))
                    }),
                })
                .collect(),
            None => Vec::new(),
        };
        Self {
            ratios,
            groups: [group(0), group(1)],
            accuracy: Stat::of(seeds.iter().map(|s| Some(s.accuracy))),
            ece: Stat::of(seeds.iter().map(|s| Some(s.reliability.ece))),
            consistency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditResult {
    pub schema_version: u32,
    pub source: String,
    pub config: AuditConfig,
    pub seeds: Vec<SeedResult>,
    pub summary: Summary,
}

/// Every seed runs independently (in parallel); any failure aborts the run
/// before anything is written.
pub fn run_audit(cfg: &AuditConfig) -> Result<AuditResult> {
    cfg.validate()?;
    let source = DataSource::resolve(cfg)?;
    let seeds = cfg
        .seeds
        .par_iter()
        .map(|&s| run_seed(cfg, &source, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(AuditResult::assemble(cfg, cfg.source_name(), seeds))
}

impl AuditResult {
    /// Bundles completed seeds with their cross-seed summary.
    pub fn assemble(cfg: &AuditConfig, source: String, seeds: Vec<SeedResult>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            source,
            summary: Summary::of(&seeds, cfg.tau),
            config: cfg.clone(),
            seeds,
        }
    }
}
