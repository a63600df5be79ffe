//! Group fairness ratios and k-NN individual consistency.
//!
//! Every ratio is oriented G0 over G1. A rate with an empty denominator, or a
//! ratio whose denominator vanishes, is carried as `None` rather than NaN.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::uncertainty::GroupUncertainty;

/// Denominators below this are treated as zero.
pub const DEGENERATE: f64 = 1e-12;

fn rate(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceMeasures {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub acc: f64,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
}

impl PerformanceMeasures {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn check_binary(name: &str, v: &[u8]) -> Result<()> {
    match v.iter().find(|&&x| x > 1) {
        Some(x) => Err(Error::Fairness(format!("{name} contains non-binary value {x}"))),
        None => Ok(()),
    }
}

/// Confusion counts and the usual rates, with class 1 as positive.
pub fn performance_measures(preds: &[u8], labels: &[u8]) -> Result<PerformanceMeasures> {
    if preds.len() != labels.len() {
        return Err(Error::Fairness(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Fairness("no predictions to score".into()));
    }
    check_binary("predictions", preds)?;
    check_binary("labels", labels)?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &y) in preds.iter().zip(labels) {
        match (p, y) {
            (1, 1) => tp += 1,
            (1, _) => fp += 1,
            (_, 0) => tn += 1,
            _ => fn_ += 1,
        }
    }
    Ok(PerformanceMeasures {
        tp,
        fp,
        tn,
        fn_,
        acc: (tp + tn) as f64 / preds.len() as f64,
        ppv: rate(tp, tp + fp),
        npv: rate(tn, tn + fn_),
        fpr: rate(fp, fp + tn),
        fnr: rate(fn_, fn_ + tp),
    })
}

/// Everything the group ratios need about one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupAudit {
    pub group: u8,
    pub count: usize,
    pub performance: PerformanceMeasures,
    pub uncertainty: GroupUncertainty,
    /// `P(Ŷ=1 | G)`.
    pub positive_rate: f64,
    /// `P(Ŷ=0 | Y=1, G)`.
    pub miss_rate: Option<f64>,
    /// `P(Ŷ=1 | Y=y, G)` for `y = 0, 1`.
    pub positive_rate_given_label: [Option<f64>; 2],
}

impl GroupAudit {
    pub fn new(
        group: u8,
        preds: &[u8],
        labels: &[u8],
        uncertainty: GroupUncertainty,
    ) -> Result<Self> {
        let performance = performance_measures(preds, labels)?;
        let p = performance;
        Ok(Self {
            group,
            count: preds.len(),
            performance,
            uncertainty,
            positive_rate: (p.tp + p.fp) as f64 / preds.len() as f64,
            miss_rate: p.fnr,
            positive_rate_given_label: [p.fpr, rate(p.tp, p.tp + p.fn_)],
        })
    }

    /// Audits group 0 and group 1 of a labelled prediction vector.
    pub fn pair(
        preds: &[u8],
        labels: &[u8],
        groups: &[u8],
        uncertainty: &[GroupUncertainty; 2],
    ) -> Result<[Self; 2]> {
        if preds.len() != groups.len() || labels.len() != groups.len() {
            return Err(Error::Fairness("predictions, labels and groups differ in length".into()));
        }
        let select = |g: u8, v: &[u8]| -> Vec<u8> {
            v.iter()
                .zip(groups)
                .filter(|(_, &gi)| gi == g)
                .map(|(x, _)| *x)
                .collect()
        };
        let make = |g: u8| {
            let p = select(g, preds);
            if p.is_empty() {
                return Err(Error::Fairness(format!("group {g} has no samples")));
            }
            Self::new(g, &p, &select(g, labels), uncertainty[g as usize])
        };
        Ok([make(0)?, make(1)?])
    }
}

/// One fairness ratio and its flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub value: Option<f64>,
    pub unfair: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Ratio {
    /// `num / den`. Two vanishing rates compare equal (ratio 1); a vanishing
    /// denominator alone gives an undefined ratio that is flagged.
    pub fn between(num: Option<f64>, den: Option<f64>, tau: f64) -> Self {
        let (Some(n), Some(d)) = (num, den) else {
            return Self::undefined("undefined group rate");
        };
        if d.abs() < DEGENERATE {
            if n.abs() < DEGENERATE {
                return Self::defined(1.0, tau);
            }
            return Self::undefined("degenerate denominator");
        }
        // Flag from both quotients of the operands so swapping the groups
        // gives the same flag bit for bit.
        let value = n / d;
        Self {
            value: Some(value),
            unfair: value <= 0.0 || (value - 1.0).abs() > tau || (d / n - 1.0).abs() > tau,
            reason: None,
        }
    }

    pub fn defined(value: f64, tau: f64) -> Self {
        Self {
            value: Some(value),
            unfair: is_unfair(value, tau),
            reason: None,
        }
    }

    pub fn undefined(reason: &str) -> Self {
        Self {
            value: None,
            unfair: true,
            reason: Some(reason.into()),
        }
    }

    /// `|ln F|`, infinite when undefined or zero.
    pub fn log_distance(&self) -> f64 {
        match self.value {
            Some(v) if v > 0.0 => v.ln().abs(),
            _ => f64::INFINITY,
        }
    }
}

/// Flags `value` when it or its reciprocal is farther than `tau` from 1, so
/// the flag does not depend on which group is called G0.
pub fn is_unfair(value: f64, tau: f64) -> bool {
    (value - 1.0).abs() > tau || value <= 0.0 || (1.0 / value - 1.0).abs() > tau
}

pub const RATIO_NAMES: [&str; 7] = ["F_SP", "F_EOpp", "F_EOdd", "F_EAcc", "F_Epis", "F_Alea", "F_Pred"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub tau: f64,
    pub group_sizes: [usize; 2],
    pub sp: Ratio,
    pub eopp: Ratio,
    /// The per-label ratio farthest from 1 (in log scale).
    pub eodd: Ratio,
    /// `P(Ŷ=1|Y=y,G0) / P(Ŷ=1|Y=y,G1)` for `y = 0, 1`.
    pub eodd_by_label: [Ratio; 2],
    pub eacc: Ratio,
    pub epis: Ratio,
    pub alea: Ratio,
    pub pred: Ratio,
}

impl FairnessReport {
    /// Ratios in [`RATIO_NAMES`] order.
    pub fn ratios(&self) -> [&Ratio; 7] {
        [
            &self.sp, &self.eopp, &self.eodd, &self.eacc, &self.epis, &self.alea, &self.pred,
        ]
    }
}

pub fn group_fairness(a0: &GroupAudit, a1: &GroupAudit, tau: f64) -> Result<FairnessReport> {
    if !(tau >= 0.0) {
        return Err(Error::Fairness(format!("threshold must be non-negative, got {tau}")));
    }
    if a0.count == 0 || a1.count == 0 {
        return Err(Error::Fairness("both groups must be non-empty".into()));
    }
    let r = |n: Option<f64>, d: Option<f64>| Ratio::between(n, d, tau);
    let eodd_by_label = [0, 1].map(|y| {
        r(a0.positive_rate_given_label[y], a1.positive_rate_given_label[y])
    });
    // Ties keep the lower label. Reciprocal per-label ratios tie exactly in
    // theory but not after rounding, so near-ties count as ties.
    let (d0, d1) = (eodd_by_label[0].log_distance(), eodd_by_label[1].log_distance());
    let eodd = if d1 > d0 && d1 - d0 > 1e-12 * d0.max(1.0) {
        eodd_by_label[1].clone()
    } else {
        eodd_by_label[0].clone()
    };
    let (u0, u1) = (&a0.uncertainty, &a1.uncertainty);
    Ok(FairnessReport {
        tau,
        group_sizes: [a0.count, a1.count],
        sp: r(Some(a0.positive_rate), Some(a1.positive_rate)),
        eopp: r(a0.miss_rate, a1.miss_rate),
        eodd,
        eodd_by_label,
        eacc: r(Some(a0.performance.acc), Some(a1.performance.acc)),
        epis: r(Some(u0.epistemic), Some(u1.epistemic)),
        alea: r(Some(u0.aleatoric), Some(u1.aleatoric)),
        pred: r(Some(u0.predictive), Some(u1.predictive)),
    })
}

/// The per-sample quantity a consistency score is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueKind {
    PointPrediction,
    Epistemic,
    Aleatoric,
    Predictive,
}

impl ValueKind {
    pub const ALL: [ValueKind; 4] = [
        ValueKind::PointPrediction,
        ValueKind::Epistemic,
        ValueKind::Aleatoric,
        ValueKind::Predictive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ValueKind::PointPrediction => "point-prediction",
            ValueKind::Epistemic => "epistemic",
            ValueKind::Aleatoric => "aleatoric",
            ValueKind::Predictive => "predictive",
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// The `k` nearest rows to row `i` of the row-major `features`, self
/// excluded, nearest first, ties to the lower index.
pub fn knn_indices(features: &[f64], dim: usize, i: usize, k: usize) -> Result<Vec<usize>> {
    if dim == 0 || !features.len().is_multiple_of(dim) {
        return Err(Error::Fairness(format!(
            "{} feature values do not form rows of dimension {dim}",
            features.len()
        )));
    }
    let n = features.len() / dim;
    if i >= n {
        return Err(Error::Fairness(format!("sample {i} out of range for {n} rows")));
    }
    if k == 0 || k >= n {
        return Err(Error::Fairness(format!("k must be in 1..{n}, got {k}")));
    }
    let xi = &features[i * dim..(i + 1) * dim];
    let mut cand: Vec<(f64, usize)> = (0..n)
        .filter(|&j| j != i)
        .map(|j| (sq_dist(xi, &features[j * dim..(j + 1) * dim]), j))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, cmp);
        cand.truncate(k);
    }
    cand.sort_unstable_by(cmp);
    Ok(cand.into_iter().map(|(_, j)| j).collect())
}

/// Neighbour lists for every row.
pub fn knn_all(features: &[f64], dim: usize, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = features.len().checked_div(dim).unwrap_or(0);
    (0..n)
        .into_par_iter()
        .map(|i| knn_indices(features, dim, i, k))
        .collect()
}

/// `1 - |v_i - mean(v_j for j in neighbours_i)|`.
pub fn consistency_with_neighbors(values: &[f64], neighbors: &[Vec<usize>]) -> Vec<f64> {
    values
        .iter()
        .zip(neighbors)
        .map(|(v, nb)| {
            let mean = nb.iter().map(|&j| values[j]).sum::<f64>() / nb.len() as f64;
            1.0 - (v - mean).abs()
        })
        .collect()
}

pub fn consistency(values: &[f64], features: &[f64], dim: usize, k: usize) -> Result<Vec<f64>> {
    if dim == 0 || values.len() * dim != features.len() {
        return Err(Error::Fairness(format!(
            "{} values for {} feature values of dimension {dim}",
            values.len(),
            features.len()
        )));
    }
    Ok(consistency_with_neighbors(values, &knn_all(features, dim, k)?))
}

/// Consistency scores of one value kind with their group summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyScores {
    pub kind: ValueKind,
    pub k: usize,
    #[serde(skip)]
    pub scores: Vec<f64>,
    pub group_means: [Option<f64>; 2],
    /// Indexed `[group][true label]`.
    pub by_true_label: [[Option<f64>; 2]; 2],
    /// Indexed `[group][predicted label]`.
    pub by_predicted_label: [[Option<f64>; 2]; 2],
}

fn bucket_means(scores: &[f64], groups: &[u8], key: &[u8]) -> [[Option<f64>; 2]; 2] {
    let mut sum = [[0.0; 2]; 2];
    let mut n = [[0usize; 2]; 2];
    for ((s, &g), &y) in scores.iter().zip(groups).zip(key) {
        sum[g as usize][y as usize] += s;
        n[g as usize][y as usize] += 1;
    }
    [0, 1].map(|g| [0, 1].map(|y| (n[g][y] > 0).then(|| sum[g][y] / n[g][y] as f64)))
}

impl ConsistencyScores {
    pub fn summarize(
        kind: ValueKind,
        k: usize,
        scores: Vec<f64>,
        groups: &[u8],
        labels: &[u8],
        preds: &[u8],
    ) -> Result<Self> {
        let n = scores.len();
        if groups.len() != n || labels.len() != n || preds.len() != n {
            return Err(Error::Fairness("consistency inputs differ in length".into()));
        }
        check_binary("groups", groups)?;
        check_binary("labels", labels)?;
        check_binary("predictions", preds)?;
        let mut sum = [0.0; 2];
        let mut cnt = [0usize; 2];
        for (s, &g) in scores.iter().zip(groups) {
            sum[g as usize] += s;
            cnt[g as usize] += 1;
        }
        Ok(Self {
            kind,
            k,
            group_means: [0, 1].map(|g| (cnt[g] > 0).then(|| sum[g] / cnt[g] as f64)),
            by_true_label: bucket_means(&scores, groups, labels),
            by_predicted_label: bucket_means(&scores, groups, preds),
            scores,
        })
    }
}

/// Long-format CSV `sample_id,group,label,kind,score`.
pub fn write_consistency_csv<W: Write>(
    out: W,
    all: &[ConsistencyScores],
    groups: &[u8],
    labels: &[u8],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fail = |e: csv::Error| Error::Fairness(format!("writing consistency csv: {e}"));
    w.write_record(["sample_id", "group", "label", "kind", "score"])
        .map_err(fail)?;
    for c in all {
        for (i, s) in c.scores.iter().enumerate() {
            w.write_record([
                i.to_string(),
                groups[i].to_string(),
                labels[i].to_string(),
                c.kind.as_str().to_string(),
                s.to_string(),
            ])
            .map_err(fail)?;
        }
    }
    w.flush()
        .map_err(|e| Error::Fairness(format!("writing consistency csv: {e}")))
}
