//! Monte-Carlo prediction sets and the decomposition of predictive
//! uncertainty into epistemic and aleatoric parts.
//!
//! For draws `P_1..P_M` of a class-probability vector with mean `P̄`:
//!
//! ```text
//! epistemic = 1/M sum_m (P_m - P̄)(P_m - P̄)^T
//! aleatoric = 1/M sum_m (diag(P_m) - P_m P_m^T)
//! predictive = epistemic + aleatoric
//! ```
//!
//! Each `C x C` matrix is summarized by its trace, i.e. the sum of
//! per-class variances. Absolute magnitudes in reports depend on that choice.

use serde::{Deserialize, Serialize};

use crate::bayesnet::{sample_weights, VariationalNet};
use crate::error::{Error, Result};
use crate::nn::argmax;
use crate::rng::Rng;

const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// `M` class-probability vectors for one sample, row-major `M x C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    draws: usize,
    classes: usize,
    probs: Vec<f64>,
}

impl PredictionSet {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let draws = rows.len();
        let classes = rows.first().map_or(0, Vec::len);
        if draws == 0 || classes == 0 {
            return Err(Error::Model("prediction set needs at least one draw and class".into()));
        }
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::Model("prediction set rows differ in length".into()));
        }
        for (m, r) in rows.iter().enumerate() {
            let sum: f64 = r.iter().sum();
            if r.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Model(format!(
                    "draw {m} is not a probability vector: {r:?}"
                )));
            }
        }
        Ok(Self {
            draws,
            classes,
            probs: rows.concat(),
        })
    }

    pub fn draws(&self) -> usize {
        self.draws
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.probs[m * self.classes..(m + 1) * self.classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks_exact(self.classes)
    }

    /// `P̄`, the mean over draws.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.classes];
        for row in self.rows() {
            for (a, p) in mean.iter_mut().zip(row) {
                *a += p;
            }
        }
        mean.iter_mut().for_each(|a| *a /= self.draws as f64);
        mean
    }

    /// `argmax P̄`, lower class index on ties.
    pub fn predicted_class(&self) -> usize {
        argmax(&self.mean())
    }

    /// `max P̄`.
    pub fn confidence(&self) -> f64 {
        self.mean().into_iter().fold(0.0, f64::max)
    }
}

/// Row-major `C x C` matrices and their traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyDecomposition {
    pub classes: usize,
    pub epistemic_matrix: Vec<f64>,
    pub aleatoric_matrix: Vec<f64>,
    pub predictive_matrix: Vec<f64>,
    pub epistemic: f64,
    pub aleatoric: f64,
    pub predictive: f64,
}

impl UncertaintyDecomposition {
    pub fn scalars(&self) -> UncertaintyScalars {
        UncertaintyScalars {
            epistemic: self.epistemic,
            aleatoric: self.aleatoric,
            predictive: self.predictive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScalars {
    pub epistemic: f64,
    pub aleatoric: f64,
    pub predictive: f64,
}

fn trace(m: &[f64], c: usize) -> f64 {
    (0..c).map(|i| m[i * c + i]).sum()
}

pub fn decompose(ps: &PredictionSet) -> UncertaintyDecomposition {
    let c = ps.classes;
    let inv_m = 1.0 / ps.draws as f64;
    // The covariance is taken about the first draw, then re-centred, so that
    // identical draws give exactly zero rather than rounding residue.
    let origin = ps.row(0).to_vec();
    let mut shift = vec![0.0; c];
    for row in ps.rows() {
        for (s, (p, o)) in shift.iter_mut().zip(row.iter().zip(&origin)) {
            *s += (p - o) * inv_m;
        }
    }
    let mut epis = vec![0.0; c * c];
    let mut alea = vec![0.0; c * c];
    for row in ps.rows() {
        for i in 0..c {
            let di = row[i] - origin[i] - shift[i];
            for j in 0..c {
                epis[i * c + j] += di * (row[j] - origin[j] - shift[j]) * inv_m;
                let diag = if i == j { row[i] } else { 0.0 };
                alea[i * c + j] += (diag - row[i] * row[j]) * inv_m;
            }
        }
    }
    let pred: Vec<f64> = epis.iter().zip(&alea).map(|(e, a)| e + a).collect();
    UncertaintyDecomposition {
        classes: c,
        epistemic: trace(&epis, c),
        aleatoric: trace(&alea, c),
        predictive: trace(&pred, c),
        epistemic_matrix: epis,
        aleatoric_matrix: alea,
        predictive_matrix: pred,
    }
}

/// One prediction set per row of `features`; draw `m` uses the same weight
/// sample for every row.
pub fn mc_predict(
    net: &VariationalNet,
    features: &[f64],
    draws: usize,
    rng: &mut Rng,
) -> Result<Vec<PredictionSet>> {
    if draws == 0 {
        return Err(Error::Model("need at least one Monte-Carlo draw".into()));
    }
    let per_draw = (0..draws)
        .map(|_| sample_weights(net, rng).mlp.predict_proba(features))
        .collect::<Result<Vec<_>>>()?;
    collect_sets(per_draw)
}

/// Transposes `draws x samples` probability vectors into per-sample sets.
pub fn collect_sets(per_draw: Vec<Vec<Vec<f64>>>) -> Result<Vec<PredictionSet>> {
    let samples = per_draw.first().map_or(0, Vec::len);
    (0..samples)
        .map(|i| PredictionSet::new(per_draw.iter().map(|d| d[i].clone()).collect()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupUncertainty {
    pub group: u8,
    pub epistemic: f64,
    pub aleatoric: f64,
    pub predictive: f64,
    pub count: usize,
}

/// Mean scalar uncertainties within group 0 and group 1.
pub fn group_aggregate(
    scalars: &[UncertaintyScalars],
    groups: &[u8],
) -> Result<[GroupUncertainty; 2]> {
    if scalars.len() != groups.len() {
        return Err(Error::Fairness(format!(
            "{} uncertainty rows for {} group labels",
            scalars.len(),
            groups.len()
        )));
    }
    let mut out = [0u8, 1].map(|g| GroupUncertainty {
        group: g,
        epistemic: 0.0,
        aleatoric: 0.0,
        predictive: 0.0,
        count: 0,
    });
    for (s, &g) in scalars.iter().zip(groups) {
        let a = out
            .get_mut(g as usize)
            .ok_or_else(|| Error::Fairness(format!("group id {g} is not binary")))?;
        a.epistemic += s.epistemic;
        a.aleatoric += s.aleatoric;
        a.predictive += s.predictive;
        a.count += 1;
    }
    for a in &mut out {
        if a.count == 0 {
            return Err(Error::Fairness(format!("group {} has no samples", a.group)));
        }
        let n = a.count as f64;
        a.epistemic /= n;
        a.aleatoric /= n;
        a.predictive /= n;
    }
    Ok(out)
}

/// Per-sample CSV `sample_id,group,label,pred,u_epis,u_alea,u_pred`.
pub fn write_uncertainty_csv<W: std::io::Write>(
    out: W,
    groups: &[u8],
    labels: &[u8],
    preds: &[u8],
    scalars: &[UncertaintyScalars],
) -> Result<()> {
    let n = scalars.len();
    if groups.len() != n || labels.len() != n || preds.len() != n {
        return Err(Error::Model("uncertainty dump inputs differ in length".into()));
    }
    let fail = |e: csv::Error| Error::Model(format!("writing uncertainty csv: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sample_id", "group", "label", "pred", "u_epis", "u_alea", "u_pred"])
        .map_err(fail)?;
    for (i, s) in scalars.iter().enumerate() {
        w.write_record([
            i.to_string(),
            groups[i].to_string(),
            labels[i].to_string(),
            preds[i].to_string(),
            s.epistemic.to_string(),
            s.aleatoric.to_string(),
            s.predictive.to_string(),
        ])
        .map_err(fail)?;
    }
    w.flush()
        .map_err(|e| Error::Model(format!("writing uncertainty csv: {e}")))
}
