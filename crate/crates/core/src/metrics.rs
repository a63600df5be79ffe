//! Reliability bins and expected calibration error.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mean_confidence: Option<f64>,
    pub accuracy: Option<f64>,
}

/// `B` equal-width bins `((b-1)/B, b/B]` over (0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBins {
    pub bins: Vec<Bin>,
    pub total: usize,
    /// `sum_b n_b/N |acc_b - conf_b|`.
    pub ece: f64,
}

/// Zero-based index of the bin `((b-1)/B, b/B]` containing `conf`.
pub fn bin_index(conf: f64, bins: usize) -> usize {
    let b = bins as f64;
    let mut idx = ((conf * b).ceil() as usize).clamp(1, bins) - 1;
    // Correct for rounding in conf * B right at an edge.
    if idx > 0 && conf <= idx as f64 / b {
        idx -= 1;
    } else if idx + 1 < bins && conf > (idx + 1) as f64 / b {
        idx += 1;
    }
    idx
}

pub fn reliability(confidences: &[f64], correct: &[bool], bins: usize) -> Result<ReliabilityBins> {
    if bins < 1 {
        return Err(Error::Metrics("need at least one bin".into()));
    }
    if confidences.len() != correct.len() {
        return Err(Error::Metrics(format!(
            "{} confidences for {} correctness flags",
            confidences.len(),
            correct.len()
        )));
    }
    if let Some(c) = confidences.iter().find(|c| !(**c > 0.0 && **c <= 1.0)) {
        return Err(Error::Metrics(format!("confidence {c} outside (0, 1]")));
    }
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut hits = vec![0usize; bins];
    for (&c, &ok) in confidences.iter().zip(correct) {
        let i = bin_index(c, bins);
        count[i] += 1;
        conf_sum[i] += c;
        hits[i] += ok as usize;
    }
    let total = confidences.len();
    let mut ece = 0.0;
    let bins = (0..bins)
        .map(|i| {
            let (mean_confidence, accuracy) = if count[i] == 0 {
                (None, None)
            } else {
                let n = count[i] as f64;
                let (c, a) = (conf_sum[i] / n, hits[i] as f64 / n);
                ece += n / total as f64 * (a - c).abs();
                (Some(c), Some(a))
            };
            Bin {
                lower: i as f64 / bins as f64,
                upper: (i + 1) as f64 / bins as f64,
                count: count[i],
                mean_confidence,
                accuracy,
            }
        })
        .collect();
    Ok(ReliabilityBins { bins, total, ece })
}

/// CSV `bin,lower,upper,count,mean_confidence,accuracy`; empty bins leave
/// the last two fields blank.
pub fn write_bins_csv<W: Write>(out: W, rb: &ReliabilityBins) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fail = |e: csv::Error| Error::Metrics(format!("writing bin csv: {e}"));
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    w.write_record(["bin", "lower", "upper", "count", "mean_confidence", "accuracy"])
        .map_err(fail)?;
    for (i, b) in rb.bins.iter().enumerate() {
        w.write_record([
            i.to_string(),
            b.lower.to_string(),
            b.upper.to_string(),
            b.count.to_string(),
            opt(b.mean_confidence),
            opt(b.accuracy),
        ])
        .map_err(fail)?;
    }
    w.flush().map_err(|e| Error::Metrics(format!("writing bin csv: {e}")))
}
