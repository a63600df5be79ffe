//! Seedable generators for group-conditional mixture datasets, including the
//! three built-in synthetic scenarios `sd1`, `sd2` and `sd3`.
//!
//! A scenario is a list of components, each owning one `(G, Y)` cell and a
//! sampling distribution for `P(X | G, Y)`. Samples are concatenated,
//! shuffled and split stratified by cell.

use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng as _;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng, Stream};
use crate::tabular::{stratified_split, TabularDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponentSpec {
    pub mean: Vec<f64>,
    /// Row-major `d x d`.
    pub covariance: Vec<f64>,
    pub group: u8,
    pub label: u8,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaComponentSpec {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Negates every draw, giving support `[-1, 0]^d`.
    pub negate: bool,
    pub group: u8,
    pub label: u8,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComponentSpec {
    Gaussian(GaussianComponentSpec),
    Beta(BetaComponentSpec),
}

impl ComponentSpec {
    pub fn cell(&self) -> (u8, u8) {
        match self {
            ComponentSpec::Gaussian(c) => (c.group, c.label),
            ComponentSpec::Beta(c) => (c.group, c.label),
        }
    }

    pub fn count(&self) -> usize {
        match self {
            ComponentSpec::Gaussian(c) => c.count,
            ComponentSpec::Beta(c) => c.count,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ComponentSpec::Gaussian(c) => c.mean.len(),
            ComponentSpec::Beta(c) => c.alpha.len(),
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> Result<Vec<Vec<f64>>> {
        match self {
            ComponentSpec::Gaussian(c) => sample_gaussian(c, rng),
            ComponentSpec::Beta(c) => sample_beta(c, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub components: Vec<ComponentSpec>,
    pub test_fraction: f64,
    pub seed: u64,
}

fn check_cell(group: u8, label: u8, count: usize) -> Result<()> {
    if group > 1 || label > 1 {
        return Err(Error::Synth(format!(
            "component cell (g={group}, y={label}) is not binary"
        )));
    }
    if count == 0 {
        return Err(Error::Synth("component count must be at least 1".into()));
    }
    Ok(())
}

/// Covariance factor `L` with `L L^T = cov`, from the eigendecomposition so
/// that singular (PSD) covariances are accepted.
fn covariance_factor(spec: &GaussianComponentSpec) -> Result<DMatrix<f64>> {
    let d = spec.mean.len();
    let name = format!("gaussian(g={}, y={})", spec.group, spec.label);
    if d == 0 || spec.covariance.len() != d * d {
        return Err(Error::Synth(format!(
            "{name}: covariance has {} entries for a {d}-dimensional mean",
            spec.covariance.len()
        )));
    }
    let cov = DMatrix::from_row_slice(d, d, &spec.covariance);
    let scale = cov.amax().max(1.0);
    for i in 0..d {
        for j in 0..i {
            if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::Synth(format!(
                    "{name}: covariance is not symmetric ({} vs {} at [{i},{j}])",
                    cov[(i, j)],
                    cov[(j, i)]
                )));
            }
        }
    }
    let eig = SymmetricEigen::new(cov);
    let min = eig.eigenvalues.min();
    if min < -1e-10 * scale {
        return Err(Error::Synth(format!(
            "{name}: covariance is not positive semidefinite (eigenvalue {min})"
        )));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// `spec.count` draws from `N(mean, covariance)`.
pub fn sample_gaussian(spec: &GaussianComponentSpec, rng: &mut Rng) -> Result<Vec<Vec<f64>>> {
    check_cell(spec.group, spec.label, spec.count)?;
    let factor = covariance_factor(spec)?;
    let d = spec.mean.len();
    let mean = DVector::from_column_slice(&spec.mean);
    Ok((0..spec.count)
        .map(|_| {
            let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            (&mean + &factor * z).iter().copied().collect()
        })
        .collect())
}

/// `spec.count` draws with independent `Beta(alpha_d, beta_d)` coordinates.
pub fn sample_beta(spec: &BetaComponentSpec, rng: &mut Rng) -> Result<Vec<Vec<f64>>> {
    check_cell(spec.group, spec.label, spec.count)?;
    if spec.alpha.is_empty() || spec.alpha.len() != spec.beta.len() {
        return Err(Error::Synth(
            "beta component needs equal-length, non-empty alpha and beta".into(),
        ));
    }
    let dists = spec
        .alpha
        .iter()
        .zip(&spec.beta)
        .map(|(&a, &b)| {
            if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
                return Err(Error::Synth(format!(
                    "beta shape parameters must be positive, got alpha={a}, beta={b}"
                )));
            }
            Beta::new(a, b).map_err(|e| Error::Synth(format!("beta({a}, {b}): {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let sign = if spec.negate { -1.0 } else { 1.0 };
    Ok((0..spec.count)
        .map(|_| dists.iter().map(|d| sign * d.sample(rng)).collect())
        .collect())
}

/// Samples every component, shuffles under `spec.seed` and splits each
/// `(G, Y)` cell at `spec.test_fraction`. Returns `(train, test)`.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<(TabularDataset, TabularDataset)> {
    let all = sample_scenario(spec)?;
    let mut split_rng = rng::stream(spec.seed, Stream::Split);
    stratified_split(&all, spec.test_fraction, &mut split_rng)
}

/// All component samples concatenated in component order, before splitting.
pub fn sample_scenario(spec: &ScenarioSpec) -> Result<TabularDataset> {
    let first = spec
        .components
        .first()
        .ok_or_else(|| Error::Synth(format!("scenario {} has no components", spec.name)))?;
    let dim = first.dim();
    if spec.components.iter().any(|c| c.dim() != dim) {
        return Err(Error::Synth(format!(
            "scenario {}: components disagree on feature dimension",
            spec.name
        )));
    }
    let mut data_rng = rng::stream(spec.seed, Stream::Data);
    let (mut rows, mut labels, mut groups) = (Vec::new(), Vec::new(), Vec::new());
    for c in &spec.components {
        let (g, y) = c.cell();
        let drawn = c.sample(&mut data_rng)?;
        labels.extend(std::iter::repeat_n(y, drawn.len()));
        groups.extend(std::iter::repeat_n(g, drawn.len()));
        rows.extend(drawn);
    }
    TabularDataset::from_rows(&rows, labels, groups, format!("synthetic:{}", spec.name))
}

fn gaussian(mean: [f64; 2], cov: [f64; 4], group: u8, label: u8) -> ComponentSpec {
    ComponentSpec::Gaussian(GaussianComponentSpec {
        mean: mean.to_vec(),
        covariance: cov.to_vec(),
        group,
        label,
        count: 100,
    })
}

fn arcsine(negate: bool, group: u8, label: u8) -> ComponentSpec {
    ComponentSpec::Beta(BetaComponentSpec {
        alpha: vec![0.5, 0.5],
        beta: vec![0.5, 0.5],
        negate,
        group,
        label,
        count: 100,
    })
}

/// Names accepted by [`builtin`].
pub const BUILTIN_SCENARIOS: [&str; 4] = ["sd1", "sd2", "sd3", "sd1-literal"];

/// Built-in scenarios: 100 rows per `(G, Y)` cell, 20% held out.
///
/// * `sd1`: group 0 is a pair of arcsine (`Beta(0.5, 0.5)`) blobs inside
///   `[-1, 1]^2` straddling the origin; group 1 is a pair of wide Gaussians at
///   `(+-7, +-7)`. Group 0 carries the aleatoric gap. The positive label sits
///   on the positive side for both groups.
/// * `sd1-literal`: as `sd1`, but with group 0's labels on the opposite sides
///   (`Y = 0` on `[0, 1]^2`). No linear model separates both groups then.
/// * `sd2`: group 0 is wide (`cov [[100,30],[30,100]]`), group 1 tight;
///   group 0 carries the epistemic gap.
/// * `sd3`: two overlapping Gaussian pairs with different separations.
pub fn builtin(name: &str, seed: u64) -> Result<ScenarioSpec> {
    let components = match name {
        "sd1" => vec![
            arcsine(true, 0, 0),
            arcsine(false, 0, 1),
            gaussian([-7.0, -7.0], [15.0, 10.0, 10.0, 15.0], 1, 0),
            gaussian([7.0, 7.0], [15.0, 10.0, 10.0, 15.0], 1, 1),
        ],
        "sd1-literal" => vec![
            arcsine(false, 0, 0),
            arcsine(true, 0, 1),
            gaussian([-7.0, -7.0], [15.0, 10.0, 10.0, 15.0], 1, 0),
            gaussian([7.0, 7.0], [15.0, 10.0, 10.0, 15.0], 1, 1),
        ],
        "sd2" => {
            warn!("sd2: group 1, y=0 covariance [5,1;5,1] is not symmetric; using [[5,1],[1,5]]");
            vec![
                gaussian([-10.0, -10.0], [100.0, 30.0, 30.0, 100.0], 0, 0),
                gaussian([10.0, 10.0], [100.0, 30.0, 30.0, 100.0], 0, 1),
                gaussian([-7.0, -7.0], [5.0, 1.0, 1.0, 5.0], 1, 0),
                gaussian([7.0, 7.0], [5.0, 1.0, 1.0, 5.0], 1, 1),
            ]
        }
        "sd3" => {
            warn!("sd3: group 1, y=0 covariance [5,3;5,3] is not symmetric; using [[5,3],[3,5]]");
            vec![
                gaussian([-2.0, -2.0], [7.0, 3.0, 3.0, 7.0], 0, 0),
                gaussian([2.0, 2.0], [7.0, 3.0, 3.0, 7.0], 0, 1),
                gaussian([-3.0, -3.0], [5.0, 3.0, 3.0, 5.0], 1, 0),
                gaussian([3.0, 3.0], [5.0, 3.0, 3.0, 5.0], 1, 1),
            ]
        }
        other => {
            return Err(Error::Synth(format!(
                "unknown scenario {other:?}; expected one of {BUILTIN_SCENARIOS:?}"
            )))
        }
    };
    Ok(ScenarioSpec {
        name: name.to_string(),
        components,
        test_fraction: 0.2,
        seed,
    })
}

// Compact text form used by config files:
//   gaussian mean=-7,-7 cov=15,10,10,15 g=1 y=0 n=100
//   beta alpha=0.5,0.5 beta=0.5,0.5 negate=true g=0 y=0 n=100

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("{key}: bad number {x:?}")))
        })
        .collect()
}

impl FromStr for ComponentSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut tokens = s.split_whitespace();
        let kind = tokens
            .next()
            .ok_or_else(|| Error::Config("empty component".into()))?;
        let (mut mean, mut cov, mut alpha, mut beta) = (None, None, None, None);
        let (mut negate, mut g, mut y, mut n) = (false, None, None, None);
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("component token {tok:?} is not key=value")))?;
            let int = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| Error::Config(format!("{k}: bad integer {v:?}")))
            };
            match k {
                "mean" => mean = Some(parse_list(k, v)?),
                "cov" => cov = Some(parse_list(k, v)?),
                "alpha" => alpha = Some(parse_list(k, v)?),
                "beta" => beta = Some(parse_list(k, v)?),
                "negate" => {
                    negate = v
                        .parse()
                        .map_err(|_| Error::Config(format!("negate: bad bool {v:?}")))?
                }
                "g" => g = Some(int(v)? as u8),
                "y" => y = Some(int(v)? as u8),
                "n" => n = Some(int(v)?),
                _ => return Err(Error::Config(format!("unknown component key {k:?}"))),
            }
        }
        let missing = |what: &str| Error::Config(format!("{kind} component needs {what}"));
        let (group, label, count) = (
            g.ok_or_else(|| missing("g"))?,
            y.ok_or_else(|| missing("y"))?,
            n.ok_or_else(|| missing("n"))?,
        );
        match kind {
            "gaussian" => Ok(ComponentSpec::Gaussian(GaussianComponentSpec {
                mean: mean.ok_or_else(|| missing("mean"))?,
                covariance: cov.ok_or_else(|| missing("cov"))?,
                group,
                label,
                count,
            })),
            "beta" => Ok(ComponentSpec::Beta(BetaComponentSpec {
                alpha: alpha.ok_or_else(|| missing("alpha"))?,
                beta: beta.ok_or_else(|| missing("beta"))?,
                negate,
                group,
                label,
                count,
            })),
            other => Err(Error::Config(format!("unknown component kind {other:?}"))),
        }
    }
}

impl fmt::Display for ComponentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        match self {
            ComponentSpec::Gaussian(c) => write!(
                f,
                "gaussian mean={} cov={} g={} y={} n={}",
                join(&c.mean),
                join(&c.covariance),
                c.group,
                c.label,
                c.count
            ),
            ComponentSpec::Beta(c) => write!(
                f,
                "beta alpha={} beta={} negate={} g={} y={} n={}",
                join(&c.alpha),
                join(&c.beta),
                c.negate,
                c.group,
                c.label,
                c.count
            ),
        }
    }
}

/// Parses a `|`-separated component list.
pub fn parse_components(s: &str) -> Result<Vec<ComponentSpec>> {
    s.split('|')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(ComponentSpec::from_str)
        .collect()
}
