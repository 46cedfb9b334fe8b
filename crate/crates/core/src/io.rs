//! JSON formats for problems and solution sets.
//!
//! Problem files look like
//!
//! ```json
//! {"dim": 2, "senders": [[1, 0], [-1, 0], [0, 1]], "distances": [1, 1, 1],
//!  "weights": {"diag": [1, 1, 1]}}
//! ```
//!
//! where `weights` may also be `{"full": [[...], ...]}` or `"unit"` (the
//! default). Instead of explicit weights a `noise` object derives them:
//! `{"model": "toa", "sigma": 0.1}`,
//! `{"model": "rss", "sigma_rss": 5, "per_sender": [{"eta": 2, "c0": -40}, ...]}`
//! or `{"model": "unit"}`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::problem::{clamp_distances, Minimizers, SolutionSet, TrilaterationProblem, WeightMatrix};
use crate::weights::NoiseModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightsSpec {
    Diag(Vec<f64>),
    Full(Vec<Vec<f64>>),
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    Shared(f64),
    PerSender(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RssSender {
    pub eta: f64,
    pub c0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum NoiseSpec {
    Toa { sigma: SigmaSpec },
    Rss { sigma_rss: f64, per_sender: Vec<RssSender> },
    Unit,
}

impl NoiseSpec {
    pub fn to_model(&self, m: usize) -> NoiseModel {
        match self {
            NoiseSpec::Toa { sigma: SigmaSpec::Shared(s) } => NoiseModel::gaussian_shared(*s, m),
            NoiseSpec::Toa { sigma: SigmaSpec::PerSender(s) } => {
                NoiseModel::GaussianDistance { sigma: s.clone() }
            }
            NoiseSpec::Rss { sigma_rss, per_sender } => NoiseModel::LogNormalRss {
                eta: per_sender.iter().map(|p| p.eta).collect(),
                c0: per_sender.iter().map(|p| p.c0).collect(),
                sigma_rss: *sigma_rss,
            },
            NoiseSpec::Unit => NoiseModel::Unit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub dim: usize,
    pub senders: Vec<Vec<f64>>,
    pub distances: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightsSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
}

impl ProblemFile {
    /// Resolves weights. Noise-derived weights use distances clamped at the default threshold.
    pub fn into_problem(self) -> Result<TrilaterationProblem> {
        let m = self.distances.len();
        let weights = match (self.weights, self.noise) {
            (Some(_), Some(_)) => {
                return Err(Error::Parse("specify either \"weights\" or \"noise\", not both".into()))
            }
            (None, None) | (Some(WeightsSpec::Unit), None) => WeightMatrix::unit(m),
            (Some(WeightsSpec::Diag(w)), None) => WeightMatrix::Diagonal(w),
            (Some(WeightsSpec::Full(rows)), None) => {
                if rows.iter().any(|r| r.len() != rows.len()) {
                    return Err(Error::Parse("full weight matrix must be square".into()));
                }
                let k = rows.len();
                WeightMatrix::Full(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
            }
            (None, Some(noise)) => {
                if self.distances.iter().any(|d| !d.is_finite() || *d < 0.0) {
                    return Err(Error::NonFiniteInput("distances must be finite and nonnegative".into()));
                }
                noise.to_model(m).weights(&clamp_distances(&self.distances))?
            }
        };
        Ok(TrilaterationProblem::new(self.dim, self.senders, self.distances, weights))
    }

    pub fn from_problem(p: &TrilaterationProblem) -> Self {
        let weights = match &p.weights {
            WeightMatrix::Diagonal(w) => WeightsSpec::Diag(w.clone()),
            WeightMatrix::Full(w) => WeightsSpec::Full(w.row_iter().map(|r| r.iter().copied().collect()).collect()),
        };
        ProblemFile {
            dim: p.dim,
            senders: p.senders.clone(),
            distances: p.distances.clone(),
            weights: Some(weights),
            noise: None,
        }
    }
}

/// Parses a problem file. The result is not yet validated.
pub fn parse_problem(text: &str) -> Result<TrilaterationProblem> {
    let file: ProblemFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    file.into_problem()
}

pub fn problem_to_json(p: &TrilaterationProblem) -> Value {
    serde_json::to_value(ProblemFile::from_problem(p)).expect("problem serializes")
}

fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

/// `{"kind", "points", "lambda", "rank", "cost", "sphere"?}`; non-finite numbers become `null`.
pub fn solution_to_json(sol: &SolutionSet) -> Value {
    let points: Vec<&Vec<f64>> = sol.points();
    let mut out = json!({
        "kind": sol.kind(),
        "points": points,
        "lambda": num(sol.lambda),
        "rank": sol.rank,
        "cost": num(sol.cost),
    });
    if let Minimizers::Sphere(s) = &sol.minimizers {
        out["sphere"] = json!({
            "center": s.center,
            "radius": num(s.radius),
            "normal_space": s.normal_space,
        });
    }
    out
}
