//! Loading RSS/RTT measurements and turning them into a weighted problem.

use std::collections::HashMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{clamp_distances_with, Point, TrilaterationProblem, WeightMatrix};
use crate::weights::{rss_to_distance_squared, weights_rss, weights_toa};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorParams {
    pub id: String,
    #[serde(rename = "pos")]
    pub position: Point,
    /// Path-loss exponent.
    pub eta: f64,
    /// Received power at 1 m, dBm.
    pub c0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementKind {
    /// Received signal strength in dBm.
    Rss,
    /// Round-trip-time distance in meters.
    Rtt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub anchor_id: String,
    pub kind: MeasurementKind,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub distance: f64,
    pub rss_dbm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    pub sigma_rss: f64,
    pub sigma_rtt: f64,
    /// Use `W = I` instead of the noise-model weights.
    pub unweighted: bool,
    pub clamp: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { sigma_rss: 5.0, sigma_rtt: 1.0, unweighted: false, clamp: crate::problem::DEFAULT_CLAMP }
    }
}

fn parse_err(e: impl std::fmt::Display) -> Error {
    Error::Parse(e.to_string())
}

/// Reads an anchor registry `[{"id", "pos", "eta", "c0"}, ...]`.
pub fn read_anchors<R: Read>(reader: R) -> Result<Vec<AnchorParams>> {
    let anchors: Vec<AnchorParams> = serde_json::from_reader(reader).map_err(parse_err)?;
    for a in &anchors {
        if !(a.eta.is_finite() && a.eta > 0.0) {
            return Err(Error::NonFiniteInput(format!("anchor {}: eta must be positive", a.id)));
        }
        if !a.c0.is_finite() || a.position.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(format!("anchor {}: non-finite parameters", a.id)));
        }
    }
    Ok(anchors)
}

/// Reads `anchor_id,kind,value` rows.
pub fn read_measurements<R: Read>(reader: R) -> Result<Vec<MeasurementRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize::<(String, String, f64)>() {
        let (anchor_id, kind, value) = row.map_err(parse_err)?;
        let kind = match kind.to_ascii_lowercase().as_str() {
            "rss" => MeasurementKind::Rss,
            "rtt" => MeasurementKind::Rtt,
            other => return Err(Error::Parse(format!("unknown measurement kind {other:?}"))),
        };
        if !value.is_finite() || (kind == MeasurementKind::Rtt && value < 0.0) {
            return Err(Error::NonFiniteInput(format!("bad {kind:?} value {value} for {anchor_id}")));
        }
        out.push(MeasurementRecord { anchor_id, kind, value });
    }
    Ok(out)
}

/// Reads `distance,rss_dbm` rows.
pub fn read_calibration<R: Read>(reader: R) -> Result<Vec<CalibrationRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(parse_err)).collect()
}

/// Least-squares fit of `C = c0 − 10η·log₁₀(dist)`; returns `(c0, η)`.
pub fn calibrate_pathloss(records: &[CalibrationRecord]) -> Result<(f64, f64)> {
    if records.len() < 2 {
        return Err(Error::InsufficientData(format!("{} calibration records, need 2", records.len())));
    }
    if let Some(r) = records.iter().find(|r| !(r.distance > 0.0 && r.distance.is_finite() && r.rss_dbm.is_finite())) {
        return Err(Error::InsufficientData(format!("invalid record {r:?}")));
    }
    let k = records.len() as f64;
    let xs: Vec<f64> = records.iter().map(|r| r.distance.log10()).collect();
    let xm = xs.iter().sum::<f64>() / k;
    let ym = records.iter().map(|r| r.rss_dbm).sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
    let sxy: f64 = xs.iter().zip(records).map(|(x, r)| (x - xm) * (r.rss_dbm - ym)).sum();
    let spread = xs.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
    if sxx <= (1e-12 * spread).powi(2) * k {
        return Err(Error::DegenerateFit("all calibration distances coincide".into()));
    }
    let slope = sxy / sxx;
    Ok((ym - slope * xm, -slope / 10.0))
}

/// Converts measurements into a problem: RSS rows first, then RTT rows, in input order.
pub fn build_problem(
    meas: &[MeasurementRecord],
    anchors: &[AnchorParams],
    opts: &BuildOptions,
) -> Result<TrilaterationProblem> {
    let registry: HashMap<&str, &AnchorParams> = anchors.iter().map(|a| (a.id.as_str(), a)).collect();
    let resolve = |r: &MeasurementRecord| {
        registry.get(r.anchor_id.as_str()).copied().ok_or_else(|| Error::UnknownAnchor(r.anchor_id.clone()))
    };

    let mut rss_senders = Vec::new();
    let mut rss_d = Vec::new();
    let mut rss_eta = Vec::new();
    let mut rtt_senders = Vec::new();
    let mut rtt_d = Vec::new();
    for r in meas {
        let a = resolve(r)?;
        match r.kind {
            MeasurementKind::Rss => {
                rss_senders.push(a.position.clone());
                rss_d.push(rss_to_distance_squared(r.value, a.c0, a.eta).sqrt());
                rss_eta.push(a.eta);
            }
            MeasurementKind::Rtt => {
                rtt_senders.push(a.position.clone());
                rtt_d.push(r.value);
            }
        }
    }
    if rss_d.is_empty() && rtt_d.is_empty() {
        return Err(Error::EmptyProblem);
    }

    let rss_d = clamp_distances_with(&rss_d, opts.clamp);
    let rtt_d = clamp_distances_with(&rtt_d, opts.clamp);
    let mut w = Vec::with_capacity(rss_d.len() + rtt_d.len());
    if !opts.unweighted {
        let d2: Vec<f64> = rss_d.iter().map(|d| d * d).collect();
        w.extend(diag(weights_rss(&d2, &rss_eta, opts.sigma_rss)));
        w.extend(diag(weights_toa(&rtt_d, &vec![opts.sigma_rtt; rtt_d.len()])));
    }

    let mut senders = rss_senders;
    senders.extend(rtt_senders);
    let mut distances = rss_d;
    distances.extend(rtt_d);
    let dim = senders[0].len();
    let weights = if opts.unweighted { WeightMatrix::unit(distances.len()) } else { WeightMatrix::Diagonal(w) };
    TrilaterationProblem::new(dim, senders, distances, weights).validate_with(opts.clamp)
}

fn diag(w: WeightMatrix) -> Vec<f64> {
    match w {
        WeightMatrix::Diagonal(v) => v,
        WeightMatrix::Full(m) => m.diagonal().iter().copied().collect(),
    }
}
