//! Weight matrices from noise models.
//!
//! Each measurement `j` has a normalization transformation `Ψ_j` that makes
//! the noise on `Ψ_j(d_j²)` Gaussian. Linearizing `Ψ_j` at the measured
//! squared distance gives `w_ij = Ψ'_i(d_i²) P_ij Ψ'_j(d_j²)`.

use std::f64::consts::LN_10;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::problem::{TrilaterationProblem, WeightMatrix};

/// Measurement noise model. Standard deviations are folded into `Ψ`, so a
/// per-measurement `σ` scales the corresponding residual by `1/σ`.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    /// Additive Gaussian noise on distances (TOA, RTT). `Ψ_j(z) = √z / σ_j`.
    GaussianDistance { sigma: Vec<f64> },
    /// Log-normal distances from RSS through the log-distance path loss model.
    /// `Ψ_j(z) = 5 η_j log₁₀(z) / σ_rss`.
    LogNormalRss { eta: Vec<f64>, c0: Vec<f64>, sigma_rss: f64 },
    /// Caller-supplied derivatives `Ψ'_j(d_j²)`.
    CustomPsi { psi_prime_at_d2: Vec<f64> },
    /// `Ψ_j(z) = z`; plain squared-distance least squares.
    Unit,
}

impl NoiseModel {
    /// Gaussian distance noise with one `σ` shared by `m` measurements.
    pub fn gaussian_shared(sigma: f64, m: usize) -> Self {
        NoiseModel::GaussianDistance { sigma: vec![sigma; m] }
    }

    pub fn check(&self, m: usize) -> Result<()> {
        let len_ok = |v: &Vec<f64>, what: &str| {
            if v.len() != m {
                Err(Error::DimensionMismatch(format!("{what} has {} entries, expected {m}", v.len())))
            } else {
                Ok(())
            }
        };
        let positive = |v: &[f64], what: &str| {
            if let Some(x) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                Err(Error::NonFiniteInput(format!("{what} must be positive and finite, got {x}")))
            } else {
                Ok(())
            }
        };
        match self {
            NoiseModel::GaussianDistance { sigma } => {
                len_ok(sigma, "sigma")?;
                positive(sigma, "sigma")
            }
            NoiseModel::LogNormalRss { eta, c0, sigma_rss } => {
                len_ok(eta, "eta")?;
                len_ok(c0, "c0")?;
                positive(eta, "eta")?;
                positive(&[*sigma_rss], "sigma_rss")?;
                if c0.iter().any(|c| !c.is_finite()) {
                    return Err(Error::NonFiniteInput("c0 must be finite".into()));
                }
                Ok(())
            }
            NoiseModel::CustomPsi { psi_prime_at_d2 } => {
                len_ok(psi_prime_at_d2, "psi_prime")?;
                if let Some(x) = psi_prime_at_d2.iter().find(|x| !x.is_finite()) {
                    return Err(Error::NonFiniteInput(format!("psi' value {x}")));
                }
                if psi_prime_at_d2.iter().any(|&x| x == 0.0) {
                    return Err(Error::NonPositiveWeights("psi' vanishes at a measurement".into()));
                }
                Ok(())
            }
            NoiseModel::Unit => Ok(()),
        }
    }

    /// `Ψ'_j(d_j²)` for every measurement, given (clamped) distances.
    pub fn psi_prime(&self, distances: &[f64]) -> Result<Vec<f64>> {
        self.check(distances.len())?;
        Ok(match self {
            NoiseModel::GaussianDistance { sigma } => {
                distances.iter().zip(sigma).map(|(d, s)| 1.0 / (2.0 * s * d)).collect()
            }
            NoiseModel::LogNormalRss { eta, sigma_rss, .. } => distances
                .iter()
                .zip(eta)
                .map(|(d, e)| 5.0 * e / (sigma_rss * d * d * LN_10))
                .collect(),
            NoiseModel::CustomPsi { psi_prime_at_d2 } => psi_prime_at_d2.clone(),
            NoiseModel::Unit => vec![1.0; distances.len()],
        })
    }

    /// Full transformation `Ψ_j(z)`, when the model defines one.
    pub fn psi(&self, j: usize, z: f64) -> Option<f64> {
        match self {
            NoiseModel::GaussianDistance { sigma } => Some(z.sqrt() / sigma[j]),
            NoiseModel::LogNormalRss { eta, sigma_rss, .. } => {
                Some(5.0 * eta[j] * z.log10() / sigma_rss)
            }
            NoiseModel::CustomPsi { .. } => None,
            NoiseModel::Unit => Some(z),
        }
    }

    /// Diagonal weight matrix (`P = I`) for the given distances.
    pub fn weights(&self, distances: &[f64]) -> Result<WeightMatrix> {
        let pp = self.psi_prime(distances)?;
        Ok(WeightMatrix::Diagonal(pp.iter().map(|v| v * v).collect()))
    }
}

/// `w_jj = 1/(4 σ_j² d_j²)`.
pub fn weights_toa(d: &[f64], sigma: &[f64]) -> WeightMatrix {
    WeightMatrix::Diagonal(d.iter().zip(sigma).map(|(d, s)| 1.0 / (4.0 * s * s * d * d)).collect())
}

/// Squared distance implied by an RSS reading: `10^((c0 − C)/(5η))`.
pub fn rss_to_distance_squared(rss: f64, c0: f64, eta: f64) -> f64 {
    10f64.powf((c0 - rss) / (5.0 * eta))
}

/// `w_jj = (5η_j / (σ_rss d_j² ln 10))²`.
pub fn weights_rss(d2: &[f64], eta: &[f64], sigma_rss: f64) -> WeightMatrix {
    WeightMatrix::Diagonal(
        d2.iter()
            .zip(eta)
            .map(|(d2, e)| {
                let v = 5.0 * e / (sigma_rss * d2 * LN_10);
                v * v
            })
            .collect(),
    )
}

/// `w_ij = Ψ'_i P_ij Ψ'_j`; stored diagonally when `P` is diagonal.
pub fn build_weight_matrix(psi_prime: &[f64], p: &DMatrix<f64>) -> Result<WeightMatrix> {
    let m = psi_prime.len();
    if p.nrows() != m || p.ncols() != m {
        return Err(Error::DimensionMismatch(format!(
            "P is {}x{}, expected {m}x{m}",
            p.nrows(),
            p.ncols()
        )));
    }
    WeightMatrix::Full(p.clone()).check()?;
    if psi_prime.iter().any(|&v| v == 0.0 || !v.is_finite()) {
        return Err(Error::NonPositiveWeights("psi' must be finite and nonzero".into()));
    }
    let w = DMatrix::from_fn(m, m, |i, j| psi_prime[i] * p[(i, j)] * psi_prime[j]);
    let w = WeightMatrix::Full(w).compact();
    w.check()?;
    Ok(w)
}

/// Exact normalized residuals `r_j(x) = Ψ_j(‖x−s_j‖²) − Ψ_j(d_j²)`.
pub fn residuals(x: &[f64], p: &TrilaterationProblem, model: &NoiseModel) -> Result<Vec<f64>> {
    model.check(p.len())?;
    p.senders
        .iter()
        .zip(&p.distances)
        .enumerate()
        .map(|(j, (s, d))| {
            let z: f64 = x.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum();
            match (model.psi(j, z), model.psi(j, d * d)) {
                (Some(a), Some(b)) => Ok(a - b),
                _ => Err(Error::NonFiniteInput(
                    "noise model does not define a full transformation".into(),
                )),
            }
        })
        .collect()
}

/// `h₀(x) = r(x)ᵀ P r(x)`; `P = None` means identity.
pub fn eval_h0(
    x: &[f64],
    p: &TrilaterationProblem,
    model: &NoiseModel,
    precision: Option<&DMatrix<f64>>,
) -> Result<f64> {
    let r = residuals(x, p, model)?;
    Ok(match precision {
        None => r.iter().map(|v| v * v).sum(),
        Some(pm) => {
            let m = r.len();
            (0..m).map(|i| (0..m).map(|j| r[i] * pm[(i, j)] * r[j]).sum::<f64>()).sum()
        }
    })
}
