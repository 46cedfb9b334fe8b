//! Reference estimators: the unconstrained linear least-squares method and a
//! local refiner for the sum of squared distance residuals.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::{Point, TrilaterationProblem};

/// Least squares on `α − 2sᵀx = d² − sᵀs`, treating `α = xᵀx` as a free unknown.
///
/// Distances are used as given; weights are ignored.
pub fn solve_linear(p: &TrilaterationProblem) -> Result<Point> {
    let (m, n) = (p.len(), p.dim);
    if m < n + 1 {
        return Err(Error::RankDeficient);
    }
    let mut a = DMatrix::zeros(m, n + 1);
    let mut rhs = DVector::zeros(m);
    for (j, (s, d)) in p.senders.iter().zip(&p.distances).enumerate() {
        a[(j, 0)] = 1.0;
        for k in 0..n {
            a[(j, k + 1)] = -2.0 * s[k];
        }
        rhs[j] = d * d - s.iter().map(|v| v * v).sum::<f64>();
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > m as f64 * f64::EPSILON * smax) {
        return Err(Error::RankDeficient);
    }
    let sol = svd.solve(&rhs, 0.0).map_err(|_| Error::RankDeficient)?;
    Ok(sol.rows(1, n).iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlOptions {
    pub max_iterations: usize,
    /// Convergence when `‖Jᵀr‖ ≤ tol`; `None` means `1e-10·m`.
    pub tol: Option<f64>,
    pub initial_damping: f64,
}

impl Default for MlOptions {
    fn default() -> Self {
        MlOptions { max_iterations: 100, tol: None, initial_damping: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlFit {
    pub x: Point,
    pub iterations: usize,
    /// `Σ (‖x − s_j‖ − d_j)²` at `x`.
    pub cost: f64,
    pub gradient_norm: f64,
}

struct Linearization {
    cost: f64,
    jtr: DVector<f64>,
    jtj: DMatrix<f64>,
}

fn ml_cost(x: &[f64], p: &TrilaterationProblem) -> f64 {
    p.senders
        .iter()
        .zip(&p.distances)
        .map(|(s, d)| {
            let r = crate::problem::dist(x, s) - d;
            r * r
        })
        .sum()
}

fn linearize(x: &[f64], p: &TrilaterationProblem) -> Result<Linearization> {
    let n = x.len();
    let mut jtr = DVector::zeros(n);
    let mut jtj = DMatrix::zeros(n, n);
    let mut cost = 0.0;
    for (j, (s, d)) in p.senders.iter().zip(&p.distances).enumerate() {
        let rho = crate::problem::dist(x, s);
        if rho < 1e-12 {
            return Err(Error::NonSmoothPoint { sender: j });
        }
        let r = rho - d;
        cost += r * r;
        let row: Vec<f64> = x.iter().zip(s).map(|(a, b)| (a - b) / rho).collect();
        for a in 0..n {
            jtr[a] += row[a] * r;
            for b in 0..n {
                jtj[(a, b)] += row[a] * row[b];
            }
        }
    }
    Ok(Linearization { cost, jtr, jtj })
}

/// Levenberg-damped Gauss–Newton on the residuals `‖x − s_j‖ − d_j`.
///
/// Accepted steps never increase the objective.
pub fn refine_ml(p: &TrilaterationProblem, x0: &[f64], opts: &MlOptions) -> Result<MlFit> {
    let n = p.dim;
    if x0.len() != n {
        return Err(Error::DimensionMismatch(format!("x0 has {} coordinates, expected {n}", x0.len())));
    }
    let tol = opts.tol.unwrap_or(1e-10 * p.len() as f64);
    let mut x = x0.to_vec();
    let mut lin = linearize(&x, p)?;
    let mut mu = opts.initial_damping;
    let mut iterations = 0;
    loop {
        let gnorm = lin.jtr.norm();
        if gnorm <= tol {
            return Ok(MlFit { x, iterations, cost: lin.cost, gradient_norm: gnorm });
        }
        if iterations >= opts.max_iterations {
            return Err(Error::NoConvergence { iterations });
        }
        iterations += 1;
        let mut accepted = false;
        while mu < 1e16 {
            let mut sys = lin.jtj.clone();
            for k in 0..n {
                sys[(k, k)] += mu * (1.0 + lin.jtj[(k, k)]);
            }
            let step = match sys.cholesky() {
                Some(c) => c.solve(&lin.jtr),
                None => {
                    mu *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - s).collect();
            match linearize(&trial, p) {
                Ok(next) if next.cost < lin.cost => {
                    x = trial;
                    lin = next;
                    mu = (mu / 10.0).max(1e-12);
                    accepted = true;
                    break;
                }
                _ => mu *= 10.0,
            }
        }
        if !accepted {
            // The cost no longer resolves descent; accept if the gradient is at
            // its roundoff floor.
            let gnorm = lin.jtr.norm();
            let scale = lin.jtj.norm().sqrt().max(1.0) * (lin.cost.sqrt() + 1.0);
            if gnorm <= 1e-6 * scale {
                return Ok(MlFit { x, iterations, cost: lin.cost, gradient_norm: gnorm });
            }
            return Err(Error::NoConvergence { iterations });
        }
    }
}

/// The unweighted ML objective `Σ (‖x − s_j‖ − d_j)²`.
pub fn ml_objective(x: &[f64], p: &TrilaterationProblem) -> f64 {
    ml_cost(x, p)
}
