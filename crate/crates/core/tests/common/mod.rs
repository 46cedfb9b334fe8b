//! Shared helpers for integration tests: random instances and an
//! independent brute-force finder for the stationary points of `h`.

#![allow(dead_code)]

use eigentrilat::{TrilaterationProblem, WeightMatrix};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Normal senders, noisy distances to a normal receiver, random positive
/// definite weights (diagonal or dense).
pub fn random_problem(rng: &mut ChaCha8Rng, n: usize, m: usize, dense: bool) -> TrilaterationProblem {
    let x: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
    let senders: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| normal(rng)).collect()).collect();
    let distances: Vec<f64> =
        senders.iter().map(|s| (dist(s, &x) + 0.3 * normal(rng)).abs().max(1e-3)).collect();
    let weights = if dense {
        let b = DMatrix::from_fn(m, m, |_, _| normal(rng));
        let w = &b * b.transpose() + DMatrix::identity(m, m) * 0.1;
        WeightMatrix::Full((&w + w.transpose()) * 0.5)
    } else {
        WeightMatrix::Diagonal((0..m).map(|_| rng.random_range(0.1..3.0)).collect())
    };
    TrilaterationProblem::new(n, senders, distances, weights)
}

fn weight(p: &TrilaterationProblem, i: usize, j: usize) -> f64 {
    match &p.weights {
        WeightMatrix::Diagonal(w) => {
            if i == j {
                w[i]
            } else {
                0.0
            }
        }
        WeightMatrix::Full(w) => w[(i, j)],
    }
}

fn residuals(x: &[f64], p: &TrilaterationProblem) -> Vec<f64> {
    p.senders
        .iter()
        .zip(&p.distances)
        .map(|(s, d)| {
            let r2: f64 = x.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum();
            r2 - d * d
        })
        .collect()
}

/// `Σ_ij w_ij r_i (x − s_j)` evaluated directly from the double sum.
pub fn raw_gradient(x: &[f64], p: &TrilaterationProblem) -> Vec<f64> {
    let r = residuals(x, p);
    let m = p.len();
    let mut g = vec![0.0; x.len()];
    for i in 0..m {
        for j in 0..m {
            let w = weight(p, i, j);
            for k in 0..x.len() {
                g[k] += w * r[i] * (x[k] - p.senders[j][k]);
            }
        }
    }
    g
}

/// `Σ_ij w_ij [2 (x − s_j)(x − s_i)ᵀ + r_i I]`.
pub fn raw_hessian(x: &[f64], p: &TrilaterationProblem) -> DMatrix<f64> {
    let n = x.len();
    let r = residuals(x, p);
    let m = p.len();
    let mut h = DMatrix::zeros(n, n);
    for i in 0..m {
        for j in 0..m {
            let w = weight(p, i, j);
            if w == 0.0 {
                continue;
            }
            for a in 0..n {
                for b in 0..n {
                    h[(a, b)] += 2.0 * w * (x[a] - p.senders[j][a]) * (x[b] - p.senders[i][b]);
                }
                h[(a, a)] += w * r[i];
            }
        }
    }
    h
}

pub fn raw_cost(x: &[f64], p: &TrilaterationProblem) -> f64 {
    let r = residuals(x, p);
    let m = p.len();
    let mut c = 0.0;
    for i in 0..m {
        for j in 0..m {
            c += weight(p, i, j) * r[i] * r[j];
        }
    }
    0.25 * c
}

fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

/// Real roots of `c[0] + c[1]x + c[2]x² + c[3]x³` with `c[3] > 0`.
fn cubic_roots(c: [f64; 4]) -> Vec<f64> {
    let bound = 1.0 + (c[0].abs().max(c[1].abs()).max(c[2].abs())) / c[3];
    // Critical points split the line into monotone pieces.
    let (qa, qb, qc) = (3.0 * c[3], 2.0 * c[2], c[1]);
    let disc = qb * qb - 4.0 * qa * qc;
    let mut knots = vec![-bound];
    if disc > 0.0 {
        let sq = disc.sqrt();
        let mut r = [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)];
        r.sort_by(f64::total_cmp);
        knots.extend(r);
    }
    knots.push(bound);
    let scale = c.iter().fold(0.0f64, |a, v| a.max(v.abs())) * bound.powi(3);
    let mut roots: Vec<f64> = Vec::new();
    for w in knots.windows(2) {
        let (mut lo, mut hi) = (w[0], w[1]);
        let (flo, fhi) = (poly_eval(&c, lo), poly_eval(&c, hi));
        if flo == 0.0 {
            roots.push(lo);
            continue;
        }
        if flo.signum() == fhi.signum() {
            continue;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if poly_eval(&c, mid).signum() == flo.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        roots.push(0.5 * (lo + hi));
    }
    // Tangential roots sit at the critical points.
    for &k in &knots[1..knots.len() - 1] {
        if poly_eval(&c, k).abs() <= 1e-12 * scale.max(1.0) {
            roots.push(k);
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + b.abs()));
    roots
}

/// Stationary points of `h` for `n = 1` from the cubic `h'(x)`.
fn oracle_1d(p: &TrilaterationProblem) -> Vec<Vec<f64>> {
    // r_i(x)(x − s_j) = (x² − 2s_i x + s_i² − d_i²)(x − s_j)
    let m = p.len();
    let mut c = [0.0; 4];
    for i in 0..m {
        for j in 0..m {
            let w = weight(p, i, j);
            let (si, sj, di) = (p.senders[i][0], p.senders[j][0], p.distances[i]);
            let e = si * si - di * di;
            c[3] += w;
            c[2] += w * (-sj - 2.0 * si);
            c[1] += w * (2.0 * si * sj + e);
            c[0] += w * (-e * sj);
        }
    }
    cubic_roots(c).into_iter().map(|r| vec![r]).collect()
}

/// Stationary points of `h` for `n = 2` by Newton's method from a dense grid of seeds.
fn oracle_2d(p: &TrilaterationProblem) -> Vec<Vec<f64>> {
    let m = p.len();
    let mut total = 0.0;
    let mut t = [0.0; 2];
    for i in 0..m {
        for j in 0..m {
            let w = weight(p, i, j);
            total += w;
            t[0] += w * p.senders[i][0];
            t[1] += w * p.senders[i][1];
        }
    }
    t[0] /= total;
    t[1] /= total;
    // In shifted coordinates the gradient is |z|²z − Az + g, so
    // |z|³ ≤ ‖A‖|z| + ‖g‖ bounds every stationary point.
    let a = raw_hessian(&t, p) / -total;
    let g = DVector::from_vec(raw_gradient(&t, p)) / total;
    let anorm = a.norm();
    let radius = (2.0 * anorm).sqrt().max((2.0 * g.norm()).cbrt()) * 1.05 + 1e-3;

    let grad_scale = total * (radius.powi(3) + anorm * radius + g.norm()).max(1e-300);
    let steps = 60;
    let mut found: Vec<Vec<f64>> = Vec::new();
    for ix in 0..=steps {
        for iy in 0..=steps {
            let mut x = vec![
                t[0] - radius + 2.0 * radius * ix as f64 / steps as f64,
                t[1] - radius + 2.0 * radius * iy as f64 / steps as f64,
            ];
            let mut converged = false;
            for _ in 0..60 {
                let gr = DVector::from_vec(raw_gradient(&x, p));
                if gr.norm() <= 1e-13 * grad_scale {
                    converged = true;
                    break;
                }
                let h = raw_hessian(&x, p);
                let Some(step) = h.lu().solve(&gr) else { break };
                let len = step.norm();
                let cap = 0.25 * radius;
                let f = if len > cap { cap / len } else { 1.0 };
                x[0] -= f * step[0];
                x[1] -= f * step[1];
                if (x[0] - t[0]).hypot(x[1] - t[1]) > 3.0 * radius {
                    break;
                }
                if len <= 1e-15 * (1.0 + radius) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                continue;
            }
            let gr = DVector::from_vec(raw_gradient(&x, p));
            if gr.norm() > 1e-9 * grad_scale {
                continue;
            }
            if !found.iter().any(|y| dist(y, &x) <= 1e-7 * (1.0 + radius)) {
                found.push(x);
            }
        }
    }
    found
}

/// All real stationary points of the weighted cost for `n ∈ {1, 2}`.
pub fn oracle_stationary_points(p: &TrilaterationProblem) -> Vec<Vec<f64>> {
    match p.dim {
        1 => oracle_1d(p),
        2 => oracle_2d(p),
        n => panic!("oracle supports n = 1, 2; got {n}"),
    }
}

/// Central differences of `f` with relative step `h`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let step = h * (1.0 + x[k].abs());
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[k] += step;
            b[k] -= step;
            (f(&a) - f(&b)) / (a[k] - b[k])
        })
        .collect()
}

#[cfg(test)]
mod self_checks {
    use super::*;

    #[test]
    fn cubic_known_roots() {
        // (x − 1)(x + 2)(x − 3) = x³ − 2x² − 5x + 6
        let r = cubic_roots([6.0, -5.0, -2.0, 1.0]);
        assert_eq!(r.len(), 3);
        for (a, b) in r.iter().zip([-2.0, 1.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        // x³ + x has one real root
        let r = cubic_roots([0.0, 1.0, 0.0, 1.0]);
        assert!(r.len() == 1 && r[0].abs() < 1e-12);
    }
}
