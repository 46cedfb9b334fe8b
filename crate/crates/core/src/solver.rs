//! Global minimization of the weighted squared-distance cost.
//!
//! With weights normalized to unit sum and senders translated by
//! `t = Σ_ij w_ij s_i`, the gradient reads `∇h(x) = (xᵀx)x − Ax + g`.
//! Rotating into the eigenbasis of `A` (`y = Qᵀx`, `D = QᵀAQ`, `b = Qᵀg`)
//! every stationary point satisfies `M·(y², y, 1) = (yᵀy)·(y², y, 1)` for
//!
//! ```text
//!     ⎡ D   −diag(b)   0 ⎤
//! M = ⎢ 0      D      −b ⎥
//!     ⎣ 1ᵀ     0ᵀ      0 ⎦
//! ```
//!
//! and the global minimizers are exactly the stationary points with
//! `yᵀy = λ_max`, the largest real eigenvalue of `M`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::problem::{Minimizers, Point, SolutionSet, Sphere, TrilaterationProblem, WeightMatrix};
use crate::smalleig::{all_eigenvalues, shifted_diag_rank, sym_eig, DEFAULT_IMAG_TOL};

/// Numerical tolerances for the solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Lower clamp on distances applied at validation.
    pub clamp: f64,
    /// `|λ − D_kk| ≤ rank_tol·max(1, |λ|)` marks a singular direction.
    pub rank_tol: f64,
    /// Relative imaginary-part tolerance for real eigenvalues.
    pub imag_tol: f64,
    /// Negative radicands above `−radicand_tol·(1+λ)` are roundoff and clamped to zero.
    pub radicand_tol: f64,
    /// Singular components of `b` must satisfy `|b_k| ≤ consistency_tol·‖b‖`.
    pub consistency_tol: f64,
    /// Solution spheres with `radius ≤ collapse_tol·√(1+λ)` collapse to their center.
    pub collapse_tol: f64,
    /// Condition estimate above which the simplified solver reports `NearSingular`.
    pub max_condition: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            clamp: crate::problem::DEFAULT_CLAMP,
            rank_tol: 1e-8,
            imag_tol: DEFAULT_IMAG_TOL,
            radicand_tol: 1e-8,
            consistency_tol: 1e-8,
            collapse_tol: 1e-6,
            max_condition: 1e12,
        }
    }
}

/// Reduced problem data: `∇h(x) = Σw·[(zᵀz)z − Az + g]` with `z = x − t`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalData {
    pub a: DMatrix<f64>,
    pub g: DVector<f64>,
    pub t: DVector<f64>,
    /// `Σ_ij w_ij` before normalization.
    pub weight_total: f64,
}

/// `A = Q·diag(dvals)·Qᵀ` with `dvals` descending, and `b = Qᵀg`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    pub q: DMatrix<f64>,
    pub dvals: Vec<f64>,
    pub b: DVector<f64>,
}

impl SpectralData {
    pub fn dim(&self) -> usize {
        self.dvals.len()
    }

    /// Maps rotated, translated coordinates back: `x = Qy + t`.
    pub fn to_problem_coords(&self, y: &[f64], t: &DVector<f64>) -> Point {
        (&self.q * DVector::from_column_slice(y) + t).as_slice().to_vec()
    }
}

pub fn build_normal_data(p: &TrilaterationProblem) -> NormalData {
    let n = p.dim;
    let total = p.weights.total();
    let u: Vec<f64> = p.weights.row_sums().iter().map(|w| w / total).collect();

    let mut t = DVector::zeros(n);
    for (s, ui) in p.senders.iter().zip(&u) {
        for k in 0..n {
            t[k] += ui * s[k];
        }
    }
    // Translated senders, row-major m×n.
    let m = p.len();
    let mut z = vec![0.0; m * n];
    let mut e = vec![0.0; m];
    for (j, (s, d)) in p.senders.iter().zip(&p.distances).enumerate() {
        let row = &mut z[j * n..(j + 1) * n];
        let mut sq = 0.0;
        for k in 0..n {
            row[k] = s[k] - t[k];
            sq += row[k] * row[k];
        }
        e[j] = d * d - sq;
    }
    let zr = |j: usize| &z[j * n..(j + 1) * n];

    let mut a = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    let c = match &p.weights {
        WeightMatrix::Diagonal(w) => {
            let mut c = 0.0;
            for j in 0..m {
                let wj = w[j] / total;
                let s = zr(j);
                c += wj * e[j];
                for r in 0..n {
                    g[r] += wj * e[j] * s[r];
                    for col in 0..=r {
                        a[(r, col)] -= 2.0 * wj * s[r] * s[col];
                    }
                }
            }
            c
        }
        WeightMatrix::Full(w) => {
            for j in 0..m {
                let vj: f64 = (0..m).map(|i| w[(i, j)] * e[i]).sum::<f64>() / total;
                for r in 0..n {
                    g[r] += vj * zr(j)[r];
                }
            }
            for i in 0..m {
                for j in 0..m {
                    let wij = w[(i, j)] / total;
                    if wij == 0.0 {
                        continue;
                    }
                    let (si, sj) = (zr(i), zr(j));
                    for r in 0..n {
                        for col in 0..=r {
                            a[(r, col)] -= wij * (sj[r] * si[col] + si[r] * sj[col]);
                        }
                    }
                }
            }
            u.iter().zip(&e).map(|(ui, ei)| ui * ei).sum()
        }
    };
    for r in 0..n {
        a[(r, r)] += c;
    }
    for r in 0..n {
        for col in 0..r {
            a[(col, r)] = a[(r, col)];
        }
    }
    NormalData { a, g, t, weight_total: total }
}

pub fn spectral_data(nd: &NormalData) -> Result<SpectralData> {
    let eig = sym_eig(&nd.a)?;
    let b = eig.rotation.transpose() * &nd.g;
    Ok(SpectralData { q: eig.rotation, dvals: eig.values, b })
}

/// The `(2n+1)×(2n+1)` matrix whose eigenvalues are `yᵀy` at stationary points.
pub fn build_m(sd: &SpectralData) -> DMatrix<f64> {
    let n = sd.dim();
    let mut m = DMatrix::zeros(2 * n + 1, 2 * n + 1);
    for k in 0..n {
        m[(k, k)] = sd.dvals[k];
        m[(k, n + k)] = -sd.b[k];
        m[(n + k, n + k)] = sd.dvals[k];
        m[(n + k, 2 * n)] = -sd.b[k];
        m[(2 * n, k)] = 1.0;
    }
    m
}

/// Rotated variant `[[D, I, 0], [0, D, −b], [−bᵀ, 0ᵀ, 0]]`, similar to [`build_ma`].
pub fn build_md(sd: &SpectralData) -> DMatrix<f64> {
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(&sd.dvals));
    block_matrix(&d, &sd.b)
}

/// `[[A, I, 0], [0, A, −g], [−gᵀ, 0ᵀ, 0]]`; same eigenvalues as [`build_m`].
pub fn build_ma(nd: &NormalData) -> DMatrix<f64> {
    block_matrix(&nd.a, &nd.g)
}

fn block_matrix(a: &DMatrix<f64>, g: &DVector<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(2 * n + 1, 2 * n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(a);
    m.view_mut((n, n), (n, n)).copy_from(a);
    for k in 0..n {
        m[(k, n + k)] = 1.0;
        m[(n + k, 2 * n)] = -g[k];
        m[(2 * n, k)] = -g[k];
    }
    m
}

/// Largest real eigenvalue of `M`, `M_D` or `M_A`.
///
/// The rightmost eigenvalue of these matrices is real, so its real part is
/// taken even when roundoff leaves a small imaginary part (as happens near
/// multiple eigenvalues in degenerate geometry).
fn lambda_max(mat: &DMatrix<f64>) -> Result<f64> {
    Ok(all_eigenvalues(mat)?.rightmost().0)
}

/// Minimizers in rotated coordinates together with `λ_max` and the rank of `λI − D`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSolution {
    pub minimizers: Minimizers,
    pub lambda: f64,
    pub rank: usize,
}

/// Global minimizers of `f(y) = h(Qy + t)` from spectral data alone.
pub fn solve_spectral(sd: &SpectralData, opts: &SolverOptions) -> Result<SpectralSolution> {
    let n = sd.dim();
    let lambda = lambda_max(&build_m(sd))?;
    let rank = shifted_diag_rank(lambda, &sd.dvals, opts.rank_tol);
    let singular: Vec<bool> = sd
        .dvals
        .iter()
        .map(|d| (lambda - d).abs() <= opts.rank_tol * lambda.abs().max(1.0))
        .collect();

    let ill = |rank| SpectralSolution { minimizers: Minimizers::IllDefined, lambda, rank };
    let radicand_floor = -opts.radicand_tol * (1.0 + lambda.abs());
    let collapse = opts.collapse_tol * (1.0 + lambda.abs()).sqrt();

    if rank == n {
        // Reconstruct through the norm constraint even at full rank; the
        // sign of the leading coordinate opposes b₁.
        let mut y = vec![0.0; n];
        let mut rest = 0.0;
        for k in 1..n {
            y[k] = -sd.b[k] / (lambda - sd.dvals[k]);
            rest += y[k] * y[k];
        }
        let rad = lambda - rest;
        if rad < radicand_floor {
            return Ok(ill(rank));
        }
        let sign = if sd.b[0] > 0.0 { -1.0 } else { 1.0 };
        y[0] = sign * rad.max(0.0).sqrt();
        return Ok(SpectralSolution { minimizers: Minimizers::Unique(y), lambda, rank });
    }

    // A single singular direction yields the mirrored pair as is; larger
    // kernels only describe a sphere when the shifted system is consistent.
    let bnorm = sd.b.norm();
    let consistent = (0..n)
        .filter(|&k| singular[k])
        .all(|k| sd.b[k].abs() <= opts.consistency_tol * bnorm);
    if rank + 1 < n && !consistent {
        return Ok(ill(rank));
    }
    let mut center = vec![0.0; n];
    let mut norm2 = 0.0;
    for k in 0..n {
        if !singular[k] {
            center[k] = -sd.b[k] / (lambda - sd.dvals[k]);
            norm2 += center[k] * center[k];
        }
    }
    let rad = lambda - norm2;
    if rad < radicand_floor {
        return Ok(ill(rank));
    }
    let radius = rad.max(0.0).sqrt();
    if radius <= collapse {
        return Ok(SpectralSolution { minimizers: Minimizers::Unique(center), lambda, rank });
    }
    let kernel: Vec<usize> = (0..n).filter(|&k| singular[k]).collect();
    let minimizers = if rank + 1 == n {
        let k = kernel[0];
        let mut plus = center.clone();
        plus[k] = radius;
        let mut minus = center;
        minus[k] = -radius;
        Minimizers::Pair(plus, minus)
    } else {
        let normal_space = kernel
            .iter()
            .map(|&k| {
                let mut e = vec![0.0; n];
                e[k] = 1.0;
                e
            })
            .collect();
        Minimizers::Sphere(Sphere { center, radius, normal_space })
    };
    Ok(SpectralSolution { minimizers, lambda, rank })
}

fn rotate_back(min: Minimizers, sd: &SpectralData, t: &DVector<f64>) -> Minimizers {
    match min {
        Minimizers::Unique(y) => Minimizers::Unique(sd.to_problem_coords(&y, t)),
        Minimizers::Pair(a, b) => {
            Minimizers::Pair(sd.to_problem_coords(&a, t), sd.to_problem_coords(&b, t))
        }
        Minimizers::Sphere(s) => {
            let zero = DVector::zeros(sd.dim());
            Minimizers::Sphere(Sphere {
                center: sd.to_problem_coords(&s.center, t),
                radius: s.radius,
                normal_space: s.normal_space.iter().map(|u| sd.to_problem_coords(u, &zero)).collect(),
            })
        }
        Minimizers::IllDefined => Minimizers::IllDefined,
    }
}

/// Global minimizer set of the weighted squared-distance cost. Expects a validated problem.
pub fn solve(p: &TrilaterationProblem, opts: &SolverOptions) -> Result<SolutionSet> {
    let nd = build_normal_data(p);
    let sd = spectral_data(&nd)?;
    let sol = solve_spectral(&sd, opts)?;
    let minimizers = rotate_back(sol.minimizers, &sd, &nd.t);
    let cost = match &minimizers {
        Minimizers::Unique(x) | Minimizers::Pair(x, _) => cost_h(x, p),
        Minimizers::Sphere(s) => cost_h(&s.representative(), p),
        Minimizers::IllDefined => f64::NAN,
    };
    Ok(SolutionSet { minimizers, lambda: sol.lambda, cost, rank: sol.rank })
}

/// Simplified solver: `x = −(λI − A)⁻¹g + t` with `λ` from `M_A`.
///
/// Fails with `NearSingular` in (or close to) degenerate geometry, where
/// [`solve`] should be used instead.
pub fn solve_simple(p: &TrilaterationProblem, opts: &SolverOptions) -> Result<Point> {
    let nd = build_normal_data(p);
    let lambda = lambda_max(&build_ma(&nd))?;
    let n = p.dim;
    let shifted = DMatrix::identity(n, n) * lambda - &nd.a;
    let inv = shifted
        .clone()
        .try_inverse()
        .ok_or(Error::NearSingular { condition: f64::INFINITY })?;
    // Relative to the magnitudes that cancel in λI − A.
    let scale = shifted.lp_norm(1).max(nd.a.lp_norm(1)).max(lambda.abs());
    let condition = inv.lp_norm(1) * scale;
    if !condition.is_finite() || condition > opts.max_condition {
        return Err(Error::NearSingular { condition });
    }
    let x = -(inv * &nd.g) + &nd.t;
    Ok(x.as_slice().to_vec())
}

/// Stationary points of `f(y)` sharing `yᵀy = λ`.
#[derive(Debug, Clone, PartialEq)]
pub enum StationarySet {
    Unique { y: Vec<f64> },
    /// `y_p + y_h` for `y_h` in the span of the coordinate axes `kernel`
    /// with `‖y_h‖ = radius`.
    Sphere { center: Vec<f64>, radius: f64, kernel: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPoint {
    pub lambda: f64,
    pub set: StationarySet,
}

impl StationaryPoint {
    /// Isolated points in rotated coordinates (spheres of dimension ≥ 1 yield none).
    pub fn isolated(&self) -> Vec<Vec<f64>> {
        match &self.set {
            StationarySet::Unique { y } => vec![y.clone()],
            StationarySet::Sphere { center, radius, kernel } => {
                if *radius == 0.0 {
                    vec![center.clone()]
                } else if kernel.len() == 1 {
                    let mut a = center.clone();
                    let mut b = center.clone();
                    a[kernel[0]] += radius;
                    b[kernel[0]] -= radius;
                    vec![a, b]
                } else {
                    Vec::new()
                }
            }
        }
    }
}

/// All real stationary points, one entry per distinct real eigenvalue of `M`.
pub fn stationary_points(sd: &SpectralData, opts: &SolverOptions) -> Result<Vec<StationaryPoint>> {
    let n = sd.dim();
    let ev = all_eigenvalues(&build_m(sd))?;
    let mut lambdas = ev.real_values(opts.imag_tol);
    let rightmost = ev.rightmost().0;
    if lambdas.first().is_none_or(|&l| l < rightmost) {
        lambdas.insert(0, rightmost);
    }
    let mut distinct: Vec<f64> = Vec::new();
    for l in lambdas {
        if distinct.last().is_none_or(|&p: &f64| (p - l).abs() > 1e-7 * (1.0 + l.abs())) {
            distinct.push(l);
        }
    }
    let bnorm = sd.b.norm();
    let mut out = Vec::new();
    for lambda in distinct {
        let tol = opts.rank_tol * lambda.abs().max(1.0);
        let singular: Vec<usize> = (0..n).filter(|&k| (lambda - sd.dvals[k]).abs() <= tol).collect();
        if singular.is_empty() {
            let y = (0..n).map(|k| -sd.b[k] / (lambda - sd.dvals[k])).collect();
            out.push(StationaryPoint { lambda, set: StationarySet::Unique { y } });
            continue;
        }
        if singular.iter().any(|&k| sd.b[k].abs() > opts.consistency_tol * bnorm) {
            continue;
        }
        let center: Vec<f64> = (0..n)
            .map(|k| if singular.contains(&k) { 0.0 } else { -sd.b[k] / (lambda - sd.dvals[k]) })
            .collect();
        let rad = lambda - center.iter().map(|v| v * v).sum::<f64>();
        if rad < -opts.radicand_tol * (1.0 + lambda.abs()) {
            continue;
        }
        out.push(StationaryPoint {
            lambda,
            set: StationarySet::Sphere { center, radius: rad.max(0.0).sqrt(), kernel: singular },
        });
    }
    Ok(out)
}

fn sq_residuals(x: &[f64], p: &TrilaterationProblem) -> Vec<f64> {
    p.senders
        .iter()
        .zip(&p.distances)
        .map(|(s, d)| x.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() - d * d)
        .collect()
}

/// `h(x) = ¼ Σ_ij w_ij (‖x−s_i‖² − d_i²)(‖x−s_j‖² − d_j²)`.
pub fn cost_h(x: &[f64], p: &TrilaterationProblem) -> f64 {
    0.25 * p.weights.quad_form(&sq_residuals(x, p))
}

/// `∇h(x) = Σ_ij w_ij (‖x−s_i‖² − d_i²)(x − s_j)`.
pub fn gradient_h(x: &[f64], p: &TrilaterationProblem) -> Vec<f64> {
    let r = sq_residuals(x, p);
    let v = p.weights.mul_vec(&r);
    let mut grad = vec![0.0; x.len()];
    for (s, vj) in p.senders.iter().zip(&v) {
        for k in 0..x.len() {
            grad[k] += vj * (x[k] - s[k]);
        }
    }
    grad
}

/// Removes known receiver coordinates, giving a problem of dimension `n − k`
/// with `(d'_j)² = d_j² − ‖x'' − s''_j‖²` (negative values clamped to zero).
pub fn reduce_known_coordinates(
    p: &TrilaterationProblem,
    known: &BTreeMap<usize, f64>,
) -> Result<TrilaterationProblem> {
    if let Some((&idx, _)) = known.iter().find(|(&i, _)| i >= p.dim) {
        return Err(Error::DimensionMismatch(format!(
            "known coordinate {idx} out of range for dimension {}",
            p.dim
        )));
    }
    if known.len() >= p.dim {
        return Err(Error::AllCoordinatesKnown);
    }
    let mut senders = Vec::with_capacity(p.len());
    let mut distances = Vec::with_capacity(p.len());
    for (s, d) in p.senders.iter().zip(&p.distances) {
        let off: f64 = known.iter().map(|(&i, &v)| (v - s[i]) * (v - s[i])).sum();
        distances.push((d * d - off).max(0.0).sqrt());
        senders.push(
            s.iter().enumerate().filter(|(i, _)| !known.contains_key(i)).map(|(_, v)| *v).collect(),
        );
    }
    Ok(TrilaterationProblem {
        dim: p.dim - known.len(),
        senders,
        distances,
        weights: p.weights.clone(),
    })
}

fn embed(reduced: &[f64], known: &BTreeMap<usize, f64>, dim: usize, fill_known: bool) -> Point {
    let mut it = reduced.iter();
    (0..dim)
        .map(|i| match known.get(&i) {
            Some(&v) => {
                if fill_known {
                    v
                } else {
                    0.0
                }
            }
            None => *it.next().expect("reduced point has n−k coordinates"),
        })
        .collect()
}

/// Solves with some receiver coordinates fixed and embeds the result back into `R^n`.
pub fn solve_with_known(
    p: &TrilaterationProblem,
    known: &BTreeMap<usize, f64>,
    opts: &SolverOptions,
) -> Result<SolutionSet> {
    if known.is_empty() {
        return solve(p, opts);
    }
    let reduced = reduce_known_coordinates(p, known)?;
    let sol = solve(&reduced, opts)?;
    let n = p.dim;
    let minimizers = match sol.minimizers {
        Minimizers::Unique(x) => Minimizers::Unique(embed(&x, known, n, true)),
        Minimizers::Pair(a, b) => {
            Minimizers::Pair(embed(&a, known, n, true), embed(&b, known, n, true))
        }
        Minimizers::Sphere(s) => Minimizers::Sphere(Sphere {
            center: embed(&s.center, known, n, true),
            radius: s.radius,
            normal_space: s.normal_space.iter().map(|u| embed(u, known, n, false)).collect(),
        }),
        Minimizers::IllDefined => Minimizers::IllDefined,
    };
    let cost = match &minimizers {
        Minimizers::Unique(x) | Minimizers::Pair(x, _) => cost_h(x, p),
        Minimizers::Sphere(s) => cost_h(&s.representative(), p),
        Minimizers::IllDefined => f64::NAN,
    };
    Ok(SolutionSet { minimizers, lambda: sol.lambda, cost, rank: sol.rank })
}
