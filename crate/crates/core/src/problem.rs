//! Problem and solution data model shared by every module.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Smallest distance accepted by the weight formulas, in problem length units.
pub const DEFAULT_CLAMP: f64 = 1e-3;

/// A point in `R^n`.
pub type Point = Vec<f64>;

/// Symmetric positive definite weight matrix `W`.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightMatrix {
    /// Diagonal storage, one weight per measurement.
    Diagonal(Vec<f64>),
    /// Full symmetric storage.
    Full(DMatrix<f64>),
}

impl WeightMatrix {
    /// `W = I` for `m` measurements.
    pub fn unit(m: usize) -> Self {
        WeightMatrix::Diagonal(vec![1.0; m])
    }

    /// Number of measurements the matrix weighs.
    pub fn len(&self) -> usize {
        match self {
            WeightMatrix::Diagonal(w) => w.len(),
            WeightMatrix::Full(w) => w.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
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

    /// Sum of all entries, `Σ_ij w_ij`.
    pub fn total(&self) -> f64 {
        match self {
            WeightMatrix::Diagonal(w) => w.iter().sum(),
            WeightMatrix::Full(w) => w.iter().sum(),
        }
    }

    /// Row sums `W·1`.
    pub fn row_sums(&self) -> Vec<f64> {
        match self {
            WeightMatrix::Diagonal(w) => w.clone(),
            WeightMatrix::Full(w) => w.row_iter().map(|r| r.sum()).collect(),
        }
    }

    /// `W·v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        match self {
            WeightMatrix::Diagonal(w) => w.iter().zip(v).map(|(a, b)| a * b).collect(),
            WeightMatrix::Full(w) => (0..w.nrows())
                .map(|i| (0..w.ncols()).map(|j| w[(i, j)] * v[j]).sum())
                .collect(),
        }
    }

    /// Quadratic form `vᵀ W v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        match self {
            WeightMatrix::Diagonal(w) => w.iter().zip(v).map(|(a, b)| a * b * b).sum(),
            WeightMatrix::Full(_) => self.mul_vec(v).iter().zip(v).map(|(a, b)| a * b).sum(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        match self {
            WeightMatrix::Diagonal(w) => WeightMatrix::Diagonal(w.iter().map(|x| x * c).collect()),
            WeightMatrix::Full(w) => WeightMatrix::Full(w * c),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            WeightMatrix::Diagonal(w) => DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(w)),
            WeightMatrix::Full(w) => w.clone(),
        }
    }

    /// Full matrices whose off-diagonal part is exactly zero are stored diagonally.
    pub fn compact(self) -> Self {
        match self {
            WeightMatrix::Full(w) => {
                let n = w.nrows();
                let off_zero = (0..n).all(|i| (0..n).all(|j| i == j || w[(i, j)] == 0.0));
                if off_zero {
                    WeightMatrix::Diagonal((0..n).map(|i| w[(i, i)]).collect())
                } else {
                    WeightMatrix::Full(w)
                }
            }
            d => d,
        }
    }

    /// Checks finiteness, symmetry and positive definiteness.
    pub fn check(&self) -> Result<()> {
        match self {
            WeightMatrix::Diagonal(w) => {
                for (i, &v) in w.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(Error::NonFiniteInput(format!("weight {i} is {v}")));
                    }
                    if v <= 0.0 {
                        return Err(Error::NonPositiveWeights(format!("weight {i} is {v}")));
                    }
                }
                Ok(())
            }
            WeightMatrix::Full(w) => {
                if w.nrows() != w.ncols() {
                    return Err(Error::DimensionMismatch(format!(
                        "weight matrix is {}x{}",
                        w.nrows(),
                        w.ncols()
                    )));
                }
                if let Some(v) = w.iter().find(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteInput(format!("weight entry {v}")));
                }
                let scale = w.amax();
                let n = w.nrows();
                for i in 0..n {
                    for j in (i + 1)..n {
                        if (w[(i, j)] - w[(j, i)]).abs() > 1e-12 * scale {
                            return Err(Error::NonPositiveWeights(format!(
                                "asymmetric entries ({i},{j})"
                            )));
                        }
                    }
                }
                if w.clone().cholesky().is_none() {
                    return Err(Error::NonPositiveWeights(
                        "Cholesky factorization failed".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Sender positions, distance measurements and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TrilaterationProblem {
    pub dim: usize,
    pub senders: Vec<Point>,
    pub distances: Vec<f64>,
    pub weights: WeightMatrix,
}

impl TrilaterationProblem {
    /// Builds a problem without validation; see [`TrilaterationProblem::validate`].
    pub fn new(dim: usize, senders: Vec<Point>, distances: Vec<f64>, weights: WeightMatrix) -> Self {
        TrilaterationProblem { dim, senders, distances, weights }
    }

    pub fn len(&self) -> usize {
        self.senders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.senders.is_empty()
    }

    /// Validates with the default clamp threshold.
    pub fn validate(&self) -> Result<Self> {
        validate_problem(self)
    }

    pub fn validate_with(&self, clamp: f64) -> Result<Self> {
        validate_problem_with(self, clamp)
    }

    /// Same problem with every sender moved by `f`.
    pub fn map_senders(&self, f: impl Fn(&[f64]) -> Point) -> Self {
        TrilaterationProblem {
            senders: self.senders.iter().map(|s| f(s)).collect(),
            ..self.clone()
        }
    }
}

pub fn validate_problem(p: &TrilaterationProblem) -> Result<TrilaterationProblem> {
    validate_problem_with(p, DEFAULT_CLAMP)
}

/// Checks shapes and values, clamps distances from below by `clamp`.
pub fn validate_problem_with(p: &TrilaterationProblem, clamp: f64) -> Result<TrilaterationProblem> {
    let m = p.senders.len();
    if p.dim == 0 {
        return Err(Error::DimensionMismatch("dimension must be at least 1".into()));
    }
    if m == 0 {
        return Err(Error::DimensionMismatch("at least one sender is required".into()));
    }
    if p.distances.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} senders but {} distances",
            m,
            p.distances.len()
        )));
    }
    if p.weights.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} senders but weight matrix of order {}",
            m,
            p.weights.len()
        )));
    }
    for (j, s) in p.senders.iter().enumerate() {
        if s.len() != p.dim {
            return Err(Error::DimensionMismatch(format!(
                "sender {j} has {} coordinates, expected {}",
                s.len(),
                p.dim
            )));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(format!("sender {j} has a non-finite coordinate")));
        }
    }
    for (j, &d) in p.distances.iter().enumerate() {
        if !d.is_finite() {
            return Err(Error::NonFiniteInput(format!("distance {j} is {d}")));
        }
        if d < 0.0 {
            return Err(Error::NonFiniteInput(format!("distance {j} is negative ({d})")));
        }
    }
    p.weights.check()?;
    Ok(TrilaterationProblem {
        dim: p.dim,
        senders: p.senders.clone(),
        distances: clamp_distances_with(&p.distances, clamp),
        weights: p.weights.clone(),
    })
}

/// `d_j ← max(d_j, 10⁻³)`.
pub fn clamp_distances(d: &[f64]) -> Vec<f64> {
    clamp_distances_with(d, DEFAULT_CLAMP)
}

pub fn clamp_distances_with(d: &[f64], threshold: f64) -> Vec<f64> {
    d.iter().map(|&v| v.max(threshold)).collect()
}

/// Hypersphere of minimizers: points `center + radius·u` with `u` a unit
/// vector in the span of `normal_space`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sphere {
    pub center: Point,
    pub radius: f64,
    /// Orthonormal basis of the kernel of `λI − D`, rotated to problem coordinates.
    pub normal_space: Vec<Point>,
}

impl Sphere {
    /// Some point on the sphere.
    pub fn representative(&self) -> Point {
        match self.normal_space.first() {
            Some(u) => self.center.iter().zip(u).map(|(c, u)| c + self.radius * u).collect(),
            None => self.center.clone(),
        }
    }

    /// Euclidean distance from `x` to the nearest point of the sphere.
    pub fn distance_to(&self, x: &[f64]) -> f64 {
        let v: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let mut proj = vec![0.0; v.len()];
        for u in &self.normal_space {
            let c: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
            for (p, ui) in proj.iter_mut().zip(u) {
                *p += c * ui;
            }
        }
        let pn = norm(&proj);
        let nearest: Vec<f64> = if pn > 0.0 {
            self.center.iter().zip(&proj).map(|(c, p)| c + self.radius * p / pn).collect()
        } else {
            self.representative()
        };
        dist(x, &nearest)
    }
}

/// Classification of the global-minimizer set.
#[derive(Debug, Clone, PartialEq)]
pub enum Minimizers {
    Unique(Point),
    /// Mirrored pair; the positive branch of the square root comes first.
    Pair(Point, Point),
    /// Continuum of minimizers. The geometry is ill-defined for positioning
    /// but the manifold is still reported.
    Sphere(Sphere),
    /// No consistent solution set could be formed.
    IllDefined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionSet {
    pub minimizers: Minimizers,
    /// Largest real eigenvalue, `λ = ‖Qᵀ(x−t)‖²` at every minimizer.
    pub lambda: f64,
    /// Weighted squared-distance cost at a representative minimizer (NaN if none).
    pub cost: f64,
    /// Rank of `λI − D`.
    pub rank: usize,
}

impl SolutionSet {
    pub fn kind(&self) -> &'static str {
        match self.minimizers {
            Minimizers::Unique(_) => "unique",
            Minimizers::Pair(..) => "pair",
            Minimizers::Sphere(_) => "sphere",
            Minimizers::IllDefined => "ill_defined",
        }
    }

    /// True when no finite set of positions can be reported.
    pub fn is_ill_defined(&self) -> bool {
        matches!(self.minimizers, Minimizers::Sphere(_) | Minimizers::IllDefined)
    }

    /// Isolated minimizers (empty for spheres and ill-defined sets).
    pub fn points(&self) -> Vec<&Point> {
        match &self.minimizers {
            Minimizers::Unique(x) => vec![x],
            Minimizers::Pair(a, b) => vec![a, b],
            _ => Vec::new(),
        }
    }

    /// Distance from `truth` to the closest reported minimizer.
    pub fn error_to(&self, truth: &[f64]) -> f64 {
        match &self.minimizers {
            Minimizers::Unique(x) => dist(x, truth),
            Minimizers::Pair(a, b) => dist(a, truth).min(dist(b, truth)),
            Minimizers::Sphere(s) => s.distance_to(truth),
            Minimizers::IllDefined => f64::INFINITY,
        }
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
