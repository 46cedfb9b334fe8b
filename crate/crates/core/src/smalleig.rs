//! Dense eigen routines for the small matrices produced by the solver.
//!
//! Symmetric matrices use cyclic Jacobi sweeps. General matrices are
//! balanced, reduced to upper Hessenberg form with Householder reflections
//! and then deflated with the implicitly shifted double-step QR iteration.
//! Orders in practice are `n ≤ 3` and `2n+1 ≤ 7`.

use std::cmp::Ordering;
use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default relative tolerance on the imaginary part for an eigenvalue to count as real.
pub const DEFAULT_IMAG_TOL: f64 = 1e-8;

/// Symmetric eigendecomposition `S = Q·diag(values)·Qᵀ`, values descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEig {
    pub rotation: DMatrix<f64>,
    pub values: Vec<f64>,
}

/// All eigenvalues of a real matrix, sorted by descending real part and
/// then descending imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenvalueList {
    pub real_parts: Vec<f64>,
    pub imag_parts: Vec<f64>,
}

impl EigenvalueList {
    pub fn len(&self) -> usize {
        self.real_parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.real_parts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.real_parts.iter().copied().zip(self.imag_parts.iter().copied())
    }

    /// Eigenvalue with the largest real part.
    pub fn rightmost(&self) -> (f64, f64) {
        (self.real_parts[0], self.imag_parts[0])
    }

    /// Real parts of the eigenvalues whose imaginary part is within
    /// `imag_tol·(1+|re|)`, in descending order.
    pub fn real_values(&self, imag_tol: f64) -> Vec<f64> {
        self.iter()
            .filter(|(re, im)| im.abs() <= imag_tol * (1.0 + re.abs()))
            .map(|(re, _)| re)
            .collect()
    }
}

/// Row-major square scratch matrix.
struct Sq {
    n: usize,
    a: Vec<f64>,
}

impl Sq {
    fn from_dmatrix(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = m[(i, j)];
            }
        }
        Sq { n, a }
    }
}

impl Index<(usize, usize)> for Sq {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.a[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Sq {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.a[i * self.n + j]
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn sym_eig(s: &DMatrix<f64>) -> Result<SymEig> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::DimensionMismatch(format!("{}x{} matrix is not square", n, s.ncols())));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("matrix has non-finite entries".into()));
    }
    let frob = s.norm();
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            asym = asym.max((s[(i, j)] - s[(j, i)]).abs());
        }
    }
    if asym > 1e-12 * frob {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }

    let mut a = Sq::from_dmatrix(s);
    // Symmetrize exactly so the rotations see a consistent matrix.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let mut v = Sq { n, a: vec![0.0; n * n] };
    for i in 0..n {
        v[(i, i)] = 1.0;
    }

    let tiny = f64::EPSILON * 1e-2 * frob;
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= tiny || apq == 0.0 {
                    continue;
                }
                rotated = true;
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]).then(i.cmp(&j)));
            let values = order.iter().map(|&i| a[(i, i)]).collect();
            let rotation = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
            return Ok(SymEig { rotation, values });
        }
    }
    Err(Error::NoConvergence { iterations: 100 })
}

/// Parlett–Reinsch balancing with powers of two.
fn balance(a: &mut Sq) {
    const RADIX: f64 = 2.0;
    let n = a.n;
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                while c < g {
                    f *= RADIX;
                    c *= sqrdx;
                }
                g = r * RADIX;
                while c > g {
                    f /= RADIX;
                    c /= sqrdx;
                }
                if (c + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 0..n {
                        a[(i, j)] *= g;
                    }
                    for j in 0..n {
                        a[(j, i)] *= f;
                    }
                }
            }
        }
    }
}

/// Householder reduction to upper Hessenberg form, in place.
fn hessenberg(a: &mut Sq) {
    let n = a.n;
    if n < 3 {
        return;
    }
    let mut v = vec![0.0; n];
    for k in 0..(n - 2) {
        let mut alpha = 0.0;
        for i in (k + 1)..n {
            alpha += a[(i, k)] * a[(i, k)];
        }
        let alpha = alpha.sqrt();
        if alpha == 0.0 {
            continue;
        }
        let x0 = a[(k + 1, k)];
        let alpha = if x0 > 0.0 { -alpha } else { alpha };
        for i in 0..n {
            v[i] = if i > k { a[(i, k)] } else { 0.0 };
        }
        v[k + 1] -= alpha;
        let vnorm2: f64 = v[(k + 1)..].iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm2;
        // A ← (I − βvvᵀ) A
        for j in 0..n {
            let mut s = 0.0;
            for i in (k + 1)..n {
                s += v[i] * a[(i, j)];
            }
            s *= beta;
            for i in (k + 1)..n {
                a[(i, j)] -= s * v[i];
            }
        }
        // A ← A (I − βvvᵀ)
        for i in 0..n {
            let mut s = 0.0;
            for j in (k + 1)..n {
                s += a[(i, j)] * v[j];
            }
            s *= beta;
            for j in (k + 1)..n {
                a[(i, j)] -= s * v[j];
            }
        }
        a[(k + 1, k)] = alpha;
        for i in (k + 2)..n {
            a[(i, k)] = 0.0;
        }
    }
}

/// Eigenvalues of an upper Hessenberg matrix by Francis double-shift QR.
fn hqr(a: &mut Sq, max_iter: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = a.n;
    let eps = f64::EPSILON;
    let mut wr = vec![0.0; n];
    let mut wi = vec![0.0; n];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[(i, j)].abs();
        }
    }
    let mut nn: isize = n as isize - 1;
    let mut t = 0.0;
    let mut total = 0usize;
    while nn >= 0 {
        let mut its = 0usize;
        loop {
            let nu = nn as usize;
            let mut l = nu;
            while l > 0 {
                let mut s = a[(l - 1, l - 1)].abs() + a[(l, l)].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[(l, l - 1)].abs() <= eps * s {
                    a[(l, l - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[(nu, nu)];
            if l == nu {
                wr[nu] = x + t;
                wi[nu] = 0.0;
                nn -= 1;
            } else {
                let mut y = a[(nu - 1, nu - 1)];
                let mut w = a[(nu, nu - 1)] * a[(nu - 1, nu)];
                if l == nu - 1 {
                    let p = 0.5 * (y - x);
                    let q = p * p + w;
                    let mut z = q.abs().sqrt();
                    x += t;
                    if q >= 0.0 {
                        z = p + z.copysign(p);
                        wr[nu - 1] = x + z;
                        wr[nu] = x + z;
                        if z != 0.0 {
                            wr[nu] = x - w / z;
                        }
                        wi[nu - 1] = 0.0;
                        wi[nu] = 0.0;
                    } else {
                        wr[nu - 1] = x + p;
                        wr[nu] = x + p;
                        wi[nu - 1] = z;
                        wi[nu] = -z;
                    }
                    nn -= 2;
                } else {
                    if total >= max_iter {
                        return Err(Error::NoConvergence { iterations: total });
                    }
                    if its > 0 && its % 10 == 0 {
                        // Exceptional shift.
                        t += x;
                        for i in 0..=nu {
                            a[(i, i)] -= x;
                        }
                        let s = a[(nu, nu - 1)].abs() + a[(nu - 1, nu - 2)].abs();
                        x = 0.75 * s;
                        y = x;
                        w = -0.4375 * s * s;
                    }
                    its += 1;
                    total += 1;
                    let (mut p, mut q, mut r);
                    let mut m = nu - 2;
                    loop {
                        let z = a[(m, m)];
                        r = x - z;
                        let s = y - z;
                        p = (r * s - w) / a[(m + 1, m)] + a[(m, m + 1)];
                        q = a[(m + 1, m + 1)] - z - r - s;
                        r = a[(m + 2, m + 1)];
                        let s = p.abs() + q.abs() + r.abs();
                        p /= s;
                        q /= s;
                        r /= s;
                        if m == l {
                            break;
                        }
                        let u = a[(m, m - 1)].abs() * (q.abs() + r.abs());
                        let v = p.abs() * (a[(m - 1, m - 1)].abs() + z.abs() + a[(m + 1, m + 1)].abs());
                        if u <= eps * v {
                            break;
                        }
                        m -= 1;
                    }
                    for i in m..(nu - 1) {
                        a[(i + 2, i)] = 0.0;
                        if i != m {
                            a[(i + 2, i - 1)] = 0.0;
                        }
                    }
                    let mut k = m;
                    while k < nu {
                        if k != m {
                            p = a[(k, k - 1)];
                            q = a[(k + 1, k - 1)];
                            r = 0.0;
                            if k + 1 != nu {
                                r = a[(k + 2, k - 1)];
                            }
                            x = p.abs() + q.abs() + r.abs();
                            if x != 0.0 {
                                p /= x;
                                q /= x;
                                r /= x;
                            }
                        }
                        let s = (p * p + q * q + r * r).sqrt().copysign(p);
                        if s != 0.0 {
                            if k == m {
                                if l != m {
                                    a[(k, k - 1)] = -a[(k, k - 1)];
                                }
                            } else {
                                a[(k, k - 1)] = -s * x;
                            }
                            p += s;
                            x = p / s;
                            y = q / s;
                            let z = r / s;
                            q /= p;
                            r /= p;
                            for j in k..=nu {
                                let mut pp = a[(k, j)] + q * a[(k + 1, j)];
                                if k + 1 != nu {
                                    pp += r * a[(k + 2, j)];
                                    a[(k + 2, j)] -= pp * z;
                                }
                                a[(k + 1, j)] -= pp * y;
                                a[(k, j)] -= pp * x;
                            }
                            let mmin = if nu < k + 3 { nu } else { k + 3 };
                            for i in l..=mmin {
                                let mut pp = x * a[(i, k)] + y * a[(i, k + 1)];
                                if k + 1 != nu {
                                    pp += z * a[(i, k + 2)];
                                    a[(i, k + 2)] -= pp * r;
                                }
                                a[(i, k + 1)] -= pp * q;
                                a[(i, k)] -= pp;
                            }
                        }
                        k += 1;
                    }
                }
            }
            if nn < 0 || (l as isize) + 1 >= nn {
                break;
            }
        }
    }
    Ok((wr, wi))
}

/// All eigenvalues (with multiplicity) of a square real matrix.
pub fn all_eigenvalues(g: &DMatrix<f64>) -> Result<EigenvalueList> {
    let n = g.nrows();
    if g.ncols() != n {
        return Err(Error::DimensionMismatch(format!("{}x{} matrix is not square", n, g.ncols())));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("matrix has non-finite entries".into()));
    }
    if n == 0 {
        return Ok(EigenvalueList { real_parts: vec![], imag_parts: vec![] });
    }
    let mut a = Sq::from_dmatrix(g);
    balance(&mut a);
    hessenberg(&mut a);
    let (wr, wi) = hqr(&mut a, 100 * n)?;
    let mut pairs: Vec<(f64, f64)> = wr.into_iter().zip(wi).collect();
    pairs.sort_by(|x, y| match y.0.total_cmp(&x.0) {
        Ordering::Equal => y.1.total_cmp(&x.1),
        o => o,
    });
    Ok(EigenvalueList {
        real_parts: pairs.iter().map(|p| p.0).collect(),
        imag_parts: pairs.iter().map(|p| p.1).collect(),
    })
}

/// Largest eigenvalue whose imaginary part is within `imag_tol·(1+|re|)`.
pub fn largest_real_eigenvalue(g: &DMatrix<f64>, imag_tol: f64) -> Result<f64> {
    all_eigenvalues(g)?
        .real_values(imag_tol)
        .first()
        .copied()
        .ok_or(Error::NoRealEigenvalue)
}

/// Number of diagonal entries separated from `lambda` by more than
/// `rel_tol·max(1, |lambda|)`, i.e. the numerical rank of `λI − D`.
pub fn shifted_diag_rank(lambda: f64, dvals: &[f64], rel_tol: f64) -> usize {
    let tol = rel_tol * lambda.abs().max(1.0);
    dvals.iter().filter(|&&d| (lambda - d).abs() > tol).count()
}
