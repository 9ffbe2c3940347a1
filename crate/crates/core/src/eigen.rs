//! Dense solver for the second-smallest eigenpair of `(D - W) v = λ D v`.
//!
//! The pencil is reduced to the symmetric normalized Laplacian
//! `L = I - D^{-1/2} W D^{-1/2}`, which shares its eigenvalues; eigenvectors
//! map back through `v = D^{-1/2} u`. `L` is reduced to tridiagonal form with
//! Householder reflections, the wanted eigenvalue is isolated by Sturm-count
//! bisection, and its vector is recovered by inverse iteration on the
//! tridiagonal matrix followed by the reflector back-transform. Only one
//! eigenvector is ever formed, so the cost is dominated by the `O(n^3)`
//! reduction.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Rows below this size are processed serially.
const PAR_THRESHOLD: usize = 192;

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub lambda: f64,
    /// Unit Euclidean norm; the largest-magnitude entry is positive.
    pub vector: Vec<f64>,
}

/// Symmetric tridiagonal matrix plus the reflectors that produced it.
struct Tridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
    /// `(beta, v)` for each step `k`, acting on indices `k+1..n`.
    reflectors: Vec<(f64, Vec<f64>)>,
}

fn tridiagonalize(mut a: Matrix) -> Tridiagonal {
    let n = a.rows();
    let mut off = vec![0.0; n.saturating_sub(1)];
    let mut reflectors = Vec::with_capacity(n.saturating_sub(2));

    for k in 0..n.saturating_sub(2) {
        let start = k + 1;
        let m = n - start;
        let x = &a.row(k)[start..];
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            off[k] = 0.0;
            reflectors.push((0.0, Vec::new()));
            continue;
        }
        let alpha = if x[0] > 0.0 { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        if vnorm2 == 0.0 {
            off[k] = x[0];
            reflectors.push((0.0, Vec::new()));
            continue;
        }
        let beta = 2.0 / vnorm2;
        off[k] = alpha;

        // p = beta * A22 v
        let cols = a.cols();
        let data = &mut a.as_mut_slice()[start * cols..];
        let mut p = vec![0.0; m];
        let symv = |(row, out): (&[f64], &mut f64)| {
            let r = &row[start..];
            *out = beta * r.iter().zip(&v).map(|(s, t)| s * t).sum::<f64>();
        };
        if m >= PAR_THRESHOLD {
            data.par_chunks(cols).zip(p.par_iter_mut()).for_each(symv);
        } else {
            data.chunks(cols).zip(p.iter_mut()).for_each(symv);
        }
        let kappa = 0.5 * beta * p.iter().zip(&v).map(|(s, t)| s * t).sum::<f64>();
        let w: Vec<f64> = p.iter().zip(&v).map(|(pi, vi)| pi - kappa * vi).collect();

        // A22 -= v w^T + w v^T
        let update = |(i, row): (usize, &mut [f64])| {
            let (vi, wi) = (v[i], w[i]);
            for ((slot, &vj), &wj) in row[start..].iter_mut().zip(&v).zip(&w) {
                *slot -= vi * wj + wi * vj;
            }
        };
        if m >= PAR_THRESHOLD {
            data.par_chunks_mut(cols).enumerate().for_each(update);
        } else {
            data.chunks_mut(cols).enumerate().for_each(update);
        }
        reflectors.push((beta, v));
    }
    if n >= 2 {
        off[n - 2] = a.get(n - 2, n - 1);
    }
    let diag = (0..n).map(|i| a.get(i, i)).collect();
    Tridiagonal { diag, off, reflectors }
}

impl Tridiagonal {
    fn norm_bound(&self) -> f64 {
        let n = self.diag.len();
        (0..n)
            .map(|i| {
                let left = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
                let right = if i + 1 < n { self.off[i].abs() } else { 0.0 };
                self.diag[i].abs() + left + right
            })
            .fold(0.0, f64::max)
    }

    fn pivmin(&self) -> f64 {
        let max_e2 = self.off.iter().map(|e| e * e).fold(1.0f64, f64::max);
        f64::MIN_POSITIVE * max_e2
    }

    /// Number of eigenvalues strictly below `x`.
    fn sturm_count(&self, x: f64, pivmin: f64) -> usize {
        let mut count = 0;
        let mut q = self.diag[0] - x;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.diag.len() {
            let e = self.off[i - 1];
            q = self.diag[i] - x - e * e / q;
            if q.abs() < pivmin {
                q = -pivmin;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// `k`-th smallest eigenvalue (0-based) by bisection.
    fn kth_eigenvalue(&self, k: usize) -> f64 {
        let n = self.diag.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let left = if i > 0 { self.off[i - 1].abs() } else { 0.0 };
            let right = if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - left - right);
            hi = hi.max(self.diag[i] + left + right);
        }
        let pivmin = self.pivmin();
        let pad = 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) + pivmin;
        lo -= pad;
        hi += pad;
        for _ in 0..256 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.sturm_count(mid, pivmin) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Eigenvector for eigenvalue `lambda` by inverse iteration.
    fn inverse_iteration(&self, lambda: f64) -> Vec<f64> {
        let n = self.diag.len();
        if n == 1 {
            return vec![1.0];
        }
        let norm = self.norm_bound().max(f64::MIN_POSITIVE);
        let tiny = f64::EPSILON * norm;

        // LU with partial pivoting of T - lambda I (LAPACK dgttrf layout).
        let mut d: Vec<f64> = self.diag.iter().map(|x| x - lambda).collect();
        let mut dl = self.off.clone();
        let mut du = self.off.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n - 1];
        for i in 0..n - 1 {
            if d[i].abs() >= dl[i].abs() {
                if d[i] != 0.0 {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    d[i + 1] -= fact * du[i];
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -fact;
                }
                swapped[i] = true;
            }
        }
        for x in &mut d {
            if x.abs() < tiny {
                *x = if *x < 0.0 { -tiny } else { tiny };
            }
        }
        let solve = |b: &mut [f64]| {
            for i in 0..n - 1 {
                if swapped[i] {
                    b.swap(i, i + 1);
                }
                b[i + 1] -= dl[i] * b[i];
            }
            b[n - 1] /= d[n - 1];
            b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
            for i in (0..n.saturating_sub(2)).rev() {
                b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
            }
        };

        // deterministic, non-structured start vector
        let mut x: Vec<f64> = (0..n)
            .map(|i| {
                let h = (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 11;
                0.5 + (h as f64) / ((1u64 << 53) as f64)
            })
            .collect();
        normalize(&mut x);
        let target = 4.0 * (n as f64) * f64::EPSILON * norm;
        for _ in 0..8 {
            solve(&mut x);
            if !normalize(&mut x) {
                x = vec![1.0; n];
                normalize(&mut x);
            }
            if self.residual(&x, lambda) <= target {
                break;
            }
        }
        x
    }

    fn residual(&self, x: &[f64], lambda: f64) -> f64 {
        let n = x.len();
        let mut acc = 0.0;
        for i in 0..n {
            let mut r = (self.diag[i] - lambda) * x[i];
            if i > 0 {
                r += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                r += self.off[i] * x[i + 1];
            }
            acc += r * r;
        }
        acc.sqrt()
    }

    /// Maps a tridiagonal-basis vector back to the original basis.
    fn back_transform(&self, mut y: Vec<f64>) -> Vec<f64> {
        for (k, (beta, v)) in self.reflectors.iter().enumerate().rev() {
            if *beta == 0.0 {
                continue;
            }
            let tail = &mut y[k + 1..];
            let s = beta * tail.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
            for (t, vi) in tail.iter_mut().zip(v) {
                *t -= s * vi;
            }
        }
        y
    }
}

fn normalize(x: &mut [f64]) -> bool {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 && norm.is_finite() {
        x.iter_mut().for_each(|v| *v /= norm);
        true
    } else {
        false
    }
}

/// Flips `v` so that its first entry of largest magnitude is positive.
pub fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn check_affinity(w: &Matrix) -> Result<Vec<f64>> {
    let n = w.rows();
    if !w.is_square() {
        return Err(Error::DimensionMismatch(format!("{}x{} affinity", w.rows(), w.cols())));
    }
    if n < 2 {
        return Err(Error::param(format!("eigen solve needs at least 2 nodes, got {n}")));
    }
    if w.max_asymmetry() > 1e-9 {
        return Err(Error::InvalidData("affinity matrix is not symmetric".into()));
    }
    let degrees = w.row_sums();
    if let Some(i) = degrees.iter().position(|&d| !(d.is_finite() && d > 0.0)) {
        return Err(Error::InvalidData(format!("node {i} has non-positive degree {}", degrees[i])));
    }
    Ok(degrees)
}

/// Normalized Laplacian `I - D^{-1/2} W D^{-1/2}`, exactly symmetric when `w` is.
fn normalized_laplacian(w: &Matrix, inv_sqrt_d: &[f64]) -> Matrix {
    let n = w.rows();
    let mut l = Matrix::zeros(n, n);
    l.as_mut_slice()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| {
            let src = w.row(i);
            for (j, slot) in row.iter_mut().enumerate() {
                let m = src[j] * (inv_sqrt_d[i] * inv_sqrt_d[j]);
                *slot = if i == j { 1.0 - m } else { -m };
            }
        });
    l
}

/// Eigenpair with the second-smallest eigenvalue of `(D - W) v = λ D v`,
/// where `D` holds the row sums of `w`.
pub fn second_smallest_generalized(w: &Matrix) -> Result<Eigenpair> {
    kth_smallest_generalized(w, 1)
}

/// Eigenpair with the `k`-th smallest (0-based) eigenvalue of the pencil.
pub fn kth_smallest_generalized(w: &Matrix, k: usize) -> Result<Eigenpair> {
    let degrees = check_affinity(w)?;
    let n = w.rows();
    if k >= n {
        return Err(Error::param(format!("eigenvalue index {k} out of range for {n} nodes")));
    }
    let inv_sqrt_d: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    let tri = tridiagonalize(normalized_laplacian(w, &inv_sqrt_d));
    let lambda = tri.kth_eigenvalue(k);
    let y = tri.inverse_iteration(lambda);
    let u = tri.back_transform(y);
    let mut v: Vec<f64> = u.iter().zip(&inv_sqrt_d).map(|(a, s)| a * s).collect();
    if !normalize(&mut v) {
        return Err(Error::InvalidData("eigenvector collapsed to zero".into()));
    }
    fix_sign(&mut v);
    Ok(Eigenpair { lambda, vector: v })
}

/// `‖(D - W) v - λ D v‖₂` for the degree matrix of `w`.
pub fn generalized_residual(w: &Matrix, lambda: f64, v: &[f64]) -> f64 {
    let degrees = w.row_sums();
    let wv = w.mul_vec(v);
    degrees
        .iter()
        .zip(v)
        .zip(&wv)
        .map(|((d, x), y)| {
            let r = d * x - y - lambda * d * x;
            r * r
        })
        .sum::<f64>()
        .sqrt()
}
