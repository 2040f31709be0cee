//! Symmetric eigenvalue routines for graph spectra.
//!
//! Small or fully requested spectra go through a dense solver. For a handful of
//! extremal eigenvalues of a large sparse operator a Lanczos iteration is used
//! instead. It keeps the basis semi-orthogonal by partial reorthogonalization:
//! the loss of orthogonality is tracked with the usual omega recurrence and the
//! basis is swept only when the estimate passes sqrt(eps).

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Compressed sparse rows of a symmetric matrix.
#[derive(Debug, Clone)]
pub(crate) struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSym {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[p] * x[self.cols[p]];
            }
            y[i] = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.cols[p])] = self.vals[p];
            }
        }
        m
    }
}

/// All eigenvalues of a dense symmetric matrix, ascending.
pub(crate) fn dense_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Eigen-decomposition of a symmetric tridiagonal matrix by implicit QL.
///
/// `diag` has length `s`, `off[i]` couples `i` and `i + 1` (its last entry is
/// ignored). Returns the eigenvalues together with the last row of the
/// eigenvector matrix, which is all Lanczos needs for residual estimates.
pub(crate) fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let s = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; s];
    e[..s.saturating_sub(1)].copy_from_slice(&off[..s.saturating_sub(1)]);
    let mut z = vec![0.0; s];
    if s == 0 {
        return (d, z);
    }
    z[s - 1] = 1.0;

    for l in 0..s {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < s {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 200 {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = (g * g + 1.0).sqrt();
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s_, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s_ * e[i];
                let b = c * e[i];
                r = (f * f + g * g).sqrt();
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s_ = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s_ + 2.0 * c * b;
                p = s_ * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s_ * z[i] + c * zf;
                z[i] = c * z[i] - s_ * zf;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    (d, z)
}

/// Largest and smallest eigenvalues of a sparse symmetric operator restricted
/// to the orthogonal complement of `deflate` (orthonormal vectors).
#[derive(Debug, Clone)]
pub(crate) struct Extremes {
    /// Descending.
    pub top: Vec<f64>,
    /// Ascending.
    pub bottom: Vec<f64>,
    #[cfg_attr(not(test), allow(dead_code))]
    pub steps: usize,
}

const LANCZOS_TOL: f64 = 1e-8;
const LANCZOS_SEED: u64 = 0x1a2c_05e5;
/// Reorthogonalize once the estimated loss of orthogonality exceeds sqrt(eps).
const ORTH_LEVEL: f64 = 1.49e-8;

pub(crate) fn lanczos_extremes(
    op: &SparseSym,
    deflate: &[Vec<f64>],
    n_top: usize,
    n_bottom: usize,
) -> Extremes {
    let n = op.n();
    let dim = n - deflate.len();
    assert!(n_top + n_bottom <= dim, "requested more eigenvalues than available");

    let mut rng = ChaCha8Rng::seed_from_u64(LANCZOS_SEED);
    let mut basis: Vec<f64> = Vec::with_capacity(n * (2 * (n_top + n_bottom) + 40).min(dim));
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    let mut v = fresh_vector(&mut rng, n, deflate, &basis);
    let mut w = vec![0.0; n];

    let wanted = n_top + n_bottom;
    let first_check = (2 * wanted + 10).min(dim);
    let mut next_check = first_check;

    // Estimated inner products of the current and previous Lanczos vectors
    // with every earlier one; the last entry of each is the vector itself.
    let mut omega: Vec<f64> = vec![1.0];
    let mut omega_prev: Vec<f64> = Vec::new();
    let mut force_reorth = false;
    let mut anorm: f64 = 0.0;
    let root_n = (n as f64).sqrt();

    loop {
        let j = alphas.len();
        basis.extend_from_slice(&v);
        op.matvec(&v, &mut w);
        let alpha = dot(&v, &w);
        axpy(-alpha, &v, &mut w);
        if j > 0 {
            let prev = &basis[(j - 1) * n..j * n];
            axpy(-betas[j - 1], prev, &mut w);
        }
        project_out(&mut w, deflate);
        alphas.push(alpha);
        let mut beta = norm(&w);
        anorm = anorm.max(alpha.abs() + beta + j.checked_sub(1).map_or(0.0, |i| betas[i]));

        let mut next_omega = Vec::with_capacity(j + 2);
        if beta > 1e-12 {
            let beta_prev = j.checked_sub(1).map_or(0.0, |i| betas[i]);
            let mut worst: f64 = 0.0;
            for k in 0..j {
                let mut t = betas[k] * omega[k + 1] + (alphas[k] - alpha) * omega[k] - beta_prev * omega_prev[k];
                if k > 0 {
                    t += betas[k - 1] * omega[k - 1];
                }
                let est = (t + t.signum() * 2.0 * f64::EPSILON * anorm) / beta;
                worst = worst.max(est.abs());
                next_omega.push(est);
            }
            next_omega.push(f64::EPSILON * root_n * anorm / beta);
            if force_reorth || worst > ORTH_LEVEL {
                reorthogonalize(&mut w, deflate, &basis, n);
                beta = norm(&w);
                next_omega.iter_mut().for_each(|o| *o = f64::EPSILON);
                // the vector after a triggered reorthogonalization is cleaned too
                force_reorth = !force_reorth;
            }
        }

        let steps = j + 1;
        if steps == dim {
            break;
        }
        if beta > 1e-12 && steps >= next_check {
            if converged(&alphas, &betas, beta, n_top, n_bottom) {
                break;
            }
            next_check = (steps + (steps / 6).max(10)).min(dim);
        }
        if beta <= 1e-12 {
            // invariant subspace exhausted: continue with a fresh direction
            betas.push(0.0);
            v = fresh_vector(&mut rng, n, deflate, &basis);
            next_omega = vec![f64::EPSILON; j + 1];
            force_reorth = false;
        } else {
            betas.push(beta);
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi / beta;
            }
        }
        next_omega.push(1.0);
        omega_prev = std::mem::replace(&mut omega, next_omega);
    }

    let (mut ritz, _) = tridiagonal_eigen(&alphas, &betas_padded(&betas, alphas.len()));
    ritz.sort_by(f64::total_cmp);
    let steps = ritz.len();
    let bottom = ritz[..n_bottom.min(steps)].to_vec();
    let top = ritz.iter().rev().take(n_top).copied().collect();
    Extremes { top, bottom, steps }
}

fn betas_padded(betas: &[f64], s: usize) -> Vec<f64> {
    let mut off = betas.to_vec();
    off.resize(s, 0.0);
    off
}

fn converged(alphas: &[f64], betas: &[f64], beta_last: f64, n_top: usize, n_bottom: usize) -> bool {
    let s = alphas.len();
    let (vals, last_row) = tridiagonal_eigen(alphas, &betas_padded(betas, s));
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let wanted = order[..n_bottom]
        .iter()
        .chain(order[s - n_top..].iter());
    wanted
        .into_iter()
        .all(|&i| (beta_last * last_row[i]).abs() <= LANCZOS_TOL * vals[i].abs().max(1.0))
}

fn fresh_vector(rng: &mut ChaCha8Rng, n: usize, deflate: &[Vec<f64>], basis: &[f64]) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        reorthogonalize(&mut v, deflate, basis, n);
        let nv = norm(&v);
        if nv > 1e-8 {
            v.iter_mut().for_each(|x| *x /= nv);
            return v;
        }
    }
}

/// Modified Gram-Schmidt against `deflate` and every stored basis row,
/// repeated once when the first pass cancels most of the vector.
fn project_out(w: &mut [f64], deflate: &[Vec<f64>]) {
    for z in deflate {
        let c = dot(z, w);
        axpy(-c, z, w);
    }
}

fn reorthogonalize(w: &mut [f64], deflate: &[Vec<f64>], basis: &[f64], n: usize) {
    for _pass in 0..2 {
        let before = norm(w);
        for z in deflate.iter().map(Vec::as_slice).chain(basis.chunks_exact(n)) {
            let c = dot(z, w);
            axpy(-c, z, w);
        }
        if norm(w) > 0.7 * before {
            break;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize the reduction
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}
