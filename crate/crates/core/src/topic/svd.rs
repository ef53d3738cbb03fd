//! Truncated SVD by randomized subspace iteration.
//!
//! The range of `X` is sampled with a seeded Gaussian test matrix, refined
//! by power iterations until the leading Ritz values settle, and the small
//! projected matrix is decomposed with one-sided Jacobi rotations.

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::sparse::CsrMatrix;

#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// `n_rows x k`
    pub u: Array2<f64>,
    pub s: Vec<f64>,
    /// `k x n_cols`
    pub vt: Array2<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SvdOptions {
    pub oversample: usize,
    pub tol: f64,
    pub max_power_iter: usize,
    pub seed: u64,
}

impl Default for SvdOptions {
    fn default() -> Self {
        SvdOptions {
            oversample: 10,
            tol: 1e-10,
            max_power_iter: 100,
            seed: 0,
        }
    }
}

/// Orthonormalises the columns in place (modified Gram-Schmidt, applied
/// twice). Columns that vanish are set to zero.
fn orthonormalize(m: &mut Array2<f64>) {
    let cols = m.ncols();
    let scale = m
        .iter()
        .fold(0.0f64, |a, &v| a.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    for j in 0..cols {
        for _ in 0..2 {
            for i in 0..j {
                let proj = m.column(i).dot(&m.column(j));
                let ci = m.column(i).to_owned();
                m.column_mut(j).scaled_add(-proj, &ci);
            }
        }
        let n = m.column(j).dot(&m.column(j)).sqrt();
        if n > 1e-13 * scale {
            m.column_mut(j).mapv_inplace(|v| v / n);
        } else {
            m.column_mut(j).fill(0.0);
        }
    }
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations,
/// sorted descending.
fn symmetric_eigenvalues(mut a: Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum();
        let diag: f64 = (0..n).map(|i| a[[i, i]] * a[[i, i]]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// One-sided Jacobi SVD of a tall matrix `a` (`m x l`, `m >= l`):
/// returns `(u, s, v)` with `a = u diag(s) v^T`, sorted descending.
fn jacobi_svd(mut a: Array2<f64>) -> (Array2<f64>, Vec<f64>, Array2<f64>) {
    let l = a.ncols();
    let mut v = Array2::<f64>::eye(l);
    for _ in 0..60 {
        let mut rotated = false;
        for p in 0..l {
            for q in p + 1..l {
                let alpha = a.column(p).dot(&a.column(p));
                let beta = a.column(q).dot(&a.column(q));
                let gamma = a.column(p).dot(&a.column(q));
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for m in [&mut a, &mut v] {
                    let cp = m.column(p).to_owned();
                    let cq = m.column(q).to_owned();
                    m.column_mut(p).assign(&(&cp * c - &cq * s));
                    m.column_mut(q).assign(&(&cp * s + &cq * c));
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let s: Vec<f64> = (0..l)
        .map(|j| a.column(j).dot(&a.column(j)).sqrt())
        .collect();
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]).then(i.cmp(&j)));
    let mut u = Array2::zeros(a.raw_dim());
    let mut vs = Array2::zeros(v.raw_dim());
    let mut ss = Vec::with_capacity(l);
    for (dst, &src) in order.iter().enumerate() {
        if s[src] > 0.0 {
            u.column_mut(dst)
                .assign(&a.column(src).mapv(|x| x / s[src]));
        }
        vs.column_mut(dst).assign(&v.column(src));
        ss.push(s[src]);
    }
    (u, ss, vs)
}

/// Leading `k` singular triplets of `x`.
pub fn randomized_svd(x: &CsrMatrix, k: usize, opts: &SvdOptions) -> TruncatedSvd {
    let (n, m) = (x.n_rows(), x.n_cols());
    let l = (k + opts.oversample).min(n.min(m));
    if l == n.min(m) {
        return exact_svd(x, k);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let omega = Array2::from_shape_simple_fn((m, l), || StandardNormal.sample(&mut rng));

    let mut q = x.mul_dense(&omega);
    orthonormalize(&mut q);
    let mut prev: Option<Vec<f64>> = None;
    for _ in 0..opts.max_power_iter {
        let mut z = x.t_mul_dense(&q);
        orthonormalize(&mut z);
        q = x.mul_dense(&z);
        orthonormalize(&mut q);

        // Ritz values from the l x l Gram matrix of B = Q^T X.
        let bt = x.t_mul_dense(&q);
        let gram = bt.t().dot(&bt);
        let ritz: Vec<f64> = symmetric_eigenvalues(gram)
            .into_iter()
            .take(k)
            .map(|e| e.max(0.0).sqrt())
            .collect();
        let converged = prev.as_ref().is_some_and(|p| {
            let top = ritz.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
            p.iter()
                .zip(&ritz)
                .all(|(a, b)| (a - b).abs() <= opts.tol * top)
        });
        prev = Some(ritz);
        if converged {
            break;
        }
    }

    // X ~ Q B, B^T = X^T Q = U_b S V_b^T  =>  X ~ (Q V_b) S U_b^T
    let bt = x.t_mul_dense(&q);
    let (ub, s, vb) = jacobi_svd(bt);
    let u = q.dot(&vb);
    let vt = ub.t().to_owned();
    TruncatedSvd {
        u: u.slice_axis(Axis(1), (0..k).into()).to_owned(),
        s: s.into_iter().take(k).collect(),
        vt: vt.slice_axis(Axis(0), (0..k).into()).to_owned(),
    }
}

/// Full decomposition of a matrix small enough that sampling its range
/// would span all of it anyway.
fn exact_svd(x: &CsrMatrix, k: usize) -> TruncatedSvd {
    let dense = x.to_dense();
    let (u, s, vt) = if dense.nrows() >= dense.ncols() {
        let (u, s, v) = jacobi_svd(dense);
        (u, s, v.t().to_owned())
    } else {
        let (v, s, u) = jacobi_svd(dense.t().to_owned());
        (u, s, v.t().to_owned())
    };
    TruncatedSvd {
        u: u.slice_axis(Axis(1), (0..k).into()).to_owned(),
        s: s.into_iter().take(k).collect(),
        vt: vt.slice_axis(Axis(0), (0..k).into()).to_owned(),
    }
}

/// Reconstruction `U diag(s) V^T`.
pub fn reconstruct(svd: &TruncatedSvd) -> Array2<f64> {
    let s = Array1::from(svd.s.clone());
    (&svd.u * &s).dot(&svd.vt)
}
