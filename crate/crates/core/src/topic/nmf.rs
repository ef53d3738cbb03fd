//! Regularised NMF by hierarchical alternating least squares.
//!
//! Minimises
//!
//! ```text
//! 1/2 |X - W H|_F^2 + a1 (|W|_1 + |H|_1) + a2/2 (|W|_F^2 + |H|_F^2)
//! ```
//!
//! with `a1 = alpha * l1_ratio` and `a2 = alpha * (1 - l1_ratio)`. One sweep
//! updates every column of `W` and then every row of `H`, each by its exact
//! nonnegative minimiser with the other blocks fixed, so the objective never
//! increases.

use ndarray::{Array2, Zip};

use super::sparse::CsrMatrix;
use super::TopicError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalsParams {
    pub alpha: f64,
    pub l1_ratio: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl HalsParams {
    fn l1(&self) -> f64 {
        self.alpha * self.l1_ratio
    }

    fn l2(&self) -> f64 {
        self.alpha * (1.0 - self.l1_ratio)
    }
}

#[derive(Debug, Clone)]
pub struct NmfFit {
    /// `n_rows x k`
    pub w: Array2<f64>,
    /// `k x n_cols`
    pub h: Array2<f64>,
    /// Objective of the initial factors, then after every sweep.
    pub objective_trace: Vec<f64>,
    pub sweeps: usize,
}

/// Squared residual below this fraction of `|X|^2` counts as an exact fit.
const EXACT_FIT: f64 = 1e-24;
/// Below this fraction the expanded-norm identity loses precision and the
/// residual is summed directly.
const CANCELLATION: f64 = 1e-6;
const DIRECT_LIMIT: usize = 40_000_000;

/// One block of HALS updates: `f` is `r x k`; `cross` is the matching
/// `r x k` data product; `gram` the `k x k` Gram matrix of the fixed factor.
fn update_block(f: &mut Array2<f64>, cross: &Array2<f64>, gram: &Array2<f64>, l1: f64, l2: f64) {
    let k = f.ncols();
    for j in 0..k {
        let denom = gram[[j, j]] + l2;
        if denom <= 0.0 {
            if l1 > 0.0 {
                f.column_mut(j).fill(0.0);
            }
            continue;
        }
        let gcol = gram.column(j);
        for i in 0..f.nrows() {
            let row = f.row(i);
            let current = row[j];
            let grad = cross[[i, j]] - row.dot(&gcol) - l1 - l2 * current;
            let next = current + grad / denom;
            f[[i, j]] = if next > 0.0 { next } else { 0.0 };
        }
    }
}

fn frob_inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, &x, &y| acc + x * y)
}

fn direct_residual_sq(x: &CsrMatrix, w: &Array2<f64>, ht: &Array2<f64>) -> f64 {
    let mut dense = x.to_dense();
    dense -= &w.dot(&ht.t());
    dense.iter().map(|v| v * v).sum()
}

struct Objective {
    x_sq: f64,
    l1: f64,
    l2: f64,
}

impl Objective {
    /// `xht` = X H^T and `hht` = H H^T for the current H.
    fn eval(
        &self,
        x: &CsrMatrix,
        w: &Array2<f64>,
        ht: &Array2<f64>,
        xht: &Array2<f64>,
        hht: &Array2<f64>,
    ) -> (f64, f64) {
        let wtw = w.t().dot(w);
        let mut resid = self.x_sq - 2.0 * frob_inner(w, xht) + frob_inner(&wtw, hht);
        if resid < CANCELLATION * self.x_sq && x.n_rows() * x.n_cols() <= DIRECT_LIMIT {
            resid = direct_residual_sq(x, w, ht);
        }
        let resid = resid.max(0.0);
        let l1_term = w.sum() + ht.sum();
        let l2_term = w.iter().chain(ht.iter()).map(|v| v * v).sum::<f64>();
        (
            0.5 * resid + self.l1 * l1_term + 0.5 * self.l2 * l2_term,
            resid,
        )
    }
}

/// Runs HALS from the given factors.
pub fn fit_hals(
    x: &CsrMatrix,
    w0: Array2<f64>,
    h0: Array2<f64>,
    params: &HalsParams,
) -> Result<NmfFit, TopicError> {
    assert_eq!(w0.nrows(), x.n_rows());
    assert_eq!(h0.ncols(), x.n_cols());
    assert_eq!(w0.ncols(), h0.nrows());
    let (l1, l2) = (params.l1(), params.l2());
    let obj = Objective {
        x_sq: x.frobenius_sq(),
        l1,
        l2,
    };
    let mut w = w0;
    let mut ht = h0.t().to_owned();

    let mut xht = x.mul_dense(&ht);
    let mut hht = ht.t().dot(&ht);
    let (start, _) = obj.eval(x, &w, &ht, &xht, &hht);
    if !start.is_finite() {
        return Err(TopicError::NonFinite { sweep: 0 });
    }
    let mut trace = vec![start];
    let mut sweeps = 0;

    while sweeps < params.max_iter {
        sweeps += 1;
        let kept = (w.clone(), ht.clone());
        update_block(&mut w, &xht, &hht, l1, l2);
        let xtw = x.t_mul_dense(&w);
        let wtw = w.t().dot(&w);
        update_block(&mut ht, &xtw, &wtw, l1, l2);

        xht = x.mul_dense(&ht);
        hht = ht.t().dot(&ht);
        let (value, resid) = obj.eval(x, &w, &ht, &xht, &hht);
        if !value.is_finite() || w.iter().chain(ht.iter()).any(|v| !v.is_finite()) {
            return Err(TopicError::NonFinite { sweep: sweeps });
        }
        let prev = *trace.last().unwrap();
        if value > prev {
            // Exact block minimisers cannot increase the objective; this is
            // rounding at convergence, so keep the previous iterate.
            (w, ht) = kept;
            sweeps -= 1;
            break;
        }
        trace.push(value);
        if resid <= EXACT_FIT * obj.x_sq && l1 == 0.0 && l2 == 0.0 {
            break;
        }
        if prev <= 0.0 || (prev - value) / prev < params.tol {
            break;
        }
    }
    Ok(NmfFit {
        w,
        h: ht.t().to_owned(),
        objective_trace: trace,
        sweeps,
    })
}

/// `1/2 |X - WH|^2` plus the regularisation terms, summed directly.
pub fn objective(
    x: &CsrMatrix,
    w: &Array2<f64>,
    h: &Array2<f64>,
    alpha: f64,
    l1_ratio: f64,
) -> f64 {
    let ht = h.t().to_owned();
    let resid = direct_residual_sq(x, w, &ht);
    let l1 = alpha * l1_ratio;
    let l2 = alpha * (1.0 - l1_ratio);
    0.5 * resid
        + l1 * (w.sum() + h.sum())
        + 0.5 * l2 * w.iter().chain(h.iter()).map(|v| v * v).sum::<f64>()
}
