use ndarray::Array2;

use super::sparse::CsrMatrix;
use super::svd::{randomized_svd, SvdOptions};
use super::TopicError;

/// Initial factors for NMF.
#[derive(Debug, Clone)]
pub struct NndsvdInit {
    /// `n_rows x k`
    pub w: Array2<f64>,
    /// `k x n_cols`
    pub h: Array2<f64>,
    /// Factors left at zero because the input has rank below `k`.
    pub deficient: Vec<usize>,
}

/// Relative singular-value floor below which a factor counts as missing.
const RANK_TOL: f64 = 1e-10;

fn split_signs(x: ndarray::ArrayView1<'_, f64>) -> (Vec<f64>, Vec<f64>) {
    x.iter().map(|&v| (v.max(0.0), (-v).max(0.0))).unzip()
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Nonnegative double SVD initialisation.
///
/// The leading singular pair is taken in absolute value. Every later pair
/// `(u, v)` is split into positive and negative parts and the part pair with
/// the larger norm product is kept, scaled by `sqrt(sigma * norm product)`.
pub fn nndsvd_init(x: &CsrMatrix, k: usize, seed: u64) -> Result<NndsvdInit, TopicError> {
    let (n, m) = (x.n_rows(), x.n_cols());
    if k == 0 || k > n.min(m) {
        return Err(TopicError::TooManyTopics {
            n_topics: k,
            rows: n,
            cols: m,
        });
    }
    let svd = randomized_svd(
        x,
        k,
        &SvdOptions {
            seed,
            ..Default::default()
        },
    );
    let mut w = Array2::zeros((n, k));
    let mut h = Array2::zeros((k, m));
    let mut deficient = Vec::new();
    let top = svd.s.first().copied().unwrap_or(0.0);

    for j in 0..k {
        let sigma = svd.s[j];
        if top <= 0.0 || sigma <= RANK_TOL * top {
            deficient.push(j);
            continue;
        }
        let u = svd.u.column(j);
        let v = svd.vt.row(j);
        if j == 0 {
            let scale = sigma.sqrt();
            w.column_mut(0).assign(&u.mapv(|a| scale * a.abs()));
            h.row_mut(0).assign(&v.mapv(|a| scale * a.abs()));
            continue;
        }
        let (up, un) = split_signs(u);
        let (vp, vn) = split_signs(v);
        let (nup, nvp, nun, nvn) = (l2(&up), l2(&vp), l2(&un), l2(&vn));
        let (mp, mn) = (nup * nvp, nun * nvn);
        let (uu, vv, nu, nv, mass) = if mp > mn {
            (up, vp, nup, nvp, mp)
        } else {
            (un, vn, nun, nvn, mn)
        };
        if mass <= 0.0 {
            deficient.push(j);
            continue;
        }
        let scale = (sigma * mass).sqrt();
        for (i, a) in uu.iter().enumerate() {
            w[[i, j]] = scale * a / nu;
        }
        for (t, b) in vv.iter().enumerate() {
            h[[j, t]] = scale * b / nv;
        }
    }
    // Round-off residue from the SVD is not signal.
    let eps = 1e-14 * top.max(f64::MIN_POSITIVE);
    w.mapv_inplace(|v| if v < eps { 0.0 } else { v });
    h.mapv_inplace(|v| if v < eps { 0.0 } else { v });
    Ok(NndsvdInit { w, h, deficient })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rank_one_is_exact() {
        let a = array![[1.0], [2.0], [0.5]];
        let b = array![[3.0, 0.0, 1.0, 2.0]];
        let x = a.dot(&b);
        let init = nndsvd_init(&CsrMatrix::from_dense(&x), 1, 0).unwrap();
        let r = init.w.dot(&init.h);
        for (p, q) in r.iter().zip(x.iter()) {
            assert!((p - q).abs() < 1e-8);
        }
        assert!(init.deficient.is_empty());
    }

    #[test]
    fn too_many_topics_rejected() {
        let x = CsrMatrix::from_dense(&array![[1.0, 2.0]]);
        assert!(matches!(
            nndsvd_init(&x, 2, 0),
            Err(TopicError::TooManyTopics { .. })
        ));
    }

    #[test]
    fn rank_deficiency_flagged() {
        let a = array![[1.0], [2.0], [3.0]];
        let b = array![[1.0, 1.0, 2.0]];
        let x = CsrMatrix::from_dense(&a.dot(&b));
        let init = nndsvd_init(&x, 3, 0).unwrap();
        assert_eq!(init.deficient, vec![1, 2]);
        assert!(init.w.column(2).iter().all(|&v| v == 0.0));
    }
}
