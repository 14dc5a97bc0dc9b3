//! Dense linear-algebra helpers. Heavy factorizations go through `faer`; the
//! rest of the crate speaks `nalgebra`.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};

pub(crate) fn to_faer(a: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

pub(crate) fn from_faer(a: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// Symmetric eigendecomposition with eigenvalues in ascending order.
pub fn sym_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let sym = Mat::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    match sym.self_adjoint_eigen(Side::Lower) {
        Ok(evd) => {
            let s = evd.S();
            let values = DVector::from_fn(n, |i, _| s[i]);
            (values, from_faer(evd.U()))
        }
        Err(_) => {
            // faer only fails on non-finite input; nalgebra gives a usable answer
            // (or NaNs) in that case.
            let evd = nalgebra::SymmetricEigen::new(from_faer(sym.as_ref()));
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&i, &j| evd.eigenvalues[i].total_cmp(&evd.eigenvalues[j]));
            let values = DVector::from_fn(n, |i, _| evd.eigenvalues[order[i]]);
            let vectors = DMatrix::from_fn(n, n, |r, c| evd.eigenvectors[(r, order[c])]);
            (values, vectors)
        }
    }
}

pub fn sym_eigenvalues(a: &DMatrix<f64>) -> DVector<f64> {
    let n = a.nrows();
    let sym = Mat::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    match sym.self_adjoint_eigenvalues(Side::Lower) {
        Ok(v) => DVector::from_vec(v),
        Err(_) => DVector::from_element(n, f64::NAN),
    }
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).iter().copied().fold(f64::INFINITY, f64::min)
}

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Orthonormal bases of `range(S)` and its orthogonal complement in `R^N`.
pub struct RangeSplit {
    pub range: DMatrix<f64>,
    pub complement: DMatrix<f64>,
}

/// Splits `R^N` using a full SVD of the `N × n` matrix `s`; singular values
/// below `rel_tol · σ_max` count as zero.
pub fn range_split(s: &DMatrix<f64>, rel_tol: f64) -> RangeSplit {
    let big_n = s.nrows();
    let svd = to_faer(s).svd().expect("SVD of finite matrix");
    let sv = svd.S();
    let count = sv.dim();
    let smax = if count > 0 { sv[0] } else { 0.0 };
    let rank = (0..count).filter(|&i| sv[i] > rel_tol * smax && sv[i] > 0.0).count();
    let u = from_faer(svd.U());
    RangeSplit {
        range: u.columns(0, rank).into_owned(),
        complement: u.columns(rank, big_n - rank).into_owned(),
    }
}

/// Cholesky factor of a symmetric positive definite matrix held in `faer` form.
pub(crate) struct SpdFactor(faer::linalg::solvers::Llt<f64>);

impl SpdFactor {
    pub fn new(a: &Mat<f64>) -> Option<Self> {
        a.llt(Side::Lower).ok().map(Self)
    }

    /// Smallest squared pivot, i.e. `min_i L_ii²`.
    pub fn min_pivot(&self) -> f64 {
        let l = self.0.L();
        (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min)
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let x = self.0.solve(&b);
        DVector::from_fn(rhs.len(), |i, _| x[(i, 0)])
    }
}

/// Picks a maximal linearly independent subset of the vectors whose Gram
/// matrix is `gram`. Returned indices are sorted.
pub(crate) fn independent_subset(gram: &Mat<f64>, rel_tol: f64) -> Vec<usize> {
    let n = gram.nrows();
    if n == 0 {
        return Vec::new();
    }
    let max_diag = (0..n).map(|i| gram[(i, i)]).fold(0.0, f64::max);
    if max_diag <= 0.0 {
        return Vec::new();
    }
    if let Some(f) = SpdFactor::new(gram) {
        if f.min_pivot() > rel_tol * max_diag {
            return (0..n).collect();
        }
    }
    let qr = gram.col_piv_qr();
    let r = qr.R();
    let (fwd, _) = qr.P().arrays();
    let r00 = r[(0, 0)].abs();
    let diag = r.nrows().min(r.ncols());
    let rank = (0..diag).take_while(|&i| r[(i, i)].abs() > rel_tol * r00).count();
    let mut keep: Vec<usize> = fwd[..rank].to_vec();
    keep.sort_unstable();
    keep
}
