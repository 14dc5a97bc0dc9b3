//! The lifted quadratic program in `x = (1, v) ⊗ z ∈ R^N`, `N = (k+1)m`.
//!
//! Entry `(i, j)` of the Kronecker layout (`0 ≤ i ≤ k`, `0 ≤ j < m`) lives at
//! linear index `i·m + j`, i.e. `z` varies fastest and the first `m` entries
//! are `z` itself.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, StlsError};
use crate::structure::ProblemInstance;

/// Sparse symmetric matrix stored as a full list of `(row, col, value)`
/// entries (both triangles present), sorted and duplicate-free.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseSym {
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    fn from_map(map: BTreeMap<(usize, usize), f64>) -> Self {
        Self {
            entries: map
                .into_iter()
                .filter(|(_, v)| *v != 0.0)
                .map(|((r, c), v)| (r, c, v))
                .collect(),
        }
    }

    /// `Σ w·½(E_rc + E_cr)` over the given `(r, c, w)` terms.
    pub fn from_symmetric_terms(terms: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut map = BTreeMap::new();
        for (r, c, w) in terms {
            *map.entry((r, c)).or_insert(0.0) += 0.5 * w;
            *map.entry((c, r)).or_insert(0.0) += 0.5 * w;
        }
        Self::from_map(map)
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn to_dense(&self, dim: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(dim, dim);
        for &(r, c, v) in &self.entries {
            out[(r, c)] += v;
        }
        out
    }

    /// Trace inner product with a dense symmetric matrix.
    pub fn dot(&self, x: &DMatrix<f64>) -> f64 {
        self.entries.iter().map(|&(r, c, v)| v * x[(r, c)]).sum()
    }

    /// `xᵀ A x`.
    pub fn quad(&self, x: &DVector<f64>) -> f64 {
        self.entries.iter().map(|&(r, c, v)| v * x[r] * x[c]).sum()
    }

    pub fn add_to(&self, target: &mut DMatrix<f64>, scale: f64) {
        for &(r, c, v) in &self.entries {
            target[(r, c)] += scale * v;
        }
    }
}

/// One 2×2 minor `x_{l1} x_{l2} − x_{l3} x_{l4}` of `x` reshaped as `m × (k+1)`,
/// stored as linear indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Minor(pub [usize; 4]);

impl Minor {
    pub fn residual(&self, x: &DVector<f64>) -> f64 {
        let [a, b, c, d] = self.0;
        x[a] * x[b] - x[c] * x[d]
    }

    /// Symmetric matrix of the quadratic form `x ↦ residual(x)`.
    pub fn matrix(&self) -> SparseSym {
        let [a, b, c, d] = self.0;
        SparseSym::from_symmetric_terms([(a, b, 1.0), (c, d, -1.0)])
    }
}

/// Residuals of every constraint of the lifted quadratic program at a point.
#[derive(Debug, Clone)]
pub struct QcqpResiduals {
    /// `zᵀz − 1`.
    pub h0: f64,
    /// `xᵀ Sym(s_i e_jᵀ) x`, an `n × N` array.
    pub lifted: DMatrix<f64>,
    /// Minor residuals in the order of [`LiftedProblem::minors`].
    pub minors: Vec<f64>,
}

impl QcqpResiduals {
    pub fn max_abs(&self) -> f64 {
        self.lifted
            .iter()
            .chain(&self.minors)
            .fold(self.h0.abs(), |acc, r| acc.max(r.abs()))
    }
}

/// Lifted problem data built from a [`ProblemInstance`].
#[derive(Debug, Clone)]
pub struct LiftedProblem {
    m: usize,
    n: usize,
    k: usize,
    theta: DVector<f64>,
    /// `S_θ = (A_θ ∥ B_1 ∥ … ∥ B_k) ∈ R^{N×n}`; column `i` is `s_i`.
    s: DMatrix<f64>,
    minors: Vec<Minor>,
}

impl LiftedProblem {
    pub fn build(instance: &ProblemInstance) -> Self {
        let structure = &instance.structure;
        let (m, n, k) = (structure.m(), structure.n(), structure.k());
        let a_theta = structure
            .evaluate(&instance.theta)
            .expect("instance dimensions are validated on construction");
        let mut s = DMatrix::zeros((k + 1) * m, n);
        s.rows_mut(0, m).copy_from(&a_theta);
        for (t, b) in structure.directions().iter().enumerate() {
            s.rows_mut((t + 1) * m, m).copy_from(b);
        }
        Self {
            m,
            n,
            k,
            theta: instance.theta.clone(),
            s,
            minors: minor_set(k, m),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Lifted dimension `N = (k+1)m`.
    pub fn dim(&self) -> usize {
        (self.k + 1) * self.m
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn s_matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn s_vector(&self, i: usize) -> DVector<f64> {
        self.s.column(i).into_owned()
    }

    pub fn minors(&self) -> &[Minor] {
        &self.minors
    }

    /// Linear index of Kronecker entry `(block, j)`.
    pub fn index(&self, block: usize, j: usize) -> usize {
        block * self.m + j
    }

    fn check_ij(&self, i: usize, j: usize) -> Result<()> {
        if i >= self.n || j >= self.dim() {
            return Err(StlsError::IndexOutOfRange(format!(
                "constraint ({i}, {j}) outside {}×{}",
                self.n,
                self.dim()
            )));
        }
        Ok(())
    }

    /// Sparse `Sym(s_i e_jᵀ)` (0-based `i`, `j`).
    pub fn constraint_sparse(&self, i: usize, j: usize) -> Result<SparseSym> {
        self.check_ij(i, j)?;
        let m = self.m;
        let mut map = BTreeMap::new();
        for (p, &sp) in self.s.column(i).iter().enumerate() {
            if sp == 0.0 {
                continue;
            }
            // ½(s eⱼᵀ + eⱼ sᵀ) followed by averaging each entry with its
            // block-transposed partner.
            for (r, c) in [(p, j), (j, p)] {
                let (br, pr) = (r / m, r % m);
                let (bc, pc) = (c / m, c % m);
                let (r2, c2) = (br * m + pc, bc * m + pr);
                *map.entry((r, c)).or_insert(0.0) += 0.25 * sp;
                *map.entry((r2, c2)).or_insert(0.0) += 0.25 * sp;
            }
        }
        Ok(SparseSym::from_map(map))
    }

    /// Dense `Sym(s_i e_jᵀ)` (0-based `i`, `j`).
    pub fn constraint_matrix(&self, i: usize, j: usize) -> Result<DMatrix<f64>> {
        Ok(self.constraint_sparse(i, j)?.to_dense(self.dim()))
    }

    /// Exact residuals of all lifted constraints at `x`.
    pub fn qcqp_residuals(&self, x: &DVector<f64>) -> Result<QcqpResiduals> {
        let big_n = self.dim();
        if x.len() != big_n {
            return Err(StlsError::Dimension(format!(
                "point has length {}, lifted dimension is {big_n}",
                x.len()
            )));
        }
        let h0 = x.rows(0, self.m).norm_squared() - 1.0;
        let mut lifted = DMatrix::zeros(self.n, big_n);
        for i in 0..self.n {
            for j in 0..big_n {
                lifted[(i, j)] = self.constraint_sparse(i, j)?.quad(x);
            }
        }
        let minors = self.minors.iter().map(|l| l.residual(x)).collect();
        Ok(QcqpResiduals { h0, lifted, minors })
    }
}

/// Minor index set for `x` viewed as an `m × (k+1)` matrix, ordered by
/// `i1 < i2` (blocks) then `j1 < j2` (rows).
pub fn minor_set(k: usize, m: usize) -> Vec<Minor> {
    let mut out = Vec::with_capacity((k + 1) * k / 2 * m * m.saturating_sub(1) / 2);
    for i1 in 0..=k {
        for i2 in (i1 + 1)..=k {
            for j1 in 0..m {
                for j2 in (j1 + 1)..m {
                    out.push(Minor([
                        i1 * m + j1,
                        i2 * m + j2,
                        i1 * m + j2,
                        i2 * m + j1,
                    ]));
                }
            }
        }
    }
    out
}

/// Orthogonal projection onto `m`-block symmetric matrices: symmetrize, then
/// symmetrize every `m × m` block.
pub fn block_sym(matrix: &DMatrix<f64>, m: usize) -> Result<DMatrix<f64>> {
    let big_n = matrix.nrows();
    if !matrix.is_square() || m == 0 || !big_n.is_multiple_of(m) {
        return Err(StlsError::Dimension(format!(
            "block size {m} does not divide a square {}×{} matrix",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    let sym = (matrix + matrix.transpose()) * 0.5;
    Ok(DMatrix::from_fn(big_n, big_n, |r, c| {
        let (br, pr) = (r / m, r % m);
        let (bc, pc) = (c / m, c % m);
        0.5 * (sym[(r, c)] + sym[(br * m + pc, bc * m + pr)])
    }))
}

/// `(1, v) ⊗ z` in the lifted layout.
pub fn kron_point(v: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
    let m = z.len();
    let mut x = DVector::zeros((v.len() + 1) * m);
    x.rows_mut(0, m).copy_from(z);
    for (t, vt) in v.iter().enumerate() {
        x.rows_mut((t + 1) * m, m).copy_from(&(z * *vt));
    }
    x
}
