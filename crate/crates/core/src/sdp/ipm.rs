//! Dense primal-dual path-following interior-point method for
//!
//! ```text
//!   min ⟨C, Y⟩  s.t.  ⟨Qᵀ A_i Q, Y⟩ = b_i,  Y ⪰ 0
//! ```
//!
//! The variable `Y` is `r × r`, every constraint matrix `A_i` is a sparse
//! symmetric matrix in an ambient space of size `N`, and `Q` is a fixed
//! `N × r` basis (the identity when absent). Keeping constraints in the ambient
//! space lets the Schur complement be assembled from entries of `Q Y Qᵀ` and
//! `Q Z⁻¹ Qᵀ` alone.
//!
//! Search directions are HKM directions with a Mehrotra predictor-corrector;
//! the Schur complement is factored by dense Cholesky.

use faer::Mat;
use log::{debug, trace};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::lift::SparseSym;
use crate::linalg::{independent_subset, SpdFactor};

use super::SolveStatus;

/// Extra iterations taken after the tolerances are first met.
const POLISH_STEPS: usize = 3;

pub(crate) struct ConicProblem {
    /// `Q`, `N × r`. `None` means `Q = I`.
    pub basis: Option<DMatrix<f64>>,
    pub ambient_dim: usize,
    /// Objective in the reduced space, `r × r`.
    pub c: DMatrix<f64>,
    pub a: Vec<SparseSym>,
    pub b: DVector<f64>,
}

pub(crate) struct IpmSettings {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: usize,
}

pub(crate) struct ConicSolution {
    /// Primal matrix in the reduced space.
    pub y_mat: DMatrix<f64>,
    /// Multipliers, one per constraint (zero for dropped dependent rows).
    pub y: DVector<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_value: f64,
    pub dual_value: f64,
}

impl ConicProblem {
    pub fn reduced_dim(&self) -> usize {
        self.c.nrows()
    }

    /// `Q M Qᵀ`.
    fn lift(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.basis {
            Some(q) => q * m * q.transpose(),
            None => m.clone(),
        }
    }

    /// `Qᵀ M Q`.
    fn project(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.basis {
            Some(q) => q.transpose() * m * q,
            None => m.clone(),
        }
    }

    /// `A(·)` evaluated on an ambient (already lifted) matrix.
    fn apply(&self, rows: &[usize], ambient: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.a[i].dot(ambient)))
    }

    /// `Σ y_i Qᵀ A_i Q` over the given rows.
    fn adjoint(&self, rows: &[usize], y: &DVector<f64>) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.ambient_dim, self.ambient_dim);
        for (&i, &yi) in rows.iter().zip(y.iter()) {
            if yi != 0.0 {
                self.a[i].add_to(&mut acc, yi);
            }
        }
        self.project(&acc)
    }

    /// `M_ij = tr(A_i G₁ A_j G₂)` for the selected rows (ambient `G₁`, `G₂`),
    /// computed as `Σ_{(c,d)} (A_j)_cd (G₂ A_i G₁)_dc`.
    fn schur(&self, rows: &[usize], g1: &DMatrix<f64>, g2: &DMatrix<f64>) -> Mat<f64> {
        let n = rows.len();
        let dim = g1.nrows();
        let (g1, g2) = (g1.as_slice(), g2.as_slice());
        let cols: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map_init(
                || vec![0.0; dim * dim],
                |t, ii| {
                    t.fill(0.0);
                    for &(a, b, va) in &self.a[rows[ii]].entries {
                        let g2_col = &g2[a * dim..(a + 1) * dim];
                        for (c, t_col) in t.chunks_exact_mut(dim).enumerate() {
                            let w = va * g1[b + c * dim];
                            if w != 0.0 {
                                for (tv, gv) in t_col.iter_mut().zip(g2_col) {
                                    *tv += w * gv;
                                }
                            }
                        }
                    }
                    (0..=ii)
                        .map(|jj| {
                            self.a[rows[jj]]
                                .entries
                                .iter()
                                .map(|&(c, d, vc)| vc * t[d + c * dim])
                                .sum()
                        })
                        .collect()
                },
            )
            .collect();
        let mut out = Mat::zeros(n, n);
        for (ii, col) in cols.iter().enumerate() {
            for (jj, v) in col.iter().enumerate() {
                out[(ii, jj)] = *v;
                out[(jj, ii)] = *v;
            }
        }
        out
    }
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

/// Largest `α ≤ cap` keeping `X + α·D ⪰ 0`, given the Cholesky factor of `X`.
fn max_step(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>, d: &DMatrix<f64>) -> f64 {
    let l = chol.l();
    let li_d = l
        .solve_lower_triangular(d)
        .expect("Cholesky factor is nonsingular");
    let w = l
        .solve_lower_triangular(&li_d.transpose())
        .expect("Cholesky factor is nonsingular");
    let lmin = crate::linalg::min_eigenvalue(&sym(&w));
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

struct Iterate {
    y_mat: DMatrix<f64>,
    y: DVector<f64>,
    z: DMatrix<f64>,
}

struct Direction {
    dx: DMatrix<f64>,
    dy: DVector<f64>,
    dz: DMatrix<f64>,
}

/// Schur complement solver: Cholesky of `M + δI` with the smallest `δ` that
/// makes it succeed, followed by iterative refinement against `M` itself.
struct SchurSolver {
    m: Mat<f64>,
    factor: SpdFactor,
    shifted: bool,
}

impl SchurSolver {
    fn new(m: Mat<f64>) -> Option<Self> {
        if let Some(factor) = SpdFactor::new(&m) {
            return Some(Self {
                m,
                factor,
                shifted: false,
            });
        }
        let n = m.nrows();
        let dmax = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
        for exp in [-14, -13, -12, -11, -10, -9, -8] {
            let mut shifted = m.clone();
            for i in 0..n {
                shifted[(i, i)] += dmax * 10f64.powi(exp);
            }
            if let Some(factor) = SpdFactor::new(&shifted) {
                trace!("schur complement shifted by 1e{exp} relative");
                return Some(Self {
                    m,
                    factor,
                    shifted: true,
                });
            }
        }
        None
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.m.nrows();
        let xm = Mat::from_fn(n, 1, |i, _| x[i]);
        let y = &self.m * &xm;
        DVector::from_fn(n, |i, _| y[(i, 0)])
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut x = self.factor.solve(rhs);
        if !self.shifted {
            return x;
        }
        let target = 1e-14 * rhs.norm();
        let mut res_norm = f64::INFINITY;
        for _ in 0..20 {
            let res = rhs - self.apply(&x);
            let nrm = res.norm();
            if nrm <= target || nrm >= 0.9 * res_norm {
                break;
            }
            res_norm = nrm;
            x += self.factor.solve(&res);
        }
        x
    }
}

pub(crate) fn solve_conic(problem: &ConicProblem, settings: &IpmSettings) -> ConicSolution {
    let r = problem.reduced_dim();
    let total = problem.a.len();
    let all_rows: Vec<usize> = (0..total).collect();

    // Gram matrix of the reduced constraints: tr(A_i P A_j P), P = QQᵀ.
    let p = problem.lift(&DMatrix::identity(r, r));
    let gram = problem.schur(&all_rows, &p, &p);
    let rows = independent_subset(&gram, 1e-11);
    if rows.len() < total {
        debug!("dropped {} linearly dependent constraints", total - rows.len());
    }
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|&i| problem.b[i]));
    let a_norm_max = rows
        .iter()
        .map(|&i| gram[(i, i)].max(0.0).sqrt())
        .fold(0.0, f64::max);
    let c = &problem.c;
    let b_norm = b.norm();
    let c_norm = c.norm();

    // Starting point in the style of SDPT3.
    let rf = r as f64;
    let xi = rows
        .iter()
        .map(|&i| rf * (1.0 + problem.b[i].abs()) / (1.0 + gram[(i, i)].max(0.0).sqrt()))
        .fold(10f64.max(rf.sqrt()), f64::max);
    drop(gram);
    let eta = 10f64.max(rf.sqrt()).max(c_norm.max(a_norm_max));
    let mut it = Iterate {
        y_mat: DMatrix::identity(r, r) * xi,
        y: DVector::zeros(rows.len()),
        z: DMatrix::identity(r, r) * eta,
    };

    let merit_of = |relp: f64, reld: f64, relgap: f64| relp.max(reld).max(relgap);
    let mut best: Option<(f64, f64, f64, Iterate, usize)> = None;
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    let mut relp_history: Vec<f64> = Vec::new();
    let mut stalled_steps = 0;
    let mut polish_until: Option<usize> = None;

    for iter in 0..settings.max_iter {
        iterations = iter;
        let gy = problem.lift(&it.y_mat);
        let rp = &b - problem.apply(&rows, &gy);
        let rd = c - problem.adjoint(&rows, &it.y) - &it.z;
        let pobj = inner(c, &it.y_mat);
        let dobj = b.dot(&it.y);
        let relp = rp.norm() / (1.0 + b_norm);
        let reld = rd.norm() / (1.0 + c_norm);
        let gap_abs = (pobj - dobj).abs();
        let relgap = gap_abs / (1.0 + pobj.abs());
        let merit = merit_of(relp, reld, relgap / settings.gap_tol * settings.feas_tol);
        trace!(
            "iter {iter:3} pobj {pobj:+.9e} dobj {dobj:+.9e} relp {relp:.2e} reld {reld:.2e} gap {relgap:.2e}"
        );
        let meets = relp <= settings.feas_tol && reld <= settings.feas_tol && relgap <= settings.gap_tol;
        if (meets || polish_until.is_none()) && best.as_ref().is_none_or(|bst| merit <= bst.0) {
            best = Some((
                merit,
                pobj,
                dobj,
                Iterate {
                    y_mat: it.y_mat.clone(),
                    y: it.y.clone(),
                    z: it.z.clone(),
                },
                iter,
            ));
        }
        if meets && polish_until.is_none() {
            // A few more steps usually tighten the solution considerably
            // before the Schur complement becomes too ill-conditioned.
            status = SolveStatus::Optimal;
            polish_until = Some(iter + POLISH_STEPS);
        }
        if polish_until.is_some_and(|last| iter >= last) {
            break;
        }
        relp_history.push(relp);
        if polish_until.is_none() && iter >= 40 && relp > 1e3 * settings.feas_tol {
            let old = relp_history[iter - 20];
            if relp > 0.9 * old && reld <= 1e3 * settings.feas_tol {
                status = SolveStatus::Infeasible;
                break;
            }
        }

        let mu = inner(&it.y_mat, &it.z) / rf;
        let (z_chol, x_chol) = match (
            nalgebra::Cholesky::new(sym(&it.z)),
            nalgebra::Cholesky::new(sym(&it.y_mat)),
        ) {
            (Some(zc), Some(xc)) => (zc, xc),
            _ => {
                status = SolveStatus::NumericalFailure;
                break;
            }
        };
        let z_inv = sym(&z_chol.inverse());
        let gz = problem.lift(&z_inv);
        let Some(schur) = SchurSolver::new(problem.schur(&rows, &gy, &gz)) else {
            status = SolveStatus::NumericalFailure;
            break;
        };

        let direction = |target: f64, corr: Option<&DMatrix<f64>>| -> Direction {
            let mut h = &z_inv * target - &it.y_mat - &it.y_mat * &rd * &z_inv;
            if let Some(cm) = corr {
                h -= cm;
            }
            let h = sym(&h);
            let rhs = &rp - problem.apply(&rows, &problem.lift(&h));
            let dy = schur.solve(&rhs);
            let dz = &rd - problem.adjoint(&rows, &dy);
            let mut dx = &z_inv * target - &it.y_mat - &it.y_mat * &dz * &z_inv;
            if let Some(cm) = corr {
                dx -= cm;
            }
            Direction {
                dx: sym(&dx),
                dy,
                dz: sym(&dz),
            }
        };

        // Predictor.
        let pred = direction(0.0, None);
        let ap = max_step(&x_chol, &pred.dx).min(1.0);
        let ad = max_step(&z_chol, &pred.dz).min(1.0);
        let x_aff = &it.y_mat + &pred.dx * ap;
        let z_aff = &it.z + &pred.dz * ad;
        let mu_aff = inner(&x_aff, &z_aff) / rf;
        let sigma = (mu_aff / mu).max(0.0).powi(3).min(1.0);

        // Corrector.
        let corr = &pred.dx * &pred.dz * &z_inv;
        let dirn = direction(sigma * mu, Some(&corr));
        let tau = 0.9 + 0.09 * ap.min(ad);
        let ap = (tau * max_step(&x_chol, &dirn.dx)).min(1.0);
        let ad = (tau * max_step(&z_chol, &dirn.dz)).min(1.0);

        if ap < 1e-10 && ad < 1e-10 {
            stalled_steps += 1;
            if stalled_steps >= 3 {
                status = SolveStatus::NumericalFailure;
                break;
            }
        } else {
            stalled_steps = 0;
        }

        it.y_mat += &dirn.dx * ap;
        it.y_mat = sym(&it.y_mat);
        it.y += &dirn.dy * ad;
        it.z += &dirn.dz * ad;
        it.z = sym(&it.z);
        iterations = iter + 1;
    }

    if polish_until.is_some() {
        status = SolveStatus::Optimal;
    }
    let (_, pobj, dobj, final_it, at) = best.expect("at least one iterate was evaluated");
    debug!("returning iterate {at} of {iterations} (status {status:?})");

    let mut y_full = DVector::zeros(total);
    for (&i, &v) in rows.iter().zip(final_it.y.iter()) {
        y_full[i] = v;
    }
    ConicSolution {
        y_mat: final_it.y_mat,
        y: y_full,
        status,
        iterations,
        primal_value: pobj,
        dual_value: dobj,
    }
}
