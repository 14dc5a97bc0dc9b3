//! The semidefinite relaxation of the lifted problem, its dual, and the
//! interior-point solver used for both.

mod ipm;

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Result, StlsError};
use crate::lift::{block_sym, LiftedProblem, SparseSym};
use crate::linalg::{min_eigenvalue, range_split};
use crate::structure::{ProblemInstance, WeightSpec};

use ipm::{solve_conic, ConicProblem, IpmSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
    NumericalFailure,
}

/// What an equality constraint of [`SdpProblem`] encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `tr(X_zz) = 1`.
    Trace,
    /// `⟨Sym(s_i e_jᵀ), X⟩ = 0`.
    Lifted { i: usize, j: usize },
    /// Minor number `l` of the lifted problem.
    BlockSym(usize),
    Other,
}

#[derive(Debug, Clone)]
pub struct EqConstraint {
    pub kind: ConstraintKind,
    pub matrix: SparseSym,
    pub rhs: f64,
}

/// `min ⟨C, X⟩ s.t. ⟨A_i, X⟩ = b_i, X ⪰ 0`.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub dim: usize,
    pub objective: DMatrix<f64>,
    pub constraints: Vec<EqConstraint>,
    /// `S_θ` and the block size `m` when the problem came from a lifting.
    lifting: Option<(DMatrix<f64>, usize)>,
}

/// Callback interface for handing the problem to another conic solver.
pub trait ExternalSolver: Send + Sync {
    /// Receives `C` and the list of `(A_i, b_i)`; returns `X` and one
    /// multiplier per constraint, with the dual slack `C − Σ y_i A_i`.
    fn solve(&self, c: &DMatrix<f64>, constraints: &[(DMatrix<f64>, f64)]) -> Result<ExternalSolution>;
}

#[derive(Debug, Clone)]
pub struct ExternalSolution {
    pub x: DMatrix<f64>,
    pub multipliers: DVector<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
}

#[derive(Clone, Default)]
pub enum SolverKind {
    #[default]
    Internal,
    External(Arc<dyn ExternalSolver>),
}

impl fmt::Debug for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverKind::Internal => f.write_str("Internal"),
            SolverKind::External(_) => f.write_str("External(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: usize,
    pub solver_kind: SolverKind,
    /// Restrict `X` to the face `X S_θ = 0` implied by the lifted
    /// constraints instead of imposing them one by one.
    pub facial_reduction: bool,
    /// Refine the extracted minimizer by a few local steps started from the
    /// relaxation's kernel vector. Only an improvement is kept.
    pub polish: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            max_iter: 200,
            solver_kind: SolverKind::Internal,
            facial_reduction: true,
            polish: true,
        }
    }
}

/// `(γ, μ, Σ)` with dual slack `C − γT − Σ μ_ij Sym(s_i e_jᵀ) − Σ`.
#[derive(Debug, Clone)]
pub struct DualCertificate {
    pub gamma: f64,
    /// `n × N`.
    pub mu: DMatrix<f64>,
    /// `N × N`, block skew-symmetric.
    pub sigma: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: DMatrix<f64>,
    pub dual: DualCertificate,
    pub primal_value: f64,
    pub dual_value: f64,
    pub status: SolveStatus,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CertificateVerdict {
    Valid { bound: f64, min_eigenvalue: f64 },
    Invalid { reason: String },
}

impl CertificateVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, CertificateVerdict::Valid { .. })
    }
}

/// `0_m ⊕ (W ⊗ I_m)`.
pub fn objective_matrix(m: usize, weight: &WeightSpec, k: usize) -> DMatrix<f64> {
    let w = weight.matrix(k);
    let big_n = (k + 1) * m;
    let mut c = DMatrix::zeros(big_n, big_n);
    for s in 0..k {
        for t in 0..k {
            let wst = w[(s, t)];
            if wst == 0.0 {
                continue;
            }
            for p in 0..m {
                c[((s + 1) * m + p, (t + 1) * m + p)] = wst;
            }
        }
    }
    c
}

/// `Σ_{p<m} E_pp`.
fn trace_matrix(m: usize) -> SparseSym {
    SparseSym::from_symmetric_terms((0..m).map(|p| (p, p, 1.0)))
}

pub fn assemble_primal(lifted: &LiftedProblem, weight: &WeightSpec) -> Result<SdpProblem> {
    let (m, n, k) = (lifted.m(), lifted.n(), lifted.k());
    if let Some(d) = weight.dim() {
        if d != k {
            return Err(StlsError::Dimension(format!("weight has dimension {d}, expected {k}")));
        }
    }
    let big_n = lifted.dim();
    let mut constraints = Vec::with_capacity(1 + n * big_n + lifted.minors().len());
    constraints.push(EqConstraint {
        kind: ConstraintKind::Trace,
        matrix: trace_matrix(m),
        rhs: 1.0,
    });
    for i in 0..n {
        for j in 0..big_n {
            constraints.push(EqConstraint {
                kind: ConstraintKind::Lifted { i, j },
                matrix: lifted.constraint_sparse(i, j)?,
                rhs: 0.0,
            });
        }
    }
    for (l, minor) in lifted.minors().iter().enumerate() {
        constraints.push(EqConstraint {
            kind: ConstraintKind::BlockSym(l),
            matrix: minor.matrix(),
            rhs: 0.0,
        });
    }
    Ok(SdpProblem {
        dim: big_n,
        objective: objective_matrix(m, weight, k),
        constraints,
        lifting: Some((lifted.s_matrix().clone(), m)),
    })
}

impl SdpProblem {
    pub fn new(objective: DMatrix<f64>, constraints: Vec<EqConstraint>) -> Result<Self> {
        let dim = objective.nrows();
        if objective.ncols() != dim {
            return Err(StlsError::Dimension("objective must be square".into()));
        }
        if (&objective - objective.transpose()).amax() > 1e-12 * (1.0 + objective.amax()) {
            return Err(StlsError::Input("objective must be symmetric".into()));
        }
        for c in &constraints {
            if c.matrix.entries.iter().any(|&(r, col, _)| r >= dim || col >= dim) {
                return Err(StlsError::Dimension("constraint entry outside the matrix".into()));
            }
        }
        Ok(Self {
            dim,
            objective,
            constraints,
            lifting: None,
        })
    }

    pub fn count(&self, pred: impl Fn(ConstraintKind) -> bool) -> usize {
        self.constraints.iter().filter(|c| pred(c.kind)).count()
    }

    /// Writes the data as text: a header `N M`, the right-hand sides, then
    /// one line `index row col value` per upper-triangular nonzero, with
    /// index 0 for the objective and 1-based rows, columns and indices.
    pub fn write_sparse<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.dim, self.constraints.len())?;
        let rhs: Vec<String> = self.constraints.iter().map(|c| format!("{}", c.rhs)).collect();
        writeln!(out, "{}", rhs.join(" "))?;
        for r in 0..self.dim {
            for c in r..self.dim {
                let v = self.objective[(r, c)];
                if v != 0.0 {
                    writeln!(out, "0 {} {} {v:e}", r + 1, c + 1)?;
                }
            }
        }
        for (idx, con) in self.constraints.iter().enumerate() {
            for &(r, c, v) in &con.matrix.entries {
                if r <= c {
                    writeln!(out, "{} {} {} {v:e}", idx + 1, r + 1, c + 1)?;
                }
            }
        }
        Ok(())
    }

    fn settings(config: &SolverConfig) -> IpmSettings {
        IpmSettings {
            feas_tol: config.feas_tol,
            gap_tol: config.gap_tol,
            max_iter: config.max_iter,
        }
    }

    /// Maps one multiplier per constraint to `(γ, μ, Σ)`.
    fn map_multipliers(&self, y: &DVector<f64>) -> DualCertificate {
        let n = self.lifting.as_ref().map_or(0, |(s, _)| s.ncols());
        let mut gamma = 0.0;
        let mut mu = DMatrix::zeros(n, self.dim);
        let mut sigma = DMatrix::zeros(self.dim, self.dim);
        for (con, &yi) in self.constraints.iter().zip(y.iter()) {
            match con.kind {
                ConstraintKind::Trace => gamma += yi,
                ConstraintKind::Lifted { i, j } => mu[(i, j)] += yi,
                ConstraintKind::BlockSym(_) | ConstraintKind::Other => con.matrix.add_to(&mut sigma, yi),
            }
        }
        DualCertificate { gamma, mu, sigma }
    }

    fn solve_generic(&self, config: &SolverConfig) -> SdpSolution {
        let conic = ConicProblem {
            basis: None,
            ambient_dim: self.dim,
            c: self.objective.clone(),
            a: self.constraints.iter().map(|c| c.matrix.clone()).collect(),
            b: DVector::from_iterator(self.constraints.len(), self.constraints.iter().map(|c| c.rhs)),
        };
        let sol = solve_conic(&conic, &Self::settings(config));
        SdpSolution {
            dual: self.map_multipliers(&sol.y),
            x: sol.y_mat,
            primal_value: sol.primal_value,
            dual_value: sol.dual_value,
            status: sol.status,
            iterations: sol.iterations,
        }
    }

    /// Solves on the face `{X ⪰ 0 : X S_θ = 0}`. On block-symmetric matrices
    /// the lifted constraints read `(X s_i)_j = 0`, so together they are
    /// exactly `X S_θ = 0`; with `Q` an orthonormal basis of `null(S_θᵀ)` the
    /// variable becomes `X = Q Y Qᵀ` and only trace and minor constraints
    /// remain. The multipliers of the dropped constraints are rebuilt
    /// afterwards from the reduced dual slack.
    fn solve_reduced(&self, s: &DMatrix<f64>, config: &SolverConfig) -> SdpSolution {
        let big_n = self.dim;
        let split = range_split(s, 1e-12);
        let q = split.complement;
        let u = split.range;
        let kept: Vec<usize> = (0..self.constraints.len())
            .filter(|&i| !matches!(self.constraints[i].kind, ConstraintKind::Lifted { .. }))
            .collect();
        let conic = ConicProblem {
            basis: Some(q.clone()),
            ambient_dim: big_n,
            c: q.transpose() * &self.objective * &q,
            a: kept.iter().map(|&i| self.constraints[i].matrix.clone()).collect(),
            b: DVector::from_iterator(kept.len(), kept.iter().map(|&i| self.constraints[i].rhs)),
        };
        let sol = solve_conic(&conic, &Self::settings(config));
        let x = &q * &sol.y_mat * q.transpose();
        let x = (&x + x.transpose()) * 0.5;

        let mut y_full = DVector::zeros(self.constraints.len());
        for (&i, &yi) in kept.iter().zip(sol.y.iter()) {
            y_full[i] = yi;
        }
        let mut dual = self.map_multipliers(&y_full);

        // D = C − γT − Σ σ_l B_l; pick the range-side blocks of the slack.
        let mut d = self.objective.clone();
        for (&i, &yi) in kept.iter().zip(sol.y.iter()) {
            self.constraints[i].matrix.add_to(&mut d, -yi);
        }
        let rho = u.ncols();
        if rho > 0 {
            let du = &d * &u;
            let utdu = u.transpose() * &du;
            let alpha = 1.0;
            let h = &q * (q.transpose() * &du)
                + &u * ((&utdu - DMatrix::identity(rho, rho) * alpha) * 0.5);
            let r = u.transpose() * s;
            let rrt = &r * r.transpose();
            let rrt_inv = rrt
                .clone()
                .cholesky()
                .map(|c| c.inverse())
                .or_else(|| rrt.clone().try_inverse())
                .unwrap_or_else(|| DMatrix::zeros(rho, rho));
            let kmat = &h * rrt_inv * &r;
            dual.mu = kmat.transpose() * 2.0;
            let w = &u * h.transpose() + &h * u.transpose();
            let m = self.lifting.as_ref().map_or(1, |(_, m)| *m);
            let w_bs = block_sym(&w, m).expect("dimension is a multiple of m");
            dual.sigma += &w - w_bs;
        }

        SdpSolution {
            x,
            dual,
            primal_value: sol.primal_value,
            dual_value: sol.dual_value,
            status: sol.status,
            iterations: sol.iterations,
        }
    }

    fn solve_external(&self, ext: &dyn ExternalSolver) -> Result<SdpSolution> {
        let dense: Vec<(DMatrix<f64>, f64)> = self
            .constraints
            .iter()
            .map(|c| (c.matrix.to_dense(self.dim), c.rhs))
            .collect();
        let out = ext.solve(&self.objective, &dense)?;
        if out.x.shape() != (self.dim, self.dim) || out.multipliers.len() != self.constraints.len() {
            return Err(StlsError::Solver("external solver returned wrong dimensions".into()));
        }
        let dual_value = self
            .constraints
            .iter()
            .zip(out.multipliers.iter())
            .map(|(c, y)| c.rhs * y)
            .sum();
        Ok(SdpSolution {
            primal_value: self.objective.dot(&out.x),
            dual_value,
            dual: self.map_multipliers(&out.multipliers),
            x: out.x,
            status: out.status,
            iterations: out.iterations,
        })
    }

    fn reducible(&self) -> bool {
        let Some((s, _)) = &self.lifting else {
            return false;
        };
        let lifted = self.count(|k| matches!(k, ConstraintKind::Lifted { .. }));
        lifted == s.ncols() * self.dim && self.count(|k| k == ConstraintKind::Other) == 0
    }
}

pub fn solve(problem: &SdpProblem, config: &SolverConfig) -> Result<SdpSolution> {
    if !(config.feas_tol > 0.0 && config.gap_tol > 0.0) || config.max_iter == 0 {
        return Err(StlsError::Input("solver tolerances and iteration cap must be positive".into()));
    }
    match &config.solver_kind {
        SolverKind::External(ext) => problem.solve_external(ext.as_ref()),
        SolverKind::Internal => {
            if config.facial_reduction && problem.reducible() {
                let (s, _) = problem.lifting.as_ref().expect("checked by reducible");
                Ok(problem.solve_reduced(s, config))
            } else {
                Ok(problem.solve_generic(config))
            }
        }
    }
}

/// Relative size below which a restricted constraint counts as satisfied
/// identically on the current face.
const FACE_TOL: f64 = 1e-4;

/// Moves a solution within its optimal face to lower rank: writes
/// `X = F Fᵀ` (eigenvalues below `rel_tol·λ₁` dropped) and repeatedly steps
/// `F Fᵀ → F (I + tΔ) Fᵀ` along a `Δ` orthogonal to every `FᵀA_iF` and to
/// `FᵀCF` until the factor hits the boundary. Constraint values and the
/// objective are unchanged; the loop stops when no such `Δ` exists.
pub fn reduce_rank(problem: &SdpProblem, x: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (vals, vecs) = crate::linalg::sym_eigen(x);
    let l1 = vals.iter().copied().fold(0.0, f64::max);
    if l1 <= 0.0 {
        return x.clone();
    }
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > rel_tol * l1).collect();
    let mut f = DMatrix::from_fn(x.nrows(), keep.len(), |r, c| vecs[(r, keep[c])] * vals[keep[c]].sqrt());

    let objective = SparseSym {
        entries: (0..problem.dim)
            .flat_map(|r| (0..problem.dim).map(move |c| (r, c)))
            .filter_map(|(r, c)| {
                let v = problem.objective[(r, c)];
                (v != 0.0).then_some((r, c, v))
            })
            .collect(),
    };
    while f.ncols() > 1 {
        let r = f.ncols();
        let pairs: Vec<(usize, usize)> = (0..r).flat_map(|a| (a..r).map(move |b| (a, b))).collect();
        let mats = problem.constraints.iter().map(|c| &c.matrix).chain(std::iter::once(&objective));
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for a_mat in mats {
            let mut restricted = DMatrix::zeros(r, r);
            for &(i, j, v) in &a_mat.entries {
                for a in 0..r {
                    let fia = f[(i, a)] * v;
                    if fia == 0.0 {
                        continue;
                    }
                    for b in 0..r {
                        restricted[(a, b)] += fia * f[(j, b)];
                    }
                }
            }
            {
                rows.push(
                    pairs
                        .iter()
                        .map(|&(a, b)| if a == b { restricted[(a, a)] } else { 2.0 * restricted[(a, b)] })
                        .collect(),
                );
            }
        }
        // Restrictions that vanish up to solver accuracy impose nothing.
        let norms: Vec<f64> = rows.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        let top = norms.iter().copied().fold(0.0, f64::max);
        let mut rows: Vec<Vec<f64>> = rows
            .into_iter()
            .zip(&norms)
            .filter(|(_, &nrm)| nrm > FACE_TOL * top)
            .map(|(r, _)| r)
            .collect();
        let p = pairs.len();
        while rows.len() < p {
            rows.push(vec![0.0; p]);
        }
        let m = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        let gram = m.transpose() * &m;
        let (gv, gvec) = crate::linalg::sym_eigen(&gram);
        if gv[p - 1] <= 0.0 || gv[0] > FACE_TOL * FACE_TOL * gv[p - 1] {
            break;
        }
        let mut delta = DMatrix::zeros(r, r);
        for (idx, &(a, b)) in pairs.iter().enumerate() {
            delta[(a, b)] = gvec[(idx, 0)];
            delta[(b, a)] = gvec[(idx, 0)];
        }
        let (dv, _) = crate::linalg::sym_eigen(&delta);
        let (lo, hi) = (dv[0], dv[r - 1]);
        let t = if lo < 0.0 { -1.0 / lo } else { -1.0 / hi };
        let g = DMatrix::identity(r, r) + delta * t;
        let (ev, evec) = crate::linalg::sym_eigen(&g);
        let gmax = ev[r - 1];
        let cols: Vec<usize> = (0..r).filter(|&i| ev[i] > 1e-12 * gmax).collect();
        if cols.len() >= r {
            break;
        }
        let root = DMatrix::from_fn(r, cols.len(), |i, c| evec[(i, cols[c])] * ev[cols[c]].sqrt());
        f = &f * root;
    }
    &f * f.transpose()
}

/// Shor relaxation of the kernel representation in the variables
/// `(x₀, z, v) ∈ R^{1+m+k}`: `min ⟨W, X_vv⟩` subject to `X₀₀ = 1`,
/// `tr X_zz = 1` and the homogenized bilinear constraints
/// `x₀·zᵀa_i + Σ_t v_t·zᵀB_t e_i = 0` for every column `i`.
pub fn naive_relaxation_problem(instance: &ProblemInstance) -> Result<SdpProblem> {
    let structure = &instance.structure;
    let (m, n, k) = (structure.m(), structure.n(), structure.k());
    let a_theta = structure.evaluate(&instance.theta)?;
    let dim = 1 + m + k;
    let w = instance.weight.matrix(k);
    let mut objective = DMatrix::zeros(dim, dim);
    objective.view_mut((1 + m, 1 + m), (k, k)).copy_from(&w);

    let mut constraints = vec![
        EqConstraint {
            kind: ConstraintKind::Other,
            matrix: SparseSym::from_symmetric_terms([(0, 0, 1.0)]),
            rhs: 1.0,
        },
        EqConstraint {
            kind: ConstraintKind::Other,
            matrix: SparseSym::from_symmetric_terms((0..m).map(|p| (1 + p, 1 + p, 1.0))),
            rhs: 1.0,
        },
    ];
    for i in 0..n {
        let mut terms = Vec::new();
        for p in 0..m {
            terms.push((0, 1 + p, a_theta[(p, i)]));
            for (t, b) in structure.directions().iter().enumerate() {
                terms.push((1 + p, 1 + m + t, b[(p, i)]));
            }
        }
        let matrix = SparseSym::from_symmetric_terms(terms);
        if matrix.nnz() > 0 {
            constraints.push(EqConstraint {
                kind: ConstraintKind::Other,
                matrix,
                rhs: 0.0,
            });
        }
    }
    SdpProblem::new(objective, constraints)
}

pub fn naive_relaxation_value(instance: &ProblemInstance, config: &SolverConfig) -> Result<f64> {
    let problem = naive_relaxation_problem(instance)?;
    let sol = solve(&problem, config)?;
    if sol.status == SolveStatus::NumericalFailure {
        return Err(StlsError::Solver("naive relaxation: numerical failure".into()));
    }
    Ok(sol.primal_value)
}

/// Dual slack `C − γT − Sym(S_θ μ) − Σ`.
pub fn dual_slack(lifted: &LiftedProblem, weight: &WeightSpec, dual: &DualCertificate) -> Result<DMatrix<f64>> {
    let (m, n, big_n) = (lifted.m(), lifted.n(), lifted.dim());
    if dual.mu.shape() != (n, big_n) || dual.sigma.shape() != (big_n, big_n) {
        return Err(StlsError::Dimension(format!(
            "certificate shapes μ {:?}, Σ {:?}; expected ({n}, {big_n}) and ({big_n}, {big_n})",
            dual.mu.shape(),
            dual.sigma.shape()
        )));
    }
    let mut slack = objective_matrix(m, weight, lifted.k());
    for p in 0..m {
        slack[(p, p)] -= dual.gamma;
    }
    slack -= block_sym(&(lifted.s_matrix() * &dual.mu), m)?;
    slack -= &dual.sigma;
    Ok(slack)
}

/// Checks a dual triple; when valid, `γ` is a lower bound on the optimal
/// value of the structured problem.
pub fn verify_certificate(
    lifted: &LiftedProblem,
    weight: &WeightSpec,
    gamma: f64,
    mu: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    tol: f64,
) -> CertificateVerdict {
    let dual = DualCertificate {
        gamma,
        mu: mu.clone(),
        sigma: sigma.clone(),
    };
    let slack = match dual_slack(lifted, weight, &dual) {
        Ok(s) => s,
        Err(e) => return CertificateVerdict::Invalid { reason: e.to_string() },
    };
    if !gamma.is_finite() || slack.iter().any(|v| !v.is_finite()) {
        return CertificateVerdict::Invalid {
            reason: "non-finite entries".into(),
        };
    }
    let scale = 1.0 + sigma.amax();
    let asym = (sigma - sigma.transpose()).amax();
    if asym > tol * scale {
        return CertificateVerdict::Invalid {
            reason: format!("Σ is not symmetric (deviation {asym:.2e})"),
        };
    }
    let bs_part = block_sym(sigma, lifted.m()).expect("shape checked").amax();
    if bs_part > tol * scale {
        return CertificateVerdict::Invalid {
            reason: format!("Σ is not block skew-symmetric (block-symmetric part {bs_part:.2e})"),
        };
    }
    let lmin = min_eigenvalue(&slack);
    if lmin < -tol {
        return CertificateVerdict::Invalid {
            reason: format!("dual slack is not PSD (λ_min = {lmin:.3e})"),
        };
    }
    CertificateVerdict::Valid {
        bound: gamma,
        min_eigenvalue: lmin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::AffineStructure;

    fn example_structure() -> AffineStructure {
        // ((1, u), (u, u))
        AffineStructure::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            vec![DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 1.0])],
        )
        .unwrap()
    }

    fn example(theta: f64) -> ProblemInstance {
        ProblemInstance::unweighted(example_structure(), DVector::from_element(1, theta)).unwrap()
    }

    #[test]
    fn constraint_counts() {
        let inst = example(0.5);
        let lifted = LiftedProblem::build(&inst);
        let p = assemble_primal(&lifted, &inst.weight).unwrap();
        assert_eq!(p.dim, 4);
        assert_eq!(p.constraints.len(), 10);
        assert_eq!(p.count(|k| k == ConstraintKind::Trace), 1);
        assert_eq!(p.count(|k| matches!(k, ConstraintKind::BlockSym(_))), 1);

        let h = ProblemInstance::unweighted(
            AffineStructure::hankel(3, 4).unwrap(),
            DVector::from_element(6, 1.0),
        )
        .unwrap();
        let lifted = LiftedProblem::build(&h);
        let p = assemble_primal(&lifted, &h.weight).unwrap();
        // C(7,2)·C(3,2) minors
        assert_eq!(p.count(|k| matches!(k, ConstraintKind::BlockSym(_))), 21 * 3);
        assert_eq!(p.count(|k| matches!(k, ConstraintKind::Lifted { .. })), 4 * 21);
    }

    #[test]
    fn objective_matrix_shapes() {
        let c = objective_matrix(2, &WeightSpec::Identity, 2);
        assert_eq!(c, DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.0, 1.0, 1.0, 1.0, 1.0])));
        let c = objective_matrix(2, &WeightSpec::diagonal01(vec![0.0, 0.0]).unwrap(), 2);
        assert_eq!(c.amax(), 0.0);
        let w = WeightSpec::dense(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let c = objective_matrix(1, &w, 2);
        assert_eq!(c[(1, 2)], 1.0);
        assert_eq!(c[(2, 2)], 2.0);
    }

    #[test]
    fn trivial_certificate() {
        let inst = example(3.0);
        let lifted = LiftedProblem::build(&inst);
        let v = verify_certificate(
            &lifted,
            &inst.weight,
            0.0,
            &DMatrix::zeros(2, 4),
            &DMatrix::zeros(4, 4),
            1e-9,
        );
        assert_eq!(
            v,
            CertificateVerdict::Valid {
                bound: 0.0,
                min_eigenvalue: 0.0
            }
        );
        let bad = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.1 } else { 0.0 });
        let v = verify_certificate(&lifted, &inst.weight, 0.0, &DMatrix::zeros(2, 4), &bad, 1e-9);
        assert!(!v.is_valid());
        let v = verify_certificate(&lifted, &inst.weight, 0.0, &DMatrix::zeros(3, 4), &bad, 1e-9);
        assert!(!v.is_valid());
    }

    #[test]
    fn solves_rank_deficient_example() {
        let inst = example(1.0);
        let lifted = LiftedProblem::build(&inst);
        let p = assemble_primal(&lifted, &inst.weight).unwrap();
        let sol = solve(&p, &SolverConfig::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.primal_value.abs() <= 1e-8, "{}", sol.primal_value);
    }

    #[test]
    fn reduced_and_generic_paths_agree() {
        let inst = example(2.0);
        let lifted = LiftedProblem::build(&inst);
        let p = assemble_primal(&lifted, &inst.weight).unwrap();
        let reduced = solve(&p, &SolverConfig::default()).unwrap();
        let generic = solve(
            &p,
            &SolverConfig {
                facial_reduction: false,
                ..SolverConfig::default()
            },
        )
        .unwrap();
        assert_eq!(reduced.status, SolveStatus::Optimal);
        assert_eq!(generic.status, SolveStatus::Optimal);
        assert!((reduced.primal_value - generic.primal_value).abs() < 1e-6);
        for sol in [&reduced, &generic] {
            let v = verify_certificate(
                &lifted,
                &inst.weight,
                sol.dual.gamma,
                &sol.dual.mu,
                &sol.dual.sigma,
                1e-6,
            );
            assert!(v.is_valid(), "{v:?}");
        }
    }

    #[test]
    fn naive_relaxation_is_zero() {
        let inst = example(10.0);
        let v = naive_relaxation_value(&inst, &SolverConfig::default()).unwrap();
        assert!(v.abs() <= 1e-8, "{v}");
    }

    #[test]
    fn sparse_export_format() {
        let inst = example(0.5);
        let lifted = LiftedProblem::build(&inst);
        let p = assemble_primal(&lifted, &inst.weight).unwrap();
        let mut buf = Vec::new();
        p.write_sparse(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("4 10"));
        assert_eq!(lines.next().unwrap().split_whitespace().count(), 10);
        assert!(text.contains("\n0 3 3 1e0\n"));
    }
}
