//! Rank-one test, recovery of the minimizer from the relaxation, and the
//! end-to-end exactness report.

use log::trace;
use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};

use crate::baseline::{self, InitKind, LocalConfig};
use crate::error::Result;
use crate::lift::LiftedProblem;
use crate::linalg::{singular_values, sym_eigen};
use crate::sdp::{self, SdpSolution, SolveStatus, SolverConfig};
use crate::structure::ProblemInstance;

/// Largest `λ₂/λ₁` accepted as numerically rank one.
pub const RANK_ONE_THRESHOLD: f64 = 1e-5;
/// Largest `|objective − γ| / (1 + γ)` accepted as a closed gap.
pub const GAP_THRESHOLD: f64 = 1e-6;
/// Tolerance for the dual slack and block skew-symmetry checks.
pub const CERTIFICATE_TOL: f64 = 1e-6;

fn as_slice<S: Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

#[derive(Debug, Clone, Serialize)]
pub struct StlsSolution {
    #[serde(rename = "u", serialize_with = "as_slice")]
    pub u_star: DVector<f64>,
    pub objective: f64,
    pub rank_one_ratio: f64,
    pub certified: bool,
    pub gamma: Option<f64>,
    pub certificate_gap: Option<f64>,
    pub rank_deficiency_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<SolveStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl StlsSolution {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

/// `λ₂/λ₁` of a symmetric matrix; 1 when `λ₁ ≤ 0`.
pub fn rank_one_ratio(x: &DMatrix<f64>) -> f64 {
    let (vals, _) = sym_eigen(x);
    let n = vals.len();
    if n == 0 {
        return 1.0;
    }
    let l1 = vals[n - 1];
    if l1.is_nan() || l1 <= 0.0 {
        return 1.0;
    }
    if n == 1 {
        return 0.0;
    }
    (vals[n - 2].max(0.0) / l1).min(1.0)
}

/// `σ_min/σ_max`; 0 for the zero matrix.
pub fn rank_deficiency_residual(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    let r = m.nrows().min(m.ncols());
    if s.is_empty() || s[0] == 0.0 {
        return 0.0;
    }
    // A tall or wide matrix has min(rows, cols) singular values; fewer rows
    // than columns means the row rank is what matters.
    s[r - 1] / s[0]
}

/// Applies the left inverse of `(z, v) ↦ (1, v) ⊗ z`: reads `z` and the
/// `k × m` matrix `Mat(y)` off `x` and returns `(z, Mat(y)z/‖z‖²)`.
pub fn recover_from_point(x: &DVector<f64>, m: usize) -> (DVector<f64>, DVector<f64>) {
    let z = x.rows(0, m).into_owned();
    let k = x.len() / m - 1;
    let zz = z.norm_squared();
    let v = DVector::from_fn(k, |t, _| {
        if zz > 0.0 {
            x.rows((t + 1) * m, m).dot(&z) / zz
        } else {
            0.0
        }
    });
    (z, v)
}

/// Top eigenvector scaled by `√λ₁`, with the largest-magnitude entry of its
/// `z` part made positive.
pub fn dominant_point(x: &DMatrix<f64>, m: usize) -> DVector<f64> {
    let (vals, vecs) = sym_eigen(x);
    let n = vals.len();
    let l1 = vals[n - 1].max(0.0);
    let mut p = vecs.column(n - 1).into_owned() * l1.sqrt();
    let lead = (0..m)
        .max_by(|&a, &b| p[a].abs().total_cmp(&p[b].abs()))
        .unwrap_or(0);
    if p[lead] < 0.0 {
        p.neg_mut();
    }
    p
}

/// Recovers `u*` from a relaxation solution. The result is always
/// uncertified; see [`certify`].
pub fn extract_solution(x: &DMatrix<f64>, lifted: &LiftedProblem, instance: &ProblemInstance) -> StlsSolution {
    let m = lifted.m();
    let ratio = rank_one_ratio(x);
    let point = dominant_point(x, m);
    let (_, v) = recover_from_point(&point, m);
    let u_star = &v + &instance.theta;
    let objective = instance.weight.norm_sq(&v);
    let residual = instance
        .structure
        .evaluate(&u_star)
        .map(|s| rank_deficiency_residual(&s))
        .unwrap_or(f64::NAN);
    StlsSolution {
        u_star,
        objective,
        rank_one_ratio: ratio,
        certified: false,
        gamma: None,
        certificate_gap: None,
        rank_deficiency_residual: residual,
        status: None,
        note: None,
    }
}

/// Checks the dual certificate of `sdp` against the recovered solution and
/// sets `certified` when `X` is rank one, the certificate is valid and the
/// gap is closed.
pub fn certify(solution: &mut StlsSolution, sdp: &SdpSolution, lifted: &LiftedProblem, instance: &ProblemInstance) {
    let gamma = sdp.dual.gamma;
    let verdict = sdp::verify_certificate(
        lifted,
        &instance.weight,
        gamma,
        &sdp.dual.mu,
        &sdp.dual.sigma,
        CERTIFICATE_TOL,
    );
    let gap = (solution.objective - gamma).abs();
    solution.gamma = Some(gamma);
    solution.certificate_gap = Some(gap);
    solution.status = Some(sdp.status);
    let rank_one = solution.rank_one_ratio <= RANK_ONE_THRESHOLD;
    let closed = gap <= GAP_THRESHOLD * (1.0 + gamma.abs());
    solution.certified = rank_one && closed && verdict.is_valid();
    solution.note = match (&verdict, rank_one, closed) {
        (sdp::CertificateVerdict::Invalid { reason }, _, _) => Some(format!("certificate rejected: {reason}")),
        (_, false, _) => Some("relaxation solution is not rank one".into()),
        (_, _, false) => Some("duality gap not closed".into()),
        _ => None,
    };
}

/// Steps allowed when refining an extracted minimizer.
const POLISH_ITER: usize = 20;

/// Runs the local solver from the kernel vector of `X` and keeps its point
/// when it is closer to `θ`. The interior-point iterate stops at an accuracy
/// of roughly `√μ` in `u*`; a few Gauss–Newton steps recover full precision.
pub fn polish(solution: &mut StlsSolution, x: &DMatrix<f64>, instance: &ProblemInstance) {
    let m = instance.structure.m();
    let z = dominant_point(x, m).rows(0, m).into_owned();
    if z.norm() == 0.0 {
        return;
    }
    let config = LocalConfig {
        max_iter: POLISH_ITER,
        grad_tol: 1e-15,
        init: InitKind::User(z),
        ..LocalConfig::default()
    };
    let Ok(local) = baseline::local_solve(instance, &config) else {
        return;
    };
    if local.objective.partial_cmp(&solution.objective) != Some(std::cmp::Ordering::Less) {
        return;
    }
    let Ok(s) = instance.structure.evaluate(&local.u) else {
        return;
    };
    let residual = rank_deficiency_residual(&s);
    if residual <= solution.rank_deficiency_residual.max(1e-10) {
        trace!("polish: objective {:.3e} -> {:.3e}", solution.objective, local.objective);
        solution.u_star = local.u;
        solution.objective = local.objective;
        solution.rank_deficiency_residual = residual;
    }
}

/// Relaxation solution together with the recovered minimizer.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub solution: StlsSolution,
    pub sdp: SdpSolution,
}

/// Lift, assemble, solve, extract and certify.
pub fn solve_instance(instance: &ProblemInstance, config: &SolverConfig) -> Result<PipelineOutput> {
    let lifted = LiftedProblem::build(instance);
    let problem = sdp::assemble_primal(&lifted, &instance.weight)?;
    let mut sdp_sol = sdp::solve(&problem, config)?;
    if rank_one_ratio(&sdp_sol.x) > RANK_ONE_THRESHOLD {
        // A face of optimal solutions (e.g. a left kernel of dimension > 1)
        // leaves the interior-point method at a higher-rank point of it.
        sdp_sol.x = sdp::reduce_rank(&problem, &sdp_sol.x, RANK_ONE_THRESHOLD * 0.1);
    }
    let mut solution = extract_solution(&sdp_sol.x, &lifted, instance);
    if config.polish {
        polish(&mut solution, &sdp_sol.x, instance);
    }
    certify(&mut solution, &sdp_sol, &lifted, instance);
    Ok(PipelineOutput {
        solution,
        sdp: sdp_sol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lift::kron_point;
    use crate::structure::AffineStructure;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ratio_examples() {
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        assert!(rank_one_ratio(&(&x * x.transpose())) <= 1e-12);
        assert_abs_diff_eq!(rank_one_ratio(&DMatrix::identity(2, 2)), 1.0, epsilon = 1e-14);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        assert_abs_diff_eq!(rank_one_ratio(&d), 0.5, epsilon = 1e-14);
        assert_eq!(rank_one_ratio(&DMatrix::zeros(3, 3)), 1.0);
    }

    #[test]
    fn residual_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(rank_deficiency_residual(&a), 0.0);
        assert_abs_diff_eq!(rank_deficiency_residual(&DMatrix::identity(2, 2)), 1.0, epsilon = 1e-14);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(rank_deficiency_residual(&b) < 1e-15);
        assert_eq!(rank_deficiency_residual(&DMatrix::zeros(2, 3)), 0.0);
    }

    #[test]
    fn round_trip_from_rank_one() {
        let h = AffineStructure::hankel(2, 3).unwrap();
        let theta = DVector::from_vec(vec![0.3, -0.1, 0.2, 0.7]);
        let inst = ProblemInstance::unweighted(h, theta.clone()).unwrap();
        let lifted = LiftedProblem::build(&inst);
        let z = DVector::from_vec(vec![0.6, -0.8]);
        let v = DVector::from_vec(vec![1.0, -2.0, 0.25, 3.0]);
        let x = kron_point(&v, &z);
        let sol = extract_solution(&(&x * x.transpose()), &lifted, &inst);
        assert!((sol.u_star - (&v + &theta)).amax() < 1e-12);
    }

    #[test]
    fn rank_one_hankel_is_recovered() {
        let h = AffineStructure::hankel(3, 3).unwrap();
        let theta = DVector::from_element(5, 1.0);
        let inst = ProblemInstance::unweighted(h, theta.clone()).unwrap();
        let out = solve_instance(&inst, &SolverConfig::default()).unwrap();
        assert!(out.solution.certified, "{:?}", out.solution);
        assert!(out.solution.objective <= 1e-10);
        assert!((&out.solution.u_star - theta).amax() <= 1e-8);
        let json = out.solution.to_json();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed["u"].as_array().unwrap().len(), 5);
        assert_eq!(parsed["certified"], serde_json::Value::Bool(true));
    }
}
