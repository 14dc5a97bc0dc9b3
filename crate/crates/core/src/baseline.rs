//! Local baseline: variable projection on the kernel representation.
//!
//! For a unit left-kernel vector `z` the condition `zᵀ S_θ(v) = 0` is linear
//! in `v`, namely `G(z) v = g(z)` with `G(z)[:, t] = B_tᵀ z` and
//! `g(z) = −A_θᵀ z`, so the least `‖v‖²_W` correction solves a small KKT
//! system. The outer problem over `z` is a nonlinear least-squares problem on
//! the sphere, handled by Levenberg–Marquardt.

use log::trace;
use nalgebra::{DMatrix, DVector};

use crate::error::{Result, StlsError};
use crate::linalg::sym_eigen;
use crate::structure::{ProblemInstance, WeightSpec};

#[derive(Debug, Clone)]
pub enum InitKind {
    SmallestSingular,
    User(DVector<f64>),
}

#[derive(Debug, Clone)]
pub struct LocalConfig {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub damping_init: f64,
    pub init: InitKind,
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-10,
            damping_init: 1e-3,
            init: InitKind::SmallestSingular,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalResult {
    pub u: DVector<f64>,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub z: DVector<f64>,
    /// Objective after each accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

/// Natural cubic spline through `(xs[i], ys[i])` (strictly increasing `xs`),
/// evaluated at `at`. Outside the knots the boundary pieces are extended.
pub fn natural_cubic_spline(xs: &[f64], ys: &[f64], at: &[f64]) -> Vec<f64> {
    let n = xs.len();
    match n {
        0 => return vec![0.0; at.len()],
        1 => return vec![ys[0]; at.len()],
        _ => {}
    }
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    // Second derivatives with M_0 = M_{n-1} = 0 via the Thomas algorithm.
    let mut m2 = vec![0.0; n];
    if n > 2 {
        let inner = n - 2;
        let mut diag = vec![0.0; inner];
        let mut rhs = vec![0.0; inner];
        let mut upper = vec![0.0; inner];
        for i in 0..inner {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            upper[i] = h[i + 1];
            rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h[i + 1] - (ys[i + 1] - ys[i]) / h[i]);
        }
        for i in 1..inner {
            let w = h[i] / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        for i in (0..inner).rev() {
            let next = if i + 1 < inner { m2[i + 2] } else { 0.0 };
            m2[i + 1] = (rhs[i] - upper[i] * next) / diag[i];
        }
    }
    at.iter()
        .map(|&x| {
            let seg = match xs.partition_point(|&k| k <= x) {
                0 => 0,
                p => (p - 1).min(n - 2),
            };
            let (x0, x1, hh) = (xs[seg], xs[seg + 1], h[seg]);
            let (a, b) = ((x1 - x) / hh, (x - x0) / hh);
            a * ys[seg]
                + b * ys[seg + 1]
                + ((a * a * a - a) * m2[seg] + (b * b * b - b) * m2[seg + 1]) * hh * hh / 6.0
        })
        .collect()
}

/// `θ` with unobserved entries (zero weight) replaced by spline values
/// through the observed ones.
pub fn spline_complete(theta: &DVector<f64>, weight: &WeightSpec) -> DVector<f64> {
    let WeightSpec::Diagonal01(mask) = weight else {
        return theta.clone();
    };
    let (mut xs, mut ys, mut missing) = (Vec::new(), Vec::new(), Vec::new());
    for (i, &w) in mask.iter().enumerate() {
        if w != 0.0 {
            xs.push(i as f64);
            ys.push(theta[i]);
        } else {
            missing.push(i);
        }
    }
    let at: Vec<f64> = missing.iter().map(|&i| i as f64).collect();
    let filled = natural_cubic_spline(&xs, &ys, &at);
    let mut out = theta.clone();
    for (&i, v) in missing.iter().zip(filled) {
        out[i] = v;
    }
    out
}

/// Left singular vector of `S(θ)` for its smallest singular value (after
/// spline completion of missing entries).
pub fn init_smallest_singular(instance: &ProblemInstance) -> DVector<f64> {
    let theta = spline_complete(&instance.theta, &instance.weight);
    let s = instance
        .structure
        .evaluate(&theta)
        .expect("instance dimensions are validated on construction");
    let (_, vecs) = sym_eigen(&(&s * s.transpose()));
    let z = vecs.column(0).into_owned();
    let nrm = z.norm();
    z / nrm
}

struct Projection {
    v: DVector<f64>,
    residual: DVector<f64>,
    /// `∂residual/∂z`, `k × m`.
    jacobian: DMatrix<f64>,
}

struct Projector<'a> {
    instance: &'a ProblemInstance,
    /// Point the correction is measured from: `θ` with missing entries
    /// spline-completed.
    theta_ref: DVector<f64>,
    a_theta: DMatrix<f64>,
    w: DMatrix<f64>,
    w_half: DMatrix<f64>,
}

/// Weight given to missing entries so the inner problem has a unique
/// solution.
const MISSING_WEIGHT: f64 = 1e-8;

impl<'a> Projector<'a> {
    fn new(instance: &'a ProblemInstance) -> Self {
        let k = instance.structure.k();
        let (w, w_half) = match &instance.weight {
            WeightSpec::Identity => (DMatrix::identity(k, k), DMatrix::identity(k, k)),
            WeightSpec::Diagonal01(mask) => {
                let d = DVector::from_iterator(k, mask.iter().map(|&x| x.max(MISSING_WEIGHT)));
                (DMatrix::from_diagonal(&d), DMatrix::from_diagonal(&d.map(f64::sqrt)))
            }
            WeightSpec::Dense(w) => {
                let (vals, vecs) = sym_eigen(w);
                let root = vals.map(|l| l.max(0.0).sqrt());
                (w.clone(), &vecs * DMatrix::from_diagonal(&root) * vecs.transpose())
            }
        };
        let theta_ref = spline_complete(&instance.theta, &instance.weight);
        let a_theta = instance
            .structure
            .evaluate(&theta_ref)
            .expect("instance dimensions are validated on construction");
        Self {
            instance,
            theta_ref,
            a_theta,
            w,
            w_half,
        }
    }

    fn g_matrix(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let dirs = self.instance.structure.directions();
        let n = self.a_theta.ncols();
        let mut g = DMatrix::zeros(n, dirs.len());
        for (t, b) in dirs.iter().enumerate() {
            g.set_column(t, &(b.transpose() * z));
        }
        g
    }

    fn project(&self, z: &DVector<f64>, with_jacobian: bool) -> Result<Projection> {
        let (m, n) = self.a_theta.shape();
        let k = self.w.nrows();
        let g_mat = self.g_matrix(z);
        let rhs_g = -(self.a_theta.transpose() * z);
        let mut kkt = DMatrix::zeros(k + n, k + n);
        kkt.view_mut((0, 0), (k, k)).copy_from(&self.w);
        kkt.view_mut((k, 0), (n, k)).copy_from(&g_mat);
        kkt.view_mut((0, k), (k, n)).copy_from(&g_mat.transpose());
        let lu = kkt.clone().lu();
        let solve = |rhs: &DVector<f64>| -> Result<DVector<f64>> {
            lu.solve(rhs)
                .filter(|x| x.iter().all(|v| v.is_finite()))
                .or_else(|| {
                    kkt.clone()
                        .svd(true, true)
                        .solve(rhs, 1e-13 * kkt.amax())
                        .ok()
                })
                .ok_or_else(|| StlsError::Solver("singular projection system".into()))
        };
        let mut rhs = DVector::zeros(k + n);
        rhs.rows_mut(k, n).copy_from(&rhs_g);
        let sol = solve(&rhs)?;
        let v = sol.rows(0, k).into_owned();
        // With fewer parameters than columns, G(z)v = g(z) is solvable only
        // for special z.
        let mismatch = (&g_mat * &v - &rhs_g).norm();
        if mismatch > 1e-9 * (1.0 + rhs_g.norm()) {
            return Err(StlsError::Solver(format!(
                "no correction makes z a left-kernel vector (mismatch {mismatch:.2e})"
            )));
        }
        let lambda = sol.rows(k, n).into_owned();
        let residual = &self.w_half * &v;
        let mut jacobian = DMatrix::zeros(k, m);
        if with_jacobian {
            let dirs = self.instance.structure.directions();
            for p in 0..m {
                // ∂G/∂z_p has entries B_t[p, i]; ∂g/∂z_p = −A_θ[p, :]ᵀ.
                let dg_mat = DMatrix::from_fn(n, k, |i, t| dirs[t][(p, i)]);
                let mut r = DVector::zeros(k + n);
                r.rows_mut(0, k).copy_from(&(-(dg_mat.transpose() * &lambda)));
                let dg = -self.a_theta.row(p).transpose();
                r.rows_mut(k, n).copy_from(&(dg - &dg_mat * &v));
                let d = solve(&r)?;
                jacobian.set_column(p, &(&self.w_half * d.rows(0, k)));
            }
        }
        Ok(Projection {
            v,
            residual,
            jacobian,
        })
    }
}

/// Orthonormal basis of the tangent space `z^⊥` of the unit sphere.
fn tangent_basis(z: &DVector<f64>) -> DMatrix<f64> {
    let m = z.len();
    let mut basis = DMatrix::zeros(m, m - 1);
    let mut taken = vec![z.clone()];
    let mut col = 0;
    for e in 0..m {
        if col == m - 1 {
            break;
        }
        let mut cand = DVector::zeros(m);
        cand[e] = 1.0;
        // Two rounds of Gram–Schmidt.
        for _ in 0..2 {
            for q in &taken {
                let c = q.dot(&cand);
                cand -= q * c;
            }
        }
        let nrm = cand.norm();
        if nrm > 1e-8 {
            cand /= nrm;
            basis.set_column(col, &cand);
            taken.push(cand);
            col += 1;
        }
    }
    basis
}

/// Local minimization of `‖v‖²_W` over unit `z`; returns `u = θ + v`.
pub fn local_solve(instance: &ProblemInstance, config: &LocalConfig) -> Result<LocalResult> {
    if !(config.grad_tol > 0.0 && config.damping_init > 0.0) {
        return Err(StlsError::Input("local solver tolerances must be positive".into()));
    }
    let m = instance.structure.m();
    let mut z = match &config.init {
        InitKind::SmallestSingular => init_smallest_singular(instance),
        InitKind::User(z0) => {
            if z0.len() != m || z0.norm() == 0.0 {
                return Err(StlsError::Dimension(format!("initial z must be a nonzero {m}-vector")));
            }
            z0.normalize()
        }
    };
    let projector = Projector::new(instance);
    let mut cur = projector.project(&z, true)?;
    let mut f = cur.residual.norm_squared();
    let mut history = vec![f];
    let mut lambda = config.damping_init;
    let mut converged = false;
    let mut iterations = 0;

    if m == 1 {
        converged = true;
    }
    while !converged && iterations < config.max_iter {
        iterations += 1;
        let basis = tangent_basis(&z);
        let j = &cur.jacobian * &basis;
        let grad = j.transpose() * &cur.residual;
        if 2.0 * grad.norm() <= config.grad_tol * (1.0 + f) || f == 0.0 {
            converged = true;
            break;
        }
        let jtj = j.transpose() * &j;
        let scale = jtj.diagonal().amax().max(1e-300);
        let mut accepted = false;
        while lambda < 1e20 {
            let mut sys = jtj.clone();
            for i in 0..sys.nrows() {
                sys[(i, i)] += lambda * scale;
            }
            let Some(step) = sys.cholesky().map(|c| c.solve(&(-&grad))) else {
                lambda *= 10.0;
                continue;
            };
            let trial = (&z + &basis * &step).normalize();
            if let Ok(p) = projector.project(&trial, false) {
                let ft = p.residual.norm_squared();
                if ft < f {
                    z = trial;
                    cur = projector.project(&z, true)?;
                    f = cur.residual.norm_squared();
                    history.push(f);
                    lambda = (lambda / 3.0).max(1e-15);
                    accepted = true;
                    break;
                }
            }
            lambda *= 4.0;
        }
        if !accepted {
            // No descent left at working precision.
            converged = 2.0 * grad.norm() <= config.grad_tol.sqrt() * (1.0 + f);
            trace!("local solve stalled at f = {f:.3e}, |grad| = {:.2e}", grad.norm());
            break;
        }
    }
    let u = &cur.v + &projector.theta_ref;
    Ok(LocalResult {
        objective: instance.objective(&u),
        u,
        converged,
        iterations,
        z,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::AffineStructure;

    fn example(theta: f64) -> ProblemInstance {
        ProblemInstance::unweighted(
            AffineStructure::new(
                DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
                vec![DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 1.0])],
            )
            .unwrap(),
            DVector::from_element(1, theta),
        )
        .unwrap()
    }

    #[test]
    fn spline_reproduces_cubics() {
        // Natural splines are exact on linear data.
        let xs = [0.0, 1.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let out = natural_cubic_spline(&xs, &ys, &[2.0, 5.0, -1.0]);
        for (o, x) in out.iter().zip([2.0, 5.0, -1.0]) {
            assert!((o - (2.0 * x - 1.0)).abs() < 1e-12);
        }
        let ys = [0.0, 1.0, 0.0, 1.0];
        let out = natural_cubic_spline(&xs, &ys, &xs);
        assert!(out.iter().zip(ys).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn smallest_singular_direction() {
        let inst = ProblemInstance::unweighted(
            AffineStructure::new(
                DMatrix::zeros(2, 2),
                vec![
                    DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
                    DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]),
                ],
            )
            .unwrap(),
            DVector::from_vec(vec![3.0, 1.0]),
        )
        .unwrap();
        let z = init_smallest_singular(&inst);
        assert!((z[1].abs() - 1.0).abs() < 1e-12 && z[0].abs() < 1e-12);
    }

    #[test]
    fn zero_residual_start() {
        let inst = ProblemInstance::unweighted(AffineStructure::hankel(3, 3).unwrap(), DVector::from_element(5, 1.0))
            .unwrap();
        let r = local_solve(&inst, &LocalConfig::default()).unwrap();
        assert!(r.objective <= 1e-10);
        assert!((r.u - inst.theta).amax() <= 1e-8);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let inst = ProblemInstance::unweighted(
            AffineStructure::hankel(3, 4).unwrap(),
            DVector::from_vec(vec![0.3, -0.2, 0.5, 0.1, 0.9, -0.4]),
        )
        .unwrap();
        let proj = Projector::new(&inst);
        let z = DVector::from_vec(vec![0.2, -0.5, 0.8]);
        let p = proj.project(&z, true).unwrap();
        let h = 1e-6;
        for c in 0..3 {
            let mut zp = z.clone();
            zp[c] += h;
            let mut zm = z.clone();
            zm[c] -= h;
            let fd = (proj.project(&zp, false).unwrap().residual - proj.project(&zm, false).unwrap().residual) / (2.0 * h);
            assert!((fd - p.jacobian.column(c)).amax() < 1e-6);
        }
    }

    #[test]
    fn example_needs_consistent_start() {
        // det S(u) = u − u², so θ = 1 is already rank deficient.
        let r = local_solve(&example(1.0), &LocalConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.objective <= 1e-20);
        // One parameter and two columns: only isolated z admit a correction.
        assert!(local_solve(&example(2.0), &LocalConfig::default()).is_err());
    }

    #[test]
    fn history_is_monotone() {
        let inst = ProblemInstance::unweighted(
            AffineStructure::hankel(3, 5).unwrap(),
            DVector::from_vec(vec![0.3, -0.2, 0.5, 0.1, 0.9, -0.4, 0.2]),
        )
        .unwrap();
        let r = local_solve(&inst, &LocalConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        let s = inst.structure.evaluate(&r.u).unwrap();
        assert!(crate::extract::rank_deficiency_residual(&s) < 1e-8);
    }
}
