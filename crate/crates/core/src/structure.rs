//! Affine matrix structures `u ↦ S(u) = base + Σ u_j D_j` and the builders for
//! the application families (Hankel, Sylvester, fractional programs, multi-view
//! geometry, complex embeddings).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StlsError};

/// An affine map from `R^k` to `m × n` real matrices with `m ≤ n`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineStructure {
    base: DMatrix<f64>,
    directions: Vec<DMatrix<f64>>,
}

impl AffineStructure {
    pub fn new(base: DMatrix<f64>, directions: Vec<DMatrix<f64>>) -> Result<Self> {
        let (m, n) = base.shape();
        if m == 0 || n == 0 {
            return Err(StlsError::InvalidStructure("empty base matrix".into()));
        }
        if m > n {
            return Err(StlsError::InvalidStructure(format!(
                "structure must be wide (m ≤ n), got {m}×{n}"
            )));
        }
        if directions.is_empty() {
            return Err(StlsError::InvalidStructure("no direction matrices".into()));
        }
        for (j, d) in directions.iter().enumerate() {
            if d.shape() != (m, n) {
                return Err(StlsError::Dimension(format!(
                    "direction {j} has shape {:?}, expected {m}×{n}",
                    d.shape()
                )));
            }
        }
        Ok(Self { base, directions })
    }

    pub fn m(&self) -> usize {
        self.base.nrows()
    }

    pub fn n(&self) -> usize {
        self.base.ncols()
    }

    /// Number of parameters.
    pub fn k(&self) -> usize {
        self.directions.len()
    }

    /// `S(0)`.
    pub fn base(&self) -> &DMatrix<f64> {
        &self.base
    }

    pub fn directions(&self) -> &[DMatrix<f64>] {
        &self.directions
    }

    /// `S(u) = base + Σ_j u_j · directions[j]`.
    pub fn evaluate(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        if u.len() != self.k() {
            return Err(StlsError::Dimension(format!(
                "parameter vector has length {}, structure expects {}",
                u.len(),
                self.k()
            )));
        }
        let mut out = self.base.clone();
        for (uj, d) in u.iter().zip(&self.directions) {
            if *uj != 0.0 {
                out += d * *uj;
            }
        }
        Ok(out)
    }

    /// Finite `m × n` Hankel matrix filled with `u_1, …, u_{m+n-1}`.
    pub fn hankel(m: usize, n: usize) -> Result<Self> {
        if m < 2 {
            return Err(StlsError::InvalidStructure(format!(
                "Hankel structure needs at least 2 rows, got {m}"
            )));
        }
        if m > n {
            return Err(StlsError::InvalidStructure(format!(
                "Hankel structure must satisfy m ≤ n, got {m}×{n}"
            )));
        }
        let k = m + n - 1;
        let directions = (0..k)
            .map(|t| DMatrix::from_fn(m, n, |i, j| if i + j == t { 1.0 } else { 0.0 }))
            .collect();
        Self::new(DMatrix::zeros(m, n), directions)
    }

    /// Degree-`d` Sylvester structure for polynomials of degrees `n1`, `n2`.
    ///
    /// Parameters are the coefficients of `f` followed by those of `g`, both
    /// highest degree first. The first `n2 - d + 1` rows hold shifted copies of
    /// `f`, the remaining `n1 - d + 1` rows shifted copies of `g`; the matrix is
    /// rank deficient iff `deg gcd(f, g) ≥ d`.
    pub fn sylvester(n1: usize, n2: usize, d: usize) -> Result<Self> {
        if d == 0 || d > n1.min(n2) {
            return Err(StlsError::InvalidStructure(format!(
                "Sylvester degree d = {d} must lie in 1..={}",
                n1.min(n2)
            )));
        }
        let k = n1 + n2 + 2;
        let rows = k - 2 * d;
        let cols = k - d - 1;
        if rows > cols {
            return Err(StlsError::InvalidStructure(format!(
                "Sylvester matrix would be {rows}×{cols} (taller than wide)"
            )));
        }
        let f_rows = n2 - d + 1;
        let mut directions = vec![DMatrix::zeros(rows, cols); k];
        for r in 0..f_rows {
            for c in 0..=n1 {
                directions[c][(r, r + c)] = 1.0;
            }
        }
        for r in 0..(n1 - d + 1) {
            for c in 0..=n2 {
                directions[n1 + 1 + c][(f_rows + r, r + c)] = 1.0;
            }
        }
        Self::new(DMatrix::zeros(rows, cols), directions)
    }

    /// Cleared-denominator form of `u_i = a_iᵀz / b_iᵀz`: column `i` of `S(u)`
    /// is `u_i b_i − a_i`.
    pub fn fractional(a: &[DVector<f64>], b: &[DVector<f64>]) -> Result<Self> {
        let k = a.len();
        if k == 0 || b.len() != k {
            return Err(StlsError::Dimension(format!(
                "fractional structure needs equally many a and b vectors, got {} and {}",
                a.len(),
                b.len()
            )));
        }
        let m = a[0].len();
        if a.iter().chain(b).any(|v| v.len() != m) {
            return Err(StlsError::Dimension(
                "all a_i and b_i must have the same length".into(),
            ));
        }
        if k < m {
            return Err(StlsError::InvalidStructure(format!(
                "fractional structure needs k ≥ m, got k = {k}, m = {m}"
            )));
        }
        let mut base = DMatrix::zeros(m, k);
        let mut directions = Vec::with_capacity(k);
        for i in 0..k {
            base.set_column(i, &(-&a[i]));
            let mut d = DMatrix::zeros(m, k);
            d.set_column(i, &b[i]);
            directions.push(d);
        }
        Self::new(base, directions)
    }

    /// Triangulation of one 3D point seen by `ℓ ≥ 2` cameras.
    ///
    /// Cameras use the projection `(y0, y1, y2) ↦ (y1/y0, y2/y0)`, so row 0 of
    /// each camera is the depth row. Parameters are the image coordinates
    /// `(u_{j,1}, u_{j,2})` stacked camera by camera; the left kernel is the
    /// homogeneous point `(1, x1, x2, x3)` up to scale.
    pub fn triangulation(cameras: &[DMatrix<f64>]) -> Result<Self> {
        if cameras.len() < 2 {
            return Err(StlsError::InvalidStructure(format!(
                "triangulation needs at least 2 cameras, got {}",
                cameras.len()
            )));
        }
        let mut a = Vec::with_capacity(2 * cameras.len());
        let mut b = Vec::with_capacity(2 * cameras.len());
        for (j, p) in cameras.iter().enumerate() {
            if p.shape() != (3, 4) {
                return Err(StlsError::Dimension(format!(
                    "camera {j} has shape {:?}, expected 3×4",
                    p.shape()
                )));
            }
            let depth = p.row(0).transpose();
            for r in 1..3 {
                a.push(p.row(r).transpose());
                b.push(depth.clone());
            }
        }
        Self::fractional(&a, &b)
    }

    /// Resectioning of one camera from `ℓ ≥ 6` known points `(1, x1, x2, x3)`.
    ///
    /// The kernel variable is the row-major vectorization of the 3×4 camera.
    pub fn resectioning(points: &[DVector<f64>]) -> Result<Self> {
        if points.len() < 6 {
            return Err(StlsError::InvalidStructure(format!(
                "resectioning needs at least 6 points, got {}",
                points.len()
            )));
        }
        let embed = |row: usize, x: &DVector<f64>| {
            let mut v = DVector::zeros(12);
            v.rows_mut(4 * row, 4).copy_from(x);
            v
        };
        let mut a = Vec::with_capacity(2 * points.len());
        let mut b = Vec::with_capacity(2 * points.len());
        for (j, x) in points.iter().enumerate() {
            if x.len() != 4 {
                return Err(StlsError::Dimension(format!(
                    "point {j} has length {}, expected 4",
                    x.len()
                )));
            }
            for r in 1..3 {
                a.push(embed(r, x));
                b.push(embed(0, x));
            }
        }
        Self::fractional(&a, &b)
    }
}

/// Real embedding `U ↦ [[Re U, −Im U], [Im U, Re U]]`; rank-deficient exactly
/// when `U` is.
pub fn realify(u: &DMatrix<Complex64>) -> DMatrix<f64> {
    let (m, n) = u.shape();
    DMatrix::from_fn(2 * m, 2 * n, |i, j| {
        let z = u[(i % m, j % n)];
        match (i < m, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Complex-linear structure `u ↦ base + Σ u_j C_j` with `u ∈ C^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexStructure {
    pub base: DMatrix<Complex64>,
    pub directions: Vec<DMatrix<Complex64>>,
}

impl ComplexStructure {
    pub fn evaluate(&self, u: &[Complex64]) -> Result<DMatrix<Complex64>> {
        if u.len() != self.directions.len() {
            return Err(StlsError::Dimension(format!(
                "complex parameter vector has length {}, expected {}",
                u.len(),
                self.directions.len()
            )));
        }
        let mut out = self.base.clone();
        for (uj, d) in u.iter().zip(&self.directions) {
            out += d * *uj;
        }
        Ok(out)
    }
}

/// Reduces a complex instance to a real one over `2k` parameters ordered
/// `(Re u_1, Im u_1, Re u_2, Im u_2, …)`, so `|u − θ|²` is preserved.
pub fn complex_to_real(
    structure: &ComplexStructure,
    theta: &[Complex64],
) -> Result<(AffineStructure, DVector<f64>)> {
    let (m, n) = structure.base.shape();
    if theta.len() != structure.directions.len() {
        return Err(StlsError::Dimension(format!(
            "theta has length {}, structure has {} complex parameters",
            theta.len(),
            structure.directions.len()
        )));
    }
    let mut directions = Vec::with_capacity(2 * theta.len());
    for (j, d) in structure.directions.iter().enumerate() {
        if d.shape() != (m, n) {
            return Err(StlsError::Dimension(format!(
                "complex direction {j} has shape {:?}, expected {m}×{n}",
                d.shape()
            )));
        }
        directions.push(realify(d));
        directions.push(realify(&(d * Complex64::i())));
    }
    let real = AffineStructure::new(realify(&structure.base), directions)?;
    let theta_real = DVector::from_iterator(
        2 * theta.len(),
        theta.iter().flat_map(|z| [z.re, z.im]),
    );
    Ok((real, theta_real))
}

/// Weight of the (semi)norm `‖v‖²_W = vᵀ W v` used in the objective.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSpec {
    Identity,
    /// Symmetric positive semidefinite `k × k` matrix.
    Dense(DMatrix<f64>),
    /// Diagonal 0/1 mask; zero marks a missing data entry.
    Diagonal01(Vec<f64>),
}

impl WeightSpec {
    pub fn dense(w: DMatrix<f64>) -> Result<Self> {
        if !w.is_square() {
            return Err(StlsError::InvalidWeight("weight matrix must be square".into()));
        }
        let scale = 1.0 + w.amax();
        if (&w - w.transpose()).amax() > 1e-10 * scale {
            return Err(StlsError::InvalidWeight("weight matrix is not symmetric".into()));
        }
        let sym = (&w + w.transpose()) * 0.5;
        let lmin = sym.symmetric_eigenvalues().min();
        if lmin < -1e-10 {
            return Err(StlsError::InvalidWeight(format!(
                "weight matrix is not PSD (smallest eigenvalue {lmin:e})"
            )));
        }
        Ok(Self::Dense(sym))
    }

    pub fn diagonal01(mask: Vec<f64>) -> Result<Self> {
        if let Some(bad) = mask.iter().find(|w| **w != 0.0 && **w != 1.0) {
            return Err(StlsError::InvalidWeight(format!(
                "missing-data mask entries must be 0 or 1, found {bad}"
            )));
        }
        Ok(Self::Diagonal01(mask))
    }

    /// Dimension the weight is tied to, if it fixes one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::Identity => None,
            Self::Dense(w) => Some(w.nrows()),
            Self::Diagonal01(d) => Some(d.len()),
        }
    }

    pub fn matrix(&self, k: usize) -> DMatrix<f64> {
        match self {
            Self::Identity => DMatrix::identity(k, k),
            Self::Dense(w) => w.clone(),
            Self::Diagonal01(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
        }
    }

    /// `vᵀ W v`.
    pub fn norm_sq(&self, v: &DVector<f64>) -> f64 {
        match self {
            Self::Identity => v.norm_squared(),
            Self::Dense(w) => v.dot(&(w * v)),
            Self::Diagonal01(d) => v.iter().zip(d).map(|(x, w)| w * x * x).sum(),
        }
    }
}

/// A structure together with the data point `θ` and the objective weight.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub structure: AffineStructure,
    pub theta: DVector<f64>,
    pub weight: WeightSpec,
}

impl ProblemInstance {
    pub fn new(structure: AffineStructure, theta: DVector<f64>, weight: WeightSpec) -> Result<Self> {
        let k = structure.k();
        if theta.len() != k {
            return Err(StlsError::Dimension(format!(
                "theta has length {}, structure has k = {k}",
                theta.len()
            )));
        }
        if let Some(dim) = weight.dim() {
            if dim != k {
                return Err(StlsError::Dimension(format!(
                    "weight has dimension {dim}, structure has k = {k}"
                )));
            }
        }
        Ok(Self {
            structure,
            theta,
            weight,
        })
    }

    pub fn unweighted(structure: AffineStructure, theta: DVector<f64>) -> Result<Self> {
        Self::new(structure, theta, WeightSpec::Identity)
    }

    /// `‖u − θ‖²_W`.
    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        self.weight.norm_sq(&(u - &self.theta))
    }
}

/// JSON descriptor of a structure. Matrices are row-major nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum StructureDescriptor {
    Hankel {
        m: usize,
        n: usize,
    },
    Sylvester {
        n1: usize,
        n2: usize,
        d: usize,
    },
    Fractional {
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
    },
    Generic {
        base: Vec<Vec<f64>>,
        directions: Vec<Vec<Vec<f64>>>,
    },
    Triangulation {
        cameras: Vec<Vec<Vec<f64>>>,
    },
    Resectioning {
        points: Vec<Vec<f64>>,
    },
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(StlsError::Input("matrix rows must be non-empty and of equal length".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl StructureDescriptor {
    pub fn build(&self) -> Result<AffineStructure> {
        match self {
            Self::Hankel { m, n } => AffineStructure::hankel(*m, *n),
            Self::Sylvester { n1, n2, d } => AffineStructure::sylvester(*n1, *n2, *d),
            Self::Fractional { a, b } => {
                let a: Vec<_> = a.iter().map(|v| DVector::from_column_slice(v)).collect();
                let b: Vec<_> = b.iter().map(|v| DVector::from_column_slice(v)).collect();
                AffineStructure::fractional(&a, &b)
            }
            Self::Generic { base, directions } => {
                let base = matrix_from_rows(base)?;
                let directions = directions
                    .iter()
                    .map(|d| matrix_from_rows(d))
                    .collect::<Result<Vec<_>>>()?;
                AffineStructure::new(base, directions)
            }
            Self::Triangulation { cameras } => {
                let cameras = cameras
                    .iter()
                    .map(|c| matrix_from_rows(c))
                    .collect::<Result<Vec<_>>>()?;
                AffineStructure::triangulation(&cameras)
            }
            Self::Resectioning { points } => {
                let points: Vec<_> = points.iter().map(|v| DVector::from_column_slice(v)).collect();
                AffineStructure::resectioning(&points)
            }
        }
    }
}

/// JSON form of [`WeightSpec`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum WeightDescriptor {
    Identity,
    Dense { matrix: Vec<Vec<f64>> },
    Diagonal01 { diagonal: Vec<f64> },
}

impl WeightDescriptor {
    pub fn build(&self) -> Result<WeightSpec> {
        match self {
            Self::Identity => Ok(WeightSpec::Identity),
            Self::Dense { matrix } => WeightSpec::dense(matrix_from_rows(matrix)?),
            Self::Diagonal01 { diagonal } => WeightSpec::diagonal01(diagonal.clone()),
        }
    }
}

/// A full instance file: structure descriptor fields plus `theta` and an
/// optional `weight`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct InstanceFile {
    #[serde(flatten)]
    pub structure: StructureDescriptor,
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<WeightDescriptor>,
}

impl InstanceFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn build(&self) -> Result<ProblemInstance> {
        let structure = self.structure.build()?;
        let weight = match &self.weight {
            Some(w) => w.build()?,
            None => WeightSpec::Identity,
        };
        ProblemInstance::new(structure, DVector::from_column_slice(&self.theta), weight)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn example_3_1() -> AffineStructure {
        let base = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let dir = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 1.0]);
        AffineStructure::new(base, vec![dir]).unwrap()
    }

    fn sigma_ratio(m: &DMatrix<f64>) -> f64 {
        let s = m.singular_values();
        s.min() / s.max()
    }

    #[test]
    fn hankel_evaluates_anti_diagonals() {
        let h = AffineStructure::hankel(3, 3).unwrap();
        assert_eq!(h.k(), 5);
        let u = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let expected =
            DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 3.0, 4.0, 3.0, 4.0, 5.0]);
        assert_eq!(h.evaluate(&u).unwrap(), expected);
        let mut b1 = DMatrix::zeros(3, 3);
        b1[(0, 0)] = 1.0;
        assert_eq!(h.directions()[0], b1);
        assert_eq!(AffineStructure::hankel(3, 4).unwrap().k(), 6);
        assert_eq!(AffineStructure::hankel(3, 40).unwrap().k(), 42);
        assert!(AffineStructure::hankel(4, 3).is_err());
    }

    #[test]
    fn small_example_evaluation() {
        let s = example_3_1();
        let out = s.evaluate(&DVector::from_element(1, 0.5)).unwrap();
        assert_eq!(out, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 0.5]));
        assert_eq!(&s.evaluate(&DVector::zeros(1)).unwrap(), s.base());
        assert!(s.evaluate(&DVector::zeros(2)).is_err());
    }

    #[test]
    fn sylvester_shapes() {
        let s = AffineStructure::sylvester(6, 5, 2).unwrap();
        assert_eq!((s.m(), s.n(), s.k()), (9, 10, 13));
        let s1 = AffineStructure::sylvester(1, 1, 1).unwrap();
        assert_eq!((s1.m(), s1.n()), (2, 2));
        assert!(AffineStructure::sylvester(3, 2, 3).is_err());
        assert!(AffineStructure::sylvester(3, 2, 0).is_err());
    }

    #[test]
    fn sylvester_linear_common_root_is_singular() {
        // (t - 1) and (t - 1): classical 2×2 Sylvester matrix [[1,-1],[1,-1]].
        let s = AffineStructure::sylvester(1, 1, 1).unwrap();
        let m = s.evaluate(&DVector::from_vec(vec![1.0, -1.0, 1.0, -1.0])).unwrap();
        assert_relative_eq!(m.determinant(), 0.0);
        let m = s.evaluate(&DVector::from_vec(vec![1.0, -1.0, 1.0, -2.0])).unwrap();
        // resultant of (t-1, t-2) is ±1
        assert_relative_eq!(m.determinant().abs(), 1.0);
    }

    #[test]
    fn sylvester_gcd_example_is_rank_deficient() {
        let mut f = DVector::from_vec(vec![1.0, 0.0, -2.0, 0.0, 2.0, 0.0, -4.0]);
        let mut g = DVector::from_vec(vec![1.0, 0.0, -2.0, -1.0, 0.0, 2.0]);
        f /= f.norm();
        g /= g.norm();
        let u = DVector::from_iterator(13, f.iter().chain(g.iter()).copied());
        let s = AffineStructure::sylvester(6, 5, 2).unwrap();
        let m = s.evaluate(&u).unwrap();
        assert!(m.singular_values().min() <= 1e-10);
        // but not of degree 3
        let s3 = AffineStructure::sylvester(6, 5, 3).unwrap();
        assert!(sigma_ratio(&s3.evaluate(&u).unwrap()) > 1e-6);
    }

    #[test]
    fn fractional_scalar_case() {
        let s = AffineStructure::fractional(
            &[DVector::from_element(1, 2.0)],
            &[DVector::from_element(1, 1.0)],
        )
        .unwrap();
        let m = s.evaluate(&DVector::from_element(1, 2.0)).unwrap();
        assert_eq!(m[(0, 0)], 0.0);
        assert!(AffineStructure::fractional(
            &[DVector::zeros(2)],
            &[DVector::from_element(2, 1.0)]
        )
        .is_err());
    }

    #[test]
    fn multiview_shapes() {
        let cam = DMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 + 1.0);
        let t = AffineStructure::triangulation(&vec![cam.clone(); 3]).unwrap();
        assert_eq!((t.m(), t.n(), t.k()), (4, 6, 6));
        let t7 = AffineStructure::triangulation(&vec![cam.clone(); 7]).unwrap();
        assert_eq!((t7.m(), t7.n()), (4, 14));
        assert!(AffineStructure::triangulation(&[cam]).is_err());
        let pts: Vec<_> = (0..6)
            .map(|i| DVector::from_vec(vec![1.0, i as f64, 1.0, 2.0]))
            .collect();
        let r = AffineStructure::resectioning(&pts).unwrap();
        assert_eq!((r.m(), r.n()), (12, 12));
        assert!(AffineStructure::resectioning(&pts[..5]).is_err());
    }

    #[test]
    fn complex_scalars() {
        let s = ComplexStructure {
            base: DMatrix::zeros(1, 1),
            directions: vec![DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0))],
        };
        let (real, theta) = complex_to_real(&s, &[Complex64::i()]).unwrap();
        assert_eq!(real.k(), 2);
        let m = real.evaluate(&theta).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]));
        let zero = real.evaluate(&DVector::zeros(2)).unwrap();
        assert_eq!(zero, DMatrix::zeros(2, 2));
    }

    #[test]
    fn complex_real_input_doubles_block_diagonally() {
        let h = AffineStructure::hankel(2, 3).unwrap();
        let cs = ComplexStructure {
            base: DMatrix::zeros(2, 3),
            directions: h
                .directions()
                .iter()
                .map(|d| d.map(|x| Complex64::new(x, 0.0)))
                .collect(),
        };
        let theta: Vec<_> = (0..4).map(|i| Complex64::new(i as f64 + 1.0, 0.0)).collect();
        let (real, th) = complex_to_real(&cs, &theta).unwrap();
        let big = real.evaluate(&th).unwrap();
        let small = h.evaluate(&DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(big.view((0, 0), (2, 3)), small.view((0, 0), (2, 3)));
        assert_eq!(big.view((2, 3), (2, 3)), small.view((0, 0), (2, 3)));
        assert_eq!(big.view((0, 3), (2, 3)).amax(), 0.0);
        assert_eq!(big.view((2, 0), (2, 3)).amax(), 0.0);
    }

    #[test]
    fn weights_are_validated() {
        assert!(WeightSpec::diagonal01(vec![1.0, 0.5]).is_err());
        assert!(WeightSpec::dense(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        assert!(WeightSpec::dense(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0])).is_err());
        let w = WeightSpec::dense(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        assert_relative_eq!(w.norm_sq(&DVector::from_vec(vec![1.0, 1.0])), 6.0);
        let s = AffineStructure::hankel(2, 2).unwrap();
        assert!(ProblemInstance::new(s, DVector::zeros(3), w).is_err());
    }

    #[test]
    fn json_descriptors_round_trip() {
        let text = r#"{"type":"hankel","m":3,"n":5,"theta":[1,2,3,4,5,6,7]}"#;
        let file = InstanceFile::from_json(text).unwrap();
        assert_eq!(file.structure, StructureDescriptor::Hankel { m: 3, n: 5 });
        let inst = file.build().unwrap();
        assert_eq!(inst.structure.k(), 7);
        let text = r#"{"type":"sylvester","n1":6,"n2":5,"d":2,"theta":[0,0,0,0,0,0,0,0,0,0,0,0,0],
                       "weight":{"type":"diagonal01","diagonal":[1,1,1,1,1,1,1,1,1,1,1,1,0]}}"#;
        let inst = InstanceFile::from_json(text).unwrap().build().unwrap();
        assert!(matches!(inst.weight, WeightSpec::Diagonal01(_)));
        let text = r#"{"type":"generic","base":[[1,0],[0,0]],"directions":[[[0,1],[1,1]]],"theta":[1]}"#;
        let inst = InstanceFile::from_json(text).unwrap().build().unwrap();
        assert_eq!(inst.structure, example_3_1());
        assert!(InstanceFile::from_json(r#"{"type":"hankel","m":3"#).is_err());
    }
}
