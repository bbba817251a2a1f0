//! Dense complex linear algebra at small dimension.
//!
//! Operators are `nalgebra` matrices of `Complex<f64>`. Vectorization stacks
//! columns, which coincides with nalgebra's column-major storage.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{input, Result};

pub type C64 = Complex<f64>;
pub type ComplexMatrix = DMatrix<C64>;

/// Default Hermiticity / positivity / trace tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(dim: usize) -> ComplexMatrix {
    ComplexMatrix::identity(dim, dim)
}

pub fn zeros(dim: usize) -> ComplexMatrix {
    ComplexMatrix::zeros(dim, dim)
}

/// Build a matrix from row-major real entries.
pub fn from_real_rows(dim: usize, rows: &[f64]) -> ComplexMatrix {
    assert_eq!(rows.len(), dim * dim, "row data must have dim² entries");
    ComplexMatrix::from_row_iterator(dim, dim, rows.iter().map(|&x| c(x, 0.0)))
}

/// Outer product `|a⟩⟨b|`.
pub fn ket_bra(a: &[C64], b: &[C64]) -> ComplexMatrix {
    let ka = DVector::from_column_slice(a);
    let kb = DVector::from_column_slice(b);
    &ka * kb.adjoint()
}

/// Matrix unit `|i⟩⟨j|`.
pub fn matrix_unit(dim: usize, i: usize, j: usize) -> ComplexMatrix {
    let mut m = zeros(dim);
    m[(i, j)] = c(1.0, 0.0);
    m
}

pub fn trace(a: &ComplexMatrix) -> C64 {
    a.diagonal().iter().sum()
}

/// `(a + a†) / 2`.
pub fn hermitian_part(a: &ComplexMatrix) -> ComplexMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// Largest absolute entry of `a − a†`.
pub fn hermiticity_defect(a: &ComplexMatrix) -> f64 {
    max_abs(&(a - a.adjoint()))
}

pub fn max_abs(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn check_square(a: &ComplexMatrix, what: &str) -> Result<()> {
    if a.nrows() == 0 || a.nrows() != a.ncols() {
        return input(format!("{what}: expected a non-empty square matrix, got {}x{}", a.nrows(), a.ncols()));
    }
    Ok(())
}

/// Matrix exponential by scaling and squaring with a Padé approximant.
pub fn mat_exp(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_square(a, "mat_exp")?;
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return input("mat_exp: non-finite entry");
    }
    Ok(a.exp())
}

/// A column-stacked operator.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorizedOperator {
    dim: usize,
    vec: DVector<C64>,
}

impl VectorizedOperator {
    pub fn from_vec(vec: DVector<C64>) -> Result<Self> {
        let n = vec.len();
        let dim = (n as f64).sqrt().round() as usize;
        if dim == 0 || dim * dim != n {
            return input(format!("vector length {n} is not a non-zero perfect square"));
        }
        Ok(Self { dim, vec })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_vector(&self) -> &DVector<C64> {
        &self.vec
    }

    pub fn into_vector(self) -> DVector<C64> {
        self.vec
    }
}

/// Column-stacking vectorization: column `j` occupies slots `j·dim .. j·dim + dim`.
pub fn vectorize(a: &ComplexMatrix) -> VectorizedOperator {
    VectorizedOperator {
        dim: a.nrows(),
        vec: DVector::from_column_slice(a.as_slice()),
    }
}

pub fn devectorize(v: &VectorizedOperator) -> ComplexMatrix {
    ComplexMatrix::from_column_slice(v.dim, v.dim, v.vec.as_slice())
}

/// Reshape a raw column-stacked vector into a matrix.
pub fn devectorize_slice(v: &[C64]) -> Result<ComplexMatrix> {
    let dim = (v.len() as f64).sqrt().round() as usize;
    if dim == 0 || dim * dim != v.len() {
        return input(format!("vector length {} is not a non-zero perfect square", v.len()));
    }
    Ok(ComplexMatrix::from_column_slice(dim, dim, v))
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(a: &ComplexMatrix, tol: f64) -> Result<Vec<f64>> {
    check_square(a, "hermitian_eigenvalues")?;
    let scale = max_abs(a).max(1.0);
    let defect = hermiticity_defect(a);
    if defect > tol * scale {
        return input(format!("matrix is not Hermitian (defect {defect:e})"));
    }
    let mut ev: Vec<f64> = hermitian_part(a).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

pub fn min_eigenvalue_hermitian(a: &ComplexMatrix) -> Result<f64> {
    Ok(hermitian_eigenvalues(a, DEFAULT_TOL)?[0])
}

/// A validated statistical operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    mat: ComplexMatrix,
    tol: f64,
}

impl DensityMatrix {
    pub fn new(mat: ComplexMatrix) -> Result<Self> {
        Self::with_tol(mat, DEFAULT_TOL)
    }

    /// Validate Hermiticity, positivity and unit trace within `tol`.
    pub fn with_tol(mat: ComplexMatrix, tol: f64) -> Result<Self> {
        check_square(&mat, "density matrix")?;
        if tol < 0.0 || !tol.is_finite() {
            return input("density matrix tolerance must be finite and non-negative");
        }
        let herm = hermiticity_defect(&mat);
        if herm > tol {
            return input(format!("density matrix is not Hermitian (defect {herm:e})"));
        }
        let tr = trace(&mat);
        if (tr - c(1.0, 0.0)).norm() > tol {
            return input(format!("density matrix trace is {tr}, expected 1"));
        }
        let min = hermitian_eigenvalues(&mat, tol.max(f64::EPSILON))?[0];
        if min < -tol {
            return input(format!("density matrix has negative eigenvalue {min:e}"));
        }
        Ok(Self { mat, tol })
    }

    /// Wrap a matrix that is a density matrix by construction.
    pub(crate) fn from_unchecked(mat: ComplexMatrix) -> Self {
        Self { mat, tol: DEFAULT_TOL }
    }

    /// `|ψ⟩⟨ψ|` for a normalized copy of `psi`.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return input("pure state vector must be non-zero and finite");
        }
        let v: Vec<C64> = psi.iter().map(|z| z / norm).collect();
        Ok(Self::from_unchecked(ket_bra(&v, &v)))
    }

    /// Computational basis projector `|k⟩⟨k|`.
    pub fn basis(dim: usize, k: usize) -> Self {
        assert!(k < dim, "basis index out of range");
        Self::from_unchecked(matrix_unit(dim, k, k))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self::from_unchecked(identity(dim).unscale(dim as f64))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.mat
    }
}

impl AsRef<ComplexMatrix> for DensityMatrix {
    fn as_ref(&self) -> &ComplexMatrix {
        &self.mat
    }
}

/// Trace distance `½‖r1 − r2‖₁`.
pub fn trace_distance(r1: &DensityMatrix, r2: &DensityMatrix) -> Result<f64> {
    trace_distance_ops(r1.matrix(), r2.matrix())
}

/// Trace distance between the Hermitian parts of two operators; used on raw
/// solver output where the invariants only hold up to discretization error.
pub fn trace_distance_ops(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return input(format!("dimension mismatch: {:?} vs {:?}", a.shape(), b.shape()));
    }
    check_square(a, "trace_distance")?;
    let d = hermitian_part(&(a - b));
    Ok(0.5 * d.symmetric_eigenvalues().iter().map(|x| x.abs()).sum::<f64>())
}

/// Frobenius-norm distance.
pub fn frobenius_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    (a - b).norm()
}

/// Single-qubit operators in the computational basis `{|0⟩, |1⟩}`.
pub mod qubit {
    use super::{c, ComplexMatrix, C64};

    pub fn sigma_x() -> ComplexMatrix {
        ComplexMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
    }

    pub fn sigma_y() -> ComplexMatrix {
        ComplexMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
    }

    pub fn sigma_z() -> ComplexMatrix {
        ComplexMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
    }

    /// Lowering operator `|0⟩⟨1|`.
    pub fn sigma_minus() -> ComplexMatrix {
        ComplexMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)])
    }

    pub fn hadamard() -> ComplexMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        ComplexMatrix::from_row_slice(2, 2, &[c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)])
    }

    pub fn plus() -> [C64; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        [c(h, 0.0), c(h, 0.0)]
    }
}

#[cfg(test)]
mod tests {
    use super::qubit::*;
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) {
        let d = max_abs(&(a - b));
        assert!(d <= tol, "matrices differ by {d:e}\n{a}\n{b}");
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_close(&mat_exp(&zeros(2)).unwrap(), &identity(2), 0.0);
    }

    #[test]
    fn exp_of_diagonal() {
        let a = from_real_rows(2, &[1.0, 0.0, 0.0, -1.0]);
        let e = mat_exp(&a).unwrap();
        let expected = from_real_rows(2, &[1f64.exp(), 0.0, 0.0, (-1f64).exp()]);
        assert_close(&e, &expected, 1e-14);
    }

    #[test]
    fn exp_of_nilpotent() {
        let e = mat_exp(&sigma_minus()).unwrap();
        assert_close(&e, &from_real_rows(2, &[1.0, 1.0, 0.0, 1.0]), 1e-15);
    }

    #[test]
    fn exp_rejects_nan() {
        let mut a = zeros(2);
        a[(0, 1)] = c(f64::NAN, 0.0);
        assert!(matches!(mat_exp(&a), Err(crate::Error::Input(_))));
    }

    #[test]
    fn exp_large_norm_relative_accuracy() {
        // exp(i·θ·σ_x) = cos θ I + i sin θ σ_x, with θ = 20
        let theta = 20.0;
        let a = sigma_x().scale(theta) * c(0.0, 1.0);
        let e = mat_exp(&a).unwrap();
        let expected = identity(2).scale(theta.cos()) + sigma_x() * c(0.0, theta.sin());
        assert_close(&e, &expected, 1e-12);
    }

    #[test]
    fn vectorize_stacks_columns() {
        let a = from_real_rows(2, &[1.0, 2.0, 3.0, 4.0]);
        let v = vectorize(&a);
        let got: Vec<f64> = v.as_vector().iter().map(|z| z.re).collect();
        assert_eq!(got, vec![1.0, 3.0, 2.0, 4.0]);
        let id: Vec<f64> = vectorize(&identity(2)).as_vector().iter().map(|z| z.re).collect();
        assert_eq!(id, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn vector_length_must_be_square() {
        assert!(VectorizedOperator::from_vec(DVector::zeros(3)).is_err());
        assert!(devectorize_slice(&[c(0.0, 0.0); 5]).is_err());
        assert!(VectorizedOperator::from_vec(DVector::zeros(9)).is_ok());
    }

    #[test]
    fn vec_of_product_uses_kron_of_transpose() {
        let a = ComplexMatrix::from_fn(3, 3, |i, j| c(i as f64 + 0.5, j as f64 - 1.0));
        let x = ComplexMatrix::from_fn(3, 3, |i, j| c((i * j) as f64, 1.0 + i as f64));
        let b = ComplexMatrix::from_fn(3, 3, |i, j| c(1.0 - j as f64, (i + 2 * j) as f64));
        let lhs = vectorize(&(&a * &x * &b));
        let rhs = b.transpose().kronecker(&a) * vectorize(&x).as_vector();
        assert!((lhs.as_vector() - rhs).norm() < 1e-12);
    }

    #[test]
    fn min_eigenvalue_examples() {
        assert!((min_eigenvalue_hermitian(&from_real_rows(2, &[3.0, 0.0, 0.0, 1.0])).unwrap() - 1.0).abs() < 1e-14);
        assert!((min_eigenvalue_hermitian(&sigma_x()).unwrap() + 1.0).abs() < 1e-14);
        assert!(min_eigenvalue_hermitian(DensityMatrix::basis(2, 1).matrix()).unwrap().abs() < 1e-14);
        assert!(min_eigenvalue_hermitian(&sigma_minus()).is_err());
    }

    #[test]
    fn trace_distance_examples() {
        let zero = DensityMatrix::basis(2, 0);
        let one = DensityMatrix::basis(2, 1);
        let mixed = DensityMatrix::maximally_mixed(2);
        assert_eq!(trace_distance(&zero, &zero).unwrap(), 0.0);
        assert!((trace_distance(&zero, &one).unwrap() - 1.0).abs() < 1e-14);
        assert!((trace_distance(&zero, &mixed).unwrap() - 0.5).abs() < 1e-14);
        assert!(trace_distance(&zero, &DensityMatrix::basis(3, 0)).is_err());
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(sigma_x()).is_err());
        assert!(DensityMatrix::new(from_real_rows(2, &[1.5, 0.0, 0.0, -0.5])).is_err());
        assert!(DensityMatrix::new(from_real_rows(2, &[0.5, 0.5, 0.5, 0.5])).is_ok());
        assert!(DensityMatrix::new(ComplexMatrix::zeros(2, 3)).is_err());
        let plus = DensityMatrix::pure(&plus()).unwrap();
        assert!((plus.matrix()[(0, 1)].re - 0.5).abs() < 1e-15);
    }

    fn arb_matrix(dim: usize) -> impl Strategy<Value = ComplexMatrix> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim * dim)
            .prop_map(move |v| ComplexMatrix::from_iterator(dim, dim, v.into_iter().map(|(r, i)| c(r, i))))
    }

    fn arb_density(dim: usize) -> impl Strategy<Value = DensityMatrix> {
        arb_matrix(dim).prop_map(|a| {
            let p = &a * a.adjoint();
            let tr = trace(&p);
            DensityMatrix::new(p.unscale(tr.re)).unwrap()
        })
    }

    proptest! {
        #[test]
        fn exp_of_commuting_sum_factorizes(d1 in prop::collection::vec(-5.0f64..5.0, 3),
                                           d2 in prop::collection::vec(-5.0f64..5.0, 3)) {
            let a = ComplexMatrix::from_diagonal(&DVector::from_iterator(3, d1.iter().map(|&x| c(x, 0.3 * x))));
            let b = ComplexMatrix::from_diagonal(&DVector::from_iterator(3, d2.iter().map(|&x| c(-0.5 * x, x))));
            let lhs = mat_exp(&(&a + &b)).unwrap();
            let rhs = mat_exp(&a).unwrap() * mat_exp(&b).unwrap();
            let scale = max_abs(&lhs).max(1.0);
            prop_assert!(max_abs(&(lhs - rhs)) <= 1e-12 * scale);
        }

        #[test]
        fn vectorize_is_linear_and_invertible(a in arb_matrix(3), b in arb_matrix(3), re in -2.0f64..2.0, im in -2.0f64..2.0) {
            let alpha = c(re, im);
            let lhs = vectorize(&(a.clone() * alpha + &b));
            let rhs = vectorize(&a).as_vector() * alpha + vectorize(&b).as_vector();
            prop_assert!((lhs.as_vector() - rhs).norm() <= 1e-14);
            prop_assert_eq!(devectorize(&vectorize(&a)), a);
        }

        #[test]
        fn trace_distance_is_a_metric(r1 in arb_density(3), r2 in arb_density(3), r3 in arb_density(3)) {
            let d12 = trace_distance(&r1, &r2).unwrap();
            let d21 = trace_distance(&r2, &r1).unwrap();
            let d13 = trace_distance(&r1, &r3).unwrap();
            let d32 = trace_distance(&r3, &r2).unwrap();
            prop_assert!((d12 - d21).abs() <= 1e-12);
            prop_assert!(d12 <= d13 + d32 + 1e-12);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&d12));
        }
    }
}
