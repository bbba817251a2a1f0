//! Superoperators built from a Lindblad generator, plus channel certification.
//!
//! With `R = −iH − ½ Σ_k L_k† L_k` the generator splits as
//! `Lρ = Rρ + ρR† + Jρ` with the jump map `Jρ = Σ_k L_k ρ L_k†`. Between
//! jumps the state follows the trace-decreasing semigroup
//! `R(t)ρ = e^{tR} ρ e^{tR†}`.

use nalgebra::SVD;

use crate::error::{input, Error, Result};
use crate::qmatrix::{
    c, hermitian_eigenvalues, hermiticity_defect, identity, mat_exp, matrix_unit, max_abs, trace, zeros,
    ComplexMatrix, DensityMatrix, C64, DEFAULT_TOL,
};

/// Trace threshold below which a normalized map reports [`Error::NullOutcome`].
pub const NULL_TOL: f64 = 1e-14;

/// Scale-free rank threshold `σ₂/σ₁` for fixed-output jump detection.
pub const FIXED_OUTPUT_TOL: f64 = 1e-10;

/// Hamiltonian (ħ = 1) and jump operators of a Lindblad generator.
#[derive(Clone, Debug)]
pub struct LindbladGenerator {
    hamiltonian: ComplexMatrix,
    jump_ops: Vec<ComplexMatrix>,
}

impl LindbladGenerator {
    pub fn new(hamiltonian: ComplexMatrix, jump_ops: Vec<ComplexMatrix>) -> Result<Self> {
        let dim = hamiltonian.nrows();
        if dim == 0 || hamiltonian.ncols() != dim {
            return input("hamiltonian must be a non-empty square matrix");
        }
        let defect = hermiticity_defect(&hamiltonian);
        if defect > DEFAULT_TOL * max_abs(&hamiltonian).max(1.0) {
            return input(format!("hamiltonian is not Hermitian (defect {defect:e})"));
        }
        for (k, l) in jump_ops.iter().enumerate() {
            if l.shape() != (dim, dim) {
                return input(format!("jump operator {k} has shape {:?}, expected ({dim}, {dim})", l.shape()));
            }
        }
        Ok(Self { hamiltonian, jump_ops })
    }

    /// Purely dissipative generator with `H = 0`.
    pub fn dissipative(dim: usize, jump_ops: Vec<ComplexMatrix>) -> Result<Self> {
        Self::new(zeros(dim), jump_ops)
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn hamiltonian(&self) -> &ComplexMatrix {
        &self.hamiltonian
    }

    pub fn jump_ops(&self) -> &[ComplexMatrix] {
        &self.jump_ops
    }

    /// `R = −iH − ½ Σ_k L_k† L_k`.
    pub fn damping_operator(&self) -> ComplexMatrix {
        let mut r = &self.hamiltonian * c(0.0, -1.0);
        for l in &self.jump_ops {
            r -= (l.adjoint() * l).scale(0.5);
        }
        r
    }
}

/// A linear map on `dim × dim` operators, stored as a `dim² × dim²` matrix
/// acting on column-stacked operators.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperOperator {
    dim: usize,
    mat: ComplexMatrix,
}

impl SuperOperator {
    pub fn from_matrix(mat: ComplexMatrix) -> Result<Self> {
        let n = mat.nrows();
        let dim = (n as f64).sqrt().round() as usize;
        if n == 0 || mat.ncols() != n || dim * dim != n {
            return input(format!("superoperator matrix must be square with side a perfect square, got {:?}", mat.shape()));
        }
        Ok(Self { dim, mat })
    }

    pub fn identity(dim: usize) -> Self {
        Self { dim, mat: identity(dim * dim) }
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, mat: zeros(dim * dim) }
    }

    /// Matrix of `X ↦ A X B`.
    pub fn sandwich(a: &ComplexMatrix, b: &ComplexMatrix) -> Self {
        Self { dim: a.nrows(), mat: b.transpose().kronecker(a) }
    }

    /// `X ↦ U X U†`.
    pub fn conjugation(u: &ComplexMatrix) -> Self {
        Self::sandwich(u, &u.adjoint())
    }

    /// `X ↦ Σ_k K_k X K_k†`.
    pub fn from_kraus(ops: &[ComplexMatrix], dim: usize) -> Result<Self> {
        let mut s = Self::zero(dim);
        for (k, op) in ops.iter().enumerate() {
            if op.shape() != (dim, dim) {
                return input(format!("Kraus operator {k} has shape {:?}, expected ({dim}, {dim})", op.shape()));
            }
            s.mat += op.conjugate().kronecker(op);
        }
        Ok(s)
    }

    /// Tabulate an arbitrary linear map by its action on matrix units.
    pub fn from_linear_map(dim: usize, map: impl Fn(&ComplexMatrix) -> ComplexMatrix) -> Self {
        let mut mat = zeros(dim * dim);
        for j in 0..dim {
            for i in 0..dim {
                let out = map(&matrix_unit(dim, i, j));
                mat.column_mut(j * dim + i).copy_from_slice(out.as_slice());
            }
        }
        Self { dim, mat }
    }

    /// The transpose map `X ↦ Xᵀ` (positive but not completely positive).
    pub fn transpose_map(dim: usize) -> Self {
        Self::from_linear_map(dim, |x| x.transpose())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.mat
    }

    pub fn apply(&self, x: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(x.shape(), (self.dim, self.dim), "operator dimension mismatch");
        let v = &self.mat * nalgebra::DVector::from_column_slice(x.as_slice());
        ComplexMatrix::from_column_slice(self.dim, self.dim, v.as_slice())
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &SuperOperator) -> SuperOperator {
        assert_eq!(self.dim, other.dim, "superoperator dimension mismatch");
        Self { dim: self.dim, mat: &self.mat * &other.mat }
    }

    pub fn scale(&self, a: f64) -> SuperOperator {
        Self { dim: self.dim, mat: self.mat.scale(a) }
    }
}

/// Matrix of `X ↦ R X + X R†`.
pub fn damping_superop(gen: &LindbladGenerator) -> SuperOperator {
    let r = gen.damping_operator();
    let id = identity(gen.dim());
    SuperOperator {
        dim: gen.dim(),
        mat: id.kronecker(&r) + r.conjugate().kronecker(&id),
    }
}

/// Matrix representation of the full Lindblad generator.
pub fn liouvillian(gen: &LindbladGenerator) -> SuperOperator {
    let mut s = damping_superop(gen);
    s.mat += jump_superop(gen).mat;
    s
}

/// The jump map `Jρ = Σ_k L_k ρ L_k†`.
pub fn jump_superop(gen: &LindbladGenerator) -> SuperOperator {
    SuperOperator::from_kraus(gen.jump_ops(), gen.dim()).expect("generator validated shapes")
}

/// `e^{tR}`, the no-jump propagator on state vectors.
pub fn no_jump_propagator(gen: &LindbladGenerator, t: f64) -> Result<ComplexMatrix> {
    if !(t >= 0.0) || !t.is_finite() {
        return input(format!("time must be finite and non-negative, got {t}"));
    }
    mat_exp(&gen.damping_operator().scale(t))
}

/// `R(t)σ = e^{tR} σ e^{tR†}`.
pub fn relaxation_semigroup(gen: &LindbladGenerator, t: f64) -> Result<SuperOperator> {
    let e = no_jump_propagator(gen, t)?;
    Ok(SuperOperator::conjugation(&e))
}

/// `s(x) / Tr s(x)` for a general operator `x`; the trace may be complex.
pub fn normalize_operator(s: &SuperOperator, x: &ComplexMatrix) -> Result<ComplexMatrix> {
    let out = s.apply(x);
    let tr = trace(&out);
    if tr.norm() <= NULL_TOL {
        return Err(Error::NullOutcome { trace: tr.norm() });
    }
    Ok(out / tr)
}

/// The normalized map `σ ↦ s(σ) / Tr s(σ)` on states.
///
/// `s` must be completely positive for the result to be a state.
pub fn normalize_apply(s: &SuperOperator, sigma: &DensityMatrix) -> Result<DensityMatrix> {
    let out = s.apply(sigma.matrix());
    let tr = trace(&out).re;
    if tr <= NULL_TOL {
        return Err(Error::NullOutcome { trace: tr });
    }
    Ok(DensityMatrix::from_unchecked(out.unscale(tr)))
}

/// Choi matrix `Σ_ij s(|i⟩⟨j|) ⊗ |i⟩⟨j|`.
pub fn choi(s: &SuperOperator) -> ComplexMatrix {
    let d = s.dim;
    let mut out = zeros(d * d);
    for i in 0..d {
        for j in 0..d {
            let unit = matrix_unit(d, i, j);
            out += s.apply(&unit).kronecker(&unit);
        }
    }
    out
}

/// Result of checking complete positivity and trace preservation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CptpReport {
    pub is_tp: bool,
    pub is_cp: bool,
    pub min_choi_eigenvalue: f64,
    /// `max_ij |Tr s(|i⟩⟨j|) − δ_ij|`.
    pub tp_defect: f64,
}

impl CptpReport {
    pub fn is_cptp(&self) -> bool {
        self.is_cp && self.is_tp
    }
}

pub fn certify_cptp(s: &SuperOperator, tol: f64) -> CptpReport {
    certify_cptp_with(s, tol, tol)
}

/// Certification with separate complete-positivity and trace tolerances.
pub fn certify_cptp_with(s: &SuperOperator, cp_tol: f64, tp_tol: f64) -> CptpReport {
    let d = s.dim;
    let mut tp_defect: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            let tr = trace(&s.apply(&matrix_unit(d, i, j)));
            let target = if i == j { c(1.0, 0.0) } else { C64::default() };
            tp_defect = tp_defect.max((tr - target).norm());
        }
    }
    // A non-Hermitian Choi matrix means the map is not even Hermiticity preserving.
    let ch = choi(s);
    let min_choi_eigenvalue = if hermiticity_defect(&ch) > cp_tol.max(DEFAULT_TOL) * max_abs(&ch).max(1.0) {
        f64::NEG_INFINITY
    } else {
        hermitian_eigenvalues(&ch, f64::INFINITY).map(|ev| ev[0]).unwrap_or(f64::NEG_INFINITY)
    };
    CptpReport {
        is_tp: tp_defect <= tp_tol,
        is_cp: min_choi_eigenvalue >= -cp_tol,
        min_choi_eigenvalue,
        tp_defect,
    }
}

/// If `j` sends every operator to a multiple of one fixed state `ρ̄`, return `ρ̄`.
///
/// Detection uses the singular values of the superoperator matrix:
/// `σ₂/σ₁ ≤ tol` marks numerical rank one.
pub fn fixed_output_detect(j: &SuperOperator, tol: f64) -> Option<DensityMatrix> {
    let svd = SVD::new(j.mat.clone(), true, false);
    let sv = &svd.singular_values;
    let (imax, smax) = sv.iter().enumerate().fold((0, 0.0), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
    if smax <= 0.0 {
        return None;
    }
    let second = sv.iter().enumerate().filter(|&(i, _)| i != imax).map(|(_, &s)| s).fold(0.0, f64::max);
    if second / smax > tol {
        return None;
    }
    let u = svd.u.as_ref()?.column(imax).clone_owned();
    let m = ComplexMatrix::from_column_slice(j.dim, j.dim, u.as_slice());
    let tr = trace(&m);
    if tr.norm() <= NULL_TOL {
        return None;
    }
    let rho = crate::qmatrix::hermitian_part(&(m / tr));
    DensityMatrix::with_tol(rho, 1e-8).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmatrix::qubit::*;
    use crate::qmatrix::{from_real_rows, ket_bra};
    use proptest::prelude::*;

    fn amplitude_damping(gamma: f64) -> LindbladGenerator {
        LindbladGenerator::dissipative(2, vec![sigma_minus().scale(gamma.sqrt())]).unwrap()
    }

    fn assert_close(a: &ComplexMatrix, b: &ComplexMatrix, tol: f64) {
        let d = max_abs(&(a - b));
        assert!(d <= tol, "matrices differ by {d:e}\n{a}\n{b}");
    }

    fn operator_lindblad(gen: &LindbladGenerator, rho: &ComplexMatrix) -> ComplexMatrix {
        let h = gen.hamiltonian();
        let mut out = (h * rho - rho * h) * c(0.0, -1.0);
        for l in gen.jump_ops() {
            let ldl = l.adjoint() * l;
            out += l * rho * l.adjoint() - (&ldl * rho + rho * &ldl).scale(0.5);
        }
        out
    }

    #[test]
    fn generator_rejects_bad_input() {
        assert!(LindbladGenerator::new(sigma_minus(), vec![]).is_err());
        assert!(LindbladGenerator::new(sigma_z(), vec![identity(3)]).is_err());
    }

    #[test]
    fn liouvillian_examples() {
        let empty = LindbladGenerator::dissipative(2, vec![]).unwrap();
        assert_eq!(liouvillian(&empty).matrix(), &zeros(4));

        let ad = amplitude_damping(1.0);
        let out = liouvillian(&ad).apply(DensityMatrix::basis(2, 1).matrix());
        assert_close(&out, &from_real_rows(2, &[1.0, 0.0, 0.0, -1.0]), 1e-15);

        let unitary = LindbladGenerator::new(sigma_z(), vec![]).unwrap();
        let plus = DensityMatrix::pure(&plus()).unwrap();
        let out = liouvillian(&unitary).apply(plus.matrix());
        assert!((out[(0, 1)] - c(0.0, -1.0)).norm() < 1e-15);
        assert!((out[(1, 0)] - c(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn jump_map_examples() {
        let ad = amplitude_damping(1.0);
        let j = jump_superop(&ad);
        assert_close(&j.apply(DensityMatrix::basis(2, 1).matrix()), DensityMatrix::basis(2, 0).matrix(), 1e-15);
        assert_close(&j.apply(DensityMatrix::basis(2, 0).matrix()), &zeros(2), 0.0);
        let empty = LindbladGenerator::dissipative(2, vec![]).unwrap();
        assert_eq!(jump_superop(&empty), SuperOperator::zero(2));
    }

    #[test]
    fn relaxation_examples() {
        let ad = amplitude_damping(1.0);
        assert_close(relaxation_semigroup(&ad, 0.0).unwrap().matrix(), &identity(4), 1e-15);
        let r = relaxation_semigroup(&ad, std::f64::consts::LN_2).unwrap();
        let tr = trace(&r.apply(DensityMatrix::basis(2, 1).matrix())).re;
        assert!((tr - 0.5).abs() < 1e-14);
        // |0⟩ is annihilated by H = 0 and σ₋
        let r = relaxation_semigroup(&ad, 3.7).unwrap();
        assert_close(&r.apply(DensityMatrix::basis(2, 0).matrix()), DensityMatrix::basis(2, 0).matrix(), 1e-14);
        assert!(relaxation_semigroup(&ad, -1.0).is_err());
    }

    #[test]
    fn normalized_map_examples() {
        let ad = amplitude_damping(1.0);
        let jt = normalize_apply(&jump_superop(&ad), &DensityMatrix::basis(2, 1)).unwrap();
        assert_close(jt.matrix(), DensityMatrix::basis(2, 0).matrix(), 1e-15);
        for t in [0.1, 1.0, 5.0] {
            let rt = normalize_apply(&relaxation_semigroup(&ad, t).unwrap(), &DensityMatrix::basis(2, 1)).unwrap();
            assert_close(rt.matrix(), DensityMatrix::basis(2, 1).matrix(), 1e-14);
        }
        let err = normalize_apply(&jump_superop(&ad), &DensityMatrix::basis(2, 0)).unwrap_err();
        assert!(matches!(err, Error::NullOutcome { .. }));
    }

    #[test]
    fn choi_examples() {
        let ev = hermitian_eigenvalues(&choi(&SuperOperator::identity(2)), 1e-12).unwrap();
        for (got, want) in ev.iter().zip([0.0, 0.0, 0.0, 2.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        let depol = SuperOperator::from_linear_map(2, |x| identity(2) * (trace(x) / c(2.0, 0.0)));
        for e in hermitian_eigenvalues(&choi(&depol), 1e-12).unwrap() {
            assert!((e - 0.5).abs() < 1e-12);
        }
        let gamma = 0.7;
        let cj = choi(&jump_superop(&amplitude_damping(gamma)));
        assert!(min_eigenvalue(&cj) >= -1e-14);
        assert!((trace(&cj).re - gamma).abs() < 1e-14);
    }

    fn min_eigenvalue(a: &ComplexMatrix) -> f64 {
        hermitian_eigenvalues(a, 1e-12).unwrap()[0]
    }

    #[test]
    fn certification_examples() {
        let id = certify_cptp(&SuperOperator::identity(2), 1e-10);
        assert!(id.is_cp && id.is_tp);

        let r = certify_cptp(&relaxation_semigroup(&amplitude_damping(1.0), 1.0).unwrap(), 1e-10);
        assert!(r.is_cp);
        assert!(!r.is_tp);
        assert!((r.tp_defect - (1.0 - (-1f64).exp())).abs() < 1e-12);

        let t = certify_cptp(&SuperOperator::transpose_map(2), 1e-10);
        assert!(!t.is_cp);
        assert!(t.is_tp);
        assert!((t.min_choi_eigenvalue + 1.0).abs() < 1e-12);
    }

    #[test]
    fn fixed_output_examples() {
        let rho_bar = fixed_output_detect(&jump_superop(&amplitude_damping(1.0)), FIXED_OUTPUT_TOL).unwrap();
        assert_close(rho_bar.matrix(), DensityMatrix::basis(2, 0).matrix(), 1e-12);

        let deph = LindbladGenerator::dissipative(2, vec![sigma_z()]).unwrap();
        assert!(fixed_output_detect(&jump_superop(&deph), FIXED_OUTPUT_TOL).is_none());
        assert!(fixed_output_detect(&SuperOperator::zero(2), FIXED_OUTPUT_TOL).is_none());

        // L_k = c_k |k⟩⟨φ| sends everything to Σ |c_k|² |k⟩⟨k|.
        let phi = [c(0.6, 0.0), c(0.0, 0.8)];
        let l0 = ket_bra(&[c(1.0, 0.0), c(0.0, 0.0)], &phi);
        let l1 = ket_bra(&[c(0.0, 0.0), c(1.0, 0.0)], &phi).scale(2f64.sqrt());
        let gen = LindbladGenerator::dissipative(2, vec![l0, l1]).unwrap();
        let rho_bar = fixed_output_detect(&jump_superop(&gen), FIXED_OUTPUT_TOL).unwrap();
        assert_close(rho_bar.matrix(), &from_real_rows(2, &[1.0 / 3.0, 0.0, 0.0, 2.0 / 3.0]), 1e-12);
    }

    fn arb_op(dim: usize, scale: f64) -> impl Strategy<Value = ComplexMatrix> {
        prop::collection::vec((-scale..scale, -scale..scale), dim * dim)
            .prop_map(move |v| ComplexMatrix::from_iterator(dim, dim, v.into_iter().map(|(r, i)| c(r, i))))
    }

    fn arb_generator() -> impl Strategy<Value = LindbladGenerator> {
        (arb_op(2, 1.0), arb_op(2, 0.8), arb_op(2, 0.8)).prop_map(|(h, l1, l2)| {
            LindbladGenerator::new(crate::qmatrix::hermitian_part(&h), vec![l1, l2]).unwrap()
        })
    }

    fn arb_positive() -> impl Strategy<Value = ComplexMatrix> {
        arb_op(2, 1.0).prop_map(|a| &a * a.adjoint())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn liouvillian_matches_operator_formula(gen in arb_generator(), rho in arb_positive()) {
            let lhs = liouvillian(&gen).apply(&rho);
            prop_assert!(max_abs(&(lhs - operator_lindblad(&gen, &rho))) <= 1e-13);
        }

        #[test]
        fn liouvillian_decomposes_into_damping_and_jump(gen in arb_generator()) {
            let sum = damping_superop(&gen).matrix() + jump_superop(&gen).matrix();
            prop_assert!(max_abs(&(liouvillian(&gen).into_matrix() - sum)) <= 1e-13);
        }

        #[test]
        fn jump_map_matches_kraus_sum(gen in arb_generator(), rho in arb_positive()) {
            let direct = gen.jump_ops().iter().fold(zeros(2), |acc, l| acc + l * &rho * l.adjoint());
            prop_assert!(max_abs(&(jump_superop(&gen).apply(&rho) - direct)) <= 1e-13);
        }

        #[test]
        fn relaxation_is_a_semigroup(gen in arb_generator(), s in 0.0f64..2.0, t in 0.0f64..2.0) {
            let lhs = relaxation_semigroup(&gen, s + t).unwrap();
            let rhs = relaxation_semigroup(&gen, s).unwrap().compose(&relaxation_semigroup(&gen, t).unwrap());
            prop_assert!(max_abs(&(lhs.into_matrix() - rhs.into_matrix())) <= 1e-11);
        }

        #[test]
        fn normalized_maps_are_homogeneous(gen in arb_generator(), rho in arb_positive(),
                                           re in 0.1f64..3.0, im in -3.0f64..3.0, t in 0.0f64..2.0) {
            let mu = c(re, im);
            for s in [jump_superop(&gen), relaxation_semigroup(&gen, t).unwrap()] {
                let a = normalize_operator(&s, &(rho.clone() * mu)).unwrap();
                let b = normalize_operator(&s, &rho).unwrap();
                prop_assert!(max_abs(&(a - b)) <= 1e-12);
            }
        }

        #[test]
        fn trace_decay_rate_is_jump_trace(gen in arb_generator(), rho in arb_positive(), t in 0.1f64..2.0) {
            let h = 1e-5;
            let tr = |s: f64| trace(&relaxation_semigroup(&gen, s).unwrap().apply(&rho)).re;
            let derivative = (tr(t + h) - tr(t - h)) / (2.0 * h);
            let jump_rate = trace(&jump_superop(&gen).apply(&relaxation_semigroup(&gen, t).unwrap().apply(&rho))).re;
            prop_assert!((derivative + jump_rate).abs() <= 1e-7, "{} vs {}", derivative, -jump_rate);
        }
    }
}
