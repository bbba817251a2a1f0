use proptest::prelude::*;
use renewalq::channels::{LindbladGenerator, SuperOperator};
use renewalq::collisional::{
    laplace_solve, markov_limit_generator, mc_collisional, series_solve, volterra_solve, CollisionalModel,
    IntercollisionFamily, LaplaceInversionConfig,
};
use renewalq::grid::TimeGrid;
use renewalq::qmatrix::qubit::{hadamard, sigma_minus, sigma_x, sigma_y, sigma_z};
use renewalq::qmatrix::{c, hermiticity_defect, identity, mat_exp, trace, trace_distance_ops, ComplexMatrix, DensityMatrix};
use renewalq::renewal::{Direction, WaitingTime};

fn noncommuting() -> CollisionalModel {
    CollisionalModel::new(
        IntercollisionFamily::semigroup(LindbladGenerator::dissipative(2, vec![sigma_z().scale(0.3f64.sqrt())]).unwrap()),
        SuperOperator::conjugation(&hadamard()),
        WaitingTime::erlang(2, 1.0).unwrap(),
    )
    .unwrap()
}

fn dephasing(p: f64) -> SuperOperator {
    SuperOperator::from_kraus(&[identity(2).scale((1.0 - p).sqrt()), sigma_z().scale(p.sqrt())], 2).unwrap()
}

#[test]
fn solvers_agree_on_noncommuting_model() {
    let model = noncommuting();
    let rho0 = DensityMatrix::basis(2, 0);
    let grid = TimeGrid::new(4.0, 2000).unwrap();
    let volterra = volterra_solve(&model, &rho0, &grid).unwrap();
    let series = series_solve(&model, &rho0, &grid, None).unwrap();
    let probe = [1.0, 2.0, 3.0, 4.0];
    let laplace = laplace_solve(&model, &rho0, &probe, &LaplaceInversionConfig::default()).unwrap();
    for (k, &t) in probe.iter().enumerate() {
        let i = grid.index_of(t).unwrap();
        assert!(trace_distance_ops(&volterra.states[i], &laplace.states[k]).unwrap() < 1e-5);
        assert!(trace_distance_ops(&series.states[i], &volterra.states[i]).unwrap() < 1e-6);
    }
    let i = grid.index_of(2.0).unwrap();
    let mc = mc_collisional(&model, &rho0, 2.0, 20_000, 11, Direction::Reverse).unwrap();
    let d = trace_distance_ops(mc.matrix(), &volterra.states[i]).unwrap();
    assert!(d < 0.02, "distance {d}");
}

#[test]
fn exponential_wait_reduces_to_markov_semigroup() {
    let ad = LindbladGenerator::dissipative(2, vec![sigma_minus()]).unwrap();
    let model = CollisionalModel::new(IntercollisionFamily::semigroup(ad), dephasing(0.4), WaitingTime::exponential(1.7).unwrap()).unwrap();
    let rho0 = DensityMatrix::pure(&[c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
    let grid = TimeGrid::new(3.0, 3000).unwrap();
    let sol = volterra_solve(&model, &rho0, &grid).unwrap();
    let gen = markov_limit_generator(&model).unwrap();
    for i in (0..grid.len()).step_by(300) {
        let exact = SuperOperator::from_matrix(mat_exp(&gen.matrix().scale(grid.time(i))).unwrap()).unwrap().apply(rho0.matrix());
        assert!(trace_distance_ops(&sol.states[i], &exact).unwrap() < 1e-5);
    }
    // both sampling directions agree when the wait is memoryless
    let t = 1.5;
    let i = grid.index_of(t).unwrap();
    for dir in [Direction::Forward, Direction::Reverse] {
        let mc = mc_collisional(&model, &rho0, t, 20_000, 4, dir).unwrap();
        assert!(trace_distance_ops(mc.matrix(), &sol.states[i]).unwrap() < 0.02);
    }
}

#[test]
fn tabulated_ingredients_match_closed_forms() {
    let ad = LindbladGenerator::dissipative(2, vec![sigma_minus()]).unwrap();
    let semigroup = IntercollisionFamily::semigroup(ad);
    let dt = 0.005;
    let maps = (0..=8000).map(|i| semigroup.at(i as f64 * dt).unwrap()).collect();
    let table = IntercollisionFamily::tabulated(dt, maps).unwrap();
    let values = (0..=20_000).map(|i| {
        let t = i as f64 * 0.002;
        t * (-t).exp()
    });
    let tab_wait = WaitingTime::tabulated(0.002, values.collect()).unwrap();
    let closed = CollisionalModel::new(semigroup, dephasing(0.5), WaitingTime::erlang(2, 1.0).unwrap()).unwrap();
    let tabulated = CollisionalModel::new(table, dephasing(0.5), tab_wait).unwrap();
    let rho0 = DensityMatrix::pure(&[c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
    let grid = TimeGrid::new(4.0, 800).unwrap();
    let a = volterra_solve(&closed, &rho0, &grid).unwrap();
    let b = volterra_solve(&tabulated, &rho0, &grid).unwrap();
    for (x, y) in a.states.iter().zip(&b.states) {
        assert!(trace_distance_ops(x, y).unwrap() < 1e-5);
    }
    let probe = [0.02, 0.1, 0.5, 1.0, 2.0, 3.5];
    let l = laplace_solve(&tabulated, &rho0, &probe, &LaplaceInversionConfig::default()).unwrap();
    for (t, s) in probe.iter().zip(&l.states) {
        let d = trace_distance_ops(s, &a.states[grid.index_of(*t).unwrap()]).unwrap();
        assert!(d < 1e-5, "t = {t}: distance {d}");
    }
}

fn unitary(theta: f64, axis: [f64; 3]) -> ComplexMatrix {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt().max(1e-9);
    let h = (sigma_x().scale(axis[0]) + sigma_y().scale(axis[1]) + sigma_z().scale(axis[2])).unscale(n);
    mat_exp(&(h * c(0.0, -theta))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn volterra_preserves_trace_and_hermiticity(
        theta in 0.0..3.0f64,
        axis in prop::array::uniform3(-1.0..1.0f64),
        gamma in 0.0..2.0f64,
        shape in 1u32..4,
        rate in 0.3..3.0f64,
    ) {
        let family = IntercollisionFamily::semigroup(LindbladGenerator::dissipative(2, vec![sigma_minus().scale(gamma.sqrt())]).unwrap());
        let model = CollisionalModel::new(family, SuperOperator::conjugation(&unitary(theta, axis)), WaitingTime::erlang(shape, rate).unwrap()).unwrap();
        let rho0 = DensityMatrix::pure(&[c(0.8, 0.0), c(0.0, 0.6)]).unwrap();
        let grid = TimeGrid::new(2.0, 200).unwrap();
        let sol = volterra_solve(&model, &rho0, &grid).unwrap();
        for s in &sol.states {
            prop_assert!((trace(s) - c(1.0, 0.0)).norm() < 1e-10);
            prop_assert!(hermiticity_defect(s) < 1e-12);
            prop_assert!(DensityMatrix::with_tol(s.clone(), 1e-6).is_ok());
        }
    }
}
