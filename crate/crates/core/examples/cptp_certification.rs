//! Certify channels and the collision dynamics through their Choi matrices.

use renewalq::channels::{certify_cptp, LindbladGenerator, SuperOperator};
use renewalq::collisional::{cptp_certify_dynamics, CollisionalModel, DeterministicSolver, IntercollisionFamily};
use renewalq::grid::TimeGrid;
use renewalq::qmatrix::qubit::{hadamard, sigma_minus};
use renewalq::qmatrix::from_real_rows;
use renewalq::renewal::WaitingTime;

fn main() -> renewalq::Result<()> {
    let hadamard_map = SuperOperator::conjugation(&hadamard());
    println!("Hadamard conjugation: {:?}", certify_cptp(&hadamard_map, 1e-10));

    // transpose map: positive and trace preserving, not completely positive
    let swap = from_real_rows(4, &[1., 0., 0., 0., 0., 0., 1., 0., 0., 1., 0., 0., 0., 0., 0., 1.]);
    let transpose = SuperOperator::from_matrix(swap)?;
    println!("transpose: {:?}", certify_cptp(&transpose, 1e-10));

    let model = CollisionalModel::new(
        IntercollisionFamily::semigroup(LindbladGenerator::dissipative(2, vec![sigma_minus()])?),
        hadamard_map,
        WaitingTime::erlang(2, 1.0)?,
    )?;
    let grid = TimeGrid::new(4.0, 800)?;
    let reports = cptp_certify_dynamics(&model, DeterministicSolver::Volterra, &grid, &[1.0, 2.0, 4.0])?;
    for (t, r) in [1.0, 2.0, 4.0].iter().zip(&reports) {
        println!("propagator at t = {t}: cptp {} (min Choi eigenvalue {:.1e})", r.is_cptp(), r.min_choi_eigenvalue);
    }
    Ok(())
}
