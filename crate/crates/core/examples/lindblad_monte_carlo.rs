//! Quantum-jump Monte Carlo for a driven, damped qubit.
//!
//! Each trajectory draws from its own counter-based stream, so the average is
//! the same whatever the number of worker threads.

use renewalq::channels::{liouvillian, LindbladGenerator, SuperOperator};
use renewalq::lindblad_traj::{mc_average_on_grid, sample_trajectory, trajectory_stream};
use renewalq::qmatrix::qubit::{sigma_minus, sigma_x};
use renewalq::qmatrix::{mat_exp, trace_distance_ops, DensityMatrix};

fn main() -> renewalq::Result<()> {
    let gen = LindbladGenerator::new(sigma_x().scale(0.7), vec![sigma_minus()])?;
    let rho0 = DensityMatrix::basis(2, 1);

    let (traj, state) = sample_trajectory(&gen, &rho0, 2.0, &mut trajectory_stream(1, 0))?;
    println!("one record: jumps at {:?}, final state:\n{}", traj.jump_times(), state.matrix());

    let times = [0.5, 1.0, 2.0];
    let estimates = mc_average_on_grid(&gen, &rho0, &times, 20_000, 1)?;
    for (t, est) in times.iter().zip(&estimates) {
        let exact = SuperOperator::from_matrix(mat_exp(&liouvillian(&gen).matrix().scale(*t))?)?.apply(rho0.matrix());
        println!("t = {t}: trace distance to exact {:.4}", trace_distance_ops(est, &exact)?);
    }
    Ok(())
}
