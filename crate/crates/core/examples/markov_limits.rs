//! Two limits in which the collision model collapses to simpler dynamics.
//!
//! With exponential waits the model is a Lindblad semigroup. With identity
//! collisions the waiting-time law drops out and only the family acts.

use renewalq::channels::{LindbladGenerator, SuperOperator};
use renewalq::collisional::{markov_limit_generator, volterra_solve, CollisionalModel, IntercollisionFamily};
use renewalq::grid::TimeGrid;
use renewalq::qmatrix::qubit::{sigma_minus, sigma_z};
use renewalq::qmatrix::{c, identity, mat_exp, trace_distance_ops, DensityMatrix};
use renewalq::renewal::WaitingTime;

fn main() -> renewalq::Result<()> {
    let damping = LindbladGenerator::dissipative(2, vec![sigma_minus()])?;
    let dephasing = SuperOperator::from_kraus(&[identity(2).scale(0.5f64.sqrt()), sigma_z().scale(0.5f64.sqrt())], 2)?;
    let rho0 = DensityMatrix::pure(&[c(0.6, 0.0), c(0.0, 0.8)])?;
    let grid = TimeGrid::new(3.0, 1500)?;
    let t = 3.0;

    let markov = CollisionalModel::new(IntercollisionFamily::semigroup(damping.clone()), dephasing, WaitingTime::exponential(1.5)?)?;
    let gen = markov_limit_generator(&markov)?;
    let exact = SuperOperator::from_matrix(mat_exp(&gen.matrix().scale(t))?)?.apply(rho0.matrix());
    let sol = volterra_solve(&markov, &rho0, &grid)?;
    println!("exponential wait vs Markov semigroup: {:.2e}", trace_distance_ops(sol.last(), &exact)?);

    let trivial = CollisionalModel::new(
        IntercollisionFamily::semigroup(damping.clone()),
        SuperOperator::identity(2),
        WaitingTime::erlang(3, 2.0)?,
    )?;
    let sol = volterra_solve(&trivial, &rho0, &grid)?;
    let semigroup = IntercollisionFamily::semigroup(damping).at(t)?.apply(rho0.matrix());
    println!("identity collisions vs bare family: {:.2e}", trace_distance_ops(sol.last(), &semigroup)?);
    Ok(())
}
