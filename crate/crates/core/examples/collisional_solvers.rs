//! Solve one non-Markovian collision model four ways.
//!
//! A dephasing qubit is kicked by Hadamard collisions at Erlang-distributed
//! intervals. The Dyson-type series, the Volterra solver, Laplace inversion and
//! renewal Monte Carlo should agree.

use renewalq::channels::{LindbladGenerator, SuperOperator};
use renewalq::collisional::{
    fint_residual, laplace_solve, mc_collisional, series_solve, volterra_solve, CollisionalModel, IntercollisionFamily,
    LaplaceInversionConfig,
};
use renewalq::grid::TimeGrid;
use renewalq::qmatrix::qubit::{hadamard, sigma_z};
use renewalq::qmatrix::{trace_distance_ops, DensityMatrix};
use renewalq::renewal::{Direction, WaitingTime};

fn main() -> renewalq::Result<()> {
    let model = CollisionalModel::new(
        IntercollisionFamily::semigroup(LindbladGenerator::dissipative(2, vec![sigma_z().scale(0.3f64.sqrt())])?),
        SuperOperator::conjugation(&hadamard()),
        WaitingTime::erlang(2, 1.0)?,
    )?;
    let rho0 = DensityMatrix::basis(2, 0);
    let grid = TimeGrid::new(4.0, 2000)?;

    let volterra = volterra_solve(&model, &rho0, &grid)?;
    let series = series_solve(&model, &rho0, &grid, None)?;
    let probes = [1.0, 2.0, 4.0];
    let laplace = laplace_solve(&model, &rho0, &probes, &LaplaceInversionConfig::default())?;
    println!("integral-equation residual of the Volterra solution: {:.2e}", fint_residual(&model, &volterra, &grid)?);

    for (k, &t) in probes.iter().enumerate() {
        let i = grid.index_of(t).expect("probe on grid");
        let v = &volterra.states[i];
        let mc = mc_collisional(&model, &rho0, t, 10_000, 2, Direction::Reverse)?;
        println!(
            "t = {t}: p0 = {:.6}  series {:.1e}  laplace {:.1e}  monte carlo {:.1e}",
            v[(0, 0)].re,
            trace_distance_ops(&series.states[i], v)?,
            trace_distance_ops(&laplace.states[k], v)?,
            trace_distance_ops(mc.matrix(), v)?,
        );
    }
    Ok(())
}
