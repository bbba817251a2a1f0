//! Laplace-domain solution of a collision model.
//!
//! The resolvent is formed in closed form when the family is a semigroup and
//! the wait has a rational transform; tabulated ingredients go through quadrature.

use renewalq::channels::SuperOperator;
use renewalq::collisional::{laplace_solve, volterra_solve, CollisionalModel, IntercollisionFamily, LaplaceInversionConfig, ResolventEvaluator};
use renewalq::grid::TimeGrid;
use renewalq::qmatrix::qubit::sigma_z;
use renewalq::qmatrix::{c, trace_distance_ops, DensityMatrix};
use renewalq::renewal::WaitingTime;

fn main() -> renewalq::Result<()> {
    let rho0 = DensityMatrix::pure(&[c(0.5f64.sqrt(), 0.0), c(0.5f64.sqrt(), 0.0)])?;
    let closed = CollisionalModel::new(IntercollisionFamily::identity(2), SuperOperator::conjugation(&sigma_z()), WaitingTime::erlang(2, 1.0)?)?;
    let values = (0..=20_000).map(|i| {
        let t = i as f64 * 0.002;
        t * (-t).exp()
    });
    let tabulated = CollisionalModel::new(
        IntercollisionFamily::identity(2),
        SuperOperator::conjugation(&sigma_z()),
        WaitingTime::tabulated(0.002, values.collect())?,
    )?;

    let resolvent = ResolventEvaluator::new(&closed)?;
    println!("resolvent identity residual at u = 1 + i: {:.1e}", resolvent.identity_residual(rho0.matrix(), c(1.0, 1.0))?);

    let times = [0.5, std::f64::consts::PI, 6.0];
    let grid = TimeGrid::new(6.0, 3000)?;
    let volterra = volterra_solve(&closed, &rho0, &grid)?;
    for model in [&closed, &tabulated] {
        let sol = laplace_solve(model, &rho0, &times, &LaplaceInversionConfig::default())?;
        for (t, s) in times.iter().zip(&sol.states) {
            let i = (t / grid.dt()).round() as usize;
            println!("t = {t:.4}: coherence {:+.6}  vs volterra {:.1e}", s[(0, 1)].re, trace_distance_ops(s, &volterra.states[i])?);
        }
    }
    Ok(())
}
