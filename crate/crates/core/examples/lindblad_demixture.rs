//! Split a driven, damped qubit into jump records and put it back together.
//!
//! The exact state `e^{tL}ρ(0)` is compared with the sum over jump numbers of
//! exclusive densities times conditional states, and with the Dyson series.

use renewalq::channels::{liouvillian, LindbladGenerator, SuperOperator};
use renewalq::lindblad_traj::{
    dyson_solve, jump_count_probabilities, physprob_decompose, reassemble_demixture, survival_probability, Trajectory,
};
use renewalq::qmatrix::qubit::{sigma_minus, sigma_x};
use renewalq::qmatrix::{mat_exp, trace_distance_ops, DensityMatrix};

fn main() -> renewalq::Result<()> {
    let gen = LindbladGenerator::new(sigma_x().scale(0.7), vec![sigma_minus().scale(0.3f64.sqrt())])?;
    let rho0 = DensityMatrix::basis(2, 1);
    let t = 1.0;
    let exact = SuperOperator::from_matrix(mat_exp(&liouvillian(&gen).matrix().scale(t))?)?.apply(rho0.matrix());

    println!("no-jump probability up to t = {t}: {:.6}", survival_probability(&gen, &rho0, t)?);
    let probs = jump_count_probabilities(&gen, &rho0, t, 3, 1001)?;
    for (n, p) in probs.iter().enumerate() {
        println!("P(N = {n}) = {p:.6}");
    }

    let (weight, state) = physprob_decompose(&gen, &rho0, &Trajectory::new(t, vec![0.4])?)?;
    println!("density of one jump at 0.4: {:.6}, conditional state:\n{}", weight.value(), state.matrix());

    let rebuilt = reassemble_demixture(&gen, &rho0, t, 4, 10)?;
    println!("demixture vs exact: {:.2e}", trace_distance_ops(&rebuilt, &exact)?);
    let dyson = dyson_solve(&gen, &rho0, t, 4, 2001)?;
    println!("Dyson series vs exact: {:.2e}", trace_distance_ops(&dyson, &exact)?);
    Ok(())
}
