//! Jump maps with a fixed output turn quantum jumps into a classical renewal process.
//!
//! Amplitude damping always resets to the ground state, so jump records are
//! weighted by a product of one waiting-time density per interval.

use renewalq::channels::LindbladGenerator;
use renewalq::grid::TimeGrid;
use renewalq::lindblad_traj::{renewal_reduction, Trajectory};
use renewalq::qmatrix::qubit::{sigma_minus, sigma_x};

fn main() -> renewalq::Result<()> {
    let gen = LindbladGenerator::new(sigma_x().scale(0.8), vec![sigma_minus()])?;
    let grid = TimeGrid::new(5.0, 500)?;
    let red = renewal_reduction(&gen, &grid, 1e-10)?.expect("amplitude damping resets to a fixed state");
    println!("reset state:\n{}", red.fixed_state().matrix());
    for i in (0..grid.len()).step_by(100) {
        println!("t = {:.1}: w0 = {:.6}  w = {:.6}", red.times()[i], red.w0()[i], red.w()[i]);
    }
    println!("max |dw0/dt + w| = {:.1e}", red.derivative_defect());
    println!("product form vs exclusive density: {:.1e}", red.product_form_defect());
    let traj = Trajectory::new(3.0, vec![0.7, 1.9])?;
    println!("weight of jumps at {:?}: {:.6}", traj.jump_times(), red.pn_product(&traj)?);

    let driven_dephasing = LindbladGenerator::new(sigma_x(), vec![sigma_x()])?;
    println!("sigma_x jumps reduce: {}", renewal_reduction(&driven_dephasing, &grid, 1e-10)?.is_some());
    Ok(())
}
