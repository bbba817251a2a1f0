//! Sample renewal jump records forward and in reverse.
//!
//! Both directions give the same count law. They differ in where the first
//! jump falls, which is what the collisional Monte Carlo needs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use renewalq::lindblad_traj::Trajectory;
use renewalq::renewal::{pn_density, sample_renewal, Direction, WaitingTime};

fn main() -> renewalq::Result<()> {
    let wait = WaitingTime::erlang(2, 1.0)?;
    let horizon = 3.0;
    for direction in [Direction::Forward, Direction::Reverse] {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trajs: Vec<Trajectory> = (0..50_000).map(|_| sample_renewal(&wait, horizon, &mut rng, direction)).collect();
        let mean = trajs.iter().map(|t| t.jumps() as f64).sum::<f64>() / trajs.len() as f64;
        let firsts: Vec<f64> = trajs.iter().filter_map(|t| t.jump_times().first().copied()).collect();
        let first = firsts.iter().sum::<f64>() / firsts.len() as f64;
        println!("{direction:?}: mean count {mean:.4}, mean first jump {first:.4}");
    }
    println!("P(no jump) = {:.6}", wait.survival(horizon)?);
    let traj = Trajectory::new(horizon, vec![1.0, 2.5])?;
    println!("density of jumps at {:?}: {:.6}", traj.jump_times(), pn_density(&wait, &traj));

    let tail = [0.0, 0.5, 1.0, 0.5, 0.0];
    let tab = WaitingTime::tabulated(0.5, tail.to_vec())?;
    println!("tabulated triangle wait: f(0.75) = {}, survival(1) = {}", tab.pdf(0.75), tab.survival(1.0)?);
    Ok(())
}
