//! Trajectory representation of Lindblad evolution.
//!
//! The solution `e^{tL}ρ(0)` is written as a sum over jump records
//! `t₁ < … < t_n` of the unnormalized chain `R(t−t_n) J ⋯ J R(t₁) ρ(0)`.
//! Its trace is the exclusive density `πⁿ` of that record, and dividing by
//! it gives the conditional state. The module evaluates the chain directly,
//! sums it as a Dyson series, samples records by Monte Carlo, reweights it
//! against a Poisson reference, and reduces the weights to a renewal process
//! when the jump map has a fixed output state.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channels::{
    fixed_output_detect, jump_superop, no_jump_propagator, normalize_apply, relaxation_semigroup, LindbladGenerator,
    SuperOperator,
};
use crate::error::{input, Result};
use crate::grid::{trapezoid_weight, TimeGrid};
use crate::qmatrix::{trace, zeros, ComplexMatrix, DensityMatrix, C64};

/// Jump record `0 < t₁ < … < t_n < horizon`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    horizon: f64,
    jump_times: Vec<f64>,
}

impl Trajectory {
    pub fn new(horizon: f64, jump_times: Vec<f64>) -> Result<Self> {
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return input(format!("trajectory horizon must be finite and non-negative, got {horizon}"));
        }
        let mut prev = 0.0;
        for &t in &jump_times {
            if !(t > prev && t < horizon) {
                return input(format!("jump times must be strictly increasing inside (0, {horizon}): {jump_times:?}"));
            }
            prev = t;
        }
        Ok(Self { horizon, jump_times })
    }

    pub fn empty(horizon: f64) -> Result<Self> {
        Self::new(horizon, Vec::new())
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn jumps(&self) -> usize {
        self.jump_times.len()
    }

    /// Lengths of the `n + 1` intervals between `0`, the jumps, and the horizon.
    pub fn intervals(&self) -> impl Iterator<Item = f64> + '_ {
        let mut prev = 0.0;
        self.jump_times.iter().chain(std::iter::once(&self.horizon)).map(move |&t| {
            let d = t - prev;
            prev = t;
            d
        })
    }
}

/// A probability (no jumps) or a probability density in the jump times.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct TrajectoryWeight(pub f64);

impl TrajectoryWeight {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Reference Poisson process of rate `λ` used to weight unnormalized states.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonReference {
    rate: f64,
}

impl PoissonReference {
    pub fn new(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return input(format!("Poisson reference rate must be positive, got {rate}"));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// `λⁿ e^{−λt}`.
    pub fn weight(&self, traj: &Trajectory) -> f64 {
        self.rate.powi(traj.jumps() as i32) * (-self.rate * traj.horizon()).exp()
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return input(format!("time must be finite and non-negative, got {t}"));
    }
    Ok(())
}

fn check_dims(gen: &LindbladGenerator, rho0: &ComplexMatrix) -> Result<()> {
    if rho0.shape() != (gen.dim(), gen.dim()) {
        return input(format!("initial state has shape {:?}, generator dimension is {}", rho0.shape(), gen.dim()));
    }
    Ok(())
}

/// `π⁰_t = Tr(R(t)ρ(0))`, the probability of no jump up to `t`.
pub fn survival_probability(gen: &LindbladGenerator, rho0: &DensityMatrix, t: f64) -> Result<f64> {
    check_time(t)?;
    check_dims(gen, rho0.matrix())?;
    Ok(trace(&relaxation_semigroup(gen, t)?.apply(rho0.matrix())).re)
}

/// `R(t − t_n) J ⋯ J R(t₂ − t₁) J R(t₁) x`.
pub fn unnormalized_chain(gen: &LindbladGenerator, x: &ComplexMatrix, traj: &Trajectory) -> Result<ComplexMatrix> {
    check_dims(gen, x)?;
    let jump = jump_superop(gen);
    let mut out = x.clone();
    for (k, dt) in traj.intervals().enumerate() {
        if k > 0 {
            out = jump.apply(&out);
        }
        out = relaxation_semigroup(gen, dt)?.apply(&out);
    }
    Ok(out)
}

/// Exclusive density `πⁿ_t(t₁, …, t_n)` of the jump record.
pub fn exclusive_density(gen: &LindbladGenerator, rho0: &DensityMatrix, traj: &Trajectory) -> Result<f64> {
    Ok(trace(&unnormalized_chain(gen, rho0.matrix(), traj)?).re.max(0.0))
}

/// Split the chain of a jump record into its weight and conditional state.
///
/// The state is built by composing the normalized maps `R̃` and `J̃`, so that
/// `weight · state` reproducing the raw chain is a genuine identity check.
pub fn physprob_decompose(
    gen: &LindbladGenerator,
    rho0: &DensityMatrix,
    traj: &Trajectory,
) -> Result<(TrajectoryWeight, DensityMatrix)> {
    let weight = exclusive_density(gen, rho0, traj)?;
    let jump = jump_superop(gen);
    let mut state = rho0.clone();
    for (k, dt) in traj.intervals().enumerate() {
        if k > 0 {
            state = normalize_apply(&jump, &state)?;
        }
        state = normalize_apply(&relaxation_semigroup(gen, dt)?, &state)?;
    }
    Ok((TrajectoryWeight(weight), state))
}

/// Dyson-series terms on a uniform grid: `terms[n][i]` is the `n`-jump term at `t_i`.
///
/// Term `n` is `∫₀^{t} R(t − s) J term_{n−1}(s) ds`, evaluated by trapezoid
/// convolution against the previous order on the same grid.
pub fn dyson_terms(
    gen: &LindbladGenerator,
    rho0: &ComplexMatrix,
    grid: &TimeGrid,
    n_max: usize,
) -> Result<Vec<Vec<ComplexMatrix>>> {
    check_dims(gen, rho0)?;
    let d = gen.dim();
    let h = grid.dt();
    let relax: Vec<SuperOperator> = (0..grid.len()).map(|i| relaxation_semigroup(gen, grid.time(i))).collect::<Result<_>>()?;
    let jump = jump_superop(gen);
    let v0 = DVector::from_column_slice(rho0.as_slice());
    let mut terms: Vec<Vec<DVector<C64>>> = vec![relax.iter().map(|r| r.matrix() * &v0).collect()];
    for _ in 0..n_max {
        let prev = terms.last().expect("zeroth term present");
        let jumped: Vec<DVector<C64>> = prev.iter().map(|v| jump.matrix() * v).collect();
        let mut next = vec![DVector::zeros(d * d); grid.len()];
        for (i, slot) in next.iter_mut().enumerate().skip(1) {
            let mut acc = DVector::<C64>::zeros(d * d);
            for (j, jv) in jumped.iter().enumerate().take(i + 1) {
                acc.gemv(C64::new(trapezoid_weight(j, i) * h, 0.0), relax[i - j].matrix(), jv, C64::new(1.0, 0.0));
            }
            *slot = acc;
        }
        terms.push(next);
    }
    Ok(terms
        .into_iter()
        .map(|order| order.into_iter().map(|v| ComplexMatrix::from_column_slice(d, d, v.as_slice())).collect())
        .collect())
}

/// Truncated Dyson series at time `t` with `n_max` jumps, on `grid_points` nodes.
///
/// The result has trace at most one up to quadrature error; the deficit is
/// the probability of more than `n_max` jumps.
pub fn dyson_solve(
    gen: &LindbladGenerator,
    rho0: &DensityMatrix,
    t: f64,
    n_max: usize,
    grid_points: usize,
) -> Result<ComplexMatrix> {
    check_time(t)?;
    if n_max == 0 || t == 0.0 {
        check_dims(gen, rho0.matrix())?;
        return Ok(relaxation_semigroup(gen, t)?.apply(rho0.matrix()));
    }
    if grid_points < 3 {
        return input(format!("dyson_solve needs at least 3 grid points, got {grid_points}"));
    }
    let grid = TimeGrid::new(t, grid_points - 1)?;
    let terms = dyson_terms(gen, rho0.matrix(), &grid, n_max)?;
    Ok(terms.iter().fold(zeros(gen.dim()), |acc, order| acc + order.last().expect("non-empty grid")))
}

/// Dyson series at every node of `grid`.
pub fn dyson_series(gen: &LindbladGenerator, rho0: &DensityMatrix, grid: &TimeGrid, n_max: usize) -> Result<Vec<ComplexMatrix>> {
    let terms = dyson_terms(gen, rho0.matrix(), grid, n_max)?;
    Ok((0..grid.len()).map(|i| terms.iter().fold(zeros(gen.dim()), |acc, order| acc + &order[i])).collect())
}

/// `[π⁰_t, ∫π¹_t, …, ∫π^{n_max}_t]`: probabilities of exactly `n` jumps up to `t`,
/// integrated over the ordered simplex by trapezoid convolution.
pub fn jump_count_probabilities(
    gen: &LindbladGenerator,
    rho0: &DensityMatrix,
    t: f64,
    n_max: usize,
    grid_points: usize,
) -> Result<Vec<f64>> {
    check_time(t)?;
    if grid_points < 3 {
        return input(format!("need at least 3 grid points, got {grid_points}"));
    }
    let grid = TimeGrid::new(t, grid_points - 1)?;
    let terms = dyson_terms(gen, rho0.matrix(), &grid, n_max)?;
    Ok(terms.iter().map(|order| trace(order.last().expect("non-empty grid")).re).collect())
}

/// Gauss–Legendre nodes and weights on `(0, 1)`.
pub(crate) fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        // Newton iteration on P_m starting from the Chebyshev guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if m == 0 { 1.0 } else { p1 };
            dp = m as f64 * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Reassemble `e^{tL}ρ(0)` from conditional states: `Σ_n ∫ πⁿ · state` with a
/// nested Gauss–Legendre rule of `order` nodes per jump time on the ordered
/// simplex. Records of zero weight contribute nothing.
pub fn reassemble_demixture(
    gen: &LindbladGenerator,
    rho0: &DensityMatrix,
    t: f64,
    n_max: usize,
    order: usize,
) -> Result<ComplexMatrix> {
    check_time(t)?;
    let rule = gauss_legendre(order);
    let mut total = zeros(gen.dim());
    for n in 0..=n_max {
        let mut idx = vec![0usize; n];
        loop {
            // innermost index first: t_n = x_{i_n} t, t_{k} = x_{i_k} t_{k+1}
            let mut times = vec![0.0; n];
            let mut weight = 1.0;
            let mut upper = t;
            for k in (0..n).rev() {
                let (x, w) = rule[idx[k]];
                times[k] = x * upper;
                weight *= w * upper;
                upper = times[k];
            }
            let traj = Trajectory::new(t, times)?;
            match physprob_decompose(gen, rho0, &traj) {
                Ok((pi, state)) => total += state.matrix().scale(pi.value() * weight),
                Err(crate::Error::NullOutcome { .. }) => {}
                Err(e) => return Err(e),
            }
            // odometer over the n nested indices
            let mut k = 0;
            while k < n {
                idx[k] += 1;
                if idx[k] < order {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
        }
    }
    Ok(total)
}

/// `ρ̃(t) = λ^{−n} e^{λt} R(t − t_n) J ⋯ J R(t₁) ρ(0)`.
pub fn poisson_unnormalized(
    gen: &LindbladGenerator,
    rho0: &DensityMatrix,
    traj: &Trajectory,
    reference: &PoissonReference,
) -> Result<ComplexMatrix> {
    let chain = unnormalized_chain(gen, rho0.matrix(), traj)?;
    Ok(chain.unscale(reference.weight(traj)))
}

/// Survival `Tr(R(τ)σ)` and its rate of decrease `Tr(J R(τ)σ)`.
fn survival_and_rate(gen: &LindbladGenerator, jump: &SuperOperator, sigma: &ComplexMatrix, tau: f64) -> Result<(f64, f64)> {
    let e = no_jump_propagator(gen, tau)?;
    let evolved = &e * sigma * e.adjoint();
    Ok((trace(&evolved).re, trace(&jump.apply(&evolved)).re))
}

/// Delay until the next jump from state `sigma`, given the uniform draw `u`.
///
/// Solves `Tr(R(τ)σ) = u` on `[0, remaining]`; returns `None` when the
/// survival stays above `u` up to `remaining`.
pub fn next_jump_delay(gen: &LindbladGenerator, sigma: &ComplexMatrix, remaining: f64, u: f64) -> Result<Option<f64>> {
    check_dims(gen, sigma)?;
    if !(0.0..1.0).contains(&u) {
        return input(format!("uniform draw must lie in [0, 1), got {u}"));
    }
    let jump = jump_superop(gen);
    let (s_end, _) = survival_and_rate(gen, &jump, sigma, remaining)?;
    if s_end > u {
        return Ok(None);
    }
    // Newton steps safeguarded by the bisection bracket [lo, hi].
    let (mut lo, mut hi) = (0.0, remaining);
    let mut tau = 0.5 * remaining;
    for _ in 0..200 {
        let (s, rate) = survival_and_rate(gen, &jump, sigma, tau)?;
        let resid = s - u;
        if resid.abs() <= 1e-12 {
            break;
        }
        if resid > 0.0 {
            lo = tau;
        } else {
            hi = tau;
        }
        if hi - lo <= 1e-15 * remaining.max(1.0) {
            break;
        }
        let newton = tau + resid / rate;
        tau = if rate > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    Ok(Some(tau))
}

/// Sample one jump record on `[0, times.last()]` and the conditional state at
/// each of the ascending `times`.
pub fn sample_path<R: Rng + ?Sized>(
    gen: &LindbladGenerator,
    rho0: &DensityMatrix,
    times: &[f64],
    rng: &mut R,
) -> Result<(Trajectory, Vec<ComplexMatrix>)> {
    let horizon = *times.last().ok_or_else(|| crate::Error::Input("no sample times".into()))?;
    check_time(horizon)?;
    let jump = jump_superop(gen);
    let mut states = Vec::with_capacity(times.len());
    let mut jumps = Vec::new();
    let mut sigma = rho0.clone();
    let mut start = 0.0;
    let mut next_out = 0;
    loop {
        let u: f64 = rng.random();
        let delay = next_jump_delay(gen, sigma.matrix(), horizon - start, u)?;
        let until = delay.map_or(f64::INFINITY, |d| start + d);
        while next_out < times.len() && times[next_out] < until {
            let r = relaxation_semigroup(gen, times[next_out] - start)?;
            states.push(normalize_apply(&r, &sigma)?.into_matrix());
            next_out += 1;
        }
        match delay {
            None => break,
            Some(d) => {
                let r = relaxation_semigroup(gen, d)?;
                sigma = normalize_apply(&jump, &normalize_apply(&r, &sigma)?)?;
                start += d;
                jumps.push(start);
            }
        }
    }
    Ok((Trajectory::new(horizon, jumps)?, states))
}

/// Sample one jump record up to `t` with its final conditional state.
pub fn sample_trajectory<R: Rng + ?Sized>(
    gen: &LindbladGenerator,
    rho0: &DensityMatrix,
    t: f64,
    rng: &mut R,
) -> Result<(Trajectory, DensityMatrix)> {
    let (traj, mut states) = sample_path(gen, rho0, &[t], rng)?;
    let state = states.pop().expect("one sample time");
    Ok((traj, DensityMatrix::from_unchecked(state)))
}

/// Random stream of trajectory `index` under `seed`.
pub fn trajectory_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Monte Carlo mean of conditional states at each of the ascending `times`.
///
/// Trajectories run in parallel on the current rayon pool; the sum is taken
/// in trajectory-index order so the result does not depend on the pool size.
pub fn mc_average_on_grid(
    gen: &LindbladGenerator,
    rho0: &DensityMatrix,
    times: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<ComplexMatrix>> {
    if n_samples == 0 {
        return input("n_samples must be at least 1");
    }
    check_dims(gen, rho0.matrix())?;
    let paths: Vec<Vec<ComplexMatrix>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| sample_path(gen, rho0, times, &mut trajectory_stream(seed, i)).map(|(_, s)| s))
        .collect::<Result<_>>()?;
    let mut mean = vec![zeros(gen.dim()); times.len()];
    for path in &paths {
        for (acc, s) in mean.iter_mut().zip(path) {
            *acc += s;
        }
    }
    Ok(mean.into_iter().map(|m| m.unscale(n_samples as f64)).collect())
}

/// Monte Carlo estimate of `e^{tL}ρ(0)` as the mean conditional state.
pub fn mc_average(gen: &LindbladGenerator, rho0: &DensityMatrix, t: f64, n_samples: usize, seed: u64) -> Result<DensityMatrix> {
    let mut out = mc_average_on_grid(gen, rho0, &[t], n_samples, seed)?;
    Ok(DensityMatrix::from_unchecked(out.pop().expect("one time")))
}

/// Renewal structure of the jump weights when `J` has a fixed output state `ρ̄`.
///
/// Starting from `ρ̄`, `πⁿ = w₀(t − t_n) w(t_n − t_{n−1}) ⋯ w(t₁)` with
/// `w₀(t) = Tr(R(t)ρ̄)` and `w(t) = Tr(J R(t)ρ̄) = −dw₀/dt`.
#[derive(Clone, Debug)]
pub struct RenewalReduction {
    gen: LindbladGenerator,
    fixed_state: DensityMatrix,
    times: Vec<f64>,
    w0: Vec<f64>,
    w: Vec<f64>,
    derivative_defect: f64,
    product_form_defect: f64,
}

/// Step of the central differences used to check `dw₀/dt = −w`.
const FD_STEP: f64 = 1e-5;

impl RenewalReduction {
    pub fn fixed_state(&self) -> &DensityMatrix {
        &self.fixed_state
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Tabulated `w₀` on the grid.
    pub fn w0(&self) -> &[f64] {
        &self.w0
    }

    /// Tabulated `w` on the grid.
    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn w0_at(&self, t: f64) -> Result<f64> {
        Ok(trace(&relaxation_semigroup(&self.gen, t)?.apply(self.fixed_state.matrix())).re)
    }

    pub fn w_at(&self, t: f64) -> Result<f64> {
        let evolved = relaxation_semigroup(&self.gen, t)?.apply(self.fixed_state.matrix());
        Ok(trace(&jump_superop(&self.gen).apply(&evolved)).re)
    }

    /// Central-difference derivative of `w₀` at `t`.
    pub fn w0_derivative(&self, t: f64) -> Result<f64> {
        Ok((self.w0_at(t + FD_STEP)? - self.w0_at(t - FD_STEP)?) / (2.0 * FD_STEP))
    }

    /// Product-form weight `w₀(t − t_n) ⋯ w(t₂ − t₁) w(t₁)`.
    pub fn pn_product(&self, traj: &Trajectory) -> Result<f64> {
        let n = traj.jumps();
        let mut p = 1.0;
        for (k, dt) in traj.intervals().enumerate() {
            p *= if k == n { self.w0_at(dt)? } else { self.w_at(dt)? };
        }
        Ok(p)
    }

    /// `max |dw₀/dt + w|` over interior grid nodes.
    pub fn derivative_defect(&self) -> f64 {
        self.derivative_defect
    }

    /// `max |product form − exclusive_density|` over the checked trajectories.
    pub fn product_form_defect(&self) -> f64 {
        self.product_form_defect
    }
}

/// Detect a fixed-output jump map and tabulate `w₀`, `w` on `grid`.
///
/// Returns `None` when `J` is not of fixed-output form at rank tolerance `tol`.
pub fn renewal_reduction(gen: &LindbladGenerator, grid: &TimeGrid, tol: f64) -> Result<Option<RenewalReduction>> {
    let Some(fixed_state) = fixed_output_detect(&jump_superop(gen), tol) else {
        return Ok(None);
    };
    let mut red = RenewalReduction {
        gen: gen.clone(),
        fixed_state,
        times: grid.times(),
        w0: Vec::new(),
        w: Vec::new(),
        derivative_defect: 0.0,
        product_form_defect: 0.0,
    };
    red.w0 = red.times.iter().map(|&t| red.w0_at(t)).collect::<Result<_>>()?;
    red.w = red.times.iter().map(|&t| red.w_at(t)).collect::<Result<_>>()?;
    for i in 1..grid.steps() {
        let t = red.times[i];
        red.derivative_defect = red.derivative_defect.max((red.w0_derivative(t)? + red.w[i]).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for n in 0..=3 {
        for _ in 0..8 {
            let mut times: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * grid.t_max()).collect();
            times.sort_by(f64::total_cmp);
            let Ok(traj) = Trajectory::new(grid.t_max(), times) else { continue };
            let chain = exclusive_density(gen, &red.fixed_state, &traj)?;
            red.product_form_defect = red.product_form_defect.max((red.pn_product(&traj)? - chain).abs());
        }
    }
    Ok(Some(red))
}
