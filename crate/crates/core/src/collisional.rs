//! Collisional models driven by a renewal process.
//!
//! A model combines a family of intercollision maps `F(t)` with `F(0) = 𝟙`, a
//! collision channel `E`, and a waiting-time density `f` with survival `g`.
//! Its state obeys the renewal equation
//!
//! ```text
//! ρ(t) = g(t) F(t) ρ(0) + ∫₀ᵗ f(t − τ) F(t − τ) E ρ(τ) dτ
//! ```
//!
//! with Laplace-domain solution `ρ̂(u) = [𝟙 − (fF)^(u) E]⁻¹ (gF)^(u) ρ(0)`, and
//! the equivalent integro-differential form
//!
//! ```text
//! ρ'(t) = ∫₀ᵗ d/ds[f(s)F(s)]_{s=t−τ} E ρ(τ) dτ + f(0) E ρ(t) + d/dt[g(t)F(t)] ρ(0).
//! ```
//!
//! Four solvers are provided and cross-check each other: the trajectory
//! series ([`series_solve`]), Volterra marching ([`volterra_solve`]), Talbot
//! inversion of the resolvent ([`laplace_solve`]) and Monte Carlo sampling of
//! collision records ([`mc_collisional`]).

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{certify_cptp, certify_cptp_with, liouvillian, CptpReport, LindbladGenerator, SuperOperator};
use crate::error::{input, Error, Result};
use crate::grid::{trapezoid_weight, TimeGrid};
use crate::lindblad_traj::trajectory_stream;
use crate::qmatrix::{identity, mat_exp, matrix_unit, zeros, ComplexMatrix, DensityMatrix, C64};
use crate::renewal::{sample_renewal, Direction, WaitingTime, TABULATED_NORM_TOL};

/// Tolerance for CPTP certification of model ingredients.
pub const MODEL_CPTP_TOL: f64 = 1e-8;

/// Target probability of more than `n_max` collisions for the automatic series cut-off.
pub const SERIES_TAIL_TOL: f64 = 1e-8;

/// Complete-positivity and trace tolerances for reconstructed propagators.
pub const DYNAMICS_CP_TOL: f64 = 1e-8;
pub const DYNAMICS_TP_TOL: f64 = 1e-6;

pub type SolverGrid = TimeGrid;

/// The maps `F(t)` applied between collisions.
#[derive(Clone, Debug)]
pub enum IntercollisionFamily {
    /// `F(t) = e^{tL₀}` for a Lindblad generator `L₀`.
    Semigroup { generator: LindbladGenerator, matrix: ComplexMatrix },
    /// Maps tabulated on `t_i = i·dt`, linearly interpolated in between.
    Tabulated { dt: f64, maps: Vec<SuperOperator> },
}

impl IntercollisionFamily {
    pub fn semigroup(generator: LindbladGenerator) -> Self {
        let matrix = liouvillian(&generator).into_matrix();
        Self::Semigroup { generator, matrix }
    }

    /// `F(t) = 𝟙` for all `t`.
    pub fn identity(dim: usize) -> Self {
        Self::semigroup(LindbladGenerator::dissipative(dim, vec![]).expect("zero generator is valid"))
    }

    /// Validated tabulated family: `F(0) = 𝟙` and every node CPTP.
    pub fn tabulated(dt: f64, maps: Vec<SuperOperator>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return input(format!("family spacing must be positive, got {dt}"));
        }
        if maps.len() < 2 {
            return input("tabulated family needs at least two nodes");
        }
        let dim = maps[0].dim();
        if let Some(k) = maps.iter().position(|m| m.dim() != dim) {
            return input(format!("family node {k} has dimension {}, expected {dim}", maps[k].dim()));
        }
        let dev = crate::qmatrix::max_abs(&(maps[0].matrix() - identity(dim * dim)));
        if dev > MODEL_CPTP_TOL {
            return input(format!("family must start at the identity map (deviation {dev:e})"));
        }
        for (k, m) in maps.iter().enumerate() {
            let rep = certify_cptp(m, MODEL_CPTP_TOL);
            if !rep.is_cptp() {
                return input(format!(
                    "family node {k} is not CPTP (min Choi eigenvalue {:e}, trace defect {:e})",
                    rep.min_choi_eigenvalue, rep.tp_defect
                ));
            }
        }
        Ok(Self::Tabulated { dt, maps })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Semigroup { generator, .. } => generator.dim(),
            Self::Tabulated { maps, .. } => maps[0].dim(),
        }
    }

    /// Largest time at which the family is defined.
    pub fn horizon(&self) -> f64 {
        match self {
            Self::Semigroup { .. } => f64::INFINITY,
            Self::Tabulated { dt, maps } => dt * (maps.len() - 1) as f64,
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0) {
            return input(format!("family time must be non-negative, got {t}"));
        }
        if t > self.horizon() * (1.0 + 1e-12) {
            return input(format!("family is tabulated up to {}, asked for {t}", self.horizon()));
        }
        Ok(())
    }

    fn cell(dt: f64, len: usize, t: f64) -> (usize, f64) {
        let x = t / dt;
        let i = (x.floor() as usize).min(len - 2);
        (i, (x - i as f64).clamp(0.0, 1.0))
    }

    pub fn at(&self, t: f64) -> Result<SuperOperator> {
        self.check_time(t)?;
        match self {
            Self::Semigroup { matrix, .. } => SuperOperator::from_matrix(mat_exp(&matrix.scale(t))?),
            Self::Tabulated { dt, maps } => {
                let (i, s) = Self::cell(*dt, maps.len(), t);
                SuperOperator::from_matrix(maps[i].matrix().scale(1.0 - s) + maps[i + 1].matrix().scale(s))
            }
        }
    }

    /// `dF/dt`; exact for a semigroup, the local slope for a tabulated family
    /// (averaged across a node).
    pub fn derivative(&self, t: f64) -> Result<ComplexMatrix> {
        self.check_time(t)?;
        match self {
            Self::Semigroup { matrix, .. } => Ok(matrix * mat_exp(&matrix.scale(t))?),
            Self::Tabulated { dt, maps } => {
                let slope = |i: usize| (maps[i + 1].matrix() - maps[i].matrix()).unscale(*dt);
                let x = t / dt;
                let k = x.round();
                let last = maps.len() - 2;
                if (x - k).abs() < 1e-9 && k >= 1.0 && (k as usize) <= last {
                    let k = k as usize;
                    Ok((slope(k - 1) + slope(k)).scale(0.5))
                } else {
                    Ok(slope(Self::cell(*dt, maps.len(), t).0))
                }
            }
        }
    }

    /// Liouvillian matrix for the semigroup case.
    pub fn generator_matrix(&self) -> Option<&ComplexMatrix> {
        match self {
            Self::Semigroup { matrix, .. } => Some(matrix),
            Self::Tabulated { .. } => None,
        }
    }
}

/// Intercollision family, collision channel, and waiting time.
#[derive(Clone, Debug)]
pub struct CollisionalModel {
    family: IntercollisionFamily,
    collision: SuperOperator,
    wait: WaitingTime,
}

impl CollisionalModel {
    pub fn new(family: IntercollisionFamily, collision: SuperOperator, wait: WaitingTime) -> Result<Self> {
        let rep = certify_cptp(&collision, MODEL_CPTP_TOL);
        if !rep.is_cptp() {
            return input(format!(
                "collision channel is not CPTP (min Choi eigenvalue {:e}, trace defect {:e})",
                rep.min_choi_eigenvalue, rep.tp_defect
            ));
        }
        Self::new_unchecked(family, collision, wait)
    }

    /// Skip the CPTP check on the collision channel (dimensions are still checked).
    pub fn new_unchecked(family: IntercollisionFamily, collision: SuperOperator, wait: WaitingTime) -> Result<Self> {
        if family.dim() != collision.dim() {
            return input(format!(
                "family dimension {} does not match collision dimension {}",
                family.dim(),
                collision.dim()
            ));
        }
        Ok(Self { family, collision, wait })
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    pub fn family(&self) -> &IntercollisionFamily {
        &self.family
    }

    pub fn collision(&self) -> &SuperOperator {
        &self.collision
    }

    pub fn wait(&self) -> &WaitingTime {
        &self.wait
    }
}

/// Solver output on a set of times.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<ComplexMatrix>,
}

impl Solution {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// State `i` as a density matrix, validated within `1e−6`.
    pub fn density(&self, i: usize) -> Result<DensityMatrix> {
        DensityMatrix::with_tol(self.states[i].clone(), 1e-6)
    }

    pub fn last(&self) -> &ComplexMatrix {
        self.states.last().expect("non-empty solution")
    }

    /// Time series of one matrix entry.
    pub fn entry(&self, row: usize, col: usize) -> Vec<C64> {
        self.states.iter().map(|s| s[(row, col)]).collect()
    }
}

fn check_state(model: &CollisionalModel, x: &ComplexMatrix) -> Result<()> {
    if x.shape() != (model.dim(), model.dim()) {
        return input(format!("initial state has shape {:?}, model dimension is {}", x.shape(), model.dim()));
    }
    Ok(())
}

fn check_family_covers(model: &CollisionalModel, t_max: f64) -> Result<()> {
    if t_max > model.family.horizon() * (1.0 + 1e-12) {
        return input(format!("grid extends to {t_max} beyond the tabulated family ({})", model.family.horizon()));
    }
    Ok(())
}

/// Per-grid tables shared by the grid solvers.
struct GridTables {
    d2: usize,
    h: f64,
    /// `f(t_m) F(t_m)`, flattened column-major blocks of `d2 × d2`.
    kernel: Vec<C64>,
    /// `F(t_m)` as matrices.
    family: Vec<ComplexMatrix>,
    /// Survival consistent with the trapezoid rule: `1 − trap(f; 0, t_m)`.
    survival: Vec<f64>,
}

impl GridTables {
    fn new(model: &CollisionalModel, grid: &TimeGrid) -> Result<Self> {
        check_family_covers(model, grid.t_max())?;
        let d2 = model.dim() * model.dim();
        let h = grid.dt();
        let family: Vec<ComplexMatrix> =
            (0..grid.len()).map(|m| model.family.at(grid.time(m)).map(SuperOperator::into_matrix)).collect::<Result<_>>()?;
        let pdf: Vec<f64> = (0..grid.len())
            .map(|m| if m == 0 { model.wait.f0() } else { model.wait.pdf(grid.time(m)) })
            .collect();
        let mut kernel = Vec::with_capacity(grid.len() * d2 * d2);
        for (f, fam) in pdf.iter().zip(&family) {
            kernel.extend(fam.iter().map(|z| z * *f));
        }
        // The discrete scheme conserves trace exactly when g matches the
        // quadrature of f; both differ from the exact survival by O(h²).
        let mut survival = Vec::with_capacity(grid.len());
        let mut acc = 0.0;
        survival.push(1.0);
        for m in 1..grid.len() {
            acc += 0.5 * h * (pdf[m - 1] + pdf[m]);
            survival.push(1.0 - acc);
        }
        Ok(Self { d2, h, kernel, family, survival })
    }

    fn kernel_block(&self, m: usize) -> &[C64] {
        let n = self.d2 * self.d2;
        &self.kernel[m * n..(m + 1) * n]
    }

    /// `out += h Σ_{j ∈ range} w_j K(t_i − t_j) src_j` with trapezoid weights on `0..=i`.
    fn convolve(&self, src: &[C64], i: usize, js: std::ops::Range<usize>, out: &mut [C64]) {
        let d2 = self.d2;
        for j in js {
            let w = trapezoid_weight(j, i) * self.h;
            let block = self.kernel_block(i - j);
            let v = &src[j * d2..(j + 1) * d2];
            for (c, &x) in v.iter().enumerate() {
                if x == C64::default() {
                    continue;
                }
                let x = x * w;
                let col = &block[c * d2..(c + 1) * d2];
                for (o, k) in out.iter_mut().zip(col) {
                    *o += k * x;
                }
            }
        }
    }

    /// `g(t_i) F(t_i) x`.
    fn forcing(&self, i: usize, x: &DVector<C64>) -> DVector<C64> {
        (&self.family[i] * x).scale(self.survival[i])
    }
}

fn to_matrices(d: usize, flat: &[C64], count: usize) -> Vec<ComplexMatrix> {
    let d2 = d * d;
    (0..count).map(|i| ComplexMatrix::from_column_slice(d, d, &flat[i * d2..(i + 1) * d2])).collect()
}

/// Smallest `n_max` with `P(more than n_max collisions by t) < tol`.
pub fn auto_series_order(wait: &WaitingTime, t: f64, tol: f64) -> Result<usize> {
    for n in 0..=10_000 {
        if wait.count_tail(n + 1, t) < tol {
            return Ok(n);
        }
    }
    Err(Error::Unsupported(format!("more than 10000 collisions needed to reach tail {tol:e} by t = {t}")))
}

/// Trajectory series summed order by order; `n_max = None` picks the order
/// from the waiting-time tail ([`SERIES_TAIL_TOL`]).
///
/// Term 0 is `g(t) F(t) ρ(0)`; term `k` is `∫₀ᵗ f(t − s) F(t − s) E term_{k−1}(s) ds`.
pub fn series_solve(model: &CollisionalModel, rho0: &DensityMatrix, grid: &TimeGrid, n_max: Option<usize>) -> Result<Solution> {
    series_solve_operator(model, rho0.matrix(), grid, n_max)
}

pub fn series_solve_operator(
    model: &CollisionalModel,
    x0: &ComplexMatrix,
    grid: &TimeGrid,
    n_max: Option<usize>,
) -> Result<Solution> {
    check_state(model, x0)?;
    let n_max = match n_max {
        Some(n) => n,
        None => auto_series_order(&model.wait, grid.t_max(), SERIES_TAIL_TOL)?,
    };
    let tables = GridTables::new(model, grid)?;
    let d2 = tables.d2;
    let n = grid.len();
    let v0 = DVector::from_column_slice(x0.as_slice());
    let mut term: Vec<C64> = Vec::with_capacity(n * d2);
    for i in 0..n {
        term.extend(tables.forcing(i, &v0).iter());
    }
    let mut total = term.clone();
    let e = model.collision.matrix();
    for _ in 0..n_max {
        let mut collided = Vec::with_capacity(n * d2);
        for j in 0..n {
            collided.extend((e * DVector::from_column_slice(&term[j * d2..(j + 1) * d2])).iter());
        }
        let mut next = vec![C64::default(); n * d2];
        for i in 1..n {
            let (_, tail) = next.split_at_mut(i * d2);
            tables.convolve(&collided, i, 0..i + 1, &mut tail[..d2]);
        }
        for (t, x) in total.iter_mut().zip(&next) {
            *t += x;
        }
        term = next;
    }
    Ok(Solution { times: grid.times(), states: to_matrices(model.dim(), &total, n) })
}

/// Second-kind Volterra marching with trapezoid weights.
///
/// The implicit diagonal term is resolved by a direct solve of
/// `(𝟙 − ½Δt f(0) E) vec(ρ_i) = known`.
pub fn volterra_solve(model: &CollisionalModel, rho0: &DensityMatrix, grid: &TimeGrid) -> Result<Solution> {
    volterra_solve_operator(model, rho0.matrix(), grid)
}

pub fn volterra_solve_operator(model: &CollisionalModel, x0: &ComplexMatrix, grid: &TimeGrid) -> Result<Solution> {
    check_state(model, x0)?;
    let tables = GridTables::new(model, grid)?;
    let d2 = tables.d2;
    let n = grid.len();
    let e = model.collision.matrix();
    let c = 0.5 * tables.h * model.wait.f0();
    if c >= 1.0 {
        return Err(Error::StepSize(format!("½·Δt·f(0) = {c} must stay below 1")));
    }
    let implicit = (identity(d2) - e.scale(c)).lu();
    if !implicit.is_invertible() {
        return Err(Error::StepSize("implicit collision system is singular".into()));
    }
    let v0 = DVector::from_column_slice(x0.as_slice());
    let mut states: Vec<C64> = Vec::with_capacity(n * d2);
    let mut collided: Vec<C64> = Vec::with_capacity(n * d2);
    states.extend(v0.iter());
    collided.extend((e * &v0).iter());
    for i in 1..n {
        let mut rhs = tables.forcing(i, &v0);
        tables.convolve(&collided, i, 0..i, rhs.as_mut_slice());
        let x = implicit.solve(&rhs).ok_or_else(|| Error::StepSize("implicit solve failed".into()))?;
        collided.extend((e * &x).iter());
        states.extend(x.iter());
    }
    Ok(Solution { times: grid.times(), states: to_matrices(model.dim(), &states, n) })
}

/// Generator `L₀ + λ(E − 𝟙)` of the exponential-waiting-time model.
pub fn markov_limit_generator(model: &CollisionalModel) -> Result<SuperOperator> {
    let WaitingTime::Exponential { rate } = model.wait else {
        return Err(Error::Unsupported("Markov limit needs an exponential waiting time".into()));
    };
    let Some(m0) = model.family.generator_matrix() else {
        return Err(Error::Unsupported("Markov limit needs a semigroup intercollision family".into()));
    };
    let d2 = model.dim() * model.dim();
    SuperOperator::from_matrix(m0 + (model.collision.matrix() - identity(d2)).scale(rate))
}

/// Talbot inversion settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplaceInversionConfig {
    pub nodes: usize,
}

impl Default for LaplaceInversionConfig {
    fn default() -> Self {
        Self { nodes: 32 }
    }
}

impl LaplaceInversionConfig {
    pub fn new(nodes: usize) -> Result<Self> {
        if nodes < 8 {
            return input(format!("Talbot inversion needs at least 8 nodes, got {nodes}"));
        }
        Ok(Self { nodes })
    }
}

enum TransformRoute {
    ClosedForm { m0: ComplexMatrix, shape: u32, rate: f64 },
    /// Node values `f(t_i) F(t_i)` and `g(t_i) F(t_i)` on `t_i = i·dt`.
    Quadrature { dt: f64, kernel: Vec<ComplexMatrix>, forcing: Vec<ComplexMatrix> },
}

/// Quadrature transforms are cut where `e^{−Re(u)·t}` has decayed by this many e-folds.
const QUADRATURE_DECAY: f64 = 40.0;

/// Evaluates the superoperator transforms `(fF)^(u)` and `(gF)^(u)` of a model.
///
/// Exponential and Erlang waits with a semigroup family have closed forms.
/// Other models integrate the piecewise-linear interpolant of the node values
/// exactly, so the transform is that of a nearby model rather than an
/// approximation that degrades with `|u|`.
pub struct ResolventEvaluator<'a> {
    model: &'a CollisionalModel,
    route: TransformRoute,
}

/// Weights of `∫₀^h e^{−uτ}(1 − τ/h)dτ` and `∫₀^h e^{−uτ}(τ/h)dτ`, divided by `h`, at `z = uh`.
fn linear_cell_weights(z: C64) -> (C64, C64) {
    if z.norm() < 1e-3 {
        (0.5 - z / 6.0 + z * z / 24.0, 0.5 - z / 3.0 + z * z / 8.0)
    } else {
        let e = (-z).exp();
        let z2 = z * z;
        ((z - 1.0 + e) / z2, (1.0 - e - z * e) / z2)
    }
}

impl<'a> ResolventEvaluator<'a> {
    pub fn new(model: &'a CollisionalModel) -> Result<Self> {
        let route = match (&model.family, &model.wait) {
            (IntercollisionFamily::Semigroup { matrix, .. }, WaitingTime::Exponential { rate }) => {
                TransformRoute::ClosedForm { m0: matrix.clone(), shape: 1, rate: *rate }
            }
            (IntercollisionFamily::Semigroup { matrix, .. }, WaitingTime::Erlang { shape, rate }) => {
                TransformRoute::ClosedForm { m0: matrix.clone(), shape: *shape, rate: *rate }
            }
            (family, wait) => {
                let (dt, support) = match wait {
                    WaitingTime::Tabulated(tab) => (tab.dt(), tab.support_end()),
                    _ => match family {
                        IntercollisionFamily::Tabulated { dt, .. } => (*dt, f64::INFINITY),
                        IntercollisionFamily::Semigroup { .. } => unreachable!("closed forms handled above"),
                    },
                };
                let end = support.min(family.horizon());
                let steps = (end / dt * (1.0 + 1e-12)).floor() as usize;
                let mut kernel = Vec::with_capacity(steps + 1);
                let mut forcing = Vec::with_capacity(steps + 1);
                for i in 0..=steps {
                    let t = i as f64 * dt;
                    let f = family.at(t)?.into_matrix();
                    let pdf = if i == 0 { wait.f0() } else { wait.pdf(t) };
                    kernel.push(f.scale(pdf));
                    forcing.push(f.scale(wait.survival_at(t)));
                }
                TransformRoute::Quadrature { dt, kernel, forcing }
            }
        };
        Ok(Self { model, route })
    }

    /// Whether transforms come from node quadrature rather than closed forms.
    pub fn is_quadrature(&self) -> bool {
        matches!(self.route, TransformRoute::Quadrature { .. })
    }

    /// `((fF)^(u), (gF)^(u))` as `d² × d²` matrices.
    pub fn transforms(&self, u: C64) -> Result<(ComplexMatrix, ComplexMatrix)> {
        let d2 = self.model.dim() * self.model.dim();
        match &self.route {
            TransformRoute::ClosedForm { m0, shape, rate } => {
                let shifted = identity(d2) * (u + rate) - m0;
                let a = shifted.try_inverse().ok_or(Error::ContourRescale { re: u.re, im: u.im })?;
                let mut power = a.clone();
                let mut g_hat = a.clone();
                for j in 1..*shape {
                    power = &power * &a;
                    g_hat += power.scale(rate.powi(j as i32));
                }
                Ok((power.scale(rate.powi(*shape as i32)), g_hat))
            }
            TransformRoute::Quadrature { dt, kernel, forcing } => {
                let covered = (kernel.len() - 1) as f64 * dt;
                let needed = if u.re > 0.0 { QUADRATURE_DECAY / u.re } else { f64::INFINITY };
                let cells = if needed < covered {
                    ((needed / dt).ceil() as usize).min(kernel.len() - 1)
                } else {
                    let tail = self.model.wait.survival_at(covered);
                    if covered < self.model.wait_support_end() && tail > TABULATED_NORM_TOL {
                        return Err(Error::Unsupported(format!(
                            "the family ends at {covered} where the survival is still {tail:e}"
                        )));
                    }
                    kernel.len() - 1
                };
                let (w0, w1) = linear_cell_weights(u * *dt);
                let step = (-u * *dt).exp();
                let mut phase = C64::new(*dt, 0.0);
                let mut f_hat = zeros(d2);
                let mut g_hat = zeros(d2);
                for i in 0..cells {
                    let (a, b) = (phase * w0, phase * w1);
                    f_hat += &kernel[i] * a + &kernel[i + 1] * b;
                    g_hat += &forcing[i] * a + &forcing[i + 1] * b;
                    phase *= step;
                }
                Ok((f_hat, g_hat))
            }
        }
    }

    /// `vec(ρ̂(u))` from the resolvent equation.
    pub fn state(&self, x0: &ComplexMatrix, u: C64) -> Result<DVector<C64>> {
        let (f_hat, g_hat) = self.transforms(u)?;
        let d2 = f_hat.nrows();
        let system = identity(d2) - f_hat * self.model.collision.matrix();
        let rhs = g_hat * DVector::from_column_slice(x0.as_slice());
        system.lu().solve(&rhs).ok_or(Error::ContourRescale { re: u.re, im: u.im })
    }

    /// `‖ρ̂(u) − (gF)^(u)ρ(0) − (fF)^(u) E ρ̂(u)‖`.
    pub fn identity_residual(&self, x0: &ComplexMatrix, u: C64) -> Result<f64> {
        let rho_hat = self.state(x0, u)?;
        let (f_hat, g_hat) = self.transforms(u)?;
        let rhs = g_hat * DVector::from_column_slice(x0.as_slice()) + f_hat * (self.model.collision.matrix() * &rho_hat);
        Ok((rho_hat - rhs).norm())
    }
}

impl CollisionalModel {
    fn wait_support_end(&self) -> f64 {
        match &self.wait {
            WaitingTime::Tabulated(tab) => tab.support_end(),
            _ => f64::INFINITY,
        }
    }
}

/// Fixed-Talbot inversion of `vec(ρ̂)` at `t > 0`, valid for complex originals.
fn talbot_invert(eval: &ResolventEvaluator<'_>, x0: &ComplexMatrix, t: f64, nodes: usize) -> Result<DVector<C64>> {
    let m = nodes as f64;
    let r = 2.0 * m / (5.0 * t);
    let mut acc = eval.state(x0, C64::new(r, 0.0))? * C64::new(0.5 * (r * t).exp(), 0.0);
    for k in 1..nodes {
        let theta = k as f64 * std::f64::consts::PI / m;
        let cot = theta.cos() / theta.sin();
        let s = C64::new(r * theta * cot, r * theta);
        let sigma = theta + (theta * cot - 1.0) * cot;
        let up = eval.state(x0, s)? * ((s * t).exp() * C64::new(1.0, sigma));
        let down = eval.state(x0, s.conj())? * ((s.conj() * t).exp() * C64::new(1.0, -sigma));
        acc += (up + down) * C64::new(0.5, 0.0);
    }
    Ok(acc * C64::new(r / m, 0.0))
}

/// Euler-accelerated Bromwich inversion on the line `Re u = A/(2t)`.
///
/// Used for quadrature transforms: they are entire and grow in the left
/// half-plane, where a Talbot contour would sample them.
fn euler_invert(eval: &ResolventEvaluator<'_>, x0: &ComplexMatrix, t: f64) -> Result<DVector<C64>> {
    const A: f64 = 18.4;
    const N: usize = 15;
    const M: usize = 11;
    let sigma = A / (2.0 * t);
    let scale = (A / 2.0).exp() / t;
    let mut partial = eval.state(x0, C64::new(sigma, 0.0))? * C64::new(0.5 * scale, 0.0);
    let mut sums = Vec::with_capacity(M + 1);
    for j in 1..=N + M {
        let u = C64::new(sigma, j as f64 * std::f64::consts::PI / t);
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let pair = eval.state(x0, u)? + eval.state(x0, u.conj())?;
        partial += pair * C64::new(0.5 * scale * sign, 0.0);
        if j >= N {
            sums.push(partial.clone());
        }
    }
    let mut out = DVector::<C64>::zeros(partial.len());
    let mut binom = 1.0;
    for (k, s) in sums.iter().enumerate() {
        if k > 0 {
            binom *= (M + 1 - k) as f64 / k as f64;
        }
        out += s * C64::new(binom / 2f64.powi(M as i32), 0.0);
    }
    Ok(out)
}

/// Laplace-resolvent solution at each requested time. Closed-form transforms
/// are inverted on a fixed Talbot contour with `config.nodes` nodes; quadrature
/// transforms by Euler summation along a Bromwich line. `t = 0` returns the
/// initial state.
pub fn laplace_solve(
    model: &CollisionalModel,
    rho0: &DensityMatrix,
    t_values: &[f64],
    config: &LaplaceInversionConfig,
) -> Result<Solution> {
    laplace_solve_operator(model, rho0.matrix(), t_values, config)
}

pub fn laplace_solve_operator(
    model: &CollisionalModel,
    x0: &ComplexMatrix,
    t_values: &[f64],
    config: &LaplaceInversionConfig,
) -> Result<Solution> {
    check_state(model, x0)?;
    LaplaceInversionConfig::new(config.nodes)?;
    if let Some(t) = t_values.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return input(format!("Laplace inversion time must be finite and non-negative, got {t}"));
    }
    let eval = ResolventEvaluator::new(model)?;
    let d = model.dim();
    let states = t_values
        .iter()
        .map(|&t| {
            if t == 0.0 {
                return Ok(x0.clone());
            }
            let v = if eval.is_quadrature() { euler_invert(&eval, x0, t)? } else { talbot_invert(&eval, x0, t, config.nodes)? };
            if v.iter().any(|z| !z.is_finite()) {
                return Err(Error::Unsupported(format!("Laplace inversion at t = {t} overflowed")));
            }
            Ok(ComplexMatrix::from_column_slice(d, d, v.as_slice()))
        })
        .collect::<Result<_>>()?;
    Ok(Solution { times: t_values.to_vec(), states })
}

/// Largest residual of the integro-differential equation over the interior
/// grid nodes, with central differences for `ρ'` and a product-trapezoid rule
/// for the memory integral.
pub fn fint_residual(model: &CollisionalModel, solution: &Solution, grid: &TimeGrid) -> Result<f64> {
    if grid.steps() < 10 {
        return input(format!("residual check needs at least 10 steps, got {}", grid.steps()));
    }
    if solution.len() != grid.len() {
        return input(format!("solution has {} samples, grid has {} nodes", solution.len(), grid.len()));
    }
    check_family_covers(model, grid.t_max())?;
    let d = model.dim();
    let d2 = d * d;
    let h = grid.dt();
    let e = model.collision.matrix();
    let vecs: Vec<DVector<C64>> = solution.states.iter().map(|s| DVector::from_column_slice(s.as_slice())).collect();
    let collided: Vec<DVector<C64>> = vecs.iter().map(|v| e * v).collect();
    // cell means of Eρ, flattened
    let mut mid: Vec<C64> = Vec::with_capacity(grid.steps() * d2);
    for j in 0..grid.steps() {
        mid.extend((&collided[j] + &collided[j + 1]).scale(0.5).iter());
    }
    // ΔK_m = K(t_m) − K(t_{m−1}) with K(s) = f(s)F(s), flattened column-major
    let mut prev = model.family.at(0.0)?.into_matrix().scale(model.wait.f0());
    let mut delta: Vec<C64> = Vec::with_capacity(grid.len() * d2 * d2);
    delta.extend(std::iter::repeat_n(C64::default(), d2 * d2));
    for m in 1..grid.len() {
        let t = grid.time(m);
        let k = model.family.at(t)?.into_matrix().scale(model.wait.pdf(t));
        delta.extend((&k - &prev).iter());
        prev = k;
    }
    let f0 = model.wait.f0();
    let mut worst: f64 = 0.0;
    for i in 1..grid.steps() {
        let t = grid.time(i);
        let lhs = (&vecs[i + 1] - &vecs[i - 1]).unscale(2.0 * h);
        // ∫ K'(t − τ) Eρ(τ) dτ over each cell ≈ [K(t − τ_j) − K(t − τ_{j+1})] · mean of Eρ
        let mut memory = DVector::<C64>::zeros(d2);
        let out = memory.as_mut_slice();
        for j in 0..i {
            let block = &delta[(i - j) * d2 * d2..(i - j + 1) * d2 * d2];
            for (c, &x) in mid[j * d2..(j + 1) * d2].iter().enumerate() {
                for (o, k) in out.iter_mut().zip(&block[c * d2..(c + 1) * d2]) {
                    *o += k * x;
                }
            }
        }
        let g = model.wait.survival_at(t);
        let f = model.wait.pdf(t);
        let d_gf = model.family.derivative(t)?.scale(g) - model.family.at(t)?.into_matrix().scale(f);
        let rhs = memory + collided[i].scale(f0) + d_gf * &vecs[0];
        worst = worst.max((lhs - rhs).norm());
    }
    Ok(worst)
}

/// Monte Carlo estimate: per sample draw collision times, apply
/// `F(t₁)`, `E`, `F(t₂ − t₁)`, …, `E`, `F(t − t_n)` to `ρ(0)` and average.
///
/// [`Direction::Reverse`] reproduces the model's trajectory weights exactly;
/// [`Direction::Forward`] samples the conventional mirrored renewal law.
pub fn mc_collisional(
    model: &CollisionalModel,
    rho0: &DensityMatrix,
    t: f64,
    n_samples: usize,
    seed: u64,
    direction: Direction,
) -> Result<DensityMatrix> {
    let mut out = mc_collisional_on_grid(model, rho0, &[t], n_samples, seed, direction)?;
    Ok(DensityMatrix::from_unchecked(out.pop().expect("one time")))
}

/// Monte Carlo estimates at each of `times`; sample `i` uses stream `(seed, i)`
/// at every time, so neighbouring estimates share random numbers.
pub fn mc_collisional_on_grid(
    model: &CollisionalModel,
    rho0: &DensityMatrix,
    times: &[f64],
    n_samples: usize,
    seed: u64,
    direction: Direction,
) -> Result<Vec<ComplexMatrix>> {
    check_state(model, rho0.matrix())?;
    if n_samples == 0 {
        return input("n_samples must be at least 1");
    }
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return input(format!("time must be finite and non-negative, got {t}"));
    }
    check_family_covers(model, times.iter().copied().fold(0.0, f64::max))?;
    let samples: Vec<Vec<ComplexMatrix>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            times
                .iter()
                .map(|&t| {
                    let traj = sample_renewal(&model.wait, t, &mut trajectory_stream(seed, i), direction);
                    let mut x = rho0.matrix().clone();
                    for (k, dt) in traj.intervals().enumerate() {
                        if k > 0 {
                            x = model.collision.apply(&x);
                        }
                        x = model.family.at(dt)?.apply(&x);
                    }
                    Ok(x)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut mean = vec![zeros(model.dim()); times.len()];
    for path in &samples {
        for (acc, s) in mean.iter_mut().zip(path) {
            *acc += s;
        }
    }
    Ok(mean.into_iter().map(|m| m.unscale(n_samples as f64)).collect())
}

/// Deterministic solvers usable for propagator reconstruction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeterministicSolver {
    Series,
    Volterra,
    Laplace,
}

/// Rebuild the linear propagator `Φ(t)` from the evolution of each matrix unit
/// and certify it at every sample time. Grid solvers need sample times on the grid.
pub fn cptp_certify_dynamics(
    model: &CollisionalModel,
    solver: DeterministicSolver,
    grid: &TimeGrid,
    sample_times: &[f64],
) -> Result<Vec<CptpReport>> {
    let propagators = reconstruct_propagators(model, solver, grid, sample_times)?;
    Ok(propagators.iter().map(|p| certify_cptp_with(p, DYNAMICS_CP_TOL, DYNAMICS_TP_TOL)).collect())
}

/// `Φ(t)` at each sample time, column `j·d + i` being `vec(Φ(t)|i⟩⟨j|)`.
pub fn reconstruct_propagators(
    model: &CollisionalModel,
    solver: DeterministicSolver,
    grid: &TimeGrid,
    sample_times: &[f64],
) -> Result<Vec<SuperOperator>> {
    let d = model.dim();
    let indices: Vec<usize> = match solver {
        DeterministicSolver::Laplace => (0..sample_times.len()).collect(),
        _ => sample_times
            .iter()
            .map(|&t| grid.index_of(t).ok_or_else(|| Error::Input(format!("sample time {t} is not a grid node"))))
            .collect::<Result<_>>()?,
    };
    let mut mats = vec![zeros(d * d); sample_times.len()];
    for j in 0..d {
        for i in 0..d {
            let unit = matrix_unit(d, i, j);
            let sol = match solver {
                DeterministicSolver::Series => series_solve_operator(model, &unit, grid, None)?,
                DeterministicSolver::Volterra => volterra_solve_operator(model, &unit, grid)?,
                DeterministicSolver::Laplace => {
                    laplace_solve_operator(model, &unit, sample_times, &LaplaceInversionConfig::default())?
                }
            };
            for (mat, &idx) in mats.iter_mut().zip(&indices) {
                mat.column_mut(j * d + i).copy_from_slice(sol.states[idx].as_slice());
            }
        }
    }
    mats.into_iter().map(SuperOperator::from_matrix).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmatrix::qubit::*;
    use crate::qmatrix::{c, max_abs, trace};

    fn plus_state() -> DensityMatrix {
        DensityMatrix::pure(&plus()).unwrap()
    }

    fn dephasing_channel() -> SuperOperator {
        SuperOperator::from_kraus(&[identity(2).scale(0.5f64.sqrt()), sigma_z().scale(0.5f64.sqrt())], 2).unwrap()
    }

    fn sz_model(wait: WaitingTime) -> CollisionalModel {
        CollisionalModel::new(IntercollisionFamily::identity(2), SuperOperator::conjugation(&sigma_z()), wait).unwrap()
    }

    #[test]
    fn model_validation() {
        let fam = IntercollisionFamily::identity(2);
        let wait = WaitingTime::exponential(1.0).unwrap();
        assert!(CollisionalModel::new(fam.clone(), SuperOperator::transpose_map(2), wait.clone()).is_err());
        assert!(CollisionalModel::new_unchecked(fam.clone(), SuperOperator::transpose_map(2), wait.clone()).is_ok());
        assert!(CollisionalModel::new(fam, SuperOperator::identity(3), wait).is_err());
        assert!(IntercollisionFamily::tabulated(0.1, vec![SuperOperator::identity(2), SuperOperator::transpose_map(2)]).is_err());
        assert!(IntercollisionFamily::tabulated(0.1, vec![dephasing_channel(), SuperOperator::identity(2)]).is_err());
    }

    #[test]
    fn tabulated_family_interpolates() {
        let fam = IntercollisionFamily::tabulated(0.5, vec![SuperOperator::identity(2), dephasing_channel()]).unwrap();
        let mid = fam.at(0.25).unwrap();
        let x = plus_state().into_matrix();
        assert!((mid.apply(&x)[(0, 1)].re - 0.25).abs() < 1e-15);
        assert!(fam.at(0.75).is_err());
        let slope = fam.derivative(0.2).unwrap();
        assert!(max_abs(&(slope - (dephasing_channel().into_matrix() - identity(4)).scale(2.0))) < 1e-14);
    }

    #[test]
    fn zeroth_order_is_free_evolution() {
        let ad = LindbladGenerator::dissipative(2, vec![sigma_minus()]).unwrap();
        let wait = WaitingTime::erlang(2, 1.0).unwrap();
        let model = CollisionalModel::new(IntercollisionFamily::semigroup(ad), dephasing_channel(), wait.clone()).unwrap();
        let grid = TimeGrid::new(2.0, 200).unwrap();
        let rho0 = DensityMatrix::basis(2, 1);
        let sol = series_solve(&model, &rho0, &grid, Some(0)).unwrap();
        for (i, s) in sol.states.iter().enumerate() {
            let t = grid.time(i);
            let free = model.family().at(t).unwrap().apply(rho0.matrix());
            // trapezoid-consistent survival, O(h²) from the exact one
            assert!(max_abs(&(s - free.scale(wait.survival(t).unwrap()))) < 1e-5);
        }
    }

    #[test]
    fn volterra_at_time_zero_is_initial_state() {
        let model = sz_model(WaitingTime::erlang(2, 1.0).unwrap());
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let sol = volterra_solve(&model, &plus_state(), &grid).unwrap();
        assert_eq!(&sol.states[0], plus_state().matrix());
    }

    #[test]
    fn volterra_rejects_coarse_steps() {
        let model = sz_model(WaitingTime::exponential(1000.0).unwrap());
        let grid = TimeGrid::new(1.0, 10).unwrap();
        assert!(matches!(volterra_solve(&model, &plus_state(), &grid), Err(Error::StepSize(_))));
    }

    #[test]
    fn markov_limit_examples() {
        let zero_gen = IntercollisionFamily::identity(2);
        let wait = WaitingTime::exponential(1.0).unwrap();
        let m = CollisionalModel::new(zero_gen.clone(), SuperOperator::identity(2), wait.clone()).unwrap();
        assert!(max_abs(markov_limit_generator(&m).unwrap().matrix()) == 0.0);

        let m = CollisionalModel::new(zero_gen.clone(), dephasing_channel(), wait.clone()).unwrap();
        let out = markov_limit_generator(&m).unwrap().apply(plus_state().matrix());
        assert!((out[(0, 1)] - c(-0.5, 0.0)).norm() < 1e-15);
        assert!(out[(0, 0)].norm() < 1e-15);

        let ad = LindbladGenerator::dissipative(2, vec![sigma_minus()]).unwrap();
        let m = CollisionalModel::new(
            IntercollisionFamily::semigroup(ad.clone()),
            SuperOperator::identity(2),
            WaitingTime::exponential(7.0).unwrap(),
        )
        .unwrap();
        assert_eq!(markov_limit_generator(&m).unwrap().matrix(), liouvillian(&ad).matrix());

        let erl = CollisionalModel::new(zero_gen, dephasing_channel(), WaitingTime::erlang(2, 1.0).unwrap()).unwrap();
        assert!(matches!(markov_limit_generator(&erl), Err(Error::Unsupported(_))));
    }

    #[test]
    fn laplace_rejects_bad_input() {
        let model = sz_model(WaitingTime::erlang(2, 1.0).unwrap());
        let cfg = LaplaceInversionConfig::default();
        assert!(laplace_solve(&model, &plus_state(), &[-1.0], &cfg).is_err());
        assert!(LaplaceInversionConfig::new(4).is_err());
        let sol = laplace_solve(&model, &plus_state(), &[0.0], &cfg).unwrap();
        assert_eq!(&sol.states[0], plus_state().matrix());
    }

    #[test]
    fn laplace_tabulated_route_matches_closed_form() {
        // Erlang(2,1) tabulated finely up to t = 60 where the tail is negligible
        let dt = 0.002;
        let values: Vec<f64> = (0..=30_000).map(|i| {
            let t = i as f64 * dt;
            t * (-t).exp()
        }).collect();
        let tab = WaitingTime::tabulated(dt, values).unwrap();
        let a = sz_model(tab);
        let b = sz_model(WaitingTime::erlang(2, 1.0).unwrap());
        let x0 = plus_state().into_matrix();
        let u = c(0.8, 0.4);
        let va = ResolventEvaluator::new(&a).unwrap().state(&x0, u).unwrap();
        let vb = ResolventEvaluator::new(&b).unwrap().state(&x0, u).unwrap();
        assert!((va - vb).norm() < 1e-6);
    }

    #[test]
    fn fint_residual_cancels_for_constant_solution() {
        for wait in [WaitingTime::exponential(1.3).unwrap(), WaitingTime::erlang(3, 2.0).unwrap()] {
            let model = CollisionalModel::new(IntercollisionFamily::identity(2), SuperOperator::identity(2), wait).unwrap();
            let grid = TimeGrid::new(2.0, 100).unwrap();
            let rho0 = plus_state().into_matrix();
            let sol = Solution { times: grid.times(), states: vec![rho0; grid.len()] };
            assert!(fint_residual(&model, &sol, &grid).unwrap() < 1e-10);
        }
        let model = sz_model(WaitingTime::exponential(1.0).unwrap());
        let grid = TimeGrid::new(1.0, 5).unwrap();
        let sol = volterra_solve(&model, &plus_state(), &grid).unwrap();
        assert!(fint_residual(&model, &sol, &grid).is_err());
    }

    #[test]
    fn identity_collisions_give_free_evolution_in_mc() {
        let ad = LindbladGenerator::dissipative(2, vec![sigma_minus()]).unwrap();
        let model = CollisionalModel::new(
            IntercollisionFamily::semigroup(ad),
            SuperOperator::identity(2),
            WaitingTime::erlang(2, 1.0).unwrap(),
        )
        .unwrap();
        let rho0 = DensityMatrix::basis(2, 1);
        let free = model.family().at(1.5).unwrap().apply(rho0.matrix());
        for dir in [Direction::Forward, Direction::Reverse] {
            let est = mc_collisional(&model, &rho0, 1.5, 50, 3, dir).unwrap();
            assert!(max_abs(&(est.matrix() - &free)) < 1e-12);
        }
    }

    #[test]
    fn series_order_tail() {
        let wait = WaitingTime::erlang(2, 1.0).unwrap();
        let n = auto_series_order(&wait, 4.0, 1e-8).unwrap();
        assert!(wait.count_tail(n + 1, 4.0) < 1e-8);
        assert!(wait.count_tail(n, 4.0) >= 1e-8);
    }

    #[test]
    fn solution_trace_is_preserved() {
        let model = sz_model(WaitingTime::erlang(3, 2.0).unwrap());
        let grid = TimeGrid::new(3.0, 300).unwrap();
        for sol in [
            volterra_solve(&model, &plus_state(), &grid).unwrap(),
            series_solve(&model, &plus_state(), &grid, None).unwrap(),
        ] {
            for s in &sol.states {
                assert!((trace(s) - c(1.0, 0.0)).norm() < 1e-6);
            }
        }
    }
}
