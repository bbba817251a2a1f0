//! Finite-dimensional open quantum system dynamics.
//!
//! Two families of evolutions are covered:
//!
//! * Lindblad semigroups, written both as a Dyson series and as a demixture
//!   over jump trajectories weighted by their physical probabilities
//!   ([`lindblad_traj`]).
//! * Collisional models, where a renewal process with waiting-time density
//!   `f` triggers a collision channel `E` and the system evolves under a
//!   family of maps `F(t)` in between ([`collisional`]). These are solved by
//!   four independent routes: trajectory series, Volterra marching, Laplace
//!   resolvent with numerical inversion, and Monte Carlo sampling.
//!
//! Superoperators act on column-stacked operators, so that
//! `vec(A X B) = (Bᵀ ⊗ A) vec(X)` everywhere in the crate.
//!
//! Runnable programs live in `examples/`:
//!
//! | example | shows |
//! |---|---|
//! | `lindblad_demixture` | jump-count probabilities, conditional states, reassembly, Dyson series |
//! | `lindblad_monte_carlo` | quantum-jump sampling with worker-independent averages |
//! | `renewal_sampling` | forward and reverse renewal records, tabulated waits |
//! | `collisional_solvers` | series, Volterra, Laplace and Monte Carlo on one model |
//! | `markov_limits` | exponential waits and identity collisions |
//! | `cptp_certification` | Choi-matrix checks of channels and propagators |
//! | `renewal_reduction` | fixed-output jumps as a classical renewal process |
//! | `laplace_inversion` | closed-form and quadrature resolvents |
//!
//! The `renewalq` binary runs JSON-configured simulations; see [`cli`].

pub mod channels;
pub mod cli;
pub mod collisional;
pub mod error;
pub mod grid;
pub mod lindblad_traj;
pub mod qmatrix;
pub mod renewal;

pub use error::{Error, Result};
pub use qmatrix::{ComplexMatrix, DensityMatrix, C64};
